//! Runs CE over a range of sampling seeds on one fixed fleet and compares
//! each result with the exhaustive optimum.
//!
//! ```text
//! cargo run --release --example ce_seed_sweep -- benchmarks/run_fcs5.json 20
//! ```

use std::path::PathBuf;
use std::time::Instant;

use fcs_planner::cli::{prepare, Overrides};
use fcs_planner::{CrossEntropy, Objective};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config = PathBuf::from(
        args.next()
            .ok_or("usage: ce_seed_sweep <config> [seeds] [n_fcs]")?,
    );
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let n_fcs: Option<usize> = args.next().map(|s| s.parse()).transpose()?;

    let mut prepared = prepare(&config, &Overrides::default())?;
    if let Some(n) = n_fcs {
        prepared.objective.n_fcs = n;
    }
    let objective = Objective::new(&prepared.net, &prepared.fleet, &prepared.objective)?;

    let started = Instant::now();
    let best = objective.brute_force_optimum(prepared.config.max_enumeration)?;
    println!(
        "enumeration: S = {:.6} stations = {:?} ({} evaluations, {:.2?})",
        best.score,
        best.placement.nodes(&prepared.net),
        best.evaluated,
        started.elapsed()
    );

    let mut hits = 0;
    for seed in 0..seeds {
        let mut config = prepared.config.ce.clone();
        config.seed = seed;
        let started = Instant::now();
        let outcome = CrossEntropy::new(config)?.run(
            prepared.net.candidates().len(),
            prepared.objective.n_fcs,
            |x| objective.score(x),
        )?;
        let hit = outcome.score == best.score;
        hits += hit as u32;
        println!(
            "seed {seed:>3}: S = {:.6} gap = {:.3}% iterations = {:>3} converged = {} {} ({:.2?})",
            outcome.score,
            100.0 * (outcome.score - best.score) / best.score.abs(),
            outcome.iterations,
            outcome.converged,
            if hit { "hit" } else { "MISS" },
            started.elapsed()
        );
    }
    println!("{hits}/{seeds} seeds matched the optimum");
    Ok(())
}
