//! Cross-entropy search over binary placement vectors.
//!
//! Each iteration draws `n_samples` placements from independent Bernoulli
//! components `v`, keeps the `⌈ρN⌉` lowest-scoring samples, and moves `v`
//! toward their column mean:
//!
//! ```text
//! v ← α · mean(elites) + (1 − α) · v
//! ```
//!
//! The run stops once every component is within `degeneracy_epsilon` of 0
//! or 1. All sampling happens on the driver thread before scoring is fanned
//! out, so the worker count never changes the result.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fcm::Placement;

/// ChaCha stream reserved for population sampling.
pub const SAMPLING_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum CeError {
    #[error("invalid CE config: {0}")]
    InvalidConfig(String),
    #[error("invalid counts: need 0 < n_fcs ({n_fcs}) <= candidates ({candidates})")]
    InvalidCounts { candidates: usize, n_fcs: usize },
    #[error("failed to build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
    #[error("failed to write history: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeConfig {
    pub n_samples: usize,
    pub rarity: f64,
    pub smoothing: f64,
    pub max_iterations: usize,
    pub degeneracy_epsilon: f64,
    pub seed: u64,
    /// Scoring threads; `None` uses rayon's global pool.
    pub workers: Option<usize>,
}

impl Default for CeConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            rarity: 0.05,
            smoothing: 0.7,
            max_iterations: 200,
            degeneracy_epsilon: 0.01,
            seed: 0,
            workers: None,
        }
    }
}

impl CeConfig {
    pub fn validate(&self) -> Result<(), CeError> {
        let bad = |m: String| Err(CeError::InvalidConfig(m));
        if self.n_samples < 10 {
            return bad(format!("n_samples must be >= 10, got {}", self.n_samples));
        }
        if !(self.rarity > 0.0 && self.rarity < 1.0) {
            return bad(format!("rarity must lie in (0, 1), got {}", self.rarity));
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return bad(format!(
                "smoothing must lie in [0, 1], got {}",
                self.smoothing
            ));
        }
        if !(self.degeneracy_epsilon > 0.0 && self.degeneracy_epsilon < 0.5) {
            return bad(format!(
                "degeneracy_epsilon must lie in (0, 0.5), got {}",
                self.degeneracy_epsilon
            ));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be > 0".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be > 0".into());
        }
        Ok(())
    }

    /// ⌈ρN⌉, at least one.
    pub fn elite_count(&self) -> usize {
        elite_count(self.n_samples, self.rarity)
    }
}

fn elite_count(n: usize, rarity: f64) -> usize {
    // ρN is often an integer that floating point lands a hair above
    ((rarity * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    /// Lowest score drawn this iteration.
    pub best_score: f64,
    /// Lowest score drawn so far.
    pub best_ever_score: f64,
    pub mean_elite_score: f64,
    /// Probability vector after this iteration's update.
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeState {
    pub v: Vec<f64>,
    pub t: usize,
    pub history: Vec<IterationRecord>,
}

impl CeState {
    /// max_j min(v_j, 1 − v_j)
    pub fn distance_from_degenerate(&self) -> f64 {
        self.v.iter().map(|&p| p.min(1.0 - p)).fold(0.0, f64::max)
    }

    pub fn is_degenerate(&self, epsilon: f64) -> bool {
        self.distance_from_degenerate() < epsilon
    }

    pub fn rounded(&self) -> Placement {
        Placement::new(self.v.iter().map(|&p| p >= 0.5).collect())
    }
}

/// Uniform start at `n_fcs / M`.
pub fn init_state(candidates: usize, n_fcs: usize) -> Result<CeState, CeError> {
    if n_fcs == 0 || n_fcs > candidates {
        return Err(CeError::InvalidCounts { candidates, n_fcs });
    }
    Ok(CeState {
        v: vec![n_fcs as f64 / candidates as f64; candidates],
        t: 0,
        history: Vec::new(),
    })
}

/// `n` i.i.d. draws, component `j` ~ Bernoulli(v_j). Sample-major order.
pub fn sample_population<R: Rng>(v: &[f64], n: usize, rng: &mut R) -> Vec<Placement> {
    (0..n)
        .map(|_| Placement::new(v.iter().map(|&p| rng.gen::<f64>() < p).collect()))
        .collect()
}

/// Indices of the `⌈ρN⌉` lowest scores; stable on ties.
pub fn select_elites(scores: &[f64], rarity: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order.truncate(elite_count(scores.len(), rarity));
    order
}

/// α · mean(elites) + (1 − α) · v, clamped to [0, 1].
///
/// Panics on an empty elite set.
pub fn update_parameters(v: &[f64], elites: &[&Placement], smoothing: f64) -> Vec<f64> {
    assert!(!elites.is_empty(), "update needs at least one elite");
    let count = elites.len() as f64;
    v.iter()
        .enumerate()
        .map(|(j, &old)| {
            let hits = elites.iter().filter(|x| x.is_open(j)).count() as f64;
            (smoothing * (hits / count) + (1.0 - smoothing) * old).clamp(0.0, 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalSource {
    /// The rounded probability vector.
    Degenerate,
    /// Best sample seen during the run.
    BestSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeOutcome {
    pub placement: Placement,
    pub score: f64,
    pub source: FinalSource,
    pub converged: bool,
    pub iterations: usize,
    pub final_v: Vec<f64>,
    pub history: Vec<IterationRecord>,
}

impl CeOutcome {
    /// `iter,best_S,mean_elite_S,v_1..v_M`; `best_S` is the best score seen so far.
    pub fn write_history_csv<W: Write>(&self, out: W) -> Result<(), CeError> {
        write_history_csv(&self.history, self.final_v.len(), out)
    }
}

pub fn write_history_csv<W: Write>(
    history: &[IterationRecord],
    candidates: usize,
    mut out: W,
) -> Result<(), CeError> {
    write!(out, "iter,best_S,mean_elite_S")?;
    for j in 1..=candidates {
        write!(out, ",v_{j}")?;
    }
    writeln!(out)?;
    for record in history {
        write!(
            out,
            "{},{},{}",
            record.iteration, record.best_ever_score, record.mean_elite_score
        )?;
        for p in &record.v {
            write!(out, ",{p}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Called after each iteration with the sampled population and its scores.
pub type IterationObserver<'o> = dyn FnMut(&IterationRecord, &[Placement], &[f64]) + 'o;

pub struct CrossEntropy {
    config: CeConfig,
}

impl CrossEntropy {
    pub fn new(config: CeConfig) -> Result<Self, CeError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &CeConfig {
        &self.config
    }

    pub fn run<F>(&self, candidates: usize, n_fcs: usize, scorer: F) -> Result<CeOutcome, CeError>
    where
        F: Fn(&Placement) -> f64 + Sync,
    {
        self.run_observed(candidates, n_fcs, scorer, None)
    }

    pub fn run_observed<F>(
        &self,
        candidates: usize,
        n_fcs: usize,
        scorer: F,
        mut observer: Option<&mut IterationObserver<'_>>,
    ) -> Result<CeOutcome, CeError>
    where
        F: Fn(&Placement) -> f64 + Sync,
    {
        let config = &self.config;
        let mut state = init_state(candidates, n_fcs)?;
        let pool = match config.workers {
            Some(n) => Some(rayon::ThreadPoolBuilder::new().num_threads(n).build()?),
            None => None,
        };
        let evaluate = |population: &[Placement]| -> Vec<f64> {
            let score_all = || population.par_iter().map(&scorer).collect();
            match &pool {
                Some(pool) => pool.install(score_all),
                None => score_all(),
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(SAMPLING_STREAM);
        let mut best: Option<(f64, Placement)> = None;
        let mut converged = false;

        while state.t < config.max_iterations {
            let population = sample_population(&state.v, config.n_samples, &mut rng);
            let scores = evaluate(&population);
            let elites = select_elites(&scores, config.rarity);

            let leader = elites[0];
            if best.as_ref().is_none_or(|(b, _)| scores[leader] < *b) {
                best = Some((scores[leader], population[leader].clone()));
            }
            let elite_refs: Vec<&Placement> = elites.iter().map(|&i| &population[i]).collect();
            state.v = update_parameters(&state.v, &elite_refs, config.smoothing);
            state.t += 1;
            let record = IterationRecord {
                iteration: state.t,
                best_score: scores[leader],
                best_ever_score: best.as_ref().map(|(s, _)| *s).unwrap(),
                mean_elite_score: elites.iter().map(|&i| scores[i]).sum::<f64>()
                    / elites.len() as f64,
                v: state.v.clone(),
            };
            if let Some(observe) = observer.as_mut() {
                observe(&record, &population, &scores);
            }
            state.history.push(record);
            if state.is_degenerate(config.degeneracy_epsilon) {
                converged = true;
                break;
            }
        }

        let rounded = state.rounded();
        let rounded_score = scorer(&rounded);
        let (best_score, best_sample) = best.expect("at least one iteration");
        let (placement, score, source) = if rounded_score <= best_score {
            (rounded, rounded_score, FinalSource::Degenerate)
        } else {
            (best_sample, best_score, FinalSource::BestSample)
        };
        Ok(CeOutcome {
            placement,
            score,
            source,
            converged,
            iterations: state.t,
            final_v: state.v,
            history: state.history,
        })
    }
}
