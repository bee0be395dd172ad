//! Shared fixtures and independent oracles for the integration tests.
//!
//! The oracles here deliberately avoid the library's own routing, capture
//! and thermal code paths so the tests compare two separate derivations.

#![allow(dead_code)]

use std::path::PathBuf;

use fcs_planner::cli::{prepare, Overrides, Prepared};
use fcs_planner::{CoupledNetwork, Fleet, NodeId, Placement};

pub fn benchmarks_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

pub fn benchmark_config(n_fcs: usize) -> PathBuf {
    benchmarks_dir().join(format!("run_fcs{n_fcs}.json"))
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Benchmark config with the placement budget set to `n_fcs`.
pub fn prepared_benchmark(n_fcs: usize) -> Prepared {
    let mut prepared =
        prepare(&benchmark_config(5), &Overrides::default()).expect("benchmark config loads");
    prepared.objective.n_fcs = n_fcs;
    prepared
}

/// All-pairs shortest distances by Floyd-Warshall, indexed by node id.
#[allow(clippy::needless_range_loop)]
pub fn floyd_warshall(net: &CoupledNetwork) -> Vec<Vec<f64>> {
    let graph = net.transport();
    let n = graph.node_count() + 1;
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for i in 1..n {
        d[i][i] = 0.0;
    }
    for arc in graph.arcs() {
        let (u, v) = (arc.u as usize, arc.v as usize);
        d[u][v] = d[u][v].min(arc.distance);
        d[v][u] = d[v][u].min(arc.distance);
    }
    for k in 1..n {
        for i in 1..n {
            for j in 1..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Plain membership scan: a chain is captured iff any node on its path hosts
/// an open station. Returns (y, first open node on the path, Σ f_q y_q).
pub fn membership_scan(
    net: &CoupledNetwork,
    fleet: &Fleet,
    x: &Placement,
) -> (Vec<bool>, Vec<Option<NodeId>>, u64) {
    let open: Vec<NodeId> = net
        .candidates()
        .iter()
        .zip(x.bits())
        .filter(|(_, &b)| b)
        .map(|(&n, _)| n)
        .collect();
    let mut y = Vec::new();
    let mut first = Vec::new();
    let mut volume = 0u64;
    for (chain, &f) in fleet.chains().iter().zip(fleet.flows()) {
        let hit = chain.path.iter().copied().find(|n| open.contains(n));
        y.push(hit.is_some());
        first.push(hit);
        if hit.is_some() {
            volume += f as u64;
        }
    }
    (y, first, volume)
}

/// Thermal constants used by the oracle, mirroring the default transformer.
pub struct ThermalOracle {
    pub ambient: f64,
    pub top_oil_rated: f64,
    pub hotspot_rated: f64,
    pub n: f64,
    pub m: f64,
    pub tau_min: f64,
    pub r: f64,
    pub life_hours: f64,
}

impl Default for ThermalOracle {
    fn default() -> Self {
        Self {
            ambient: 30.0,
            top_oil_rated: 50.0,
            hotspot_rated: 35.0,
            n: 0.9,
            m: 0.8,
            tau_min: 180.0,
            r: 25.0 / 5.0,
            life_hours: 180_000.0,
        }
    }
}

impl ThermalOracle {
    pub fn hotspots(&self, s: &[f64], interval_min: f64) -> Vec<f64> {
        let ultimate =
            |s: f64| self.top_oil_rated * ((1.0 + self.r * s * s) / (1.0 + self.r)).powf(self.n);
        let mut oil = ultimate(s[0]);
        let alpha = (-interval_min / self.tau_min).exp();
        s.iter()
            .map(|&si| {
                let u = ultimate(si);
                oil = u + (oil - u) * alpha;
                self.ambient + oil + self.hotspot_rated * si.powf(2.0 * self.m)
            })
            .collect()
    }

    pub fn arrhenius(theta: f64) -> f64 {
        (15000.0 / 383.0 - 15000.0 / (theta + 273.0)).exp()
    }

    pub fn loss_of_life(&self, s: &[f64], interval_min: f64) -> f64 {
        let h = interval_min / 60.0;
        self.hotspots(s, interval_min)
            .iter()
            .map(|&t| Self::arrhenius(t) * h)
            .sum::<f64>()
            / self.life_hours
    }
}

/// Base kW plus one fixed-power block per captured vehicle, starting in the
/// interval containing its arrival at the charging node.
pub fn loading_oracle(prepared: &Prepared, x: &Placement) -> Vec<f64> {
    let (net, fleet) = (&prepared.net, &prepared.fleet);
    let base = prepared.objective.base_load.kw();
    let interval = prepared.objective.base_load.interval_minutes() as f64;
    let count = base.len();
    let spec = fleet.spec();
    let blocks = ((spec.charge_energy_kwh / spec.charge_power_kw * 60.0 / interval) - 1e-9)
        .ceil()
        .max(1.0) as usize;
    let (_, first, _) = membership_scan(net, fleet, x);
    let mut kw = base.to_vec();
    for v in fleet.vehicles() {
        let Some(node) = first[v.chain] else { continue };
        let chain = &fleet.chains()[v.chain];
        let pos = chain.path.iter().position(|&n| n == node).unwrap();
        let miles = chain.cumulative[pos] * net.transport().distance_unit_miles();
        let arrival = v.depart_min as f64 + miles / spec.average_speed_mph * 60.0;
        let start = (arrival / interval).floor() as usize;
        for k in 0..blocks {
            kw[(start + k) % count] += spec.charge_power_kw;
        }
    }
    let rated = prepared.config.transformer.rated_kva;
    kw.into_iter().map(|k| k / rated).collect()
}

/// Random placement with each entry open with probability `p`.
pub fn random_placement<R: rand::Rng>(len: usize, p: f64, rng: &mut R) -> Placement {
    Placement::new((0..len).map(|_| rng.gen_bool(p)).collect())
}
