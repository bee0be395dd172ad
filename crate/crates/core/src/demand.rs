//! Monte-Carlo PEV fleet: departure times, OD pairs and routed trip chains.
//!
//! Each vehicle draws from its own ChaCha8 stream (`stream = vehicle id`) so
//! the fleet content does not depend on generation order.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{join_path, CoupledNetwork, NetworkError, NodeId, TripChain};

pub const MINUTES_PER_DAY: u32 = 1440;

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("invalid fleet spec: {0}")]
    InvalidSpec(String),
    #[error("od_policy.pairs[{index}]: unknown node {node}")]
    UnknownNode { index: usize, node: NodeId },
    #[error("od_policy.pairs[{index}]: origin equals destination ({node})")]
    DegeneratePair { index: usize, node: NodeId },
    #[error("network needs at least two nodes to draw OD pairs")]
    TooFewNodes,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("failed to write fleet csv: {0}")]
    Io(#[from] std::io::Error),
}

/// How origin-destination pairs are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OdPolicy {
    /// Uniform over ordered pairs with origin != destination.
    #[default]
    Uniform,
    /// Explicit `[origin, destination, weight]` table.
    Weighted { pairs: Vec<(NodeId, NodeId, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSpec {
    pub n_vehicles: usize,
    /// `[start, end)` in hours of day.
    pub departure_window: [f64; 2],
    pub od_policy: OdPolicy,
    pub seed: u64,
    pub charge_energy_kwh: f64,
    pub charge_power_kw: f64,
    /// Used to timestamp arrival at the charging node.
    pub average_speed_mph: f64,
}

impl Default for FleetSpec {
    fn default() -> Self {
        Self {
            n_vehicles: 500,
            departure_window: [6.0, 22.0],
            od_policy: OdPolicy::Uniform,
            seed: 42,
            charge_energy_kwh: 30.0,
            charge_power_kw: 150.0,
            average_speed_mph: 30.0,
        }
    }
}

impl FleetSpec {
    pub fn validate(&self) -> Result<(), DemandError> {
        let bad = |msg: String| Err(DemandError::InvalidSpec(msg));
        if self.n_vehicles == 0 {
            return bad("n_vehicles must be > 0".into());
        }
        let [start, end] = self.departure_window;
        if !(start.is_finite() && end.is_finite() && 0.0 <= start && start < end && end <= 24.0) {
            return bad(format!(
                "departure_window [{start}, {end}) must satisfy 0 <= start < end <= 24"
            ));
        }
        let minutes = self.departure_minutes();
        if minutes.start >= minutes.end {
            return bad("departure_window is shorter than one minute".into());
        }
        for (name, value) in [
            ("charge_energy_kwh", self.charge_energy_kwh),
            ("charge_power_kw", self.charge_power_kw),
            ("average_speed_mph", self.average_speed_mph),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return bad(format!("{name} must be finite and > 0, got {value}"));
            }
        }
        Ok(())
    }

    fn departure_minutes(&self) -> std::ops::Range<u32> {
        let [start, end] = self.departure_window;
        let minute = |hours: f64| (hours * 60.0 - 1e-9).ceil().max(0.0) as u32;
        minute(start)..minute(end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Vehicle {
    pub id: u32,
    pub depart_min: u32,
    /// Index into [`Fleet::chains`].
    pub chain: usize,
}

/// Generated fleet. Chains are the distinct OD pairs in `(origin, destination)`
/// order; `flows[q]` is the number of vehicles on chain `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    spec: FleetSpec,
    distance_unit_miles: f64,
    vehicles: Vec<Vehicle>,
    chains: Vec<TripChain>,
    flows: Vec<u32>,
    members: Vec<Vec<u32>>,
}

impl Fleet {
    pub fn spec(&self) -> &FleetSpec {
        &self.spec
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn vehicle(&self, id: u32) -> &Vehicle {
        &self.vehicles[id as usize]
    }

    pub fn chains(&self) -> &[TripChain] {
        &self.chains
    }

    /// f_q aligned with [`Fleet::chains`].
    pub fn flows(&self) -> &[u32] {
        &self.flows
    }

    /// Vehicle ids riding chain `q`.
    pub fn members(&self, q: usize) -> &[u32] {
        &self.members[q]
    }

    pub fn total_flow(&self) -> u64 {
        self.flows.iter().map(|&f| f as u64).sum()
    }

    /// f_q keyed by chain signature.
    pub fn flows_by_signature(&self) -> BTreeMap<String, u32> {
        self.chains
            .iter()
            .zip(&self.flows)
            .map(|(c, &f)| (c.signature(), f))
            .collect()
    }

    /// Minute of day (unwrapped) at which `vehicle` reaches the node at
    /// `position` along its path.
    pub fn arrival_minute(&self, vehicle: &Vehicle, position: usize) -> f64 {
        let units = self.chains[vehicle.chain].cumulative[position];
        let miles = units * self.distance_unit_miles;
        vehicle.depart_min as f64 + miles / self.spec.average_speed_mph * 60.0
    }

    /// `vehicle_id,depart_min,origin,dest,path,f_q-group`
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DemandError> {
        writeln!(out, "vehicle_id,depart_min,origin,dest,path,f_q-group")?;
        for v in &self.vehicles {
            let chain = &self.chains[v.chain];
            writeln!(
                out,
                "{},{},{},{},{},{}",
                v.id,
                v.depart_min,
                chain.origin,
                chain.destination,
                join_path(&chain.path),
                v.chain
            )?;
        }
        Ok(())
    }
}

/// Draws the fleet. A pure function of `(net, spec)`.
pub fn generate_fleet(net: &CoupledNetwork, spec: &FleetSpec) -> Result<Fleet, DemandError> {
    spec.validate()?;
    let graph = net.transport();
    let node_count = graph.node_count();
    let sampler = OdSampler::new(&spec.od_policy, net)?;
    if matches!(sampler, OdSampler::Uniform) && node_count < 2 {
        return Err(DemandError::TooFewNodes);
    }

    let minutes = spec.departure_minutes();
    let mut draws = Vec::with_capacity(spec.n_vehicles);
    for id in 0..spec.n_vehicles as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(id);
        let (origin, destination) = sampler.draw(&mut rng, node_count);
        let depart_min = rng.gen_range(minutes.clone());
        draws.push((origin, destination, depart_min));
    }

    let mut index_of: BTreeMap<(NodeId, NodeId), usize> = BTreeMap::new();
    for &(o, d, _) in &draws {
        index_of.entry((o, d)).or_insert(0);
    }
    let mut chains = Vec::with_capacity(index_of.len());
    for (q, (&(o, d), slot)) in index_of.iter_mut().enumerate() {
        *slot = q;
        chains.push(net.shortest_path(o, d)?);
    }

    let mut flows = vec![0u32; chains.len()];
    let mut members = vec![Vec::new(); chains.len()];
    let vehicles = draws
        .into_iter()
        .enumerate()
        .map(|(id, (o, d, depart_min))| {
            let chain = index_of[&(o, d)];
            flows[chain] += 1;
            members[chain].push(id as u32);
            Vehicle {
                id: id as u32,
                depart_min,
                chain,
            }
        })
        .collect();

    Ok(Fleet {
        spec: spec.clone(),
        distance_unit_miles: graph.distance_unit_miles(),
        vehicles,
        chains,
        flows,
        members,
    })
}

enum OdSampler {
    Uniform,
    Weighted {
        pairs: Vec<(NodeId, NodeId)>,
        cumulative: Vec<f64>,
    },
}

impl OdSampler {
    fn new(policy: &OdPolicy, net: &CoupledNetwork) -> Result<Self, DemandError> {
        match policy {
            OdPolicy::Uniform => Ok(Self::Uniform),
            OdPolicy::Weighted { pairs } => {
                if pairs.is_empty() {
                    return Err(DemandError::InvalidSpec("od_policy.pairs is empty".into()));
                }
                let mut total = 0.0;
                let mut cumulative = Vec::with_capacity(pairs.len());
                for (index, &(o, d, w)) in pairs.iter().enumerate() {
                    for node in [o, d] {
                        if !net.transport().contains(node) {
                            return Err(DemandError::UnknownNode { index, node });
                        }
                    }
                    if o == d {
                        return Err(DemandError::DegeneratePair { index, node: o });
                    }
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(DemandError::InvalidSpec(format!(
                            "od_policy.pairs[{index}]: weight must be finite and >= 0, got {w}"
                        )));
                    }
                    total += w;
                    cumulative.push(total);
                }
                if total <= 0.0 {
                    return Err(DemandError::InvalidSpec(
                        "od_policy weights sum to zero".into(),
                    ));
                }
                Ok(Self::Weighted {
                    pairs: pairs.iter().map(|&(o, d, _)| (o, d)).collect(),
                    cumulative,
                })
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, node_count: usize) -> (NodeId, NodeId) {
        match self {
            Self::Uniform => {
                let o = rng.gen_range(0..node_count);
                let mut d = rng.gen_range(0..node_count - 1);
                if d >= o {
                    d += 1;
                }
                (o as NodeId + 1, d as NodeId + 1)
            }
            Self::Weighted { pairs, cumulative } => {
                let total = *cumulative.last().unwrap();
                let u = rng.gen::<f64>() * total;
                let i = cumulative.partition_point(|&c| c <= u).min(pairs.len() - 1);
                pairs[i]
            }
        }
    }
}

/// Number of intervals a session of `energy_kwh` at `power_kw` occupies.
pub fn session_intervals(energy_kwh: f64, power_kw: f64, interval_minutes: u32) -> usize {
    let exact = energy_kwh / power_kw * 60.0 / interval_minutes as f64;
    // guard against 0.1 * 3 style round-up
    (exact - 1e-9).ceil().max(1.0) as usize
}

/// Interval index (within one day) containing `minute`, wrapping past midnight.
pub fn interval_of(minute: f64, interval_minutes: u32) -> usize {
    let count = (MINUTES_PER_DAY / interval_minutes) as usize;
    ((minute / interval_minutes as f64).floor() as i64).rem_euclid(count as i64) as usize
}

/// Rectangular charging pulse over one day, in kW per interval.
///
/// Panics if `interval_minutes` does not divide 1440.
pub fn session_profile(
    arrival_minute: f64,
    energy_kwh: f64,
    power_kw: f64,
    interval_minutes: u32,
) -> Vec<f64> {
    assert!(
        interval_minutes > 0 && MINUTES_PER_DAY.is_multiple_of(interval_minutes),
        "interval {interval_minutes} min does not divide a day"
    );
    let count = (MINUTES_PER_DAY / interval_minutes) as usize;
    let mut kw = vec![0.0; count];
    let start = interval_of(arrival_minute, interval_minutes);
    for k in 0..session_intervals(energy_kwh, power_kw, interval_minutes).min(count) {
        kw[(start + k) % count] += power_kw;
    }
    kw
}
