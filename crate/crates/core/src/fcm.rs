//! Flow-capturing model.
//!
//! A trip chain is captured when at least one open station lies on its path.
//! Captured vehicles charge at the first open station they reach; that node
//! only timestamps the charging load and has no effect on `y_q`.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::demand::Fleet;
use crate::network::{CoupledNetwork, NodeId, TripChain};

#[derive(Debug, Error)]
pub enum FcmError {
    #[error("placement has {found} entries, candidate set has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("node {0} is not a candidate location")]
    NotCandidate(NodeId),
    #[error("failed to write capture csv: {0}")]
    Io(#[from] std::io::Error),
}

/// Binary station vector `x` over the candidate set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Placement(Vec<bool>);

impl Placement {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![true; len])
    }

    /// Opens exactly the listed candidate nodes.
    pub fn from_nodes(net: &CoupledNetwork, nodes: &[NodeId]) -> Result<Self, FcmError> {
        let mut bits = vec![false; net.candidates().len()];
        for &node in nodes {
            let k = net
                .candidate_index(node)
                .ok_or(FcmError::NotCandidate(node))?;
            bits[k] = true;
        }
        Ok(Self(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn is_open(&self, k: usize) -> bool {
        self.0[k]
    }

    pub fn open_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Station node ids in candidate order.
    pub fn nodes(&self, net: &CoupledNetwork) -> Vec<NodeId> {
        net.candidates()
            .iter()
            .zip(&self.0)
            .filter(|(_, &open)| open)
            .map(|(&n, _)| n)
            .collect()
    }

    pub fn as_u8(&self) -> Vec<u8> {
        self.0.iter().map(|&b| b as u8).collect()
    }

    fn check_len(&self, expected: usize) -> Result<(), FcmError> {
        if self.len() != expected {
            return Err(FcmError::LengthMismatch {
                expected,
                found: self.len(),
            });
        }
        Ok(())
    }
}

impl From<Vec<bool>> for Placement {
    fn from(bits: Vec<bool>) -> Self {
        Self(bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapturedVehicle {
    pub vehicle_id: u32,
    pub charging_node: NodeId,
    /// Unwrapped minute of day at which the vehicle reaches `charging_node`.
    pub arrival_minute: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptureResult {
    /// y_q per chain.
    pub y: Vec<bool>,
    /// First open station along each chain, if captured.
    pub charging_node: Vec<Option<NodeId>>,
    /// Σ f_q y_q.
    pub captured_volume: u64,
    /// Sorted by vehicle id.
    pub captured_vehicles: Vec<CapturedVehicle>,
}

impl CaptureResult {
    /// `chain_signature,f_q,y_q,charging_node`
    pub fn write_csv<W: Write>(&self, fleet: &Fleet, mut out: W) -> Result<(), FcmError> {
        writeln!(out, "chain_signature,f_q,y_q,charging_node")?;
        for (q, chain) in fleet.chains().iter().enumerate() {
            let node = self.charging_node[q]
                .map(|n| n.to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{}",
                chain.signature(),
                fleet.flows()[q],
                self.y[q] as u8,
                node
            )?;
        }
        Ok(())
    }
}

/// Extension point for range-feasibility refinements of the capture rule.
///
/// Given a chain and the path positions of its open stations (in travel
/// order), decide whether the chain counts as captured. The default rule
/// (no hook) captures whenever `open_positions` is non-empty.
pub trait CaptureHook: Sync {
    fn captures(
        &self,
        chain: &TripChain,
        open_positions: &[usize],
        distance_unit_miles: f64,
    ) -> bool;
}

/// Direct per-chain scan of every path node against the placement.
pub fn evaluate_capture(
    net: &CoupledNetwork,
    fleet: &Fleet,
    placement: &Placement,
) -> Result<CaptureResult, FcmError> {
    evaluate_capture_with(net, fleet, placement, None)
}

pub fn evaluate_capture_with(
    net: &CoupledNetwork,
    fleet: &Fleet,
    placement: &Placement,
    hook: Option<&dyn CaptureHook>,
) -> Result<CaptureResult, FcmError> {
    placement.check_len(net.candidates().len())?;
    let unit = net.transport().distance_unit_miles();
    let first_open = fleet.chains().iter().map(|chain| {
        let open: Vec<usize> = chain
            .path
            .iter()
            .enumerate()
            .filter(|(_, &node)| {
                net.candidate_index(node)
                    .is_some_and(|k| placement.is_open(k))
            })
            .map(|(pos, _)| pos)
            .collect();
        let captured = match hook {
            Some(h) => !open.is_empty() && h.captures(chain, &open, unit),
            None => !open.is_empty(),
        };
        captured.then(|| open[0])
    });
    Ok(assemble(fleet, first_open))
}

fn assemble(fleet: &Fleet, first_open: impl Iterator<Item = Option<usize>>) -> CaptureResult {
    let mut y = Vec::with_capacity(fleet.chains().len());
    let mut charging_node = Vec::with_capacity(fleet.chains().len());
    let mut captured_volume = 0;
    let mut captured_vehicles = Vec::new();
    for (q, position) in first_open.enumerate() {
        y.push(position.is_some());
        charging_node.push(position.map(|p| fleet.chains()[q].path[p]));
        if let Some(p) = position {
            captured_volume += fleet.flows()[q] as u64;
            let node = fleet.chains()[q].path[p];
            for &id in fleet.members(q) {
                captured_vehicles.push(CapturedVehicle {
                    vehicle_id: id,
                    charging_node: node,
                    arrival_minute: fleet.arrival_minute(fleet.vehicle(id), p),
                });
            }
        }
    }
    captured_vehicles.sort_by_key(|v| v.vehicle_id);
    CaptureResult {
        y,
        charging_node,
        captured_volume,
        captured_vehicles,
    }
}

/// Sparse chain × candidate incidence: row `q` lists `(k, path position)` for
/// every candidate on chain `q`, in travel order.
#[derive(Debug, Clone)]
pub struct CaptureMatrix {
    candidate_count: usize,
    rows: Vec<Vec<(usize, usize)>>,
}

impl CaptureMatrix {
    pub fn new(net: &CoupledNetwork, fleet: &Fleet) -> Self {
        let rows = fleet
            .chains()
            .iter()
            .map(|chain| {
                chain
                    .path
                    .iter()
                    .enumerate()
                    .filter_map(|(pos, &node)| net.candidate_index(node).map(|k| (k, pos)))
                    .collect()
            })
            .collect();
        Self {
            candidate_count: net.candidates().len(),
            rows,
        }
    }

    pub fn chain_count(&self) -> usize {
        self.rows.len()
    }

    pub fn candidate_count(&self) -> usize {
        self.candidate_count
    }

    pub fn row(&self, q: usize) -> &[(usize, usize)] {
        &self.rows[q]
    }

    pub fn get(&self, q: usize, k: usize) -> bool {
        self.rows[q].iter().any(|&(j, _)| j == k)
    }

    /// Dense `A[q][k]`.
    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![false; self.candidate_count];
                for &(k, _) in row {
                    dense[k] = true;
                }
                dense
            })
            .collect()
    }

    fn first_open(&self, q: usize, placement: &Placement) -> Option<usize> {
        self.rows[q]
            .iter()
            .find(|&&(k, _)| placement.is_open(k))
            .map(|&(_, pos)| pos)
    }

    pub fn evaluate(
        &self,
        fleet: &Fleet,
        placement: &Placement,
    ) -> Result<CaptureResult, FcmError> {
        placement.check_len(self.candidate_count)?;
        Ok(assemble(
            fleet,
            (0..self.rows.len()).map(|q| self.first_open(q, placement)),
        ))
    }

    /// Σ f_q y_q without building the full result.
    pub fn captured_volume(&self, fleet: &Fleet, placement: &Placement) -> Result<u64, FcmError> {
        placement.check_len(self.candidate_count)?;
        Ok((0..self.rows.len())
            .filter(|&q| self.first_open(q, placement).is_some())
            .map(|q| fleet.flows()[q] as u64)
            .sum())
    }
}

pub fn capture_matrix(net: &CoupledNetwork, fleet: &Fleet) -> CaptureMatrix {
    CaptureMatrix::new(net, fleet)
}
