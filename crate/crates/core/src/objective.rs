//! Placement objective: transformer TCO minus monetised captured flow, plus a
//! penalty for opening a number of stations other than `n_fcs`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::Fleet;
use crate::fcm::{CaptureMatrix, CaptureResult, FcmError, Placement};
use crate::gadm::{self, BaseLoad, GadmError, LoadingProfile, TcoResult, TransformerSpec};
use crate::network::CoupledNetwork;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("invalid objective spec: {0}")]
    InvalidSpec(String),
    #[error("enumeration needs {required} evaluations, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },
    #[error(transparent)]
    Capture(#[from] FcmError),
    #[error(transparent)]
    Gadm(#[from] GadmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyForm {
    /// c_p · |Σx − N|
    #[default]
    Abs,
    /// c_p · (Σx − N)²
    Quadratic,
}

impl PenaltyForm {
    pub fn apply(self, c_p: f64, open: usize, n_fcs: usize) -> f64 {
        let deviation = (open as f64 - n_fcs as f64).abs();
        match self {
            PenaltyForm::Abs => c_p * deviation,
            PenaltyForm::Quadratic => c_p * deviation * deviation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    /// Currency per captured vehicle.
    pub c: f64,
    pub c_p: f64,
    pub n_fcs: usize,
    pub penalty: PenaltyForm,
    pub transformer: TransformerSpec,
    pub base_load: BaseLoad,
    pub span_hours: f64,
}

impl ObjectiveSpec {
    pub fn new(n_fcs: usize, transformer: TransformerSpec, base_load: BaseLoad) -> Self {
        Self {
            c: 50.0,
            c_p: 100.0,
            n_fcs,
            penalty: PenaltyForm::Abs,
            transformer,
            span_hours: base_load.span_hours(),
            base_load,
        }
    }

    pub fn validate(&self, candidate_count: usize) -> Result<(), ObjectiveError> {
        let bad = |m: String| Err(ObjectiveError::InvalidSpec(m));
        if !(self.c.is_finite() && self.c >= 0.0) {
            return bad(format!("c must be finite and >= 0, got {}", self.c));
        }
        if !(self.c_p.is_finite() && self.c_p > 0.0) {
            return bad(format!("c_p must be finite and > 0, got {}", self.c_p));
        }
        if self.n_fcs == 0 || self.n_fcs > candidate_count {
            return bad(format!(
                "n_fcs must satisfy 0 < n_fcs <= {candidate_count} candidates, got {}",
                self.n_fcs
            ));
        }
        if (self.base_load.span_hours() - self.span_hours).abs() > 1e-9 {
            return bad(format!(
                "span_hours {} does not match the {} h base load",
                self.span_hours,
                self.base_load.span_hours()
            ));
        }
        self.transformer.validate()?;
        Ok(())
    }
}

/// Full breakdown of one objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    /// S = tco − c·captured_volume + penalty
    pub score: f64,
    pub tco: TcoResult,
    pub captured_volume: u64,
    pub open_stations: usize,
    pub penalty: f64,
    #[serde(skip)]
    pub capture: CaptureResult,
    #[serde(skip)]
    pub profile: LoadingProfile,
}

/// Immutable evaluation context; safe to share across worker threads.
#[derive(Debug)]
pub struct Objective<'a> {
    net: &'a CoupledNetwork,
    fleet: &'a Fleet,
    spec: &'a ObjectiveSpec,
    matrix: CaptureMatrix,
}

impl<'a> Objective<'a> {
    pub fn new(
        net: &'a CoupledNetwork,
        fleet: &'a Fleet,
        spec: &'a ObjectiveSpec,
    ) -> Result<Self, ObjectiveError> {
        spec.validate(net.candidates().len())?;
        Ok(Self {
            net,
            fleet,
            spec,
            matrix: CaptureMatrix::new(net, fleet),
        })
    }

    pub fn net(&self) -> &CoupledNetwork {
        self.net
    }

    pub fn fleet(&self) -> &Fleet {
        self.fleet
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        self.spec
    }

    pub fn candidate_count(&self) -> usize {
        self.net.candidates().len()
    }

    pub fn evaluate(&self, placement: &Placement) -> Result<Evaluation, ObjectiveError> {
        let capture = self.matrix.evaluate(self.fleet, placement)?;
        let spec = self.spec;
        let profile =
            gadm::build_loading(&spec.base_load, &capture, self.fleet, &spec.transformer)?;
        let tco = gadm::tco(&profile, &spec.transformer, spec.span_hours)?;
        let open_stations = placement.open_count();
        let penalty = spec.penalty.apply(spec.c_p, open_stations, spec.n_fcs);
        let score = tco.tco - spec.c * capture.captured_volume as f64 + penalty;
        Ok(Evaluation {
            score,
            tco,
            captured_volume: capture.captured_volume,
            open_stations,
            penalty,
            capture,
            profile,
        })
    }

    /// S(x). Panics if the placement length differs from the candidate count.
    pub fn score(&self, placement: &Placement) -> f64 {
        self.evaluate(placement)
            .expect("placement length matches candidate set")
            .score
    }

    /// Exhaustive minimiser over all placements with exactly `n_fcs` stations.
    /// Ties keep the lexicographically first combination of candidate indices.
    pub fn brute_force_optimum(&self, max_enumeration: u64) -> Result<BruteForce, ObjectiveError> {
        let m = self.candidate_count();
        let n = self.spec.n_fcs;
        let required = binomial(m as u64, n as u64);
        if required > max_enumeration as u128 {
            return Err(ObjectiveError::BudgetExceeded {
                required,
                budget: max_enumeration,
            });
        }
        const CHUNK: usize = 4096;
        let mut combos = Combinations::new(m, n);
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut evaluated = 0u64;
        loop {
            let chunk: Vec<Vec<usize>> = combos.by_ref().take(CHUNK).collect();
            if chunk.is_empty() {
                break;
            }
            evaluated += chunk.len() as u64;
            let scores: Vec<f64> = chunk
                .par_iter()
                .map(|combo| self.score(&placement_of(m, combo)))
                .collect();
            for (combo, score) in chunk.into_iter().zip(scores) {
                if best.as_ref().is_none_or(|(b, _)| score < *b) {
                    best = Some((score, combo));
                }
            }
        }
        let (score, combo) = best.expect("at least one combination");
        Ok(BruteForce {
            placement: placement_of(m, &combo),
            score,
            evaluated,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub placement: Placement,
    pub score: f64,
    pub evaluated: u64,
}

fn placement_of(m: usize, open: &[usize]) -> Placement {
    let mut bits = vec![false; m];
    for &k in open {
        bits[k] = true;
    }
    Placement::new(bits)
}

/// C(n, k), saturating.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// k-subsets of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        // rightmost index that can still move right
        let advanced = (0..k).rev().find(|&i| next[i] < self.n - k + i).map(|i| {
            next[i] += 1;
            for j in i + 1..k {
                next[j] = next[j - 1] + 1;
            }
        });
        self.current = advanced.map(|_| next);
        Some(out)
    }
}
