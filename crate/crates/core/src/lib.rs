//! Fast-charging station siting on a coupled road / power network.
//!
//! The pipeline routes a Monte-Carlo PEV fleet over the road graph
//! ([`network`], [`demand`]), decides which trips a set of stations captures
//! ([`fcm`]), prices the resulting substation-transformer loading
//! ([`gadm`]), combines both into one scalar objective ([`objective`]) and
//! searches station placements with the cross-entropy method ([`ce`]).
//! [`cli`] wires it together for the `fcs-plan` binary.

pub mod ce;
pub mod cli;
pub mod demand;
pub mod fcm;
pub mod gadm;
pub mod network;
pub mod objective;

pub use ce::{CeConfig, CeOutcome, CrossEntropy};
pub use demand::{generate_fleet, Fleet, FleetSpec, OdPolicy};
pub use fcm::{capture_matrix, evaluate_capture, CaptureResult, Placement};
pub use gadm::{BaseLoad, LoadingProfile, TcoResult, TransformerSpec};
pub use network::{load_network, CoupledNetwork, NodeId, TripChain};
pub use objective::{Objective, ObjectiveSpec, PenaltyForm};
