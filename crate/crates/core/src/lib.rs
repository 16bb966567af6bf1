//! Live group detection for mobile wireless networks.
//!
//! This crate bundles three things:
//!
//! - the node-side protocol: max-consensus over proximity vectors with
//!   epoch-stamped resets ([`consensus`]) and the signal-strength link
//!   estimator that feeds it ([`link`]);
//! - a deterministic packet-level channel simulator ([`netsim`]) with
//!   scenario generation ([`scenario`]) for bench, pack, breakaway and
//!   split situations;
//! - offline analysis: trace persistence ([`trace`]), trace replay
//!   ([`replay`]) and convergence/detection metrics ([`metrics`]).
//!
//! Everything downstream of a seed is deterministic: the same scenario,
//! config and seed produce byte-identical traces and metrics.

pub mod consensus;
pub mod link;
pub mod metrics;
pub mod netsim;
pub mod replay;
pub mod scenario;
pub mod trace;

pub use consensus::{DataPacket, GroupView, NodeId, NodeState, ProximityScale, ProximityVector};
pub use link::{EstimatorConfig, LinkEstimator};
pub use netsim::{ChannelModel, SimConfig, SimTrace};
pub use scenario::Scenario;
