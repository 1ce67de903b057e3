//! Simulation of multi-armed bandit agents that steer a remote actuator
//! whose reward feedback crosses a lossy channel into a Geo/Geo/1 queue.
//!
//! The agent observes one queued packet per service opportunity, chosen by
//! a [`SamplingPolicy`]. Controllers in [`controllers`] close the loop;
//! [`experiment`] runs Monte Carlo batches over a parameter grid and
//! writes CSV summaries.

pub mod bandit;
pub mod config;
pub mod controllers;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod par;
pub mod queue;
pub mod seed;
pub mod stats;

pub use bandit::{AlgorithmKind, AlgorithmState, ArmId, BanditEnv, TsState, UcbState};
pub use config::ExperimentConfig;
pub use controllers::{ControllerKind, ReplayMode, RunConfig, RunTrace, SlotRecord, UfqSource};
pub use error::{Error, Result};
pub use metrics::{EnergyCounters, EnergyModel, RunOutcome, SummaryRow};
pub use par::Execution;
pub use queue::{GeoGeoQueue, Packet, SamplingPolicy};
pub use seed::{RunId, RunSeed};
