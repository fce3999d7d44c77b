//! Exact solver and simulator for common-interest binary elections in which
//! voters may cast their vote, delegate it (liquid democracy) or abstain.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the domain types shared by everything else.
//! * [`analytic`] evaluates interim and ex-ante expected utilities exactly.
//! * [`equilibrium`] locates threshold equilibria and sweeps thresholds.
//! * [`engine`] plays single elections with full delegation mechanics.
//! * [`montecarlo`] runs seeded batches and the heterogeneous-population model.
//! * [`analysis`] ingests per-subject decision data and runs the bootstrap.

pub mod analysis;
pub mod analytic;
pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod rng;

pub use error::{Error, Result};
pub use model::{
    Alternative, BehavioralProfile, Electorate, PrecisionDistribution, Role, StrategyProfileLD,
    StrategyProfileMVA, System, VoterAction,
};
