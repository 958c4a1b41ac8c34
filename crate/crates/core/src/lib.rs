//! Mobility-aware device-to-device (D2D) caching.
//!
//! A service provider pre-caches content at user devices ahead of demand.
//! Users that meet in the same location during a slot share their cached
//! bytes for free, so the provider only serves the residual. This crate
//! evaluates that model end to end:
//!
//! * [`profiles`]: demand and Markov mobility profiles, occupancy and
//!   co-location statistics.
//! * [`loadmodel`]: reactive/proactive network load, provider cost and
//!   per-user payments for an allocation under a linear cost.
//! * [`centralized`]: the provider's exact and greedy caching policies,
//!   gain bounds and the reward/memory staircase.
//! * [`decentralized`]: the users' caching game, its fair equilibrium,
//!   risk-dominant play and Nash certification.
//! * [`montecarlo`]: trajectory/demand sampling that validates every
//!   analytic expectation.
//! * [`scenario_file`]: the TOML scenario format.

pub mod centralized;
pub mod decentralized;
pub mod error;
pub mod loadmodel;
pub mod montecarlo;
pub mod profiles;
pub mod scenario_file;
pub mod staircase;
pub mod userset;

pub use error::{Error, Result};
pub use loadmodel::CachingAllocation;
pub use profiles::{DemandProfile, MobilityProfile, OccupancyTensor, Scenario, ScenarioInput};
pub use userset::UserSet;

/// Largest user count for which exact (subset-enumerating) evaluation is allowed.
pub const EXACT_USER_CAP: usize = 20;

/// Tolerance on user-supplied probabilities (row sums, initial distributions).
pub const INPUT_TOL: f64 = 1e-12;

/// Tolerance on derived probabilities and certified quantities.
pub const DERIVED_TOL: f64 = 1e-9;
