//! Offline replay evaluation for continuous-armed bandit (CAB) policies.
//!
//! The crate is organised bottom-up:
//!
//! - [`reward_models`]: ground-truth mean reward functions on an action interval
//!   (a random-peak parabola and a random bimodal quartic) with Gaussian noise.
//! - [`policies`]: uniform random, epsilon-first, Thompson sampling over a
//!   Bayesian quadratic regression, and lock-in feedback, all behind the
//!   [`Policy`] propose/update lifecycle.
//! - [`replay`]: uniformly-logged streams, exact-match replay for finite arms and
//!   the δ-tolerance replay for continuous actions.
//! - [`metrics`]: regret/reward curves, survivor-aware aggregation and rank tables.
//! - [`harness`]: config parsing and the online / offline / ingest experiment runners.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod policies;
pub mod replay;
pub mod reward_models;
pub mod rng;

pub use error::{Error, Result};
pub use metrics::{RankTable, RegretCurve, RunAggregate};
pub use policies::{Policy, PolicySpec};
pub use replay::{LoggedEvent, LoggedStream, ReplayConfig, Trace};
pub use reward_models::{ActionRange, RewardModel};
pub use rng::SimRng;
