//! CAB policies behind a common propose/update lifecycle.
//!
//! `propose` never mutates state; `update` is called once per accepted
//! interaction with the action that was proposed and the reward observed.
//! Proposals are not clamped to the action range.

mod epsilon_first;
mod fixed;
pub mod kernels;
mod lock_in;
mod thompson;
mod uniform;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward_models::ActionRange;

pub use epsilon_first::EpsilonFirst;
pub use fixed::FixedAction;
pub use kernels::{argmax_quadratic, least_squares_quadratic, sample_mvn, QuadraticCoefficients};
pub use lock_in::LockIn;
pub use thompson::ThompsonQuadratic;
pub use uniform::UniformRandom;

pub trait Policy: Send {
    /// Short label used in tables and file names.
    fn name(&self) -> &str;

    fn propose(&self, rng: &mut dyn RngCore) -> Result<f64>;

    fn update(&mut self, action: f64, reward: f64) -> Result<()>;

    /// Number of completed `update` calls.
    fn steps(&self) -> u64;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn propose(&self, rng: &mut dyn RngCore) -> Result<f64> {
        (**self).propose(rng)
    }

    fn update(&mut self, action: f64, reward: f64) -> Result<()> {
        (**self).update(action, reward)
    }

    fn steps(&self) -> u64 {
        (**self).steps()
    }
}

/// Parameters for building a fresh policy instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PolicySpec {
    #[serde(rename = "UR")]
    UniformRandom,
    #[serde(rename = "EF")]
    EpsilonFirst {
        exploration: usize,
        unclamped_vertex: bool,
    },
    #[serde(rename = "TBL")]
    Thompson {
        prior_j: [f64; 3],
        prior_p: [[f64; 3]; 3],
        sigma2: f64,
        unclamped_vertex: bool,
    },
    #[serde(rename = "LiF")]
    LockIn {
        /// Initial centre; drawn uniformly on the range when absent.
        a0: Option<f64>,
        amplitude: f64,
        window: usize,
        gamma: f64,
        omega: f64,
    },
    #[serde(rename = "FIXED")]
    Fixed { action: f64 },
}

impl PolicySpec {
    pub const SIMULATION_EXPLORATION: usize = 2000;
    pub const FIELD_EXPLORATION: usize = 100;
    pub const PRIOR_J: [f64; 3] = [0.0, 0.05, -0.05];
    pub const PRIOR_P: [[f64; 3]; 3] = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 5.0]];

    pub fn uniform() -> Self {
        PolicySpec::UniformRandom
    }

    pub fn epsilon_first(exploration: usize) -> Self {
        PolicySpec::EpsilonFirst { exploration, unclamped_vertex: false }
    }

    pub fn thompson() -> Self {
        PolicySpec::Thompson {
            prior_j: Self::PRIOR_J,
            prior_p: Self::PRIOR_P,
            sigma2: 1.0,
            unclamped_vertex: false,
        }
    }

    pub fn lock_in() -> Self {
        PolicySpec::LockIn { a0: None, amplitude: 0.05, window: 50, gamma: 0.1, omega: 1.0 }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PolicySpec::UniformRandom => "UR",
            PolicySpec::EpsilonFirst { .. } => "EF",
            PolicySpec::Thompson { .. } => "TBL",
            PolicySpec::LockIn { .. } => "LiF",
            PolicySpec::Fixed { .. } => "FIXED",
        }
    }

    /// A fresh instance. `rng` is only consumed by specs with random
    /// initial state (LiF without an explicit `a0`).
    pub fn build(&self, range: ActionRange, rng: &mut dyn RngCore) -> Result<Box<dyn Policy>> {
        Ok(match *self {
            PolicySpec::UniformRandom => Box::new(UniformRandom::new(range)),
            PolicySpec::EpsilonFirst { exploration, unclamped_vertex } => {
                let mut p = EpsilonFirst::new(exploration, range)?;
                p.set_unclamped_vertex(unclamped_vertex);
                Box::new(p)
            }
            PolicySpec::Thompson { prior_j, prior_p, sigma2, unclamped_vertex } => {
                let mut p = ThompsonQuadratic::new(prior_j, prior_p, sigma2, range)?;
                p.set_unclamped_vertex(unclamped_vertex);
                Box::new(p)
            }
            PolicySpec::LockIn { a0, amplitude, window, gamma, omega } => {
                let a0 = a0.unwrap_or_else(|| range.sample(rng));
                Box::new(LockIn::new(a0, amplitude, window, gamma, omega)?)
            }
            PolicySpec::Fixed { action } => Box::new(FixedAction::new(action)),
        })
    }
}

pub(crate) fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be finite and > 0, got {v}") })
    }
}
