use rand::RngCore;

use super::kernels::{argmax_quadratic, argmax_quadratic_unclamped, least_squares_quadratic, QuadraticCoefficients};
use super::Policy;
use crate::error::{Error, Result};
use crate::reward_models::ActionRange;

/// Explore uniformly for `N` steps, then fit the quadratic model once and play
/// its maximiser forever.
#[derive(Debug, Clone)]
pub struct EpsilonFirst {
    exploration: usize,
    range: ActionRange,
    history: Vec<(f64, f64)>,
    fitted: Option<QuadraticCoefficients>,
    exploit_action: Option<f64>,
    unclamped_vertex: bool,
}

impl EpsilonFirst {
    pub fn new(exploration: usize, range: ActionRange) -> Result<Self> {
        if exploration == 0 {
            return Err(Error::InvalidParameter {
                name: "exploration",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self {
            exploration,
            range,
            history: Vec::with_capacity(exploration),
            fitted: None,
            exploit_action: None,
            unclamped_vertex: false,
        })
    }

    pub fn set_unclamped_vertex(&mut self, on: bool) {
        self.unclamped_vertex = on;
    }

    pub fn exploration(&self) -> usize {
        self.exploration
    }

    pub fn history(&self) -> &[(f64, f64)] {
        &self.history
    }

    pub fn fitted(&self) -> Option<QuadraticCoefficients> {
        self.fitted
    }

    pub fn exploit_action(&self) -> Option<f64> {
        self.exploit_action
    }
}

impl Policy for EpsilonFirst {
    fn name(&self) -> &str {
        "EF"
    }

    fn propose(&self, rng: &mut dyn RngCore) -> Result<f64> {
        match self.exploit_action {
            Some(a) => Ok(a),
            None => Ok(self.range.sample(rng)),
        }
    }

    fn update(&mut self, action: f64, reward: f64) -> Result<()> {
        self.history.push((action, reward));
        if self.history.len() == self.exploration {
            let q = least_squares_quadratic(&self.history)?;
            let a = if self.unclamped_vertex {
                argmax_quadratic_unclamped(q.b1, q.b2, self.range)
            } else {
                argmax_quadratic(q.b1, q.b2, self.range)
            };
            self.fitted = Some(q);
            self.exploit_action = Some(a);
        }
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.history.len() as u64
    }
}
