use rand::RngCore;

use super::Policy;
use crate::error::Result;
use crate::reward_models::ActionRange;

/// Uniform random actions on the range, ignoring all feedback.
#[derive(Debug, Clone)]
pub struct UniformRandom {
    range: ActionRange,
    t: u64,
}

impl UniformRandom {
    pub fn new(range: ActionRange) -> Self {
        Self { range, t: 0 }
    }
}

impl Policy for UniformRandom {
    fn name(&self) -> &str {
        "UR"
    }

    fn propose(&self, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.range.sample(rng))
    }

    fn update(&mut self, _action: f64, _reward: f64) -> Result<()> {
        self.t += 1;
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.t
    }
}
