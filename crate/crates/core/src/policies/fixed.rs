use rand::RngCore;

use super::Policy;
use crate::error::Result;

/// Always proposes the same action. Useful as a reference point when sizing
/// logs and measuring the replay's downward bias.
#[derive(Debug, Clone)]
pub struct FixedAction {
    action: f64,
    t: u64,
}

impl FixedAction {
    pub fn new(action: f64) -> Self {
        Self { action, t: 0 }
    }
}

impl Policy for FixedAction {
    fn name(&self) -> &str {
        "FIXED"
    }

    fn propose(&self, _rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self.action)
    }

    fn update(&mut self, _action: f64, _reward: f64) -> Result<()> {
        self.t += 1;
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.t
    }
}
