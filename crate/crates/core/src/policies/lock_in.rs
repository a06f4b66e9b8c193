use rand::RngCore;

use super::{positive, Policy};
use crate::error::{Error, Result};

/// Lock-in feedback: oscillate around a centre `a0`, demodulate the rewards
/// against the same cosine, and move the centre by the windowed gradient
/// estimate every `window` steps.
///
/// The step counter is global (never reset), so the phase of the oscillation
/// is continuous across windows.
#[derive(Debug, Clone)]
pub struct LockIn {
    a0: f64,
    amplitude: f64,
    window: usize,
    gamma: f64,
    omega: f64,
    t_local: u64,
    r_sum: f64,
}

impl LockIn {
    pub fn new(a0: f64, amplitude: f64, window: usize, gamma: f64, omega: f64) -> Result<Self> {
        if !a0.is_finite() {
            return Err(Error::InvalidParameter { name: "a0", reason: format!("must be finite, got {a0}") });
        }
        if window == 0 {
            return Err(Error::InvalidParameter { name: "window", reason: "must be at least 1".into() });
        }
        Ok(Self {
            a0,
            amplitude: positive("amplitude", amplitude)?,
            window,
            gamma: positive("gamma", gamma)?,
            omega: positive("omega", omega)?,
            t_local: 0,
            r_sum: 0.0,
        })
    }

    pub fn center(&self) -> f64 {
        self.a0
    }

    pub fn accumulator(&self) -> f64 {
        self.r_sum
    }
}

impl Policy for LockIn {
    fn name(&self) -> &str {
        "LiF"
    }

    fn propose(&self, _rng: &mut dyn RngCore) -> Result<f64> {
        let t = (self.t_local + 1) as f64;
        Ok(self.a0 + self.amplitude * (self.omega * t).cos())
    }

    fn update(&mut self, _action: f64, reward: f64) -> Result<()> {
        self.t_local += 1;
        self.r_sum += reward * (self.omega * self.t_local as f64).cos();
        if self.t_local.is_multiple_of(self.window as u64) {
            self.a0 += self.gamma * (self.r_sum / self.window as f64);
            self.r_sum = 0.0;
        }
        Ok(())
    }

    fn steps(&self) -> u64 {
        self.t_local
    }
}
