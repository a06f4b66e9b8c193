//! Ground-truth reward functions used for online simulation, logged-stream
//! generation and regret accounting.
//!
//! Two families are provided:
//!
//! - [`ParabolaModel`]: `f(a) = -scale * (a - peak)^2`, peak drawn uniformly on
//!   the range. The optimum is `(peak, 0)`.
//! - [`BimodalQuarticModel`]: a quartic whose derivative is
//!   `k * (a - m1) * (a - m0) * (a - m2)` with `m1 < m0 < m2`, so `m1` and `m2`
//!   are maxima and `m0` is the valley between them. The model is drawn by
//!   fixing both peak heights and the valley height and solving for the valley
//!   location, which pins `k` and the offset `c`.
//!
//! Evaluation outside `[lo, hi]` is allowed and not clamped; policies may
//! propose out-of-range actions during online simulation.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed action interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionRange {
    lo: f64,
    hi: f64,
}

impl ActionRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidRange { lo, hi })
        }
    }

    /// The `[0, 1]` range used by all simulation studies.
    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, a: f64) -> bool {
        a >= self.lo && a <= self.hi
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.lo + self.width() * rng.random::<f64>()
    }

    /// `n` evenly spaced points from `lo` to `hi` inclusive.
    pub fn grid(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let step = self.width() / (n.max(2) - 1) as f64;
        (0..n).map(move |i| if i + 1 == n { self.hi } else { self.lo + step * i as f64 })
    }
}

impl Default for ActionRange {
    fn default() -> Self {
        Self::unit()
    }
}

/// Gaussian observation noise, parameterised by variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub variance: f64,
}

impl NoiseSpec {
    /// Variance 0.01, i.e. standard deviation 0.1.
    pub const SIMULATION_DEFAULT: NoiseSpec = NoiseSpec { variance: 0.01 };

    pub fn new(variance: f64) -> Result<Self> {
        if variance.is_finite() && variance >= 0.0 {
            Ok(Self { variance })
        } else {
            Err(Error::InvalidParameter {
                name: "noise_var",
                reason: format!("variance must be finite and >= 0, got {variance}"),
            })
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolaModel {
    pub peak: f64,
    pub scale: f64,
    pub noise_var: f64,
    pub range: ActionRange,
}

impl ParabolaModel {
    pub fn new(peak: f64, scale: f64, noise_var: f64, range: ActionRange) -> Result<Self> {
        if !range.contains(peak) {
            return Err(Error::InvalidParameter {
                name: "peak",
                reason: format!("{peak} is outside [{}, {}]", range.lo(), range.hi()),
            });
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter {
                name: "scale",
                reason: format!("must be finite and > 0, got {scale}"),
            });
        }
        NoiseSpec::new(noise_var)?;
        Ok(Self { peak, scale, noise_var, range })
    }

    pub fn mean(&self, a: f64) -> f64 {
        let d = a - self.peak;
        -self.scale * d * d
    }

    pub fn derivative(&self, a: f64) -> f64 {
        -2.0 * self.scale * (a - self.peak)
    }
}

/// Quartic with stationary points `m1 < m0 < m2`.
///
/// `mean(x) = k * Q(x) + c` where `Q` is the antiderivative of
/// `(x - m1)(x - m0)(x - m2)` with `Q(lo) = 0`. `k < 0` makes both outer
/// stationary points maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalQuarticModel {
    pub m1: f64,
    pub m0: f64,
    pub m2: f64,
    pub k: f64,
    pub c: f64,
    pub noise_var: f64,
    pub range: ActionRange,
}

/// `∫ (x - m1)(x - m0)(x - m2) dx` without the integration constant.
fn cubic_antiderivative(m1: f64, m0: f64, m2: f64, x: f64) -> f64 {
    let e1 = m1 + m0 + m2;
    let e2 = m1 * m0 + m1 * m2 + m0 * m2;
    let e3 = m1 * m0 * m2;
    x * (-e3 + x * (e2 / 2.0 + x * (-e1 / 3.0 + x / 4.0)))
}

impl BimodalQuarticModel {
    /// Builds the model from its stationary points, the height of the left
    /// peak and the valley height. The right peak height follows from the
    /// geometry.
    pub fn from_shape(
        m1: f64,
        m0: f64,
        m2: f64,
        h1: f64,
        valley: f64,
        noise_var: f64,
        range: ActionRange,
    ) -> Result<Self> {
        if !(range.lo() < m1 && m1 < m0 && m0 < m2 && m2 < range.hi()) {
            return Err(Error::InvalidParameter {
                name: "stationary points",
                reason: format!("need lo < m1 < m0 < m2 < hi, got {m1}, {m0}, {m2}"),
            });
        }
        if !(valley < h1) {
            return Err(Error::InvalidParameter {
                name: "valley",
                reason: format!("valley height {valley} must lie below peak height {h1}"),
            });
        }
        NoiseSpec::new(noise_var)?;
        let q = |x: f64| cubic_antiderivative(m1, m0, m2, x) - cubic_antiderivative(m1, m0, m2, range.lo());
        let gap = q(m0) - q(m1);
        if gap.abs() < 1e-12 {
            return Err(Error::DegenerateGeometry { gap });
        }
        let k = (valley - h1) / gap;
        let c = h1 - k * q(m1);
        Ok(Self { m1, m0, m2, k, c, noise_var, range })
    }

    /// Builds the model from both peak locations and all three heights,
    /// solving for the valley location `m0` by bisection.
    pub fn from_heights(
        m1: f64,
        m2: f64,
        h1: f64,
        h2: f64,
        valley: f64,
        noise_var: f64,
        range: ActionRange,
    ) -> Result<Self> {
        if !(valley < h1 && valley < h2) {
            return Err(Error::InvalidParameter {
                name: "valley",
                reason: format!("valley height {valley} must lie below both peaks ({h1}, {h2})"),
            });
        }
        if !(m1 < m2) {
            return Err(Error::InvalidParameter {
                name: "stationary points",
                reason: format!("need m1 < m2, got {m1}, {m2}"),
            });
        }
        // rise(m0) = (h1 - valley) * (-∫_{m0}^{m2} p) - (h2 - valley) * ∫_{m1}^{m0} p
        // goes from positive at m0 = m1 to negative at m0 = m2.
        let target = |m0: f64| {
            let anti = |x| cubic_antiderivative(m1, m0, m2, x);
            let left = anti(m0) - anti(m1);
            let right = anti(m2) - anti(m0);
            (h1 - valley) * (-right) - (h2 - valley) * left
        };
        let (mut a, mut b) = (m1, m2);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if target(mid) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        Self::from_shape(m1, 0.5 * (a + b), m2, h1, valley, noise_var, range)
    }

    fn q(&self, x: f64) -> f64 {
        cubic_antiderivative(self.m1, self.m0, self.m2, x)
            - cubic_antiderivative(self.m1, self.m0, self.m2, self.range.lo())
    }

    pub fn mean(&self, a: f64) -> f64 {
        self.k * self.q(a) + self.c
    }

    pub fn derivative(&self, a: f64) -> f64 {
        self.k * (a - self.m1) * (a - self.m0) * (a - self.m2)
    }

    pub fn second_derivative(&self, a: f64) -> f64 {
        let (m1, m0, m2) = (self.m1, self.m0, self.m2);
        self.k * ((a - m0) * (a - m2) + (a - m1) * (a - m2) + (a - m1) * (a - m0))
    }

    /// The lowest mean value over the range. With `k < 0` the quartic falls
    /// off outside the peaks, so only the endpoints and the valley qualify.
    pub fn range_minimum(&self) -> f64 {
        self.mean(self.range.lo())
            .min(self.mean(self.range.hi()))
            .min(self.mean(self.m0))
    }

    fn is_valid(&self) -> bool {
        self.k.is_finite()
            && self.c.is_finite()
            && self.second_derivative(self.m1) < 0.0
            && self.second_derivative(self.m2) < 0.0
            && self.second_derivative(self.m0) > 0.0
    }
}

/// Parameters of a random model family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    Parabola {
        scale: f64,
    },
    Bimodal {
        /// Largest allowed drop from the optimum to the lowest mean on the
        /// range; draws exceeding it are rejected.
        max_drop: f64,
    },
}

impl ModelFamily {
    pub const DEFAULT_PARABOLA_SCALE: f64 = 5.0;
    pub const DEFAULT_BIMODAL_MAX_DROP: f64 = 3.0;

    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Parabola { .. } => "parabola",
            ModelFamily::Bimodal { .. } => "bimodal",
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, range: ActionRange, noise_var: f64) -> Result<RewardModel> {
        match *self {
            ModelFamily::Parabola { scale } => {
                Ok(RewardModel::Parabola(make_parabola_scaled(rng, range, noise_var, scale)?))
            }
            ModelFamily::Bimodal { max_drop } => {
                Ok(RewardModel::Bimodal(make_bimodal_bounded(rng, range, noise_var, max_drop)?))
            }
        }
    }
}

/// Unit-scale parabola with a uniformly drawn peak.
pub fn make_parabola<R: Rng + ?Sized>(rng: &mut R, range: ActionRange, noise_var: f64) -> Result<ParabolaModel> {
    make_parabola_scaled(rng, range, noise_var, 1.0)
}

pub fn make_parabola_scaled<R: Rng + ?Sized>(
    rng: &mut R,
    range: ActionRange,
    noise_var: f64,
    scale: f64,
) -> Result<ParabolaModel> {
    let peak = range.sample(rng);
    ParabolaModel::new(peak, scale, noise_var, range)
}

pub const BIMODAL_MAX_ATTEMPTS: usize = 100;

/// Random bimodal quartic with the default drop bound.
pub fn make_bimodal<R: Rng + ?Sized>(rng: &mut R, range: ActionRange, noise_var: f64) -> Result<BimodalQuarticModel> {
    make_bimodal_bounded(rng, range, noise_var, ModelFamily::DEFAULT_BIMODAL_MAX_DROP)
}

/// Draws peak locations `m1 ~ U(lo + 0.05, lo + 0.45 w)`,
/// `m2 ~ U(lo + 0.55 w, hi - 0.05)`, peak heights `h1, h2 ~ U(0.5, 1)` and a
/// valley `min(h1, h2) - U(0.2, 0.5)`, then solves for the valley location.
/// Draws whose valley lands within 0.05 of a peak, or whose mean falls more
/// than `max_drop` below the optimum somewhere on the range, are redrawn.
pub fn make_bimodal_bounded<R: Rng + ?Sized>(
    rng: &mut R,
    range: ActionRange,
    noise_var: f64,
    max_drop: f64,
) -> Result<BimodalQuarticModel> {
    let (lo, hi, w) = (range.lo(), range.hi(), range.width());
    let unif = |rng: &mut R, a: f64, b: f64| a + (b - a) * rng.random::<f64>();
    for _ in 0..BIMODAL_MAX_ATTEMPTS {
        let m1 = unif(rng, lo + 0.05, lo + 0.45 * w);
        let m2 = unif(rng, lo + 0.55 * w, hi - 0.05);
        let h1 = unif(rng, 0.5, 1.0);
        let h2 = unif(rng, 0.5, 1.0);
        let valley = h1.min(h2) - unif(rng, 0.2, 0.5);
        let model = match BimodalQuarticModel::from_heights(m1, m2, h1, h2, valley, noise_var, range) {
            Ok(m) => m,
            Err(Error::DegenerateGeometry { .. }) => continue,
            Err(e) => return Err(e),
        };
        if model.m0 < m1 + 0.05 || model.m0 > m2 - 0.05 || !model.is_valid() {
            continue;
        }
        let best = model.mean(m1).max(model.mean(m2));
        if best - model.range_minimum() > max_drop {
            continue;
        }
        return Ok(model);
    }
    Err(Error::ResampleExhausted { attempts: BIMODAL_MAX_ATTEMPTS })
}

/// A ground-truth reward function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RewardModel {
    Parabola(ParabolaModel),
    Bimodal(BimodalQuarticModel),
}

impl RewardModel {
    pub fn family(&self) -> &'static str {
        match self {
            RewardModel::Parabola(_) => "parabola",
            RewardModel::Bimodal(_) => "bimodal",
        }
    }

    pub fn range(&self) -> ActionRange {
        match self {
            RewardModel::Parabola(m) => m.range,
            RewardModel::Bimodal(m) => m.range,
        }
    }

    pub fn noise_var(&self) -> f64 {
        match self {
            RewardModel::Parabola(m) => m.noise_var,
            RewardModel::Bimodal(m) => m.noise_var,
        }
    }

    /// Noiseless `f(a)`.
    pub fn mean_reward(&self, a: f64) -> f64 {
        match self {
            RewardModel::Parabola(m) => m.mean(a),
            RewardModel::Bimodal(m) => m.mean(a),
        }
    }

    pub fn derivative(&self, a: f64) -> f64 {
        match self {
            RewardModel::Parabola(m) => m.derivative(a),
            RewardModel::Bimodal(m) => m.derivative(a),
        }
    }

    /// `f(a) + ε`, `ε ~ N(0, noise_var)`. Always consumes one normal draw.
    pub fn sample_reward<R: Rng + ?Sized>(&self, a: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean_reward(a) + self.noise_var().sqrt() * z
    }

    /// Best action on the range and its mean reward.
    pub fn optimum(&self) -> (f64, f64) {
        match self {
            RewardModel::Parabola(m) => (m.peak, m.mean(m.peak)),
            RewardModel::Bimodal(m) => {
                let mut best = (m.m1, m.mean(m.m1));
                for a in [m.m2, m.range.lo(), m.range.hi()] {
                    let r = m.mean(a);
                    if r > best.1 {
                        best = (a, r);
                    }
                }
                best
            }
        }
    }
}

impl From<ParabolaModel> for RewardModel {
    fn from(m: ParabolaModel) -> Self {
        RewardModel::Parabola(m)
    }
}

impl From<BimodalQuarticModel> for RewardModel {
    fn from(m: BimodalQuarticModel) -> Self {
        RewardModel::Bimodal(m)
    }
}
