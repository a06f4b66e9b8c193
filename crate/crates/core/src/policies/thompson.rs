use nalgebra::{Matrix3, Vector3};
use rand::RngCore;

use super::kernels::{argmax_quadratic, argmax_quadratic_unclamped, cholesky_lower, mvn_from_factor};
use super::{positive, Policy};
use crate::error::{Error, Result};
use crate::reward_models::ActionRange;

/// Thompson sampling over the quadratic reward model with an online Bayesian
/// linear regression in information form.
///
/// The state is the information vector `J = Σ⁻¹ μ` and precision `P = Σ⁻¹`.
/// Each accepted interaction with feature `x = [1, a, a²]` adds
/// `r x / σ²` to `J` and `x xᵀ / σ²` to `P`. The posterior mean and the
/// Cholesky factor of the covariance are cached after every update, so
/// proposing is a single draw plus an argmax.
#[derive(Debug, Clone)]
pub struct ThompsonQuadratic {
    j: Vector3<f64>,
    p: Matrix3<f64>,
    sigma2: f64,
    range: ActionRange,
    unclamped_vertex: bool,
    t: u64,
    mu: Vector3<f64>,
    cov: Matrix3<f64>,
    cov_factor: Matrix3<f64>,
}

impl ThompsonQuadratic {
    pub fn new(j: [f64; 3], p: [[f64; 3]; 3], sigma2: f64, range: ActionRange) -> Result<Self> {
        let p = Matrix3::from_fn(|r, c| p[r][c]);
        if (p - p.transpose()).abs().max() > 1e-12 * p.abs().max().max(1.0) {
            return Err(Error::InvalidParameter { name: "prior_p", reason: "precision must be symmetric".into() });
        }
        let mut s = Self {
            j: Vector3::from(j),
            p,
            sigma2: positive("sigma2", sigma2)?,
            range,
            unclamped_vertex: false,
            t: 0,
            mu: Vector3::zeros(),
            cov: Matrix3::zeros(),
            cov_factor: Matrix3::zeros(),
        };
        s.refresh()?;
        Ok(s)
    }

    pub fn set_unclamped_vertex(&mut self, on: bool) {
        self.unclamped_vertex = on;
    }

    fn refresh(&mut self) -> Result<()> {
        let l = cholesky_lower(&self.p)?;
        let l_inv = l.try_inverse().ok_or(Error::NotPositiveDefinite)?;
        let cov = l_inv.transpose() * l_inv;
        let cov = (cov + cov.transpose()) * 0.5;
        self.mu = cov * self.j;
        self.cov_factor = cholesky_lower(&cov)?;
        self.cov = cov;
        if self.mu.iter().chain(self.cov.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NotPositiveDefinite)
        }
    }

    pub fn information(&self) -> (&Vector3<f64>, &Matrix3<f64>) {
        (&self.j, &self.p)
    }

    /// Posterior mean `μ = P⁻¹ J` and covariance `Σ = P⁻¹`.
    pub fn posterior(&self) -> (Vector3<f64>, Matrix3<f64>) {
        (self.mu, self.cov)
    }

    /// The action played for a given parameter draw `θ = [b0, b1, b2]`.
    pub fn action_for(&self, theta: &Vector3<f64>) -> f64 {
        if self.unclamped_vertex {
            argmax_quadratic_unclamped(theta[1], theta[2], self.range)
        } else {
            argmax_quadratic(theta[1], theta[2], self.range)
        }
    }
}

impl Policy for ThompsonQuadratic {
    fn name(&self) -> &str {
        "TBL"
    }

    fn propose(&self, rng: &mut dyn RngCore) -> Result<f64> {
        let theta = mvn_from_factor(&self.mu, &self.cov_factor, rng);
        Ok(self.action_for(&theta))
    }

    fn update(&mut self, action: f64, reward: f64) -> Result<()> {
        let x = Vector3::new(1.0, action, action * action);
        self.j += x * (reward / self.sigma2);
        self.p += (x * x.transpose()) / self.sigma2;
        self.t += 1;
        self.refresh()
    }

    fn steps(&self) -> u64 {
        self.t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::PolicySpec;
    use crate::rng::SimRng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn default_prior() -> ThompsonQuadratic {
        ThompsonQuadratic::new(PolicySpec::PRIOR_J, PolicySpec::PRIOR_P, 1.0, ActionRange::unit()).unwrap()
    }

    #[test]
    fn prior_posterior() {
        let p = default_prior();
        let (mu, cov) = p.posterior();
        assert_abs_diff_eq!(mu, Vector3::new(0.0, 0.025, -0.01), epsilon = 1e-15);
        assert_abs_diff_eq!(cov, Matrix3::from_diagonal(&Vector3::new(0.5, 0.5, 0.2)), epsilon = 1e-15);
    }

    #[test]
    fn mean_draw_resolves_to_upper_endpoint() {
        // Vertex of the prior mean is -0.025 / (2 * -0.01) = 1.25, outside [0, 1];
        // 0.025 - 0.01 = 0.015 at a = 1 beats 0 at a = 0.
        let p = default_prior();
        let (mu, _) = p.posterior();
        assert_eq!(p.action_for(&mu), 1.0);
        let g = |a: f64| mu[1] * a + mu[2] * a * a;
        let grid_best = (0..=10_000).map(|i| i as f64 * 1e-4).max_by(|a, b| g(*a).total_cmp(&g(*b))).unwrap();
        assert_eq!(grid_best, 1.0);
    }

    #[test]
    fn single_update_arithmetic() {
        let mut p = default_prior();
        p.update(0.0, 1.0).unwrap();
        let (j, prec) = p.information();
        assert_eq!(*j, Vector3::new(1.0, 0.05, -0.05));
        let mut expected = Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 5.0));
        expected[(0, 0)] = 3.0;
        assert_eq!(*prec, expected);
        assert_eq!(p.steps(), 1);
    }

    #[test]
    fn rejects_non_pd_prior() {
        let bad = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(ThompsonQuadratic::new([0.0; 3], bad, 1.0, ActionRange::unit()).is_err());
        assert!(ThompsonQuadratic::new([0.0; 3], PolicySpec::PRIOR_P, 0.0, ActionRange::unit()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn precision_quadratic_form_never_decreases(
            data in prop::collection::vec((-0.5f64..1.5, -2.0f64..2.0), 1..40),
            x in prop::array::uniform3(-3.0f64..3.0),
        ) {
            let x = Vector3::from(x);
            let mut p = default_prior();
            let mut last = x.dot(&(p.information().1 * x));
            for (a, r) in data {
                p.update(a, r).unwrap();
                let now = x.dot(&(p.information().1 * x));
                prop_assert!(now >= last);
                last = now;
            }
        }
    }

    #[test]
    fn proposals_move_towards_peak() {
        let mut rng = SimRng::seed_from_u64(10);
        let mut p = default_prior();
        let f = |a: f64| -5.0 * (a - 0.35) * (a - 0.35);
        let mut late_regret = 0.0;
        for t in 0..2000 {
            let a = p.propose(&mut rng).unwrap();
            p.update(a, f(a)).unwrap();
            if t >= 1500 {
                late_regret -= f(a);
            }
        }
        // Uniform play on this parabola loses 5 * (1/3 - 0.35 + 0.35^2) ≈ 0.529 per step.
        let per_step = late_regret / 500.0;
        assert!(per_step < 0.1, "late per-step regret {per_step}");
    }
}
