//! Small dense kernels shared by the quadratic-model policies.

use nalgebra::{Cholesky, Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward_models::ActionRange;

/// `r = b0 + b1 * a + b2 * a^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
}

impl QuadraticCoefficients {
    pub fn eval(&self, a: f64) -> f64 {
        self.b0 + a * (self.b1 + a * self.b2)
    }
}

/// Normal matrices with a (Jacobi-scaled) condition estimate above this are
/// treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Ordinary least squares fit of `r = b0 + b1 a + b2 a^2`.
///
/// Solves the normal equations after symmetric diagonal scaling; the scaled
/// matrix's eigenvalue ratio is the conditioning guard.
pub fn least_squares_quadratic(history: &[(f64, f64)]) -> Result<QuadraticCoefficients> {
    let mut actions: Vec<f64> = history.iter().map(|&(a, _)| a).collect();
    actions.sort_by(f64::total_cmp);
    actions.dedup();
    if actions.len() < 3 {
        return Err(Error::RankDeficient { distinct: actions.len() });
    }

    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for &(a, r) in history {
        let x = Vector3::new(1.0, a, a * a);
        xtx += x * x.transpose();
        xty += x * r;
    }

    let d = xtx.diagonal().map(|v| 1.0 / v.sqrt());
    let scaled = Matrix3::from_fn(|i, j| xtx[(i, j)] * d[i] * d[j]);
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let (min, max) = (eig.min(), eig.max());
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let chol = Cholesky::new(scaled).ok_or(Error::IllConditioned { condition })?;
    let z = chol.solve(&xty.component_mul(&d));
    let beta = z.component_mul(&d);
    Ok(QuadraticCoefficients { b0: beta[0], b1: beta[1], b2: beta[2] })
}

/// Maximiser of `b1 a + b2 a^2` over `range`.
///
/// Returns the vertex `-b1 / (2 b2)` when the quadratic is concave and the
/// vertex lies in the range; otherwise the endpoint with the larger value,
/// ties going to `lo`.
pub fn argmax_quadratic(b1: f64, b2: f64, range: ActionRange) -> f64 {
    if b2 < 0.0 {
        let vertex = -b1 / (2.0 * b2);
        if range.contains(vertex) {
            return vertex;
        }
    }
    better_endpoint(b1, b2, range)
}

/// Like [`argmax_quadratic`] but returns a concave quadratic's vertex even when
/// it lies outside the range.
pub fn argmax_quadratic_unclamped(b1: f64, b2: f64, range: ActionRange) -> f64 {
    if b2 < 0.0 {
        let vertex = -b1 / (2.0 * b2);
        if vertex.is_finite() {
            return vertex;
        }
    }
    better_endpoint(b1, b2, range)
}

fn better_endpoint(b1: f64, b2: f64, range: ActionRange) -> f64 {
    let g = |a: f64| b1 * a + b2 * a * a;
    if g(range.hi()) > g(range.lo()) {
        range.hi()
    } else {
        range.lo()
    }
}

/// Lower Cholesky factor, retrying once with a `1e-10` diagonal jitter.
pub fn cholesky_lower(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if let Some(c) = Cholesky::new(*m) {
        return Ok(c.l());
    }
    Cholesky::new(m + Matrix3::identity() * 1e-10)
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

/// One draw from `N(mu, sigma)`: `mu + L z` with `L L^T = sigma`.
pub fn sample_mvn<R: Rng + ?Sized>(mu: &Vector3<f64>, sigma: &Matrix3<f64>, rng: &mut R) -> Result<Vector3<f64>> {
    let l = cholesky_lower(sigma)?;
    Ok(mvn_from_factor(mu, &l, rng))
}

/// [`sample_mvn`] with the standard normals supplied by the caller.
pub fn sample_mvn_with(mu: &Vector3<f64>, sigma: &Matrix3<f64>, z: &Vector3<f64>) -> Result<Vector3<f64>> {
    let l = cholesky_lower(sigma)?;
    Ok(mu + l * z)
}

pub(crate) fn mvn_from_factor<R: Rng + ?Sized>(mu: &Vector3<f64>, l: &Matrix3<f64>, rng: &mut R) -> Vector3<f64> {
    let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    mu + l * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Independent oracle: Gaussian elimination with partial pivoting on the
    /// raw (unscaled) normal equations.
    fn normal_equations_oracle(history: &[(f64, f64)]) -> [f64; 3] {
        let mut m = [[0.0f64; 4]; 3];
        for &(a, r) in history {
            let x = [1.0, a, a * a];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += x[i] * x[j];
                }
                m[i][3] += x[i] * r;
            }
        }
        for col in 0..3 {
            let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
            m.swap(col, piv);
            for row in col + 1..3 {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
        let mut x = [0.0; 3];
        for i in (0..3).rev() {
            let s: f64 = (i + 1..3).map(|j| m[i][j] * x[j]).sum();
            x[i] = (m[i][3] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn exact_interpolation() {
        let f = |a: f64| 1.0 + 2.0 * a - 3.0 * a * a;
        let h: Vec<_> = [0.0, 0.5, 1.0].iter().map(|&a| (a, f(a))).collect();
        let q = least_squares_quadratic(&h).unwrap();
        assert_abs_diff_eq!(q.b0, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q.b1, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q.b2, -3.0, epsilon = 1e-9);
    }

    #[test]
    fn rank_deficiency() {
        assert!(matches!(
            least_squares_quadratic(&[(0.1, 1.0), (0.2, 2.0)]),
            Err(Error::RankDeficient { distinct: 2 })
        ));
        assert!(matches!(
            least_squares_quadratic(&[(0.1, 1.0), (0.1, 2.0), (0.2, 0.0), (0.2, 1.0)]),
            Err(Error::RankDeficient { distinct: 2 })
        ));
        assert!(matches!(
            least_squares_quadratic(&[(0.5, 1.0), (0.5 + 1e-9, 2.0), (0.5 + 2e-9, 0.0)]),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn noisy_fit_matches_oracle() {
        let mut rng = SimRng::seed_from_u64(4);
        let h: Vec<_> = (0..1000)
            .map(|_| {
                let a: f64 = rng.random();
                let e: f64 = rng.sample(StandardNormal);
                (a, 0.3 - (a - 0.4).powi(2) + 0.1 * e)
            })
            .collect();
        let q = least_squares_quadratic(&h).unwrap();
        let o = normal_equations_oracle(&h);
        assert_abs_diff_eq!(q.b0, o[0], epsilon = 1e-8);
        assert_abs_diff_eq!(q.b1, o[1], epsilon = 1e-8);
        assert_abs_diff_eq!(q.b2, o[2], epsilon = 1e-8);
    }

    #[test]
    fn argmax_examples() {
        let r = ActionRange::unit();
        assert_eq!(argmax_quadratic(1.0, -1.0, r), 0.5);
        assert_eq!(argmax_quadratic(0.0, 0.5, r), 1.0);
        assert_eq!(argmax_quadratic(0.025, -0.01, r), 1.0);
        assert_eq!(argmax_quadratic(0.0, 0.0, r), 0.0);
        assert_abs_diff_eq!(argmax_quadratic_unclamped(0.025, -0.01, r), 1.25, epsilon = 1e-12);
        assert_eq!(argmax_quadratic_unclamped(0.0, 0.5, r), 1.0);
    }

    #[test]
    fn fitted_surface_is_flat_at_interior_argmax() {
        let f = |a: f64| 0.7 + 1.3 * a - 2.1 * a * a;
        let h: Vec<_> = (0..20).map(|i| i as f64 / 19.0).map(|a| (a, f(a))).collect();
        let q = least_squares_quadratic(&h).unwrap();
        let a = argmax_quadratic(q.b1, q.b2, ActionRange::unit());
        assert!(a > 0.0 && a < 1.0);
        assert!((q.b1 + 2.0 * q.b2 * a).abs() < 1e-9);
    }

    #[test]
    fn mvn_with_zero_normals_returns_mean() {
        let mu = Vector3::new(0.0, 0.025, -0.01);
        let sigma = Matrix3::from_diagonal(&Vector3::new(0.5, 0.5, 0.2));
        assert_eq!(sample_mvn_with(&mu, &sigma, &Vector3::zeros()).unwrap(), mu);
        assert!(sample_mvn_with(&mu, &-sigma, &Vector3::zeros()).is_err());
    }

    #[test]
    fn mvn_moments() {
        let mu = Vector3::new(0.1, -0.2, 0.3);
        let sigma = Matrix3::new(0.5, 0.1, 0.0, 0.1, 0.4, -0.05, 0.0, -0.05, 0.2);
        let mut rng = SimRng::seed_from_u64(12);
        let n = 50_000;
        let draws: Vec<Vector3<f64>> = (0..n).map(|_| sample_mvn(&mu, &sigma, &mut rng).unwrap()).collect();
        let mean = draws.iter().fold(Vector3::zeros(), |a, d| a + d) / n as f64;
        for i in 0..3 {
            assert!((mean[i] - mu[i]).abs() < 5.0 * (sigma[(i, i)] / n as f64).sqrt());
        }
        let cov = draws
            .iter()
            .fold(Matrix3::zeros(), |a, d| a + (d - mean) * (d - mean).transpose())
            / (n - 1) as f64;
        assert!((cov - sigma).norm() / sigma.norm() < 0.05);
    }

    proptest! {
        #[test]
        fn argmax_beats_grid(b1 in -5.0f64..5.0, b2 in -5.0f64..5.0) {
            let r = ActionRange::unit();
            let a = argmax_quadratic(b1, b2, r);
            prop_assert!(r.contains(a));
            let g = |x: f64| b1 * x + b2 * x * x;
            let grid_best = (0..=10_000).map(|i| g(i as f64 * 1e-4)).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(g(a) >= grid_best - 1e-9);
        }
    }
}
