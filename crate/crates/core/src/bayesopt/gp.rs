use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{BoError, Observation};

pub const LENGTH_SCALE: f64 = 0.2;
const JITTER: f64 = 1e-6;
const JITTER_RETRIES: usize = 3;
const VARIANCE_FLOOR: f64 = 1e-8;

/// Fitted Gaussian process with constant mean.
#[derive(Debug, Clone)]
pub struct Surrogate {
    points: Vec<Vec<f64>>,
    mean: f64,
    signal_var: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn kernel(a: &[f64], b: &[f64], signal_var: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    signal_var * (-sq / (2.0 * LENGTH_SCALE * LENGTH_SCALE)).exp()
}

/// Squared-exponential GP: length scale 0.2 per unit-cube dimension,
/// signal variance = population variance of the values (at least 1e-8),
/// constant mean = sample mean, diagonal jitter 1e-6 (raised tenfold up to
/// three times if the factorization fails).
pub fn gp_fit(observations: &[Observation]) -> Result<Surrogate, BoError> {
    if observations.is_empty() {
        return Err(BoError::NoData);
    }
    let n = observations.len();
    let values: Vec<f64> = observations.iter().map(|o| o.value).collect();
    let mean = values.iter().sum::<f64>() / n as f64;
    let signal_var = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).max(VARIANCE_FLOOR);
    let points: Vec<Vec<f64>> = observations.iter().map(|o| o.point.clone()).collect();
    let base = DMatrix::from_fn(n, n, |i, j| kernel(&points[i], &points[j], signal_var));
    let centered = DVector::from_iterator(n, values.iter().map(|v| v - mean));
    let mut jitter = JITTER;
    for _ in 0..=JITTER_RETRIES {
        let k = &base + DMatrix::identity(n, n) * jitter;
        if let Some(chol) = Cholesky::new(k) {
            let alpha = chol.solve(&centered);
            return Ok(Surrogate {
                points,
                mean,
                signal_var,
                chol,
                alpha,
            });
        }
        jitter *= 10.0;
    }
    Err(BoError::Singular)
}

impl Surrogate {
    /// Posterior (mean, variance) at a unit-cube point.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.points.len();
        let ks = DVector::from_iterator(n, self.points.iter().map(|p| kernel(p, x, self.signal_var)));
        let mean = self.mean + ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("triangular factor is invertible");
        let var = (self.signal_var - v.dot(&v)).max(0.0);
        (mean, var)
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_var
    }
}

pub fn gp_predict(surrogate: &Surrogate, x: &[f64]) -> (f64, f64) {
    surrogate.predict(x)
}

/// Expected improvement of a Gaussian posterior over `best` (maximizing).
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let gain = mean - best;
    if variance <= 0.0 {
        return gain.max(0.0);
    }
    let sd = variance.sqrt();
    let z = gain / sd;
    let normal = Normal::standard();
    (gain * normal.cdf(z) + sd * normal.pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn obs(point: &[f64], value: f64) -> Observation {
        Observation {
            point: point.to_vec(),
            value,
        }
    }

    #[test]
    fn interpolates_observations() {
        let data = vec![obs(&[0.1, 0.2], 1.0), obs(&[0.7, 0.4], -2.0), obs(&[0.5, 0.9], 3.5)];
        let gp = gp_fit(&data).unwrap();
        for o in &data {
            let (m, v) = gp.predict(&o.point);
            assert!((m - o.value).abs() < 1e-3, "{m} vs {}", o.value);
            assert!(v <= 1e-3);
        }
    }

    #[test]
    fn single_observation() {
        let gp = gp_fit(&[obs(&[0.3], 2.0)]).unwrap();
        assert!((gp.predict(&[0.3]).0 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn far_points_revert_to_prior() {
        let data = vec![obs(&[0.0, 0.0], 1.0), obs(&[0.05, 0.0], 2.0)];
        let gp = gp_fit(&data).unwrap();
        let (m, v) = gp.predict(&[1.0, 1.0]);
        assert!(v >= 0.5 * gp.signal_variance());
        assert!((m - 1.5).abs() < 1e-3);
    }

    #[test]
    fn duplicate_points_fit() {
        let data = vec![obs(&[0.4], 1.0), obs(&[0.4], 1.0), obs(&[0.4], 1.2)];
        assert!(gp_fit(&data).is_ok());
        assert_eq!(gp_fit(&[]).unwrap_err(), BoError::NoData);
    }

    #[test]
    fn ei_fixtures() {
        assert_eq!(expected_improvement(1.0, 0.0, 1.0), 0.0);
        assert!((expected_improvement(5.0, 1e-18, 1.0) - 4.0).abs() < 1e-9);
        assert!(expected_improvement(0.0, 2.0, 0.0) > expected_improvement(0.0, 1.0, 0.0));
        // At mean == best, EI = sd * pdf(0).
        let expect = (1.0f64 / (2.0 * std::f64::consts::PI)).sqrt();
        assert!((expected_improvement(3.0, 1.0, 3.0) - expect).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ei_is_non_negative_and_monotone_in_variance(
            mean in -100.0f64..100.0,
            best in -100.0f64..100.0,
            v1 in 0.0f64..50.0,
            dv in 0.0f64..50.0,
        ) {
            let a = expected_improvement(mean, v1, best);
            let b = expected_improvement(mean, v1 + dv, best);
            prop_assert!(a >= 0.0);
            prop_assert!(b + 1e-12 >= a);
        }
    }
}
