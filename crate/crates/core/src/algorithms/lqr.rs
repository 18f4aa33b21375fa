//! Discrete LQR gain for the CartPole linearized about the upright pose.

use nalgebra::{Matrix1, Matrix4, Matrix4x1};

use super::AlgError;
use crate::env::CartPoleState;

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const HALF_LENGTH: f64 = 0.5;
const TAU: f64 = 0.02;
const TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 10_000;

/// Euler-discretized linear model `x' = A x + B u` with state
/// `[x, x_dot, theta, theta_dot]` and force `u`.
pub fn linearized_cartpole() -> (Matrix4<f64>, Matrix4x1<f64>) {
    let total = CART_MASS + POLE_MASS;
    let denom = HALF_LENGTH * (4.0 / 3.0 - POLE_MASS / total);
    let pml = POLE_MASS * HALF_LENGTH;
    let theta_theta = GRAVITY / denom;
    let theta_u = -1.0 / (total * denom);
    let x_theta = -pml * GRAVITY / (total * denom);
    let x_u = 1.0 / total + pml / (total * total * denom);
    #[rustfmt::skip]
    let a = Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, x_theta, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, theta_theta, 0.0,
    );
    let b = Matrix4x1::new(0.0, x_u, 0.0, theta_u);
    (Matrix4::identity() + a * TAU, b * TAU)
}

/// State-feedback gain `K` (control `u = -K x`) from the discrete Riccati
/// recursion, iterated until no entry of `P` moves by more than 1e-9.
pub fn lqr_gain(q: &Matrix4<f64>, r: f64) -> Result<[f64; 4], AlgError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(AlgError::Lqr("R must be positive".into()));
    }
    if q.iter().any(|v| !v.is_finite()) || q.symmetric_eigenvalues().iter().any(|&e| e < -1e-12) {
        return Err(AlgError::Lqr("Q must be positive semidefinite".into()));
    }
    let (a, b) = linearized_cartpole();
    let rm = Matrix1::new(r);
    let mut p = *q;
    for _ in 0..MAX_ITERATIONS {
        let s = rm + b.transpose() * p * b;
        let gain = s[(0, 0)].recip() * (b.transpose() * p * a);
        let next = q + a.transpose() * p * a - a.transpose() * p * b * gain;
        let change = (next - p).abs().max();
        p = next;
        if change < TOLERANCE {
            let s = rm + b.transpose() * p * b;
            let k = s[(0, 0)].recip() * (b.transpose() * p * a);
            return Ok([k[(0, 0)], k[(0, 1)], k[(0, 2)], k[(0, 3)]]);
        }
        if !change.is_finite() {
            break;
        }
    }
    Err(AlgError::Lqr(format!(
        "Riccati recursion did not converge in {MAX_ITERATIONS} iterations"
    )))
}

/// Control force `-K x`.
pub fn lqr_force(k: &[f64; 4], s: &CartPoleState) -> f64 {
    -(k[0] * s.x + k[1] * s.x_dot + k[2] * s.theta + k[3] * s.theta_dot)
}
