//! CartPole with the classic Gym v1 dynamics and termination rules.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StepTriplet;
use crate::seeding;

pub const CARTPOLE_MAX_STEPS: usize = 500;

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * HALF_LENGTH;
const FORCE: f64 = 10.0;
pub(crate) const TAU: f64 = 0.02;
const X_LIMIT: f64 = 2.4;
const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const INTEGRAL_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn failed(&self) -> bool {
        self.x.abs() > X_LIMIT || self.theta.abs() > THETA_LIMIT
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

/// Euler step; `push_right` applies +10 N, otherwise -10 N.
pub fn cartpole_step(s: &CartPoleState, push_right: bool) -> CartPoleState {
    let force = if push_right { FORCE } else { -FORCE };
    let (sin, cos) = s.theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * s.theta_dot * s.theta_dot * sin) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
    CartPoleState {
        x: s.x + TAU * s.x_dot,
        x_dot: s.x_dot + TAU * x_acc,
        theta: s.theta + TAU * s.theta_dot,
        theta_dot: s.theta_dot + TAU * theta_acc,
    }
}

/// Initial state drawn uniformly from [-0.05, 0.05]^4.
pub fn initial_state(seed: u64) -> CartPoleState {
    let mut rng = seeding::rng(seed);
    let mut draw = || rng.random_range(-0.05..=0.05);
    CartPoleState {
        x: draw(),
        x_dot: draw(),
        theta: draw(),
        theta_dot: draw(),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CartPoleObservation {
    pub state: CartPoleState,
    /// Running integral of theta, clamped to [-10, 10].
    pub theta_int: f64,
    pub step: usize,
}

/// Positive output pushes the cart right.
pub trait CartPolePolicy {
    fn act(&mut self, obs: &CartPoleObservation) -> Result<f64, String>;
}

impl<F: FnMut(&CartPoleObservation) -> Result<f64, String>> CartPolePolicy for F {
    fn act(&mut self, obs: &CartPoleObservation) -> Result<f64, String> {
        self(obs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleRun {
    pub steps: usize,
    pub failure: Option<String>,
    pub triplets: Vec<StepTriplet>,
}

/// Steps survived (the Gym episode return), capped at `max_steps`.
pub fn simulate_cartpole(policy: &mut dyn CartPolePolicy, seed: u64, max_steps: usize) -> usize {
    simulate_cartpole_detailed(policy, seed, max_steps, false).steps
}

/// Like [`simulate_cartpole`], reporting policy failures and, when
/// `record` is set, one triplet per step.
pub fn simulate_cartpole_detailed(
    policy: &mut dyn CartPolePolicy,
    seed: u64,
    max_steps: usize,
    record: bool,
) -> CartPoleRun {
    let mut state = initial_state(seed);
    let mut theta_int = 0.0;
    let mut triplets = Vec::new();
    for step in 0..max_steps {
        let obs = CartPoleObservation {
            state,
            theta_int,
            step,
        };
        let out = match policy.act(&obs) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                return CartPoleRun {
                    steps: step,
                    failure: Some(format!("step {step}: policy returned {v}")),
                    triplets,
                }
            }
            Err(e) => {
                return CartPoleRun {
                    steps: step,
                    failure: Some(format!("step {step}: {e}")),
                    triplets,
                }
            }
        };
        let next = cartpole_step(&state, out > 0.0);
        if record {
            triplets.push(StepTriplet {
                state: format!(
                    "seed={seed} step={step} x={:.4} x_dot={:.4} theta={:.4} theta_dot={:.4}",
                    state.x, state.x_dot, state.theta, state.theta_dot
                ),
                action: format!("output={out:.4} push={}", if out > 0.0 { "right" } else { "left" }),
                outcome: format!(
                    "theta={:.4} {}",
                    next.theta,
                    if next.failed() { "failed" } else { "upright" }
                ),
            });
        }
        state = next;
        theta_int = (theta_int + state.theta * TAU).clamp(-INTEGRAL_LIMIT, INTEGRAL_LIMIT);
        if state.failed() {
            return CartPoleRun {
                steps: step + 1,
                failure: None,
                triplets,
            };
        }
    }
    CartPoleRun {
        steps: max_steps,
        failure: None,
        triplets,
    }
}
