//! Budgeted, seeded Bayesian optimization over a box of real parameters.
//!
//! A Gaussian process with fixed squared-exponential kernel models the
//! objective on the unit cube; the next point maximizes expected
//! improvement over a seeded batch of uniform candidates. Higher objective
//! values are better.

mod gp;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use gp::{expected_improvement, gp_fit, gp_predict, Surrogate, LENGTH_SCALE};

use crate::dsl::ParamDecl;
use crate::seeding;

pub const INITIAL_POINTS: usize = 5;
pub const CANDIDATES: usize = 1000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BoError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("covariance matrix is singular even with added jitter")]
    Singular,
    #[error("no observations to fit")]
    NoData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub default: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dim>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self, BoError> {
        for (i, d) in dims.iter().enumerate() {
            if !(d.lo.is_finite() && d.hi.is_finite() && d.lo < d.hi) {
                return Err(BoError::Space(format!("`{}` needs finite bounds with lo < hi", d.name)));
            }
            if !(d.default >= d.lo && d.default <= d.hi) {
                return Err(BoError::Space(format!("default of `{}` lies outside its bounds", d.name)));
            }
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(BoError::Space(format!("duplicate dimension `{}`", d.name)));
            }
        }
        Ok(Self { dims })
    }

    /// Tunable dimensions of a parameter manifest; parameters pinned by
    /// `lo == hi` are left out.
    pub fn from_manifest(params: &[ParamDecl]) -> Result<Self, BoError> {
        Self::new(
            params
                .iter()
                .filter(|p| p.lo < p.hi)
                .map(|p| Dim {
                    name: p.name.clone(),
                    lo: p.lo,
                    hi: p.hi,
                    default: p.default,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn to_params(&self, unit: &[f64]) -> BTreeMap<String, f64> {
        self.dims
            .iter()
            .zip(unit)
            .map(|(d, &u)| (d.name.clone(), (d.lo + u.clamp(0.0, 1.0) * (d.hi - d.lo)).clamp(d.lo, d.hi)))
            .collect()
    }

    pub fn defaults(&self) -> BTreeMap<String, f64> {
        self.dims.iter().map(|d| (d.name.clone(), d.default)).collect()
    }

    pub fn default_unit(&self) -> Vec<f64> {
        self.dims
            .iter()
            .map(|d| (d.default - d.lo) / (d.hi - d.lo))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Unit-cube coordinates.
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoResult {
    pub best_point: BTreeMap<String, f64>,
    /// `None` when the budget was 0 and nothing was evaluated.
    pub best_value: Option<f64>,
    pub history: Vec<Observation>,
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = f64::from(base);
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b;
        r += f * (i % u64::from(base)) as f64;
        i /= u64::from(base);
    }
    r
}

/// Randomly shifted Halton point `index` (from 1).
fn halton(index: u64, dims: usize, shift: &[f64]) -> Vec<f64> {
    (0..dims)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()] + 2 * (d / PRIMES.len()) as u32 * 59;
            (radical_inverse(index, base) + shift[d]).fract()
        })
        .collect()
}

/// Maximizes `objective` with exactly `budget` calls.
///
/// The first call evaluates the declared defaults, the next ones (up to
/// five in total) shifted Halton points, the rest expected-improvement
/// maximizers. A non-finite objective value is recorded as the worst value
/// seen so far. With budget 0 the objective is never called and the
/// defaults are returned.
pub fn optimize(
    objective: &mut dyn FnMut(&BTreeMap<String, f64>) -> f64,
    space: &SearchSpace,
    budget: usize,
    seed: u64,
) -> Result<BoResult, BoError> {
    if budget == 0 {
        return Ok(BoResult {
            best_point: space.defaults(),
            best_value: None,
            history: Vec::new(),
        });
    }
    if space.is_empty() {
        return Err(BoError::Space("nothing to tune".into()));
    }
    let d = space.len();
    let mut shift_rng = seeding::rng(seeding::derive_named(seed, "halton"));
    let shift: Vec<f64> = (0..d).map(|_| shift_rng.random::<f64>()).collect();
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(budget);
    let mut raw: Vec<f64> = Vec::with_capacity(budget);

    for k in 0..budget {
        let point = if k == 0 {
            space.default_unit()
        } else if k < INITIAL_POINTS {
            halton(k as u64, d, &shift)
        } else {
            let observed = backfill(&points, &raw);
            let surrogate = gp_fit(&observed)?;
            let best = observed.iter().map(|o| o.value).fold(f64::NEG_INFINITY, f64::max);
            let mut rng = seeding::rng(seeding::derive_seed(seed, k as u64));
            let mut chosen = Vec::new();
            let mut chosen_ei = f64::NEG_INFINITY;
            for _ in 0..CANDIDATES {
                let c: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let (mean, var) = surrogate.predict(&c);
                let ei = expected_improvement(mean, var, best);
                if ei > chosen_ei {
                    chosen_ei = ei;
                    chosen = c;
                }
            }
            chosen
        };
        let value = objective(&space.to_params(&point));
        points.push(point);
        raw.push(value);
    }

    let history = backfill(&points, &raw);
    let mut best = 0;
    for (i, o) in history.iter().enumerate() {
        if o.value > history[best].value {
            best = i;
        }
    }
    Ok(BoResult {
        best_point: space.to_params(&history[best].point),
        best_value: Some(history[best].value),
        history,
    })
}

/// Replaces non-finite values by the worst finite value seen so far, or by
/// the worst finite value overall when none came before.
fn backfill(points: &[Vec<f64>], raw: &[f64]) -> Vec<Observation> {
    let overall_worst = raw
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let fallback = if overall_worst.is_finite() { overall_worst } else { 0.0 };
    let mut worst = f64::INFINITY;
    points
        .iter()
        .zip(raw)
        .map(|(p, &v)| {
            let value = if v.is_finite() {
                worst = worst.min(v);
                v
            } else if worst.is_finite() {
                worst
            } else {
                fallback
            };
            Observation {
                point: p.clone(),
                value,
            }
        })
        .collect()
}
