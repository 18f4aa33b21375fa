//! Robust model-predictive bitrate control.
//!
//! Throughput is predicted as the harmonic mean of recent downloads,
//! discounted by the largest recent relative prediction error. Every level
//! sequence over the horizon is rolled out against that prediction and the
//! first level of the best sequence is played.

use crate::env::{AbrObservation, AbrPolicy, BUFFER_CAP, REBUFFER_PENALTY};

pub const MAX_HORIZON: usize = 5;
const ERROR_WINDOW: usize = 5;

#[derive(Debug, Clone)]
pub struct Mpc {
    horizon: usize,
    discount: f64,
    last_prediction: Option<f64>,
    errors: Vec<f64>,
}

impl Mpc {
    pub fn new(horizon: f64, discount: f64) -> Self {
        Self {
            horizon: (horizon.round() as usize).clamp(1, MAX_HORIZON),
            discount: discount.max(0.0),
            last_prediction: None,
            errors: Vec::new(),
        }
    }

    fn predict(&mut self, obs: &AbrObservation) -> f64 {
        if let (Some(pred), Some(&actual)) = (self.last_prediction, obs.throughputs.last()) {
            if actual > 0.0 {
                if self.errors.len() == ERROR_WINDOW {
                    self.errors.remove(0);
                }
                self.errors.push((pred - actual).abs() / actual);
            }
        }
        let samples = obs.throughputs;
        let harmonic = if samples.is_empty() {
            obs.speed
        } else {
            samples.len() as f64 / samples.iter().map(|t| 1.0 / t.max(1e-9)).sum::<f64>()
        };
        self.last_prediction = Some(harmonic);
        let max_error = self.errors.iter().copied().fold(0.0, f64::max);
        harmonic / (1.0 + self.discount * max_error)
    }
}

struct Rollout<'a> {
    obs: &'a AbrObservation<'a>,
    kbps: f64,
    best: f64,
    best_first: usize,
}

impl Rollout<'_> {
    fn search(&mut self, depth: usize, horizon: usize, buffer: f64, last: usize, value: f64, first: usize) {
        if depth == horizon {
            if value > self.best {
                self.best = value;
                self.best_first = first;
            }
            return;
        }
        let m = self.obs.manifest;
        let index = self.obs.chunk_index + depth;
        let q_last = m.bitrates[last] / 1000.0;
        for level in 0..m.levels() {
            let download = m.chunk_size(level, index) * 8.0 / 1000.0 / self.kbps;
            let rebuffer = (download - buffer).max(0.0);
            let next_buffer = ((buffer - download).max(0.0) + m.chunk_duration).min(BUFFER_CAP);
            let q = m.bitrates[level] / 1000.0;
            let v = value + q - REBUFFER_PENALTY * rebuffer - (q - q_last).abs();
            let first = if depth == 0 { level } else { first };
            self.search(depth + 1, horizon, next_buffer, level, v, first);
        }
    }
}

impl AbrPolicy for Mpc {
    fn choose(&mut self, obs: &AbrObservation) -> Result<f64, String> {
        let kbps = self.predict(obs).max(1e-6);
        let horizon = self.horizon.min(obs.chunks_remaining).max(1);
        let mut r = Rollout {
            obs,
            kbps,
            best: f64::NEG_INFINITY,
            best_first: 0,
        };
        r.search(0, horizon, obs.buffer, obs.last_level, 0.0, 0);
        Ok(r.best_first as f64)
    }
}
