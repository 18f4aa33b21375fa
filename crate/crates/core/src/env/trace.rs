//! Bandwidth traces: text IO, piecewise-constant download integration and
//! the statistics-matched synthetic generator.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::seeding;

use super::EnvError;

/// Throughput samples; sample `i` holds from its timestamp until the next
/// one. The last sample holds for the preceding gap (1 s if alone) and the
/// whole trace then repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthTrace {
    pub name: String,
    /// (seconds, Mbit/s)
    pub points: Vec<(f64, f64)>,
}

/// Target statistics of a public trace corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceProfile {
    pub name: &'static str,
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

pub const PROFILES: [TraceProfile; 4] = [
    TraceProfile {
        name: "3g",
        mean: 1.52,
        std: 0.72,
        lo: 0.60,
        hi: 4.59,
    },
    TraceProfile {
        name: "oboe",
        mean: 2.77,
        std: 1.32,
        lo: 0.34,
        hi: 5.70,
    },
    TraceProfile {
        name: "fcc",
        mean: 1.33,
        std: 0.55,
        lo: 0.19,
        hi: 3.43,
    },
    TraceProfile {
        name: "puffer",
        mean: 1.60,
        std: 0.88,
        lo: 0.30,
        hi: 3.60,
    },
];

pub fn profile(name: &str) -> Option<TraceProfile> {
    PROFILES.iter().copied().find(|p| p.name == name)
}

impl BandwidthTrace {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Result<Self, EnvError> {
        let trace = Self {
            name: name.into(),
            points,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn constant(name: impl Into<String>, mbps: f64, duration: f64) -> Self {
        Self {
            name: name.into(),
            points: vec![(0.0, mbps), (duration, mbps)],
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.points.is_empty() {
            return Err(EnvError::Format {
                line: 0,
                message: format!("trace `{}` has no samples", self.name),
            });
        }
        for (i, &(t, bw)) in self.points.iter().enumerate() {
            if !t.is_finite() || !(bw.is_finite() && bw > 0.0) {
                return Err(EnvError::Format {
                    line: i + 1,
                    message: format!("sample {i} of `{}` must be finite with throughput > 0", self.name),
                });
            }
            if i > 0 && t <= self.points[i - 1].0 {
                return Err(EnvError::Format {
                    line: i + 1,
                    message: format!("timestamps of `{}` must strictly increase", self.name),
                });
            }
        }
        Ok(())
    }

    /// Parses `<seconds> <Mbit/s>` lines; `#` starts a comment.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, EnvError> {
        let name = name.into();
        let mut points: Vec<(f64, f64)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |message: String| EnvError::Format {
                line: line_no,
                message,
            };
            if fields.len() != 2 {
                return Err(bad(format!("expected `<seconds> <Mbit/s>`, got `{line}`")));
            }
            let t: f64 = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad timestamp `{}`", fields[0])))?;
            let bw: f64 = fields[1]
                .parse()
                .map_err(|_| bad(format!("bad throughput `{}`", fields[1])))?;
            if !t.is_finite() || !bw.is_finite() || bw <= 0.0 {
                return Err(bad("timestamp and throughput must be finite, throughput > 0".into()));
            }
            if let Some(&(prev, _)) = points.last() {
                if t <= prev {
                    return Err(bad(format!("timestamp {t} does not increase past {prev}")));
                }
            }
            points.push((t, bw));
        }
        Self::new(name, points)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (t, bw) in &self.points {
            let _ = writeln!(out, "{t} {bw}");
        }
        out
    }

    fn last_span(&self) -> f64 {
        match self.points.len() {
            0 | 1 => 1.0,
            n => self.points[n - 1].0 - self.points[n - 2].0,
        }
    }

    /// Length of one repetition of the trace.
    pub fn period(&self) -> f64 {
        self.points[self.points.len() - 1].0 - self.points[0].0 + self.last_span()
    }

    fn segment_end(&self, i: usize) -> f64 {
        if i + 1 < self.points.len() {
            self.points[i + 1].0
        } else {
            self.points[i].0 + self.last_span()
        }
    }

    /// Throughput in Mbit/s at elapsed time `t` (seconds since trace start).
    pub fn throughput_at(&self, t: f64) -> f64 {
        let (i, _) = self.locate(t);
        self.points[i].1
    }

    /// (segment index, offset into the current period) for elapsed time `t`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let origin = self.points[0].0;
        let period = self.period();
        let pos = origin + t.rem_euclid(period);
        let i = match self
            .points
            .binary_search_by(|(ts, _)| ts.partial_cmp(&pos).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        (i, pos)
    }

    /// Finish time of a transfer of `bytes` started at elapsed time `start`.
    pub fn download_finish(&self, start: f64, bytes: f64) -> f64 {
        if bytes <= 0.0 {
            return start;
        }
        let (mut i, mut pos) = self.locate(start);
        let mut now = start;
        let mut remaining = bytes;
        loop {
            let rate = self.points[i].1 * 1e6 / 8.0;
            let end = self.segment_end(i);
            let span = end - pos;
            let capacity = rate * span;
            if capacity >= remaining {
                return now + remaining / rate;
            }
            remaining -= capacity;
            now += span;
            i += 1;
            if i == self.points.len() {
                i = 0;
            }
            pos = self.points[i].0;
        }
    }

    pub fn mean_throughput(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum::<f64>() / self.points.len() as f64
    }
}

pub fn load_trace(path: &Path) -> Result<BandwidthTrace, EnvError> {
    let text = std::fs::read_to_string(path).map_err(|e| EnvError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    BandwidthTrace::parse(name, &text)
}

/// Loads every regular file of a directory as a trace, sorted by file name.
pub fn load_trace_dir(dir: &Path) -> Result<Vec<BandwidthTrace>, EnvError> {
    let io = |e: std::io::Error| EnvError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths.iter().map(|p| load_trace(p)).collect()
}

/// Mean time a synthetic trace stays at one throughput level.
pub const SYNTH_DWELL_SECONDS: f64 = 20.0;
/// Relative per-second jitter around the current level.
pub const SYNTH_JITTER: f64 = 0.1;

/// Piecewise-stationary traces with 1 s samples: the throughput holds a
/// level for an exponentially distributed time (mean 20 s, at least 1 s),
/// then jumps to a fresh level drawn from a normal around `mean`. Each
/// sample adds 10% multiplicative jitter. The level spread is reduced so
/// level and jitter together give roughly `std`; everything is clipped to
/// `[lo, hi]`.
pub fn generate_traces(
    seed: u64,
    count: usize,
    mean: f64,
    std: f64,
    lo: f64,
    hi: f64,
    duration: f64,
) -> Vec<BandwidthTrace> {
    let level_std = (std * std / (1.0 + SYNTH_JITTER * SYNTH_JITTER)).sqrt().max(1e-12);
    let steps = duration.max(1.0).ceil() as usize;
    (0..count)
        .map(|i| {
            let mut rng = seeding::rng(seeding::derive_seed(seed, i as u64));
            let level_dist = Normal::new(mean, level_std).expect("positive std");
            let jitter = Normal::new(0.0, SYNTH_JITTER).expect("positive std");
            let hold = Exp::new(1.0 / SYNTH_DWELL_SECONDS).expect("positive rate");
            let mut points = Vec::with_capacity(steps + 1);
            let mut level = 0.0;
            let mut until = 0.0;
            for s in 0..=steps {
                let t = s as f64;
                if t >= until {
                    level = level_dist.sample(&mut rng).clamp(lo, hi);
                    until = t + hold.sample(&mut rng).max(1.0);
                }
                let mut bw = (level * (1.0 + jitter.sample(&mut rng))).clamp(lo, hi);
                // Keep strictly positive even when lo is 0.
                if bw <= 0.0 {
                    bw = hi.clamp(f64::MIN_POSITIVE, 1e-3) + rng.random::<f64>() * 1e-6;
                }
                points.push((t, bw));
            }
            BandwidthTrace {
                name: format!("synth-{i}"),
                points,
            }
        })
        .collect()
}

pub fn generate_profile(profile: &TraceProfile, seed: u64, count: usize, duration: f64) -> Vec<BandwidthTrace> {
    generate_traces(
        seeding::derive_named(seed, profile.name),
        count,
        profile.mean,
        profile.std,
        profile.lo,
        profile.hi,
        duration,
    )
    .into_iter()
    .enumerate()
    .map(|(i, mut t)| {
        t.name = format!("{}-{i}", profile.name);
        t
    })
    .collect()
}
