//! Simulators and scorers for the three case-study domains: trace-driven
//! adaptive bitrate streaming, CartPole balancing and DAG job scheduling.

mod abr;
mod cartpole;
mod evaluate;
mod oracle;
mod sched;
mod trace;
mod video;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use abr::{qoe_lin, qoe_lin_kbps, simulate_abr, AbrEpisode, AbrObservation, AbrPolicy, FixedLevels, BUFFER_CAP, REBUFFER_PENALTY};
pub use cartpole::{
    cartpole_step, initial_state, simulate_cartpole, simulate_cartpole_detailed, CartPoleObservation, CartPolePolicy,
    CartPoleRun, CartPoleState, CARTPOLE_MAX_STEPS,
};
pub use evaluate::{evaluate_env, evaluate_env_with, CaseScore, EvalOptions, EvalResult};
pub use oracle::offline_optimal_abr;
pub use sched::{
    generate_sched_workload, load_workload, simulate_sched, SchedCandidate, SchedConfig, SchedJob, SchedPolicy,
    SchedResult, SchedStage, SchedWorkload,
};
pub use trace::{
    generate_profile, generate_traces, load_trace, load_trace_dir, profile, BandwidthTrace, TraceProfile, PROFILES,
    SYNTH_DWELL_SECONDS, SYNTH_JITTER,
};
pub use video::{load_manifest, VideoManifest};

use crate::seeding;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error("algorithm for {algorithm} cannot run on a {env} environment")]
    DomainMismatch { algorithm: Domain, env: Domain },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Abr,
    Cartpole,
    Sched,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Abr, Domain::Cartpole, Domain::Sched];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Abr => "abr",
            Domain::Cartpole => "cartpole",
            Domain::Sched => "sched",
        }
    }

    pub fn binding(self) -> crate::dsl::Binding {
        match self {
            Domain::Abr => crate::dsl::Binding::Abr,
            Domain::Cartpole => crate::dsl::Binding::Cartpole,
            Domain::Sched => crate::dsl::Binding::SchedPriority,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown domain `{s}`"))
    }
}

/// One state/action/outcome record of a simulated decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTriplet {
    pub state: String,
    pub action: String,
    pub outcome: String,
}

#[derive(Debug, Clone)]
pub enum EnvPayload {
    Abr {
        traces: Vec<BandwidthTrace>,
        manifest: VideoManifest,
    },
    Cartpole {
        seeds: Vec<u64>,
        max_steps: usize,
    },
    Sched {
        workloads: Vec<SchedWorkload>,
        n_executors: usize,
        config: SchedConfig,
    },
}

/// A named test environment: its domain plus the cases it averages over.
#[derive(Debug, Clone)]
pub struct EnvironmentDescriptor {
    pub name: String,
    pub payload: EnvPayload,
}

pub const SYNTH_TRACE_COUNT: usize = 20;
pub const SYNTH_TRACE_SECONDS: f64 = 400.0;
pub const CARTPOLE_EPISODES: usize = 20;
pub const SCHED_WORKLOADS: usize = 5;
pub const SCHED_JOBS: usize = 10;
pub const SCHED_EXECUTORS: usize = 8;
pub const SCHED_SCALE: f64 = 5.0;

impl EnvironmentDescriptor {
    pub fn new(name: impl Into<String>, payload: EnvPayload) -> Result<Self, EnvError> {
        let empty = match &payload {
            EnvPayload::Abr { traces, .. } => traces.is_empty(),
            EnvPayload::Cartpole { seeds, .. } => seeds.is_empty(),
            EnvPayload::Sched { workloads, .. } => workloads.is_empty(),
        };
        if empty {
            return Err(EnvError::Invalid {
                what: "environment",
                message: "payload has no cases".into(),
            });
        }
        Ok(Self {
            name: name.into(),
            payload,
        })
    }

    pub fn domain(&self) -> Domain {
        match self.payload {
            EnvPayload::Abr { .. } => Domain::Abr,
            EnvPayload::Cartpole { .. } => Domain::Cartpole,
            EnvPayload::Sched { .. } => Domain::Sched,
        }
    }

    pub fn case_count(&self) -> usize {
        match &self.payload {
            EnvPayload::Abr { traces, .. } => traces.len(),
            EnvPayload::Cartpole { seeds, .. } => seeds.len(),
            EnvPayload::Sched { workloads, .. } => workloads.len(),
        }
    }

    /// Case identifiers in evaluation order.
    pub fn case_ids(&self) -> Vec<String> {
        match &self.payload {
            EnvPayload::Abr { traces, .. } => traces.iter().map(|t| t.name.clone()).collect(),
            EnvPayload::Cartpole { seeds, .. } => seeds.iter().map(|s| format!("seed-{s}")).collect(),
            EnvPayload::Sched { workloads, .. } => workloads.iter().map(|w| w.name.clone()).collect(),
        }
    }

    /// Short prose used in advisor prompts.
    pub fn overview(&self) -> String {
        match &self.payload {
            EnvPayload::Abr { traces, manifest } => {
                let mean = traces.iter().map(BandwidthTrace::mean_throughput).sum::<f64>() / traces.len() as f64;
                format!(
                    "Adaptive bitrate streaming over {} bandwidth traces (mean throughput {:.2} Mbit/s). \
                     The video has {} chunks of {} s at bitrates {:?} kbit/s; the player buffer is capped at {} s.",
                    traces.len(),
                    mean,
                    manifest.chunk_count,
                    manifest.chunk_duration,
                    manifest.bitrates,
                    BUFFER_CAP
                )
            }
            EnvPayload::Cartpole { seeds, max_steps } => format!(
                "CartPole balancing over {} seeded episodes of at most {} steps; the controller output pushes the cart \
                 right when positive and left otherwise.",
                seeds.len(),
                max_steps
            ),
            EnvPayload::Sched {
                workloads,
                n_executors,
                config,
            } => format!(
                "DAG job scheduling of {} workloads on {} executors. The first wave of tasks in a stage runs {}x slower \
                 and moving an executor to another job costs a startup delay.",
                workloads.len(),
                n_executors,
                config.first_wave_factor
            ),
        }
    }
}

/// Names of the built-in environments.
pub fn builtin_env_names() -> Vec<String> {
    let mut names: Vec<String> = PROFILES.iter().map(|p| format!("abr:{}-synth", p.name)).collect();
    names.push("cartpole:default".into());
    names.push("sched:tpch-synth".into());
    names
}

/// Resolves an environment name. Built-in names are listed by
/// [`builtin_env_names`]; `abr:traces=<dir>` and `sched:workload=<file>`
/// load external data.
pub fn resolve_env(spec: &str, seed: u64) -> Result<EnvironmentDescriptor, EnvError> {
    let (domain, rest) = spec
        .split_once(':')
        .ok_or_else(|| EnvError::UnknownEnvironment(spec.to_string()))?;
    match domain {
        "abr" => {
            let traces = if let Some(dir) = rest.strip_prefix("traces=") {
                load_trace_dir(Path::new(dir))?
            } else if let Some(p) = rest.strip_suffix("-synth").and_then(profile) {
                generate_profile(
                    &p,
                    seeding::derive_named(seed, "abr-traces"),
                    SYNTH_TRACE_COUNT,
                    SYNTH_TRACE_SECONDS,
                )
            } else {
                return Err(EnvError::UnknownEnvironment(spec.to_string()));
            };
            EnvironmentDescriptor::new(
                spec,
                EnvPayload::Abr {
                    traces,
                    manifest: VideoManifest::default(),
                },
            )
        }
        "cartpole" if rest == "default" => {
            let base = seeding::derive_named(seed, "cartpole");
            EnvironmentDescriptor::new(
                spec,
                EnvPayload::Cartpole {
                    seeds: (0..CARTPOLE_EPISODES as u64).map(|i| seeding::derive_seed(base, i)).collect(),
                    max_steps: CARTPOLE_MAX_STEPS,
                },
            )
        }
        "sched" => {
            let workloads = if let Some(file) = rest.strip_prefix("workload=") {
                vec![load_workload(Path::new(file))?]
            } else if rest == "tpch-synth" {
                let base = seeding::derive_named(seed, "sched-workloads");
                (0..SCHED_WORKLOADS as u64)
                    .map(|i| {
                        let mut w = generate_sched_workload(seeding::derive_seed(base, i), SCHED_JOBS, SCHED_SCALE);
                        w.name = format!("tpch-synth-{i}");
                        w
                    })
                    .collect()
            } else {
                return Err(EnvError::UnknownEnvironment(spec.to_string()));
            };
            EnvironmentDescriptor::new(
                spec,
                EnvPayload::Sched {
                    workloads,
                    n_executors: SCHED_EXECUTORS,
                    config: SchedConfig {
                        seed: seeding::derive_named(seed, "sched-delays"),
                        ..SchedConfig::default()
                    },
                },
            )
        }
        _ => Err(EnvError::UnknownEnvironment(spec.to_string())),
    }
}
