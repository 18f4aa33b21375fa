//! Scoring an algorithm on an environment: one case per trace, seed or
//! workload, averaged. Cases run in parallel and are collected in order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::abr::simulate_abr_recording;
use super::sched::simulate_sched_recording;
use super::{simulate_cartpole_detailed, EnvError, EnvPayload, EnvironmentDescriptor, FixedLevels, StepTriplet};
use crate::algorithms::Algorithm;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Keep per-step triplets.
    pub record: bool,
    /// Triplets kept per case when recording.
    pub triplets_per_case: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            record: false,
            triplets_per_case: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub case: String,
    pub score: f64,
    /// Why the case fell back to its sentinel score, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub triplets: Vec<StepTriplet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean case score; higher is better in every domain.
    pub score: f64,
    pub cases: Vec<CaseScore>,
}

impl EvalResult {
    pub fn triplets(&self) -> impl Iterator<Item = &StepTriplet> {
        self.cases.iter().flat_map(|c| c.triplets.iter())
    }
}

/// Scores `alg` on `env` without recording triplets. `seed` only affects
/// randomized simulator phenomena (scheduler move delays).
pub fn evaluate_env(alg: &Algorithm, env: &EnvironmentDescriptor, seed: u64) -> Result<EvalResult, EnvError> {
    evaluate_env_with(alg, env, seed, EvalOptions::default())
}

/// Scores: mean QoE over traces (abr), mean steps survived over seeds
/// (cartpole), negated mean job completion time over workloads (sched).
///
/// A failing ABR policy scores the QoE of constant-lowest playback minus
/// one; a failing CartPole policy scores 0; a failing scheduling decision
/// falls back to FIFO inside the simulator.
pub fn evaluate_env_with(
    alg: &Algorithm,
    env: &EnvironmentDescriptor,
    seed: u64,
    opts: EvalOptions,
) -> Result<EvalResult, EnvError> {
    if alg.domain() != env.domain() {
        return Err(EnvError::DomainMismatch {
            algorithm: alg.domain(),
            env: env.domain(),
        });
    }
    let keep = |mut t: Vec<StepTriplet>| {
        if opts.record {
            t.truncate(opts.triplets_per_case);
            t
        } else {
            Vec::new()
        }
    };
    let cases: Vec<CaseScore> = match &env.payload {
        EnvPayload::Abr { traces, manifest } => traces
            .par_iter()
            .map(|trace| {
                let mut policy = alg.abr_policy().expect("domain checked");
                let ep = simulate_abr_recording(policy.as_mut(), trace, manifest, opts.record);
                let score = match &ep.failure {
                    None => ep.qoe,
                    Some(_) => {
                        let lowest = vec![0; manifest.chunk_count];
                        simulate_abr_recording(&mut FixedLevels(lowest), trace, manifest, false).qoe - 1.0
                    }
                };
                CaseScore {
                    case: trace.name.clone(),
                    score,
                    failure: ep.failure,
                    triplets: keep(ep.triplets),
                }
            })
            .collect(),
        EnvPayload::Cartpole { seeds, max_steps } => seeds
            .par_iter()
            .map(|&s| {
                let mut policy = alg.cartpole_policy().expect("domain checked");
                let run = simulate_cartpole_detailed(policy.as_mut(), s, *max_steps, opts.record);
                CaseScore {
                    case: format!("seed-{s}"),
                    score: if run.failure.is_some() { 0.0 } else { run.steps as f64 },
                    failure: run.failure,
                    triplets: keep(run.triplets),
                }
            })
            .collect(),
        EnvPayload::Sched {
            workloads,
            n_executors,
            config,
        } => workloads
            .par_iter()
            .enumerate()
            .map(|(i, w)| {
                let mut policy = alg.sched_policy().expect("domain checked");
                let mut cfg = *config;
                cfg.seed = seeding::derive_seed(seeding::derive_seed(config.seed, seed), i as u64);
                let r = simulate_sched_recording(policy.as_mut(), w, *n_executors, &cfg, opts.record);
                CaseScore {
                    case: w.name.clone(),
                    score: -r.avg_jct,
                    failure: (r.fallbacks > 0).then(|| format!("{} decisions fell back to fifo", r.fallbacks)),
                    triplets: keep(r.triplets),
                }
            })
            .collect(),
    };
    let score = cases.iter().map(|c| c.score).sum::<f64>() / cases.len() as f64;
    Ok(EvalResult { score, cases })
}
