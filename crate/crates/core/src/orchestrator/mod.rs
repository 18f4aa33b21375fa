//! The tuning loop and everything around it: reference scores, bad-case
//! comparison, sessions persisted to a directory, potential studies over
//! many cells, reports and the config file.

mod config;
mod report;
mod session;
mod study;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{AdvisorSection, Budgets, EnvSection, FileConfig, StudySection};
pub use report::{cdf_points, emit_report, render_report, ReportFormat, ReportKind};
pub use session::{run_session, run_session_on, SessionConfig, SessionState};
pub use study::{run_potential_study, PotentialEntry, StudyCell, StudyConfig, StudyResult};

use crate::advisor::{select_bad_cases, AdvisorError, BadCase};
use crate::algorithms::{self, AlgError, Algorithm};
use crate::bayesopt::BoError;
use crate::env::{
    evaluate_env, evaluate_env_with, offline_optimal_abr, CaseScore, Domain, EnvError, EnvPayload,
    EnvironmentDescriptor, EvalOptions, EvalResult, CARTPOLE_MAX_STEPS,
};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Alg(#[from] AlgError),
    #[error(transparent)]
    Advisor(#[from] AdvisorError),
    #[error(transparent)]
    Bo(#[from] BoError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl SessionError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// Environment evaluations spent by a session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounter {
    /// Scoring the incumbent or a candidate (initial, BO, patched program).
    pub objective: usize,
    /// Recorded re-runs of the incumbent for bad-case collection.
    pub comparison: usize,
    /// Runs needed to build the reference scores (once per session).
    pub reference: usize,
}

impl EvalCounter {
    pub fn total(&self) -> usize {
        self.objective + self.comparison + self.reference
    }
}

/// What the current algorithm is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReferenceSpec {
    /// Per-domain choice: offline optimum for abr, 500 for cartpole, best
    /// bundled scheduler for sched.
    Default,
    OfflineOptimal,
    BestOfBuiltins,
    Constant { score: f64 },
}

impl ReferenceSpec {
    pub fn parse(text: &str) -> Result<Self, SessionError> {
        match text {
            "default" => Ok(Self::Default),
            "offline-optimal" => Ok(Self::OfflineOptimal),
            "best-of-builtins" => Ok(Self::BestOfBuiltins),
            _ => text
                .strip_prefix("constant:")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .map(|score| Self::Constant { score })
                .ok_or_else(|| {
                    SessionError::Config(format!(
                        "unknown reference `{text}` (expected default, offline-optimal, best-of-builtins or constant:<score>)"
                    ))
                }),
        }
    }

    pub fn resolve(&self, domain: Domain) -> Result<Self, SessionError> {
        let r = match self {
            Self::Default => match domain {
                Domain::Abr => Self::OfflineOptimal,
                Domain::Cartpole => Self::Constant {
                    score: CARTPOLE_MAX_STEPS as f64,
                },
                Domain::Sched => Self::BestOfBuiltins,
            },
            other => other.clone(),
        };
        if r == Self::OfflineOptimal && domain != Domain::Abr {
            return Err(SessionError::Config(format!("no offline-optimal reference for {domain}")));
        }
        Ok(r)
    }

    pub fn label(&self) -> String {
        match self {
            Self::Default => "default".into(),
            Self::OfflineOptimal => "offline-optimal".into(),
            Self::BestOfBuiltins => "best-of-builtins".into(),
            Self::Constant { score } => format!("constant:{score}"),
        }
    }
}

/// Per-case reference scores for one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScores {
    pub name: String,
    pub cases: Vec<CaseScore>,
}

impl ReferenceScores {
    pub fn from_eval(name: impl Into<String>, eval: &EvalResult) -> Self {
        Self {
            name: name.into(),
            cases: strip(&eval.cases),
        }
    }
}

pub(crate) fn strip(cases: &[CaseScore]) -> Vec<CaseScore> {
    cases
        .iter()
        .map(|c| CaseScore {
            triplets: Vec::new(),
            ..c.clone()
        })
        .collect()
}

/// Computes the reference for `env`. Returns the scores and the number of
/// environment evaluations spent.
pub fn reference_scores(
    spec: &ReferenceSpec,
    env: &EnvironmentDescriptor,
    seed: u64,
) -> Result<(ReferenceScores, usize), SessionError> {
    let spec = spec.resolve(env.domain())?;
    let ids = env.case_ids();
    match &spec {
        ReferenceSpec::Constant { score } => Ok((
            ReferenceScores {
                name: spec.label(),
                cases: ids
                    .into_iter()
                    .map(|case| CaseScore {
                        case,
                        score: *score,
                        failure: None,
                        triplets: Vec::new(),
                    })
                    .collect(),
            },
            0,
        )),
        ReferenceSpec::OfflineOptimal => {
            let EnvPayload::Abr { traces, manifest } = &env.payload else {
                unreachable!("resolve checks the domain")
            };
            let cases = traces
                .par_iter()
                .map(|t| CaseScore {
                    case: t.name.clone(),
                    score: offline_optimal_abr(t, manifest).qoe,
                    failure: None,
                    triplets: Vec::new(),
                })
                .collect();
            Ok((
                ReferenceScores {
                    name: spec.label(),
                    cases,
                },
                1,
            ))
        }
        ReferenceSpec::BestOfBuiltins => {
            let names = algorithms::list(Some(env.domain()));
            let mut best: Vec<CaseScore> = Vec::new();
            for name in &names {
                let eval = evaluate_env(&algorithms::load(name)?, env, seed)?;
                if best.is_empty() {
                    best = strip(&eval.cases);
                    continue;
                }
                for (b, c) in best.iter_mut().zip(&eval.cases) {
                    if c.score > b.score {
                        b.score = c.score;
                        b.failure = None;
                    }
                }
            }
            Ok((
                ReferenceScores {
                    name: spec.label(),
                    cases: best,
                },
                names.len(),
            ))
        }
        ReferenceSpec::Default => unreachable!("resolved above"),
    }
}

const EXCERPT_STEPS: usize = 6;

/// Cases where `reference` beats `current` by more than 5% of the
/// reference score, largest gap first, at most five. Runs `current` once
/// with step recording to fill the state excerpts.
pub fn compare_algs(
    current: &Algorithm,
    reference: &ReferenceScores,
    env: &EnvironmentDescriptor,
    seed: u64,
) -> Result<Vec<BadCase>, SessionError> {
    let opts = EvalOptions {
        record: true,
        triplets_per_case: EXCERPT_STEPS,
    };
    let eval = evaluate_env_with(current, env, seed, opts)?;
    let mut found = Vec::new();
    for (c, r) in eval.cases.iter().zip(&reference.cases) {
        debug_assert_eq!(c.case, r.case);
        let excerpt = c
            .triplets
            .iter()
            .map(|t| format!("{} -> {} -> {}", t.state, t.action, t.outcome))
            .collect::<Vec<_>>()
            .join("\n");
        found.push(BadCase {
            env: env.name.clone(),
            case: c.case.clone(),
            current_score: c.score,
            reference_score: r.score,
            gap: r.score - c.score,
            state_excerpt: excerpt,
        });
    }
    Ok(select_bad_cases(found))
}

/// `compare_algs` against another algorithm on the same environment.
pub fn compare_with_algorithm(
    current: &Algorithm,
    reference: &Algorithm,
    env: &EnvironmentDescriptor,
    seed: u64,
) -> Result<Vec<BadCase>, SessionError> {
    let r = ReferenceScores::from_eval("algorithm", &evaluate_env(reference, env, seed)?);
    compare_algs(current, &r, env, seed)
}
