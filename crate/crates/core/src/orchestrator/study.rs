use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{emit_report, ReportFormat, ReportKind};
use super::session::{run_session_on, SessionConfig, SessionState};
use super::{reference_scores, ReferenceScores, ReferenceSpec, SessionError};
use crate::advisor::{AdvisorSpec, CapabilityProfile};
use crate::algorithms;
use crate::env::{evaluate_env, resolve_env, CaseScore, EnvironmentDescriptor};
use crate::potential::{
    characteristic_vectors, ideal_environment, normalize_scores, potential, PotentialReport, ScoreMatrix, Weighting,
};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub algorithms: Vec<String>,
    pub envs: Vec<String>,
    pub probes: Vec<String>,
    pub capabilities: Vec<CapabilityProfile>,
    pub advisor: AdvisorSpec,
    pub reference: ReferenceSpec,
    pub seed: u64,
    #[serde(default)]
    pub weighting: Weighting,
}

/// One (algorithm, environment, capability) session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub algorithm: String,
    pub env: String,
    pub capability: CapabilityProfile,
    pub initial_score: Option<f64>,
    pub final_score: Option<f64>,
    pub initial_cases: Vec<CaseScore>,
    pub final_cases: Vec<CaseScore>,
    pub evaluations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StudyCell {
    pub fn from_state(capability: CapabilityProfile, s: &SessionState) -> Self {
        Self {
            algorithm: s.algorithm.clone(),
            env: s.env.clone(),
            capability,
            initial_score: Some(s.initial_score),
            final_score: Some(s.current_score),
            initial_cases: s.initial_cases.clone(),
            final_cases: s.current_cases.clone(),
            evaluations: s.evaluations.total(),
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialEntry {
    pub algorithm: String,
    pub capability: CapabilityProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PotentialReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<StudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_matrix: Option<ScoreMatrix>,
    pub cells: Vec<StudyCell>,
    pub potentials: Vec<PotentialEntry>,
}

impl StudyResult {
    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = fs::read_to_string(path).map_err(|e| SessionError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| SessionError::io(path, e))
    }

    /// A single-cell result rebuilt from a session directory.
    pub fn from_session_dir(dir: &Path) -> Result<Self, SessionError> {
        let state = SessionState::load(dir)?;
        let path = dir.join("session.json");
        let text = fs::read_to_string(&path).map_err(|e| SessionError::io(&path, e))?;
        let session: serde_json::Value = serde_json::from_str(&text).map_err(|e| SessionError::io(&path, e))?;
        let capability: CapabilityProfile = serde_json::from_value(session["config"]["capability"].clone())
            .map_err(|e| SessionError::io(&path, e))?;
        Ok(Self {
            config: None,
            probe_matrix: None,
            cells: vec![StudyCell::from_state(capability, &state)],
            potentials: Vec::new(),
        })
    }
}

fn dir_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Probe matrix, one tuning session per (algorithm, capability,
/// environment) cell, and a potential report per (algorithm, capability).
/// A failing cell is recorded and leaves the other cells intact; reports
/// that need it carry the error instead.
///
/// With `out_dir`, sessions go to `sessions/<alg>/<env>/r<R>-b<B>/` and the
/// result plus every report kind in CSV and JSON next to them.
pub fn run_potential_study(cfg: &StudyConfig, out_dir: Option<&Path>) -> Result<StudyResult, SessionError> {
    if cfg.algorithms.is_empty() || cfg.envs.is_empty() || cfg.probes.is_empty() || cfg.capabilities.is_empty() {
        return Err(SessionError::Config(
            "a study needs algorithms, environments, probes and capabilities".into(),
        ));
    }
    let envs: Vec<EnvironmentDescriptor> = cfg
        .envs
        .iter()
        .map(|e| resolve_env(e, cfg.seed))
        .collect::<Result<_, _>>()?;
    let domain = envs[0].domain();
    if let Some(e) = envs.iter().find(|e| e.domain() != domain) {
        return Err(SessionError::Config(format!(
            "all study environments must share a domain; `{}` is {} but `{}` is {domain}",
            e.name,
            e.domain(),
            envs[0].name
        )));
    }
    let eval_seed = seeding::derive_named(cfg.seed, "eval");

    let probes: Vec<_> = cfg
        .probes
        .iter()
        .map(|p| algorithms::load(p))
        .collect::<Result<_, _>>()?;
    let rows: Vec<Vec<f64>> = probes
        .par_iter()
        .map(|p| {
            envs.par_iter()
                .map(|e| evaluate_env(p, e, eval_seed).map(|r| r.score))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let env_names: Vec<String> = envs.iter().map(|e| e.name.clone()).collect();
    let matrix = ScoreMatrix::new(cfg.probes.clone(), env_names.clone(), rows)
        .map_err(|e| SessionError::Config(e.to_string()))?;

    // One reference per environment, shared by every cell on it and only
    // needed when an advisor can propose patches. A failure stays local to
    // the cells on that environment.
    let needs_reference = cfg.advisor != AdvisorSpec::Null;
    let references: Vec<Option<Result<ReferenceScores, String>>> = envs
        .par_iter()
        .map(|e| {
            needs_reference.then(|| {
                reference_scores(&cfg.reference, e, eval_seed)
                    .map(|(r, _)| r)
                    .map_err(|err| err.to_string())
            })
        })
        .collect();

    let mut jobs = Vec::new();
    for alg in &cfg.algorithms {
        for cap in &cfg.capabilities {
            for (k, env) in envs.iter().enumerate() {
                jobs.push((alg.clone(), *cap, k, env));
            }
        }
    }
    let cells: Vec<StudyCell> = jobs
        .par_iter()
        .map(|(alg, cap, k, env)| {
            let mut session = SessionConfig::new(alg, &cfg.envs[*k], *cap, cfg.advisor.clone(), cfg.seed);
            session.reference = cfg.reference.clone();
            session.out_dir = out_dir.map(|d| {
                d.join("sessions")
                    .join(dir_name(alg))
                    .join(dir_name(&env.name))
                    .join(format!("r{}-b{}", cap.n_reflect, cap.n_bayes))
            });
            let outcome = match &references[*k] {
                None => run_session_on(&session, env, None),
                Some(Ok(r)) => run_session_on(&session, env, Some(r)),
                Some(Err(e)) => Err(SessionError::Config(format!("reference: {e}"))),
            };
            match outcome {
                Ok(s) => StudyCell::from_state(*cap, &s),
                Err(e) => StudyCell {
                    algorithm: alg.clone(),
                    env: env.name.clone(),
                    capability: *cap,
                    initial_score: None,
                    final_score: None,
                    initial_cases: Vec::new(),
                    final_cases: Vec::new(),
                    evaluations: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let vectors = characteristic_vectors(&env_names, &normalize_scores(&matrix));
    // Cells are ordered algorithm, capability, environment.
    let mut potentials = Vec::new();
    for group in cells.chunks(envs.len()) {
        let first = &group[0];
        let entry = match group.iter().find(|c| c.error.is_some()) {
            Some(bad) => PotentialEntry {
                algorithm: first.algorithm.clone(),
                capability: first.capability,
                report: None,
                error: Some(format!("{}: {}", bad.env, bad.error.as_deref().unwrap_or_default())),
            },
            None => {
                let original: Vec<f64> = group.iter().map(|c| c.initial_score.unwrap_or_default()).collect();
                let tuned: Vec<f64> = group.iter().map(|c| c.final_score.unwrap_or_default()).collect();
                let result = ideal_environment(&original, &matrix).and_then(|ideal| {
                    potential(&first.algorithm, &original, &tuned, &ideal, &vectors, cfg.weighting)
                });
                match result {
                    Ok(report) => PotentialEntry {
                        algorithm: first.algorithm.clone(),
                        capability: first.capability,
                        report: Some(report),
                        error: None,
                    },
                    Err(e) => PotentialEntry {
                        algorithm: first.algorithm.clone(),
                        capability: first.capability,
                        report: None,
                        error: Some(e.to_string()),
                    },
                }
            }
        };
        potentials.push(entry);
    }

    let result = StudyResult {
        config: Some(cfg.clone()),
        probe_matrix: Some(matrix),
        cells,
        potentials,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| SessionError::io(dir, e))?;
        let path = dir.join("study.json");
        let mut text = serde_json::to_string_pretty(&result).expect("serializable");
        text.push('\n');
        fs::write(&path, text).map_err(|e| SessionError::io(&path, e))?;
        for kind in ReportKind::ALL {
            for format in [ReportFormat::Csv, ReportFormat::Json] {
                emit_report(&result, kind, format, dir)?;
            }
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study(algs: &[&str], envs: &[&str], cap: CapabilityProfile) -> StudyConfig {
        StudyConfig {
            algorithms: algs.iter().map(|s| s.to_string()).collect(),
            envs: envs.iter().map(|s| s.to_string()).collect(),
            probes: vec!["bba".into(), "rate".into(), "bola".into()],
            capabilities: vec![cap],
            advisor: AdvisorSpec::Null,
            reference: ReferenceSpec::Default,
            seed: 2,
            weighting: Weighting::Similarity,
        }
    }

    #[test]
    fn null_advisor_without_budget_has_zero_potential() {
        let cfg = study(&["bba"], &["abr:oboe-synth"], CapabilityProfile::new(1, 0).unwrap());
        let r = run_potential_study(&cfg, None).unwrap();
        assert_eq!(r.cells.len(), 1);
        let p = r.potentials[0].report.as_ref().unwrap();
        assert_eq!(p.potential, 0.0);
        assert_eq!(p.ideal_env, "abr:oboe-synth");
    }

    #[test]
    fn failing_cells_stay_local() {
        let cfg = study(&["bba", "lqr"], &["abr:oboe-synth", "abr:3g-synth"], CapabilityProfile::new(1, 0).unwrap());
        let r = run_potential_study(&cfg, None).unwrap();
        assert_eq!(r.cells.len(), 4);
        assert!(r.cells.iter().filter(|c| c.algorithm == "bba").all(|c| c.error.is_none()));
        assert!(r.cells.iter().filter(|c| c.algorithm == "lqr").all(|c| c.error.is_some()));
        assert!(r.potentials.iter().find(|p| p.algorithm == "bba").unwrap().report.is_some());
        assert!(r.potentials.iter().find(|p| p.algorithm == "lqr").unwrap().error.is_some());
    }

    #[test]
    fn mixed_domains_are_rejected() {
        let cfg = study(&["bba"], &["abr:oboe-synth", "cartpole:default"], CapabilityProfile::new(1, 0).unwrap());
        assert!(run_potential_study(&cfg, None).is_err());
    }
}
