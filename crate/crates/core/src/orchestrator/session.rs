use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{compare_algs, reference_scores, strip, EvalCounter, ReferenceScores, ReferenceSpec, SessionError};
use crate::advisor::{build_prompt, AdvisorSpec, BadCase, CapabilityProfile, HistoryTriplet, NoPatch, PromptBundle};
use crate::algorithms::{self, Algorithm};
use crate::bayesopt::{optimize, SearchSpace};
use crate::dsl::GRAMMAR;
use crate::env::{evaluate_env, resolve_env, CaseScore, Domain, EnvironmentDescriptor, EvalResult};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Registry name of the starting algorithm.
    pub algorithm: String,
    /// Environment spec, as accepted by `resolve_env`.
    pub env: String,
    pub reference: ReferenceSpec,
    pub capability: CapabilityProfile,
    pub advisor: AdvisorSpec,
    pub seed: u64,
    /// Where to persist the session; nothing is written when `None`.
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

impl SessionConfig {
    pub fn new(algorithm: &str, env: &str, capability: CapabilityProfile, advisor: AdvisorSpec, seed: u64) -> Self {
        Self {
            algorithm: algorithm.into(),
            env: env.into(),
            reference: ReferenceSpec::Default,
            capability,
            advisor,
            seed,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub algorithm: String,
    pub env: String,
    /// Canonical text of the incumbent (`native:<id> k=v ...` for native
    /// algorithms).
    pub current_source: String,
    pub current_score: f64,
    pub initial_score: f64,
    pub initial_cases: Vec<CaseScore>,
    pub current_cases: Vec<CaseScore>,
    pub history: Vec<HistoryTriplet>,
    /// Every bad case seen so far, newest entry per (env, case).
    pub bad_cases: Vec<BadCase>,
    /// Initial score, then the incumbent score after every acceptance.
    pub accepted_scores: Vec<f64>,
    pub completed_iterations: usize,
    pub advisor_calls: usize,
    pub evaluations: EvalCounter,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceScores>,
}

impl SessionState {
    pub fn load(dir: &Path) -> Result<Self, SessionError> {
        let path = dir.join("state.json");
        let text = fs::read_to_string(&path).map_err(|e| SessionError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| SessionError::io(&path, e))
    }

    pub fn current_algorithm(&self, domain: Domain) -> Result<Algorithm, SessionError> {
        restore_algorithm(&self.current_source, domain)
    }
}

/// Inverse of `Algorithm::describe`.
fn restore_algorithm(text: &str, domain: Domain) -> Result<Algorithm, SessionError> {
    let Some(native) = text.trim_end().strip_prefix("native:") else {
        return Ok(Algorithm::from_source(text, domain)?);
    };
    let mut parts = native.split_whitespace();
    let id = parts.next().unwrap_or_default();
    let mut params = BTreeMap::new();
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .and_then(|(k, v)| Some((k, v.parse::<f64>().ok()?)))
            .ok_or_else(|| SessionError::Config(format!("bad native parameter `{kv}`")))?;
        params.insert(k.to_string(), v);
    }
    let alg = algorithms::load(id)?;
    alg.set_params(&params)
        .map_err(|e| SessionError::Config(format!("native parameters: {e}")))
}

struct Persist {
    dir: Option<PathBuf>,
}

impl Persist {
    fn write(&self, rel: &str, contents: &str) -> Result<(), SessionError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| SessionError::io(parent, e))?;
        }
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, contents).map_err(|e| SessionError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| SessionError::io(&path, e))
    }

    fn json(&self, rel: &str, value: &impl Serialize) -> Result<(), SessionError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(rel, &text)
    }

    fn log(&self, event: Value) -> Result<(), SessionError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join("log.jsonl");
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| SessionError::io(&path, e))?;
        writeln!(f, "{event}").map_err(|e| SessionError::io(&path, e))
    }

    fn state(&self, state: &SessionState) -> Result<(), SessionError> {
        self.json("state.json", state)?;
        self.write("best.ctl", &state.current_source)
    }
}

/// Resolves the environment from the config and runs the session.
pub fn run_session(cfg: &SessionConfig) -> Result<SessionState, SessionError> {
    let env = resolve_env(&cfg.env, cfg.seed)?;
    run_session_on(cfg, &env, None)
}

/// Tuning loop on an already resolved environment: initial score, BO on the
/// parameters, then `n_reflect` rounds of bad-case collection, advisor
/// patch, BO on the patched program and strict-improvement acceptance.
///
/// A precomputed `reference` skips the reference computation. When the
/// output directory already holds this session's state, the run resumes
/// after the last completed iteration.
pub fn run_session_on(
    cfg: &SessionConfig,
    env: &EnvironmentDescriptor,
    reference: Option<&ReferenceScores>,
) -> Result<SessionState, SessionError> {
    let domain = env.domain();
    let start = algorithms::load(&cfg.algorithm)?;
    if start.domain() != domain {
        return Err(SessionError::Config(format!(
            "`{}` is a {} algorithm but `{}` is a {domain} environment",
            cfg.algorithm,
            start.domain(),
            env.name
        )));
    }
    let reference_spec = cfg.reference.resolve(domain)?;
    let mut advisor = cfg.advisor.build()?;
    let eval_seed = seeding::derive_named(cfg.seed, "eval");
    let bo_seed = seeding::derive_named(cfg.seed, "bo");
    let n_bayes = cfg.capability.n_bayes;
    let io = Persist {
        dir: cfg.out_dir.clone(),
    };

    let resumed = match &cfg.out_dir {
        Some(dir) if dir.join("state.json").exists() => {
            let path = dir.join("session.json");
            let text = fs::read_to_string(&path).map_err(|e| SessionError::io(&path, e))?;
            let stored: Value = serde_json::from_str(&text).map_err(|e| SessionError::io(&path, e))?;
            if stored["config"] != serde_json::to_value(cfg).expect("serializable") {
                return Err(SessionError::Config(format!(
                    "{} holds a session with a different configuration",
                    dir.display()
                )));
            }
            Some(SessionState::load(dir)?)
        }
        _ => None,
    };

    let mut state = match resumed {
        Some(s) => {
            advisor.skip(s.advisor_calls);
            io.log(json!({"event": "resume", "completed_iterations": s.completed_iterations}))?;
            s
        }
        None => {
            io.json(
                "session.json",
                &json!({
                    "config": cfg,
                    "env_name": env.name,
                    "cases": env.case_ids(),
                    "seeds": {"master": cfg.seed, "eval": eval_seed, "bo": bo_seed},
                    "reference": reference_spec.label(),
                    "advisor": advisor.name(),
                }),
            )?;
            let mut counter = EvalCounter::default();
            let initial = evaluate_env(&start, env, eval_seed)?;
            counter.objective += 1;
            io.log(json!({"event": "initial", "score": initial.score}))?;
            let (tuned, tuned_eval, bo) = tune(&start, &initial, env, eval_seed, n_bayes, bo_seed, &mut counter)?;
            io.log(json!({"event": "bo", "iteration": 0, "detail": bo}))?;
            let mut accepted_scores = vec![initial.score];
            let (current, current_eval) = if tuned_eval.score > initial.score {
                accepted_scores.push(tuned_eval.score);
                io.log(json!({"event": "accept", "iteration": 0, "score": tuned_eval.score}))?;
                (tuned, tuned_eval)
            } else {
                (start.clone(), initial.clone())
            };
            let s = SessionState {
                algorithm: cfg.algorithm.clone(),
                env: env.name.clone(),
                current_source: current.describe(),
                current_score: current_eval.score,
                initial_score: initial.score,
                initial_cases: strip(&initial.cases),
                current_cases: strip(&current_eval.cases),
                history: Vec::new(),
                bad_cases: Vec::new(),
                accepted_scores,
                completed_iterations: 0,
                advisor_calls: 0,
                evaluations: counter,
                reference: None,
            };
            io.state(&s)?;
            s
        }
    };

    let mut current = state.current_algorithm(domain)?;
    let n_reflect = cfg.capability.n_reflect;
    if state.completed_iterations < n_reflect && !advisor.available() {
        io.log(json!({"event": "advisor_unavailable", "advisor": advisor.name()}))?;
        state.completed_iterations = n_reflect;
    }

    for j in state.completed_iterations + 1..=n_reflect {
        let iter_dir = format!("iter-{j}");
        let Some(program) = current.program().cloned() else {
            io.log(json!({"event": "skip", "iteration": j, "reason": "native algorithm has no program text"}))?;
            state.completed_iterations = j;
            io.state(&state)?;
            continue;
        };

        if state.reference.is_none() {
            let r = match reference {
                Some(r) => r.clone(),
                None => {
                    let (r, runs) = reference_scores(&reference_spec, env, eval_seed)?;
                    state.evaluations.reference += runs;
                    r
                }
            };
            state.reference = Some(r);
        }
        let fresh = compare_algs(&current, state.reference.as_ref().expect("set above"), env, eval_seed)?;
        state.evaluations.comparison += 1;
        for b in &fresh {
            io.log(json!({"event": "bad_case", "iteration": j, "case": b.case, "gap": b.gap}))?;
            for line in b.state_excerpt.lines() {
                io.log(json!({"event": "triplet", "case": b.case, "step": line}))?;
            }
        }
        merge_bad_cases(&mut state.bad_cases, fresh);

        let prompt = build_prompt(
            &program,
            &state.bad_cases,
            &state.history,
            &PromptBundle::for_env(env),
            GRAMMAR,
        );
        io.write(&format!("{iter_dir}/prompt.txt"), &prompt)?;
        state.advisor_calls += 1;
        let patch = match advisor.suggest(&prompt) {
            Ok(p) => p,
            Err(why) => {
                io.json(&format!("{iter_dir}/result.json"), &json!({"status": "no_patch", "reason": &why}))?;
                io.log(json!({"event": "no_patch", "iteration": j, "reason": &why}))?;
                state.completed_iterations = j;
                io.state(&state)?;
                if why == NoPatch::Unavailable {
                    break;
                }
                continue;
            }
        };
        io.write(&format!("{iter_dir}/patch.ctl"), &patch.new_source)?;

        let candidate = match Algorithm::from_source(&patch.new_source, domain) {
            Ok(c) => c,
            Err(e) => {
                let reason = e.to_string();
                state.history.push(HistoryTriplet {
                    rationale: patch.rationale.clone(),
                    patch_source: patch.new_source.clone(),
                    result_score: None,
                    accepted: false,
                });
                io.json(
                    &format!("{iter_dir}/result.json"),
                    &json!({"status": "parse_error", "rationale": patch.rationale, "error": reason}),
                )?;
                io.log(json!({"event": "reject", "iteration": j, "reason": reason}))?;
                state.completed_iterations = j;
                io.state(&state)?;
                continue;
            }
        };

        let (candidate, inherited) = inherit_params(candidate, &current);
        if !inherited.is_empty() {
            io.log(json!({"event": "inherit", "iteration": j, "params": inherited}))?;
        }
        let base = evaluate_env(&candidate, env, eval_seed)?;
        state.evaluations.objective += 1;
        let (tuned, tuned_eval, bo) = tune(
            &candidate,
            &base,
            env,
            eval_seed,
            n_bayes,
            seeding::derive_seed(bo_seed, j as u64),
            &mut state.evaluations,
        )?;
        io.log(json!({"event": "bo", "iteration": j, "detail": bo}))?;
        let accepted = tuned_eval.score > state.current_score;
        state.history.push(HistoryTriplet {
            rationale: patch.rationale.clone(),
            patch_source: patch.new_source.clone(),
            result_score: Some(tuned_eval.score),
            accepted,
        });
        io.json(
            &format!("{iter_dir}/result.json"),
            &json!({
                "status": if accepted { "accepted" } else { "rejected" },
                "rationale": patch.rationale,
                "untuned_score": base.score,
                "score": tuned_eval.score,
                "incumbent_score": state.current_score,
                "tuned_source": tuned.describe(),
                "cases": strip(&tuned_eval.cases),
            }),
        )?;
        io.log(json!({"event": if accepted { "accept" } else { "reject" }, "iteration": j, "score": tuned_eval.score}))?;
        if accepted {
            state.current_source = tuned.describe();
            state.current_score = tuned_eval.score;
            state.current_cases = strip(&tuned_eval.cases);
            state.accepted_scores.push(tuned_eval.score);
            current = tuned;
        }
        state.completed_iterations = j;
        io.state(&state)?;
    }

    io.state(&state)?;
    Ok(state)
}

/// The patch rewrites the tuned incumbent, so parameters it keeps (same
/// name, current value inside the new bounds) start from their tuned values.
fn inherit_params(candidate: Algorithm, incumbent: &Algorithm) -> (Algorithm, BTreeMap<String, f64>) {
    let mut carry = BTreeMap::new();
    for p in candidate.param_manifest() {
        if let Some(cur) = incumbent.param_manifest().iter().find(|q| q.name == p.name) {
            if cur.default != p.default && cur.default >= p.lo && cur.default <= p.hi {
                carry.insert(p.name.clone(), cur.default);
            }
        }
    }
    match candidate.set_params(&carry) {
        Ok(c) => (c, carry),
        Err(_) => (candidate, BTreeMap::new()),
    }
}

fn merge_bad_cases(acc: &mut Vec<BadCase>, fresh: Vec<BadCase>) {
    for b in fresh {
        match acc.iter_mut().find(|a| a.env == b.env && a.case == b.case) {
            Some(slot) => *slot = b,
            None => acc.push(b),
        }
    }
}

/// BO over `alg`'s manifest. The first BO point is the current parameter
/// set, whose score `base` is reused instead of re-evaluated. Returns the
/// best algorithm found (`alg` itself unless something scored strictly
/// higher) and a summary for the log.
fn tune(
    alg: &Algorithm,
    base: &EvalResult,
    env: &EnvironmentDescriptor,
    eval_seed: u64,
    budget: usize,
    seed: u64,
    counter: &mut EvalCounter,
) -> Result<(Algorithm, EvalResult, Value), SessionError> {
    let space = SearchSpace::from_manifest(alg.param_manifest())?;
    if budget == 0 || space.is_empty() {
        let reason = if budget == 0 { "budget is 0" } else { "no tunable parameters" };
        return Ok((alg.clone(), base.clone(), json!({"skipped": reason})));
    }
    let mut tried: Vec<Option<(Algorithm, EvalResult)>> = Vec::with_capacity(budget);
    let mut failure: Option<SessionError> = None;
    let mut objective = |params: &BTreeMap<String, f64>| -> f64 {
        if tried.is_empty() {
            tried.push(None);
            return base.score;
        }
        let Ok(next) = alg.set_params(params) else {
            tried.push(None);
            return f64::NAN;
        };
        match evaluate_env(&next, env, eval_seed) {
            Ok(e) => {
                counter.objective += 1;
                let s = e.score;
                tried.push(Some((next, e)));
                s
            }
            Err(e) => {
                failure.get_or_insert(e.into());
                tried.push(None);
                f64::NAN
            }
        }
    };
    let result = optimize(&mut objective, &space, budget, seed)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut best: (Algorithm, EvalResult) = (alg.clone(), base.clone());
    for (a, e) in tried.into_iter().flatten() {
        if e.score > best.1.score {
            best = (a, e);
        }
    }
    let summary = json!({
        "budget": budget,
        "values": result.history.iter().map(|o| o.value).collect::<Vec<_>>(),
        "best": best.1.score,
    });
    Ok((best.0, best.1, summary))
}
