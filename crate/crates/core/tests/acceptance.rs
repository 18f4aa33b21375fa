//! Acceptance checks, one line per criterion:
//! `PASS|FAIL <n> <name> (<seconds>s) <detail>`. Exits non-zero when any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crucible_core::advisor::{AdvisorSpec, CapabilityProfile};
use crucible_core::algorithms::{self, Algorithm, TUNED_PD};
use crucible_core::bayesopt::{expected_improvement, optimize, Dim, SearchSpace};
use crucible_core::dsl::{Binding, ControllerProgram, EvalContext, InputValue};
use crucible_core::env::{
    evaluate_env, generate_profile, generate_sched_workload, generate_traces, offline_optimal_abr, qoe_lin_kbps,
    resolve_env, simulate_abr, simulate_sched, BandwidthTrace, Domain, FixedLevels, SchedCandidate, SchedConfig,
    SchedJob, SchedPolicy, SchedStage, SchedWorkload, VideoManifest, CARTPOLE_MAX_STEPS, PROFILES,
};
use crucible_core::orchestrator::{emit_report, run_session, ReportFormat, ReportKind, SessionConfig, StudyResult};
use crucible_core::potential::{
    characteristic_vectors, distance, normalize_scores, potential, similarity, similarity_from_distance,
    CharacteristicVector, ScoreMatrix, Weighting,
};
use crucible_core::seeding;

const METRIC_TOL: f64 = 1e-12;
const QOE_TOL: f64 = 1e-9;
const DP_TOL: f64 = 1e-9;
const BO_TOL: f64 = 0.05;
const SCHED_TOL: f64 = 1e-9;

const REGRESSION_ENV: &str = "abr:oboe-synth";
const REGRESSION_SEED: u64 = 1;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((a - b).abs() <= tol, || format!("{what}: got {a}, want {b} (tol {tol})"))
}

// 1 -----------------------------------------------------------------------

fn cv(env: &str, c: &[f64]) -> CharacteristicVector {
    CharacteristicVector {
        env: env.into(),
        components: c.to_vec(),
    }
}

// The fixture distance is the rounded 1/sqrt(2).
#[allow(clippy::approx_constant)]
fn metric_fixtures() -> Outcome {
    let m = ScoreMatrix::new(
        vec!["p".into()],
        vec!["a".into(), "b".into(), "c".into()],
        vec![vec![2.0, 4.0, 6.0]],
    )
    .map_err(|e| e.to_string())?;
    let norm = normalize_scores(&m);
    for (got, want) in norm[0].iter().zip([0.0, 0.5, 1.0]) {
        close(*got, want, METRIC_TOL, "norm [2,4,6]")?;
    }

    let d = distance(&cv("a", &[0.0, 1.0]), &cv("b", &[1.0, 0.0])).map_err(|e| e.to_string())?;
    close(d, 1.0, METRIC_TOL, "dis([0,1],[1,0])")?;

    let d = distance(&cv("a", &[0.0, 0.0]), &cv("b", &[1.0, 0.0])).map_err(|e| e.to_string())?;
    close(d, 0.5f64.sqrt(), METRIC_TOL, "dis 0.7071")?;
    close(similarity_from_distance(d), 1.0 - 0.5f64.sqrt(), METRIC_TOL, "sim 0.2929")?;
    close(similarity_from_distance(0.7071), 0.2929, METRIC_TOL, "sim(0.7071)")?;

    // Anchor at the origin, second environment at RMSE distance 0.5.
    let vectors = vec![cv("ideal", &[0.0, 0.0]), cv("other", &[0.5, 0.5])];
    let r = potential("alg", &[1.0, 1.0], &[1.2, 1.1], "ideal", &vectors, Weighting::Similarity)
        .map_err(|e| e.to_string())?;
    close(r.per_env[0].similarity, 1.0, METRIC_TOL, "sim ideal")?;
    close(r.per_env[1].similarity, 0.5, METRIC_TOL, "sim other")?;
    close(r.potential, 0.125, METRIC_TOL, "potential")?;
    Ok("norm, dis, sim and potential fixtures exact".into())
}

// 2 -----------------------------------------------------------------------

const LADDER: [f64; 6] = [300.0, 750.0, 1200.0, 1850.0, 2850.0, 4300.0];

fn abr_ctx(buffer: f64, speed: f64) -> EvalContext {
    let mut m = BTreeMap::new();
    for (k, v) in [
        ("buffer", buffer),
        ("speed", speed),
        ("chunk_len", 4.0),
        ("dim", 6.0),
        ("last_level", 1.0),
        ("chunk_index", 1.0),
        ("chunks_remaining", 40.0),
    ] {
        m.insert(k.to_string(), InputValue::Scalar(v));
    }
    m.insert("bitrates".into(), InputValue::Array(LADDER.to_vec()));
    m.insert("throughputs".into(), InputValue::Array(vec![speed]));
    m.insert(
        "next_sizes".into(),
        InputValue::Array(LADDER.iter().map(|b| b * 500.0).collect()),
    );
    EvalContext::from_map(Binding::Abr, &m).expect("valid abr context")
}

/// Direct transcription of the guarded buffer map with the default
/// parameters (reservoir 5, cushion 10, beta 0.95).
fn bba_c_oracle(buffer: f64, speed: f64) -> f64 {
    let (reservoir, cushion, beta, chunk_len) = (5.0, 10.0, 0.95, 4.0);
    let dim = LADDER.len();
    let bw = (0..dim)
        .rev()
        .find(|&l| LADDER[l] * chunk_len < beta * speed * buffer)
        .unwrap_or(0) as f64;
    let buf = if buffer < reservoir {
        0.0
    } else if buffer >= reservoir + cushion {
        (dim - 1) as f64
    } else {
        ((dim - 1) as f64 * (buffer - reservoir) / cushion).floor()
    };
    bw.min(buf)
}

fn bba_c_conformance() -> Outcome {
    // (buffer s, speed kbit/s, expected level), traced by hand.
    const TABLE: [(f64, f64, f64); 16] = [
        (0.0, 1000.0, 0.0),
        (3.0, 1000.0, 0.0),
        (8.0, 1000.0, 1.0),
        (9.99, 1000.0, 2.0),
        (10.0, 1000.0, 2.0),
        (14.0, 1000.0, 4.0),
        (15.0, 1000.0, 4.0),
        (20.0, 1000.0, 5.0),
        (20.0, 100.0, 0.0),
        (12.0, 500.0, 2.0),
        (13.0, 800.0, 3.0),
        (5.0, 5000.0, 0.0),
        (7.0, 5000.0, 1.0),
        (60.0, 300.0, 4.0),
        (6.0, 150.0, 0.0),
        (25.0, 2000.0, 5.0),
    ];
    let alg = algorithms::load("bba_c").map_err(|e| e.to_string())?;
    let program = alg.program().ok_or("bba_c is not a program")?;
    for (buffer, speed, want) in TABLE {
        let got = program.evaluate(&abr_ctx(buffer, speed)).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("buffer={buffer} speed={speed}: got {got}, want {want}"))?;
        let oracle = bba_c_oracle(buffer, speed);
        ensure(oracle == want, || format!("oracle disagrees with table at buffer={buffer} speed={speed}"))?;
    }
    let mut rng = seeding::rng(2);
    for _ in 0..500 {
        let buffer = rng.random_range(0.0..60.0);
        let speed = rng.random_range(50.0..8000.0);
        let got = program.evaluate(&abr_ctx(buffer, speed)).map_err(|e| e.to_string())?;
        ensure(got == bba_c_oracle(buffer, speed), || {
            format!("random buffer={buffer} speed={speed}: got {got}")
        })?;
    }
    Ok(format!("{} table rows + 500 random points exact", TABLE.len()))
}

// 3 -----------------------------------------------------------------------

fn qoe_oracle(levels: &[usize], rebuffer: &[f64], ladder: &[f64]) -> f64 {
    let q: Vec<f64> = levels.iter().map(|&l| ladder[l] / 1000.0).collect();
    let smooth: f64 = q.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    q.iter().sum::<f64>() - 4.3 * rebuffer.iter().sum::<f64>() - smooth
}

fn qoe_lin() -> Outcome {
    let v = qoe_lin_kbps(&[750.0, 1200.0, 1200.0], &[0.0, 0.5, 0.0]);
    close(v, 0.55, QOE_TOL, "3-chunk QoE")?;

    let m = VideoManifest::default();
    let mut episodes = 0;
    for p in PROFILES.iter() {
        let traces = generate_profile(p, 11, 5, 300.0);
        for name in algorithms::list(Some(Domain::Abr)) {
            let alg = algorithms::load(&name).map_err(|e| e.to_string())?;
            for t in &traces {
                let mut policy = alg.abr_policy().ok_or("not an abr algorithm")?;
                let ep = simulate_abr(&mut *policy, t, &m);
                ensure(ep.rebuffer.len() == ep.chosen_levels.len(), || format!("{name}: ragged episode"))?;
                let want = qoe_oracle(&ep.chosen_levels, &ep.rebuffer, &m.bitrates);
                close(ep.qoe, want, QOE_TOL, &format!("{name} on {}", t.name))?;
                episodes += 1;
            }
        }
        let ep = offline_optimal_abr(&traces[0], &m);
        close(ep.qoe, qoe_oracle(&ep.chosen_levels, &ep.rebuffer, &m.bitrates), QOE_TOL, "optimum")?;
    }
    Ok(format!("0.55 fixture; {episodes} episodes recompute"))
}

// 4 -----------------------------------------------------------------------

fn cartpole_direction() -> Outcome {
    let env = resolve_env("cartpole:default", 1).map_err(|e| e.to_string())?;
    let seed = seeding::derive_named(1, "eval");
    let score = |alg: &Algorithm| evaluate_env(alg, &env, seed).map_err(|e| e.to_string());

    let bang = score(&algorithms::load("bang_bang").map_err(|e| e.to_string())?)?;
    ensure(bang.cases.len() == 20, || format!("{} episodes", bang.cases.len()))?;
    ensure(bang.score < 100.0, || format!("bang-bang mean {}", bang.score))?;

    let gains: BTreeMap<String, f64> = TUNED_PD.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let pd = algorithms::load("pid")
        .map_err(|e| e.to_string())?
        .set_params(&gains)
        .map_err(|e| e.to_string())?;
    let lqr = algorithms::load("lqr").map_err(|e| e.to_string())?;
    let cap = CARTPOLE_MAX_STEPS as f64;
    for (name, alg) in [("pd", pd), ("lqr", lqr)] {
        let r = score(&alg)?;
        ensure(r.cases.iter().all(|c| c.score == cap), || format!("{name} mean {}", r.score))?;
    }
    Ok(format!("bang-bang mean {:.1}; pd and lqr 500 on all 20", bang.score))
}

// 5 -----------------------------------------------------------------------

fn enumerate_best(trace: &BandwidthTrace, m: &VideoManifest) -> f64 {
    // The first chunk is always fetched at the startup level.
    let n = m.chunk_count;
    let dim = m.levels();
    let mut best = f64::NEG_INFINITY;
    for code in 0..dim.pow((n - 1) as u32) {
        let mut levels = vec![m.startup_level(); n];
        let mut c = code;
        for l in levels.iter_mut().skip(1) {
            *l = c % dim;
            c /= dim;
        }
        best = best.max(simulate_abr(&mut FixedLevels(levels), trace, m).qoe);
    }
    best
}

fn offline_optimal() -> Outcome {
    let ladders: [&[f64]; 3] = [&[300.0], &[300.0, 1850.0], &[300.0, 750.0, 1850.0]];
    let mut traces = vec![
        BandwidthTrace::constant("slow", 0.4, 30.0),
        BandwidthTrace::constant("mid", 1.1, 30.0),
        BandwidthTrace::constant("fast", 5.0, 30.0),
    ];
    traces.extend(generate_traces(5, 6, 1.0, 0.8, 0.1, 4.0, 60.0));
    let mut small = 0;
    for chunks in 1..=4 {
        for ladder in ladders {
            for duration in [1.0, 4.0] {
                let m = VideoManifest::new(duration, ladder.to_vec(), chunks).map_err(|e| e.to_string())?;
                for t in &traces {
                    let dp = offline_optimal_abr(t, &m).qoe;
                    let full = enumerate_best(t, &m);
                    close(dp, full, DP_TOL, &format!("{chunks} chunks x {} levels on {}", ladder.len(), t.name))?;
                    small += 1;
                }
            }
        }
    }

    let m = VideoManifest::default();
    let heuristics: Vec<(String, Algorithm)> = algorithms::list(Some(Domain::Abr))
        .into_iter()
        .map(|n| algorithms::load(&n).map(|a| (n, a)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut checked = 0;
    for p in PROFILES.iter() {
        let traces = generate_profile(p, 5, 50, 400.0);
        let violations: Vec<String> = traces
            .par_iter()
            .flat_map_iter(|t| {
                let dp = offline_optimal_abr(t, &m).qoe;
                heuristics
                    .iter()
                    .filter_map(|(name, alg)| {
                        let mut policy = alg.abr_policy().expect("abr");
                        let q = simulate_abr(&mut *policy, t, &m).qoe;
                        (q > dp + DP_TOL).then(|| format!("{name} {q} > dp {dp} on {}", t.name))
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        ensure(violations.is_empty(), || violations.join("; "))?;
        checked += traces.len() * heuristics.len();
    }
    Ok(format!("{small} small instances exact; dp >= heuristic on {checked} runs"))
}

// 6 -----------------------------------------------------------------------

fn bo_convergence() -> Outcome {
    let space = SearchSpace::new(vec![Dim {
        name: "x".into(),
        lo: 0.0,
        hi: 1.0,
        default: 0.5,
    }])
    .map_err(|e| e.to_string())?;
    let mut calls = 0;
    let mut f = |p: &BTreeMap<String, f64>| {
        calls += 1;
        -(p["x"] - 0.3).powi(2)
    };
    let r = optimize(&mut f, &space, 10, 7).map_err(|e| e.to_string())?;
    ensure(calls == 10, || format!("{calls} calls for budget 10"))?;
    let x = r.best_point["x"];
    ensure((x - 0.3).abs() <= BO_TOL, || format!("x_best {x}"))?;

    let mut zero_calls = 0;
    let mut g = |_: &BTreeMap<String, f64>| {
        zero_calls += 1;
        0.0
    };
    let r0 = optimize(&mut g, &space, 0, 7).map_err(|e| e.to_string())?;
    ensure(zero_calls == 0 && r0.history.is_empty(), || format!("{zero_calls} calls for budget 0"))?;
    Ok(format!("x_best {x:.4}; budget 0 -> 0 calls"))
}

// 7 / 9 -------------------------------------------------------------------

fn regression_config(out: &Path) -> Result<SessionConfig, String> {
    let mut cfg = SessionConfig::new(
        "bba",
        REGRESSION_ENV,
        CapabilityProfile::new(1, 10).map_err(|e| e.to_string())?,
        AdvisorSpec::Scripted {
            path: "bundled:bba_to_bba_c".into(),
        },
        REGRESSION_SEED,
    );
    cfg.out_dir = Some(out.to_path_buf());
    Ok(cfg)
}

fn run_regression(out: &Path) -> Result<crucible_core::orchestrator::SessionState, String> {
    let state = run_session(&regression_config(out)?).map_err(|e| e.to_string())?;
    let result = StudyResult::from_session_dir(out).map_err(|e| e.to_string())?;
    let reports = out.join("reports");
    for kind in ReportKind::ALL {
        for format in [ReportFormat::Csv, ReportFormat::Json] {
            emit_report(&result, kind, format, &reports).map_err(|e| e.to_string())?;
        }
    }
    Ok(state)
}

fn end_to_end(out: &Path) -> Outcome {
    let env = resolve_env(REGRESSION_ENV, REGRESSION_SEED).map_err(|e| e.to_string())?;
    ensure(env.case_count() == 20, || format!("{} traces", env.case_count()))?;
    let s = run_regression(out)?;
    ensure(s.history.len() == 1, || format!("{} advisor iterations", s.history.len()))?;
    ensure(s.history[0].accepted, || {
        format!("patch rejected: {:?} vs initial {}", s.history[0].result_score, s.initial_score)
    })?;
    ensure(s.current_score > s.initial_score, || {
        format!("final {} <= initial {}", s.current_score, s.initial_score)
    })?;
    ensure(s.accepted_scores.windows(2).all(|w| w[1] > w[0]), || {
        format!("accepted scores not increasing: {:?}", s.accepted_scores)
    })?;
    ensure(s.current_source.contains("beta"), || "incumbent is not the guarded program".into())?;
    Ok(format!(
        "initial {:.3} -> final {:.3}; accepted {:?}",
        s.initial_score, s.current_score, s.accepted_scores
    ))
}

fn tree(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| format!("{}: {e}", dir.display()))? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = fs::read(&path).map_err(|e| e.to_string())?;
                out.insert(path.strip_prefix(root).expect("under root").to_path_buf(), bytes);
            }
        }
    }
    Ok(out)
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    if !first.join("state.json").exists() {
        run_regression(first)?;
    }
    run_regression(second)?;
    let a = tree(first)?;
    let b = tree(second)?;
    ensure(a.keys().eq(b.keys()), || format!("file sets differ: {:?} vs {:?}", a.keys(), b.keys()))?;
    for (path, bytes) in &a {
        ensure(b[path] == *bytes, || format!("{} differs", path.display()))?;
    }
    Ok(format!("{} files byte-identical", a.len()))
}

// 8 -----------------------------------------------------------------------

struct ByKey(fn(&SchedCandidate) -> f64);

impl SchedPolicy for ByKey {
    fn pick(&mut self, c: &[SchedCandidate]) -> Result<usize, String> {
        let mut best = 0;
        for i in 1..c.len() {
            if (self.0)(&c[i]) > (self.0)(&c[best]) {
                best = i;
            }
        }
        Ok(best)
    }
}

fn scheduling() -> Outcome {
    let job = |d: f64| SchedJob {
        arrival: 0.0,
        stages: vec![SchedStage {
            tasks: 1,
            duration: d,
            parents: vec![],
        }],
    };
    let pair = SchedWorkload {
        name: "pair".into(),
        jobs: vec![job(4.0), job(2.0)],
    };
    let fifo = simulate_sched(&mut ByKey(|c| -c.job_arrival), &pair, 1, &SchedConfig::ideal());
    ensure(fifo.avg_jct == 5.0, || format!("fifo avg {}", fifo.avg_jct))?;
    let sjf = simulate_sched(&mut ByKey(|c| -c.job_total_work), &pair, 1, &SchedConfig::ideal());
    ensure(sjf.avg_jct == 4.0, || format!("sjf avg {}", sjf.avg_jct))?;
    for name in ["fifo", "sjf"] {
        let alg = algorithms::load(name).map_err(|e| e.to_string())?;
        let r = simulate_sched(&mut *alg.sched_policy().ok_or("not sched")?, &pair, 1, &SchedConfig::ideal());
        let want = if name == "fifo" { 5.0 } else { 4.0 };
        ensure(r.avg_jct == want, || format!("bundled {name} avg {}", r.avg_jct))?;
    }

    let executors = 8;
    let policies = ["fifo", "sjf", "fair", "round_robin"];
    for i in 0..20u64 {
        let w = generate_sched_workload(seeding::derive_seed(8, i), 10, 5.0);
        let cfg = SchedConfig {
            seed: i,
            ..SchedConfig::default()
        };
        let name = policies[i as usize % policies.len()];
        let alg = algorithms::load(name).map_err(|e| e.to_string())?;
        let r = simulate_sched(&mut *alg.sched_policy().ok_or("not sched")?, &w, executors, &cfg);
        let ctx = || format!("workload {i} ({name})");

        let task_count: usize = w.jobs.iter().flat_map(|j| &j.stages).map(|s| s.tasks).sum();
        ensure(r.tasks.len() == task_count, || format!("{}: {} of {task_count} tasks ran", ctx(), r.tasks.len()))?;
        let durations: f64 = r.tasks.iter().map(|t| t.duration).sum();
        close(r.busy_time, durations, SCHED_TOL, &format!("{}: busy time vs task durations", ctx()))?;
        let work: f64 = w.jobs.iter().map(|j| j.total_work()).sum();
        ensure(
            r.busy_time >= work - SCHED_TOL && r.busy_time <= cfg.first_wave_factor * work + SCHED_TOL,
            || format!("{}: busy {} outside [{work}, {}]", ctx(), r.busy_time, cfg.first_wave_factor * work),
        )?;
        ensure((0.0..=1.0).contains(&r.utilization), || format!("{}: utilization {}", ctx(), r.utilization))?;
        close(
            r.utilization,
            r.busy_time / (executors as f64 * r.makespan),
            SCHED_TOL,
            &format!("{}: utilization", ctx()),
        )?;
        for e in 0..executors {
            let mut spans: Vec<(f64, f64)> = r
                .tasks
                .iter()
                .filter(|t| t.executor == e)
                .map(|t| (t.start - t.delay, t.start + t.duration))
                .collect();
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            ensure(spans.windows(2).all(|s| s[1].0 >= s[0].1 - SCHED_TOL), || {
                format!("{}: executor {e} runs two tasks at once", ctx())
            })?;
        }
        ensure(r.completions.iter().zip(&w.jobs).all(|(c, j)| *c > j.arrival), || {
            format!("{}: job completes before arrival", ctx())
        })?;
    }
    Ok("fifo 5 / sjf 4; conservation and utilization on 20 workloads".into())
}

// 10 ----------------------------------------------------------------------

fn random_context(binding: Binding, rng: &mut impl Rng) -> Option<EvalContext> {
    let scalars = binding
        .scalar_inputs()
        .iter()
        .map(|_| rng.random_range(-5.0..50.0))
        .collect();
    let len = rng.random_range(1..8);
    let arrays = binding
        .array_inputs()
        .iter()
        .map(|_| (0..len).map(|_| rng.random_range(0.0..5000.0)).collect())
        .collect();
    EvalContext::from_parts(binding, scalars, arrays).ok()
}

fn invariants() -> Outcome {
    let mut rng = seeding::rng(10);

    // Metric symmetry and bounds on normalized data.
    for _ in 0..200 {
        let probes = rng.random_range(1..5);
        let envs = rng.random_range(2..6);
        let scores: Vec<Vec<f64>> = (0..probes)
            .map(|_| (0..envs).map(|_| rng.random_range(-100.0..100.0)).collect())
            .collect();
        let names: Vec<String> = (0..envs).map(|i| format!("e{i}")).collect();
        let m = ScoreMatrix::new((0..probes).map(|i| format!("p{i}")).collect(), names.clone(), scores)
            .map_err(|e| e.to_string())?;
        let norm = normalize_scores(&m);
        ensure(norm.iter().flatten().all(|v| (0.0..=1.0).contains(v)), || "normalized value outside [0,1]".into())?;
        let vs = characteristic_vectors(&names, &norm);
        for a in &vs {
            close(distance(a, a).map_err(|e| e.to_string())?, 0.0, METRIC_TOL, "dis(a,a)")?;
            for b in &vs {
                let ab = distance(a, b).map_err(|e| e.to_string())?;
                let ba = distance(b, a).map_err(|e| e.to_string())?;
                ensure(ab == ba, || "distance not symmetric".into())?;
                ensure((0.0..=1.0).contains(&ab), || format!("distance {ab}"))?;
                let s = similarity(a, b).map_err(|e| e.to_string())?;
                ensure((0.0..=1.0).contains(&s), || format!("similarity {s}"))?;
            }
        }
    }

    // DSL round trip and termination for every bundled program.
    let mut programs = 0;
    for name in algorithms::list(None) {
        let alg = algorithms::load(&name).map_err(|e| e.to_string())?;
        let Some(p) = alg.program() else { continue };
        let again = ControllerProgram::parse(&p.render(), p.binding()).map_err(|e| format!("{name}: {e}"))?;
        ensure(again.render() == p.render(), || format!("{name}: render is not a fixed point"))?;
        for _ in 0..100 {
            if let Some(ctx) = random_context(p.binding(), &mut rng) {
                let (_, steps) = p.evaluate_counted(&ctx);
                ensure(steps < 1_000_000, || format!("{name}: {steps} steps"))?;
            }
        }
        programs += 1;
    }

    // EI is never negative.
    for _ in 0..10_000 {
        let ei = expected_improvement(
            rng.random_range(-10.0..10.0),
            rng.random_range(0.0..5.0),
            rng.random_range(-10.0..10.0),
        );
        ensure(ei >= 0.0 && ei.is_finite(), || format!("ei {ei}"))?;
    }

    // Budget accounting in BO.
    let space = SearchSpace::new(vec![
        Dim {
            name: "a".into(),
            lo: -1.0,
            hi: 1.0,
            default: 0.0,
        },
        Dim {
            name: "b".into(),
            lo: 0.0,
            hi: 10.0,
            default: 3.0,
        },
    ])
    .map_err(|e| e.to_string())?;
    for budget in [1, 3, 5, 8] {
        let mut calls = 0;
        let mut f = |p: &BTreeMap<String, f64>| {
            calls += 1;
            p["a"] * p["b"]
        };
        let r = optimize(&mut f, &space, budget, budget as u64).map_err(|e| e.to_string())?;
        ensure(calls == budget && r.history.len() == budget, || format!("budget {budget}: {calls} calls"))?;
    }

    // Acceptance monotonicity and session budget accounting.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let patches = dir.path().join("p.json");
    fs::write(
        &patches,
        r#"[{"rationale":"lowest","source":"return 0"},{"rationale":"guard","source":"return min(dim - 1, floor(buffer / 4))"}]"#,
    )
    .map_err(|e| e.to_string())?;
    let (r, b) = (2, 0);
    let cfg = SessionConfig::new(
        "rate",
        "abr:3g-synth",
        CapabilityProfile::new(r, b).map_err(|e| e.to_string())?,
        AdvisorSpec::Scripted {
            path: patches.display().to_string(),
        },
        3,
    );
    let s = run_session(&cfg).map_err(|e| e.to_string())?;
    ensure(s.accepted_scores.windows(2).all(|w| w[1] > w[0]), || format!("{:?}", s.accepted_scores))?;
    ensure(s.accepted_scores.last() == Some(&s.current_score), || "last accepted is not current".into())?;
    ensure(s.history.iter().filter(|h| h.accepted).count() + 1 == s.accepted_scores.len(), || {
        "acceptances and accepted scores disagree".into()
    })?;
    let mut incumbent = s.initial_score;
    for h in &s.history {
        match (h.accepted, h.result_score) {
            (true, Some(v)) => {
                ensure(v > incumbent, || format!("accepted {v} <= incumbent {incumbent}"))?;
                incumbent = v;
            }
            (false, Some(v)) => ensure(v <= incumbent, || format!("rejected {v} > incumbent {incumbent}"))?,
            (false, None) => {}
            (true, None) => return Err("accepted a patch without a score".into()),
        }
    }
    ensure(s.evaluations.objective <= (r + 1) * (b + 1), || format!("objective evals {:?}", s.evaluations))?;
    ensure(s.evaluations.comparison <= r, || format!("comparison evals {:?}", s.evaluations))?;

    Ok(format!(
        "metric, dsl ({programs} programs), ei, bo budget, session acceptance; proptest suites run under cargo test"
    ))
}

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("temp dir");
    let first = work.path().join("run-a");
    let second = work.path().join("run-b");

    let criteria: Vec<Criterion> = vec![
        ("metric fixtures", Box::new(metric_fixtures)),
        ("bba_c conformance", Box::new(bba_c_conformance)),
        ("qoe_lin", Box::new(qoe_lin)),
        ("cartpole direction", Box::new(cartpole_direction)),
        ("offline optimal", Box::new(offline_optimal)),
        ("bo convergence", Box::new(bo_convergence)),
        ("end-to-end regression", Box::new(|| end_to_end(&first))),
        ("scheduling", Box::new(scheduling)),
        ("determinism", Box::new(|| determinism(&first, &second))),
        ("invariant suites", Box::new(invariants)),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {} {name} ({secs:.2}s) {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
