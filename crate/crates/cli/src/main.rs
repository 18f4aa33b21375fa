use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crucible_core::advisor::CapabilityProfile;
use crucible_core::algorithms::{self, Algorithm};
use crucible_core::env::{builtin_env_names, evaluate_env, resolve_env, Domain};
use crucible_core::orchestrator::{
    emit_report, run_potential_study, run_session, FileConfig, ReportFormat, ReportKind, SessionConfig, StudyConfig,
    StudyResult,
};
use crucible_core::potential::Weighting;
use crucible_core::seeding;

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "crucible", version, about = "Measure how much control algorithms gain from automated tuning")]
struct Cli {
    /// Master seed for environments, BO and evaluation
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one algorithm on one environment
    Eval {
        #[arg(long, required_unless_present = "source", conflicts_with = "source")]
        alg: Option<String>,
        /// Controller program file instead of a bundled algorithm
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        env: String,
        /// Include per-case scores
        #[arg(long)]
        cases: bool,
    },
    /// Run a tuning session (BO plus advisor rewrites)
    Tune {
        #[arg(long)]
        alg: Option<String>,
        #[arg(long)]
        env: Option<String>,
        /// Reflection iterations (1, 2 or 3)
        #[arg(long)]
        reflect: Option<usize>,
        /// BO evaluations per stage (0, 10 or 20)
        #[arg(long)]
        bayes: Option<usize>,
        /// null, http or scripted:<patches.json>
        #[arg(long)]
        advisor: Option<String>,
        /// default, offline-optimal, best-of-builtins or constant:<score>
        #[arg(long)]
        reference: Option<String>,
    },
    /// Tuning potential of algorithms across environments
    Potential {
        #[arg(long, value_delimiter = ',')]
        algs: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        envs: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        probes: Vec<String>,
        #[arg(long)]
        reflect: Option<usize>,
        #[arg(long)]
        bayes: Option<usize>,
        /// Run all nine capability profiles
        #[arg(long)]
        grid: bool,
        #[arg(long)]
        advisor: Option<String>,
        #[arg(long)]
        reference: Option<String>,
        /// Divide gains by distance instead of multiplying by similarity
        #[arg(long)]
        inverse_distance: bool,
    },
    /// Write a report from a study or session directory
    Report {
        /// Directory holding study.json or a session's state.json
        #[arg(long)]
        from: PathBuf,
        /// scores, cdf, potential or improvement
        #[arg(long)]
        kind: String,
        /// csv or json
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// List built-in environments
    Envs,
    /// List bundled algorithms
    Algs {
        /// abr, cartpole or sched
        #[arg(long)]
        domain: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("{}", json!({ "error": message }));
            ExitCode::FAILURE
        }
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn print(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), String> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(err)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    let out = cli.out.clone().or_else(|| file.out.as_ref().map(PathBuf::from));
    let config_envs = file.environments.as_ref().map(|e| e.list.clone()).unwrap_or_default();

    match cli.command {
        Command::Eval { alg, source, env, cases } => {
            let env = resolve_env(&env, seed).map_err(err)?;
            let (label, algorithm) = match (alg, source) {
                (Some(name), _) => (name.clone(), algorithms::load(&name).map_err(err)?),
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                    let a = Algorithm::from_source(&text, env.domain()).map_err(err)?;
                    (path.display().to_string(), a)
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            let result = evaluate_env(&algorithm, &env, seeding::derive_named(seed, "eval")).map_err(err)?;
            let mut value = json!({"algorithm": label, "env": env.name, "seed": seed, "score": result.score});
            if cases {
                value["cases"] = json!(result
                    .cases
                    .iter()
                    .map(|c| json!({"case": c.case, "score": c.score, "failure": c.failure}))
                    .collect::<Vec<_>>());
            }
            print(value);
        }
        Command::Tune {
            alg,
            env,
            reflect,
            bayes,
            advisor,
            reference,
        } => {
            let alg = alg
                .or_else(|| file.algorithm.clone())
                .ok_or("tune needs --alg (or `algorithm` in the config)")?;
            let env = env
                .or_else(|| config_envs.first().cloned())
                .ok_or("tune needs --env (or [environments] list in the config)")?;
            let mut cfg = SessionConfig::new(
                &alg,
                &env,
                file.capability(reflect, bayes).map_err(err)?,
                file.advisor_spec(advisor.as_deref()).map_err(err)?,
                seed,
            );
            cfg.reference = file.reference(reference.as_deref()).map_err(err)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(format!("session-{alg}-{seed}")));
            cfg.out_dir = Some(dir.clone());
            let state = run_session(&cfg).map_err(err)?;
            print(json!({
                "session": dir.display().to_string(),
                "initial_score": state.initial_score,
                "final_score": state.current_score,
                "accepted_scores": state.accepted_scores,
                "evaluations": state.evaluations,
            }));
        }
        Command::Potential {
            algs,
            envs,
            probes,
            reflect,
            bayes,
            grid,
            advisor,
            reference,
            inverse_distance,
        } => {
            let section = file.study.clone().unwrap_or_default();
            let pick = |cli: Vec<String>, cfg: Vec<String>, what: &str| {
                let v = if cli.is_empty() { cfg } else { cli };
                if v.is_empty() {
                    Err(format!("potential needs --{what}"))
                } else {
                    Ok(v)
                }
            };
            let capabilities = if grid || section.grid {
                CapabilityProfile::grid()
            } else {
                vec![file.capability(reflect, bayes).map_err(err)?]
            };
            let weighting = if inverse_distance {
                Weighting::InverseDistance
            } else {
                section.weighting.unwrap_or_default()
            };
            let cfg = StudyConfig {
                algorithms: pick(algs, section.algorithms.clone(), "algs")?,
                envs: pick(envs, config_envs, "envs")?,
                probes: pick(probes, section.probes.clone(), "probes")?,
                capabilities,
                advisor: file.advisor_spec(advisor.as_deref()).map_err(err)?,
                reference: file.reference(reference.as_deref()).map_err(err)?,
                seed,
                weighting,
            };
            let dir = out.unwrap_or_else(|| PathBuf::from(format!("study-{seed}")));
            let result = run_potential_study(&cfg, Some(&dir)).map_err(err)?;
            print(json!({
                "study": dir.display().to_string(),
                "potentials": result.potentials,
            }));
        }
        Command::Report { from, kind, format } => {
            let kind: ReportKind = kind.parse().map_err(err)?;
            let format: ReportFormat = format.parse().map_err(err)?;
            let result = load_result(&from)?;
            let dir = out.unwrap_or_else(|| from.clone());
            let path = emit_report(&result, kind, format, &dir).map_err(err)?;
            print(json!({"report": path.display().to_string()}));
        }
        Command::Envs => {
            for name in builtin_env_names() {
                let env = resolve_env(&name, seed).map_err(err)?;
                println!("{name}\t{}\t{} cases", env.domain(), env.case_count());
            }
        }
        Command::Algs { domain } => {
            let domain = domain.map(|d| d.parse::<Domain>()).transpose()?;
            for name in algorithms::list(domain) {
                let entry = algorithms::get(&name).map_err(err)?;
                println!("{name}\t{}", entry.domain);
            }
        }
    }
    Ok(())
}

fn load_result(dir: &Path) -> Result<StudyResult, String> {
    if dir.join("study.json").exists() {
        StudyResult::load(&dir.join("study.json")).map_err(err)
    } else if dir.join("state.json").exists() {
        StudyResult::from_session_dir(dir).map_err(err)
    } else {
        Err(format!("{} holds neither study.json nor state.json", dir.display()))
    }
}
