//! Bundled controllers: editable programs for the heuristics, native code
//! for stateful or search-heavy ones, plus the decision-tree importer and
//! the LQR gain solver.

mod lqr;
mod mpc;
mod native;
mod pitree;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use lqr::{linearized_cartpole, lqr_force, lqr_gain};
pub use mpc::{Mpc, MAX_HORIZON};
pub use native::{Fair, PriorityProgram, RoundRobin};
pub use pitree::{pitree_import, DecisionTreeSpec};

use crate::dsl::{
    Binding, ControllerProgram, DslError, EvalContext, ParamDecl, ParamError,
};
use crate::env::{
    AbrObservation, AbrPolicy, CartPoleObservation, CartPolePolicy, Domain, SchedPolicy,
};

#[derive(Debug, thiserror::Error)]
pub enum AlgError {
    #[error("unknown algorithm `{0}`")]
    Unknown(String),
    #[error("decision tree: {0}")]
    Tree(String),
    #[error("lqr: {0}")]
    Lqr(String),
    #[error("{0}")]
    Parse(#[from] DslError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Dsl,
    Native,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NativeKind {
    Mpc,
    Fair,
    RoundRobin,
}

impl NativeKind {
    pub fn id(self) -> &'static str {
        match self {
            NativeKind::Mpc => "mpc",
            NativeKind::Fair => "fair",
            NativeKind::RoundRobin => "round_robin",
        }
    }

    pub fn domain(self) -> Domain {
        match self {
            NativeKind::Mpc => Domain::Abr,
            NativeKind::Fair | NativeKind::RoundRobin => Domain::Sched,
        }
    }

    fn manifest(self) -> Vec<ParamDecl> {
        let p = |name: &str, default: f64, lo: f64, hi: f64| ParamDecl {
            name: name.into(),
            default,
            lo,
            hi,
        };
        match self {
            NativeKind::Mpc => vec![p("horizon", 5.0, 1.0, MAX_HORIZON as f64), p("discount", 1.0, 0.0, 2.0)],
            NativeKind::Fair | NativeKind::RoundRobin => vec![],
        }
    }
}

/// A registry record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmEntry {
    pub name: String,
    pub domain: Domain,
    pub kind: AlgorithmKind,
    /// Program text for `dsl` entries, native id otherwise.
    pub source: String,
    pub manifest: Vec<ParamDecl>,
}

impl AlgorithmEntry {
    pub fn instantiate(&self) -> Result<Algorithm, AlgError> {
        match self.kind {
            AlgorithmKind::Dsl => Ok(Algorithm::Program(ControllerProgram::parse(
                &self.source,
                self.domain.binding(),
            )?)),
            AlgorithmKind::Native => {
                let kind = [NativeKind::Mpc, NativeKind::Fair, NativeKind::RoundRobin]
                    .into_iter()
                    .find(|k| k.id() == self.source)
                    .ok_or_else(|| AlgError::Unknown(self.source.clone()))?;
                Ok(Algorithm::Native(NativeAlgorithm {
                    kind,
                    params: self.manifest.clone(),
                }))
            }
        }
    }
}

macro_rules! asset {
    ($name:literal) => {
        include_str!(concat!("../../assets/v1/algorithms/", $name, ".ctl"))
    };
}

const DSL_SOURCES: [(&str, Domain, &str); 14] = [
    ("bang_bang", Domain::Cartpole, asset!("bang_bang")),
    ("bba", Domain::Abr, asset!("bba")),
    ("bba_c", Domain::Abr, asset!("bba_c")),
    ("bola", Domain::Abr, asset!("bola")),
    ("fifo", Domain::Sched, asset!("fifo")),
    ("hyb", Domain::Abr, asset!("hyb")),
    ("lqr", Domain::Cartpole, asset!("lqr")),
    ("mlf", Domain::Sched, asset!("mlf")),
    ("pid", Domain::Cartpole, asset!("pid")),
    ("rate", Domain::Abr, asset!("rate")),
    ("sjf", Domain::Sched, asset!("sjf")),
    ("srtf", Domain::Sched, asset!("srtf")),
    ("tetris_like", Domain::Sched, asset!("tetris_like")),
    ("pitree", Domain::Abr, ""),
];

/// Distilled tree shipped for the `pitree` entry.
pub const PITREE_ASSET: &str = include_str!("../../assets/v1/trees/pitree.json");

/// Hand-tuned PD gains for the `pid` program (integral term off).
pub const TUNED_PD: [(&str, f64); 3] = [("kp", 10.0), ("ki", 0.0), ("kd", 1.0)];

fn registry() -> &'static Vec<AlgorithmEntry> {
    static REGISTRY: OnceLock<Vec<AlgorithmEntry>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut entries = Vec::new();
        for (name, domain, text) in DSL_SOURCES {
            let source = if name == "pitree" {
                let tree: DecisionTreeSpec = serde_json::from_str(PITREE_ASSET).expect("bundled tree parses");
                pitree_import(&tree).expect("bundled tree imports")
            } else {
                text.to_string()
            };
            let program = ControllerProgram::parse(&source, domain.binding())
                .unwrap_or_else(|e| panic!("bundled program {name} does not parse: {e}"));
            entries.push(AlgorithmEntry {
                name: name.to_string(),
                domain,
                kind: AlgorithmKind::Dsl,
                manifest: program.param_manifest().to_vec(),
                source,
            });
        }
        for kind in [NativeKind::Mpc, NativeKind::Fair, NativeKind::RoundRobin] {
            entries.push(AlgorithmEntry {
                name: kind.id().to_string(),
                domain: kind.domain(),
                kind: AlgorithmKind::Native,
                source: kind.id().to_string(),
                manifest: kind.manifest(),
            });
        }
        entries.sort_by(|a, b| a.name.cmp(&b.name));
        entries
    })
}

pub fn get(name: &str) -> Result<AlgorithmEntry, AlgError> {
    registry()
        .iter()
        .find(|e| e.name == name)
        .cloned()
        .ok_or_else(|| AlgError::Unknown(name.to_string()))
}

/// Names of the entries for `domain` (all domains when `None`), sorted.
pub fn list(domain: Option<Domain>) -> Vec<String> {
    registry()
        .iter()
        .filter(|e| domain.is_none_or(|d| e.domain == d))
        .map(|e| e.name.clone())
        .collect()
}

/// Shorthand for `get(name)?.instantiate()`.
pub fn load(name: &str) -> Result<Algorithm, AlgError> {
    get(name)?.instantiate()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NativeAlgorithm {
    pub kind: NativeKind,
    /// Current values live in `default`.
    pub params: Vec<ParamDecl>,
}

impl NativeAlgorithm {
    fn value(&self, name: &str) -> f64 {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.default)
            .unwrap_or(0.0)
    }
}

/// A runnable controller.
#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    Program(ControllerProgram),
    Native(NativeAlgorithm),
}

impl Algorithm {
    pub fn from_source(source: &str, domain: Domain) -> Result<Self, AlgError> {
        Ok(Algorithm::Program(ControllerProgram::parse(source, domain.binding())?))
    }

    pub fn domain(&self) -> Domain {
        match self {
            Algorithm::Program(p) => match p.binding() {
                Binding::Abr => Domain::Abr,
                Binding::Cartpole => Domain::Cartpole,
                Binding::SchedPriority => Domain::Sched,
            },
            Algorithm::Native(n) => n.kind.domain(),
        }
    }

    pub fn param_manifest(&self) -> &[ParamDecl] {
        match self {
            Algorithm::Program(p) => p.param_manifest(),
            Algorithm::Native(n) => &n.params,
        }
    }

    pub fn program(&self) -> Option<&ControllerProgram> {
        match self {
            Algorithm::Program(p) => Some(p),
            Algorithm::Native(_) => None,
        }
    }

    /// Canonical program text, or `native:<id>` with current parameters.
    pub fn describe(&self) -> String {
        match self {
            Algorithm::Program(p) => p.render(),
            Algorithm::Native(n) => {
                let mut s = format!("native:{}", n.kind.id());
                for p in &n.params {
                    s.push_str(&format!(" {}={}", p.name, p.default));
                }
                s.push('\n');
                s
            }
        }
    }

    pub fn set_params(&self, assignments: &BTreeMap<String, f64>) -> Result<Self, ParamError> {
        match self {
            Algorithm::Program(p) => Ok(Algorithm::Program(p.set_params(assignments)?)),
            Algorithm::Native(n) => {
                let mut next = n.clone();
                for (name, &value) in assignments {
                    let decl = next
                        .params
                        .iter_mut()
                        .find(|p| p.name == *name)
                        .ok_or_else(|| ParamError::Unknown(name.clone()))?;
                    if !(value >= decl.lo && value <= decl.hi) {
                        return Err(ParamError::OutOfRange {
                            name: name.clone(),
                            value,
                            lo: decl.lo,
                            hi: decl.hi,
                        });
                    }
                    decl.default = value;
                }
                Ok(Algorithm::Native(next))
            }
        }
    }

    /// Fresh per-episode ABR controller, if this is an ABR algorithm.
    pub fn abr_policy(&self) -> Option<Box<dyn AbrPolicy + Send + '_>> {
        match self {
            Algorithm::Program(p) if p.binding() == Binding::Abr => Some(Box::new(AbrProgram(p))),
            Algorithm::Native(n) if n.kind == NativeKind::Mpc => {
                Some(Box::new(Mpc::new(n.value("horizon"), n.value("discount"))))
            }
            _ => None,
        }
    }

    pub fn cartpole_policy(&self) -> Option<Box<dyn CartPolePolicy + Send + '_>> {
        match self {
            Algorithm::Program(p) if p.binding() == Binding::Cartpole => Some(Box::new(CartPoleProgram(p))),
            _ => None,
        }
    }

    pub fn sched_policy(&self) -> Option<Box<dyn SchedPolicy + Send + '_>> {
        match self {
            Algorithm::Program(p) if p.binding() == Binding::SchedPriority => Some(Box::new(PriorityProgram(p))),
            Algorithm::Native(n) if n.kind == NativeKind::Fair => Some(Box::new(Fair)),
            Algorithm::Native(n) if n.kind == NativeKind::RoundRobin => Some(Box::new(RoundRobin::default())),
            _ => None,
        }
    }
}

struct AbrProgram<'a>(&'a ControllerProgram);

impl AbrPolicy for AbrProgram<'_> {
    fn choose(&mut self, obs: &AbrObservation) -> Result<f64, String> {
        let scalars = vec![
            obs.buffer,
            obs.speed,
            obs.chunk_len,
            obs.manifest.levels() as f64,
            obs.last_level as f64,
            obs.chunk_index as f64,
            obs.chunks_remaining as f64,
        ];
        let arrays = vec![
            obs.manifest.bitrates.clone(),
            obs.throughputs.to_vec(),
            obs.next_sizes.to_vec(),
        ];
        let ctx = EvalContext::from_parts(Binding::Abr, scalars, arrays).map_err(|e| e.to_string())?;
        self.0.evaluate(&ctx).map_err(|e| e.to_string())
    }
}

struct CartPoleProgram<'a>(&'a ControllerProgram);

impl CartPolePolicy for CartPoleProgram<'_> {
    fn act(&mut self, obs: &CartPoleObservation) -> Result<f64, String> {
        let s = obs.state;
        let scalars = vec![s.x, s.x_dot, s.theta, s.theta_dot, obs.theta_int, obs.step as f64];
        let ctx = EvalContext::from_parts(Binding::Cartpole, scalars, vec![]).map_err(|e| e.to_string())?;
        self.0.evaluate(&ctx).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{simulate_abr, BandwidthTrace, SchedCandidate, VideoManifest};

    #[test]
    fn registry_lookup() {
        let e = get("bba_c").unwrap();
        assert_eq!(e.kind, AlgorithmKind::Dsl);
        assert_eq!(e.manifest.len(), 3);
        assert_eq!(get("fair").unwrap().kind, AlgorithmKind::Native);
        assert!(get("nope").is_err());
        let abr = list(Some(Domain::Abr));
        assert_eq!(abr, vec!["bba", "bba_c", "bola", "hyb", "mpc", "pitree", "rate"]);
        assert_eq!(list(Some(Domain::Cartpole)), vec!["bang_bang", "lqr", "pid"]);
        assert_eq!(
            list(Some(Domain::Sched)),
            vec!["fair", "fifo", "mlf", "round_robin", "sjf", "srtf", "tetris_like"]
        );
        assert_eq!(list(None).len(), 17);
    }

    #[test]
    fn every_program_round_trips() {
        for name in list(None) {
            let e = get(&name).unwrap();
            if e.kind != AlgorithmKind::Dsl {
                continue;
            }
            let p = ControllerProgram::parse(&e.source, e.domain.binding()).unwrap();
            let again = ControllerProgram::parse(&p.render(), e.domain.binding()).unwrap();
            assert_eq!(p, again, "{name}");
        }
    }

    #[test]
    fn lqr_defaults_match_solver() {
        let k = lqr_gain(&nalgebra::Matrix4::identity(), 1.0).unwrap();
        let alg = load("lqr").unwrap();
        let values: Vec<f64> = alg.param_manifest().iter().map(|p| p.default).collect();
        for i in 0..4 {
            assert!((values[i] + k[i]).abs() < 1e-3, "{values:?} vs {k:?}");
        }
    }

    #[test]
    fn native_params_are_checked() {
        let mpc = load("mpc").unwrap();
        let mut m = BTreeMap::new();
        m.insert("horizon".to_string(), 3.0);
        assert!(mpc.set_params(&m).is_ok());
        m.insert("horizon".to_string(), 9.0);
        assert!(mpc.set_params(&m).is_err());
        assert!(mpc.describe().starts_with("native:mpc"));
    }

    #[test]
    fn bba_c_with_huge_speed_reduces_to_bba() {
        let bba = load("bba").unwrap();
        let bba_c = load("bba_c").unwrap();
        let m = VideoManifest::default();
        let sizes: Vec<f64> = (0..6).map(|l| m.chunk_size(l, 2)).collect();
        for b in 0..=80 {
            let buffer = b as f64 * 0.5;
            let obs = AbrObservation {
                buffer: buffer.max(0.01),
                speed: 1e12,
                chunk_len: 4.0,
                last_level: 0,
                chunk_index: 2,
                chunks_remaining: 10,
                throughputs: &[1e12],
                next_sizes: &sizes,
                manifest: &m,
            };
            let a = bba.abr_policy().unwrap().choose(&obs).unwrap();
            let c = bba_c.abr_policy().unwrap().choose(&obs).unwrap();
            assert_eq!(a, c, "buffer {buffer}");
        }
    }

    #[test]
    fn sjf_orders_by_total_work() {
        use rand::Rng;
        let sjf = load("sjf").unwrap();
        let mut rng = crate::seeding::rng(3);
        for _ in 0..50 {
            let n = rng.random_range(1..8);
            let cands: Vec<SchedCandidate> = (0..n)
                .map(|j| SchedCandidate {
                    job: j,
                    stage: 0,
                    now: 0.0,
                    job_arrival: 0.0,
                    job_total_work: rng.random_range(1.0..100.0),
                    job_remaining_work: 1.0,
                    job_attained: 0.0,
                    job_executors: 0,
                    job_stages_remaining: 1,
                    stage_tasks_remaining: 1,
                    stage_task_duration: 1.0,
                    stage_remaining_work: 1.0,
                    free_executors: 1,
                    n_executors: 1,
                })
                .collect();
            let picked = sjf.sched_policy().unwrap().pick(&cands).unwrap();
            let mut sorted: Vec<usize> = (0..n).collect();
            sorted.sort_by(|&a, &b| cands[a].job_total_work.total_cmp(&cands[b].job_total_work));
            assert_eq!(picked, sorted[0]);
        }
    }

    #[test]
    fn abr_programs_finish_episodes() {
        let m = VideoManifest::default();
        let trace = BandwidthTrace::constant("c", 2.0, 100.0);
        for name in list(Some(Domain::Abr)) {
            let alg = load(&name).unwrap();
            let ep = simulate_abr(alg.abr_policy().unwrap().as_mut(), &trace, &m);
            assert!(ep.failure.is_none(), "{name}: {:?}", ep.failure);
            assert!(ep.qoe.is_finite());
        }
    }
}
