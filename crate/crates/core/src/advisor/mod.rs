//! Logic-level program rewrites: prompt construction, response parsing and
//! the advisor implementations (null, scripted replay, chat-completions
//! over HTTP).

mod http;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use http::{HttpAdvisor, HttpSettings, API_KEY_VAR};

use crate::dsl::ControllerProgram;
use crate::env::{Domain, EnvironmentDescriptor};

pub const MAX_BAD_CASES: usize = 5;
/// A case counts as bad when the reference beats the current algorithm by
/// more than this fraction of the reference's magnitude.
pub const BAD_CASE_THRESHOLD: f64 = 0.05;
const NO_RATIONALE: &str = "(no rationale given)";

/// Bundled replay of the BBA to BBA_C rewrite.
pub const BBA_TO_BBA_C: &str = include_str!("../../assets/v1/patches/bba_to_bba_c.json");

#[derive(Debug, thiserror::Error)]
pub enum AdvisorError {
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub task_description: String,
    pub optimization_objectives: String,
    pub environment_overview: String,
}

impl PromptBundle {
    pub fn new(task: &str, objectives: &str, overview: &str) -> Result<Self, AdvisorError> {
        if [task, objectives, overview].iter().any(|s| s.trim().is_empty()) {
            return Err(AdvisorError::Invalid("prompt bundle sections must be non-empty".into()));
        }
        Ok(Self {
            task_description: task.into(),
            optimization_objectives: objectives.into(),
            environment_overview: overview.into(),
        })
    }

    /// Default wording for an environment's domain.
    pub fn for_env(env: &EnvironmentDescriptor) -> Self {
        let (task, objectives) = match env.domain() {
            Domain::Abr => (
                "You are improving an adaptive bitrate controller for a video player. Before each chunk \
                 download the controller returns the index of the bitrate level to fetch (0 is the lowest).",
                "Maximize mean linear QoE per session: the sum of chunk bitrates in Mbit/s, minus 4.3 times the \
                 total rebuffering time in seconds, minus the summed absolute bitrate changes between \
                 consecutive chunks in Mbit/s.",
            ),
            Domain::Cartpole => (
                "You are improving a controller that balances a pole on a cart. Each step the controller returns \
                 a number; positive pushes the cart right, otherwise left.",
                "Maximize the mean number of steps the pole stays upright and the cart stays on the track, up to \
                 the episode limit.",
            ),
            Domain::Sched => (
                "You are improving a scheduling priority function for DAG jobs on a cluster. Whenever an executor \
                 is free, every runnable stage is scored and the highest score is launched.",
                "Minimize the average job completion time.",
            ),
        };
        Self {
            task_description: task.into(),
            optimization_objectives: objectives.into(),
            environment_overview: env.overview(),
        }
    }
}

/// One past rewrite attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryTriplet {
    pub rationale: String,
    /// Verbatim, even when the patch was rejected.
    pub patch_source: String,
    /// `None` when the patch never reached evaluation.
    pub result_score: Option<f64>,
    pub accepted: bool,
}

/// Budget levers standing in for advisor capability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityProfile {
    pub n_reflect: usize,
    pub n_bayes: usize,
}

impl CapabilityProfile {
    pub const REFLECT_LEVELS: [usize; 3] = [1, 2, 3];
    pub const BAYES_LEVELS: [usize; 3] = [0, 10, 20];

    pub fn new(n_reflect: usize, n_bayes: usize) -> Result<Self, AdvisorError> {
        if !Self::REFLECT_LEVELS.contains(&n_reflect) {
            return Err(AdvisorError::Invalid(format!("reflection count must be 1, 2 or 3, got {n_reflect}")));
        }
        if !Self::BAYES_LEVELS.contains(&n_bayes) {
            return Err(AdvisorError::Invalid(format!("BO budget must be 0, 10 or 20, got {n_bayes}")));
        }
        Ok(Self { n_reflect, n_bayes })
    }

    /// All nine profiles, reflection-major.
    pub fn grid() -> Vec<Self> {
        let mut out = Vec::new();
        for n_reflect in Self::REFLECT_LEVELS {
            for n_bayes in Self::BAYES_LEVELS {
                out.push(Self { n_reflect, n_bayes });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    pub rationale: String,
    /// Full replacement program.
    pub new_source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadCase {
    pub env: String,
    pub case: String,
    pub current_score: f64,
    pub reference_score: f64,
    pub gap: f64,
    pub state_excerpt: String,
}

impl BadCase {
    pub fn is_significant(&self) -> bool {
        self.gap > BAD_CASE_THRESHOLD * self.reference_score.abs()
    }
}

/// Keeps the significant cases, largest gap first (ties by env, then case),
/// at most five.
pub fn select_bad_cases(mut cases: Vec<BadCase>) -> Vec<BadCase> {
    cases.retain(|c| c.gap > 0.0 && c.is_significant());
    cases.sort_by(|a, b| {
        b.gap
            .total_cmp(&a.gap)
            .then_with(|| a.env.cmp(&b.env))
            .then_with(|| a.case.cmp(&b.case))
    });
    cases.truncate(MAX_BAD_CASES);
    cases
}

fn score(v: f64) -> String {
    format!("{v:.4}")
}

/// Deterministic prompt text: bundle sections, grammar, the canonical
/// program, the five largest-gap bad cases, past attempts (section left out
/// when there are none) and the requested response format.
pub fn build_prompt(
    program: &ControllerProgram,
    bad_cases: &[BadCase],
    history: &[HistoryTriplet],
    bundle: &PromptBundle,
    grammar: &str,
) -> String {
    let mut p = String::new();
    let _ = writeln!(p, "## Task\n{}\n", bundle.task_description.trim());
    let _ = writeln!(p, "## Objectives\n{}\n", bundle.optimization_objectives.trim());
    let _ = writeln!(p, "## Environment\n{}\n", bundle.environment_overview.trim());
    let _ = writeln!(
        p,
        "## Controller language\nPrograms are written in this language (EBNF). The inputs available to the program are: {}.\n\n```\n{}\n```\n",
        input_list(program),
        grammar.trim_end()
    );
    let _ = writeln!(p, "## Current program\n```\n{}```\n", program.render());

    let mut shown: Vec<&BadCase> = bad_cases.iter().collect();
    shown.sort_by(|a, b| {
        b.gap
            .total_cmp(&a.gap)
            .then_with(|| a.env.cmp(&b.env))
            .then_with(|| a.case.cmp(&b.case))
    });
    shown.truncate(MAX_BAD_CASES);
    let _ = writeln!(p, "## Cases where the reference does better");
    if shown.is_empty() {
        let _ = writeln!(p, "None found.");
    }
    for c in shown {
        let _ = writeln!(
            p,
            "- `{}` on {}: current {}, reference {}, gap {}",
            c.case,
            c.env,
            score(c.current_score),
            score(c.reference_score),
            score(c.gap)
        );
        for line in c.state_excerpt.lines() {
            let _ = writeln!(p, "    {line}");
        }
    }
    p.push('\n');

    if !history.is_empty() {
        let _ = writeln!(p, "## Previous attempts");
        for (i, h) in history.iter().enumerate() {
            let outcome = match (h.accepted, h.result_score) {
                (true, Some(s)) => format!("accepted, score {}", score(s)),
                (false, Some(s)) => format!("rejected, score {}", score(s)),
                (_, None) => "rejected, not evaluated".to_string(),
            };
            let _ = writeln!(
                p,
                "### Attempt {} ({outcome})\nRationale: {}\n```\n{}\n```",
                i + 1,
                h.rationale.trim(),
                h.patch_source.trim_end()
            );
        }
        p.push('\n');
    }

    let _ = writeln!(
        p,
        "## Response format\nExplain the change in a few sentences, then give the complete new program in one fenced \
         code block. Parameters declared with `param` are tuned automatically afterwards."
    );
    p
}

fn input_list(program: &ControllerProgram) -> String {
    let b = program.binding();
    let mut names: Vec<String> = b.scalar_inputs().iter().map(|s| s.to_string()).collect();
    names.extend(b.array_inputs().iter().map(|s| format!("{s}[]")));
    names.join(", ")
}

/// The first fenced block becomes the new source and the prose before it
/// the rationale. `None` without a complete, non-empty fenced block.
pub fn parse_patch_response(text: &str) -> Option<Patch> {
    let lines: Vec<&str> = text.lines().collect();
    let open = lines.iter().position(|l| l.trim_start().starts_with("```"))?;
    let close = open + 1 + lines[open + 1..].iter().position(|l| l.trim_start().starts_with("```"))?;
    let source = lines[open + 1..close].join("\n");
    if source.trim().is_empty() {
        return None;
    }
    let rationale = lines[..open].join("\n").trim().to_string();
    Some(Patch {
        rationale: if rationale.is_empty() { NO_RATIONALE.into() } else { rationale },
        new_source: source,
    })
}

/// Why an advisor produced no patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum NoPatch {
    /// The advisor never proposes anything (null advisor).
    Unavailable,
    /// A scripted advisor ran out of patches.
    Exhausted,
    /// The reply had no usable fenced block.
    Malformed,
    /// Network or HTTP failure after all retries.
    Transport(String),
}

pub trait Advisor {
    fn name(&self) -> String;
    fn suggest(&mut self, prompt: &str) -> Result<Patch, NoPatch>;

    /// False when `suggest` can never return a patch.
    fn available(&self) -> bool {
        true
    }

    /// Fast-forwards past `n` suggestions already made (used on resume).
    fn skip(&mut self, _n: usize) {}
}

pub struct NullAdvisor;

impl Advisor for NullAdvisor {
    fn name(&self) -> String {
        "null".into()
    }

    fn suggest(&mut self, _prompt: &str) -> Result<Patch, NoPatch> {
        Err(NoPatch::Unavailable)
    }

    fn available(&self) -> bool {
        false
    }
}

#[derive(Debug, Deserialize)]
struct ScriptEntry {
    rationale: String,
    source: String,
}

/// Replays patches in order, ignoring the prompt.
pub struct ScriptedAdvisor {
    label: String,
    patches: Vec<Patch>,
    next: usize,
}

impl ScriptedAdvisor {
    pub fn new(label: impl Into<String>, patches: Vec<Patch>) -> Self {
        Self {
            label: label.into(),
            patches,
            next: 0,
        }
    }

    /// Parses a JSON array of `{rationale, source}`.
    pub fn from_json(label: impl Into<String>, text: &str) -> Result<Self, AdvisorError> {
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(text).map_err(|e| AdvisorError::Invalid(format!("patch file: {e}")))?;
        let mut patches = Vec::with_capacity(entries.len());
        for (i, e) in entries.into_iter().enumerate() {
            if e.rationale.trim().is_empty() {
                return Err(AdvisorError::Invalid(format!("patch {i} has an empty rationale")));
            }
            patches.push(Patch {
                rationale: e.rationale,
                new_source: e.source,
            });
        }
        Ok(Self::new(label, patches))
    }

    pub fn from_file(path: &Path) -> Result<Self, AdvisorError> {
        let text = std::fs::read_to_string(path).map_err(|e| AdvisorError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(format!("scripted:{}", path.display()), &text)
    }

    pub fn bba_to_bba_c() -> Self {
        Self::from_json("scripted:bba_to_bba_c", BBA_TO_BBA_C).expect("bundled patch file is valid")
    }

    pub fn remaining(&self) -> usize {
        self.patches.len() - self.next
    }
}

impl Advisor for ScriptedAdvisor {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn suggest(&mut self, _prompt: &str) -> Result<Patch, NoPatch> {
        let p = self.patches.get(self.next).cloned().ok_or(NoPatch::Exhausted)?;
        self.next += 1;
        Ok(p)
    }

    fn skip(&mut self, n: usize) {
        self.next = (self.next + n).min(self.patches.len());
    }
}

/// Which advisor a session uses. Parsed from `null`, `http`,
/// `scripted:<path>` or `scripted:bundled:bba_to_bba_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdvisorSpec {
    Null,
    Scripted { path: String },
    Http(HttpSettings),
}

const BUNDLED_PREFIX: &str = "bundled:";

impl AdvisorSpec {
    pub fn parse(text: &str, http: Option<HttpSettings>) -> Result<Self, AdvisorError> {
        match text.split_once(':') {
            None if text == "null" => Ok(Self::Null),
            None if text == "http" => http
                .map(Self::Http)
                .ok_or_else(|| AdvisorError::Invalid("the http advisor needs an [advisor] section in the config".into())),
            Some(("scripted", path)) if !path.is_empty() => Ok(Self::Scripted { path: path.into() }),
            _ => Err(AdvisorError::Invalid(format!(
                "unknown advisor `{text}` (expected null, http or scripted:<file>)"
            ))),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Advisor>, AdvisorError> {
        Ok(match self {
            Self::Null => Box::new(NullAdvisor),
            Self::Scripted { path } => match path.strip_prefix(BUNDLED_PREFIX) {
                Some("bba_to_bba_c") => Box::new(ScriptedAdvisor::bba_to_bba_c()),
                Some(other) => return Err(AdvisorError::Invalid(format!("no bundled patch file `{other}`"))),
                None => Box::new(ScriptedAdvisor::from_file(Path::new(path))?),
            },
            Self::Http(settings) => Box::new(HttpAdvisor::new(settings.clone())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms;
    use crate::dsl::{Binding, GRAMMAR};

    fn bad(case: &str, current: f64, reference: f64) -> BadCase {
        BadCase {
            env: "e".into(),
            case: case.into(),
            current_score: current,
            reference_score: reference,
            gap: reference - current,
            state_excerpt: format!("state of {case}"),
        }
    }

    fn bundle() -> PromptBundle {
        PromptBundle::new("task text", "objective text", "overview text").unwrap()
    }

    fn bba() -> ControllerProgram {
        algorithms::load("bba").unwrap().program().unwrap().clone()
    }

    #[test]
    fn extraction() {
        let p = parse_patch_response("reason…\n```\nreturn 1\n```").unwrap();
        assert_eq!(p.rationale, "reason…");
        assert_eq!(p.new_source, "return 1");
        let tagged = parse_patch_response("Why.\n\n```ctl\nlet a = 1\nreturn a\n```\nafter\n```\nreturn 2\n```").unwrap();
        assert_eq!(tagged.new_source, "let a = 1\nreturn a");
        assert_eq!(parse_patch_response("```\nreturn 0\n```").unwrap().rationale, NO_RATIONALE);
        assert_eq!(parse_patch_response("just prose, return 1"), None);
        assert_eq!(parse_patch_response("text\n```\nreturn 1"), None);
        assert_eq!(parse_patch_response("text\n```\n\n```"), None);
    }

    #[test]
    fn scripted_replays_then_exhausts() {
        let json = r#"[{"rationale":"one","source":"return 1"},{"rationale":"two","source":"return 2"}]"#;
        let mut a = ScriptedAdvisor::from_json("t", json).unwrap();
        assert_eq!(a.suggest("x").unwrap().new_source, "return 1");
        assert_eq!(a.suggest("x").unwrap().rationale, "two");
        assert_eq!(a.suggest("x"), Err(NoPatch::Exhausted));
        assert!(ScriptedAdvisor::from_json("t", r#"[{"rationale":" ","source":"return 1"}]"#).is_err());
        assert_eq!(NullAdvisor.suggest("x"), Err(NoPatch::Unavailable));
    }

    #[test]
    fn bundled_patch_is_bba_c() {
        let mut a = ScriptedAdvisor::bba_to_bba_c();
        assert_eq!(a.remaining(), 1);
        let p = a.suggest("").unwrap();
        let want = algorithms::load("bba_c").unwrap();
        let got = ControllerProgram::parse(&p.new_source, Binding::Abr).unwrap();
        assert_eq!(&got, want.program().unwrap());
    }

    #[test]
    fn bad_case_selection() {
        let cases: Vec<BadCase> = (0..7).map(|i| bad(&format!("c{i}"), 0.0, 1.0 + i as f64)).collect();
        let top = select_bad_cases(cases);
        let names: Vec<&str> = top.iter().map(|c| c.case.as_str()).collect();
        assert_eq!(names, ["c6", "c5", "c4", "c3", "c2"]);
        // Exactly 5% is not significant.
        assert!(select_bad_cases(vec![bad("edge", 95.0, 100.0)]).is_empty());
        assert_eq!(select_bad_cases(vec![bad("over", 94.0, 100.0)]).len(), 1);
        assert!(select_bad_cases(vec![bad("same", 3.0, 3.0)]).is_empty());
        // Negative scores use the reference's magnitude.
        assert_eq!(select_bad_cases(vec![bad("neg", -10.4, -10.0)]).len(), 0);
        assert_eq!(select_bad_cases(vec![bad("neg", -12.0, -10.0)]).len(), 1);
    }

    #[test]
    fn prompt_layout() {
        let cases: Vec<BadCase> = (0..7).map(|i| bad(&format!("c{i}"), 0.0, 1.0 + i as f64)).collect();
        let text = build_prompt(&bba(), &cases, &[], &bundle(), GRAMMAR);
        assert_eq!(text, build_prompt(&bba(), &cases, &[], &bundle(), GRAMMAR));
        assert!(!text.contains("## Previous attempts"));
        for kept in ["c6", "c5", "c4", "c3", "c2"] {
            assert!(text.contains(&format!("`{kept}`")));
        }
        assert!(!text.contains("`c1`") && !text.contains("`c0`"));
        let order = [
            "task text",
            "objective text",
            "overview text",
            GRAMMAR.trim_end(),
            "param reservoir",
            "`c6`",
            "## Response format",
        ];
        let mut at = 0;
        for needle in order {
            let pos = text[at..].find(needle).unwrap_or_else(|| panic!("`{needle}` out of order"));
            at += pos;
        }

        let history = vec![
            HistoryTriplet {
                rationale: "try this".into(),
                patch_source: "return oops(".into(),
                result_score: None,
                accepted: false,
            },
            HistoryTriplet {
                rationale: "then that".into(),
                patch_source: "return 0".into(),
                result_score: Some(1.5),
                accepted: true,
            },
        ];
        let with = build_prompt(&bba(), &[], &history, &bundle(), GRAMMAR);
        assert!(with.contains("## Previous attempts"));
        assert!(with.contains("return oops("));
        assert!(with.contains("accepted, score 1.5000"));
        assert!(with.find("## Previous attempts").unwrap() < with.find("## Response format").unwrap());
    }

    #[test]
    fn capability_domain() {
        assert!(CapabilityProfile::new(0, 10).is_err());
        assert!(CapabilityProfile::new(2, 5).is_err());
        assert_eq!(CapabilityProfile::new(3, 20).unwrap().n_bayes, 20);
        assert_eq!(CapabilityProfile::grid().len(), 9);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(AdvisorSpec::parse("null", None).unwrap(), AdvisorSpec::Null);
        assert_eq!(
            AdvisorSpec::parse("scripted:p.json", None).unwrap(),
            AdvisorSpec::Scripted { path: "p.json".into() }
        );
        assert!(AdvisorSpec::parse("http", None).is_err());
        assert!(AdvisorSpec::parse("oracle", None).is_err());
        assert!(AdvisorSpec::parse("scripted:", None).is_err());
        let spec = AdvisorSpec::parse("scripted:bundled:bba_to_bba_c", None).unwrap();
        assert_eq!(spec.build().unwrap().name(), "scripted:bba_to_bba_c");
    }
}
