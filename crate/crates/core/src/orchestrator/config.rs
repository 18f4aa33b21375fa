use std::path::Path;

use serde::Deserialize;

use super::{ReferenceSpec, SessionError};
use crate::advisor::{AdvisorSpec, CapabilityProfile, HttpSettings};
use crate::potential::Weighting;

/// Contents of a TOML config file. Every field is optional; command-line
/// flags take precedence. There is deliberately no field for the API key.
///
/// ```toml
/// seed = 7
/// out = "runs/bba"
/// algorithm = "bba"
/// reference = "offline-optimal"
///
/// [budgets]
/// n_reflect = 2
/// n_bayes = 10
///
/// [advisor]
/// kind = "http"
/// endpoint = "http://localhost:8000/v1/chat/completions"
/// model = "some-model"
///
/// [environments]
/// list = ["abr:oboe-synth", "abr:fcc-synth"]
///
/// [study]
/// algorithms = ["bba", "hyb"]
/// probes = ["bba", "mpc", "rate"]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub algorithm: Option<String>,
    pub reference: Option<String>,
    pub budgets: Option<Budgets>,
    pub advisor: Option<AdvisorSection>,
    pub environments: Option<EnvSection>,
    pub study: Option<StudySection>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    pub n_reflect: Option<usize>,
    pub n_bayes: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvisorSection {
    /// `null`, `scripted` or `http`.
    pub kind: Option<String>,
    /// Patch file for the scripted advisor.
    pub patches: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub timeout_s: Option<f64>,
    pub retries: Option<u32>,
    pub backoff_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    #[serde(default)]
    pub list: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default)]
    pub algorithms: Vec<String>,
    #[serde(default)]
    pub probes: Vec<String>,
    /// Run all nine capability profiles instead of `[budgets]`.
    #[serde(default)]
    pub grid: bool,
    pub weighting: Option<Weighting>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, SessionError> {
        toml::from_str(text).map_err(|e| SessionError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = std::fs::read_to_string(path).map_err(|e| SessionError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            SessionError::Config(m) => SessionError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn http_settings(&self) -> Option<HttpSettings> {
        let a = self.advisor.as_ref()?;
        let mut s = HttpSettings::new(a.endpoint.clone()?, a.model.clone()?);
        if let Some(t) = a.temperature {
            s.temperature = t;
        }
        if let Some(t) = a.timeout_s {
            s.timeout_s = t;
        }
        if let Some(r) = a.retries {
            s.retries = r;
        }
        if let Some(b) = a.backoff_ms {
            s.backoff_ms = b;
        }
        Some(s)
    }

    /// Advisor from a command-line value (`null`, `http`,
    /// `scripted:<file>`) or else from the `[advisor]` section; null when
    /// neither says anything.
    pub fn advisor_spec(&self, cli: Option<&str>) -> Result<AdvisorSpec, SessionError> {
        let http = self.http_settings();
        let text = match (cli, self.advisor.as_ref()) {
            (Some(t), _) => t.to_string(),
            (None, Some(a)) => match a.kind.as_deref() {
                Some("scripted") => format!(
                    "scripted:{}",
                    a.patches
                        .as_deref()
                        .ok_or_else(|| SessionError::Config("scripted advisor needs `patches`".into()))?
                ),
                Some(k) => k.to_string(),
                None => "null".to_string(),
            },
            (None, None) => "null".to_string(),
        };
        Ok(AdvisorSpec::parse(&text, http)?)
    }

    pub fn capability(&self, reflect: Option<usize>, bayes: Option<usize>) -> Result<CapabilityProfile, SessionError> {
        let b = self.budgets.clone().unwrap_or_default();
        Ok(CapabilityProfile::new(
            reflect.or(b.n_reflect).unwrap_or(1),
            bayes.or(b.n_bayes).unwrap_or(10),
        )?)
    }

    pub fn reference(&self, cli: Option<&str>) -> Result<ReferenceSpec, SessionError> {
        ReferenceSpec::parse(cli.or(self.reference.as_deref()).unwrap_or("default"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_file() {
        let c = FileConfig::parse(
            r#"
seed = 7
reference = "constant:3"
[budgets]
n_reflect = 2
n_bayes = 20
[advisor]
kind = "http"
endpoint = "http://127.0.0.1:9/v1"
model = "m"
timeout_s = 30
[environments]
list = ["abr:oboe-synth"]
[study]
algorithms = ["bba"]
probes = ["bba", "rate"]
grid = true
weighting = "inverse-distance"
"#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.capability(None, None).unwrap(), CapabilityProfile::new(2, 20).unwrap());
        assert_eq!(c.capability(Some(3), None).unwrap().n_reflect, 3);
        match c.advisor_spec(None).unwrap() {
            AdvisorSpec::Http(s) => {
                assert_eq!(s.model, "m");
                assert_eq!(s.timeout_s, 30.0);
                assert_eq!(s.retries, 2);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(c.advisor_spec(Some("null")).unwrap(), AdvisorSpec::Null);
        assert_eq!(c.reference(None).unwrap(), ReferenceSpec::Constant { score: 3.0 });
        assert_eq!(c.study.unwrap().weighting, Some(Weighting::InverseDistance));
    }

    #[test]
    fn defaults_and_rejections() {
        let c = FileConfig::default();
        assert_eq!(c.advisor_spec(None).unwrap(), AdvisorSpec::Null);
        assert_eq!(c.capability(None, None).unwrap(), CapabilityProfile::new(1, 10).unwrap());
        assert!(FileConfig::parse("[advisor]\napi_key = \"x\"").is_err());
        assert!(FileConfig::parse("seed = \"x\"").is_err());
        let scripted = FileConfig::parse("[advisor]\nkind = \"scripted\"\npatches = \"p.json\"").unwrap();
        assert_eq!(
            scripted.advisor_spec(None).unwrap(),
            AdvisorSpec::Scripted { path: "p.json".into() }
        );
    }
}
