use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::error::{DslError, ErrorKind};

/// The environment a controller plugs into; fixes its input schema and
/// how the returned number is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Binding {
    Abr,
    Cartpole,
    SchedPriority,
}

const ABR_SCALARS: &[&str] = &[
    "buffer",
    "speed",
    "chunk_len",
    "dim",
    "last_level",
    "chunk_index",
    "chunks_remaining",
];
const ABR_ARRAYS: &[&str] = &["bitrates", "throughputs", "next_sizes"];

const CARTPOLE_SCALARS: &[&str] = &["x", "x_dot", "theta", "theta_dot", "theta_int", "step"];

const SCHED_SCALARS: &[&str] = &[
    "now",
    "job_id",
    "job_arrival",
    "job_total_work",
    "job_remaining_work",
    "job_attained",
    "job_executors",
    "job_stages_remaining",
    "stage_id",
    "stage_tasks_remaining",
    "stage_task_duration",
    "stage_remaining_work",
    "free_executors",
    "n_executors",
];

impl Binding {
    pub const ALL: [Binding; 3] = [Binding::Abr, Binding::Cartpole, Binding::SchedPriority];

    pub fn name(self) -> &'static str {
        match self {
            Binding::Abr => "abr",
            Binding::Cartpole => "cartpole",
            Binding::SchedPriority => "sched-priority",
        }
    }

    pub fn scalar_inputs(self) -> &'static [&'static str] {
        match self {
            Binding::Abr => ABR_SCALARS,
            Binding::Cartpole => CARTPOLE_SCALARS,
            Binding::SchedPriority => SCHED_SCALARS,
        }
    }

    pub fn array_inputs(self) -> &'static [&'static str] {
        match self {
            Binding::Abr => ABR_ARRAYS,
            Binding::Cartpole | Binding::SchedPriority => &[],
        }
    }

    pub fn scalar_index(self, name: &str) -> Option<usize> {
        self.scalar_inputs().iter().position(|n| *n == name)
    }

    pub fn array_index(self, name: &str) -> Option<usize> {
        self.array_inputs().iter().position(|n| *n == name)
    }

    pub fn is_input(self, name: &str) -> bool {
        self.scalar_index(name).is_some() || self.array_index(name).is_some()
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Binding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Binding::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown binding `{s}`"))
    }
}

/// Inputs for one decision step, stored in binding-schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    binding: Binding,
    scalars: Vec<f64>,
    arrays: Vec<Vec<f64>>,
}

/// A named input value.
#[derive(Debug, Clone, PartialEq)]
pub enum InputValue {
    Scalar(f64),
    Array(Vec<f64>),
}

impl EvalContext {
    /// Builds a context from values already laid out in schema order.
    pub fn from_parts(
        binding: Binding,
        scalars: Vec<f64>,
        arrays: Vec<Vec<f64>>,
    ) -> Result<Self, DslError> {
        if scalars.len() != binding.scalar_inputs().len()
            || arrays.len() != binding.array_inputs().len()
        {
            return Err(context_error(format!(
                "binding {binding} expects {} scalars and {} arrays",
                binding.scalar_inputs().len(),
                binding.array_inputs().len()
            )));
        }
        for (name, v) in binding.scalar_inputs().iter().zip(&scalars) {
            if !v.is_finite() {
                return Err(context_error(format!("input `{name}` is not finite")));
            }
        }
        for (name, arr) in binding.array_inputs().iter().zip(&arrays) {
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(context_error(format!("array `{name}` has a non-finite entry")));
            }
        }
        Ok(Self {
            binding,
            scalars,
            arrays,
        })
    }

    /// Builds a context from a name → value map; every schema input must be present.
    pub fn from_map(
        binding: Binding,
        inputs: &BTreeMap<String, InputValue>,
    ) -> Result<Self, DslError> {
        let mut scalars = Vec::with_capacity(binding.scalar_inputs().len());
        for name in binding.scalar_inputs() {
            match inputs.get(*name) {
                Some(InputValue::Scalar(v)) => scalars.push(*v),
                Some(InputValue::Array(_)) => {
                    return Err(context_error(format!("input `{name}` must be a scalar")))
                }
                None => return Err(context_error(format!("missing input `{name}`"))),
            }
        }
        let mut arrays = Vec::with_capacity(binding.array_inputs().len());
        for name in binding.array_inputs() {
            match inputs.get(*name) {
                Some(InputValue::Array(v)) => arrays.push(v.clone()),
                Some(InputValue::Scalar(_)) => {
                    return Err(context_error(format!("input `{name}` must be an array")))
                }
                None => return Err(context_error(format!("missing input `{name}`"))),
            }
        }
        if let Some(extra) = inputs.keys().find(|k| !binding.is_input(k)) {
            return Err(context_error(format!(
                "input `{extra}` is not part of the {binding} schema"
            )));
        }
        Self::from_parts(binding, scalars, arrays)
    }

    pub fn binding(&self) -> Binding {
        self.binding
    }

    pub fn scalars(&self) -> &[f64] {
        &self.scalars
    }

    pub fn arrays(&self) -> &[Vec<f64>] {
        &self.arrays
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.binding.scalar_index(name).map(|i| self.scalars[i])
    }

    pub fn max_array_len(&self) -> usize {
        self.arrays.iter().map(Vec::len).max().unwrap_or(0)
    }
}

fn context_error(message: String) -> DslError {
    DslError::new(ErrorKind::UnknownIdentifier, 1, 1, message)
}
