//! Tuning potential: probe scores fingerprint each environment, the
//! fingerprints give environment similarity, and tuning gains are averaged
//! with similarity to the algorithm's ideal environment as weight.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("score matrix: {0}")]
    Matrix(String),
    #[error("no score for environment `{0}`")]
    MissingEnv(String),
}

/// Raw probe scores, `scores[probe][env]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub probes: Vec<String>,
    pub envs: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(probes: Vec<String>, envs: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        if scores.len() != probes.len() || scores.iter().any(|r| r.len() != envs.len()) {
            return Err(MetricError::Matrix(format!(
                "expected {} x {} cells",
                probes.len(),
                envs.len()
            )));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MetricError::Matrix("scores must be finite".into()));
        }
        Ok(Self { probes, envs, scores })
    }

    pub fn env_index(&self, env: &str) -> Option<usize> {
        self.envs.iter().position(|e| e == env)
    }
}

fn normalize_row(row: &[f64], degenerate: f64) -> Vec<f64> {
    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![degenerate; row.len()];
    }
    row.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Min-max normalization of each probe's scores across environments; a
/// probe scoring the same everywhere maps to 0.
pub fn normalize_scores(matrix: &ScoreMatrix) -> Vec<Vec<f64>> {
    normalize_with(matrix, 0.0)
}

fn normalize_with(matrix: &ScoreMatrix, degenerate: f64) -> Vec<Vec<f64>> {
    matrix.scores.iter().map(|r| normalize_row(r, degenerate)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicVector {
    pub env: String,
    pub components: Vec<f64>,
}

/// One vector per environment: its column of the normalized matrix.
pub fn characteristic_vectors(envs: &[String], normalized: &[Vec<f64>]) -> Vec<CharacteristicVector> {
    envs.iter()
        .enumerate()
        .map(|(k, env)| CharacteristicVector {
            env: env.clone(),
            components: normalized.iter().map(|row| row[k]).collect(),
        })
        .collect()
}

/// Root mean square of component differences.
pub fn distance(a: &CharacteristicVector, b: &CharacteristicVector) -> Result<f64, MetricError> {
    rmse(&a.components, &b.components)
}

fn rmse(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as f64).sqrt())
}

pub fn similarity_from_distance(d: f64) -> f64 {
    (1.0 - d).max(0.0)
}

pub fn similarity(a: &CharacteristicVector, b: &CharacteristicVector) -> Result<f64, MetricError> {
    Ok(similarity_from_distance(distance(a, b)?))
}

/// Environment where `alg_scores` (aligned with `matrix.envs`) stands
/// highest relative to that environment's probe range. Ties go to the
/// name that sorts first.
pub fn ideal_environment(alg_scores: &[f64], matrix: &ScoreMatrix) -> Result<String, MetricError> {
    if alg_scores.len() != matrix.envs.len() || matrix.envs.is_empty() {
        return Err(MetricError::LengthMismatch(alg_scores.len(), matrix.envs.len()));
    }
    let mut best: Option<(f64, &String)> = None;
    for (k, env) in matrix.envs.iter().enumerate() {
        let column: Vec<f64> = matrix.scores.iter().map(|row| row[k]).collect();
        let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let standing = if hi > lo { (alg_scores[k] - lo) / (hi - lo) } else { 0.0 };
        let better = match best {
            None => true,
            Some((s, name)) => standing > s || (standing == s && env < name),
        };
        if better {
            best = Some((standing, env));
        }
    }
    Ok(best.expect("at least one environment").1.clone())
}

/// How gains are weighted by closeness to the ideal environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Gain times similarity (the main definition).
    #[default]
    Similarity,
    /// Gain divided by distance, distance 0 counting as weight 1. Kept for
    /// comparison with the pseudocode formulation.
    InverseDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvGain {
    pub env: String,
    pub original: f64,
    pub tuned: f64,
    pub similarity: f64,
    pub weight: f64,
    pub weighted_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport {
    pub algorithm: String,
    pub ideal_env: String,
    pub per_env: Vec<EnvGain>,
    /// Mean weighted gain.
    pub potential: f64,
    /// Population standard deviation of the weighted gains across
    /// environments.
    pub potential_std: f64,
    /// Mean raw gain.
    pub improvement: f64,
    pub weighting: Weighting,
}

/// Weighted mean gain over every environment in `vectors`. `original` and
/// `tuned` are aligned with `vectors`.
pub fn potential(
    algorithm: &str,
    original: &[f64],
    tuned: &[f64],
    ideal: &str,
    vectors: &[CharacteristicVector],
    weighting: Weighting,
) -> Result<PotentialReport, MetricError> {
    if original.len() != vectors.len() || tuned.len() != vectors.len() {
        return Err(MetricError::LengthMismatch(original.len().min(tuned.len()), vectors.len()));
    }
    let anchor = vectors
        .iter()
        .find(|v| v.env == ideal)
        .ok_or_else(|| MetricError::MissingEnv(ideal.to_string()))?;
    let mut per_env = Vec::with_capacity(vectors.len());
    for (i, v) in vectors.iter().enumerate() {
        let d = distance(anchor, v)?;
        let sim = similarity_from_distance(d);
        let weight = match weighting {
            Weighting::Similarity => sim,
            Weighting::InverseDistance => {
                if d == 0.0 {
                    1.0
                } else {
                    1.0 / d
                }
            }
        };
        let gain = tuned[i] - original[i];
        per_env.push(EnvGain {
            env: v.env.clone(),
            original: original[i],
            tuned: tuned[i],
            similarity: sim,
            weight,
            weighted_gain: gain * weight,
        });
    }
    let n = per_env.len().max(1) as f64;
    let mean = per_env.iter().map(|g| g.weighted_gain).sum::<f64>() / n;
    let var = per_env.iter().map(|g| (g.weighted_gain - mean).powi(2)).sum::<f64>() / n;
    let improvement = per_env.iter().map(|g| g.tuned - g.original).sum::<f64>() / n;
    Ok(PotentialReport {
        algorithm: algorithm.to_string(),
        ideal_env: ideal.to_string(),
        per_env,
        potential: mean,
        potential_std: var.sqrt(),
        improvement,
        weighting,
    })
}

/// Relative gain of `tuned` over `baseline`, signed so that a higher tuned
/// score is positive even for negative (cost-like) scores. `None` when the
/// baseline is 0.
pub fn improvement_ratio(tuned: f64, baseline: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (tuned - baseline) / baseline.abs())
}
