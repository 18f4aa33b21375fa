use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;

/// Chunked video with a bitrate ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    #[serde(rename = "chunk_duration_s")]
    pub chunk_duration: f64,
    #[serde(rename = "bitrates_kbps")]
    pub bitrates: Vec<f64>,
    pub chunk_count: usize,
    /// Bytes per `[level][chunk]`; derived from the bitrate when absent.
    #[serde(rename = "chunk_sizes_bytes", default, skip_serializing_if = "Option::is_none")]
    pub chunk_sizes: Option<Vec<Vec<f64>>>,
}

impl Default for VideoManifest {
    fn default() -> Self {
        Self {
            chunk_duration: 4.0,
            bitrates: vec![300.0, 750.0, 1200.0, 1850.0, 2850.0, 4300.0],
            chunk_count: 48,
            chunk_sizes: None,
        }
    }
}

impl VideoManifest {
    pub fn new(chunk_duration: f64, bitrates: Vec<f64>, chunk_count: usize) -> Result<Self, EnvError> {
        let m = Self {
            chunk_duration,
            bitrates,
            chunk_count,
            chunk_sizes: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |message: &str| EnvError::Invalid {
            what: "manifest",
            message: message.to_string(),
        };
        if !(self.chunk_duration.is_finite() && self.chunk_duration > 0.0) {
            return Err(bad("chunk_duration_s must be positive"));
        }
        if self.chunk_count == 0 {
            return Err(bad("chunk_count must be at least 1"));
        }
        if self.bitrates.is_empty() || self.bitrates.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(bad("bitrates_kbps must be positive"));
        }
        if self.bitrates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("bitrates_kbps must be strictly increasing"));
        }
        if let Some(sizes) = &self.chunk_sizes {
            if sizes.len() != self.bitrates.len() || sizes.iter().any(|row| row.len() != self.chunk_count) {
                return Err(bad("chunk_sizes_bytes must be levels x chunk_count"));
            }
            if sizes.iter().flatten().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(bad("chunk sizes must be positive"));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.bitrates.len()
    }

    pub fn chunk_size(&self, level: usize, index: usize) -> f64 {
        match &self.chunk_sizes {
            Some(sizes) => sizes[level][index],
            None => self.bitrates[level] * 1000.0 * self.chunk_duration / 8.0,
        }
    }

    /// Level closest to 750 kbit/s, used for the first chunk.
    pub fn startup_level(&self) -> usize {
        let mut best = 0;
        for (i, b) in self.bitrates.iter().enumerate() {
            if (b - 750.0).abs() < (self.bitrates[best] - 750.0).abs() {
                best = i;
            }
        }
        best
    }
}

pub fn load_manifest(path: &Path) -> Result<VideoManifest, EnvError> {
    let text = std::fs::read_to_string(path).map_err(|e| EnvError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let m: VideoManifest = serde_json::from_str(&text).map_err(|e| EnvError::Format {
        line: e.line(),
        message: e.to_string(),
    })?;
    m.validate()?;
    Ok(m)
}
