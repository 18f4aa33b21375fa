//! Chunk-level ABR playback over a bandwidth trace.

use serde::{Deserialize, Serialize};

use super::{BandwidthTrace, StepTriplet, VideoManifest};

/// Player buffer capacity in seconds.
pub const BUFFER_CAP: f64 = 60.0;
/// QoE penalty per second of rebuffering.
pub const REBUFFER_PENALTY: f64 = 4.3;
/// Number of past chunk throughputs exposed to policies.
pub const THROUGHPUT_HISTORY: usize = 5;

/// What a policy sees before choosing the level of `chunk_index`.
#[derive(Debug, Clone)]
pub struct AbrObservation<'a> {
    /// Seconds of buffered video.
    pub buffer: f64,
    /// Throughput of the last download, kbit/s.
    pub speed: f64,
    pub chunk_len: f64,
    pub last_level: usize,
    pub chunk_index: usize,
    /// Chunks left including this one.
    pub chunks_remaining: usize,
    /// Recent download throughputs in kbit/s, oldest first.
    pub throughputs: &'a [f64],
    /// Bytes of this chunk at each level.
    pub next_sizes: &'a [f64],
    pub manifest: &'a VideoManifest,
}

/// A per-episode bitrate controller. The returned value is truncated and
/// clamped to a valid level index.
pub trait AbrPolicy {
    fn choose(&mut self, obs: &AbrObservation) -> Result<f64, String>;
}

impl<F: FnMut(&AbrObservation) -> Result<f64, String>> AbrPolicy for F {
    fn choose(&mut self, obs: &AbrObservation) -> Result<f64, String> {
        self(obs)
    }
}

/// Plays a fixed level sequence; chunk `i` uses `levels[i]` (the entry for
/// the startup chunk is ignored).
#[derive(Debug, Clone)]
pub struct FixedLevels(pub Vec<usize>);

impl AbrPolicy for FixedLevels {
    fn choose(&mut self, obs: &AbrObservation) -> Result<f64, String> {
        self.0
            .get(obs.chunk_index)
            .map(|&l| l as f64)
            .ok_or_else(|| format!("no level for chunk {}", obs.chunk_index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbrEpisode {
    pub chosen_levels: Vec<usize>,
    /// Seconds stalled while fetching each chunk.
    pub rebuffer: Vec<f64>,
    /// Buffer level after each chunk (after any sleep at the cap).
    pub buffer_trajectory: Vec<f64>,
    pub download_times: Vec<f64>,
    pub qoe: f64,
    #[serde(skip)]
    pub triplets: Vec<StepTriplet>,
    /// Set when the policy failed; the episode stops before that chunk.
    pub failure: Option<String>,
}

fn quality(kbps: f64) -> f64 {
    kbps / 1000.0
}

/// Linear QoE over per-chunk bitrates in kbit/s.
pub fn qoe_lin_kbps(bitrates: &[f64], rebuffers: &[f64]) -> f64 {
    let q: f64 = bitrates.iter().map(|&b| quality(b)).sum();
    let stall: f64 = rebuffers.iter().sum();
    let smooth: f64 = bitrates
        .windows(2)
        .map(|w| (quality(w[1]) - quality(w[0])).abs())
        .sum();
    q - REBUFFER_PENALTY * stall - smooth
}

/// Linear QoE over per-chunk level indices of `manifest`.
pub fn qoe_lin(levels: &[usize], rebuffers: &[f64], manifest: &VideoManifest) -> f64 {
    let bitrates: Vec<f64> = levels.iter().map(|&l| manifest.bitrates[l]).collect();
    qoe_lin_kbps(&bitrates, rebuffers)
}

/// Outcome of fetching one chunk.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ChunkStep {
    pub time: f64,
    pub buffer: f64,
    pub download: f64,
    pub rebuffer: f64,
}

/// Fetches a chunk of `bytes` starting at `time` with `buffer` seconds
/// buffered. `startup` chunks accrue no rebuffering.
pub(crate) fn fetch_chunk(
    trace: &BandwidthTrace,
    time: f64,
    buffer: f64,
    bytes: f64,
    chunk_len: f64,
    startup: bool,
) -> ChunkStep {
    let finish = trace.download_finish(time, bytes);
    let download = finish - time;
    let rebuffer = if startup { 0.0 } else { (download - buffer).max(0.0) };
    let mut buffer = if startup { 0.0 } else { (buffer - download).max(0.0) } + chunk_len;
    let mut time = finish;
    if buffer > BUFFER_CAP {
        time += buffer - BUFFER_CAP;
        buffer = BUFFER_CAP;
    }
    ChunkStep {
        time,
        buffer,
        download,
        rebuffer,
    }
}

/// Plays the whole video. The first chunk is fetched at the level closest to
/// 750 kbit/s and its download time counts as startup delay, not
/// rebuffering; the policy picks every later chunk.
pub fn simulate_abr(policy: &mut dyn AbrPolicy, trace: &BandwidthTrace, manifest: &VideoManifest) -> AbrEpisode {
    simulate_abr_recording(policy, trace, manifest, true)
}

pub(crate) fn simulate_abr_recording(
    policy: &mut dyn AbrPolicy,
    trace: &BandwidthTrace,
    manifest: &VideoManifest,
    record: bool,
) -> AbrEpisode {
    let dim = manifest.levels();
    let chunk_len = manifest.chunk_duration;
    let mut levels = Vec::with_capacity(manifest.chunk_count);
    let mut rebuffer = Vec::with_capacity(manifest.chunk_count);
    let mut trajectory = Vec::with_capacity(manifest.chunk_count);
    let mut downloads = Vec::with_capacity(manifest.chunk_count);
    let mut throughputs: Vec<f64> = Vec::with_capacity(THROUGHPUT_HISTORY);
    let mut triplets = Vec::new();
    let mut failure = None;
    let mut sizes = vec![0.0; dim];

    let mut time = 0.0;
    let mut buffer = 0.0;
    let mut speed = 0.0;
    for index in 0..manifest.chunk_count {
        for (l, s) in sizes.iter_mut().enumerate() {
            *s = manifest.chunk_size(l, index);
        }
        let level = if index == 0 {
            manifest.startup_level()
        } else {
            let obs = AbrObservation {
                buffer,
                speed,
                chunk_len,
                last_level: levels[index - 1],
                chunk_index: index,
                chunks_remaining: manifest.chunk_count - index,
                throughputs: &throughputs,
                next_sizes: &sizes,
                manifest,
            };
            match policy.choose(&obs) {
                Ok(v) if v.is_finite() => (v.trunc().max(0.0) as usize).min(dim - 1),
                Ok(v) => {
                    failure = Some(format!("chunk {index}: policy returned {v}"));
                    break;
                }
                Err(e) => {
                    failure = Some(format!("chunk {index}: {e}"));
                    break;
                }
            }
        };
        let step = fetch_chunk(trace, time, buffer, sizes[level], chunk_len, index == 0);
        if record {
            triplets.push(StepTriplet {
                state: format!(
                    "trace={} chunk={index} t={time:.3} buffer={buffer:.3} speed_kbps={speed:.1}",
                    trace.name
                ),
                action: format!("level={level} bitrate_kbps={}", manifest.bitrates[level]),
                outcome: format!(
                    "download_s={:.3} rebuffer_s={:.3} buffer={:.3}",
                    step.download, step.rebuffer, step.buffer
                ),
            });
        }
        speed = sizes[level] * 8.0 / 1000.0 / step.download.max(1e-9);
        if throughputs.len() == THROUGHPUT_HISTORY {
            throughputs.remove(0);
        }
        throughputs.push(speed);
        time = step.time;
        buffer = step.buffer;
        levels.push(level);
        rebuffer.push(step.rebuffer);
        trajectory.push(buffer);
        downloads.push(step.download);
    }
    let qoe = qoe_lin(&levels, &rebuffer, manifest);
    AbrEpisode {
        chosen_levels: levels,
        rebuffer,
        buffer_trajectory: trajectory,
        download_times: downloads,
        qoe,
        triplets,
        failure,
    }
}
