//! Offline-optimal bitrate schedule with full knowledge of the trace.
//!
//! A forward search over exact playback states, layered by chunk index.
//! Layers are kept whole while small, so short videos are solved exactly.
//! Larger layers are grouped by (level, buffer in 0.5 s bins) and only the
//! best few non-dominated states of each group survive.

use std::collections::BTreeMap;

use super::abr::{fetch_chunk, simulate_abr};
use super::{AbrEpisode, BandwidthTrace, FixedLevels, VideoManifest, REBUFFER_PENALTY};

const BUFFER_BIN: f64 = 0.5;
const EXACT_LAYER_LIMIT: usize = 2048;
const STATES_PER_BIN: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Node {
    level: usize,
    buffer: f64,
    time: f64,
    qoe: f64,
    parent: usize,
}

/// Highest-QoE level schedule for `trace`, replayed through the simulator.
pub fn offline_optimal_abr(trace: &BandwidthTrace, manifest: &VideoManifest) -> AbrEpisode {
    let chunk_len = manifest.chunk_duration;
    let q = |level: usize| manifest.bitrates[level] / 1000.0;
    let start = manifest.startup_level();
    let first = fetch_chunk(trace, 0.0, 0.0, manifest.chunk_size(start, 0), chunk_len, true);
    let mut layers: Vec<Vec<Node>> = vec![vec![Node {
        level: start,
        buffer: first.buffer,
        time: first.time,
        qoe: q(start),
        parent: usize::MAX,
    }]];
    for index in 1..manifest.chunk_count {
        let prev = layers.last().expect("at least one layer");
        let mut next = Vec::with_capacity(prev.len() * manifest.levels());
        for (pi, node) in prev.iter().enumerate() {
            for level in 0..manifest.levels() {
                let step = fetch_chunk(
                    trace,
                    node.time,
                    node.buffer,
                    manifest.chunk_size(level, index),
                    chunk_len,
                    false,
                );
                next.push(Node {
                    level,
                    buffer: step.buffer,
                    time: step.time,
                    qoe: node.qoe + q(level) - REBUFFER_PENALTY * step.rebuffer - (q(level) - q(node.level)).abs(),
                    parent: pi,
                });
            }
        }
        if next.len() > EXACT_LAYER_LIMIT {
            next = prune(next);
        }
        layers.push(next);
    }

    let last = layers.last().expect("at least one layer");
    let mut best = 0;
    for (i, n) in last.iter().enumerate() {
        if n.qoe > last[best].qoe {
            best = i;
        }
    }
    let mut levels = vec![0; manifest.chunk_count];
    let mut at = best;
    for (index, layer) in layers.iter().enumerate().rev() {
        levels[index] = layer[at].level;
        at = layer[at].parent;
    }
    simulate_abr(&mut FixedLevels(levels), trace, manifest)
}

fn dominates(a: &Node, b: &Node) -> bool {
    a.qoe >= b.qoe && a.time <= b.time && a.buffer >= b.buffer
}

fn prune(nodes: Vec<Node>) -> Vec<Node> {
    let mut bins: BTreeMap<(usize, i64), Vec<Node>> = BTreeMap::new();
    for n in nodes {
        let key = (n.level, (n.buffer / BUFFER_BIN).floor() as i64);
        bins.entry(key).or_default().push(n);
    }
    let mut kept = Vec::new();
    for (_, mut group) in bins {
        group.sort_by(|a, b| b.qoe.total_cmp(&a.qoe).then(a.time.total_cmp(&b.time)));
        let mut survivors: Vec<Node> = Vec::with_capacity(STATES_PER_BIN);
        for n in group {
            if survivors.len() == STATES_PER_BIN {
                break;
            }
            if !survivors.iter().any(|s| dominates(s, &n)) {
                survivors.push(n);
            }
        }
        kept.extend(survivors);
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exhaustive(trace: &BandwidthTrace, m: &VideoManifest) -> f64 {
        let n = m.chunk_count;
        let dim = m.levels();
        let total = dim.pow((n - 1) as u32);
        let mut best = f64::NEG_INFINITY;
        for code in 0..total {
            let mut levels = vec![0; n];
            let mut c = code;
            for l in levels.iter_mut().skip(1) {
                *l = c % dim;
                c /= dim;
            }
            best = best.max(simulate_abr(&mut FixedLevels(levels), trace, m).qoe);
        }
        best
    }

    #[test]
    fn single_chunk_is_the_startup_level() {
        let m = VideoManifest::new(4.0, vec![300.0, 750.0, 1200.0], 1).unwrap();
        let ep = offline_optimal_abr(&BandwidthTrace::constant("c", 1.0, 10.0), &m);
        assert_eq!(ep.chosen_levels, vec![1]);
        assert_eq!(ep.qoe, 0.75);
    }

    #[test]
    fn matches_enumeration_on_small_videos() {
        let m = VideoManifest::new(4.0, vec![300.0, 750.0, 1200.0], 3).unwrap();
        let trace = BandwidthTrace::constant("c", 0.9, 10.0);
        let ep = offline_optimal_abr(&trace, &m);
        assert!((ep.qoe - exhaustive(&trace, &m)).abs() < 1e-9);
        for (i, t) in super::super::generate_traces(9, 5, 1.0, 0.6, 0.2, 3.0, 60.0).iter().enumerate() {
            let m = VideoManifest::new(2.0 + i as f64, vec![300.0, 750.0, 1850.0], 4).unwrap();
            let ep = offline_optimal_abr(t, &m);
            assert!((ep.qoe - exhaustive(t, &m)).abs() < 1e-9);
        }
    }
}
