//! Event token selection over temporal edges.
//!
//! A token is an event token when the temporal edge from its predecessor
//! (same position, previous frame) has similarity strictly below `tau_diff`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::SpatioTemporalGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DiffThresholdMode {
    Fixed { tau_diff: f64 },
    /// Threshold at the `p`-th percentile of temporal difference scores `1 - w`.
    Percentile { p: f64 },
}

impl Default for DiffThresholdMode {
    fn default() -> Self {
        DiffThresholdMode::Fixed { tau_diff: 0.2 }
    }
}

impl DiffThresholdMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DiffThresholdMode::Fixed { tau_diff } if !(-1.0..=1.0).contains(&tau_diff) => Err(
                Error::Config(format!("tau_diff must be in [-1, 1], got {tau_diff}")),
            ),
            DiffThresholdMode::Percentile { p } if !(p > 0.0 && p < 100.0) => Err(Error::Config(
                format!("percentile must be in (0, 100), got {p}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Resolves the similarity threshold used by [`select_event_tokens`].
///
/// Percentile mode uses nearest rank: the difference score at 1-based rank
/// `ceil(p / 100 * |E_T|)` in ascending order, returned as `1 - D*`.
pub fn resolve_threshold(mode: DiffThresholdMode, graph: &SpatioTemporalGraph) -> Result<f64> {
    mode.validate()?;
    match mode {
        DiffThresholdMode::Fixed { tau_diff } => Ok(tau_diff),
        DiffThresholdMode::Percentile { p } => {
            let weights = graph.temporal_weights();
            if weights.is_empty() {
                return Err(Error::EmptyDomain(
                    "percentile threshold needs at least one temporal edge (input has a single frame)"
                        .into(),
                ));
            }
            let n = weights.len();
            let rank = ((p * n as f64) / 100.0 - 1e-9).ceil().clamp(1.0, n as f64) as usize;
            let mut diffs: Vec<f64> = weights.iter().map(|w| 1.0 - w).collect();
            let (_, nth, _) = diffs.select_nth_unstable_by(rank - 1, f64::total_cmp);
            Ok(1.0 - *nth)
        }
    }
}

/// Later endpoints of temporal edges with `w < tau_diff`, ascending.
pub fn select_event_tokens(graph: &SpatioTemporalGraph, tau_diff: f64) -> Vec<usize> {
    graph
        .temporal_edges()
        .filter(|&(_, _, w)| w < tau_diff)
        .map(|(_, later, _)| later)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameDiff {
    pub frame: usize,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Temporal edges into this frame with weight below the threshold.
    pub flagged: usize,
}

/// One entry per frame `1..T` describing the temporal edges entering it.
pub fn temporal_diff_profile(graph: &SpatioTemporalGraph, tau_diff: f64) -> Vec<FrameDiff> {
    let fl = graph.shape().frame_len();
    graph
        .temporal_weights()
        .chunks(fl)
        .enumerate()
        .map(|(f, ws)| FrameDiff {
            frame: f + 1,
            min: ws.iter().copied().fold(f64::INFINITY, f64::min),
            mean: ws.iter().sum::<f64>() / ws.len() as f64,
            max: ws.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            flagged: ws.iter().filter(|&&w| w < tau_diff).count(),
        })
        .collect()
}
