//! Union of representative and event tokens, trimmed or filled to exactly
//! `ceil(r * N)` tokens by per-token importance.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{norm_f64, ZERO_NORM};
use crate::grid::TokenGrid;
use crate::stsd;

/// Slack subtracted before rounding up so that products like `10 * 0.3`
/// (`3.0000000000000004` in binary) count as the integer they denote.
pub const CEIL_SLACK: f64 = 1e-9;

/// `ceil(len * ratio)`, clamped to `[0, len]`.
pub fn retain_count(len: usize, ratio: f64) -> usize {
    let raw = (len as f64 * ratio - CEIL_SLACK).ceil();
    (raw.max(0.0) as usize).min(len)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ImportanceSource {
    /// Per-token scores exported from elsewhere (e.g. shallow-layer attention).
    External(PathBuf),
    /// Cosine between each unit-normalized token and the mean unit vector.
    #[default]
    MeanCosineProxy,
    Uniform,
}

impl fmt::Display for ImportanceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImportanceSource::External(p) => write!(f, "external:{}", p.display()),
            ImportanceSource::MeanCosineProxy => f.write_str("proxy"),
            ImportanceSource::Uniform => f.write_str("uniform"),
        }
    }
}

impl std::str::FromStr for ImportanceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proxy" => Ok(ImportanceSource::MeanCosineProxy),
            "uniform" => Ok(ImportanceSource::Uniform),
            _ => match s.strip_prefix("external:") {
                Some(path) if !path.is_empty() => Ok(ImportanceSource::External(path.into())),
                _ => Err(Error::Config(format!(
                    "importance must be proxy, uniform or external:PATH, got {s:?}"
                ))),
            },
        }
    }
}

impl Serialize for ImportanceSource {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

pub fn importance_scores(grid: &TokenGrid, source: &ImportanceSource) -> Result<Vec<f64>> {
    match source {
        ImportanceSource::External(path) => load_importance(path, grid.len()),
        ImportanceSource::Uniform => Ok(vec![1.0; grid.len()]),
        ImportanceSource::MeanCosineProxy => Ok(mean_cosine_proxy(grid)),
    }
}

fn mean_cosine_proxy(grid: &TokenGrid) -> Vec<f64> {
    let d = grid.dim();
    let n = grid.len();
    let inv: Vec<f64> = (0..n)
        .map(|k| {
            let nrm = norm_f64(grid.token(k));
            if nrm < ZERO_NORM {
                0.0
            } else {
                1.0 / nrm
            }
        })
        .collect();
    let mut mean = vec![0.0f64; d];
    for (k, &s) in inv.iter().enumerate() {
        for (m, &x) in mean.iter_mut().zip(grid.token(k)) {
            *m += x as f64 * s;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mean_norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    if mean_norm < ZERO_NORM {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| {
            if inv[k] == 0.0 {
                return 0.0;
            }
            let dot: f64 = grid
                .token(k)
                .iter()
                .zip(&mean)
                .map(|(&x, &m)| x as f64 * inv[k] * m)
                .sum();
            (dot / mean_norm).clamp(-1.0, 1.0)
        })
        .collect()
}

/// Reads `expected` importance scores.
///
/// Accepts either an STSD container shaped `T = H = 1, W = N, d = 1`, or a
/// little-endian `u64` count followed by that many little-endian `f32`.
pub fn load_importance(path: impl AsRef<Path>, expected: usize) -> Result<Vec<f64>> {
    decode_importance(&fs::read(path)?, expected)
}

pub fn decode_importance(bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f32> = if stsd::has_magic(bytes) {
        let grid = stsd::decode(bytes)?;
        let shape = grid.shape();
        if shape.frames != 1 || shape.height != 1 || shape.dim != 1 {
            return Err(Error::Format(format!(
                "importance container must be shaped 1x1xNx1, got {}x{}x{}x{}",
                shape.frames, shape.height, shape.width, shape.dim
            )));
        }
        grid.into_features()
    } else {
        if bytes.len() < 8 {
            return Err(Error::Corrupt("importance file shorter than its count prefix".into()));
        }
        let count = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let payload = &bytes[8..];
        if Some(payload.len() as u64) != count.checked_mul(4) {
            return Err(Error::Corrupt(format!(
                "importance prefix declares {count} scores but payload has {} bytes",
                payload.len()
            )));
        }
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    if values.len() != expected {
        return Err(Error::Shape {
            expected,
            actual: values.len(),
        });
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite importance score at token {k}")));
    }
    Ok(values.into_iter().map(f64::from).collect())
}

/// Count-prefixed encoding accepted by [`decode_importance`].
pub fn encode_importance(scores: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + scores.len() * 4);
    out.extend_from_slice(&(scores.len() as u64).to_le_bytes());
    for s in scores {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Why a token was retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Provenance {
    Representative = 0,
    Event = 1,
    Both = 2,
    Fill = 3,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Representative => "rep",
            Provenance::Event => "event",
            Provenance::Both => "both",
            Provenance::Fill => "fill",
        }
    }
}

impl Serialize for Provenance {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

/// Final token subset with provenance and bookkeeping counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Selection {
    pub n: usize,
    pub n_target: usize,
    pub indices: Vec<usize>,
    pub provenance: Vec<Provenance>,
    pub counts: SelectionCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SelectionCounts {
    /// `|T_rep|` before trimming.
    pub rep_count: usize,
    /// `|T_event|` before trimming.
    pub event_count: usize,
    pub overlap_count: usize,
    pub candidate_count: usize,
    pub dropped_count: usize,
    pub fill_count: usize,
}

/// Merges the representative and event sets and meets the budget.
///
/// Over budget, the lowest-importance candidates are dropped (equal scores:
/// higher index goes first). Under budget with `fill`, the highest-importance
/// non-candidates are added (equal scores: lower index first).
pub fn finalize_selection(
    n: usize,
    ratio: f64,
    t_rep: &[usize],
    t_event: &[usize],
    scores: &[f64],
    fill: bool,
) -> Result<Selection> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("ratio must be in (0, 1], got {ratio}")));
    }
    if scores.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: scores.len(),
        });
    }
    let mut tag: Vec<Option<Provenance>> = vec![None; n];
    for &k in t_rep {
        tag[k] = Some(Provenance::Representative);
    }
    let mut overlap_count = 0;
    for &k in t_event {
        tag[k] = Some(match tag[k] {
            Some(Provenance::Representative) | Some(Provenance::Both) => {
                overlap_count += 1;
                Provenance::Both
            }
            _ => Provenance::Event,
        });
    }
    let mut counts = SelectionCounts {
        rep_count: t_rep.len(),
        event_count: t_event.len(),
        overlap_count,
        ..Default::default()
    };
    let n_target = retain_count(n, ratio);
    let mut candidates: Vec<usize> = (0..n).filter(|&k| tag[k].is_some()).collect();
    counts.candidate_count = candidates.len();

    if candidates.len() > n_target {
        let excess = candidates.len() - n_target;
        // Ascending score, then descending index: the first `excess` go.
        candidates.select_nth_unstable_by(excess - 1, |&a, &b| {
            scores[a].total_cmp(&scores[b]).then(b.cmp(&a))
        });
        for &k in &candidates[..excess] {
            tag[k] = None;
        }
        counts.dropped_count = excess;
    } else if fill && candidates.len() < n_target {
        let deficit = n_target - candidates.len();
        let mut rest: Vec<usize> = (0..n).filter(|&k| tag[k].is_none()).collect();
        rest.select_nth_unstable_by(deficit - 1, |&a, &b| {
            scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
        });
        for &k in &rest[..deficit] {
            tag[k] = Some(Provenance::Fill);
        }
        counts.fill_count = deficit;
    }

    let (indices, provenance) = tag
        .iter()
        .enumerate()
        .filter_map(|(k, t)| t.map(|p| (k, p)))
        .unzip();
    Ok(Selection {
        n,
        n_target,
        indices,
        provenance,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;
    use proptest::prelude::*;

    fn grid_from(w: usize, d: usize, values: Vec<f32>) -> TokenGrid {
        TokenGrid::new(GridShape::new(1, 1, w, d).unwrap(), values).unwrap()
    }

    #[test]
    fn retain_count_rounding() {
        assert_eq!(retain_count(5, 0.5), 3);
        assert_eq!(retain_count(10, 0.3), 3);
        assert_eq!(retain_count(100, 0.3), 30);
        assert_eq!(retain_count(1, 0.3), 1);
        assert_eq!(retain_count(7, 1.0), 7);
        assert_eq!(retain_count(0, 0.5), 0);
        assert_eq!(retain_count(3, 0.34), 2);
    }

    #[test]
    fn uniform_scores() {
        let grid = grid_from(8, 1, vec![1.0; 8]);
        assert_eq!(importance_scores(&grid, &ImportanceSource::Uniform).unwrap(), vec![1.0; 8]);
    }

    #[test]
    fn proxy_scores() {
        let grid = grid_from(4, 2, vec![3.0, 4.0, 3.0, 4.0, 0.3, 0.4, 6.0, 8.0]);
        let s = importance_scores(&grid, &ImportanceSource::MeanCosineProxy).unwrap();
        assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let grid = grid_from(4, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let s = importance_scores(&grid, &ImportanceSource::MeanCosineProxy).unwrap();
        // mean = (0.75, 0.25); cos = 0.75 / |mean| and 0.25 / |mean|.
        let norm = (0.75f64 * 0.75 + 0.25 * 0.25).sqrt();
        assert!((s[0] - 0.75 / norm).abs() < 1e-12);
        assert!((s[2] - 0.25 / norm).abs() < 1e-12);
        assert!(s[0] > s[2] && s[1] == s[0] && s[3] == s[0]);
    }

    #[test]
    fn importance_file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("scores.bin");
        std::fs::write(&raw, encode_importance(&[0.5, 1.5, -2.0])).unwrap();
        assert_eq!(load_importance(&raw, 3).unwrap(), vec![0.5, 1.5, -2.0]);
        assert!(matches!(
            load_importance(&raw, 4),
            Err(Error::Shape { expected: 4, actual: 3 })
        ));

        let boxed = dir.path().join("scores.stsd");
        let grid = TokenGrid::new(GridShape::new(1, 1, 3, 1).unwrap(), vec![1.0, 2.0, 3.0]).unwrap();
        stsd::save_grid(&grid, &boxed).unwrap();
        assert_eq!(load_importance(&boxed, 3).unwrap(), vec![1.0, 2.0, 3.0]);

        let mut bytes = encode_importance(&[1.0, f32::INFINITY]);
        assert!(matches!(decode_importance(&bytes, 2), Err(Error::Validation(_))));
        bytes.pop();
        assert!(matches!(decode_importance(&bytes, 2), Err(Error::Corrupt(_))));
    }

    #[test]
    fn source_parsing() {
        assert_eq!("proxy".parse::<ImportanceSource>().unwrap(), ImportanceSource::MeanCosineProxy);
        assert_eq!("uniform".parse::<ImportanceSource>().unwrap(), ImportanceSource::Uniform);
        assert_eq!(
            "external:/tmp/a.bin".parse::<ImportanceSource>().unwrap(),
            ImportanceSource::External("/tmp/a.bin".into())
        );
        assert!("external:".parse::<ImportanceSource>().is_err());
        assert!("attention".parse::<ImportanceSource>().is_err());
    }

    #[test]
    fn over_budget_drops_lowest() {
        let scores: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let rep: Vec<usize> = (0..45).collect();
        let sel = finalize_selection(100, 0.3, &rep, &[], &scores, true).unwrap();
        assert_eq!(sel.n_target, 30);
        assert_eq!(sel.indices, (15..45).collect::<Vec<_>>());
        assert_eq!(sel.counts.dropped_count, 15);
        assert_eq!(sel.counts.fill_count, 0);
    }

    #[test]
    fn under_budget_fills_highest() {
        let scores: Vec<f64> = (0..100).map(|k| (k % 10) as f64).collect();
        let rep: Vec<usize> = (0..20).collect();
        let sel = finalize_selection(100, 0.3, &rep, &[], &scores, true).unwrap();
        assert_eq!(sel.indices.len(), 30);
        assert_eq!(sel.counts.fill_count, 10);
        // Score 9 at 29, 39, ..., 99 gives 8 tokens; then score 8 at 28, 38.
        let fills: Vec<usize> = sel
            .indices
            .iter()
            .zip(&sel.provenance)
            .filter(|(_, p)| **p == Provenance::Fill)
            .map(|(k, _)| *k)
            .collect();
        assert_eq!(fills, vec![28, 29, 38, 39, 49, 59, 69, 79, 89, 99]);

        let bare = finalize_selection(100, 0.3, &rep, &[], &scores, false).unwrap();
        assert_eq!(bare.indices.len(), 20);
    }

    #[test]
    fn full_ratio_keeps_everything() {
        let scores = vec![0.0; 6];
        let sel = finalize_selection(6, 1.0, &[0, 1, 2, 3, 4, 5], &[3, 4], &scores, true).unwrap();
        assert_eq!(sel.indices, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(sel.provenance[3], Provenance::Both);
        assert_eq!(sel.provenance[0], Provenance::Representative);
        assert_eq!(sel.counts.overlap_count, 2);
    }

    #[test]
    fn uniform_ties_drop_higher_index() {
        let scores = vec![1.0; 10];
        let sel = finalize_selection(10, 0.3, &[1, 3, 5, 7, 9], &[8], &scores, true).unwrap();
        assert_eq!(sel.indices, vec![1, 3, 5]);
        let sel = finalize_selection(10, 0.5, &[6], &[], &scores, true).unwrap();
        assert_eq!(sel.indices, vec![0, 1, 2, 3, 6]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(finalize_selection(3, 0.0, &[], &[], &[0.0; 3], true).is_err());
        assert!(finalize_selection(3, 0.5, &[], &[], &[0.0; 2], true).is_err());
    }

    fn sets() -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>, Vec<f64>, f64)> {
        (1usize..60).prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::btree_set(0..n, 0..=n).prop_map(|s| s.into_iter().collect()),
                proptest::collection::btree_set(0..n, 0..=n).prop_map(|s| s.into_iter().collect()),
                proptest::collection::vec((0i32..8).prop_map(f64::from), n),
                0.01f64..=1.0,
            )
        })
    }

    proptest! {
        #[test]
        fn budget_invariants((n, rep, event, scores, ratio) in sets(), shift in -50i32..50) {
            let sel = finalize_selection(n, ratio, &rep, &event, &scores, true).unwrap();
            prop_assert_eq!(sel.indices.len(), n.min(retain_count(n, ratio)));
            prop_assert!(sel.indices.windows(2).all(|w| w[0] < w[1]));

            let candidates: Vec<usize> = (0..n)
                .filter(|k| rep.contains(k) || event.contains(k))
                .collect();
            let kept: Vec<usize> = candidates.iter().copied().filter(|k| sel.indices.contains(k)).collect();
            for &d in candidates.iter().filter(|k| !sel.indices.contains(k)) {
                for &k in &kept {
                    prop_assert!(scores[d] < scores[k] || (scores[d] == scores[k] && d > k));
                }
            }
            for (k, p) in sel.indices.iter().zip(&sel.provenance) {
                let both = rep.contains(k) && event.contains(k);
                prop_assert_eq!(*p == Provenance::Both, both);
            }

            let shifted: Vec<f64> = scores.iter().map(|s| s + shift as f64).collect();
            let again = finalize_selection(n, ratio, &rep, &event, &shifted, true).unwrap();
            prop_assert_eq!(again.indices, sel.indices);
        }
    }
}
