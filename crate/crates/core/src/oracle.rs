//! Brute-force reference implementations for small inputs.
//!
//! Nothing here calls into the optimized modules' algorithms. Conventions
//! (strict thresholds, tie-breaking, singleton centrality, rounding slack,
//! zero-norm cosine) are restated so that a bug in one path cannot hide in
//! a shared helper.

use serde::Serialize;

use crate::budget::{load_importance, ImportanceSource, Provenance, Selection, SelectionCounts};
use crate::dets::DiffThresholdMode;
use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::pipeline::{CommunityCap, SelectionConfig};
use crate::srts::CommunityPartition;

pub const COMPONENT_GUARD: usize = 4096;
pub const CENTRALITY_GUARD: usize = 1024;
pub const PIPELINE_GUARD: usize = 1024;

fn guard(what: &str, n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::Guard(format!("{what}: {n} exceeds reference limit {limit}")));
    }
    Ok(())
}

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut aa = 0.0f64;
    let mut bb = 0.0f64;
    for i in 0..a.len() {
        dot += a[i] as f64 * b[i] as f64;
    }
    for v in a {
        aa += *v as f64 * *v as f64;
    }
    for v in b {
        bb += *v as f64 * *v as f64;
    }
    let (na, nb) = (aa.sqrt(), bb.sqrt());
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn ceil_share(len: usize, ratio: f64) -> usize {
    let k = (len as f64 * ratio - 1e-9).ceil();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    a: usize,
    b: usize,
    w: f64,
    temporal: bool,
}

/// Every edge defined by the adjacency rules, found by checking all pairs.
fn all_edges(grid: &TokenGrid) -> Vec<Edge> {
    let s = grid.shape();
    let coords = |k: usize| {
        let frame = k / (s.height * s.width);
        let rest = k - frame * s.height * s.width;
        (frame as i64, (rest / s.width) as i64, (rest % s.width) as i64)
    };
    let mut edges = Vec::new();
    for a in 0..grid.len() {
        let (fa, ha, wa) = coords(a);
        for b in a + 1..grid.len() {
            let (fb, hb, wb) = coords(b);
            let spatial = fa == fb && (ha - hb).abs() + (wa - wb).abs() == 1;
            let temporal = ha == hb && wa == wb && (fa - fb).abs() == 1;
            if spatial || temporal {
                edges.push(Edge {
                    a,
                    b,
                    w: cos(grid.token(a), grid.token(b)),
                    temporal,
                });
            }
        }
    }
    edges
}

/// Member lists -> partition, with communities ordered by smallest member.
fn canonical(mut groups: Vec<Vec<usize>>, n: usize) -> CommunityPartition {
    for g in &mut groups {
        g.sort();
    }
    groups.retain(|g| !g.is_empty());
    groups.sort_by_key(|g| g[0]);
    let mut label = vec![usize::MAX; n];
    for (id, g) in groups.iter().enumerate() {
        for &k in g {
            label[k] = id;
        }
    }
    CommunityPartition::from_raw_labels(&label)
}

fn naive_components(n: usize, edges: &[Edge], tau_sim: f64) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &[usize], mut x: usize) -> usize {
        while parent[x] != x {
            x = parent[x];
        }
        x
    }
    for e in edges {
        if e.w > tau_sim {
            let (ra, rb) = (root(&parent, e.a), root(&parent, e.b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for k in 0..n {
        groups[root(&parent, k)].push(k);
    }
    groups
}

/// Breadth-first chunking of oversized groups, following any edge whose
/// endpoints are both in the group, neighbors in ascending order.
fn split_groups(n: usize, edges: &[Edge], groups: Vec<Vec<usize>>, cap: usize) -> Vec<Vec<usize>> {
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in edges {
        adjacency[e.a].push(e.b);
        adjacency[e.b].push(e.a);
    }
    for list in &mut adjacency {
        list.sort();
    }
    let mut out = Vec::new();
    for mut group in groups.into_iter().filter(|g| !g.is_empty()) {
        group.sort();
        if group.len() <= cap {
            out.push(group);
            continue;
        }
        let inside = |k: usize| group.binary_search(&k).is_ok();
        let mut seen = vec![false; n];
        let mut order = Vec::new();
        for &start in &group {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                order.push(u);
                for &v in &adjacency[u] {
                    if inside(v) && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        out.extend(order.chunks(cap).map(|c| c.to_vec()));
    }
    out
}

/// Connected components above `tau_sim` via an explicit edge list and an
/// uncompressed union-find.
pub fn brute_components(grid: &TokenGrid, tau_sim: f64) -> Result<CommunityPartition> {
    guard("brute_components tokens", grid.len(), COMPONENT_GUARD)?;
    let edges = all_edges(grid);
    Ok(canonical(naive_components(grid.len(), &edges, tau_sim), grid.len()))
}

/// Pairwise mean cosine within each community, `O(|c|^2 d)`. Terms are
/// summed in ascending order so tokens with equal multisets of
/// similarities get bit-identical scores.
pub fn brute_centrality(grid: &TokenGrid, partition: &CommunityPartition) -> Result<Vec<f64>> {
    guard("brute_centrality community size", partition.max_size(), CENTRALITY_GUARD)?;
    let mut scores = vec![0.0; grid.len()];
    for members in partition.communities() {
        if members.len() == 1 {
            scores[members[0] as usize] = 1.0;
            continue;
        }
        for &a in members {
            let mut terms: Vec<f64> = members
                .iter()
                .filter(|&&b| b != a)
                .map(|&b| cos(grid.token(a as usize), grid.token(b as usize)))
                .collect();
            terms.sort_by(f64::total_cmp);
            scores[a as usize] = terms.iter().sum::<f64>() / (members.len() - 1) as f64;
        }
    }
    Ok(scores)
}

/// Everything the reference pipeline computed.
#[derive(Debug, Clone)]
pub struct OracleRun {
    pub communities: CommunityPartition,
    pub centrality: Vec<f64>,
    pub representatives: Vec<usize>,
    pub events: Vec<usize>,
    pub tau_diff: f64,
    pub selection: Selection,
}

fn reference_importance(grid: &TokenGrid, source: &ImportanceSource) -> Result<Vec<f64>> {
    let n = grid.len();
    match source {
        ImportanceSource::Uniform => Ok(vec![1.0; n]),
        ImportanceSource::External(path) => load_importance(path, n),
        ImportanceSource::MeanCosineProxy => {
            let d = grid.dim();
            let unit: Vec<Vec<f64>> = (0..n)
                .map(|k| {
                    let x = grid.token(k);
                    let norm = x.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
                    if norm < 1e-12 {
                        vec![0.0; d]
                    } else {
                        x.iter().map(|&v| v as f64 / norm).collect()
                    }
                })
                .collect();
            let mean: Vec<f64> = (0..d).map(|i| unit.iter().map(|u| u[i]).sum::<f64>() / n as f64).collect();
            let mean_norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
            Ok(unit
                .iter()
                .map(|u| {
                    let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if un < 1e-12 || mean_norm < 1e-12 {
                        return 0.0;
                    }
                    let dot: f64 = u.iter().zip(&mean).map(|(a, b)| a * b).sum();
                    (dot / (un * mean_norm)).clamp(-1.0, 1.0)
                })
                .collect())
        }
    }
}

/// The full selection, literally: components, cap, pairwise centrality,
/// sorted top-k, an edge-list event scan and a sort-based budget step.
pub fn brute_pipeline(grid: &TokenGrid, config: &SelectionConfig) -> Result<OracleRun> {
    config.validate()?;
    let n = grid.len();
    guard("brute_pipeline tokens", n, PIPELINE_GUARD)?;
    let edges = all_edges(grid);

    let cap = match config.community_cap {
        CommunityCap::Auto => (1..=n).find(|c| c * c >= n).unwrap_or(1),
        CommunityCap::Limit(k) => k,
    };
    let groups = split_groups(n, &edges, naive_components(n, &edges, config.tau_sim), cap);
    let communities = canonical(groups, n);
    let centrality = brute_centrality(grid, &communities)?;

    let mut representatives = Vec::new();
    for members in communities.communities() {
        let mut ranked: Vec<usize> = members.iter().map(|&k| k as usize).collect();
        ranked.sort_by(|&a, &b| {
            centrality[b]
                .partial_cmp(&centrality[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        ranked.truncate(ceil_share(members.len(), config.ratio));
        representatives.extend(ranked);
    }
    representatives.sort();

    let temporal: Vec<&Edge> = edges.iter().filter(|e| e.temporal).collect();
    let tau_diff = match config.diff_mode {
        DiffThresholdMode::Fixed { tau_diff } => tau_diff,
        DiffThresholdMode::Percentile { p } => {
            if temporal.is_empty() {
                return Err(Error::EmptyDomain("no temporal edges".into()));
            }
            let mut diffs: Vec<f64> = temporal.iter().map(|e| 1.0 - e.w).collect();
            diffs.sort_by(f64::total_cmp);
            // Nearest rank: ceil(p/100 * count), 1-based.
            let rank = ((p * diffs.len() as f64) / 100.0 - 1e-9).ceil().max(1.0) as usize;
            1.0 - diffs[rank.min(diffs.len()) - 1]
        }
    };
    let mut events: Vec<usize> = temporal
        .iter()
        .filter(|e| e.w < tau_diff)
        .map(|e| e.b) // e.b lies in the later frame since a < b
        .collect();
    events.sort();
    events.dedup();

    let importance = reference_importance(grid, &config.importance)?;
    let selection = reference_budget(n, config, &representatives, &events, &importance);
    Ok(OracleRun {
        communities,
        centrality,
        representatives,
        events,
        tau_diff,
        selection,
    })
}

fn reference_budget(
    n: usize,
    config: &SelectionConfig,
    reps: &[usize],
    events: &[usize],
    importance: &[f64],
) -> Selection {
    let is_rep = |k: &usize| reps.contains(k);
    let is_event = |k: &usize| events.contains(k);
    let target = ceil_share(n, config.ratio);
    let mut candidates: Vec<usize> = (0..n).filter(|k| is_rep(k) || is_event(k)).collect();
    let mut counts = SelectionCounts {
        rep_count: reps.len(),
        event_count: events.len(),
        overlap_count: (0..n).filter(|k| is_rep(k) && is_event(k)).count(),
        candidate_count: candidates.len(),
        ..Default::default()
    };
    let mut fills = Vec::new();
    if candidates.len() > target {
        candidates.sort_by(|&a, &b| importance[a].partial_cmp(&importance[b]).unwrap().then(b.cmp(&a)));
        counts.dropped_count = candidates.len() - target;
        candidates.drain(..counts.dropped_count);
    } else if config.fill && candidates.len() < target {
        let mut rest: Vec<usize> = (0..n).filter(|k| !candidates.contains(k)).collect();
        rest.sort_by(|&a, &b| importance[b].partial_cmp(&importance[a]).unwrap().then(a.cmp(&b)));
        rest.truncate(target - candidates.len());
        counts.fill_count = rest.len();
        fills = rest;
    }
    let mut indices: Vec<usize> = candidates.iter().chain(&fills).copied().collect();
    indices.sort();
    let provenance = indices
        .iter()
        .map(|k| match (is_rep(k), is_event(k)) {
            (true, true) => Provenance::Both,
            (true, false) => Provenance::Representative,
            (false, true) => Provenance::Event,
            (false, false) => Provenance::Fill,
        })
        .collect();
    Selection {
        n,
        n_target: target,
        indices,
        provenance,
        counts,
    }
}

/// Comparison of an optimized run against the reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub case: String,
    pub max_score_deviation: f64,
    pub partition_equal: bool,
    pub indices_equal: bool,
    pub provenance_equal: bool,
    /// Tokens in exactly one of the two index sets.
    pub symmetric_difference: usize,
}

impl OracleReport {
    pub fn compare(
        case: impl Into<String>,
        communities: &CommunityPartition,
        centrality: &[f64],
        selection: &Selection,
        oracle: &OracleRun,
    ) -> Self {
        let max_score_deviation = centrality
            .iter()
            .zip(&oracle.centrality)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let ours: std::collections::BTreeSet<_> = selection.indices.iter().collect();
        let theirs: std::collections::BTreeSet<_> = oracle.selection.indices.iter().collect();
        OracleReport {
            case: case.into(),
            max_score_deviation,
            partition_equal: *communities == oracle.communities,
            indices_equal: selection.indices == oracle.selection.indices,
            provenance_equal: selection.provenance == oracle.selection.provenance,
            symmetric_difference: ours.symmetric_difference(&theirs).count(),
        }
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.partition_equal
            && self.indices_equal
            && self.provenance_equal
            && self.max_score_deviation < tolerance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridShape;

    fn grid_from(t: usize, h: usize, w: usize, d: usize, values: Vec<f32>) -> TokenGrid {
        TokenGrid::new(GridShape::new(t, h, w, d).unwrap(), values).unwrap()
    }

    #[test]
    fn identical_grid_is_one_component() {
        let grid = grid_from(2, 3, 3, 2, vec![1.0; 36]);
        assert_eq!(brute_components(&grid, 0.8).unwrap().community_count(), 1);
    }

    #[test]
    fn threshold_one_gives_singletons() {
        let values: Vec<f32> = (0..2 * 2 * 3 * 3).map(|i| ((i * 37 % 11) as f32) - 5.0).collect();
        let grid = grid_from(2, 2, 3, 3, values);
        assert_eq!(brute_components(&grid, 1.0).unwrap().community_count(), 12);
    }

    #[test]
    fn hand_checked_centrality() {
        let grid = grid_from(1, 1, 3, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let part = CommunityPartition::from_raw_labels(&[0, 0, 0]);
        assert_eq!(brute_centrality(&grid, &part).unwrap(), vec![0.5, 0.5, 0.0]);
        let singles = CommunityPartition::from_raw_labels(&[0, 1, 2]);
        assert_eq!(brute_centrality(&grid, &singles).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn guards() {
        let grid = grid_from(1, 1, 1025, 1, vec![1.0; 1025]);
        assert!(matches!(brute_pipeline(&grid, &SelectionConfig::default()), Err(Error::Guard(_))));
        let grid = grid_from(1, 1, 4097, 1, vec![1.0; 4097]);
        assert!(matches!(brute_components(&grid, 0.5), Err(Error::Guard(_))));
    }

    #[test]
    fn full_ratio_keeps_all() {
        let grid = grid_from(2, 2, 2, 2, (0..16).map(|i| i as f32).collect());
        let config = SelectionConfig { ratio: 1.0, ..Default::default() };
        assert_eq!(brute_pipeline(&grid, &config).unwrap().selection.indices, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn static_video_has_no_events() {
        let grid = grid_from(3, 2, 2, 2, vec![0.5; 24]);
        let config = SelectionConfig { ratio: 0.3, ..Default::default() };
        assert!(brute_pipeline(&grid, &config).unwrap().events.is_empty());
    }
}
