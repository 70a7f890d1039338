//! Sparse spatio-temporal similarity graph.
//!
//! Spatial edges join 4-adjacent tokens within a frame; temporal edges join
//! the same position in consecutive frames. Every edge is weighted by the
//! cosine similarity of its endpoints. Both directions are stored in CSR
//! form with neighbors in ascending index order.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridShape, TokenGrid};

/// Norms below this are treated as zero vectors; their cosine is 0.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Spatial,
    Temporal,
}

#[inline]
pub(crate) fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += *x as f64 * *y as f64;
    }
    acc
}

#[inline]
pub(crate) fn norm_f64(a: &[f32]) -> f64 {
    dot_f64(a, a).sqrt()
}

#[inline]
pub(crate) fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    if norm_a < ZERO_NORM || norm_b < ZERO_NORM {
        return 0.0;
    }
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

/// Cosine similarity with 64-bit accumulation.
///
/// Returns 0.0 if either vector has norm below [`ZERO_NORM`].
///
/// # Panics
///
/// Panics when the slices differ in length.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine of vectors with different lengths");
    cosine_from_parts(dot_f64(a, b), norm_f64(a), norm_f64(b))
}

#[derive(Debug, Clone)]
pub struct SpatioTemporalGraph {
    shape: GridShape,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
    kinds: Vec<EdgeKind>,
    /// Weight of the edge `k -> k + H*W`, for every `k` outside the last frame.
    temporal: Vec<f64>,
    norms: Vec<f64>,
}

/// Builds the graph in one pass over the tokens. Work is split by frame on
/// the current rayon pool; the result does not depend on the worker count.
pub fn build_graph(grid: &TokenGrid) -> Result<SpatioTemporalGraph> {
    let shape = grid.shape();
    let n = shape.tokens();
    if n > u32::MAX as usize {
        return Err(Error::Validation(format!("{n} tokens exceed the 32-bit index space")));
    }
    let (w, fl, d) = (shape.width, shape.frame_len(), shape.dim);
    let features = grid.features();

    let mut norms = vec![0.0f64; n];
    norms
        .par_chunks_mut(fl)
        .zip(features.par_chunks(fl * d))
        .for_each(|(out, frame)| {
            for (nrm, x) in out.iter_mut().zip(frame.chunks_exact(d)) {
                *nrm = norm_f64(x);
            }
        });

    // Forward weights: right neighbor and lower neighbor within the frame.
    let mut right = vec![0.0f64; n];
    let mut down = vec![0.0f64; n];
    right
        .par_chunks_mut(fl)
        .zip(down.par_chunks_mut(fl))
        .enumerate()
        .for_each(|(f, (right, down))| {
            let base = f * fl;
            for p in 0..fl {
                let k = base + p;
                let xk = grid.token(k);
                if p % w + 1 < w {
                    right[p] = cosine_from_parts(dot_f64(xk, grid.token(k + 1)), norms[k], norms[k + 1]);
                }
                if p + w < fl {
                    down[p] = cosine_from_parts(dot_f64(xk, grid.token(k + w)), norms[k], norms[k + w]);
                }
            }
        });
    let mut temporal = vec![0.0f64; n - fl];
    temporal.par_chunks_mut(fl).enumerate().for_each(|(f, out)| {
        let base = f * fl;
        for (p, wt) in out.iter_mut().enumerate() {
            let k = base + p;
            *wt = cosine_from_parts(dot_f64(grid.token(k), grid.token(k + fl)), norms[k], norms[k + fl]);
        }
    });

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0usize);
    for k in 0..n {
        let deg = neighbor_slots(&shape, k).iter().flatten().count();
        offsets.push(offsets[k] + deg);
    }
    let m = offsets[n];
    let mut neighbors = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    let mut kinds = Vec::with_capacity(m);
    for k in 0..n {
        for (j, dir) in neighbor_slots(&shape, k).into_iter().flatten() {
            let (wt, kind) = match dir {
                Dir::Prev | Dir::Next => (temporal[k.min(j)], EdgeKind::Temporal),
                Dir::Left | Dir::Right => (right[k.min(j)], EdgeKind::Spatial),
                Dir::Up | Dir::Down => (down[k.min(j)], EdgeKind::Spatial),
            };
            neighbors.push(j as u32);
            weights.push(wt);
            kinds.push(kind);
        }
    }

    Ok(SpatioTemporalGraph {
        shape,
        offsets,
        neighbors,
        weights,
        kinds,
        temporal,
        norms,
    })
}

#[derive(Clone, Copy)]
enum Dir {
    Prev,
    Up,
    Left,
    Right,
    Down,
    Next,
}

/// Neighbors of `k` in ascending index order.
fn neighbor_slots(shape: &GridShape, k: usize) -> [Option<(usize, Dir)>; 6] {
    let (w, fl) = (shape.width, shape.frame_len());
    let pos = shape.position(k);
    [
        (pos.frame > 0).then(|| (k - fl, Dir::Prev)),
        (pos.row > 0).then(|| (k - w, Dir::Up)),
        (pos.col > 0).then(|| (k - 1, Dir::Left)),
        (pos.col + 1 < w).then(|| (k + 1, Dir::Right)),
        (pos.row + 1 < shape.height).then(|| (k + w, Dir::Down)),
        (pos.frame + 1 < shape.frames).then(|| (k + fl, Dir::Next)),
    ]
}

impl SpatioTemporalGraph {
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn node_count(&self) -> usize {
        self.shape.tokens()
    }

    /// Undirected edge count `|E_S| + |E_T|`.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn degree(&self, k: usize) -> usize {
        self.offsets[k + 1] - self.offsets[k]
    }

    /// Outgoing `(neighbor, weight, kind)` triples in ascending neighbor order.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = (usize, f64, EdgeKind)> + '_ {
        let range = self.offsets[k]..self.offsets[k + 1];
        self.neighbors[range.clone()]
            .iter()
            .zip(&self.weights[range.clone()])
            .zip(&self.kinds[range])
            .map(|((&j, &w), &kind)| (j as usize, w, kind))
    }

    /// Each undirected edge once as `(low, high, weight, kind)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64, EdgeKind)> + '_ {
        (0..self.node_count()).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _, _)| j > i)
                .map(move |(j, w, kind)| (i, j, w, kind))
        })
    }

    /// Temporal edges oriented earlier -> later, ascending by later index.
    pub fn temporal_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let fl = self.shape.frame_len();
        self.temporal.iter().enumerate().map(move |(k, &w)| (k, k + fl, w))
    }

    pub fn temporal_weights(&self) -> &[f64] {
        &self.temporal
    }

    pub fn temporal_edge_count(&self) -> usize {
        self.temporal.len()
    }

    pub fn spatial_edge_count(&self) -> usize {
        self.edge_count() - self.temporal.len()
    }

    /// Per-token L2 norms, 64-bit.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }
}

/// Closed-form `(|E_S|, |E_T|)` for a `T x H x W` grid.
pub fn expected_edge_counts(frames: usize, height: usize, width: usize) -> (usize, usize) {
    let spatial = frames * (height * (width - 1) + (height - 1) * width);
    let temporal = (frames - 1) * height * width;
    (spatial, temporal)
}

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSummary {
    pub count: usize,
    pub min: Option<f64>,
    pub mean: Option<f64>,
    pub max: Option<f64>,
    /// Counts over [`HISTOGRAM_BINS`] equal-width bins spanning `[-1, 1]`.
    pub histogram: Vec<usize>,
}

impl WeightSummary {
    fn from_weights(weights: impl Iterator<Item = f64>) -> Self {
        let mut histogram = vec![0usize; HISTOGRAM_BINS];
        let (mut count, mut sum) = (0usize, 0.0f64);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for w in weights {
            count += 1;
            sum += w;
            min = min.min(w);
            max = max.max(w);
            let bin = (((w + 1.0) / 2.0) * HISTOGRAM_BINS as f64).floor() as isize;
            histogram[bin.clamp(0, HISTOGRAM_BINS as isize - 1) as usize] += 1;
        }
        let some = |v: f64| (count > 0).then_some(v);
        WeightSummary {
            count,
            min: some(min),
            mean: some(sum / count.max(1) as f64),
            max: some(max),
            histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeStats {
    pub spatial: WeightSummary,
    pub temporal: WeightSummary,
    pub all: WeightSummary,
}

pub fn edge_stats(graph: &SpatioTemporalGraph) -> EdgeStats {
    let of_kind = |want: Option<EdgeKind>| {
        WeightSummary::from_weights(
            graph
                .edges()
                .filter(move |&(_, _, _, kind)| want.is_none_or(|k| k == kind))
                .map(|(_, _, w, _)| w),
        )
    };
    EdgeStats {
        spatial: of_kind(Some(EdgeKind::Spatial)),
        temporal: of_kind(Some(EdgeKind::Temporal)),
        all: of_kind(None),
    }
}
