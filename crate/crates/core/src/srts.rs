//! Representative token selection.
//!
//! The graph is thresholded at `tau_sim` (edges with weight strictly above
//! it survive), its connected components become communities, oversized
//! communities are split, and each community keeps its `ceil(|c| * r)`
//! most central tokens.

use rayon::prelude::*;

use crate::budget::retain_count;
use crate::error::{Error, Result};
use crate::graph::{norm_f64, SpatioTemporalGraph, ZERO_NORM};
use crate::grid::TokenGrid;

/// Tokens grouped into communities.
///
/// Community ids are dense and ordered by each community's smallest member;
/// member lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunityPartition {
    labels: Vec<u32>,
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl CommunityPartition {
    /// Canonicalizes an arbitrary per-token labelling. Tokens sharing a raw
    /// label end up in the same community.
    pub fn from_raw_labels(raw: &[usize]) -> Self {
        let n = raw.len();
        let mut dense = vec![u32::MAX; raw.iter().copied().max().map_or(0, |m| m + 1)];
        let mut labels = Vec::with_capacity(n);
        let mut next = 0u32;
        for &r in raw {
            if dense[r] == u32::MAX {
                dense[r] = next;
                next += 1;
            }
            labels.push(dense[r]);
        }
        let m = next as usize;
        let mut offsets = vec![0usize; m + 1];
        for &l in &labels {
            offsets[l as usize + 1] += 1;
        }
        for i in 0..m {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets[..m].to_vec();
        let mut members = vec![0u32; n];
        for (k, &l) in labels.iter().enumerate() {
            members[cursor[l as usize]] = k as u32;
            cursor[l as usize] += 1;
        }
        CommunityPartition { labels, offsets, members }
    }

    pub fn token_count(&self) -> usize {
        self.labels.len()
    }

    pub fn community_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn label(&self, token: usize) -> usize {
        self.labels[token] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn members(&self, community: usize) -> &[u32] {
        &self.members[self.offsets[community]..self.offsets[community + 1]]
    }

    pub fn communities(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.community_count()).map(move |c| self.members(c))
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.offsets.windows(2).map(|w| w[1] - w[0])
    }

    pub fn max_size(&self) -> usize {
        self.sizes().max().unwrap_or(0)
    }

    /// Member lists in community order, as owned vectors.
    pub fn to_lists(&self) -> Vec<Vec<usize>> {
        self.communities()
            .map(|c| c.iter().map(|&k| k as usize).collect())
            .collect()
    }
}

struct DisjointSets {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Connected components of the subgraph keeping edges with `w > tau_sim`.
pub fn threshold_components(graph: &SpatioTemporalGraph, tau_sim: f64) -> CommunityPartition {
    let n = graph.node_count();
    let mut sets = DisjointSets::new(n);
    for i in 0..n {
        for (j, w, _) in graph.neighbors(i) {
            if j > i && w > tau_sim {
                sets.union(i as u32, j as u32);
            }
        }
    }
    let roots: Vec<usize> = (0..n as u32).map(|k| sets.find(k) as usize).collect();
    CommunityPartition::from_raw_labels(&roots)
}

/// Default community-size cap, `ceil(sqrt(N))`.
pub fn default_cap(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 1 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r.max(1)
}

/// Splits every community larger than `cap`.
///
/// Members are visited breadth-first from the smallest member, following
/// graph edges that stay inside the community (neighbors in ascending index
/// order). If the traversal stalls, it restarts from the smallest unvisited
/// member. The visit order is cut into consecutive chunks of `cap` tokens.
pub fn enforce_size_cap(
    partition: &CommunityPartition,
    graph: &SpatioTemporalGraph,
    cap: usize,
) -> Result<CommunityPartition> {
    if cap == 0 {
        return Err(Error::Config("community cap must be >= 1".into()));
    }
    if partition.max_size() <= cap {
        return Ok(partition.clone());
    }
    let n = partition.token_count();
    let mut raw = vec![0usize; n];
    let mut visited = vec![false; n];
    let mut order = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    let mut next_id = 0usize;
    for (c, members) in partition.communities().enumerate() {
        if members.len() <= cap {
            for &k in members {
                raw[k as usize] = next_id;
            }
            next_id += 1;
            continue;
        }
        order.clear();
        let mut restart = 0usize;
        while order.len() < members.len() {
            while visited[members[restart] as usize] {
                restart += 1;
            }
            let start = members[restart] as usize;
            visited[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                order.push(u);
                for (v, _, _) in graph.neighbors(u) {
                    if !visited[v] && partition.label(v) == c {
                        visited[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        for chunk in order.chunks(cap) {
            for &k in chunk {
                raw[k] = next_id;
            }
            next_id += 1;
        }
    }
    Ok(CommunityPartition::from_raw_labels(&raw))
}

/// Per-token centrality: mean cosine similarity to the other members of the
/// token's community. Singletons score 1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityScores(pub Vec<f64>);

impl CentralityScores {
    pub fn get(&self, token: usize) -> f64 {
        self.0[token]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn centrality_scores(grid: &TokenGrid, partition: &CommunityPartition) -> CentralityScores {
    let norms: Vec<f64> = (0..grid.len()).map(|k| norm_f64(grid.token(k))).collect();
    centrality_scores_with_norms(grid, partition, &norms)
}

/// Linear-time centrality using precomputed token norms.
///
/// With unit vectors `u_b` and `S = sum(u_b)` over the community,
/// `sum_{b != a} cos(a, b) = u_a . S - u_a . u_a`. Zero-norm tokens have
/// `u = 0` and contribute nothing.
pub fn centrality_scores_with_norms(
    grid: &TokenGrid,
    partition: &CommunityPartition,
    norms: &[f64],
) -> CentralityScores {
    let d = grid.dim();
    let inv: Vec<f64> = norms
        .iter()
        .map(|&n| if n < ZERO_NORM { 0.0 } else { 1.0 / n })
        .collect();

    let mut by_member = vec![0.0f64; partition.token_count()];
    let mut slots: Vec<(&[u32], &mut [f64])> = Vec::with_capacity(partition.community_count());
    let mut rest = by_member.as_mut_slice();
    for members in partition.communities() {
        let (head, tail) = rest.split_at_mut(members.len());
        slots.push((members, head));
        rest = tail;
    }

    slots.into_par_iter().for_each(|(members, out)| {
        if members.len() == 1 {
            out[0] = 1.0;
            return;
        }
        if let [a, b] = *members {
            // Both members share one cosine; keep the tie exact.
            let (sa, sb) = (inv[a as usize], inv[b as usize]);
            let c: f64 = grid
                .token(a as usize)
                .iter()
                .zip(grid.token(b as usize))
                .map(|(&x, &y)| x as f64 * sa * (y as f64 * sb))
                .sum();
            out.fill(c);
            return;
        }
        let mut sum = vec![0.0f64; d];
        for &b in members {
            let s = inv[b as usize];
            for (acc, &x) in sum.iter_mut().zip(grid.token(b as usize)) {
                *acc += x as f64 * s;
            }
        }
        let denom = (members.len() - 1) as f64;
        for (slot, &a) in out.iter_mut().zip(members) {
            let s = inv[a as usize];
            let (mut cross, mut own) = (0.0f64, 0.0f64);
            for (&x, &acc) in grid.token(a as usize).iter().zip(&sum) {
                let u = x as f64 * s;
                cross += u * acc;
                own += u * u;
            }
            *slot = (cross - own) / denom;
        }
    });

    let mut scores = vec![0.0f64; partition.token_count()];
    for (k, &score) in partition.members.iter().zip(&by_member) {
        scores[*k as usize] = score;
    }
    CentralityScores(scores)
}

/// Keeps the `ceil(|c| * ratio)` highest-scoring tokens of every community,
/// breaking ties by ascending token index. Returns ascending indices.
pub fn select_representatives(
    partition: &CommunityPartition,
    scores: &CentralityScores,
    ratio: f64,
) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("ratio must be in (0, 1], got {ratio}")));
    }
    let mut picked = Vec::new();
    let mut ranked = Vec::new();
    for members in partition.communities() {
        let keep = retain_count(members.len(), ratio);
        if keep >= members.len() {
            picked.extend(members.iter().map(|&k| k as usize));
            continue;
        }
        ranked.clear();
        ranked.extend(members.iter().map(|&k| k as usize));
        ranked.sort_unstable_by(|&a, &b| scores.0[b].total_cmp(&scores.0[a]).then(a.cmp(&b)));
        picked.extend_from_slice(&ranked[..keep]);
    }
    picked.sort_unstable();
    Ok(picked)
}
