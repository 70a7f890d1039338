//! Scaling measurements for the selection pipeline and an all-pairs
//! similarity baseline.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::pipeline::{run, SelectionConfig};
use crate::synthetic::{generate_synthetic, MovingPatch, SyntheticSpec};

pub const BASELINE_GUARD: usize = 65_536;
pub const WORKLOAD_SEED: u64 = 0x5EED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchKind {
    Pipeline,
    AllPairsBaseline,
}

/// Median wall times in milliseconds for one workload size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub kind: BenchKind,
    pub n: usize,
    pub d: usize,
    pub threads: usize,
    pub reps: usize,
    pub graph_ms: f64,
    pub srts_ms: f64,
    pub dets_ms: f64,
    pub budget_ms: f64,
    pub total_ms: f64,
    pub workload_hash: u64,
}

pub const CSV_HEADER: &str = "n,d,threads,stage,median_ms,reps";

impl BenchRecord {
    pub fn csv_lines(&self) -> Vec<String> {
        let stages: Vec<(&str, f64)> = match self.kind {
            BenchKind::Pipeline => vec![
                ("graph", self.graph_ms),
                ("srts", self.srts_ms),
                ("dets", self.dets_ms),
                ("budget", self.budget_ms),
                ("total", self.total_ms),
            ],
            BenchKind::AllPairsBaseline => vec![("all_pairs_baseline", self.total_ms)],
        };
        stages
            .into_iter()
            .map(|(stage, ms)| {
                format!("{},{},{},{stage},{ms:.4},{}", self.n, self.d, self.threads, self.reps)
            })
            .collect()
    }
}

/// Seeded synthetic video with `n` tokens: 16x16 frames when `n` is a
/// multiple of 256, otherwise `n` single-token frames.
pub fn workload(n: usize, d: usize) -> Result<TokenGrid> {
    if n == 0 || d == 0 {
        return Err(Error::Config("workload size and dim must be >= 1".into()));
    }
    let values = n
        .checked_mul(d)
        .ok_or_else(|| Error::Resource(format!("workload n={n} d={d} overflows")))?;
    let mut probe: Vec<f32> = Vec::new();
    probe
        .try_reserve_exact(values)
        .map_err(|_| Error::Resource(format!("cannot allocate workload n={n} d={d}")))?;
    drop(probe);

    let (frames, side) = if n.is_multiple_of(256) { (n / 256, 16) } else { (n, 1) };
    let mut spec = SyntheticSpec::new(frames, side, side, d);
    spec.seed = WORKLOAD_SEED;
    spec.noise = 0.05;
    if d >= 2 {
        spec.cuts = (32..frames).step_by(32).collect();
    }
    if side > 1 {
        spec.patches = vec![
            MovingPatch { size: 3, start_row: 2, start_col: 0, velocity: (0, 1), offset: 6.0 },
            MovingPatch { size: 2, start_row: 10, start_col: 8, velocity: (1, 1), offset: 1.5 },
        ];
    }
    generate_synthetic(&spec)
}

pub fn workload_hash(grid: &TokenGrid) -> u64 {
    let mut h = DefaultHasher::new();
    let s = grid.shape();
    (s.frames, s.height, s.width, s.dim).hash(&mut h);
    for v in grid.features() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::Config("at least one size is required".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sizes must be strictly ascending".into()));
    }
    Ok(())
}

/// Times the full pipeline (default configuration, `threads` workers) on
/// each size: one warmup, then `reps` measured runs, reporting medians.
pub fn run_scaling(sizes: &[usize], d: usize, reps: usize, threads: usize) -> Result<Vec<BenchRecord>> {
    if reps < 3 {
        return Err(Error::Config(format!("reps must be >= 3, got {reps}")));
    }
    check_sizes(sizes)?;
    let config = SelectionConfig { threads: Some(threads.max(1)), ..Default::default() };
    let mut records = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let grid = workload(n, d)?;
        let pipeline_err = |e: crate::pipeline::StageError| Error::Resource(format!("n={n}: {e}"));
        run(&grid, &config).map_err(pipeline_err)?;
        let mut samples: [Vec<f64>; 5] = Default::default();
        let mut used_threads = 0;
        for _ in 0..reps {
            let t = run(&grid, &config).map_err(pipeline_err)?.timing;
            used_threads = t.threads;
            for (slot, v) in samples.iter_mut().zip([t.graph_ms, t.srts_ms, t.dets_ms, t.budget_ms, t.total_ms]) {
                slot.push(v);
            }
        }
        let [g, s, de, b, tot] = samples.map(|mut v| median(&mut v));
        records.push(BenchRecord {
            kind: BenchKind::Pipeline,
            n,
            d,
            threads: used_threads,
            reps,
            graph_ms: g,
            srts_ms: s,
            dets_ms: de,
            budget_ms: b,
            total_ms: tot,
            workload_hash: workload_hash(&grid),
        });
    }
    Ok(records)
}

/// Sum of all pairwise cosines; the `O(N^2 d)` contrast curve.
pub fn all_pairs_similarity(grid: &TokenGrid) -> f64 {
    let d = grid.dim();
    let unit: Vec<f64> = (0..grid.len())
        .flat_map(|k| {
            let x = grid.token(k);
            let norm = x.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            x.iter().map(move |&v| v as f64 * inv)
        })
        .collect();
    let mut total = 0.0;
    for i in 0..grid.len() {
        let a = &unit[i * d..(i + 1) * d];
        for j in i + 1..grid.len() {
            let b = &unit[j * d..(j + 1) * d];
            total += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        }
    }
    total
}

/// Single-threaded all-pairs cosine pass over the same workloads.
pub fn run_quadratic_baseline(sizes: &[usize], d: usize, reps: usize) -> Result<Vec<BenchRecord>> {
    check_sizes(sizes)?;
    if reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    if let Some(&n) = sizes.iter().find(|&&n| n > BASELINE_GUARD) {
        return Err(Error::Guard(format!("baseline size {n} exceeds {BASELINE_GUARD}")));
    }
    let mut records = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let grid = workload(n, d)?;
        std::hint::black_box(all_pairs_similarity(&grid));
        let mut times: Vec<f64> = (0..reps)
            .map(|_| {
                let t = Instant::now();
                std::hint::black_box(all_pairs_similarity(std::hint::black_box(&grid)));
                t.elapsed().as_secs_f64() * 1e3
            })
            .collect();
        records.push(BenchRecord {
            kind: BenchKind::AllPairsBaseline,
            n,
            d,
            threads: 1,
            reps,
            graph_ms: 0.0,
            srts_ms: 0.0,
            dets_ms: 0.0,
            budget_ms: 0.0,
            total_ms: median(&mut times),
            workload_hash: workload_hash(&grid),
        });
    }
    Ok(records)
}

/// `(n_small, n_large, time_large / time_small)` for consecutive records.
pub fn growth_ratios(records: &[BenchRecord], pick: impl Fn(&BenchRecord) -> f64) -> Vec<(usize, usize, f64)> {
    records
        .windows(2)
        .map(|w| (w[0].n, w[1].n, pick(&w[1]) / pick(&w[0]).max(1e-9)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reps_precondition() {
        assert!(matches!(run_scaling(&[256], 8, 1, 1), Err(Error::Config(_))));
        assert!(run_scaling(&[512, 256], 8, 3, 1).is_err());
    }

    #[test]
    fn small_scaling_run() {
        let recs = run_scaling(&[256, 512, 1024], 8, 3, 1).unwrap();
        assert_eq!(recs.len(), 3);
        for r in &recs {
            for stage in [r.graph_ms, r.srts_ms, r.dets_ms, r.budget_ms] {
                assert!(stage <= r.total_ms);
            }
            assert_eq!(r.threads, 1);
        }
        assert_eq!(growth_ratios(&recs, |r| r.total_ms).len(), 2);
    }

    #[test]
    fn workloads_are_deterministic_and_shared() {
        let a = workload(512, 8).unwrap();
        assert_eq!(a.shape().frames, 2);
        assert_eq!(workload_hash(&a), workload_hash(&workload(512, 8).unwrap()));
        let base = run_quadratic_baseline(&[512], 8, 1).unwrap();
        let pipe = run_scaling(&[512], 8, 3, 1).unwrap();
        assert_eq!(base[0].workload_hash, pipe[0].workload_hash);
    }

    #[test]
    fn baseline_degenerate_and_guard() {
        let r = run_quadratic_baseline(&[1], 4, 1).unwrap();
        assert_eq!(r[0].n, 1);
        assert!(matches!(run_quadratic_baseline(&[BASELINE_GUARD + 1], 4, 1), Err(Error::Guard(_))));
    }

    #[test]
    fn all_pairs_matches_closed_form() {
        // Identical tokens: every pair contributes 1.
        let grid = TokenGrid::new(crate::GridShape::new(1, 1, 5, 2).unwrap(), vec![1.0; 10]).unwrap();
        assert!((all_pairs_similarity(&grid) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn csv_rows() {
        let r = &run_scaling(&[256], 4, 3, 1).unwrap()[0];
        let lines = r.csv_lines();
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("256,4,1,total,"));
    }
}
