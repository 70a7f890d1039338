//! Deterministic synthetic videos for tests and benchmarks.
//!
//! Construction, before noise:
//!
//! * Each scene (the span between scene cuts) owns a unit background
//!   direction `u`. Every background token is `u + t_p` where the texture
//!   `t_p` is orthogonal to `u` with norm [`TEXTURE_NORM`], so any two
//!   background tokens of one scene have cosine >= 0.996.
//! * Moving patches replace the background with `u + offset * v`, `v` a unit
//!   direction orthogonal to `u`, drawn per patch and scene.
//! * With cuts present, even scenes live in the first half of the channels
//!   and odd scenes in the second half. Tokens on either side of a cut are
//!   therefore exactly orthogonal (cosine 0).
//!
//! Uniform noise in `[-noise, noise]` is added to every value last.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{GridShape, TokenGrid};

pub const TEXTURE_NORM: f64 = 0.04;

#[derive(Debug, Clone, PartialEq)]
pub struct MovingPatch {
    /// Side length of the square patch, in tokens.
    pub size: usize,
    pub start_row: usize,
    pub start_col: usize,
    /// Displacement per frame; positions wrap around the frame edges.
    pub velocity: (i64, i64),
    /// Magnitude of the patch's deviation from the background direction.
    pub offset: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub dim: usize,
    pub seed: u64,
    pub patches: Vec<MovingPatch>,
    /// Frames at which a new scene starts; each in `[1, frames)`.
    pub cuts: Vec<usize>,
    pub noise: f32,
}

impl SyntheticSpec {
    pub fn new(frames: usize, height: usize, width: usize, dim: usize) -> Self {
        SyntheticSpec {
            frames,
            height,
            width,
            dim,
            seed: 0,
            patches: Vec::new(),
            cuts: Vec::new(),
            noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<GridShape> {
        let shape = GridShape::new(self.frames, self.height, self.width, self.dim)
            .map_err(|e| Error::Config(e.to_string()))?;
        for &cut in &self.cuts {
            if cut == 0 || cut >= self.frames {
                return Err(Error::Config(format!(
                    "scene cut at frame {cut} outside [1, {})",
                    self.frames
                )));
            }
        }
        if !self.cuts.is_empty() && self.dim < 2 {
            return Err(Error::Config("scene cuts require dim >= 2".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config(format!("noise must be finite and >= 0, got {}", self.noise)));
        }
        for patch in &self.patches {
            if patch.size == 0 {
                return Err(Error::Config("patch size must be >= 1".into()));
            }
            if !patch.offset.is_finite() {
                return Err(Error::Config("patch offset must be finite".into()));
            }
        }
        Ok(shape)
    }
}

/// Unit vector inside `block`, orthogonal to `against` when given.
fn random_direction(
    rng: &mut ChaCha8Rng,
    dim: usize,
    block: (usize, usize),
    against: Option<&[f64]>,
) -> Vec<f64> {
    let (lo, hi) = block;
    for _ in 0..64 {
        let mut v = vec![0.0f64; dim];
        for x in &mut v[lo..hi] {
            *x = rng.gen_range(-1.0..1.0);
        }
        if let Some(u) = against {
            let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, b) in v.iter_mut().zip(u) {
                *x -= proj * b;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
    // Block too small to hold an orthogonal direction.
    vec![0.0; dim]
}

struct Scene {
    background: Vec<f64>,
    textures: Vec<Vec<f64>>,
    patch_dirs: Vec<Vec<f64>>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TokenGrid> {
    let shape = spec.validate()?;
    let mut cuts = spec.cuts.clone();
    cuts.sort_unstable();
    cuts.dedup();

    let dim = spec.dim;
    let frame_len = shape.frame_len();
    let blocks = if cuts.is_empty() {
        [(0, dim), (0, dim)]
    } else {
        [(0, dim / 2), (dim / 2, dim)]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scenes: Vec<Scene> = (0..=cuts.len())
        .map(|s| {
            let block = blocks[s % 2];
            let background = random_direction(&mut rng, dim, block, None);
            let textures = (0..frame_len)
                .map(|_| {
                    let mut t = random_direction(&mut rng, dim, block, Some(&background));
                    t.iter_mut().for_each(|x| *x *= TEXTURE_NORM);
                    t
                })
                .collect();
            let patch_dirs = spec
                .patches
                .iter()
                .map(|_| random_direction(&mut rng, dim, block, Some(&background)))
                .collect();
            Scene { background, textures, patch_dirs }
        })
        .collect();

    let mut features = vec![0.0f32; shape.value_count()];
    let mut token = vec![0.0f64; dim];
    for frame in 0..spec.frames {
        let scene = &scenes[cuts.partition_point(|&c| c <= frame)];
        for row in 0..spec.height {
            for col in 0..spec.width {
                let p = row * spec.width + col;
                let covering = spec
                    .patches
                    .iter()
                    .position(|patch| covers(patch, frame, row, col, spec.height, spec.width));
                for (c, out) in token.iter_mut().enumerate() {
                    *out = scene.background[c]
                        + match covering {
                            Some(i) => spec.patches[i].offset as f64 * scene.patch_dirs[i][c],
                            None => scene.textures[p][c],
                        };
                }
                let base = (frame * frame_len + p) * dim;
                for (dst, &v) in features[base..base + dim].iter_mut().zip(&token) {
                    *dst = v as f32;
                }
            }
        }
    }

    if spec.noise > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9E37_79B9_7F4A_7C15);
        let amp = spec.noise;
        for v in &mut features {
            *v += noise_rng.gen_range(-amp..=amp);
        }
    }

    TokenGrid::new(shape, features)
}

fn covers(patch: &MovingPatch, frame: usize, row: usize, col: usize, h: usize, w: usize) -> bool {
    let top = (patch.start_row as i64 + patch.velocity.0 * frame as i64).rem_euclid(h as i64) as usize;
    let left = (patch.start_col as i64 + patch.velocity.1 * frame as i64).rem_euclid(w as i64) as usize;
    let dr = (row + h - top) % h;
    let dc = (col + w - left) % w;
    dr < patch.size && dc < patch.size
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn static_video_has_identical_frames() {
        let mut spec = SyntheticSpec::new(4, 3, 3, 8);
        spec.seed = 11;
        let grid = generate_synthetic(&spec).unwrap();
        let fl = 9;
        for k in fl..grid.len() {
            assert_eq!(grid.token(k), grid.token(k - fl));
            assert!((cos(grid.token(k), grid.token(k - fl)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cut_frame_is_dissimilar_to_predecessor() {
        let mut spec = SyntheticSpec::new(8, 4, 4, 16);
        spec.seed = 3;
        spec.cuts = vec![4];
        spec.patches.push(MovingPatch {
            size: 2,
            start_row: 0,
            start_col: 0,
            velocity: (0, 1),
            offset: 3.0,
        });
        let grid = generate_synthetic(&spec).unwrap();
        for p in 0..16 {
            let k = 4 * 16 + p;
            assert!(cos(grid.token(k), grid.token(k - 16)) <= 0.1);
        }
    }

    #[test]
    fn background_within_scene_is_coherent() {
        let mut spec = SyntheticSpec::new(3, 4, 4, 8);
        spec.seed = 5;
        let grid = generate_synthetic(&spec).unwrap();
        for a in 0..grid.len() {
            for b in 0..grid.len() {
                assert!(cos(grid.token(a), grid.token(b)) >= 0.95);
            }
        }
    }

    #[test]
    fn same_seed_same_tensor() {
        let mut spec = SyntheticSpec::new(6, 4, 5, 8);
        spec.seed = 7;
        spec.cuts = vec![2, 4];
        spec.noise = 0.05;
        spec.patches.push(MovingPatch {
            size: 2,
            start_row: 1,
            start_col: 3,
            velocity: (1, -1),
            offset: 2.0,
        });
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let mut other = spec.clone();
        other.seed = 8;
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn cut_out_of_range_is_rejected() {
        let mut spec = SyntheticSpec::new(8, 2, 2, 4);
        spec.cuts = vec![0];
        assert!(matches!(generate_synthetic(&spec), Err(Error::Config(_))));
        spec.cuts = vec![8];
        assert!(matches!(generate_synthetic(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn patches_wrap_around() {
        let patch = MovingPatch { size: 2, start_row: 3, start_col: 3, velocity: (0, 0), offset: 1.0 };
        assert!(covers(&patch, 0, 0, 0, 4, 4));
        assert!(covers(&patch, 0, 3, 3, 4, 4));
        assert!(!covers(&patch, 0, 1, 1, 4, 4));
    }
}
