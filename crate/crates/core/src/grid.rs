//! Token feature tensor of shape `(frames, height, width, dim)`.
//!
//! Tokens are stored in raster order: frame-major, then row, then column.
//! Token `k` owns the feature slice `features[k * dim..(k + 1) * dim]`.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridShape {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub dim: usize,
}

impl GridShape {
    pub fn new(frames: usize, height: usize, width: usize, dim: usize) -> Result<Self> {
        let shape = GridShape { frames, height, width, dim };
        shape.check()?;
        Ok(shape)
    }

    fn check(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 || self.dim == 0 {
            return Err(Error::Validation(format!(
                "all grid dimensions must be >= 1, got T={} H={} W={} d={}",
                self.frames, self.height, self.width, self.dim
            )));
        }
        if self.value_count_checked().is_none() {
            return Err(Error::Validation("grid size overflows usize".into()));
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    /// Total token count `N = T * H * W`.
    pub fn tokens(&self) -> usize {
        self.frames * self.frame_len()
    }

    pub fn value_count(&self) -> usize {
        self.tokens() * self.dim
    }

    pub(crate) fn value_count_checked(&self) -> Option<usize> {
        self.frames
            .checked_mul(self.height)?
            .checked_mul(self.width)?
            .checked_mul(self.dim)
    }

    #[inline]
    pub fn position(&self, index: usize) -> TokenPos {
        let frame_len = self.frame_len();
        let within = index % frame_len;
        TokenPos {
            frame: index / frame_len,
            row: within / self.width,
            col: within % self.width,
        }
    }

    #[inline]
    pub fn index(&self, pos: TokenPos) -> usize {
        pos.frame * self.frame_len() + pos.row * self.width + pos.col
    }
}

/// Spatio-temporal coordinates of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TokenPos {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
}

/// Immutable, validated token tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    shape: GridShape,
    features: Vec<f32>,
}

impl TokenGrid {
    /// Builds a grid, rejecting empty dimensions, length mismatches and
    /// non-finite values.
    pub fn new(shape: GridShape, features: Vec<f32>) -> Result<Self> {
        shape.check()?;
        let expected = shape.value_count();
        if features.len() != expected {
            return Err(Error::Shape {
                expected,
                actual: features.len(),
            });
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature value at token {} (channel {})",
                pos / shape.dim,
                pos % shape.dim
            )));
        }
        Ok(TokenGrid { shape, features })
    }

    /// Converts 64-bit input to the 32-bit storage width.
    pub fn from_f64(shape: GridShape, features: &[f64]) -> Result<Self> {
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite feature value at token {} (channel {})",
                pos / shape.dim.max(1),
                pos % shape.dim.max(1)
            )));
        }
        let narrowed: Vec<f32> = features.iter().map(|&v| v as f32).collect();
        if let Some(pos) = narrowed.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "feature value at token {} overflows 32-bit storage",
                pos / shape.dim.max(1)
            )));
        }
        Self::new(shape, narrowed)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.tokens()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    #[inline]
    pub fn token(&self, index: usize) -> &[f32] {
        let d = self.shape.dim;
        &self.features[index * d..(index + 1) * d]
    }

    pub fn into_features(self) -> Vec<f32> {
        self.features
    }
}

/// Summary produced by [`validate_grid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDiagnostics {
    pub n: usize,
    pub dim: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub zero_norm_count: usize,
    pub min_abs_value: f32,
    pub max_abs_value: f32,
}

/// Reports zero-norm tokens and feature magnitude range. Never fails.
pub fn validate_grid(grid: &TokenGrid) -> GridDiagnostics {
    let shape = grid.shape();
    let zero_norm_count = (0..grid.len())
        .filter(|&k| grid.token(k).iter().all(|&v| v == 0.0))
        .count();
    let (min_abs_value, max_abs_value) = grid
        .features()
        .iter()
        .fold((f32::INFINITY, 0.0f32), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    GridDiagnostics {
        n: shape.tokens(),
        dim: shape.dim,
        frames: shape.frames,
        height: shape.height,
        width: shape.width,
        zero_norm_count,
        min_abs_value,
        max_abs_value,
    }
}
