//! Training-free compression of video visual tokens.
//!
//! Tokens from a `(frames, height, width, dim)` feature tensor are linked
//! into a sparse spatio-temporal similarity graph. Representative tokens are
//! chosen per similarity community, event tokens are taken where temporal
//! similarity collapses, and the union is trimmed (or filled) to exactly
//! `ceil(r * N)` tokens.
//!
//! ```
//! use st_simdiff::{pipeline, synthetic};
//!
//! let mut spec = synthetic::SyntheticSpec::new(8, 4, 4, 16);
//! spec.cuts = vec![4];
//! let grid = synthetic::generate_synthetic(&spec).unwrap();
//! let result = pipeline::run(&grid, &pipeline::SelectionConfig::default()).unwrap();
//! assert_eq!(result.indices.len(), 39);
//! ```

pub mod bench;
pub mod budget;
pub mod cli;
pub mod dets;
pub mod error;
pub mod graph;
pub mod grid;
pub mod oracle;
pub mod pipeline;
pub mod srts;
pub mod stsd;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
pub use grid::{GridShape, TokenGrid};
pub use pipeline::{run, SelectionConfig, SelectionResult};
