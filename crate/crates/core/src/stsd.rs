//! STSD token container.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 4    | magic `b"STSD"`                    |
//! | 4      | 4    | version, `u32` = 1                 |
//! | 8      | 16   | T, H, W, d as four `u32`           |
//! | 24     | 1    | dtype code, `0` = f32              |
//! | 25     | 7    | zero padding                       |
//! | 32     | 4·N·d| f32 payload in raster order        |
//!
//! Trailing bytes are rejected.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridShape, TokenGrid};

pub const MAGIC: [u8; 4] = *b"STSD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
const DTYPE_F32: u8 = 0;

pub fn load_grid(path: impl AsRef<Path>) -> Result<TokenGrid> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

pub fn save_grid(grid: &TokenGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode(grid))?;
    file.sync_all()?;
    Ok(())
}

pub fn encode(grid: &TokenGrid) -> Vec<u8> {
    let shape = grid.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + grid.features().len() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [shape.frames, shape.height, shape.width, shape.dim] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.push(DTYPE_F32);
    out.extend_from_slice(&[0u8; 7]);
    for v in grid.features() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Returns true when `bytes` starts with the STSD magic.
pub fn has_magic(bytes: &[u8]) -> bool {
    bytes.len() >= 4 && bytes[..4] == MAGIC
}

pub fn decode(bytes: &[u8]) -> Result<TokenGrid> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && !has_magic(bytes) {
            return Err(Error::Format("bad magic, expected \"STSD\"".into()));
        }
        return Err(Error::Corrupt(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if !has_magic(bytes) {
        return Err(Error::Format("bad magic, expected \"STSD\"".into()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let dims = [u32_at(8), u32_at(12), u32_at(16), u32_at(20)];
    let dtype = bytes[24];
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype code {dtype}")));
    }
    if bytes[25..32].iter().any(|&b| b != 0) {
        return Err(Error::Format("nonzero header padding".into()));
    }
    if dims.contains(&0) {
        return Err(Error::Corrupt(format!(
            "zero dimension in header T={} H={} W={} d={}",
            dims[0], dims[1], dims[2], dims[3]
        )));
    }
    let shape = GridShape {
        frames: dims[0] as usize,
        height: dims[1] as usize,
        width: dims[2] as usize,
        dim: dims[3] as usize,
    };
    let values = shape
        .value_count_checked()
        .filter(|n| n.checked_mul(4).is_some())
        .ok_or_else(|| Error::Corrupt("header dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != values * 4 {
        return Err(Error::Corrupt(format!(
            "payload holds {} bytes, header T={} H={} W={} d={} requires {}",
            payload.len(),
            shape.frames,
            shape.height,
            shape.width,
            shape.dim,
            values * 4
        )));
    }
    let features = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TokenGrid::new(shape, features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TokenGrid {
        let shape = GridShape::new(2, 2, 2, 4).unwrap();
        TokenGrid::new(shape, (0..32).map(|i| i as f32 * 0.25 - 3.0).collect()).unwrap()
    }

    #[test]
    fn header_layout_is_exact() {
        let bytes = encode(&sample());
        assert_eq!(&bytes[..4], b"STSD");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..24], &[2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 4, 0, 0, 0]);
        assert_eq!(&bytes[24..32], &[0; 8]);
        assert_eq!(bytes.len(), 32 + 32 * 4);
        assert_eq!(&bytes[32..36], &(-3.0f32).to_le_bytes());
    }

    #[test]
    fn well_formed_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.stsd");
        save_grid(&sample(), &path).unwrap();
        let grid = load_grid(&path).unwrap();
        assert_eq!(grid.len(), 8);
        assert_eq!(grid, sample());
    }

    #[test]
    fn short_payload_is_corrupt() {
        let mut bytes = encode(&sample());
        bytes.pop();
        assert!(matches!(decode(&bytes), Err(Error::Corrupt(_))));
        let bytes = encode(&sample());
        assert!(matches!(decode(&bytes[..bytes.len() - 4]), Err(Error::Corrupt(_))));
    }

    #[test]
    fn trailing_bytes_are_corrupt() {
        let mut bytes = encode(&sample());
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(decode(&bytes), Err(Error::Corrupt(_))));
    }

    #[test]
    fn header_fields_are_checked() {
        let good = encode(&sample());

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[24] = 1;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[30] = 7;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));

        let mut bad = good;
        bad[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(decode(&bad), Err(Error::Corrupt(_))));
    }

    #[test]
    fn nan_payload_names_token() {
        let mut bytes = encode(&sample());
        let off = HEADER_LEN + 4 * 13;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match decode(&bytes) {
            Err(Error::Validation(msg)) => assert!(msg.contains("token 3"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn encode_decode_is_identity(
            t in 1usize..4, h in 1usize..4, w in 1usize..4, d in 1usize..9,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let shape = GridShape::new(t, h, w, d).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f32> = (0..shape.value_count())
                .map(|_| f32::from_bits(rng.gen::<u32>() & 0xBF7F_FFFF))
                .collect();
            let grid = TokenGrid::new(shape, values).unwrap();
            let back = decode(&encode(&grid)).unwrap();
            let same_bits = back.features().iter().zip(grid.features())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same_bits);
            prop_assert_eq!(back.shape(), grid.shape());
        }
    }
}
