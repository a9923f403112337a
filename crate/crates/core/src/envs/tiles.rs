//! Hashing tile coder in the style of the classic `tiles3` software.
//!
//! Each tiling is offset asymmetrically (by `1, 3, 5, …` fractions of a tile
//! in successive dimensions) and the integer tile coordinates are hashed into
//! a shared table. When two tilings of the same input hash to the same slot
//! the later one probes forward, so every input activates exactly
//! `tilings` distinct indices.

use serde::{Deserialize, Serialize};

use crate::features::SparseBinary;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileCoder {
    tilings: usize,
    size: usize,
    /// Lower end of each dimension's range.
    lows: Vec<f64>,
    /// Tiles per unit of each dimension.
    scales: Vec<f64>,
}

/// 64-bit FNV-1a over the little-endian coordinates; stable across
/// platforms and runs.
fn hash_coords(coords: &[i64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in coords {
        for b in c.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

impl TileCoder {
    /// `ranges[d] = (low, high)` is covered by `tiles_per_dim` tiles in each
    /// tiling.
    pub fn new(tilings: usize, size: usize, ranges: &[(f64, f64)], tiles_per_dim: usize) -> Result<Self> {
        if tilings == 0 || size < tilings || tiles_per_dim == 0 || ranges.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "tile coder needs tilings ≥ 1, size ≥ tilings and tiles ≥ 1 (got {tilings}, {size}, {tiles_per_dim})"
            )));
        }
        if ranges.iter().any(|&(lo, hi)| !(hi > lo) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidParameter("tile coder ranges must be finite with high > low".into()));
        }
        Ok(Self {
            tilings,
            size,
            lows: ranges.iter().map(|r| r.0).collect(),
            scales: ranges.iter().map(|&(lo, hi)| tiles_per_dim as f64 / (hi - lo)).collect(),
        })
    }

    /// 8 tilings, 1024 slots, 4 tiles over the usual CartPole ranges.
    pub fn cartpole_default() -> Self {
        Self::new(8, 1024, &[(-2.4, 2.4), (-3.0, 3.0), (-0.21, 0.21), (-3.5, 3.5)], 4)
            .expect("default coder parameters are valid")
    }

    pub fn tilings(&self) -> usize {
        self.tilings
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dims(&self) -> usize {
        self.lows.len()
    }

    /// Active indices for `obs`, one per tiling, all below `size`.
    pub fn code(&self, obs: &[f64]) -> Result<SparseBinary> {
        if obs.len() != self.dims() {
            return Err(Error::Shape(format!("observation of length {} for {} dims", obs.len(), self.dims())));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Environment("observation is not finite".into()));
        }
        let n = self.tilings as i64;
        let quantized: Vec<i64> = obs
            .iter()
            .zip(self.lows.iter().zip(&self.scales))
            .map(|(&v, (&lo, &scale))| ((v - lo) * scale * n as f64).floor() as i64)
            .collect();
        let mut coords = vec![0i64; self.dims() + 1];
        let mut active = Vec::with_capacity(self.tilings);
        for tiling in 0..n {
            coords[0] = tiling;
            let mut offset = tiling;
            for (c, &q) in coords[1..].iter_mut().zip(&quantized) {
                *c = (q + offset).div_euclid(n);
                offset += 2 * tiling;
            }
            let mut idx = (hash_coords(&coords) % self.size as u64) as usize;
            while active.contains(&idx) {
                idx = (idx + 1) % self.size;
            }
            active.push(idx);
        }
        Ok(SparseBinary(active))
    }
}
