use crate::error::{Error, Result};
use crate::preprocess::rescale_to_u8_range;

use super::BINS;

/// Response map quantized to 8-bit levels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<u8>,
}

/// Per-map min–max scaling to `[0, 255]` followed by floor. A constant map
/// quantizes to all zeros.
pub fn quantize_response(values: &[f64]) -> Result<Vec<u8>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("response map has non-finite entries".into()));
    }
    Ok(rescale_to_u8_range(values)
        .into_iter()
        .map(|v| v.floor().clamp(0.0, 255.0) as u8)
        .collect())
}

/// Block size in pixels: `block_w` (P1) along X, `block_h` (P2) along Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGrid {
    pub block_w: usize,
    pub block_h: usize,
}

impl BlockGrid {
    pub fn new(block_w: usize, block_h: usize) -> Result<Self> {
        if block_w == 0 || block_h == 0 {
            return Err(Error::InvalidArgument("block size must be positive".into()));
        }
        Ok(Self { block_w, block_h })
    }

    /// Grid splitting a `height × width` image into `rows × cols` blocks
    /// (after edge-replication padding).
    pub fn for_counts(height: usize, width: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows > height || cols > width {
            return Err(Error::InvalidArgument(format!(
                "cannot split a {height}x{width} image into {rows}x{cols} blocks"
            )));
        }
        let grid = Self {
            block_w: width.div_ceil(cols),
            block_h: height.div_ceil(rows),
        };
        let (m, n) = grid.counts(height, width);
        if (m, n) != (rows, cols) {
            return Err(Error::InvalidArgument(format!(
                "a {height}x{width} image cannot be split into exactly {rows}x{cols} equal blocks"
            )));
        }
        Ok(grid)
    }

    /// `(M, N)`: block rows and block columns after padding.
    pub fn counts(&self, height: usize, width: usize) -> (usize, usize) {
        (height.div_ceil(self.block_h), width.div_ceil(self.block_w))
    }

    pub fn n_blocks(&self, height: usize, width: usize) -> usize {
        let (m, n) = self.counts(height, width);
        m * n
    }

    pub fn block_pixels(&self) -> usize {
        self.block_w * self.block_h
    }
}

/// 256-bin count histogram of every block, as a `256 × (M·N)` column-major
/// matrix (bins fastest). Blocks are numbered row-major; the map is padded by
/// edge replication up to whole blocks.
pub fn block_histograms(q: &QuantizedMap, grid: &BlockGrid) -> Result<Vec<f64>> {
    if q.values.len() != q.height * q.width || q.height == 0 || q.width == 0 {
        return Err(Error::InvalidArgument("malformed quantized map".into()));
    }
    let (m, n) = grid.counts(q.height, q.width);
    let mut hist = vec![0.0; BINS * m * n];
    for pr in 0..m * grid.block_h {
        let r = pr.min(q.height - 1);
        let by = pr / grid.block_h;
        let row = &q.values[r * q.width..][..q.width];
        for pc in 0..n * grid.block_w {
            let v = row[pc.min(q.width - 1)] as usize;
            let block = by * n + pc / grid.block_w;
            hist[block * BINS + v] += 1.0;
        }
    }
    Ok(hist)
}
