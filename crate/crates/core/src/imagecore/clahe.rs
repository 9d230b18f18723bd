//! Contrast-limited adaptive histogram equalization.
//!
//! Tile histograms use 256 bins over the full 16-bit range. Each tile's
//! histogram is clipped at `clip_limit * tile_area / 256` counts, the excess
//! is spread evenly over all bins, and the per-tile mappings are blended
//! bilinearly between tile centres.

use serde::{Deserialize, Serialize};

use super::raster::GrayImage;
use crate::error::{Error, Result};

const BINS: usize = 256;
const BIN_SHIFT: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaheParams {
    pub clip_limit: f64,
    /// Tile grid as `(rows, cols)`.
    pub tiles: (usize, usize),
}

impl Default for ClaheParams {
    fn default() -> Self {
        ClaheParams {
            clip_limit: 2.0,
            tiles: (8, 8),
        }
    }
}

pub fn clahe_equalize(img: &GrayImage, params: ClaheParams) -> Result<GrayImage> {
    let ClaheParams { clip_limit, tiles } = params;
    if !(clip_limit > 0.0) || !clip_limit.is_finite() {
        return Err(Error::param(format!("clip limit {clip_limit} must be positive")));
    }
    let (ty, tx) = tiles;
    if ty == 0 || tx == 0 {
        return Err(Error::param(format!("tile grid {tiles:?} must be positive")));
    }
    let (rows, cols) = img.dims();
    if ty > rows || tx > cols {
        return Err(Error::param(format!(
            "tile grid {tiles:?} finer than image {rows}x{cols}"
        )));
    }

    let row_edges: Vec<usize> = (0..=ty).map(|t| t * rows / ty).collect();
    let col_edges: Vec<usize> = (0..=tx).map(|t| t * cols / tx).collect();

    let mut luts = vec![[0f64; BINS]; ty * tx];
    for (ti, lut) in luts.iter_mut().enumerate() {
        let (tr, tc) = (ti / tx, ti % tx);
        let mut hist = [0u64; BINS];
        for r in row_edges[tr]..row_edges[tr + 1] {
            for c in col_edges[tc]..col_edges[tc + 1] {
                hist[(*img.at(r, c) >> BIN_SHIFT) as usize] += 1;
            }
        }
        let area = ((row_edges[tr + 1] - row_edges[tr]) * (col_edges[tc + 1] - col_edges[tc])) as u64;
        clip_histogram(&mut hist, clip_limit, area);
        let scale = u16::MAX as f64 / area as f64;
        let mut cdf = 0u64;
        for (b, &count) in hist.iter().enumerate() {
            cdf += count;
            lut[b] = cdf as f64 * scale;
        }
    }

    // Tile centres in pixel coordinates.
    let row_centers: Vec<f64> = (0..ty)
        .map(|t| (row_edges[t] + row_edges[t + 1]) as f64 / 2.0 - 0.5)
        .collect();
    let col_centers: Vec<f64> = (0..tx)
        .map(|t| (col_edges[t] + col_edges[t + 1]) as f64 / 2.0 - 0.5)
        .collect();
    let col_weights: Vec<(usize, usize, f64)> =
        (0..cols).map(|c| bracket(&col_centers, c as f64)).collect();

    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (r0, r1, wr) = bracket(&row_centers, r as f64);
        for (c, &(c0, c1, wc)) in col_weights.iter().enumerate() {
            let bin = (*img.at(r, c) >> BIN_SHIFT) as usize;
            let top = luts[r0 * tx + c0][bin] * (1.0 - wc) + luts[r0 * tx + c1][bin] * wc;
            let bottom = luts[r1 * tx + c0][bin] * (1.0 - wc) + luts[r1 * tx + c1][bin] * wc;
            let v = top * (1.0 - wr) + bottom * wr;
            out.push(v.round().clamp(0.0, u16::MAX as f64) as u16);
        }
    }
    GrayImage::from_vec(rows, cols, out)
}

fn clip_histogram(hist: &mut [u64; BINS], clip_limit: f64, area: u64) {
    let limit = ((clip_limit * area as f64 / BINS as f64) as u64).max(1);
    let mut excess = 0u64;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let share = excess / BINS as u64;
    let mut residual = excess % BINS as u64;
    for h in hist.iter_mut() {
        *h += share;
    }
    // Leftover counts go to evenly strided bins.
    if residual > 0 {
        let step = (BINS as u64 / residual).max(1) as usize;
        let mut b = 0;
        while residual > 0 && b < BINS {
            hist[b] += 1;
            residual -= 1;
            b += step;
        }
    }
}

/// Neighbouring centres around `x` and the weight of the upper one.
fn bracket(centers: &[f64], x: f64) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if x <= centers[0] {
        return (0, 0, 0.0);
    }
    if x >= centers[last] {
        return (last, last, 0.0);
    }
    let i = centers.partition_point(|&c| c <= x) - 1;
    let w = (x - centers[i]) / (centers[i + 1] - centers[i]);
    (i, i + 1, w)
}
