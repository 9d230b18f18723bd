//! Resampling with pixel-centre alignment.

use serde::{Deserialize, Serialize};

use super::raster::{BinaryMask, GrayImage, ProbMap, Raster};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    Bilinear,
    Nearest,
}

pub trait Resize: Sized {
    /// Resamples to `target = (rows, cols)`.
    fn resize(&self, target: (usize, usize), mode: ResizeMode) -> Result<Self>;
}

impl Resize for GrayImage {
    fn resize(&self, target: (usize, usize), mode: ResizeMode) -> Result<Self> {
        match mode {
            ResizeMode::Nearest => nearest(self, target),
            ResizeMode::Bilinear => bilinear(self, target, |v| v as f64, |x| {
                x.round().clamp(0.0, u16::MAX as f64) as u16
            }),
        }
    }
}

impl Resize for BinaryMask {
    fn resize(&self, target: (usize, usize), mode: ResizeMode) -> Result<Self> {
        match mode {
            ResizeMode::Nearest => nearest(self, target),
            ResizeMode::Bilinear => Err(Error::param("masks resize with nearest mode only")),
        }
    }
}

impl<S: Scalar> Resize for ProbMap<S> {
    fn resize(&self, target: (usize, usize), mode: ResizeMode) -> Result<Self> {
        match mode {
            ResizeMode::Nearest => nearest(self, target),
            ResizeMode::Bilinear => {
                bilinear(self, target, |v: S| v.as_f64(), |x| S::of(x.clamp(0.0, 1.0)))
            }
        }
    }
}

/// Source coordinate of the nearest pixel for each destination index.
fn nearest_index(dst: usize, src_len: usize, dst_len: usize) -> usize {
    let scale = src_len as f64 / dst_len as f64;
    (((dst as f64 + 0.5) * scale).floor() as usize).min(src_len - 1)
}

fn nearest<T: Copy>(src: &Raster<T>, target: (usize, usize)) -> Result<Raster<T>> {
    let (rows, cols) = target;
    if target == src.dims() {
        return Ok(src.clone());
    }
    let col_map: Vec<usize> = (0..cols).map(|c| nearest_index(c, src.cols(), cols)).collect();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let sr = nearest_index(r, src.rows(), rows);
        data.extend(col_map.iter().map(|&sc| *src.at(sr, sc)));
    }
    Raster::from_vec(rows, cols, data)
}

/// Interpolation taps `(lo, hi, weight_hi)` for one destination index.
fn linear_taps(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let x = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let lo = (x.floor() as usize).min(src_len - 1);
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, x - lo as f64)
}

fn bilinear<T: Copy>(
    src: &Raster<T>,
    target: (usize, usize),
    to_f: impl Fn(T) -> f64,
    from_f: impl Fn(f64) -> T,
) -> Result<Raster<T>> {
    let (rows, cols) = target;
    if target == src.dims() {
        return Ok(src.clone());
    }
    let col_taps: Vec<_> = (0..cols).map(|c| linear_taps(c, src.cols(), cols)).collect();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (r0, r1, wr) = linear_taps(r, src.rows(), rows);
        for &(c0, c1, wc) in &col_taps {
            let top = to_f(*src.at(r0, c0)) * (1.0 - wc) + to_f(*src.at(r0, c1)) * wc;
            let bot = to_f(*src.at(r1, c0)) * (1.0 - wc) + to_f(*src.at(r1, c1)) * wc;
            data.push(from_f(top * (1.0 - wr) + bot * wr));
        }
    }
    Raster::from_vec(rows, cols, data)
}
