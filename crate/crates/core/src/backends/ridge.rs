//! Training-free line detector: a bank of oriented second-derivative
//! filters at a single scale.
//!
//! The response at a pixel is the largest negative second derivative
//! across any of the sampled orientations, i.e. how strongly the pixel sits
//! on a bright ridge. It is scale-normalized by `sigma²` and divided by
//! `max(peak response, contrast_floor)`. The floor keeps a patch with no
//! real structure from stretching its noise to full scale.

use serde::{Deserialize, Serialize};

use super::{FullBackend, PatchBackend};
use crate::error::{Error, Result};
use crate::imagecore::components::{connected_components, Connectivity};
use crate::imagecore::raster::{BinaryMask, GrayImage, ProbMap, Raster};
use crate::patchvote::Patch;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeParams {
    /// Gaussian scale in pixels; about thickness / (2√3) for a bar.
    pub sigma: f64,
    pub orientations: usize,
    /// Smallest peak response that counts as full scale, in
    /// scale-normalized intensity units.
    pub contrast_floor: f64,
    /// Patch decisions use hysteresis: pixels at or above `threshold` seed
    /// a detection, which grows through pixels at or above `low_threshold`.
    pub threshold: f64,
    pub low_threshold: f64,
    /// Detections smaller than this many pixels are dropped.
    pub min_component: usize,
}

impl Default for RidgeParams {
    fn default() -> Self {
        RidgeParams {
            sigma: 1.5,
            orientations: 8,
            contrast_floor: 6000.0,
            threshold: 0.6,
            low_threshold: 0.45,
            min_component: 30,
        }
    }
}

impl RidgeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.5 && self.sigma <= 20.0) {
            return Err(Error::param(format!("ridge sigma {} outside [0.5, 20]", self.sigma)));
        }
        if self.orientations == 0 {
            return Err(Error::param("ridge needs at least one orientation"));
        }
        if !(self.contrast_floor > 0.0) {
            return Err(Error::param("contrast_floor must be positive"));
        }
        if !(0.0..=1.0).contains(&self.threshold) || !(0.0..=self.threshold).contains(&self.low_threshold) {
            return Err(Error::param("ridge thresholds must satisfy 0 <= low <= high <= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RidgeBackend {
    params: RidgeParams,
}

impl RidgeBackend {
    pub fn new(params: RidgeParams) -> Result<Self> {
        params.validate()?;
        Ok(RidgeBackend { params })
    }

    pub fn params(&self) -> &RidgeParams {
        &self.params
    }

    /// Normalized ridge response in `[0, 1]`.
    pub fn response<S: Scalar>(&self, img: &GrayImage) -> Result<ProbMap<S>> {
        let raw = ridge_strength::<S>(img, self.params.sigma, self.params.orientations);
        let peak = raw.as_slice().iter().fold(S::zero(), |m, &v| m.max(v));
        let scale = peak.max(S::of(self.params.contrast_floor));
        ProbMap::from_probabilities(
            img.rows(),
            img.cols(),
            raw.into_vec().into_iter().map(|v| (v / scale).min(S::one())).collect(),
        )
    }

    /// Hysteresis decision on a response map.
    pub fn detect<S: Scalar>(&self, response: &ProbMap<S>) -> BinaryMask {
        let weak = response.map(|&v| v >= S::of(self.params.low_threshold));
        let labels = connected_components(&weak, Connectivity::Eight);
        let strong = S::of(self.params.threshold);
        let mut keep = vec![false; labels.count() + 1];
        for (i, &v) in response.as_slice().iter().enumerate() {
            let l = labels.labels.as_slice()[i] as usize;
            if l > 0 && v >= strong {
                keep[l] = true;
            }
        }
        for c in &labels.components {
            if c.area < self.params.min_component {
                keep[c.label as usize] = false;
            }
        }
        labels.labels.map(|&l| keep[l as usize])
    }
}

impl<S: Scalar> FullBackend<S> for RidgeBackend {
    fn predict_full(&self, img: &GrayImage) -> Result<ProbMap<S>> {
        self.response(img)
    }
}

impl<S: Scalar> PatchBackend<S> for RidgeBackend {
    fn patch_probabilities(&self, patch: &Patch<u16>) -> Result<Patch<S>> {
        patch.with_payload(self.response(&patch.payload)?)
    }

    fn predict_patch(&self, patch: &Patch<u16>) -> Result<Patch<bool>> {
        let response: ProbMap<S> = self.response(&patch.payload)?;
        patch.with_payload(self.detect(&response))
    }
}

/// `sigma² · max(0, max_θ −∂²I/∂n_θ²)` with Gaussian derivatives.
pub fn ridge_strength<S: Scalar>(img: &GrayImage, sigma: f64, orientations: usize) -> Raster<S> {
    let (rows, cols) = img.dims();
    let src: Vec<S> = img.as_slice().iter().map(|&v| S::of(v as f64)).collect();
    let (g0, g1, g2) = gaussian_kernels::<S>(sigma);
    // Row direction is the first coordinate: Irr = ∂²/∂row², and so on.
    let irr = separable(&src, rows, cols, &g2, &g0);
    let icc = separable(&src, rows, cols, &g0, &g2);
    let irc = separable(&src, rows, cols, &g1, &g1);
    let steer: Vec<(S, S, S)> = (0..orientations)
        .map(|k| {
            let t = std::f64::consts::PI * k as f64 / orientations as f64;
            let (s, c) = t.sin_cos();
            (S::of(s * s), S::of(2.0 * s * c), S::of(c * c))
        })
        .collect();
    let norm = S::of(sigma * sigma);
    let out = (0..rows * cols)
        .map(|i| {
            let best = steer.iter().fold(S::zero(), |m, &(ss, sc2, cc)| {
                // Direction n = (sin t, cos t) in (row, col).
                let d2 = ss * irr[i] + sc2 * irc[i] + cc * icc[i];
                m.max(-d2)
            });
            best * norm
        })
        .collect();
    Raster::from_vec(rows, cols, out).expect("dimensions carried over")
}

/// Sampled Gaussian and its first two derivatives on `[-⌈4σ⌉, ⌈4σ⌉]`.
fn gaussian_kernels<S: Scalar>(sigma: f64) -> (Vec<S>, Vec<S>, Vec<S>) {
    let reach = (4.0 * sigma).ceil() as isize;
    let xs: Vec<f64> = (-reach..=reach).map(|x| x as f64).collect();
    let g: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = g.iter().sum();
    let s2 = sigma * sigma;
    let g0: Vec<f64> = g.iter().map(|v| v / total).collect();
    let g1: Vec<f64> = xs.iter().zip(&g0).map(|(x, v)| -x / s2 * v).collect();
    let mut g2: Vec<f64> = xs.iter().zip(&g0).map(|(x, v)| (x * x - s2) / (s2 * s2) * v).collect();
    // Truncation leaves a small DC term; a flat image must give zero.
    let dc = g2.iter().sum::<f64>() / g2.len() as f64;
    g2.iter_mut().for_each(|v| *v -= dc);
    let cast = |k: Vec<f64>| k.into_iter().map(S::of).collect();
    (cast(g0), cast(g1), cast(g2))
}

/// Convolves columns with `kr` (along rows) and rows with `kc`, mirroring
/// at the borders.
fn separable<S: Scalar>(src: &[S], rows: usize, cols: usize, kr: &[S], kc: &[S]) -> Vec<S> {
    let reach = kc.len() / 2;
    let mut tmp = vec![S::zero(); rows * cols];
    let mut padded = vec![S::zero(); cols + 2 * reach];
    // Correlating with the reversed kernel is convolution.
    let kc_rev: Vec<S> = kc.iter().rev().copied().collect();
    for r in 0..rows {
        let line = &src[r * cols..(r + 1) * cols];
        for (i, slot) in padded.iter_mut().enumerate() {
            *slot = line[mirror(i as isize - reach as isize, cols)];
        }
        for (c, out) in tmp[r * cols..(r + 1) * cols].iter_mut().enumerate() {
            *out = padded[c..c + kc_rev.len()]
                .iter()
                .zip(&kc_rev)
                .fold(S::zero(), |acc, (&v, &w)| acc + v * w);
        }
    }
    let reach = (kr.len() / 2) as isize;
    let mut out = vec![S::zero(); rows * cols];
    for r in 0..rows {
        let dst = &mut out[r * cols..(r + 1) * cols];
        for (k, &w) in kr.iter().enumerate() {
            let y = mirror(r as isize + reach - k as isize, rows);
            let src_row = &tmp[y * cols..(y + 1) * cols];
            for (d, &s) in dst.iter_mut().zip(src_row) {
                *d = *d + w * s;
            }
        }
    }
    out
}

fn mirror(i: isize, len: usize) -> usize {
    let n = len as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}
