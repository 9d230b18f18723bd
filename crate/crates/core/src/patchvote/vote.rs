use serde::{Deserialize, Serialize};

use super::PatchSet;
use crate::error::{Error, Result};
use crate::imagecore::raster::{BinaryMask, ProbMap, Raster};
use crate::scalar::Scalar;

/// What gets averaged at each pixel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteMode {
    /// Binarized patch predictions.
    #[default]
    Bits,
    /// Raw patch probabilities.
    Probabilities,
}

/// Pixel-wise majority vote over binary patch predictions.
///
/// A covered pixel is foreground iff the mean of its covering bits is at
/// least `threshold`; uncovered pixels are background. Votes are integer
/// counts, so the result does not depend on patch order.
pub fn majority_vote<S: Scalar>(preds: &PatchSet<bool>, threshold: S) -> Result<BinaryMask> {
    check_threshold(threshold)?;
    let (rows, cols) = preds.parent();
    let mut ones = vec![0u32; rows * cols];
    let mut cover = vec![0u32; rows * cols];
    for patch in preds.patches() {
        accumulate(patch.offset, &patch.payload, cols, |i, &bit| {
            cover[i] += 1;
            ones[i] += bit as u32;
        });
    }
    let bits = ones
        .iter()
        .zip(&cover)
        .map(|(&k, &n)| n > 0 && S::of_usize(k as usize) / S::of_usize(n as usize) >= threshold)
        .collect();
    Raster::from_vec(rows, cols, bits)
}

/// Same decision rule applied to averaged probabilities.
pub fn soft_vote<S: Scalar>(preds: &PatchSet<S>, threshold: S) -> Result<BinaryMask> {
    check_threshold(threshold)?;
    let (rows, cols) = preds.parent();
    let mut sum = vec![S::zero(); rows * cols];
    let mut cover = vec![0u32; rows * cols];
    for patch in preds.patches() {
        accumulate(patch.offset, &patch.payload, cols, |i, &v| {
            cover[i] += 1;
            sum[i] = sum[i] + v;
        });
    }
    let bits = sum
        .iter()
        .zip(&cover)
        .map(|(&s, &n)| n > 0 && s / S::of_usize(n as usize) >= threshold)
        .collect();
    Raster::from_vec(rows, cols, bits)
}

/// Mean of the covering probabilities, zero where nothing covers.
pub fn vote_average<S: Scalar>(preds: &PatchSet<S>) -> Result<ProbMap<S>> {
    let (rows, cols) = preds.parent();
    let mut sum = vec![S::zero(); rows * cols];
    let mut cover = vec![0u32; rows * cols];
    for patch in preds.patches() {
        accumulate(patch.offset, &patch.payload, cols, |i, &v| {
            cover[i] += 1;
            sum[i] = sum[i] + v;
        });
    }
    let mean = sum
        .iter()
        .zip(&cover)
        .map(|(&s, &n)| if n == 0 { S::zero() } else { s / S::of_usize(n as usize) })
        .collect();
    ProbMap::from_probabilities(rows, cols, mean)
}

fn check_threshold<S: Scalar>(t: S) -> Result<()> {
    if !(t >= S::zero() && t <= S::one()) {
        return Err(Error::param(format!("vote threshold {t} outside [0, 1]")));
    }
    Ok(())
}

fn accumulate<T>(
    offset: crate::imagecore::raster::Point,
    payload: &Raster<T>,
    parent_cols: usize,
    mut f: impl FnMut(usize, &T),
) {
    let (h, w) = payload.dims();
    let data = payload.as_slice();
    for r in 0..h {
        let base = (offset.row + r) * parent_cols + offset.col;
        for (c, v) in data[r * w..(r + 1) * w].iter().enumerate() {
            f(base + c, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::raster::Point;
    use crate::patchvote::Patch;

    fn single(bit: bool) -> Patch<bool> {
        Patch::new(Point::new(0, 0), BinaryMask::filled(1, 1, bit).unwrap())
    }

    fn vote_of(bits: &[bool]) -> bool {
        let set = PatchSet::new((1, 1), bits.iter().map(|&b| single(b)).collect()).unwrap();
        majority_vote(&set, 0.7f64).unwrap()[Point::new(0, 0)]
    }

    #[test]
    fn three_of_four_passes_seventy_percent() {
        assert!(vote_of(&[true, true, true, false]));
        assert!(!vote_of(&[true, true, false, false]));
    }

    #[test]
    fn uncovered_pixels_are_background() {
        let p = Patch::new(Point::new(1, 1), BinaryMask::filled(2, 2, true).unwrap());
        let out = majority_vote(&PatchSet::new((4, 4), vec![p]).unwrap(), 0.7f32).unwrap();
        assert_eq!(out.foreground_count(), 4);
        assert!(!out[Point::new(0, 0)]);
        assert!(out[Point::new(2, 2)]);
    }

    #[test]
    fn empty_set_gives_empty_mask() {
        let set: PatchSet<bool> = PatchSet::new((3, 5), vec![]).unwrap();
        assert!(majority_vote(&set, 0.5f64).unwrap().is_blank());
    }

    #[test]
    fn threshold_out_of_range() {
        let set: PatchSet<bool> = PatchSet::new((3, 5), vec![]).unwrap();
        assert!(majority_vote(&set, 1.5f64).is_err());
        assert!(majority_vote(&set, f64::NAN).is_err());
    }

    #[test]
    fn soft_vote_averages_probabilities() {
        let mk = |v: f64| Patch::new(Point::new(0, 0), ProbMap::filled(1, 1, v).unwrap());
        let set = PatchSet::new((1, 1), vec![mk(0.75), mk(0.25)]).unwrap();
        assert!(soft_vote(&set, 0.5).unwrap()[Point::new(0, 0)]);
        assert!(!soft_vote(&set, 0.51).unwrap()[Point::new(0, 0)]);
        assert!((vote_average(&set).unwrap()[Point::new(0, 0)] - 0.5).abs() < 1e-12);
    }
}
