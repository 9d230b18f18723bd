use crate::error::{Error, Result};
use crate::imagecore::raster::{BinaryMask, Point};
use crate::scalar::Scalar;

/// Dice similarity `2|GT ∩ PD| / (|GT| + |PD|)`; 1 when both are empty.
pub fn dsc<S: Scalar>(gt: &BinaryMask, pd: &BinaryMask) -> Result<S> {
    gt.same_dims(pd)?;
    let (mut inter, mut total) = (0usize, 0usize);
    for (&a, &b) in gt.as_slice().iter().zip(pd.as_slice()) {
        inter += (a && b) as usize;
        total += a as usize + b as usize;
    }
    if total == 0 {
        return Ok(S::one());
    }
    Ok(S::of_usize(2 * inter) / S::of_usize(total))
}

/// Root mean squared tip distance. With `spacing` (mm per pixel) the result
/// is in millimetres, otherwise in pixels.
pub fn tip_rmse<S: Scalar>(pairs: &[(Point, Point)], spacing: Option<S>) -> Result<S> {
    if pairs.is_empty() {
        return Err(Error::param("tip RMSE needs at least one pair"));
    }
    if let Some(s) = spacing {
        if !(s > S::zero()) {
            return Err(Error::param(format!("pixel spacing {s} must be positive")));
        }
    }
    let sum = pairs.iter().fold(S::zero(), |acc, &(gt, pred)| {
        let dr = S::of_usize(pred.row) - S::of_usize(gt.row);
        let dc = S::of_usize(pred.col) - S::of_usize(gt.col);
        acc + dr * dr + dc * dc
    });
    let rmse = (sum / S::of_usize(pairs.len())).sqrt();
    Ok(spacing.map_or(rmse, |s| rmse * s))
}

/// Mean and sample standard deviation (`n - 1`); sd is 0 for one value.
/// `None` for an empty slice.
pub fn mean_sd<S: Scalar>(values: &[S]) -> Option<(S, S)> {
    if values.is_empty() {
        return None;
    }
    let n = S::of_usize(values.len());
    let mean = values.iter().fold(S::zero(), |a, &v| a + v) / n;
    if values.len() == 1 {
        return Some((mean, S::zero()));
    }
    let ss = values.iter().fold(S::zero(), |a, &v| a + (v - mean) * (v - mean));
    Some((mean, (ss / (n - S::one())).sqrt()))
}
