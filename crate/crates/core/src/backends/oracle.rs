//! Ground-truth backed predictors for controlled experiments.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{FullBackend, PatchBackend};
use crate::error::{Error, Result};
use crate::imagecore::raster::{BinaryMask, GrayImage, Point, ProbMap};
use crate::imagecore::resize::{Resize, ResizeMode};
use crate::patchvote::Patch;
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from};
use crate::synth::corrupt::{corrupt_mask, CorruptionSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    /// Damage applied to the whole-image prediction. Its seed is mixed with
    /// the sample seed so every image gets its own draw.
    pub corruption: CorruptionSpec,
    /// Probability that a patch prediction comes back entirely empty.
    pub patch_dropout: f64,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            corruption: CorruptionSpec::default(),
            patch_dropout: 0.0,
            seed: 0,
        }
    }
}

/// Holds one sample's ground truth at original resolution.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    gt: BinaryMask,
    tip: Point,
    sample_seed: u64,
    params: OracleParams,
}

impl OracleBackend {
    pub fn new(gt: BinaryMask, tip: Point, sample_seed: u64, params: OracleParams) -> Result<Self> {
        params.corruption.validate()?;
        if !(0.0..=1.0).contains(&params.patch_dropout) {
            return Err(Error::param("patch_dropout outside [0, 1]"));
        }
        if !gt.get(tip).copied().unwrap_or(false) {
            return Err(Error::param(format!("oracle tip {tip:?} is not on the ground truth")));
        }
        Ok(OracleBackend {
            gt,
            tip,
            sample_seed,
            params,
        })
    }

    /// Corrupted ground truth at original resolution.
    pub fn corrupted<S: Scalar>(&self) -> Result<ProbMap<S>> {
        let spec = CorruptionSpec {
            seed: derive_seed(self.params.corruption.seed, self.sample_seed),
            ..self.params.corruption.clone()
        };
        corrupt_mask(&self.gt, self.tip, &spec)
    }

    fn dropped(&self, offset: Point) -> bool {
        if self.params.patch_dropout <= 0.0 {
            return false;
        }
        let stream = ((offset.row as u64) << 32) ^ offset.col as u64;
        let mut rng = rng_from(derive_seed(derive_seed(self.params.seed, self.sample_seed), stream));
        rng.random_bool(self.params.patch_dropout)
    }
}

impl<S: Scalar> FullBackend<S> for OracleBackend {
    /// Ignores the pixels; only the requested dimensions matter.
    fn predict_full(&self, img: &GrayImage) -> Result<ProbMap<S>> {
        self.corrupted::<S>()?.resize(img.dims(), ResizeMode::Nearest)
    }
}

impl<S: Scalar> PatchBackend<S> for OracleBackend {
    fn patch_probabilities(&self, patch: &Patch<u16>) -> Result<Patch<S>> {
        let bits = PatchBackend::<S>::predict_patch(self, patch)?;
        patch.with_payload(bits.payload.map(|&b| if b { S::one() } else { S::zero() }))
    }

    fn predict_patch(&self, patch: &Patch<u16>) -> Result<Patch<bool>> {
        let crop = self.gt.crop(patch.offset, patch.size())?;
        if self.dropped(patch.offset) {
            return patch.with_payload(crop.map(|_| false));
        }
        patch.with_payload(crop)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::morph::binarize;

    fn line() -> (BinaryMask, Point) {
        let mut m = BinaryMask::empty(64, 64).unwrap();
        for r in 0..50 {
            *m.at_mut(r, 20) = true;
        }
        (m, Point::new(49, 20))
    }

    #[test]
    fn uncorrupted_full_prediction_is_gt() {
        let (gt, tip) = line();
        let params = OracleParams {
            corruption: CorruptionSpec::identity(1),
            ..OracleParams::default()
        };
        let b = OracleBackend::new(gt.clone(), tip, 3, params).unwrap();
        let img = GrayImage::filled(64, 64, 0).unwrap();
        let p: ProbMap<f64> = b.predict_full(&img).unwrap();
        assert_eq!(binarize(&p, 0.01), gt);
    }

    #[test]
    fn patch_prediction_is_gt_crop() {
        let (gt, tip) = line();
        let b = OracleBackend::new(gt.clone(), tip, 0, OracleParams::default()).unwrap();
        let patch = Patch::new(Point::new(10, 12), GrayImage::filled(16, 16, 0).unwrap());
        let out = PatchBackend::<f32>::predict_patch(&b, &patch).unwrap();
        assert_eq!(out.offset, patch.offset);
        assert_eq!(out.payload, gt.crop(Point::new(10, 12), (16, 16)).unwrap());
    }

    #[test]
    fn dropout_is_deterministic_per_window() {
        let (gt, tip) = line();
        let params = OracleParams {
            patch_dropout: 0.5,
            ..OracleParams::default()
        };
        let b = OracleBackend::new(gt, tip, 0, params).unwrap();
        let dropped: Vec<bool> = (0..40).map(|c| b.dropped(Point::new(3, c))).collect();
        let again: Vec<bool> = (0..40).map(|c| b.dropped(Point::new(3, c))).collect();
        assert_eq!(dropped, again);
        assert!(dropped.iter().any(|&d| d) && dropped.iter().any(|&d| !d));
    }
}
