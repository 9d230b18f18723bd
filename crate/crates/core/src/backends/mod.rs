//! The three backend contracts and their reference implementations.
//!
//! Stage 1 needs a [`FullBackend`], stage 2 a [`PatchBackend`] and stage 3
//! a [`Reconnector`]. A [`BackendDescriptor`] names a kind plus its
//! parameters and is turned into a backend by the `build_*` functions.

pub mod exchange;
pub mod hough;
pub mod oracle;
pub mod reconnect;
pub mod ridge;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::imagecore::morph::binarize;
use crate::imagecore::raster::{BinaryMask, GrayImage, ProbMap};
use crate::patchvote::Patch;
use crate::scalar::Scalar;
use crate::synth::Sample;

pub use exchange::{ExchangeClient, ExchangeParams, ExternalBackend};
pub use hough::{hough_postprocess, HoughParams, HoughReconnector};
pub use oracle::{OracleBackend, OracleParams};
pub use reconnect::{rule_reconnect, ReconnectParams, RuleReconnector};
pub use ridge::{RidgeBackend, RidgeParams};

/// Whole-image segmenter.
pub trait FullBackend<S: Scalar>: Send + Sync {
    /// Probability map with the dimensions of `img`.
    fn predict_full(&self, img: &GrayImage) -> Result<ProbMap<S>>;
}

/// Patch segmenter.
pub trait PatchBackend<S: Scalar>: Send + Sync {
    fn patch_probabilities(&self, patch: &Patch<u16>) -> Result<Patch<S>>;

    /// Binary prediction for the same window.
    fn predict_patch(&self, patch: &Patch<u16>) -> Result<Patch<bool>> {
        let p = self.patch_probabilities(patch)?;
        patch.with_payload(binarize(&p.payload, S::of(0.5)))
    }

    fn patches_probabilities(&self, patches: &[Patch<u16>]) -> Result<Vec<Patch<S>>> {
        patches.par_iter().map(|p| self.patch_probabilities(p)).collect()
    }

    fn predict_patches(&self, patches: &[Patch<u16>]) -> Result<Vec<Patch<bool>>> {
        patches.par_iter().map(|p| self.predict_patch(p)).collect()
    }
}

/// Mask-to-mask repair.
pub trait Reconnector: Send + Sync {
    fn reconnect(&self, mask: &BinaryMask) -> Result<BinaryMask>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Oracle,
    Ridge,
    RuleReconnect,
    Hough,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    /// Kind-specific parameters; missing keys take their defaults, unknown
    /// keys are rejected.
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange_dir: Option<PathBuf>,
}

impl BackendDescriptor {
    pub fn new(kind: BackendKind) -> Self {
        BackendDescriptor {
            kind,
            params: Map::new(),
            exchange_dir: None,
        }
    }

    /// Descriptor whose parameters are the serialized `params`.
    pub fn with_params<T: Serialize>(kind: BackendKind, params: &T) -> Self {
        let params = match serde_json::to_value(params).expect("parameter structs serialize") {
            Value::Object(map) => map,
            _ => unreachable!("parameter structs serialize to objects"),
        };
        BackendDescriptor {
            kind,
            params,
            exchange_dir: None,
        }
    }

    pub fn params_as<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(Value::Object(self.params.clone()))
            .map_err(|e| Error::param(format!("{:?} parameters: {e}", self.kind)))
    }

    /// Checks that the kind fits `role` and the parameters parse.
    pub fn validate(&self, role: Role) -> Result<()> {
        use BackendKind::*;
        let fits = matches!(
            (role, self.kind),
            (Role::Full | Role::Patch, Oracle | Ridge | External) | (Role::Reconnect, RuleReconnect | Hough | External)
        );
        if !fits {
            return Err(Error::param(format!("{:?} backend cannot serve as a {role:?} backend", self.kind)));
        }
        match self.kind {
            Oracle => {
                let p: OracleParams = self.params_as()?;
                p.corruption.validate()
            }
            Ridge => self.params_as::<RidgeParams>()?.validate(),
            RuleReconnect => self.params_as::<ReconnectParams>()?.validate(),
            Hough => self.params_as::<HoughParams>()?.validate(),
            External => {
                self.params_as::<ExchangeParams>()?;
                if self.exchange_dir.is_none() {
                    return Err(Error::param("external backend needs exchange_dir"));
                }
                Ok(())
            }
        }
    }

    fn external(&self) -> Result<ExternalBackend> {
        let dir = self
            .exchange_dir
            .clone()
            .ok_or_else(|| Error::param("external backend needs exchange_dir"))?;
        Ok(ExternalBackend::new(ExchangeClient::new(dir, self.params_as()?)?))
    }

    fn oracle(&self, sample: Option<&Sample>) -> Result<OracleBackend> {
        let s = sample.ok_or_else(|| Error::param("oracle backend needs the sample's ground truth"))?;
        OracleBackend::new(s.gt_mask.clone(), s.tip, s.seed, self.params_as()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Full,
    Patch,
    Reconnect,
}

/// Oracle backends read the ground truth of `sample`; other kinds ignore it.
pub fn build_full<S: Scalar>(desc: &BackendDescriptor, sample: Option<&Sample>) -> Result<Box<dyn FullBackend<S>>> {
    desc.validate(Role::Full)?;
    Ok(match desc.kind {
        BackendKind::Oracle => Box::new(desc.oracle(sample)?),
        BackendKind::Ridge => Box::new(RidgeBackend::new(desc.params_as()?)?),
        BackendKind::External => Box::new(desc.external()?),
        _ => unreachable!("validated role"),
    })
}

pub fn build_patch<S: Scalar>(desc: &BackendDescriptor, sample: Option<&Sample>) -> Result<Box<dyn PatchBackend<S>>> {
    desc.validate(Role::Patch)?;
    Ok(match desc.kind {
        BackendKind::Oracle => Box::new(desc.oracle(sample)?),
        BackendKind::Ridge => Box::new(RidgeBackend::new(desc.params_as()?)?),
        BackendKind::External => Box::new(desc.external()?),
        _ => unreachable!("validated role"),
    })
}

pub fn build_reconnector(desc: &BackendDescriptor) -> Result<Box<dyn Reconnector>> {
    desc.validate(Role::Reconnect)?;
    Ok(match desc.kind {
        BackendKind::RuleReconnect => Box::new(RuleReconnector::new(desc.params_as()?)?),
        BackendKind::Hough => Box::new(HoughReconnector::new(desc.params_as()?)?),
        BackendKind::External => Box::new(desc.external()?),
        _ => unreachable!("validated role"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_are_checked() {
        let d = BackendDescriptor::new(BackendKind::Hough);
        assert!(d.validate(Role::Reconnect).is_ok());
        assert!(d.validate(Role::Full).is_err());
        assert!(BackendDescriptor::new(BackendKind::Ridge).validate(Role::Reconnect).is_err());
        assert!(BackendDescriptor::new(BackendKind::External).validate(Role::Full).is_err());
    }

    #[test]
    fn unknown_parameter_rejected() {
        let mut d = BackendDescriptor::new(BackendKind::Ridge);
        d.params.insert("sigmaa".into(), Value::from(2.0));
        assert!(matches!(d.validate(Role::Patch), Err(Error::Param(_))));
    }

    #[test]
    fn hough_defaults_are_50_30_50() {
        let p: HoughParams = BackendDescriptor::new(BackendKind::Hough).params_as().unwrap();
        assert_eq!((p.mip, p.mll, p.mlg), (50, 30, 50));
    }

    #[test]
    fn params_round_trip() {
        let r = ReconnectParams { max_gap: 60.0, ..ReconnectParams::default() };
        let d = BackendDescriptor::with_params(BackendKind::RuleReconnect, &r);
        assert_eq!(d.params_as::<ReconnectParams>().unwrap(), r);
    }

    #[test]
    fn oracle_needs_sample() {
        let d = BackendDescriptor::new(BackendKind::Oracle);
        assert!(build_full::<f64>(&d, None).is_err());
    }
}
