use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{BackendDescriptor, BackendKind, Role};
use crate::error::{Error, Result};
use crate::imagecore::clahe::ClaheParams;
use crate::imagecore::resize::ResizeMode;
use crate::patchvote::{PatchSize, VoteMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Config {
    pub backend: BackendDescriptor,
    /// Deliberately low so the first stage errs on the side of recall.
    pub threshold: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            backend: BackendDescriptor::new(BackendKind::Ridge),
            threshold: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub enabled: bool,
    pub patch_count: usize,
    pub patch_size: PatchSize,
    pub vote_threshold: f64,
    pub vote_mode: VoteMode,
    pub backend: BackendDescriptor,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            enabled: true,
            patch_count: 200,
            patch_size: (512, 512),
            vote_threshold: 0.7,
            vote_mode: VoteMode::Bits,
            backend: BackendDescriptor::new(BackendKind::Ridge),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage3Config {
    pub enabled: bool,
    pub backend: BackendDescriptor,
}

impl Default for Stage3Config {
    fn default() -> Self {
        Stage3Config {
            enabled: true,
            backend: BackendDescriptor::new(BackendKind::RuleReconnect),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub stage3: Stage3Config,
    /// Resolution of stages 1 and 3, `(rows, cols)`.
    pub working_size: (usize, usize),
    pub image_resize: ResizeMode,
    /// Equalization for stage-1 input and every stage-2 patch; `None`
    /// disables it.
    pub clahe: Option<ClaheParams>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            stage3: Stage3Config::default(),
            working_size: (1024, 1024),
            image_resize: ResizeMode::Bilinear,
            clahe: Some(ClaheParams::default()),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(format!("{name} {v} outside [0, 1]")))
            }
        };
        unit("stage-1 threshold", self.stage1.threshold)?;
        unit("vote threshold", self.stage2.vote_threshold)?;
        if self.working_size.0 == 0 || self.working_size.1 == 0 {
            return Err(Error::param("working size must be positive"));
        }
        self.stage1.backend.validate(Role::Full)?;
        if self.stage2.enabled {
            if self.stage2.patch_count == 0 {
                return Err(Error::param("stage 2 needs at least one patch"));
            }
            if self.stage2.patch_size.0 == 0 || self.stage2.patch_size.1 == 0 {
                return Err(Error::param("patch size must be positive"));
            }
            self.stage2.backend.validate(Role::Patch)?;
        }
        if self.stage3.enabled {
            self.stage3.backend.validate(Role::Reconnect)?;
        }
        Ok(())
    }
}

/// SHA-256 of the canonical JSON form. Parameter maps are sorted by key, so
/// equal configurations always hash equally.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("configs serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Which of the optional stages run; stage 1 always does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageSet {
    pub stage2: bool,
    pub stage3: bool,
}

impl StageSet {
    pub const S1: StageSet = StageSet { stage2: false, stage3: false };
    pub const S12: StageSet = StageSet { stage2: true, stage3: false };
    pub const S13: StageSet = StageSet { stage2: false, stage3: true };
    pub const S123: StageSet = StageSet { stage2: true, stage3: true };
    pub const ABLATION: [StageSet; 4] = [Self::S1, Self::S12, Self::S13, Self::S123];

    pub fn apply(self, cfg: &PipelineConfig) -> PipelineConfig {
        let mut out = cfg.clone();
        out.stage2.enabled = self.stage2;
        out.stage3.enabled = self.stage3;
        out
    }

    /// `{1}`, `{1,2}`, `{1,3}` or `{1,2,3}`.
    pub fn label(self) -> &'static str {
        match (self.stage2, self.stage3) {
            (false, false) => "{1}",
            (true, false) => "{1,2}",
            (false, true) => "{1,3}",
            (true, true) => "{1,2,3}",
        }
    }
}
