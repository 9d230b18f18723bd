//! Three-stage orchestration: whole-image segmentation, patch voting and
//! reconnection, followed by tip tracking.

pub mod config;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{build_full, build_patch, build_reconnector, FullBackend, PatchBackend, Reconnector};
use crate::error::{Error, Result, Stage};
use crate::imagecore::clahe::clahe_equalize;
use crate::imagecore::morph::binarize;
use crate::imagecore::raster::{BinaryMask, GrayImage, Point};
use crate::imagecore::resize::{Resize, ResizeMode};
use crate::patchvote::{majority_vote, sample_inference_patches, soft_vote, Patch, PatchSet, VoteMode};
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::synth::Sample;
use crate::tipmetrics::{locate_tip, TipEstimate};

pub use config::{config_hash, PipelineConfig, Stage1Config, Stage2Config, Stage3Config, StageSet};

/// Seed stream for stage-2 patch placement.
const PATCH_STREAM: u64 = 2;

/// Wall time per stage in milliseconds; zero for stages that did not run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stage1_ms: f64,
    pub stage2_ms: f64,
    pub stage3_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub id: String,
    /// Dimensions of the input image; the tip lives in this frame.
    pub original_dims: (usize, usize),
    /// Stage masks at working resolution.
    pub stage1: BinaryMask,
    pub stage2: Option<BinaryMask>,
    pub stage3: Option<BinaryMask>,
    /// Output of the last enabled stage.
    pub final_mask: BinaryMask,
    /// Tip at original resolution; absent iff the final mask is empty.
    pub tip: Option<TipEstimate>,
    /// Tip found on the working-resolution mask.
    pub working_tip: Option<Point>,
    /// Stage 1 found nothing, so later stages were skipped.
    pub no_line: bool,
    pub timings: StageTimings,
    pub config_hash: String,
    pub seed: u64,
}

impl PipelineResult {
    /// Final mask mapped back to the input resolution.
    pub fn final_at_original(&self) -> Result<BinaryMask> {
        self.final_mask.resize(self.original_dims, ResizeMode::Nearest)
    }
}

/// A stage error together with whatever the earlier stages produced.
#[derive(Debug)]
pub struct PipelineFailure {
    /// Always `Error::Stage`.
    pub error: Error,
    pub partial: Box<PipelineResult>,
}

impl From<PipelineFailure> for Error {
    fn from(f: PipelineFailure) -> Error {
        f.error
    }
}

/// Image prepared for stage 1: resized to the working size, then equalized.
pub fn working_image(img: &GrayImage, cfg: &PipelineConfig) -> Result<GrayImage> {
    let resized = img.resize(cfg.working_size, cfg.image_resize)?;
    match cfg.clahe {
        Some(p) => clahe_equalize(&resized, p),
        None => Ok(resized),
    }
}

pub fn run_stage1<S: Scalar>(img: &GrayImage, cfg: &PipelineConfig, backend: &dyn FullBackend<S>) -> Result<BinaryMask> {
    let input = working_image(img, cfg)?;
    let probs = backend.predict_full(&input)?;
    input.same_dims(&probs)?;
    Ok(binarize(&probs, S::of(cfg.stage1.threshold)))
}

/// Patch refinement at original resolution, returned at working resolution.
///
/// An empty stage-1 mask yields an empty mask.
pub fn run_stage2<S: Scalar>(
    img: &GrayImage,
    stage1: &BinaryMask,
    cfg: &PipelineConfig,
    backend: &dyn PatchBackend<S>,
) -> Result<BinaryMask> {
    if stage1.is_blank() {
        return BinaryMask::empty(stage1.rows(), stage1.cols());
    }
    let s2 = &cfg.stage2;
    let anchors = stage1.resize(img.dims(), ResizeMode::Nearest)?;
    let patches = sample_inference_patches(img, &anchors, s2.patch_count, s2.patch_size, derive_seed(cfg.seed, PATCH_STREAM))?;
    let patches = match cfg.clahe {
        Some(p) => patches
            .into_iter()
            .map(|q| Ok(Patch::new(q.offset, clahe_equalize(&q.payload, p)?)))
            .collect::<Result<Vec<_>>>()?,
        None => patches,
    };
    let voted = match s2.vote_mode {
        VoteMode::Bits => {
            let preds = backend.predict_patches(&patches)?;
            majority_vote(&PatchSet::new(img.dims(), preds)?, S::of(s2.vote_threshold))?
        }
        VoteMode::Probabilities => {
            let preds = backend.patches_probabilities(&patches)?;
            soft_vote(&PatchSet::new(img.dims(), preds)?, S::of(s2.vote_threshold))?
        }
    };
    voted.resize(stage1.dims(), ResizeMode::Nearest)
}

/// Runs the reconnector and drops anything it adds below the lowest input
/// pixel, so the tip can only be reached, never overshot.
pub fn run_stage3(mask: &BinaryMask, reconnector: &dyn Reconnector) -> Result<BinaryMask> {
    let Some(bottom) = mask.foreground().map(|p| p.row).max() else {
        return Ok(mask.clone());
    };
    let mut out = reconnector.reconnect(mask)?;
    mask.same_dims(&out)?;
    for r in bottom + 1..out.rows() {
        for c in 0..out.cols() {
            if !*mask.at(r, c) {
                *out.at_mut(r, c) = false;
            }
        }
    }
    Ok(out)
}

/// Backends for one image. Oracle kinds bind to `sample`.
pub struct Backends<S: Scalar> {
    pub full: Box<dyn FullBackend<S>>,
    pub patch: Option<Box<dyn PatchBackend<S>>>,
    pub reconnector: Option<Box<dyn Reconnector>>,
}

impl<S: Scalar> Backends<S> {
    pub fn build(cfg: &PipelineConfig, sample: Option<&Sample>) -> Result<Self> {
        Ok(Backends {
            full: build_full(&cfg.stage1.backend, sample)?,
            patch: if cfg.stage2.enabled {
                Some(build_patch(&cfg.stage2.backend, sample)?)
            } else {
                None
            },
            reconnector: if cfg.stage3.enabled {
                Some(build_reconnector(&cfg.stage3.backend)?)
            } else {
                None
            },
        })
    }
}

/// Runs every enabled stage on `img` and tracks the tip.
pub fn run_pipeline<S: Scalar>(
    id: &str,
    img: &GrayImage,
    sample: Option<&Sample>,
    cfg: &PipelineConfig,
) -> std::result::Result<PipelineResult, PipelineFailure> {
    let hash = config_hash(cfg);
    let mut partial = PipelineResult {
        id: id.to_string(),
        original_dims: img.dims(),
        stage1: BinaryMask::empty(cfg.working_size.0.max(1), cfg.working_size.1.max(1)).expect("positive dims"),
        stage2: None,
        stage3: None,
        final_mask: BinaryMask::empty(cfg.working_size.0.max(1), cfg.working_size.1.max(1)).expect("positive dims"),
        tip: None,
        working_tip: None,
        no_line: false,
        timings: StageTimings::default(),
        config_hash: hash,
        seed: cfg.seed,
    };
    let fail = |e: Error, stage: Stage, partial: PipelineResult| PipelineFailure {
        error: e.at_stage(stage),
        partial: Box::new(partial),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, Stage::Stage1, partial));
    }
    let backends = match Backends::<S>::build(cfg, sample) {
        Ok(b) => b,
        Err(e) => return Err(fail(e, Stage::Stage1, partial)),
    };

    let t = Instant::now();
    match run_stage1(img, cfg, backends.full.as_ref()) {
        Ok(m) => partial.stage1 = m,
        Err(e) => return Err(fail(e, Stage::Stage1, partial)),
    }
    partial.timings.stage1_ms = elapsed_ms(t);
    let mut current = partial.stage1.clone();
    partial.no_line = current.is_blank();

    if let Some(backend) = &backends.patch {
        let t = Instant::now();
        match run_stage2(img, &current, cfg, backend.as_ref()) {
            Ok(m) => {
                current = m.clone();
                partial.stage2 = Some(m);
            }
            Err(e) => return Err(fail(e, Stage::Stage2, partial)),
        }
        partial.timings.stage2_ms = elapsed_ms(t);
    }
    if let Some(r) = &backends.reconnector {
        let t = Instant::now();
        match run_stage3(&current, r.as_ref()) {
            Ok(m) => {
                current = m.clone();
                partial.stage3 = Some(m);
            }
            Err(e) => return Err(fail(e, Stage::Stage3, partial)),
        }
        partial.timings.stage3_ms = elapsed_ms(t);
    }
    partial.final_mask = current;
    match locate_tips(&partial.final_mask, img.dims()) {
        Ok((tip, working)) => {
            partial.tip = tip;
            partial.working_tip = working;
        }
        Err(e) => return Err(fail(e, Stage::Stage3, partial)),
    }
    Ok(partial)
}

/// Tip on the final mask upscaled to `original` and on the mask itself.
pub fn locate_tips(final_mask: &BinaryMask, original: (usize, usize)) -> Result<(Option<TipEstimate>, Option<Point>)> {
    let working = locate_tip(final_mask).map(|t| t.point);
    let full = locate_tip(&final_mask.resize(original, ResizeMode::Nearest)?);
    Ok((full, working))
}

/// The four stage combinations of an ablation, sharing stage-1 and
/// stage-2 outputs. Stage toggles in `cfg` are ignored.
pub fn run_ablation<S: Scalar>(
    id: &str,
    img: &GrayImage,
    sample: Option<&Sample>,
    cfg: &PipelineConfig,
) -> Result<Vec<(StageSet, PipelineResult)>> {
    let full_cfg = PipelineConfig {
        stage2: Stage2Config { enabled: true, ..cfg.stage2.clone() },
        stage3: Stage3Config { enabled: true, ..cfg.stage3.clone() },
        ..cfg.clone()
    };
    full_cfg.validate()?;
    let backends = Backends::<S>::build(&full_cfg, sample)?;
    let t = Instant::now();
    let s1 = run_stage1(img, &full_cfg, backends.full.as_ref()).map_err(|e| e.at_stage(Stage::Stage1))?;
    let t1 = elapsed_ms(t);
    let t = Instant::now();
    let patch = backends.patch.as_ref().expect("enabled above");
    let s2 = run_stage2(img, &s1, &full_cfg, patch.as_ref()).map_err(|e| e.at_stage(Stage::Stage2))?;
    let t2 = elapsed_ms(t);
    let reconnector = backends.reconnector.as_ref().expect("enabled above");

    StageSet::ABLATION
        .iter()
        .map(|&set| {
            let run_cfg = set.apply(&full_cfg);
            let mut timings = StageTimings { stage1_ms: t1, ..StageTimings::default() };
            let stage2 = set.stage2.then(|| s2.clone());
            if set.stage2 {
                timings.stage2_ms = t2;
            }
            let before3 = stage2.clone().unwrap_or_else(|| s1.clone());
            let stage3 = if set.stage3 {
                let t = Instant::now();
                let m = run_stage3(&before3, reconnector.as_ref()).map_err(|e| e.at_stage(Stage::Stage3))?;
                timings.stage3_ms = elapsed_ms(t);
                Some(m)
            } else {
                None
            };
            let final_mask = stage3.clone().unwrap_or(before3);
            let (tip, working_tip) = locate_tips(&final_mask, img.dims())?;
            Ok((
                set,
                PipelineResult {
                    id: id.to_string(),
                    original_dims: img.dims(),
                    stage1: s1.clone(),
                    stage2,
                    stage3,
                    final_mask,
                    tip,
                    working_tip,
                    no_line: s1.is_blank(),
                    timings,
                    config_hash: config_hash(&run_cfg),
                    seed: cfg.seed,
                },
            ))
        })
        .collect()
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
