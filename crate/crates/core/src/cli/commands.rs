//! Batch commands. Each writes `config.resolved.json` into its output
//! directory before doing any work, processes images in parallel and emits
//! files in image id order, so reruns produce identical trees.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::CliConfig;
use crate::backends::build_reconnector;
use crate::error::{Error, Result, Stage};
use crate::imagecore::io::{read_mask, write_mask};
use crate::imagecore::morph::disk_offsets;
use crate::imagecore::raster::{BinaryMask, GrayImage, Point};
use crate::imagecore::resize::{Resize, ResizeMode};
use crate::patchvote::io::OffsetsFile;
use crate::patchvote::{majority_vote, read_patch_set, soft_vote};
use crate::pipeline::{locate_tips, run_ablation, run_pipeline, run_stage3, PipelineResult, StageSet, StageTimings};
use crate::seed::derive_seed;
use crate::synth::corpus::{read_json, write_json};
use crate::synth::{generate_corpus, load_sample, read_manifest, Manifest, Sample};
use crate::tipmetrics::report::{csv_error, write_paired};
use crate::tipmetrics::{evaluate_corpus, locate_tip, paired_report, write_report, EvalInput, EvalReport, TipEstimate};
use crate::vmflg::{generate_fragments_logged, FragmentLog, FragmentSpec};

pub const RESOLVED_CONFIG: &str = "config.resolved.json";

fn echo_config(cfg: &CliConfig, out: &Path) -> Result<()> {
    write_json(&out.join(RESOLVED_CONFIG), cfg)
}

/// Structured description of a failure, as written to `error.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub stage: Option<Stage>,
    pub message: String,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        ErrorReport {
            kind: e.kind().to_string(),
            stage: e.stage(),
            message: e.to_string(),
        }
    }
}

pub fn cmd_synth(cfg: &CliConfig, out: &Path) -> Result<Manifest> {
    echo_config(cfg, out)?;
    generate_corpus(&cfg.corpus.phantom, cfg.corpus.count, out)
}

fn load_all(corpus: &Path) -> Result<(Manifest, impl IndexedParallelIterator<Item = Result<Sample>> + '_)> {
    let manifest = read_manifest(corpus)?;
    let entries = manifest.entries.clone();
    Ok((manifest, entries.into_par_iter().map(move |e| load_sample(corpus, &e))))
}

/// Writes `<id>/gt_frag_{i}.png` and `<id>/fragments.json` per sample.
pub fn cmd_fragment(cfg: &CliConfig, corpus: &Path, out: &Path) -> Result<()> {
    echo_config(cfg, out)?;
    let (_, samples) = load_all(corpus)?;
    samples
        .map(|s| {
            let s = s?;
            let spec = FragmentSpec {
                seed: derive_seed(cfg.fragment.seed, s.seed),
                ..cfg.fragment.clone()
            };
            let variants = generate_fragments_logged(&s.gt_mask, s.tip, &spec)?;
            let dir = out.join(&s.id);
            let mut logs: Vec<FragmentLog> = Vec::with_capacity(variants.len());
            for (i, (mask, log)) in variants.into_iter().enumerate() {
                write_mask(&dir.join(format!("gt_frag_{i}.png")), &mask)?;
                logs.push(log);
            }
            write_json(&dir.join("fragments.json"), &logs)
        })
        .collect()
}

/// Per-image `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub id: String,
    pub stages: String,
    pub original_dims: (usize, usize),
    pub working_dims: (usize, usize),
    /// At original resolution.
    pub tip: Option<TipEstimate>,
    pub working_tip: Option<Point>,
    pub no_line: bool,
    pub config_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorReport>,
}

fn write_result(
    dir: &Path,
    r: &PipelineResult,
    sample: &Sample,
    error: Option<&Error>,
    include_timings: bool,
) -> Result<()> {
    let stages = StageSet {
        stage2: r.stage2.is_some(),
        stage3: r.stage3.is_some(),
    };
    write_mask(&dir.join("stage1.png"), &r.stage1)?;
    if let Some(m) = &r.stage2 {
        write_mask(&dir.join("stage2.png"), m)?;
    }
    if let Some(m) = &r.stage3 {
        write_mask(&dir.join("stage3.png"), m)?;
    }
    write_mask(&dir.join("final.png"), &r.final_mask)?;
    if error.is_none() {
        let pred = r.final_at_original()?;
        let overlay = overlay(&sample.image, &sample.gt_mask, &pred, Some(sample.tip), r.tip.map(|t| t.point))?;
        let path = dir.join("overlay.png");
        overlay.save(&path)?;
    }
    let record = ResultRecord {
        id: r.id.clone(),
        stages: stages.label().to_string(),
        original_dims: r.original_dims,
        working_dims: r.final_mask.dims(),
        tip: r.tip,
        working_tip: r.working_tip,
        no_line: r.no_line,
        config_hash: r.config_hash.clone(),
        seed: r.seed,
        timings: include_timings.then_some(r.timings),
        error: error.map(ErrorReport::from),
    };
    write_json(&dir.join("result.json"), &record)
}

/// Runs the pipeline over a corpus. Every image gets its directory even
/// when a stage fails; the first failure (in id order) is returned after
/// all images were processed.
pub fn cmd_run(cfg: &CliConfig, corpus: &Path, out: &Path) -> Result<()> {
    echo_config(cfg, out)?;
    let (_, samples) = load_all(corpus)?;
    let outcomes: Vec<Result<()>> = samples
        .map(|s| {
            let s = s?;
            let dir = out.join(&s.id);
            match run_pipeline::<f64>(&s.id, &s.image, Some(&s), &cfg.pipeline) {
                Ok(r) => write_result(&dir, &r, &s, None, cfg.eval.include_timings),
                Err(f) => {
                    write_result(&dir, &f.partial, &s, Some(&f.error), cfg.eval.include_timings)?;
                    Err(f.error)
                }
            }
        })
        .collect();
    outcomes.into_iter().collect()
}

/// Result directories under `results`, sorted.
fn result_dirs(results: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(results).map_err(|e| Error::io(results, e))? {
        let path = entry.map_err(|e| Error::io(results, e))?.path();
        if path.join("result.json").is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Scores a results directory against its corpus. Writes the report for the
/// final masks, a `baseline/` report for the stage-1 masks and
/// `paired.csv` comparing the two.
pub fn cmd_eval(cfg: &CliConfig, results: &Path, corpus: &Path, out: &Path) -> Result<EvalReport> {
    echo_config(cfg, out)?;
    let dirs = result_dirs(results)?;
    if dirs.is_empty() {
        return Err(Error::Param(format!("no results under {}", results.display())));
    }
    let manifest = read_manifest(corpus)?;
    let pairs = dirs
        .par_iter()
        .map(|dir| {
            let rec: ResultRecord = read_json(&dir.join("result.json"))?;
            if let Some(e) = &rec.error {
                return Err(Error::Param(format!("result {} is a failed run: {}", rec.id, e.message)));
            }
            let entry = manifest
                .entries
                .iter()
                .find(|e| e.id == rec.id)
                .ok_or_else(|| Error::Param(format!("result {} has no sample in the corpus", rec.id)))?;
            let sample = load_sample(corpus, entry)?;
            let input = |mask: BinaryMask, tip: Option<TipEstimate>| -> Result<EvalInput> {
                Ok(EvalInput {
                    id: rec.id.clone(),
                    prediction: mask.resize(rec.original_dims, ResizeMode::Nearest)?,
                    tip: tip.map(|t| t.point),
                    gt_mask: sample.gt_mask.clone(),
                    gt_tip: sample.tip,
                    timings: rec.timings,
                })
            };
            let final_input = input(read_mask(&dir.join("final.png"))?, rec.tip)?;
            let stage1 = read_mask(&dir.join("stage1.png"))?;
            let (base_tip, _) = locate_tips(&stage1, rec.original_dims)?;
            Ok((final_input, input(stage1, base_tip)?, rec.config_hash))
        })
        .collect::<Result<Vec<_>>>()?;
    let hash = {
        let first = &pairs[0].2;
        if pairs.iter().all(|p| &p.2 == first) { first.clone() } else { "mixed".to_string() }
    };
    let (finals, bases): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(f, b, _)| (f, b)).unzip();
    let report = evaluate_corpus(&finals, &hash, &cfg.eval)?;
    let baseline = evaluate_corpus(&bases, &hash, &cfg.eval)?;
    write_report(out, &report)?;
    write_report(&out.join("baseline"), &baseline)?;
    write_paired(&out.join("paired.csv"), &paired_report(&baseline, &report))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub stages: String,
    pub report: EvalReport,
}

#[derive(Serialize)]
struct AblationCsvRow<'a> {
    stages: &'a str,
    n: usize,
    mean_tip_error_mm: Option<f64>,
    sd_tip_error_mm: Option<f64>,
    rmse_mm: Option<f64>,
    misses: usize,
    no_mfp_pct: f64,
    under_10mm_pct: f64,
    dsc_mean: f64,
}

/// The four stage combinations over a corpus: `ablation.csv` (one row per
/// combination) and `ablation.json` (full reports).
pub fn cmd_ablate(cfg: &CliConfig, corpus: &Path, out: &Path) -> Result<Vec<AblationRow>> {
    echo_config(cfg, out)?;
    let (_, samples) = load_all(corpus)?;
    let per_sample = samples
        .map(|s| {
            let s = s?;
            let runs = run_ablation::<f64>(&s.id, &s.image, Some(&s), &cfg.pipeline)?;
            runs.into_iter()
                .map(|(_, r)| EvalInput::from_result(&r, &s))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = StageSet::ABLATION
        .iter()
        .enumerate()
        .map(|(k, set)| {
            let inputs: Vec<EvalInput> = per_sample.iter().map(|runs| runs[k].clone()).collect();
            let hash = crate::pipeline::config_hash(&set.apply(&cfg.pipeline));
            Ok(AblationRow {
                stages: set.label().to_string(),
                report: evaluate_corpus(&inputs, &hash, &cfg.eval)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = out.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    for row in &rows {
        let r = &row.report;
        w.serialize(AblationCsvRow {
            stages: &row.stages,
            n: r.n,
            mean_tip_error_mm: r.tip_error_mm.map(|m| m.mean),
            sd_tip_error_mm: r.tip_error_mm.map(|m| m.sd),
            rmse_mm: r.rmse_mm,
            misses: r.misses,
            no_mfp_pct: 100.0 * r.no_mfp_rate,
            under_10mm_pct: 100.0 * r.under_10mm_rate,
            dsc_mean: r.dsc.mean,
        })
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&out.join("ablation.json"), &rows)?;
    Ok(rows)
}

/// Votes a stored patch set (`mask` patches by majority, `prob` patches by
/// mean probability) at the configured threshold into `voted.png`.
pub fn cmd_vote(cfg: &CliConfig, patches: &Path, out: &Path) -> Result<BinaryMask> {
    echo_config(cfg, out)?;
    let meta: OffsetsFile = read_json(&patches.join("offsets.json"))?;
    let t = cfg.pipeline.stage2.vote_threshold;
    let voted = match meta.kind.as_str() {
        "mask" => majority_vote(&read_patch_set::<bool>(patches)?, t)?,
        "prob" => soft_vote(&read_patch_set::<f64>(patches)?, t)?,
        other => return Err(Error::Param(format!("cannot vote over {other} patches"))),
    };
    write_mask(&out.join("voted.png"), &voted)?;
    Ok(voted)
}

/// Stage 3 alone on a mask file: `reconnected.png` plus `tip.json`.
pub fn cmd_reconnect(cfg: &CliConfig, input: &Path, out: &Path) -> Result<BinaryMask> {
    echo_config(cfg, out)?;
    let mask = read_mask(input)?;
    let reconnector = build_reconnector(&cfg.pipeline.stage3.backend)?;
    let joined = run_stage3(&mask, reconnector.as_ref()).map_err(|e| e.at_stage(Stage::Stage3))?;
    write_mask(&out.join("reconnected.png"), &joined)?;
    write_json(&out.join("tip.json"), &locate_tip(&joined))?;
    Ok(joined)
}

const TIP_RING: (f64, f64) = (12.0, 15.0);

/// Image in grey with ground truth in blue, prediction in red (magenta where
/// they agree) and rings around both tips in the matching colour.
pub fn overlay(
    img: &GrayImage,
    gt: &BinaryMask,
    pred: &BinaryMask,
    gt_tip: Option<Point>,
    pred_tip: Option<Point>,
) -> Result<RgbImage> {
    img.same_dims(gt)?;
    img.same_dims(pred)?;
    let (rows, cols) = img.dims();
    let mut out = RgbImage::new(cols as u32, rows as u32);
    for (i, ((&v, &g), &p)) in img.as_slice().iter().zip(gt.as_slice()).zip(pred.as_slice()).enumerate() {
        let grey = (v >> 8) as u8;
        let px = match (g, p) {
            (false, false) => Rgb([grey, grey, grey]),
            (true, false) => Rgb([0, 0, 255]),
            (false, true) => Rgb([255, 0, 0]),
            (true, true) => Rgb([255, 0, 255]),
        };
        out.put_pixel((i % cols) as u32, (i / cols) as u32, px);
    }
    let outer = disk_offsets(TIP_RING.1);
    let inner = disk_offsets(TIP_RING.0);
    let ring: Vec<_> = outer.into_iter().filter(|o| !inner.contains(o)).collect();
    for (tip, colour) in [(gt_tip, Rgb([0, 0, 255])), (pred_tip, Rgb([255, 0, 0]))] {
        let Some(t) = tip else { continue };
        for &(dr, dc) in &ring {
            let (r, c) = (t.row as isize + dr, t.col as isize + dc);
            if r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols {
                out.put_pixel(c as u32, r as u32, colour);
            }
        }
    }
    Ok(out)
}
