//! Corpus-level evaluation: per-image rows and the summary statistics of
//! the usual results table (tip error mean ± sd, no-MFP rate, share of tips
//! within 10 mm, Dice mean ± sd, share of Dice above 0.95).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{dsc, mean_sd};
use super::tip::mfp_stats;
use crate::error::{Error, Result};
use crate::imagecore::raster::{BinaryMask, Point};
use crate::pipeline::{PipelineResult, StageTimings};
use crate::synth::corpus::write_json;
use crate::synth::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub pixel_spacing_mm: f64,
    /// Components smaller than this are ignored when counting fragments.
    pub min_area: usize,
    /// Error charged for an image with no predicted tip in the penalized
    /// total. `None` charges the image diagonal.
    pub miss_penalty_mm: Option<f64>,
    /// Wall times are not reproducible, so they stay out of reports unless
    /// asked for.
    pub include_timings: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            pixel_spacing_mm: 0.14,
            min_area: 10,
            miss_penalty_mm: None,
            include_timings: false,
        }
    }
}

/// What evaluation needs from one image.
#[derive(Debug, Clone)]
pub struct EvalInput {
    pub id: String,
    /// At the ground truth's resolution.
    pub prediction: BinaryMask,
    pub tip: Option<Point>,
    pub gt_mask: BinaryMask,
    pub gt_tip: Point,
    pub timings: Option<StageTimings>,
}

impl EvalInput {
    pub fn from_result(result: &PipelineResult, sample: &Sample) -> Result<Self> {
        if result.id != sample.id {
            return Err(Error::param(format!(
                "result {} paired with sample {}",
                result.id, sample.id
            )));
        }
        Ok(EvalInput {
            id: result.id.clone(),
            prediction: result.final_at_original()?,
            tip: result.tip.map(|t| t.point),
            gt_mask: sample.gt_mask.clone(),
            gt_tip: sample.tip,
            timings: Some(result.timings),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation (`n - 1`).
    pub sd: f64,
}

impl MeanSd {
    fn of(values: &[f64]) -> Option<MeanSd> {
        mean_sd(values).map(|(mean, sd)| MeanSd { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub id: String,
    /// Tip distance; absent for a miss.
    pub rmse_px: Option<f64>,
    pub rmse_mm: Option<f64>,
    pub dsc: f64,
    pub components: usize,
    pub no_mfp: bool,
    pub tip_row: Option<usize>,
    pub tip_col: Option<usize>,
    pub gt_tip_row: usize,
    pub gt_tip_col: usize,
    pub miss: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_times: Option<StageTimings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub config_hash: String,
    pub pixel_spacing_mm: f64,
    pub min_area: usize,
    /// Over images with a tip; absent when every image missed.
    pub tip_error_mm: Option<MeanSd>,
    pub tip_error_px: Option<MeanSd>,
    /// Root mean square over images with a tip.
    pub rmse_mm: Option<f64>,
    pub misses: usize,
    /// As configured; `None` means the image diagonal was charged.
    pub miss_penalty_mm: Option<f64>,
    /// Mean ± sd over all images, misses charged the penalty.
    pub penalized_tip_error_mm: MeanSd,
    pub no_mfp_rate: f64,
    /// Misses count as failures.
    pub under_10mm_rate: f64,
    pub dsc: MeanSd,
    pub dsc_over_095_rate: f64,
    pub rows: Vec<ImageRow>,
}

/// Aggregates per-image metrics in id order.
pub fn evaluate_corpus(inputs: &[EvalInput], config_hash: &str, opts: &EvalOptions) -> Result<EvalReport> {
    if inputs.is_empty() {
        return Err(Error::param("nothing to evaluate"));
    }
    if !(opts.pixel_spacing_mm > 0.0) {
        return Err(Error::param("pixel spacing must be positive"));
    }
    let mut sorted: Vec<&EvalInput> = inputs.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::param(format!("duplicate image id {}", w[0].id)));
    }
    let spacing = opts.pixel_spacing_mm;
    let mut rows = Vec::with_capacity(sorted.len());
    let mut penalized = Vec::with_capacity(sorted.len());
    for input in sorted {
        let (components, no_mfp) = mfp_stats(&input.prediction, opts.min_area);
        let err_px = input.tip.map(|t| t.distance(input.gt_tip));
        let (rows_n, cols_n) = input.gt_mask.dims();
        let penalty = opts
            .miss_penalty_mm
            .unwrap_or_else(|| (rows_n as f64).hypot(cols_n as f64) * spacing);
        penalized.push(err_px.map_or(penalty, |e| e * spacing));
        rows.push(ImageRow {
            id: input.id.clone(),
            rmse_px: err_px,
            rmse_mm: err_px.map(|e| e * spacing),
            dsc: dsc::<f64>(&input.gt_mask, &input.prediction)?,
            components,
            no_mfp,
            tip_row: input.tip.map(|t| t.row),
            tip_col: input.tip.map(|t| t.col),
            gt_tip_row: input.gt_tip.row,
            gt_tip_col: input.gt_tip.col,
            miss: input.tip.is_none(),
            stage_times: if opts.include_timings { input.timings } else { None },
        });
    }
    let n = rows.len();
    let frac = |k: usize| k as f64 / n as f64;
    let hits_px: Vec<f64> = rows.iter().filter_map(|r| r.rmse_px).collect();
    let hits_mm: Vec<f64> = hits_px.iter().map(|e| e * spacing).collect();
    let dscs: Vec<f64> = rows.iter().map(|r| r.dsc).collect();
    let rmse_mm = (!hits_mm.is_empty())
        .then(|| (hits_mm.iter().map(|e| e * e).sum::<f64>() / hits_mm.len() as f64).sqrt());
    Ok(EvalReport {
        n,
        config_hash: config_hash.to_string(),
        pixel_spacing_mm: spacing,
        min_area: opts.min_area,
        tip_error_mm: MeanSd::of(&hits_mm),
        tip_error_px: MeanSd::of(&hits_px),
        rmse_mm,
        misses: rows.iter().filter(|r| r.miss).count(),
        miss_penalty_mm: opts.miss_penalty_mm,
        penalized_tip_error_mm: MeanSd::of(&penalized).expect("n >= 1"),
        no_mfp_rate: frac(rows.iter().filter(|r| r.no_mfp).count()),
        under_10mm_rate: frac(rows.iter().filter(|r| r.rmse_mm.is_some_and(|e| e < 10.0)).count()),
        dsc: MeanSd::of(&dscs).expect("n >= 1"),
        dsc_over_095_rate: frac(rows.iter().filter(|r| r.dsc > 0.95).count()),
        rows,
    })
}

/// Convenience over pipeline results paired with their samples.
pub fn evaluate_results(pairs: &[(&PipelineResult, &Sample)], opts: &EvalOptions) -> Result<EvalReport> {
    let inputs = pairs
        .iter()
        .map(|(r, s)| EvalInput::from_result(r, s))
        .collect::<Result<Vec<_>>>()?;
    let hash = common_hash(pairs.iter().map(|(r, _)| r.config_hash.as_str()));
    evaluate_corpus(&inputs, &hash, opts)
}

fn common_hash<'a>(mut hashes: impl Iterator<Item = &'a str>) -> String {
    let first = hashes.next().unwrap_or_default();
    if hashes.all(|h| h == first) {
        first.to_string()
    } else {
        "mixed".to_string()
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    id: &'a str,
    rmse_px: Option<f64>,
    rmse_mm: Option<f64>,
    dsc: f64,
    components: usize,
    no_mfp: bool,
    tip_row: Option<usize>,
    tip_col: Option<usize>,
    stage_times: String,
}

/// `report.csv` and `report.json` under `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    for r in &report.rows {
        let stage_times = r
            .stage_times
            .map(|t| format!("{:.3};{:.3};{:.3}", t.stage1_ms, t.stage2_ms, t.stage3_ms))
            .unwrap_or_default();
        w.serialize(CsvRow {
            id: &r.id,
            rmse_px: r.rmse_px,
            rmse_mm: r.rmse_mm,
            dsc: r.dsc,
            components: r.components,
            no_mfp: r.no_mfp,
            tip_row: r.tip_row,
            tip_col: r.tip_col,
            stage_times,
        })
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join("report.json"), report)
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::param(format!("csv output {}: {other:?}", path.display())),
    }
}

/// Side-by-side summary of a baseline and the full method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub metric: String,
    pub baseline: String,
    pub mfcn: String,
}

pub fn paired_report(baseline: &EvalReport, mfcn: &EvalReport) -> Vec<PairedRow> {
    let mean_sd = |m: Option<MeanSd>| m.map_or("n/a".to_string(), |m| format!("{:.2} ± {:.2}", m.mean, m.sd));
    let pct = |v: f64| format!("{:.1}", 100.0 * v);
    vec![
        ("RMSE (mean±sd, mm)", mean_sd(baseline.tip_error_mm), mean_sd(mfcn.tip_error_mm)),
        ("No MFP (%)", pct(baseline.no_mfp_rate), pct(mfcn.no_mfp_rate)),
        ("RMSE < 10 mm (%)", pct(baseline.under_10mm_rate), pct(mfcn.under_10mm_rate)),
        ("Dice (mean±sd)", mean_sd(Some(baseline.dsc)), mean_sd(Some(mfcn.dsc))),
        ("Dice > 0.95 (%)", pct(baseline.dsc_over_095_rate), pct(mfcn.dsc_over_095_rate)),
        ("Misses", baseline.misses.to_string(), mfcn.misses.to_string()),
        (
            "Penalized RMSE (mean±sd, mm)",
            mean_sd(Some(baseline.penalized_tip_error_mm)),
            mean_sd(Some(mfcn.penalized_tip_error_mm)),
        ),
    ]
    .into_iter()
    .map(|(metric, baseline, mfcn)| PairedRow {
        metric: metric.to_string(),
        baseline,
        mfcn,
    })
    .collect()
}

pub fn write_paired(path: &Path, rows: &[PairedRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(id: &str, pred: &[Point], tip: Option<Point>, gt: &[Point], gt_tip: Point) -> EvalInput {
        EvalInput {
            id: id.into(),
            prediction: BinaryMask::from_points(20, 20, pred).unwrap(),
            tip,
            gt_mask: BinaryMask::from_points(20, 20, gt).unwrap(),
            gt_tip,
            timings: None,
        }
    }

    fn column(c: usize, rows: std::ops::Range<usize>) -> Vec<Point> {
        rows.map(|r| Point::new(r, c)).collect()
    }

    #[test]
    fn perfect_predictions() {
        let gt = column(5, 0..15);
        let inputs = vec![
            input("a", &gt, Some(Point::new(14, 5)), &gt, Point::new(14, 5)),
            input("b", &gt, Some(Point::new(14, 5)), &gt, Point::new(14, 5)),
        ];
        let r = evaluate_corpus(&inputs, "h", &EvalOptions::default()).unwrap();
        assert_eq!(r.tip_error_mm, Some(MeanSd { mean: 0.0, sd: 0.0 }));
        assert_eq!(r.no_mfp_rate, 1.0);
        assert_eq!(r.dsc_over_095_rate, 1.0);
        assert_eq!(r.under_10mm_rate, 1.0);
    }

    #[test]
    fn two_image_hand_computation() {
        // a: tip off by (3, 4) -> 5 px; Dice 2*10/(15+10) = 0.8.
        // b: tip off by 12 px -> 12 px; prediction in two pieces, Dice 1.
        let gt = column(5, 0..15);
        let mut split = column(5, 0..5);
        split.extend(column(5, 8..15));
        let inputs = vec![
            input("b", &split, Some(Point::new(2, 5)), &split, Point::new(14, 5)),
            input("a", &column(5, 0..10), Some(Point::new(11, 9)), &gt, Point::new(14, 5)),
        ];
        let opts = EvalOptions { pixel_spacing_mm: 1.0, min_area: 1, ..EvalOptions::default() };
        let r = evaluate_corpus(&inputs, "h", &opts).unwrap();
        assert_eq!(r.rows[0].id, "a");
        let e = r.tip_error_mm.unwrap();
        assert!((e.mean - 8.5).abs() < 1e-12);
        // Sample sd of {5, 12}: sqrt(((−3.5)² + 3.5²) / 1).
        assert!((e.sd - 24.5f64.sqrt()).abs() < 1e-12);
        assert!((r.rmse_mm.unwrap() - ((25.0 + 144.0) / 2.0f64).sqrt()).abs() < 1e-12);
        assert!((r.dsc.mean - 0.9).abs() < 1e-12);
        assert_eq!(r.no_mfp_rate, 0.5);
        assert_eq!(r.under_10mm_rate, 0.5);
        assert_eq!(r.dsc_over_095_rate, 0.5);
    }

    #[test]
    fn misses_are_counted_not_dropped() {
        let gt = column(5, 0..15);
        let inputs = vec![
            input("a", &gt, Some(Point::new(14, 5)), &gt, Point::new(14, 5)),
            input("b", &[], None, &gt, Point::new(14, 5)),
        ];
        let opts = EvalOptions { miss_penalty_mm: Some(100.0), ..EvalOptions::default() };
        let r = evaluate_corpus(&inputs, "h", &opts).unwrap();
        assert_eq!(r.misses, 1);
        assert_eq!(r.tip_error_mm.unwrap().mean, 0.0);
        assert_eq!(r.penalized_tip_error_mm.mean, 50.0);
        assert_eq!(r.under_10mm_rate, 0.5);
        assert_eq!(r.rows[1].dsc, 0.0);
    }

    #[test]
    fn empty_and_duplicate_inputs_rejected() {
        assert!(evaluate_corpus(&[], "h", &EvalOptions::default()).is_err());
        let gt = column(5, 0..15);
        let a = input("a", &gt, Some(Point::new(14, 5)), &gt, Point::new(14, 5));
        assert!(evaluate_corpus(&[a.clone(), a], "h", &EvalOptions::default()).is_err());
    }

    #[test]
    fn csv_has_documented_columns() {
        let dir = tempfile::tempdir().unwrap();
        let gt = column(5, 0..15);
        let r = evaluate_corpus(
            &[input("a", &gt, None, &gt, Point::new(14, 5))],
            "h",
            &EvalOptions::default(),
        )
        .unwrap();
        write_report(dir.path(), &r).unwrap();
        let text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "id,rmse_px,rmse_mm,dsc,components,no_mfp,tip_row,tip_col,stage_times"
        );
        let back: EvalReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(back.n, 1);
    }

    #[test]
    fn paired_layout() {
        let gt = column(5, 0..15);
        let r = evaluate_corpus(
            &[input("a", &gt, Some(Point::new(14, 5)), &gt, Point::new(14, 5))],
            "h",
            &EvalOptions::default(),
        )
        .unwrap();
        let rows = paired_report(&r, &r);
        assert_eq!(rows[0].metric, "RMSE (mean±sd, mm)");
        assert_eq!(rows[1].mfcn, "100.0");
    }
}
