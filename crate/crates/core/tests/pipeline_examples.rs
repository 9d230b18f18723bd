//! Worked examples for the stages and backends, checked against oracles
//! computed here rather than copied from the implementation.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use linetrace::backends::exchange::echo_pending;
use linetrace::backends::{
    rule_reconnect, BackendDescriptor, BackendKind, ExchangeParams, FullBackend, OracleParams, PatchBackend,
    ReconnectParams, RidgeBackend, RidgeParams, RuleReconnector,
};
use linetrace::imagecore::clahe::{clahe_equalize, ClaheParams};
use linetrace::imagecore::components::{count_components, Connectivity};
use linetrace::imagecore::morph::{binarize, dilate};
use linetrace::imagecore::resize::{Resize, ResizeMode};
use linetrace::imagecore::skeleton::skeletonize;
use linetrace::patchvote::{majority_vote, Patch, PatchSet};
use linetrace::pipeline::{run_pipeline, run_stage1, run_stage2, run_stage3, Backends};
use linetrace::synth::corpus::{corpus_sample, generate_corpus, list_files};
use linetrace::synth::{generate_phantom, CorruptionSpec, PhantomSpec, Sample};
use linetrace::tipmetrics::tip_rmse;
use linetrace::vmflg::{generate_fragments, FragmentSpec};
use linetrace::{BinaryMask, Error, GrayImage, PipelineConfig, Point, ProbMapF64, Stage};

fn phantom(size: usize, seed: u64) -> Sample {
    generate_phantom(&PhantomSpec { size: (size, size), seed, ..PhantomSpec::default() }).unwrap()
}

fn oracle(corruption: CorruptionSpec) -> BackendDescriptor {
    BackendDescriptor::with_params(BackendKind::Oracle, &OracleParams { corruption, ..OracleParams::default() })
}

fn components(m: &BinaryMask) -> usize {
    count_components(m, Connectivity::Eight)
}

#[test]
fn ideal_backends_reproduce_ground_truth() {
    let s = phantom(256, 1);
    let mut cfg = PipelineConfig::default();
    cfg.working_size = (256, 256);
    cfg.stage1.backend = oracle(CorruptionSpec::identity(0));
    cfg.stage2.backend = oracle(CorruptionSpec::identity(0));
    // One patch spanning the image makes coverage total.
    cfg.stage2.patch_size = (256, 256);
    cfg.stage2.patch_count = 4;
    let r = run_pipeline::<f64>(&s.id, &s.image, Some(&s), &cfg).unwrap();
    assert_eq!(r.final_at_original().unwrap(), s.gt_mask);
    let tip = r.tip.unwrap().point;
    assert_eq!(tip, s.tip);
    assert_eq!(tip_rmse::<f64>(&[(s.tip, tip)], Some(0.14)).unwrap(), 0.0);
}

#[test]
fn uncorrupted_stage1_is_resized_ground_truth() {
    let s = phantom(512, 2);
    let mut cfg = PipelineConfig::default();
    cfg.working_size = (256, 256);
    cfg.stage1.backend = oracle(CorruptionSpec::identity(0));
    let b = Backends::<f64>::build(&cfg, Some(&s)).unwrap();
    let m = run_stage1(&s.image, &cfg, b.full.as_ref()).unwrap();
    assert_eq!(m, s.gt_mask.resize((256, 256), ResizeMode::Nearest).unwrap());
}

#[test]
fn low_threshold_mask_contains_high_threshold_mask() {
    let s = phantom(256, 3);
    let mut cfg = PipelineConfig::default();
    cfg.working_size = (256, 256);
    cfg.stage1.backend = BackendDescriptor::new(BackendKind::Ridge);
    let b = Backends::<f64>::build(&cfg, Some(&s)).unwrap();
    let low = run_stage1(&s.image, &cfg, b.full.as_ref()).unwrap();
    cfg.stage1.threshold = 0.5;
    let high = run_stage1(&s.image, &cfg, b.full.as_ref()).unwrap();
    assert!(high.is_subset_of(&low));
    assert!(high.foreground_count() < low.foreground_count());
}

#[test]
fn two_breaks_leave_at_least_three_pieces() {
    for seed in 0..10 {
        let s = phantom(512, 10 + seed);
        let mut cfg = PipelineConfig::default();
        cfg.working_size = (512, 512);
        cfg.stage1.backend = oracle(CorruptionSpec {
            breaks: (2, 2),
            false_positives: (0, 0),
            seed,
            ..CorruptionSpec::default()
        });
        let b = Backends::<f64>::build(&cfg, Some(&s)).unwrap();
        let m = run_stage1(&s.image, &cfg, b.full.as_ref()).unwrap();
        assert!(components(&m) >= 3, "seed {seed}: {} pieces", components(&m));
    }
}

#[test]
fn oracle_patches_vote_back_to_ground_truth() {
    let s = phantom(256, 4);
    let mut cfg = PipelineConfig::default();
    cfg.working_size = (256, 256);
    cfg.stage2.backend = oracle(CorruptionSpec::identity(0));
    cfg.stage2.patch_size = (64, 64);
    cfg.stage2.patch_count = 2000;
    let b = Backends::<f64>::build(&cfg, Some(&s)).unwrap();
    let voted = run_stage2(&s.image, &s.gt_mask, &cfg, b.patch.unwrap().as_ref()).unwrap();
    assert_eq!(voted, s.gt_mask);
}

/// Eight ground-truth crops over one line pixel, some zeroed.
fn vote_with_zeroed(zeroed: usize) -> bool {
    let s = phantom(256, 5);
    let p = s.tip;
    let patches: Vec<Patch<bool>> = (0..8)
        .map(|i| {
            let origin = Point::new(p.row.saturating_sub(4 * i + 1).min(256 - 40), p.col.saturating_sub(3 * i + 1).min(256 - 40));
            let crop = s.gt_mask.crop(origin, (40, 40)).unwrap();
            let payload = if i < zeroed { crop.map(|_| false) } else { crop };
            Patch::new(origin, payload)
        })
        .collect();
    assert!(patches.iter().all(|q| q.covers(p)));
    *majority_vote(&PatchSet::new((256, 256), patches).unwrap(), 0.7).unwrap().at(p.row, p.col)
}

#[test]
fn a_quarter_of_bad_patches_is_outvoted() {
    assert!(vote_with_zeroed(0));
    assert!(vote_with_zeroed(2), "6 of 8 = 0.75 must pass 0.7");
    assert!(!vote_with_zeroed(3), "5 of 8 = 0.625 must fail 0.7");
}

#[test]
fn reconnection_of_trivial_inputs() {
    let rc = RuleReconnector::new(ReconnectParams::default()).unwrap();
    let empty = BinaryMask::empty(64, 64).unwrap();
    assert_eq!(run_stage3(&empty, &rc).unwrap(), empty);
    let s = phantom(256, 6);
    let out = run_stage3(&s.gt_mask, &rc).unwrap();
    assert_eq!(components(&out), 1);
    assert_eq!(out, s.gt_mask);
}

#[test]
fn fragmented_lines_are_mostly_rejoined() {
    let params = ReconnectParams::default();
    let mut joined = 0;
    let mut total = 0;
    for k in 0..10 {
        let s = phantom(1024, 100 + k);
        let spec = FragmentSpec { seed: k, ..FragmentSpec::default() };
        for v in generate_fragments(&s.gt_mask, s.tip, &spec).unwrap() {
            total += 1;
            joined += usize::from(components(&rule_reconnect(&v, &params)) == 1);
        }
    }
    println!("rejoined {joined}/{total}");
    assert_eq!(total, 100);
    assert!(joined >= 95, "rejoined only {joined}/100");
}

#[test]
fn ridge_recovers_the_skeleton_of_clean_phantoms() {
    let backend = RidgeBackend::new(RidgeParams::default()).unwrap();
    for seed in 0..5 {
        let s = generate_phantom(&PhantomSpec {
            size: (512, 512),
            noise_sigma: 0.0,
            distractors: 0,
            occluders: 0,
            seed: 200 + seed,
            ..PhantomSpec::default()
        })
        .unwrap();
        let probs: ProbMapF64 = backend.predict_full(&s.image).unwrap();
        let found = binarize(&probs, 0.01);
        let skel = skeletonize(&s.gt_mask);
        let hit = skel.foreground().filter(|&p| found[p]).count();
        let recall = hit as f64 / skel.foreground_count() as f64;
        assert!(recall >= 0.9, "seed {seed}: skeleton recall {recall:.3}");
    }
}

#[test]
fn patch_focus_does_not_lose_line_pixels() {
    // Straight 4-px vertical line in noise.
    let s = phantom(256, 7);
    let mut img = s.image.clone();
    let mut line = BinaryMask::empty(256, 256).unwrap();
    for r in 40..220 {
        for c in 120..124 {
            *img.at_mut(r, c) = img.at(r, c).saturating_add(14_000);
            *line.at_mut(r, c) = true;
        }
    }
    let backend = RidgeBackend::new(RidgeParams::default()).unwrap();
    let origin = Point::new(96, 90);
    let size = (64, 64);
    let full: ProbMapF64 = backend.predict_full(&img).unwrap();
    let full_region = backend.detect(&full).crop(origin, size).unwrap();
    let patch = PatchBackend::<f64>::predict_patch(&backend, &Patch::new(origin, img.crop(origin, size).unwrap())).unwrap();
    let truth = line.crop(origin, size).unwrap();
    let recall = |m: &BinaryMask| truth.foreground().filter(|&p| m[p]).count() as f64 / truth.foreground_count() as f64;
    assert!(
        recall(&patch.payload) >= recall(&full_region),
        "patch {:.3} < full {:.3}",
        recall(&patch.payload),
        recall(&full_region)
    );
}

#[test]
fn flat_patch_predicts_nothing() {
    let backend = RidgeBackend::new(RidgeParams::default()).unwrap();
    let p = Patch::new(Point::new(0, 0), GrayImage::filled(64, 64, 20_000).unwrap());
    assert!(PatchBackend::<f32>::predict_patch(&backend, &p).unwrap().payload.is_blank());
}

#[test]
fn empty_stage1_means_no_line_not_an_error() {
    let img = GrayImage::filled(256, 256, 20_000).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.working_size = (256, 256);
    cfg.stage2.patch_size = (64, 64);
    let r = run_pipeline::<f32>("flat", &img, None, &cfg).unwrap();
    assert!(r.no_line);
    assert!(r.final_mask.is_blank());
    assert!(r.tip.is_none());
}

#[test]
fn same_config_same_result() {
    let s = phantom(256, 8);
    let mut cfg = PipelineConfig::default();
    cfg.working_size = (256, 256);
    cfg.stage1.backend = oracle(CorruptionSpec::default());
    cfg.stage2.patch_size = (64, 64);
    let mut a = run_pipeline::<f64>(&s.id, &s.image, Some(&s), &cfg).unwrap();
    let mut b = run_pipeline::<f64>(&s.id, &s.image, Some(&s), &cfg).unwrap();
    a.timings = Default::default();
    b.timings = Default::default();
    assert_eq!(a, b);
}

#[test]
fn failing_stage_is_tagged_and_keeps_earlier_output() {
    let s = phantom(256, 9);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.working_size = (256, 256);
    cfg.stage1.backend = oracle(CorruptionSpec::identity(0));
    cfg.stage2.patch_size = (64, 64);
    cfg.stage2.patch_count = 5;
    cfg.stage2.backend = BackendDescriptor::with_params(
        BackendKind::External,
        &ExchangeParams { timeout_ms: 100, ..ExchangeParams::default() },
    );
    cfg.stage2.backend.exchange_dir = Some(dir.path().to_path_buf());
    let f = run_pipeline::<f64>(&s.id, &s.image, Some(&s), &cfg).unwrap_err();
    assert_eq!(f.error.stage(), Some(Stage::Stage2));
    assert!(matches!(f.error, Error::Stage { ref source, .. } if matches!(**source, Error::Exchange { .. })));
    assert_eq!(f.partial.stage1, s.gt_mask);
    assert!(f.partial.stage2.is_none());
}

#[test]
fn external_patch_backend_completes_the_pipeline() {
    let s = phantom(256, 11);
    let dir = tempfile::tempdir().unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let responder = {
        let dir = dir.path().to_path_buf();
        let stop = stop.clone();
        std::thread::spawn(move || {
            while !stop.load(Ordering::Relaxed) {
                echo_pending(&dir).unwrap();
                std::thread::sleep(std::time::Duration::from_millis(5));
            }
        })
    };
    let mut cfg = PipelineConfig::default();
    cfg.working_size = (256, 256);
    cfg.stage1.backend = oracle(CorruptionSpec::default());
    cfg.stage2.patch_size = (64, 64);
    cfg.stage2.patch_count = 20;
    cfg.stage2.backend = BackendDescriptor::new(BackendKind::External);
    cfg.stage2.backend.exchange_dir = Some(dir.path().to_path_buf());
    let r = run_pipeline::<f64>(&s.id, &s.image, Some(&s), &cfg);
    stop.store(true, Ordering::Relaxed);
    responder.join().unwrap();
    let r = r.unwrap();
    assert!(r.stage2.is_some() && r.stage3.is_some());
}

#[test]
fn stage2_stays_near_stage1() {
    // Patches are anchored on stage-1 pixels, but a patch may still reach
    // structure far from them; measure how much of stage 2 lies beyond the
    // reconnector's reach of stage 1.
    let mut cfg = PipelineConfig::default();
    cfg.stage1.backend = oracle(CorruptionSpec::default());
    cfg.stage2.patch_size = (256, 256);
    let reach = ReconnectParams::default().max_gap as usize;
    let spec = PhantomSpec { seed: 2024, ..PhantomSpec::default() };
    for i in 0..4 {
        let s = corpus_sample(&spec, i).unwrap();
        let r = run_pipeline::<f64>(&s.id, &s.image, Some(&s), &cfg).unwrap();
        let near = dilate(&r.stage1, reach);
        let s2 = r.stage2.unwrap();
        let far = s2.foreground().filter(|&p| !near[p]).count();
        assert_eq!(far, 0, "{}: {far} stage-2 pixels beyond {reach} px of stage 1", s.id);
    }
}

#[test]
fn clahe_twice_is_nearly_idempotent() {
    let p = ClaheParams::default();
    let mut worst = 0u16;
    for seed in 0..3 {
        let s = phantom(512, 300 + seed);
        let once = clahe_equalize(&s.image, p).unwrap();
        let twice = clahe_equalize(&once, p).unwrap();
        worst = worst.max(once.as_slice().iter().zip(twice.as_slice()).map(|(a, b)| a.abs_diff(*b)).max().unwrap());
    }
    // Tolerance of two 8-bit levels expressed in 16-bit units.
    assert!(worst <= 2 * 257, "max deviation {worst} 16-bit levels");
}

#[test]
fn corpus_regeneration_is_byte_identical() {
    let spec = PhantomSpec { size: (256, 256), seed: 31, ..PhantomSpec::default() };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate_corpus(&spec, 150, a.path()).unwrap();
    let mb = generate_corpus(&spec, 150, b.path()).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(ma.entries[149].id, "s0149");
    let files = list_files(a.path()).unwrap();
    assert_eq!(files, list_files(b.path()).unwrap());
    for f in files {
        assert_eq!(std::fs::read(a.path().join(&f)).unwrap(), std::fs::read(b.path().join(&f)).unwrap(), "{f:?}");
    }
}
