//! Stage-1 corruption oracle: turns a ground-truth mask into the kind of
//! probability map a whole-image segmenter produces, with breaks along the
//! line and spurious segments elsewhere.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::phantom::check_range;
use crate::error::{Error, Result};
use crate::imagecore::morph::{dilate, disk_offsets, line_points, stamp};
use crate::imagecore::raster::{BinaryMask, Point, ProbMap};
use crate::scalar::Scalar;
use crate::seed::{rng_from, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionSpec {
    /// Inclusive range of break disks per mask.
    pub breaks: (usize, usize),
    pub break_radius: (f64, f64),
    /// Inclusive range of false-positive segments per mask.
    pub false_positives: (usize, usize),
    pub fp_length: (f64, f64),
    pub fp_thickness: (f64, f64),
    /// Per-pixel probability of flipping a pixel's class.
    pub flip_rate: f64,
    pub foreground_level: f64,
    pub fp_level: f64,
    /// Background values are drawn from `[0, background_jitter)`.
    pub background_jitter: f64,
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            breaks: (2, 4),
            break_radius: (8.0, 20.0),
            false_positives: (1, 2),
            fp_length: (30.0, 80.0),
            fp_thickness: (2.0, 4.0),
            flip_rate: 0.0,
            foreground_level: 0.9,
            fp_level: 0.6,
            background_jitter: 0.005,
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    /// No breaks, no false positives, no flips.
    pub fn identity(seed: u64) -> Self {
        CorruptionSpec {
            breaks: (0, 0),
            false_positives: (0, 0),
            flip_rate: 0.0,
            seed,
            ..CorruptionSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.breaks.0 > self.breaks.1 || self.false_positives.0 > self.false_positives.1 {
            return Err(Error::param("count ranges must satisfy lo <= hi"));
        }
        check_range("break_radius", self.break_radius, 1.0)?;
        check_range("fp_length", self.fp_length, 1.0)?;
        check_range("fp_thickness", self.fp_thickness, 1.0)?;
        for (name, v) in [
            ("flip_rate", self.flip_rate),
            ("foreground_level", self.foreground_level),
            ("fp_level", self.fp_level),
            ("background_jitter", self.background_jitter),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// What a corruption run drew, for audit and tests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionLog {
    pub breaks: Vec<(Point, f64)>,
    /// Segment end points and thickness.
    pub false_positives: Vec<(Point, Point, f64)>,
    pub flipped: usize,
}

pub fn corrupt_mask<S: Scalar>(gt: &BinaryMask, tip: Point, spec: &CorruptionSpec) -> Result<ProbMap<S>> {
    corrupt_mask_logged(gt, tip, spec).map(|(p, _)| p)
}

const PLACEMENT_ATTEMPTS: usize = 200;

pub fn corrupt_mask_logged<S: Scalar>(
    gt: &BinaryMask,
    tip: Point,
    spec: &CorruptionSpec,
) -> Result<(ProbMap<S>, CorruptionLog)> {
    spec.validate()?;
    if gt.is_blank() {
        return Err(Error::param("cannot corrupt an empty mask"));
    }
    let (rows, cols) = gt.dims();
    let mut rng = rng_from(spec.seed);
    let mut log = CorruptionLog::default();

    let mut line = gt.clone();
    let fg: Vec<Point> = gt.foreground().collect();
    let top = gt.topmost().expect("non-empty");
    let n_breaks = rng.random_range(spec.breaks.0..=spec.breaks.1);
    for _ in 0..n_breaks {
        let radius = draw(&mut rng, spec.break_radius);
        // Every break must cut: both line ends stay outside the disk and
        // disks never touch, so k breaks leave k + 1 pieces.
        let clear = |c: &Point| {
            c.distance(tip) > radius + 1.0
                && c.distance(top) > radius + 1.0
                && log.breaks.iter().all(|&(o, r): &(Point, f64)| c.distance(o) > radius + r + 2.0)
        };
        let center = (0..PLACEMENT_ATTEMPTS)
            .map(|_| fg[rng.random_range(0..fg.len())])
            .find(clear);
        if let Some(center) = center {
            apply_break(&mut line, center, radius);
            log.breaks.push((center, radius));
        }
    }

    let mut fp = BinaryMask::empty(rows, cols)?;
    let mut forbidden = dilate(gt, 3);
    let n_fp = rng.random_range(spec.false_positives.0..=spec.false_positives.1);
    for _ in 0..n_fp {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let length = draw(&mut rng, spec.fp_length);
            let thickness = draw(&mut rng, spec.fp_thickness);
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let cr = rng.random_range(0.0..rows as f64);
            let cc = rng.random_range(0.0..cols as f64);
            let (hr, hc) = (angle.sin() * length / 2.0, angle.cos() * length / 2.0);
            let a = clamp_point(cr - hr, cc - hc, rows, cols);
            let b = clamp_point(cr + hr, cc + hc, rows, cols);
            let mut seg = BinaryMask::empty(rows, cols)?;
            let offsets = disk_offsets(thickness / 2.0);
            for (r, c) in line_points((a.row as isize, a.col as isize), (b.row as isize, b.col as isize)) {
                stamp(&mut seg, r, c, &offsets);
            }
            if seg.foreground().any(|p| forbidden[p]) {
                continue;
            }
            fp.union_with(&seg)?;
            forbidden.union_with(&dilate(&seg, 3))?;
            log.false_positives.push((a, b, thickness));
            break;
        }
    }

    let fg_level = S::of(spec.foreground_level);
    let fp_level = S::of(spec.fp_level);
    let mut values = Vec::with_capacity(rows * cols);
    for i in 0..rows * cols {
        let p = Point::new(i / cols, i % cols);
        let mut v = if line[p] {
            fg_level
        } else if fp[p] {
            fp_level
        } else {
            jitter(&mut rng, spec.background_jitter)
        };
        if spec.flip_rate > 0.0 && p != tip && rng.random_bool(spec.flip_rate) {
            v = if line[p] || fp[p] {
                jitter(&mut rng, spec.background_jitter)
            } else {
                S::of(rng.random_range(0.05..0.5))
            };
            log.flipped += 1;
        }
        values.push(v);
    }
    Ok((ProbMap::from_probabilities(rows, cols, values)?, log))
}

/// Clears every pixel within `radius` of `center`.
pub fn apply_break(line: &mut BinaryMask, center: Point, radius: f64) {
    let offsets = disk_offsets(radius);
    crate::imagecore::morph::stamp_value(line, center.row as isize, center.col as isize, &offsets, false);
}

fn jitter<S: Scalar>(rng: &mut Rng, amplitude: f64) -> S {
    S::of(rng.random_range(0.0..1.0) * amplitude)
}

fn draw(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn clamp_point(r: f64, c: f64, rows: usize, cols: usize) -> Point {
    Point::new(
        r.round().clamp(0.0, rows as f64 - 1.0) as usize,
        c.round().clamp(0.0, cols as f64 - 1.0) as usize,
    )
}
