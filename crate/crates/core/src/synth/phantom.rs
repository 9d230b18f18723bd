//! Seeded phantoms: a smooth catheter-like curve descending from the upper
//! border, broad rib-like bands, soft occluding blobs and Gaussian noise.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::components::{count_components, Connectivity};
use crate::imagecore::morph::dilate;
use crate::imagecore::raster::{BinaryMask, GrayImage, Point};
use crate::seed::{derive_seed, rng_from, Rng};
use crate::tipmetrics::locate_tip;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    /// `(rows, cols)`, both at least 256.
    pub size: (usize, usize),
    /// Spline control points including both ends.
    pub control_points: usize,
    /// Curve thickness range in pixels.
    pub thickness: (f64, f64),
    pub distractors: usize,
    /// Full width of the rib-like bands.
    pub distractor_width: (f64, f64),
    pub occluders: usize,
    pub occluder_radius: (f64, f64),
    /// Standard deviation of additive noise, in 16-bit intensity units.
    pub noise_sigma: f64,
    pub background_level: u16,
    /// Intensity added on curve pixels.
    pub curve_level: u16,
    /// Peak intensity added at a band's centre line.
    pub distractor_level: u16,
    pub occluder_level: u16,
    /// Physical pixel size carried into manifests.
    pub pixel_spacing_mm: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            size: (1024, 1024),
            control_points: 5,
            thickness: (3.0, 6.0),
            distractors: 4,
            distractor_width: (18.0, 40.0),
            occluders: 3,
            occluder_radius: (30.0, 80.0),
            noise_sigma: 900.0,
            background_level: 18_000,
            curve_level: 14_000,
            distractor_level: 9_000,
            occluder_level: 7_000,
            pixel_spacing_mm: 0.14,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.size;
        if rows < 256 || cols < 256 {
            return Err(Error::param(format!("phantom size {rows}x{cols} below 256x256")));
        }
        if self.control_points < 2 {
            return Err(Error::param("a curve needs at least 2 control points"));
        }
        check_range("thickness", self.thickness, 1.0)?;
        check_range("distractor_width", self.distractor_width, 1.0)?;
        check_range("occluder_radius", self.occluder_radius, 1.0)?;
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::param("noise_sigma must be non-negative"));
        }
        if !(self.pixel_spacing_mm > 0.0) {
            return Err(Error::param("pixel_spacing_mm must be positive"));
        }
        Ok(())
    }
}

pub(crate) fn check_range(name: &str, (lo, hi): (f64, f64), min: f64) -> Result<()> {
    if !(lo >= min && hi >= lo && hi.is_finite()) {
        return Err(Error::param(format!("{name} range ({lo}, {hi}) must satisfy {min} <= lo <= hi")));
    }
    Ok(())
}

/// One generated phantom with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub seed: u64,
    pub image: GrayImage,
    pub gt_mask: BinaryMask,
    pub tip: Point,
}

const MAX_ATTEMPTS: u64 = 64;

/// Generates the phantom for `spec.seed`.
///
/// Draws that fail the self-check (single component, interior tip at the
/// curve's far end) are redrawn from derived sub-seeds.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Sample> {
    spec.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng_from(derive_seed(spec.seed, attempt));
        if let Some((gt, tip)) = draw_curve(spec, &mut rng)? {
            let image = render(spec, &gt, &mut rng)?;
            return Ok(Sample {
                id: format!("{:016x}", spec.seed),
                seed: spec.seed,
                image,
                gt_mask: gt,
                tip,
            });
        }
    }
    Err(Error::Generation(format!(
        "no valid curve after {MAX_ATTEMPTS} attempts for {:?}",
        spec.size
    )))
}

fn uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Control points as `(row, col)` in floating pixel coordinates.
fn control_points(spec: &PhantomSpec, rng: &mut Rng) -> Vec<(f64, f64)> {
    let (h, w) = (spec.size.0 as f64, spec.size.1 as f64);
    let entry = if rng.random_bool(0.5) {
        (0.0, uniform(rng, (0.2 * w, 0.8 * w)))
    } else {
        let row = uniform(rng, (0.05 * h, 0.35 * h));
        let col = if rng.random_bool(0.5) { 0.0 } else { w - 1.0 };
        (row, col)
    };
    let tip = (uniform(rng, (0.55 * h, 0.8 * h)), uniform(rng, (0.3 * w, 0.7 * w)));
    let n = spec.control_points;
    let mut pts = Vec::with_capacity(n);
    pts.push(entry);
    for i in 1..n - 1 {
        let t = i as f64 / (n - 1) as f64;
        let row = entry.0 + (tip.0 - entry.0) * t;
        let col = entry.1 + (tip.1 - entry.1) * t + uniform(rng, (-0.1 * w, 0.1 * w));
        pts.push((row, col.clamp(0.08 * w, 0.92 * w)));
    }
    pts.push(tip);
    pts
}

/// Uniform Catmull-Rom spline through `pts`, sampled at sub-pixel spacing.
fn spline(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let get = |i: isize| pts[i.clamp(0, pts.len() as isize - 1) as usize];
    let mut out = Vec::new();
    for i in 0..pts.len() as isize - 1 {
        let (p0, p1, p2, p3) = (get(i - 1), get(i), get(i + 1), get(i + 2));
        let len = ((p2.0 - p1.0).powi(2) + (p2.1 - p1.1).powi(2)).sqrt();
        let steps = (len * 3.0).ceil().max(1.0) as usize;
        for s in 0..steps {
            let t = s as f64 / steps as f64;
            let (t2, t3) = (t * t, t * t * t);
            let f = |a: f64, b: f64, c: f64, d: f64| {
                0.5 * (2.0 * b + (c - a) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2
                    + (3.0 * b - 3.0 * c + d - a) * t3)
            };
            out.push((f(p0.0, p1.0, p2.0, p3.0), f(p0.1, p1.1, p2.1, p3.1)));
        }
    }
    out.push(*pts.last().expect("at least two control points"));
    out
}

/// Sets pixels within `radius` of the floating centre.
fn stamp_disk(m: &mut BinaryMask, (cr, cc): (f64, f64), radius: f64) {
    let (rows, cols) = (m.rows() as f64, m.cols() as f64);
    let r0 = (cr - radius).floor().max(0.0) as usize;
    let r1 = (cr + radius).ceil().min(rows - 1.0).max(0.0) as usize;
    let c0 = (cc - radius).floor().max(0.0) as usize;
    let c1 = (cc + radius).ceil().min(cols - 1.0).max(0.0) as usize;
    let r2 = radius * radius;
    for r in r0..=r1 {
        for c in c0..=c1 {
            if (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2) <= r2 {
                *m.at_mut(r, c) = true;
            }
        }
    }
}

fn draw_curve(spec: &PhantomSpec, rng: &mut Rng) -> Result<Option<(BinaryMask, Point)>> {
    let (rows, cols) = spec.size;
    let pts = control_points(spec, rng);
    let path = spline(&pts);
    let t_start = uniform(rng, spec.thickness);
    let t_end = uniform(rng, spec.thickness);
    let mut gt = BinaryMask::empty(rows, cols)?;
    let last = (path.len() - 1).max(1) as f64;
    for (i, &p) in path.iter().enumerate() {
        let thickness = t_start + (t_end - t_start) * i as f64 / last;
        stamp_disk(&mut gt, p, thickness / 2.0);
    }
    if count_components(&gt, Connectivity::Eight) != 1 {
        return Ok(None);
    }
    let Some(tip) = locate_tip(&gt).map(|t| t.point) else {
        return Ok(None);
    };
    let end = *path.last().expect("nonempty path");
    let interior = tip.row >= 2 && tip.col >= 2 && tip.row + 2 < rows && tip.col + 2 < cols;
    let near_end = (tip.row as f64 - end.0).hypot(tip.col as f64 - end.1)
        <= spec.thickness.1 + 2.0;
    Ok((interior && near_end).then_some((gt, tip)))
}

fn render(spec: &PhantomSpec, gt: &BinaryMask, rng: &mut Rng) -> Result<GrayImage> {
    let (rows, cols) = spec.size;
    let (h, w) = (rows as f64, cols as f64);
    let mut acc = vec![spec.background_level as f64; rows * cols];

    for _ in 0..spec.occluders {
        let (cr, cc) = (uniform(rng, (0.0, h)), uniform(rng, (0.0, w)));
        let radius = uniform(rng, spec.occluder_radius);
        let level = spec.occluder_level as f64;
        for_window(rows, cols, cr, cc, radius, |i, d| {
            // Smooth cosine falloff from the centre to the rim.
            acc[i] += level * 0.5 * (1.0 + (std::f64::consts::PI * d / radius).cos());
        });
    }

    for _ in 0..spec.distractors {
        let (pr, pc) = (uniform(rng, (0.1 * h, 0.9 * h)), uniform(rng, (0.0, w)));
        // Mostly horizontal, gently sloped like ribs.
        let angle = uniform(rng, (-0.5, 0.5));
        let (nr, nc) = (angle.cos(), -angle.sin());
        let half = uniform(rng, spec.distractor_width) / 2.0;
        let level = spec.distractor_level as f64;
        for r in 0..rows {
            for c in 0..cols {
                let d = ((r as f64 - pr) * nr + (c as f64 - pc) * nc).abs();
                if d < half {
                    let s = (std::f64::consts::FRAC_PI_2 * d / half).cos();
                    acc[r * cols + c] += level * s * s;
                }
            }
        }
    }

    // Curve with a one-pixel half-intensity rim.
    let rim = dilate(gt, 1);
    let curve = spec.curve_level as f64;
    for (i, (&g, &d)) in gt.as_slice().iter().zip(rim.as_slice()).enumerate() {
        if g {
            acc[i] += curve;
        } else if d {
            acc[i] += curve * 0.5;
        }
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("finite sigma");
        for v in acc.iter_mut() {
            *v += normal.sample(rng);
        }
    }

    let pixels = acc
        .into_iter()
        .map(|v| v.round().clamp(0.0, u16::MAX as f64) as u16)
        .collect();
    GrayImage::from_vec(rows, cols, pixels)
}

fn for_window(
    rows: usize,
    cols: usize,
    cr: f64,
    cc: f64,
    radius: f64,
    mut f: impl FnMut(usize, f64),
) {
    let r0 = (cr - radius).floor().max(0.0) as usize;
    let r1 = ((cr + radius).ceil() as usize).min(rows - 1);
    let c0 = (cc - radius).floor().max(0.0) as usize;
    let c1 = ((cc + radius).ceil() as usize).min(cols - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let d = (r as f64 - cr).hypot(c as f64 - cc);
            if d < radius {
                f(r * cols + c, d);
            }
        }
    }
}
