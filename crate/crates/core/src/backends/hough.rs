//! Probabilistic Hough transform post-processing.
//!
//! Follows the common progressive scheme: foreground points are visited in
//! a seeded random order, each votes into a (rho, theta) accumulator, and a
//! point whose best bin reaches `mip` votes starts a walk along that line.
//! The walk tolerates gaps of up to `mlg` pixels; runs of at least `mll`
//! pixels become segments. Visited points leave the pool either way, and
//! the points of accepted segments take their votes back.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Reconnector;
use crate::error::{Error, Result};
use crate::imagecore::morph::draw_segment;
use crate::imagecore::raster::{BinaryMask, Point};
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoughParams {
    /// Minimum intersecting points (accumulator votes) to detect a line.
    pub mip: u32,
    /// Minimum line length in pixels.
    pub mll: u32,
    /// Maximum gap in pixels between points on one segment.
    pub mlg: u32,
    /// Accumulator resolution.
    pub rho: f64,
    pub theta_deg: f64,
    /// Stroke width used to draw detected segments.
    pub thickness: usize,
    pub seed: u64,
}

impl Default for HoughParams {
    fn default() -> Self {
        HoughParams {
            mip: 50,
            mll: 30,
            mlg: 50,
            rho: 1.0,
            theta_deg: 1.0,
            thickness: 3,
            seed: 0,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<()> {
        if self.mip == 0 || self.mll == 0 || self.mlg == 0 {
            return Err(Error::param("MIP, MLL and MLG must be positive"));
        }
        if !(self.rho > 0.0) || !(self.theta_deg > 0.0 && self.theta_deg <= 180.0) {
            return Err(Error::param("accumulator resolution must be positive"));
        }
        if self.thickness == 0 {
            return Err(Error::param("segment thickness must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HoughReconnector {
    params: HoughParams,
}

impl HoughReconnector {
    pub fn new(params: HoughParams) -> Result<Self> {
        params.validate()?;
        Ok(HoughReconnector { params })
    }
}

impl Reconnector for HoughReconnector {
    fn reconnect(&self, mask: &BinaryMask) -> Result<BinaryMask> {
        hough_postprocess(mask, &self.params)
    }
}

/// Input OR the detected segments drawn at `thickness`.
pub fn hough_postprocess(mask: &BinaryMask, params: &HoughParams) -> Result<BinaryMask> {
    params.validate()?;
    let mut out = mask.clone();
    for (a, b) in hough_segments(mask, params) {
        draw_segment(&mut out, a, b, params.thickness);
    }
    Ok(out)
}

/// Detected segments as end-point pairs.
pub fn hough_segments(mask: &BinaryMask, params: &HoughParams) -> Vec<(Point, Point)> {
    let (rows, cols) = mask.dims();
    let n_theta = (180.0 / params.theta_deg).round().max(1.0) as usize;
    let thetas: Vec<(f64, f64)> = (0..n_theta)
        .map(|k| {
            let t = (k as f64 * params.theta_deg).to_radians();
            (t.cos() / params.rho, t.sin() / params.rho)
        })
        .collect();
    let n_rho = (((rows + cols) * 2) as f64 / params.rho).ceil() as usize + 1;
    let rho_offset = (n_rho - 1) / 2;
    let bin = |p: Point, (c, s): (f64, f64)| -> usize {
        // x is the column, y the row, as in the usual image convention.
        let r = (p.col as f64 * c + p.row as f64 * s).round() as isize;
        (r + rho_offset as isize) as usize
    };

    let mut pool = mask.clone();
    let mut points: Vec<Point> = mask.foreground().collect();
    points.shuffle(&mut rng_from(params.seed));
    let mut acc = vec![0u32; n_theta * n_rho];
    let mut segments = Vec::new();

    for p in points {
        if !pool[p] {
            continue;
        }
        let (mut best, mut best_t) = (0u32, 0usize);
        for (t, &cs) in thetas.iter().enumerate() {
            let slot = &mut acc[t * n_rho + bin(p, cs)];
            *slot += 1;
            if *slot > best {
                best = *slot;
                best_t = t;
            }
        }
        if best < params.mip {
            continue;
        }

        // Walk direction is perpendicular to the normal (cos t, sin t).
        let t = (best_t as f64 * params.theta_deg).to_radians();
        let (dx, dy) = (-t.sin(), t.cos());
        let ends = [walk(&pool, p, (dx, dy), params.mlg), walk(&pool, p, (-dx, -dy), params.mlg)];
        let good = ends[0].row.abs_diff(ends[1].row).max(ends[0].col.abs_diff(ends[1].col))
            >= params.mll as usize;

        for &end in &ends {
            for q in trace(p, end, (dx, dy)) {
                if pool[q] {
                    if good {
                        for (t, &cs) in thetas.iter().enumerate() {
                            let slot = &mut acc[t * n_rho + bin(q, cs)];
                            *slot = slot.saturating_sub(1);
                        }
                    }
                    pool[q] = false;
                }
            }
        }
        if good {
            segments.push((ends[1], ends[0]));
        }
    }
    segments
}

/// Last pool pixel reached from `start` along `dir` before a gap longer
/// than `max_gap` or the border.
fn walk(pool: &BinaryMask, start: Point, dir: (f64, f64), max_gap: u32) -> Point {
    let mut last = start;
    let mut gap = 0;
    for q in ray(pool.dims(), start, dir) {
        if pool[q] {
            last = q;
            gap = 0;
        } else {
            gap += 1;
            if gap > max_gap {
                break;
            }
        }
    }
    last
}

/// Pixels from `start` to `end` along the walk direction, inclusive.
fn trace(start: Point, end: Point, dir: (f64, f64)) -> Vec<Point> {
    let steps = start.row.abs_diff(end.row).max(start.col.abs_diff(end.col));
    let sign = if (end.col as f64 - start.col as f64) * dir.0 + (end.row as f64 - start.row as f64) * dir.1 >= 0.0 {
        1.0
    } else {
        -1.0
    };
    let dims = (usize::MAX, usize::MAX);
    std::iter::once(start)
        .chain(ray(dims, start, (dir.0 * sign, dir.1 * sign)).take(steps))
        .collect()
}

/// Unit steps along the dominant axis with fixed-point rounding on the
/// other one, stopping at the raster border.
fn ray(dims: (usize, usize), start: Point, (dx, dy): (f64, f64)) -> impl Iterator<Item = Point> {
    let (sx, sy) = if dx.abs() >= dy.abs() {
        (dx.signum(), dy / dx.abs())
    } else {
        (dx / dy.abs(), dy.signum())
    };
    let (x0, y0) = (start.col as f64, start.row as f64);
    (1..).map_while(move |k| {
        let x = (x0 + sx * k as f64).round();
        let y = (y0 + sy * k as f64).round();
        (x >= 0.0 && y >= 0.0 && (y as usize) < dims.0 && (x as usize) < dims.1)
            .then(|| Point::new(y as usize, x as usize))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_stays_empty() {
        let m = BinaryMask::empty(50, 50).unwrap();
        assert_eq!(hough_postprocess(&m, &HoughParams::default()).unwrap(), m);
    }

    #[test]
    fn straight_segment_is_detected() {
        let pts: Vec<Point> = (20..140).map(|c| Point::new(60, c)).collect();
        let m = BinaryMask::from_points(120, 160, &pts).unwrap();
        let segs = hough_segments(&m, &HoughParams::default());
        assert!(!segs.is_empty());
        let (a, b) = segs[0];
        let covered = pts
            .iter()
            .filter(|p| p.col >= a.col.min(b.col) && p.col <= a.col.max(b.col))
            .count();
        assert!(covered as f64 >= 0.9 * pts.len() as f64, "{segs:?}");
    }

    #[test]
    fn output_contains_input_and_bridges_a_gap() {
        let mut pts: Vec<Point> = (10..60).map(|r| Point::new(r, 40)).collect();
        pts.extend((80..130).map(|r| Point::new(r, 40)));
        let m = BinaryMask::from_points(150, 80, &pts).unwrap();
        let out = hough_postprocess(&m, &HoughParams::default()).unwrap();
        assert!(m.is_subset_of(&out));
        assert!(*out.at(70, 40));
    }

    #[test]
    fn short_segment_below_vote_threshold_is_ignored() {
        let pts: Vec<Point> = (10..30).map(|r| Point::new(r, 5)).collect();
        let m = BinaryMask::from_points(40, 20, &pts).unwrap();
        assert!(hough_segments(&m, &HoughParams::default()).is_empty());
    }

    #[test]
    fn seeded_and_reproducible() {
        let pts: Vec<Point> = (0..100).map(|i| Point::new(i, (i * 7) / 10)).collect();
        let m = BinaryMask::from_points(100, 100, &pts).unwrap();
        let p = HoughParams { mip: 20, ..HoughParams::default() };
        assert_eq!(hough_segments(&m, &p), hough_segments(&m, &p));
    }

    #[test]
    fn zero_parameters_rejected() {
        assert!(HoughParams { mip: 0, ..HoughParams::default() }.validate().is_err());
    }
}
