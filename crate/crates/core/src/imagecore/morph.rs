//! Thresholding, dilation and raster drawing primitives.

use super::raster::{BinaryMask, Point, ProbMap, Raster};
use crate::scalar::Scalar;

/// Foreground iff `value >= threshold`.
pub fn binarize<S: Scalar>(p: &ProbMap<S>, threshold: S) -> BinaryMask {
    p.map(|&v| v >= threshold)
}

/// Dilation by a disk of the given radius (Euclidean, inclusive).
pub fn dilate(m: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return m.clone();
    }
    let offsets = disk_offsets(radius as f64);
    let mut out = m.map(|_| false);
    for p in m.foreground() {
        stamp(&mut out, p.row as isize, p.col as isize, &offsets);
    }
    out
}

/// Offsets `(dr, dc)` with `dr² + dc² <= radius²`.
pub fn disk_offsets(radius: f64) -> Vec<(isize, isize)> {
    let reach = radius.floor() as isize;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            if (dr * dr + dc * dc) as f64 <= r2 {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Sets every in-bounds pixel `center + offset` to foreground.
pub fn stamp(m: &mut BinaryMask, row: isize, col: isize, offsets: &[(isize, isize)]) {
    stamp_value(m, row, col, offsets, true);
}

pub fn stamp_value<T: Copy>(
    m: &mut Raster<T>,
    row: isize,
    col: isize,
    offsets: &[(isize, isize)],
    value: T,
) {
    let (rows, cols) = (m.rows() as isize, m.cols() as isize);
    for &(dr, dc) in offsets {
        let r = row + dr;
        let c = col + dc;
        if r >= 0 && c >= 0 && r < rows && c < cols {
            *m.at_mut(r as usize, c as usize) = value;
        }
    }
}

/// Pixels on the 8-connected Bresenham segment from `a` to `b`, inclusive.
pub fn line_points(a: (isize, isize), b: (isize, isize)) -> Vec<(isize, isize)> {
    let (mut r, mut c) = a;
    let dr = (b.0 - a.0).abs();
    let dc = (b.1 - a.1).abs();
    let sr = if b.0 >= a.0 { 1 } else { -1 };
    let sc = if b.1 >= a.1 { 1 } else { -1 };
    let mut err = dc - dr;
    let mut out = Vec::with_capacity((dr.max(dc) + 1) as usize);
    loop {
        out.push((r, c));
        if (r, c) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 > -dr {
            err -= dr;
            c += sc;
        }
        if e2 < dc {
            err += dc;
            r += sr;
        }
    }
    out
}

/// Draws a straight stroke of the given thickness between two points.
pub fn draw_segment(m: &mut BinaryMask, a: Point, b: Point, thickness: usize) {
    let offsets = disk_offsets(thickness.max(1) as f64 / 2.0);
    for (r, c) in line_points(
        (a.row as isize, a.col as isize),
        (b.row as isize, b.col as isize),
    ) {
        stamp(m, r, c, &offsets);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_is_inclusive() {
        let p = ProbMap::<f64>::from_probabilities(1, 3, vec![0.009, 0.5, 0.0]).unwrap();
        assert_eq!(binarize(&p, 0.01).to_bits(), vec![0, 1, 0]);
        let at = ProbMap::<f32>::from_probabilities(1, 1, vec![0.01]).unwrap();
        assert_eq!(binarize(&at, 0.01f32).to_bits(), vec![1]);
    }

    #[test]
    fn all_zero_map_stays_empty() {
        let p = ProbMap::<f64>::zeros(8, 8).unwrap();
        assert!(binarize(&p, 1e-9).is_blank());
    }

    #[test]
    fn bresenham_endpoints_and_connectivity() {
        let pts = line_points((0, 0), (3, 7));
        assert_eq!(pts.first(), Some(&(0, 0)));
        assert_eq!(pts.last(), Some(&(3, 7)));
        for w in pts.windows(2) {
            assert!((w[0].0 - w[1].0).abs() <= 1 && (w[0].1 - w[1].1).abs() <= 1);
        }
    }

    #[test]
    fn dilation_grows_single_pixel_to_disk() {
        let m = BinaryMask::from_points(7, 7, &[Point::new(3, 3)]).unwrap();
        let d = dilate(&m, 1);
        assert_eq!(d.foreground_count(), 5);
        assert_eq!(dilate(&m, 2).foreground_count(), 13);
    }
}
