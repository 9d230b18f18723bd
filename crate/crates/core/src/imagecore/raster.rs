use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pixel coordinate. Row 0 is the top of the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Point {
    pub row: usize,
    pub col: usize,
}

impl Point {
    pub const fn new(row: usize, col: usize) -> Self {
        Point { row, col }
    }

    pub fn distance(self, other: Point) -> f64 {
        let dr = self.row as f64 - other.row as f64;
        let dc = self.col as f64 - other.col as f64;
        (dr * dr + dc * dc).sqrt()
    }
}

/// Dense row-major raster.
///
/// `GrayImage`, `BinaryMask` and `ProbMap` are all instances of this type;
/// their constructors enforce the per-kind value invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// 16-bit grayscale intensities.
pub type GrayImage = Raster<u16>;
/// Segmentation bits; `true` is foreground.
pub type BinaryMask = Raster<bool>;
/// Per-pixel foreground probabilities in `[0, 1]`.
pub type ProbMap<S> = Raster<S>;

impl<T: Clone> Raster<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Raster {
            rows,
            cols,
            data: vec![value; rows * cols],
        })
    }

    /// Copies the window `[origin, origin + size)`. The window must fit.
    pub fn crop(&self, origin: Point, size: (usize, usize)) -> Result<Self> {
        let (h, w) = size;
        if h == 0 || w == 0 || origin.row + h > self.rows || origin.col + w > self.cols {
            return Err(Error::param(format!(
                "crop window {size:?} at {origin:?} exceeds {:?}",
                self.dims()
            )));
        }
        let mut data = Vec::with_capacity(h * w);
        for r in origin.row..origin.row + h {
            let start = r * self.cols + origin.col;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Ok(Raster {
            rows: h,
            cols: w,
            data,
        })
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dims(rows, cols)?;
        if data.len() != rows * cols {
            return Err(Error::param(format!(
                "{} values for a {rows}x{cols} raster",
                data.len()
            )));
        }
        Ok(Raster { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(rows, cols)`.
    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        p.row < self.rows && p.col < self.cols
    }

    #[inline]
    pub fn index_of(&self, p: Point) -> usize {
        debug_assert!(self.contains(p));
        p.row * self.cols + p.col
    }

    #[inline]
    pub fn point_of(&self, index: usize) -> Point {
        Point::new(index / self.cols, index % self.cols)
    }

    #[inline]
    pub fn get(&self, p: Point) -> Option<&T> {
        if self.contains(p) {
            Some(&self.data[p.row * self.cols + p.col])
        } else {
            None
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.cols + col]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.cols + col]
    }

    /// 8-neighbours of `p` inside the raster.
    pub fn neighbors8(&self, p: Point) -> impl Iterator<Item = Point> + '_ {
        neighbors(p, self.rows, self.cols, &NEIGHBORS_8)
    }

    /// 4-neighbours of `p` inside the raster.
    pub fn neighbors4(&self, p: Point) -> impl Iterator<Item = Point> + '_ {
        neighbors(p, self.rows, self.cols, &NEIGHBORS_4)
    }

    pub fn same_dims<U>(&self, other: &Raster<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Dims {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

impl<T> std::ops::Index<Point> for Raster<T> {
    type Output = T;

    #[inline]
    fn index(&self, p: Point) -> &T {
        &self.data[p.row * self.cols + p.col]
    }
}

impl<T> std::ops::IndexMut<Point> for Raster<T> {
    #[inline]
    fn index_mut(&mut self, p: Point) -> &mut T {
        &mut self.data[p.row * self.cols + p.col]
    }
}

impl BinaryMask {
    pub fn empty(rows: usize, cols: usize) -> Result<Self> {
        Raster::filled(rows, cols, false)
    }

    pub fn from_bits(rows: usize, cols: usize, bits: &[u8]) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::param(format!("mask bit {b} is not 0 or 1")));
        }
        Raster::from_vec(rows, cols, bits.iter().map(|&b| b == 1).collect())
    }

    pub fn from_points(rows: usize, cols: usize, points: &[Point]) -> Result<Self> {
        let mut m = Self::empty(rows, cols)?;
        for &p in points {
            if !m.contains(p) {
                return Err(Error::param(format!("{p:?} outside {rows}x{cols}")));
            }
            m[p] = true;
        }
        Ok(m)
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn foreground(&self) -> impl Iterator<Item = Point> + '_ {
        let cols = self.cols;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Point::new(i / cols, i % cols))
    }

    /// Topmost foreground pixel; ties go to the leftmost.
    pub fn topmost(&self) -> Option<Point> {
        self.data.iter().position(|&b| b).map(|i| self.point_of(i))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn union_with(&mut self, other: &BinaryMask) -> Result<()> {
        self.same_dims(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
        Ok(())
    }

    /// Bits as `0`/`1` bytes.
    pub fn to_bits(&self) -> Vec<u8> {
        self.data.iter().map(|&b| b as u8).collect()
    }
}

impl<S: Scalar> Raster<S> {
    /// Builds a probability map, rejecting values outside `[0, 1]` or NaN.
    pub fn from_probabilities(rows: usize, cols: usize, values: Vec<S>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= S::zero() && **v <= S::one())) {
            return Err(Error::param(format!("probability {v} outside [0, 1]")));
        }
        Raster::from_vec(rows, cols, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Raster::filled(rows, cols, S::zero())
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::param(format!("raster dimensions {rows}x{cols} must be positive")));
    }
    Ok(())
}

const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

const NEIGHBORS_4: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];

fn neighbors(
    p: Point,
    rows: usize,
    cols: usize,
    offsets: &'static [(isize, isize)],
) -> impl Iterator<Item = Point> {
    offsets.iter().filter_map(move |&(dr, dc)| {
        let r = p.row as isize + dr;
        let c = p.col as isize + dc;
        (r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols)
            .then(|| Point::new(r as usize, c as usize))
    })
}
