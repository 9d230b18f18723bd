//! Stage-2 machinery: patch sampling and pixel-wise majority voting.

pub mod io;
pub mod sampling;
pub mod vote;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::raster::{Point, Raster};

pub use io::{read_patch_set, write_patch_set, write_training_pairs, PatchPayload};
pub use sampling::{sample_inference_patches, sample_training_patches};
pub use vote::{majority_vote, soft_vote, vote_average, VoteMode};

/// `(rows, cols)` of a patch window.
pub type PatchSize = (usize, usize);

/// A sub-raster and the position of its top-left pixel in the parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch<T> {
    pub offset: Point,
    pub payload: Raster<T>,
}

impl<T> Patch<T> {
    pub fn new(offset: Point, payload: Raster<T>) -> Self {
        Patch { offset, payload }
    }

    pub fn size(&self) -> PatchSize {
        self.payload.dims()
    }

    /// Whether parent pixel `p` falls inside this window.
    pub fn covers(&self, p: Point) -> bool {
        let (h, w) = self.size();
        p.row >= self.offset.row
            && p.col >= self.offset.col
            && p.row < self.offset.row + h
            && p.col < self.offset.col + w
    }

    pub fn fits(&self, parent: (usize, usize)) -> bool {
        let (h, w) = self.size();
        self.offset.row + h <= parent.0 && self.offset.col + w <= parent.1
    }

    /// Same window, new payload. The payload must keep the window size.
    pub fn with_payload<U>(&self, payload: Raster<U>) -> Result<Patch<U>> {
        if payload.dims() != self.size() {
            return Err(Error::Dims {
                expected: self.size(),
                actual: payload.dims(),
            });
        }
        Ok(Patch::new(self.offset, payload))
    }
}

/// Patches that all belong to one parent raster.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet<T> {
    parent: (usize, usize),
    patches: Vec<Patch<T>>,
}

impl<T> PatchSet<T> {
    pub fn new(parent: (usize, usize), patches: Vec<Patch<T>>) -> Result<Self> {
        if parent.0 == 0 || parent.1 == 0 {
            return Err(Error::param("parent dimensions must be positive"));
        }
        if let Some((i, p)) = patches.iter().enumerate().find(|(_, p)| !p.fits(parent)) {
            return Err(Error::param(format!(
                "patch {i} at {:?} of size {:?} leaves parent {parent:?}",
                p.offset,
                p.size()
            )));
        }
        Ok(PatchSet { parent, patches })
    }

    pub fn parent(&self) -> (usize, usize) {
        self.parent
    }

    pub fn patches(&self) -> &[Patch<T>] {
        &self.patches
    }

    pub fn into_patches(self) -> Vec<Patch<T>> {
        self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

/// Serialized window of one patch, as stored in `offsets.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub offset: Point,
    pub size: PatchSize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::raster::BinaryMask;

    #[test]
    fn set_rejects_out_of_bounds_patch() {
        let p = Patch::new(Point::new(10, 0), BinaryMask::empty(8, 8).unwrap());
        assert!(PatchSet::new((16, 16), vec![p.clone()]).is_err());
        assert!(PatchSet::new((18, 16), vec![p]).is_ok());
    }

    #[test]
    fn covers_is_half_open() {
        let p = Patch::new(Point::new(2, 3), BinaryMask::empty(4, 5).unwrap());
        assert!(p.covers(Point::new(2, 3)));
        assert!(p.covers(Point::new(5, 7)));
        assert!(!p.covers(Point::new(6, 7)));
        assert!(!p.covers(Point::new(5, 8)));
        assert!(!p.covers(Point::new(1, 3)));
    }
}
