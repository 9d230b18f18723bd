//! Patch sets on disk: one PNG per patch plus `offsets.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Patch, PatchSet, PatchSize};
use crate::error::{Error, Result};
use crate::imagecore::io::{read_gray, read_mask, read_prob, write_gray, write_mask, write_prob};
use crate::imagecore::raster::{Point, Raster};
use crate::synth::corpus::{read_json, write_json};

pub const PATCH_SET_VERSION: u32 = 1;

/// Pixel types that can be stored as patch PNGs.
pub trait PatchPayload: Sized {
    /// Stored in `offsets.json` so a reader can refuse the wrong kind.
    const KIND: &'static str;
    fn write(path: &Path, raster: &Raster<Self>) -> Result<()>;
    fn read(path: &Path) -> Result<Raster<Self>>;
}

impl PatchPayload for u16 {
    const KIND: &'static str = "image";
    fn write(path: &Path, raster: &Raster<Self>) -> Result<()> {
        write_gray(path, raster)
    }
    fn read(path: &Path) -> Result<Raster<Self>> {
        read_gray(path)
    }
}

impl PatchPayload for bool {
    const KIND: &'static str = "mask";
    fn write(path: &Path, raster: &Raster<Self>) -> Result<()> {
        write_mask(path, raster)
    }
    fn read(path: &Path) -> Result<Raster<Self>> {
        read_mask(path)
    }
}

macro_rules! prob_payload {
    ($t:ty) => {
        impl PatchPayload for $t {
            const KIND: &'static str = "prob";
            fn write(path: &Path, raster: &Raster<Self>) -> Result<()> {
                write_prob(path, raster)
            }
            fn read(path: &Path) -> Result<Raster<Self>> {
                read_prob(path)
            }
        }
    };
}
prob_payload!(f32);
prob_payload!(f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetsFile {
    pub version: u32,
    pub kind: String,
    pub parent: (usize, usize),
    pub patches: Vec<OffsetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetEntry {
    pub index: usize,
    pub offset: Point,
    pub size: PatchSize,
    pub file: String,
}

pub fn patch_file_name(index: usize) -> String {
    format!("patch_{index:04}.png")
}

pub fn write_patch_set<T: PatchPayload>(dir: &Path, set: &PatchSet<T>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(set.len());
    for (index, p) in set.patches().iter().enumerate() {
        let file = patch_file_name(index);
        T::write(&dir.join(&file), &p.payload)?;
        entries.push(OffsetEntry {
            index,
            offset: p.offset,
            size: p.size(),
            file,
        });
    }
    write_json(
        &dir.join("offsets.json"),
        &OffsetsFile {
            version: PATCH_SET_VERSION,
            kind: T::KIND.into(),
            parent: set.parent(),
            patches: entries,
        },
    )
}

pub fn read_patch_set<T: PatchPayload>(dir: &Path) -> Result<PatchSet<T>> {
    let meta: OffsetsFile = read_json(&dir.join("offsets.json"))?;
    if meta.version != PATCH_SET_VERSION {
        return Err(Error::Protocol(format!(
            "patch set version {} (expected {PATCH_SET_VERSION})",
            meta.version
        )));
    }
    if meta.kind != T::KIND {
        return Err(Error::Protocol(format!(
            "patch set holds {} patches, expected {}",
            meta.kind,
            T::KIND
        )));
    }
    let patches = meta
        .patches
        .iter()
        .map(|e| {
            let payload = T::read(&dir.join(&e.file))?;
            if payload.dims() != e.size {
                return Err(Error::Dims {
                    expected: e.size,
                    actual: payload.dims(),
                });
            }
            Ok(Patch::new(e.offset, payload))
        })
        .collect::<Result<Vec<_>>>()?;
    PatchSet::new(meta.parent, patches)
}

/// Training pairs as two sibling sets, `images/` and `masks/`, with
/// matching indices.
pub fn write_training_pairs(
    dir: &Path,
    parent: (usize, usize),
    pairs: Vec<(Patch<u16>, Patch<bool>)>,
) -> Result<()> {
    let (images, masks): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    write_patch_set(&dir.join("images"), &PatchSet::new(parent, images)?)?;
    write_patch_set(&dir.join("masks"), &PatchSet::new(parent, masks)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::raster::{BinaryMask, GrayImage, ProbMap};

    #[test]
    fn round_trips_each_kind() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_vec(2, 3, vec![0, 1, 2, 300, 65535, 7]).unwrap();
        let set = PatchSet::new((10, 10), vec![Patch::new(Point::new(4, 5), img)]).unwrap();
        write_patch_set(&dir.path().join("g"), &set).unwrap();
        assert_eq!(read_patch_set::<u16>(&dir.path().join("g")).unwrap(), set);

        let m = BinaryMask::from_bits(2, 2, &[1, 0, 0, 1]).unwrap();
        let set = PatchSet::new((3, 3), vec![Patch::new(Point::new(1, 1), m.clone()), Patch::new(Point::new(0, 0), m)]).unwrap();
        write_patch_set(&dir.path().join("m"), &set).unwrap();
        assert_eq!(read_patch_set::<bool>(&dir.path().join("m")).unwrap(), set);

        let p = ProbMap::from_probabilities(1, 2, vec![0.0f64, 1.0]).unwrap();
        let set = PatchSet::new((1, 2), vec![Patch::new(Point::new(0, 0), p)]).unwrap();
        write_patch_set(&dir.path().join("p"), &set).unwrap();
        assert_eq!(read_patch_set::<f64>(&dir.path().join("p")).unwrap(), set);
    }

    #[test]
    fn kind_mismatch_is_protocol_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::empty(2, 2).unwrap();
        let set = PatchSet::new((2, 2), vec![Patch::new(Point::new(0, 0), m)]).unwrap();
        write_patch_set(dir.path(), &set).unwrap();
        assert!(matches!(read_patch_set::<u16>(dir.path()), Err(Error::Protocol(_))));
    }
}
