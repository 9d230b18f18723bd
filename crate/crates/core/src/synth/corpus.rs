//! On-disk phantom corpora.
//!
//! ```text
//! <out>/manifest.json
//! <out>/<id>/image.png   16-bit image
//! <out>/<id>/gt.png      8-bit mask, {0, 255}
//! <out>/<id>/meta.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::phantom::{generate_phantom, PhantomSpec, Sample};
use crate::error::{Error, Result};
use crate::imagecore::io::{read_gray, read_mask, write_gray, write_mask};
use crate::imagecore::raster::Point;
use crate::seed::derive_seed;

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMeta {
    pub id: String,
    pub seed: u64,
    pub tip: Point,
    pub rows: usize,
    pub cols: usize,
    pub pixel_spacing_mm: f64,
    pub foreground_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    pub tip: Point,
    /// Paths relative to the corpus root.
    pub image: String,
    pub gt: String,
    pub meta: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub base_seed: u64,
    pub pixel_spacing_mm: f64,
    pub spec: PhantomSpec,
    pub entries: Vec<ManifestEntry>,
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:04}")
}

/// Sample `index` of the corpus rooted at `spec.seed`.
pub fn corpus_sample(spec: &PhantomSpec, index: usize) -> Result<Sample> {
    let seed = derive_seed(spec.seed, index as u64);
    let mut sample = generate_phantom(&PhantomSpec { seed, ..spec.clone() })?;
    sample.id = sample_id(index);
    Ok(sample)
}

/// Generates `n` samples in memory, in index order.
pub fn generate_samples(spec: &PhantomSpec, n: usize) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::param("corpus size must be at least 1"));
    }
    spec.validate()?;
    (0..n).into_par_iter().map(|i| corpus_sample(spec, i)).collect()
}

/// Writes `n` samples plus `manifest.json` under `out_dir`.
pub fn generate_corpus(spec: &PhantomSpec, n: usize, out_dir: &Path) -> Result<Manifest> {
    if n == 0 {
        return Err(Error::param("corpus size must be at least 1"));
    }
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let entries = (0..n)
        .into_par_iter()
        .map(|i| {
            let sample = corpus_sample(spec, i)?;
            write_sample(out_dir, &sample, spec.pixel_spacing_mm)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        schema_version: CORPUS_SCHEMA_VERSION,
        base_seed: spec.seed,
        pixel_spacing_mm: spec.pixel_spacing_mm,
        spec: spec.clone(),
        entries,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn write_sample(root: &Path, s: &Sample, spacing: f64) -> Result<ManifestEntry> {
    let dir = root.join(&s.id);
    write_gray(&dir.join("image.png"), &s.image)?;
    write_mask(&dir.join("gt.png"), &s.gt_mask)?;
    let meta = SampleMeta {
        id: s.id.clone(),
        seed: s.seed,
        tip: s.tip,
        rows: s.image.rows(),
        cols: s.image.cols(),
        pixel_spacing_mm: spacing,
        foreground_fraction: s.gt_mask.foreground_count() as f64 / s.gt_mask.len() as f64,
    };
    write_json(&dir.join("meta.json"), &meta)?;
    Ok(ManifestEntry {
        id: s.id.clone(),
        seed: s.seed,
        tip: s.tip,
        image: format!("{}/image.png", s.id),
        gt: format!("{}/gt.png", s.id),
        meta: format!("{}/meta.json", s.id),
    })
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.schema_version != CORPUS_SCHEMA_VERSION {
        return Err(Error::Protocol(format!(
            "corpus schema {} (expected {CORPUS_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    Ok(manifest)
}

pub fn load_sample(root: &Path, entry: &ManifestEntry) -> Result<Sample> {
    Ok(Sample {
        id: entry.id.clone(),
        seed: entry.seed,
        image: read_gray(&root.join(&entry.image))?,
        gt_mask: read_mask(&root.join(&entry.gt))?,
        tip: entry.tip,
    })
}

/// Pretty JSON with a trailing newline.
pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// All regular files under `root`, relative and sorted.
pub fn list_files(root: &Path) -> Result<Vec<PathBuf>> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(&path, root, out)?;
            } else {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> PhantomSpec {
        PhantomSpec {
            size: (256, 256),
            seed: 5,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn single_entry_manifest_matches_sample() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_corpus(&spec(), 1, dir.path()).unwrap();
        assert_eq!(m.entries.len(), 1);
        let back = read_manifest(dir.path()).unwrap();
        assert_eq!(back, m);
        let s = load_sample(dir.path(), &m.entries[0]).unwrap();
        assert_eq!(s.tip, m.entries[0].tip);
        assert_eq!(s, corpus_sample(&spec(), 0).unwrap());
        let meta: SampleMeta = read_json(&dir.path().join(&m.entries[0].meta)).unwrap();
        assert_eq!(meta.tip, s.tip);
    }

    #[test]
    fn zero_samples_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_corpus(&spec(), 0, dir.path()).is_err());
    }

    #[test]
    fn unwritable_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, b"x").unwrap();
        assert!(matches!(
            generate_corpus(&spec(), 1, &file.join("sub")),
            Err(Error::Io { .. })
        ));
    }
}
