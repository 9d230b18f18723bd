//! Raster files: grayscale PNG (8/16-bit) and binary PGM.
//!
//! Masks are 8-bit with `{0, 255}`; probability maps are 16-bit with
//! value `v` meaning `v / 65535`. The format follows the file extension.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use super::raster::{BinaryMask, GrayImage, ProbMap};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    Ok(reader.decode()?)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

/// Reads an 8- or 16-bit grayscale image; 8-bit values are widened by 257.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    match open(path)? {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            GrayImage::from_vec(h as usize, w as usize, buf.into_raw())
        }
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.into_raw().into_iter().map(|v| v as u16 * 257).collect();
            GrayImage::from_vec(h as usize, w as usize, data)
        }
        other => Err(Error::param(format!(
            "{}: expected grayscale, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn write_gray(path: &Path, img: &GrayImage) -> Result<()> {
    ensure_parent(path)?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.cols() as u32, img.rows() as u32, img.as_slice().to_vec())
            .expect("buffer length matches dimensions");
    buf.save(path)?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let buf = match open(path)? {
        DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(Error::param(format!(
                "{}: masks are 8-bit grayscale, found {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = buf.dimensions();
    let mut bits = Vec::with_capacity((w * h) as usize);
    for v in buf.into_raw() {
        match v {
            0 => bits.push(false),
            255 => bits.push(true),
            v => {
                return Err(Error::param(format!(
                    "{}: mask value {v} is not 0 or 255",
                    path.display()
                )))
            }
        }
    }
    BinaryMask::from_vec(h as usize, w as usize, bits)
}

pub fn write_mask(path: &Path, m: &BinaryMask) -> Result<()> {
    ensure_parent(path)?;
    let data = m.as_slice().iter().map(|&b| if b { 255u8 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(m.cols() as u32, m.rows() as u32, data)
            .expect("buffer length matches dimensions");
    buf.save(path)?;
    Ok(())
}

/// Reads a probability map; 16-bit files map `v -> v / 65535`, 8-bit `v -> v / 255`.
pub fn read_prob<S: Scalar>(path: &Path) -> Result<ProbMap<S>> {
    match open(path)? {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let values = buf.into_raw().into_iter().map(decode_prob).collect();
            ProbMap::from_probabilities(h as usize, w as usize, values)
        }
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let values = buf
                .into_raw()
                .into_iter()
                .map(|v| S::of(v as f64 / 255.0))
                .collect();
            ProbMap::from_probabilities(h as usize, w as usize, values)
        }
        other => Err(Error::param(format!(
            "{}: expected grayscale probabilities, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn write_prob<S: Scalar>(path: &Path, p: &ProbMap<S>) -> Result<()> {
    ensure_parent(path)?;
    let data = p.as_slice().iter().map(|&v| encode_prob(v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(p.cols() as u32, p.rows() as u32, data)
            .expect("buffer length matches dimensions");
    buf.save(path)?;
    Ok(())
}

#[inline]
pub fn decode_prob<S: Scalar>(v: u16) -> S {
    S::of(v as f64 / u16::MAX as f64)
}

#[inline]
pub fn encode_prob<S: Scalar>(v: S) -> u16 {
    (v.as_f64().clamp(0.0, 1.0) * u16::MAX as f64).round() as u16
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::raster::Point;

    #[test]
    fn gray_png_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_vec(3, 4, (0..12).map(|v| v * 5000).collect()).unwrap();
        for name in ["a.png", "a.pgm"] {
            let path = dir.path().join(name);
            write_gray(&path, &img).unwrap();
            assert_eq!(read_gray(&path).unwrap(), img, "{name}");
        }
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::from_points(5, 6, &[Point::new(0, 0), Point::new(4, 5)]).unwrap();
        let path = dir.path().join("m.png");
        write_mask(&path, &m).unwrap();
        assert_eq!(read_mask(&path).unwrap(), m);
    }

    #[test]
    fn half_probability_decodes_within_one_level() {
        let p: f64 = decode_prob(32768);
        assert!((p - 0.5).abs() <= 1.0 / 65535.0);
    }

    #[test]
    fn prob_file_values_reproduce_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let raw: Vec<u16> = vec![0, 1, 32768, 65534, 65535, 12345];
        let p = ProbMap::<f64>::from_probabilities(2, 3, raw.iter().map(|&v| decode_prob(v)).collect())
            .unwrap();
        let path = dir.path().join("p.png");
        write_prob(&path, &p).unwrap();
        let back: ProbMap<f64> = read_prob(&path).unwrap();
        for (got, &v) in back.as_slice().iter().zip(&raw) {
            assert_eq!(*got, v as f64 / 65535.0);
        }
    }
}
