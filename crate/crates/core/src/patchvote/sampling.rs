use rand::Rng as _;

use super::{Patch, PatchSize};
use crate::error::{Error, Result};
use crate::imagecore::raster::{BinaryMask, GrayImage, Point};
use crate::seed::{rng_from, Rng};

/// Image/mask pairs cropped at the same windows, each window containing a
/// ground-truth pixel.
pub fn sample_training_patches(
    img: &GrayImage,
    gt: &BinaryMask,
    count: usize,
    patch_size: PatchSize,
    seed: u64,
) -> Result<Vec<(Patch<u16>, Patch<bool>)>> {
    img.same_dims(gt)?;
    check_size(img.dims(), patch_size)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let anchors: Vec<Point> = gt.foreground().collect();
    if anchors.is_empty() {
        return Err(Error::Sampling("ground truth has no foreground".into()));
    }
    let mut rng = rng_from(seed);
    (0..count)
        .map(|_| {
            let origin = draw_window(&mut rng, &anchors, img.dims(), patch_size);
            Ok((
                Patch::new(origin, img.crop(origin, patch_size)?),
                Patch::new(origin, gt.crop(origin, patch_size)?),
            ))
        })
        .collect()
}

/// Image windows anchored on stage-1 positives.
///
/// Anchors are drawn uniformly with replacement. An empty stage-1 mask is
/// reported as a sampling error meaning "no line detected".
pub fn sample_inference_patches(
    img: &GrayImage,
    stage1_mask: &BinaryMask,
    count: usize,
    patch_size: PatchSize,
    seed: u64,
) -> Result<Vec<Patch<u16>>> {
    img.same_dims(stage1_mask)?;
    check_size(img.dims(), patch_size)?;
    let anchors: Vec<Point> = stage1_mask.foreground().collect();
    if anchors.is_empty() {
        return Err(Error::Sampling("no line detected".into()));
    }
    let mut rng = rng_from(seed);
    (0..count)
        .map(|_| {
            let origin = draw_window(&mut rng, &anchors, img.dims(), patch_size);
            Ok(Patch::new(origin, img.crop(origin, patch_size)?))
        })
        .collect()
}

fn check_size(dims: (usize, usize), size: PatchSize) -> Result<()> {
    if size.0 == 0 || size.1 == 0 || size.0 > dims.0 || size.1 > dims.1 {
        return Err(Error::param(format!(
            "patch size {size:?} does not fit image {dims:?}"
        )));
    }
    Ok(())
}

/// Picks an anchor, then a window origin uniformly among all in-bounds
/// windows that contain it.
fn draw_window(rng: &mut Rng, anchors: &[Point], dims: (usize, usize), size: PatchSize) -> Point {
    let a = anchors[rng.random_range(0..anchors.len())];
    let axis = |rng: &mut Rng, at: usize, len: usize, extent: usize| {
        let lo = at.saturating_sub(extent - 1);
        let hi = at.min(len - extent);
        rng.random_range(lo..=hi)
    };
    let row = axis(rng, a.row, dims.0, size.0);
    let col = axis(rng, a.col, dims.1, size.1);
    Point::new(row, col)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> (GrayImage, BinaryMask, Point) {
        let img = GrayImage::from_vec(40, 50, (0..2000).map(|v| v as u16).collect()).unwrap();
        let p = Point::new(3, 47);
        let gt = BinaryMask::from_points(40, 50, &[p]).unwrap();
        (img, gt, p)
    }

    #[test]
    fn zero_count_is_empty() {
        let (img, gt, _) = scene();
        assert!(sample_training_patches(&img, &gt, 0, (8, 8), 1).unwrap().is_empty());
    }

    #[test]
    fn single_positive_is_in_every_patch() {
        let (img, gt, p) = scene();
        let pairs = sample_training_patches(&img, &gt, 100, (16, 12), 3).unwrap();
        assert_eq!(pairs.len(), 100);
        for (ip, mp) in &pairs {
            assert_eq!(ip.offset, mp.offset);
            assert!(mp.covers(p));
            assert_eq!(mp.payload, gt.crop(mp.offset, (16, 12)).unwrap());
            assert_eq!(ip.payload, img.crop(ip.offset, (16, 12)).unwrap());
        }
        let inf = sample_inference_patches(&img, &gt, 50, (16, 12), 3).unwrap();
        assert!(inf.iter().all(|q| q.covers(p)));
    }

    #[test]
    fn windows_vary_around_anchor() {
        let (img, gt, _) = scene();
        let inf = sample_inference_patches(&img, &gt, 200, (16, 12), 8).unwrap();
        let mut origins: Vec<Point> = inf.iter().map(|p| p.offset).collect();
        origins.sort();
        origins.dedup();
        assert!(origins.len() > 10);
    }

    #[test]
    fn deterministic_per_seed() {
        let (img, gt, _) = scene();
        let a = sample_inference_patches(&img, &gt, 1, (8, 8), 42).unwrap();
        let b = sample_inference_patches(&img, &gt, 1, (8, 8), 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn error_paths() {
        let (img, gt, _) = scene();
        let empty = BinaryMask::empty(40, 50).unwrap();
        assert!(matches!(
            sample_training_patches(&img, &empty, 5, (8, 8), 0),
            Err(Error::Sampling(_))
        ));
        assert!(matches!(
            sample_inference_patches(&img, &empty, 5, (8, 8), 0),
            Err(Error::Sampling(_))
        ));
        assert!(matches!(
            sample_training_patches(&img, &gt, 5, (41, 8), 0),
            Err(Error::Param(_))
        ));
    }
}
