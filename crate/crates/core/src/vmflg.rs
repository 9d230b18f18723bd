//! Virtual multi-fragment line generation.
//!
//! Each variant is the ground-truth line with a few disks cut out of it.
//! Disk centres are drawn on the line itself and kept away from the tip, so
//! every removal does damage but the tip always survives.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::morph::{disk_offsets, stamp_value};
use crate::imagecore::raster::{BinaryMask, Point};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FragmentSpec {
    /// Disk radius range in pixels.
    pub radius: (f64, f64),
    /// Disks removed per variant, inclusive. `(0, 0)` yields unbroken copies.
    pub removals: (usize, usize),
    pub variants: usize,
    /// No disk centre lands within this distance of the tip.
    pub tip_guard: f64,
    pub seed: u64,
}

impl Default for FragmentSpec {
    fn default() -> Self {
        FragmentSpec {
            radius: (10.0, 50.0),
            removals: (1, 5),
            variants: 10,
            tip_guard: 10.0,
            seed: 0,
        }
    }
}

impl FragmentSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.radius;
        if !(lo >= 1.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::param(format!("radius range ({lo}, {hi}) must satisfy 1 <= lo <= hi")));
        }
        if self.removals.0 > self.removals.1 {
            return Err(Error::param("removal range must satisfy lo <= hi"));
        }
        if self.variants == 0 {
            return Err(Error::param("at least one variant is required"));
        }
        if !(self.tip_guard >= 0.0) {
            return Err(Error::param("tip guard must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

/// Audit record of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentLog {
    pub variant: usize,
    pub seed: u64,
    pub disks: Vec<Disk>,
}

pub fn generate_fragments(gt: &BinaryMask, tip: Point, spec: &FragmentSpec) -> Result<Vec<BinaryMask>> {
    Ok(generate_fragments_logged(gt, tip, spec)?
        .into_iter()
        .map(|(m, _)| m)
        .collect())
}

pub fn generate_fragments_logged(
    gt: &BinaryMask,
    tip: Point,
    spec: &FragmentSpec,
) -> Result<Vec<(BinaryMask, FragmentLog)>> {
    spec.validate()?;
    if !gt.get(tip).copied().unwrap_or(false) {
        return Err(Error::param(format!("tip {tip:?} is not on the line")));
    }
    // A disk (c, r) is admissible when c lies outside the guard and r stays
    // short of the tip. Drawing c with weight equal to its admissible radius
    // span, then r uniformly inside it, samples uniform (centre, radius)
    // pairs conditioned on admissibility without rejection loops.
    let (lo, hi) = spec.radius;
    let (centers, spans): (Vec<Point>, Vec<f64>) = gt
        .foreground()
        .filter_map(|c| {
            let d = c.distance(tip);
            if d <= spec.tip_guard || d <= lo {
                return None;
            }
            let span = if hi > lo { hi.min(d) - lo } else { 1.0 };
            Some((c, span))
        })
        .unzip();
    if spec.removals.1 > 0 && centers.is_empty() {
        let reach = spec.tip_guard.max(lo);
        return Err(Error::Generation(format!(
            "line lies within {reach:.1} px of the tip; no disk can be placed"
        )));
    }
    let pick = (!centers.is_empty())
        .then(|| WeightedIndex::new(&spans))
        .transpose()
        .map_err(|e| Error::Generation(format!("disk weights: {e}")))?;
    (0..spec.variants)
        .into_par_iter()
        .map(|variant| {
            let seed = derive_seed(spec.seed, variant as u64);
            let mut rng = rng_from(seed);
            let mut out = gt.clone();
            let k = rng.random_range(spec.removals.0..=spec.removals.1);
            let mut disks = Vec::with_capacity(k);
            for _ in 0..k {
                let i = pick.as_ref().expect("checked nonempty").sample(&mut rng);
                let center = centers[i];
                let radius = if hi > lo { rng.random_range(lo..lo + spans[i]) } else { lo };
                let offsets = disk_offsets(radius);
                stamp_value(&mut out, center.row as isize, center.col as isize, &offsets, false);
                disks.push(Disk { center, radius });
            }
            Ok((out, FragmentLog { variant, seed, disks }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::components::{count_components, Connectivity};

    fn line() -> (BinaryMask, Point) {
        let mut m = BinaryMask::empty(400, 100).unwrap();
        for r in 0..=350 {
            for c in 48..52 {
                *m.at_mut(r, c) = true;
            }
        }
        (m, Point::new(350, 50))
    }

    #[test]
    fn zero_removals_is_identity() {
        let (gt, tip) = line();
        let spec = FragmentSpec {
            removals: (0, 0),
            variants: 3,
            ..FragmentSpec::default()
        };
        for v in generate_fragments(&gt, tip, &spec).unwrap() {
            assert_eq!(v, gt);
        }
    }

    #[test]
    fn mid_line_disk_splits_in_two() {
        let (mut gt, _) = line();
        stamp_value(&mut gt, 175, 50, &disk_offsets(20.0), false);
        assert_eq!(count_components(&gt, Connectivity::Eight), 2);
    }

    #[test]
    fn defaults_give_ten_variants_in_radius_range() {
        let (gt, tip) = line();
        let out = generate_fragments_logged(&gt, tip, &FragmentSpec::default()).unwrap();
        assert_eq!(out.len(), 10);
        for (v, log) in &out {
            assert!(v.is_subset_of(&gt));
            assert!(v[tip]);
            assert!((1..=5).contains(&log.disks.len()));
            for d in &log.disks {
                assert!((10.0..=50.0).contains(&d.radius));
                assert!(d.center.distance(tip) > 10.0);
            }
        }
    }

    #[test]
    fn tip_off_line_rejected() {
        let (gt, _) = line();
        assert!(generate_fragments(&gt, Point::new(390, 5), &FragmentSpec::default()).is_err());
    }

    #[test]
    fn deterministic() {
        let (gt, tip) = line();
        let spec = FragmentSpec { seed: 9, ..FragmentSpec::default() };
        assert_eq!(
            generate_fragments(&gt, tip, &spec).unwrap(),
            generate_fragments(&gt, tip, &spec).unwrap()
        );
    }
}
