use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::imagecore::components::{connected_components, Connectivity};
use crate::imagecore::geodesic::geodesic_farthest;
use crate::imagecore::raster::{BinaryMask, Point};
use crate::imagecore::skeleton::skeletonize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TipEstimate {
    pub point: Point,
    /// Skeleton steps from the entry pixel to the tip.
    pub path_length: usize,
    /// Label of the entry component; components are numbered from the top,
    /// so this is always 1.
    pub component: u32,
}

/// Follows the line from its top to the first break.
///
/// The entry component is the one holding the topmost foreground pixel
/// (leftmost on ties). It is thinned and the tip is the skeleton pixel
/// farthest from the skeleton's own topmost pixel. Other components are
/// never visited.
pub fn locate_tip(mask: &BinaryMask) -> Option<TipEstimate> {
    let top = mask.topmost()?;
    let (pixels, min, max) = flood(mask, top);
    let (h, w) = (max.row - min.row + 3, max.col - min.col + 3);
    // One-pixel margin keeps the border from acting as background-free.
    let mut local = BinaryMask::empty(h, w).expect("nonzero window");
    for p in &pixels {
        local[Point::new(p.row - min.row + 1, p.col - min.col + 1)] = true;
    }
    let skel = skeletonize(&local);
    let start = skel.topmost().expect("thinning keeps every component");
    let (far, steps) = geodesic_farthest(&skel, start).expect("start is foreground");
    Some(TipEstimate {
        point: Point::new(far.row + min.row - 1, far.col + min.col - 1),
        path_length: steps,
        component: 1,
    })
}

/// 8-connected component of `seed` with its bounding box.
fn flood(mask: &BinaryMask, seed: Point) -> (Vec<Point>, Point, Point) {
    let mut seen = mask.map(|_| false);
    seen[seed] = true;
    let mut queue = VecDeque::from([seed]);
    let mut pixels = Vec::new();
    let (mut min, mut max) = (seed, seed);
    while let Some(p) = queue.pop_front() {
        pixels.push(p);
        min = Point::new(min.row.min(p.row), min.col.min(p.col));
        max = Point::new(max.row.max(p.row), max.col.max(p.col));
        for q in mask.neighbors8(p) {
            if mask[q] && !seen[q] {
                seen[q] = true;
                queue.push_back(q);
            }
        }
    }
    (pixels, min, max)
}

/// Component count after dropping components smaller than `min_area`, and
/// whether exactly one survives.
pub fn mfp_stats(mask: &BinaryMask, min_area: usize) -> (usize, bool) {
    let count = connected_components(mask, Connectivity::Eight)
        .components
        .iter()
        .filter(|c| c.area >= min_area)
        .count();
    (count, count == 1)
}
