use std::collections::VecDeque;

use super::raster::{BinaryMask, Point};
use crate::error::{Error, Result};

/// Foreground pixel farthest from `start` along 8-connected unit steps.
///
/// Returns the pixel and its step count. Equal distances prefer the larger
/// row, then the larger column.
pub fn geodesic_farthest(skel: &BinaryMask, start: Point) -> Result<(Point, usize)> {
    if !skel.get(start).copied().unwrap_or(false) {
        return Err(Error::param(format!("start {start:?} is not on the foreground")));
    }
    let mut dist = skel.map(|_| usize::MAX);
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut best = (start, 0);
    while let Some(p) = queue.pop_front() {
        let d = dist[p];
        if (d, p.row, p.col) > (best.1, best.0.row, best.0.col) {
            best = (p, d);
        }
        for q in skel.neighbors8(p) {
            if skel[q] && dist[q] == usize::MAX {
                dist[q] = d + 1;
                queue.push_back(q);
            }
        }
    }
    Ok(best)
}
