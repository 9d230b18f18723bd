//! Rule-based gap bridging for fragmented line masks.

use serde::{Deserialize, Serialize};

use super::Reconnector;
use crate::error::{Error, Result};
use crate::imagecore::components::{connected_components, Connectivity, Labeling};
use crate::imagecore::morph::{disk_offsets, line_points};
use crate::imagecore::raster::{BinaryMask, Point};
use crate::imagecore::skeleton::{endpoints, skeletonize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconnectParams {
    /// Longest bridge in pixels.
    pub max_gap: f64,
    /// Largest allowed angle, in degrees, between an end's outward direction
    /// and the bridge leaving it.
    pub max_turn: f64,
    /// Bridge stroke width in pixels.
    pub thickness: usize,
    /// Components smaller than this that also lie farther than `max_gap`
    /// from the main chain are deleted.
    pub noise_floor: usize,
}

impl Default for ReconnectParams {
    fn default() -> Self {
        ReconnectParams {
            max_gap: 110.0,
            max_turn: 60.0,
            thickness: 3,
            noise_floor: 10,
        }
    }
}

impl ReconnectParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_gap >= 0.0 && self.max_gap.is_finite()) {
            return Err(Error::param("max_gap must be a non-negative number"));
        }
        if !(0.0..=180.0).contains(&self.max_turn) {
            return Err(Error::param("max_turn must lie in [0, 180] degrees"));
        }
        if self.thickness == 0 {
            return Err(Error::param("bridge thickness must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RuleReconnector {
    params: ReconnectParams,
}

impl RuleReconnector {
    pub fn new(params: ReconnectParams) -> Result<Self> {
        params.validate()?;
        Ok(RuleReconnector { params })
    }
}

impl Reconnector for RuleReconnector {
    fn reconnect(&self, mask: &BinaryMask) -> Result<BinaryMask> {
        Ok(rule_reconnect(mask, &self.params))
    }
}

/// Radius of the neighbourhood used to estimate an end's direction.
const TANGENT_RADIUS: f64 = 15.0;
/// Ends closer than this to their neighbourhood centroid have no reliable
/// direction.
const MIN_TANGENT_LEN: f64 = 3.0;
/// Safety stop; each round merges at least two components.
const MAX_ROUNDS: usize = 64;

/// Bridges end-point pairs of distinct components, repeating until no
/// admissible bridge remains.
///
/// Pairs are accepted greedily by cost (gap length weighted by how much
/// the line would have to turn) with at most one bridge per end and never
/// between components that are already joined. Bridge pixels below the
/// lowest input pixel are dropped so the line never grows past its tip.
pub fn rule_reconnect(mask: &BinaryMask, params: &ReconnectParams) -> BinaryMask {
    let mut out = remove_far_noise(mask, params);
    let Some(bottom) = out.foreground().map(|p| p.row).max() else {
        return out;
    };
    let stroke = disk_offsets(params.thickness as f64 / 2.0);
    for _ in 0..MAX_ROUNDS {
        let labels = connected_components(&out, Connectivity::Eight);
        if labels.count() < 2 {
            break;
        }
        let bridges = choose_bridges(&labels, params);
        if bridges.is_empty() {
            break;
        }
        for (a, b) in bridges {
            for (r, c) in line_points((a.row as isize, a.col as isize), (b.row as isize, b.col as isize)) {
                for &(dr, dc) in &stroke {
                    let (y, x) = (r + dr, c + dc);
                    if y >= 0 && x >= 0 && (y as usize) <= bottom && (x as usize) < out.cols() {
                        *out.at_mut(y as usize, x as usize) = true;
                    }
                }
            }
        }
    }
    out
}

fn remove_far_noise(mask: &BinaryMask, params: &ReconnectParams) -> BinaryMask {
    let labels = connected_components(mask, Connectivity::Eight);
    let Some(main) = labels.components.iter().max_by(|a, b| a.area.cmp(&b.area).then(b.label.cmp(&a.label))) else {
        return mask.clone();
    };
    let chain = labels.pixels_of(main.label);
    let limit2 = params.max_gap * params.max_gap;
    let mut out = mask.clone();
    for c in &labels.components {
        if c.label == main.label || c.area >= params.noise_floor {
            continue;
        }
        let pixels = labels.pixels_of(c.label);
        let near = pixels.iter().any(|p| chain.iter().any(|q| dist2(*p, *q) <= limit2));
        if !near {
            for p in pixels {
                out[p] = false;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct End {
    at: Point,
    component: usize,
    /// Unit vector pointing out of the component, when the skeleton is long
    /// enough to tell.
    outward: Option<(f64, f64)>,
}

fn component_ends(labels: &Labeling) -> Vec<End> {
    let mut ends = Vec::new();
    let reach2 = TANGENT_RADIUS * TANGENT_RADIUS;
    for comp in &labels.components {
        let bb = comp.bbox;
        let (h, w) = (bb.max.row - bb.min.row + 3, bb.max.col - bb.min.col + 3);
        let pixels = labels.pixels_of(comp.label);
        let mut local = BinaryMask::empty(h, w).expect("nonzero window");
        for p in &pixels {
            local[Point::new(p.row - bb.min.row + 1, p.col - bb.min.col + 1)] = true;
        }
        for e in endpoints(&skeletonize(&local)) {
            let at = Point::new(e.row + bb.min.row - 1, e.col + bb.min.col - 1);
            // Point away from the mass behind the end; skeleton walks are
            // thrown off by spurs on flat cut faces.
            let (mut sr, mut sc, mut n) = (0.0, 0.0, 0usize);
            for p in pixels.iter().filter(|p| dist2(**p, at) <= reach2) {
                sr += p.row as f64;
                sc += p.col as f64;
                n += 1;
            }
            let (dr, dc) = (at.row as f64 - sr / n as f64, at.col as f64 - sc / n as f64);
            let len = dr.hypot(dc);
            let outward = (len >= MIN_TANGENT_LEN).then(|| (dr / len, dc / len));
            ends.push(End { at, component: comp.label as usize, outward });
        }
    }
    ends
}

fn choose_bridges(labels: &Labeling, params: &ReconnectParams) -> Vec<(Point, Point)> {
    let ends = component_ends(labels);
    let max_turn = params.max_turn.to_radians();
    // Very short gaps are bridged whatever the directions say; ends that
    // close are dominated by pixel noise.
    let free_gap = 3.0 * params.thickness as f64;
    let mut candidates = Vec::new();
    for (i, a) in ends.iter().enumerate() {
        for (j, b) in ends.iter().enumerate().skip(i + 1) {
            if a.component == b.component {
                continue;
            }
            let gap = a.at.distance(b.at);
            if gap > params.max_gap {
                continue;
            }
            let v = (b.at.row as f64 - a.at.row as f64, b.at.col as f64 - a.at.col as f64);
            let ta = a.outward.map_or(0.0, |t| angle(t, v));
            let tb = b.outward.map_or(0.0, |t| angle(t, (-v.0, -v.1)));
            if gap > free_gap && (ta > max_turn || tb > max_turn) {
                continue;
            }
            let cost = gap * (1.0 + (ta + tb) / std::f64::consts::PI);
            candidates.push((cost, i, j));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut parent: Vec<usize> = (0..=labels.count()).collect();
    let mut used = vec![false; ends.len()];
    let mut bridges = Vec::new();
    for (_, i, j) in candidates {
        if used[i] || used[j] {
            continue;
        }
        let (ra, rb) = (find(&mut parent, ends[i].component), find(&mut parent, ends[j].component));
        if ra == rb {
            continue;
        }
        parent[ra] = rb;
        used[i] = true;
        used[j] = true;
        bridges.push((ends[i].at, ends[j].at));
    }
    bridges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn angle(a: (f64, f64), b: (f64, f64)) -> f64 {
    let nb = b.0.hypot(b.1);
    if nb == 0.0 {
        return 0.0;
    }
    ((a.0 * b.0 + a.1 * b.1) / nb).clamp(-1.0, 1.0).acos()
}

fn dist2(a: Point, b: Point) -> f64 {
    let dr = a.row as f64 - b.row as f64;
    let dc = a.col as f64 - b.col as f64;
    dr * dr + dc * dc
}
