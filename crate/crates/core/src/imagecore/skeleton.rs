//! Topology-preserving thinning.
//!
//! Candidates come from the two Zhang-Suen sub-iterations evaluated on a
//! snapshot. Each candidate is then removed only if it is still a simple
//! point of the current image (8-connected foreground, 4-connected
//! background), so thinning can never split, merge or delete a component.
//! Thinning shortens blunt ends by about half the stroke width, so each end
//! is finally extended along its local direction back to the mask border.

use std::sync::OnceLock;

use super::raster::{BinaryMask, Point};

/// Neighbour offsets in clockwise order starting north:
/// P2=N, P3=NE, P4=E, P5=SE, P6=S, P7=SW, P8=W, P9=NW.
const RING: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

pub fn skeletonize(m: &BinaryMask) -> BinaryMask {
    let mut img = m.clone();
    thin(&mut img);
    extend_ends(&mut img, m);
    // Extension strokes can leave corner pixels (a `##` over `#` triangle)
    // that hide the end; a second pass removes them. End points have a
    // single neighbour and are never candidates, so ends stay put.
    thin(&mut img);
    img
}

fn thin(img: &mut BinaryMask) {
    let simple = simple_table();
    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for sub in 0..2 {
            candidates.clear();
            for p in img.foreground() {
                let code = ring_code(img, p);
                if zhang_suen_candidate(code, sub) {
                    candidates.push(p);
                }
            }
            for &p in &candidates {
                let code = ring_code(img, p);
                if code.count_ones() >= 2 && simple[code as usize] {
                    img[p] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

/// Steps walked back from an end point to estimate its direction.
const DIRECTION_STEPS: usize = 6;

fn extend_ends(skel: &mut BinaryMask, mask: &BinaryMask) {
    for end in endpoints(skel) {
        let Some(back) = walk_back(skel, end, DIRECTION_STEPS) else {
            continue;
        };
        let dr = end.row as f64 - back.row as f64;
        let dc = end.col as f64 - back.col as f64;
        let norm = dr.hypot(dc);
        let (ur, uc) = (dr / norm, dc / norm);
        let mut last = end;
        for k in 1.. {
            let r = (end.row as f64 + ur * k as f64).round();
            let c = (end.col as f64 + uc * k as f64).round();
            if r < 0.0 || c < 0.0 {
                break;
            }
            let p = Point::new(r as usize, c as usize);
            if p == last {
                continue;
            }
            if !mask.get(p).copied().unwrap_or(false) {
                break;
            }
            skel[p] = true;
            last = p;
        }
    }
}

/// Pixel reached by walking `steps` pixels along the skeleton from `end`.
pub(crate) fn walk_back(skel: &BinaryMask, end: Point, steps: usize) -> Option<Point> {
    let mut prev = end;
    let mut cur = end;
    let mut walked = 0;
    while walked < steps {
        let next = skel
            .neighbors8(cur)
            .filter(|&q| skel[q] && q != prev && q != end)
            // Prefer 4-neighbours so corners do not shortcut.
            .min_by_key(|q| q.row.abs_diff(cur.row) + q.col.abs_diff(cur.col));
        match next {
            Some(q) => {
                prev = cur;
                cur = q;
                walked += 1;
            }
            None => break,
        }
    }
    (walked >= 2).then_some(cur)
}

/// Bit `i` set iff ring neighbour `i` (see `RING`) is foreground.
pub(crate) fn ring_code(m: &BinaryMask, p: Point) -> u8 {
    let (rows, cols) = (m.rows() as isize, m.cols() as isize);
    let mut code = 0u8;
    for (i, &(dr, dc)) in RING.iter().enumerate() {
        let r = p.row as isize + dr;
        let c = p.col as isize + dc;
        if r >= 0 && c >= 0 && r < rows && c < cols && *m.at(r as usize, c as usize) {
            code |= 1 << i;
        }
    }
    code
}

fn zhang_suen_candidate(code: u8, sub: usize) -> bool {
    let b = code.count_ones();
    if !(2..=6).contains(&b) {
        return false;
    }
    let bit = |i: usize| code >> i & 1 == 1;
    let transitions = (0..8).filter(|&i| !bit(i) && bit((i + 1) % 8)).count();
    if transitions != 1 {
        return false;
    }
    let (n, e, s, w) = (bit(0), bit(2), bit(4), bit(6));
    if sub == 0 {
        !(n && e && s) && !(e && s && w)
    } else {
        !(n && e && w) && !(n && s && w)
    }
}

fn simple_table() -> &'static [bool; 256] {
    static TABLE: OnceLock<[bool; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [false; 256];
        for (code, slot) in t.iter_mut().enumerate() {
            *slot = is_simple(code as u8);
        }
        t
    })
}

/// Simple-point test on a 3x3 neighbourhood: exactly one 8-component of
/// foreground neighbours and exactly one 4-component of background
/// neighbours that touches a 4-neighbour of the centre.
fn is_simple(code: u8) -> bool {
    let fg = |i: usize| code >> i & 1 == 1;
    let count = |want_fg: bool, eight: bool, need_four_touch: bool| {
        let mut seen = [false; 8];
        let mut n = 0;
        for start in 0..8 {
            if seen[start] || fg(start) != want_fg {
                continue;
            }
            let mut stack = vec![start];
            seen[start] = true;
            let mut touches = false;
            while let Some(i) = stack.pop() {
                touches |= i % 2 == 0;
                for j in 0..8 {
                    if !seen[j] && fg(j) == want_fg && ring_adjacent(i, j, eight) {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            if !need_four_touch || touches {
                n += 1;
            }
        }
        n
    };
    count(true, true, false) == 1 && count(false, false, true) == 1
}

/// Adjacency of two ring cells inside the 3x3 window, excluding the centre.
fn ring_adjacent(i: usize, j: usize, eight: bool) -> bool {
    let (a, b) = (RING[i], RING[j]);
    let dr = (a.0 - b.0).abs();
    let dc = (a.1 - b.1).abs();
    if eight {
        dr <= 1 && dc <= 1 && (dr, dc) != (0, 0)
    } else {
        dr + dc == 1
    }
}

/// Skeleton pixels with exactly one 8-neighbour, plus isolated pixels.
pub fn endpoints(skel: &BinaryMask) -> Vec<Point> {
    skel.foreground()
        .filter(|&p| ring_code(skel, p).count_ones() <= 1)
        .collect()
}
