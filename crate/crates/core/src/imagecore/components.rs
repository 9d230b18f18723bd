//! Connected-component labelling.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::raster::{BinaryMask, Point, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

/// Inclusive bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Label in `Labeling::labels`, starting at 1.
    pub label: u32,
    pub area: usize,
    pub bbox: BoundingBox,
    /// First pixel in raster order, i.e. topmost then leftmost.
    pub topmost: Point,
}

#[derive(Debug, Clone)]
pub struct Labeling {
    /// 0 marks background.
    pub labels: Raster<u32>,
    pub components: Vec<Component>,
}

impl Labeling {
    pub fn count(&self) -> usize {
        self.components.len()
    }

    pub fn label_at(&self, p: Point) -> u32 {
        self.labels[p]
    }

    pub fn component(&self, label: u32) -> &Component {
        &self.components[label as usize - 1]
    }

    /// Mask holding only the given component.
    pub fn mask_of(&self, label: u32) -> BinaryMask {
        self.labels.map(|&l| l == label)
    }

    /// Pixels of the given component, in raster order.
    pub fn pixels_of(&self, label: u32) -> Vec<Point> {
        let c = self.component(label);
        let mut out = Vec::with_capacity(c.area);
        for r in c.bbox.min.row..=c.bbox.max.row {
            for col in c.bbox.min.col..=c.bbox.max.col {
                if *self.labels.at(r, col) == label {
                    out.push(Point::new(r, col));
                }
            }
        }
        out
    }
}

/// Labels the foreground. Components are numbered in raster order of their
/// topmost pixel.
pub fn connected_components(m: &BinaryMask, connectivity: Connectivity) -> Labeling {
    let mut labels = m.map(|_| 0u32);
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..m.len() {
        if !m.as_slice()[start] || labels.as_slice()[start] != 0 {
            continue;
        }
        let label = components.len() as u32 + 1;
        let seed = m.point_of(start);
        labels[seed] = label;
        queue.push_back(seed);
        let mut area = 0;
        let mut bbox = BoundingBox { min: seed, max: seed };
        while let Some(p) = queue.pop_front() {
            area += 1;
            bbox.min.row = bbox.min.row.min(p.row);
            bbox.min.col = bbox.min.col.min(p.col);
            bbox.max.row = bbox.max.row.max(p.row);
            bbox.max.col = bbox.max.col.max(p.col);
            let mut visit = |q: Point| {
                if m[q] && labels[q] == 0 {
                    labels[q] = label;
                    queue.push_back(q);
                }
            };
            match connectivity {
                Connectivity::Eight => m.neighbors8(p).for_each(&mut visit),
                Connectivity::Four => m.neighbors4(p).for_each(&mut visit),
            }
        }
        components.push(Component {
            label,
            area,
            bbox,
            topmost: seed,
        });
    }
    Labeling { labels, components }
}

pub fn count_components(m: &BinaryMask, connectivity: Connectivity) -> usize {
    connected_components(m, connectivity).count()
}
