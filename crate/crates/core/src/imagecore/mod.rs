//! Raster primitives shared by every stage.

pub mod clahe;
pub mod components;
pub mod geodesic;
pub mod io;
pub mod morph;
pub mod raster;
pub mod resize;
pub mod skeleton;

pub use clahe::{clahe_equalize, ClaheParams};
pub use components::{connected_components, count_components, Component, Connectivity, Labeling};
pub use geodesic::geodesic_farthest;
pub use morph::{binarize, dilate, draw_segment};
pub use raster::{BinaryMask, GrayImage, Point, ProbMap, Raster};
pub use resize::{Resize, ResizeMode};
pub use skeleton::{endpoints, skeletonize};
