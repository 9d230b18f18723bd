pub mod backends;
pub mod cli;
pub mod error;
pub mod imagecore;
pub mod patchvote;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod synth;
pub mod tipmetrics;
pub mod vmflg;

pub use error::{Error, Result, Stage};
pub use scalar::Scalar;

pub use imagecore::{BinaryMask, GrayImage, Point, ProbMap};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineResult};

pub type ProbMapF32 = ProbMap<f32>;
pub type ProbMapF64 = ProbMap<f64>;
