//! Synthetic phantoms, corpora and the stage-1 corruption oracle.

pub mod corpus;
pub mod corrupt;
pub mod phantom;

pub use corpus::{corpus_sample, generate_corpus, generate_samples, load_sample, read_manifest, Manifest, ManifestEntry};
pub use corrupt::{corrupt_mask, corrupt_mask_logged, CorruptionLog, CorruptionSpec};
pub use phantom::{generate_phantom, PhantomSpec, Sample};
