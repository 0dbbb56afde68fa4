//! Desk-scale toolkit for coronary angiography (CAG) report datasets.
//!
//! The crate covers the data side of a two-stage CAG pipeline:
//!
//! 1. [`ingest`] decodes multi-frame cines (explicit-VR little-endian DICOM or
//!    a directory of PGM/PNG frames) and computes per-frame intensity
//!    statistics.
//! 2. [`sampler`] picks still-frame candidates at local extrema of the mean and
//!    variance series, keeping candidates at least `min_gap` frames apart.
//! 3. [`classify`] runs a pluggable six-class predictor over candidates and
//!    selects key frames.
//! 4. [`dataset`] pairs key frames with bilingual reports and builds
//!    leakage-safe splits.
//! 5. [`vlscore`] scores generated reports by the triangle area spanned by
//!    image, ground-truth and generated-report embeddings.
//! 6. [`metrics`] and [`review`] cover classification metrics, physician
//!    reviews and the append-only review store.

pub mod classify;
pub mod dataset;
pub mod ingest;
pub mod jsonl;
pub mod metrics;
pub mod review;
pub mod sampler;
pub mod table;
pub mod vlscore;

pub use classify::{FramePrediction, KeyFrame, Laterality, SixClassLabel};
pub use dataset::{CorpusRecord, SplitManifest};
pub use ingest::{load_cine, CineSequence, Frame, FrameStats};
pub use sampler::{CandidateSet, SamplerConfig};
pub use vlscore::{EmbeddingTriple, VlScoreResult};
