//! Document identification and field extraction with a human feedback loop.
//!
//! The crate covers synthetic document generation, the 14-variant
//! augmentation fan-out, template-anchored region mapping, pluggable detector
//! and OCR backends (including manifest-driven oracles), the modification
//! request store and the evaluation kit.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod font;
pub mod geometry;
pub mod idgen;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod render;
pub mod similarity;
pub mod templates;

pub use error::{Error, Result};
pub use model::{Annotation, BBox, DetectionResult, DocumentClass, ImageRef, OcrSpan};
