//! Evaluation harness for text-to-image models.
//!
//! * [`scenes`] generates diagnostic scene configurations for three visual
//!   reasoning skills (object recognition, counting, spatial relations).
//! * [`scoring`] grades generated images from external object detections.
//! * [`bias`] estimates gender and skin tone over images generated from
//!   neutral prompts and reports STD / MAD of the prominence distribution.
//! * [`stats`] holds agreement statistics, annotation aggregation, FID and
//!   R-precision.

pub mod bias;
pub mod error;
pub mod ingest;
pub mod jsonl;
pub mod model;
pub mod prompts;
pub mod scenes;
pub mod scoring;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    map_label, validate_scene, BBox, CountMode, CountValue, Detection, DetectionRecord, ObjectClass, ObjectSpec,
    RelationKind, SceneConfig, ScorerConfig, SkillKind, Split,
};
