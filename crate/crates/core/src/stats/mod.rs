//! Human/automated agreement statistics and auxiliary alignment and quality
//! metrics over externally computed features.

pub mod agreement;
pub mod annotation;
pub mod features;
pub mod fid;

pub use agreement::{agreement_rate, cohens_kappa, phi_coefficient, tone_mean_abs_diff, Confusion2x2};
pub use annotation::{
    aggregate_workers, Aggregate, AnnotationRecord, AnnotationTask, Answer, CountAnswer, GenderAnswer,
    GenderChoice, ObjectAnswer, SkinPointAnswer, SpatialAnswer,
};
pub use features::FeatureSet;
pub use fid::{fid, r_precision};
