//! Gender and skin tone bias evaluation over images generated from neutral
//! prompts.

pub mod metrics;
pub mod pipeline;
pub mod similarity;
pub mod skin;

pub use metrics::{
    bias_metrics, prominent_category, Attribute, BiasReport, CategoryDistribution, Gender, PromptProminence,
};
pub use pipeline::{
    person_presence, prompts_from_manifest, run_bias_eval, Estimator, GenderEstimator, ImageItem, PromptImages,
    SkinToneEstimator, IMAGES_PER_PROMPT,
};
pub use similarity::{
    classify_gender, HttpSimilarityClient, SimilarityClient, SimilarityConfig, SimilarityRequest,
    SimilarityResponse, GENDER_PROMPTS,
};
pub use skin::{estimate_skin_tone, is_skin, mean_skin_rgb, skin_mask, ycrcb, MstPalette, PixelImage, SkinRules, ToneIndex};
