//! Per-image estimation, per-prompt prominence, then bias metrics.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::metrics::{bias_metrics, prominent_category, Attribute, BiasReport, CategoryDistribution, PromptProminence};
use super::similarity::{classify_gender, SimilarityClient};
use super::skin::{estimate_skin_tone, MstPalette, PixelImage, SkinRules};
use crate::error::{Error, Result};
use crate::ingest::ImageManifest;
use crate::model::{DetectionRecord, ObjectClass};
use crate::prompts::neutral_prompt_corpus;

/// Images generated per neutral prompt.
pub const IMAGES_PER_PROMPT: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageItem {
    pub image_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptImages {
    pub prompt_id: String,
    pub prompt: String,
    pub images: Vec<ImageItem>,
}

/// Groups manifest images by `prompt_id`. Ids of the form
/// `<category>/<word>` resolve to their corpus prompt text.
pub fn prompts_from_manifest(manifest: &ImageManifest) -> Vec<PromptImages> {
    let corpus: HashMap<String, String> = neutral_prompt_corpus()
        .into_iter()
        .map(|p| (p.id(), p.prompt))
        .collect();
    manifest
        .by_prompt()
        .into_iter()
        .map(|(prompt_id, entries)| PromptImages {
            prompt: corpus.get(&prompt_id).cloned().unwrap_or_else(|| prompt_id.clone()),
            images: entries
                .into_iter()
                .map(|e| ImageItem {
                    image_id: e.image_id.clone(),
                    path: e.path.clone(),
                })
                .collect(),
            prompt_id,
        })
        .collect()
}

/// Per-image category estimator. `Ok(None)` drops the image from its
/// prompt's vote; `Err` aborts the run.
pub trait Estimator: Sync {
    fn attribute(&self) -> Attribute;
    fn estimate(&self, image_id: &str, path: &Path) -> Result<Option<usize>>;
}

pub struct SkinToneEstimator<'a> {
    pub palette: &'a MstPalette,
    pub rules: &'a SkinRules,
}

impl Estimator for SkinToneEstimator<'_> {
    fn attribute(&self) -> Attribute {
        Attribute::SkinTone
    }

    fn estimate(&self, _image_id: &str, path: &Path) -> Result<Option<usize>> {
        let img = PixelImage::open(path)?;
        Ok(estimate_skin_tone(&img, self.palette, self.rules).map(|t| t as usize - 1))
    }
}

pub struct GenderEstimator<'a> {
    pub client: &'a dyn SimilarityClient,
    /// When set, images outside this set are treated as showing no person.
    pub person_filter: Option<HashSet<String>>,
}

impl Estimator for GenderEstimator<'_> {
    fn attribute(&self) -> Attribute {
        Attribute::Gender
    }

    fn estimate(&self, image_id: &str, path: &Path) -> Result<Option<usize>> {
        if let Some(filter) = &self.person_filter {
            if !filter.contains(image_id) {
                return Ok(None);
            }
        }
        match classify_gender(path, self.client) {
            Ok(g) => Ok(Some(g.index())),
            Err(Error::Tie(s)) => {
                log::info!("{image_id}: gender scores tied at {s}, image dropped");
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

/// Image ids whose detections include a person above `threshold`.
pub fn person_presence(records: &[DetectionRecord], threshold: f64) -> HashSet<String> {
    records
        .iter()
        .filter(|r| {
            r.detections
                .iter()
                .any(|d| d.class() == Some(ObjectClass::Person) && d.confidence > threshold)
        })
        .map(|r| r.image_id.clone())
        .collect()
}

/// Runs `estimator` over every image (at most `max_in_flight` at once),
/// takes the per-prompt mode, and reports STD / MAD of the resulting
/// distribution. Prompts with no usable image are excluded.
pub fn run_bias_eval(groups: &[PromptImages], estimator: &dyn Estimator, max_in_flight: usize) -> Result<BiasReport> {
    let attribute = estimator.attribute();
    if let Some(g) = groups.iter().find(|g| g.images.len() > IMAGES_PER_PROMPT) {
        return Err(Error::invalid(
            "manifest",
            format!("prompt {} has {} images, at most {IMAGES_PER_PROMPT} allowed", g.prompt_id, g.images.len()),
        ));
    }
    let corpus_size = neutral_prompt_corpus().len();
    if groups.len() != corpus_size {
        log::warn!("evaluating {} prompts; the neutral corpus has {corpus_size}", groups.len());
    }

    let jobs: Vec<(usize, &ImageItem)> = groups
        .iter()
        .enumerate()
        .flat_map(|(i, g)| g.images.iter().map(move |img| (i, img)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| Error::invalid("thread pool", e.to_string()))?;
    let estimates: Vec<(usize, Option<usize>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(i, img)| estimator.estimate(&img.image_id, &img.path).map(|e| (*i, e)))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut per_group: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    for (i, e) in estimates {
        if let Some(c) = e {
            per_group[i].push(c);
        }
    }

    let names = attribute.category_names();
    let mut counts = vec![0usize; attribute.n_categories()];
    let mut excluded = 0;
    let mut per_prompt = Vec::with_capacity(groups.len());
    for (g, votes) in groups.iter().zip(&per_group) {
        let prominent = prominent_category(votes, attribute.n_categories());
        match prominent {
            Some(c) => counts[c] += 1,
            None => excluded += 1,
        }
        per_prompt.push(PromptProminence {
            prompt_id: g.prompt_id.clone(),
            prompt: g.prompt.clone(),
            n_images: g.images.len(),
            n_estimates: votes.len(),
            prominent: prominent.map(|c| names[c].clone()),
        });
    }

    let dist = CategoryDistribution::from_counts(attribute, &counts, excluded)?;
    let mut report = bias_metrics(&dist);
    report.per_prompt = per_prompt;
    Ok(report)
}
