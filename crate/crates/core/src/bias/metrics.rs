//! Prominence aggregation and STD / MAD bias scalars.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Gender,
    SkinTone,
}

impl Attribute {
    pub fn n_categories(self) -> usize {
        match self {
            Attribute::Gender => 2,
            Attribute::SkinTone => 10,
        }
    }

    /// Uniform reference value: one over the category count.
    pub fn p_bar(self) -> f64 {
        1.0 / self.n_categories() as f64
    }

    pub fn category_names(self) -> Vec<String> {
        match self {
            Attribute::Gender => vec![Gender::Male.to_string(), Gender::Female.to_string()],
            Attribute::SkinTone => (1..=10).map(|k| format!("mst_{k}")).collect(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Gender => "gender",
            Attribute::SkinTone => "skin_tone",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gender" => Ok(Attribute::Gender),
            "skin_tone" | "skin" | "tone" => Ok(Attribute::SkinTone),
            other => Err(Error::invalid("attribute", other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn index(self) -> usize {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDistribution {
    pub attribute: Attribute,
    pub categories: Vec<String>,
    pub p: Vec<f64>,
    pub n_prompts_included: usize,
    pub n_prompts_excluded: usize,
}

impl CategoryDistribution {
    /// Normalizes per-category prompt counts.
    pub fn from_counts(attribute: Attribute, counts: &[usize], n_prompts_excluded: usize) -> Result<Self> {
        if counts.len() != attribute.n_categories() {
            return Err(Error::DimensionMismatch(counts.len(), attribute.n_categories()));
        }
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::NoIncludedPrompts);
        }
        Ok(CategoryDistribution {
            attribute,
            categories: attribute.category_names(),
            p: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            n_prompts_included: total,
            n_prompts_excluded,
        })
    }

    /// Distribution given directly as proportions.
    pub fn from_proportions(attribute: Attribute, p: Vec<f64>) -> Result<Self> {
        if p.len() != attribute.n_categories() {
            return Err(Error::DimensionMismatch(p.len(), attribute.n_categories()));
        }
        if p.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("distribution", "proportions must lie in [0,1]"));
        }
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("distribution", "proportions must sum to 1"));
        }
        Ok(CategoryDistribution {
            attribute,
            categories: attribute.category_names(),
            p,
            n_prompts_included: 0,
            n_prompts_excluded: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptProminence {
    pub prompt_id: String,
    pub prompt: String,
    pub n_images: usize,
    /// Images that produced an estimate.
    pub n_estimates: usize,
    /// `None` when the prompt was excluded.
    pub prominent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub attribute: Attribute,
    pub std: f64,
    pub mad: f64,
    pub p_bar: f64,
    pub distribution: CategoryDistribution,
    pub per_prompt: Vec<PromptProminence>,
}

/// Mode of the per-image category indices; ties resolve to the lowest
/// index. `None` for an empty list.
pub fn prominent_category(per_image: &[usize], n_categories: usize) -> Option<usize> {
    if per_image.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; n_categories];
    for &c in per_image {
        counts[c] += 1;
    }
    let max = *counts.iter().max()?;
    let winner = counts.iter().position(|&c| c == max)?;
    if counts.iter().filter(|&&c| c == max).count() > 1 {
        log::debug!("prominence tie among {counts:?}, choosing category {winner}");
    }
    Some(winner)
}

/// STD and MAD of `dist` around the uniform value, averaged over the
/// category count.
pub fn bias_metrics(dist: &CategoryDistribution) -> BiasReport {
    let p_bar = dist.attribute.p_bar();
    let n = dist.p.len() as f64;
    let std = (dist.p.iter().map(|p| (p - p_bar).powi(2)).sum::<f64>() / n).sqrt();
    let mad = dist.p.iter().map(|p| (p - p_bar).abs()).sum::<f64>() / n;
    BiasReport {
        attribute: dist.attribute,
        std,
        mad,
        p_bar,
        distribution: dist.clone(),
        per_prompt: Vec::new(),
    }
}
