//! Run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use t2i_harness_core::bias::{MstPalette, SimilarityConfig, SkinRules};
use t2i_harness_core::ScorerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    #[serde(default)]
    pub scorer: ScorerConfig,
    /// MST palette JSON; the built-in palette when absent.
    #[serde(default)]
    pub palette_path: Option<PathBuf>,
    /// Skin-rule threshold table; the built-in rules when absent.
    #[serde(default)]
    pub skin_rules_path: Option<PathBuf>,
    /// Image-text similarity service, required for gender runs.
    #[serde(default)]
    pub similarity: Option<SimilarityConfig>,
    /// When set, gender runs only classify images whose detections contain
    /// a person above this confidence.
    #[serde(default)]
    pub person_threshold: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            scorer: ScorerConfig::default(),
            palette_path: None,
            skin_rules_path: None,
            similarity: None,
            person_threshold: None,
            seed: 0,
            output_dir: default_output_dir(),
        }
    }
}

impl HarnessConfig {
    /// Reads and validates a config file. Relative paths inside it are
    /// resolved against the file's directory, so the snapshot embedded in a
    /// report is usable from anywhere.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: HarnessConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.palette_path, &mut cfg.skin_rules_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scorer.validate()?;
        for (what, p) in [("palette_path", &self.palette_path), ("skin_rules_path", &self.skin_rules_path)] {
            if let Some(p) = p {
                if !p.is_file() {
                    bail!("{what}: no such file: {}", p.display());
                }
            }
        }
        if let Some(s) = &self.similarity {
            if s.timeout_ms == 0 {
                bail!("similarity.timeout_ms must be positive");
            }
            if s.max_in_flight == 0 {
                bail!("similarity.max_in_flight must be positive");
            }
        }
        if let Some(t) = self.person_threshold {
            if !(0.0..=1.0).contains(&t) {
                bail!("person_threshold {t} outside [0,1]");
            }
        }
        Ok(())
    }

    pub fn palette(&self) -> Result<MstPalette> {
        match &self.palette_path {
            Some(p) => Ok(MstPalette::from_path(p)?),
            None => Ok(MstPalette::builtin().clone()),
        }
    }

    pub fn skin_rules(&self) -> Result<SkinRules> {
        match &self.skin_rules_path {
            Some(p) => Ok(SkinRules::from_path(p)?),
            None => Ok(SkinRules::default()),
        }
    }
}
