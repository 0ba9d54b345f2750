//! Evaluation report schema, atomic JSON output and CSV flattening.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use t2i_harness_core::bias::BiasReport;
use t2i_harness_core::scoring::SkillScoreReport;

use crate::config::HarnessConfig;

pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Named scalar results, e.g. agreement statistics or FID.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsBlock {
    pub name: String,
    pub n: usize,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub harness_version: String,
    pub command: String,
    /// Effective configuration of the run. Feeding it back through
    /// `--config` reproduces the metric values.
    pub config: HarnessConfig,
    /// Input files by role.
    pub inputs: BTreeMap<String, String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    #[serde(default)]
    pub skill_reports: Vec<SkillScoreReport>,
    #[serde(default)]
    pub bias_reports: Vec<BiasReport>,
    #[serde(default)]
    pub stats: Vec<StatsBlock>,
}

impl EvaluationReport {
    pub fn new(command: &str, config: &HarnessConfig, started_at: DateTime<Utc>) -> Self {
        EvaluationReport {
            harness_version: HARNESS_VERSION.to_string(),
            command: command.to_string(),
            config: config.clone(),
            inputs: BTreeMap::new(),
            started_at,
            finished_at: started_at,
            skill_reports: Vec::new(),
            bias_reports: Vec::new(),
            stats: Vec::new(),
        }
    }

    pub fn input(mut self, role: &str, path: &Path) -> Self {
        self.inputs.insert(role.to_string(), path.display().to_string());
        self
    }

    /// Stamps the finish time and writes the report to `path`.
    pub fn finish(mut self, path: &Path) -> Result<Self> {
        self.finished_at = Utc::now();
        let mut json = serde_json::to_vec_pretty(&self)?;
        json.push(b'\n');
        write_atomic(path, &json)?;
        Ok(self)
    }

    /// One row per scalar: `section,key,metric,value`.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["section", "key", "metric", "value"])?;
            for r in &self.skill_reports {
                let skill = r.skill.to_string();
                w.write_record([skill.as_str(), "", "accuracy", &r.accuracy.to_string()])?;
                w.write_record([skill.as_str(), "", "n_images", &r.n_images.to_string()])?;
                w.write_record([skill.as_str(), "", "n_correct", &r.n_correct.to_string()])?;
                for s in &r.per_scene {
                    w.write_record([skill.as_str(), &s.scene_id, "passed", &s.passed.to_string()])?;
                }
            }
            for r in &self.bias_reports {
                let attr = r.attribute.as_str();
                w.write_record([attr, "", "std", &r.std.to_string()])?;
                w.write_record([attr, "", "mad", &r.mad.to_string()])?;
                for (c, p) in r.distribution.categories.iter().zip(&r.distribution.p) {
                    w.write_record([attr, c, "p", &p.to_string()])?;
                }
                for p in &r.per_prompt {
                    w.write_record([attr, &p.prompt_id, "prominent", p.prominent.as_deref().unwrap_or("")])?;
                }
            }
            for s in &self.stats {
                for (k, v) in &s.values {
                    w.write_record([s.name.as_str(), "", k, &v.to_string()])?;
                }
            }
            w.flush()?;
        }
        write_atomic(path, &buf)
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial report.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
