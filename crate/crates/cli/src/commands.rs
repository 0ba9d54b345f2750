use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::Utc;
use serde::Deserialize;
use serde_json::Value;
use t2i_harness_core::bias::{
    person_presence, prompts_from_manifest, run_bias_eval, Attribute, BiasReport, GenderEstimator,
    HttpSimilarityClient, SkinToneEstimator,
};
use t2i_harness_core::ingest::{load_detections, load_scenes, ImageManifest};
use t2i_harness_core::scenes::{export_simulator_batch, generate_scenes, GenerationSpec};
use t2i_harness_core::scoring::score_split;
use t2i_harness_core::stats::{
    agreement_rate, cohens_kappa, fid, phi_coefficient, r_precision, tone_mean_abs_diff, Confusion2x2, FeatureSet,
};
use t2i_harness_core::{jsonl, SkillKind, Split};

use crate::cli::{Cli, Command, PairKind};
use crate::config::HarnessConfig;
use crate::report::{EvaluationReport, StatsBlock};
use crate::serve;

pub fn run(cli: Cli) -> Result<()> {
    let config = HarnessConfig::load_or_default(cli.config.as_deref())?;
    match cli.command {
        Command::Gen {
            skill,
            split,
            seed,
            multiplicity,
            out,
        } => gen(&config, skill, split, seed, multiplicity, out),
        Command::Score {
            scenes,
            detections,
            out,
            csv,
        } => {
            let report = score(&config, &scenes, &detections, &report_path(&config, "score", out))?;
            for r in &report.skill_reports {
                println!(
                    "{}: accuracy {:.1}% ({}/{} images, {} scenes without detections)",
                    r.skill,
                    100.0 * r.accuracy,
                    r.n_correct,
                    r.n_images,
                    r.unscored_scene_ids.len()
                );
            }
            write_csv(&report, csv)
        }
        Command::Bias {
            manifest,
            attribute,
            detections,
            out,
            csv,
        } => {
            let report = bias(
                &config,
                &manifest,
                attribute,
                detections.as_deref(),
                &report_path(&config, "bias", out),
            )?;
            for r in &report.bias_reports {
                println!(
                    "{}: std {:.4} mad {:.4} ({} prompts included, {} excluded)",
                    r.attribute,
                    r.std,
                    r.mad,
                    r.distribution.n_prompts_included,
                    r.distribution.n_prompts_excluded
                );
            }
            write_csv(&report, csv)
        }
        Command::Stats { pairs, kind, out } => {
            let report = stats(&config, &pairs, kind, &report_path(&config, "stats", out))?;
            print_stats(&report);
            Ok(())
        }
        Command::Fid { real, gen, out } => {
            let started = Utc::now();
            let (a, b) = (FeatureSet::read(&real)?, FeatureSet::read(&gen)?);
            let value = fid(&a, &b)?;
            let mut report = EvaluationReport::new("fid", &config, started)
                .input("real", &real)
                .input("gen", &gen);
            report.stats.push(StatsBlock {
                name: "fid".into(),
                n: a.n + b.n,
                values: BTreeMap::from([
                    ("fid".to_string(), value),
                    ("n_real".to_string(), a.n as f64),
                    ("n_gen".to_string(), b.n as f64),
                    ("d".to_string(), a.d as f64),
                ]),
            });
            report.finish(&report_path(&config, "fid", out))?;
            println!("fid {value:.6}");
            Ok(())
        }
        Command::Rprecision { sim, out } => {
            let started = Utc::now();
            let set = FeatureSet::read(&sim)?;
            let value = r_precision(&set)?;
            let mut report = EvaluationReport::new("rprecision", &config, started).input("sim", &sim);
            report.stats.push(StatsBlock {
                name: "r_precision".into(),
                n: set.n,
                values: BTreeMap::from([("r_precision".to_string(), value)]),
            });
            report.finish(&report_path(&config, "rprecision", out))?;
            println!("r_precision {value:.4}");
            Ok(())
        }
        Command::Serve {
            manifest,
            scenes,
            journal,
            host,
            port,
        } => {
            let journal = journal.unwrap_or_else(|| config.output_dir.join("annotations.jsonl"));
            let state = serve::AppState::load(&manifest, scenes.as_deref(), &journal, &config)?;
            serve::run_blocking(state, &host, port)
        }
    }
}

fn report_path(config: &HarnessConfig, command: &str, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| config.output_dir.join(format!("{command}_report.json")))
}

fn write_csv(report: &EvaluationReport, csv: Option<PathBuf>) -> Result<()> {
    match csv {
        Some(path) => report.to_csv(&path),
        None => Ok(()),
    }
}

pub fn gen(
    config: &HarnessConfig,
    skill: SkillKind,
    split: Split,
    seed: Option<u64>,
    multiplicity: Option<u32>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut spec = GenerationSpec::standard(skill, split, seed.unwrap_or(config.seed));
    if let Some(m) = multiplicity {
        spec.multiplicity = m;
    }
    let scenes = generate_scenes(&spec)?;
    let out = out.unwrap_or_else(|| config.output_dir.join(format!("scenes_{skill}_{split}.jsonl")));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    export_simulator_batch(&scenes, &out)?;
    println!("{} scenes written to {}", scenes.len(), out.display());
    Ok(())
}

/// Scores every skill that has at least one detection record.
pub fn score(config: &HarnessConfig, scenes: &Path, detections: &Path, out: &Path) -> Result<EvaluationReport> {
    let started = Utc::now();
    let scene_list = load_scenes(scenes)?;
    let records = load_detections(detections)?;
    let with_records: HashSet<&str> = records.iter().map(|r| r.scene_id.as_str()).collect();
    let skills: BTreeSet<SkillKind> = scene_list
        .iter()
        .filter(|s| with_records.contains(s.id.as_str()))
        .map(|s| s.skill)
        .collect();
    if skills.is_empty() {
        bail!("no detection record matches a scene in {}", scenes.display());
    }

    let mut report = EvaluationReport::new("score", config, started)
        .input("scenes", scenes)
        .input("detections", detections);
    for skill in skills {
        report.skill_reports.push(score_split(&scene_list, &records, &config.scorer, skill)?);
    }
    report.finish(out)
}

pub fn bias(
    config: &HarnessConfig,
    manifest: &Path,
    attribute: Attribute,
    detections: Option<&Path>,
    out: &Path,
) -> Result<EvaluationReport> {
    let started = Utc::now();
    let groups = prompts_from_manifest(&ImageManifest::load(manifest)?);
    if groups.is_empty() {
        bail!("manifest {} has no entries with a prompt_id", manifest.display());
    }
    let mut report = EvaluationReport::new("bias", config, started).input("manifest", manifest);

    let result: BiasReport = match attribute {
        Attribute::SkinTone => {
            let palette = config.palette()?;
            let rules = config.skin_rules()?;
            let workers = std::thread::available_parallelism().map_or(4, |n| n.get());
            run_bias_eval(&groups, &SkinToneEstimator { palette: &palette, rules: &rules }, workers)?
        }
        Attribute::Gender => {
            let sim = config
                .similarity
                .clone()
                .ok_or_else(|| anyhow!("gender runs need a similarity service (`similarity.url` in the config)"))?;
            let max_in_flight = sim.max_in_flight;
            let client = HttpSimilarityClient::new(sim)?;
            let person_filter = match config.person_threshold {
                Some(t) => {
                    let path = detections.ok_or_else(|| anyhow!("person_threshold is set but --detections is missing"))?;
                    report = report.input("detections", path);
                    Some(person_presence(&load_detections(path)?, t))
                }
                None => None,
            };
            let estimator = GenderEstimator {
                client: &client,
                person_filter,
            };
            run_bias_eval(&groups, &estimator, max_in_flight)?
        }
    };
    report.bias_reports.push(result);
    report.finish(out)
}

#[derive(Debug, Deserialize)]
struct Pair {
    human: Value,
    auto: Value,
}

pub fn stats(config: &HarnessConfig, pairs: &Path, kind: PairKind, out: &Path) -> Result<EvaluationReport> {
    let started = Utc::now();
    let rows: Vec<Pair> = jsonl::read(pairs)?;
    let n = rows.len();
    let mut values = BTreeMap::new();
    let name = match kind {
        PairKind::Binary => {
            let bools = rows
                .iter()
                .enumerate()
                .map(|(i, p)| match (p.human.as_bool(), p.auto.as_bool()) {
                    (Some(h), Some(a)) => Ok((h, a)),
                    _ => Err(anyhow!("{}:{}: binary pairs must be booleans", pairs.display(), i + 1)),
                })
                .collect::<Result<Vec<_>>>()?;
            let table = Confusion2x2::from_pairs(bools.iter().copied());
            values.insert("phi".to_string(), phi_coefficient(&table)?);
            values.insert("kappa".to_string(), cohens_kappa(&table)?);
            values.insert("agreement".to_string(), agreement_rate(&bools)?);
            "agreement_binary"
        }
        PairKind::Label => {
            let labels: Vec<(Value, Value)> = rows.into_iter().map(|p| (p.human, p.auto)).collect();
            values.insert("agreement".to_string(), agreement_rate(&labels)?);
            "agreement_label"
        }
        PairKind::Tone => {
            let tone = |v: &Value| v.as_u64().filter(|t| (1..=10).contains(t)).map(|t| t as u8);
            let tones = rows
                .iter()
                .enumerate()
                .map(|(i, p)| match (tone(&p.human), tone(&p.auto)) {
                    (Some(h), Some(a)) => Ok((h, a)),
                    _ => Err(anyhow!("{}:{}: tones must be integers in [1,10]", pairs.display(), i + 1)),
                })
                .collect::<Result<Vec<_>>>()?;
            values.insert("tone_mean_abs_diff".to_string(), tone_mean_abs_diff(&tones)?);
            values.insert("agreement".to_string(), agreement_rate(&tones)?);
            "agreement_tone"
        }
    };
    let mut report = EvaluationReport::new("stats", config, started).input("pairs", pairs);
    report.stats.push(StatsBlock {
        name: name.to_string(),
        n,
        values,
    });
    report.finish(out)
}

fn print_stats(report: &EvaluationReport) {
    for block in &report.stats {
        for (k, v) in &block.values {
            println!("{k} {v:.4}");
        }
        println!("n {}", block.n);
    }
}
