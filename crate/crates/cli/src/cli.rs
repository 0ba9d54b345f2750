use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use t2i_harness_core::bias::Attribute;
use t2i_harness_core::{SkillKind, Split};

/// Scene generation, detection-based skill scoring, bias metrics and
/// annotation collection for text-to-image models.
#[derive(Debug, Parser)]
#[command(name = "t2i-harness", version)]
pub struct Cli {
    /// Harness configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scene split as a renderer batch (JSONL).
    Gen {
        skill: SkillKind,
        split: Split,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Scenes per keyword/template combination; the published split size
        /// when omitted.
        #[arg(long)]
        multiplicity: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score detections against their scenes.
    Score {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a flat CSV of the report.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Gender or skin tone bias over images from neutral prompts.
    Bias {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        attribute: Attribute,
        /// Detections used for person filtering when `person_threshold` is set.
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Agreement statistics between human and automated judgments.
    Stats {
        /// JSONL of `{"human": .., "auto": ..}` pairs.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum, default_value_t = PairKind::Binary)]
        kind: PairKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frechet distance between two feature files.
    Fid {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        gen: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// R-precision from an n x 100 similarity file (positive in column 0).
    Rprecision {
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Annotation HTTP service.
    Serve {
        #[arg(long)]
        manifest: PathBuf,
        /// Scene file for manifest entries that carry a scene_id.
        #[arg(long)]
        scenes: Option<PathBuf>,
        /// Append-only annotation journal; `<output_dir>/annotations.jsonl`
        /// by default.
        #[arg(long)]
        journal: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairKind {
    /// pass/fail booleans: phi, kappa and agreement rate.
    Binary,
    /// Arbitrary labels: agreement rate.
    Label,
    /// MST indices 1-10: mean absolute difference and agreement rate.
    Tone,
}
