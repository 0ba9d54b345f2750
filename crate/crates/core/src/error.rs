use std::path::PathBuf;

use crate::model::SkillKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: line {line}: {message}", path.display())]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("missing keyword for placeholder {0}")]
    MissingPlaceholder(&'static str),

    #[error("unknown template id {template_id} for {skill} skill")]
    UnknownTemplate { skill: SkillKind, template_id: usize },

    #[error("scene {scene_id} has skill {found}, expected {expected}")]
    SkillMismatch {
        scene_id: String,
        expected: SkillKind,
        found: SkillKind,
    },

    #[error("ambiguous direction: |dx| = |dy| = {0}")]
    AmbiguousDirection(f64),

    #[error("detection record references unknown scene {0}")]
    UnmatchedScene(String),

    #[error("duplicate record for scene {0}")]
    DuplicateRecord(String),

    #[error("duplicate id {0}")]
    DuplicateId(String),

    #[error("{0} is undefined for this table")]
    Undefined(&'static str),

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("feature set needs at least 2 rows, got {0}")]
    TooFewSamples(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix square root residual {residual:e} exceeds tolerance {tolerance:e}")]
    SqrtResidual { residual: f64, tolerance: f64 },

    #[error("expected {expected} columns, got {found}")]
    ColumnCount { expected: usize, found: usize },

    #[error("similarity service failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("malformed similarity response: {0}")]
    MalformedResponse(String),

    #[error("similarity scores tied at {0}")]
    Tie(f64),

    #[error("no prompt produced a usable estimate")]
    NoIncludedPrompts,

    #[error("{0}")]
    Image(String),

    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }
}
