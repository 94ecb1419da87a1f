use std::fmt;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage a failure originated in. Used by the harness to tag
/// diagnostics and pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Logging,
    Simulation,
    Training,
    Fusion,
    Evaluation,
    Artifacts,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Logging => 3,
            Stage::Simulation => 4,
            Stage::Training => 5,
            Stage::Fusion => 6,
            Stage::Evaluation => 7,
            Stage::Artifacts => 8,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Logging => "logging",
            Stage::Simulation => "simulation",
            Stage::Training => "training",
            Stage::Fusion => "fusion",
            Stage::Evaluation => "evaluation",
            Stage::Artifacts => "artifacts",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite loss for objective `{objective}` at batch index {index}")]
    NonFiniteLoss { objective: String, index: usize },

    #[error("fitness returned non-finite score {score} for weights {weights:?}")]
    NonFiniteFitness { weights: Vec<f64>, score: f64 },

    #[error(
        "transition rewards do not match configured objectives: expected {expected:?}, got {got:?}"
    )]
    ObjectiveMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },

    #[error("replay buffer not ready: {size} entries, need {required}")]
    NotReady { size: usize, required: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("AUC undefined: labels contain a single class")]
    SingleClass,

    #[error("episode already terminated")]
    EpisodeOver,

    #[error("exhaustive enumeration refused: {0}")]
    TooLarge(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),

    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Outermost stage tag, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

/// Tags errors with the pipeline stage they came from.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| match e {
            tagged @ Error::Stage { .. } => tagged,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        })
    }
}
