use poisson_vga::VgaError;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] VgaError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

impl CliError {
    /// Library errors raised while assembling the problem are config errors.
    pub fn from_setup(e: VgaError) -> Self {
        match e {
            VgaError::InvalidConfig(_)
            | VgaError::UnknownProblem(_)
            | VgaError::InvalidAlpha(_)
            | VgaError::InvalidMask(_)
            | VgaError::DimensionMismatch { .. }
            | VgaError::RankTooLarge { .. } => Self::Config(e.to_string()),
            other => Self::Solver(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Solver(_) | Self::Output { .. } => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Config(_) => "config",
            Self::Solver(_) => "solver",
            Self::Output { .. } => "output",
        }
    }

    /// One line of JSON for stderr.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorReport {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        })
        .expect("error report serializes")
    }
}
