use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("disregarded rate: dropout rate {0} exceeds 0.40")]
    DisregardedRate(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },
    #[error("vehicle lost: {0}")]
    Lost(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    /// Short category name, used for CLI exit diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::DisregardedRate(_) => "disregarded-rate",
            Error::Config(_) => "config",
            Error::Domain(_) => "domain",
            Error::Fit(_) => "fit",
            Error::TrainingDiverged { .. } => "training-diverged",
            Error::Lost(_) => "lost",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Degenerate(_) => "degenerate",
            Error::Input(_) => "input",
            Error::Precondition(_) => "precondition",
        }
    }
}
