use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("cannot pair: cloud has {0} point(s)")]
    CannotPair(usize),
    #[error("degenerate pair: coincident points")]
    DegeneratePair,
    #[error("no valid votes: every candidate fell outside the grid")]
    NoValidVotes,
    #[error("no inlier pairs within epsilon of the voted center")]
    NoInlierPairs,
    #[error("empty pair pool")]
    EmptyPool,
    #[error("empty mesh")]
    EmptyMesh,
    #[error("prediction missing for pair ({0}, {1})")]
    PredictionMissing(usize, usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },
    #[error("predictor returned {got} statistics for {expected} pairs")]
    PredictorLength { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }
}
