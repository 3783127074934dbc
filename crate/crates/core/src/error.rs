use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lexicon entry for {word:?}: {detail}")]
    InvalidLexiconEntry { word: String, detail: String },

    #[error("malformed lexicon file: {0}")]
    LexiconFormat(String),

    #[error("empty lexicon")]
    EmptyLexicon,

    #[error("coverage is undefined for an empty token sequence")]
    UndefinedCoverage,

    #[error("invalid window configuration: {0}")]
    InvalidWindow(String),

    #[error("no full window fits in {tokens} tokens (window size {window_size})")]
    EmptySeries { tokens: usize, window_size: usize },

    #[error("window {index} contains no lexicon words")]
    MissingWindow { index: usize },

    #[error("series of length {len} is too short (minimum {min})")]
    TooShort { len: usize, min: usize },

    #[error("sifting needs at least two maxima and two minima")]
    InsufficientExtrema,

    #[error(
        "decomposition failed: mean of summed components {reconstructed_mean} \
         is not within 10% of the series mean {original_mean}"
    )]
    DecompositionFailed {
        original_mean: f64,
        reconstructed_mean: f64,
    },

    #[error("period is undefined for an all-zero IMF")]
    UndefinedPeriod,

    #[error("rescaling is undefined: first target IMF has zero variance")]
    RescalingUndefined,

    #[error("variance of an empty series")]
    EmptyVariance,

    #[error("null ensemble failed: {succeeded} of {requested} realizations succeeded, {required} required")]
    NullFailed {
        succeeded: usize,
        requested: usize,
        required: usize,
    },

    #[error("IMF order {order} out of range 1..={max}")]
    OrderOutOfRange { order: usize, max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input data: {0}")]
    InvalidData(String),

    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
