use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wav error on {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("empty manifest")]
    EmptyManifest,
    #[error("{path}:{line}: malformed record: {msg}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),
    #[error("invalid audio: {0}")]
    InvalidAudio(String),
    #[error("sample rate mismatch: expected {expected} Hz, got {got} Hz")]
    RateMismatch { expected: u32, got: u32 },
    #[error("need at least 2 distinct speakers, found {0}")]
    TooFewSpeakers(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown phone `{0}`")]
    UnknownPhone(String),
    #[error("zero-energy signal: {0}")]
    ZeroEnergy(&'static str),
    #[error("empty pool: {0}")]
    EmptyPool(&'static str),
    #[error("signal of {len} samples is shorter than one frame ({window} samples)")]
    TooShort { len: usize, window: usize },
    #[error("too few utterances: need {need}, got {got}")]
    TooFewUtterances { need: usize, got: usize },
    #[error("degenerate statistics: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged {
        epoch: usize,
        step: usize,
        loss: f64,
    },
    #[error("unsupported format version {got} (expected {expected})")]
    Version { got: u32, expected: u32 },
    #[error("corrupted file: {0}")]
    Corrupt(String),
    #[error("extractor fingerprint mismatch: model {model}, embedding {embedding}")]
    FingerprintMismatch { model: String, embedding: String },
    #[error("incompatible stage chain: {0}")]
    Incompatible(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("empty reference transcript")]
    EmptyReference,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn wav(path: impl Into<PathBuf>, source: hound::Error) -> Self {
        Error::Wav {
            path: path.into(),
            source,
        }
    }
}
