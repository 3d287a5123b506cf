use std::path::PathBuf;

/// Errors produced by the inpainting library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid gap interval [{start}, {end}] for a frame of {n} samples")]
    InvalidInterval { n: usize, start: usize, end: usize },

    #[error("shape mismatch: expected {expected} samples, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("signal of {len} samples is shorter than one window of {window}")]
    TooShort { len: usize, window: usize },

    #[error("range error: {0}")]
    Range(String),

    #[error("feature alignment error: {0}")]
    Alignment(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("no candidate placement fits the context of the gap")]
    NoCandidate,

    #[error("sampler diverged at step {step} (sigma = {sigma})")]
    Divergence { step: usize, sigma: f64 },

    #[error("denoiser capability missing: {0}")]
    Capability(&'static str),

    #[error("external denoiser: {0}")]
    Transport(#[from] crate::external::TransportError),

    #[error("wav format error in {chunk}: {message}")]
    Format { chunk: &'static str, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
