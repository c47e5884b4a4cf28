use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bit string must not be empty")]
    EmptyBits,
    #[error("invalid bit value {value} at position {pos}")]
    InvalidBit { pos: usize, value: u8 },
    #[error("variance must be positive and finite, got {0}")]
    NonPositiveVariance(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("frame of {len} bits is too short for an {degree}-bit CRC")]
    FrameTooShort { len: usize, degree: usize },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("codeword (v={v}, m={m}) has energy {energy}, expected {expected}")]
    EnergyInvariant { v: usize, m: usize, energy: f64, expected: f64 },
    #[error("malformed weights: {0}")]
    Weights(String),

    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}
