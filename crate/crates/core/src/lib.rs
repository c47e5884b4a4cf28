//! Learned near-orthogonal superposition (NOS) coding over block-fading MIMO
//! channels: codebooks, encoding, the looped K-best decoder, the neural
//! receiver and a polar-coded baseline, plus the Monte-Carlo harness.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod channel;
pub mod codebook;
pub mod crc;
pub mod encoder;
pub mod error;
pub mod kbest;
pub mod nn;
pub mod polar;
pub mod receiver;
pub mod sim;
pub mod types;

pub use artifacts::{validate_artifacts, ArtifactReport};
pub use channel::{transmit, ChannelRealization, SnrPoint};
pub use codebook::{Codebook, PostChannelCodebook};
pub use crc::{crc_append, crc_check, CrcSpec, CRC11};
pub use encoder::{encode, PacketLayout};
pub use error::{Error, Result};
pub use kbest::{kbest_decode, DecodeConfig, DecodeResult, Sorting};
pub use sim::{SimConfig, SimResult, Simulation};
pub use types::{BitString, Complex64, ComplexMat, ComplexVec, SeededRng};
