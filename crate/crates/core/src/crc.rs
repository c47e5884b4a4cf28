//! CRC-11 with generator x^11 + x^10 + x^9 + x^5 + 1.
//!
//! Bit-serial, MSB first, zero initial register, no reflection and no output
//! inversion. Frames here are 24 to 75 bits long, so a table buys nothing.

use crate::error::{Error, Result};
use crate::types::BitString;

/// Parameters of a non-reflected, zero-init CRC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrcSpec {
    degree: usize,
    /// Generator coefficients below the leading term, bit `k` = coefficient of x^k.
    poly: u32,
}

/// x^11 + x^10 + x^9 + x^5 + 1.
pub const CRC11: CrcSpec = CrcSpec { degree: 11, poly: 0b110_0010_0001 };

impl Default for CrcSpec {
    fn default() -> Self {
        CRC11
    }
}

impl CrcSpec {
    /// `poly` holds the low coefficients (the x^degree term is implicit).
    pub fn new(degree: usize, poly: u32) -> Result<Self> {
        if degree == 0 || degree > 31 {
            return Err(Error::Config(format!("CRC degree {degree} out of range")));
        }
        if poly & 1 == 0 || poly >> degree != 0 {
            return Err(Error::Config(format!("generator {poly:#x} is not a degree-{degree} polynomial with unit constant term")));
        }
        Ok(Self { degree, poly })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Remainder of `bits(x) * x^degree` modulo the generator.
    pub fn parity(&self, bits: &[u8]) -> u32 {
        let top = 1u32 << (self.degree - 1);
        let mask = (1u32 << self.degree) - 1;
        let mut reg = 0u32;
        for &b in bits {
            let feedback = ((reg & top) != 0) ^ (b & 1 != 0);
            reg = (reg << 1) & mask;
            if feedback {
                reg ^= self.poly;
            }
        }
        reg
    }

    /// Appends the parity bits, MSB first.
    pub fn append(&self, msg: &BitString) -> BitString {
        let parity = self.parity(msg.as_slice());
        let mut out = msg.as_slice().to_vec();
        out.extend((0..self.degree).rev().map(|k| ((parity >> k) & 1) as u8));
        BitString::new(out).expect("parity bits are binary")
    }

    /// True iff the frame (message followed by parity) is a codeword.
    pub fn check(&self, frame: &[u8]) -> Result<bool> {
        if frame.len() <= self.degree {
            return Err(Error::FrameTooShort { len: frame.len(), degree: self.degree });
        }
        let (msg, tail) = frame.split_at(frame.len() - self.degree);
        let parity = self.parity(msg);
        Ok(tail.iter().enumerate().all(|(i, &b)| u32::from(b) == (parity >> (self.degree - 1 - i)) & 1))
    }
}

/// Appends the 11-bit CRC.
pub fn crc_append(msg: &BitString) -> BitString {
    CRC11.append(msg)
}

/// Checks an 11-bit-CRC frame; frames of 11 bits or fewer are rejected.
pub fn crc_check(frame: &BitString) -> Result<bool> {
    CRC11.check(frame.as_slice())
}
