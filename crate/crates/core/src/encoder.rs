//! Superposition encoding and space-time reshaping.
//!
//! Reshape convention (shared with the post-channel codebook): the length-`D/2`
//! vector `s` fills the `N_t x M_c` block column by column, so
//! `S[a, t] = s[t * N_t + a]`. Time slot `t` carries `s[t*N_t .. (t+1)*N_t]`
//! across the transmit antennas, and `vec(S) == s`.

use crate::codebook::Codebook;
use crate::crc::CRC11;
use crate::error::{Error, Result};
use crate::types::{bits_to_index, push_index_bits, BitString, Complex64, ComplexMat, ComplexVec};

/// How a packet's bits map onto the `V` codebook sections.
///
/// The frame is `info ++ crc`, split left to right into `V` segments of
/// `m = log2(M)` bits each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketLayout {
    pub info_bits: usize,
    pub crc_bits: usize,
    pub sections: usize,
    pub bits_per_section: usize,
}

impl PacketLayout {
    /// Layout carrying `V * log2(M) - 11` information bits.
    pub fn new(sections: usize, alphabet: usize) -> Result<Self> {
        if sections == 0 || !alphabet.is_power_of_two() || alphabet < 2 {
            return Err(Error::Config(format!("invalid layout V={sections}, M={alphabet}")));
        }
        let m = alphabet.trailing_zeros() as usize;
        let total = sections * m;
        let crc_bits = CRC11.degree();
        if total <= crc_bits {
            return Err(Error::Config(format!("V*log2(M) = {total} leaves no room for information bits beside the {crc_bits}-bit CRC")));
        }
        Ok(Self { info_bits: total - crc_bits, crc_bits, sections, bits_per_section: m })
    }

    /// Layout without a CRC: all `V * log2(M)` bits carry information.
    pub fn uncoded(sections: usize, alphabet: usize) -> Result<Self> {
        if sections == 0 || !alphabet.is_power_of_two() || alphabet < 2 {
            return Err(Error::Config(format!("invalid layout V={sections}, M={alphabet}")));
        }
        let m = alphabet.trailing_zeros() as usize;
        Ok(Self { info_bits: sections * m, crc_bits: 0, sections, bits_per_section: m })
    }

    pub fn for_codebook(cb: &Codebook) -> Result<Self> {
        Self::new(cb.sections(), cb.alphabet())
    }

    pub fn frame_bits(&self) -> usize {
        self.sections * self.bits_per_section
    }

    pub fn alphabet(&self) -> usize {
        1 << self.bits_per_section
    }

    /// Section indices of a full frame (info ++ crc).
    pub fn frame_to_indices(&self, frame: &[u8]) -> Result<Vec<usize>> {
        if frame.len() != self.frame_bits() {
            return Err(Error::Dimension(format!("frame has {} bits, layout needs {}", frame.len(), self.frame_bits())));
        }
        frame.chunks(self.bits_per_section).map(bits_to_index).collect()
    }

    /// Frame bits for section indices given in transmit order.
    pub fn indices_to_frame(&self, indices: &[usize]) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.frame_bits());
        for &i in indices {
            push_index_bits(&mut out, i, self.bits_per_section);
        }
        out
    }
}

/// Encoder output: chosen section indices and the superimposed vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub indices: Vec<usize>,
    pub signal: ComplexVec,
}

/// CRC-append `msg` (unless the layout has no CRC), segment it, and superimpose one codeword per section.
pub fn encode(msg: &BitString, cb: &Codebook, layout: &PacketLayout) -> Result<Encoded> {
    if layout.sections != cb.sections() || layout.alphabet() != cb.alphabet() {
        return Err(Error::Dimension(format!(
            "layout (V={}, M={}) does not match codebook (V={}, M={})",
            layout.sections,
            layout.alphabet(),
            cb.sections(),
            cb.alphabet()
        )));
    }
    if msg.len() != layout.info_bits {
        return Err(Error::Dimension(format!("message has {} bits, layout carries {}", msg.len(), layout.info_bits)));
    }
    let indices =
        if layout.crc_bits == 0 { layout.frame_to_indices(msg.as_slice())? } else { layout.frame_to_indices(CRC11.append(msg).as_slice())? };
    let signal = superimpose(cb, &indices);
    Ok(Encoded { indices, signal })
}

/// `sum_v C[v, :, indices[v]]`.
pub fn superimpose(cb: &Codebook, indices: &[usize]) -> ComplexVec {
    let mut s = ComplexVec::zeros(cb.complex_len());
    for (v, &m) in indices.iter().enumerate() {
        for (acc, w) in s.iter_mut().zip(cb.word(v, m)) {
            *acc += w;
        }
    }
    s
}

/// `N_t x M_c` transmit block from a length `N_t * M_c` vector.
pub fn reshape_space_time(s: &[Complex64], nt: usize, mc: usize) -> Result<ComplexMat> {
    if nt == 0 || nt * mc != s.len() {
        return Err(Error::Dimension(format!("cannot reshape {} symbols into {nt} x {mc}", s.len())));
    }
    Ok(ComplexMat::from_column_slice(nt, mc, s))
}

/// Inverse of [`reshape_space_time`].
pub fn vectorize(block: &ComplexMat) -> ComplexVec {
    ComplexVec::from_column_slice(block.as_slice())
}

/// `vec(H * Reshape(s))` written into `out` without materializing the block.
///
/// `h` is `N_r x N_t`; `out` has length `N_r * M_c`.
pub(crate) fn channel_apply_vectorized(h: &ComplexMat, s: &[Complex64], out: &mut [Complex64]) {
    let (nr, nt) = h.shape();
    let mc = s.len() / nt;
    debug_assert_eq!(out.len(), nr * mc);
    let hs = h.as_slice();
    for t in 0..mc {
        let col = &s[t * nt..(t + 1) * nt];
        let dst = &mut out[t * nr..(t + 1) * nr];
        dst.fill(Complex64::new(0.0, 0.0));
        for (a, x) in col.iter().enumerate() {
            let hcol = &hs[a * nr..(a + 1) * nr];
            for (d, hv) in dst.iter_mut().zip(hcol) {
                *d += hv * x;
            }
        }
    }
}
