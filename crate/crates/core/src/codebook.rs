//! The learned codebook: data model, file format, post-channel transform and
//! inter/intra correlation analysis.
//!
//! File layout (all little-endian):
//!
//! ```text
//! magic   b"NOSC"
//! version u16 (= 1)
//! V       u16
//! M       u32
//! D       u32            real codeword length, even
//! re      f32 x V*(D/2)*M   real parts, (v, d, m) row-major
//! im      f32 x V*(D/2)*M   imaginary parts, same order
//! ```

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::channel::ChannelRealization;
use crate::encoder::channel_apply_vectorized;
use crate::error::{Error, Result};
use crate::receiver::EncoderWeights;
use crate::types::{inner_re, norm_sqr, Complex64, ComplexMat, SeededRng};

pub const CODEBOOK_MAGIC: [u8; 4] = *b"NOSC";
pub const CODEBOOK_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

/// Relative tolerance of the per-codeword energy invariant.
pub const ENERGY_REL_TOL: f64 = 1e-5;

/// Read access to a table of `V x M` complex codewords of equal length.
pub trait Codewords: Sync {
    fn sections(&self) -> usize;
    fn alphabet(&self) -> usize;
    fn word_len(&self) -> usize;
    fn word(&self, v: usize, m: usize) -> &[Complex64];
}

/// Complex codebook `C` of shape `(V, D/2, M)`; `C[v, :, m]` has energy `D / (2V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    sections: usize,
    real_len: usize,
    alphabet: usize,
    // (v, m, d) so each codeword is contiguous
    words: Vec<Complex64>,
}

impl Codebook {
    /// Builds a codebook from `f(v, m) -> codeword` and checks every invariant.
    pub fn from_fn(sections: usize, real_len: usize, alphabet: usize, mut f: impl FnMut(usize, usize) -> Vec<Complex64>) -> Result<Self> {
        check_dims(sections, real_len, alphabet)?;
        let half = real_len / 2;
        let mut words = Vec::with_capacity(sections * alphabet * half);
        for v in 0..sections {
            for m in 0..alphabet {
                let w = f(v, m);
                if w.len() != half {
                    return Err(Error::ShapeMismatch(format!("codeword ({v}, {m}) has length {}, expected {half}", w.len())));
                }
                words.extend(w);
            }
        }
        let cb = Self { sections, real_len, alphabet, words };
        cb.check_energy()?;
        Ok(cb)
    }

    /// Random Gaussian codebook normalized to the required per-codeword energy.
    pub fn random_gaussian(sections: usize, real_len: usize, alphabet: usize, rng: &mut SeededRng) -> Result<Self> {
        check_dims(sections, real_len, alphabet)?;
        let target = target_energy(sections, real_len);
        Self::from_fn(sections, real_len, alphabet, |_, _| {
            let w: Vec<Complex64> = (0..real_len / 2).map(|_| rng.complex_normal(1.0)).collect();
            normalize(w, target)
        })
    }

    /// Scaled canonical basis vectors, one per `(v, m)`; needs `V * M <= D / 2`.
    pub fn orthogonal(sections: usize, real_len: usize, alphabet: usize) -> Result<Self> {
        check_dims(sections, real_len, alphabet)?;
        let half = real_len / 2;
        if sections * alphabet > half {
            return Err(Error::Dimension(format!("{} codewords cannot be orthogonal in {half} dimensions", sections * alphabet)));
        }
        let amp = target_energy(sections, real_len).sqrt();
        Self::from_fn(sections, real_len, alphabet, |v, m| {
            let mut w = vec![Complex64::new(0.0, 0.0); half];
            w[v * alphabet + m] = Complex64::new(amp, 0.0);
            w
        })
    }

    pub fn sections(&self) -> usize {
        self.sections
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// Real codeword length `D`.
    pub fn real_len(&self) -> usize {
        self.real_len
    }

    /// Complex codeword length `D / 2`.
    pub fn complex_len(&self) -> usize {
        self.real_len / 2
    }

    /// Per-codeword energy `D / (2V)`.
    pub fn energy(&self) -> f64 {
        target_energy(self.sections, self.real_len)
    }

    pub fn word(&self, v: usize, m: usize) -> &[Complex64] {
        let half = self.complex_len();
        let start = (v * self.alphabet + m) * half;
        &self.words[start..start + half]
    }

    fn check_energy(&self) -> Result<()> {
        let expected = self.energy();
        for v in 0..self.sections {
            for m in 0..self.alphabet {
                let energy = norm_sqr(self.word(v, m));
                if !((energy - expected).abs() / expected < ENERGY_REL_TOL) {
                    return Err(Error::EnergyInvariant { v, m, energy, expected });
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.words.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
        out.extend_from_slice(&CODEBOOK_MAGIC);
        out.extend_from_slice(&CODEBOOK_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections as u16).to_le_bytes());
        out.extend_from_slice(&(self.alphabet as u32).to_le_bytes());
        out.extend_from_slice(&(self.real_len as u32).to_le_bytes());
        for part in [|c: &Complex64| c.re, |c: &Complex64| c.im] {
            for v in 0..self.sections {
                for d in 0..self.complex_len() {
                    for m in 0..self.alphabet {
                        out.extend_from_slice(&(part(&self.word(v, m)[d]) as f32).to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::ShapeMismatch(format!("{} bytes cannot hold a header", bytes.len())));
        }
        let found: [u8; 4] = bytes[..4].try_into().unwrap();
        if found != CODEBOOK_MAGIC {
            return Err(Error::BadMagic { expected: CODEBOOK_MAGIC, found });
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::ShapeMismatch(format!("header truncated at {} bytes", bytes.len())));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CODEBOOK_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let sections = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        let alphabet = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let real_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        check_dims(sections, real_len, alphabet).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let half = real_len / 2;
        let n = sections * half * alphabet;
        let expected = HEADER_LEN + 8 * n;
        if bytes.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "header declares V={sections}, M={alphabet}, D={real_len} ({expected} bytes) but file has {} bytes",
                bytes.len()
            )));
        }
        let floats: Vec<f64> = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        let (re, im) = floats.split_at(n);
        Self::from_fn(sections, real_len, alphabet, |v, m| {
            (0..half)
                .map(|d| {
                    let k = (v * half + d) * alphabet + m;
                    Complex64::new(re[k], im[k])
                })
                .collect()
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Same codebook rounded to single precision, i.e. what a save/load round trip yields.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = Complex64::new(w.re as f32 as f64, w.im as f32 as f64);
        }
        out
    }
}

impl Codewords for Codebook {
    fn sections(&self) -> usize {
        self.sections
    }
    fn alphabet(&self) -> usize {
        self.alphabet
    }
    fn word_len(&self) -> usize {
        self.complex_len()
    }
    fn word(&self, v: usize, m: usize) -> &[Complex64] {
        Codebook::word(self, v, m)
    }
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    Codebook::load(path)
}

pub fn save_codebook(cb: &Codebook, path: impl AsRef<Path>) -> Result<()> {
    cb.save(path)
}

fn check_dims(sections: usize, real_len: usize, alphabet: usize) -> Result<()> {
    if sections == 0 || sections > u16::MAX as usize {
        return Err(Error::Dimension(format!("V={sections} out of range")));
    }
    if real_len == 0 || !real_len.is_multiple_of(2) {
        return Err(Error::Dimension(format!("D={real_len} must be positive and even")));
    }
    if !alphabet.is_power_of_two() {
        return Err(Error::Dimension(format!("M={alphabet} must be a power of two")));
    }
    Ok(())
}

fn target_energy(sections: usize, real_len: usize) -> f64 {
    real_len as f64 / (2.0 * sections as f64)
}

fn normalize(mut w: Vec<Complex64>, energy: f64) -> Vec<Complex64> {
    let scale = (energy / norm_sqr(&w)).sqrt();
    w.iter_mut().for_each(|x| *x *= scale);
    w
}

/// Packs a real vector of length `D` into `D / 2` complex values: the first
/// half are the real parts, the second half the imaginary parts.
pub fn complex_pack(real: &[f64]) -> Vec<Complex64> {
    let half = real.len() / 2;
    (0..half).map(|k| Complex64::new(real[k], real[half + k])).collect()
}

/// Enumerates `C[v, :, m] = Complex(Enc_v(onehot(m)))`.
pub fn enumerate_codebook(enc: &EncoderWeights, sections: usize, real_len: usize, alphabet: usize) -> Result<Codebook> {
    if enc.nets.len() != sections {
        return Err(Error::Dimension(format!("{} encoder networks for V={sections}", enc.nets.len())));
    }
    for (v, net) in enc.nets.iter().enumerate() {
        if net.in_dim() != alphabet || net.out_dim() != real_len {
            return Err(Error::Dimension(format!("encoder {v} maps {} -> {}, expected {alphabet} -> {real_len}", net.in_dim(), net.out_dim())));
        }
    }
    let mut onehot = vec![0.0; alphabet];
    Codebook::from_fn(sections, real_len, alphabet, |v, m| {
        onehot.iter_mut().for_each(|x| *x = 0.0);
        onehot[m] = 1.0;
        complex_pack(&enc.nets[v].forward(&onehot))
    })
}

/// Codebook seen through one channel realization: `C_H[v, :, m] = vec(H Reshape(C[v, :, m]))`.
#[derive(Debug, Clone)]
pub struct PostChannelCodebook {
    sections: usize,
    alphabet: usize,
    word_len: usize,
    nt: usize,
    mc: usize,
    h: ComplexMat,
    // (v, m, k) with k over the N_r * M_c received samples
    words: Vec<Complex64>,
}

impl PostChannelCodebook {
    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nr(&self) -> usize {
        self.h.nrows()
    }

    pub fn mc(&self) -> usize {
        self.mc
    }

    pub fn channel(&self) -> &ComplexMat {
        &self.h
    }

    pub fn sections(&self) -> usize {
        self.sections
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// `N_r * M_c`.
    pub fn word_len(&self) -> usize {
        self.word_len
    }

    #[inline]
    pub fn word(&self, v: usize, m: usize) -> &[Complex64] {
        let start = (v * self.alphabet + m) * self.word_len;
        &self.words[start..start + self.word_len]
    }

    /// All `M` codewords of section `v`, back to back.
    #[inline]
    pub fn section(&self, v: usize) -> &[Complex64] {
        let n = self.alphabet * self.word_len;
        &self.words[v * n..(v + 1) * n]
    }
}

impl Codewords for PostChannelCodebook {
    fn sections(&self) -> usize {
        self.sections
    }
    fn alphabet(&self) -> usize {
        self.alphabet
    }
    fn word_len(&self) -> usize {
        self.word_len
    }
    fn word(&self, v: usize, m: usize) -> &[Complex64] {
        PostChannelCodebook::word(self, v, m)
    }
}

pub fn apply_channel_to_codebook(cb: &Codebook, channel: &ChannelRealization, nt: usize, mc: usize) -> Result<PostChannelCodebook> {
    let h = channel.matrix();
    if nt * mc != cb.complex_len() {
        return Err(Error::Dimension(format!("N_t * M_c = {} but D/2 = {}", nt * mc, cb.complex_len())));
    }
    if h.ncols() != nt {
        return Err(Error::Dimension(format!("channel has {} columns, N_t = {nt}", h.ncols())));
    }
    let nr = h.nrows();
    let word_len = nr * mc;
    let mut words = vec![Complex64::new(0.0, 0.0); cb.sections() * cb.alphabet() * word_len];
    for (k, out) in words.chunks_exact_mut(word_len).enumerate() {
        let (v, m) = (k / cb.alphabet(), k % cb.alphabet());
        channel_apply_vectorized(h, cb.word(v, m), out);
    }
    Ok(PostChannelCodebook { sections: cb.sections(), alphabet: cb.alphabet(), word_len, nt, mc, h: h.clone(), words })
}

/// 0.5 dB bins over [-40, +5] dB; out-of-range entries clamp to the end bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbHistogram {
    pub counts: Vec<u64>,
}

impl DbHistogram {
    pub const LOW_DB: f64 = -40.0;
    pub const HIGH_DB: f64 = 5.0;
    pub const BIN_DB: f64 = 0.5;
    pub const BINS: usize = 90;

    pub fn new() -> Self {
        Self { counts: vec![0; Self::BINS] }
    }

    /// Adds `weight` samples of linear value `x` (zero and negatives land in the lowest bin).
    pub fn add(&mut self, x: f64, weight: u64) {
        let db = 10.0 * x.log10();
        let bin = if db.is_nan() || db < Self::LOW_DB { 0 } else { (((db - Self::LOW_DB) / Self::BIN_DB).floor() as usize).min(Self::BINS - 1) };
        self.counts[bin] += weight;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_edges(bin: usize) -> (f64, f64) {
        let lo = Self::LOW_DB + bin as f64 * Self::BIN_DB;
        (lo, lo + Self::BIN_DB)
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// CSV with columns `bin_low_db,bin_high_db,count`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "bin_low_db,bin_high_db,count")?;
        for (bin, count) in self.counts.iter().enumerate() {
            let (lo, hi) = Self::bin_edges(bin);
            writeln!(w, "{lo},{hi},{count}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }
}

impl Default for DbHistogram {
    fn default() -> Self {
        Self::new()
    }
}

/// Count, maximum and dB histogram of a set of normalized correlation entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrSummary {
    pub count: u64,
    /// Largest entry (linear); `None` when empty.
    pub max: Option<f64>,
    pub histogram: DbHistogram,
}

impl CorrSummary {
    fn new() -> Self {
        Self { count: 0, max: None, histogram: DbHistogram::new() }
    }

    fn add(&mut self, x: f64, weight: u64) {
        self.count += weight;
        self.max = Some(self.max.map_or(x, |m| m.max(x)));
        self.histogram.add(x, weight);
    }

    fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.max = match (self.max, other.max) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.histogram.merge(&other.histogram);
    }

    pub fn max_db(&self) -> Option<f64> {
        self.max.map(|m| 10.0 * m.log10())
    }
}

/// Inter-correlation `|Re(C'[i,:,k] C[j,:,l])| / norm` over `i != j`, and the
/// positive intra-correlation entries `Re(C'[i,:,k] C[i,:,l]) / norm`, `k != l`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub normalizer: f64,
    pub inter: CorrSummary,
    /// Positive intra entries only.
    pub intra: CorrSummary,
    /// Smallest intra entry (possibly negative); `None` when `M < 2`.
    pub intra_min: Option<f64>,
    /// All intra entries, positive or not.
    pub intra_total: u64,
}

impl CorrelationReport {
    fn empty(normalizer: f64) -> Self {
        Self { normalizer, inter: CorrSummary::new(), intra: CorrSummary::new(), intra_min: None, intra_total: 0 }
    }

    /// Folds another report (e.g. from a different channel draw) into this one.
    pub fn merge(&mut self, other: &Self) {
        self.inter.merge(&other.inter);
        self.intra.merge(&other.intra);
        self.intra_min = match (self.intra_min, other.intra_min) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.intra_total += other.intra_total;
    }
}

/// Inter/intra correlation statistics with the given normalizer
/// (`D/2V` before the channel, `N_r D/2V` after).
///
/// `Re(a'b) = Re(b'a)`, so each unordered pair is computed once and counted
/// twice; the counts match the full `(V, V-1, M, M)` and `(V, M, M-1)` tensors.
pub fn correlation_report<C: Codewords + ?Sized>(words: &C, normalizer: f64) -> CorrelationReport {
    let (nv, nm) = (words.sections(), words.alphabet());
    let rows: Vec<CorrelationReport> = (0..nv)
        .into_par_iter()
        .map(|i| {
            let mut rep = CorrelationReport::empty(normalizer);
            for k in 0..nm {
                let a = words.word(i, k);
                for j in (i + 1)..nv {
                    for l in 0..nm {
                        let x = inner_re(a, words.word(j, l)).abs() / normalizer;
                        rep.inter.add(x, 2);
                    }
                }
                for l in (k + 1)..nm {
                    let x = inner_re(a, words.word(i, l)) / normalizer;
                    rep.intra_total += 2;
                    rep.intra_min = Some(rep.intra_min.map_or(x, |m: f64| m.min(x)));
                    if x > 0.0 {
                        rep.intra.add(x, 2);
                    }
                }
            }
            rep
        })
        .collect();
    let mut out = CorrelationReport::empty(normalizer);
    for r in &rows {
        out.merge(r);
    }
    out
}

/// Pre-channel report with the `D / 2V` normalizer.
pub fn pre_channel_report(cb: &Codebook) -> CorrelationReport {
    correlation_report(cb, cb.energy())
}

fn draw_channels(n: usize, nr: usize, nt: usize, rng: &mut SeededRng) -> Vec<ChannelRealization> {
    (0..n).map(|_| ChannelRealization::draw(nr, nt, rng)).collect()
}

/// Post-channel report aggregated over `n_channels` independent `N_r x N_t`
/// Rayleigh draws, normalized by the expected received energy `N_r D / 2V`.
pub fn empirical_post_channel_report(cb: &Codebook, n_channels: usize, nt: usize, nr: usize, rng: &mut SeededRng) -> Result<CorrelationReport> {
    if n_channels == 0 {
        return Err(Error::Config("at least one channel draw is required".into()));
    }
    if nt == 0 || !cb.complex_len().is_multiple_of(nt) {
        return Err(Error::Dimension(format!("N_t={nt} does not divide D/2={}", cb.complex_len())));
    }
    let mc = cb.complex_len() / nt;
    let normalizer = nr as f64 * cb.energy();
    let channels = draw_channels(n_channels, nr, nt, rng);
    post_channel_report_for(cb, &channels, mc, normalizer)
}

/// Post-channel report over the given channel realizations.
pub fn post_channel_report_for(cb: &Codebook, channels: &[ChannelRealization], mc: usize, normalizer: f64) -> Result<CorrelationReport> {
    let reports = channels
        .par_iter()
        .map(|ch| {
            let pccb = apply_channel_to_codebook(cb, ch, ch.nt(), mc)?;
            Ok(correlation_report(&pccb, normalizer))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = CorrelationReport::empty(normalizer);
    for r in &reports {
        out.merge(r);
    }
    Ok(out)
}

/// Mean of `||C_H[v, :, m]||^2` over all codewords and `n_channels` draws.
pub fn mean_post_channel_energy(cb: &Codebook, n_channels: usize, nt: usize, nr: usize, rng: &mut SeededRng) -> Result<f64> {
    if n_channels == 0 || nt == 0 || !cb.complex_len().is_multiple_of(nt) {
        return Err(Error::Config(format!("invalid arguments n_channels={n_channels}, N_t={nt}")));
    }
    let mc = cb.complex_len() / nt;
    let channels = draw_channels(n_channels, nr, nt, rng);
    let mut total = 0.0;
    for ch in &channels {
        let pccb = apply_channel_to_codebook(cb, ch, nt, mc)?;
        total += pccb.words.iter().map(|c| c.norm_sqr()).sum::<f64>();
    }
    Ok(total / (n_channels * cb.sections() * cb.alphabet()) as f64)
}
