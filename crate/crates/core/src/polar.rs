//! Polar-coded QPSK baseline: exact ML MIMO soft detection followed by
//! CRC-aided successive-cancellation list decoding.
//!
//! The transform is `x = u F^{(x)n}` with `F = [[1, 0], [1, 1]]` and no bit
//! reversal, i.e. `x = [enc(u_lo) ^ enc(u_hi), enc(u_hi)]`. Information
//! positions are chosen by polarization weight. Codes shorter than the mother
//! length drop the trailing codeword positions and freeze the matching
//! inputs, which makes the dropped bits identically zero.
//!
//! LLRs are `ln P(bit = 0) / P(bit = 1)`.

use crate::channel::{transmit, ChannelRealization, SnrPoint};
use crate::crc::{CrcSpec, CRC11};
use crate::encoder::reshape_space_time;
use crate::error::{Error, Result};
use crate::types::{BitString, Complex64, ComplexMat, SeededRng};

/// Magnitude standing in for a certain bit (shortened or noiseless positions).
pub const LLR_CLAMP: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct PolarSpec {
    pub n_info: usize,
    pub n_crc: usize,
    pub mother_n: usize,
    pub n_coded: usize,
    pub list_size: usize,
    /// Positions carrying frame bits, ascending.
    pub info_positions: Vec<usize>,
    frozen: Vec<bool>,
}

/// `sum_j b_j 2^(j/4)` over the binary digits of `i`.
pub fn polarization_weight(i: usize) -> f64 {
    let beta = 2f64.powf(0.25);
    (0..usize::BITS).filter(|j| (i >> j) & 1 == 1).map(|j| beta.powi(j as i32)).sum()
}

impl PolarSpec {
    /// Mother length is the smallest power of two holding `n_coded`.
    pub fn new(n_info: usize, n_crc: usize, n_coded: usize, list_size: usize) -> Result<Self> {
        Self::with_mother(n_info, n_crc, n_coded.next_power_of_two(), n_coded, list_size)
    }

    pub fn with_mother(n_info: usize, n_crc: usize, mother_n: usize, n_coded: usize, list_size: usize) -> Result<Self> {
        if !mother_n.is_power_of_two() || mother_n < 2 {
            return Err(Error::Config(format!("mother length {mother_n} is not a power of two >= 2")));
        }
        if n_coded > mother_n || n_coded == 0 {
            return Err(Error::Config(format!("{n_coded} coded bits do not fit mother length {mother_n}")));
        }
        let k = n_info + n_crc;
        if k == 0 || k > n_coded {
            return Err(Error::Config(format!("{k} frame bits cannot be carried by {n_coded} coded bits")));
        }
        if n_crc != 0 && n_crc != CRC11.degree() {
            return Err(Error::Config(format!("only 0 or {} CRC bits are supported", CRC11.degree())));
        }
        if list_size == 0 {
            return Err(Error::Config("list size must be at least 1".into()));
        }
        let mut candidates: Vec<usize> = (0..n_coded).collect();
        candidates.sort_by(|&a, &b| polarization_weight(b).total_cmp(&polarization_weight(a)).then(b.cmp(&a)));
        let mut info_positions = candidates[..k].to_vec();
        info_positions.sort_unstable();
        let mut frozen = vec![true; mother_n];
        for &i in &info_positions {
            frozen[i] = false;
        }
        Ok(Self { n_info, n_crc, mother_n, n_coded, list_size, info_positions, frozen })
    }

    pub fn frame_len(&self) -> usize {
        self.n_info + self.n_crc
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    fn crc(&self) -> Option<CrcSpec> {
        (self.n_crc > 0).then_some(CRC11)
    }
}

/// In-place `x <- x F^{(x)n}`.
fn transform(x: &mut [u8]) {
    let n = x.len();
    let mut half = 1;
    while half < n {
        for block in x.chunks_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter()) {
                *a ^= b;
            }
        }
        half *= 2;
    }
}

/// Places `frame` on the information positions, transforms and shortens.
pub fn polar_encode(frame: &[u8], spec: &PolarSpec) -> Result<Vec<u8>> {
    if frame.len() != spec.frame_len() {
        return Err(Error::Dimension(format!("frame has {} bits, code carries {}", frame.len(), spec.frame_len())));
    }
    let mut u = vec![0u8; spec.mother_n];
    for (&pos, &b) in spec.info_positions.iter().zip(frame) {
        u[pos] = b & 1;
    }
    transform(&mut u);
    u.truncate(spec.n_coded);
    Ok(u)
}

/// `2 atanh(tanh(a/2) tanh(b/2))`, evaluated without overflow.
fn boxplus(a: f64, b: f64) -> f64 {
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    sign * a.abs().min(b.abs()) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

/// `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn decoder_input(llrs: &[f64], spec: &PolarSpec) -> Result<Vec<f64>> {
    if llrs.len() != spec.n_coded {
        return Err(Error::Dimension(format!("{} LLRs for {} coded bits", llrs.len(), spec.n_coded)));
    }
    let mut full: Vec<f64> = llrs.iter().map(|l| if l.is_nan() { 0.0 } else { l.clamp(-LLR_CLAMP, LLR_CLAMP) }).collect();
    full.resize(spec.mother_n, LLR_CLAMP);
    Ok(full)
}

fn extract_frame(u: &[u8], spec: &PolarSpec) -> Vec<u8> {
    spec.info_positions.iter().map(|&i| u[i]).collect()
}

/// Plain successive cancellation; returns the frame bits.
pub fn sc_decode(llrs: &[f64], spec: &PolarSpec) -> Result<Vec<u8>> {
    fn rec(l: &[f64], offset: usize, spec: &PolarSpec, u: &mut [u8]) -> Vec<u8> {
        let n = l.len();
        if n == 1 {
            let bit = if spec.is_frozen(offset) || l[0] >= 0.0 { 0 } else { 1 };
            u[offset] = bit;
            return vec![bit];
        }
        let h = n / 2;
        let (la, lb) = l.split_at(h);
        let left: Vec<f64> = la.iter().zip(lb).map(|(&a, &b)| boxplus(a, b)).collect();
        let a = rec(&left, offset, spec, u);
        let right: Vec<f64> = la.iter().zip(lb).zip(&a).map(|((&x, &y), &bit)| y + if bit == 0 { x } else { -x }).collect();
        let b = rec(&right, offset + h, spec, u);
        a.iter().zip(&b).map(|(p, q)| p ^ q).chain(b.iter().copied()).collect()
    }
    let full = decoder_input(llrs, spec)?;
    let mut u = vec![0u8; spec.mother_n];
    rec(&full, 0, spec, &mut u);
    Ok(extract_frame(&u, spec))
}

/// A decoded list entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ListPath {
    pub frame: Vec<u8>,
    pub metric: f64,
}

struct ListOut {
    betas: Vec<Vec<u8>>,
    us: Vec<Vec<u8>>,
    metrics: Vec<f64>,
    /// Input path each output path descends from.
    ancestry: Vec<usize>,
}

fn list_rec(llrs: &[Vec<f64>], metrics: &[f64], offset: usize, spec: &PolarSpec) -> ListOut {
    let n = llrs[0].len();
    if n == 1 {
        if spec.is_frozen(offset) {
            return ListOut {
                betas: vec![vec![0]; llrs.len()],
                us: vec![vec![0]; llrs.len()],
                metrics: llrs.iter().zip(metrics).map(|(l, m)| m + softplus(-l[0])).collect(),
                ancestry: (0..llrs.len()).collect(),
            };
        }
        let mut forks: Vec<(f64, usize, u8)> = Vec::with_capacity(2 * llrs.len());
        for (p, (l, m)) in llrs.iter().zip(metrics).enumerate() {
            forks.push((m + softplus(-l[0]), p, 0));
            forks.push((m + softplus(l[0]), p, 1));
        }
        forks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        forks.truncate(spec.list_size);
        return ListOut {
            betas: forks.iter().map(|f| vec![f.2]).collect(),
            us: forks.iter().map(|f| vec![f.2]).collect(),
            metrics: forks.iter().map(|f| f.0).collect(),
            ancestry: forks.iter().map(|f| f.1).collect(),
        };
    }
    let h = n / 2;
    let left: Vec<Vec<f64>> = llrs.iter().map(|l| (0..h).map(|i| boxplus(l[i], l[i + h])).collect()).collect();
    let a = list_rec(&left, metrics, offset, spec);
    let right: Vec<Vec<f64>> = a
        .ancestry
        .iter()
        .zip(&a.betas)
        .map(|(&p, beta)| {
            let l = &llrs[p];
            (0..h).map(|i| l[i + h] + if beta[i] == 0 { l[i] } else { -l[i] }).collect()
        })
        .collect();
    let b = list_rec(&right, &a.metrics, offset + h, spec);
    let mut out = ListOut { betas: Vec::new(), us: Vec::new(), metrics: b.metrics, ancestry: Vec::new() };
    for (q, &mid) in b.ancestry.iter().enumerate() {
        let beta_a = &a.betas[mid];
        let beta_b = &b.betas[q];
        out.betas.push(beta_a.iter().zip(beta_b).map(|(x, y)| x ^ y).chain(beta_b.iter().copied()).collect());
        out.us.push(a.us[mid].iter().chain(&b.us[q]).copied().collect());
        out.ancestry.push(a.ancestry[mid]);
    }
    out
}

/// All final list paths, ascending path metric.
pub fn scl_list(llrs: &[f64], spec: &PolarSpec) -> Result<Vec<ListPath>> {
    let full = decoder_input(llrs, spec)?;
    let out = list_rec(&[full], &[0.0], 0, spec);
    let mut paths: Vec<ListPath> = out.us.iter().zip(&out.metrics).map(|(u, &metric)| ListPath { frame: extract_frame(u, spec), metric }).collect();
    paths.sort_by(|a, b| a.metric.total_cmp(&b.metric));
    Ok(paths)
}

/// CRC-aided SCL: the best-metric path passing the CRC, information bits
/// only. Without CRC bits in the `PolarSpec` the best path is returned.
pub fn scl_decode(llrs: &[f64], spec: &PolarSpec) -> Result<Option<BitString>> {
    let paths = scl_list(llrs, spec)?;
    let pick = match spec.crc() {
        None => paths.first(),
        Some(crc) => {
            let mut found = None;
            for p in &paths {
                if crc.check(&p.frame)? {
                    found = Some(p);
                    break;
                }
            }
            found
        }
    };
    pick.map(|p| BitString::new(p.frame[..spec.n_info].to_vec())).transpose()
}

/// Gray QPSK: bit pair `(b0, b1)` to `((1 - 2 b0) + j (1 - 2 b1)) / sqrt 2`.
pub fn qpsk_map(bits: &[u8]) -> Result<Vec<Complex64>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::Dimension(format!("QPSK needs an even number of bits, got {}", bits.len())));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Ok(bits.chunks_exact(2).map(|p| Complex64::new(s * (1.0 - 2.0 * f64::from(p[0])), s * (1.0 - 2.0 * f64::from(p[1])))).collect())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Exact per-bit LLRs of one received column by enumerating all `4^N_t`
/// transmit vectors. Bit `2a + b` is bit `b` of antenna `a`. At `sigma2 = 0`
/// returns `+-LLR_CLAMP` from the nearest transmit vector.
pub fn ml_mimo_llr(y: &[Complex64], h: &ComplexMat, sigma2: f64) -> Result<Vec<f64>> {
    let (nr, nt) = h.shape();
    if y.len() != nr {
        return Err(Error::Dimension(format!("column has {} samples, H has {nr} rows", y.len())));
    }
    if nt > 6 {
        return Err(Error::Dimension(format!("{nt} transmit antennas is too many to enumerate")));
    }
    let nbits = 2 * nt;
    let count = 1usize << nbits;
    let mut metrics = Vec::with_capacity(count);
    let mut bits = vec![0u8; nbits];
    for x in 0..count {
        for (k, b) in bits.iter_mut().enumerate() {
            *b = ((x >> (nbits - 1 - k)) & 1) as u8;
        }
        let sym = qpsk_map(&bits)?;
        let mut d = 0.0;
        for r in 0..nr {
            let mut acc = y[r];
            for (a, s) in sym.iter().enumerate() {
                acc -= h[(r, a)] * s;
            }
            d += acc.norm_sqr();
        }
        metrics.push(d);
    }
    let bit_of = |x: usize, k: usize| (x >> (nbits - 1 - k)) & 1;
    if sigma2 <= 0.0 {
        let best = (0..count).min_by(|&a, &b| metrics[a].total_cmp(&metrics[b])).unwrap();
        return Ok((0..nbits).map(|k| if bit_of(best, k) == 0 { LLR_CLAMP } else { -LLR_CLAMP }).collect());
    }
    let scaled: Vec<f64> = metrics.iter().map(|d| -d / sigma2).collect();
    let mut zero = Vec::with_capacity(count / 2);
    let mut one = Vec::with_capacity(count / 2);
    Ok((0..nbits)
        .map(|k| {
            zero.clear();
            one.clear();
            for (x, &m) in scaled.iter().enumerate() {
                if bit_of(x, k) == 0 {
                    zero.push(m)
                } else {
                    one.push(m)
                }
            }
            log_sum_exp(&zero) - log_sum_exp(&one)
        })
        .collect())
}

/// LLRs for a whole received block, column by column.
pub fn block_llrs(y: &ComplexMat, h: &ComplexMat, sigma2: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * h.ncols() * y.ncols());
    for t in 0..y.ncols() {
        let col: Vec<Complex64> = y.column(t).iter().copied().collect();
        out.extend(ml_mimo_llr(&col, h, sigma2)?);
    }
    Ok(out)
}

/// Outcome of one baseline packet.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarPacket {
    /// CRC-accepted information bits.
    pub bits: Option<BitString>,
    /// Information bits of the best list path regardless of CRC.
    pub best_guess: Vec<u8>,
    pub crc_pass: bool,
}

/// CRC append, encode, QPSK map, reshape to `N_t x M_c`, transmit, detect and decode.
pub fn qpsk_spectral_pipeline(
    msg: &BitString,
    channel: &ChannelRealization,
    snr: SnrPoint,
    rng: &mut SeededRng,
    spec: &PolarSpec,
) -> Result<PolarPacket> {
    if msg.len() != spec.n_info {
        return Err(Error::Dimension(format!("message has {} bits, code carries {}", msg.len(), spec.n_info)));
    }
    let nt = channel.nt();
    if !spec.n_coded.is_multiple_of(2 * nt) {
        return Err(Error::Dimension(format!("{} coded bits do not fill whole {nt}-antenna slots", spec.n_coded)));
    }
    let frame = match spec.crc() {
        Some(crc) => crc.append(msg).into_vec(),
        None => msg.as_slice().to_vec(),
    };
    let coded = polar_encode(&frame, spec)?;
    let symbols = qpsk_map(&coded)?;
    let block = reshape_space_time(&symbols, nt, symbols.len() / nt)?;
    let y = transmit(&block, channel, snr, rng)?;
    let llrs = block_llrs(&y, channel.matrix(), snr.sigma2)?;
    let paths = scl_list(&llrs, spec)?;
    let best_guess = paths[0].frame[..spec.n_info].to_vec();
    let accepted = match spec.crc() {
        None => Some(&paths[0]),
        Some(crc) => paths.iter().find(|p| crc.check(&p.frame).unwrap_or(false)),
    };
    let bits = accepted.map(|p| BitString::new(p.frame[..spec.n_info].to_vec())).transpose()?;
    Ok(PolarPacket { crc_pass: bits.is_some(), bits, best_guess })
}
