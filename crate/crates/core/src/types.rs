//! Shared value types: bit strings, complex tensors and the seeded random source.
//!
//! Complex matrices are `nalgebra` column-major matrices, so `as_slice()` on a
//! matrix is exactly its column-stacked vectorization `vec(X)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use num_complex::Complex64;

/// Complex matrix, column-major.
pub type ComplexMat = DMatrix<Complex64>;
/// Complex column vector.
pub type ComplexVec = DVector<Complex64>;

/// A non-empty sequence of bits, one `u8` per bit, each 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::EmptyBits);
        }
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidBit { pos, value: bits[pos] });
        }
        Ok(Self(bits))
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![0; len])
    }

    /// Uniformly random bits.
    pub fn random(len: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new((0..len).map(|_| rng.bit()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }

    /// Number of positions where `self` and `other` differ, plus the length difference.
    pub fn hamming(&self, other: &BitString) -> usize {
        let common = self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count();
        common + self.0.len().abs_diff(other.0.len())
    }
}

impl AsRef<[u8]> for BitString {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl std::fmt::Display for BitString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Deterministic pseudo-random source.
///
/// ChaCha8 is used because its output is specified independently of platform,
/// which keeps seeded simulations bit-identical across machines.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream number `stream` under master seed `seed`.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn bit(&mut self) -> u8 {
        u8::from(self.inner.random::<bool>())
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Circularly-symmetric complex Gaussian sample with total variance `var`.
    pub fn complex_normal(&mut self, var: f64) -> Complex64 {
        let s = (var / 2.0).sqrt();
        Complex64::new(s * self.standard_normal(), s * self.standard_normal())
    }
}

/// `rows x cols` matrix of i.i.d. circularly-symmetric complex Gaussian entries
/// with element-wise variance `var` (each of the real and imaginary parts has
/// variance `var / 2`). Entries are drawn in column-major order.
pub fn complex_gaussian(rng: &mut SeededRng, rows: usize, cols: usize, var: f64) -> Result<ComplexMat> {
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::NonPositiveVariance(var));
    }
    Ok(ComplexMat::from_fn(rows, cols, |_, _| rng.complex_normal(var)))
}

/// Big-endian bits to index: the first bit is the most significant.
pub fn bits_to_index(bits: &[u8]) -> Result<usize> {
    if bits.is_empty() {
        return Err(Error::EmptyBits);
    }
    if bits.len() >= usize::BITS as usize {
        return Err(Error::Dimension(format!("{} bits do not fit an index", bits.len())));
    }
    bits.iter().enumerate().try_fold(0usize, |acc, (pos, &b)| match b {
        0 | 1 => Ok((acc << 1) | b as usize),
        value => Err(Error::InvalidBit { pos, value }),
    })
}

/// Inverse of [`bits_to_index`]: `width` bits, most significant first.
pub fn index_to_bits(index: usize, width: usize) -> Vec<u8> {
    (0..width).rev().map(|k| ((index >> k) & 1) as u8).collect()
}

/// Appends the `width`-bit big-endian representation of `index` to `out`.
pub(crate) fn push_index_bits(out: &mut Vec<u8>, index: usize, width: usize) {
    out.extend((0..width).rev().map(|k| ((index >> k) & 1) as u8));
}

/// Squared Euclidean norm of a complex slice.
#[inline]
pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum()
}

/// `a' b` (conjugate of `a` times `b`, summed).
#[inline]
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut re, mut im) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re, im)
}

/// `Re(a' b)` only; the real part is all the decoding metrics need.
#[inline]
pub fn inner_re(a: &[Complex64], b: &[Complex64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}
