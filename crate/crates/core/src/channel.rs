//! Block-fading Rayleigh MIMO channel, `Y = H S + N`.

use crate::error::{Error, Result};
use crate::types::{complex_gaussian, ComplexMat, SeededRng};

/// `N_r x N_t` channel matrix, constant over one packet.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    h: ComplexMat,
}

impl ChannelRealization {
    pub fn new(h: ComplexMat) -> Self {
        Self { h }
    }

    /// I.i.d. zero-mean unit-variance complex Gaussian entries.
    pub fn draw(nr: usize, nt: usize, rng: &mut SeededRng) -> Self {
        Self { h: complex_gaussian(rng, nr, nt, 1.0).expect("unit variance is valid") }
    }

    pub fn matrix(&self) -> &ComplexMat {
        &self.h
    }

    pub fn nr(&self) -> usize {
        self.h.nrows()
    }

    pub fn nt(&self) -> usize {
        self.h.ncols()
    }
}

/// Operating point. With unit-energy-per-symbol transmission the SNR is
/// `1 / sigma2`; `sigma2 = 0` encodes a noiseless channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub sigma2: f64,
}

impl SnrPoint {
    pub fn from_db(snr_db: f64) -> Self {
        Self { snr_db, sigma2: 10f64.powf(-snr_db / 10.0) }
    }

    pub fn noiseless() -> Self {
        Self { snr_db: f64::INFINITY, sigma2: 0.0 }
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma2 == 0.0
    }
}

/// `H S + N` with `N` i.i.d. complex Gaussian of element-wise variance `sigma2`.
///
/// No random numbers are consumed when the point is noiseless.
pub fn transmit(block: &ComplexMat, channel: &ChannelRealization, snr: SnrPoint, rng: &mut SeededRng) -> Result<ComplexMat> {
    let h = channel.matrix();
    if h.ncols() != block.nrows() {
        return Err(Error::Dimension(format!("channel is {}x{}, block has {} rows", h.nrows(), h.ncols(), block.nrows())));
    }
    let mut y = h * block;
    if !snr.is_noiseless() {
        y += complex_gaussian(rng, y.nrows(), y.ncols(), snr.sigma2)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::Codebook;
    use crate::encoder::{encode, reshape_space_time, PacketLayout};
    use crate::types::{norm_sqr, BitString, Complex64};

    #[test]
    fn sigma2_from_db() {
        assert!((SnrPoint::from_db(10.0).sigma2 - 0.1).abs() < 1e-15);
        assert!((SnrPoint::from_db(0.0).sigma2 - 1.0).abs() < 1e-15);
        assert!(SnrPoint::noiseless().is_noiseless());
    }

    #[test]
    fn noiseless_is_exact_product() {
        let mut rng = SeededRng::new(1);
        let ch = ChannelRealization::draw(4, 2, &mut rng);
        let s = complex_gaussian(&mut rng, 2, 5, 1.0).unwrap();
        let y = transmit(&s, &ch, SnrPoint::noiseless(), &mut rng).unwrap();
        assert_eq!(y, ch.matrix() * &s);
    }

    #[test]
    fn identity_channel_adds_noise_only() {
        let mut rng = SeededRng::new(2);
        let ch = ChannelRealization::new(ComplexMat::identity(2, 2));
        let s = ComplexMat::from_column_slice(2, 1, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let snr = SnrPoint::from_db(20.0);
        let mut noise_rng = SeededRng::new(3);
        let y = transmit(&s, &ch, snr, &mut noise_rng).unwrap();
        let noise = complex_gaussian(&mut SeededRng::new(3), 2, 1, snr.sigma2).unwrap();
        assert_eq!(y, &s + noise);
        let _ = &mut rng;
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut rng = SeededRng::new(4);
        let ch = ChannelRealization::draw(2, 3, &mut rng);
        let s = ComplexMat::zeros(2, 4);
        assert!(transmit(&s, &ch, SnrPoint::from_db(5.0), &mut rng).is_err());
    }

    #[test]
    fn measured_snr_matches_definition() {
        // E||HS||^2 / (N_t E||N||^2) should equal 1/sigma2
        let mut rng = SeededRng::new(5);
        let cb = Codebook::random_gaussian(4, 64, 256, &mut rng).unwrap();
        let layout = PacketLayout::for_codebook(&cb).unwrap();
        let snr = SnrPoint::from_db(8.0);
        let (nt, nr, mc) = (4, 4, 8);
        let (mut sig, mut noise) = (0.0, 0.0);
        for _ in 0..100_000 {
            let msg = BitString::random(layout.info_bits, &mut rng).unwrap();
            let s = reshape_space_time(encode(&msg, &cb, &layout).unwrap().signal.as_slice(), nt, mc).unwrap();
            let ch = ChannelRealization::draw(nr, nt, &mut rng);
            let clean = ch.matrix() * &s;
            let y = transmit(&s, &ch, snr, &mut rng).unwrap();
            sig += norm_sqr(clean.as_slice());
            noise += norm_sqr((y - clean).as_slice());
        }
        let measured_db = 10.0 * (sig / (nt as f64 * noise)).log10();
        assert!((measured_db - 8.0).abs() < 0.1, "measured {measured_db} dB");
    }
}
