//! MMSE equalization, the residual compensation network and the per-section
//! decoder networks.
//!
//! Real-valued views: a complex matrix is realified column by column as
//! `[Re; Im]`, so an `n x c` matrix becomes `2n x c`. The channel state
//! appended to every column is `[Re vec(H); Im vec(H)]`. The equalized
//! vector handed to the decoders is the column-major vectorization of the
//! realified `2 N_t x M_c` block: for each time slot, `N_t` real parts then
//! `N_t` imaginary parts.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::nn::{softmax, Network, WeightsDims, WeightsFile};
use crate::types::{Complex64, ComplexMat};

/// `[Re; Im]` stacked per column.
pub fn realify(x: &ComplexMat) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(2 * n, x.ncols(), |i, j| if i < n { x[(i, j)].re } else { x[(i - n, j)].im })
}

/// Inverse of [`realify`]; errors on an odd row count.
pub fn complexify(x: &DMatrix<f64>) -> Result<ComplexMat> {
    if !x.nrows().is_multiple_of(2) {
        return Err(Error::Dimension(format!("{} rows cannot be split into real and imaginary halves", x.nrows())));
    }
    let n = x.nrows() / 2;
    Ok(ComplexMat::from_fn(n, x.ncols(), |i, j| Complex64::new(x[(i, j)], x[(i + n, j)])))
}

/// `(H'H + (sigma2 / P) I)^-1 H' Y`; at `sigma2 = 0` the pseudo-inverse of `H`.
pub fn mmse_equalize(y: &ComplexMat, h: &ComplexMat, sigma2: f64, power: f64) -> Result<ComplexMat> {
    if y.nrows() != h.nrows() {
        return Err(Error::Dimension(format!("Y has {} rows, H has {}", y.nrows(), h.nrows())));
    }
    if !(sigma2 >= 0.0) || !(power > 0.0) {
        return Err(Error::Config(format!("need sigma2 >= 0 and P > 0, got {sigma2}, {power}")));
    }
    if sigma2 > 0.0 {
        let hh = h.adjoint();
        let mut gram = &hh * h;
        for i in 0..gram.nrows() {
            gram[(i, i)] += Complex64::new(sigma2 / power, 0.0);
        }
        let rhs = &hh * y;
        // Hermitian positive definite for sigma2 > 0
        if let Some(chol) = gram.clone().cholesky() {
            return Ok(chol.solve(&rhs));
        }
        return gram.lu().solve(&rhs).ok_or_else(|| Error::Dimension("singular MMSE system".into()));
    }
    let pinv = h.clone().pseudo_inverse(1e-12).map_err(|e| Error::Dimension(e.to_string()))?;
    Ok(pinv * y)
}

/// Encoder networks, one per section, mapping a one-hot index to `D` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub nets: Vec<Network>,
}

/// Residual network and per-section decoders.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverWeights {
    pub dims: WeightsDims,
    pub res: Network,
    pub dec: Vec<Network>,
}

fn numbered(file: &WeightsFile, prefix: &str) -> Result<Vec<Network>> {
    (0..file.dims.sections)
        .map(|v| file.network(&format!("{prefix}{v}")).cloned().ok_or_else(|| Error::Weights(format!("missing network {prefix}{v}"))))
        .collect()
}

impl EncoderWeights {
    pub fn from_file(file: &WeightsFile) -> Result<Self> {
        let d = file.dims;
        let nets = numbered(file, "enc")?;
        for n in &nets {
            if n.in_dim() != d.alphabet || n.out_dim() != d.real_len {
                return Err(Error::Weights(format!("{} maps {} -> {}, expected {} -> {}", n.name, n.in_dim(), n.out_dim(), d.alphabet, d.real_len)));
            }
        }
        Ok(Self { nets })
    }
}

impl ReceiverWeights {
    pub fn from_file(file: &WeightsFile) -> Result<Self> {
        let d = file.dims;
        if d.nt == 0 || !d.real_len.is_multiple_of(2 * d.nt) {
            return Err(Error::Weights(format!("D={} is not a multiple of 2 N_t = {}", d.real_len, 2 * d.nt)));
        }
        let res = file.network("res").cloned().ok_or_else(|| Error::Weights("missing network res".into()))?;
        if res.in_dim() != d.res_input() || res.out_dim() != 2 * d.nt {
            return Err(Error::Weights(format!("res maps {} -> {}, expected {} -> {}", res.in_dim(), res.out_dim(), d.res_input(), 2 * d.nt)));
        }
        let dec = numbered(file, "dec")?;
        for n in &dec {
            if n.in_dim() != d.real_len || n.out_dim() != d.alphabet {
                return Err(Error::Weights(format!("{} maps {} -> {}, expected {} -> {}", n.name, n.in_dim(), n.out_dim(), d.real_len, d.alphabet)));
            }
        }
        Ok(Self { dims: d, res, dec })
    }

    /// Time slots per packet, `D / (2 N_t)`.
    pub fn slots(&self) -> usize {
        self.dims.real_len / (2 * self.dims.nt)
    }
}

/// Realified MMSE output plus the residual network applied to each column of
/// `[Re Y; Im Y]` with the channel state appended; vectorized to length `D`.
pub fn residual_detect(y: &ComplexMat, h: &ComplexMat, w: &ReceiverWeights, sigma2: f64) -> Result<Vec<f64>> {
    let d = w.dims;
    if h.shape() != (d.nr, d.nt) || y.shape() != (d.nr, w.slots()) {
        return Err(Error::Dimension(format!(
            "H is {:?} and Y is {:?}, weights expect {}x{} and {}x{}",
            h.shape(),
            y.shape(),
            d.nr,
            d.nt,
            d.nr,
            w.slots()
        )));
    }
    let x = realify(&mmse_equalize(y, h, sigma2, 1.0)?);
    let yr = realify(y);
    let hv = h.as_slice();
    let csi: Vec<f64> = hv.iter().map(|c| c.re).chain(hv.iter().map(|c| c.im)).collect();
    let mut out = Vec::with_capacity(d.real_len);
    let mut input = Vec::with_capacity(d.res_input());
    for t in 0..y.ncols() {
        input.clear();
        input.extend(yr.column(t).iter());
        input.extend(&csi);
        let delta = w.res.forward(&input);
        out.extend(x.column(t).iter().zip(&delta).map(|(a, b)| a + b));
    }
    Ok(out)
}

/// Probability vector per section. Decoders ending in a softmax layer are
/// used as is; otherwise their outputs are treated as logits.
pub fn decode_probs(x_equ: &[f64], w: &ReceiverWeights) -> Result<Vec<Vec<f64>>> {
    if x_equ.len() != w.dims.real_len {
        return Err(Error::Dimension(format!("equalized vector has {} entries, decoders take {}", x_equ.len(), w.dims.real_len)));
    }
    Ok(w.dec
        .iter()
        .map(|n| {
            let out = n.forward(x_equ);
            if n.ends_with_softmax() {
                out
            } else {
                softmax(&out)
            }
        })
        .collect())
}

/// Independent argmax per section (lowest index on ties).
pub fn hard_decision(probs: &[Vec<f64>]) -> Vec<usize> {
    probs.iter().map(|p| p.iter().enumerate().fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best }).0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use crate::types::{complex_gaussian, SeededRng};

    /// Gauss-Jordan elimination with partial pivoting on `[A | B]`.
    fn gauss_jordan(a: &ComplexMat, b: &ComplexMat) -> ComplexMat {
        let n = a.nrows();
        let mut m = a.clone().resize_horizontally(n + b.ncols(), Complex64::new(0.0, 0.0));
        m.view_mut((0, n), (n, b.ncols())).copy_from(b);
        for col in 0..n {
            let p = (col..n).max_by(|&i, &j| m[(i, col)].norm().total_cmp(&m[(j, col)].norm())).unwrap();
            m.swap_rows(col, p);
            let pivot = m[(col, col)];
            for j in 0..m.ncols() {
                m[(col, j)] /= pivot;
            }
            for i in 0..n {
                if i != col {
                    let f = m[(i, col)];
                    for j in 0..m.ncols() {
                        let v = m[(col, j)];
                        m[(i, j)] -= f * v;
                    }
                }
            }
        }
        m.columns(n, b.ncols()).into_owned()
    }

    #[test]
    fn scalar_identity_halves() {
        let y = ComplexMat::from_element(1, 1, Complex64::new(3.0, -1.0));
        let h = ComplexMat::identity(1, 1);
        let x = mmse_equalize(&y, &h, 1.0, 1.0).unwrap();
        assert!((x[(0, 0)] - Complex64::new(1.5, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn zero_noise_inverts_channel() {
        let mut rng = SeededRng::new(1);
        let h = complex_gaussian(&mut rng, 3, 3, 1.0).unwrap();
        let x = complex_gaussian(&mut rng, 3, 4, 1.0).unwrap();
        let y = &h * &x;
        let est = mmse_equalize(&y, &h, 0.0, 1.0).unwrap();
        assert!((est - x).norm() < 1e-9);
    }

    #[test]
    fn rank_deficient_noiseless_falls_back() {
        let col = ComplexMat::from_column_slice(2, 1, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        let h = ComplexMat::from_fn(2, 2, |i, _| col[(i, 0)]);
        let y = ComplexMat::from_column_slice(2, 1, &[Complex64::new(2.0, 0.0), Complex64::new(0.0, 2.0)]);
        let x = mmse_equalize(&y, &h, 0.0, 1.0).unwrap();
        // minimum-norm solution splits evenly
        assert!((x[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        assert!((x[(1, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn matches_normal_equation_oracle() {
        let mut rng = SeededRng::new(2);
        for _ in 0..200 {
            let h = complex_gaussian(&mut rng, 4, 4, 1.0).unwrap();
            let y = complex_gaussian(&mut rng, 4, 8, 2.0).unwrap();
            let sigma2 = 0.05 + rng.uniform();
            let mut a = h.adjoint() * &h;
            for i in 0..4 {
                a[(i, i)] += Complex64::new(sigma2, 0.0);
            }
            let expected = gauss_jordan(&a, &(h.adjoint() * &y));
            let got = mmse_equalize(&y, &h, sigma2, 1.0).unwrap();
            assert!((got - &expected).norm() / expected.norm() < 1e-10);
        }
    }

    #[test]
    fn realify_round_trip() {
        let mut rng = SeededRng::new(3);
        let x = complex_gaussian(&mut rng, 3, 5, 1.0).unwrap();
        let r = realify(&x);
        assert_eq!(r.shape(), (6, 5));
        assert_eq!(r[(4, 2)], x[(1, 2)].im);
        assert_eq!(complexify(&r).unwrap(), x);
        assert!(complexify(&DMatrix::zeros(3, 1)).is_err());
    }

    fn zero_receiver(nt: usize, nr: usize, alphabet: usize, sections: usize, real_len: usize) -> ReceiverWeights {
        let dims = WeightsDims { sections, alphabet, real_len, nt, nr };
        let g = dims.res_input();
        let res = Network::new(
            "res",
            vec![
                Layer::Linear { inputs: g, outputs: 8, weight: vec![0.3; 8 * g], bias: vec![0.1; 8] },
                Layer::Relu { dim: 8 },
                Layer::Linear { inputs: 8, outputs: 2 * nt, weight: vec![0.0; 16 * nt], bias: vec![0.0; 2 * nt] },
            ],
        )
        .unwrap();
        let dec = (0..sections)
            .map(|v| {
                Network::new(
                    format!("dec{v}"),
                    vec![Layer::Linear { inputs: real_len, outputs: alphabet, weight: vec![0.0; real_len * alphabet], bias: vec![0.0; alphabet] }],
                )
                .unwrap()
            })
            .collect();
        ReceiverWeights { dims, res, dec }
    }

    #[test]
    fn zero_residual_is_pure_mmse() {
        let mut rng = SeededRng::new(4);
        let w = zero_receiver(2, 3, 4, 2, 8);
        let h = complex_gaussian(&mut rng, 3, 2, 1.0).unwrap();
        let y = complex_gaussian(&mut rng, 3, 2, 1.0).unwrap();
        let out = residual_detect(&y, &h, &w, 0.3).unwrap();
        let x = realify(&mmse_equalize(&y, &h, 0.3, 1.0).unwrap());
        assert_eq!(out.as_slice(), x.as_slice());
        let probs = decode_probs(&out, &w).unwrap();
        assert!(probs.iter().all(|p| p.iter().all(|&v| (v - 0.25).abs() < 1e-15)));
        assert_eq!(hard_decision(&probs), vec![0, 0]);
    }

    #[test]
    fn residual_is_per_column() {
        let mut rng = SeededRng::new(5);
        let dims = WeightsDims { sections: 1, alphabet: 2, real_len: 12, nt: 2, nr: 2 };
        let g = dims.res_input();
        let weight: Vec<f32> = (0..4 * g).map(|_| rng.standard_normal() as f32).collect();
        let res = Network::new("res", vec![Layer::Linear { inputs: g, outputs: 4, weight, bias: vec![0.1, 0.2, 0.3, 0.4] }, Layer::Tanh { dim: 4 }])
            .unwrap();
        let dec = vec![Network::new("dec0", vec![Layer::Linear { inputs: 12, outputs: 2, weight: vec![0.0; 24], bias: vec![0.0; 2] }]).unwrap()];
        let w = ReceiverWeights { dims, res, dec };
        let h = complex_gaussian(&mut rng, 2, 2, 1.0).unwrap();
        let y = complex_gaussian(&mut rng, 2, 3, 1.0).unwrap();
        let out = residual_detect(&y, &h, &w, 0.1).unwrap();
        let perm = [2, 0, 1];
        let yp = ComplexMat::from_fn(2, 3, |i, j| y[(i, perm[j])]);
        let outp = residual_detect(&yp, &h, &w, 0.1).unwrap();
        for (j, &p) in perm.iter().enumerate() {
            for r in 0..4 {
                assert!((outp[j * 4 + r] - out[p * 4 + r]).abs() < 1e-12);
            }
        }
        assert!(residual_detect(&complex_gaussian(&mut rng, 2, 4, 1.0).unwrap(), &h, &w, 0.1).is_err());
    }

    #[test]
    fn weights_file_views_validate_shapes() {
        let w = zero_receiver(1, 1, 2, 1, 4);
        let file = WeightsFile { dims: w.dims, networks: vec![w.res.clone(), w.dec[0].clone()] };
        assert_eq!(ReceiverWeights::from_file(&file).unwrap(), w);
        assert!(EncoderWeights::from_file(&file).is_err());
        let bad = WeightsFile { dims: WeightsDims { nt: 2, ..w.dims }, networks: file.networks.clone() };
        assert!(ReceiverWeights::from_file(&bad).is_err());
    }
}
