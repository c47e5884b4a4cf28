//! Feed-forward inference and the portable weights file.
//!
//! File layout, all little-endian:
//!
//! ```text
//! "NOSW" | version u16 | V u16 | M u32 | D u32 | N_t u16 | N_r u16 | networks u32
//! per network: name_len u16 | name (UTF-8) | layers u32
//! per layer:   kind u8 | in u32 | out u32 | nparams u32 | params f32 * nparams
//! ```
//!
//! | kind | layer      | params                                   |
//! |------|------------|------------------------------------------|
//! | 1    | Linear     | weight (out x in, row-major), bias (out) |
//! | 2    | BatchNorm  | mean, var, gamma, beta (dim each), eps   |
//! | 3    | ReLU       | none                                     |
//! | 4    | Tanh       | none                                     |
//! | 5    | Sigmoid    | none                                     |
//! | 6    | LeakyReLU  | negative slope                           |
//! | 7    | Softmax    | none                                     |
//! | 8    | PowerNorm  | target energy (output scaled to it)      |
//!
//! Networks are named `enc0..enc{V-1}`, `res`, `dec0..dec{V-1}`; any subset may
//! be present.

use std::path::Path;

use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"NOSW";
pub const WEIGHTS_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Linear { inputs: usize, outputs: usize, weight: Vec<f32>, bias: Vec<f32> },
    BatchNorm { mean: Vec<f32>, var: Vec<f32>, gamma: Vec<f32>, beta: Vec<f32>, eps: f32 },
    Relu { dim: usize },
    Tanh { dim: usize },
    Sigmoid { dim: usize },
    LeakyRelu { dim: usize, slope: f32 },
    Softmax { dim: usize },
    PowerNorm { dim: usize, energy: f32 },
}

impl Layer {
    pub fn kind(&self) -> u8 {
        match self {
            Layer::Linear { .. } => 1,
            Layer::BatchNorm { .. } => 2,
            Layer::Relu { .. } => 3,
            Layer::Tanh { .. } => 4,
            Layer::Sigmoid { .. } => 5,
            Layer::LeakyRelu { .. } => 6,
            Layer::Softmax { .. } => 7,
            Layer::PowerNorm { .. } => 8,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Linear { inputs, .. } => *inputs,
            _ => self.out_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Linear { outputs, .. } => *outputs,
            Layer::BatchNorm { mean, .. } => mean.len(),
            Layer::Relu { dim }
            | Layer::Tanh { dim }
            | Layer::Sigmoid { dim }
            | Layer::LeakyRelu { dim, .. }
            | Layer::Softmax { dim }
            | Layer::PowerNorm { dim, .. } => *dim,
        }
    }

    pub fn params(&self) -> Vec<f32> {
        match self {
            Layer::Linear { weight, bias, .. } => weight.iter().chain(bias).copied().collect(),
            Layer::BatchNorm { mean, var, gamma, beta, eps } => mean.iter().chain(var).chain(gamma).chain(beta).copied().chain([*eps]).collect(),
            Layer::LeakyRelu { slope, .. } => vec![*slope],
            Layer::PowerNorm { energy, .. } => vec![*energy],
            _ => Vec::new(),
        }
    }

    fn from_parts(kind: u8, inputs: usize, outputs: usize, p: Vec<f32>) -> Result<Self> {
        let expect = |n: usize| {
            if p.len() == n {
                Ok(())
            } else {
                Err(Error::Weights(format!("layer kind {kind} ({inputs}->{outputs}) needs {n} parameters, found {}", p.len())))
            }
        };
        if kind != 1 && inputs != outputs {
            return Err(Error::Weights(format!("layer kind {kind} must preserve width, got {inputs}->{outputs}")));
        }
        let dim = outputs;
        Ok(match kind {
            1 => {
                expect(inputs * outputs + outputs)?;
                let bias = p[inputs * outputs..].to_vec();
                let mut weight = p;
                weight.truncate(inputs * outputs);
                Layer::Linear { inputs, outputs, weight, bias }
            }
            2 => {
                expect(4 * dim + 1)?;
                let part = |k: usize| p[k * dim..(k + 1) * dim].to_vec();
                let layer = Layer::BatchNorm { mean: part(0), var: part(1), gamma: part(2), beta: part(3), eps: p[4 * dim] };
                if let Layer::BatchNorm { var, eps, .. } = &layer {
                    if var.iter().any(|&v| !(v + eps > 0.0)) {
                        return Err(Error::Weights("normalization variance plus eps must be positive".into()));
                    }
                }
                layer
            }
            3 => {
                expect(0)?;
                Layer::Relu { dim }
            }
            4 => {
                expect(0)?;
                Layer::Tanh { dim }
            }
            5 => {
                expect(0)?;
                Layer::Sigmoid { dim }
            }
            6 => {
                expect(1)?;
                Layer::LeakyRelu { dim, slope: p[0] }
            }
            7 => {
                expect(0)?;
                Layer::Softmax { dim }
            }
            8 => {
                expect(1)?;
                if !(p[0] > 0.0) {
                    return Err(Error::Weights(format!("power normalization target {} must be positive", p[0])));
                }
                Layer::PowerNorm { dim, energy: p[0] }
            }
            other => return Err(Error::Weights(format!("unknown layer kind {other}"))),
        })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Layer::Linear { inputs, weight, bias, .. } => weight
                .chunks_exact(*inputs)
                .zip(bias)
                .map(|(row, &b)| row.iter().zip(x).map(|(&w, &xi)| f64::from(w) * xi).sum::<f64>() + f64::from(b))
                .collect(),
            Layer::BatchNorm { mean, var, gamma, beta, eps } => x
                .iter()
                .enumerate()
                .map(|(i, &xi)| {
                    let inv = 1.0 / (f64::from(var[i]) + f64::from(*eps)).sqrt();
                    (xi - f64::from(mean[i])) * inv * f64::from(gamma[i]) + f64::from(beta[i])
                })
                .collect(),
            Layer::Relu { .. } => x.iter().map(|&v| v.max(0.0)).collect(),
            Layer::Tanh { .. } => x.iter().map(|&v| v.tanh()).collect(),
            Layer::Sigmoid { .. } => x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
            Layer::LeakyRelu { slope, .. } => x.iter().map(|&v| if v >= 0.0 { v } else { f64::from(*slope) * v }).collect(),
            Layer::Softmax { .. } => softmax(x),
            Layer::PowerNorm { energy, .. } => {
                let e: f64 = x.iter().map(|v| v * v).sum();
                let scale = if e > 0.0 { (f64::from(*energy) / e).sqrt() } else { 0.0 };
                x.iter().map(|v| v * scale).collect()
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / sum).collect()
}

/// An ordered stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(name: impl Into<String>, layers: Vec<Layer>) -> Result<Self> {
        let name = name.into();
        if layers.is_empty() {
            return Err(Error::Weights(format!("network {name} has no layers")));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Weights(format!(
                    "network {name}: layer {i} outputs {} but layer {} takes {}",
                    w[0].out_dim(),
                    i + 1,
                    w[1].in_dim()
                )));
            }
        }
        Ok(Self { name, layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Panics if `x.len() != self.in_dim()`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim(), "network {} input width", self.name);
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.forward(&h);
        }
        h
    }

    pub fn ends_with_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(Layer::Softmax { .. }))
    }
}

/// Dimensions recorded in a weights file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightsDims {
    pub sections: usize,
    pub alphabet: usize,
    pub real_len: usize,
    pub nt: usize,
    pub nr: usize,
}

impl WeightsDims {
    /// Input width of the residual network, `2 N_r (N_t + 1)`.
    pub fn res_input(&self) -> usize {
        2 * self.nr * (self.nt + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub dims: WeightsDims,
    pub networks: Vec<Network>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::ShapeMismatch(format!("weights file truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl WeightsFile {
    pub fn network(&self, name: &str) -> Option<&Network> {
        self.networks.iter().find(|n| n.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = &self.dims;
        let mut out = Vec::new();
        out.extend(WEIGHTS_MAGIC);
        out.extend(WEIGHTS_VERSION.to_le_bytes());
        out.extend((d.sections as u16).to_le_bytes());
        out.extend((d.alphabet as u32).to_le_bytes());
        out.extend((d.real_len as u32).to_le_bytes());
        out.extend((d.nt as u16).to_le_bytes());
        out.extend((d.nr as u16).to_le_bytes());
        out.extend((self.networks.len() as u32).to_le_bytes());
        for net in &self.networks {
            out.extend((net.name.len() as u16).to_le_bytes());
            out.extend(net.name.as_bytes());
            out.extend((net.layers.len() as u32).to_le_bytes());
            for layer in &net.layers {
                let params = layer.params();
                out.push(layer.kind());
                out.extend((layer.in_dim() as u32).to_le_bytes());
                out.extend((layer.out_dim() as u32).to_le_bytes());
                out.extend((params.len() as u32).to_le_bytes());
                for p in params {
                    out.extend(p.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if magic != WEIGHTS_MAGIC {
            return Err(Error::BadMagic { expected: WEIGHTS_MAGIC, found: magic });
        }
        let version = r.u16()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dims = WeightsDims {
            sections: r.u16()? as usize,
            alphabet: r.u32()? as usize,
            real_len: r.u32()? as usize,
            nt: r.u16()? as usize,
            nr: r.u16()? as usize,
        };
        let count = r.u32()?;
        let mut networks = Vec::new();
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Weights("network name is not UTF-8".into()))?;
            let nlayers = r.u32()?;
            let mut layers = Vec::new();
            for _ in 0..nlayers {
                let kind = r.u8()?;
                let inputs = r.u32()? as usize;
                let outputs = r.u32()? as usize;
                let n = r.u32()? as usize;
                let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Weights("parameter count overflow".into()))?)?;
                let params = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                layers.push(Layer::from_parts(kind, inputs, outputs, params)?);
            }
            networks.push(Network::new(name, layers)?);
        }
        if r.pos != buf.len() {
            return Err(Error::ShapeMismatch(format!("{} trailing bytes in weights file", buf.len() - r.pos)));
        }
        Ok(Self { dims, networks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
