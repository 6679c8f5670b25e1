//! Stage topologies, seeded initialization and the `FBW1` weights file.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "FBW1"
//! u32 version_len, version bytes (UTF-8)
//! u32 layer_count
//! per layer:
//!   u32 name_len, name bytes (UTF-8)
//!   u32 ndims, ndims × u32 dims
//!   prod(dims) × f64 values, row-major
//! ```
//!
//! Layers are written in topology order. Names are `<net>.conv<i>.weight`
//! (dims `[out, in, k, k]`), `<net>.conv<i>.bias` (`[out]`),
//! `<net>.hidden<i>.weight` (`[out, in]`), `<net>.hidden<i>.bias`, and
//! `<net>.<head>.weight` / `<net>.<head>.bias` with `<net>` one of `pnet`,
//! `rnet`, `onet`, `embed`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::FaceError;
use crate::neural_kernel::{dense, flatten, max_pool_2x2, relu, ConvLayer, DenseLayer, Kernel, Matrix};

const MAGIC: &[u8; 4] = b"FBW1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub pool: bool,
}

const fn conv(in_ch: usize, out_ch: usize, pool: bool) -> ConvSpec {
    ConvSpec { in_ch, out_ch, kernel: 3, pool }
}

/// Fixed layer layout of one network.
#[derive(Debug, PartialEq, Eq)]
pub struct NetSpec {
    pub name: &'static str,
    /// Square input side.
    pub input: usize,
    pub convs: &'static [ConvSpec],
    /// Widths of ReLU dense layers between the conv stack and the heads.
    pub hidden: &'static [usize],
    pub heads: &'static [(&'static str, usize)],
}

pub static PNET: NetSpec = NetSpec {
    name: "pnet",
    input: 12,
    convs: &[conv(1, 8, true), conv(8, 16, false)],
    hidden: &[],
    heads: &[("score", 1), ("bbox", 4)],
};

pub static RNET: NetSpec = NetSpec {
    name: "rnet",
    input: 24,
    convs: &[conv(1, 8, true), conv(8, 16, true)],
    hidden: &[64],
    heads: &[("score", 1), ("bbox", 4)],
};

pub static ONET: NetSpec = NetSpec {
    name: "onet",
    input: 48,
    convs: &[conv(1, 8, true), conv(8, 16, true), conv(16, 16, true)],
    hidden: &[128],
    heads: &[("score", 1), ("bbox", 4), ("landmarks", 10)],
};

pub static EMBED: NetSpec = NetSpec {
    name: "embed",
    input: 160,
    convs: &[conv(1, 4, true), conv(4, 8, true), conv(8, 16, true), conv(16, 16, true)],
    hidden: &[],
    heads: &[("embedding", 512)],
};

impl NetSpec {
    /// Spatial side of the conv stack output for an input of side `side`.
    pub fn output_side(&self, mut side: usize) -> usize {
        for c in self.convs {
            side = side + 1 - c.kernel;
            if c.pool {
                side /= 2;
            }
        }
        side
    }

    pub fn feature_len(&self) -> usize {
        let side = self.output_side(self.input);
        self.convs.last().map_or(self.input * self.input, |c| c.out_ch * side * side)
    }

    /// Total downsampling factor of the conv stack.
    pub fn stride(&self) -> usize {
        self.convs.iter().filter(|c| c.pool).fold(1, |s, _| s * 2)
    }
}

/// A named tensor as stored in the weights file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

/// Conv stack, ReLU dense layers and linear heads for one [`NetSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    spec: &'static NetSpec,
    convs: Vec<ConvLayer>,
    hidden: Vec<DenseLayer>,
    heads: Vec<DenseLayer>,
}

impl ConvNet {
    pub fn new(
        spec: &'static NetSpec,
        convs: Vec<ConvLayer>,
        hidden: Vec<DenseLayer>,
        heads: Vec<DenseLayer>,
    ) -> Result<Self, FaceError> {
        let bad = |what: String| Err(FaceError::WeightsFormat(format!("{}: {what}", spec.name)));
        if convs.len() != spec.convs.len() || hidden.len() != spec.hidden.len() || heads.len() != spec.heads.len() {
            return bad("layer count does not match the topology".into());
        }
        for (i, (layer, s)) in convs.iter().zip(spec.convs).enumerate() {
            if layer.in_channels() != s.in_ch
                || layer.out_channels() != s.out_ch
                || layer.kernel_size() != (s.kernel, s.kernel)
            {
                return bad(format!("conv{i} has the wrong shape"));
            }
        }
        let mut width = spec.feature_len();
        for (i, (layer, &out)) in hidden.iter().zip(spec.hidden).enumerate() {
            if layer.in_dim() != width || layer.out_dim() != out {
                return bad(format!("hidden{i} has the wrong shape"));
            }
            width = out;
        }
        for (layer, (name, out)) in heads.iter().zip(spec.heads) {
            if layer.in_dim() != width || layer.out_dim() != *out {
                return bad(format!("head {name} has the wrong shape"));
            }
        }
        Ok(Self { spec, convs, hidden, heads })
    }

    /// Uniform init in `±sqrt(6 / fan_in)`, zero biases.
    pub fn random(spec: &'static NetSpec, rng: &mut ChaCha20Rng) -> Self {
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let a = (6.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-a..a)).collect()
        };
        let convs = spec
            .convs
            .iter()
            .map(|c| {
                let fan_in = c.in_ch * c.kernel * c.kernel;
                let kernels = (0..c.out_ch)
                    .map(|_| {
                        (0..c.in_ch)
                            .map(|_| Kernel::new(c.kernel, c.kernel, uniform(c.kernel * c.kernel, fan_in)).unwrap())
                            .collect()
                    })
                    .collect();
                ConvLayer::new(kernels, vec![0.0; c.out_ch]).unwrap()
            })
            .collect();
        let mut width = spec.feature_len();
        let mut hidden = Vec::new();
        for &out in spec.hidden {
            let w = Matrix::new(out, width, uniform(out * width, width)).unwrap();
            hidden.push(DenseLayer::new(w, vec![0.0; out]).unwrap());
            width = out;
        }
        let heads = spec
            .heads
            .iter()
            .map(|&(_, out)| {
                let w = Matrix::new(out, width, uniform(out * width, width)).unwrap();
                DenseLayer::new(w, vec![0.0; out]).unwrap()
            })
            .collect();
        Self { spec, convs, hidden, heads }
    }

    pub fn spec(&self) -> &'static NetSpec {
        self.spec
    }

    /// Runs the conv stack (ReLU after every conv, pooling where the
    /// topology says) on an input of any size the stack accepts.
    pub fn feature_maps(&self, input: &Matrix) -> Result<Vec<Matrix>, FaceError> {
        let mut maps = vec![input.clone()];
        for (layer, s) in self.convs.iter().zip(self.spec.convs) {
            maps = layer.forward(&maps)?.iter().map(relu).collect();
            if s.pool {
                maps = maps.iter().map(max_pool_2x2).collect();
            }
        }
        Ok(maps)
    }

    /// Head outputs computed from a flattened conv feature vector.
    pub fn heads_from_features(&self, features: &[f64]) -> Result<Vec<Vec<f64>>, FaceError> {
        let mut f = features.to_vec();
        for layer in &self.hidden {
            f = dense(layer, &f)?.into_iter().map(|v| v.max(0.0)).collect();
        }
        Ok(self.heads.iter().map(|h| dense(h, &f)).collect::<Result<_, _>>()?)
    }

    /// Full forward pass on an input of exactly `input × input` pixels.
    pub fn forward(&self, input: &Matrix) -> Result<Vec<Vec<f64>>, FaceError> {
        let side = self.spec.input;
        if input.rows() != side || input.cols() != side {
            return Err(FaceError::InvalidImage(format!(
                "{} expects {side}x{side}, got {}x{}",
                self.spec.name,
                input.cols(),
                input.rows()
            )));
        }
        let maps = self.feature_maps(input)?;
        self.heads_from_features(&flatten(&maps))
    }

    fn tensors(&self) -> Vec<(String, Tensor)> {
        let n = self.spec.name;
        let mut out = Vec::new();
        for (i, layer) in self.convs.iter().enumerate() {
            let (kh, kw) = layer.kernel_size();
            let data = layer.kernels().iter().flatten().flat_map(|k| k.weights().iter().copied()).collect();
            out.push((
                format!("{n}.conv{i}.weight"),
                Tensor { dims: vec![layer.out_channels(), layer.in_channels(), kh, kw], data },
            ));
            out.push((
                format!("{n}.conv{i}.bias"),
                Tensor { dims: vec![layer.out_channels()], data: layer.biases().to_vec() },
            ));
        }
        let dense_names = (0..self.hidden.len())
            .map(|i| format!("hidden{i}"))
            .chain(self.spec.heads.iter().map(|(h, _)| h.to_string()));
        for (name, layer) in dense_names.zip(self.hidden.iter().chain(&self.heads)) {
            out.push((
                format!("{n}.{name}.weight"),
                Tensor { dims: vec![layer.out_dim(), layer.in_dim()], data: layer.weights().data().to_vec() },
            ));
            out.push((format!("{n}.{name}.bias"), Tensor { dims: vec![layer.out_dim()], data: layer.biases().to_vec() }));
        }
        out
    }

    fn from_tensors(spec: &'static NetSpec, map: &mut BTreeMap<String, Tensor>) -> Result<Self, FaceError> {
        let n = spec.name;
        let mut take = |name: String, dims: &[usize]| -> Result<Vec<f64>, FaceError> {
            let t = map.remove(&name).ok_or_else(|| FaceError::WeightsFormat(format!("missing layer {name}")))?;
            if t.dims != dims {
                return Err(FaceError::WeightsFormat(format!("layer {name} has dims {:?}, expected {dims:?}", t.dims)));
            }
            Ok(t.data)
        };
        let mut convs = Vec::new();
        for (i, c) in spec.convs.iter().enumerate() {
            let w = take(format!("{n}.conv{i}.weight"), &[c.out_ch, c.in_ch, c.kernel, c.kernel])?;
            let b = take(format!("{n}.conv{i}.bias"), &[c.out_ch])?;
            let kk = c.kernel * c.kernel;
            let kernels = (0..c.out_ch)
                .map(|o| {
                    (0..c.in_ch)
                        .map(|ci| {
                            let start = (o * c.in_ch + ci) * kk;
                            Kernel::new(c.kernel, c.kernel, w[start..start + kk].to_vec())
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            convs.push(ConvLayer::new(kernels, b)?);
        }
        let mut width = spec.feature_len();
        let mut read_dense = |name: String, out: usize, width: usize| -> Result<DenseLayer, FaceError> {
            let w = take(format!("{n}.{name}.weight"), &[out, width])?;
            let b = take(format!("{n}.{name}.bias"), &[out])?;
            Ok(DenseLayer::new(Matrix::new(out, width, w)?, b)?)
        };
        let mut hidden = Vec::new();
        for (i, &out) in spec.hidden.iter().enumerate() {
            hidden.push(read_dense(format!("hidden{i}"), out, width)?);
            width = out;
        }
        let heads = spec
            .heads
            .iter()
            .map(|&(h, out)| read_dense(h.to_string(), out, width))
            .collect::<Result<Vec<_>, _>>()?;
        ConvNet::new(spec, convs, hidden, heads)
    }
}

/// Weights for the three detection stages and the embedding network.
#[derive(Debug, Clone, PartialEq)]
pub struct StageWeights {
    pub version: String,
    pub pnet: ConvNet,
    pub rnet: ConvNet,
    pub onet: ConvNet,
    pub embed: ConvNet,
}

impl StageWeights {
    /// Deterministic pseudo-random weights; the seed is kept in `version`.
    pub fn random(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"fbt-face-weights");
        h.update(seed.to_be_bytes());
        let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
        Self {
            version: format!("random-seed-{seed}"),
            pnet: ConvNet::random(&PNET, &mut rng),
            rnet: ConvNet::random(&RNET, &mut rng),
            onet: ConvNet::random(&ONET, &mut rng),
            embed: ConvNet::random(&EMBED, &mut rng),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let layers: Vec<_> = [&self.pnet, &self.rnet, &self.onet, &self.embed]
            .iter()
            .flat_map(|net| net.tensors())
            .collect();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_str(&mut out, &self.version);
        out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for (name, t) in layers {
            put_str(&mut out, &name);
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for d in &t.dims {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FaceError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(FaceError::WeightsFormat("missing FBW1 magic".into()));
        }
        let version = r.string()?;
        let count = r.u32()? as usize;
        let mut map = BTreeMap::new();
        for _ in 0..count {
            let name = r.string()?;
            let ndims = r.u32()? as usize;
            let dims = (0..ndims).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            let len = len.filter(|&l| l.checked_mul(8).is_some_and(|b| b <= bytes.len()));
            let len = len.ok_or_else(|| FaceError::WeightsFormat(format!("layer {name} is too large")))?;
            let raw = r.take(len * 8)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            if map.insert(name.clone(), Tensor { dims, data }).is_some() {
                return Err(FaceError::WeightsFormat(format!("duplicate layer {name}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(FaceError::WeightsFormat("trailing bytes".into()));
        }
        let weights = Self {
            version,
            pnet: ConvNet::from_tensors(&PNET, &mut map)?,
            rnet: ConvNet::from_tensors(&RNET, &mut map)?,
            onet: ConvNet::from_tensors(&ONET, &mut map)?,
            embed: ConvNet::from_tensors(&EMBED, &mut map)?,
        };
        if let Some(extra) = map.keys().next() {
            return Err(FaceError::WeightsFormat(format!("unexpected layer {extra}")));
        }
        Ok(weights)
    }

    pub fn save(&self, path: &Path) -> Result<(), FaceError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FaceError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FaceError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| FaceError::WeightsFormat("truncated weights file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FaceError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, FaceError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| FaceError::WeightsFormat("non-UTF-8 name".into()))
    }
}
