//! Small neural building blocks on top of candle with seeded initialization.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var, D};
use candle_nn::{Linear, Module};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Named trainable tensors, initialized from a seeded host RNG.
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    device: Device,
    dtype: DType,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            vars: BTreeMap::new(),
            device: Device::Cpu,
            dtype,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    /// New variable with entries uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::InvalidArgument(format!("parameter `{name}` defined twice")));
        }
        let count: usize = shape.iter().product();
        let data: Vec<f64> = (0..count)
            .map(|_| bound * (2.0 * self.rng.random::<f64>() - 1.0))
            .collect();
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(out)
    }

    /// Affine map with the usual `1/sqrt(fan_in)` uniform initialization.
    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Result<Linear> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let w = self.uniform(&format!("{name}.weight"), &[fan_out, fan_in], bound)?;
        let b = if bias {
            Some(self.uniform(&format!("{name}.bias"), &[fan_out], bound)?)
        } else {
            None
        };
        Ok(Linear::new(w, b))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    pub fn named_vars(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn num_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(k, v)| (k.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Overwrites every parameter from a file written by [`Self::save`].
    pub fn load(&self, path: &Path) -> Result<()> {
        let map = candle_core::safetensors::load(path, &self.device)?;
        for (name, var) in &self.vars {
            let t = map
                .get(name)
                .ok_or_else(|| Error::Missing(format!("parameter `{name}` in checkpoint")))?;
            if t.dims() != var.dims() {
                return Err(Error::Shape(format!(
                    "parameter `{name}`: checkpoint {:?} vs model {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        if map.len() != self.vars.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} tensors, model has {}",
                map.len(),
                self.vars.len()
            )));
        }
        Ok(())
    }
}

/// Feed-forward stack with ReLU between layers and a linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    /// `dims = [in, hidden..., out]`.
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize]) -> Result<Self> {
        Self::with_bias(store, name, dims, true)
    }

    pub fn with_bias(store: &mut ParamStore, name: &str, dims: &[usize], bias: bool) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArgument(format!("MLP `{name}` needs at least two sizes")));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| store.linear(&format!("{name}.{i}"), w[0], w[1], bias))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(&h)?;
            if i + 1 < self.layers.len() {
                h = h.relu()?;
            }
        }
        Ok(h)
    }
}

/// `L` independent MLPs of the same shape evaluated in one batched product.
#[derive(Debug, Clone)]
pub struct StackedMlp {
    /// `(weight [L, in, out], bias [L, 1, out])` per layer.
    layers: Vec<(Tensor, Tensor)>,
    count: usize,
}

impl StackedMlp {
    pub fn new(store: &mut ParamStore, name: &str, count: usize, dims: &[usize]) -> Result<Self> {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Ok((
                    store.uniform(&format!("{name}.{i}.weight"), &[count, w[0], w[1]], bound)?,
                    store.uniform(&format!("{name}.{i}.bias"), &[count, 1, w[1]], bound)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers, count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `x: [M, in]` to `[L, M, out]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.unsqueeze(0)?;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.broadcast_matmul(w)?.broadcast_add(b)?;
            if i + 1 < self.layers.len() {
                h = h.relu()?;
            }
        }
        Ok(h)
    }
}

#[derive(Debug, Clone)]
pub struct GruCell {
    ih: Linear,
    hh: Linear,
    hidden: usize,
}

impl GruCell {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            ih: store.linear(&format!("{name}.ih"), input, 3 * hidden, true)?,
            hh: store.linear(&format!("{name}.hh"), hidden, 3 * hidden, true)?,
            hidden,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// One step on `x: [.., input]`, `h: [.., hidden]`.
    pub fn step(&self, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        let n = self.hidden;
        let gi = self.ih.forward(x)?;
        let gh = self.hh.forward(h)?;
        let last = gi.rank() - 1;
        let r = candle_nn::ops::sigmoid(&(gi.narrow(last, 0, n)? + gh.narrow(last, 0, n)?)?)?;
        let z = candle_nn::ops::sigmoid(&(gi.narrow(last, n, n)? + gh.narrow(last, n, n)?)?)?;
        let c = (gi.narrow(last, 2 * n, n)? + (r * gh.narrow(last, 2 * n, n)?)?)?.tanh()?;
        // h' = (1 - z) * c + z * h = c + z * (h - c)
        Ok((&c + z * (h - &c)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct LstmCell {
    ih: Linear,
    hh: Linear,
    hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            ih: store.linear(&format!("{name}.ih"), input, 4 * hidden, true)?,
            hh: store.linear(&format!("{name}.hh"), hidden, 4 * hidden, true)?,
            hidden,
        })
    }

    pub fn step(&self, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let n = self.hidden;
        let g = (self.ih.forward(x)? + self.hh.forward(h)?)?;
        let last = g.rank() - 1;
        let i = candle_nn::ops::sigmoid(&g.narrow(last, 0, n)?)?;
        let f = candle_nn::ops::sigmoid(&g.narrow(last, n, n)?)?;
        let u = g.narrow(last, 2 * n, n)?.tanh()?;
        let o = candle_nn::ops::sigmoid(&g.narrow(last, 3 * n, n)?)?;
        let c = ((f * c)? + (i * u)?)?;
        let h = (o * c.tanh()?)?;
        Ok((h, c))
    }
}

/// Bidirectional LSTM summarizing a sequence by its two final hidden states.
#[derive(Debug, Clone)]
pub struct BiLstm {
    fwd: LstmCell,
    bwd: LstmCell,
}

impl BiLstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            fwd: LstmCell::new(store, &format!("{name}.fwd"), input, hidden)?,
            bwd: LstmCell::new(store, &format!("{name}.bwd"), input, hidden)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    /// `x: [M, T, input]` to `[M, 2 * hidden]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (m, t, _) = x.dims3()?;
        let zeros = Tensor::zeros((m, self.fwd.hidden), x.dtype(), x.device())?;
        let (mut hf, mut cf) = (zeros.clone(), zeros.clone());
        let (mut hb, mut cb) = (zeros.clone(), zeros);
        for k in 0..t {
            (hf, cf) = self.fwd.step(&x.narrow(1, k, 1)?.squeeze(1)?, &hf, &cf)?;
            (hb, cb) = self.bwd.step(&x.narrow(1, t - 1 - k, 1)?.squeeze(1)?, &hb, &cb)?;
        }
        Ok(Tensor::cat(&[hf, hb], 1)?)
    }
}

/// Multi-head attention with biased query/key projections and unbiased
/// value/output projections.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
    dim: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "attention width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            q: store.linear(&format!("{name}.q"), dim, dim, true)?,
            k: store.linear(&format!("{name}.k"), dim, dim, true)?,
            v: store.linear(&format!("{name}.v"), dim, dim, false)?,
            o: store.linear(&format!("{name}.o"), dim, dim, false)?,
            heads,
            dim,
        })
    }

    pub fn value_weight(&self) -> &Tensor {
        self.v.weight()
    }

    /// `query: [M, Q, D]`, `kv: [M, K, D]` to `[M, Q, D]`.
    pub fn forward(&self, query: &Tensor, kv: &Tensor) -> Result<Tensor> {
        let (m, nq, _) = query.dims3()?;
        let nk = kv.dim(1)?;
        let hd = self.dim / self.heads;
        let split = |t: Tensor, n: usize| -> Result<Tensor> {
            Ok(t.reshape((m, n, self.heads, hd))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.q.forward(query)?, nq)?;
        let k = split(self.k.forward(kv)?, nk)?;
        let v = split(self.v.forward(kv)?, nk)?;
        let scores = (q.matmul(&k.t()?)? / (hd as f64).sqrt())?;
        let att = candle_nn::ops::softmax_last_dim(&scores)?;
        let out = att
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((m, nq, self.dim))?;
        Ok(self.o.forward(&out)?)
    }
}

/// Host-side seeded noise, converted to tensors on demand.
pub struct Noise {
    rng: ChaCha8Rng,
}

impl Noise {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn gumbel_vec(&mut self, count: usize) -> Vec<f64> {
        (0..count)
            .map(|_| {
                let u: f64 = self.rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
                -(-u.ln()).ln()
            })
            .collect()
    }

    pub fn normal_vec(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| StandardNormal.sample(&mut self.rng)).collect()
    }

    pub fn uniform_vec(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.rng.random::<f64>()).collect()
    }

    pub fn gumbel(&mut self, shape: &[usize], dtype: DType, device: &Device) -> Result<Tensor> {
        let n = shape.iter().product();
        Ok(Tensor::from_vec(self.gumbel_vec(n), shape, device)?.to_dtype(dtype)?)
    }

    pub fn normal(&mut self, shape: &[usize], dtype: DType, device: &Device) -> Result<Tensor> {
        let n = shape.iter().product();
        Ok(Tensor::from_vec(self.normal_vec(n), shape, device)?.to_dtype(dtype)?)
    }

    /// One-hot draws from the rows of `probs: [.., C]`.
    pub fn categorical_one_hot(&mut self, probs: &Tensor) -> Result<Tensor> {
        let dims = probs.dims().to_vec();
        let c = *dims.last().ok_or_else(|| Error::Shape("empty probability tensor".into()))?;
        let flat: Vec<f64> = probs.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        let mut out = vec![0.0f64; flat.len()];
        for (row, chunk) in flat.chunks(c).enumerate() {
            let u: f64 = self.rng.random();
            let total: f64 = chunk.iter().sum();
            let mut acc = 0.0;
            let mut pick = c - 1;
            for (j, p) in chunk.iter().enumerate() {
                acc += p / total;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            out[row * c + pick] = 1.0;
        }
        Ok(Tensor::from_vec(out, dims, probs.device())?.to_dtype(probs.dtype())?)
    }
}

/// Reduces a tensor of any shape to a host `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.sum_all()?.to_scalar::<f64>()?)
}

pub fn all_finite(t: &Tensor) -> Result<bool> {
    let v: Vec<f64> = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    Ok(v.iter().all(|x| x.is_finite()))
}

/// Softmax over the last axis.
pub fn softmax(t: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::softmax(t, D::Minus1)?)
}

pub fn log_softmax(t: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::log_softmax(t, D::Minus1)?)
}

/// One-hot of the most probable category in each row (ties go to the lower index).
pub fn mode_one_hot(probs: &Tensor) -> Result<Tensor> {
    let dims = probs.dims().to_vec();
    let c = *dims.last().ok_or_else(|| Error::Shape("empty probability tensor".into()))?;
    let flat: Vec<f64> = probs.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    let mut out = vec![0.0f64; flat.len()];
    for (row, chunk) in flat.chunks(c).enumerate() {
        let pick = (0..c).fold(0, |b, j| if chunk[j] > chunk[b] { j } else { b });
        out[row * c + pick] = 1.0;
    }
    Ok(Tensor::from_vec(out, dims, probs.device())?.to_dtype(probs.dtype())?)
}
