//! Dynamic embedding evolvement: each agent attends over its own embedding
//! history from earlier evolving steps.

use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::hypergraph::AffinityMatrix;
use crate::nn::{Mlp, MultiHeadAttention, ParamStore};

/// Per-rollout state carried across evolving steps.
#[derive(Debug, Clone, Default)]
pub struct EvolveState {
    /// Dynamic embeddings `[R, N, D]` of completed steps, oldest first.
    pub history: Vec<Tensor>,
    /// Affinity of the previous step, one per row.
    pub prev_affinity: Option<Vec<AffinityMatrix>>,
}

impl EvolveState {
    pub fn steps(&self) -> usize {
        self.history.len()
    }
}

/// Scalar fed to the positional map for history entry `k_prime` at step `k`.
pub fn positional_input(k_prime: usize, k: usize) -> Result<f64> {
    if k_prime >= k {
        return Err(Error::InvalidArgument(format!(
            "history entry {k_prime} is not before step {k}"
        )));
    }
    Ok(-1.0 + 2.0 * k_prime as f64 / k as f64)
}

#[derive(Debug, Clone)]
struct Block {
    attn: MultiHeadAttention,
    ffn: Mlp,
}

#[derive(Debug, Clone)]
pub struct Evolver {
    pe: Mlp,
    blocks: Vec<Block>,
    dim: usize,
}

impl Evolver {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, layers: usize, heads: usize) -> Result<Self> {
        let pe = Mlp::new(store, &format!("{name}.pe"), &[1, dim, dim])?;
        let blocks = (0..layers)
            .map(|l| {
                Ok(Block {
                    attn: MultiHeadAttention::new(store, &format!("{name}.{l}.attn"), dim, heads)?,
                    ffn: Mlp::with_bias(store, &format!("{name}.{l}.ffn"), &[dim, dim, dim], false)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { pe, blocks, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value_weights(&self) -> Vec<&Tensor> {
        self.blocks.iter().map(|b| b.attn.value_weight()).collect()
    }

    /// `p^[k'] = F_pe(-1 + 2 k' / k)` for every `k' < k`, `[k, D]`.
    pub fn positional(&self, k: usize, like: &Tensor) -> Result<Tensor> {
        let xs: Vec<f64> = (0..k).map(|kp| positional_input(kp, k)).collect::<Result<_>>()?;
        let x = Tensor::from_vec(xs, (k, 1), like.device())?.to_dtype(like.dtype())?;
        self.pe.forward(&x)
    }

    /// Evolves `v: [R, N, D]` against the history in `state`. An empty history
    /// returns `v` unchanged.
    pub fn forward(&self, v: &Tensor, state: &EvolveState) -> Result<Tensor> {
        let k = state.history.len();
        if k == 0 {
            return Ok(v.clone());
        }
        let (r, n, dim) = v.dims3()?;
        if dim != self.dim {
            return Err(Error::Shape(format!("evolver width {} vs input {dim}", self.dim)));
        }
        let pos = self.positional(k, v)?;
        let hist = Tensor::stack(&state.history, 2)?; // [R, N, k, D]
        let kv = hist
            .broadcast_add(&pos)?
            .reshape((r * n, k, dim))?;
        let mut x = v.reshape((r * n, 1, dim))?;
        for b in &self.blocks {
            let a = b.attn.forward(&x, &kv)?;
            x = ((x + &a)? + b.ffn.forward(&a)?)?;
        }
        Ok(x.reshape((r, n, dim))?)
    }
}
