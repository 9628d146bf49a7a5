//! Multiscale hypergraph message passing with interaction strength and
//! category.
//!
//! Tensors are batched as `[R, N, ..]` over `R` independent rows (scenes or
//! scene samples). A hyperedge is a column of the incidence matrix `H`
//! (`[R, N, E]`), and member sums are `H^T v`.

use candle_core::{DType, Device, Tensor, D};
use candle_nn::{Linear, Module};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::hypergraph::MultiscaleHypergraph;
use crate::nn::{self, Mlp, Noise, ParamStore, StackedMlp};

/// Incidence of one scale for every row, with its transpose.
#[derive(Debug, Clone)]
pub struct Incidence {
    /// `[R, N, E]`.
    pub h: Tensor,
    /// `[R, E, N]`.
    pub ht: Tensor,
}

impl Incidence {
    /// Builds the scale-`s` incidence of every hypergraph. All hypergraphs
    /// must share `N` and the edge count.
    pub fn from_hypergraphs(
        graphs: &[MultiscaleHypergraph],
        scale: usize,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| Error::InvalidArgument("no hypergraphs given".into()))?
            .incidence(scale);
        let (n, e) = first.dim();
        let mut data = Vec::with_capacity(graphs.len() * n * e);
        for g in graphs {
            let m = g.incidence(scale);
            if m.dim() != (n, e) {
                return Err(Error::Shape(format!(
                    "incidence {:?} differs from {:?} within a batch",
                    m.dim(),
                    (n, e)
                )));
            }
            for i in 0..n {
                if m.row(i).sum() == 0.0 {
                    return Err(Error::IsolatedNode(i));
                }
            }
            data.extend(m.iter().copied());
        }
        let h = Tensor::from_vec(data, (graphs.len(), n, e), device)?.to_dtype(dtype)?;
        let ht = h.transpose(1, 2)?.contiguous()?;
        Ok(Self { h, ht })
    }

    pub fn from_tensor(h: Tensor) -> Result<Self> {
        let ht = h.transpose(1, 2)?.contiguous()?;
        Ok(Self { h, ht })
    }

    pub fn num_edges(&self) -> usize {
        self.h.dims()[2]
    }
}

/// Learnable maps of one scale.
#[derive(Debug, Clone)]
pub struct ScaleParams {
    /// `F_w` first layer, split over its two inputs `[v_j, sum_m v_m]`.
    fw_member: Linear,
    fw_sum: Linear,
    fw_out: Linear,
    fr: Mlp,
    fc: Mlp,
    /// The `L` per-category functions `F_l`.
    fl: StackedMlp,
    fv: Mlp,
    categories: usize,
}

impl ScaleParams {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, categories: usize) -> Result<Self> {
        let (d, h) = (cfg.d, cfg.edge_hidden);
        Ok(Self {
            fw_member: store.linear(&format!("{name}.fw.member"), d, h, true)?,
            fw_sum: store.linear(&format!("{name}.fw.sum"), d, h, false)?,
            fw_out: store.linear(&format!("{name}.fw.out"), h, 1, true)?,
            fr: Mlp::new(store, &format!("{name}.fr"), &[d, h, 1])?,
            fc: Mlp::new(store, &format!("{name}.fc"), &[d, h, categories])?,
            fl: StackedMlp::new(
                store,
                &format!("{name}.fl"),
                categories,
                &[d, cfg.category_hidden, cfg.category_hidden, d],
            )?,
            fv: Mlp::new(store, &format!("{name}.fv"), &[2 * d, h, d])?,
            categories,
        })
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    /// Member weights `w_je = F_w(v_j, sum_e)` masked by membership,
    /// `[R, E, N]`.
    pub fn member_weights(&self, v: &Tensor, sum: &Tensor, ht: &Tensor) -> Result<Tensor> {
        let a = self.fw_member.forward(v)?.unsqueeze(1)?;
        let b = self.fw_sum.forward(sum)?.unsqueeze(2)?;
        let hidden = a.broadcast_add(&b)?.relu()?.contiguous()?;
        let w = self.fw_out.forward(&hidden)?.squeeze(3)?;
        Ok((w * ht)?)
    }

    /// Node-to-hyperedge phase for every hyperedge.
    pub fn interact(&self, v: &Tensor, inc: &Incidence, gumbel: Option<&Tensor>, temperature: f64) -> Result<Interaction> {
        let (r_rows, _, d) = v.dims3()?;
        let e = inc.num_edges();
        let sum = inc.ht.matmul(v)?;
        let weights = self.member_weights(v, &sum, &inc.ht)?;
        let z = weights.matmul(v)?;
        let strength = candle_nn::ops::sigmoid(&self.fr.forward(&z)?)?;
        let mut logits = self.fc.forward(&z)?;
        if let Some(g) = gumbel {
            logits = (logits + g)?;
        }
        let category = nn::softmax(&(logits / temperature)?)?;
        let l = self.categories;
        let per_cat = self.fl.forward(&sum.reshape((r_rows * e, d))?)?;
        let mix_w = category.reshape((r_rows * e, l))?.t()?.unsqueeze(2)?;
        let mixed = per_cat.broadcast_mul(&mix_w)?.sum(0)?.reshape((r_rows, e, d))?;
        let embedding = mixed.broadcast_mul(&strength)?;
        Ok(Interaction {
            strength: strength.squeeze(2)?,
            category,
            embedding,
        })
    }

    /// Hyperedge-to-node phase: `v <- f_v([v, H e])`.
    pub fn update(&self, v: &Tensor, inc: &Incidence, embedding: &Tensor) -> Result<Tensor> {
        let agg = inc.h.matmul(embedding)?;
        self.fv.forward(&Tensor::cat(&[v, &agg], D::Minus1)?)
    }
}

/// Outputs of one node-to-hyperedge phase.
#[derive(Debug, Clone)]
pub struct Interaction {
    /// `[R, E]`, in `(0, 1)`.
    pub strength: Tensor,
    /// `[R, E, L]`, rows on the simplex.
    pub category: Tensor,
    /// `[R, E, d]`.
    pub embedding: Tensor,
}

#[derive(Debug, Clone)]
pub struct MpOutput {
    /// `[R, N, d]` per scale, scale 0 first.
    pub per_scale: Vec<Tensor>,
    /// `[R, N, d (S + 1)]`.
    pub fused: Tensor,
    /// Final-iteration interactions per scale.
    pub records: Vec<Interaction>,
}

#[derive(Debug, Clone)]
pub struct MessagePassing {
    scales: Vec<ScaleParams>,
    iters: usize,
    temperature: f64,
}

impl MessagePassing {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let scales = (0..cfg.num_scales())
            .map(|s| ScaleParams::new(store, &format!("{name}.s{s}"), cfg, cfg.categories(s)))
            .collect::<Result<_>>()?;
        Ok(Self {
            scales,
            iters: cfg.mp_iters,
            temperature: cfg.gumbel_temperature,
        })
    }

    pub fn scale(&self, s: usize) -> &ScaleParams {
        &self.scales[s]
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    /// Runs every scale from the shared initial embedding `q: [R, N, d]`.
    /// Gumbel noise is drawn from `noise` when given (training).
    pub fn forward(&self, q: &Tensor, incidence: &[Incidence], mut noise: Option<&mut Noise>) -> Result<MpOutput> {
        if incidence.len() != self.scales.len() {
            return Err(Error::Shape(format!(
                "{} incidence scales for {} parameter scales",
                incidence.len(),
                self.scales.len()
            )));
        }
        let mut per_scale = Vec::with_capacity(self.scales.len());
        let mut records = Vec::with_capacity(self.scales.len());
        for (s, (params, inc)) in self.scales.iter().zip(incidence).enumerate() {
            let mut v = q.clone();
            let mut last = None;
            for it in 0..self.iters {
                let g = match noise.as_deref_mut() {
                    Some(n) => {
                        let shape = [q.dims()[0], inc.num_edges(), params.categories];
                        Some(n.gumbel(&shape, q.dtype(), q.device())?)
                    }
                    None => None,
                };
                let rec = params.interact(&v, inc, g.as_ref(), self.temperature)?;
                v = params.update(&v, inc, &rec.embedding)?;
                if !nn::all_finite(&v)? {
                    return Err(Error::NonFiniteMessage {
                        scale: s,
                        iteration: it,
                    });
                }
                last = Some(rec);
            }
            per_scale.push(v);
            records.push(last.expect("at least one iteration"));
        }
        let fused = Tensor::cat(&per_scale, D::Minus1)?;
        Ok(MpOutput {
            per_scale,
            fused,
            records,
        })
    }
}

/// Host copy of one hyperedge's final-iteration interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub step: usize,
    pub scale: usize,
    pub hyperedge: usize,
    pub members: Vec<usize>,
    pub strength: f64,
    pub category: Vec<f64>,
    pub argmax: usize,
}

/// Extracts records of row `row` for every scale.
pub fn records_for_row(
    out: &[Interaction],
    graph: &MultiscaleHypergraph,
    row: usize,
    step: usize,
) -> Result<Vec<InteractionRecord>> {
    let mut recs = Vec::new();
    for (s, inter) in out.iter().enumerate() {
        let r: Vec<f64> = inter.strength.get(row)?.to_dtype(DType::F64)?.to_vec1()?;
        let c: Vec<Vec<f64>> = inter.category.get(row)?.to_dtype(DType::F64)?.to_vec2()?;
        for (e, (strength, category)) in r.into_iter().zip(c).enumerate() {
            let argmax = argmax(&category);
            recs.push(InteractionRecord {
                step,
                scale: s,
                hyperedge: e,
                members: graph.members(s, e),
                strength,
                category,
                argmax,
            });
        }
    }
    Ok(recs)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
