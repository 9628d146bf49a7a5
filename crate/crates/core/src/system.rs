//! The prediction system: hypergraph encoder with evolvement, categorical
//! CVAE latent, GRU + GMM decoder, multiple sampling, recurrent rollout and
//! refinement.

use candle_core::{DType, Device, IndexOp, Tensor, D};
use candle_nn::{Linear, Module};
use ndarray::{Array2, Array3};

use crate::config::{Betas, ModelConfig};
use crate::error::{Error, Result};
use crate::evolve::{EvolveState, Evolver};
use crate::gmm::GmmParams;
use crate::hypergraph::{affinity, infer_topology, AffinityMatrix, MultiscaleHypergraph};
use crate::mp::{Incidence, MessagePassing, MpOutput};
use crate::nn::{self, BiLstm, GruCell, Mlp, Noise, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    #[default]
    Sample,
    Mean,
}

/// Output of one encoder pass over a window.
#[derive(Debug, Clone)]
pub struct WindowEncoding {
    /// Initial embeddings `q`, `[R, N, d]`.
    pub q: Tensor,
    pub affinity: Vec<AffinityMatrix>,
    pub graphs: Vec<MultiscaleHypergraph>,
    pub mp: MpOutput,
}

#[derive(Debug, Clone)]
pub struct Latent {
    /// `[R, N, d_z]` unnormalized.
    pub prior_logits: Tensor,
    pub posterior_logits: Option<Tensor>,
}

impl Latent {
    pub fn prior(&self) -> Result<Tensor> {
        nn::softmax(&self.prior_logits)
    }

    pub fn posterior(&self) -> Result<Option<Tensor>> {
        self.posterior_logits.as_ref().map(nn::softmax).transpose()
    }
}

/// One decoded block for `M` rows.
#[derive(Debug, Clone)]
pub struct DecodedBlock {
    /// `[M, N, T, 2]`.
    pub positions: Tensor,
    /// `[M, N, T, 2]`.
    pub velocities: Tensor,
    /// Per-step mixtures.
    pub params: Vec<GmmParams>,
}

impl DecodedBlock {
    fn select(&self, idx: &Tensor) -> Result<Self> {
        let pick = |t: &Tensor| -> Result<Tensor> { Ok(t.contiguous()?.index_select(idx, 0)?) };
        Ok(Self {
            positions: pick(&self.positions)?,
            velocities: pick(&self.velocities)?,
            params: self
                .params
                .iter()
                .map(|p| {
                    Ok(GmmParams {
                        logits: pick(&p.logits)?,
                        mu_x: pick(&p.mu_x)?,
                        mu_y: pick(&p.mu_y)?,
                        log_sigma_x: pick(&p.log_sigma_x)?,
                        log_sigma_y: pick(&p.log_sigma_y)?,
                        rho: pick(&p.rho)?,
                    })
                })
                .collect::<Result<_>>()?,
        })
    }
}

/// Per-block artifacts of a rollout.
#[derive(Debug, Clone)]
pub struct BlockOutput {
    pub start: usize,
    pub len: usize,
    pub latent: Latent,
    /// The latent sample fed to the selected candidate, `[R, N, d_z]`.
    pub z: Tensor,
    pub decoded: DecodedBlock,
    /// Chosen candidate per row (always 0 without multiple sampling).
    pub selected: Vec<usize>,
    /// ADE of every candidate, `[R][K]`, when ground truth was available.
    pub candidate_ade: Option<Vec<Vec<f64>>>,
    pub affinity: Vec<AffinityMatrix>,
}

#[derive(Debug, Clone)]
pub struct RolloutResult {
    /// `[R, N, T_f, 2]`.
    pub predicted: Tensor,
    /// `[R, N, T_f, 2]`; equals `predicted` when refinement is off.
    pub refined: Tensor,
    pub blocks: Vec<BlockOutput>,
    /// Number of topology inferences performed.
    pub topology_calls: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub mode: Mode,
    pub sample_mode: SampleMode,
    /// Candidates per block in training.
    pub k_ms: usize,
    pub t_d: usize,
}

#[derive(Debug, Clone)]
pub struct LossParts {
    pub total: Tensor,
    pub nll: f64,
    pub kl: f64,
    pub refine: f64,
}

pub struct Model {
    pub cfg: ModelConfig,
    pub past_len: usize,
    pub future_len: usize,
    f_init: Mlp,
    mp: MessagePassing,
    evolver: Evolver,
    future_enc: BiLstm,
    prior: Mlp,
    posterior: Mlp,
    gru: GruCell,
    gmm_head: Linear,
    refiner: Option<Mlp>,
    dtype: DType,
    device: Device,
}

impl Model {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, past_len: usize, future_len: usize) -> Result<Self> {
        cfg.validate()?;
        let fused = cfg.fused_dim();
        let f_init = Mlp::new(store, "init", &[2 * past_len, cfg.init_hidden, cfg.d])?;
        let mp = MessagePassing::new(store, "mp", cfg)?;
        let evolver = Evolver::new(store, "evolve", fused, cfg.evolve_layers, cfg.evolve_heads)?;
        let future_enc = BiLstm::new(store, "future", 2, cfg.future_hidden)?;
        let prior = Mlp::new(store, "prior", &[fused, cfg.latent_hidden, cfg.d_z])?;
        let posterior = Mlp::new(
            store,
            "posterior",
            &[fused + future_enc.output_dim(), cfg.latent_hidden, cfg.d_z],
        )?;
        let gru = GruCell::new(store, "gru", cfg.d_z + fused + 2, cfg.gru_hidden)?;
        let gmm_head = store.linear("gmm", cfg.gru_hidden, 6 * cfg.n_comp, true)?;
        let refiner = if cfg.refine {
            let mut dims = vec![2 * future_len];
            dims.extend(&cfg.refine_hidden);
            dims.push(2 * future_len);
            Some(Mlp::new(store, "refine", &dims)?)
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            past_len,
            future_len,
            f_init,
            mp,
            evolver,
            future_enc,
            prior,
            posterior,
            gru,
            gmm_head,
            refiner,
            dtype: store.dtype(),
            device: store.device().clone(),
        })
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn message_passing(&self) -> &MessagePassing {
        &self.mp
    }

    pub fn default_options(&self, mode: Mode) -> RolloutOptions {
        RolloutOptions {
            mode,
            sample_mode: SampleMode::Sample,
            k_ms: self.cfg.k_ms,
            t_d: self.cfg.t_d,
        }
    }

    pub fn tensor_from<D: ndarray::Dimension>(&self, a: &ndarray::Array<f64, D>) -> Result<Tensor> {
        let shape = a.shape().to_vec();
        let data: Vec<f64> = a.iter().copied().collect();
        Ok(Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?)
    }

    /// `q = f_init(window)` for `window: [R, N, T_E, 2]`.
    pub fn init_embeddings(&self, window: &Tensor) -> Result<Tensor> {
        let (r, n, t, _) = window.dims4()?;
        if t != self.past_len {
            return Err(Error::Shape(format!("window has {t} steps, expected {}", self.past_len)));
        }
        self.f_init.forward(&window.reshape((r, n, 2 * t))?)
    }

    /// Affinity, topology and message passing for one window.
    pub fn interact(
        &self,
        window: &Tensor,
        prev: Option<&[AffinityMatrix]>,
        noise: Option<&mut Noise>,
    ) -> Result<WindowEncoding> {
        let q = self.init_embeddings(window)?;
        let (r, n, d) = q.dims3()?;
        let host: Vec<f64> = q.detach().to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
        let m0 = self.cfg.pairwise_degree.unwrap_or(n.saturating_sub(1));
        let mut affs = Vec::with_capacity(r);
        let mut graphs = Vec::with_capacity(r);
        for row in 0..r {
            let qa = Array2::from_shape_vec((n, d), host[row * n * d..(row + 1) * n * d].to_vec())
                .map_err(|e| Error::Shape(e.to_string()))?;
            let a = affinity(qa.view(), prev.map(|p| &p[row]), self.cfg.alpha)?;
            graphs.push(infer_topology(a.a.view(), m0, &self.cfg.scales, self.cfg.solver)?);
            affs.push(a);
        }
        let inc: Vec<Incidence> = (0..self.cfg.num_scales())
            .map(|s| Incidence::from_hypergraphs(&graphs, s, self.dtype, &self.device))
            .collect::<Result<_>>()?;
        let mp = self.mp.forward(&q, &inc, noise)?;
        Ok(WindowEncoding {
            q,
            affinity: affs,
            graphs,
            mp,
        })
    }

    /// Encoder pass that also evolves the fused embedding and updates `state`.
    /// Returns the dynamic embedding `[R, N, D]`.
    pub fn encode_window(
        &self,
        window: &Tensor,
        state: &mut EvolveState,
        noise: Option<&mut Noise>,
    ) -> Result<(Tensor, WindowEncoding)> {
        let enc = self.interact(window, state.prev_affinity.as_deref(), noise)?;
        let dynamic = self.evolver.forward(&enc.mp.fused, state)?;
        state.history.push(dynamic.clone());
        state.prev_affinity = Some(enc.affinity.clone());
        Ok((dynamic, enc))
    }

    /// Prior and, given the ground-truth block relative to its start
    /// position (`[R, N, T, 2]`), posterior logits.
    pub fn latent(&self, dynamic: &Tensor, gt_rel: Option<&Tensor>) -> Result<Latent> {
        let prior_logits = self.prior.forward(dynamic)?;
        let posterior_logits = match gt_rel {
            Some(g) => {
                let (r, n, t, _) = g.dims4()?;
                let enc = self
                    .future_enc
                    .forward(&g.reshape((r * n, t, 2))?)?
                    .reshape((r, n, ()))?;
                Some(self.posterior.forward(&Tensor::cat(&[dynamic, &enc], D::Minus1)?)?)
            }
            None => None,
        };
        Ok(Latent {
            prior_logits,
            posterior_logits,
        })
    }

    /// Relaxed posterior sample (training) or hard prior sample (testing),
    /// `[R * K, N, d_z]` with rows ordered `r * K + k`. Testing in mean mode
    /// takes the prior's most probable category instead of a draw.
    pub fn sample_latent(
        &self,
        latent: &Latent,
        k: usize,
        mode: Mode,
        sample_mode: SampleMode,
        noise: &mut Noise,
    ) -> Result<Tensor> {
        let repeat = |t: &Tensor| -> Result<Tensor> { repeat_rows(t, k) };
        match (mode, &latent.posterior_logits) {
            (Mode::Train, Some(post)) => {
                let logp = repeat(&nn::log_softmax(post)?)?;
                let g = noise.gumbel(logp.dims(), self.dtype, &self.device)?;
                nn::softmax(&((logp + g)? / self.cfg.gumbel_temperature)?)
            }
            (Mode::Train, None) => Err(Error::Missing("ground-truth future in training mode".into())),
            (Mode::Test, _) => match sample_mode {
                SampleMode::Sample => noise.categorical_one_hot(&repeat(&latent.prior()?)?),
                SampleMode::Mean => nn::mode_one_hot(&repeat(&latent.prior()?)?),
            },
        }
    }

    /// Decodes `steps` velocities from `[M, N, E]` latent-augmented
    /// embeddings, starting at `start: [M, N, 2]`. The GRU state starts at
    /// zero.
    pub fn decode_block(
        &self,
        v_e: &Tensor,
        start: &Tensor,
        steps: usize,
        sample_mode: SampleMode,
        noise: &mut Noise,
    ) -> Result<DecodedBlock> {
        let (m, n, _) = v_e.dims3()?;
        let mut h = Tensor::zeros((m, n, self.gru.hidden()), self.dtype, &self.device)?;
        let mut pos = start.clone();
        let mut positions = Vec::with_capacity(steps);
        let mut velocities = Vec::with_capacity(steps);
        let mut params = Vec::with_capacity(steps);
        for _ in 0..steps {
            h = self.gru.step(&Tensor::cat(&[v_e, &pos], D::Minus1)?, &h)?;
            let p = GmmParams::from_raw(&self.gmm_head.forward(&h)?, self.cfg.n_comp)?;
            let vel = match sample_mode {
                SampleMode::Sample => p.sample(noise)?,
                SampleMode::Mean => p.mean()?,
            };
            pos = (pos + &vel)?;
            positions.push(pos.clone());
            velocities.push(vel);
            params.push(p);
        }
        let out = DecodedBlock {
            positions: Tensor::stack(&positions, 2)?,
            velocities: Tensor::stack(&velocities, 2)?,
            params,
        };
        if !nn::all_finite(&out.positions)? {
            return Err(Error::NonFinite("decoded trajectory".into()));
        }
        Ok(out)
    }

    /// Residual correction of the full predicted horizon, per agent.
    /// `predicted: [R, N, T_f, 2]`, `anchor: [R, N, 2]`.
    pub fn refine(&self, predicted: &Tensor, anchor: &Tensor) -> Result<Tensor> {
        let Some(refiner) = &self.refiner else {
            return Ok(predicted.clone());
        };
        let (r, n, t, _) = predicted.dims4()?;
        let rel = predicted.broadcast_sub(&anchor.unsqueeze(2)?)?;
        let delta = refiner.forward(&rel.reshape((r, n, 2 * t))?)?;
        Ok((predicted + delta.reshape((r, n, t, 2))?)?)
    }

    /// Full encode-decode rollout over the horizon.
    ///
    /// `past: [R, N, T_p, 2]`; `gt_future: [R, N, T_f, 2]` is required in
    /// training and enables candidate ADE reporting otherwise.
    pub fn rollout(
        &self,
        past: &Tensor,
        gt_future: Option<&Tensor>,
        opts: RolloutOptions,
        noise: &mut Noise,
    ) -> Result<RolloutResult> {
        let (r, n, tp, _) = past.dims4()?;
        if tp != self.past_len {
            return Err(Error::Shape(format!("past has {tp} steps, expected {}", self.past_len)));
        }
        if opts.mode == Mode::Train && gt_future.is_none() {
            return Err(Error::Missing("ground-truth future in training mode".into()));
        }
        if opts.t_d == 0 {
            return Err(Error::InvalidArgument("decoding horizon must be positive".into()));
        }
        let tf = self.future_len;
        let k = if opts.mode == Mode::Train { opts.k_ms.max(1) } else { 1 };
        let mut state = EvolveState::default();
        let mut seq = past.clone();
        let mut blocks = Vec::new();
        let mut predicted: Vec<Tensor> = Vec::new();
        let mut start = 0;
        while start < tf {
            let len = opts.t_d.min(tf - start);
            let window = seq.narrow(2, start, tp)?;
            let anchor = window.i((.., .., tp - 1, ..))?.contiguous()?;
            let mp_noise = if opts.mode == Mode::Train { Some(&mut *noise) } else { None };
            let (dynamic, enc) = self.encode_window(&window, &mut state, mp_noise)?;
            let gt_block = gt_future.map(|g| g.narrow(2, start, len)).transpose()?;
            let gt_rel = match (&gt_block, opts.mode) {
                (Some(g), Mode::Train) => Some(g.broadcast_sub(&anchor.unsqueeze(2)?)?),
                _ => None,
            };
            let latent = self.latent(&dynamic, gt_rel.as_ref())?;
            let z = self.sample_latent(&latent, k, opts.mode, opts.sample_mode, noise)?;
            let v_e = Tensor::cat(&[&z, &repeat_rows(&dynamic, k)?], D::Minus1)?;
            let decoded = self.decode_block(&v_e, &repeat_rows(&anchor, k)?, len, opts.sample_mode, noise)?;

            let candidate_ade = match &gt_block {
                Some(g) => Some(candidate_ade(&decoded.positions, g, k)?),
                None => None,
            };
            let selected: Vec<usize> = match (&candidate_ade, k) {
                (Some(ades), k) if k > 1 => ades.iter().map(|row| argmin(row)).collect(),
                _ => vec![0; r],
            };
            let (decoded, z) = if k > 1 {
                let idx: Vec<u32> = selected.iter().enumerate().map(|(i, &s)| (i * k + s) as u32).collect();
                let idx = Tensor::from_vec(idx, r, &self.device)?;
                (decoded.select(&idx)?, z.contiguous()?.index_select(&idx, 0)?)
            } else {
                (decoded, z)
            };
            predicted.push(decoded.positions.clone());
            seq = Tensor::cat(&[&seq, &decoded.positions], 2)?;
            blocks.push(BlockOutput {
                start,
                len,
                latent,
                z,
                decoded,
                selected,
                candidate_ade,
                affinity: enc.affinity,
            });
            start += len;
        }
        let predicted = Tensor::cat(&predicted, 2)?;
        let last_obs = past.i((.., .., tp - 1, ..))?.contiguous()?;
        let refined = self.refine(&predicted, &last_obs)?;
        debug_assert_eq!(predicted.dims(), &[r, n, tf, 2]);
        Ok(RolloutResult {
            predicted,
            refined,
            topology_calls: blocks.len(),
            blocks,
        })
    }

    /// Training objective averaged over rows:
    /// `b1 * sum NLL + b2 * sum KL + b3 * |refined - gt|^2`.
    pub fn loss(&self, out: &RolloutResult, past: &Tensor, gt_future: &Tensor, betas: Betas) -> Result<LossParts> {
        let (r, _, tp, _) = past.dims4()?;
        let last_obs = past.i((.., .., tp - 1..tp, ..))?;
        let prev = Tensor::cat(&[&last_obs, &gt_future.narrow(2, 0, self.future_len - 1)?], 2)?;
        let gt_vel = (gt_future - prev)?;
        let zero = Tensor::zeros(r, self.dtype, &self.device)?;
        let mut nll = zero.clone();
        let mut kl = zero.clone();
        for b in &out.blocks {
            for (l, p) in b.decoded.params.iter().enumerate() {
                let target = gt_vel.i((.., .., b.start + l, ..))?.contiguous()?;
                nll = (nll + p.nll(&target)?.sum(1)?)?;
            }
            if let Some(post) = &b.latent.posterior_logits {
                kl = (kl + categorical_kl(post, &b.latent.prior_logits)?.sum(1)?)?;
            }
        }
        let refine = (&out.refined - gt_future)?.sqr()?.sum((1, 2, 3))?;
        let total = (((&nll * betas.nll)? + (&kl * betas.kl)?)? + (&refine * betas.refine)?)?.mean(0)?;
        Ok(LossParts {
            nll: nn::scalar(&nll)? / r as f64,
            kl: nn::scalar(&kl)? / r as f64,
            refine: nn::scalar(&refine)? / r as f64,
            total,
        })
    }
}

/// `KL(q || p)` between categorical rows given as logits, `[..]`; clamped at
/// zero against rounding.
pub fn categorical_kl(q_logits: &Tensor, p_logits: &Tensor) -> Result<Tensor> {
    let lq = nn::log_softmax(q_logits)?;
    let lp = nn::log_softmax(p_logits)?;
    Ok((lq.exp()? * (&lq - lp)?)?.sum(D::Minus1)?.relu()?)
}

/// Repeats every row of the leading axis `k` times, giving `r * k + j`
/// ordering.
pub fn repeat_rows(t: &Tensor, k: usize) -> Result<Tensor> {
    if k == 1 {
        return Ok(t.clone());
    }
    let dims = t.dims();
    let mut expanded = vec![dims[0], k];
    expanded.extend_from_slice(&dims[1..]);
    let mut merged = vec![dims[0] * k];
    merged.extend_from_slice(&dims[1..]);
    Ok(t.unsqueeze(1)?.broadcast_as(expanded)?.contiguous()?.reshape(merged)?)
}

/// Mean displacement of each of the `k` candidates per row, `[R][K]`.
fn candidate_ade(candidates: &Tensor, gt: &Tensor, k: usize) -> Result<Vec<Vec<f64>>> {
    let diff = candidates.broadcast_sub(&repeat_rows(gt, k)?)?.detach();
    let dist = diff.sqr()?.sum(D::Minus1)?.sqrt()?.mean((1, 2))?;
    let v: Vec<f64> = dist.to_dtype(DType::F64)?.to_vec1()?;
    Ok(v.chunks(k).map(|c| c.to_vec()).collect())
}

pub fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Host copy `[R, N, T, 2]` of a tensor.
pub fn to_host4(t: &Tensor) -> Result<ndarray::Array4<f64>> {
    let dims = t.dims4()?;
    let v: Vec<f64> = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    ndarray::Array4::from_shape_vec(dims, v).map_err(|e| Error::Shape(e.to_string()))
}

pub fn to_host3(t: &Tensor) -> Result<Array3<f64>> {
    let dims = t.dims3()?;
    let v: Vec<f64> = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    Array3::from_shape_vec(dims, v).map_err(|e| Error::Shape(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;

    pub(crate) fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d: 8,
            d_z: 4,
            scales: vec![3],
            categories_pairwise: 2,
            categories_group: 3,
            mp_iters: 1,
            init_hidden: 8,
            category_hidden: 8,
            edge_hidden: 8,
            evolve_layers: 1,
            evolve_heads: 2,
            future_hidden: 4,
            latent_hidden: 8,
            gru_hidden: 8,
            refine_hidden: vec![8],
            n_comp: 2,
            t_d: 2,
            k_ms: 3,
            ..ModelConfig::default()
        }
    }

    fn host(t: &Tensor) -> Vec<f64> {
        t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
    }

    fn setup(dtype: DType) -> (ParamStore, Model, Tensor, Tensor) {
        let mut store = ParamStore::new(11, dtype);
        let model = Model::new(&mut store, &tiny_cfg(), 4, 5).unwrap();
        let all = store.uniform("data", &[2, 3, 9, 2], 1.0).unwrap();
        let past = all.narrow(2, 0, 4).unwrap();
        let fut = all.narrow(2, 4, 5).unwrap();
        (store, model, past, fut)
    }

    #[test]
    fn rollout_shapes_and_blocks() {
        let (_s, model, past, fut) = setup(DType::F64);
        let mut noise = Noise::new(0);
        let opts = model.default_options(Mode::Train);
        let out = model.rollout(&past, Some(&fut), opts, &mut noise).unwrap();
        assert_eq!(out.predicted.dims(), &[2, 3, 5, 2]);
        assert_eq!(out.blocks.len(), 3);
        assert_eq!(out.blocks[2].len, 1);
        assert_eq!(out.topology_calls, 3);
        for b in &out.blocks {
            let ades = b.candidate_ade.as_ref().unwrap();
            for (row, &s) in ades.iter().zip(&b.selected) {
                let mean = row.iter().sum::<f64>() / row.len() as f64;
                assert!(row[s] <= mean + 1e-12);
            }
        }
        let loss = model.loss(&out, &past, &fut, Betas { nll: 1.0, kl: 1.0, refine: 1.0 }).unwrap();
        assert!(loss.kl >= 0.0);
        assert!(nn::scalar(&loss.total).unwrap().is_finite());
    }

    #[test]
    fn static_variant_infers_topology_once() {
        let (_s, model, past, fut) = setup(DType::F64);
        let mut opts = model.default_options(Mode::Train);
        opts.t_d = 5;
        let out = model.rollout(&past, Some(&fut), opts, &mut Noise::new(1)).unwrap();
        assert_eq!(out.topology_calls, 1);
    }

    #[test]
    fn telescoping_positions() {
        let (_s, model, past, _) = setup(DType::F64);
        let opts = model.default_options(Mode::Test);
        let out = model.rollout(&past, None, opts, &mut Noise::new(2)).unwrap();
        for b in &out.blocks {
            let start = if b.start == 0 {
                past.narrow(2, 3, 1).unwrap()
            } else {
                out.predicted.narrow(2, b.start - 1, 1).unwrap()
            };
            let cum = b.decoded.velocities.cumsum(2).unwrap();
            let rebuilt = cum.broadcast_add(&start).unwrap();
            let diff = host(&(rebuilt - &b.decoded.positions).unwrap());
            assert!(diff.iter().all(|d| d.abs() < 1e-9));
        }
    }

    #[test]
    fn mean_mode_test_rollout_is_deterministic() {
        let (_s, model, past, _) = setup(DType::F64);
        let mut opts = model.default_options(Mode::Test);
        opts.sample_mode = SampleMode::Mean;
        // Prior mode plus mixture means leave nothing to the noise stream.
        let a = model.rollout(&past, None, opts, &mut Noise::new(5)).unwrap();
        let b = model.rollout(&past, None, opts, &mut Noise::new(6)).unwrap();
        assert_eq!(host(&a.refined), host(&b.refined));
    }

    #[test]
    fn training_requires_future() {
        let (_s, model, past, _) = setup(DType::F64);
        let opts = model.default_options(Mode::Train);
        assert!(model.rollout(&past, None, opts, &mut Noise::new(0)).is_err());
    }

    #[test]
    fn kl_examples() {
        let p = Tensor::from_vec(vec![0.3f64, -1.0, 2.0], (1, 3), &Device::Cpu).unwrap();
        assert!(host(&categorical_kl(&p, &p).unwrap())[0].abs() < 1e-12);
        let q = Tensor::from_vec(vec![1.0f64, 0.0, 0.0], (1, 3), &Device::Cpu).unwrap();
        let kl = host(&categorical_kl(&q, &p).unwrap())[0];
        let lq: Vec<f64> = {
            let m = [1.0f64, 0.0, 0.0];
            let z: f64 = m.iter().map(|v| v.exp()).sum();
            m.iter().map(|v| v - z.ln()).collect()
        };
        let lp: Vec<f64> = {
            let m = [0.3f64, -1.0, 2.0];
            let z: f64 = m.iter().map(|v| v.exp()).sum();
            m.iter().map(|v| v - z.ln()).collect()
        };
        let direct: f64 = (0..3).map(|i| lq[i].exp() * (lq[i] - lp[i])).sum();
        assert!((kl - direct).abs() < 1e-12);
    }

    #[test]
    fn degenerate_posterior_gives_one_hot_sample() {
        let (_s, model, _, _) = setup(DType::F64);
        let big = Tensor::from_vec(vec![1e4f64, 0.0, 0.0, 0.0], (1, 1, 4), &Device::Cpu).unwrap();
        let latent = Latent {
            prior_logits: big.clone(),
            posterior_logits: Some(big),
        };
        let z = model.sample_latent(&latent, 1, Mode::Train, SampleMode::Sample, &mut Noise::new(0)).unwrap();
        let z = host(&z);
        assert!((z[0] - 1.0).abs() < 1e-9);
        let z = host(&model.sample_latent(&latent, 1, Mode::Test, SampleMode::Sample, &mut Noise::new(0)).unwrap());
        assert_eq!(z, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_refiner_is_identity() {
        let (store, model, past, _) = setup(DType::F64);
        for (name, var) in store.named_vars() {
            if name.starts_with("refine.") {
                var.set(&var.zeros_like().unwrap()).unwrap();
            }
        }
        let pred = store.get("data").unwrap().narrow(2, 0, 5).unwrap();
        let anchor = past.i((.., .., 3, ..)).unwrap();
        let out = model.refine(&pred, &anchor).unwrap();
        assert_eq!(out.dims(), pred.dims());
        assert_eq!(host(&out), host(&pred));
    }

    #[test]
    fn repeat_rows_order() {
        let t = Tensor::from_vec(vec![1.0f64, 2.0], (2, 1), &Device::Cpu).unwrap();
        assert_eq!(host(&repeat_rows(&t, 3).unwrap()), vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    }
}
