//! Training loop, checkpoints and batched evaluation.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::Tensor;
use candle_nn::optim::{AdamW, Optimizer, ParamsAdamW};
use ndarray::{s, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, TrainConfig};
use crate::data::{make_batches, make_batches_ordered, Batch, NormalizeConfig, Scene};
use crate::error::{Error, Result};
use crate::nn::{self, Noise, ParamStore};
use crate::system::{repeat_rows, to_host4, Mode, Model, SampleMode};

use super::metrics::{MetricAccumulator, MetricReport};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Metadata stored next to the parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelConfig,
    pub past_len: usize,
    pub future_len: usize,
    pub normalize: Option<NormalizeConfig>,
    /// Last completed epoch, 1-based.
    pub epoch: usize,
    pub best_val: Option<f64>,
    pub best_epoch: Option<usize>,
}

impl Checkpoint {
    /// Writes `<stem>.json` and `<stem>.safetensors` in `dir`.
    pub fn save(&self, store: &ParamStore, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        store.save(&dir.join(format!("{stem}.safetensors")))?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self> {
        let path = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Missing(format!("checkpoint {}: {e}", path.display())))?;
        let c: Checkpoint = serde_json::from_str(&text)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("checkpoint version {} is not supported", c.version)));
        }
        Ok(c)
    }

    /// Rebuilds the model and loads its parameters.
    pub fn load_model(dir: &Path, stem: &str) -> Result<(Self, ParamStore, Model)> {
        let c = Self::read(dir, stem)?;
        let mut store = ParamStore::new(0, c.model.precision.dtype());
        let model = Model::new(&mut store, &c.model, c.past_len, c.future_len)?;
        store.load(&dir.join(format!("{stem}.safetensors")))?;
        Ok((c, store, model))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub nll: f64,
    pub kl: f64,
    pub refine: f64,
    /// Weighted objective, as optimized.
    pub total: f64,
    pub val_min_ade: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub normalize: Option<NormalizeConfig>,
    /// Where `best.*`, `last.*` and `loss.csv` go; nothing is written if unset.
    pub out_dir: Option<PathBuf>,
    /// Epochs already completed (resumption).
    pub start_epoch: usize,
    pub best_val: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Run a single batch end to end and stop.
    pub dry_run: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub best_val: Option<f64>,
    pub best_epoch: Option<usize>,
}

fn row_tensors(model: &Model, batch: &Batch) -> Result<(Tensor, Tensor)> {
    let past = batch.positions.slice(s![.., .., ..batch.past_len, ..]).to_owned();
    let fut = batch.positions.slice(s![.., .., batch.past_len.., ..]).to_owned();
    Ok((model.tensor_from(&past)?, model.tensor_from(&fut)?))
}

fn epoch_seed(seed: u64, epoch: usize, salt: u64) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt
}

/// Runs the schedule from `opts.start_epoch + 1` to `cfg.epochs`, calling
/// `on_epoch` after every epoch.
pub fn train(
    model: &Model,
    store: &ParamStore,
    train_set: &[Scene],
    val_set: &[Scene],
    cfg: &TrainConfig,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Missing("training split is empty".into()));
    }
    if val_set.is_empty() && !opts.dry_run {
        return Err(Error::Missing("validation split is empty".into()));
    }
    let mut opt = AdamW::new(
        store.vars(),
        ParamsAdamW {
            lr: cfg.lr_at(opts.start_epoch + 1),
            weight_decay: 0.0,
            ..Default::default()
        },
    )?;
    let val_limit = if cfg.val_limit == 0 { val_set.len() } else { cfg.val_limit.min(val_set.len()) };
    let val = &val_set[..val_limit];
    let mut outcome = TrainOutcome {
        logs: Vec::new(),
        best_val: opts.best_val,
        best_epoch: opts.best_epoch,
    };
    let mut ckpt = Checkpoint {
        version: CHECKPOINT_VERSION,
        model: model.cfg.clone(),
        past_len: model.past_len,
        future_len: model.future_len,
        normalize: opts.normalize,
        epoch: opts.start_epoch,
        best_val: opts.best_val,
        best_epoch: opts.best_epoch,
    };
    let train_opts = model.default_options(Mode::Train);
    for epoch in opts.start_epoch + 1..=cfg.epochs {
        let started = Instant::now();
        let lr = cfg.lr_at(epoch);
        opt.set_learning_rate(lr);
        let betas = cfg.betas_at(epoch);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(cfg.seed, epoch, 1)));
        let batches = make_batches_ordered(train_set, &order, cfg.batch_size, opts.normalize);
        let mut noise = Noise::new(epoch_seed(cfg.seed, epoch, 2));
        let mut sums = [0.0f64; 4];
        let mut rows = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let (past, fut) = row_tensors(model, batch)?;
            let non_finite = |e: Error| match e {
                Error::NonFinite(_) | Error::NonFiniteMessage { .. } => Error::NonFiniteLoss { epoch, batch: bi },
                other => other,
            };
            let out = model
                .rollout(&past, Some(&fut), train_opts, &mut noise)
                .map_err(non_finite)?;
            let parts = model.loss(&out, &past, &fut, betas)?;
            let total = nn::scalar(&parts.total)?;
            if !total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            opt.backward_step(&parts.total)?;
            let b = batch.size() as f64;
            sums[0] += parts.nll * b;
            sums[1] += parts.kl * b;
            sums[2] += parts.refine * b;
            sums[3] += total * b;
            rows += batch.size();
            if opts.dry_run {
                break;
            }
        }
        let rows = rows.max(1) as f64;
        let val_min_ade = if opts.dry_run {
            None
        } else {
            let report = evaluate(
                model,
                val,
                &EvalOptions {
                    k: cfg.val_k.max(1),
                    sample_mode: SampleMode::Sample,
                    batch_size: cfg.batch_size,
                    seed: cfg.seed,
                    normalize: opts.normalize,
                },
            )?;
            Some(report.min_ade)
        };
        let log = EpochLog {
            epoch,
            lr,
            nll: sums[0] / rows,
            kl: sums[1] / rows,
            refine: sums[2] / rows,
            total: sums[3] / rows,
            val_min_ade,
            seconds: started.elapsed().as_secs_f64(),
        };
        ckpt.epoch = epoch;
        let improved = match (val_min_ade, outcome.best_val) {
            (Some(v), Some(b)) => v < b,
            (Some(_), None) => true,
            _ => false,
        };
        if improved {
            outcome.best_val = val_min_ade;
            outcome.best_epoch = Some(epoch);
            ckpt.best_val = val_min_ade;
            ckpt.best_epoch = Some(epoch);
        }
        if let Some(dir) = &opts.out_dir {
            if improved {
                ckpt.save(store, dir, "best")?;
            }
            ckpt.save(store, dir, "last")?;
            append_loss_csv(&dir.join("loss.csv"), &log, betas.refine)?;
        }
        on_epoch(&log);
        outcome.logs.push(log);
        if opts.dry_run {
            break;
        }
    }
    Ok(outcome)
}

/// Appends `(epoch, component, value)` rows; the refine row is the weighted
/// contribution so a zero weight shows as zero.
fn append_loss_csv(path: &Path, log: &EpochLog, refine_weight: f64) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "epoch,component,value")?;
    }
    let mut rows = vec![
        ("nll", log.nll),
        ("kl", log.kl),
        ("refine", log.refine * refine_weight),
        ("total", log.total),
        ("lr", log.lr),
    ];
    if let Some(v) = log.val_min_ade {
        rows.push(("val_min_ade", v));
    }
    for (name, v) in rows {
        writeln!(f, "{},{name},{v}", log.epoch)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub k: usize,
    pub sample_mode: SampleMode,
    pub batch_size: usize,
    pub seed: u64,
    pub normalize: Option<NormalizeConfig>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            k: 20,
            sample_mode: SampleMode::Sample,
            batch_size: 32,
            seed: 0,
            normalize: None,
        }
    }
}

/// `K` refined predictions per scene of `batch`, in the data frame,
/// each `K × N × T_f × 2`.
pub fn predict_batch(
    model: &Model,
    batch: &Batch,
    k: usize,
    sample_mode: SampleMode,
    noise: &mut Noise,
) -> Result<Vec<Array4<f64>>> {
    let k = k.max(1);
    let past = batch.positions.slice(s![.., .., ..batch.past_len, ..]).to_owned();
    let past = repeat_rows(&model.tensor_from(&past)?, k)?;
    let mut opts = model.default_options(Mode::Test);
    opts.sample_mode = sample_mode;
    let out = model.rollout(&past, None, opts, noise)?;
    let host = to_host4(&out.refined)?;
    let (_, n, tf, _) = host.dim();
    let norm = &batch.normalization;
    Ok((0..batch.size())
        .map(|b| {
            let mut p = Array4::zeros((k, n, tf, 2));
            for j in 0..k {
                for i in 0..n {
                    for t in 0..tf {
                        let row = b * k + j;
                        let q = norm.denormalize_point(b, [host[[row, i, t, 0]], host[[row, i, t, 1]]]);
                        p[[j, i, t, 0]] = q[0];
                        p[[j, i, t, 1]] = q[1];
                    }
                }
            }
            p
        })
        .collect())
}

/// Best-of-K metrics of refined test-mode predictions over `scenes`.
pub fn evaluate(model: &Model, scenes: &[Scene], opts: &EvalOptions) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(opts.k.max(1), model.future_len);
    for (bi, batch) in make_batches(scenes, opts.batch_size, opts.normalize).iter().enumerate() {
        let mut noise = Noise::new(epoch_seed(opts.seed, bi, 3));
        let preds = predict_batch(model, batch, opts.k, opts.sample_mode, &mut noise)?;
        for (p, &i) in preds.iter().zip(&batch.indices) {
            acc.add(p.view(), scenes[i].future())?;
        }
    }
    Ok(acc.finish())
}
