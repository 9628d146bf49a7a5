//! Run configuration, serialized as TOML.

use std::path::{Path, PathBuf};

use candle_core::DType;
use serde::{Deserialize, Serialize};

use crate::data::{NormalizeConfig, SplitFractions};
use crate::error::{Error, Result};
use crate::hypergraph::SolverMode;
use crate::sim::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Per-scale feature width `d`.
    pub d: usize,
    pub d_z: usize,
    /// Neighbors per node at the pairwise scale; `None` means `N - 1`.
    pub pairwise_degree: Option<usize>,
    /// Group sizes for scales `1..=S`.
    pub scales: Vec<usize>,
    pub categories_pairwise: usize,
    pub categories_group: usize,
    pub gumbel_temperature: f64,
    pub alpha: f64,
    pub mp_iters: usize,
    pub solver: SolverMode,
    /// Hidden width of `f_init`.
    pub init_hidden: usize,
    /// Hidden width of the per-category functions.
    pub category_hidden: usize,
    /// Hidden width of `F_w`, `F_r`, `F_c` and `f_v`.
    pub edge_hidden: usize,
    pub evolve_layers: usize,
    pub evolve_heads: usize,
    pub future_hidden: usize,
    pub latent_hidden: usize,
    pub gru_hidden: usize,
    pub refine_hidden: Vec<usize>,
    pub n_comp: usize,
    /// Decoding horizon `T_D`, equal to the evolving gap.
    pub t_d: usize,
    pub k_ms: usize,
    pub refine: bool,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 32,
            d_z: 20,
            pairwise_degree: None,
            scales: vec![2, 5, 11],
            categories_pairwise: 6,
            categories_group: 10,
            gumbel_temperature: 0.5,
            alpha: 0.2,
            mp_iters: 3,
            solver: SolverMode::Auto,
            init_hidden: 64,
            category_hidden: 128,
            edge_hidden: 64,
            evolve_layers: 2,
            evolve_heads: 8,
            future_hidden: 32,
            latent_hidden: 64,
            gru_hidden: 128,
            refine_hidden: vec![256, 512],
            n_comp: 3,
            t_d: 5,
            k_ms: 5,
            refine: true,
            precision: Precision::F32,
        }
    }
}

impl ModelConfig {
    pub fn num_scales(&self) -> usize {
        1 + self.scales.len()
    }

    /// Width of the fused embedding, `d (S + 1)`.
    pub fn fused_dim(&self) -> usize {
        self.d * self.num_scales()
    }

    pub fn categories(&self, scale: usize) -> usize {
        if scale == 0 {
            self.categories_pairwise
        } else {
            self.categories_group
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d == 0 || self.d_z == 0 {
            return bad("d and d_z must be positive".into());
        }
        if self.fused_dim() % self.evolve_heads.max(1) != 0 || self.evolve_heads == 0 {
            return bad(format!(
                "fused width {} must be divisible by evolve_heads {}",
                self.fused_dim(),
                self.evolve_heads
            ));
        }
        if self.mp_iters == 0 {
            return bad("mp_iters must be at least 1".into());
        }
        if self.t_d == 0 || self.k_ms == 0 || self.n_comp == 0 {
            return bad("t_d, k_ms and n_comp must be positive".into());
        }
        if self.categories_pairwise == 0 || self.categories_group == 0 {
            return bad("category counts must be positive".into());
        }
        if self.gumbel_temperature <= 0.0 || self.alpha < 0.0 {
            return bad("gumbel_temperature must be positive and alpha non-negative".into());
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) || self.scales.iter().any(|&m| m < 2) {
            return bad(format!("scales must be strictly increasing and >= 2, got {:?}", self.scales));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Betas {
    pub nll: f64,
    pub kl: f64,
    pub refine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay_every: usize,
    pub lr_decay: f64,
    pub epochs: usize,
    /// Last epoch (1-based) trained with `betas_early`.
    pub switch_epoch: usize,
    pub betas_early: Betas,
    pub betas_late: Betas,
    pub batch_size: usize,
    pub seed: u64,
    /// Scenes of the validation split used for checkpoint selection; 0 = all.
    pub val_limit: usize,
    /// Samples per scene when measuring validation minADE.
    pub val_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            lr_decay_every: 10,
            lr_decay: 0.9,
            epochs: 150,
            switch_epoch: 80,
            betas_early: Betas {
                nll: 1.0,
                kl: 1.0,
                refine: 0.0,
            },
            betas_late: Betas {
                nll: 1.0,
                kl: 1.0,
                refine: 1.0,
            },
            batch_size: 32,
            seed: 0,
            val_limit: 0,
            val_k: 20,
        }
    }
}

impl TrainConfig {
    /// Learning rate for 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = (epoch.max(1) - 1) / self.lr_decay_every.max(1);
        self.lr * self.lr_decay.powi(decays as i32)
    }

    pub fn betas_at(&self, epoch: usize) -> Betas {
        if epoch <= self.switch_epoch {
            self.betas_early
        } else {
            self.betas_late
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.switch_epoch >= self.epochs {
            return Err(Error::Config(format!(
                "switch_epoch {} must be below epochs {}",
                self.switch_epoch, self.epochs
            )));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset file (JSON lines from `gen`). Required by `train`.
    /// `scenario` is descriptive only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub past_len: usize,
    pub future_len: usize,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize: Option<NormalizeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.past_len == 0 || self.data.future_len == 0 {
            return Err(Error::Config("past_len and future_len must be positive".into()));
        }
        self.model.validate()?;
        self.train.validate()
    }
}
