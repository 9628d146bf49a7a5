use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hypertraj::config::RunConfig;
use hypertraj::data::{load_dataset, split, Relations, Scene, Split};
use hypertraj::nn::ParamStore;
use hypertraj::sim::{self, Scenario};
use hypertraj::system::{Model, SampleMode};
use hypertraj::train_eval::reasoning::{self, SceneTrace, StrengthCurve};
use hypertraj::train_eval::{
    category_observations, eval_category, eval_groups, eval_strength, evaluate, reason as trace, strength_curves,
    train as run_training, CategoryReport, Checkpoint, EvalOptions, GroupReport, Matching, StrengthReport,
    TrainOptions,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{SampleModeArg, OUT_ENV};

/// Resolves relative output paths against `$HYPERTRAJ_OUT` when it is set.
pub fn resolve_out(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(root) if p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn manifest(command: &str, body: serde_json::Value) -> serde_json::Value {
    json!({
        "tool": "hypertraj",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "parameters": body,
    })
}

pub fn gen(scenario: Scenario, count: usize, seed: u64, len: Option<usize>, workers: usize, out: &Path) -> Result<()> {
    if count == 0 {
        bail!("--count must be at least 1");
    }
    let out = resolve_out(out);
    let len = len.unwrap_or_else(|| scenario.default_len());
    let records = sim::generate_records(scenario, seed, count, len, workers.max(1))?;
    sim::write_jsonl(&out, &records)?;
    write_json(
        &manifest_path(&out),
        &manifest(
            "gen",
            json!({ "scenario": scenario, "count": count, "seed": seed, "len": len, "output": out }),
        ),
    )?;
    log::info!("wrote {count} {scenario} samples to {}", out.display());
    Ok(())
}

fn load_scenes(path: &Path, past_len: usize, future_len: usize) -> Result<Vec<Scene>> {
    let report = load_dataset(path, past_len, future_len).with_context(|| format!("loading {}", path.display()))?;
    for e in report.errors.iter().take(10) {
        log::warn!("{}:{}: {}", path.display(), e.line, e.message);
    }
    if report.errors.len() > 10 {
        log::warn!("{} more malformed lines", report.errors.len() - 10);
    }
    if report.skipped_short > 0 {
        log::warn!("skipped {} scenes shorter than {}", report.skipped_short, past_len + future_len);
    }
    if report.scenes.is_empty() {
        bail!("no usable scenes in {}", path.display());
    }
    Ok(report.scenes)
}

fn pick(scenes: &[Scene], idx: &[usize]) -> Vec<Scene> {
    idx.iter().map(|&i| scenes[i].clone()).collect()
}

pub fn train(config: &Path, dry_run: bool, resume: bool, out: Option<&Path>) -> Result<()> {
    let cfg = RunConfig::load(config).with_context(|| format!("reading {}", config.display()))?;
    let Some(data_path) = cfg.data.path.clone() else {
        bail!("missing field `data.path` in {}", config.display());
    };
    let out_dir = resolve_out(out.unwrap_or(&cfg.out_dir));
    let scenes = load_scenes(&data_path, cfg.data.past_len, cfg.data.future_len)?;
    let Split { train, val, .. } = split(scenes.len(), cfg.data.split, cfg.seed)?;
    let (train_set, val_set) = (pick(&scenes, &train), pick(&scenes, &val));
    log::info!("{} train / {} val scenes", train_set.len(), val_set.len());

    let (store, model, opts) = if resume {
        let (ck, store, model) = Checkpoint::load_model(&out_dir, "last")?;
        if ck.model != cfg.model || ck.past_len != cfg.data.past_len || ck.future_len != cfg.data.future_len {
            bail!("checkpoint in {} was trained with a different model or horizon", out_dir.display());
        }
        log::info!("resuming after epoch {}", ck.epoch);
        let opts = TrainOptions {
            start_epoch: ck.epoch,
            best_val: ck.best_val,
            best_epoch: ck.best_epoch,
            ..Default::default()
        };
        (store, model, opts)
    } else {
        let mut store = ParamStore::new(cfg.seed, cfg.model.precision.dtype());
        let model = Model::new(&mut store, &cfg.model, cfg.data.past_len, cfg.data.future_len)?;
        (store, model, TrainOptions::default())
    };
    let opts = TrainOptions {
        normalize: cfg.data.normalize,
        out_dir: (!dry_run).then(|| out_dir.clone()),
        dry_run,
        ..opts
    };
    if !dry_run {
        std::fs::create_dir_all(&out_dir)?;
        std::fs::write(out_dir.join("config.toml"), cfg.to_toml()?)?;
        write_json(
            &out_dir.join("manifest.json"),
            &manifest(
                "train",
                json!({
                    "config": cfg,
                    "config_path": config,
                    "resumed_from_epoch": resume.then_some(opts.start_epoch),
                }),
            ),
        )?;
    }
    log::info!("{} parameters", store.num_params());
    let outcome = run_training(&model, &store, &train_set, &val_set, &cfg.train, &opts, |l| {
        log::info!(
            "epoch {} lr {:.2e} nll {:.4} kl {:.4} refine {:.4} total {:.4} val minADE {} ({:.1}s)",
            l.epoch,
            l.lr,
            l.nll,
            l.kl,
            l.refine,
            l.total,
            l.val_min_ade.map_or("-".into(), |v| format!("{v:.4}")),
            l.seconds
        );
    })?;
    if dry_run {
        log::info!("dry run finished one batch");
    } else if let (Some(v), Some(e)) = (outcome.best_val, outcome.best_epoch) {
        log::info!("best validation minADE {v:.4} at epoch {e}");
    }
    Ok(())
}

fn sample_mode(m: SampleModeArg) -> SampleMode {
    match m {
        SampleModeArg::Sample => SampleMode::Sample,
        SampleModeArg::Mean => SampleMode::Mean,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    ckpt_dir: &Path,
    stem: &str,
    data: &Path,
    k: usize,
    mode: SampleModeArg,
    seed: u64,
    batch_size: usize,
    out: &Path,
) -> Result<()> {
    if k == 0 {
        bail!("--k must be at least 1");
    }
    let (ck, _store, model) = Checkpoint::load_model(ckpt_dir, stem)?;
    let scenes = load_scenes(data, ck.past_len, ck.future_len)?;
    let opts = EvalOptions {
        k,
        sample_mode: sample_mode(mode),
        batch_size,
        seed,
        normalize: ck.normalize,
    };
    let report = evaluate(&model, &scenes, &opts)?;
    let out = resolve_out(out);
    write_json(&out, &report)?;
    write_json(
        &manifest_path(&out),
        &manifest(
            "eval",
            json!({
                "checkpoint": ckpt_dir, "stem": stem, "data": data, "k": k,
                "sample_mode": opts.sample_mode, "seed": seed, "batch_size": batch_size,
            }),
        ),
    )?;
    log::info!("minADE_{k} {:.4} minFDE_{k} {:.4} over {} scenes", report.min_ade, report.min_fde, report.scenes);
    Ok(())
}

/// Evaluation written by `reason`, chosen by the relations the data carries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RelationalReport {
    Category {
        scale: usize,
        hyperedge: usize,
        many_to_one: CategoryReport,
        one_to_one: CategoryReport,
    },
    Strength {
        report: StrengthReport,
        curves: Vec<StrengthCurve>,
    },
    Groups {
        report: GroupReport,
    },
    None,
}

pub fn write_traces(path: &Path, traces: &[SceneTrace]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?);
    for t in traces {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces(path: &Path) -> Result<Vec<SceneTrace>> {
    let f = std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    std::io::BufReader::new(f)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| {
            serde_json::from_str(&l?).with_context(|| format!("{}:{}: malformed trace", path.display(), i + 1))
        })
        .collect()
}

pub fn relational_report(
    model: &Model,
    scenes: &[Scene],
    traces: &[SceneTrace],
    fit: Option<(&[Scene], &[SceneTrace])>,
) -> Result<RelationalReport> {
    Ok(match scenes.first().and_then(|s| s.relations.as_ref()) {
        Some(Relations::Category { .. }) => {
            let scale = model.cfg.num_scales() - 1;
            let clusters = model.cfg.categories(scale);
            let (fit_scenes, fit_traces) = fit.unwrap_or((scenes, traces));
            let train_obs = category_observations(fit_traces, fit_scenes, scale, 0)?;
            let test_obs = category_observations(traces, scenes, scale, 0)?;
            RelationalReport::Category {
                scale,
                hyperedge: 0,
                many_to_one: eval_category(&train_obs, &test_obs, clusters, 2, Matching::ManyToOne),
                one_to_one: eval_category(&train_obs, &test_obs, clusters, 2, Matching::OneToOne),
            }
        }
        Some(Relations::Charge { .. }) => {
            let curves = strength_curves(traces, scenes, model.past_len)?;
            let (high, low) = reasoning::charge_thresholds();
            RelationalReport::Strength {
                report: eval_strength(&curves, high, low),
                curves,
            }
        }
        Some(Relations::Groups { .. }) => RelationalReport::Groups {
            report: eval_groups(traces, scenes, 3)?,
        },
        None => RelationalReport::None,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn reason(
    ckpt_dir: &Path,
    stem: &str,
    data: &Path,
    fit_data: Option<&Path>,
    stride: usize,
    batch_size: usize,
    out: &Path,
) -> Result<()> {
    let (ck, _store, model) = Checkpoint::load_model(ckpt_dir, stem)?;
    let scenes = load_scenes(data, ck.past_len, ck.future_len)?;
    let traces = trace(&model, &scenes, batch_size, ck.normalize, stride)?;
    let fit = match fit_data {
        Some(p) => {
            let s = load_scenes(p, ck.past_len, ck.future_len)?;
            let t = trace(&model, &s, batch_size, ck.normalize, stride)?;
            Some((s, t))
        }
        None => None,
    };
    let report = relational_report(
        &model,
        &scenes,
        &traces,
        fit.as_ref().map(|(s, t)| (s.as_slice(), t.as_slice())),
    )?;
    let out = resolve_out(out);
    std::fs::create_dir_all(&out)?;
    write_traces(&out.join("traces.jsonl"), &traces)?;
    write_json(&out.join("report.json"), &report)?;
    write_json(
        &out.join("manifest.json"),
        &manifest(
            "reason",
            json!({
                "checkpoint": ckpt_dir, "stem": stem, "data": data, "fit_data": fit_data,
                "stride": stride, "batch_size": batch_size,
            }),
        ),
    )?;
    log::info!("traced {} scenes into {}", traces.len(), out.display());
    Ok(())
}
