//! SVG figures plus the raw numbers behind them.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hypertraj::data::make_batches;
use hypertraj::nn::Noise;
use hypertraj::system::SampleMode;
use hypertraj::train_eval::{predict_batch, Checkpoint, SceneTrace};
use plotters::prelude::*;

use crate::commands::{read_traces, resolve_out, RelationalReport};
use crate::PlotKind;

#[allow(clippy::too_many_arguments)]
pub fn run(
    kind: PlotKind,
    input: &Path,
    checkpoint: Option<&Path>,
    stem: &str,
    scene: usize,
    steps: usize,
    k: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let out = resolve_out(out);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match kind {
        PlotKind::AffinityHeatmap => affinity_heatmaps(&scene_trace(input, scene)?, steps, &out),
        PlotKind::CategoryHeatmap => category_heatmap(&scene_trace(input, scene)?, &out),
        PlotKind::StrengthCurve => strength_curve(input, scene, &out),
        PlotKind::Trajectories => {
            let ckpt = checkpoint.ok_or_else(|| anyhow!("--checkpoint is required for trajectories"))?;
            trajectories(input, ckpt, stem, scene, k, seed, &out)
        }
    }
}

fn scene_trace(path: &Path, scene: usize) -> Result<SceneTrace> {
    read_traces(path)?
        .into_iter()
        .find(|t| t.scene == scene)
        .ok_or_else(|| anyhow!("scene {scene} not found in {}", path.display()))
}

fn plot_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("drawing failed: {e:?}")
}

/// White to dark blue over `[lo, hi]`.
fn shade(v: f64, lo: f64, hi: f64) -> RGBColor {
    let x = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    let lerp = |a: f64, b: f64| (a + (b - a) * x).round() as u8;
    RGBColor(lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

fn heatmap(path: &Path, title: &str, values: &[Vec<f64>], lo: f64, hi: f64) -> Result<()> {
    let rows = values.len();
    let cols = values.first().map_or(0, |r| r.len());
    let root = SVGBackend::new(path, (480, 440)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(0..cols, 0..rows)
        .map_err(plot_err)?;
    chart.configure_mesh().disable_mesh().draw().map_err(plot_err)?;
    chart
        .draw_series(values.iter().enumerate().flat_map(|(i, row)| {
            row.iter().enumerate().map(move |(j, &v)| {
                // Row 0 at the top.
                let y = rows - 1 - i;
                Rectangle::new([(j, y), (j + 1, y + 1)], shade(v, lo, hi).filled())
            })
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

fn affinity_heatmaps(trace: &SceneTrace, steps: usize, out: &Path) -> Result<()> {
    let mut csv = std::fs::File::create(out.join("affinity.csv"))?;
    writeln!(csv, "t,i,j,value")?;
    for st in trace.steps.iter().take(steps) {
        heatmap(
            &out.join(format!("affinity_t{:03}.svg", st.t)),
            &format!("affinity, scene {} t = {}", trace.scene, st.t),
            &st.affinity,
            -1.0,
            1.0,
        )?;
        for (i, row) in st.affinity.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                writeln!(csv, "{},{i},{j},{v}", st.t)?;
            }
        }
    }
    Ok(())
}

/// Category probabilities of hyperedge 0 at the largest scale over time.
fn category_heatmap(trace: &SceneTrace, out: &Path) -> Result<()> {
    let scale = trace
        .steps
        .iter()
        .flat_map(|s| s.records.iter().map(|r| r.scale))
        .max()
        .ok_or_else(|| anyhow!("trace has no interaction records"))?;
    let series: Vec<(usize, Vec<f64>)> = trace
        .steps
        .iter()
        .filter_map(|s| s.record(scale, 0).map(|r| (s.t, r.category.clone())))
        .collect();
    let cats = series.first().map_or(0, |s| s.1.len());
    let values: Vec<Vec<f64>> = (0..cats).map(|c| series.iter().map(|(_, p)| p[c]).collect()).collect();
    heatmap(
        &out.join("category.svg"),
        &format!("category of hyperedge 0, scale {scale}, scene {}", trace.scene),
        &values,
        0.0,
        1.0,
    )?;
    let mut csv = std::fs::File::create(out.join("category.csv"))?;
    writeln!(csv, "t,category,probability")?;
    for (t, p) in &series {
        for (c, v) in p.iter().enumerate() {
            writeln!(csv, "{t},{c},{v}")?;
        }
    }
    Ok(())
}

fn strength_curve(report: &Path, scene: usize, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(report).with_context(|| format!("reading {}", report.display()))?;
    let RelationalReport::Strength { curves, .. } = serde_json::from_str(&text)? else {
        bail!("{} is not a strength report", report.display());
    };
    if curves.is_empty() {
        bail!("no strength curves in {}", report.display());
    }
    let mut csv = std::fs::File::create(out.join("strength_vs_charge.csv"))?;
    writeln!(csv, "sum_strength,charge")?;
    for c in &curves {
        writeln!(csv, "{},{}", c.sum, c.charge)?;
    }
    let (xmin, xmax) = curves
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c.sum), b.max(c.sum)));
    let pad = ((xmax - xmin) * 0.05).max(1e-3);
    let path = out.join("strength_vs_charge.svg");
    let root = SVGBackend::new(&path, (520, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("summed strength vs charge", ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(44)
        .build_cartesian_2d(xmin - pad..xmax + pad, 2.0..17.0)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("sum of strength")
        .y_desc("charge")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(curves.iter().map(|c| Circle::new((c.sum, c.charge), 2, BLUE.filled())))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;

    // Per-timestamp curve of one sample.
    let c = curves.iter().find(|c| c.scene == scene).unwrap_or(&curves[0]);
    let mut csv = std::fs::File::create(out.join(format!("strength_scene{}.csv", c.scene)))?;
    writeln!(csv, "t,strength,force")?;
    for ((t, r), f) in c.t.iter().zip(&c.strength).zip(&c.force) {
        writeln!(csv, "{t},{r},{f}")?;
    }
    Ok(())
}

fn trajectories(data: &Path, ckpt: &Path, stem: &str, scene: usize, k: usize, seed: u64, out: &Path) -> Result<()> {
    let (ck, _store, model) = Checkpoint::load_model(ckpt, stem)?;
    let report = hypertraj::data::load_dataset(data, ck.past_len, ck.future_len)?;
    let s = report
        .scenes
        .get(scene)
        .ok_or_else(|| anyhow!("scene {scene} not in {}", data.display()))?
        .clone();
    let batch = &make_batches(std::slice::from_ref(&s), 1, ck.normalize)[0];
    let preds = predict_batch(&model, batch, k.max(1), SampleMode::Sample, &mut Noise::new(seed))?;
    let preds = &preds[0];
    let pos = &s.positions;
    let (n, t, _) = pos.dim();
    let (kk, _, tf, _) = preds.dim();

    let mut csv = std::fs::File::create(out.join(format!("trajectories_scene{scene}.csv")))?;
    writeln!(csv, "source,sample,agent,t,x,y")?;
    for i in 0..n {
        for j in 0..t {
            let src = if j < s.past_len { "past" } else { "future" };
            writeln!(csv, "{src},,{i},{j},{},{}", pos[[i, j, 0]], pos[[i, j, 1]])?;
        }
    }
    for c in 0..kk {
        for i in 0..n {
            for j in 0..tf {
                writeln!(csv, "pred,{c},{i},{},{},{}", s.past_len + j, preds[[c, i, j, 0]], preds[[c, i, j, 1]])?;
            }
        }
    }

    let all_x = pos.iter().step_by(2).chain(preds.iter().step_by(2));
    let all_y = pos.iter().skip(1).step_by(2).chain(preds.iter().skip(1).step_by(2));
    let range = |it: &mut dyn Iterator<Item = &f64>| {
        let (a, b) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let pad = ((b - a) * 0.05).max(1e-3);
        (a - pad)..(b + pad)
    };
    let (xr, yr) = (range(&mut all_x.into_iter()), range(&mut all_y.into_iter()));
    let path = out.join(format!("trajectories_scene{scene}.svg"));
    let root = SVGBackend::new(&path, (560, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("scene {scene}, {kk} samples"), ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(xr, yr)
        .map_err(plot_err)?;
    chart.configure_mesh().draw().map_err(plot_err)?;
    for i in 0..n {
        let color = Palette99::pick(i);
        for c in 0..kk {
            let line: Vec<(f64, f64)> = (0..tf).map(|j| (preds[[c, i, j, 0]], preds[[c, i, j, 1]])).collect();
            chart
                .draw_series(LineSeries::new(line, color.mix(0.25).stroke_width(1)))
                .map_err(plot_err)?;
        }
        let past: Vec<(f64, f64)> = (0..s.past_len).map(|j| (pos[[i, j, 0]], pos[[i, j, 1]])).collect();
        let fut: Vec<(f64, f64)> = (s.past_len - 1..t).map(|j| (pos[[i, j, 0]], pos[[i, j, 1]])).collect();
        chart
            .draw_series(LineSeries::new(past, BLACK.stroke_width(2)))
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(fut, color.stroke_width(2)))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}
