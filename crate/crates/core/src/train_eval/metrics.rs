//! Best-of-K displacement metrics.

use ndarray::{s, Array3, ArrayView3, ArrayView4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean distance per timestamp between `pred` and `gt`, both `N × T × 2`.
fn step_distances(pred: ArrayView3<'_, f64>, gt: ArrayView3<'_, f64>) -> Vec<f64> {
    let (n, t, _) = gt.dim();
    (0..t)
        .map(|j| {
            (0..n)
                .map(|i| {
                    let dx = pred[[i, j, 0]] - gt[[i, j, 0]];
                    let dy = pred[[i, j, 1]] - gt[[i, j, 1]];
                    (dx * dx + dy * dy).sqrt()
                })
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

fn check_shapes(preds: &ArrayView4<'_, f64>, gt: &ArrayView3<'_, f64>) -> Result<()> {
    let (k, n, t, c) = preds.dim();
    if k == 0 {
        return Err(Error::InvalidArgument("at least one prediction is required".into()));
    }
    if (n, t, c) != gt.dim() || c != 2 || t == 0 {
        return Err(Error::Shape(format!(
            "predictions {:?} do not match ground truth {:?}",
            preds.shape(),
            gt.shape()
        )));
    }
    Ok(())
}

/// ADE and FDE of a single prediction.
pub fn ade_fde(pred: ArrayView3<'_, f64>, gt: ArrayView3<'_, f64>) -> Result<(f64, f64)> {
    if pred.dim() != gt.dim() || gt.dim().1 == 0 {
        return Err(Error::Shape(format!("prediction {:?} vs ground truth {:?}", pred.shape(), gt.shape())));
    }
    let d = step_distances(pred, gt);
    Ok((d.iter().sum::<f64>() / d.len() as f64, *d.last().unwrap()))
}

/// `(minADE_K, minFDE_K)` for `preds: K × N × T × 2` against `gt: N × T × 2`.
/// The two minima are taken independently over `k`.
pub fn min_ade_fde(preds: ArrayView4<'_, f64>, gt: ArrayView3<'_, f64>) -> Result<(f64, f64)> {
    check_shapes(&preds, &gt)?;
    let mut best = (f64::INFINITY, f64::INFINITY);
    for p in preds.outer_iter() {
        let (a, f) = ade_fde(p, gt)?;
        best.0 = best.0.min(a);
        best.1 = best.1.min(f);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    /// Number of future timestamps covered.
    pub steps: usize,
    pub min_ade: f64,
    pub min_fde: f64,
}

/// Multiples of 5 up to `tf`, always ending with `tf`.
pub fn default_horizons(tf: usize) -> Vec<usize> {
    let mut h: Vec<usize> = (1..).map(|i| 5 * i).take_while(|&x| x < tf).collect();
    h.push(tf);
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub scenes: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub horizons: Vec<HorizonRow>,
    /// Mean over scenes of the best-of-K displacement at each future step.
    pub per_timestamp: Vec<f64>,
}

/// Running per-scene sums behind a [`MetricReport`].
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    k: usize,
    horizons: Vec<usize>,
    scenes: usize,
    sums: Vec<(f64, f64)>,
    per_t: Vec<f64>,
}

impl MetricAccumulator {
    pub fn new(k: usize, future_len: usize) -> Self {
        let horizons = default_horizons(future_len);
        Self {
            k,
            sums: vec![(0.0, 0.0); horizons.len()],
            horizons,
            scenes: 0,
            per_t: vec![0.0; future_len],
        }
    }

    pub fn add(&mut self, preds: ArrayView4<'_, f64>, gt: ArrayView3<'_, f64>) -> Result<()> {
        check_shapes(&preds, &gt)?;
        if gt.dim().1 != self.per_t.len() {
            return Err(Error::Shape(format!(
                "horizon {} vs accumulator {}",
                gt.dim().1,
                self.per_t.len()
            )));
        }
        for (i, &h) in self.horizons.iter().enumerate() {
            let (a, f) = min_ade_fde(preds.slice(s![.., .., ..h, ..]), gt.slice(s![.., ..h, ..]))?;
            self.sums[i].0 += a;
            self.sums[i].1 += f;
        }
        let dists: Vec<Vec<f64>> = preds.outer_iter().map(|p| step_distances(p, gt)).collect();
        for (j, acc) in self.per_t.iter_mut().enumerate() {
            *acc += dists.iter().map(|d| d[j]).fold(f64::INFINITY, f64::min);
        }
        self.scenes += 1;
        Ok(())
    }

    pub fn finish(&self) -> MetricReport {
        let n = self.scenes.max(1) as f64;
        let horizons: Vec<HorizonRow> = self
            .horizons
            .iter()
            .zip(&self.sums)
            .map(|(&steps, &(a, f))| HorizonRow {
                steps,
                min_ade: a / n,
                min_fde: f / n,
            })
            .collect();
        let last = horizons.last().cloned().unwrap_or(HorizonRow {
            steps: 0,
            min_ade: 0.0,
            min_fde: 0.0,
        });
        MetricReport {
            k: self.k,
            scenes: self.scenes,
            min_ade: last.min_ade,
            min_fde: last.min_fde,
            horizons,
            per_timestamp: self.per_t.iter().map(|x| x / n).collect(),
        }
    }
}

/// Extrapolates the last observed velocity of each agent over `tf` steps.
pub fn constant_velocity(past: ArrayView3<'_, f64>, tf: usize) -> Array3<f64> {
    let (n, tp, _) = past.dim();
    let mut out = Array3::zeros((n, tf, 2));
    for i in 0..n {
        let last = [past[[i, tp - 1, 0]], past[[i, tp - 1, 1]]];
        let v = if tp >= 2 {
            [last[0] - past[[i, tp - 2, 0]], last[1] - past[[i, tp - 2, 1]]]
        } else {
            [0.0, 0.0]
        };
        for j in 0..tf {
            let h = (j + 1) as f64;
            out[[i, j, 0]] = last[0] + h * v[0];
            out[[i, j, 1]] = last[1] + h * v[1];
        }
    }
    out
}
