//! Relational reasoning: per-timestamp interaction traces and the three
//! evaluations built on them (categories, strengths, groups).

use ndarray::{s, Array2};
use pathfinding::matrix::Matrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use serde::{Deserialize, Serialize};

use crate::data::{make_batches, NormalizeConfig, Relations, Scene};
use crate::error::{Error, Result};
use crate::hypergraph::AffinityMatrix;
use crate::mp::{records_for_row, InteractionRecord};
use crate::system::Model;

/// Interaction state inferred from the observed window ending at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub t: usize,
    pub affinity: Vec<Vec<f64>>,
    pub records: Vec<InteractionRecord>,
}

impl StepTrace {
    pub fn record(&self, scale: usize, hyperedge: usize) -> Option<&InteractionRecord> {
        self.records
            .iter()
            .find(|r| r.scale == scale && r.hyperedge == hyperedge)
    }

    pub fn affinity_matrix(&self) -> Array2<f64> {
        let n = self.affinity.len();
        Array2::from_shape_fn((n, n), |(i, j)| self.affinity[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTrace {
    /// Index into the scene list passed to [`reason`].
    pub scene: usize,
    pub steps: Vec<StepTrace>,
}

impl SceneTrace {
    pub fn at(&self, t: usize) -> Option<&StepTrace> {
        self.steps.iter().find(|s| s.t == t)
    }
}

/// Slides a `T_p`-long window over each scene's ground-truth positions with
/// the given stride and records affinity, strengths and categories for every
/// window end. Affinity smoothing carries over from window to window.
pub fn reason(
    model: &Model,
    scenes: &[Scene],
    batch_size: usize,
    normalize: Option<NormalizeConfig>,
    stride: usize,
) -> Result<Vec<SceneTrace>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let tp = model.past_len;
    let mut traces: Vec<Option<SceneTrace>> = vec![None; scenes.len()];
    for batch in make_batches(scenes, batch_size, normalize) {
        let t_total = batch.positions.dim().2;
        if t_total < tp {
            return Err(Error::Shape(format!("scene of {t_total} steps is shorter than the window {tp}")));
        }
        let mut per_row: Vec<Vec<StepTrace>> = vec![Vec::new(); batch.size()];
        let mut prev: Option<Vec<AffinityMatrix>> = None;
        for end in (tp - 1..t_total).step_by(stride) {
            let window = batch.positions.slice(s![.., .., end + 1 - tp..=end, ..]).to_owned();
            let enc = model.interact(&model.tensor_from(&window)?, prev.as_deref(), None)?;
            for (row, steps) in per_row.iter_mut().enumerate() {
                let a = &enc.affinity[row].a;
                steps.push(StepTrace {
                    t: end,
                    affinity: a.rows().into_iter().map(|r| r.to_vec()).collect(),
                    records: records_for_row(&enc.mp.records, &enc.graphs[row], row, end)?,
                });
            }
            prev = Some(enc.affinity);
        }
        for (row, steps) in per_row.into_iter().enumerate() {
            let scene = batch.indices[row];
            traces[scene] = Some(SceneTrace { scene, steps });
        }
    }
    Ok(traces.into_iter().flatten().collect())
}

// ---------------------------------------------------------------- categories

/// One (learned cluster, ground-truth class) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryObservation {
    pub scene: usize,
    pub t: usize,
    pub cluster: usize,
    pub label: usize,
}

/// Argmax category of hyperedge `(scale, hyperedge)` paired with the
/// ground-truth connection label, for every traced step.
pub fn category_observations(
    traces: &[SceneTrace],
    scenes: &[Scene],
    scale: usize,
    hyperedge: usize,
) -> Result<Vec<CategoryObservation>> {
    let mut out = Vec::new();
    for tr in traces {
        let Some(Relations::Category { category, .. }) = &scenes[tr.scene].relations else {
            return Err(Error::Missing(format!("category labels for scene {}", tr.scene)));
        };
        for st in &tr.steps {
            let rec = st
                .record(scale, hyperedge)
                .ok_or_else(|| Error::Missing(format!("hyperedge {hyperedge} at scale {scale}")))?;
            out.push(CategoryObservation {
                scene: tr.scene,
                t: st.t,
                cluster: rec.argmax,
                label: category[st.t].index(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Matching {
    /// Each cluster takes its majority class.
    #[default]
    ManyToOne,
    /// Hungarian assignment, at most one cluster per class.
    OneToOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMapping {
    /// Class assigned to each learned cluster.
    pub classes: Vec<Option<usize>>,
    /// Ground-truth classes no cluster maps to.
    pub unassigned: Vec<usize>,
}

impl CategoryMapping {
    pub fn predict(&self, cluster: usize) -> Option<usize> {
        self.classes.get(cluster).copied().flatten()
    }
}

/// `counts[cluster][class]`.
pub fn confusion(obs: &[CategoryObservation], clusters: usize, classes: usize) -> Vec<Vec<u64>> {
    let mut c = vec![vec![0u64; classes]; clusters];
    for o in obs {
        if o.cluster < clusters && o.label < classes {
            c[o.cluster][o.label] += 1;
        }
    }
    c
}

/// Mapping from clusters to classes maximizing agreement on `obs`.
pub fn fit_mapping(obs: &[CategoryObservation], clusters: usize, classes: usize, matching: Matching) -> CategoryMapping {
    let conf = confusion(obs, clusters, classes);
    let mut mapped: Vec<Option<usize>> = vec![None; clusters];
    match matching {
        Matching::ManyToOne => {
            for (cl, row) in conf.iter().enumerate() {
                if row.iter().any(|&x| x > 0) {
                    // Ties go to the lower class index.
                    let best = (0..classes).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                    mapped[cl] = Some(best);
                }
            }
        }
        Matching::OneToOne => {
            let w = |cl: usize, class: usize| conf[cl][class] as i64;
            if classes <= clusters {
                let m = Matrix::from_fn(classes, clusters, |(class, cl)| w(cl, class));
                let (_, assign) = kuhn_munkres(&m);
                for (class, &cl) in assign.iter().enumerate() {
                    mapped[cl] = Some(class);
                }
            } else {
                let m = Matrix::from_fn(clusters, classes, |(cl, class)| w(cl, class));
                let (_, assign) = kuhn_munkres(&m);
                for (cl, &class) in assign.iter().enumerate() {
                    mapped[cl] = Some(class);
                }
            }
        }
    }
    let unassigned = (0..classes).filter(|c| !mapped.contains(&Some(*c))).collect();
    CategoryMapping {
        classes: mapped,
        unassigned,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub matching: Matching,
    pub accuracy: f64,
    /// Scenes whose label never changes over the traced steps.
    pub static_accuracy: Option<f64>,
    pub dynamic_accuracy: Option<f64>,
    pub static_scenes: usize,
    pub dynamic_scenes: usize,
    /// `(t, accuracy)` over test scenes.
    pub per_timestamp: Vec<(usize, f64)>,
    pub mapping: CategoryMapping,
}

fn fraction(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Fits the mapping on `train`, freezes it and scores `test`.
pub fn eval_category(
    train: &[CategoryObservation],
    test: &[CategoryObservation],
    clusters: usize,
    classes: usize,
    matching: Matching,
) -> CategoryReport {
    let mapping = fit_mapping(train, clusters, classes, matching);
    let mut labels_by_scene: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for o in test {
        labels_by_scene.entry(o.scene).or_default().push(o.label);
    }
    let is_static = |scene: usize| labels_by_scene[&scene].windows(2).all(|w| w[0] == w[1]);
    let static_scenes = labels_by_scene.keys().filter(|&&s| is_static(s)).count();
    let mut hits = [0usize; 2];
    let mut totals = [0usize; 2];
    let mut by_t: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
    for o in test {
        let ok = mapping.predict(o.cluster) == Some(o.label);
        let kind = usize::from(!is_static(o.scene));
        hits[kind] += usize::from(ok);
        totals[kind] += 1;
        let e = by_t.entry(o.t).or_default();
        e.0 += usize::from(ok);
        e.1 += 1;
    }
    CategoryReport {
        matching,
        accuracy: fraction(hits[0] + hits[1], totals[0] + totals[1]).unwrap_or(0.0),
        static_accuracy: fraction(hits[0], totals[0]),
        dynamic_accuracy: fraction(hits[1], totals[1]),
        static_scenes,
        dynamic_scenes: labels_by_scene.len() - static_scenes,
        per_timestamp: by_t.into_iter().map(|(t, (h, n))| (t, h as f64 / n as f64)).collect(),
        mapping,
    }
}

// ----------------------------------------------------------------- strengths

/// Ranks starting at 1, ties receiving their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; 0 when either side has no variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Least-squares slope of `y` against its index.
pub fn ls_slope(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mx = (n - 1) as f64 / 2.0;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthCurve {
    pub scene: usize,
    pub charge: f64,
    pub t: Vec<usize>,
    pub strength: Vec<f64>,
    pub force: Vec<f64>,
    pub sum: f64,
    pub slope: f64,
}

/// Strength of the pairwise hyperedge `0` over traced steps `t >= from_t`.
pub fn strength_curves(traces: &[SceneTrace], scenes: &[Scene], from_t: usize) -> Result<Vec<StrengthCurve>> {
    traces
        .iter()
        .map(|tr| {
            let Some(Relations::Charge { charge, force_mag }) = &scenes[tr.scene].relations else {
                return Err(Error::Missing(format!("charge for scene {}", tr.scene)));
            };
            let mut curve = StrengthCurve {
                scene: tr.scene,
                charge: *charge,
                t: Vec::new(),
                strength: Vec::new(),
                force: Vec::new(),
                sum: 0.0,
                slope: 0.0,
            };
            for st in tr.steps.iter().filter(|s| s.t >= from_t) {
                let rec = st
                    .record(0, 0)
                    .ok_or_else(|| Error::Missing("pairwise hyperedge record".into()))?;
                curve.t.push(st.t);
                curve.strength.push(rec.strength);
                curve.force.push(force_mag[st.t]);
            }
            curve.sum = curve.strength.iter().sum();
            curve.slope = ls_slope(&curve.strength);
            Ok(curve)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthReport {
    pub samples: usize,
    /// Spearman correlation of per-sample summed strength with charge.
    pub spearman: f64,
    pub high_threshold: f64,
    pub low_threshold: f64,
    pub high_count: usize,
    pub low_count: usize,
    /// Fraction of samples with charge >= `high_threshold` and positive slope.
    pub high_positive: f64,
    /// Fraction of samples with charge <= `low_threshold` and negative slope.
    pub low_negative: f64,
}

/// High / low charge cut-offs: the upper and lower quarters of the
/// simulated charge range.
pub fn charge_thresholds() -> (f64, f64) {
    let (lo, hi) = crate::sim::charged::CHARGE_RANGE;
    (hi - 0.25 * (hi - lo), lo + 0.25 * (hi - lo))
}

pub fn eval_strength(curves: &[StrengthCurve], high_threshold: f64, low_threshold: f64) -> StrengthReport {
    let sums: Vec<f64> = curves.iter().map(|c| c.sum).collect();
    let charges: Vec<f64> = curves.iter().map(|c| c.charge).collect();
    let high: Vec<&StrengthCurve> = curves.iter().filter(|c| c.charge >= high_threshold).collect();
    let low: Vec<&StrengthCurve> = curves.iter().filter(|c| c.charge <= low_threshold).collect();
    StrengthReport {
        samples: curves.len(),
        spearman: spearman(&sums, &charges),
        high_threshold,
        low_threshold,
        high_count: high.len(),
        low_count: low.len(),
        high_positive: fraction(high.iter().filter(|c| c.slope > 0.0).count(), high.len()).unwrap_or(0.0),
        low_negative: fraction(low.iter().filter(|c| c.slope < 0.0).count(), low.len()).unwrap_or(0.0),
    }
}

// -------------------------------------------------------------------- groups

/// Mean off-diagonal affinity within groups minus mean affinity across
/// groups. A side with no pairs contributes 0.
pub fn block_score(a: &Array2<f64>, groups: &[usize]) -> f64 {
    let n = groups.len();
    let (mut within, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if groups[i] == groups[j] {
                within += a[[i, j]];
                nw += 1;
            } else {
                cross += a[[i, j]];
                nc += 1;
            }
        }
    }
    let mean = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
    mean(within, nw) - mean(cross, nc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub scene: usize,
    pub collide_t: usize,
    pub before: f64,
    pub after: f64,
    /// `(t, score)` for every traced step.
    pub series: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub samples: usize,
    pub offset: usize,
    pub mean_before: f64,
    pub mean_after: f64,
    /// Fraction of samples whose score rises from `collide_t - offset` to
    /// `collide_t + offset`.
    pub rising: f64,
    pub per_sample: Vec<GroupSample>,
}

/// Block-structure scores against the post-collision partition (group ids at
/// the last timestamp).
pub fn eval_groups(traces: &[SceneTrace], scenes: &[Scene], offset: usize) -> Result<GroupReport> {
    let mut per_sample = Vec::new();
    for tr in traces {
        let Some(Relations::Groups { group_id, collide_t }) = &scenes[tr.scene].relations else {
            return Err(Error::Missing(format!("group ids for scene {}", tr.scene)));
        };
        let partition: Vec<usize> = group_id.iter().map(|g| *g.last().unwrap_or(&0)).collect();
        let series: Vec<(usize, f64)> = tr
            .steps
            .iter()
            .map(|s| (s.t, block_score(&s.affinity_matrix(), &partition)))
            .collect();
        let score_at = |t: usize| series.iter().find(|(u, _)| *u == t).map(|p| p.1);
        let (Some(before), Some(after)) = (
            collide_t.checked_sub(offset).and_then(score_at),
            score_at(collide_t + offset),
        ) else {
            return Err(Error::Missing(format!(
                "trace of scene {} does not cover collide_t {collide_t} +- {offset}",
                tr.scene
            )));
        };
        per_sample.push(GroupSample {
            scene: tr.scene,
            collide_t: *collide_t,
            before,
            after,
            series,
        });
    }
    let n = per_sample.len().max(1) as f64;
    Ok(GroupReport {
        samples: per_sample.len(),
        offset,
        mean_before: per_sample.iter().map(|g| g.before).sum::<f64>() / n,
        mean_after: per_sample.iter().map(|g| g.after).sum::<f64>() / n,
        rising: fraction(per_sample.iter().filter(|g| g.after > g.before).count(), per_sample.len())
            .unwrap_or(0.0),
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train_eval::test_support::{tiny_model, ybar_scenes};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obs(pairs: &[(usize, usize)]) -> Vec<CategoryObservation> {
        pairs
            .iter()
            .enumerate()
            .map(|(i, &(cluster, label))| CategoryObservation {
                scene: i / 4,
                t: i % 4,
                cluster,
                label,
            })
            .collect()
    }

    #[test]
    fn permuted_clusters_score_perfectly() {
        let pairs: Vec<(usize, usize)> = (0..40).map(|i| (1 - i % 2, i % 2)).collect();
        let o = obs(&pairs);
        for m in [Matching::ManyToOne, Matching::OneToOne] {
            let r = eval_category(&o, &o, 2, 2, m);
            assert_eq!(r.accuracy, 1.0);
            assert_eq!(r.mapping.classes, vec![Some(1), Some(0)]);
            assert!(r.mapping.unassigned.is_empty());
        }
    }

    #[test]
    fn relabeling_clusters_does_not_change_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<(usize, usize)> = (0..200).map(|_| (rng.random_range(0..4), rng.random_range(0..2))).collect();
        let perm = [2, 0, 3, 1];
        let relabeled: Vec<(usize, usize)> = pairs.iter().map(|&(c, l)| (perm[c], l)).collect();
        for m in [Matching::ManyToOne, Matching::OneToOne] {
            let a = eval_category(&obs(&pairs), &obs(&pairs), 4, 2, m).accuracy;
            let b = eval_category(&obs(&relabeled), &obs(&relabeled), 4, 2, m).accuracy;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn random_clusters_are_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let train: Vec<(usize, usize)> = (0..2000).map(|i| (rng.random_range(0..2), i % 2)).collect();
        let test: Vec<(usize, usize)> = (0..2000).map(|i| (rng.random_range(0..2), i % 2)).collect();
        let r = eval_category(&obs(&train), &obs(&test), 2, 2, Matching::OneToOne);
        assert!((r.accuracy - 0.5).abs() < 0.05, "{}", r.accuracy);
    }

    #[test]
    fn degenerate_mapping_is_reported() {
        // Every cluster favors class 0, so class 1 gets nothing many-to-one.
        let pairs = [(0, 0), (0, 0), (1, 0), (1, 1), (1, 0), (0, 1)];
        let r = eval_category(&obs(&pairs), &obs(&pairs), 2, 2, Matching::ManyToOne);
        assert_eq!(r.mapping.unassigned, vec![1]);
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-12);
        let h = eval_category(&obs(&pairs), &obs(&pairs), 2, 2, Matching::OneToOne);
        assert!(h.mapping.unassigned.is_empty());
    }

    #[test]
    fn static_and_dynamic_split() {
        // Scene 0: labels constant; scene 1: switches.
        let pairs = [(0, 0), (0, 0), (0, 0), (0, 0), (0, 0), (0, 0), (1, 1), (0, 1)];
        let r = eval_category(&obs(&pairs), &obs(&pairs), 2, 2, Matching::ManyToOne);
        assert_eq!((r.static_scenes, r.dynamic_scenes), (1, 1));
        assert_eq!(r.static_accuracy, Some(1.0));
        assert_eq!(r.dynamic_accuracy, Some(0.75));
        assert_eq!(r.per_timestamp[3], (3, 0.5));
    }

    #[test]
    fn rank_statistics() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[1.0, 4.0, 9.0, 16.0, 25.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[5.0, 4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[0.5; 5]), 0.0);
        assert!((ls_slope(&[1.0, 3.0, 5.0, 7.0]) - 2.0).abs() < 1e-12);
        assert!(ls_slope(&[4.0, 3.5, 3.0]) < 0.0);
    }

    #[test]
    fn constant_strength_has_zero_correlation() {
        let curves: Vec<StrengthCurve> = (0..10)
            .map(|i| StrengthCurve {
                scene: i,
                charge: 3.0 + i as f64,
                t: vec![0, 1],
                strength: vec![0.5, 0.5],
                force: vec![0.0, 0.0],
                sum: 1.0,
                slope: 0.0,
            })
            .collect();
        let r = eval_strength(&curves, 10.0, 5.0);
        assert_eq!(r.spearman, 0.0);
        assert_eq!(r.high_positive, 0.0);
        assert_eq!((r.high_count, r.low_count), (3, 3));
    }

    #[test]
    fn block_scores() {
        let groups = [0, 0, 0, 0, 1, 1];
        let perfect = Array2::from_shape_fn((6, 6), |(i, j)| if groups[i] == groups[j] { 1.0 } else { 0.0 });
        assert_eq!(block_score(&perfect, &groups), 1.0);
        let uniform = Array2::from_shape_fn((6, 6), |(i, j)| if i == j { 1.0 } else { 0.3 });
        assert!(block_score(&uniform, &groups).abs() < 1e-15);
    }

    #[test]
    fn traces_cover_every_window_end() {
        let scenes = ybar_scenes(3);
        let (_s, model) = tiny_model(0, 10, 20);
        let traces = reason(&model, &scenes, 2, None, 1).unwrap();
        assert_eq!(traces.len(), 3);
        for (i, tr) in traces.iter().enumerate() {
            assert_eq!(tr.scene, i);
            assert_eq!(tr.steps.iter().map(|s| s.t).collect::<Vec<_>>(), (9..30).collect::<Vec<_>>());
            let st = &tr.steps[0];
            assert_eq!(st.affinity.len(), 3);
            assert!(st.record(1, 0).unwrap().members.len() == 3);
        }
        let obs = category_observations(&traces, &scenes, 1, 0).unwrap();
        assert_eq!(obs.len(), 3 * 21);
        let sparse = reason(&model, &scenes, 2, None, 5).unwrap();
        assert_eq!(sparse[0].steps.iter().map(|s| s.t).collect::<Vec<_>>(), vec![9, 14, 19, 24, 29]);
    }
}
