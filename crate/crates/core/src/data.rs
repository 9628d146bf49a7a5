//! Scenes, dataset loading, splitting and batching.
//!
//! Two on-disk formats are read:
//!
//! * JSON-Lines as written by [`crate::sim`], one sample per line.
//! * CSV with header `agent_id,t,x,y` and an optional `scene_id` column. Rows
//!   without a `scene_id` all belong to one scene. Long scenes are cut into
//!   consecutive non-overlapping windows of `T_p + T_f` steps.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use ndarray::{s, Array3, Array4, ArrayView3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{Connection, SampleRecord, Scenario};

/// Ground-truth relations attached to simulated scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Relations {
    /// Group label per agent and timestamp (`N × T`).
    Groups {
        group_id: Vec<Vec<usize>>,
        collide_t: usize,
    },
    Category {
        category: Vec<Connection>,
        disconnect_t: usize,
    },
    Charge { charge: f64, force_mag: Vec<f64> },
}

impl Relations {
    fn window(&self, start: usize, len: usize) -> Self {
        match self {
            Relations::Groups {
                group_id,
                collide_t,
            } => Relations::Groups {
                group_id: group_id
                    .iter()
                    .map(|g| g[start..start + len].to_vec())
                    .collect(),
                collide_t: collide_t.saturating_sub(start),
            },
            Relations::Category {
                category,
                disconnect_t,
            } => Relations::Category {
                category: category[start..start + len].to_vec(),
                disconnect_t: disconnect_t.saturating_sub(start),
            },
            Relations::Charge { charge, force_mag } => Relations::Charge {
                charge: *charge,
                force_mag: force_mag[start..start + len].to_vec(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// `N × T × 2`, `T = past_len + future_len`.
    pub positions: Array3<f64>,
    pub past_len: usize,
    pub future_len: usize,
    pub relations: Option<Relations>,
    pub scenario: Option<Scenario>,
}

impl Scene {
    pub fn new(positions: Array3<f64>, past_len: usize, future_len: usize) -> Result<Self> {
        let (n, t, c) = positions.dim();
        if c != 2 {
            return Err(Error::Shape(format!("expected 2D coordinates, got {c}")));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "a scene needs at least 2 agents, got {n}"
            )));
        }
        if t != past_len + future_len {
            return Err(Error::Shape(format!(
                "scene has {t} steps but T_p + T_f = {}",
                past_len + future_len
            )));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scene coordinates".into()));
        }
        Ok(Self {
            positions,
            past_len,
            future_len,
            relations: None,
            scenario: None,
        })
    }

    pub fn with_relations(mut self, relations: Option<Relations>) -> Self {
        self.relations = relations;
        self
    }

    pub fn num_agents(&self) -> usize {
        self.positions.dim().0
    }

    pub fn len(&self) -> usize {
        self.positions.dim().1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn past(&self) -> ArrayView3<'_, f64> {
        self.positions.slice(s![.., ..self.past_len, ..])
    }

    pub fn future(&self) -> ArrayView3<'_, f64> {
        self.positions.slice(s![.., self.past_len.., ..])
    }

    /// Centroid of all agents over the past window.
    pub fn past_centroid(&self) -> [f64; 2] {
        let past = self.past();
        let count = (past.dim().0 * past.dim().1) as f64;
        let mut c = [0.0; 2];
        for v in past.outer_iter() {
            for p in v.outer_iter() {
                c[0] += p[0];
                c[1] += p[1];
            }
        }
        [c[0] / count, c[1] / count]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    /// 1-based line number in the source file.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub scenes: Vec<Scene>,
    pub errors: Vec<LineError>,
    /// Scenes dropped because they were shorter than `T_p + T_f`.
    pub skipped_short: usize,
}

/// Loads scenes from a JSON-Lines or CSV file (chosen by extension).
pub fn load_dataset(path: &Path, past_len: usize, future_len: usize) -> Result<LoadReport> {
    if past_len == 0 || future_len == 0 {
        return Err(Error::InvalidArgument(
            "past and future lengths must be positive".into(),
        ));
    }
    let file = std::fs::File::open(path)?;
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_csv(file, past_len, future_len)
    } else {
        parse_jsonl(std::io::BufReader::new(file), past_len, future_len)
    }
}

pub fn parse_jsonl(reader: impl BufRead, past_len: usize, future_len: usize) -> Result<LoadReport> {
    let window = past_len + future_len;
    let mut report = LoadReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(LineError {
                    line: i + 1,
                    message: e.to_string(),
                });
                continue;
            }
        };
        match scene_from_record(&record, past_len, future_len) {
            Ok(Some(scene)) => report.scenes.push(scene),
            Ok(None) => report.skipped_short += 1,
            Err(e) => report.errors.push(LineError {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    log::debug!(
        "loaded {} scenes (window {window}), {} errors, {} short",
        report.scenes.len(),
        report.errors.len(),
        report.skipped_short
    );
    Ok(report)
}

/// Converts a simulator record into a scene over its first `T_p + T_f` steps.
/// Returns `Ok(None)` if the record is too short.
pub fn scene_from_record(
    record: &SampleRecord,
    past_len: usize,
    future_len: usize,
) -> Result<Option<Scene>> {
    let window = past_len + future_len;
    let n = record.positions.len();
    let t = record.positions.first().map_or(0, |p| p.len());
    if record.positions.iter().any(|p| p.len() != t) {
        return Err(Error::Shape("agents have different trajectory lengths".into()));
    }
    if t < window {
        return Ok(None);
    }
    let mut positions = Array3::<f64>::zeros((n, window, 2));
    for (i, traj) in record.positions.iter().enumerate() {
        for (k, p) in traj.iter().take(window).enumerate() {
            positions[[i, k, 0]] = p[0];
            positions[[i, k, 1]] = p[1];
        }
    }
    let relations = relations_from_record(record)?.map(|r| r.window(0, window));
    let mut scene = Scene::new(positions, past_len, future_len)?.with_relations(relations);
    scene.scenario = Some(record.meta.scenario);
    Ok(Some(scene))
}

fn relations_from_record(r: &SampleRecord) -> Result<Option<Relations>> {
    let missing = |what: &str| Error::Missing(format!("`{what}` in {} record", r.meta.scenario));
    Ok(match r.meta.scenario {
        Scenario::Bars => match (&r.group_id, r.collide_t) {
            (Some(g), Some(c)) => Some(Relations::Groups {
                group_id: g.clone(),
                collide_t: c,
            }),
            (None, None) => None,
            (None, _) => return Err(missing("group_id")),
            (_, None) => return Err(missing("collide_t")),
        },
        Scenario::Ybar => match (&r.category, r.disconnect_t) {
            (Some(c), Some(d)) => Some(Relations::Category {
                category: c.clone(),
                disconnect_t: d,
            }),
            (None, None) => None,
            (None, _) => return Err(missing("category")),
            (_, None) => return Err(missing("disconnect_t")),
        },
        Scenario::Charged => match (r.charge, &r.force_mag) {
            (Some(q), Some(f)) => Some(Relations::Charge {
                charge: q,
                force_mag: f.clone(),
            }),
            (None, None) => None,
            (None, _) => return Err(missing("charge")),
            (_, None) => return Err(missing("force_mag")),
        },
    })
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    #[serde(default)]
    scene_id: Option<String>,
    agent_id: String,
    t: i64,
    x: f64,
    y: f64,
}

pub fn parse_csv(reader: impl std::io::Read, past_len: usize, future_len: usize) -> Result<LoadReport> {
    let window = past_len + future_len;
    let mut report = LoadReport::default();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    // scene -> agent -> t -> (x, y)
    let mut scenes: BTreeMap<String, BTreeMap<String, BTreeMap<i64, [f64; 2]>>> = BTreeMap::new();
    for row in rdr.deserialize::<CsvRow>() {
        match row {
            Ok(r) => {
                if !r.x.is_finite() || !r.y.is_finite() {
                    report.errors.push(LineError {
                        line: 0,
                        message: format!("non-finite coordinate for agent {}", r.agent_id),
                    });
                    continue;
                }
                scenes
                    .entry(r.scene_id.unwrap_or_default())
                    .or_default()
                    .entry(r.agent_id)
                    .or_default()
                    .insert(r.t, [r.x, r.y]);
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                report.errors.push(LineError {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    for (scene_id, agents) in scenes {
        let times: Vec<i64> = agents
            .values()
            .flat_map(|m| m.keys().copied())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        if agents.values().any(|m| m.len() != times.len()) {
            report.errors.push(LineError {
                line: 0,
                message: format!("scene `{scene_id}`: agents are not observed at the same timestamps"),
            });
            continue;
        }
        if times.len() < window {
            report.skipped_short += 1;
            continue;
        }
        let n = agents.len();
        for w in 0..times.len() / window {
            let mut positions = Array3::<f64>::zeros((n, window, 2));
            for (i, traj) in agents.values().enumerate() {
                for (k, p) in traj.values().skip(w * window).take(window).enumerate() {
                    positions[[i, k, 0]] = p[0];
                    positions[[i, k, 1]] = p[1];
                }
            }
            match Scene::new(positions, past_len, future_len) {
                Ok(s) => report.scenes.push(s),
                Err(e) => report.errors.push(LineError {
                    line: 0,
                    message: format!("scene `{scene_id}`: {e}"),
                }),
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub const fn new(train: f64, val: f64, test: f64) -> Self {
        Self { train, val, test }
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self::new(0.65, 0.10, 0.25)
    }
}

/// Disjoint scene indices per partition; serializes as the split manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn select<'a>(scenes: &'a [Scene], idx: &[usize]) -> Vec<&'a Scene> {
        idx.iter().map(|&i| &scenes[i]).collect()
    }
}

/// Shuffles `0..count` under `seed` and cuts it by `fractions`. Validation
/// and test sizes are rounded; train takes the remainder.
pub fn split(count: usize, fractions: SplitFractions, seed: u64) -> Result<Split> {
    if count == 0 {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    let SplitFractions { train, val, test } = fractions;
    if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f))
        || (train + val + test - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be in [0, 1] and sum to 1, got ({train}, {val}, {test})"
        )));
    }
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((count as f64) * val).round() as usize;
    let n_test = (((count as f64) * test).round() as usize).min(count - n_val);
    let n_train = count - n_val - n_test;
    let mut out = Split {
        train: idx[..n_train].to_vec(),
        val: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    };
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Per-scene translation plus a global scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offsets: Vec<[f64; 2]>,
    pub scale: f64,
}

impl Normalization {
    pub fn identity(count: usize) -> Self {
        Self {
            offsets: vec![[0.0; 2]; count],
            scale: 1.0,
        }
    }

    /// Maps model-space coordinates of scene `b` back to the data frame.
    pub fn denormalize_point(&self, b: usize, p: [f64; 2]) -> [f64; 2] {
        let o = self.offsets[b];
        [p[0] * self.scale + o[0], p[1] * self.scale + o[1]]
    }

    pub fn normalize_point(&self, b: usize, p: [f64; 2]) -> [f64; 2] {
        let o = self.offsets[b];
        [(p[0] - o[0]) / self.scale, (p[1] - o[1]) / self.scale]
    }

    /// Applies [`Self::denormalize_point`] over a `B × ... × 2` array.
    pub fn denormalize<D: ndarray::Dimension>(&self, arr: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
        self.map_points(arr, |b, p| self.denormalize_point(b, p))
    }

    pub fn normalize<D: ndarray::Dimension>(&self, arr: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
        self.map_points(arr, |b, p| self.normalize_point(b, p))
    }

    fn map_points<D: ndarray::Dimension>(
        &self,
        arr: &ndarray::Array<f64, D>,
        f: impl Fn(usize, [f64; 2]) -> [f64; 2],
    ) -> ndarray::Array<f64, D> {
        let mut out = arr.clone();
        let b = arr.shape()[0];
        let per = arr.len() / b.max(1);
        let data = out.as_slice_mut().expect("standard layout");
        for (i, chunk) in data.chunks_mut(2).enumerate() {
            let q = f(i * 2 / per, [chunk[0], chunk[1]]);
            chunk[0] = q[0];
            chunk[1] = q[1];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizeConfig {
    /// Subtract each scene's past-window centroid.
    pub center: bool,
    /// Global divisor applied after centering.
    pub scale: f64,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        Self {
            center: true,
            scale: 1.0,
        }
    }
}

/// Scenes sharing `N` and `T`, stacked in model space.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Indices into the scene list the batch was built from.
    pub indices: Vec<usize>,
    /// `B × N × T × 2`, normalized.
    pub positions: Array4<f64>,
    pub past_len: usize,
    pub normalization: Normalization,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn num_agents(&self) -> usize {
        self.positions.dim().1
    }

    pub fn future_len(&self) -> usize {
        self.positions.dim().2 - self.past_len
    }

    /// Data-frame positions, `B × N × T × 2`.
    pub fn raw_positions(&self) -> Array4<f64> {
        self.normalization.denormalize(&self.positions)
    }
}

/// Groups scenes by `(N, T)` and cuts each group into batches of at most
/// `batch_size`, keeping the order in which `order` lists the scenes.
pub fn make_batches_ordered(
    scenes: &[Scene],
    order: &[usize],
    batch_size: usize,
    normalize: Option<NormalizeConfig>,
) -> Vec<Batch> {
    let batch_size = batch_size.max(1);
    let mut groups: Vec<((usize, usize, usize), Vec<usize>)> = Vec::new();
    for &i in order {
        let s = &scenes[i];
        let key = (s.num_agents(), s.len(), s.past_len);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    let mut out = Vec::new();
    for ((n, t, past_len), members) in groups {
        for chunk in members.chunks(batch_size) {
            let mut positions = Array4::<f64>::zeros((chunk.len(), n, t, 2));
            let mut offsets = Vec::with_capacity(chunk.len());
            let scale = normalize.map_or(1.0, |c| c.scale);
            for (b, &i) in chunk.iter().enumerate() {
                let s = &scenes[i];
                let off = match normalize {
                    Some(c) if c.center => s.past_centroid(),
                    _ => [0.0, 0.0],
                };
                offsets.push(off);
                let mut view = positions.slice_mut(s![b, .., .., ..]);
                view.assign(&s.positions);
                for mut p in view.rows_mut() {
                    p[0] = (p[0] - off[0]) / scale;
                    p[1] = (p[1] - off[1]) / scale;
                }
            }
            out.push(Batch {
                indices: chunk.to_vec(),
                positions,
                past_len,
                normalization: Normalization { offsets, scale },
            });
        }
    }
    out
}

pub fn make_batches(scenes: &[Scene], batch_size: usize, normalize: Option<NormalizeConfig>) -> Vec<Batch> {
    let order: Vec<usize> = (0..scenes.len()).collect();
    make_batches_ordered(scenes, &order, batch_size, normalize)
}
