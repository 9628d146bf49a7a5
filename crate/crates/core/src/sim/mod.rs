//! Physics scenarios with ground-truth relations.
//!
//! Three generators are provided:
//!
//! * [`bars`]: three rotating two-particle bars, two of which merge into an
//!   L-shaped four-particle group after a perfectly inelastic collision.
//! * [`ybar`]: three particles held by a Y-shaped bar that disappears once its
//!   center crosses `x = 0`.
//! * [`charged`]: a moving charge attracted by a fixed charge at the origin,
//!   slowed by linear drag.
//!
//! Every sample is a pure function of `(seed, index)`, so generation can be
//! split across workers without changing the output.

pub mod bars;
pub mod charged;
pub mod ybar;

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bars::{gen_bar_groups, BarGroupSample, BarParams};
pub use charged::{gen_charged, simulate_charged, ChargedSample};
pub use ybar::{gen_ybar, simulate_ybar, Connection, YBarParams, YBarSample};

/// Retries per sample before generation is reported as failed.
pub const MAX_RETRIES: usize = 100;

/// Observed steps assumed by the bar and Y-bar scenarios.
pub const OBSERVED_STEPS: usize = 10;

pub type Vec2 = [f64; 2];

#[inline]
pub(crate) fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub(crate) fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

#[inline]
pub(crate) fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub(crate) fn cross(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Counter-clockwise rotation by `angle`.
#[inline]
pub(crate) fn rotate(a: Vec2, angle: f64) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c * a[0] - s * a[1], s * a[0] + c * a[1]]
}

#[inline]
pub(crate) fn perp(a: Vec2) -> Vec2 {
    [-a[1], a[0]]
}

/// Planar rigid body: constant translation of a reference point plus constant
/// rotation of body-fixed offsets about it. Positions are evaluated in closed
/// form, so there is no integration error.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBody {
    /// Reference point position at `t0`.
    pub origin: Vec2,
    pub velocity: Vec2,
    /// Radians per step, counter-clockwise positive.
    pub omega: f64,
    /// Member offsets from the reference point at `t0`.
    pub offsets: Vec<Vec2>,
    pub t0: f64,
}

impl RigidBody {
    pub fn center(&self, t: f64) -> Vec2 {
        add(self.origin, scale(self.velocity, t - self.t0))
    }

    pub fn position(&self, member: usize, t: f64) -> Vec2 {
        let off = rotate(self.offsets[member], self.omega * (t - self.t0));
        add(self.center(t), off)
    }

    pub fn velocity_of(&self, member: usize, t: f64) -> Vec2 {
        let off = rotate(self.offsets[member], self.omega * (t - self.t0));
        add(self.velocity, scale(perp(off), self.omega))
    }
}

pub(crate) fn uniform(rng: &mut impl rand::Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub(crate) fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub(crate) fn random_angle(rng: &mut impl rand::Rng) -> f64 {
    uniform(rng, 0.0, 2.0 * PI)
}

/// Runs `f(index)` for every index in `0..count` across `workers` threads and
/// returns the results in index order.
pub(crate) fn generate_parallel<T, F>(count: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let workers = workers.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(&f).collect();
    }
    let chunk = count.div_ceil(workers);
    let mut out: Vec<Result<Vec<T>>> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || {
                    let lo = w * chunk;
                    let hi = ((w + 1) * chunk).min(count);
                    (lo..hi).map(f).collect::<Result<Vec<T>>>()
                })
            })
            .collect();
        out = handles
            .into_iter()
            .map(|h| h.join().expect("generator worker panicked"))
            .collect();
    });
    let mut all = Vec::with_capacity(count);
    for part in out {
        all.extend(part?);
    }
    Ok(all)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Bars,
    Ybar,
    Charged,
}

impl Scenario {
    pub fn default_len(self) -> usize {
        match self {
            Scenario::Bars => 25,
            Scenario::Ybar => 30,
            Scenario::Charged => 40,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Bars => "bars",
            Scenario::Ybar => "ybar",
            Scenario::Charged => "charged",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bars" | "sim1" => Ok(Scenario::Bars),
            "ybar" | "sim2" => Ok(Scenario::Ybar),
            "charged" | "sim3" => Ok(Scenario::Charged),
            other => Err(Error::InvalidArgument(format!(
                "unknown scenario `{other}` (expected bars, ybar or charged)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub scenario: Scenario,
    pub seed: u64,
    #[serde(rename = "T")]
    pub len: usize,
    #[serde(default)]
    pub index: usize,
}

/// One JSON-Lines row of a generated dataset. Scenario-specific relation
/// fields are optional so that one schema covers all three generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Agent-major: `positions[agent][t] = [x, y]`.
    pub positions: Vec<Vec<Vec2>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collide_t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Vec<Connection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disconnect_t: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_mag: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocities: Option<Vec<Vec<Vec2>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
    pub meta: RecordMeta,
}

pub(crate) fn agent_major(data: &ndarray::Array3<f64>) -> Vec<Vec<Vec2>> {
    let (n, t, _) = data.dim();
    (0..n)
        .map(|i| (0..t).map(|k| [data[[i, k, 0]], data[[i, k, 1]]]).collect())
        .collect()
}

/// Writes one record per line.
pub fn write_jsonl(path: &Path, records: &[SampleRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Generates `count` samples of `scenario` and converts them to records.
pub fn generate_records(
    scenario: Scenario,
    seed: u64,
    count: usize,
    len: usize,
    workers: usize,
) -> Result<Vec<SampleRecord>> {
    Ok(match scenario {
        Scenario::Bars => bars::gen_bar_groups_with(seed, count, len, workers)?
            .iter()
            .enumerate()
            .map(|(i, s)| s.to_record(seed, i))
            .collect(),
        Scenario::Ybar => ybar::gen_ybar_with(seed, count, len, workers)?
            .iter()
            .enumerate()
            .map(|(i, s)| s.to_record(seed, i))
            .collect(),
        Scenario::Charged => charged::gen_charged_with(seed, count, len, workers)?
            .iter()
            .enumerate()
            .map(|(i, s)| s.to_record(seed, i))
            .collect(),
    })
}
