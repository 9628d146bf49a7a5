//! Three particles on a rotating Y-shaped bar that vanishes at `x = 0`.

use std::f64::consts::PI;

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    add, random_angle, sample_rng, scale, uniform, RecordMeta, RigidBody, SampleRecord, Scenario,
    Vec2, MAX_RETRIES,
};
use crate::error::{Error, Result};

pub const OMEGA_RANGE: (f64, f64) = (PI / 10.0, PI / 5.0);
pub const VX_RANGE: (f64, f64) = (-0.2, -0.1);
pub const VY_RANGE: (f64, f64) = (0.0, 0.2);
pub const ARM_RANGE: (f64, f64) = (0.5, 1.0);
pub const CENTER_X_RANGE: (f64, f64) = (2.0, 4.0);
pub const CENTER_Y_RANGE: (f64, f64) = (0.0, 3.0);
/// 10 observed plus 20 future steps.
pub const MIN_LEN: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connection {
    Connected,
    Disconnected,
}

impl Connection {
    pub fn index(self) -> usize {
        match self {
            Connection::Connected => 0,
            Connection::Disconnected => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YBarParams {
    pub omega: f64,
    pub velocity: Vec2,
    pub arm: f64,
    pub center: Vec2,
    pub phase: f64,
}

impl YBarParams {
    fn draw(rng: &mut impl Rng) -> Self {
        Self {
            omega: uniform(rng, OMEGA_RANGE.0, OMEGA_RANGE.1),
            velocity: [
                uniform(rng, VX_RANGE.0, VX_RANGE.1),
                uniform(rng, VY_RANGE.0, VY_RANGE.1),
            ],
            arm: uniform(rng, ARM_RANGE.0, ARM_RANGE.1),
            center: [
                uniform(rng, CENTER_X_RANGE.0, CENTER_X_RANGE.1),
                uniform(rng, CENTER_Y_RANGE.0, CENTER_Y_RANGE.1),
            ],
            phase: random_angle(rng),
        }
    }

    fn body(&self) -> RigidBody {
        RigidBody {
            origin: self.center,
            velocity: self.velocity,
            omega: self.omega,
            offsets: (0..3)
                .map(|j| {
                    let a = self.phase + 2.0 * PI * j as f64 / 3.0;
                    [self.arm * a.cos(), self.arm * a.sin()]
                })
                .collect(),
            t0: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YBarSample {
    /// 3 × T × 2.
    pub positions: Array3<f64>,
    /// Instantaneous velocities; constant from `disconnect_t` on.
    pub velocities: Array3<f64>,
    pub category: Vec<Connection>,
    /// First step whose center has reached `x <= 0`; equals `T` when the bar
    /// never disconnects inside the sample.
    pub disconnect_t: usize,
    /// Continuous release time at which the center crosses `x = 0`.
    pub release_time: f64,
    pub params: YBarParams,
}

impl YBarSample {
    pub fn to_record(&self, seed: u64, index: usize) -> SampleRecord {
        let len = self.positions.dim().1;
        SampleRecord {
            positions: super::agent_major(&self.positions),
            group_id: None,
            collide_t: None,
            category: Some(self.category.clone()),
            disconnect_t: Some(self.disconnect_t),
            charge: None,
            force_mag: None,
            velocities: Some(super::agent_major(&self.velocities)),
            params: Some(serde_json::json!({
                "ybar": self.params,
                "release_time": self.release_time,
            })),
            meta: RecordMeta {
                scenario: Scenario::Ybar,
                seed,
                len,
                index,
            },
        }
    }
}

/// Runs the Y-bar scenario for fixed parameters. The bar is rigid until the
/// center crosses `x = 0`; each particle then keeps its velocity at the
/// crossing instant.
pub fn simulate_ybar(params: YBarParams, len: usize) -> Result<YBarSample> {
    let ok = params.velocity[0] < 0.0
        && params.arm > 0.0
        && params.center[0] > 0.0
        && params.positions_finite();
    if !ok {
        return Err(Error::InvalidArgument(format!(
            "Y-bar parameters out of range: {params:?}"
        )));
    }
    let body = params.body();
    let x0 = params.center[0];
    let vx = params.velocity[0];
    let disconnect_t = (0..len)
        .find(|&t| x0 + vx * t as f64 <= 0.0)
        .unwrap_or(len);
    let release_time = -x0 / vx;

    let release: Vec<(Vec2, Vec2)> = (0..3)
        .map(|j| (body.position(j, release_time), body.velocity_of(j, release_time)))
        .collect();

    let mut positions = Array3::<f64>::zeros((3, len, 2));
    let mut velocities = Array3::<f64>::zeros((3, len, 2));
    let mut category = Vec::with_capacity(len);
    for t in 0..len {
        let tf = t as f64;
        let connected = t < disconnect_t;
        category.push(if connected {
            Connection::Connected
        } else {
            Connection::Disconnected
        });
        for (j, &(p_rel, v_rel)) in release.iter().enumerate() {
            let (p, v) = if connected {
                (body.position(j, tf), body.velocity_of(j, tf))
            } else {
                (add(p_rel, scale(v_rel, tf - release_time)), v_rel)
            };
            positions[[j, t, 0]] = p[0];
            positions[[j, t, 1]] = p[1];
            velocities[[j, t, 0]] = v[0];
            velocities[[j, t, 1]] = v[1];
        }
    }
    Ok(YBarSample {
        positions,
        velocities,
        category,
        disconnect_t,
        release_time,
        params,
    })
}

impl YBarParams {
    fn positions_finite(&self) -> bool {
        [self.omega, self.velocity[0], self.velocity[1], self.arm]
            .iter()
            .chain(self.center.iter())
            .all(|v| v.is_finite())
    }
}

pub fn gen_ybar(seed: u64, count: usize, len: usize) -> Result<Vec<YBarSample>> {
    gen_ybar_with(seed, count, len, 1)
}

pub fn gen_ybar_with(seed: u64, count: usize, len: usize, workers: usize) -> Result<Vec<YBarSample>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if len < MIN_LEN {
        return Err(Error::InvalidArgument(format!(
            "Y-bar scenario needs T >= {MIN_LEN}, got {len}"
        )));
    }
    super::generate_parallel(count, workers, |index| {
        let mut rng = sample_rng(seed, index);
        for _ in 0..MAX_RETRIES {
            if let Ok(s) = simulate_ybar(YBarParams::draw(&mut rng), len) {
                return Ok(s);
            }
        }
        Err(Error::Generation {
            index,
            retries: MAX_RETRIES,
        })
    })
}
