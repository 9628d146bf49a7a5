//! A moving charge attracted by a fixed charge at the origin, with linear drag.

use ndarray::Array3;
use rand::Rng;

use super::{norm, sample_rng, scale, uniform, RecordMeta, SampleRecord, Scenario, Vec2, MAX_RETRIES};
use crate::error::{Error, Result};

/// Coulomb constant.
pub const COULOMB: f64 = 0.4;
pub const DRAG: f64 = 0.2;
pub const CHARGE_RANGE: (f64, f64) = (3.0, 16.0);
pub const MOVING_CHARGE: f64 = -1.0;
pub const START: Vec2 = [0.0, 3.0];
pub const START_VELOCITY: Vec2 = [-1.5, -1.0];
/// Simulation time between recorded steps.
pub const DT: f64 = 0.1;
/// Semi-implicit Euler substeps per recorded step.
pub const SUBSTEPS: usize = 100;
/// Closest allowed approach to the fixed charge.
pub const MIN_DISTANCE: f64 = 1e-3;
/// 25 observed plus 15 future steps.
pub const MIN_LEN: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct ChargedSample {
    /// 2 × T × 2; agent 0 is the fixed charge, agent 1 the moving one.
    pub positions: Array3<f64>,
    pub velocities: Array3<f64>,
    /// Magnitude of the fixed (positive) charge.
    pub charge: f64,
    /// Coulomb force magnitude on the moving particle at each recorded step.
    pub force_mag: Vec<f64>,
}

impl ChargedSample {
    pub fn to_record(&self, seed: u64, index: usize) -> SampleRecord {
        let len = self.positions.dim().1;
        SampleRecord {
            positions: super::agent_major(&self.positions),
            group_id: None,
            collide_t: None,
            category: None,
            disconnect_t: None,
            charge: Some(self.charge),
            force_mag: Some(self.force_mag.clone()),
            velocities: Some(super::agent_major(&self.velocities)),
            params: None,
            meta: RecordMeta {
                scenario: Scenario::Charged,
                seed,
                len,
                index,
            },
        }
    }

    pub fn moving(&self, t: usize) -> Vec2 {
        [self.positions[[1, t, 0]], self.positions[[1, t, 1]]]
    }

    /// Kinetic plus Coulomb potential energy of the moving particle.
    pub fn energy(&self, t: usize) -> f64 {
        let v = [self.velocities[[1, t, 0]], self.velocities[[1, t, 1]]];
        0.5 * (v[0] * v[0] + v[1] * v[1]) + potential(self.charge, self.moving(t))
    }
}

/// Coulomb force on a charge `q_moving` at `r` from a charge `q_fixed` at the
/// origin: `C q1 q2 r / |r|^3`, attractive for opposite signs.
pub fn coulomb_force(q_fixed: f64, q_moving: f64, r: Vec2) -> Vec2 {
    let d = norm(r);
    scale(r, COULOMB * q_fixed * q_moving / (d * d * d))
}

pub fn potential(charge: f64, r: Vec2) -> f64 {
    COULOMB * charge * MOVING_CHARGE / norm(r)
}

/// Integrates one sample for a fixed center charge. Returns `None` if the
/// moving particle comes within [`MIN_DISTANCE`] of the origin.
pub fn simulate_charged(charge: f64, len: usize) -> Option<ChargedSample> {
    let h = DT / SUBSTEPS as f64;
    let mut r = START;
    let mut v = START_VELOCITY;
    let mut positions = Array3::<f64>::zeros((2, len, 2));
    let mut velocities = Array3::<f64>::zeros((2, len, 2));
    let mut force_mag = Vec::with_capacity(len);
    for t in 0..len {
        if t > 0 {
            for _ in 0..SUBSTEPS {
                let f = coulomb_force(charge, MOVING_CHARGE, r);
                v = [
                    v[0] + h * (f[0] - DRAG * v[0]),
                    v[1] + h * (f[1] - DRAG * v[1]),
                ];
                r = [r[0] + h * v[0], r[1] + h * v[1]];
                if norm(r) < MIN_DISTANCE || !r[0].is_finite() || !r[1].is_finite() {
                    return None;
                }
            }
        }
        positions[[1, t, 0]] = r[0];
        positions[[1, t, 1]] = r[1];
        velocities[[1, t, 0]] = v[0];
        velocities[[1, t, 1]] = v[1];
        let d = norm(r);
        force_mag.push(COULOMB * charge / (d * d));
    }
    Some(ChargedSample {
        positions,
        velocities,
        charge,
        force_mag,
    })
}

pub fn gen_charged(seed: u64, count: usize, len: usize) -> Result<Vec<ChargedSample>> {
    gen_charged_with(seed, count, len, 1)
}

pub fn gen_charged_with(
    seed: u64,
    count: usize,
    len: usize,
    workers: usize,
) -> Result<Vec<ChargedSample>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if len < MIN_LEN {
        return Err(Error::InvalidArgument(format!(
            "charged scenario needs T >= {MIN_LEN}, got {len}"
        )));
    }
    super::generate_parallel(count, workers, |index| {
        let mut rng = sample_rng(seed, index);
        for _ in 0..MAX_RETRIES {
            let charge = draw_charge(&mut rng);
            if let Some(s) = simulate_charged(charge, len) {
                return Ok(s);
            }
        }
        Err(Error::Generation {
            index,
            retries: MAX_RETRIES,
        })
    })
}

fn draw_charge(rng: &mut impl Rng) -> f64 {
    uniform(rng, CHARGE_RANGE.0, CHARGE_RANGE.1)
}
