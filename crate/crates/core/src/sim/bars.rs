//! Rotating two-particle bars that merge into an L-shaped group.
//!
//! A sample is constructed backwards from its collision: pick the collision
//! step and point, place the colliding endpoints of two bars there, and run the
//! closed-form rigid motion in both directions. The third bar is placed nearby
//! at random. Candidates with any other close approach are rejected.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    add, cross, norm, random_angle, sample_rng, scale, sub, uniform, RecordMeta,
    RigidBody, SampleRecord, Scenario, Vec2, MAX_RETRIES, OBSERVED_STEPS,
};
use crate::error::{Error, Result};

/// Distance below which particles of different bars collide.
pub const COLLISION_DISTANCE: f64 = 0.05;
pub const LENGTH_RANGE: (f64, f64) = (0.3, 0.6);
pub const OMEGA_RANGE: (f64, f64) = (PI / 15.0, PI / 4.0);
pub const SPEED_RANGE: (f64, f64) = (0.05, 0.2);
/// Minimum sample length: 10 observed plus 15 future steps.
pub const MIN_LEN: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarParams {
    pub length: f64,
    /// Radians per step.
    pub omega: f64,
    /// Units per step.
    pub speed: f64,
    pub heading: f64,
}

impl BarParams {
    fn draw(rng: &mut impl Rng) -> Self {
        Self {
            length: uniform(rng, LENGTH_RANGE.0, LENGTH_RANGE.1),
            omega: uniform(rng, OMEGA_RANGE.0, OMEGA_RANGE.1),
            speed: uniform(rng, SPEED_RANGE.0, SPEED_RANGE.1),
            heading: random_angle(rng),
        }
    }

    pub fn velocity(&self) -> Vec2 {
        [self.speed * self.heading.cos(), self.speed * self.heading.sin()]
    }

    /// Rigid body for this bar whose member `anchor` sits at `anchor_pos` with
    /// orientation `phase` at step `t0`.
    pub fn body(&self, anchor: usize, anchor_pos: Vec2, phase: f64, t0: f64) -> RigidBody {
        let half = scale([phase.cos(), phase.sin()], 0.5 * self.length);
        let mut offsets = [half, scale(half, -1.0)];
        if anchor == 1 {
            offsets.swap(0, 1);
        }
        RigidBody {
            origin: sub(anchor_pos, offsets[anchor]),
            velocity: self.velocity(),
            omega: self.omega,
            offsets: offsets.to_vec(),
            t0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarGroupSample {
    /// 6 × T × 2. Bar `g` owns particles `2g` and `2g + 1`.
    pub positions: Array3<f64>,
    /// Instantaneous velocity of the motion governing `(t, t + 1]`.
    pub velocities: Array3<f64>,
    /// Velocities at `collide_t` under the pre-merge bar motion.
    pub pre_merge_velocities: Vec<Vec2>,
    /// 6 × T group labels.
    pub group_id: Array2<usize>,
    pub collide_t: usize,
    pub bars: [BarParams; 3],
    /// The two particles merged at `collide_t`.
    pub colliding: [usize; 2],
    pub merged_omega: f64,
    pub merged_velocity: Vec2,
}

impl BarGroupSample {
    pub fn len(&self) -> usize {
        self.positions.dim().1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Particles of the merged four-particle group, in index order.
    pub fn merged_members(&self) -> [usize; 4] {
        let ga = self.colliding[0] / 2;
        let gb = self.colliding[1] / 2;
        let mut m = [2 * ga, 2 * ga + 1, 2 * gb, 2 * gb + 1];
        m.sort_unstable();
        m
    }

    pub fn to_record(&self, seed: u64, index: usize) -> SampleRecord {
        let (n, t, _) = self.positions.dim();
        SampleRecord {
            positions: super::agent_major(&self.positions),
            group_id: Some(
                (0..n)
                    .map(|i| (0..t).map(|k| self.group_id[[i, k]]).collect())
                    .collect(),
            ),
            collide_t: Some(self.collide_t),
            category: None,
            disconnect_t: None,
            charge: None,
            force_mag: None,
            velocities: Some(super::agent_major(&self.velocities)),
            params: Some(serde_json::json!({
                "bars": self.bars,
                "colliding": self.colliding,
                "merged_omega": self.merged_omega,
                "merged_velocity": self.merged_velocity,
                "pre_merge_velocities": self.pre_merge_velocities,
            })),
            meta: RecordMeta {
                scenario: Scenario::Bars,
                seed,
                len: t,
                index,
            },
        }
    }
}

/// Generates `count` bar-group samples of length `len`.
pub fn gen_bar_groups(seed: u64, count: usize, len: usize) -> Result<Vec<BarGroupSample>> {
    gen_bar_groups_with(seed, count, len, 1)
}

pub fn gen_bar_groups_with(
    seed: u64,
    count: usize,
    len: usize,
    workers: usize,
) -> Result<Vec<BarGroupSample>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if len < MIN_LEN {
        return Err(Error::InvalidArgument(format!(
            "bar scenario needs T >= {MIN_LEN}, got {len}"
        )));
    }
    super::generate_parallel(count, workers, |index| {
        let mut rng = sample_rng(seed, index);
        (0..MAX_RETRIES)
            .find_map(|_| try_sample(&mut rng, len))
            .ok_or(Error::Generation {
                index,
                retries: MAX_RETRIES,
            })
    })
}

fn try_sample(rng: &mut impl Rng, len: usize) -> Option<BarGroupSample> {
    // Keep three steps on either side of the merge inside the future window.
    let collide_t = rng.random_range(OBSERVED_STEPS + 3..=len - 4);
    let tc = collide_t as f64;
    let bars = [
        BarParams::draw(rng),
        BarParams::draw(rng),
        BarParams::draw(rng),
    ];
    let ga = rng.random_range(0..3usize);
    let gb = (ga + rng.random_range(1..3usize)) % 3;
    let gc = 3 - ga - gb;
    let ea = rng.random_range(0..2usize);
    let eb = rng.random_range(0..2usize);

    let point = [uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)];
    let mut bodies: [Option<RigidBody>; 3] = [None, None, None];
    bodies[ga] = Some(bars[ga].body(ea, point, random_angle(rng), tc));
    bodies[gb] = Some(bars[gb].body(eb, point, random_angle(rng), tc));
    let offset = [uniform(rng, 0.8, 1.6), 0.0];
    let third_center = add(point, super::rotate(offset, random_angle(rng)));
    let mut third = bars[gc].body(0, third_center, random_angle(rng), tc);
    third.origin = third_center;
    bodies[gc] = Some(third);
    let bodies: Vec<RigidBody> = bodies.into_iter().map(|b| b.unwrap()).collect();

    let pa = 2 * ga + ea;
    let pb = 2 * gb + eb;
    let particle_pos = |p: usize, t: f64| bodies[p / 2].position(p % 2, t);

    // No contact between different bars before the merge, except the chosen pair at tc.
    for t in 0..=collide_t {
        for p in 0..6 {
            for q in (p + 1)..6 {
                if p / 2 == q / 2 || (t == collide_t && p == pa.min(pb) && q == pa.max(pb)) {
                    continue;
                }
                if norm(sub(particle_pos(p, t as f64), particle_pos(q, t as f64)))
                    < COLLISION_DISTANCE
                {
                    return None;
                }
            }
        }
    }

    // Perfectly inelastic merge: momentum and angular momentum about the COM carry over.
    let members = [2 * ga, 2 * ga + 1, 2 * gb, 2 * gb + 1];
    let mut pos_tc: Vec<Vec2> = members.iter().map(|&p| particle_pos(p, tc)).collect();
    for (k, &p) in members.iter().enumerate() {
        if p == pa || p == pb {
            pos_tc[k] = point;
        }
    }
    let vel_tc: Vec<Vec2> = members
        .iter()
        .map(|&p| bodies[p / 2].velocity_of(p % 2, tc))
        .collect();
    let com = scale(pos_tc.iter().fold([0.0, 0.0], |a, &b| add(a, b)), 0.25);
    let momentum = vel_tc.iter().fold([0.0, 0.0], |a, &b| add(a, b));
    let com_vel = scale(momentum, 0.25);
    let ang_mom: f64 = pos_tc
        .iter()
        .zip(&vel_tc)
        .map(|(&r, &v)| cross(sub(r, com), sub(v, com_vel)))
        .sum();
    let inertia: f64 = pos_tc.iter().map(|&r| norm(sub(r, com)).powi(2)).sum();
    if inertia < 1e-12 {
        return None;
    }
    let merged = RigidBody {
        origin: com,
        velocity: com_vel,
        omega: ang_mom / inertia,
        offsets: pos_tc.iter().map(|&r| sub(r, com)).collect(),
        t0: tc,
    };

    let other_a = 2 * ga + (1 - ea);
    let other_b = 2 * gb + (1 - eb);
    if norm(sub(pos_tc[members.iter().position(|&p| p == other_a)?], pos_tc[
        members.iter().position(|&p| p == other_b)?
    ])) < COLLISION_DISTANCE
    {
        return None;
    }

    let mut positions = Array3::<f64>::zeros((6, len, 2));
    let mut velocities = Array3::<f64>::zeros((6, len, 2));
    let mut group_id = Array2::<usize>::zeros((6, len));
    let merged_group = ga.min(gb);
    for t in 0..len {
        let tf = t as f64;
        for p in 0..6 {
            let g = p / 2;
            let (pos, vel, gid) = if t >= collide_t && g != gc {
                let k = members.iter().position(|&m| m == p).unwrap();
                (merged.position(k, tf), merged.velocity_of(k, tf), merged_group)
            } else {
                (
                    bodies[g].position(p % 2, tf),
                    bodies[g].velocity_of(p % 2, tf),
                    g,
                )
            };
            positions[[p, t, 0]] = pos[0];
            positions[[p, t, 1]] = pos[1];
            velocities[[p, t, 0]] = vel[0];
            velocities[[p, t, 1]] = vel[1];
            group_id[[p, t]] = gid;
        }
        if t > collide_t {
            // The merged group must not touch the third bar afterwards.
            for &p in &members {
                for q in [2 * gc, 2 * gc + 1] {
                    let d = norm(sub(
                        [positions[[p, t, 0]], positions[[p, t, 1]]],
                        [positions[[q, t, 0]], positions[[q, t, 1]]],
                    ));
                    if d < COLLISION_DISTANCE {
                        return None;
                    }
                }
            }
        }
    }
    if positions.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let mut pre_merge_velocities = vec![[0.0; 2]; 6];
    for (p, slot) in pre_merge_velocities.iter_mut().enumerate() {
        *slot = bodies[p / 2].velocity_of(p % 2, tc);
    }
    Some(BarGroupSample {
        positions,
        velocities,
        pre_merge_velocities,
        group_id,
        collide_t,
        bars,
        colliding: [pa.min(pb), pa.max(pb)],
        merged_omega: merged.omega,
        merged_velocity: com_vel,
    })
}
