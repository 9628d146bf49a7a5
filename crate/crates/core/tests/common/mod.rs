#![allow(dead_code)]

use candle_core::{DType, Tensor};
use hypertraj::config::{Betas, ModelConfig, Precision};
use hypertraj::nn::{Noise, ParamStore};
use hypertraj::system::{Mode, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small F64 model with a single (pairwise) scale.
pub fn gradcheck_model(seed: u64, past: usize, future: usize) -> (ParamStore, Model) {
    let cfg = ModelConfig {
        d: 6,
        d_z: 3,
        scales: vec![],
        categories_pairwise: 3,
        mp_iters: 2,
        init_hidden: 8,
        category_hidden: 8,
        edge_hidden: 8,
        evolve_layers: 1,
        evolve_heads: 2,
        future_hidden: 4,
        latent_hidden: 8,
        gru_hidden: 8,
        refine_hidden: vec![8],
        n_comp: 2,
        t_d: 2,
        k_ms: 2,
        precision: Precision::F64,
        ..Default::default()
    };
    let mut store = ParamStore::new(seed, DType::F64);
    let model = Model::new(&mut store, &cfg, past, future).unwrap();
    (store, model)
}

/// Smooth 3-agent trajectories, `[1, 3, T, 2]`.
pub fn three_agents(t: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::with_capacity(3 * t * 2);
    for _ in 0..3 {
        let (x0, y0) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (vx, vy) = (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
        let w = rng.random_range(0.1..0.4);
        for j in 0..t {
            let s = j as f64;
            v.push(x0 + vx * s + 0.1 * (w * s).sin());
            v.push(y0 + vy * s + 0.1 * (w * s).cos());
        }
    }
    Tensor::from_vec(v, (1, 3, t, 2), &candle_core::Device::Cpu).unwrap()
}

pub struct GradCheck {
    pub checked: usize,
    pub passed: usize,
    pub worst: f64,
}

/// Central-difference check of every sampled parameter entry of the full
/// training loss (message passing, latent, decoder and refinement).
pub fn gradient_check(samples: usize, step: f64, tol: f64, seed: u64) -> GradCheck {
    let (past_len, future_len) = (4, 4);
    let (store, model) = gradcheck_model(seed, past_len, future_len);
    let traj = three_agents(past_len + future_len, seed + 1);
    let past = traj.narrow(2, 0, past_len).unwrap();
    let fut = traj.narrow(2, past_len, future_len).unwrap();
    let betas = Betas {
        nll: 1.0,
        kl: 1.0,
        refine: 1.0,
    };
    let loss = || -> Tensor {
        let mut noise = Noise::new(seed + 2);
        let out = model
            .rollout(&past, Some(&fut), model.default_options(Mode::Train), &mut noise)
            .unwrap();
        model.loss(&out, &past, &fut, betas).unwrap().total
    };
    let value = |t: Tensor| t.to_scalar::<f64>().unwrap();
    let grads = loss().backward().unwrap();

    let vars: Vec<_> = store.named_vars().map(|(n, v)| (n.clone(), v.clone())).collect();
    let total: usize = vars.iter().map(|(_, v)| v.elem_count()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
    let mut out = GradCheck {
        checked: 0,
        passed: 0,
        worst: 0.0,
    };
    for _ in 0..samples.min(total) {
        let mut flat = rng.random_range(0..total);
        let (name, var) = vars
            .iter()
            .find(|(_, v)| {
                if flat < v.elem_count() {
                    true
                } else {
                    flat -= v.elem_count();
                    false
                }
            })
            .unwrap();
        let orig: Vec<f64> = var.as_tensor().flatten_all().unwrap().to_vec1().unwrap();
        let analytic = grads
            .get(var.as_tensor())
            .map_or(0.0, |g| g.flatten_all().unwrap().to_vec1::<f64>().unwrap()[flat]);
        let eval_at = |delta: f64| {
            let mut w = orig.clone();
            w[flat] += delta;
            var.set(&Tensor::from_vec(w, var.dims(), var.device()).unwrap()).unwrap();
            value(loss())
        };
        let numeric = (eval_at(step) - eval_at(-step)) / (2.0 * step);
        var.set(&Tensor::from_vec(orig, var.dims(), var.device()).unwrap()).unwrap();
        // The floor keeps entries whose gradient is below the difference
        // quotient's rounding error from being judged on noise.
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        out.checked += 1;
        if rel <= tol {
            out.passed += 1;
        } else {
            eprintln!("gradient mismatch in {name}[{flat}]: analytic {analytic:e} numeric {numeric:e}");
        }
        out.worst = out.worst.max(rel);
    }
    out
}

type V2 = [f64; 2];

fn at(s: &hypertraj::sim::BarGroupSample, p: usize, t: usize) -> V2 {
    [s.positions[[p, t, 0]], s.positions[[p, t, 1]]]
}

fn wrap(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    a - tau * (a / tau).round()
}

fn cross(a: V2, b: V2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Rigid motion of a particle set over one step, recovered from positions
/// alone: centroid velocity and rotation per step. `hint` picks the branch of
/// the angle when the body turns by more than half a revolution per step.
fn rigid_step(from: &[V2], to: &[V2], hint: f64) -> (V2, f64) {
    let n = from.len() as f64;
    let c = |ps: &[V2]| {
        let s = ps.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n, s[1] / n]
    };
    let (c0, c1) = (c(from), c(to));
    // Use the member farthest from the centroid for the angle.
    let k = (0..from.len())
        .max_by(|&a, &b| {
            let d = |i: usize| (from[i][0] - c0[0]).hypot(from[i][1] - c0[1]);
            d(a).total_cmp(&d(b))
        })
        .unwrap();
    let a0 = (from[k][1] - c0[1]).atan2(from[k][0] - c0[0]);
    let a1 = (to[k][1] - c1[1]).atan2(to[k][0] - c1[0]);
    let w = wrap(a1 - a0);
    let tau = std::f64::consts::TAU;
    let w = w + tau * ((hint - w) / tau).round();
    ([c1[0] - c0[0], c1[1] - c0[1]], w)
}

/// Total linear momentum and angular momentum about `com` for unit masses.
fn moments(pos: &[V2], vel: &[V2], com: V2) -> (V2, f64) {
    let p = vel.iter().fold([0.0, 0.0], |a, v| [a[0] + v[0], a[1] + v[1]]);
    let l = pos
        .iter()
        .zip(vel)
        .map(|(r, v)| cross([r[0] - com[0], r[1] - com[1]], *v))
        .sum();
    (p, l)
}

/// Momentum and angular-momentum change of the merging subsystem across
/// `collide_t`, both sides reconstructed from recorded positions.
pub fn merge_conservation(s: &hypertraj::sim::BarGroupSample) -> (f64, f64) {
    let tc = s.collide_t;
    let members = s.merged_members();
    let now: Vec<V2> = members.iter().map(|&p| at(s, p, tc)).collect();
    let com = {
        let t = now.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [t[0] / 4.0, t[1] / 4.0]
    };

    // Before: each bar moves rigidly over (tc - 1, tc].
    let mut before_v = Vec::new();
    for bar in [members[0] / 2, members[2] / 2] {
        let ids = [2 * bar, 2 * bar + 1];
        let from: Vec<V2> = ids.iter().map(|&p| at(s, p, tc - 1)).collect();
        let to: Vec<V2> = ids.iter().map(|&p| at(s, p, tc)).collect();
        let (vc, w) = rigid_step(&from, &to, s.bars[bar].omega);
        let c = [(to[0][0] + to[1][0]) / 2.0, (to[0][1] + to[1][1]) / 2.0];
        for r in &to {
            before_v.push([vc[0] - w * (r[1] - c[1]), vc[1] + w * (r[0] - c[0])]);
        }
    }

    // After: the merged body moves rigidly over (tc, tc + 1].
    let next: Vec<V2> = members.iter().map(|&p| at(s, p, tc + 1)).collect();
    let (vc, w) = rigid_step(&now, &next, s.merged_omega);
    let after_v: Vec<V2> = now
        .iter()
        .map(|r| [vc[0] - w * (r[1] - com[1]), vc[1] + w * (r[0] - com[0])])
        .collect();

    let (p0, l0) = moments(&now, &before_v, com);
    let (p1, l1) = moments(&now, &after_v, com);
    ((p0[0] - p1[0]).hypot(p0[1] - p1[1]), (l0 - l1).abs())
}

/// Largest per-step energy increase of a charged sample.
pub fn max_energy_increase(s: &hypertraj::sim::ChargedSample) -> f64 {
    let len = s.positions.dim().1;
    (1..len).map(|t| s.energy(t) - s.energy(t - 1)).fold(f64::NEG_INFINITY, f64::max)
}
