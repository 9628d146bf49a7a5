//! Property suites over the reasoning and probabilistic components.

use candle_core::{DType, Device, Tensor};
use hypertraj::config::ModelConfig;
use hypertraj::gmm::{GmmParams, SIGMA_MAX, SIGMA_MIN};
use hypertraj::hypergraph::{
    affinity, form_group_exhaustive, form_group_greedy, form_pairwise, infer_topology, objective, SolverMode,
};
use hypertraj::mp::{Incidence, MessagePassing};
use hypertraj::nn::{Noise, ParamStore};
use hypertraj::system::categorical_kl;
use hypertraj::train_eval::{eval_category, min_ade_fde, reasoning::CategoryObservation, Matching};
use ndarray::{Array2, Array3, Array4, Axis};
use proptest::prelude::*;

fn embeddings(n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * d).prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
}

fn sized_embeddings() -> impl Strategy<Value = Array2<f64>> {
    (4usize..=7, 2usize..=5).prop_flat_map(|(n, d)| embeddings(n, d))
}

fn host(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn affinity_is_scale_invariant(q in sized_embeddings(), c in 0.01f64..100.0) {
        let a = affinity(q.view(), None, 0.2).unwrap();
        let b = affinity((&q * c).view(), None, 0.2).unwrap();
        for (x, y) in a.a.iter().zip(b.a.iter()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothed_affinity_stays_in_range(q1 in embeddings(5, 3), q2 in embeddings(5, 3), alpha in 0.0f64..5.0) {
        let a1 = affinity(q1.view(), None, alpha).unwrap();
        let a2 = affinity(q2.view(), Some(&a1), alpha).unwrap();
        prop_assert_eq!(a2.step, 1);
        for i in 0..5 {
            prop_assert!((a2.a[[i, i]] - 1.0).abs() < 1e-12);
            for j in 0..5 {
                prop_assert!(a2.a[[i, j]].abs() <= 1.0 + 1e-12);
                prop_assert!((a2.a[[i, j]] - a2.a[[j, i]]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn greedy_never_beats_exhaustive(q in sized_embeddings(), m in 2usize..=4, i in 0usize..4) {
        let a = affinity(q.view(), None, 0.0).unwrap().a;
        let g = form_group_greedy(a.view(), m, i).unwrap();
        let e = form_group_exhaustive(a.view(), m, i).unwrap();
        prop_assert!(objective(a.view(), &g) <= objective(a.view(), &e) + 1e-12);
        for grp in [&g, &e] {
            prop_assert_eq!(grp.len(), m);
            prop_assert!(grp.contains(&i));
            let mut s = grp.clone();
            s.dedup();
            prop_assert_eq!(s.len(), m);
        }
    }

    #[test]
    fn pairwise_columns_are_edges(q in sized_embeddings(), m0 in 1usize..=3) {
        let a = affinity(q.view(), None, 0.0).unwrap().a;
        let h = form_pairwise(a.view(), m0).unwrap();
        let n = a.nrows();
        for c in 0..n * m0 {
            prop_assert_eq!(h.column(c).sum(), 2.0);
            prop_assert_eq!(h[[c / m0, c]], 1.0);
        }
    }

    #[test]
    fn every_node_is_covered(q in sized_embeddings()) {
        let a = affinity(q.view(), None, 0.0).unwrap().a;
        let n = a.nrows();
        let g = infer_topology(a.view(), n - 1, &[3], SolverMode::Auto).unwrap();
        for s in 0..g.num_scales() {
            for i in 0..n {
                prop_assert!(g.incidence(s).row(i).sum() >= 1.0);
            }
        }
    }
}

fn mp_fixture(seed: u64) -> (MessagePassing, ModelConfig) {
    let cfg = ModelConfig {
        d: 6,
        scales: vec![3],
        categories_pairwise: 4,
        categories_group: 5,
        mp_iters: 2,
        edge_hidden: 8,
        category_hidden: 8,
        ..Default::default()
    };
    let mut store = ParamStore::new(seed, DType::F64);
    (MessagePassing::new(&mut store, "mp", &cfg).unwrap(), cfg)
}

fn mp_run(mp: &MessagePassing, cfg: &ModelConfig, q: &Array2<f64>, noise: Option<&mut Noise>) -> hypertraj::mp::MpOutput {
    let (n, d) = q.dim();
    let a = affinity(q.view(), None, 0.0).unwrap();
    let g = infer_topology(a.a.view(), n - 1, &cfg.scales, SolverMode::Exhaustive).unwrap();
    let inc: Vec<Incidence> = (0..cfg.num_scales())
        .map(|s| Incidence::from_hypergraphs(std::slice::from_ref(&g), s, DType::F64, &Device::Cpu).unwrap())
        .collect();
    let qt = Tensor::from_vec(q.iter().copied().collect::<Vec<_>>(), (1, n, d), &Device::Cpu).unwrap();
    mp.forward(&qt, &inc, noise).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn strengths_and_categories_are_valid(q in embeddings(5, 6), seed in 0u64..4, noisy in any::<bool>()) {
        let (mp, cfg) = mp_fixture(seed);
        let mut noise = Noise::new(seed);
        let out = mp_run(&mp, &cfg, &q, noisy.then_some(&mut noise));
        for rec in &out.records {
            for r in host(&rec.strength) {
                prop_assert!(r > 0.0 && r < 1.0, "strength {r}");
            }
            let c = rec.category.to_dtype(DType::F64).unwrap();
            let l = c.dims()[2];
            let rows = host(&c);
            for row in rows.chunks(l) {
                prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gmm_parameters_are_valid(raw in prop::collection::vec(-60.0f64..60.0, 18), target in prop::collection::vec(-5.0f64..5.0, 2)) {
        let raw = Tensor::from_vec(raw, (1, 18), &Device::Cpu).unwrap();
        let p = GmmParams::from_raw(&raw, 3).unwrap();
        let w = host(&p.weights().unwrap());
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        for s in host(&p.sigma_x().unwrap()).into_iter().chain(host(&p.sigma_y().unwrap())) {
            prop_assert!((SIGMA_MIN * (1.0 - 1e-12)..=SIGMA_MAX * (1.0 + 1e-12)).contains(&s));
        }
        prop_assert!(host(&p.rho).iter().all(|r| r.abs() < 1.0));
        let t = Tensor::from_vec(target, (1, 2), &Device::Cpu).unwrap();
        prop_assert!(host(&p.nll(&t).unwrap())[0].is_finite());
    }

    #[test]
    fn categorical_kl_is_non_negative(a in prop::collection::vec(-20.0f64..20.0, 8), b in prop::collection::vec(-20.0f64..20.0, 8)) {
        let q = Tensor::from_vec(a.clone(), (1, 8), &Device::Cpu).unwrap();
        let p = Tensor::from_vec(b, (1, 8), &Device::Cpu).unwrap();
        let kl = host(&categorical_kl(&q, &p).unwrap())[0];
        prop_assert!(kl >= 0.0 && kl.is_finite());
        prop_assert!(host(&categorical_kl(&q, &q).unwrap())[0].abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn message_passing_is_permutation_equivariant(q in embeddings(5, 6), perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let (mp, cfg) = mp_fixture(7);
        let base = mp_run(&mp, &cfg, &q, None);
        let qp = q.select(Axis(0), &perm);
        let permuted = mp_run(&mp, &cfg, &qp, None);
        let d = base.fused.dims()[2];
        let b = host(&base.fused);
        let p = host(&permuted.fused);
        for (new, &old) in perm.iter().enumerate() {
            for c in 0..d {
                prop_assert!((p[new * d + c] - b[old * d + c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn best_of_k_is_order_free_and_monotone(
        vals in prop::collection::vec(-3.0f64..3.0, 6 * 2 * 4 * 2),
        gt in prop::collection::vec(-3.0f64..3.0, 2 * 4 * 2),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let preds = Array4::from_shape_vec((6, 2, 4, 2), vals).unwrap();
        let gt = Array3::from_shape_vec((2, 4, 2), gt).unwrap();
        let full = min_ade_fde(preds.view(), gt.view()).unwrap();
        let shuffled = preds.select(Axis(0), &perm);
        prop_assert_eq!(min_ade_fde(shuffled.view(), gt.view()).unwrap(), full);
        let mut last = (f64::INFINITY, f64::INFINITY);
        for k in 1..=6 {
            let m = min_ade_fde(preds.slice(ndarray::s![..k, .., .., ..]), gt.view()).unwrap();
            prop_assert!(m.0 <= last.0 && m.1 <= last.1);
            last = m;
        }
    }

    #[test]
    fn category_accuracy_ignores_cluster_names(
        pairs in prop::collection::vec((0usize..4, 0usize..2), 1..200),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let obs = |f: &dyn Fn(usize) -> usize| -> Vec<CategoryObservation> {
            pairs.iter().enumerate().map(|(i, &(c, l))| CategoryObservation { scene: i / 5, t: i % 5, cluster: f(c), label: l }).collect()
        };
        let a = obs(&|c| c);
        let b = obs(&|c| perm[c]);
        for m in [Matching::ManyToOne, Matching::OneToOne] {
            prop_assert_eq!(eval_category(&a, &a, 4, 2, m).accuracy, eval_category(&b, &b, 4, 2, m).accuracy);
        }
    }
}
