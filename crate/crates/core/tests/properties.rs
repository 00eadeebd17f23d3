use ldl_core::engine::{LdlEngine, Redistribution};
use ldl_core::eval::{domain_gap, retrieval_eval, LabelledFeatures, Metric};
use ldl_core::layout::DomainLayout;
use ldl_core::losses::{batch_hard_triplet, entropy, ldl_loss, mine_hardest, overall_loss, Composition};
use ndarray::Array2;
use proptest::prelude::*;

/// Domain assignment with every domain non-empty, and a layout built from it.
fn layout_strategy() -> impl Strategy<Value = DomainLayout> {
    (2usize..=4).prop_flat_map(|k| (Just(k), proptest::collection::vec(0..k, k..=12))).prop_map(|(k, mut phi)| {
        for d in 0..k {
            phi[d] = d;
        }
        DomainLayout::from_assignment(phi, k).unwrap()
    })
}

fn distribution(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

#[derive(Clone, Debug)]
enum Op {
    Update { class: usize, weights: Vec<f64>, m: f64 },
    Commit(Redistribution),
    Pinned(f64),
}

fn ops_strategy(c: usize) -> impl Strategy<Value = Vec<Op>> {
    let update = (0..c, proptest::collection::vec(0.01f64..1.0, c), 0.0f64..=1.0)
        .prop_map(|(class, weights, m)| Op::Update { class, weights, m });
    let commit = prop_oneof![Just(Redistribution::Ldl1), Just(Redistribution::Ldl2), Just(Redistribution::Ldl3)]
        .prop_map(Op::Commit);
    let pinned = (0.05f64..0.95).prop_map(Op::Pinned);
    proptest::collection::vec(prop_oneof![4 => update, 2 => commit, 1 => pinned], 1..40)
}

fn assert_row_stochastic(m: ndarray::ArrayView2<'_, f64>) -> Result<(), TestCaseError> {
    for (i, row) in m.rows().into_iter().enumerate() {
        prop_assert!((row.sum() - 1.0).abs() <= 1e-9, "row {i} sums to {}", row.sum());
        prop_assert!(row.iter().all(|&v| v >= 0.0), "row {i} has a negative entry");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn engine_rows_stay_stochastic(
        (layout, ops) in layout_strategy().prop_flat_map(|l| { let c = l.class_count(); (Just(l), ops_strategy(c)) })
    ) {
        let mut engine = LdlEngine::<f64>::new(layout.clone()).unwrap();
        for op in ops {
            match op {
                Op::Update { class, weights, m } => engine.momentum_update(class, &distribution(&weights), m).unwrap(),
                Op::Commit(v) => {
                    let before = engine.tracking().entries().to_owned();
                    engine.commit_epoch(v).unwrap();
                    let labels = engine.labels().entries();
                    for i in 0..layout.class_count() {
                        prop_assert_eq!(labels[[i, i]], before[[i, i]]);
                        if v != Redistribution::Ldl1 {
                            for j in layout.classes_in(layout.domain_of(i)) {
                                if *j != i {
                                    prop_assert_eq!(labels[[i, *j]], 0.0);
                                }
                            }
                        }
                    }
                    if v == Redistribution::Ldl3 {
                        prop_assert!(engine.mass_law_residual() <= 1e-9);
                    }
                }
                Op::Pinned(own) => {
                    engine.commit_epoch_pinned(own).unwrap();
                    for i in 0..layout.class_count() {
                        prop_assert_eq!(engine.labels().row(i)[i], own);
                    }
                }
            }
            assert_row_stochastic(engine.tracking().entries())?;
            assert_row_stochastic(engine.labels().entries())?;
        }
    }

    #[test]
    fn repeated_commit_is_idempotent(layout in layout_strategy(), variant in prop_oneof![
        Just(Redistribution::Ldl1), Just(Redistribution::Ldl2), Just(Redistribution::Ldl3)
    ], seed in any::<u64>()) {
        let mut engine = LdlEngine::<f64>::new(layout.clone()).unwrap();
        let c = layout.class_count();
        for i in 0..c {
            let w: Vec<f64> = (0..c).map(|j| 1.0 + ((seed >> (j % 60)) & 7) as f64 + (i * j) as f64 % 5.0).collect();
            engine.momentum_update(i, &distribution(&w), 0.5).unwrap();
        }
        engine.commit_epoch(variant).unwrap();
        let first = engine.labels().entries().to_owned();
        engine.commit_epoch(variant).unwrap();
        prop_assert_eq!(first, engine.labels().entries().to_owned());
    }

    #[test]
    fn gibbs_inequality(raw_p in proptest::collection::vec(0.001f64..1.0, 2..12), raw_l in proptest::collection::vec(0.0f64..1.0, 12)) {
        let p = distribution(&raw_p);
        let mut l = raw_l[..p.len()].to_vec();
        l[0] += 0.1;
        let l = distribution(&l);
        let (ce, _) = ldl_loss(&p, &l).unwrap();
        prop_assert!(ce >= entropy(&l) - 1e-12);
        let (self_ce, _) = ldl_loss(&l.iter().map(|v| v.max(1e-300)).collect::<Vec<_>>(), &l).unwrap();
        prop_assert!((self_ce - entropy(&l)).abs() <= 1e-12);
    }

    #[test]
    fn triplet_matches_brute_force(
        per_id in 2usize..=3, ids in 2usize..=4, dim in 1usize..=6,
        values in proptest::collection::vec(-2.0f64..2.0, 72), margin in 0.0f64..1.0
    ) {
        let labels: Vec<usize> = (0..ids).flat_map(|c| std::iter::repeat_n(c, per_id)).collect();
        let n = labels.len();
        let x = Array2::from_shape_vec((n, dim), values[..n * dim].to_vec()).unwrap();
        let dist = |a: usize, b: usize| x.row(a).iter().zip(x.row(b)).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let mined = mine_hardest(x.view(), &labels, margin).unwrap();
        let mut total = 0.0;
        for t in &mined {
            let a = t.anchor;
            let pos = (0..n).filter(|&b| b != a && labels[b] == labels[a]).map(|b| dist(a, b)).fold(f64::MIN, f64::max);
            let neg = (0..n).filter(|&b| labels[b] != labels[a]).map(|b| dist(a, b)).fold(f64::MAX, f64::min);
            prop_assert_eq!(dist(a, t.positive), pos);
            prop_assert_eq!(dist(a, t.negative), neg);
            let expected = (margin + pos - neg).max(0.0);
            prop_assert_eq!(t.loss, expected);
            total += expected;
        }
        let (loss, _) = batch_hard_triplet(x.view(), &labels, margin).unwrap();
        prop_assert_eq!(loss, total * (1.0 / n as f64));
    }

    #[test]
    fn overall_loss_is_linear_in_lambda(cls in 0.0f64..5.0, tri in 0.0f64..5.0, ldl in 0.0f64..5.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
        for mode in [Composition::Full, Composition::DistributionOnly] {
            let la = overall_loss(cls, tri, ldl, a, mode);
            let lb = overall_loss(cls, tri, ldl, b, mode);
            prop_assert!(((lb.total - la.total) - (b - a) * ldl).abs() <= 1e-12);
            prop_assert!((la.total - (la.cls + la.tri + a * la.ldl)).abs() <= 1e-12);
        }
    }

    #[test]
    fn cmc_is_monotone(
        q in proptest::collection::vec(-1.0f64..1.0, 2..40), g in proptest::collection::vec(-1.0f64..1.0, 24..80),
        id_seed in any::<u64>()
    ) {
        let classes = 3usize;
        let qn = q.len() / 2;
        let gn = g.len() / 2;
        let qf = Array2::from_shape_vec((qn, 2), q[..qn * 2].to_vec()).unwrap();
        let gf = Array2::from_shape_vec((gn, 2), g[..gn * 2].to_vec()).unwrap();
        let qi: Vec<usize> = (0..qn).map(|k| ((id_seed >> (k % 60)) as usize + k) % classes).collect();
        let gi: Vec<usize> = (0..gn).map(|k| k % classes).collect();
        let (qv, gv) = (vec![0; qn], vec![1; gn]);
        let s = retrieval_eval(
            LabelledFeatures { features: qf.view(), ids: &qi, views: &qv },
            LabelledFeatures { features: gf.view(), ids: &gi, views: &gv },
            Metric::Euclidean,
        ).unwrap();
        prop_assert!(s.cmc.rank1 <= s.cmc.rank5 && s.cmc.rank5 <= s.cmc.rank10);
        prop_assert!((0.0..=1.0).contains(&s.map));
    }

    #[test]
    fn domain_gap_is_rigid_invariant(
        values in proptest::collection::vec(-3.0f64..3.0, 36 * 3), angle in 0.0f64..std::f64::consts::TAU,
        shift in proptest::collection::vec(-10.0f64..10.0, 3)
    ) {
        // 36 points: 3 domains x 3 classes x 4 samples in 3-D.
        let x = Array2::from_shape_vec((36, 3), values).unwrap();
        let domains: Vec<usize> = (0..36).map(|i| i / 12).collect();
        let classes: Vec<usize> = (0..36).map(|i| i / 4).collect();
        let (s, c) = angle.sin_cos();
        // Rotation about z followed by a rotation about x.
        let rz = ndarray::array![[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let rx = ndarray::array![[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]];
        let r = rz.dot(&rx);
        let moved = x.dot(&r.t()) + &ndarray::Array1::from(shift);
        let before = domain_gap(x.view(), &domains, &classes).unwrap();
        let after = domain_gap(moved.view(), &domains, &classes).unwrap();
        prop_assert!((before.between - after.between).abs() <= 1e-9);
        prop_assert!((before.within - after.within).abs() <= 1e-9);
        prop_assert!((before.ratio - after.ratio).abs() <= 1e-9);
    }
}
