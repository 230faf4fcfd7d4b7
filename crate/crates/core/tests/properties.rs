use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlnd::aae::AAEModel;
use rlnd::datasets::{gen_synthetic, SyntheticManifoldSpec};
use rlnd::evalcli::{auroc, compute_metrics};
use rlnd::likelihood::{select_gamma, GGaussian1D, NormDensity};
use rlnd::numcore::{Tape, Tensor};
use rlnd::robust::{attack, loss_robust, loss_robust_additive, solve_boundary, BoundaryStatus};

fn labelled(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((-20i32..20, any::<bool>()), 2..max)
        .prop_map(|v| {
            let scores = v.iter().map(|(s, _)| f64::from(*s) * 0.5).collect();
            let labels = v.iter().map(|(_, l)| *l).collect();
            (scores, labels)
        })
        .prop_filter("two classes", |(_, l): &(Vec<f64>, Vec<bool>)| l.iter().any(|&b| b) && l.iter().any(|&b| !b))
}

fn pair_count(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn f1_at(scores: &[f64], labels: &[bool], t: f64) -> f64 {
    compute_metrics(scores, labels, t).unwrap().f1
}

proptest! {
    #[test]
    fn auroc_is_the_pair_count((scores, labels) in labelled(1000)) {
        let a = auroc(&scores, &labels).unwrap();
        prop_assert!((a - pair_count(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auroc_ignores_monotone_transforms((scores, labels) in labelled(200)) {
        let t: Vec<f64> = scores.iter().map(|s| (0.3 * s).exp() * 7.0 - 2.0).collect();
        prop_assert!((auroc(&scores, &labels).unwrap() - auroc(&t, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_consistent((scores, labels) in labelled(200), t in -10.0f64..10.0) {
        let m = compute_metrics(&scores, &labels, t).unwrap();
        for v in [m.precision, m.recall, m.f1, m.auroc] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let expect = if m.precision + m.recall > 0.0 { 2.0 * m.precision * m.recall / (m.precision + m.recall) } else { 0.0 };
        prop_assert!((m.f1 - expect).abs() < 1e-12);
    }

    #[test]
    fn threshold_is_f1_optimal((scores, labels) in labelled(200)) {
        let g = select_gamma(&scores, &labels).unwrap();
        let best = scores.iter().map(|&t| f1_at(&scores, &labels, t)).fold(0.0, f64::max);
        prop_assert!((f1_at(&scores, &labels, g) - best).abs() < 1e-12);
    }

    #[test]
    fn robust_prior_is_translation_invariant(
        si in prop::collection::vec(-800.0f64..100.0, 1..20),
        so in prop::collection::vec(-800.0f64..100.0, 1..20),
        c in -500.0f64..500.0,
    ) {
        let tape = Tape::new();
        let v = |s: &[f64], c: f64| tape.constant(Tensor::col_vector(&s.iter().map(|x| x + c).collect::<Vec<_>>()));
        let a = loss_robust(v(&si, 0.0), v(&so, 0.0)).unwrap().item();
        let b = loss_robust(v(&si, c), v(&so, c)).unwrap().item();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        let a = loss_robust_additive(v(&si, 0.0), v(&so, 0.0)).unwrap().item();
        let b = loss_robust_additive(v(&si, c), v(&so, c)).unwrap().item();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn boundary_of_linear_score(slope in 0.1f64..10.0, root in 0.01f64..5.0) {
        let b = solve_boundary(|r| slope * (root - r), 0.0, 10.0);
        prop_assert_eq!(b.status, BoundaryStatus::Root);
        prop_assert!(b.nu0 <= root && root - b.nu0 < 1e-5);
    }

    #[test]
    fn ggd_density_is_positive_and_symmetric(
        mu in -3.0f64..3.0, alpha in 0.1f64..5.0, beta in 0.3f64..10.0, d in 0.0f64..10.0,
    ) {
        let g = GGaussian1D::new(mu, alpha, beta).unwrap();
        let (a, b) = (g.log_pdf(mu + d), g.log_pdf(mu - d));
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        prop_assert!(g.log_pdf(mu + d) <= g.log_pdf(mu));
    }

    #[test]
    fn norm_density_is_floored(r in prop::collection::vec(0.0f64..4.0, 100..300), q in -1.0f64..20.0) {
        let d = NormDensity::fit(&r).unwrap();
        prop_assert!(d.density(q) >= d.floor);
        prop_assert!(d.log_density(q).0.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn zero_radius_attack_is_identity(seed in 0u64..1000) {
        let data = gen_synthetic(&SyntheticManifoldSpec::linear(2, 6, 0.1), 40, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = AAEModel::from_linear_basis(&data.basis, &[4], &mut rng).unwrap();
        let labels: Vec<bool> = (0..40).map(|i| i % 3 != 0).collect();
        let out = attack(&model, &data.x, &labels, 0.0, &mut rng).unwrap();
        prop_assert_eq!(out, data.x);
    }

    #[test]
    fn attack_moves_by_epsilon(seed in 0u64..1000, eps in 0.01f64..3.0) {
        let data = gen_synthetic(&SyntheticManifoldSpec::linear(2, 6, 0.1), 20, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = AAEModel::from_linear_basis(&data.basis, &[4], &mut rng).unwrap();
        let labels: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let out = attack(&model, &data.x, &labels, eps, &mut rng).unwrap();
        for i in 0..20 {
            let d: f64 = out.row(i).iter().zip(data.x.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prop_assert!((d - eps).abs() < 1e-9);
        }
    }
}
