use l2d_core::base::{BinaryPhi, ConstrainedInner, MulticlassFamily, SumInner};
use l2d_core::model::{check_simplex, eval_cost, predict_label, CostModel, ExpertOutputs, RegressionLoss, RejectorConvention, Truth};
use l2d_core::oracle::*;
use l2d_core::surrogate::*;
use l2d_core::synth::{gen_discrete, gen_discrete_regression, rng_for, DiscreteConfig};
use l2d_core::target::*;
use proptest::prelude::*;
use rand::Rng;

fn scores(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0..4.0f64, len)
}

fn simplex<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| -rng.random_range(1e-9..1.0f64).ln()).collect();
    if rng.random_bool(0.2) {
        p[rng.random_range(0..n)] = 0.0;
    }
    let s: f64 = p.iter().sum();
    p.iter().map(|v| v / s).collect()
}

fn all_families() -> Vec<MulticlassFamily> {
    let mut v = vec![
        MulticlassFamily::CompSum { mu: 0.0 },
        MulticlassFamily::CompSum { mu: 0.5 },
        MulticlassFamily::CompSum { mu: 1.0 },
        MulticlassFamily::CompSum { mu: 1.5 },
        MulticlassFamily::CompSum { mu: 2.0 },
        MulticlassFamily::CompSum { mu: 3.0 },
        MulticlassFamily::Gce { alpha: 0.7 },
        MulticlassFamily::Log2,
        MulticlassFamily::SumLoss { inner: SumInner::Sq },
        MulticlassFamily::SumLoss { inner: SumInner::Exp },
        MulticlassFamily::SumLoss { inner: SumInner::Rho { rho: 1.0 } },
        MulticlassFamily::Constrained { inner: ConstrainedInner::Hinge },
        MulticlassFamily::Constrained { inner: ConstrainedInner::RhoHinge { rho: 1.0 } },
        MulticlassFamily::Constrained { inner: ConstrainedInner::Sq },
        MulticlassFamily::Constrained { inner: ConstrainedInner::Exp },
        MulticlassFamily::Constrained { inner: ConstrainedInner::Rho { rho: 1.0 } },
        MulticlassFamily::Margin { rho: 1.0 },
    ];
    v.extend(BinaryPhi::ALL_DEFAULT.iter().map(|&phi| MulticlassFamily::Binary { phi }));
    v
}

// ---- core model ----

proptest! {
    #[test]
    fn predict_label_is_permutation_equivariant(s in scores(5), seed in 0u64..1000) {
        let mut rng = rng_for(seed, 0);
        let mut perm: Vec<usize> = (0..5).collect();
        for i in (1..5).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
        let k = predict_label(&permuted).unwrap();
        let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(s[perm[k]], top);
        let first = predict_label(&s).unwrap();
        prop_assert!(s.iter().position(|&v| v == top) == Some(first));
    }

    #[test]
    fn eval_cost_stays_inside_declared_bounds(alpha in prop::collection::vec(0.0..0.6f64, 3), beta in prop::collection::vec(0.0..0.4f64, 3),
                                              y in 0usize..4, g in prop::collection::vec(0usize..4, 3)) {
        let model = CostModel::expert_misclassification(alpha, beta).unwrap();
        let c = eval_cost(&model, ExpertOutputs::Classes(&g), Truth::Class(y)).unwrap();
        for (v, (lo, hi)) in c.iter().zip(&model.bounds) {
            prop_assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn regression_costs_stay_inside_declared_bounds(g in prop::collection::vec(-1.0..1.0f64, 2), y in -1.0..1.0f64) {
        let model = CostModel::regression_expert(RegressionLoss::Squared, vec![0.1, 0.0], 4.0).unwrap();
        let c = eval_cost(&model, ExpertOutputs::Values(&g), Truth::Value(y)).unwrap();
        for (v, (lo, hi)) in c.iter().zip(&model.bounds) {
            prop_assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn simplex_check_rejects_perturbed_rows(seed in 0u64..500, k in 0usize..4, eps in 1e-9..0.5f64, neg in any::<bool>()) {
        let mut p = simplex(&mut rng_for(seed, 0), 4);
        prop_assert!(check_simplex(&p, "p").is_ok());
        if neg {
            p[k] = -eps;
        } else {
            p[k] += eps;
        }
        prop_assert!(check_simplex(&p, "p").is_err());
    }
}

// ---- target losses ----

#[test]
fn rewrite_matches_deferral_loss_on_random_inputs() {
    let mut rng = rng_for(20, 0);
    for _ in 0..1000 {
        let n_e = rng.random_range(1..=4);
        let l = rng.random_range(0.0..3.0);
        let costs: Vec<f64> = (0..n_e).map(|_| rng.random_range(0.0..2.0)).collect();
        let d = rng.random_range(0..=n_e);
        let direct = defer_loss_indexed(l, d, &costs).unwrap();
        let rewritten = deferral_loss_rewrite(l, &costs, d).unwrap();
        assert!((direct - rewritten).abs() <= 1e-12, "{direct} vs {rewritten}");
    }
}

proptest! {
    #[test]
    fn single_constant_expert_is_abstention(s in scores(4), y in 0usize..3, c in 0.01..0.99f64) {
        // Continuous scores never tie, so the two tie rules cannot disagree.
        let a = abstention_loss_score(&s, y, c).unwrap();
        let d = defer_loss_score(&s, y, &[c]).unwrap();
        prop_assert_eq!(a, d);
    }

    #[test]
    fn target_losses_are_bounded(s in scores(5), y in 0usize..3, costs in prop::collection::vec(0.0..1.5f64, 2), c in 0.01..0.99f64, r in -2.0..2.0f64) {
        let cap = costs.iter().copied().fold(1.0, f64::max);
        let vals = [
            defer_loss_score(&s, y, &costs).unwrap(),
            abstention_loss_score(&s[..4], y, c).unwrap(),
            abstention_loss_pr(&s[..3], r, y, c).unwrap(),
        ];
        for v in vals {
            prop_assert!((0.0..=cap).contains(&v));
        }
    }
}

#[test]
fn abstention_and_deferral_tie_rules_differ_only_on_ties() {
    let s = [1.0, 0.0, 1.0];
    assert_eq!(abstention_loss_score(&s, 0, 0.3).unwrap(), 0.3);
    assert_eq!(defer_loss_score(&s, 0, &[0.3]).unwrap(), 0.0);
}

// ---- base losses ----

#[test]
fn family_gradients_match_finite_differences() {
    let mut rng = rng_for(30, 0);
    for f in all_families() {
        let mut done = 0;
        while done < 200 {
            let k = if matches!(f, MulticlassFamily::Binary { .. }) { 2 } else { rng.random_range(2..=5) };
            let h: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = rng.random_range(0..k);
            if f.kink_distance(&h, y) < 1e-4 {
                continue;
            }
            let mut g = vec![0.0; k];
            f.value_grad(&h, y, Some(&mut g));
            let mut x = h.clone();
            for i in 0..k {
                x[i] = h[i] + 1e-5;
                let up = f.value(&x, y);
                x[i] = h[i] - 1e-5;
                let dn = f.value(&x, y);
                x[i] = h[i];
                let fd = (up - dn) / 2e-5;
                assert!((g[i] - fd).abs() / g[i].abs().max(1.0) < 1e-5, "{f:?} at {h:?}: {} vs {fd}", g[i]);
            }
            done += 1;
        }
    }
}

proptest! {
    #[test]
    fn ell_mu_is_continuous_at_one(s in scores(4), y in 0usize..4) {
        let at = MulticlassFamily::CompSum { mu: 1.0 }.value(&s, y);
        for mu in [1.0 - 1e-6, 1.0 + 1e-6] {
            let v = MulticlassFamily::CompSum { mu }.value(&s, y);
            prop_assert!((v - at).abs() < 1e-4);
        }
    }

    #[test]
    fn ell_mu_is_non_increasing_in_mu(s in scores(4), y in 0usize..4) {
        let mut prev = f64::INFINITY;
        for i in 0..=40 {
            let f = MulticlassFamily::CompSum { mu: i as f64 * 0.1 };
            let v = f.value(&s, y);
            prop_assert!(v <= prev + 1e-12);
            prev = v;
        }
    }
}

#[test]
fn upper_bounding_phis_dominate_the_indicator() {
    for phi in BinaryPhi::ALL_DEFAULT {
        let bounds = !matches!(phi, BinaryPhi::Logistic);
        let ok = (0..=2000).all(|i| {
            let u = -10.0 + i as f64 * 0.01;
            phi.value(u) >= if u <= 0.0 { 1.0 } else { 0.0 }
        });
        assert_eq!(ok, bounds, "{phi:?}");
    }
}

// ---- surrogates ----

#[test]
fn every_surrogate_gradient_matches_finite_differences() {
    for spec in default_surrogate_suite() {
        let mut rng = rng_for(40, 0);
        for _ in 0..100 {
            let case = random_fd_case(&spec, &mut rng, 1e-4);
            let err = fd_check(&case.spec, case.n, &case.sample.view(), &case.point, 1e-5).unwrap();
            assert!(err < 1e-5, "{spec:?}: {err}");
        }
    }
}

proptest! {
    #[test]
    fn reduction_identities(h in scores(4), c in 0.01..0.99f64, y in 0usize..3, l in 0.0..3.0f64,
                            r in scores(4), costs in prop::collection::vec(0.0..1.0f64, 3), mu in 0.0..3.0f64) {
        let f = MulticlassFamily::CompSum { mu };
        let a = defer_single(&h, y, &[c], &f, None).unwrap();
        let b = abstain_l_mu(&h, y, c, mu, None).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));

        let fam = MulticlassFamily::LOG;
        let (single, _) = reg_single(l, &r, &costs, &fam, None).unwrap();
        let two = reg_two_stage(l, &r, &costs, &fam, None).unwrap();
        prop_assert!((single - two + 2.0 * l).abs() <= 1e-12 * two.abs().max(1.0));

        for phi in BinaryPhi::ALL_DEFAULT {
            let bin = MulticlassFamily::Binary { phi };
            let r2 = [r[0], r[1]];
            let (expected, _, _) = reg_single_expert(l, r2[0] - r2[1], costs[0], phi).unwrap();
            let (one, _) = reg_single(l, &r2, &costs[..1], &bin, None).unwrap();
            let two = reg_two_stage(l, &r2, &costs[..1], &bin, None).unwrap();
            prop_assert!((one - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{:?}", phi);
            prop_assert!((two - expected).abs() <= 1e-12 * expected.abs().max(1.0), "{:?}", phi);
        }
    }
}

const BOUNDING_FAMILIES: [MulticlassFamily; 3] = [MulticlassFamily::EXP, MulticlassFamily::Log2, MulticlassFamily::SumLoss { inner: SumInner::Exp }];
const BOUNDING_PHIS: [BinaryPhi; 6] = [
    BinaryPhi::Exp,
    BinaryPhi::Logistic2,
    BinaryPhi::Quadratic,
    BinaryPhi::Hinge,
    BinaryPhi::Sigmoid { k: 1.0 },
    BinaryPhi::RhoMargin { rho: 1.0 },
];

#[test]
fn bounding_surrogates_dominate_their_targets() {
    let mut rng = rng_for(50, 0);
    let mut checked = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=4);
        let n_e = rng.random_range(1..=3);
        let h: Vec<f64> = (0..n + n_e).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y = rng.random_range(0..n);
        let c = rng.random_range(0.01..0.99);
        let costs: Vec<f64> = (0..n_e).map(|_| rng.random_range(0.0..1.0)).collect();
        let cbar: Vec<f64> = costs.iter().map(|v| 1.0 - v).collect();
        let r = rng.random_range(-3.0..3.0);
        let l = rng.random_range(0.0..1.0);

        let abstain = abstention_loss_score(&h[..=n], y, c).unwrap();
        assert!(abstain_l_mu(&h[..=n], y, c, 0.0, None).unwrap() >= abstain);
        let defer = defer_loss_score(&h, y, &costs).unwrap();
        let pr = abstention_loss_pr(&h[..n], r, y, c).unwrap();
        let wrong = l2d_core::math::argmax(&h[..n]) != y;
        let hmax = l2d_core::math::max(&h[..n]);
        let rd = &h[n..];
        for f in BOUNDING_FAMILIES {
            assert!(defer_single(&h, y, &costs, &f, None).unwrap() >= defer);
            let (v, _) = pr_single(&h[..n], r, y, c, &f, Psi::Identity, BinaryPhi::Exp, 1.0, 1.0, None).unwrap();
            assert!(v >= pr);
            // Two-stage forms bound the target shifted by Σ(1 − c_j) − 1{wrong}.
            let shift = cbar.iter().sum::<f64>() - f64::from(u8::from(wrong));
            let mut full = vec![hmax];
            full.extend_from_slice(rd);
            let d = l2d_core::math::argmax(&full);
            let t = defer_loss_indexed(f64::from(u8::from(wrong)), d, &costs).unwrap();
            assert!(defer_two_stage_score(hmax, rd, !wrong, &cbar, &f, None).unwrap() >= t + shift - 1e-12);
            let d = l2d_core::model::rejector_decision(rd, RejectorConvention::ArgminDefer, n_e).unwrap();
            let t = defer_loss_indexed(f64::from(u8::from(wrong)), d, &costs).unwrap();
            assert!(defer_two_stage_pr(rd, !wrong, &cbar, &f, None).unwrap() >= t + shift - 1e-12);

            let rr = &h[..=n_e];
            let t = defer_loss_indexed(l, l2d_core::math::argmax(rr), &costs).unwrap();
            assert!(reg_single(l, rr, &costs, &f, None).unwrap().0 >= t - 1e-12);
            let two = reg_two_stage(l, rr, &costs, &f, None).unwrap();
            assert!(two - (n_e as f64 - 1.0) * l >= t - 1e-12);
        }
        for phi in BOUNDING_PHIS {
            let hx = rng.random_range(-3.0..3.0);
            let (v, _) = abstain_two_stage(&h[..n], hx, y, c, phi).unwrap();
            let t = if hx >= hmax { c } else { f64::from(u8::from(wrong)) };
            assert!(v >= t);
            assert!(pr_two_stage(wrong, r, c, phi).unwrap().0 >= pr);
            let t = if r <= 0.0 { costs[0] } else { l };
            assert!(reg_single_expert(l, r, costs[0], phi).unwrap().0 >= t);
        }
        checked += 1;
    }
    assert_eq!(checked, 1000);
}

// ---- oracle ----

#[test]
fn bayes_rules_attain_the_minimum_over_actions() {
    let mut rng = rng_for(60, 0);
    for _ in 0..100 {
        let n = rng.random_range(2..=5);
        let p = simplex(&mut rng, n);
        let c = rng.random_range(0.01..0.99);
        let (_, risk) = bayes_abstention(&p, c).unwrap();
        let mut best = c;
        for k in 0..n {
            best = best.min(conditional_risk(&p, |y| Ok(f64::from(u8::from(y != k)))).unwrap());
        }
        assert_eq!(risk, best);

        let n_e = rng.random_range(1..=3);
        let ec: Vec<f64> = (0..n_e).map(|_| rng.random_range(0.0..1.0)).collect();
        let (_, risk) = bayes_deferral(&p, &ec).unwrap();
        let mut best = ec.iter().copied().fold(f64::INFINITY, f64::min);
        for k in 0..n {
            best = best.min(conditional_risk(&p, |y| Ok(f64::from(u8::from(y != k)))).unwrap());
        }
        assert_eq!(risk, best);
    }
}

#[test]
fn min_gap_matches_numerical_minimization() {
    for mu in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
        for c in [0.1, 0.5, 0.9] {
            // Two free logits (label score, abstain score) against a third
            // label; the infimum is approached with the third score at −∞.
            let obj = |s: &[f64], g: &mut [f64]| {
                let h = [s[0], -40.0, s[1]];
                let mut full = [0.0; 3];
                let fam = MulticlassFamily::CompSum { mu };
                let a = fam.value_grad(&h, 0, Some(&mut full));
                let mut g2 = [0.0; 3];
                let b = fam.value_grad(&h, 2, Some(&mut g2));
                g[0] = full[0] + (1.0 - c) * g2[0];
                g[1] = full[2] + (1.0 - c) * g2[2];
                a + (1.0 - c) * b
            };
            let closed = min_gap_closed_form(mu, c).unwrap();
            let mut best = f64::INFINITY;
            // μ > 2 is concave: the infimum sits at a vertex, reached by a
            // large score gap.
            for start in [[0.0, 0.0], [30.0, 0.0], [0.0, 30.0], [2.0, -1.0]] {
                let (_, v) = refine(&obj, &start, 4000);
                best = best.min(v);
            }
            assert!((best - closed).abs() < 1e-6, "mu {mu} c {c}: {best} vs {closed}");
        }
    }
}

#[test]
fn endorsed_bounds_hold_on_seeded_distributions() {
    for kind in endorsed_kinds() {
        for seed in 0..5 {
            let cfg = DiscreteConfig { points: 2, classes: 3, experts: 2, cost_range: (0.0, 0.9), one_hot: false, seed };
            let inst = match kind {
                BoundKind::RegressionSingle { loss, .. } => gen_discrete_regression(&cfg, loss).unwrap(),
                _ => gen_discrete(&cfg).unwrap(),
            };
            let report = verify_bound(&kind, &inst, &VerifyConfig { seed, hypotheses: 40, ..Default::default() }).unwrap();
            assert!(report.min_margin >= -1e-9, "{}: {}", kind.tag(), report.min_margin);
        }
    }
}

proptest! {
    #[test]
    fn gamma_is_non_decreasing(mu in 0.0..3.0f64, c in 0.05..0.95f64, beta in 0.5..3.0f64, alpha in 0.2..1.0f64) {
        let forms = [
            GammaForm::CompSumMu { mu, c, n: 3 },
            GammaForm::CompSumBase { mu, labels: 4 },
            GammaForm::Generic { beta, alpha, scale: 2.0 },
            GammaForm::GenericMax { beta, alpha, scale: 2.0 },
            GammaForm::Linear { slope: beta },
            GammaForm::Rescaled { outer: 2.5, inner: 1.5, base: Box::new(GammaForm::CompSumBase { mu, labels: 3 }) },
        ];
        for form in &forms {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=200 {
                let v = gamma_eval(form, i as f64 * 0.02).unwrap();
                prop_assert!(v >= prev - 1e-12, "{:?} at {}", form, i);
                prev = v;
            }
        }
    }
}
