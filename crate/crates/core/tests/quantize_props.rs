mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::*;
use proptest::prelude::*;

use fdivkit_core::divergences::build_order_instance;
use fdivkit_core::equivalence::{affine_equivalence_u, counterexample_search, ranking_compare};
use fdivkit_core::losses::make_loss;
use fdivkit_core::quantize::{
    consistency_experiment, enumerate_quantizers, erm_fit, optimal_quantizers, sample,
    ConsistencyConfig, QuantizerFamily,
};
use fdivkit_core::{CostMatrix, DiscreteExperiment, LossFamily, OrderMode, UncertaintyFn};

fn assignments(qs: &[fdivkit_core::Quantizer]) -> BTreeSet<Vec<usize>> {
    qs.iter().map(|q| q.canonical().assignment().to_vec()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // U₂ = s·U₁ + bᵀπ + c is recognized with slope 1/s.
    #[test]
    fn affine_transforms_are_recognized(
        k in 2usize..=4,
        s in 0.2f64..5.0,
        b in prop::collection::vec(-1.0f64..1.0, 4),
        c in -1.0f64..1.0,
        entropy in any::<bool>(),
    ) {
        let base = if entropy { UncertaintyFn::entropy(k) } else { UncertaintyFn::zero_one(k) };
        let inner = base.clone();
        let b2 = b.clone();
        let u2 = UncertaintyFn::custom("shifted", k, Arc::new(move |p: &[f64]| {
            s * inner.eval(p) + p.iter().zip(&b2).map(|(x, y)| x * y).sum::<f64>() + c
        }));
        let fit = affine_equivalence_u(&base, &u2, 6).unwrap();
        prop_assert!(fit.equivalent, "{:?}", fit.reason);
        prop_assert!((fit.a - 1.0 / s).abs() < 1e-8, "{} vs {}", fit.a, 1.0 / s);
    }

    // Weighted hinge and its weighted zero-one target pick the same best quantizers.
    #[test]
    fn hinge_and_weighted_zero_one_agree_on_best_quantizers(
        e in experiment(3, 5),
        c in cost(3),
        max_codes in 1usize..=3,
    ) {
        let hinge = make_loss("hinge", 3, Some(c.clone())).unwrap();
        let wzo = LossFamily::weighted_zero_one(c);
        let a = optimal_quantizers(&e, &hinge, max_codes).unwrap();
        let b = optimal_quantizers(&e, &wzo, max_codes).unwrap();
        prop_assert_eq!(assignments(&a), assignments(&b));
    }

    #[test]
    fn equivalent_losses_never_disagree(
        (k, exps) in (2usize..=4).prop_flat_map(|k| (Just(k), prop::collection::vec(experiment(k, 4), 3)))
    ) {
        let qs: Vec<_> = enumerate_quantizers(4, 4).unwrap().collect();
        let zo = make_loss("zero-one", k, None).unwrap();
        let hinge = make_loss("hinge", k, None).unwrap();
        let fw = make_loss("family-wise", k, None).unwrap();
        prop_assert!(ranking_compare(&exps, &qs, &zo, &hinge).unwrap().agreement);
        prop_assert!(ranking_compare(&exps, &qs, &zo, &fw).unwrap().agreement);
    }
}

// The agreement property over 200 fixed-seed experiments of mixed size.
#[test]
fn hinge_and_weighted_zero_one_argmin_sets_on_200_experiments() {
    use fdivkit_core::rng;
    use rand::Rng;
    let mut r = rng::stream(21, 0);
    for t in 0..200 {
        let k = r.random_range(2..=4);
        let m = r.random_range(2..=6);
        let prior = rng::simplex(&mut r, k);
        let conds = (0..k).map(|_| rng::sparse_simplex(&mut r, m, 0.2)).collect();
        let e = DiscreteExperiment::new(prior, conds).unwrap();
        let c = CostMatrix::new(
            (0..k).map(|y| (0..k).map(|i| if i == y { 0.0 } else { 0.2 + r.random::<f64>() }).collect()).collect(),
        )
        .unwrap();
        let max_codes = r.random_range(1..=m);
        let a = optimal_quantizers(&e, &make_loss("hinge", k, Some(c.clone())).unwrap(), max_codes).unwrap();
        let b = optimal_quantizers(&e, &LossFamily::weighted_zero_one(c), max_codes).unwrap();
        assert_eq!(assignments(&a), assignments(&b), "experiment {t}");
    }
}

fn three_class_experiment() -> DiscreteExperiment {
    DiscreteExperiment::with_uniform_prior(vec![
        vec![0.4, 0.3, 0.1, 0.1, 0.05, 0.05],
        vec![0.05, 0.1, 0.4, 0.3, 0.1, 0.05],
        vec![0.05, 0.05, 0.1, 0.1, 0.3, 0.4],
    ])
    .unwrap()
}

#[test]
fn erm_is_deterministic_for_a_seed() {
    let e = three_class_experiment();
    let hinge = make_loss("hinge", 3, None).unwrap();
    let family = QuantizerFamily::AllPartitions { max_codes: 2 };
    let a = erm_fit(&sample(&e, 500, 9, 3), &hinge, &family).unwrap();
    let b = erm_fit(&sample(&e, 500, 9, 3), &hinge, &family).unwrap();
    assert_eq!(a.quantizer, b.quantizer);
    assert_eq!(a.table.alphas, b.table.alphas);
    assert_eq!(a.empirical_risk.to_bits(), b.empirical_risk.to_bits());
    let c = erm_fit(&sample(&e, 500, 9, 4), &hinge, &family).unwrap();
    assert_ne!(a.empirical_risk.to_bits(), c.empirical_risk.to_bits());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let zo = make_loss("zero-one", 3, None).unwrap();
            let lg = make_loss("logistic", 3, None).unwrap();
            let search = counterexample_search(&zo, &lg, 3, 4, 5000, 3).unwrap();
            let cfg = ConsistencyConfig {
                schedule: vec![50, 200],
                reps: 8,
                seed: 5,
                family: QuantizerFamily::AllPartitions { max_codes: 2 },
                cost: CostMatrix::zero_one(3),
                force: false,
            };
            let hinge = make_loss("hinge", 3, None).unwrap();
            let report = consistency_experiment(&three_class_experiment(), &hinge, &cfg).unwrap();
            (
                serde_json::to_string(&search).unwrap(),
                serde_json::to_string(&report).unwrap(),
            )
        })
    };
    assert_eq!(run(1), run(3));
}

// An engineered pair of quantizers that zero-one loss and logistic loss rank
// oppositely. ERM with logistic loss converges to the quantizer that is worse
// for the target, so the decision-risk gap stalls at the ranking difference.
#[test]
fn logistic_erm_plateaus_on_a_flipped_pair() {
    let a = vec![vec![0.5, 0.5], vec![0.5, 0.0], vec![0.0, 0.5]];
    let b = vec![vec![0.7, 0.3], vec![0.15, 0.35], vec![0.15, 0.35]];
    let inst = build_order_instance(&a, &b, OrderMode::Uncertainty).unwrap();
    assert_eq!(inst.scale, 4);
    let zo = make_loss("zero-one", 3, None).unwrap();
    let logistic = make_loss("logistic", 3, None).unwrap();
    let family = QuantizerFamily::Explicit { quantizers: vec![inst.q1.clone(), inst.q2.clone()] };

    // Population optimum for each loss over the two projections.
    let best = |l: &LossFamily| {
        let risks: Vec<f64> = [&inst.q1, &inst.q2]
            .iter()
            .map(|q| fdivkit_core::quantize::quantized_bayes_risk(&inst.experiment, l, q).unwrap())
            .collect();
        risks
    };
    let zr = best(&zo);
    let lr = best(&logistic);
    assert!(zr[1] < zr[0] && lr[0] < lr[1]);
    let plateau = zr[0] - zr[1];
    assert!((plateau - 0.0125).abs() < 1e-12, "{plateau}");

    let cfg = ConsistencyConfig {
        schedule: vec![1000, 100_000],
        reps: 20,
        seed: 0,
        family,
        cost: CostMatrix::zero_one(3),
        force: false,
    };
    assert!(consistency_experiment(&inst.experiment, &logistic, &cfg).is_err());
    let cfg = ConsistencyConfig { force: true, ..cfg };
    let report = consistency_experiment(&inst.experiment, &logistic, &cfg).unwrap();
    assert!(report.precondition.forced && !report.precondition.equivalent);
    let last = report.rows.last().unwrap();
    assert!((last.mean_gap - plateau).abs() < 2e-3, "{}", last.mean_gap);

    // The same family under hinge loss has no plateau.
    let hinge = make_loss("hinge", 3, None).unwrap();
    let cfg = ConsistencyConfig { force: false, ..cfg };
    let report = consistency_experiment(&inst.experiment, &hinge, &cfg).unwrap();
    assert!(report.rows.last().unwrap().mean_gap < 1e-3);
}
