//! A fast invariant suite over the whole library, used by `fdivkit selftest`.

use rand::Rng;
use serde::Serialize;

use crate::calibration::{calibration_check, gap_inequality_check, GapMode};
use crate::divergences::{
    build_order_instance, f_divergence, f_divergence_quantized, kernel_pushforward, make_generator, transport_matrix,
    MarkovKernel, OrderMode, BUILTIN_GENERATORS,
};
use crate::equivalence::{affine_equivalence_u, counterexample_search};
use crate::experiment::{simplex_grid, CostMatrix, DiscreteExperiment};
use crate::losses::{familywise_conjugate, make_loss, pointwise_bayes};
use crate::quantize::{enumerate_quantizers, quantized_bayes_risk, Quantizer};
use crate::rng;
use crate::uncertainty::{make_uncertainty, statistical_information, UncertaintyFn};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, failures: usize, trials: usize) -> CheckOutcome {
    CheckOutcome { name: name.into(), passed: failures == 0, detail: format!("{failures} failures in {trials} trials") }
}

fn random_experiment<R: Rng>(r: &mut R, k: usize, m: usize) -> DiscreteExperiment {
    let prior = rng::simplex(r, k);
    let conds = (0..k).map(|_| rng::sparse_simplex(r, m, 0.2)).collect();
    DiscreteExperiment::new(prior, conds).expect("random experiment is valid")
}

fn random_quantizer<R: Rng>(r: &mut R, m: usize) -> Quantizer {
    let codes = r.random_range(1..=m);
    Quantizer::from_assignment((0..m).map(|_| r.random_range(0..codes)).collect()).expect("codes in range")
}

/// Run every check with the given seed.
pub fn run_selftest(seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let mut r = rng::stream(seed, 0);

    // Divergences: nonnegativity, DPI, refinement.
    let (mut neg, mut dpi, mut refine) = (0, 0, 0);
    let trials = 200;
    for _ in 0..trials {
        let k = r.random_range(2..=4);
        let m = r.random_range(1..=6);
        let e = random_experiment(&mut r, k, m);
        let kern = MarkovKernel::new((0..m).map(|_| rng::simplex(&mut r, 3)).collect()).expect("stochastic rows");
        let pushed = kernel_pushforward(e.conditionals(), &kern).expect("dimensions match");
        let fine = random_quantizer(&mut r, m);
        let coarse_map: Vec<usize> = (0..fine.codes()).map(|_| r.random_range(0..2)).collect();
        let coarse = Quantizer::from_assignment(fine.assignment().iter().map(|&z| coarse_map[z]).collect()).unwrap();
        for name in BUILTIN_GENERATORS {
            let g = make_generator(name, k).expect("builtin");
            let d = f_divergence(e.conditionals(), &g).expect("arity");
            if d < -1e-12 {
                neg += 1;
            }
            if f_divergence(&pushed, &g).expect("arity") > d + 1e-10 {
                dpi += 1;
            }
            let df = f_divergence_quantized(e.conditionals(), &g, &fine).expect("total");
            let dc = f_divergence_quantized(e.conditionals(), &g, &coarse).expect("total");
            if dc > df + 1e-10 {
                refine += 1;
            }
        }
    }
    out.push(outcome("divergence nonnegativity", neg, trials));
    out.push(outcome("data processing", dpi, trials));
    out.push(outcome("refinement monotonicity", refine, trials));

    // Transport.
    let mut bad = 0;
    for _ in 0..trials {
        let m = r.random_range(1..=8);
        let a: Vec<f64> = (0..m).map(|_| r.random::<f64>()).collect();
        let total: f64 = a.iter().sum();
        let b: Vec<f64> = rng::simplex(&mut r, m).into_iter().map(|v| v * total).collect();
        let z = transport_matrix(&a, &b).expect("equal sums");
        let ok = z.z.iter().flatten().all(|&v| v >= 0.0)
            && z.row_sums().iter().zip(&a).all(|(x, y)| (x - y).abs() <= 1e-12)
            && z.col_sums().iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12);
        if !ok {
            bad += 1;
        }
    }
    out.push(outcome("transport marginals", bad, trials));

    // Closed-form uncertainties against pointwise Bayes.
    let mut bad = 0;
    let mut count = 0;
    for k in 2..=4 {
        let zo = make_loss("zero-one", k, None).unwrap();
        let hinge = make_loss("hinge", k, None).unwrap();
        let logistic = make_loss("logistic", k, None).unwrap();
        let uzo = UncertaintyFn::zero_one(k);
        let uh = make_uncertainty("hinge-induced", k, None).unwrap();
        let ue = UncertaintyFn::entropy(k);
        for p in simplex_grid(k, 10).unwrap() {
            count += 1;
            if (pointwise_bayes(&zo, &p).value - uzo.eval(&p)).abs() > 1e-12
                || (pointwise_bayes(&hinge, &p).value - uh.eval(&p)).abs() > 1e-12
                || (pointwise_bayes(&logistic, &p).value - ue.eval(&p)).abs() > 1e-6
            {
                bad += 1;
            }
        }
    }
    out.push(outcome("closed-form uncertainty", bad, count));

    // Conjugate of the zero-one uncertainty against a grid.
    let mut bad = 0;
    for _ in 0..50 {
        let k = r.random_range(2..=3);
        let alpha: Vec<f64> = (0..k).map(|_| 4.0 * r.random::<f64>() - 2.0).collect();
        let grid_sup = simplex_grid(k, 100)
            .unwrap()
            .iter()
            .map(|p| p.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>() + 1.0 - p.iter().cloned().fold(0.0, f64::max))
            .fold(f64::NEG_INFINITY, f64::max);
        let range = alpha.iter().cloned().fold(f64::MIN, f64::max) - alpha.iter().cloned().fold(f64::MAX, f64::min);
        let v = familywise_conjugate(&alpha);
        if v < grid_sup - 1e-12 || v > grid_sup + (k as f64 * range / 2.0 + 1.0) / 100.0 {
            bad += 1;
        }
    }
    out.push(outcome("family-wise conjugate", bad, 50));

    // Information nonnegativity and the quantized-risk identity.
    let mut bad = 0;
    for _ in 0..trials {
        let k = r.random_range(2..=4);
        let m = r.random_range(1..=5);
        let e = random_experiment(&mut r, k, m);
        let q = random_quantizer(&mut r, m);
        for name in ["zero-one", "hinge", "logistic"] {
            let l = make_loss(name, k, None).unwrap();
            let u = UncertaintyFn::from_loss(l.clone());
            let full = statistical_information(&e, &u, None).unwrap().information;
            let quant = statistical_information(&e, &u, Some(&q)).unwrap().information;
            let via_risk = u.eval(e.prior()) - quantized_bayes_risk(&e, &l, &q).unwrap();
            if full < -1e-10 || quant > full + 1e-10 || (quant - via_risk).abs() > 1e-6 {
                bad += 1;
            }
        }
    }
    out.push(outcome("statistical information", bad, trials));

    // Gap inequalities.
    let mut bad = 0;
    for _ in 0..1000 {
        let k = [2, 3, 5][r.random_range(0..3)];
        let pi = rng::simplex(&mut r, k);
        let mut alpha: Vec<f64> = (0..k).map(|_| 4.0 * r.random::<f64>() - 2.0).collect();
        if !gap_inequality_check(GapMode::FamilyWise, &pi, &alpha, None).unwrap().holds {
            bad += 1;
        }
        let mean = alpha.iter().sum::<f64>() / k as f64;
        alpha.iter_mut().for_each(|a| *a -= mean);
        let c = random_cost(&mut r, k);
        if !gap_inequality_check(GapMode::Hinge, &pi, &alpha, Some(&c)).unwrap().holds {
            bad += 1;
        }
    }
    out.push(outcome("gap inequalities", bad, 1000));

    // Calibration of logistic and hinge.
    let mut bad = 0;
    for _ in 0..50 {
        let k = r.random_range(2..=4);
        let pi = rng::simplex(&mut r, k);
        let top = crate::experiment::argmax(&pi);
        let istar = (top + r.random_range(1..k)) % k;
        if pi[istar] >= pi[top] {
            continue;
        }
        for name in ["logistic", "hinge"] {
            let l = make_loss(name, k, None).unwrap();
            if !calibration_check(&l, &pi, istar, None).unwrap().verdict {
                bad += 1;
            }
        }
    }
    out.push(outcome("calibration", bad, 50));

    // Equivalence verdicts.
    let mut bad = 0;
    for k in 2..=6 {
        let f = affine_equivalence_u(&UncertaintyFn::zero_one(k), &make_uncertainty("hinge-induced", k, None).unwrap(), 4).unwrap();
        if !f.equivalent || (f.a - 1.0 / k as f64).abs() > 1e-10 {
            bad += 1;
        }
    }
    if affine_equivalence_u(&UncertaintyFn::zero_one(3), &UncertaintyFn::entropy(3), 8).unwrap().equivalent {
        bad += 1;
    }
    out.push(outcome("equivalence verdicts", bad, 6));

    // Order instances.
    let mut bad = 0;
    for _ in 0..50 {
        let k = r.random_range(2..=3);
        let m = r.random_range(1..=3);
        let a: Vec<Vec<f64>> = (0..k - 1).map(|_| (0..m).map(|_| 2.0 * r.random::<f64>()).collect()).collect();
        let b: Vec<Vec<f64>> = a
            .iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                rng::simplex(&mut r, m).into_iter().map(|v| v * s).collect()
            })
            .collect();
        if build_order_instance(&a, &b, OrderMode::Generator).is_err() {
            bad += 1;
        }
    }
    out.push(outcome("order instances", bad, 50));

    // No flips between equivalent losses.
    let zo = make_loss("zero-one", 3, None).unwrap();
    let hinge = make_loss("hinge", 3, None).unwrap();
    let found = counterexample_search(&zo, &hinge, 3, 4, 2000, seed).map(|o| o.witness.is_some()).unwrap_or(true);
    out.push(outcome("no flips between equivalent losses", usize::from(found), 2000));

    // Enumeration counts against Bell numbers.
    let bell = [1, 1, 2, 5, 15, 52, 203, 877];
    let bad = (1..=7).filter(|&m| enumerate_quantizers(m, m).unwrap().count() != bell[m]).count();
    out.push(outcome("partition enumeration", bad, 7));

    out
}

fn random_cost<R: Rng>(r: &mut R, k: usize) -> CostMatrix {
    CostMatrix::new((0..k).map(|y| (0..k).map(|i| if i == y { 0.0 } else { 2.0 * r.random::<f64>() }).collect()).collect())
        .expect("valid cost")
}
