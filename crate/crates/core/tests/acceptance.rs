//! The nine acceptance criteria, one PASS/FAIL line each. Exits nonzero if
//! any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use fdivkit_core::calibration::{gap_inequality_check, GapMode};
use fdivkit_core::divergences::{
    build_order_instance, f_divergence, f_divergence_quantized, kernel_pushforward, make_generator, transport_matrix,
    BUILTIN_GENERATORS,
};
use fdivkit_core::equivalence::{affine_equivalence_u, counterexample_search, ranking_compare};
use fdivkit_core::experiment::simplex_grid;
use fdivkit_core::losses::{familywise_conjugate, loss_from_generator, make_loss};
use fdivkit_core::quantize::{
    consistency_experiment, enumerate_quantizers, quantized_bayes_risk, ConsistencyConfig, QuantizerFamily,
};
use fdivkit_core::rng::{self, stream};
use fdivkit_core::uncertainty::{infimal_uncertainty, statistical_information};
use fdivkit_core::{CostMatrix, DiscreteExperiment, MarkovKernel, OrderMode, Quantizer, UncertaintyFn};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn shannon(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

fn random_cost<R: Rng>(r: &mut R, k: usize) -> CostMatrix {
    CostMatrix::new((0..k).map(|y| (0..k).map(|i| if i == y { 0.0 } else { 0.1 + 2.0 * r.random::<f64>() }).collect()).collect())
        .unwrap()
}

fn min_col(c: &[Vec<f64>], p: &[f64]) -> f64 {
    let k = p.len();
    (0..k).map(|l| (0..k).map(|y| p[y] * c[y][l]).sum::<f64>()).fold(f64::INFINITY, f64::min)
}

fn random_quantizer<R: Rng>(r: &mut R, m: usize) -> Quantizer {
    let codes = r.random_range(1..=m);
    Quantizer::from_assignment((0..m).map(|_| r.random_range(0..codes)).collect()).unwrap()
}

fn ac1() -> Verdict {
    let mut r = stream(1, 0);
    let mut worst_exact: f64 = 0.0;
    let mut worst_log: f64 = 0.0;
    let mut points = 0;
    for k in 2..=4 {
        let c = random_cost(&mut r, k);
        let zo = make_loss("zero-one", k, None).unwrap();
        let wzo = make_loss("weighted-zero-one", k, Some(c.clone())).unwrap();
        let hinge = make_loss("hinge", k, None).unwrap();
        let whinge = make_loss("hinge", k, Some(c.clone())).unwrap();
        let logistic = make_loss("logistic", k, None).unwrap();
        let zo_rows: Vec<Vec<f64>> = (0..k).map(|y| (0..k).map(|i| if i == y { 0.0 } else { 1.0 }).collect()).collect();
        for p in simplex_grid(k, 20).unwrap() {
            let p = p.as_slice();
            points += 1;
            let max = p.iter().cloned().fold(0.0, f64::max);
            let kf = k as f64;
            let exact = [
                (infimal_uncertainty(&zo, p).value, 1.0 - max),
                (infimal_uncertainty(&wzo, p).value, min_col(c.rows(), p)),
                (infimal_uncertainty(&hinge, p).value, kf * min_col(&zo_rows, p)),
                (infimal_uncertainty(&whinge, p).value, kf * min_col(c.rows(), p)),
            ];
            for (got, want) in exact {
                worst_exact = worst_exact.max((got - want).abs());
            }
            worst_log = worst_log.max((infimal_uncertainty(&logistic, p).value - shannon(p)).abs());
        }
    }
    verdict(
        worst_exact <= 1e-12 && worst_log <= 1e-6,
        format!("{points} grid points, combinatorial err {worst_exact:.2e}, logistic err {worst_log:.2e}"),
    )
}

// sup over the resolution-r grid of πᵀα + 1 − max π, for many α at once.
fn grid_sups(k: usize, r: usize, alphas: &[Vec<f64>]) -> Vec<f64> {
    let first: Vec<usize> = (0..=r).collect();
    first
        .par_iter()
        .map(|&c0| {
            let mut best = vec![f64::NEG_INFINITY; alphas.len()];
            let mut counts = vec![0usize; k];
            counts[0] = c0;
            visit(&mut counts, 1, r - c0, r, alphas, &mut best);
            best
        })
        .reduce(
            || vec![f64::NEG_INFINITY; alphas.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect(),
        )
}

fn visit(counts: &mut Vec<usize>, pos: usize, left: usize, r: usize, alphas: &[Vec<f64>], best: &mut [f64]) {
    let k = counts.len();
    if pos == k - 1 {
        counts[pos] = left;
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / r as f64).collect();
        let base = 1.0 - p.iter().cloned().fold(0.0, f64::max);
        for (b, a) in best.iter_mut().zip(alphas) {
            let v = base + p.iter().zip(a).map(|(x, y)| x * y).sum::<f64>();
            if v > *b {
                *b = v;
            }
        }
        return;
    }
    for c in 0..=left {
        counts[pos] = c;
        visit(counts, pos + 1, left - c, r, alphas, best);
    }
}

fn ac2() -> Verdict {
    let mut r = stream(2, 0);
    let res = 400;
    let mut bad = 0;
    let mut total = 0;
    let mut worst_excess: f64 = 0.0;
    for (k, n) in [(2, 334), (3, 333), (4, 333)] {
        let alphas: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| 4.0 * r.random::<f64>() - 2.0).collect()).collect();
        let sups = grid_sups(k, res, &alphas);
        for (a, s) in alphas.iter().zip(&sups) {
            total += 1;
            let v = familywise_conjugate(a);
            // The objective is Lipschitz with constant (range(α) + 1) in ℓ¹
            // and every simplex point lies within ℓ¹ distance k/(2r) of the grid.
            let range = a.iter().cloned().fold(f64::MIN, f64::max) - a.iter().cloned().fold(f64::MAX, f64::min);
            let slack = (k as f64 * range / 2.0 + 1.0) / res as f64;
            worst_excess = worst_excess.max(v - s);
            if v < s - 1e-12 || v > s + slack {
                bad += 1;
            }
        }
    }
    verdict(bad == 0, format!("{bad} of {total} outside the grid slack, largest excess {worst_excess:.2e}"))
}

fn ac3() -> Verdict {
    let mut r = stream(3, 0);
    let mut worst_u: f64 = 0.0;
    let mut worst_loss: f64 = 0.0;
    let mut count = 0;
    for name in BUILTIN_GENERATORS {
        for _ in 0..200 {
            let k = r.random_range(2..=3);
            let m = r.random_range(2..=4);
            let conds: Vec<Vec<f64>> = (0..k).map(|_| rng::simplex(&mut r, m)).collect();
            let e = DiscreteExperiment::with_uniform_prior(conds).unwrap();
            let g = make_generator(name, k).unwrap();
            let d = f_divergence(e.conditionals(), &g).unwrap();
            let u = UncertaintyFn::from_generator(g.clone());
            let info = statistical_information(&e, &u, None).unwrap().information;
            let (_, loss) = loss_from_generator(g);
            let prior_risk = infimal_uncertainty(&loss, e.prior()).value;
            let post_risk = quantized_bayes_risk(&e, &loss, &Quantizer::identity(m)).unwrap();
            worst_u = worst_u.max((d - info).abs());
            worst_loss = worst_loss.max((d - (prior_risk - post_risk)).abs());
            count += 1;
        }
    }
    verdict(
        worst_u <= 1e-10 && worst_loss <= 1e-6,
        format!("{count} experiments, information err {worst_u:.2e}, loss-risk err {worst_loss:.2e}"),
    )
}

fn ac4() -> Verdict {
    let mut r = stream(4, 0);
    let (mut dpi, mut refine) = (0, 0);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let k = r.random_range(2..=4);
        let m = r.random_range(1..=6);
        let conds: Vec<Vec<f64>> = (0..k).map(|_| rng::sparse_simplex(&mut r, m, 0.2)).collect();
        let outputs = r.random_range(1..=6);
        let kern = MarkovKernel::new((0..m).map(|_| rng::sparse_simplex(&mut r, outputs, 0.3)).collect()).unwrap();
        let pushed = kernel_pushforward(&conds, &kern).unwrap();
        let fine = random_quantizer(&mut r, m);
        let coarse_codes = r.random_range(1..=fine.codes());
        let merge: Vec<usize> = (0..fine.codes()).map(|_| r.random_range(0..coarse_codes)).collect();
        let coarse = Quantizer::from_assignment(fine.assignment().iter().map(|&z| merge[z]).collect()).unwrap();
        for name in BUILTIN_GENERATORS {
            let g = make_generator(name, k).unwrap();
            let d = f_divergence(&conds, &g).unwrap();
            let dk = f_divergence(&pushed, &g).unwrap();
            // Both infinite counts as equal.
            if dk.is_finite() || d.is_finite() {
                worst = worst.max(dk - d);
                if dk > d + 1e-10 {
                    dpi += 1;
                }
            }
            let df = f_divergence_quantized(&conds, &g, &fine).unwrap();
            let dc = f_divergence_quantized(&conds, &g, &coarse).unwrap();
            if (dc.is_finite() || df.is_finite()) && dc > df + 1e-10 {
                refine += 1;
            }
        }
    }
    verdict(
        dpi == 0 && refine == 0,
        format!("1000 kernels: {dpi} violations (max excess {worst:.2e}); 1000 refinement pairs: {refine} violations"),
    )
}

fn ac5() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for k in 2..=6 {
        let u1 = UncertaintyFn::from_loss(make_loss("zero-one", k, None).unwrap());
        let u2 = UncertaintyFn::from_loss(make_loss("hinge", k, None).unwrap());
        let fit = affine_equivalence_u(&u1, &u2, 8).unwrap();
        if !fit.equivalent || (fit.a - 1.0 / k as f64).abs() > 1e-10 {
            ok = false;
            notes.push(format!("k={k}: verdict {} a={}", fit.equivalent, fit.a));
        }
    }
    let u1 = UncertaintyFn::from_loss(make_loss("zero-one", 3, None).unwrap());
    let u2 = UncertaintyFn::from_loss(make_loss("logistic", 3, None).unwrap());
    let fit = affine_equivalence_u(&u1, &u2, 8).unwrap();
    if fit.equivalent || fit.max_residual <= 1e-3 {
        ok = false;
    }
    notes.push(format!("zero-one/logistic residual {:.3e}", fit.max_residual));

    let mut r = stream(5, 0);
    let quantizers: Vec<Quantizer> = enumerate_quantizers(5, 5).unwrap().collect();
    let mut disagreements = 0;
    for k in 2..=6 {
        let exps: Vec<DiscreteExperiment> = (0..20)
            .map(|_| {
                let prior = rng::simplex(&mut r, k);
                let conds = (0..k).map(|_| rng::sparse_simplex(&mut r, 5, 0.2)).collect();
                DiscreteExperiment::new(prior, conds).unwrap()
            })
            .collect();
        let zo = make_loss("zero-one", k, None).unwrap();
        let hinge = make_loss("hinge", k, None).unwrap();
        let rep = ranking_compare(&exps, &quantizers, &zo, &hinge).unwrap();
        disagreements += rep.experiments.iter().filter(|e| !e.agree).count();
    }
    if disagreements > 0 {
        ok = false;
    }
    notes.push(format!("{disagreements} ranking disagreements over 100 experiments × {} quantizers", quantizers.len()));
    verdict(ok, notes.join("; "))
}

fn ac6() -> Verdict {
    let zo = make_loss("zero-one", 3, None).unwrap();
    let logistic = make_loss("logistic", 3, None).unwrap();
    let mut budget = 100_000u64;
    loop {
        let out = counterexample_search(&zo, &logistic, 3, 4, budget, 7).unwrap();
        if let Some(w) = out.witness {
            // Recompute through quantized Bayes risks rather than information.
            let inst = build_order_instance(&w.a, &w.b, OrderMode::Uncertainty).unwrap();
            let risk = |l, q| quantized_bayes_risk(&inst.experiment, l, q).unwrap();
            let da = risk(&zo, &inst.q2) - risk(&zo, &inst.q1);
            let db = risk(&logistic, &inst.q2) - risk(&logistic, &inst.q1);
            let flipped = (da > 1e-10 && db < -1e-10) || (da < -1e-10 && db > 1e-10);
            return verdict(
                flipped,
                format!(
                    "witness after {} candidates (budget {budget}), M = {}, risk differences zero-one {da:.3e}, logistic {db:.3e}",
                    out.examined, w.scale
                ),
            );
        }
        if budget >= 10_000_000 {
            return verdict(false, format!("no witness within {} candidates", out.examined));
        }
        budget = (budget * 2).min(10_000_000);
    }
}

fn ac7() -> Verdict {
    let mut r = stream(7, 0);
    let (mut fw, mut hinge) = (0, 0);
    for t in 0..10_000 {
        let k = r.random_range(2..=6);
        let pi = rng::sparse_simplex(&mut r, k, 0.1);
        let scale = [0.1, 1.0, 5.0][t % 3];
        let alpha: Vec<f64> = (0..k).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect();
        if !gap_inequality_check(GapMode::FamilyWise, &pi, &alpha, None).unwrap().holds {
            fw += 1;
        }
        let mut centered = alpha.clone();
        let mean = centered.iter().sum::<f64>() / k as f64;
        centered.iter_mut().for_each(|a| *a -= mean);
        let cost = if t % 2 == 0 { None } else { Some(random_cost(&mut r, k)) };
        if !gap_inequality_check(GapMode::Hinge, &pi, &centered, cost.as_ref()).unwrap().holds {
            hinge += 1;
        }
    }
    verdict(fw == 0 && hinge == 0, format!("violations: family-wise {fw}/10000, hinge {hinge}/10000"))
}

fn ac8() -> Verdict {
    let mut r = stream(8, 0);
    let mut bad = 0;
    for _ in 0..1000 {
        let m = r.random_range(1..=10);
        let total = 10.0 * r.random::<f64>();
        let a: Vec<f64> = rng::sparse_simplex(&mut r, m, 0.2).into_iter().map(|v| v * total).collect();
        let b: Vec<f64> = rng::sparse_simplex(&mut r, m, 0.2).into_iter().map(|v| v * total).collect();
        let z = transport_matrix(&a, &b).unwrap();
        let rows = z.row_sums();
        let cols = z.col_sums();
        let ok = z.z.len() == m
            && z.z.iter().all(|row| row.len() == m && row.iter().all(|&v| v >= 0.0))
            && rows.iter().zip(&a).all(|(x, y)| (x - y).abs() <= 1e-12)
            && cols.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-12);
        if !ok {
            bad += 1;
        }
    }
    verdict(bad == 0, format!("{bad} of 1000 plans break an invariant"))
}

fn ac9() -> Verdict {
    let conds = vec![
        vec![0.4, 0.3, 0.1, 0.1, 0.05, 0.05],
        vec![0.05, 0.1, 0.4, 0.3, 0.1, 0.05],
        vec![0.05, 0.05, 0.1, 0.1, 0.3, 0.4],
    ];
    let exp = DiscreteExperiment::with_uniform_prior(conds).unwrap();
    let hinge = make_loss("hinge", 3, None).unwrap();
    let cfg = ConsistencyConfig {
        schedule: vec![100, 1000, 10_000],
        reps: 50,
        seed: 0,
        family: QuantizerFamily::AllPartitions { max_codes: 3 },
        cost: CostMatrix::zero_one(3),
        force: false,
    };
    let rep = consistency_experiment(&exp, &hinge, &cfg).unwrap();
    let gaps: Vec<f64> = rep.rows.iter().map(|row| row.mean_gap).collect();
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    let last = *gaps.last().unwrap();
    let violations: usize = rep.rows.iter().map(|row| row.fisher_violations.unwrap_or(usize::MAX)).sum();
    verdict(
        monotone && last <= 0.02 && violations == 0,
        format!("mean gaps {gaps:.4?}, final {last:.4}, Fisher-gap violations {violations}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("AC1 closed-form uncertainty", ac1),
        ("AC2 conjugate formula", ac2),
        ("AC3 divergence identities", ac3),
        ("AC4 data processing and refinement", ac4),
        ("AC5 equivalence verdicts", ac5),
        ("AC6 counterexample existence", ac6),
        ("AC7 gap inequalities", ac7),
        ("AC8 transport", ac8),
        ("AC9 consistency", ac9),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let v = run();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{status} {name} ({:.1}s): {}", t.elapsed().as_secs_f64(), v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
