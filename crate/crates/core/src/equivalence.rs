//! Equivalence of losses: affine fits between uncertainty functions or
//! generators, quantizer ranking comparison, and a randomized search for
//! ranking flips.
//!
//! Two losses order quantizers identically for every experiment exactly when
//! U₁ = a·U₂ + bᵀπ + c with a > 0. On the simplex b and c are redundant
//! (bᵀπ + c = (b + t1)ᵀπ + c − t), so the fit reports the minimal-norm pair.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::divergences::{build_order_instance, Generator, OrderMode};
use crate::error::{Error, Result};
use crate::experiment::{simplex_grid, DiscreteExperiment};
use crate::losses::{pointwise_bayes, LossFamily};
use crate::quantize::{quantized_bayes_risk, Quantizer};
use crate::rng;
use crate::uncertainty::{statistical_information, UncertaintyFn};

/// Relative residual tolerance for an equivalence verdict.
pub const FIT_TOL: f64 = 1e-6;
/// Smallest slope accepted as positive.
pub const MIN_SLOPE: f64 = 1e-6;
/// Tie tolerance when ordering quantizers.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct AffineFit {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: f64,
    pub max_residual: f64,
    /// max |f₁| over the validation points.
    pub scale: f64,
    pub fit_points: usize,
    pub validation_points: usize,
    pub equivalent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

fn lstsq(rows: &[Vec<f64>], target: &[f64]) -> Vec<f64> {
    let n = rows.len();
    let p = rows[0].len();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let y = DVector::from_column_slice(target);
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let sol = svd.solve(&y, 1e-12 * smax.max(1e-300)).expect("SVD with vectors");
    sol.iter().copied().collect()
}

fn max_abs_residual(rows: &[Vec<f64>], target: &[f64], coef: &[f64]) -> f64 {
    rows.iter()
        .zip(target)
        .map(|(r, t)| (t - r.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>()).abs())
        .fold(0.0, f64::max)
}

/// Fit U₁ = a·U₂ + bᵀπ + c on a resolution-r grid, validate on the 2r grid.
pub fn affine_equivalence_u(u1: &UncertaintyFn, u2: &UncertaintyFn, r: usize) -> Result<AffineFit> {
    let k = u1.k();
    if u2.k() != k {
        return Err(Error::Dimension(format!("uncertainty dimensions {k} and {}", u2.k())));
    }
    let fit_grid = simplex_grid(k, r)?;
    let val_grid = simplex_grid(k, 2 * r)?;
    let eval = |grid: &[crate::experiment::SimplexVector]| -> (Vec<f64>, Vec<f64>) {
        grid.par_iter().map(|p| (u1.eval(p), u2.eval(p))).unzip()
    };
    let (f1, f2) = eval(&fit_grid);
    let (v1, v2) = eval(&val_grid);
    let pts: Vec<&[f64]> = fit_grid.iter().map(|p| p.as_slice()).collect();
    let vpts: Vec<&[f64]> = val_grid.iter().map(|p| p.as_slice()).collect();
    let scale = v1.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = FIT_TOL * (1.0 + scale);

    // Affine part alone: [π].
    let design = |pts: &[&[f64]]| -> Vec<Vec<f64>> { pts.iter().map(|p| p.to_vec()).collect() };
    let affine_rows = design(&pts);
    let d2 = lstsq(&affine_rows, &f2);
    let u2_affine = max_abs_residual(&design(&vpts), &v2, &d2) <= FIT_TOL * (1.0 + v2.iter().map(|v| v.abs()).fold(0.0, f64::max));

    let with_slope = |pts: &[&[f64]], u2v: &[f64]| -> Vec<Vec<f64>> {
        pts.iter().zip(u2v).map(|(p, &u)| std::iter::once(u).chain(p.iter().copied()).collect()).collect()
    };
    let (a, d, reason) = if u2_affine {
        let d1 = lstsq(&affine_rows, &f1);
        let u1_affine = max_abs_residual(&design(&vpts), &v1, &d1) <= tol;
        if u1_affine {
            // Any positive slope works; a = 1 and the affine difference.
            let diff: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| x - y).collect();
            (1.0, lstsq(&affine_rows, &diff), None)
        } else {
            (0.0, d1, Some("second function is affine on the simplex while the first is not".to_string()))
        }
    } else {
        let coef = lstsq(&with_slope(&pts, &f2), &f1);
        (coef[0], coef[1..].to_vec(), None)
    };
    let mut coef = vec![a];
    coef.extend(&d);
    let max_residual = max_abs_residual(&with_slope(&vpts, &v2), &v1, &coef);
    let c = d.iter().sum::<f64>() / (k + 1) as f64;
    let b: Vec<f64> = d.iter().map(|v| v - c).collect();
    let reason = reason.or_else(|| {
        if a <= MIN_SLOPE {
            Some(format!("fitted slope {a} is not positive"))
        } else if max_residual > tol {
            Some(format!("residual {max_residual:.3e} exceeds tolerance {tol:.3e}"))
        } else {
            None
        }
    });
    Ok(AffineFit {
        a,
        b,
        c,
        max_residual,
        scale,
        fit_points: pts.len(),
        validation_points: vpts.len(),
        equivalent: reason.is_none(),
        reason,
    })
}

fn lattice(dim: usize, res: usize, span: f64, shift: f64) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..=res).map(|j| (j as f64 + shift) * span / res as f64).filter(|&v| v <= span).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Fit f₁ = a·f₂ + bᵀt + c on the lattice [0, T]^{k−1} with `res` steps per
/// axis, using only points where both generators are finite; validate on the
/// lattice shifted by half a step.
pub fn affine_equivalence_f(g1: &Generator, g2: &Generator, span: f64, res: usize) -> Result<AffineFit> {
    let dim = g1.arity();
    if g2.arity() != dim {
        return Err(Error::Arity { expected: dim, found: g2.arity() });
    }
    if !(span > 0.0) || res == 0 {
        return Err(Error::InvalidArgument("lattice needs T > 0 and at least one step".into()));
    }
    let sample = |pts: Vec<Vec<f64>>| -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, bool) {
        let vals: Vec<(f64, f64)> = pts.par_iter().map(|t| (g1.eval(t), g2.eval(t))).collect();
        let mut differ = false;
        let (mut keep, mut y1, mut y2) = (Vec::new(), Vec::new(), Vec::new());
        for (t, (a, b)) in pts.into_iter().zip(vals) {
            if a.is_finite() != b.is_finite() {
                differ = true;
            }
            if a.is_finite() && b.is_finite() {
                keep.push(t);
                y1.push(a);
                y2.push(b);
            }
        }
        (keep, y1, y2, differ)
    };
    let (pts, f1, f2, d1) = sample(lattice(dim, res, span, 0.0));
    let (vpts, v1, v2, d2) = sample(lattice(dim, res, span, 0.5));
    if pts.len() < dim + 3 || vpts.is_empty() {
        return Err(Error::InvalidArgument(format!("only {} lattice points are finite for both generators", pts.len())));
    }
    let scale = v1.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = FIT_TOL * (1.0 + scale);
    let affine = |pts: &[Vec<f64>]| -> Vec<Vec<f64>> {
        pts.iter().map(|t| t.iter().copied().chain(std::iter::once(1.0)).collect()).collect()
    };
    let full = |pts: &[Vec<f64>], u: &[f64]| -> Vec<Vec<f64>> {
        pts.iter().zip(u).map(|(t, &v)| std::iter::once(v).chain(t.iter().copied()).chain(std::iter::once(1.0)).collect()).collect()
    };
    let e2 = lstsq(&affine(&pts), &f2);
    let g2_affine =
        max_abs_residual(&affine(&vpts), &v2, &e2) <= FIT_TOL * (1.0 + v2.iter().map(|v| v.abs()).fold(0.0, f64::max));
    let (a, rest, mut reason) = if g2_affine {
        let e1 = lstsq(&affine(&pts), &f1);
        if max_abs_residual(&affine(&vpts), &v1, &e1) <= tol {
            let diff: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| x - y).collect();
            (1.0, lstsq(&affine(&pts), &diff), None)
        } else {
            (0.0, e1, Some("second generator is affine while the first is not".to_string()))
        }
    } else {
        let coef = lstsq(&full(&pts, &f2), &f1);
        (coef[0], coef[1..].to_vec(), None)
    };
    let mut coef = vec![a];
    coef.extend(&rest);
    let max_residual = max_abs_residual(&full(&vpts, &v2), &v1, &coef);
    if reason.is_none() {
        if a <= MIN_SLOPE {
            reason = Some(format!("fitted slope {a} is not positive"));
        } else if max_residual > tol {
            reason = Some(format!("residual {max_residual:.3e} exceeds tolerance {tol:.3e}"));
        } else if d1 || d2 {
            reason = Some("generators are finite on different sets".into());
        }
    }
    Ok(AffineFit {
        a,
        b: rest[..dim].to_vec(),
        c: rest[dim],
        max_residual,
        scale,
        fit_points: pts.len(),
        validation_points: vpts.len(),
        equivalent: reason.is_none(),
        reason,
    })
}

/// Quantized information of each quantizer under two losses, per experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRanking {
    pub info_a: Vec<f64>,
    pub info_b: Vec<f64>,
    /// Number of quantizers strictly more informative.
    pub ranks_a: Vec<usize>,
    pub ranks_b: Vec<usize>,
    pub agree: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Disagreement {
    pub experiment: usize,
    pub first: usize,
    pub second: usize,
    pub info_a: (f64, f64),
    pub info_b: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct RankingReport {
    pub quantizers: Vec<Vec<usize>>,
    pub experiments: Vec<ExperimentRanking>,
    pub agreement: bool,
    pub first_disagreement: Option<Disagreement>,
}

fn cmp_tol(x: f64, y: f64) -> i8 {
    if x - y > RANK_TOL {
        1
    } else if y - x > RANK_TOL {
        -1
    } else {
        0
    }
}

/// Quantized information U_ℓ(π) − R*_ℓ(q) for each quantizer.
pub fn quantized_information(exp: &DiscreteExperiment, loss: &LossFamily, qs: &[Quantizer]) -> Result<Vec<f64>> {
    let prior = pointwise_bayes(loss, exp.prior()).value;
    qs.iter().map(|q| Ok(prior - quantized_bayes_risk(exp, loss, q)?)).collect()
}

/// Compare the weak orders two losses induce on the quantizers.
pub fn ranking_compare(
    exps: &[DiscreteExperiment],
    quantizers: &[Quantizer],
    loss_a: &LossFamily,
    loss_b: &LossFamily,
) -> Result<RankingReport> {
    let per: Vec<(ExperimentRanking, Option<Disagreement>)> = exps
        .par_iter()
        .enumerate()
        .map(|(e, exp)| {
            let ia = quantized_information(exp, loss_a, quantizers)?;
            let ib = quantized_information(exp, loss_b, quantizers)?;
            let n = quantizers.len();
            let ranks = |v: &[f64]| -> Vec<usize> { (0..n).map(|i| (0..n).filter(|&j| cmp_tol(v[j], v[i]) > 0).count()).collect() };
            let mut first = None;
            'outer: for i in 0..n {
                for j in (i + 1)..n {
                    if cmp_tol(ia[i], ia[j]) != cmp_tol(ib[i], ib[j]) {
                        first = Some(Disagreement {
                            experiment: e,
                            first: i,
                            second: j,
                            info_a: (ia[i], ia[j]),
                            info_b: (ib[i], ib[j]),
                        });
                        break 'outer;
                    }
                }
            }
            let r = ExperimentRanking { ranks_a: ranks(&ia), ranks_b: ranks(&ib), agree: first.is_none(), info_a: ia, info_b: ib };
            Ok((r, first))
        })
        .collect::<Result<_>>()?;
    let first_disagreement = per.iter().find_map(|(_, d)| d.clone());
    Ok(RankingReport {
        quantizers: quantizers.iter().map(|q| q.assignment().to_vec()).collect(),
        agreement: first_disagreement.is_none(),
        experiments: per.into_iter().map(|(r, _)| r).collect(),
        first_disagreement,
    })
}

/// Column matrices whose order instance is ranked oppositely by two losses.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    /// k×m, columns in the simplex.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    /// Instance size M (X = [M]×[M]).
    pub scale: usize,
    /// Information of (q1, q2) under each loss, recomputed on the instance.
    pub info_a: (f64, f64),
    pub info_b: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    pub witness: Option<Witness>,
    pub examined: u64,
}

const CHUNK: u64 = 1000;
const FLIP_TOL: f64 = 1e-8;
const CHECK_TOL: f64 = 1e-10;

fn sign(x: f64, tol: f64) -> i8 {
    if x > tol {
        1
    } else if x < -tol {
        -1
    } else {
        0
    }
}

fn opposite(x: f64, y: f64, tol: f64) -> bool {
    let (s, t) = (sign(x, tol), sign(y, tol));
    s != 0 && t != 0 && s != t
}

// Random A with simplex columns, and B reached from A by 2×2 moves that keep
// every row and column sum.
fn draw_pair<R: Rng>(r: &mut R, k: usize, max_columns: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = r.random_range(2..=max_columns.max(2));
    let cols: Vec<Vec<f64>> = (0..m).map(|_| rng::simplex(r, k)).collect();
    let a: Vec<Vec<f64>> = (0..k).map(|l| cols.iter().map(|c| c[l]).collect()).collect();
    let mut b = a.clone();
    let moves = r.random_range(1..=3);
    for _ in 0..moves {
        let j1 = r.random_range(0..m);
        let j2 = (j1 + r.random_range(1..m)) % m;
        let l1 = r.random_range(0..k);
        let l2 = (l1 + r.random_range(1..k)) % k;
        let room = b[l2][j1].min(b[l1][j2]);
        let delta = room * r.random::<f64>();
        b[l1][j1] += delta;
        b[l2][j1] -= delta;
        b[l1][j2] -= delta;
        b[l2][j2] += delta;
    }
    (a, b)
}

fn column_sum(u: &UncertaintyFn, mat: &[Vec<f64>]) -> f64 {
    let m = mat[0].len();
    (0..m).map(|j| u.eval(&mat.iter().map(|r| r[j]).collect::<Vec<f64>>())).sum()
}

/// Build the order instance of (A, B) and recompute the information of both
/// projections under both losses. Returns the witness if the two losses rank
/// the projections in strictly opposite order.
pub fn validate_pair(a: &[Vec<f64>], b: &[Vec<f64>], loss_a: &LossFamily, loss_b: &LossFamily) -> Result<Option<Witness>> {
    let inst = build_order_instance(a, b, OrderMode::Uncertainty)?;
    let ua = UncertaintyFn::from_loss(loss_a.clone());
    let ub = UncertaintyFn::from_loss(loss_b.clone());
    let info = |u: &UncertaintyFn, q: &Quantizer| statistical_information(&inst.experiment, u, Some(q)).map(|r| r.information);
    let ia = (info(&ua, &inst.q1)?, info(&ua, &inst.q2)?);
    let ib = (info(&ub, &inst.q1)?, info(&ub, &inst.q2)?);
    if opposite(ia.0 - ia.1, ib.0 - ib.1, CHECK_TOL) {
        Ok(Some(Witness { a: a.to_vec(), b: b.to_vec(), scale: inst.scale, info_a: ia, info_b: ib }))
    } else {
        Ok(None)
    }
}

/// Randomized search for two quantizers ranked oppositely by two losses.
///
/// Candidates come in chunks of 1000 with independent streams; the reported
/// witness is the first in (chunk, index) order regardless of thread count.
pub fn counterexample_search(
    loss_a: &LossFamily,
    loss_b: &LossFamily,
    k: usize,
    max_columns: usize,
    budget: u64,
    seed: u64,
) -> Result<SearchOutcome> {
    if loss_a.k() != k || loss_b.k() != k {
        return Err(Error::Dimension(format!("losses must both have k = {k}")));
    }
    if max_columns < 2 {
        return Err(Error::InvalidArgument("need at least 2 columns".into()));
    }
    let ua = UncertaintyFn::from_loss(loss_a.clone());
    let ub = UncertaintyFn::from_loss(loss_b.clone());
    let chunks = budget.div_ceil(CHUNK);
    let wave = rayon::current_num_threads().max(1) as u64;
    let mut start = 0;
    while start < chunks {
        let end = (start + wave).min(chunks);
        let found: Vec<Option<(u64, Witness)>> = (start..end)
            .into_par_iter()
            .map(|chunk| -> Result<Option<(u64, Witness)>> {
                let mut r = rng::stream(seed, chunk);
                let size = CHUNK.min(budget - chunk * CHUNK);
                for idx in 0..size {
                    let (a, b) = draw_pair(&mut r, k, max_columns);
                    let da = column_sum(&ua, &a) - column_sum(&ua, &b);
                    let db = column_sum(&ub, &a) - column_sum(&ub, &b);
                    if !opposite(da, db, FLIP_TOL) {
                        continue;
                    }
                    if let Some(w) = validate_pair(&a, &b, loss_a, loss_b)? {
                        return Ok(Some((idx, w)));
                    }
                }
                Ok(None)
            })
            .collect::<Result<_>>()?;
        for (off, f) in found.into_iter().enumerate() {
            if let Some((idx, w)) = f {
                let chunk = start + off as u64;
                return Ok(SearchOutcome { witness: Some(w), examined: chunk * CHUNK + idx + 1 });
            }
        }
        start = end;
    }
    Ok(SearchOutcome { witness: None, examined: budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::make_generator;
    use crate::experiment::CostMatrix;
    use crate::losses::{generator_from_loss, make_loss};

    #[test]
    fn identity_fit() {
        let u = UncertaintyFn::entropy(3);
        let f = affine_equivalence_u(&u, &u, 6).unwrap();
        assert!((f.a - 1.0).abs() < 1e-12 && f.b.iter().all(|b| b.abs() < 1e-12) && f.c.abs() < 1e-12);
        assert!(f.max_residual < 1e-12 && f.equivalent);
    }

    #[test]
    fn zero_one_against_hinge_induced() {
        let zo = UncertaintyFn::zero_one(3);
        let h = UncertaintyFn::hinge_induced(CostMatrix::zero_one(3));
        let f = affine_equivalence_u(&zo, &h, 8).unwrap();
        assert!((f.a - 1.0 / 3.0).abs() < 1e-10, "{}", f.a);
        assert!(f.c.abs() < 1e-10 && f.equivalent);
    }

    #[test]
    fn zero_one_against_entropy() {
        let f = affine_equivalence_u(&UncertaintyFn::zero_one(3), &UncertaintyFn::entropy(3), 8).unwrap();
        assert!(!f.equivalent);
        assert!(f.max_residual > 1e-3);
    }

    #[test]
    fn affine_second_function_is_reported() {
        let lin = UncertaintyFn::custom("linear", 3, std::sync::Arc::new(|p: &[f64]| p[0] - p[2]));
        let f = affine_equivalence_u(&UncertaintyFn::zero_one(3), &lin, 6).unwrap();
        assert!(!f.equivalent && f.reason.is_some());
        let f = affine_equivalence_u(&lin, &lin, 6).unwrap();
        assert!(f.equivalent && f.a == 1.0);
    }

    #[test]
    fn generator_fits() {
        let pi = [0.5, 0.5];
        let zo = generator_from_loss(&make_loss("zero-one", 2, None).unwrap(), &pi).unwrap();
        let h = generator_from_loss(&make_loss("hinge", 2, None).unwrap(), &pi).unwrap();
        let lg = generator_from_loss(&make_loss("logistic", 2, None).unwrap(), &pi).unwrap();
        let f = affine_equivalence_f(&zo, &h, 4.0, 40).unwrap();
        assert!(f.equivalent && (f.a - 0.5).abs() < 1e-10, "{f:?}");
        assert!(!affine_equivalence_f(&lg, &zo, 4.0, 40).unwrap().equivalent);
        let kl = make_generator("kl", 2).unwrap();
        let f = affine_equivalence_f(&kl, &kl, 4.0, 40).unwrap();
        assert!((f.a - 1.0).abs() < 1e-10 && f.c.abs() < 1e-10);
    }

    #[test]
    fn same_loss_rankings_agree() {
        let e = DiscreteExperiment::new(vec![0.4, 0.6], vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.4, 0.3, 0.2, 0.1]]).unwrap();
        let qs: Vec<Quantizer> = crate::quantize::enumerate_quantizers(4, 2).unwrap().collect();
        let l = make_loss("logistic", 2, None).unwrap();
        let r = ranking_compare(&[e], &qs, &l, &l).unwrap();
        assert!(r.agreement);
    }

    #[test]
    fn zero_budget_examines_nothing() {
        let a = make_loss("zero-one", 3, None).unwrap();
        let b = make_loss("logistic", 3, None).unwrap();
        let out = counterexample_search(&a, &b, 3, 4, 0, 7).unwrap();
        assert!(out.witness.is_none() && out.examined == 0);
    }

    #[test]
    fn hinge_never_flips_against_zero_one() {
        let a = make_loss("zero-one", 3, None).unwrap();
        let b = make_loss("hinge", 3, None).unwrap();
        let out = counterexample_search(&a, &b, 3, 4, 3000, 1).unwrap();
        assert!(out.witness.is_none());
        assert_eq!(out.examined, 3000);
    }
}
