//! Pointwise Bayes solutions: inf_α Σ_y π_y ℓ_y(α), unconstrained and
//! restricted to {α_i ≥ max_j α_j}.

use serde::Serialize;

use super::{Constraint, LossFamily, LossKind};
use crate::numeric::{
    maximize_concave_on_capped_simplex, project_max_cone, project_sum_zero_ball, projected_subgradient,
    scale_into_ball, SubgradientOptions,
};
use crate::uncertainty::{entropy, UncertaintyFn, UncertaintyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BayesMethod {
    ClosedForm,
    Combinatorial,
    /// α from a supergradient of U; gap certified through the conjugate.
    Dual,
    Subgradient,
}

#[derive(Debug, Clone, Serialize)]
pub struct BayesSolution {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub gap_estimate: f64,
    pub method: BayesMethod,
}

/// Solver settings for losses without a closed form.
#[derive(Debug, Clone, Copy)]
pub struct BayesOptions {
    pub starts: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for BayesOptions {
    fn default() -> Self {
        Self { starts: 4, iters: 5000, seed: 0 }
    }
}

impl BayesOptions {
    fn subgradient(&self, k: usize) -> SubgradientOptions {
        SubgradientOptions { starts: self.starts, iters: self.iters, radius: 10.0 * k as f64, seed: self.seed }
    }
}

/// Winner coordinate k − 1, all others −1.
pub fn canonical_alpha(k: usize, winner: usize) -> Vec<f64> {
    let mut a = vec![-1.0; k];
    a[winner] = (k - 1) as f64;
    a
}

fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn pointwise_bayes(loss: &LossFamily, pi: &[f64]) -> BayesSolution {
    pointwise_bayes_with(loss, pi, &BayesOptions::default())
}

pub fn pointwise_bayes_with(loss: &LossFamily, pi: &[f64], opts: &BayesOptions) -> BayesSolution {
    let k = loss.k();
    match loss.kind() {
        LossKind::ZeroOne | LossKind::WeightedZeroOne(_) => {
            let c = loss.cost_matrix().expect("discrete loss has a cost matrix");
            let (value, w) = c.min_column_risk(pi);
            BayesSolution { value, argmin: canonical_alpha(k, w), gap_estimate: 0.0, method: BayesMethod::Combinatorial }
        }
        LossKind::Hinge(c) => {
            let (m, w) = c.min_column_risk(pi);
            BayesSolution {
                value: k as f64 * m,
                argmin: canonical_alpha(k, w),
                gap_estimate: 0.0,
                method: BayesMethod::ClosedForm,
            }
        }
        LossKind::Logistic => logistic_solution(pi),
        LossKind::FamilyWise => familywise_solution(pi),
        LossKind::Conjugate(u) => match u.kind() {
            UncertaintyKind::ZeroOne => familywise_solution(pi),
            UncertaintyKind::Entropy => logistic_solution(pi),
            _ => dual_solution(loss, u, pi, opts),
        },
        LossKind::Custom { .. } => subgradient_solution(loss, pi, opts),
    }
}

fn logistic_solution(pi: &[f64]) -> BayesSolution {
    let mut a: Vec<f64> = pi.iter().map(|&p| p.max(1e-300).ln()).collect();
    center(&mut a);
    BayesSolution { value: entropy(pi), argmin: a, gap_estimate: 0.0, method: BayesMethod::ClosedForm }
}

fn familywise_solution(pi: &[f64]) -> BayesSolution {
    let k = pi.len();
    let w = argmax_lowest(pi);
    let mut a = vec![-1.0 / k as f64; k];
    a[w] += 1.0;
    BayesSolution { value: 1.0 - pi[w], argmin: a, gap_estimate: 0.0, method: BayesMethod::ClosedForm }
}

fn center(a: &mut [f64]) {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    a.iter_mut().for_each(|v| *v -= mean);
}

/// Minus a supergradient of U at π, centered. Coordinates with π_i = 0 use a
/// one-sided difference pushed down by a margin so the conjugate maximizer
/// stays off them.
pub fn numeric_supergradient(u: &UncertaintyFn, pi: &[f64]) -> Vec<f64> {
    let k = pi.len();
    let r = argmax_lowest(pi);
    let mut alpha = vec![0.0; k];
    let mut y = pi.to_vec();
    for i in 0..k {
        if i == r {
            continue;
        }
        let d = if pi[i] > 0.0 {
            let h = (pi[i] / 2.0).min(1e-6);
            y.copy_from_slice(pi);
            y[i] += h;
            y[r] -= h;
            let up = u.eval(&y);
            y[i] -= 2.0 * h;
            y[r] += 2.0 * h;
            let down = u.eval(&y);
            -(up - down) / (2.0 * h)
        } else {
            let h = 1e-6f64.min(pi[r] / 2.0);
            y.copy_from_slice(pi);
            y[i] += h;
            y[r] -= h;
            -(u.eval(&y) - u.eval(pi)) / h - 64.0
        };
        alpha[i] = if d.is_finite() { d.clamp(-1e6, 1e6) } else { -1e6 };
    }
    center(&mut alpha);
    alpha
}

// Polishing runs are short: every step pays for a numeric conjugate.
const POLISH_ITERS: usize = 300;

fn dual_solution(loss: &LossFamily, u: &UncertaintyFn, pi: &[f64], opts: &BayesOptions) -> BayesSolution {
    let alpha = numeric_supergradient(u, pi);
    let conj = u.conjugate(&alpha);
    let target = u.eval(pi);
    let mass: f64 = pi.iter().sum();
    let value = mass * conj.value - pi.iter().zip(&alpha).map(|(p, a)| p * a).sum::<f64>();
    let gap = (value + mass * conj.gap - target).max(0.0);
    let sol = BayesSolution { value, argmin: alpha.clone(), gap_estimate: gap, method: BayesMethod::Dual };
    if gap <= 1e-9 {
        return sol;
    }
    let k = pi.len();
    let so = SubgradientOptions { starts: 1, iters: POLISH_ITERS.min(opts.iters), ..opts.subgradient(k) };
    let radius = so.radius.max(norm(&alpha) * 1.01);
    let so = SubgradientOptions { radius, ..so };
    let oracle = |a: &[f64]| loss.risk_and_subgradient(pi, a);
    let res = projected_subgradient(&oracle, &|x| project_sum_zero_ball(x, radius), k, &[alpha], true, so);
    if res.value < value {
        // U(π) is the infimum, so the distance to it bounds suboptimality.
        let conj = u.conjugate(&res.x);
        BayesSolution {
            value: res.value,
            argmin: res.x,
            gap_estimate: (res.value + mass * conj.gap - target).max(0.0),
            method: BayesMethod::Dual,
        }
    } else {
        sol
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn subgradient_solution(loss: &LossFamily, pi: &[f64], opts: &BayesOptions) -> BayesSolution {
    let k = pi.len();
    let so = opts.subgradient(k);
    let sum_zero = loss.constraint() == Constraint::SumZero || loss.translation_invariant();
    let radius = so.radius;
    let project = move |x: &mut [f64]| {
        if sum_zero {
            project_sum_zero_ball(x, radius)
        } else {
            scale_into_ball(x, radius)
        }
    };
    let oracle = |a: &[f64]| loss.risk_and_subgradient(pi, a);
    let res = projected_subgradient(&oracle, &project, k, &[], sum_zero, so);
    let lb = res.lower_bound.max(loss.lower_bound() * pi.iter().sum::<f64>());
    BayesSolution {
        value: res.value,
        gap_estimate: (res.value - lb).max(0.0),
        argmin: res.x,
        method: BayesMethod::Subgradient,
    }
}

/// inf of Σ π_y ℓ_y(α) over {α_i ≥ max_j α_j} (within the loss's feasible set).
pub fn constrained_bayes(loss: &LossFamily, pi: &[f64], istar: usize) -> BayesSolution {
    constrained_bayes_with(loss, pi, istar, &BayesOptions::default())
}

pub fn constrained_bayes_with(loss: &LossFamily, pi: &[f64], istar: usize, opts: &BayesOptions) -> BayesSolution {
    let k = loss.k();
    match loss.kind() {
        LossKind::ZeroOne | LossKind::WeightedZeroOne(_) => {
            let c = loss.cost_matrix().expect("discrete loss has a cost matrix");
            // The argmax set S of α must contain i*; enumerate S.
            let others: Vec<usize> = (0..k).filter(|&j| j != istar).collect();
            let mut best = (f64::INFINITY, 0u64);
            for mask in 0u64..(1u64 << others.len()) {
                let v: f64 = (0..k)
                    .map(|y| {
                        let mut m = c.entry(y, istar);
                        for (b, &j) in others.iter().enumerate() {
                            if mask >> b & 1 == 1 {
                                m = m.max(c.entry(y, j));
                            }
                        }
                        if pi[y] > 0.0 {
                            pi[y] * m
                        } else {
                            0.0
                        }
                    })
                    .sum();
                if v < best.0 {
                    best = (v, mask);
                }
            }
            let mut a = vec![0.0; k];
            a[istar] = 1.0;
            for (b, &j) in others.iter().enumerate() {
                if best.1 >> b & 1 == 1 {
                    a[j] = 1.0;
                }
            }
            BayesSolution { value: best.0, argmin: a, gap_estimate: 0.0, method: BayesMethod::Combinatorial }
        }
        LossKind::Hinge(c) => {
            // Optimal β = 1 + α is uniform on a set T ∋ i*, the rest of T being
            // the cheapest columns.
            let w = c.column_risks(pi);
            let mut others: Vec<usize> = (0..k).filter(|&j| j != istar).collect();
            others.sort_by(|&a, &b| w[a].partial_cmp(&w[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
            let mut sum = w[istar];
            let mut best = (k as f64 * sum, 1usize);
            for (t, &j) in others.iter().enumerate() {
                sum += w[j];
                let size = t + 2;
                let v = k as f64 / size as f64 * sum;
                if v < best.0 {
                    best = (v, size);
                }
            }
            let lvl = k as f64 / best.1 as f64 - 1.0;
            let mut a = vec![-1.0; k];
            a[istar] = lvl;
            for &j in &others[..best.1 - 1] {
                a[j] = lvl;
            }
            BayesSolution { value: best.0, argmin: a, gap_estimate: 0.0, method: BayesMethod::ClosedForm }
        }
        LossKind::Logistic => logistic_constrained(pi, istar),
        LossKind::FamilyWise => conjugate_constrained(loss, &UncertaintyFn::zero_one(k), pi, istar, opts),
        LossKind::Conjugate(u) => match u.kind() {
            UncertaintyKind::Entropy => logistic_constrained(pi, istar),
            _ => conjugate_constrained(loss, u, pi, istar, opts),
        },
        LossKind::Custom { .. } => {
            let so = opts.subgradient(k);
            let radius = so.radius;
            let sum_zero = loss.constraint() == Constraint::SumZero || loss.translation_invariant();
            let project = move |x: &mut [f64]| project_cone_ball(x, istar, sum_zero, radius);
            let oracle = |a: &[f64]| loss.risk_and_subgradient(pi, a);
            let res = projected_subgradient(&oracle, &project, k, &[], sum_zero, so);
            let lb = res.lower_bound.max(loss.lower_bound() * pi.iter().sum::<f64>());
            BayesSolution {
                value: res.value,
                gap_estimate: (res.value - lb).max(0.0),
                argmin: res.x,
                method: BayesMethod::Subgradient,
            }
        }
    }
}

fn project_cone_ball(x: &mut [f64], istar: usize, sum_zero: bool, radius: f64) {
    project_max_cone(x, istar);
    if sum_zero {
        project_sum_zero_ball(x, radius);
    } else {
        scale_into_ball(x, radius);
    }
}

// Cross-entropy minimized over softmax outputs with p_i ≥ max p: pool i* with
// the largest other classes.
fn logistic_constrained(pi: &[f64], istar: usize) -> BayesSolution {
    let mut p = pi.to_vec();
    project_max_cone(&mut p, istar);
    let value = -pi.iter().zip(&p).filter(|(&a, _)| a > 0.0).map(|(a, b)| a * b.ln()).sum::<f64>();
    let mut a: Vec<f64> = p.iter().map(|&x| x.max(1e-300).ln()).collect();
    center(&mut a);
    BayesSolution { value, argmin: a, gap_estimate: 0.0, method: BayesMethod::ClosedForm }
}

// By duality the constrained infimum of −πᵀα + (−U)*(α) over the cone equals
// max U(p) over {p ∈ Δ : p_j ≤ π_j for j ≠ i*}. The dual maximum is a lower
// bound; a projected-subgradient primal gives the upper one.
fn conjugate_constrained(
    loss: &LossFamily,
    u: &UncertaintyFn,
    pi: &[f64],
    istar: usize,
    opts: &BayesOptions,
) -> BayesSolution {
    let k = pi.len();
    let caps: Vec<f64> = (0..k).map(|j| if j == istar { f64::INFINITY } else { pi[j] }).collect();
    let dual = maximize_concave_on_capped_simplex(&|p: &[f64]| u.eval(p), &caps);
    let lower = dual.value - dual.gap;

    let mut seed = numeric_supergradient(u, &dual.point);
    if matches!(u.kind(), UncertaintyKind::ZeroOne) {
        // Spread the dual point's top set evenly.
        let top = dual.point.iter().cloned().fold(0.0, f64::max);
        seed = dual.point.iter().map(|&p| if p >= top - 1e-9 { 1.0 } else { 0.0 }).collect();
    }
    let so = opts.subgradient(k);
    let iters = if u.has_closed_conjugate() { so.iters } else { POLISH_ITERS.min(so.iters) };
    let radius = so.radius.max(norm(&seed) * 1.01);
    let so = SubgradientOptions { iters, radius, ..so };
    let oracle = |a: &[f64]| loss.risk_and_subgradient(pi, a);
    let project = move |x: &mut [f64]| project_cone_ball(x, istar, true, radius);
    let mut seeds = vec![seed];
    project(&mut seeds[0]);
    let res = projected_subgradient(&oracle, &project, k, &seeds, true, so);
    BayesSolution {
        value: res.value,
        gap_estimate: (res.value - lower).max(0.0),
        argmin: res.x,
        method: BayesMethod::Dual,
    }
}
