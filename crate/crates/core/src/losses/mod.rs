//! Multiclass loss families on decision vectors α ∈ R^k.
//!
//! | kind | ℓ_y(α) |
//! |------|--------|
//! | zero-one | 0 if α_y > max_{j≠y} α_j, else 1 |
//! | weighted-zero-one(C) | max { c_yi : α_i = max_j α_j } |
//! | hinge(C) | Σ_j c_yj [1 + α_j]₊, only on 1ᵀα = 0 (+∞ elsewhere) |
//! | logistic | ln Σ_j e^{α_j − α_y} |
//! | family-wise | 1 − α_y + max_l { (1/l) Σ_{j≤l} α_(j) − 1/l } |
//!
//! with α_(1) ≥ α_(2) ≥ … the sorted entries. A concave U on the simplex
//! yields the loss ℓ_y(α) = −α_y + (−U)*(α), whose pointwise Bayes risk is
//! U again; the family-wise loss is this construction for U = 1 − max π and
//! logistic is the one for entropy.

mod bayes;
mod construct;

pub use bayes::{
    canonical_alpha, constrained_bayes, constrained_bayes_with, numeric_supergradient, pointwise_bayes, pointwise_bayes_with, BayesMethod,
    BayesOptions, BayesSolution,
};
pub use construct::{generator_from_loss, loss_from_generator, loss_from_uncertainty};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::experiment::CostMatrix;
use crate::numeric::{log_sum_exp, softmax};
use crate::uncertainty::UncertaintyFn;

/// Component evaluator `(y, α) -> ℓ_y(α)`.
pub type ComponentFn = Arc<dyn Fn(usize, &[f64]) -> f64 + Send + Sync>;
/// Component subgradient `(y, α) -> g ∈ ∂ℓ_y(α)`.
pub type ComponentGrad = Arc<dyn Fn(usize, &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum LossKind {
    ZeroOne,
    WeightedZeroOne(CostMatrix),
    Hinge(CostMatrix),
    Logistic,
    FamilyWise,
    /// ℓ_y(α) = −α_y + (−U)*(α).
    Conjugate(Arc<UncertaintyFn>),
    Custom { name: String, eval: ComponentFn, subgradient: ComponentGrad },
}

/// Feasible set for α.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    None,
    SumZero,
}

/// Tolerance for the hinge constraint 1ᵀα = 0.
pub const SUM_ZERO_TOL: f64 = 1e-9;

/// k component losses with subgradients and an optional affine constraint.
#[derive(Clone)]
pub struct LossFamily {
    k: usize,
    kind: LossKind,
    constraint: Constraint,
    translation_invariant: bool,
    lower_bound: f64,
}

impl fmt::Debug for LossFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LossFamily({}, k={})", self.tag(), self.k)
    }
}

/// Built-in loss by name: zero-one, weighted-zero-one, hinge, logistic, family-wise.
/// Cost-weighted kinds default to C = 11ᵀ − I.
pub fn make_loss(kind: &str, k: usize, cost: Option<CostMatrix>) -> Result<LossFamily> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("loss needs k ≥ 2, got {k}")));
    }
    let cost = || -> Result<CostMatrix> {
        let c = cost.clone().unwrap_or_else(|| CostMatrix::zero_one(k));
        if c.k() != k {
            return Err(Error::Dimension(format!("cost matrix is {}×{0}, k = {k}", c.k())));
        }
        Ok(c)
    };
    let (kind, constraint) = match kind {
        "zero-one" => (LossKind::ZeroOne, Constraint::None),
        "weighted-zero-one" => (LossKind::WeightedZeroOne(cost()?), Constraint::None),
        "hinge" => (LossKind::Hinge(cost()?), Constraint::SumZero),
        "logistic" => (LossKind::Logistic, Constraint::None),
        "family-wise" => (LossKind::FamilyWise, Constraint::None),
        other => return Err(Error::UnknownKind(other.to_string())),
    };
    let translation_invariant = constraint == Constraint::None;
    Ok(LossFamily { k, kind, constraint, translation_invariant, lower_bound: 0.0 })
}

/// Names accepted by [`make_loss`].
pub const BUILTIN_LOSSES: [&str; 5] = ["zero-one", "weighted-zero-one", "hinge", "logistic", "family-wise"];

impl LossFamily {
    /// User-supplied loss.
    pub fn custom(
        name: impl Into<String>,
        k: usize,
        eval: ComponentFn,
        subgradient: ComponentGrad,
        constraint: Constraint,
        translation_invariant: bool,
        lower_bound: f64,
    ) -> Self {
        Self { k, kind: LossKind::Custom { name: name.into(), eval, subgradient }, constraint, translation_invariant, lower_bound }
    }

    /// Weighted zero-one loss for a given cost matrix.
    pub fn weighted_zero_one(cost: CostMatrix) -> Self {
        Self {
            k: cost.k(),
            kind: LossKind::WeightedZeroOne(cost),
            constraint: Constraint::None,
            translation_invariant: true,
            lower_bound: 0.0,
        }
    }

    pub(crate) fn conjugate_of(u: UncertaintyFn, lower_bound: f64) -> Self {
        Self {
            k: u.k(),
            kind: LossKind::Conjugate(Arc::new(u)),
            constraint: Constraint::None,
            translation_invariant: true,
            lower_bound,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn translation_invariant(&self) -> bool {
        self.translation_invariant
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn tag(&self) -> &str {
        match &self.kind {
            LossKind::ZeroOne => "zero-one",
            LossKind::WeightedZeroOne(_) => "weighted-zero-one",
            LossKind::Hinge(_) => "hinge",
            LossKind::Logistic => "logistic",
            LossKind::FamilyWise => "family-wise",
            LossKind::Conjugate(_) => "conjugate",
            LossKind::Custom { name, .. } => name,
        }
    }

    /// Zero-one and weighted zero-one: finitely many loss vectors.
    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, LossKind::ZeroOne | LossKind::WeightedZeroOne(_))
    }

    /// Cost matrix of the discrete and hinge kinds (11ᵀ − I for zero-one).
    pub fn cost_matrix(&self) -> Option<CostMatrix> {
        match &self.kind {
            LossKind::ZeroOne => Some(CostMatrix::zero_one(self.k)),
            LossKind::WeightedZeroOne(c) | LossKind::Hinge(c) => Some(c.clone()),
            _ => None,
        }
    }

    /// Whether α lies in the feasible set.
    pub fn feasible(&self, alpha: &[f64]) -> bool {
        match self.constraint {
            Constraint::None => true,
            Constraint::SumZero => {
                let s: f64 = alpha.iter().sum();
                let n: f64 = alpha.iter().map(|a| a.abs()).sum();
                s.abs() <= SUM_ZERO_TOL * (1.0 + n)
            }
        }
    }

    /// All components ℓ_1(α)…ℓ_k(α).
    pub fn values(&self, alpha: &[f64]) -> Vec<f64> {
        let k = self.k;
        if !self.feasible(alpha) {
            return vec![f64::INFINITY; k];
        }
        match &self.kind {
            LossKind::ZeroOne => discrete_values(&CostMatrix::zero_one(k), alpha),
            LossKind::WeightedZeroOne(c) => discrete_values(c, alpha),
            LossKind::Hinge(c) => {
                let h: Vec<f64> = alpha.iter().map(|&a| (1.0 + a).max(0.0)).collect();
                (0..k).map(|y| c.rows()[y].iter().zip(&h).map(|(c, h)| c * h).sum()).collect()
            }
            LossKind::Logistic => {
                let lse = log_sum_exp(alpha);
                alpha.iter().map(|&a| lse - a).collect()
            }
            LossKind::FamilyWise => {
                let psi = familywise_conjugate(alpha);
                alpha.iter().map(|&a| psi - a).collect()
            }
            LossKind::Conjugate(u) => {
                let psi = u.conjugate(alpha).value;
                alpha.iter().map(|&a| psi - a).collect()
            }
            LossKind::Custom { eval, .. } => (0..k).map(|y| eval(y, alpha)).collect(),
        }
    }

    pub fn component(&self, y: usize, alpha: &[f64]) -> f64 {
        match &self.kind {
            LossKind::Custom { eval, .. } if self.feasible(alpha) => eval(y, alpha),
            _ => self.values(alpha)[y],
        }
    }

    /// A subgradient of ℓ_y at α.
    pub fn subgradient(&self, y: usize, alpha: &[f64]) -> Vec<f64> {
        let k = self.k;
        match &self.kind {
            LossKind::ZeroOne | LossKind::WeightedZeroOne(_) => vec![0.0; k],
            LossKind::Hinge(c) => (0..k).map(|j| if 1.0 + alpha[j] > 0.0 { c.entry(y, j) } else { 0.0 }).collect(),
            LossKind::Logistic => {
                let mut g = softmax(alpha);
                g[y] -= 1.0;
                g
            }
            LossKind::FamilyWise => {
                let mut g = familywise_maximizer(alpha);
                g[y] -= 1.0;
                g
            }
            LossKind::Conjugate(u) => {
                let mut g = u.conjugate(alpha).maximizer;
                g[y] -= 1.0;
                g
            }
            LossKind::Custom { subgradient, .. } => subgradient(y, alpha),
        }
    }

    /// Σ_y π_y ℓ_y(α), with 0·∞ = 0.
    pub fn risk(&self, pi: &[f64], alpha: &[f64]) -> f64 {
        self.values(alpha).iter().zip(pi).filter(|(_, &p)| p > 0.0).map(|(v, p)| p * v).sum()
    }

    /// (Σ π_y ℓ_y(α), Σ π_y ∂ℓ_y(α)).
    pub fn risk_and_subgradient(&self, pi: &[f64], alpha: &[f64]) -> (f64, Vec<f64>) {
        let k = self.k;
        let value = self.risk(pi, alpha);
        let mut g = vec![0.0; k];
        match &self.kind {
            // Every component shares the conjugate part; one solve suffices.
            LossKind::Conjugate(u) => {
                let p = u.conjugate(alpha).maximizer;
                let mass: f64 = pi.iter().sum();
                for j in 0..k {
                    g[j] = mass * p[j] - pi[j];
                }
            }
            _ => {
                for (y, &p) in pi.iter().enumerate() {
                    if p > 0.0 {
                        for (gj, sj) in g.iter_mut().zip(self.subgradient(y, alpha)) {
                            *gj += p * sj;
                        }
                    }
                }
            }
        }
        (value, g)
    }
}

fn discrete_values(c: &CostMatrix, alpha: &[f64]) -> Vec<f64> {
    let top = alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] == top).collect();
    (0..alpha.len()).map(|y| winners.iter().map(|&i| c.entry(y, i)).fold(0.0, f64::max)).collect()
}

/// (−U)*(α) for U = 1 − max π: 1 + max_l {(1/l) Σ_{j≤l} α_(j) − 1/l}.
pub fn familywise_conjugate(alpha: &[f64]) -> f64 {
    let (best, _) = familywise_best_prefix(alpha);
    1.0 + best
}

fn sorted_desc(alpha: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..alpha.len()).collect();
    idx.sort_by(|&i, &j| alpha[j].partial_cmp(&alpha[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    idx
}

fn familywise_best_prefix(alpha: &[f64]) -> (f64, usize) {
    let idx = sorted_desc(alpha);
    let mut sum = 0.0;
    let mut best = f64::NEG_INFINITY;
    let mut best_l = 1;
    for (l, &i) in idx.iter().enumerate() {
        sum += alpha[i];
        let l1 = (l + 1) as f64;
        let v = (sum - 1.0) / l1;
        if v > best {
            best = v;
            best_l = l + 1;
        }
    }
    (best, best_l)
}

/// Maximizer of πᵀα + 1 − max π: uniform on the best sorted prefix.
pub fn familywise_maximizer(alpha: &[f64]) -> Vec<f64> {
    let (_, l) = familywise_best_prefix(alpha);
    let idx = sorted_desc(alpha);
    let mut p = vec![0.0; alpha.len()];
    for &i in &idx[..l] {
        p[i] = 1.0 / l as f64;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_one_example() {
        let l = make_loss("zero-one", 3, None).unwrap();
        assert_eq!(l.values(&[2.0, 1.0, 1.0]), vec![0.0, 1.0, 1.0]);
        // Ties lose for everyone.
        assert_eq!(l.values(&[1.0, 1.0, 0.0]), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn weighted_uses_max_over_attainers() {
        let c = CostMatrix::new(vec![vec![0.0, 2.0, 5.0], vec![1.0, 0.0, 1.0], vec![3.0, 4.0, 0.0]]).unwrap();
        let l = make_loss("weighted-zero-one", 3, Some(c)).unwrap();
        assert_eq!(l.values(&[1.0, 1.0, 0.0]), vec![2.0, 1.0, 4.0]);
        assert_eq!(l.values(&[0.0, 0.0, 3.0]), vec![5.0, 1.0, 0.0]);
    }

    #[test]
    fn logistic_at_zero_is_log_k() {
        let l = make_loss("logistic", 4, None).unwrap();
        for v in l.values(&[0.0; 4]) {
            assert!((v - 4f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn familywise_examples() {
        let l = make_loss("family-wise", 3, None).unwrap();
        for v in l.values(&[0.0; 3]) {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(familywise_conjugate(&[1.0, 0.0, 0.0]), 1.0);
        assert!((familywise_conjugate(&[0.0, 0.0, 0.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(familywise_conjugate(&[0.3, -1.0, 2.0]), familywise_conjugate(&[2.0, 0.3, -1.0]));
    }

    #[test]
    fn familywise_conjugate_against_fine_grid() {
        // Brute-force sup of πᵀα + 1 − max π over a resolution-200 grid.
        let alpha = [1.0, 0.0, 0.0];
        let mut best = f64::NEG_INFINITY;
        for v in crate::experiment::simplex_grid(3, 200).unwrap() {
            let val = v.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>() + 1.0
                - v.iter().cloned().fold(0.0, f64::max);
            best = best.max(val);
        }
        assert!((best - familywise_conjugate(&alpha)).abs() < 1e-12);
    }

    #[test]
    fn hinge_is_infinite_off_constraint() {
        let l = make_loss("hinge", 3, None).unwrap();
        assert!(l.values(&[1.0, 0.0, 0.0]).iter().all(|v| v.is_infinite()));
        assert_eq!(l.values(&[2.0, -1.0, -1.0]), vec![0.0, 3.0, 3.0]);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(matches!(make_loss("squared", 3, None), Err(Error::UnknownKind(_))));
    }
}
