//! Concave uncertainty functions on the simplex and statistical information.
//!
//! | kind | U(π) | (−U)*(α) |
//! |------|------|----------|
//! | zero-one | 1 − max_j π_j | 1 + max_l {(1/l) Σ_{j≤l} α_(j) − 1/l} |
//! | cost-weighted(C) | min_l πᵀc_l | numeric |
//! | entropy | −Σ π_j ln π_j | ln Σ e^{α_j} |
//! | hinge-induced(C) | k · min_l πᵀc_l | numeric |
//!
//! The statistical information of an experiment is
//! I = U(π) − Σ_x p(x) U(π̃(x)), optionally after quantizing X.
//!
//! U is only defined on Δ_k; callers must not query it elsewhere.

use serde::Serialize;
use std::fmt;
use std::sync::Arc;

use crate::divergences::{perspective_eval, Generator, VecFn};
use crate::error::{Error, Result};
use crate::experiment::{posterior, CostMatrix, DiscreteExperiment, SimplexVector};
use crate::losses::{familywise_conjugate, familywise_maximizer, pointwise_bayes, BayesSolution, LossFamily};
use crate::numeric::{log_sum_exp, maximize_concave_on_simplex, softmax};
use crate::quantize::{quantized_posteriors, Quantizer};

#[derive(Clone)]
pub enum UncertaintyKind {
    ZeroOne,
    CostWeighted(CostMatrix),
    Entropy,
    HingeInduced(CostMatrix),
    /// U(π) = inf_α Σ π_i ℓ_i(α).
    FromLoss(Arc<LossFamily>),
    /// U(t) = −k · t_k f(t₁/t_k, …, t_{k−1}/t_k), closed at t_k = 0.
    FromGenerator(Generator),
    Custom(String, VecFn),
}

/// A concave function on Δ_k.
#[derive(Clone)]
pub struct UncertaintyFn {
    k: usize,
    kind: UncertaintyKind,
}

impl fmt::Debug for UncertaintyFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UncertaintyFn({}, k={})", self.tag(), self.k)
    }
}

/// Value of (−U)*(α) = sup_{π∈Δ} πᵀα + U(π) with its maximizer.
#[derive(Debug, Clone)]
pub struct ConjugateValue {
    pub value: f64,
    pub maximizer: Vec<f64>,
    pub gap: f64,
    pub approximate: bool,
}

/// Built-in uncertainty by name: zero-one, cost-weighted, entropy, hinge-induced.
pub fn make_uncertainty(kind: &str, k: usize, cost: Option<CostMatrix>) -> Result<UncertaintyFn> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("uncertainty needs k ≥ 2, got {k}")));
    }
    let cost = || -> Result<CostMatrix> {
        let c = cost.clone().unwrap_or_else(|| CostMatrix::zero_one(k));
        if c.k() != k {
            return Err(Error::Dimension(format!("cost matrix is {}×{0}, k = {k}", c.k())));
        }
        Ok(c)
    };
    let kind = match kind {
        "zero-one" => UncertaintyKind::ZeroOne,
        "entropy" => UncertaintyKind::Entropy,
        "cost-weighted" => UncertaintyKind::CostWeighted(cost()?),
        "hinge-induced" => UncertaintyKind::HingeInduced(cost()?),
        other => return Err(Error::UnknownKind(other.to_string())),
    };
    Ok(UncertaintyFn { k, kind })
}

impl UncertaintyFn {
    pub fn zero_one(k: usize) -> Self {
        Self { k, kind: UncertaintyKind::ZeroOne }
    }

    pub fn entropy(k: usize) -> Self {
        Self { k, kind: UncertaintyKind::Entropy }
    }

    pub fn cost_weighted(c: CostMatrix) -> Self {
        Self { k: c.k(), kind: UncertaintyKind::CostWeighted(c) }
    }

    pub fn hinge_induced(c: CostMatrix) -> Self {
        Self { k: c.k(), kind: UncertaintyKind::HingeInduced(c) }
    }

    pub fn from_loss(loss: LossFamily) -> Self {
        Self { k: loss.k(), kind: UncertaintyKind::FromLoss(Arc::new(loss)) }
    }

    pub fn from_generator(g: Generator) -> Self {
        Self { k: g.arity() + 1, kind: UncertaintyKind::FromGenerator(g) }
    }

    pub fn custom(name: impl Into<String>, k: usize, f: VecFn) -> Self {
        Self { k, kind: UncertaintyKind::Custom(name.into(), f) }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> &UncertaintyKind {
        &self.kind
    }

    pub fn tag(&self) -> &str {
        match &self.kind {
            UncertaintyKind::ZeroOne => "zero-one",
            UncertaintyKind::CostWeighted(_) => "cost-weighted",
            UncertaintyKind::Entropy => "entropy",
            UncertaintyKind::HingeInduced(_) => "hinge-induced",
            UncertaintyKind::FromLoss(_) => "from-loss",
            UncertaintyKind::FromGenerator(_) => "from-generator",
            UncertaintyKind::Custom(name, _) => name,
        }
    }

    pub fn eval(&self, pi: &[f64]) -> f64 {
        match &self.kind {
            UncertaintyKind::ZeroOne => 1.0 - pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            UncertaintyKind::CostWeighted(c) => c.min_column_risk(pi).0,
            UncertaintyKind::Entropy => entropy(pi),
            UncertaintyKind::HingeInduced(c) => self.k as f64 * c.min_column_risk(pi).0,
            UncertaintyKind::FromLoss(loss) => pointwise_bayes(loss, pi).value,
            UncertaintyKind::FromGenerator(g) => {
                let k = self.k;
                -(k as f64) * perspective_eval(g, &pi[..k - 1], pi[k - 1])
            }
            UncertaintyKind::Custom(_, f) => f(pi),
        }
    }

    pub fn has_closed_conjugate(&self) -> bool {
        matches!(self.kind, UncertaintyKind::ZeroOne | UncertaintyKind::Entropy)
    }

    /// (−U)*(α), closed form where installed, numeric otherwise.
    pub fn conjugate(&self, alpha: &[f64]) -> ConjugateValue {
        match &self.kind {
            UncertaintyKind::ZeroOne => ConjugateValue {
                value: familywise_conjugate(alpha),
                maximizer: familywise_maximizer(alpha),
                gap: 0.0,
                approximate: false,
            },
            UncertaintyKind::Entropy => {
                ConjugateValue { value: log_sum_exp(alpha), maximizer: softmax(alpha), gap: 0.0, approximate: false }
            }
            _ => {
                let phi = |p: &[f64]| p.iter().zip(alpha).map(|(a, b)| a * b).sum::<f64>() + self.eval(p);
                let r = maximize_concave_on_simplex(&phi, self.k);
                ConjugateValue { value: r.value, maximizer: r.point, gap: r.gap, approximate: r.approximate }
            }
        }
    }
}

/// Shannon entropy in nats, 0 ln 0 = 0.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 }).sum::<f64>()
}

/// Prior uncertainty, expected posterior uncertainty, and their difference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InformationReport {
    pub prior_uncertainty: f64,
    pub posterior_uncertainty: f64,
    pub information: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantizer: Option<Vec<usize>>,
}

/// U(π) − E[U(π̃)], expectation over the (quantized) marginal.
pub fn statistical_information(
    exp: &DiscreteExperiment,
    u: &UncertaintyFn,
    q: Option<&Quantizer>,
) -> Result<InformationReport> {
    if u.k() != exp.k() {
        return Err(Error::Dimension(format!("uncertainty has k = {}, experiment has k = {}", u.k(), exp.k())));
    }
    let cells: Vec<(f64, Option<SimplexVector>)> = match q {
        Some(q) => quantized_posteriors(exp, q)?,
        None => {
            let t = posterior(exp);
            t.marginal.into_iter().zip(t.posteriors).collect()
        }
    };
    let prior_uncertainty = u.eval(exp.prior());
    let posterior_uncertainty: f64 = cells
        .iter()
        .filter_map(|(mass, post)| post.as_ref().map(|p| mass * u.eval(p)))
        .sum();
    Ok(InformationReport {
        prior_uncertainty,
        posterior_uncertainty,
        information: prior_uncertainty - posterior_uncertainty,
        quantizer: q.map(|q| q.assignment().to_vec()),
    })
}

/// inf_α Σ π_i ℓ_i(α) with the achieving α and a gap estimate.
pub fn infimal_uncertainty(loss: &LossFamily, pi: &[f64]) -> BayesSolution {
    pointwise_bayes(loss, pi)
}
