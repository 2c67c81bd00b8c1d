//! Per-(π, i*) classification-calibration verdicts and the pointwise gap
//! inequalities linking surrogate and decision regret.
//!
//! A loss is calibrated at (π, i*) when forcing i* to be a top coordinate of α
//! strictly raises the minimal conditional risk. Both infima come from
//! solvers with gap estimates, and the verdict only counts a margin that
//! clears them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::CostMatrix;
use crate::losses::{constrained_bayes, make_loss, pointwise_bayes, LossFamily};
use crate::quantize::decision_cost;

/// Slack added to every verdict and inequality.
pub const VERDICT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationVerdict {
    pub pi: Vec<f64>,
    pub istar: usize,
    pub unconstrained: f64,
    pub constrained: f64,
    pub margin: f64,
    pub unconstrained_gap: f64,
    pub constrained_gap: f64,
    /// ‖α‖ of the unconstrained solution; large values hint the infimum is not attained.
    pub argmin_norm: f64,
    pub verdict: bool,
}

/// Compare the unconstrained infimum with the one over {α_{i*} ≥ max_j α_j}.
///
/// Without a cost matrix i* must not maximize π; with one, c_{i*}ᵀπ must
/// exceed min_j c_jᵀπ.
pub fn calibration_check(
    loss: &LossFamily,
    pi: &[f64],
    istar: usize,
    cost: Option<&CostMatrix>,
) -> Result<CalibrationVerdict> {
    let k = loss.k();
    if pi.len() != k || istar >= k {
        return Err(Error::Dimension(format!("π has {} entries, i* = {istar}, k = {k}", pi.len())));
    }
    match cost {
        None => {
            let max = pi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if pi[istar] >= max {
                return Err(Error::Precondition(format!("class {istar} already maximizes π")));
            }
        }
        Some(c) => {
            if c.k() != k {
                return Err(Error::Dimension(format!("cost matrix is {}×{0}, k = {k}", c.k())));
            }
            let (min, _) = c.min_column_risk(pi);
            if c.column_risk(pi, istar) <= min {
                return Err(Error::Precondition(format!("class {istar} already minimizes the expected cost")));
            }
        }
    }
    let free = pointwise_bayes(loss, pi);
    let tied = constrained_bayes(loss, pi, istar);
    let margin = tied.value - free.value;
    Ok(CalibrationVerdict {
        pi: pi.to_vec(),
        istar,
        unconstrained: free.value,
        constrained: tied.value,
        margin,
        unconstrained_gap: free.gap_estimate,
        constrained_gap: tied.gap_estimate,
        argmin_norm: free.argmin.iter().map(|a| a * a).sum::<f64>().sqrt(),
        verdict: margin > free.gap_estimate + tied.gap_estimate + VERDICT_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapMode {
    /// (1/k)·zero-one regret ≤ family-wise regret.
    FamilyWise,
    /// weighted zero-one regret ≤ (1 + 1/k)·hinge regret.
    Hinge,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapCheck {
    pub decision_gap: f64,
    pub surrogate_gap: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Pointwise regrets at (π, α). The decision is the worst tied maximizer of α.
pub fn gap_inequality_check(mode: GapMode, pi: &[f64], alpha: &[f64], cost: Option<&CostMatrix>) -> Result<GapCheck> {
    let k = pi.len();
    if alpha.len() != k || k < 2 {
        return Err(Error::Dimension(format!("π has {k} entries, α has {}", alpha.len())));
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("decision vector".into()));
    }
    let kf = k as f64;
    let (loss, c) = match mode {
        GapMode::FamilyWise => (make_loss("family-wise", k, None)?, CostMatrix::zero_one(k)),
        GapMode::Hinge => {
            let c = cost.cloned().unwrap_or_else(|| CostMatrix::zero_one(k));
            (make_loss("hinge", k, Some(c.clone()))?, c)
        }
    };
    if !loss.feasible(alpha) {
        return Err(Error::InvalidArgument("hinge decision vector must sum to zero".into()));
    }
    let bayes = c.min_column_risk(pi).0;
    let decision_gap = decision_cost(&c, pi, alpha) - bayes;
    let surrogate_gap = loss.risk(pi, alpha) - pointwise_bayes(&loss, pi).value;
    let (lhs, rhs) = match mode {
        GapMode::FamilyWise => (decision_gap / kf, surrogate_gap),
        GapMode::Hinge => (decision_gap, (1.0 + 1.0 / kf) * surrogate_gap),
    };
    Ok(GapCheck { decision_gap, surrogate_gap, lhs, rhs, holds: lhs <= rhs + VERDICT_SLACK })
}
