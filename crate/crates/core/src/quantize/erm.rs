//! Empirical risk minimization over (quantizer, per-cell decision) pairs and
//! the consistency harness.
//!
//! For a fixed quantizer the empirical surrogate risk splits over cells, so
//! the joint minimizer is a per-cell pointwise Bayes solve on empirical cell
//! frequencies followed by an argmin over the quantizer family. Decisions are
//! scored by the weighted zero-one loss, with ties in α resolved against the
//! learner (the worst tied class under the true cell posterior).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::{cell_joint, enumerate_quantizers, first_min, solve_cell, Quantizer, SubsetTable};
use crate::calibration::calibration_check;
use crate::equivalence::affine_equivalence_u;
use crate::error::{Error, Result};
use crate::experiment::{CostMatrix, DiscreteExperiment};
use crate::losses::{LossFamily, LossKind};
use crate::rng;
use crate::uncertainty::UncertaintyFn;

/// n labelled draws (x, y) from an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub k: usize,
    pub m: usize,
    pub pairs: Vec<(usize, usize)>,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(k: usize, m: usize, pairs: Vec<(usize, usize)>, seed: u64) -> Result<Self> {
        if let Some(&(x, y)) = pairs.iter().find(|&&(x, y)| x >= m || y >= k) {
            return Err(Error::InvalidArgument(format!("sample ({x}, {y}) outside [{m}]×[{k}]")));
        }
        Ok(Self { k, m, pairs, seed })
    }

    /// Empirical joint frequencies `[x][y]`.
    pub fn joint_frequencies(&self) -> Vec<Vec<f64>> {
        let mut t = vec![vec![0.0; self.k]; self.m];
        let inv = 1.0 / self.pairs.len().max(1) as f64;
        for &(x, y) in &self.pairs {
            t[x][y] += inv;
        }
        t
    }
}

/// Draw y from the prior, then x from P_y, on stream `(seed, index)`.
pub fn sample(exp: &DiscreteExperiment, n: usize, seed: u64, index: u64) -> SampleSet {
    let mut r = rng::stream(seed, index);
    let pairs = (0..n)
        .map(|_| {
            let y = rng::categorical(&mut r, exp.prior());
            let x = rng::categorical(&mut r, exp.conditional(y));
            (x, y)
        })
        .collect();
    SampleSet { k: exp.k(), m: exp.m(), pairs, seed }
}

/// Candidate quantizers for ERM.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum QuantizerFamily {
    /// Every partition of X into at most `max_codes` cells.
    AllPartitions { max_codes: usize },
    Explicit { quantizers: Vec<Quantizer> },
}

/// Decision vector α(z) per code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscriminantTable {
    pub alphas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErmFit {
    pub quantizer: Quantizer,
    pub table: DiscriminantTable,
    pub empirical_risk: f64,
    /// Sum of per-cell solver gaps of the chosen pair.
    pub solver_gap: f64,
}

pub fn erm_fit(samples: &SampleSet, loss: &LossFamily, family: &QuantizerFamily) -> Result<ErmFit> {
    if samples.pairs.is_empty() {
        return Err(Error::EmptySample);
    }
    erm_fit_from_joint(&samples.joint_frequencies(), loss, family)
}

/// ERM with the empirical joint replaced by any `[x][y]` table, e.g. the
/// true joint for the population limit.
pub fn erm_fit_from_joint(joint: &[Vec<f64>], loss: &LossFamily, family: &QuantizerFamily) -> Result<ErmFit> {
    if joint.first().map(|r| r.len()) != Some(loss.k()) {
        return Err(Error::Dimension(format!("joint table does not have k = {} columns", loss.k())));
    }
    match family {
        QuantizerFamily::AllPartitions { max_codes } => {
            let table = SubsetTable::build(joint, loss)?;
            let qs: Vec<Quantizer> = enumerate_quantizers(joint.len(), *max_codes)?.collect();
            let vals: Vec<(f64, f64)> = qs.iter().map(|q| table.partition(q)).collect();
            let risks: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let i = first_min(&risks).expect("nonempty family");
            let q = qs[i].clone();
            let alphas = q.masks().iter().map(|&m| table.cell(m).alpha.clone()).collect();
            Ok(ErmFit { quantizer: q, table: DiscriminantTable { alphas }, empirical_risk: vals[i].0, solver_gap: vals[i].1 })
        }
        QuantizerFamily::Explicit { quantizers } => {
            if quantizers.is_empty() {
                return Err(Error::InvalidArgument("empty quantizer family".into()));
            }
            let fits: Vec<ErmFit> = quantizers
                .iter()
                .map(|q| {
                    let cells = cell_joint(joint, q)?;
                    let sols: Vec<_> = cells.iter().map(|w| solve_cell(loss, w)).collect();
                    Ok(ErmFit {
                        quantizer: q.clone(),
                        empirical_risk: sols.iter().map(|s| s.value).sum(),
                        solver_gap: sols.iter().map(|s| s.gap).sum(),
                        table: DiscriminantTable { alphas: sols.into_iter().map(|s| s.alpha).collect() },
                    })
                })
                .collect::<Result<_>>()?;
            let risks: Vec<f64> = fits.iter().map(|f| f.empirical_risk).collect();
            let i = first_min(&risks).expect("nonempty family");
            Ok(fits.into_iter().nth(i).expect("index in range"))
        }
    }
}

/// Weighted zero-one cost of acting on α in a cell with joint masses w:
/// the worst class among the tied maximizers of α.
pub fn decision_cost(cost: &CostMatrix, w: &[f64], alpha: &[f64]) -> f64 {
    let top = alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * (1.0 + top.abs());
    (0..alpha.len())
        .filter(|&i| alpha[i] >= top - tol)
        .map(|i| cost.column_risk(w, i))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn true_risk(joint: &[Vec<f64>], fit: &ErmFit, cost: &CostMatrix) -> Result<f64> {
    let cells = cell_joint(joint, &fit.quantizer)?;
    Ok(cells.iter().zip(&fit.table.alphas).map(|(w, a)| decision_cost(cost, w, a)).sum())
}

fn true_surrogate_risk(joint: &[Vec<f64>], fit: &ErmFit, loss: &LossFamily) -> Result<f64> {
    let cells = cell_joint(joint, &fit.quantizer)?;
    Ok(cells.iter().zip(&fit.table.alphas).map(|(w, a)| loss.risk(w, a)).sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyConfig {
    pub schedule: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub family: QuantizerFamily,
    /// Target weighted zero-one costs.
    pub cost: CostMatrix,
    /// Run even when the loss fails the equivalence or calibration checks.
    pub force: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PreconditionStatus {
    pub equivalent: bool,
    pub calibrated: bool,
    pub forced: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub max_gap: f64,
    pub mean_surrogate_gap: f64,
    /// Replications violating gap ≤ (1 + 1/k)·surrogate gap; hinge only.
    pub fisher_violations: Option<usize>,
    pub eps_opt: f64,
    pub eps_est: f64,
    pub eps_app: f64,
    /// (quantizer assignment, times chosen), most frequent first.
    pub chosen: Vec<(Vec<usize>, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    /// Best weighted zero-one risk over the family.
    pub r_star: f64,
    pub surrogate_r_star: f64,
    pub precondition: PreconditionStatus,
    pub rows: Vec<ConsistencyRow>,
}

struct Replication {
    gap: f64,
    surrogate_gap: f64,
    solver_gap: f64,
    quantizer: Vec<usize>,
}

/// Sample, fit by ERM, and score against the best achievable risk, for each
/// sample size in the schedule.
pub fn consistency_experiment(
    exp: &DiscreteExperiment,
    loss: &LossFamily,
    cfg: &ConsistencyConfig,
) -> Result<ConsistencyReport> {
    let k = exp.k();
    if loss.k() != k || cfg.cost.k() != k {
        return Err(Error::Dimension("loss, cost matrix and experiment disagree on k".into()));
    }
    let precondition = check_precondition(loss, &cfg.cost, cfg.seed, cfg.force)?;

    let joint = exp.joint_table();
    let wzo = LossFamily::weighted_zero_one(cfg.cost.clone());
    let r_star = erm_fit_from_joint(&joint, &wzo, &cfg.family)?.empirical_risk;
    let surrogate_r_star = erm_fit_from_joint(&joint, loss, &cfg.family)?.empirical_risk;
    let is_hinge = matches!(loss.kind(), LossKind::Hinge(_));
    let factor = 1.0 + 1.0 / k as f64;

    let mut rows = Vec::with_capacity(cfg.schedule.len());
    for (ni, &n) in cfg.schedule.iter().enumerate() {
        let reps: Vec<Replication> = (0..cfg.reps)
            .into_par_iter()
            .map(|r| {
                let s = sample(exp, n, cfg.seed, ((ni as u64) << 32) | r as u64);
                let fit = erm_fit(&s, loss, &cfg.family)?;
                Ok(Replication {
                    gap: true_risk(&joint, &fit, &cfg.cost)? - r_star,
                    surrogate_gap: true_surrogate_risk(&joint, &fit, loss)? - surrogate_r_star,
                    solver_gap: fit.solver_gap,
                    quantizer: fit.quantizer.assignment().to_vec(),
                })
            })
            .collect::<Result<_>>()?;
        let count = reps.len().max(1) as f64;
        let mean_gap = reps.iter().map(|r| r.gap).sum::<f64>() / count;
        let var = if reps.len() > 1 {
            reps.iter().map(|r| (r.gap - mean_gap).powi(2)).sum::<f64>() / (reps.len() - 1) as f64
        } else {
            0.0
        };
        let mean_surrogate_gap = reps.iter().map(|r| r.surrogate_gap).sum::<f64>() / count;
        let fisher_violations =
            is_hinge.then(|| reps.iter().filter(|r| r.gap > factor * r.surrogate_gap + 1e-9).count());
        let mut hist: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for r in &reps {
            *hist.entry(r.quantizer.clone()).or_default() += 1;
        }
        let mut chosen: Vec<(Vec<usize>, usize)> = hist.into_iter().collect();
        chosen.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        rows.push(ConsistencyRow {
            n,
            mean_gap,
            std_gap: var.sqrt(),
            max_gap: reps.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max),
            mean_surrogate_gap,
            fisher_violations,
            eps_opt: reps.iter().map(|r| r.solver_gap).sum::<f64>() / count,
            eps_est: mean_surrogate_gap,
            eps_app: 0.0,
            chosen,
        });
    }
    Ok(ConsistencyReport { r_star, surrogate_r_star, precondition, rows })
}

/// The loss must match the cost-weighted uncertainty up to an affine map and
/// pass calibration on random priors.
fn check_precondition(loss: &LossFamily, cost: &CostMatrix, seed: u64, force: bool) -> Result<PreconditionStatus> {
    let k = loss.k();
    let ul = UncertaintyFn::from_loss(loss.clone());
    let target = UncertaintyFn::cost_weighted(cost.clone());
    let equivalent = affine_equivalence_u(&target, &ul, 8)?.equivalent;

    let mut calibrated = true;
    let mut r = rng::stream(seed, u64::MAX);
    for _ in 0..20 {
        let pi = rng::simplex(&mut r, k);
        let risks = cost.column_risks(&pi);
        let min = risks.iter().cloned().fold(f64::INFINITY, f64::min);
        let worst = crate::experiment::argmax(&risks);
        if risks[worst] <= min {
            continue;
        }
        if !calibration_check(loss, &pi, worst, Some(cost))?.verdict {
            calibrated = false;
            break;
        }
    }
    if !(equivalent && calibrated) && !force {
        let what = if equivalent { "not calibrated" } else { "not equivalent to the target weighted loss" };
        return Err(Error::Refused(format!("loss `{}` is {what}", loss.tag())));
    }
    Ok(PreconditionStatus { equivalent, calibrated, forced: force && !(equivalent && calibrated) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::make_loss;
    use crate::quantize::optimize_quantizer;

    fn exp3() -> DiscreteExperiment {
        DiscreteExperiment::new(
            vec![0.3, 0.3, 0.4],
            vec![
                vec![0.4, 0.3, 0.1, 0.1, 0.05, 0.05],
                vec![0.05, 0.1, 0.4, 0.3, 0.1, 0.05],
                vec![0.05, 0.05, 0.1, 0.1, 0.3, 0.4],
            ],
        )
        .unwrap()
    }

    #[test]
    fn pure_cell_gets_canonical_hinge_alpha() {
        let hinge = make_loss("hinge", 3, None).unwrap();
        let s = SampleSet::new(3, 2, vec![(0, 0), (0, 0), (1, 2)], 0).unwrap();
        let fit = erm_fit(&s, &hinge, &QuantizerFamily::Explicit { quantizers: vec![Quantizer::identity(2)] }).unwrap();
        assert_eq!(fit.table.alphas[0], vec![2.0, -1.0, -1.0]);
    }

    #[test]
    fn population_limit_matches_exhaustive_search() {
        let e = exp3();
        for name in ["zero-one", "hinge"] {
            let l = make_loss(name, 3, None).unwrap();
            let fit = erm_fit_from_joint(&e.joint_table(), &l, &QuantizerFamily::AllPartitions { max_codes: 3 }).unwrap();
            let (q, v) = optimize_quantizer(&e, &l, 3).unwrap();
            assert_eq!(fit.quantizer, q);
            assert_eq!(fit.empirical_risk, v);
        }
    }

    #[test]
    fn empty_cells_default_to_zero() {
        let hinge = make_loss("hinge", 3, None).unwrap();
        let s = SampleSet::new(3, 3, vec![(0, 1)], 0).unwrap();
        let fit = erm_fit(&s, &hinge, &QuantizerFamily::Explicit { quantizers: vec![Quantizer::identity(3)] }).unwrap();
        assert_eq!(fit.table.alphas[2], vec![0.0; 3]);
        assert!(matches!(
            erm_fit(&SampleSet::new(3, 3, vec![], 0).unwrap(), &hinge, &QuantizerFamily::AllPartitions { max_codes: 2 }),
            Err(Error::EmptySample)
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let e = exp3();
        assert_eq!(sample(&e, 500, 3, 9), sample(&e, 500, 3, 9));
        assert_ne!(sample(&e, 500, 3, 9), sample(&e, 500, 3, 10));
    }

    #[test]
    fn logistic_is_refused_without_force() {
        let e = exp3();
        let cfg = ConsistencyConfig {
            schedule: vec![50],
            reps: 2,
            seed: 0,
            family: QuantizerFamily::AllPartitions { max_codes: 2 },
            cost: CostMatrix::zero_one(3),
            force: false,
        };
        let lg = make_loss("logistic", 3, None).unwrap();
        assert!(matches!(consistency_experiment(&e, &lg, &cfg), Err(Error::Refused(_))));
        let forced = ConsistencyConfig { force: true, ..cfg };
        let rep = consistency_experiment(&e, &lg, &forced).unwrap();
        assert!(rep.precondition.forced);
    }
}
