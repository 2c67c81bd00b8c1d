//! Quantizers (partitions of X), quantized Bayes risk and exhaustive
//! quantizer selection.
//!
//! Partitions are enumerated as restricted-growth strings: a₀ = 0 and
//! a_i ≤ 1 + max(a₀, …, a_{i−1}). Cell values depend only on the set of
//! outcomes in the cell, so for m ≤ 12 every subset is solved once and a
//! partition's risk is a sum of table lookups.

mod erm;

pub use erm::{
    consistency_experiment, decision_cost, erm_fit, erm_fit_from_joint, sample, ConsistencyConfig, ConsistencyReport,
    ConsistencyRow, DiscriminantTable, ErmFit, QuantizerFamily, SampleSet,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{cell_posterior, DiscreteExperiment, SimplexVector};
use crate::losses::{pointwise_bayes, LossFamily};

/// Largest alphabet for exhaustive enumeration.
pub const ENUMERATION_GUARD: usize = 12;

/// Relative tolerance under which two quantizer risks count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// A total map from X = [m] to codes [|Z|].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "QuantizerRepr", into = "QuantizerRepr")]
pub struct Quantizer {
    assignment: Vec<usize>,
    codes: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum QuantizerRepr {
    Bare(Vec<usize>),
    Full { assignment: Vec<usize>, codes: Option<usize> },
}

impl TryFrom<QuantizerRepr> for Quantizer {
    type Error = Error;
    fn try_from(r: QuantizerRepr) -> Result<Self> {
        match r {
            QuantizerRepr::Bare(a) => Quantizer::from_assignment(a),
            QuantizerRepr::Full { assignment, codes: Some(c) } => Quantizer::new(assignment, c),
            QuantizerRepr::Full { assignment, codes: None } => Quantizer::from_assignment(assignment),
        }
    }
}

impl From<Quantizer> for QuantizerRepr {
    fn from(q: Quantizer) -> Self {
        QuantizerRepr::Full { assignment: q.assignment, codes: Some(q.codes) }
    }
}

impl Quantizer {
    pub fn new(assignment: Vec<usize>, codes: usize) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidArgument("quantizer over an empty alphabet".into()));
        }
        if let Some((x, &z)) = assignment.iter().enumerate().find(|(_, &z)| z >= codes) {
            return Err(Error::InvalidArgument(format!("outcome {} maps to code {z}, outside 0..{codes}", x + 1)));
        }
        Ok(Self { assignment, codes })
    }

    /// Code alphabet sized to the largest code used.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        let codes = assignment.iter().max().map_or(0, |&z| z + 1);
        Self::new(assignment, codes)
    }

    pub fn identity(m: usize) -> Self {
        Self { assignment: (0..m).collect(), codes: m }
    }

    pub fn single_cell(m: usize) -> Self {
        Self { assignment: vec![0; m], codes: 1 }
    }

    /// Size of X.
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn codes(&self) -> usize {
        self.codes
    }

    pub fn code(&self, x: usize) -> usize {
        self.assignment[x]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Outcomes of each code (empty codes give empty cells).
    pub fn cells(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new(); self.codes];
        for (x, &z) in self.assignment.iter().enumerate() {
            cells[z].push(x);
        }
        cells
    }

    /// Whether every cell of `self` lies inside a cell of `other`.
    pub fn refines(&self, other: &Quantizer) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut image = vec![usize::MAX; self.codes];
        for (x, &z) in self.assignment.iter().enumerate() {
            let w = other.assignment[x];
            if image[z] == usize::MAX {
                image[z] = w;
            } else if image[z] != w {
                return false;
            }
        }
        true
    }

    /// Relabel codes in order of first appearance, dropping empty codes.
    pub fn canonical(&self) -> Quantizer {
        let mut map = vec![usize::MAX; self.codes];
        let mut next = 0;
        let assignment = self
            .assignment
            .iter()
            .map(|&z| {
                if map[z] == usize::MAX {
                    map[z] = next;
                    next += 1;
                }
                map[z]
            })
            .collect();
        Quantizer { assignment, codes: next }
    }

    /// Cells as bitmasks over X (m ≤ 64).
    fn masks(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.codes];
        for (x, &z) in self.assignment.iter().enumerate() {
            out[z] |= 1 << x;
        }
        out
    }
}

/// (mass, posterior) of each quantizer cell.
pub fn quantized_posteriors(exp: &DiscreteExperiment, q: &Quantizer) -> Result<Vec<(f64, Option<SimplexVector>)>> {
    let joint = cell_joint(&exp.joint_table(), q)?;
    Ok(joint.iter().map(|j| cell_posterior(j)).collect())
}

/// Joint masses per cell, `[z][y]`, from a `[x][y]` table.
pub(crate) fn cell_joint(joint: &[Vec<f64>], q: &Quantizer) -> Result<Vec<Vec<f64>>> {
    if q.len() != joint.len() {
        return Err(Error::Dimension(format!("quantizer covers {} outcomes, alphabet has {}", q.len(), joint.len())));
    }
    let k = joint.first().map_or(0, |r| r.len());
    let mut out = vec![vec![0.0; k]; q.codes()];
    for (x, row) in joint.iter().enumerate() {
        for (o, v) in out[q.code(x)].iter_mut().zip(row) {
            *o += v;
        }
    }
    Ok(out)
}

/// Solution for one cell: mass-weighted Bayes value, decision, gap.
#[derive(Debug, Clone)]
pub(crate) struct CellSolution {
    pub value: f64,
    pub alpha: Vec<f64>,
    pub gap: f64,
}

/// inf_α Σ_y w_y ℓ_y(α) for unnormalized weights; α = 0 when w = 0.
pub(crate) fn solve_cell(loss: &LossFamily, w: &[f64]) -> CellSolution {
    let (mass, post) = cell_posterior(w);
    match post {
        None => CellSolution { value: 0.0, alpha: vec![0.0; w.len()], gap: 0.0 },
        Some(p) => {
            let s = pointwise_bayes(loss, &p);
            CellSolution { value: mass * s.value, alpha: s.argmin, gap: mass * s.gap_estimate }
        }
    }
}

/// Cell solutions for every subset of X, indexed by bitmask.
pub(crate) struct SubsetTable {
    cells: Vec<CellSolution>,
}

impl SubsetTable {
    pub(crate) fn build(joint: &[Vec<f64>], loss: &LossFamily) -> Result<Self> {
        let m = joint.len();
        if m > ENUMERATION_GUARD {
            return Err(Error::EnumerationGuard(m));
        }
        let k = loss.k();
        let n = 1usize << m;
        let mut sums = vec![vec![0.0; k]; n];
        for mask in 1..n {
            let low = mask.trailing_zeros() as usize;
            let rest = mask & (mask - 1);
            let (head, tail) = sums.split_at_mut(mask);
            for (o, (a, b)) in tail[0].iter_mut().zip(head[rest].iter().zip(&joint[low])) {
                *o = a + b;
            }
        }
        let cells = sums.par_iter().map(|w| solve_cell(loss, w)).collect();
        Ok(Self { cells })
    }

    pub(crate) fn cell(&self, mask: u64) -> &CellSolution {
        &self.cells[mask as usize]
    }

    /// (value, gap) of a partition, summed in code order.
    pub(crate) fn partition(&self, q: &Quantizer) -> (f64, f64) {
        q.masks().iter().fold((0.0, 0.0), |(v, g), &mask| {
            let c = self.cell(mask);
            (v + c.value, g + c.gap)
        })
    }
}

/// Σ_z inf_α Σ_y π_y P_y(q⁻¹(z)) ℓ_y(α).
pub fn quantized_bayes_risk(exp: &DiscreteExperiment, loss: &LossFamily, q: &Quantizer) -> Result<f64> {
    check_k(exp, loss)?;
    let joint = cell_joint(&exp.joint_table(), q)?;
    Ok(joint.iter().map(|w| solve_cell(loss, w).value).sum())
}

fn check_k(exp: &DiscreteExperiment, loss: &LossFamily) -> Result<()> {
    if exp.k() != loss.k() {
        return Err(Error::Dimension(format!("loss has k = {}, experiment has k = {}", loss.k(), exp.k())));
    }
    Ok(())
}

/// All partitions of [m] into at most `max_codes` blocks, as canonical
/// restricted-growth strings in lexicographic order.
pub fn enumerate_quantizers(m: usize, max_codes: usize) -> Result<RgsIter> {
    if m > ENUMERATION_GUARD {
        return Err(Error::EnumerationGuard(m));
    }
    if m == 0 || max_codes == 0 {
        return Err(Error::InvalidArgument("need m ≥ 1 and max_codes ≥ 1".into()));
    }
    Ok(RgsIter { a: vec![0; m], max_codes: max_codes.min(m), done: false })
}

/// Iterator over restricted-growth strings.
#[derive(Debug, Clone)]
pub struct RgsIter {
    a: Vec<usize>,
    max_codes: usize,
    done: bool,
}

impl Iterator for RgsIter {
    type Item = Quantizer;

    fn next(&mut self) -> Option<Quantizer> {
        if self.done {
            return None;
        }
        let codes = self.a.iter().max().map_or(0, |&z| z + 1);
        let out = Quantizer { assignment: self.a.clone(), codes };
        // Advance: bump the rightmost position that can grow.
        let m = self.a.len();
        let mut prefix_max = vec![0usize; m];
        for i in 1..m {
            prefix_max[i] = prefix_max[i - 1].max(self.a[i - 1]);
        }
        let mut i = m;
        loop {
            if i <= 1 {
                self.done = true;
                break;
            }
            i -= 1;
            let cap = (prefix_max[i] + 1).min(self.max_codes - 1);
            if self.a[i] < cap {
                self.a[i] += 1;
                for v in &mut self.a[i + 1..] {
                    *v = 0;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Index of the first value within the tie tolerance of the minimum.
pub(crate) fn first_min(values: &[f64]) -> Option<usize> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    values.iter().position(|&v| v - min <= TIE_TOL * (1.0 + min.abs()))
}

/// Exhaustive argmin of the quantized Bayes risk, first in canonical order.
pub fn optimize_quantizer(exp: &DiscreteExperiment, loss: &LossFamily, max_codes: usize) -> Result<(Quantizer, f64)> {
    let (qs, vals) = all_partition_values(exp, loss, max_codes)?;
    let i = first_min(&vals).expect("at least one partition");
    Ok((qs[i].clone(), vals[i]))
}

/// Every partition attaining the minimum (within the tie tolerance).
pub fn optimal_quantizers(exp: &DiscreteExperiment, loss: &LossFamily, max_codes: usize) -> Result<Vec<Quantizer>> {
    let (qs, vals) = all_partition_values(exp, loss, max_codes)?;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(qs.into_iter().zip(vals).filter(|(_, v)| v - min <= TIE_TOL * (1.0 + min.abs())).map(|(q, _)| q).collect())
}

/// Quantized Bayes risk of every partition with at most `max_codes` cells.
pub fn all_partition_values(
    exp: &DiscreteExperiment,
    loss: &LossFamily,
    max_codes: usize,
) -> Result<(Vec<Quantizer>, Vec<f64>)> {
    check_k(exp, loss)?;
    let qs: Vec<Quantizer> = enumerate_quantizers(exp.m(), max_codes)?.collect();
    let table = SubsetTable::build(&exp.joint_table(), loss)?;
    let vals = qs.iter().map(|q| table.partition(q).0).collect();
    Ok((qs, vals))
}

/// Agglomerative fallback above the enumeration guard: start from the
/// identity and repeatedly merge the pair of cells whose merge costs least.
/// The result is not guaranteed optimal.
pub fn greedy_quantizer(exp: &DiscreteExperiment, loss: &LossFamily, max_codes: usize) -> Result<(Quantizer, f64)> {
    check_k(exp, loss)?;
    if max_codes == 0 {
        return Err(Error::InvalidArgument("max_codes must be at least 1".into()));
    }
    let joint = exp.joint_table();
    let mut cells: Vec<(Vec<usize>, Vec<f64>, f64)> = joint
        .iter()
        .enumerate()
        .map(|(x, w)| (vec![x], w.clone(), solve_cell(loss, w).value))
        .collect();
    while cells.len() > max_codes {
        let mut best = (f64::INFINITY, 0, 1, Vec::new(), 0.0);
        for i in 0..cells.len() {
            for j in (i + 1)..cells.len() {
                let w: Vec<f64> = cells[i].1.iter().zip(&cells[j].1).map(|(a, b)| a + b).collect();
                let v = solve_cell(loss, &w).value;
                let cost = v - cells[i].2 - cells[j].2;
                if cost < best.0 {
                    best = (cost, i, j, w, v);
                }
            }
        }
        let (_, i, j, w, v) = best;
        let moved = cells.remove(j).0;
        cells[i].0.extend(moved);
        cells[i].1 = w;
        cells[i].2 = v;
    }
    let mut assignment = vec![0; exp.m()];
    for (z, (xs, _, _)) in cells.iter().enumerate() {
        for &x in xs {
            assignment[x] = z;
        }
    }
    let q = Quantizer::new(assignment, cells.len())?.canonical();
    let value = cells.iter().map(|c| c.2).sum();
    Ok((q, value))
}
