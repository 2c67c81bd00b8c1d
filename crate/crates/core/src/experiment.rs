//! Priors, class-conditional pmfs, posteriors and cost matrices.
//!
//! An experiment is a prior π on k classes plus k pmfs P₁…P_k over the
//! alphabet `0..m`. The posterior at outcome x is
//!
//! π̃_i(x) = π_i P_i(x) / Σ_j π_j P_j(x)
//!
//! and is left undefined where the marginal vanishes.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{Error, Result};

/// Sum tolerance accepted by [`validate_experiment`] before renormalizing.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Sum tolerance of a stored [`SimplexVector`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    /// Checks nonnegativity, finiteness and unit sum (within 1e-12).
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Dimension("empty simplex vector".into()));
        }
        check_entries(&entries, "simplex vector")?;
        let s: f64 = entries.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::SumTolerance { what: "simplex vector".into(), sum: s });
        }
        Ok(Self(entries))
    }

    /// Uniform vector 1/k.
    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// Basis vector e_i.
    pub fn basis(k: usize, i: usize) -> Self {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        Self(v)
    }

    pub(crate) fn new_unchecked(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for SimplexVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_entries(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what.into()));
    }
    if v.iter().any(|&x| x < 0.0) {
        return Err(Error::NegativeEntry(what.into()));
    }
    Ok(())
}

/// Validate a pmf: nonnegative, sum within [`ROW_SUM_TOL`] of one.
/// Rows off by more than 1e-12 are rescaled; exact rows are returned as is
/// so that validation is idempotent.
pub fn normalize_pmf(mut v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Dimension(format!("{what} is empty")));
    }
    check_entries(&v, what)?;
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::SumTolerance { what: what.into(), sum: s });
    }
    if (s - 1.0).abs() > SIMPLEX_TOL {
        v.iter_mut().for_each(|x| *x /= s);
    }
    Ok(v)
}

/// Experiment description as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawExperiment {
    pub k: usize,
    pub m: usize,
    pub prior: Vec<f64>,
    pub conditionals: Vec<Vec<f64>>,
}

/// Prior plus k class-conditional pmfs over `0..m`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteExperiment {
    prior: SimplexVector,
    conditionals: Vec<Vec<f64>>,
}

/// Validate and normalize a raw experiment.
pub fn validate_experiment(raw: &RawExperiment) -> Result<DiscreteExperiment> {
    if raw.k < 2 {
        return Err(Error::InvalidArgument(format!("k = {} but at least 2 classes are required", raw.k)));
    }
    if raw.m < 1 {
        return Err(Error::InvalidArgument("alphabet size m must be at least 1".into()));
    }
    if raw.prior.len() != raw.k {
        return Err(Error::Dimension(format!("prior has {} entries, k = {}", raw.prior.len(), raw.k)));
    }
    if raw.conditionals.len() != raw.k {
        return Err(Error::Dimension(format!(
            "{} conditional rows, k = {}",
            raw.conditionals.len(),
            raw.k
        )));
    }
    let prior = normalize_pmf(raw.prior.clone(), "prior")?;
    let mut conditionals = Vec::with_capacity(raw.k);
    for (i, row) in raw.conditionals.iter().enumerate() {
        if row.len() != raw.m {
            return Err(Error::Dimension(format!("conditional {} has {} entries, m = {}", i + 1, row.len(), raw.m)));
        }
        conditionals.push(normalize_pmf(row.clone(), &format!("conditional {}", i + 1))?);
    }
    Ok(DiscreteExperiment { prior: SimplexVector(prior), conditionals })
}

impl DiscreteExperiment {
    pub fn new(prior: Vec<f64>, conditionals: Vec<Vec<f64>>) -> Result<Self> {
        let raw = RawExperiment {
            k: prior.len(),
            m: conditionals.first().map_or(0, |r| r.len()),
            prior,
            conditionals,
        };
        validate_experiment(&raw)
    }

    /// Uniform prior over the given conditionals.
    pub fn with_uniform_prior(conditionals: Vec<Vec<f64>>) -> Result<Self> {
        let k = conditionals.len();
        Self::new(vec![1.0 / k.max(1) as f64; k], conditionals)
    }

    pub fn k(&self) -> usize {
        self.conditionals.len()
    }

    pub fn m(&self) -> usize {
        self.conditionals[0].len()
    }

    pub fn prior(&self) -> &SimplexVector {
        &self.prior
    }

    pub fn conditionals(&self) -> &[Vec<f64>] {
        &self.conditionals
    }

    pub fn conditional(&self, i: usize) -> &[f64] {
        &self.conditionals[i]
    }

    /// Joint mass π_y P_y(x).
    pub fn joint(&self, x: usize, y: usize) -> f64 {
        self.prior[y] * self.conditionals[y][x]
    }

    /// Joint table indexed `[x][y]`.
    pub fn joint_table(&self) -> Vec<Vec<f64>> {
        (0..self.m()).map(|x| (0..self.k()).map(|y| self.joint(x, y)).collect()).collect()
    }

    pub fn to_raw(&self) -> RawExperiment {
        RawExperiment {
            k: self.k(),
            m: self.m(),
            prior: self.prior.to_vec(),
            conditionals: self.conditionals.clone(),
        }
    }

    /// Same conditionals under a different prior.
    pub fn with_prior(&self, prior: Vec<f64>) -> Result<Self> {
        Self::new(prior, self.conditionals.clone())
    }
}

/// Marginal and per-outcome posteriors of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTable {
    pub marginal: Vec<f64>,
    /// `None` where the marginal is zero.
    pub posteriors: Vec<Option<SimplexVector>>,
}

/// Posterior of each outcome, never dividing by a zero marginal.
pub fn posterior(exp: &DiscreteExperiment) -> PosteriorTable {
    let (k, m) = (exp.k(), exp.m());
    let mut marginal = Vec::with_capacity(m);
    let mut posteriors = Vec::with_capacity(m);
    for x in 0..m {
        let joint: Vec<f64> = (0..k).map(|i| exp.joint(x, i)).collect();
        let (mass, post) = cell_posterior(&joint);
        marginal.push(mass);
        posteriors.push(post);
    }
    PosteriorTable { marginal, posteriors }
}

/// Normalize a vector of joint masses into (mass, posterior).
pub fn cell_posterior(joint: &[f64]) -> (f64, Option<SimplexVector>) {
    let mass: f64 = joint.iter().sum();
    if mass > 0.0 {
        let post = joint.iter().map(|&j| j / mass).collect();
        (mass, Some(SimplexVector::new_unchecked(post)))
    } else {
        (0.0, None)
    }
}

/// All points v/r of the simplex with integer v ≥ 0, Σv = r, in
/// lexicographic order of v.
pub fn simplex_grid(k: usize, r: usize) -> Result<Vec<SimplexVector>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("simplex grid needs k ≥ 2, got {k}")));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("grid resolution must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut v = vec![0usize; k];
    grid_rec(&mut v, 0, r, r, &mut out);
    Ok(out)
}

fn grid_rec(v: &mut Vec<usize>, pos: usize, rem: usize, r: usize, out: &mut Vec<SimplexVector>) {
    let k = v.len();
    if pos == k - 1 {
        v[pos] = rem;
        out.push(SimplexVector(v.iter().map(|&c| c as f64 / r as f64).collect()));
        return;
    }
    for c in 0..=rem {
        v[pos] = c;
        grid_rec(v, pos + 1, rem - c, r, out);
    }
}

/// Binomial coefficient in integer arithmetic.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Nonnegative k×k cost matrix with zero diagonal; `c[y][i]` is the cost of
/// deciding i when the class is y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CostMatrix {
    entries: Vec<Vec<f64>>,
}

impl CostMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let k = entries.len();
        if k < 2 {
            return Err(Error::InvalidArgument("cost matrix needs k ≥ 2".into()));
        }
        for (y, row) in entries.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Dimension(format!("cost matrix row {} has {} entries, k = {k}", y + 1, row.len())));
            }
            check_entries(row, "cost matrix")?;
            if row[y] != 0.0 {
                return Err(Error::InvalidArgument(format!("cost matrix diagonal entry {} is nonzero", y + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// C = 11ᵀ − I.
    pub fn zero_one(k: usize) -> Self {
        let entries = (0..k).map(|y| (0..k).map(|i| if i == y { 0.0 } else { 1.0 }).collect()).collect();
        Self { entries }
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, y: usize, i: usize) -> f64 {
        self.entries[y][i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.entries
    }

    /// πᵀc_l: expected cost of deciding l.
    pub fn column_risk(&self, pi: &[f64], l: usize) -> f64 {
        pi.iter().zip(&self.entries).map(|(&p, row)| p * row[l]).sum()
    }

    /// All column risks πᵀc_l.
    pub fn column_risks(&self, pi: &[f64]) -> Vec<f64> {
        (0..self.k()).map(|l| self.column_risk(pi, l)).collect()
    }

    /// (min_l πᵀc_l, lowest minimizing l).
    pub fn min_column_risk(&self, pi: &[f64]) -> (f64, usize) {
        let risks = self.column_risks(pi);
        let mut best = 0;
        for l in 1..risks.len() {
            if risks[l] < risks[best] {
                best = l;
            }
        }
        (risks[best], best)
    }
}

impl TryFrom<Vec<Vec<f64>>> for CostMatrix {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CostMatrix> for Vec<Vec<f64>> {
    fn from(c: CostMatrix) -> Self {
        c.entries
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}
