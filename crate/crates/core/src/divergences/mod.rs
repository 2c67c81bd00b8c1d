//! Multi-distribution f-divergences on a finite alphabet.
//!
//! For k pmfs P₁…P_k and a convex generator f: R₊^{k−1} → R ∪ {+∞} with
//! f(1) = 0,
//!
//! D_f(P₁,…,P_k) = Σ_x p_k(x) f(p₁(x)/p_k(x), …, p_{k−1}(x)/p_k(x))
//!
//! where the summand at p_k(x) = 0 is the closed perspective, i.e. the
//! recession value lim_{s→0} s·f(1 − t + t/s) in direction t = (p₁(x),…).
//!
//! Built-in generators sum a binary generator over coordinates:
//!
//! | name | f(t) | recession(t) | f(0) |
//! |------|------|--------------|------|
//! | kl | Σ t_i ln t_i | +∞ unless t = 0 | 0 |
//! | tv | Σ ½\|t_i − 1\| | ½ Σ t_i | (k−1)/2 |
//! | hellinger-sq | Σ ½(√t_i − 1)² | ½ Σ t_i | (k−1)/2 |
//! | pearson | Σ (t_i − 1)² | +∞ unless t = 0 | k−1 |

mod order;
mod transport;

pub use order::{build_order_instance, OrderInstance, OrderMode};
pub use transport::{transport_matrix, TransportMatrix};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quantize::Quantizer;

/// Shared closure on vectors.
pub type VecFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Kl,
    Tv,
    HellingerSq,
    Pearson,
    Custom,
}

/// Convex generator with its recession function.
#[derive(Clone)]
pub struct Generator {
    name: String,
    kind: GeneratorKind,
    arity: usize,
    eval: VecFn,
    recession: Option<VecFn>,
    numeric_recession: bool,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("numeric_recession", &self.numeric_recession)
            .finish()
    }
}

/// Built-in generator of arity k − 1.
pub fn make_generator(name: &str, k: usize) -> Result<Generator> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("generator needs k ≥ 2, got {k}")));
    }
    let (kind, eval, rec): (GeneratorKind, VecFn, VecFn) = match name {
        "kl" => (
            GeneratorKind::Kl,
            Arc::new(|t: &[f64]| {
                t.iter()
                    .map(|&x| if x < 0.0 { f64::INFINITY } else if x == 0.0 { 0.0 } else { x * x.ln() })
                    .sum()
            }),
            Arc::new(|d: &[f64]| if d.iter().any(|&x| x > 0.0) { f64::INFINITY } else { 0.0 }),
        ),
        "tv" => (
            GeneratorKind::Tv,
            Arc::new(|t: &[f64]| {
                t.iter().map(|&x| if x < 0.0 { f64::INFINITY } else { 0.5 * (x - 1.0).abs() }).sum()
            }),
            Arc::new(|d: &[f64]| 0.5 * d.iter().sum::<f64>()),
        ),
        "hellinger-sq" => (
            GeneratorKind::HellingerSq,
            Arc::new(|t: &[f64]| {
                t.iter()
                    .map(|&x| if x < 0.0 { f64::INFINITY } else { 0.5 * (x.sqrt() - 1.0).powi(2) })
                    .sum()
            }),
            Arc::new(|d: &[f64]| 0.5 * d.iter().sum::<f64>()),
        ),
        "pearson" => (
            GeneratorKind::Pearson,
            Arc::new(|t: &[f64]| {
                t.iter().map(|&x| if x < 0.0 { f64::INFINITY } else { (x - 1.0).powi(2) }).sum()
            }),
            Arc::new(|d: &[f64]| if d.iter().any(|&x| x > 0.0) { f64::INFINITY } else { 0.0 }),
        ),
        other => return Err(Error::UnknownKind(other.to_string())),
    };
    Ok(Generator { name: name.to_string(), kind, arity: k - 1, eval, recession: Some(rec), numeric_recession: false })
}

/// Names accepted by [`make_generator`].
pub const BUILTIN_GENERATORS: [&str; 4] = ["kl", "tv", "hellinger-sq", "pearson"];

impl Generator {
    /// User-supplied generator. Without a recession closure, divergences
    /// that need one fail unless [`Generator::with_numeric_recession`] is used.
    pub fn custom(name: impl Into<String>, arity: usize, eval: VecFn, recession: Option<VecFn>) -> Self {
        Self { name: name.into(), kind: GeneratorKind::Custom, arity, eval, recession, numeric_recession: false }
    }

    /// Accept the Richardson-extrapolated numeric recession, flagged approximate.
    pub fn with_numeric_recession(mut self) -> Self {
        if self.recession.is_none() {
            self.numeric_recession = true;
        }
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> GeneratorKind {
        self.kind
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn has_recession(&self) -> bool {
        self.recession.is_some()
    }

    /// True when boundary values come from the numeric recession fallback.
    pub fn is_approximate(&self) -> bool {
        self.numeric_recession
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        (self.eval)(t)
    }

    /// Recession value in direction d (closed form, else numeric).
    pub fn recession(&self, d: &[f64]) -> f64 {
        match &self.recession {
            Some(r) => r(d),
            None => numeric_recession(&*self.eval, d),
        }
    }
}

/// lim_{s→0} s·f(1 − d + d/s) from s = 2⁻¹⁰…2⁻⁴⁰ with two Richardson
/// steps (orders ½ and 1). A sequence whose increments stop shrinking is read as
/// divergence to +∞.
pub fn numeric_recession(f: &dyn Fn(&[f64]) -> f64, d: &[f64]) -> f64 {
    if d.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let mut arg = vec![0.0; d.len()];
    let mut vals = Vec::with_capacity(31);
    for j in 10..=40 {
        let s = (2.0f64).powi(-j);
        for (a, &x) in arg.iter_mut().zip(d) {
            *a = 1.0 + x * (1.0 / s - 1.0);
        }
        let v = s * f(&arg);
        if v == f64::INFINITY {
            return f64::INFINITY;
        }
        vals.push(v);
    }
    let n = vals.len();
    let d1 = vals[n - 1] - vals[n - 2];
    let d0 = vals[n - 2] - vals[n - 3];
    if d1 > 1e-9 * (1.0 + vals[n - 1].abs()) && d1 >= 0.75 * d0 {
        return f64::INFINITY;
    }
    // Generators like √t leave an O(√s) term ahead of the O(s) one.
    let r = std::f64::consts::SQRT_2;
    let half: Vec<f64> = vals[n - 3..].windows(2).map(|w| (r * w[1] - w[0]) / (r - 1.0)).collect();
    2.0 * half[1] - half[0]
}

/// Closed perspective: u·f(t/u) for u > 0, recession(t) for u = 0.
pub fn perspective_eval(g: &Generator, t: &[f64], u: f64) -> f64 {
    if u > 0.0 {
        let scaled: Vec<f64> = t.iter().map(|&x| x / u).collect();
        let v = g.eval(&scaled);
        if v == f64::INFINITY {
            f64::INFINITY
        } else {
            u * v
        }
    } else if t.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        g.recession(t)
    }
}

fn check_dists<D: AsRef<[f64]>>(dists: &[D], g: &Generator) -> Result<usize> {
    if dists.len() < 2 {
        return Err(Error::InvalidArgument("at least two distributions are required".into()));
    }
    if g.arity() + 1 != dists.len() {
        return Err(Error::Arity { expected: g.arity(), found: dists.len() });
    }
    let m = dists[0].as_ref().len();
    if dists.iter().any(|d| d.as_ref().len() != m) {
        return Err(Error::Dimension("distributions have different lengths".into()));
    }
    Ok(m)
}

fn needs_recession(cells: &[(Vec<f64>, f64)]) -> bool {
    cells.iter().any(|(t, u)| *u == 0.0 && t.iter().any(|&x| x > 0.0))
}

fn sum_cells(g: &Generator, cells: &[(Vec<f64>, f64)]) -> Result<f64> {
    if !g.has_recession() && !g.is_approximate() && needs_recession(cells) {
        return Err(Error::MissingRecession(g.name().to_string()));
    }
    Ok(cells.iter().map(|(t, u)| perspective_eval(g, t, *u)).sum())
}

/// D_f(P₁,…,P_k) summed over outcomes.
pub fn f_divergence<D: AsRef<[f64]>>(dists: &[D], g: &Generator) -> Result<f64> {
    let m = check_dists(dists, g)?;
    let k = dists.len();
    let cells: Vec<(Vec<f64>, f64)> = (0..m)
        .map(|x| ((0..k - 1).map(|i| dists[i].as_ref()[x]).collect(), dists[k - 1].as_ref()[x]))
        .collect();
    sum_cells(g, &cells)
}

/// Cell masses P_i(q⁻¹(z)) for each distribution, indexed `[i][z]`.
pub fn cell_masses<D: AsRef<[f64]>>(dists: &[D], q: &Quantizer) -> Result<Vec<Vec<f64>>> {
    let m = dists[0].as_ref().len();
    if q.len() != m {
        return Err(Error::Dimension(format!("quantizer covers {} outcomes, alphabet has {m}", q.len())));
    }
    let mut out = vec![vec![0.0; q.codes()]; dists.len()];
    for (i, d) in dists.iter().enumerate() {
        for (x, &p) in d.as_ref().iter().enumerate() {
            out[i][q.code(x)] += p;
        }
    }
    Ok(out)
}

/// Divergence of the pushforwards through a deterministic quantizer.
pub fn f_divergence_quantized<D: AsRef<[f64]>>(dists: &[D], g: &Generator, q: &Quantizer) -> Result<f64> {
    check_dists(dists, g)?;
    let masses = cell_masses(dists, q)?;
    let k = dists.len();
    let cells: Vec<(Vec<f64>, f64)> =
        (0..q.codes()).map(|z| ((0..k - 1).map(|i| masses[i][z]).collect(), masses[k - 1][z])).collect();
    sum_cells(g, &cells)
}

/// Row-stochastic matrix K(z|x), rows indexed by x.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    rows: Vec<Vec<f64>>,
}

impl MarkovKernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nz = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() || nz == 0 {
            return Err(Error::Dimension("empty kernel".into()));
        }
        for row in &rows {
            if row.len() != nz {
                return Err(Error::Dimension("kernel rows have different lengths".into()));
            }
            if row.iter().any(|&v| v < 0.0) {
                return Err(Error::NegativeEntry("kernel".into()));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::SumTolerance { what: "kernel row".into(), sum: s });
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(m: usize) -> Self {
        Self { rows: (0..m).map(|x| (0..m).map(|z| if x == z { 1.0 } else { 0.0 }).collect()).collect() }
    }

    /// Kernel of a deterministic quantizer.
    pub fn from_quantizer(q: &Quantizer) -> Self {
        Self {
            rows: (0..q.len())
                .map(|x| (0..q.codes()).map(|z| if q.code(x) == z { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn outputs(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Q_i(z) = Σ_x K(z|x) P_i(x).
pub fn kernel_pushforward<D: AsRef<[f64]>>(dists: &[D], k: &MarkovKernel) -> Result<Vec<Vec<f64>>> {
    dists
        .iter()
        .map(|d| {
            let d = d.as_ref();
            if d.len() != k.inputs() {
                return Err(Error::Dimension(format!("kernel has {} inputs, pmf has {}", k.inputs(), d.len())));
            }
            let mut out = vec![0.0; k.outputs()];
            for (x, &p) in d.iter().enumerate() {
                for (o, &kz) in out.iter_mut().zip(&k.rows[x]) {
                    *o += kz * p;
                }
            }
            Ok(out)
        })
        .collect()
}
