//! Experiments whose two quantizers reproduce prescribed column sums.
//!
//! Given matrices A, B with equal row sums, build an experiment on
//! X = [M]×[M] such that the row projection q1 and the column projection q2
//! see exactly the columns of (extended) A and B:
//!
//! - generator mode: columns live in R₊^{k−1}; P_l is a transport plan with
//!   marginals a_l/M and b_l/M, P_k is uniform, and the quantized divergence
//!   under q1 is (1/M) Σ_j f(a_j).
//! - uncertainty mode: columns live in Δ_k; under a uniform prior
//!   P_l(i,j) = (k/M)² a_{l,i} b_{l,j}, and the posterior of cell i under q1
//!   is a_i, so the quantized information is U(1/k) − (1/M) Σ_i U(a_i).

use super::{f_divergence_quantized, make_generator, transport_matrix};
use crate::error::{Error, Result};
use crate::experiment::DiscreteExperiment;
use crate::quantize::{quantized_posteriors, Quantizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderMode {
    Generator,
    Uncertainty,
}

/// Experiment on [M]×[M] (flattened as i·M + j) with its two projections.
#[derive(Debug, Clone)]
pub struct OrderInstance {
    pub experiment: DiscreteExperiment,
    pub q1: Quantizer,
    pub q2: Quantizer,
    /// Extended A, indexed `[row][column]`, M columns.
    pub a_ext: Vec<Vec<f64>>,
    pub b_ext: Vec<Vec<f64>>,
    pub scale: usize,
    pub mode: OrderMode,
}

impl OrderInstance {
    /// Column j of an extended matrix.
    pub fn column(mat: &[Vec<f64>], j: usize) -> Vec<f64> {
        mat.iter().map(|r| r[j]).collect()
    }
}

fn check_shapes(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(usize, usize)> {
    let rows = a.len();
    if rows == 0 || b.len() != rows {
        return Err(Error::Dimension("A and B need the same nonzero number of rows".into()));
    }
    let m = a[0].len();
    if m == 0 || a.iter().chain(b).any(|r| r.len() != m) {
        return Err(Error::Dimension("A and B need the same nonzero number of columns".into()));
    }
    if a.iter().chain(b).flatten().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::NegativeEntry("order-instance matrix".into()));
    }
    for (ra, rb) in a.iter().zip(b) {
        let (sa, sb): (f64, f64) = (ra.iter().sum(), rb.iter().sum());
        if (sa - sb).abs() > 1e-9 * (1.0 + sa.abs()) {
            return Err(Error::InvalidArgument(format!("row sums differ: {sa} vs {sb}")));
        }
    }
    Ok((rows, m))
}

fn projections(big_m: usize) -> (Quantizer, Quantizer) {
    let n = big_m * big_m;
    let q1 = Quantizer::new((0..n).map(|x| x / big_m).collect(), big_m).expect("row projection");
    let q2 = Quantizer::new((0..n).map(|x| x % big_m).collect(), big_m).expect("column projection");
    (q1, q2)
}

/// Build the instance and verify its defining identity (to 1e-10).
pub fn build_order_instance(a: &[Vec<f64>], b: &[Vec<f64>], mode: OrderMode) -> Result<OrderInstance> {
    let (rows, m) = check_shapes(a, b)?;
    match mode {
        OrderMode::Generator => build_generator_mode(a, b, rows, m),
        OrderMode::Uncertainty => build_uncertainty_mode(a, b, rows, m),
    }
}

fn build_generator_mode(a: &[Vec<f64>], b: &[Vec<f64>], rows: usize, m: usize) -> Result<OrderInstance> {
    let k = rows + 1;
    let max_sum = a.iter().map(|r| r.iter().sum::<f64>()).fold(0.0, f64::max);
    let big_m = (max_sum.max(m as f64)).floor() as usize + 1;
    let extend = |mat: &[Vec<f64>]| -> Vec<Vec<f64>> {
        mat.iter()
            .map(|r| {
                let mut e = r.clone();
                e.push(big_m as f64 - r.iter().sum::<f64>());
                e.resize(big_m, 0.0);
                e
            })
            .collect()
    };
    let a_ext = extend(a);
    let b_ext = extend(b);
    let n = big_m * big_m;
    let scale = big_m as f64;
    let mut conditionals = Vec::with_capacity(k);
    for l in 0..rows {
        let al: Vec<f64> = a_ext[l].iter().map(|v| v / scale).collect();
        let bl: Vec<f64> = b_ext[l].iter().map(|v| v / scale).collect();
        let z = transport_matrix(&al, &bl)?;
        conditionals.push(z.z.into_iter().flatten().collect::<Vec<f64>>());
    }
    conditionals.push(vec![1.0 / n as f64; n]);
    let experiment = DiscreteExperiment::with_uniform_prior(conditionals)?;
    let (q1, q2) = projections(big_m);
    let inst = OrderInstance { experiment, q1, q2, a_ext, b_ext, scale: big_m, mode: OrderMode::Generator };

    let tv = make_generator("tv", k)?;
    for (q, ext) in [(&inst.q1, &inst.a_ext), (&inst.q2, &inst.b_ext)] {
        let lhs = f_divergence_quantized(inst.experiment.conditionals(), &tv, q)?;
        let rhs: f64 = (0..big_m).map(|j| tv.eval(&OrderInstance::column(ext, j))).sum::<f64>() / scale;
        if (lhs - rhs).abs() > 1e-10 * (1.0 + rhs.abs()) {
            return Err(Error::Precondition(format!("instance identity failed: {lhs} vs {rhs}")));
        }
    }
    Ok(inst)
}

fn build_uncertainty_mode(a: &[Vec<f64>], b: &[Vec<f64>], k: usize, m: usize) -> Result<OrderInstance> {
    if k < 2 {
        return Err(Error::InvalidArgument("uncertainty mode needs k ≥ 2 rows".into()));
    }
    for mat in [a, b] {
        for j in 0..m {
            let s: f64 = mat.iter().map(|r| r[j]).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("column {} sums to {s}, not in the simplex", j + 1)));
            }
        }
    }
    let kf = k as f64;
    let v: Vec<f64> = a.iter().map(|r| r.iter().sum::<f64>() / m as f64).collect();
    let vmax = v.iter().cloned().fold(0.0, f64::max);
    // Tiny slack keeps exact integers from rounding up.
    let m0 = ((kf * vmax - 1.0 - 1e-12).ceil().max(1.0)) as usize;
    let m0f = m0 as f64;
    let v0: Vec<f64> = v.iter().map(|&vi| ((1.0 + 1.0 / m0f) / kf - vi / m0f).max(0.0)).collect();
    let big_m = (m0 + 1) * m;
    let extend = |mat: &[Vec<f64>]| -> Vec<Vec<f64>> {
        mat.iter()
            .zip(&v0)
            .map(|(r, &fill)| {
                let mut e = r.clone();
                e.resize(big_m, fill);
                e
            })
            .collect()
    };
    let a_ext = extend(a);
    let b_ext = extend(b);
    let c = kf / big_m as f64;
    let n = big_m * big_m;
    let conditionals: Vec<Vec<f64>> = (0..k)
        .map(|l| {
            let mut row = Vec::with_capacity(n);
            for i in 0..big_m {
                for j in 0..big_m {
                    row.push(c * a_ext[l][i] * c * b_ext[l][j]);
                }
            }
            row
        })
        .collect();
    let experiment = DiscreteExperiment::with_uniform_prior(conditionals)?;
    let (q1, q2) = projections(big_m);
    let inst = OrderInstance { experiment, q1, q2, a_ext, b_ext, scale: big_m, mode: OrderMode::Uncertainty };

    for (q, ext) in [(&inst.q1, &inst.a_ext), (&inst.q2, &inst.b_ext)] {
        let cells = quantized_posteriors(&inst.experiment, q)?;
        for (i, (_, post)) in cells.iter().enumerate() {
            let want = OrderInstance::column(ext, i);
            let post = post.as_ref().ok_or_else(|| Error::Precondition("empty instance cell".into()))?;
            if post.iter().zip(&want).any(|(p, w)| (p - w).abs() > 1e-10) {
                return Err(Error::Precondition(format!("cell {i} posterior does not match its column")));
            }
        }
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergences::make_generator;

    #[test]
    fn generator_mode_single_column() {
        let inst = build_order_instance(&[vec![2.0]], &[vec![2.0]], OrderMode::Generator).unwrap();
        assert_eq!(inst.scale, 3);
        assert_eq!(inst.a_ext, vec![vec![2.0, 1.0, 0.0]]);
        for name in ["kl", "tv", "hellinger-sq", "pearson"] {
            let g = make_generator(name, 2).unwrap();
            let lhs = f_divergence_quantized(inst.experiment.conditionals(), &g, &inst.q1).unwrap();
            let rhs = (g.eval(&[2.0]) + g.eval(&[1.0]) + g.eval(&[0.0])) / 3.0;
            assert!((lhs - rhs).abs() < 1e-12, "{name}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn equal_matrices_give_equal_statistics() {
        let a = vec![vec![0.5, 1.5, 0.2], vec![1.0, 0.0, 0.3]];
        let inst = build_order_instance(&a, &a, OrderMode::Generator).unwrap();
        let g = make_generator("kl", 3).unwrap();
        let d1 = f_divergence_quantized(inst.experiment.conditionals(), &g, &inst.q1).unwrap();
        let d2 = f_divergence_quantized(inst.experiment.conditionals(), &g, &inst.q2).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn uncertainty_mode_cell_posteriors() {
        let a = vec![vec![0.7, 0.3], vec![0.3, 0.7]];
        let b = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let inst = build_order_instance(&a, &b, OrderMode::Uncertainty).unwrap();
        // v = (0.5, 0.5), M0 = 1, v0 = (0.5, 0.5), M = 4.
        assert_eq!(inst.scale, 4);
        let cells = quantized_posteriors(&inst.experiment, &inst.q1).unwrap();
        let want = [[0.7, 0.3], [0.3, 0.7], [0.5, 0.5], [0.5, 0.5]];
        for (cell, w) in cells.iter().zip(want) {
            let p = cell.1.as_ref().unwrap();
            assert!((p[0] - w[0]).abs() < 1e-12 && (p[1] - w[1]).abs() < 1e-12);
            assert!((cell.0 - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_row_sums_are_rejected() {
        assert!(build_order_instance(&[vec![1.0]], &[vec![2.0]], OrderMode::Generator).is_err());
        let a = vec![vec![0.7], vec![0.3]];
        let b = vec![vec![0.6], vec![0.4]];
        assert!(build_order_instance(&a, &b, OrderMode::Uncertainty).is_err());
    }
}
