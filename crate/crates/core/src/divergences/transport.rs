//! Nonnegative matrices with prescribed row and column sums.
//!
//! Sort a and b descending. If a_m ≤ b_m, put z_mm = a_m and z_1m = b_m − a_m,
//! clear the rest of row and column m, and recurse on
//! (a₁ + a_m − b_m, a₂, …, a_{m−1}) against (b₁, …, b_{m−1}); the other case
//! is the transpose. Since a₁ ≥ mean(a) = mean(b) ≥ b_m the reduced problem
//! stays nonnegative.

use crate::error::{Error, Result};

/// Row sums a, column sums b, all entries ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMatrix {
    pub z: Vec<Vec<f64>>,
}

impl TransportMatrix {
    pub fn row_sums(&self) -> Vec<f64> {
        self.z.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let m = self.z.len();
        (0..m).map(|j| self.z.iter().map(|r| r[j]).sum()).collect()
    }
}

fn desc_order(v: &[f64], idx: &mut [usize]) {
    idx.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
}

/// Feasible transport plan between equal-mass vectors a and b.
pub fn transport_matrix(a: &[f64], b: &[f64]) -> Result<TransportMatrix> {
    let m = a.len();
    if m == 0 || b.len() != m {
        return Err(Error::Dimension(format!("transport sizes {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|&v| v < 0.0) {
        return Err(Error::NegativeEntry("transport marginal".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("transport marginal".into()));
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > 1e-9 {
        return Err(Error::SumTolerance { what: "transport marginal difference".into(), sum: sa - sb });
    }

    let mut ra = a.to_vec();
    let mut rb = b.to_vec();
    let mut rows: Vec<usize> = (0..m).collect();
    let mut cols: Vec<usize> = (0..m).collect();
    let mut z = vec![vec![0.0; m]; m];
    while rows.len() > 1 {
        desc_order(&ra, &mut rows);
        desc_order(&rb, &mut cols);
        let (i1, im) = (rows[0], rows[rows.len() - 1]);
        let (j1, jm) = (cols[0], cols[cols.len() - 1]);
        if ra[im] <= rb[jm] {
            z[im][jm] = ra[im];
            let excess = rb[jm] - ra[im];
            z[i1][jm] = excess;
            ra[i1] = (ra[i1] - excess).max(0.0);
        } else {
            z[im][jm] = rb[jm];
            let excess = ra[im] - rb[jm];
            z[im][j1] = excess;
            rb[j1] = (rb[j1] - excess).max(0.0);
        }
        rows.pop();
        cols.pop();
    }
    z[rows[0]][cols[0]] = ra[rows[0]];
    Ok(TransportMatrix { z })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry() {
        assert_eq!(transport_matrix(&[1.0], &[1.0]).unwrap().z, vec![vec![1.0]]);
    }

    #[test]
    fn two_by_two_examples() {
        // Sorted a = (2, 1), sorted b = (2, 1) with b's order (1, 0):
        // a_2 = 1 ≤ b_2 = 1 puts z(row 1, col 0) = 1, then z(row 0, col 1) = 2.
        let t = transport_matrix(&[2.0, 1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(t.z, vec![vec![0.0, 2.0], vec![1.0, 0.0]]);
        let t = transport_matrix(&[0.0, 3.0], &[3.0, 0.0]).unwrap();
        assert_eq!(t.z, vec![vec![0.0, 0.0], vec![3.0, 0.0]]);
    }

    #[test]
    fn rejects_bad_marginals() {
        assert!(transport_matrix(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(transport_matrix(&[-1.0, 2.0], &[0.5, 0.5]).is_err());
    }
}
