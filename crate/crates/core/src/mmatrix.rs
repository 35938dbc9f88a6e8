//! Sparse LU factorisation of Z-matrices (nonpositive off-diagonal entries)
//! without pivoting.
//!
//! A Z-matrix is a nonsingular M-matrix exactly when every pivot of its
//! unpivoted LU factorisation is positive, and the factorisation is stable
//! in that case. `mu I - M` with `mu > rho(M)` and `I - A` with
//! `rho(A) < 1` are the systems solved here.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

/// Row-compressed sparse square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        SparseRows { n, rows }
    }

    /// Builds from rows of `(column, value)` pairs; duplicates are summed.
    pub fn from_rows(n: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }
        SparseRows { n, rows }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `shift I - self`.
    pub fn shifted_negation(&self, shift: f64) -> SparseRows {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut out: Vec<(usize, f64)> = r.iter().map(|&(j, v)| (j, -v)).collect();
                match out.binary_search_by_key(&i, |&(j, _)| j) {
                    Ok(pos) => out[pos].1 += shift,
                    Err(pos) => out.insert(pos, (i, shift)),
                }
                out
            })
            .collect();
        SparseRows { n: self.n, rows }
    }
}

/// Unpivoted LU factors: `lower` holds the strictly lower multipliers,
/// `upper` the upper triangle including the diagonal.
#[derive(Clone, Debug)]
pub struct MMatrixLu {
    lower: Vec<Vec<(usize, f64)>>,
    upper: Vec<Vec<(usize, f64)>>,
    min_pivot: f64,
}

/// The factorisation met a nonpositive pivot: the matrix is not a
/// nonsingular M-matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotMMatrix {
    pub row: usize,
    pub pivot: f64,
}

impl MMatrixLu {
    pub fn factor(a: &SparseRows) -> Result<Self, NotMMatrix> {
        let n = a.n;
        let mut lower: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut upper: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut work = vec![0.0f64; n];
        let mut present = vec![false; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut min_pivot = f64::INFINITY;
        for i in 0..n {
            let mut pending: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
            for &(j, v) in &a.rows[i] {
                work[j] = v;
                present[j] = true;
                touched.push(j);
                if j < i {
                    pending.push(Reverse(j));
                }
            }
            let mut l_row = Vec::new();
            while let Some(Reverse(j)) = pending.pop() {
                let factor = work[j] / upper[j][0].1;
                work[j] = 0.0;
                if factor == 0.0 {
                    continue;
                }
                l_row.push((j, factor));
                for &(c, u) in &upper[j][1..] {
                    if !present[c] {
                        present[c] = true;
                        touched.push(c);
                        if c < i {
                            pending.push(Reverse(c));
                        }
                    }
                    work[c] -= factor * u;
                }
            }
            let pivot = work[i];
            if !pivot.is_finite() || pivot <= 0.0 {
                return Err(NotMMatrix { row: i, pivot });
            }
            min_pivot = min_pivot.min(pivot);
            let mut u_row: Vec<(usize, f64)> = vec![(i, pivot)];
            touched.sort_unstable();
            for &c in &touched {
                if c > i && work[c] != 0.0 {
                    u_row.push((c, work[c]));
                }
                work[c] = 0.0;
                present[c] = false;
            }
            touched.clear();
            lower.push(l_row);
            upper.push(u_row);
        }
        Ok(MMatrixLu {
            lower,
            upper,
            min_pivot,
        })
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.upper.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = self.lower[i].iter().map(|&(j, l)| l * y[j]).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.upper[i];
            let s: f64 = row[1..].iter().map(|&(j, u)| u * y[j]).sum();
            y[i] = (y[i] - s) / row[0].1;
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn detects_non_m_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let a = SparseRows::from_dense(&m).shifted_negation(1.0);
        assert!(MMatrixLu::factor(&a).is_err());
        let a = SparseRows::from_dense(&m).shifted_negation(2.5);
        let lu = MMatrixLu::factor(&a).unwrap();
        let x = lu.solve(&[1.0, 1.0]);
        assert_relative_eq!(x[0], 2.0, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn matches_dense_solve(entries in proptest::collection::vec(0.0f64..1.0, 36), sparsity in 0.0f64..0.8) {
            let n = 6;
            let m = DMatrix::from_fn(n, n, |i, j| {
                let v = entries[i * n + j];
                if v < sparsity { 0.0 } else { v }
            });
            let rho = crate::spectral::spectral_radius(&m, 1e-12).unwrap();
            let shift = rho * 1.1 + 0.1;
            let a = SparseRows::from_dense(&m).shifted_negation(shift);
            let lu = MMatrixLu::factor(&a).unwrap();
            let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            let x = lu.solve(&b);
            let mut dense = -m.clone();
            for d in 0..n { dense[(d, d)] += shift; }
            let want = dense.lu().solve(&nalgebra::DVector::from_column_slice(&b)).unwrap();
            for i in 0..n {
                prop_assert!((x[i] - want[i]).abs() <= 1e-9 * want[i].abs().max(1.0));
                prop_assert!(x[i] > 0.0);
            }
        }
    }
}
