use rayon::prelude::*;

use crate::scalar::Real;

use super::dense::DenseMatrix;

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> Csr<T> {
    /// Sums duplicate entries. Triplets are stably sorted first, so the
    /// summation order depends only on the input order.
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < rows && j < cols, "triplet ({i}, {j}) outside {rows}x{cols}");
            if last == Some((i, j)) {
                *values.last_mut().expect("entry exists") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { rows, cols, row_ptr, col_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, T::one())).collect())
    }

    pub fn from_dense(a: &DenseMatrix<T>) -> Self {
        let mut t = Vec::new();
        for i in 0..a.rows {
            for j in 0..a.cols {
                if a[(i, j)] != T::zero() {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.rows, a.cols, t)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, i)).collect()
    }

    pub fn row_dot(&self, i: usize, x: &[T]) -> T {
        self.row(i).map(|(j, v)| v * x[j]).sum()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        if self.nnz() > 20_000 {
            (0..self.rows).into_par_iter().map(|i| self.row_dot(i, x)).collect()
        } else {
            (0..self.rows).map(|i| self.row_dot(i, x)).collect()
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self { values: self.values.iter().map(|&v| v * alpha).collect(), ..self.clone() }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.rows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    /// `self + other`, same shape.
    pub fn add(&self, other: &Self) -> Self {
        let mut t = self.triplets();
        t.extend(other.triplets());
        Self::from_triplets(self.rows, self.cols, t)
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Principal submatrix on `idx` (sorted indices).
    pub fn submatrix(&self, idx: &[usize]) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (j, v) in self.row(i) {
                if let Ok(b) = idx.binary_search(&j) {
                    d[(a, b)] = v;
                }
            }
        }
        d
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|` over stored entries.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn quadratic_form(&self, x: &[T]) -> T {
        (0..self.rows).map(|i| x[i] * self.row_dot(i, x)).sum()
    }
}
