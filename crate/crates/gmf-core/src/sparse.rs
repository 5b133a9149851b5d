//! Compressed sparse row storage and the two products every Krylov
//! recursion in this crate consumes: `A x` and `A^T y`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GmfError, Result};

/// Dense real vector used for start vectors, Krylov basis vectors and actions.
pub type DenseVector = DVector<f64>;

/// Dense real matrix, column-major.
pub type DenseMatrix = DMatrix<f64>;

/// Sparse rectangular real matrix in canonical CSR form.
///
/// Canonical means: `row_offsets` is nondecreasing and starts at zero, column
/// indices inside each row are strictly increasing, and no stored value is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// An `nrows x ncols` matrix with no stored entries.
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_offsets: vec![0; nrows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a canonical matrix from `(row, col, value)` triples.
    ///
    /// Duplicate coordinates are summed and entries that end up exactly zero
    /// are dropped, so the result does not depend on the order of `triples`.
    pub fn from_coordinates(
        triples: &[(usize, usize, f64)],
        nrows: usize,
        ncols: usize,
    ) -> Result<Self> {
        for (index, &(row, col, value)) in triples.iter().enumerate() {
            if row >= nrows || col >= ncols {
                return Err(GmfError::Construction(format!(
                    "triple #{index} ({row}, {col}, {value}) lies outside a {nrows}x{ncols} matrix"
                )));
            }
            if !value.is_finite() {
                return Err(GmfError::Construction(format!(
                    "triple #{index} ({row}, {col}, {value}) has a non-finite value"
                )));
            }
        }

        let mut sorted: Vec<(usize, usize, f64)> = triples.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));

        let mut row_offsets = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());

        let mut i = 0;
        while i < sorted.len() {
            let (row, col, _) = sorted[i];
            // Sum duplicates in ascending value order so the total is independent
            // of the caller's triple order.
            let mut run: Vec<f64> = Vec::new();
            while i < sorted.len() && sorted[i].0 == row && sorted[i].1 == col {
                run.push(sorted[i].2);
                i += 1;
            }
            run.sort_by(f64::total_cmp);
            let sum: f64 = run.iter().sum();
            if sum != 0.0 {
                row_offsets[row + 1] += 1;
                col_indices.push(col);
                values.push(sum);
            }
        }
        for r in 0..nrows {
            row_offsets[r + 1] += row_offsets[r];
        }

        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Sparse copy of a dense matrix, dropping exact zeros.
    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let mut triples = Vec::new();
        for i in 0..dense.nrows() {
            for j in 0..dense.ncols() {
                let v = dense[(i, j)];
                if v != 0.0 {
                    triples.push((i, j, v));
                }
            }
        }
        Self::from_coordinates(&triples, dense.nrows(), dense.ncols())
            .expect("indices come from the dense shape")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(col, value)` over the stored entries of `row`.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[row]..self.row_offsets[row + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Iterates all stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut dense = DenseMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            dense[(r, c)] = v;
        }
        dense
    }

    /// Explicit transpose, still canonical.
    pub fn transpose(&self) -> Self {
        let triples: Vec<_> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_coordinates(&triples, self.ncols, self.nrows)
            .expect("transposed indices are in range")
    }

    /// `y = A x`, summing the stored products of each row in storage order.
    pub fn matvec(&self, x: &DenseVector) -> Result<DenseVector> {
        if x.len() != self.ncols {
            return Err(GmfError::DimensionMismatch {
                expected: self.ncols,
                found: x.len(),
                context: "matvec input",
            });
        }
        let mut y = DenseVector::zeros(self.nrows);
        self.matvec_into(x.as_slice(), y.as_mut_slice());
        Ok(y)
    }

    /// `x = A^T y` without forming the transpose.
    pub fn matvec_transpose(&self, y: &DenseVector) -> Result<DenseVector> {
        if y.len() != self.nrows {
            return Err(GmfError::DimensionMismatch {
                expected: self.nrows,
                found: y.len(),
                context: "matvec_transpose input",
            });
        }
        let mut x = DenseVector::zeros(self.ncols);
        self.matvec_transpose_into(y.as_slice(), x.as_mut_slice());
        Ok(x)
    }

    pub(crate) fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut sum = 0.0;
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                sum += self.values[k] * x[self.col_indices[k]];
            }
            *yr = sum;
        }
    }

    pub(crate) fn matvec_transpose_into(&self, y: &[f64], x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                x[self.col_indices[k]] += self.values[k] * yr;
            }
        }
    }

    /// `A M` for a dense block `M` with `ncols` rows.
    pub fn matmul_dense(&self, block: &DenseMatrix) -> Result<DenseMatrix> {
        if block.nrows() != self.ncols {
            return Err(GmfError::DimensionMismatch {
                expected: self.ncols,
                found: block.nrows(),
                context: "block product rows",
            });
        }
        let mut out = DenseMatrix::zeros(self.nrows, block.ncols());
        for j in 0..block.ncols() {
            let x = block.column(j);
            let mut col = out.column_mut(j);
            self.matvec_into(x.as_slice(), col.as_mut_slice());
        }
        Ok(out)
    }

    /// `A^T M` for a dense block `M` with `nrows` rows.
    pub fn matmul_transpose_dense(&self, block: &DenseMatrix) -> Result<DenseMatrix> {
        if block.nrows() != self.nrows {
            return Err(GmfError::DimensionMismatch {
                expected: self.nrows,
                found: block.nrows(),
                context: "transposed block product rows",
            });
        }
        let mut out = DenseMatrix::zeros(self.ncols, block.ncols());
        for j in 0..block.ncols() {
            let y = block.column(j);
            let mut col = out.column_mut(j);
            self.matvec_transpose_into(y.as_slice(), col.as_mut_slice());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(m: usize, n: usize, density: f64, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triples = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.gen::<f64>() < density {
                    triples.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        CsrMatrix::from_coordinates(&triples, m, n).unwrap()
    }

    #[test]
    fn empty_matrix_has_no_entries() {
        let a = CsrMatrix::from_coordinates(&[], 2, 2).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.row_offsets(), &[0, 0, 0]);
        let y = a.matvec(&DenseVector::from_vec(vec![3.0, -1.0])).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn single_edge_is_path_adjacency() {
        let a = CsrMatrix::from_coordinates(&[(0, 1, 1.0)], 2, 2).unwrap();
        assert_eq!(a.to_dense(), DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let y = a.matvec(&DenseVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(y.as_slice(), &[1.0, 0.0]);
        let x = a.matvec_transpose(&DenseVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(x.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let a = CsrMatrix::from_coordinates(&[(0, 0, 1.0), (0, 0, 2.0)], 1, 1).unwrap();
        assert_eq!(a.values(), &[3.0]);
        let b = CsrMatrix::from_coordinates(&[(0, 0, 1.0), (0, 0, -1.0), (1, 0, 0.0)], 2, 1)
            .unwrap();
        assert_eq!(b.nnz(), 0);
    }

    #[test]
    fn out_of_bounds_triple_is_named() {
        let err = CsrMatrix::from_coordinates(&[(0, 0, 1.0), (2, 0, 5.0)], 2, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("#1") && msg.contains("(2, 0, 5)"), "{msg}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = CsrMatrix::zeros(3, 2);
        assert!(a.matvec(&DenseVector::zeros(3)).is_err());
        assert!(a.matvec_transpose(&DenseVector::zeros(2)).is_err());
    }

    #[test]
    fn products_match_dense_oracle() {
        let a = random_sparse(50, 30, 0.2, 7);
        let dense = a.to_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DenseVector::from_fn(30, |_, _| rng.gen_range(-1.0..1.0));
        let y = DenseVector::from_fn(50, |_, _| rng.gen_range(-1.0..1.0));

        let ax = a.matvec(&x).unwrap();
        let ax_ref = &dense * &x;
        assert!((&ax - &ax_ref).norm() <= 1e-14 * ax_ref.norm());

        let aty = a.matvec_transpose(&y).unwrap();
        let aty_ref = dense.transpose() * &y;
        assert!((&aty - &aty_ref).norm() <= 1e-14 * aty_ref.norm());
    }

    #[test]
    fn symmetric_matrix_products_coincide() {
        let triples = [(0, 1, 2.0), (1, 0, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 4.0)];
        let a = CsrMatrix::from_coordinates(&triples, 3, 3).unwrap();
        let y = DenseVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_eq!(a.matvec(&y).unwrap(), a.matvec_transpose(&y).unwrap());
    }

    #[test]
    fn block_products_match_columnwise() {
        let a = random_sparse(12, 9, 0.3, 3);
        let block = DenseMatrix::from_fn(9, 3, |i, j| (i as f64 - j as f64) * 0.25);
        let ab = a.matmul_dense(&block).unwrap();
        assert!((ab - a.to_dense() * &block).norm() < 1e-13);
        let left = DenseMatrix::from_fn(12, 2, |i, j| (i * j) as f64 * 0.1 - 0.3);
        let atl = a.matmul_transpose_dense(&left).unwrap();
        assert!((atl - a.to_dense().transpose() * &left).norm() < 1e-13);
    }
}
