//! Compressed sparse row storage and the kernels the preconditioners need.
//!
//! Column indices are kept sorted within each row and explicit zeros that
//! arise from assembly or cancellation are retained, so the pattern of a
//! product or sum depends only on the operand patterns.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest number of entries [`SparseMatrix::to_dense`] will expand.
pub const DENSE_BUDGET: usize = 4_000_000;

/// Sparse matrix in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// Row-major dense matrix used by the small-scale oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, checking every storage invariant.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::dims(
                "csr row offsets",
                n_rows + 1,
                row_offsets.len(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(Error::dims("csr values", col_indices.len(), values.len()));
        }
        if row_offsets[0] != 0 || row_offsets[n_rows] != values.len() {
            return Err(Error::Invalid(
                "row offsets must span the stored values".into(),
            ));
        }
        for i in 0..n_rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::Invalid(format!("row offsets decrease at row {i}")));
            }
            let cols = &col_indices[lo..hi];
            if cols.iter().any(|&c| c >= n_cols) {
                return Err(Error::Invalid(format!(
                    "column index out of range in row {i}"
                )));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Invalid(format!(
                    "columns of row {i} are not strictly increasing"
                )));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub(crate) fn from_parts_unchecked(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_offsets.len(), n_rows + 1);
        Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Assembles from (row, col, value) triplets; duplicates are summed and
    /// zeros are kept as stored entries.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(i, j, _) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Invalid(format!(
                    "triplet ({i}, {j}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            counts[i + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }

        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n_rows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|e| e.0);
            for &(j, v) in &scratch {
                if col_indices.len() > row_offsets[i] && *col_indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self::from_parts_unchecked(
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::from_parts_unchecked(n_rows, n_cols, vec![0; n_rows + 1], Vec::new(), Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self::from_parts_unchecked(n, n, (0..=n).collect(), (0..n).collect(), d.to_vec())
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
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

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Stored value at (i, j), or zero when the entry is not in the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over stored `(row, col, value)` entries in row order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    /// y = M x.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::dims("spmv", self.n_cols, x.len()));
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// Writes M x into `y`, overwriting it.
    #[inline]
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        }
    }

    /// y += s M x.
    #[inline]
    pub fn spmv_acc(&self, s: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi += s * acc;
        }
    }

    /// y = Mᵀ x without forming the transpose.
    pub fn spmv_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::dims("spmv_t", self.n_rows, x.len()));
        }
        let mut y = vec![0.0; self.n_cols];
        self.spmv_t_into(x, &mut y);
        Ok(y)
    }

    /// Writes Mᵀ x into `y`, overwriting it.
    #[inline]
    pub fn spmv_t_into(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        self.spmv_t_acc(1.0, x, y);
    }

    /// y += s Mᵀ x.
    #[inline]
    pub fn spmv_t_acc(&self, s: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows);
        debug_assert_eq!(y.len(), self.n_cols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let sx = s * xi;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                y[self.col_indices[k]] += self.values[k] * sx;
            }
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (rc, rv) = self.row(i);
            for (&j, &v) in rc.iter().zip(rv) {
                cols[next[j]] = i;
                vals[next[j]] = v;
                next[j] += 1;
            }
        }
        Self::from_parts_unchecked(self.n_cols, self.n_rows, counts, cols, vals)
    }

    /// Sparse product `self * rhs` (row-by-row Gustavson accumulation).
    pub fn spgemm(&self, rhs: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_cols != rhs.n_rows {
            return Err(Error::dims("spgemm", self.n_cols, rhs.n_rows));
        }
        let n = rhs.n_cols;
        let mut marker = vec![usize::MAX; n];
        let mut acc = vec![0.0; n];
        let mut pattern: Vec<usize> = Vec::new();
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..self.n_rows {
            pattern.clear();
            let (lc, lv) = self.row(i);
            for (&k, &a) in lc.iter().zip(lv) {
                let (rc, rv) = rhs.row(k);
                for (&j, &b) in rc.iter().zip(rv) {
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = 0.0;
                        pattern.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                col_indices.push(j);
                values.push(acc[j]);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self::from_parts_unchecked(
            self.n_rows,
            n,
            row_offsets,
            col_indices,
            values,
        ))
    }

    /// `self + s * rhs` on the union of both patterns.
    pub fn add_scaled(&self, s: f64, rhs: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_rows != rhs.n_rows {
            return Err(Error::dims("add_scaled rows", self.n_rows, rhs.n_rows));
        }
        if self.n_cols != rhs.n_cols {
            return Err(Error::dims("add_scaled cols", self.n_cols, rhs.n_cols));
        }
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz() + rhs.nnz());
        let mut values = Vec::with_capacity(self.nnz() + rhs.nnz());
        row_offsets.push(0);
        for i in 0..self.n_rows {
            let (ac, av) = self.row(i);
            let (bc, bv) = rhs.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                let ja = ac.get(p).copied().unwrap_or(usize::MAX);
                let jb = bc.get(q).copied().unwrap_or(usize::MAX);
                if ja < jb {
                    col_indices.push(ja);
                    values.push(av[p]);
                    p += 1;
                } else if jb < ja {
                    col_indices.push(jb);
                    values.push(s * bv[q]);
                    q += 1;
                } else {
                    col_indices.push(ja);
                    values.push(av[p] + s * bv[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self::from_parts_unchecked(
            self.n_rows,
            self.n_cols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    /// Main diagonal, zero where no diagonal entry is stored.
    pub fn diagonal_of(&self) -> Result<Vec<f64>> {
        if !self.is_square() {
            return Err(Error::NotSquare("diagonal_of", self.n_rows, self.n_cols));
        }
        Ok((0..self.n_rows).map(|i| self.get(i, i)).collect())
    }

    /// Multiplies row `i` by `d[i]`, i.e. returns diag(d) M.
    pub fn scale_rows(&self, d: &[f64]) -> Result<SparseMatrix> {
        if d.len() != self.n_rows {
            return Err(Error::dims("scale_rows", self.n_rows, d.len()));
        }
        let mut out = self.clone();
        for i in 0..self.n_rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                out.values[k] *= d[i];
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> SparseMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Sum of absolute values per row.
    pub fn row_abs_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum())
            .collect()
    }

    /// Infinity norm (largest absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        self.row_abs_sums().into_iter().fold(0.0, f64::max)
    }

    /// Largest |M_ij - M_ji| over the union pattern.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let t = self.transpose();
        match self.add_scaled(-1.0, &t) {
            Ok(d) => d.max_abs(),
            Err(_) => f64::INFINITY,
        }
    }

    /// True when every stored off-diagonal entry is exactly zero.
    pub fn is_diagonal(&self) -> bool {
        self.is_square() && self.iter().all(|(i, j, v)| i == j || v == 0.0)
    }

    /// Symmetric permutation `P M Pᵀ`, where `perm[new] = old`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Result<SparseMatrix> {
        if !self.is_square() {
            return Err(Error::NotSquare(
                "permute_symmetric",
                self.n_rows,
                self.n_cols,
            ));
        }
        if perm.len() != self.n_rows {
            return Err(Error::dims("permute_symmetric", self.n_rows, perm.len()));
        }
        let mut inv = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for &old in perm {
            let (cols, vals) = self.row(old);
            scratch.clear();
            scratch.extend(cols.iter().zip(vals).map(|(&j, &v)| (inv[j], v)));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(j, v) in &scratch {
                col_indices.push(j);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self::from_parts_unchecked(
            self.n_rows,
            self.n_cols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    /// Zeroes every stored entry of row `i` except the diagonal.
    pub(crate) fn clear_row_keep_diagonal(&mut self, i: usize) {
        for k in self.row_offsets[i]..self.row_offsets[i + 1] {
            if self.col_indices[k] != i {
                self.values[k] = 0.0;
            }
        }
    }

    /// Zeroes every stored entry of row `i`.
    pub(crate) fn clear_row(&mut self, i: usize) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        self.values[lo..hi].fill(0.0);
    }

    /// Zeroes column entries `M[i][j]` for all rows i != j where `mask[j]`.
    pub(crate) fn clear_columns_off_diagonal(&mut self, mask: &[bool]) {
        for i in 0..self.n_rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                let j = self.col_indices[k];
                if mask[j] && j != i {
                    self.values[k] = 0.0;
                }
            }
        }
    }

    /// Removes explicitly stored zeros.
    pub(crate) fn drop_zeros(&self) -> SparseMatrix {
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_offsets.push(0);
        for i in 0..self.n_rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                if self.values[k] != 0.0 {
                    col_indices.push(self.col_indices[k]);
                    values.push(self.values[k]);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self::from_parts_unchecked(self.n_rows, self.n_cols, row_offsets, col_indices, values)
    }

    /// Exact dense expansion, guarded by [`DENSE_BUDGET`].
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let size = self.n_rows.saturating_mul(self.n_cols);
        if size > DENSE_BUDGET {
            return Err(Error::OracleBudget {
                rows: self.n_rows,
                cols: self.n_cols,
                budget: DENSE_BUDGET,
            });
        }
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.iter() {
            d.values[i * self.n_cols + j] = v;
        }
        Ok(d)
    }
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_row_major(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::dims("dense matrix", n_rows * n_cols, values.len()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n_cols + j] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::dims("dense matvec", self.n_cols, x.len()));
        }
        Ok(self
            .values
            .chunks(self.n_cols.max(1))
            .take(self.n_rows)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Sparse copy keeping only non-zero entries.
    pub fn to_sparse(&self) -> SparseMatrix {
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                let v = self.get(i, j);
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix::from_parts_unchecked(
            self.n_rows,
            self.n_cols,
            row_offsets,
            col_indices,
            values,
        )
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n_rows, self.n_cols, &self.values)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        let mut values = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                values.push(m[(i, j)]);
            }
        }
        Self {
            n_rows: r,
            n_cols: c,
            values,
        }
    }
}

/// Euclidean inner product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += s x.
#[inline]
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}
