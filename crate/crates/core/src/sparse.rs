//! Compressed row storage and sparse matrix-vector products.
//!
//! Each row keeps a `(column, value)` tuple per non-zero entry. A transition
//! matrix is stored by next-state rows, so [`CsrMatrix::spmv`] computes the
//! forward update directly without a transpose.

use crate::dist::Distribution;
use crate::error::{check_dim, Error, Result};
use crate::hmm::{normalize_evidence, ForwardMessage};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_starts: Vec<usize>,
    entries: Vec<(usize, f64)>,
}

impl CsrMatrix {
    /// Assembles a matrix from raw parts, checking every structural invariant.
    pub fn from_parts(n_rows: usize, n_cols: usize, row_starts: Vec<usize>, entries: Vec<(usize, f64)>) -> Result<Self> {
        if row_starts.len() != n_rows + 1 {
            return Err(Error::InvalidModel(format!("row_starts has {} entries, expected {}", row_starts.len(), n_rows + 1)));
        }
        if row_starts[0] != 0 || row_starts[n_rows] != entries.len() {
            return Err(Error::InvalidModel("row_starts must run from 0 to the entry count".into()));
        }
        if row_starts.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidModel("row_starts is decreasing".into()));
        }
        for (i, w) in row_starts.windows(2).enumerate() {
            let row = &entries[w[0]..w[1]];
            if row.windows(2).any(|e| e[0].0 >= e[1].0) {
                return Err(Error::InvalidModel(format!("row {i} column indices are not strictly increasing")));
            }
            if let Some(&(c, x)) = row.iter().find(|(c, x)| *c >= n_cols || *x == 0.0 || !x.is_finite()) {
                return Err(Error::InvalidModel(format!("row {i} has invalid entry ({c}, {x})")));
            }
        }
        Ok(Self { n_rows, n_cols, row_starts, entries })
    }

    /// Drops entries with `|x| <= zero_tol`; everything else is copied exactly.
    pub fn from_dense(m: &DenseMatrix, zero_tol: f64) -> Self {
        let mut row_starts = Vec::with_capacity(m.n_rows() + 1);
        let mut entries = Vec::new();
        row_starts.push(0);
        for row in m.rows() {
            entries.extend(row.iter().enumerate().filter(|(_, x)| x.abs() > zero_tol).map(|(c, &x)| (c, x)));
            row_starts.push(entries.len());
        }
        Self { n_rows: m.n_rows(), n_cols: m.n_cols(), row_starts, entries }
    }

    /// Builds the matrix from sparse columns given as `(row, value)` lists.
    /// Zero values are skipped.
    pub fn from_sparse_columns(n_rows: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self> {
        let n_cols = columns.len();
        let mut counts = vec![0usize; n_rows];
        for col in columns {
            for &(r, x) in col {
                if r >= n_rows {
                    return Err(Error::DimensionMismatch { expected: n_rows, found: r + 1 });
                }
                if x != 0.0 {
                    counts[r] += 1;
                }
            }
        }
        let mut row_starts = Vec::with_capacity(n_rows + 1);
        row_starts.push(0);
        for c in &counts {
            row_starts.push(row_starts.last().unwrap() + c);
        }
        let mut cursor = row_starts[..n_rows].to_vec();
        let mut entries = vec![(0usize, 0.0f64); row_starts[n_rows]];
        // Columns are visited in ascending order, so each row fills up sorted.
        for (c, col) in columns.iter().enumerate() {
            for &(r, x) in col.iter().filter(|(_, x)| *x != 0.0) {
                entries[cursor[r]] = (c, x);
                cursor[r] += 1;
            }
        }
        Self::from_parts(n_rows, n_cols, row_starts, entries)
    }

    pub fn identity(n: usize) -> Self {
        Self { n_rows: n, n_cols: n, row_starts: (0..=n).collect(), entries: (0..n).map(|i| (i, 1.0)).collect() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row_starts(&self) -> &[usize] {
        &self.row_starts
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.entries[self.row_starts[i]..self.row_starts[i + 1]]
    }

    /// Fraction of zero entries.
    pub fn sparsity(&self) -> f64 {
        let total = self.n_rows * self.n_cols;
        if total == 0 {
            return 0.0;
        }
        1.0 - self.nnz() as f64 / total as f64
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for &(c, x) in self.row(i) {
                m.set(i, c, x);
            }
        }
        m
    }

    pub fn spmv(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_rows];
        self.spmv_into(v, &mut out)?;
        Ok(out)
    }

    /// Per row: `sum x * v[c]` over the stored `(c, x)` tuples.
    pub fn spmv_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.n_cols, v.len())?;
        check_dim(self.n_rows, out.len())?;
        for (y, w) in out.iter_mut().zip(self.row_starts.windows(2)) {
            *y = self.entries[w[0]..w[1]].iter().map(|&(c, x)| x * v[c]).sum();
        }
        Ok(())
    }

    /// Same product as [`spmv`](Self::spmv), also returning the number of
    /// multiplications performed.
    pub fn spmv_counted(&self, v: &[f64]) -> Result<(Vec<f64>, usize)> {
        check_dim(self.n_cols, v.len())?;
        let mut mults = 0;
        let out = (0..self.n_rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .map(|&(c, x)| {
                        mults += 1;
                        x * v[c]
                    })
                    .sum()
            })
            .collect();
        Ok((out, mults))
    }

    /// Column sums, used to check that a stored transition stays stochastic.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols];
        for &(c, x) in &self.entries {
            sums[c] += x;
        }
        sums
    }
}

/// Forward prediction through a CSR transition, renormalized to unit mass.
pub fn sparse_predict_step(t_csr: &CsrMatrix, msg: &ForwardMessage) -> Result<ForwardMessage> {
    let mut next = t_csr.spmv(msg.dist.probs())?;
    renormalize(&mut next)?;
    Ok(ForwardMessage::new(Distribution::from_normalized_unchecked(next), msg.time + 1))
}

/// Sparse prediction followed by a Bayes update on `obs`, reading the
/// likelihood from row `obs` of the observation CSR.
pub fn sparse_filter_step(t_csr: &CsrMatrix, b_csr: &CsrMatrix, msg: &ForwardMessage, obs: usize) -> Result<ForwardMessage> {
    check_dim(t_csr.n_rows(), b_csr.n_cols())?;
    if obs >= b_csr.n_rows() {
        return Err(Error::InvalidParameter(format!("observation {obs} out of range for {} observations", b_csr.n_rows())));
    }
    let pred = t_csr.spmv(msg.dist.probs())?;
    let mut post = vec![0.0; pred.len()];
    bayes_update(b_csr, obs, &pred, &mut post);
    let time = msg.time + 1;
    normalize_evidence(&mut post, obs, time)?;
    Ok(ForwardMessage::new(Distribution::from_normalized_unchecked(post), time))
}

/// Writes the unnormalized posterior `P(obs | s) * pred[s]` into `post`.
pub(crate) fn bayes_update(b_csr: &CsrMatrix, obs: usize, pred: &[f64], post: &mut [f64]) {
    post.fill(0.0);
    for &(s, l) in b_csr.row(obs) {
        post[s] = l * pred[s];
    }
}

pub(crate) fn renormalize(v: &mut [f64]) -> Result<()> {
    let total: f64 = v.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::InvalidDistribution("message lost all probability mass".into()));
    }
    v.iter_mut().for_each(|x| *x /= total);
    Ok(())
}
