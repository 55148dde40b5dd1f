use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{FemError, Result};

/// Compressed sparse row pattern with strictly increasing columns per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrPattern {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Length `n_rows + 1`.
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
}

impl CsrPattern {
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        CsrPattern {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Position of `(i, j)` in the value array, if stored.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i).binary_search(&j).ok().map(|p| self.row_offsets[i] + p)
    }

    /// Row index of every stored entry.
    pub fn row_indices(&self) -> Vec<usize> {
        let mut rows = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            rows.extend(std::iter::repeat(i).take(self.row_offsets[i + 1] - self.row_offsets[i]));
        }
        rows
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && (0..self.n_rows).all(|i| self.row(i).iter().all(|&j| self.find(j, i).is_some()))
    }

    /// Checks offsets and strictly increasing, in-range columns.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FemError::InvalidParameter(format!("invalid CSR pattern: {m}")));
        if self.row_offsets.len() != self.n_rows + 1 || self.row_offsets[0] != 0 {
            return bad("row offsets".into());
        }
        if *self.row_offsets.last().unwrap() != self.col_indices.len() {
            return bad("last offset does not match nnz".into());
        }
        for i in 0..self.n_rows {
            if self.row_offsets[i] > self.row_offsets[i + 1] {
                return bad(format!("offsets decrease at row {i}"));
            }
            let r = self.row(i);
            if r.windows(2).any(|w| w[0] >= w[1]) || r.iter().any(|&j| j >= self.n_cols) {
                return bad(format!("row {i} columns not strictly increasing or out of range"));
            }
        }
        Ok(())
    }
}

/// A global sparse matrix sharing a CSR pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub pattern: Arc<CsrPattern>,
    pub values: Vec<f64>,
    pub symmetric: bool,
}

impl SparseOperator {
    pub fn new(pattern: Arc<CsrPattern>, values: Vec<f64>, symmetric: bool) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(FemError::Shape {
                context: "sparse operator values".into(),
                expected: format!("{}", pattern.nnz()),
                actual: format!("{}", values.len()),
            });
        }
        Ok(SparseOperator {
            pattern,
            values,
            symmetric,
        })
    }

    pub fn zeros(pattern: Arc<CsrPattern>, symmetric: bool) -> Self {
        let n = pattern.nnz();
        SparseOperator {
            pattern,
            values: vec![0.0; n],
            symmetric,
        }
    }

    /// Identity on an `n × n` diagonal pattern.
    pub fn identity(n: usize) -> Self {
        let pattern = CsrPattern {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
        };
        SparseOperator {
            pattern: Arc::new(pattern),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    /// Builds an operator from a dense row-major matrix, storing nonzeros only.
    pub fn from_dense(n_rows: usize, n_cols: usize, dense: &[f64], symmetric: bool) -> Self {
        let mut row_offsets = vec![0];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..n_rows {
            for j in 0..n_cols {
                let v = dense[i * n_cols + j];
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseOperator {
            pattern: Arc::new(CsrPattern {
                n_rows,
                n_cols,
                row_offsets,
                col_indices,
            }),
            values,
            symmetric,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.values[p])
    }

    /// `y = A x`, parallel over rows.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols(), "matvec input length");
        assert_eq!(y.len(), self.n_rows(), "matvec output length");
        let p = &*self.pattern;
        y.par_iter_mut().enumerate().with_min_len(256).for_each(|(i, yi)| {
            let (s, e) = (p.row_offsets[i], p.row_offsets[i + 1]);
            let mut acc = 0.0;
            for n in s..e {
                acc += self.values[n] * x[p.col_indices[n]];
            }
            *yi = acc;
        });
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> SparseOperator {
        let p = &*self.pattern;
        let mut counts = vec![0usize; p.n_cols + 1];
        for &j in &p.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..p.n_cols {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0; p.nnz()];
        let mut values = vec![0.0; p.nnz()];
        for i in 0..p.n_rows {
            for n in p.row_offsets[i]..p.row_offsets[i + 1] {
                let j = p.col_indices[n];
                col_indices[next[j]] = i;
                values[next[j]] = self.values[n];
                next[j] += 1;
            }
        }
        SparseOperator {
            pattern: Arc::new(CsrPattern {
                n_rows: p.n_cols,
                n_cols: p.n_rows,
                row_offsets,
                col_indices,
            }),
            values,
            symmetric: self.symmetric,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows() * self.n_cols()];
        for i in 0..self.n_rows() {
            for n in self.pattern.row_offsets[i]..self.pattern.row_offsets[i + 1] {
                d[i * self.n_cols() + self.pattern.col_indices[n]] = self.values[n];
            }
        }
        d
    }

    /// `α A + β B` for operators on the same pattern.
    pub fn linear_combination(alpha: f64, a: &SparseOperator, beta: f64, b: &SparseOperator) -> Result<SparseOperator> {
        if !Arc::ptr_eq(&a.pattern, &b.pattern) && a.pattern != b.pattern {
            return Err(FemError::InvalidParameter(
                "linear combination of operators with different sparsity patterns".into(),
            ));
        }
        let values = a
            .values
            .par_iter()
            .zip(b.values.par_iter())
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        Ok(SparseOperator {
            pattern: a.pattern.clone(),
            values,
            symmetric: a.symmetric && b.symmetric,
        })
    }

    pub fn scaled(&self, alpha: f64) -> SparseOperator {
        SparseOperator {
            pattern: self.pattern.clone(),
            values: self.values.par_iter().map(|v| alpha * v).collect(),
            symmetric: self.symmetric,
        }
    }

    /// Largest `|A_ij − A_ji|` over stored entries (missing mirror counts as 0).
    pub fn asymmetry(&self) -> f64 {
        let p = &*self.pattern;
        let mut worst: f64 = 0.0;
        for i in 0..p.n_rows {
            for n in p.row_offsets[i]..p.row_offsets[i + 1] {
                let j = p.col_indices[n];
                worst = worst.max((self.values[n] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
