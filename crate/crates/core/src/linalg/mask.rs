use nalgebra::DMatrix;

use crate::error::{Result, VgaError};

/// Symmetric sparsity pattern for a covariance matrix.
///
/// Every row lists its allowed column indices in increasing order; the
/// diagonal is always present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityMask {
    rows: Vec<Vec<usize>>,
}

impl SparsityMask {
    /// Band of total width `s` around the diagonal: `s = 1` is diagonal,
    /// `s = 3` tridiagonal, and so on. Even widths are rounded down to the
    /// next odd band.
    pub fn banded(dim: usize, s: usize) -> Result<Self> {
        if s == 0 {
            return Err(VgaError::InvalidMask("band width must be positive".into()));
        }
        let half = (s - 1) / 2;
        let rows = (0..dim)
            .map(|i| (i.saturating_sub(half)..(i + half + 1).min(dim)).collect())
            .collect();
        Ok(Self { rows })
    }

    /// Each pixel of an `nx × ny` grid (row-major, `index = i·ny + j`)
    /// coupled to itself and its four nearest neighbors.
    pub fn grid_neighbors(nx: usize, ny: usize) -> Self {
        let idx = |i: usize, j: usize| i * ny + j;
        let mut rows = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                let mut r = vec![idx(i, j)];
                if i > 0 {
                    r.push(idx(i - 1, j));
                }
                if i + 1 < nx {
                    r.push(idx(i + 1, j));
                }
                if j > 0 {
                    r.push(idx(i, j - 1));
                }
                if j + 1 < ny {
                    r.push(idx(i, j + 1));
                }
                r.sort_unstable();
                rows.push(r);
            }
        }
        Self { rows }
    }

    /// Builds a mask from index pairs. The pattern must already be
    /// symmetric; the diagonal is added.
    pub fn from_pairs(dim: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = (0..dim).map(|i| vec![i]).collect();
        for &(i, j) in pairs {
            if i >= dim || j >= dim {
                return Err(VgaError::InvalidMask(format!(
                    "pair ({i}, {j}) out of range for dimension {dim}"
                )));
            }
            rows[i].push(j);
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        let mask = Self { rows };
        for (i, r) in mask.rows.iter().enumerate() {
            for &j in r {
                if !mask.contains(j, i) {
                    return Err(VgaError::InvalidMask(format!(
                        "pattern not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(mask)
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.rows
            .get(i)
            .is_some_and(|r| r.binary_search(&j).is_ok())
    }

    /// Largest number of entries in any row (the `s` of the pattern).
    pub fn max_row_nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// All `(i, j)` in the pattern, row by row.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&j| (i, j)))
    }

    /// Copy of `m` with entries outside the pattern set to zero.
    pub fn select(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (i, j) in self.iter() {
            out[(i, j)] = m[(i, j)];
        }
        out
    }
}
