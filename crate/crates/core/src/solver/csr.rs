use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Compressed sparse row matrix with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from per-row `(column, value)` lists already sorted by column.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(u32, T)>>) -> Self {
        let n_rows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, T)>,
    ) -> Result<Self> {
        if triplets.iter().any(|&(r, c, _)| r >= n_rows || c >= n_cols) {
            return Err(Error::ShapeMismatch("triplet index out of range".into()));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut rows: Vec<Vec<(u32, T)>> = vec![Vec::new(); n_rows];
        for (r, c, v) in triplets {
            match rows[r].last_mut() {
                Some(last) if last.0 as usize == c => last.1 = last.1 + v,
                _ => rows[r].push((c as u32, v)),
            }
        }
        Ok(Self::from_rows(n_cols, rows))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i as u32, T::one())]).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .zip(&self.values[a..b])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[a..b].binary_search(&(j as u32)) {
            Ok(k) => self.values[a + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    /// `y = M x`.
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        y.par_iter_mut()
            .enumerate()
            .with_min_len(4096)
            .for_each(|(i, yi)| {
                let (a, b) = (self.indptr[i], self.indptr[i + 1]);
                let mut s = T::zero();
                for k in a..b {
                    s = s + self.values[k] * x[self.indices[k] as usize];
                }
                *yi = s;
            });
    }

    pub fn mul(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    /// Exact transpose: every stored value moves unchanged.
    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for k in 0..self.n_cols {
            counts[k + 1] += counts[k];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0u32; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for i in 0..self.n_rows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let c = self.indices[k] as usize;
                indices[next[c]] = i as u32;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            values,
        }
    }

    /// Bitwise symmetry check.
    pub fn frobenius_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && *self == self.transpose()
    }

    /// `max |M_ij - M_ji|`.
    pub fn asymmetry(&self) -> T {
        let t = self.transpose();
        let mut worst = T::zero();
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - t.get(i, j)).abs());
            }
            for (j, v) in t.row(i) {
                worst = worst.max((v - self.get(i, j)).abs());
            }
        }
        worst
    }

    /// Largest `|i - j|` over stored entries, as (lower, upper).
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut hi = 0;
        for i in 0..self.n_rows {
            for (j, _) in self.row(i) {
                if j < i {
                    lo = lo.max(i - j);
                } else {
                    hi = hi.max(j - i);
                }
            }
        }
        (lo, hi)
    }

    pub fn negated(&self) -> Self {
        CsrMatrix {
            values: self.values.iter().map(|&v| -v).collect(),
            ..self.clone()
        }
    }

    /// Coordinate text format: a `rows cols nnz` header, then `row col value` lines.
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {:?}", v.f64())?;
            }
        }
        Ok(())
    }
}
