use serde::{Deserialize, Serialize};

use super::{Grid, Region};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Value type carried at every grid point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    Scalar,
    /// Two components `(v1, v2)`.
    Vector,
    /// Four components `(a11, a12, a21, a22)`.
    Matrix,
}

impl Rank {
    #[inline]
    pub fn components(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 2,
            Rank::Matrix => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rank::Scalar => "scalar",
            Rank::Vector => "vector",
            Rank::Matrix => "matrix",
        }
    }

    pub fn from_name(s: &str) -> Option<Rank> {
        match s {
            "scalar" => Some(Rank::Scalar),
            "vector" => Some(Rank::Vector),
            "matrix" => Some(Rank::Matrix),
            _ => None,
        }
    }
}

/// Scalar, vector or 2x2-matrix valued function sampled at the cell centres.
///
/// Components are interleaved: `values[idx * c + k]` is component `k` at cell `idx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFunction<T> {
    grid: Grid<T>,
    rank: Rank,
    values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn zeros(grid: Grid<T>, rank: Rank) -> Self {
        GridFunction {
            grid,
            rank,
            values: vec![T::zero(); grid.len() * rank.components()],
        }
    }

    pub fn from_values(grid: Grid<T>, rank: Rank, values: Vec<T>) -> Result<Self> {
        let expected = grid.len() * rank.components();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} values for a {} field on n = {}, got {}",
                rank.name(),
                grid.n(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!(
                "non-finite value at position {pos}"
            )));
        }
        Ok(GridFunction { grid, rank, values })
    }

    /// Wraps values produced internally, checking only the length.
    pub(crate) fn from_raw(grid: Grid<T>, rank: Rank, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len() * rank.components());
        GridFunction { grid, rank, values }
    }

    /// Samples `f(x, out)` at every cell centre; `out` has `rank.components()` slots.
    pub fn from_fn(grid: Grid<T>, rank: Rank, mut f: impl FnMut([T; 2], &mut [T])) -> Self {
        let c = rank.components();
        let mut values = vec![T::zero(); grid.len() * c];
        for (idx, chunk) in values.chunks_exact_mut(c).enumerate() {
            f(grid.point_of(idx), chunk);
        }
        GridFunction { grid, rank, values }
    }

    pub fn scalar_from_fn(grid: Grid<T>, mut f: impl FnMut([T; 2]) -> T) -> Self {
        Self::from_fn(grid, Rank::Scalar, |x, out| out[0] = f(x))
    }

    pub fn vector_from_fn(grid: Grid<T>, mut f: impl FnMut([T; 2]) -> [T; 2]) -> Self {
        Self::from_fn(grid, Rank::Vector, |x, out| out.copy_from_slice(&f(x)))
    }

    pub fn matrix_from_fn(grid: Grid<T>, mut f: impl FnMut([T; 2]) -> [[T; 2]; 2]) -> Self {
        Self::from_fn(grid, Rank::Matrix, |x, out| {
            let m = f(x);
            out.copy_from_slice(&[m[0][0], m[0][1], m[1][0], m[1][1]]);
        })
    }

    pub fn constant(grid: Grid<T>, rank: Rank, value: &[T]) -> Self {
        assert_eq!(
            value.len(),
            rank.components(),
            "constant value has wrong arity"
        );
        Self::from_fn(grid, rank, |_, out| out.copy_from_slice(value))
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn rank(&self) -> Rank {
        self.rank
    }

    #[inline]
    pub fn components(&self) -> usize {
        self.rank.components()
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &[T] {
        let c = self.components();
        &self.values[idx * c..(idx + 1) * c]
    }

    #[inline]
    pub fn at_mut(&mut self, idx: usize) -> &mut [T] {
        let c = self.components();
        &mut self.values[idx * c..(idx + 1) * c]
    }

    /// Euclidean (Frobenius for matrices) norm of the value at `idx`.
    #[inline]
    pub fn norm_at(&self, idx: usize) -> T {
        let v = self.at(idx);
        if v.len() == 1 {
            v[0].abs()
        } else {
            v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
        }
    }

    /// Pointwise norm as a scalar field.
    pub fn norm_field(&self) -> GridFunction<T> {
        let values = (0..self.grid.len()).map(|i| self.norm_at(i)).collect();
        GridFunction {
            grid: self.grid,
            rank: Rank::Scalar,
            values,
        }
    }

    pub fn component(&self, k: usize) -> GridFunction<T> {
        let c = self.components();
        assert!(k < c, "component {k} out of range");
        let values = self.values.iter().skip(k).step_by(c).copied().collect();
        GridFunction {
            grid: self.grid,
            rank: Rank::Scalar,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> GridFunction<T> {
        GridFunction {
            grid: self.grid,
            rank: self.rank,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: T) -> GridFunction<T> {
        self.map(|v| v * c)
    }

    fn check_same(&self, other: &GridFunction<T>) -> Result<()> {
        if self.grid != other.grid || self.rank != other.rank {
            return Err(Error::ShapeMismatch(
                "grid functions live on different grids or ranks".into(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check_same(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(GridFunction {
            grid: self.grid,
            rank: self.rank,
            values,
        })
    }

    pub fn sub(&self, other: &GridFunction<T>) -> Result<GridFunction<T>> {
        self.check_same(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(GridFunction {
            grid: self.grid,
            rank: self.rank,
            values,
        })
    }

    /// `self - constant` componentwise.
    pub fn sub_constant(&self, value: &[T]) -> GridFunction<T> {
        let c = self.components();
        assert_eq!(value.len(), c, "constant has wrong arity");
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| v - value[k % c])
            .collect();
        GridFunction {
            grid: self.grid,
            rank: self.rank,
            values,
        }
    }

    /// Largest pointwise norm over the whole grid.
    pub fn max_norm(&self) -> T {
        (0..self.grid.len())
            .map(|i| self.norm_at(i))
            .fold(T::zero(), T::max)
    }

    /// Discrete `L^2` norm `(sum |f|^2 h^2)^(1/2)` over `region`.
    pub fn l2_norm(&self, region: &Region<T>) -> T {
        let mut acc = 0.0f64;
        self.grid.for_each_in(region, |i| {
            let v = self.norm_at(i).f64();
            acc += v * v;
        });
        T::of((acc * self.grid.cell_area().f64()).sqrt())
    }

    /// Zeroes every value outside `keep`.
    pub fn restricted(&self, keep: &Region<T>) -> GridFunction<T> {
        let mut out = GridFunction::zeros(self.grid, self.rank);
        self.grid
            .for_each_in(keep, |i| out.at_mut(i).copy_from_slice(self.at(i)));
        out
    }

    /// Embeds a scalar field as `f * direction` (vector rank).
    pub fn times_vector(&self, direction: [T; 2]) -> GridFunction<T> {
        assert_eq!(self.rank, Rank::Scalar, "times_vector needs a scalar field");
        let values = self
            .values
            .iter()
            .flat_map(|&v| [v * direction[0], v * direction[1]])
            .collect();
        GridFunction {
            grid: self.grid,
            rank: Rank::Vector,
            values,
        }
    }

    /// Embeds a scalar field as `f * m` (matrix rank).
    pub fn times_matrix(&self, m: [[T; 2]; 2]) -> GridFunction<T> {
        assert_eq!(self.rank, Rank::Scalar, "times_matrix needs a scalar field");
        let values = self
            .values
            .iter()
            .flat_map(|&v| [v * m[0][0], v * m[0][1], v * m[1][0], v * m[1][1]])
            .collect();
        GridFunction {
            grid: self.grid,
            rank: Rank::Matrix,
            values,
        }
    }

    /// Converts the stored scalar type.
    pub fn cast<U: Real>(&self) -> GridFunction<U> {
        let grid = Grid::new(self.grid.n(), U::of(self.grid.extent().f64())).expect("valid grid");
        GridFunction {
            grid,
            rank: self.rank,
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}

impl<T> AsRef<GridFunction<T>> for GridFunction<T> {
    fn as_ref(&self) -> &GridFunction<T> {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_is_validated() {
        let g = Grid::<f64>::new(8, 1.0).unwrap();
        assert!(GridFunction::from_values(g, Rank::Vector, vec![0.0; 64]).is_err());
        assert!(GridFunction::from_values(g, Rank::Vector, vec![0.0; 128]).is_ok());
        let mut bad = vec![0.0; 64];
        bad[3] = f64::INFINITY;
        assert!(GridFunction::from_values(g, Rank::Scalar, bad).is_err());
    }

    #[test]
    fn matrix_norm_is_frobenius() {
        let g = Grid::<f64>::new(8, 1.0).unwrap();
        let f = GridFunction::matrix_from_fn(g, |_| [[1.0, 2.0], [2.0, 4.0]]);
        assert!((f.norm_at(5) - 5.0).abs() < 1e-15);
        assert_eq!(f.component(1).values()[0], 2.0);
    }
}
