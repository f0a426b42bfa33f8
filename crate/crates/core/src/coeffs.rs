//! Coefficient fields `A(x)` and smooth data fields with known oscillation behaviour.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ball, Grid, GridFunction, Rank};
use crate::scalar::Real;

/// Grid-sampled 2x2 coefficient field with its ellipticity bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField<T> {
    values: GridFunction<T>,
    lambda: T,
    upper: T,
    symmetric: bool,
}

/// Smallest eigenvalue of the symmetric part of `[a11 a12; a21 a22]`.
pub fn min_symmetric_eigenvalue<T: Real>(m: &[T]) -> T {
    let half = T::of(0.5);
    let (s11, s12, s22) = (m[0], (m[1] + m[2]) * half, m[3]);
    let mean = (s11 + s22) * half;
    let dev = (s11 - s22) * half;
    mean - (dev * dev + s12 * s12).sqrt()
}

impl<T: Real> CoefficientField<T> {
    /// Validates ellipticity at every grid point and records `lambda`, `Lambda`.
    pub fn new(values: GridFunction<T>) -> Result<Self> {
        if values.rank() != Rank::Matrix {
            return Err(Error::ShapeMismatch(
                "coefficient field must have matrix rank".into(),
            ));
        }
        let mut lambda = T::infinity();
        let mut upper = T::zero();
        let mut symmetric = true;
        for idx in 0..values.grid().len() {
            let m = values.at(idx);
            let ev = min_symmetric_eigenvalue(m);
            if !(ev > T::zero()) {
                return Err(Error::NotElliptic {
                    min_eigenvalue: ev.f64(),
                    cell: idx,
                });
            }
            lambda = lambda.min(ev);
            upper = upper.max(values.norm_at(idx));
            symmetric &= m[1] == m[2];
        }
        Ok(CoefficientField {
            values,
            lambda,
            upper,
            symmetric,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        self.values.grid()
    }

    pub fn values(&self) -> &GridFunction<T> {
        &self.values
    }

    /// Ellipticity lower bound over the grid.
    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Pointwise Frobenius upper bound over the grid.
    pub fn upper_bound(&self) -> T {
        self.upper
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn require_symmetric(&self, operator: &'static str) -> Result<()> {
        if self.symmetric {
            Ok(())
        } else {
            Err(Error::NotSymmetric(operator))
        }
    }

    /// Coefficients `[a11, a12, a21, a22]` at a cell.
    #[inline]
    pub fn at(&self, idx: usize) -> [T; 4] {
        let m = self.values.at(idx);
        [m[0], m[1], m[2], m[3]]
    }

    /// `Some(A0)` when the field is identical at every cell.
    pub fn constant_value(&self) -> Option<[T; 4]> {
        let first = self.at(0);
        (1..self.grid().len())
            .all(|i| self.at(i) == first)
            .then_some(first)
    }

    /// Counting-measure average over a ball, the frozen coefficient matrix.
    pub fn ball_average(&self, ball: &Ball<T>) -> Result<[T; 4]> {
        let v = crate::grid::ball_average(&self.values, ball)?;
        Ok([v[0], v[1], v[2], v[3]])
    }

    pub fn cast<U: Real>(&self) -> CoefficientField<U> {
        CoefficientField::new(self.values.cast()).expect("cast preserves ellipticity")
    }
}

impl<T> AsRef<GridFunction<T>> for CoefficientField<T> {
    fn as_ref(&self) -> &GridFunction<T> {
        &self.values
    }
}

/// `A(x) = A0` everywhere.
pub fn constant_field<T: Real>(grid: Grid<T>, a0: [[T; 2]; 2]) -> Result<CoefficientField<T>> {
    CoefficientField::new(GridFunction::matrix_from_fn(grid, |_| a0))
}

/// Radial rescaling `rho(x) = max(|x| / scale, r_cap)` used by the logarithmic families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogScaling<T> {
    pub scale: T,
    pub r_cap: T,
}

impl<T: Real> LogScaling<T> {
    pub const DEFAULT_R_CAP: f64 = 9.5367431640625e-7; // 2^-20

    /// `scale = 4 * extent`, which keeps `rho < 1/2` on the whole grid.
    pub fn for_grid(grid: &Grid<T>) -> Self {
        LogScaling {
            scale: T::of(4.0) * grid.extent(),
            r_cap: T::of(Self::DEFAULT_R_CAP),
        }
    }

    pub fn with_scale(grid: &Grid<T>, scale: T) -> Self {
        LogScaling {
            scale,
            ..Self::for_grid(grid)
        }
    }

    fn validate(&self, grid: &Grid<T>) -> Result<()> {
        let e = grid.extent();
        if !(self.scale >= T::of(2.0) * e) || !self.scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale must be at least 2 * extent = {}, got {}",
                T::of(2.0) * e,
                self.scale
            )));
        }
        if !(self.r_cap > T::zero() && self.r_cap * self.scale < e / T::of(4.0)) {
            return Err(Error::InvalidParameter(format!(
                "r_cap must lie in (0, extent / (4 scale)), got {}",
                self.r_cap
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn rho(&self, x: [T; 2]) -> T {
        (x[0].hypot(x[1]) / self.scale).max(self.r_cap)
    }

    /// Converts a radius in `rho` units to grid units.
    pub fn to_grid_radius(&self, r: T) -> T {
        r * self.scale
    }
}

fn check_positive_exponent<T: Real>(v: T, what: &'static str) -> Result<()> {
    if !(v > T::zero()) || !v.is_finite() {
        return Err(Error::InvalidExponent {
            value: v.f64(),
            expected: what,
        });
    }
    Ok(())
}

/// `a^{ij} = delta_ij (1 + (-ln rho)^(-gamma))`.
pub fn log_family<T: Real>(
    grid: Grid<T>,
    gamma: T,
    scaling: LogScaling<T>,
) -> Result<CoefficientField<T>> {
    check_positive_exponent(gamma, "gamma > 0")?;
    scaling.validate(&grid)?;
    CoefficientField::new(GridFunction::matrix_from_fn(grid, |x| {
        let a = T::one() + (-scaling.rho(x).ln()).powf(-gamma);
        [[a, T::zero()], [T::zero(), a]]
    }))
}

/// Angular factor of [`log_power_family`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Angular {
    /// `cos(2 theta)`.
    Mode2,
    /// Constant factor, a purely radial field.
    Radial,
}

/// Diagonal field with `a11 - 1 = (-ln rho)^(-sigma) cos(2 theta) / 2`, `a22 = 1`,
/// whose mean oscillation decays like `(-ln r)^(-sigma)`.
pub fn log_power_family<T: Real>(
    grid: Grid<T>,
    sigma: T,
    angular: Angular,
    scaling: LogScaling<T>,
) -> Result<CoefficientField<T>> {
    check_positive_exponent(sigma, "sigma > 0")?;
    scaling.validate(&grid)?;
    let half = T::of(0.5);
    CoefficientField::new(GridFunction::matrix_from_fn(grid, |x| {
        let envelope = (-scaling.rho(x).ln()).powf(-sigma) * half;
        let factor = match angular {
            Angular::Mode2 => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                if r2 > T::zero() {
                    (x[0] * x[0] - x[1] * x[1]) / r2
                } else {
                    T::one()
                }
            }
            Angular::Radial => T::one(),
        };
        [
            [T::one() + envelope * factor, T::zero()],
            [T::zero(), T::one()],
        ]
    }))
}

/// Analytic data fields with closed-form derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothKind {
    /// `sin(pi x1) sin(pi x2)`.
    Trig,
    /// The harmonic cubic `x1^3 - 3 x1 x2^2`.
    Polynomial,
}

impl SmoothKind {
    pub fn name(self) -> &'static str {
        match self {
            SmoothKind::Trig => "trig",
            SmoothKind::Polynomial => "polynomial",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "trig" => Some(SmoothKind::Trig),
            "polynomial" => Some(SmoothKind::Polynomial),
            _ => None,
        }
    }

    pub fn value<T: Real>(self, x: [T; 2]) -> T {
        match self {
            SmoothKind::Trig => (T::PI() * x[0]).sin() * (T::PI() * x[1]).sin(),
            SmoothKind::Polynomial => x[0].powi(3) - T::of(3.0) * x[0] * x[1] * x[1],
        }
    }

    pub fn gradient<T: Real>(self, x: [T; 2]) -> [T; 2] {
        match self {
            SmoothKind::Trig => {
                let pi = T::PI();
                let (s1, c1) = (pi * x[0]).sin_cos();
                let (s2, c2) = (pi * x[1]).sin_cos();
                [pi * c1 * s2, pi * s1 * c2]
            }
            SmoothKind::Polynomial => {
                let three = T::of(3.0);
                [
                    three * (x[0] * x[0] - x[1] * x[1]),
                    -T::of(6.0) * x[0] * x[1],
                ]
            }
        }
    }

    pub fn hessian<T: Real>(self, x: [T; 2]) -> [[T; 2]; 2] {
        match self {
            SmoothKind::Trig => {
                let pi = T::PI();
                let pi2 = pi * pi;
                let (s1, c1) = (pi * x[0]).sin_cos();
                let (s2, c2) = (pi * x[1]).sin_cos();
                let m = pi2 * c1 * c2;
                [[-pi2 * s1 * s2, m], [m, -pi2 * s1 * s2]]
            }
            SmoothKind::Polynomial => {
                let six = T::of(6.0);
                let m = -six * x[1];
                [[six * x[0], m], [m, -six * x[0]]]
            }
        }
    }

    pub fn laplacian<T: Real>(self, x: [T; 2]) -> T {
        let h = self.hessian(x);
        h[0][0] + h[1][1]
    }
}

/// Samples a catalog field: the scalar itself, its gradient (vector rank), or
/// the scalar times the identity (matrix rank).
pub fn smooth_data_field<T: Real>(grid: Grid<T>, kind: SmoothKind, rank: Rank) -> GridFunction<T> {
    match rank {
        Rank::Scalar => GridFunction::scalar_from_fn(grid, |x| kind.value(x)),
        Rank::Vector => GridFunction::vector_from_fn(grid, |x| kind.gradient(x)),
        Rank::Matrix => GridFunction::matrix_from_fn(grid, |x| {
            let v = kind.value(x);
            [[v, T::zero()], [T::zero(), v]]
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid<f64> {
        Grid::new(n, 1.0).unwrap()
    }

    #[test]
    fn constant_field_bounds() {
        let f = constant_field(grid(16), [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(f.lambda(), 1.0);
        assert!((f.upper_bound() - 2f64.sqrt()).abs() < 1e-15);
        let f = constant_field(grid(16), [[2.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(f.lambda(), 1.0);
        assert!((f.upper_bound() - 5f64.sqrt()).abs() < 1e-15);
        assert!(f.is_symmetric());
    }

    #[test]
    fn non_symmetric_and_degenerate_fields() {
        let f = constant_field(grid(16), [[1.0, 0.5], [-0.5, 1.0]]).unwrap();
        assert!(!f.is_symmetric());
        assert_eq!(f.lambda(), 1.0);
        assert!(matches!(
            f.require_symmetric("nondivergence"),
            Err(Error::NotSymmetric(_))
        ));
        let bad = constant_field(grid(16), [[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(bad, Err(Error::NotElliptic { .. })));
    }

    #[test]
    fn log_family_bounds_and_symmetry() {
        let g = grid(64);
        let s = LogScaling::for_grid(&g);
        let f = log_family(g, 0.25, s).unwrap();
        assert!(f.lambda() >= 1.0);
        for idx in 0..g.len() {
            let a = f.at(idx);
            assert!(a[0] >= 1.0 && a[0] < 2.0 && a[0] == a[3]);
            let (i, j) = g.cell(idx);
            // Quarter-turn rotation maps cell (i, j) to (n-1-j, i).
            let rot = f.at(g.index(g.n() - 1 - j, i));
            assert!((rot[0] - a[0]).abs() < 1e-14);
        }
        assert!(matches!(
            log_family(g, 0.0, s),
            Err(Error::InvalidExponent { .. })
        ));
        let capped = log_family(
            g,
            0.25,
            LogScaling {
                scale: 4.0,
                r_cap: 1e-2,
            },
        )
        .unwrap();
        let centre = capped.at(g.index(32, 32))[0];
        assert!((centre - (1.0 + (-(1e-2f64).ln()).powf(-0.25))).abs() < 1e-14);
    }

    #[test]
    fn large_gamma_approaches_identity_inside_the_disc() {
        let g = grid(64);
        let f = log_family(g, 50.0, LogScaling::for_grid(&g)).unwrap();
        for idx in 0..g.len() {
            let x = g.point_of(idx);
            if x[0].hypot(x[1]) <= 1.0 && x[0].hypot(x[1]) > 0.1 {
                assert!(f.at(idx)[0] - 1.0 < 1e-3);
            }
        }
    }

    #[test]
    fn log_power_family_is_elliptic_and_diagonal() {
        let g = grid(64);
        for sigma in [1.0, 2.0] {
            for ang in [Angular::Mode2, Angular::Radial] {
                let f = log_power_family(g, sigma, ang, LogScaling::for_grid(&g)).unwrap();
                assert!(f.lambda() > 0.0 && f.is_symmetric());
                assert!((0..g.len()).all(|i| f.at(i)[1] == 0.0 && f.at(i)[3] == 1.0));
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let g = grid(32);
        let a = log_power_family(g, 2.0, Angular::Mode2, LogScaling::for_grid(&g)).unwrap();
        let b = log_power_family(g, 2.0, Angular::Mode2, LogScaling::for_grid(&g)).unwrap();
        assert!(a
            .values()
            .values()
            .iter()
            .zip(b.values().values())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn catalog_derivatives() {
        let x: [f64; 2] = [0.3, -0.7];
        assert_eq!(SmoothKind::Polynomial.laplacian(x), 0.0);
        for kind in [SmoothKind::Trig, SmoothKind::Polynomial] {
            let e = 1e-6;
            let g = kind.gradient(x);
            let fd = (kind.value([x[0] + e, x[1]]) - kind.value([x[0] - e, x[1]])) / (2.0 * e);
            assert!((g[0] - fd).abs() < 1e-8);
            let h = kind.hessian(x);
            let fd = (kind.gradient([x[0], x[1] + e])[0] - kind.gradient([x[0], x[1] - e])[0])
                / (2.0 * e);
            assert!((h[0][1] - fd).abs() < 1e-7);
        }
    }
}
