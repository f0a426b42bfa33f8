//! Uniform 2-D cell-centred grids, grid functions and the counting-measure
//! averages, quasi-norms and distribution functions built on them.

mod diff;
mod function;
pub mod io;
pub(crate) mod measure;

pub use diff::{finite_difference_gradient, finite_difference_hessian};
pub use function::{GridFunction, Rank};
pub use measure::{
    ball_average, ball_cell_count, distribution_measure, layer_cake_integral, lp_quasi_mean,
    power_integral, region_l1_norm, region_max_norm,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square grid of `n x n` cells covering `[-extent, extent]^2`.
///
/// Grid points are cell centres `-extent + (i + 1/2) h`. The outermost ring of
/// points carries Dirichlet data in the solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    n: usize,
    extent: T,
}

impl<T: Real> Grid<T> {
    pub const MIN_CELLS: usize = 8;

    pub fn new(n: usize, extent: T) -> Result<Self> {
        if n < Self::MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "need at least {} cells per side, got {n}",
                Self::MIN_CELLS
            )));
        }
        if !(extent > T::zero()) || !extent.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "extent must be positive, got {extent}"
            )));
        }
        Ok(Grid { n, extent })
    }

    /// Grid whose outer ring of points sits exactly on `[-half_width, half_width]^2`.
    ///
    /// Manufactured solutions vanishing on that square then satisfy the
    /// discrete Dirichlet condition exactly.
    pub fn with_boundary_nodes_at(n: usize, half_width: T) -> Result<Self> {
        if n < Self::MIN_CELLS {
            return Self::new(n, half_width);
        }
        let n_t = T::of_usize(n);
        Self::new(n, half_width * n_t / (n_t - T::one()))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn extent(&self) -> T {
        self.extent
    }

    #[inline]
    pub fn h(&self) -> T {
        (self.extent + self.extent) / T::of_usize(self.n)
    }

    #[inline]
    pub fn cell_area(&self) -> T {
        let h = self.h();
        h * h
    }

    /// Number of grid points.
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Coordinate of the `i`-th cell centre along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> T {
        -self.extent + (T::of_usize(i) + T::of(0.5)) * self.h()
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> [T; 2] {
        [self.coord(i), self.coord(j)]
    }

    /// Row-major cell index: `i` runs along `x1`, rows are constant `x2`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn cell(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    #[inline]
    pub fn point_of(&self, idx: usize) -> [T; 2] {
        let (i, j) = self.cell(idx);
        self.point(i, j)
    }

    /// True on the outer ring of points, where Dirichlet data lives.
    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.n || j + 1 == self.n
    }

    /// Half-width of the sub-square playing the role of the ball `B_k`, `k = 1..=4`.
    pub fn concentric_half_width(&self, k: u32) -> T {
        T::of(f64::from(k)) * self.extent / T::of(4.0)
    }

    /// Smallest radius at which ball averages are considered meaningful.
    #[inline]
    pub fn min_ball_radius(&self) -> T {
        self.h() + self.h()
    }

    /// Index of the cell whose centre is nearest to `x` along one axis (clamped).
    pub fn nearest(&self, x: T) -> usize {
        let s = (x + self.extent) / self.h() - T::of(0.5);
        let s = s.round().max(T::zero()).to_usize().unwrap_or(0);
        s.min(self.n - 1)
    }

    /// Cell-index range `[lo, hi)` of centres lying in `[a, b]` along one axis.
    fn axis_range(&self, a: T, b: T) -> (usize, usize) {
        let h = self.h();
        let x0 = -self.extent + h * T::of(0.5);
        let lo = ((a - x0) / h).ceil().max(T::zero());
        let hi = ((b - x0) / h).floor();
        if hi < T::zero() || lo > T::of_usize(self.n - 1) {
            return (0, 0);
        }
        let lo = lo.to_usize().unwrap_or(0);
        let hi = hi.to_usize().unwrap_or(0).min(self.n - 1);
        if lo > hi {
            (0, 0)
        } else {
            (lo, hi + 1)
        }
    }

    /// Row chords `(j, i_start, i_end)` of the cells whose centres lie in the open ball.
    pub fn chords(&self, ball: &Ball<T>) -> Vec<(usize, usize, usize)> {
        let [cx, cy] = ball.center;
        let r = ball.radius;
        let r2 = r * r;
        let (j0, j1) = self.axis_range(cy - r, cy + r);
        let mut out = Vec::with_capacity(j1.saturating_sub(j0));
        for j in j0..j1 {
            let dy = self.coord(j) - cy;
            let dy2 = dy * dy;
            if dy2 >= r2 {
                continue;
            }
            let inside = |i: usize| {
                let dx = self.coord(i) - cx;
                dx * dx + dy2 < r2
            };
            let half = (r2 - dy2).sqrt();
            let (mut a, mut b) = self.axis_range(cx - half, cx + half);
            if a == b {
                // The analytic chord may miss a centre sitting on the rounding edge.
                let c = self.nearest(cx);
                if inside(c) {
                    a = c;
                    b = c + 1;
                } else {
                    continue;
                }
            }
            while a < b && !inside(a) {
                a += 1;
            }
            while a > 0 && inside(a - 1) {
                a -= 1;
            }
            while b > a && !inside(b - 1) {
                b -= 1;
            }
            while b < self.n && inside(b) {
                b += 1;
            }
            if a < b {
                out.push((j, a, b));
            }
        }
        out
    }

    /// Visits every cell index of `region`.
    pub fn for_each_in(&self, region: &Region<T>, mut f: impl FnMut(usize)) {
        match region {
            Region::Domain => (0..self.len()).for_each(f),
            Region::Ball(ball) => {
                for (j, a, b) in self.chords(ball) {
                    let row = j * self.n;
                    (row + a..row + b).for_each(&mut f);
                }
            }
            Region::Square { center, half_width } => {
                let (i0, i1) = self.axis_range(center[0] - *half_width, center[0] + *half_width);
                let (j0, j1) = self.axis_range(center[1] - *half_width, center[1] + *half_width);
                for j in j0..j1 {
                    let row = j * self.n;
                    (row + i0..row + i1).for_each(&mut f);
                }
            }
            _ => {
                for idx in 0..self.len() {
                    if region.contains(self.point_of(idx)) {
                        f(idx);
                    }
                }
            }
        }
    }

    /// Cell indices of `region`, in storage order.
    pub fn cells_in(&self, region: &Region<T>) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in(region, |i| out.push(i));
        out
    }
}

/// Open ball `B(center, radius)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball<T> {
    pub center: [T; 2],
    pub radius: T,
}

impl<T: Real> Ball<T> {
    pub fn new(center: [T; 2], radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Ball { center, radius })
    }

    #[inline]
    pub fn contains(&self, x: [T; 2]) -> bool {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        dx * dx + dy * dy < self.radius * self.radius
    }

    pub fn scaled(&self, factor: T) -> Self {
        Ball {
            center: self.center,
            radius: self.radius * factor,
        }
    }
}

/// Measurable subsets of the grid used for integrals and distribution functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region<T> {
    Domain,
    Ball(Ball<T>),
    Square {
        center: [T; 2],
        half_width: T,
    },
    /// `inner <= |x - center| < outer`.
    Annulus {
        center: [T; 2],
        inner: T,
        outer: T,
    },
    /// `|x - center| >= radius`.
    Exterior(Ball<T>),
}

impl<T: Real> Region<T> {
    pub fn contains(&self, x: [T; 2]) -> bool {
        match self {
            Region::Domain => true,
            Region::Ball(b) => b.contains(x),
            Region::Square { center, half_width } => {
                (x[0] - center[0]).abs() <= *half_width && (x[1] - center[1]).abs() <= *half_width
            }
            Region::Annulus {
                center,
                inner,
                outer,
            } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                let d2 = dx * dx + dy * dy;
                d2 >= *inner * *inner && d2 < *outer * *outer
            }
            Region::Exterior(b) => !b.contains(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_degenerate_grids() {
        assert!(Grid::<f64>::new(4, 1.0).is_err());
        assert!(Grid::<f64>::new(16, 0.0).is_err());
        assert!(Grid::<f64>::new(16, f64::NAN).is_err());
    }

    #[test]
    fn cell_centres_and_spacing() {
        let g = Grid::<f64>::new(8, 1.0).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.coord(0), -0.875);
        assert_eq!(g.coord(7), 0.875);
        assert_eq!(g.index(3, 2), 19);
        assert_eq!(g.cell(19), (3, 2));
    }

    #[test]
    fn boundary_ring_placement() {
        let g = Grid::<f64>::with_boundary_nodes_at(64, 1.0).unwrap();
        assert!((g.coord(0) + 1.0).abs() < 1e-14);
        assert!((g.coord(63) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn chords_match_brute_force_membership() {
        let g = Grid::<f64>::new(40, 1.0).unwrap();
        for &(cx, cy, r) in &[
            (0.0, 0.0, 0.3),
            (0.13, -0.41, 0.27),
            (0.9, 0.9, 0.5),
            (0.025, 0.025, 0.1),
        ] {
            let ball = Ball::new([cx, cy], r).unwrap();
            let mut fast = g.cells_in(&Region::Ball(ball));
            fast.sort_unstable();
            let slow: Vec<usize> = (0..g.len())
                .filter(|&k| ball.contains(g.point_of(k)))
                .collect();
            assert_eq!(fast, slow, "ball {cx} {cy} {r}");
        }
    }

    #[test]
    fn nine_cells_at_radius_two_h() {
        let g = Grid::<f64>::new(32, 1.0).unwrap();
        let h = g.h();
        let c = g.point(10, 10);
        let ball = Ball::new(c, 2.0 * h).unwrap();
        // (0,0), (+-1, 0), (0, +-1), (+-1, +-1); the axis points at distance 2h are excluded.
        assert_eq!(g.cells_in(&Region::Ball(ball)).len(), 9);
    }
}
