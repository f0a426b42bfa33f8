//! Mean-oscillation moduli, Dini classification, the transformed modulus
//! `omega~` and numerical checks of the dyadic-sum lemmas.

mod profile;

pub use profile::{
    almost_monotone_constants, dini_integral, dini_integral_with, dyadic_sum_check,
    lemma4_bound_check, lemma4_bound_check_for, tilde_transform, CatalogModulus, DiniFlag,
    DiniOptions, DyadicCheck, LemmaFourReport, Modulus, OscillationProfile, TildeModulus,
    TildeParams,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Ball, Grid, GridFunction};
use crate::scalar::Real;

/// Centres over which the supremum in `omega(r) = sup_x mean_{B(x,r)} |f - f_B|` is taken.
///
/// Centres are cell centres of a square lattice anchored at cell `n/2`, restricted
/// to the sub-square of half-width `half_width` (default: the `B_3` analogue,
/// `3 extent / 4`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterLattice {
    /// Lattice spacing in cells.
    pub stride: usize,
    /// When set, the spacing grows to `spacing_per_radius * r / h` cells at radius `r`.
    pub spacing_per_radius: Option<f64>,
    /// Pattern-search refinement around the best lattice centre.
    pub refine: bool,
    /// Half-width of the centre region as a fraction of the grid extent.
    pub half_width: Option<f64>,
}

impl Default for CenterLattice {
    fn default() -> Self {
        CenterLattice {
            stride: 4,
            spacing_per_radius: None,
            refine: false,
            half_width: None,
        }
    }
}

impl CenterLattice {
    /// Spacing `r / 2` with local refinement, for large grids.
    pub fn adaptive() -> Self {
        CenterLattice {
            stride: 4,
            spacing_per_radius: Some(0.5),
            refine: true,
            half_width: None,
        }
    }

    fn region<T: Real>(&self, grid: &Grid<T>) -> (usize, usize) {
        let hw = match self.half_width {
            Some(f) => T::of(f) * grid.extent(),
            None => grid.concentric_half_width(3),
        };
        // Cells whose centre lies in [-hw, hw].
        let lo = (0..grid.n()).find(|&i| grid.coord(i) >= -hw).unwrap_or(0);
        let hi = (0..grid.n())
            .rev()
            .find(|&i| grid.coord(i) <= hw)
            .unwrap_or(grid.n() - 1);
        (lo, hi)
    }

    fn step<T: Real>(&self, grid: &Grid<T>, r: T) -> usize {
        let stride = self.stride.max(1);
        match self.spacing_per_radius {
            Some(s) => {
                let cells = (T::of(s) * r / grid.h())
                    .floor()
                    .to_usize()
                    .unwrap_or(stride);
                cells.max(stride)
            }
            None => stride,
        }
    }

    /// Lattice cells `(i, j)` used at radius `r`.
    pub fn centers<T: Real>(&self, grid: &Grid<T>, r: T) -> Vec<(usize, usize)> {
        let (lo, hi) = self.region(grid);
        let step = self.step(grid, r);
        let anchor = grid.n() / 2;
        let first = anchor - ((anchor - lo) / step) * step;
        let axis: Vec<usize> = (first..=hi).step_by(step).collect();
        axis.iter()
            .flat_map(|&j| axis.iter().map(move |&i| (i, j)))
            .collect()
    }
}

/// `mean_{ball} |f - f_ball|` with the Euclidean/Frobenius norm over components.
pub fn ball_oscillation<T: Real>(f: &GridFunction<T>, ball: &Ball<T>) -> Result<T> {
    let chords = crate::grid::measure::resolvable_chords(f, ball)?;
    Ok(T::of(chord_oscillation(f, &chords)))
}

fn chord_oscillation<T: Real>(f: &GridFunction<T>, chords: &[(usize, usize, usize)]) -> f64 {
    let c = f.components();
    let n = f.grid().n();
    let vals = f.values();
    let mut mean = [0.0f64; 4];
    let mut count = 0usize;
    for &(j, a, b) in chords {
        for chunk in vals[(j * n + a) * c..(j * n + b) * c].chunks_exact(c) {
            for k in 0..c {
                mean[k] += chunk[k].f64();
            }
        }
        count += b - a;
    }
    let inv = 1.0 / count as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let mut acc = 0.0f64;
    for &(j, a, b) in chords {
        let row = &vals[(j * n + a) * c..(j * n + b) * c];
        if c == 1 {
            acc += row.iter().map(|v| (v.f64() - mean[0]).abs()).sum::<f64>();
        } else {
            for chunk in row.chunks_exact(c) {
                let mut s = 0.0;
                for k in 0..c {
                    let d = chunk[k].f64() - mean[k];
                    s += d * d;
                }
                acc += s.sqrt();
            }
        }
    }
    acc * inv
}

/// Mean oscillation at radius `r` and the lattice centre attaining it.
pub fn mean_oscillation_argmax<T: Real>(
    field: impl AsRef<GridFunction<T>>,
    r: T,
    centers: &CenterLattice,
) -> Result<(T, [T; 2])> {
    let f = field.as_ref();
    let grid = *f.grid();
    if r < grid.min_ball_radius() {
        return Err(Error::EmptyBall {
            cx: 0.0,
            cy: 0.0,
            radius: r.f64(),
            min_radius: grid.min_ball_radius().f64(),
        });
    }
    let eval = |(i, j): (usize, usize)| -> Result<f64> {
        let ball = Ball {
            center: grid.point(i, j),
            radius: r,
        };
        let chords = crate::grid::measure::resolvable_chords(f, &ball)?;
        Ok(chord_oscillation(f, &chords))
    };
    let lattice = centers.centers(&grid, r);
    let values: Vec<f64> = lattice
        .par_iter()
        .map(|&c| eval(c))
        .collect::<Result<_>>()?;
    let (best_pos, mut best) =
        values
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (k, v)| if v > acc.1 { (k, v) } else { acc },
            );
    let mut best_cell = lattice[best_pos];
    if centers.refine {
        let (lo, hi) = centers.region(&grid);
        let mut step = centers.step(&grid, r) / 2;
        while step >= 1 {
            let (bi, bj) = best_cell;
            let mut moved = false;
            let mut candidates = Vec::with_capacity(8);
            for dj in [-1i64, 0, 1] {
                for di in [-1i64, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let i = bi as i64 + di * step as i64;
                    let j = bj as i64 + dj * step as i64;
                    if i >= lo as i64 && i <= hi as i64 && j >= lo as i64 && j <= hi as i64 {
                        candidates.push((i as usize, j as usize));
                    }
                }
            }
            let scores: Vec<f64> = candidates
                .par_iter()
                .map(|&c| eval(c))
                .collect::<Result<_>>()?;
            for (cell, v) in candidates.into_iter().zip(scores) {
                if v > best {
                    best = v;
                    best_cell = cell;
                    moved = true;
                }
            }
            if !moved {
                step /= 2;
            }
        }
    }
    Ok((T::of(best), grid.point(best_cell.0, best_cell.1)))
}

/// `omega(r) = max over lattice centres x of mean_{B(x,r)} |f - f_{B(x,r)}|`.
pub fn mean_oscillation<T: Real>(
    field: impl AsRef<GridFunction<T>>,
    r: T,
    centers: &CenterLattice,
) -> Result<T> {
    mean_oscillation_argmax(field, r, centers).map(|(v, _)| v)
}

/// Measures `omega` at each radius (radii must be strictly decreasing).
pub fn measure_profile<T: Real>(
    field: impl AsRef<GridFunction<T>>,
    radii: &[T],
    centers: &CenterLattice,
) -> Result<OscillationProfile> {
    let f = field.as_ref();
    let omega = radii
        .iter()
        .map(|&r| mean_oscillation(f, r, centers).map(|v| v.f64()))
        .collect::<Result<Vec<_>>>()?;
    OscillationProfile::new(radii.iter().map(|r| r.f64()).collect(), omega)
}
