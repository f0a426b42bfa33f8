//! Campanato excess, its decay along geometric radii, the coefficient-freezing
//! decomposition `u = v + w` and empirical moduli of continuity.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coeffs::{constant_field, CoefficientField};
use crate::error::{Error, Result};
use crate::grid::{
    ball_average, finite_difference_gradient, finite_difference_hessian, lp_quasi_mean,
};
use crate::grid::{Ball, Grid, GridFunction, Rank, Region};
use crate::oscillation::{
    ball_oscillation, dini_integral, Modulus, OscillationProfile, TildeModulus, TildeParams,
};
use crate::scalar::Real;
use crate::solver::{assemble, Backend, DofMap, Form, SolveOptions};

/// `(phi, q)` with `q` the ball average of `f` and `phi = (mean_B |f - q|^p)^(1/p)`.
///
/// The average stands in for the non-convex infimum over `q`. For the data met in
/// practice it is within a factor `2^(1/p)` of that infimum; functions concentrated
/// on a vanishing fraction of the ball can break the comparison.
pub fn campanato_phi<T: Real>(f: &GridFunction<T>, ball: &Ball<T>, p: T) -> Result<(T, Vec<T>)> {
    let q = ball_average(f, ball)?;
    let value = lp_quasi_mean(&f.sub_constant(&q), ball, p)?;
    Ok((value, q))
}

/// `phi_j` at radii `kappa^j r0` around one centre, with the chained averages `q_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampanatoCurve {
    pub center: [f64; 2],
    pub r0: f64,
    pub kappa: f64,
    pub beta: f64,
    pub p: f64,
    pub radii: Vec<f64>,
    pub phi: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    /// Cell counts of the balls, used by the chaining bound.
    pub cells: Vec<usize>,
    /// `f` at the cell nearest the centre.
    pub center_value: Vec<f64>,
}

/// Number of levels `J` with `kappa^J r0 >= 2h`.
pub fn resolvable_levels<T: Real>(grid: &Grid<T>, r0: f64, kappa: f64) -> usize {
    let floor = grid.min_ball_radius().f64();
    let mut j = 0;
    let mut r = r0;
    while r * kappa >= floor * (1.0 - 1e-12) {
        r *= kappa;
        j += 1;
    }
    j
}

/// `phi_j` for `j = 0..=levels` at radii `kappa^j r0`.
pub fn campanato_decay<T: Real>(
    f: &GridFunction<T>,
    center: [T; 2],
    r0: T,
    params: &TildeParams,
    levels: usize,
    p: T,
) -> Result<CampanatoCurve> {
    let kappa = params.kappa();
    let r_last = r0.f64() * kappa.powi(levels as i32);
    let min_radius = f.grid().min_ball_radius().f64();
    if r_last < min_radius * (1.0 - 1e-12) {
        return Err(Error::ScaleUnderflow {
            radius: r_last,
            min_radius,
        });
    }
    let mut curve = CampanatoCurve {
        center: [center[0].f64(), center[1].f64()],
        r0: r0.f64(),
        kappa,
        beta: params.beta(),
        p: p.f64(),
        radii: Vec::new(),
        phi: Vec::new(),
        q: Vec::new(),
        cells: Vec::new(),
        center_value: Vec::new(),
    };
    for j in 0..=levels {
        let r = r0.f64() * kappa.powi(j as i32);
        // Guard the floor against the power's rounding.
        let ball = Ball::new(center, T::of(r.max(min_radius)))?;
        let (phi, q) = campanato_phi(f, &ball, p)?;
        curve.radii.push(r);
        curve.phi.push(phi.f64());
        curve.q.push(q.iter().map(|v| v.f64()).collect());
        curve.cells.push(crate::grid::ball_cell_count(f, &ball)?);
    }
    let g = f.grid();
    let c = g.index(g.nearest(center[0]), g.nearest(center[1]));
    curve.center_value = f.at(c).iter().map(|v| v.f64()).collect();
    Ok(curve)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

impl CampanatoCurve {
    pub fn levels(&self) -> usize {
        self.phi.len() - 1
    }

    /// `phi_{j+1} / phi_j`.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.phi.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// `phi_J / phi_0`.
    pub fn decay_ratio(&self) -> f64 {
        self.phi[self.levels()] / self.phi[0]
    }

    /// Right side of `|q_{j+1} - q_j| <= 2^(1/p) (phi_j (|B_j| / |B_{j+1}|)^(1/p) + phi_{j+1})`.
    pub fn chaining_bounds(&self) -> Vec<f64> {
        let c = 2f64.powf(1.0 / self.p);
        (0..self.levels())
            .map(|j| {
                let area = self.cells[j] as f64 / self.cells[j + 1] as f64;
                c * (self.phi[j] * area.powf(1.0 / self.p) + self.phi[j + 1])
            })
            .collect()
    }

    /// `|q_{j+1} - q_j|`.
    pub fn chaining_steps(&self) -> Vec<f64> {
        self.q.windows(2).map(|w| distance(&w[0], &w[1])).collect()
    }

    pub fn chaining_holds(&self) -> bool {
        self.chaining_steps()
            .iter()
            .zip(self.chaining_bounds())
            .all(|(s, b)| *s <= b * (1.0 + 1e-12))
    }

    /// `|q_J - f(center)|`.
    pub fn center_gap(&self) -> f64 {
        distance(&self.q[self.levels()], &self.center_value)
    }

    /// Least-squares `C` in `phi_j ~ 2^-j phi_0 + C envelope(r_j)` over `j >= 1`.
    pub fn fit_constant(&self, envelope: impl Fn(f64) -> f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for j in 1..self.phi.len() {
            let e = envelope(self.radii[j]);
            let excess = self.phi[j] - 0.5f64.powi(j as i32) * self.phi[0];
            num += excess * e;
            den += e * e;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Columns `j, r, phi, q0.., ratio`; `ratio` is `phi_j / phi_{j-1}` (empty at `j = 0`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let comps = self.q.first().map_or(0, |q| q.len());
        let qs: Vec<String> = (0..comps).map(|k| format!("q{k}")).collect();
        writeln!(w, "j,r,phi,{},ratio", qs.join(","))?;
        for j in 0..self.phi.len() {
            let q: Vec<String> = self.q[j].iter().map(|v| format!("{v:?}")).collect();
            let ratio = if j == 0 {
                String::new()
            } else {
                format!("{:?}", self.phi[j] / self.phi[j - 1])
            };
            writeln!(
                w,
                "{j},{:?},{:?},{},{ratio}",
                self.radii[j],
                self.phi[j],
                q.join(",")
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serializes")
    }
}

/// `integral_0^r omega~(t) dt / t`, from `omega~` sampled at 8 points per octave.
pub fn tilde_dini_integral<M: Modulus + ?Sized>(
    m: &M,
    params: &TildeParams,
    r: f64,
) -> Result<f64> {
    let tilde = TildeModulus {
        inner: m,
        params: *params,
    };
    let profile = OscillationProfile::sample(&tilde, 1.0, r * 2f64.powi(-40), 8)?;
    dini_integral(&profile, r)
}

/// Outcome of one freezing experiment on a ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreezeReport {
    pub form: Form,
    pub center: [f64; 2],
    pub radius: f64,
    pub p: f64,
    /// `(mean_B |Dw|^p)^(1/p)`; `|D^2 w|` or `|w|` for the other forms.
    pub w_quasinorm: f64,
    /// `omega_A(r) sup_B |Du| + omega_g(r)` with ball-local mean oscillations.
    pub bound_rhs: f64,
    pub ratio: Option<f64>,
    pub omega_a: f64,
    pub omega_g: f64,
    pub solution_sup: f64,
    /// Excess of the `v = u - w` target on the ball and on the concentric half ball.
    pub v_excess_outer: f64,
    pub v_excess_inner: f64,
}

impl FreezeReport {
    pub const CSV_HEADER: &'static str =
        "form,cx,cy,radius,p,w_quasinorm,bound_rhs,ratio,omega_a,omega_g,solution_sup,v_excess_outer,v_excess_inner";

    pub fn csv_row(&self) -> String {
        let ratio = self.ratio.map_or(String::new(), |r| format!("{r:?}"));
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{ratio},{:?},{:?},{:?},{:?},{:?}",
            self.form.name(),
            self.center[0],
            self.center[1],
            self.radius,
            self.p,
            self.w_quasinorm,
            self.bound_rhs,
            self.omega_a,
            self.omega_g,
            self.solution_sup,
            self.v_excess_outer,
            self.v_excess_inner
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// The quantity whose regularity each form controls: `Du`, `D^2 u` or `u`.
pub fn regularity_target<T: Real>(form: Form, u: &GridFunction<T>) -> GridFunction<T> {
    match form {
        Form::Divergence => finite_difference_gradient(u),
        Form::Nondivergence => finite_difference_hessian(u),
        Form::Adjoint => u.clone(),
    }
}

fn product_with_field<T: Real>(
    a: &GridFunction<T>,
    f: &GridFunction<T>,
) -> Result<GridFunction<T>> {
    // A Du for vectors, tr(A D^2 u) for matrices, A u for scalars.
    let rank = match f.rank() {
        Rank::Vector => Rank::Vector,
        Rank::Matrix => Rank::Scalar,
        Rank::Scalar => Rank::Matrix,
    };
    let mut values = Vec::with_capacity(f.grid().len() * rank.components());
    for idx in 0..f.grid().len() {
        let m = a.at(idx);
        let v = f.at(idx);
        match f.rank() {
            Rank::Vector => values.extend([m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]]),
            Rank::Matrix => values.push(m[0] * v[0] + m[1] * v[2] + m[2] * v[1] + m[3] * v[3]),
            Rank::Scalar => values.extend(m.iter().map(|&c| c * v[0])),
        }
    }
    GridFunction::from_values(*f.grid(), rank, values)
}

/// Freezes `field` at its ball average and solves for the correction `w` on the ball.
///
/// `data` is the source of the global problem (`g` vector, scalar or matrix by form)
/// and `solution` its computed solution on the full grid.
pub fn freezing_experiment<T: Real>(
    form: Form,
    field: &CoefficientField<T>,
    data: &GridFunction<T>,
    solution: &GridFunction<T>,
    ball: &Ball<T>,
    p: T,
) -> Result<FreezeReport> {
    let grid = *field.grid();
    let reach = ball.center[0].abs().max(ball.center[1].abs()) + ball.radius;
    if reach >= grid.extent() - grid.h() {
        return Err(Error::BallTooSmall(format!(
            "ball of radius {} at ({}, {}) is not strictly inside the domain",
            ball.radius, ball.center[0], ball.center[1]
        )));
    }
    if data.grid() != &grid || solution.grid() != &grid || data.rank() != form.source_rank() {
        return Err(Error::ShapeMismatch(format!(
            "freezing needs a {} source on the field grid",
            form.source_rank().name()
        )));
    }
    let ball_field = field.ball_average(ball)?;
    let frozen = constant_field(
        grid,
        [
            [ball_field[0], ball_field[1]],
            [ball_field[2], ball_field[3]],
        ],
    )?;
    let diff = field.values().sub(frozen.values())?;
    let data_mean = ball_average(data, ball)?;
    let data_dev = data.sub_constant(&data_mean);
    let target = regularity_target(form, solution);
    // Commutator right side: the data deviation minus (A - A_B) acting on Du, D^2 u or u.
    let controlled = if form == Form::Adjoint {
        solution
    } else {
        &target
    };
    let source = data_dev.sub(&product_with_field(&diff, controlled)?)?;
    let dofs = DofMap::ball(&grid, ball)?;
    let op = assemble(form, &frozen, dofs, Backend::Sparse)?.with_options(SolveOptions::default());
    let w = op.solve(&source)?.solution;
    let w_target = regularity_target(form, &w);
    let w_quasinorm = lp_quasi_mean(&w_target, ball, p)?.f64();
    let omega_a = ball_oscillation(field.values(), ball)?.f64();
    let omega_g = ball_oscillation(data, ball)?.f64();
    let solution_sup = crate::grid::region_max_norm(&target, &Region::Ball(*ball)).f64();
    let bound_rhs = omega_a * solution_sup + omega_g;
    let v_target = target.sub(&w_target)?;
    let half = ball.scaled(T::of(0.5));
    let v_excess_outer = campanato_phi(&v_target, ball, p)?.0.f64();
    let v_excess_inner = campanato_phi(&v_target, &half, p)?.0.f64();
    Ok(FreezeReport {
        form,
        center: [ball.center[0].f64(), ball.center[1].f64()],
        radius: ball.radius.f64(),
        p: p.f64(),
        w_quasinorm,
        bound_rhs,
        ratio: (bound_rhs > 0.0).then(|| w_quasinorm / bound_rhs),
        omega_a,
        omega_g,
        solution_sup,
        v_excess_outer,
        v_excess_inner,
    })
}

/// `m(r) = max |f(x) - f(y)|` over cell pairs in `region` with `|x - y| <= r`.
pub fn modulus_of_continuity<T: Real>(
    f: &GridFunction<T>,
    region: &Ball<T>,
    r_values: &[T],
) -> Vec<f64> {
    use rayon::prelude::*;
    let grid = f.grid();
    let n = grid.n() as i64;
    let h = grid.h().f64();
    let r_max = r_values.iter().map(|r| r.f64()).fold(0.0, f64::max);
    let reach = (r_max / h + 1e-9).floor() as i64;
    let cells = grid.cells_in(&Region::Ball(*region));
    let mut inside = vec![false; grid.len()];
    for &c in &cells {
        inside[c] = true;
    }
    // Half of the offset disc; the other half gives the same pairs.
    let offsets: Vec<(i64, i64)> = (-reach..=reach)
        .flat_map(|dj| (-reach..=reach).map(move |di| (di, dj)))
        .filter(|&(di, dj)| (dj > 0 || (dj == 0 && di > 0)) && di * di + dj * dj <= reach * reach)
        .collect();
    let per_offset: Vec<(f64, f64)> = offsets
        .par_iter()
        .map(|&(di, dj)| {
            let mut best = 0.0f64;
            for &c in &cells {
                let (i, j) = grid.cell(c);
                let (qi, qj) = (i as i64 + di, j as i64 + dj);
                if qi < 0 || qj < 0 || qi >= n || qj >= n {
                    continue;
                }
                let q = (qj * n + qi) as usize;
                if !inside[q] {
                    continue;
                }
                let d = distance(
                    &f.at(c).iter().map(|v| v.f64()).collect::<Vec<_>>(),
                    &f.at(q).iter().map(|v| v.f64()).collect::<Vec<_>>(),
                );
                best = best.max(d);
            }
            ((((di * di + dj * dj) as f64).sqrt()) * h, best)
        })
        .collect();
    r_values
        .iter()
        .map(|r| {
            let r = r.f64() * (1.0 + 1e-12);
            per_offset
                .iter()
                .filter(|(d, _)| *d <= r)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Single constant `C` with `m(r) <= C shape(r)` on the sampled radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeFit {
    pub constant: f64,
    /// `m(r) / shape(r)` per radius.
    pub ratios: Vec<f64>,
}

pub fn fit_modulus_shape(r_values: &[f64], m: &[f64], shape: impl Fn(f64) -> f64) -> ShapeFit {
    let ratios: Vec<f64> = r_values
        .iter()
        .zip(m)
        .map(|(&r, &v)| v / shape(r))
        .collect();
    ShapeFit {
        constant: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
    }
}

/// `r^beta + int_0^r omega~_A / t + int_0^r omega~_g / t`, the modulus shape for `Du`.
pub fn regularity_shape<A: Modulus + ?Sized, G: Modulus + ?Sized>(
    omega_a: &A,
    omega_g: &G,
    params: &TildeParams,
    r: f64,
) -> Result<f64> {
    Ok(r.powf(params.beta())
        + tilde_dini_integral(omega_a, params, r)?
        + tilde_dini_integral(omega_g, params, r)?)
}
