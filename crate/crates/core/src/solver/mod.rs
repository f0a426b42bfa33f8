//! Discrete elliptic operators on the square grid and their solvers.
//!
//! Grid points (cell centres) are the unknowns; the outer ring of points
//! carries homogeneous Dirichlet data. A [`DofMap`] selects the active points,
//! either the interior of the square or a discrete ball inside it.

mod csr;
mod linear;
mod spectral;

pub use csr::CsrMatrix;
pub use linear::{
    linear_solve, BandedLu, Jacobi, LinearMethod, LinearOutcome, Preconditioner, SolveOptions,
};
pub use spectral::SpectralOperator;

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{Ball, Grid, GridFunction, Rank};
use crate::scalar::Real;

const INACTIVE: u32 = u32::MAX;

/// Active grid points and their unknown numbering (ascending cell index).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    n: usize,
    cells: Vec<usize>,
    dof_of: Vec<u32>,
    full_square: bool,
}

impl DofMap {
    fn from_predicate(n: usize, full_square: bool, keep: impl Fn(usize, usize) -> bool) -> Self {
        let mut cells = Vec::new();
        let mut dof_of = vec![INACTIVE; n * n];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                if keep(i, j) {
                    dof_of[j * n + i] = cells.len() as u32;
                    cells.push(j * n + i);
                }
            }
        }
        DofMap {
            n,
            cells,
            dof_of,
            full_square,
        }
    }

    /// Every point off the outer ring.
    pub fn interior<T: Real>(grid: &Grid<T>) -> Self {
        Self::from_predicate(grid.n(), true, |_, _| true)
    }

    /// Points off the outer ring whose centres lie in the open ball.
    pub fn ball<T: Real>(grid: &Grid<T>, ball: &Ball<T>) -> Result<Self> {
        let map = Self::from_predicate(grid.n(), false, |i, j| ball.contains(grid.point(i, j)));
        if map.cells.is_empty() {
            return Err(Error::BallTooSmall(format!(
                "ball of radius {} at ({}, {}) holds no interior grid point",
                ball.radius, ball.center[0], ball.center[1]
            )));
        }
        Ok(map)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_full_square(&self) -> bool {
        self.full_square
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    #[inline]
    pub fn dof(&self, cell: usize) -> Option<usize> {
        let d = self.dof_of[cell];
        (d != INACTIVE).then_some(d as usize)
    }

    pub fn gather<T: Real>(&self, f: &GridFunction<T>) -> Vec<T> {
        assert_eq!(f.rank(), Rank::Scalar);
        self.cells.iter().map(|&c| f.values()[c]).collect()
    }

    pub fn scatter<T: Real>(&self, grid: Grid<T>, x: &[T]) -> GridFunction<T> {
        let mut out = GridFunction::zeros(grid, Rank::Scalar);
        for (&c, &v) in self.cells.iter().zip(x) {
            out.values_mut()[c] = v;
        }
        out
    }
}

/// Which operator a [`DiscreteOperator`] discretizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// `div(A grad u)`, bilinear Galerkin.
    Divergence,
    /// `tr(A D^2 u)`, nine-point differences.
    Nondivergence,
    /// `sum D_ij(a^ij u)`, the exact transpose of the nine-point matrix.
    Adjoint,
}

impl Form {
    pub fn name(self) -> &'static str {
        match self {
            Form::Divergence => "divergence",
            Form::Nondivergence => "nondivergence",
            Form::Adjoint => "adjoint",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "divergence" => Some(Form::Divergence),
            "nondivergence" => Some(Form::Nondivergence),
            "adjoint" => Some(Form::Adjoint),
            _ => None,
        }
    }

    /// Source rank expected by the solver of this form.
    pub fn source_rank(self) -> Rank {
        match self {
            Form::Divergence => Rank::Vector,
            Form::Nondivergence => Rank::Scalar,
            Form::Adjoint => Rank::Matrix,
        }
    }
}

/// Storage of the assembled operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Spectral when the field is a constant diagonal matrix on the full square, sparse otherwise.
    Auto,
    Sparse,
    /// Discrete sine transform; constant diagonal fields on the full square only.
    Spectral,
}

// Bilinear element matrices on the unit square; local nodes 0:(0,0) 1:(1,0) 2:(0,1) 3:(1,1).
const KXX: [[f64; 4]; 4] = [
    [1.0 / 3.0, -1.0 / 3.0, 1.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 3.0, 1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, -1.0 / 6.0, 1.0 / 3.0, -1.0 / 3.0],
    [-1.0 / 6.0, 1.0 / 6.0, -1.0 / 3.0, 1.0 / 3.0],
];
const KYY: [[f64; 4]; 4] = [
    [1.0 / 3.0, 1.0 / 6.0, -1.0 / 3.0, -1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 3.0, -1.0 / 6.0, -1.0 / 3.0],
    [-1.0 / 3.0, -1.0 / 6.0, 1.0 / 3.0, 1.0 / 6.0],
    [-1.0 / 6.0, -1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0],
];
const SX: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
const SY: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// `int_e d_x phi_a d_y phi_b` on the unit square.
#[inline]
fn kxy(a: usize, b: usize) -> f64 {
    0.25 * SX[a] * SY[b]
}

/// `int phi_c d_x phi_a` and `int phi_c d_y phi_a` on the unit square.
#[inline]
fn load_weights(a: usize, c: usize) -> (f64, f64) {
    let same_y = (a >> 1) == (c >> 1);
    let same_x = (a & 1) == (c & 1);
    let w = |same: bool| if same { 1.0 / 3.0 } else { 1.0 / 6.0 };
    (0.5 * SX[a] * w(same_y), 0.5 * SY[a] * w(same_x))
}

/// Nine-point weights of `a11 D11 + a22 D22 + (a12 + a21) D12`, offsets in
/// row-major order `(di, dj)` with `dj` outer.
#[inline]
fn nine_point_weights<T: Real>(a: [T; 4], h: T) -> [T; 9] {
    let inv = T::one() / (h * h);
    let (a11, a22) = (a[0] * inv, a[3] * inv);
    let c = (a[1] + a[2]) * inv * T::of(0.25);
    let two = T::of(2.0);
    [c, a22, -c, a11, -two * (a11 + a22), a11, -c, a22, c]
}

struct Assembler<'a, T: Real> {
    grid: Grid<T>,
    field: &'a CoefficientField<T>,
    elements: Vec<[T; 4]>,
}

impl<'a, T: Real> Assembler<'a, T> {
    fn new(field: &'a CoefficientField<T>, form: Form) -> Self {
        let grid = *field.grid();
        let n = grid.n();
        let elements = if form == Form::Divergence {
            let quarter = T::of(0.25);
            (0..(n - 1) * (n - 1))
                .into_par_iter()
                .map(|e| {
                    let (ei, ej) = (e % (n - 1), e / (n - 1));
                    let c = [
                        field.at(grid.index(ei, ej)),
                        field.at(grid.index(ei + 1, ej)),
                        field.at(grid.index(ei, ej + 1)),
                        field.at(grid.index(ei + 1, ej + 1)),
                    ];
                    let mut avg = [T::zero(); 4];
                    for k in 0..4 {
                        avg[k] = ((c[0][k] + c[1][k]) + (c[2][k] + c[3][k])) * quarter;
                    }
                    avg
                })
                .collect()
        } else {
            Vec::new()
        };
        Assembler {
            grid,
            field,
            elements,
        }
    }

    #[inline]
    fn element_entry(&self, e: usize, a: usize, b: usize) -> T {
        let c = self.elements[e];
        let diag = c[0] * T::of(KXX[a][b]) + c[3] * T::of(KYY[a][b]);
        diag + (c[1] * T::of(kxy(a, b)) + c[2] * T::of(kxy(b, a)))
    }

    /// Row of node `(i, j)` as `(cell, value)` over its 3x3 neighbourhood.
    fn row(&self, form: Form, i: usize, j: usize) -> Vec<(usize, T)> {
        let n = self.grid.n();
        let mut out = Vec::with_capacity(9);
        match form {
            Form::Divergence => {
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (qi, qj) = ((i as i64 + di) as usize, (j as i64 + dj) as usize);
                        let mut v = T::zero();
                        let (ei0, ei1) = (i.max(qi).saturating_sub(1), i.min(qi).min(n - 2));
                        let (ej0, ej1) = (j.max(qj).saturating_sub(1), j.min(qj).min(n - 2));
                        for ej in ej0..=ej1 {
                            for ei in ei0..=ei1 {
                                let a = (i - ei) + 2 * (j - ej);
                                let b = (qi - ei) + 2 * (qj - ej);
                                v = v + self.element_entry(ej * (n - 1) + ei, a, b);
                            }
                        }
                        out.push((qj * n + qi, v));
                    }
                }
            }
            Form::Nondivergence | Form::Adjoint => {
                let w = nine_point_weights(self.field.at(j * n + i), self.grid.h());
                for (k, &wk) in w.iter().enumerate() {
                    let (qi, qj) = (i + k % 3 - 1, j + k / 3 - 1);
                    out.push((qj * n + qi, wk));
                }
            }
        }
        out
    }
}

/// An assembled discrete operator `M` on the active points of a [`DofMap`].
#[derive(Debug)]
pub struct DiscreteOperator<T: Real> {
    form: Form,
    field: CoefficientField<T>,
    dofs: DofMap,
    matrix: Option<CsrMatrix<T>>,
    spectral: Option<SpectralOperator<T>>,
    preconditioner: Option<SpectralOperator<T>>,
    m_matrix: bool,
    options: SolveOptions,
}

fn constant_diagonal<T: Real>(field: &CoefficientField<T>) -> Option<(T, T)> {
    field
        .constant_value()
        .filter(|a| a[1] == T::zero() && a[2] == T::zero())
        .map(|a| (a[0], a[3]))
}

fn spectral_for<T: Real>(form: Form, m: usize, a11: T, a22: T, h: T) -> SpectralOperator<T> {
    match form {
        Form::Divergence => SpectralOperator::divergence(m, a11, a22),
        Form::Nondivergence | Form::Adjoint => SpectralOperator::nondivergence(m, a11, a22, h),
    }
}

/// Assembles `form` for `field` on the active points of `dofs`.
pub fn assemble<T: Real>(
    form: Form,
    field: &CoefficientField<T>,
    dofs: DofMap,
    backend: Backend,
) -> Result<DiscreteOperator<T>> {
    let grid = *field.grid();
    if dofs.n != grid.n() {
        return Err(Error::ShapeMismatch(
            "dof map and field live on different grids".into(),
        ));
    }
    if form != Form::Divergence {
        field.require_symmetric(form.name())?;
    }
    let diag = constant_diagonal(field);
    let eligible = diag.is_some() && dofs.full_square;
    let use_spectral = match backend {
        Backend::Spectral if !eligible => {
            return Err(Error::InvalidParameter(
                "spectral backend needs a constant diagonal field on the full square".into(),
            ))
        }
        Backend::Spectral => true,
        Backend::Auto => eligible,
        Backend::Sparse => false,
    };
    let m_side = grid.n() - 2;
    let h = grid.h();
    let m_matrix = form != Form::Divergence
        && (0..grid.len()).all(|i| {
            let a = field.at(i);
            a[1] + a[2] == T::zero() && a[0] > T::zero() && a[3] > T::zero()
        });
    let (matrix, spectral, preconditioner) = if use_spectral {
        let (a11, a22) = diag.expect("eligible");
        (None, Some(spectral_for(form, m_side, a11, a22, h)), None)
    } else {
        let asm = Assembler::new(field, form);
        let rows: Vec<Vec<(u32, T)>> = dofs
            .cells
            .par_iter()
            .map(|&c| {
                let (i, j) = grid.cell(c);
                asm.row(form, i, j)
                    .into_iter()
                    .filter_map(|(q, v)| dofs.dof(q).map(|d| (d as u32, v)))
                    .collect()
            })
            .collect();
        let mut matrix = CsrMatrix::from_rows(dofs.len(), rows);
        if form == Form::Adjoint {
            matrix = matrix.transpose();
        }
        let pc = if dofs.full_square {
            let len = grid.len();
            let (s11, s22) = (0..len).fold((0.0, 0.0), |acc, i| {
                let a = field.at(i);
                (acc.0 + a[0].f64(), acc.1 + a[3].f64())
            });
            let (a11, a22) = (T::of(s11 / len as f64), T::of(s22 / len as f64));
            Some(spectral_for(form, m_side, a11, a22, h))
        } else {
            None
        };
        (Some(matrix), None, pc)
    };
    Ok(DiscreteOperator {
        form,
        field: field.clone(),
        dofs,
        matrix,
        spectral,
        preconditioner,
        m_matrix,
        options: SolveOptions::default(),
    })
}

/// Summary of a solve, without the solution values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub form: Form,
    pub n: usize,
    pub unknowns: usize,
    pub method: String,
    pub residual_norm: f64,
    pub iterations: usize,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport<T> {
    pub solution: GridFunction<T>,
    pub summary: SolveSummary,
}

impl<T: Real> SolveReport<T> {
    pub fn residual_norm(&self) -> f64 {
        self.summary.residual_norm
    }

    pub fn iterations(&self) -> usize {
        self.summary.iterations
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

impl<T: Real> DiscreteOperator<T> {
    pub fn form(&self) -> Form {
        self.form
    }

    pub fn grid(&self) -> &Grid<T> {
        self.field.grid()
    }

    pub fn field(&self) -> &CoefficientField<T> {
        &self.field
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// Sparse matrix, absent on the spectral backend.
    pub fn matrix(&self) -> Option<&CsrMatrix<T>> {
        self.matrix.as_ref()
    }

    pub fn is_spectral(&self) -> bool {
        self.spectral.is_some()
    }

    /// True for nine-point operators without mixed terms, whose matrices are M-matrices.
    pub fn is_m_matrix(&self) -> bool {
        self.m_matrix
    }

    pub fn with_options(mut self, options: SolveOptions) -> Self {
        self.options = options;
        self
    }

    /// Materializes the sparse matrix even on the spectral backend.
    pub fn sparse_matrix(&self) -> CsrMatrix<T> {
        if let Some(m) = &self.matrix {
            return m.clone();
        }
        let dofs = DofMap {
            full_square: false,
            ..self.dofs.clone()
        };
        let form = self.form;
        assemble(form, &self.field, dofs, Backend::Sparse)
            .expect("field already validated")
            .matrix
            .expect("sparse")
    }

    /// `M x` on dof vectors.
    pub fn apply_dofs(&self, x: &[T]) -> Vec<T> {
        match (&self.matrix, &self.spectral) {
            (Some(m), _) => m.mul(x),
            (None, Some(s)) => s.apply(x),
            (None, None) => unreachable!("operator has a backend"),
        }
    }

    /// `M v` for a grid function; values off the active set are ignored.
    pub fn apply(&self, v: &GridFunction<T>) -> GridFunction<T> {
        let y = self.apply_dofs(&self.dofs.gather(v));
        self.dofs.scatter(*self.grid(), &y)
    }

    pub fn write_coo<W: Write>(&self, w: W) -> Result<()> {
        self.sparse_matrix().write_coo(w)
    }

    fn check_source(&self, form: Form, source: &GridFunction<T>) -> Result<()> {
        if self.form != form {
            return Err(Error::InvalidParameter(format!(
                "operator is {} form, solver expects {}",
                self.form.name(),
                form.name()
            )));
        }
        if source.grid() != self.grid() || source.rank() != form.source_rank() {
            return Err(Error::ShapeMismatch(format!(
                "{} solver needs a {} source on the operator grid",
                form.name(),
                form.source_rank().name()
            )));
        }
        Ok(())
    }

    fn solve_dofs(&self, b: &[T]) -> Result<(Vec<T>, String, f64, usize)> {
        let b_norm = b.iter().map(|v| v.f64().powi(2)).sum::<f64>().sqrt();
        if let Some(s) = &self.spectral {
            let x = s.solve(b);
            let mx = s.apply(&x);
            let res = if b_norm == 0.0 {
                0.0
            } else {
                mx.iter()
                    .zip(b)
                    .map(|(&a, &c)| (a.f64() - c.f64()).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    / b_norm
            };
            let tol = self.options.tol.max(50.0 * T::unit_roundoff().f64());
            if !(res <= tol) {
                return Err(Error::SolverDiverged {
                    iterations: 1,
                    residual: res,
                    trace: vec![res],
                });
            }
            return Ok((x, "spectral".into(), res, 1));
        }
        let m = self.matrix.as_ref().expect("sparse backend");
        let pc = self
            .preconditioner
            .as_ref()
            .map(|p| p as &dyn Preconditioner<T>);
        let out = linear_solve(m, b, pc, &self.options)?;
        let label = match out.method {
            LinearMethod::Cg => "cg",
            LinearMethod::BiCgStab => "bicgstab",
            LinearMethod::Direct => "banded_lu",
            LinearMethod::Auto => "auto",
        };
        Ok((out.x, label.into(), out.residual, out.iterations))
    }

    fn report(
        &self,
        start: Instant,
        solution: GridFunction<T>,
        parts: (String, f64, usize),
    ) -> SolveReport<T> {
        SolveReport {
            solution,
            summary: SolveSummary {
                form: self.form,
                n: self.grid().n(),
                unknowns: self.dofs.len(),
                method: parts.0,
                residual_norm: parts.1,
                iterations: parts.2,
                wall_time: start.elapsed().as_secs_f64(),
            },
        }
    }

    /// Right side `F_p = int g . grad phi_p` with `g` interpolated bilinearly.
    pub fn divergence_rhs(&self, g: &GridFunction<T>) -> Vec<T> {
        let grid = *self.grid();
        let n = grid.n();
        let h = grid.h();
        self.dofs
            .cells
            .par_iter()
            .map(|&c| {
                let (i, j) = grid.cell(c);
                let mut acc = T::zero();
                for ej in j.saturating_sub(1)..=j.min(n - 2) {
                    for ei in i.saturating_sub(1)..=i.min(n - 2) {
                        let a = (i - ei) + 2 * (j - ej);
                        for cn in 0..4 {
                            let node = grid.index(ei + (cn & 1), ej + (cn >> 1));
                            let gv = g.at(node);
                            let (wx, wy) = load_weights(a, cn);
                            acc = acc + T::of(wx) * gv[0] + T::of(wy) * gv[1];
                        }
                    }
                }
                acc * h
            })
            .collect()
    }

    /// Right side `b = sum_ab (S^ab)^T G^ab` of the adjoint problem.
    pub fn adjoint_rhs(&self, g: &GridFunction<T>) -> Vec<T> {
        let grid = *self.grid();
        let n = grid.n();
        let h = grid.h();
        let mut b = vec![T::zero(); self.dofs.len()];
        for &c in &self.dofs.cells {
            let (i, j) = grid.cell(c);
            let gv = g.at(c);
            let w = nine_point_weights([gv[0], gv[1], gv[2], gv[3]], h);
            for (k, &wk) in w.iter().enumerate() {
                let q = (j + k / 3 - 1) * n + (i + k % 3 - 1);
                if let Some(d) = self.dofs.dof(q) {
                    b[d] = b[d] + wk;
                }
            }
        }
        b
    }

    /// Solves `div(A grad u) = div g` with zero Dirichlet data.
    pub fn solve_divergence(&self, g: &GridFunction<T>) -> Result<SolveReport<T>> {
        self.check_source(Form::Divergence, g)?;
        let start = Instant::now();
        let b = self.divergence_rhs(g);
        let (x, label, res, it) = self.solve_dofs(&b)?;
        Ok(self.report(start, self.dofs.scatter(*self.grid(), &x), (label, res, it)))
    }

    /// Solves `tr(A D^2 u) = g` with zero Dirichlet data.
    pub fn solve_nondivergence(&self, g: &GridFunction<T>) -> Result<SolveReport<T>> {
        self.check_source(Form::Nondivergence, g)?;
        let start = Instant::now();
        let b = self.dofs.gather(g);
        let (x, label, res, it) = self.solve_dofs(&b)?;
        Ok(self.report(start, self.dofs.scatter(*self.grid(), &x), (label, res, it)))
    }

    /// Solves `M^T u = b` with `b` the functional `v -> sum tr(G D^2 v)`.
    ///
    /// On the full square the outer ring is filled with the trace
    /// `G nu . nu / (A nu . nu)` for output; interior values come from the solve.
    pub fn solve_adjoint(&self, g: &GridFunction<T>) -> Result<SolveReport<T>> {
        self.check_source(Form::Adjoint, g)?;
        let start = Instant::now();
        let b = self.adjoint_rhs(g);
        let (x, label, res, it) = self.solve_dofs(&b)?;
        let mut u = self.dofs.scatter(*self.grid(), &x);
        if self.dofs.full_square {
            self.fill_adjoint_trace(g, &mut u);
        }
        Ok(self.report(start, u, (label, res, it)))
    }

    fn fill_adjoint_trace(&self, g: &GridFunction<T>, u: &mut GridFunction<T>) {
        let grid = *self.grid();
        let n = grid.n();
        for j in 0..n {
            for i in 0..n {
                if !grid.is_boundary(i, j) {
                    continue;
                }
                let sx = if i == 0 {
                    -1.0
                } else if i == n - 1 {
                    1.0
                } else {
                    0.0
                };
                let sy = if j == 0 {
                    -1.0
                } else if j == n - 1 {
                    1.0
                } else {
                    0.0
                };
                let nu = [T::of(sx), T::of(sy)];
                let quad = |m: &[T]| {
                    m[0] * nu[0] * nu[0] + (m[1] + m[2]) * nu[0] * nu[1] + m[3] * nu[1] * nu[1]
                };
                let idx = grid.index(i, j);
                let a = self.field.at(idx);
                u.values_mut()[idx] = quad(g.at(idx)) / quad(&a);
            }
        }
    }

    /// Solves the problem matching this operator's form.
    pub fn solve(&self, source: &GridFunction<T>) -> Result<SolveReport<T>> {
        match self.form {
            Form::Divergence => self.solve_divergence(source),
            Form::Nondivergence => self.solve_nondivergence(source),
            Form::Adjoint => self.solve_adjoint(source),
        }
    }
}

/// Nine-point Hessian `(D11 v, D12 v, D12 v, D22 v)` at active points, with
/// `v` taken as zero off the active set.
pub fn nine_point_hessian<T: Real>(v: &GridFunction<T>, dofs: &DofMap) -> GridFunction<T> {
    let grid = *v.grid();
    let n = grid.n();
    let mut out = GridFunction::zeros(grid, Rank::Matrix);
    let unit = |k: usize| {
        let mut a = [T::zero(); 4];
        a[k] = T::one();
        a
    };
    let (s11, s12, s22) = (
        nine_point_weights(unit(0), grid.h()),
        nine_point_weights(unit(1), grid.h()),
        nine_point_weights(unit(3), grid.h()),
    );
    for &c in dofs.cells() {
        let (i, j) = grid.cell(c);
        let mut d = [T::zero(); 3];
        for k in 0..9 {
            let q = (j + k / 3 - 1) * n + (i + k % 3 - 1);
            if dofs.dof(q).is_some() {
                let vq = v.values()[q];
                d[0] = d[0] + s11[k] * vq;
                d[1] = d[1] + s12[k] * vq;
                d[2] = d[2] + s22[k] * vq;
            }
        }
        out.at_mut(c).copy_from_slice(&[d[0], d[1], d[1], d[2]]);
    }
    out
}

/// `sum over active points of tr(G D^2_h v)`, accumulated in `f64`.
pub fn hessian_pairing<T: Real>(g: &GridFunction<T>, v: &GridFunction<T>, dofs: &DofMap) -> f64 {
    let grid = *v.grid();
    let n = grid.n();
    let mut acc = 0.0;
    for &c in dofs.cells() {
        let (i, j) = grid.cell(c);
        let gv = g.at(c);
        let w = nine_point_weights([gv[0], gv[1], gv[2], gv[3]], grid.h());
        for (k, &wk) in w.iter().enumerate() {
            let q = (j + k / 3 - 1) * n + (i + k % 3 - 1);
            if dofs.dof(q).is_some() {
                acc += wk.f64() * v.values()[q].f64();
            }
        }
    }
    acc
}
