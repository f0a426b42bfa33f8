use serde::{Deserialize, Serialize};

use super::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Approximate inverse applied inside the Krylov loops.
pub trait Preconditioner<T>: Sync {
    fn apply(&self, r: &[T], z: &mut [T]);
}

/// Inverse of the matrix diagonal.
pub struct Jacobi<T> {
    inv_diag: Vec<T>,
}

impl<T: Real> Jacobi<T> {
    pub fn new(m: &CsrMatrix<T>) -> Self {
        let inv_diag = m
            .diagonal()
            .into_iter()
            .map(|d| {
                if d != T::zero() {
                    T::one() / d
                } else {
                    T::one()
                }
            })
            .collect();
        Jacobi { inv_diag }
    }
}

impl<T: Real> Preconditioner<T> for Jacobi<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        for ((zi, &ri), &d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
    }
}

struct Negated<'a, T>(&'a dyn Preconditioner<T>);

impl<T: Real> Preconditioner<T> for Negated<'_, T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        self.0.apply(r, z);
        z.iter_mut().for_each(|v| *v = -*v);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearMethod {
    /// CG for exactly symmetric definite matrices, banded LU for small
    /// non-symmetric systems, BiCGStab otherwise.
    Auto,
    Cg,
    BiCgStab,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative residual target `|b - Mx| / |b|`, floored at 50 unit roundoffs of the scalar type.
    /// A solve is also accepted when its normwise backward error
    /// `|b - Mx| / (|M| |x| + |b|)` is within 50 unit roundoffs, the best a
    /// low-precision `x` can reach.
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub method: LinearMethod,
    /// Largest banded-LU flop estimate `Auto` accepts.
    pub direct_flop_limit: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: None,
            method: LinearMethod::Auto,
            direct_flop_limit: 2e9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub residual: f64,
    pub method: LinearMethod,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.f64() * y.f64()).sum()
}

fn norm<T: Real>(a: &[T]) -> f64 {
    dot(a, a).sqrt()
}

fn relative_residual<T: Real>(m: &CsrMatrix<T>, x: &[T], b: &[T], b_norm: f64) -> f64 {
    let mx = m.mul(x);
    let r: f64 = mx
        .iter()
        .zip(b)
        .map(|(&a, &c)| (c.f64() - a.f64()).powi(2))
        .sum();
    r.sqrt() / b_norm
}

fn effective_tol<T: Real>(tol: f64) -> f64 {
    tol.max(50.0 * T::unit_roundoff().f64())
}

fn choose<T: Real>(m: &CsrMatrix<T>, opts: &SolveOptions) -> LinearMethod {
    if opts.method != LinearMethod::Auto {
        return opts.method;
    }
    if m.is_symmetric() {
        let d = m.diagonal();
        if d.iter().all(|&v| v > T::zero()) || d.iter().all(|&v| v < T::zero()) {
            return LinearMethod::Cg;
        }
    }
    let (kl, ku) = m.bandwidths();
    let flops = m.n_rows() as f64 * kl as f64 * (kl + ku) as f64;
    if flops <= opts.direct_flop_limit {
        LinearMethod::Direct
    } else {
        LinearMethod::BiCgStab
    }
}

/// Solves `M x = b` to relative residual `opts.tol`.
pub fn linear_solve<T: Real>(
    m: &CsrMatrix<T>,
    b: &[T],
    precond: Option<&dyn Preconditioner<T>>,
    opts: &SolveOptions,
) -> Result<LinearOutcome<T>> {
    if m.n_rows() != m.n_cols() || b.len() != m.n_rows() {
        return Err(Error::ShapeMismatch(format!(
            "system is {}x{} with a right side of length {}",
            m.n_rows(),
            m.n_cols(),
            b.len()
        )));
    }
    let method = choose(m, opts);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(LinearOutcome {
            x: vec![T::zero(); b.len()],
            iterations: 0,
            residual: 0.0,
            method,
        });
    }
    let tol = effective_tol::<T>(opts.tol);
    let max_iter = opts
        .max_iter
        .unwrap_or(20 * (m.n_rows() as f64).sqrt() as usize + 1000);
    let jacobi;
    let pc: &dyn Preconditioner<T> = match precond {
        Some(p) => p,
        None => {
            jacobi = Jacobi::new(m);
            &jacobi
        }
    };
    let (x, iterations, trace) = match method {
        LinearMethod::Cg => {
            let negative = m.diagonal().first().is_some_and(|&d| d < T::zero());
            if negative {
                let neg_b: Vec<T> = b.iter().map(|&v| -v).collect();
                cg(&m.negated(), &neg_b, &Negated(pc), tol, max_iter)
            } else {
                cg(m, b, pc, tol, max_iter)
            }
        }
        LinearMethod::BiCgStab => bicgstab(m, b, pc, tol, max_iter),
        LinearMethod::Direct => (BandedLu::factor(m)?.solve(b), 1, Vec::new()),
        LinearMethod::Auto => unreachable!("resolved by choose"),
    };
    let residual = relative_residual(m, &x, b, b_norm);
    let attainable =
        50.0 * T::unit_roundoff().f64() * (m.frobenius_norm() * norm(&x) + b_norm) / b_norm;
    if !(residual <= tol.max(attainable)) {
        return Err(Error::SolverDiverged {
            iterations,
            residual,
            trace,
        });
    }
    Ok(LinearOutcome {
        x,
        iterations,
        residual,
        method,
    })
}

/// Preconditioned conjugate gradients for symmetric positive definite `m`.
fn cg<T: Real>(
    m: &CsrMatrix<T>,
    b: &[T],
    pc: &dyn Preconditioner<T>,
    tol: f64,
    max_iter: usize,
) -> (Vec<T>, usize, Vec<f64>) {
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    pc.apply(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut trace = Vec::new();
    for it in 1..=max_iter {
        m.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq == 0.0 || !pq.is_finite() {
            return (x, it, trace);
        }
        let alpha = T::of(rz / pq);
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * q[i];
        }
        let res = norm(&r) / b_norm;
        trace.push(res);
        if res <= tol {
            return (x, it, trace);
        }
        pc.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = T::of(rz_new / rz);
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, max_iter, trace)
}

/// Right-preconditioned BiCGStab.
fn bicgstab<T: Real>(
    m: &CsrMatrix<T>,
    b: &[T],
    pc: &dyn Preconditioner<T>,
    tol: f64,
    max_iter: usize,
) -> (Vec<T>, usize, Vec<f64>) {
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let mut trace = Vec::new();
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 || !rho_new.is_finite() {
            return (x, it, trace);
        }
        let beta = T::of((rho_new / rho) * (alpha / omega));
        rho = rho_new;
        let om = T::of(omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - om * v[i]);
        }
        pc.apply(&p, &mut y);
        m.matvec(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return (x, it, trace);
        }
        alpha = rho / rv;
        let al = T::of(alpha);
        for i in 0..n {
            s[i] = r[i] - al * v[i];
        }
        let s_res = norm(&s) / b_norm;
        if s_res <= tol {
            for i in 0..n {
                x[i] = x[i] + al * y[i];
            }
            trace.push(s_res);
            return (x, it, trace);
        }
        pc.apply(&s, &mut z);
        m.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        let om = T::of(omega);
        for i in 0..n {
            x[i] = x[i] + al * y[i] + om * z[i];
            r[i] = s[i] - om * t[i];
        }
        let res = norm(&r) / b_norm;
        trace.push(res);
        if res <= tol {
            return (x, it, trace);
        }
    }
    (x, max_iter, trace)
}

/// Banded LU with partial pivoting; row `i` stores columns `i - kl ..= i + kl + ku`.
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<T>,
    pivots: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    pub fn factor(m: &CsrMatrix<T>) -> Result<Self> {
        let n = m.n_rows();
        let (kl, ku) = m.bandwidths();
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            width,
            band: vec![T::zero(); n * width],
            pivots: vec![0; n],
        };
        for i in 0..n {
            for (j, v) in m.row(i) {
                *lu.at_mut(i, j) = v;
            }
        }
        let reach = kl + ku;
        for i in 0..n {
            let last_row = (i + kl).min(n - 1);
            let last_col = (i + reach).min(n - 1);
            let mut p = i;
            let mut best = lu.at(i, i).abs();
            for r in i + 1..=last_row {
                let v = lu.at(r, i).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == T::zero() {
                return Err(Error::SolverDiverged {
                    iterations: i,
                    residual: f64::INFINITY,
                    trace: Vec::new(),
                });
            }
            lu.pivots[i] = p;
            if p != i {
                for c in i..=last_col {
                    let a = lu.at(i, c);
                    let b = lu.at(p, c);
                    *lu.at_mut(i, c) = b;
                    *lu.at_mut(p, c) = a;
                }
            }
            let d = lu.at(i, i);
            for r in i + 1..=last_row {
                let l = lu.at(r, i) / d;
                *lu.at_mut(r, i) = l;
                if l != T::zero() {
                    for c in i + 1..=last_col {
                        let u = lu.at(i, c);
                        *lu.at_mut(r, c) = lu.at(r, c) - l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.band[self.offset(i, j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        let k = self.offset(i, j);
        &mut self.band[k]
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            x.swap(i, self.pivots[i]);
            let xi = x[i];
            for r in i + 1..=(i + self.kl).min(n - 1) {
                x[r] = x[r] - self.at(r, i) * xi;
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for c in i + 1..=(i + self.kl + self.ku).min(n - 1) {
                s = s - self.at(i, c) * x[c];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }
}
