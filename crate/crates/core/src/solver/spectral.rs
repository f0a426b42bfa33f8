use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::linear::Preconditioner;
use crate::scalar::Real;

/// Diagonalization of a constant diagonal-coefficient operator on the `m x m`
/// interior nodes of the square by the 2-D discrete sine transform.
pub struct SpectralOperator<T: Real> {
    m: usize,
    eig: Vec<T>,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for SpectralOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralOperator")
            .field("m", &self.m)
            .finish()
    }
}

impl<T: Real> SpectralOperator<T> {
    fn with_eigenvalues(m: usize, eig: impl Fn(T, T) -> T) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(2 * (m + 1));
        let theta = |k: usize| T::PI() * T::of_usize(k + 1) / T::of_usize(m + 1);
        let mut values = Vec::with_capacity(m * m);
        for l in 0..m {
            for k in 0..m {
                values.push(eig(theta(k), theta(l)));
            }
        }
        SpectralOperator {
            m,
            eig: values,
            fft,
        }
    }

    /// Bilinear Galerkin stiffness for `diag(a11, a22)`.
    pub fn divergence(m: usize, a11: T, a22: T) -> Self {
        let third = T::one() / T::of(3.0);
        Self::with_eigenvalues(m, |tx, ty| {
            let lam = |t: T| T::of(4.0) * (t * T::of(0.5)).sin().powi(2);
            let mu = |t: T| T::of(2.0) * third + t.cos() * third;
            a11 * lam(tx) * mu(ty) + a22 * mu(tx) * lam(ty)
        })
    }

    /// Five-point `a11 D11 + a22 D22` with spacing `h`.
    pub fn nondivergence(m: usize, a11: T, a22: T, h: T) -> Self {
        let inv = T::one() / (h * h);
        Self::with_eigenvalues(m, |tx, ty| {
            let lam = |t: T| T::of(4.0) * (t * T::of(0.5)).sin().powi(2);
            -(a11 * lam(tx) + a22 * lam(ty)) * inv
        })
    }

    pub fn size(&self) -> usize {
        self.m * self.m
    }

    /// Unnormalized DST-I along the rows of an `m x m` row-major array.
    fn dst_rows(&self, data: &mut [T]) {
        let m = self.m;
        let len = 2 * (m + 1);
        let zero = Complex::new(T::zero(), T::zero());
        let mut buf = vec![zero; m * len];
        for (row, line) in data.chunks_exact(m).zip(buf.chunks_exact_mut(len)) {
            for j in 0..m {
                line[j + 1] = Complex::new(row[j], T::zero());
                line[len - 1 - j] = Complex::new(-row[j], T::zero());
            }
        }
        self.fft.process(&mut buf);
        let half = T::of(0.5);
        for (row, line) in data.chunks_exact_mut(m).zip(buf.chunks_exact(len)) {
            for k in 0..m {
                row[k] = -line[k + 1].im * half;
            }
        }
    }

    fn transpose(&self, data: &mut [T]) {
        let m = self.m;
        for i in 0..m {
            for j in i + 1..m {
                data.swap(i * m + j, j * m + i);
            }
        }
    }

    fn dst2(&self, data: &mut [T]) {
        self.dst_rows(data);
        self.transpose(data);
        self.dst_rows(data);
        self.transpose(data);
    }

    fn diagonal_scale(&self, x: &[T], divide: bool) -> Vec<T> {
        let mut data = x.to_vec();
        self.dst2(&mut data);
        let norm = T::of(2.0) / T::of_usize(self.m + 1);
        let norm = norm * norm;
        for (d, &e) in data.iter_mut().zip(&self.eig) {
            *d = if divide { *d / e } else { *d * e } * norm;
        }
        self.dst2(&mut data);
        data
    }

    /// `M^-1 b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.size());
        self.diagonal_scale(b, true)
    }

    /// `M x`.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.size());
        self.diagonal_scale(x, false)
    }
}

impl<T: Real> Preconditioner<T> for SpectralOperator<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        z.copy_from_slice(&self.solve(r));
    }
}
