use super::{GridFunction, Rank};
use crate::scalar::Real;

#[derive(Clone, Copy)]
enum Axis {
    X1,
    X2,
}

fn line(n: usize, axis: Axis, line: usize, k: usize) -> usize {
    match axis {
        Axis::X1 => line * n + k,
        Axis::X2 => k * n + line,
    }
}

/// Second-order first derivative along `axis`, one-sided on the outer ring.
fn first_derivative<T: Real>(u: &[T], n: usize, h: T, axis: Axis) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    let half = T::of(0.5) / h;
    let (three, four) = (T::of(3.0), T::of(4.0));
    for l in 0..n {
        let at = |k: usize| u[line(n, axis, l, k)];
        out[line(n, axis, l, 0)] = (-three * at(0) + four * at(1) - at(2)) * half;
        for k in 1..n - 1 {
            out[line(n, axis, l, k)] = (at(k + 1) - at(k - 1)) * half;
        }
        let e = n - 1;
        out[line(n, axis, l, e)] = (three * at(e) - four * at(e - 1) + at(e - 2)) * half;
    }
    out
}

/// Second-order second derivative along `axis`, one-sided on the outer ring.
fn second_derivative<T: Real>(u: &[T], n: usize, h: T, axis: Axis) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    let inv = T::one() / (h * h);
    let (two, four, five) = (T::of(2.0), T::of(4.0), T::of(5.0));
    for l in 0..n {
        let at = |k: usize| u[line(n, axis, l, k)];
        out[line(n, axis, l, 0)] = (two * at(0) - five * at(1) + four * at(2) - at(3)) * inv;
        for k in 1..n - 1 {
            out[line(n, axis, l, k)] = (at(k + 1) - two * at(k) + at(k - 1)) * inv;
        }
        let e = n - 1;
        out[line(n, axis, l, e)] =
            (two * at(e) - five * at(e - 1) + four * at(e - 2) - at(e - 3)) * inv;
    }
    out
}

fn scalar_values<T: Real>(u: &GridFunction<T>) -> &[T] {
    assert_eq!(
        u.rank(),
        Rank::Scalar,
        "finite differences need a scalar grid function"
    );
    u.values()
}

/// Discrete gradient `Du`.
pub fn finite_difference_gradient<T: Real>(u: &GridFunction<T>) -> GridFunction<T> {
    let g = *u.grid();
    let (n, h) = (g.n(), g.h());
    let v = scalar_values(u);
    let d1 = first_derivative(v, n, h, Axis::X1);
    let d2 = first_derivative(v, n, h, Axis::X2);
    let values = d1.iter().zip(&d2).flat_map(|(&a, &b)| [a, b]).collect();
    GridFunction::from_raw(g, Rank::Vector, values)
}

/// Discrete Hessian `D^2u`, symmetric by construction.
pub fn finite_difference_hessian<T: Real>(u: &GridFunction<T>) -> GridFunction<T> {
    let g = *u.grid();
    let (n, h) = (g.n(), g.h());
    let v = scalar_values(u);
    let d11 = second_derivative(v, n, h, Axis::X1);
    let d22 = second_derivative(v, n, h, Axis::X2);
    let d12a = first_derivative(&first_derivative(v, n, h, Axis::X2), n, h, Axis::X1);
    let d12b = first_derivative(&first_derivative(v, n, h, Axis::X1), n, h, Axis::X2);
    let half = T::of(0.5);
    let mut values = Vec::with_capacity(4 * n * n);
    for k in 0..n * n {
        let m = (d12a[k] + d12b[k]) * half;
        values.extend_from_slice(&[d11[k], m, m, d22[k]]);
    }
    GridFunction::from_raw(g, Rank::Matrix, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn gradient_of_linear_is_exact() {
        let g = Grid::<f64>::new(16, 1.0).unwrap();
        let u = GridFunction::scalar_from_fn(g, |x| x[0]);
        let du = finite_difference_gradient(&u);
        for k in 0..g.len() {
            assert!((du.at(k)[0] - 1.0).abs() < 1e-12);
            assert!(du.at(k)[1].abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_of_quadratics_is_exact() {
        let g = Grid::<f64>::new(16, 1.0).unwrap();
        let u = GridFunction::scalar_from_fn(g, |x| x[0] * x[1]);
        let d = finite_difference_hessian(&u);
        for k in 0..g.len() {
            let m = d.at(k);
            assert!(m[0].abs() < 1e-10 && m[3].abs() < 1e-10, "{m:?}");
            assert!((m[1] - 1.0).abs() < 1e-10 && m[1] == m[2]);
        }
        let u = GridFunction::scalar_from_fn(g, |x| 3.0 * x[0] * x[0] - x[1] * x[1]);
        let d = finite_difference_hessian(&u);
        for k in 0..g.len() {
            let m = d.at(k);
            assert!((m[0] - 6.0).abs() < 1e-9 && (m[3] + 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_order_on_refinement() {
        use std::f64::consts::PI;
        let err = |n: usize| {
            let g = Grid::<f64>::new(n, 1.0).unwrap();
            let u = GridFunction::scalar_from_fn(g, |x| (PI * x[0]).sin());
            let du = finite_difference_gradient(&u);
            (0..g.len())
                .map(|k| (du.at(k)[0] - PI * (PI * g.point_of(k)[0]).cos()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(64), err(128));
        assert!((e1 / e2).log2() >= 1.9, "{e1} {e2}");
    }
}
