use super::{Ball, GridFunction, Region};
use crate::error::{Error, Result};
use crate::scalar::Real;

fn empty_ball<T: Real>(f: &GridFunction<T>, ball: &Ball<T>) -> Error {
    Error::EmptyBall {
        cx: ball.center[0].f64(),
        cy: ball.center[1].f64(),
        radius: ball.radius.f64(),
        min_radius: f.grid().min_ball_radius().f64(),
    }
}

/// Chords of `ball`, rejecting balls below `2h` or missing the grid.
pub(crate) fn resolvable_chords<T: Real>(
    f: &GridFunction<T>,
    ball: &Ball<T>,
) -> Result<Vec<(usize, usize, usize)>> {
    if ball.radius < f.grid().min_ball_radius() {
        return Err(empty_ball(f, ball));
    }
    let chords = f.grid().chords(ball);
    if chords.is_empty() {
        return Err(empty_ball(f, ball));
    }
    Ok(chords)
}

/// Number of cell centres in `ball`.
pub fn ball_cell_count<T: Real>(f: &GridFunction<T>, ball: &Ball<T>) -> Result<usize> {
    Ok(resolvable_chords(f, ball)?
        .iter()
        .map(|&(_, a, b)| b - a)
        .sum())
}

/// Componentwise counting-measure mean of `f` over the cells of `ball`.
pub fn ball_average<T: Real>(f: &GridFunction<T>, ball: &Ball<T>) -> Result<Vec<T>> {
    let chords = resolvable_chords(f, ball)?;
    let c = f.components();
    let n = f.grid().n();
    let vals = f.values();
    let mut acc = [0.0f64; 4];
    let mut count = 0usize;
    for (j, a, b) in chords {
        for idx in j * n + a..j * n + b {
            for k in 0..c {
                acc[k] += vals[idx * c + k].f64();
            }
        }
        count += b - a;
    }
    Ok(acc[..c].iter().map(|&s| T::of(s / count as f64)).collect())
}

fn check_exponent<T: Real>(p: T) -> Result<()> {
    if !(p > T::zero() && p <= T::one()) {
        return Err(Error::InvalidExponent {
            value: p.f64(),
            expected: "0 < p <= 1",
        });
    }
    Ok(())
}

/// `(mean_{ball} |f|^p)^(1/p)`, the `L^p` quasi-norm average for `0 < p <= 1`.
pub fn lp_quasi_mean<T: Real>(f: &GridFunction<T>, ball: &Ball<T>, p: T) -> Result<T> {
    check_exponent(p)?;
    let chords = resolvable_chords(f, ball)?;
    let n = f.grid().n();
    let pf = p.f64();
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for (j, a, b) in chords {
        for idx in j * n + a..j * n + b {
            let v = f.norm_at(idx).f64();
            if v > 0.0 {
                acc += v.powf(pf);
            }
        }
        count += b - a;
    }
    Ok(T::of((acc / count as f64).powf(1.0 / pf)))
}

/// `h^2 * #{cells in region : |f| > alpha}`.
pub fn distribution_measure<T: Real>(f: &GridFunction<T>, alpha: T, region: &Region<T>) -> T {
    let mut count = 0usize;
    f.grid().for_each_in(region, |i| {
        if f.norm_at(i) > alpha {
            count += 1;
        }
    });
    T::of_usize(count) * f.grid().cell_area()
}

/// `sum_{region} |f|^p h^2` by direct summation.
pub fn power_integral<T: Real>(f: &GridFunction<T>, p: T, region: &Region<T>) -> T {
    let pf = p.f64();
    let mut acc = 0.0f64;
    f.grid().for_each_in(region, |i| {
        let v = f.norm_at(i).f64();
        if v > 0.0 {
            acc += v.powf(pf);
        }
    });
    T::of(acc * f.grid().cell_area().f64())
}

/// `int_0^inf p a^(p-1) |{|f| > a}| da`, integrated exactly over the step
/// function determined by the sorted value multiset.
pub fn layer_cake_integral<T: Real>(f: &GridFunction<T>, p: T, region: &Region<T>) -> T {
    let pf = p.f64();
    let mut vals: Vec<f64> = Vec::new();
    f.grid()
        .for_each_in(region, |i| vals.push(f.norm_at(i).f64()));
    vals.sort_unstable_by(|a, b| b.total_cmp(a));
    // On [v_{k+1}, v_k) exactly k values exceed alpha.
    let mut acc = 0.0f64;
    for k in 0..vals.len() {
        let upper = vals[k].powf(pf);
        let lower = vals.get(k + 1).map_or(0.0, |v| v.powf(pf));
        acc += (k + 1) as f64 * (upper - lower);
    }
    T::of(acc * f.grid().cell_area().f64())
}

/// `sum_{region} |f| h^2`.
pub fn region_l1_norm<T: Real>(f: &GridFunction<T>, region: &Region<T>) -> T {
    let mut acc = 0.0f64;
    f.grid().for_each_in(region, |i| acc += f.norm_at(i).f64());
    T::of(acc * f.grid().cell_area().f64())
}

/// `max_{region} |f|` (zero for an empty region).
pub fn region_max_norm<T: Real>(f: &GridFunction<T>, region: &Region<T>) -> T {
    let mut m = T::zero();
    f.grid().for_each_in(region, |i| m = m.max(f.norm_at(i)));
    m
}
