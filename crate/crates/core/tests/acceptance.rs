//! Acceptance runner: one line per criterion with the measured quantity, the
//! threshold and the wall time against its budget.
//!
//! Criteria listed in `KNOWN_RED` are reported as FAIL but do not fail the run;
//! every other failure exits with status 1.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dinilab::coeffs::{
    constant_field, log_family, log_power_family, smooth_data_field, Angular, LogScaling,
    SmoothKind,
};
use dinilab::grid::{
    layer_cake_integral, lp_quasi_mean, power_integral, Ball, Grid, GridFunction, Rank, Region,
};
use dinilab::oscillation::{
    dini_integral, dyadic_sum_check, lemma4_bound_check_for, measure_profile, tilde_transform,
    CatalogModulus, CenterLattice, OscillationProfile, TildeParams,
};
use dinilab::regularity::{campanato_decay, campanato_phi, regularity_target, resolvable_levels};
use dinilab::solver::{assemble, Backend, DofMap, Form, LinearMethod, SolveOptions};
use dinilab::weaktype::{concentration_study, hormander_study};
use dinilab::{CoefficientField64, Grid64};

/// `ln(4/r) int_0^r omega~/t dt` varies by about 3.2 rather than 2, whatever kappa is.
const KNOWN_RED: &[usize] = &[4];

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

type Outcome = Result<Verdict, String>;

fn identity(grid: Grid64) -> CoefficientField64 {
    constant_field(grid, [[1.0, 0.0], [0.0, 1.0]]).unwrap()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn spread(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn oscillation_exponent() -> Outcome {
    let g = Grid::new(4096, 1.0).map_err(e)?;
    // rho = |x| / 16 puts r = 2^-14 at two cells.
    let scaling = LogScaling::with_scale(&g, 16.0);
    let field = log_family(g, 0.25, scaling).map_err(e)?;
    let r: Vec<f64> = (0..=20).map(|k| 2f64.powf(-4.0 - 0.5 * k as f64)).collect();
    let grid_r: Vec<f64> = r.iter().map(|&t| scaling.to_grid_radius(t)).collect();
    let profile = measure_profile(&field, &grid_r, &CenterLattice::adaptive()).map_err(e)?;
    let xs: Vec<f64> = r.iter().map(|t| (-t.ln()).ln()).collect();
    let ys: Vec<f64> = profile.omega().iter().map(|w| w.ln()).collect();
    let s = slope(&xs, &ys);
    Ok(verdict(
        (s + 1.25).abs() <= 0.15,
        format!("slope {s:.4}, expected -1.25 +- 0.15"),
    ))
}

fn dini_oracle() -> Outcome {
    let m = CatalogModulus::LogPower(1.5);
    let profile = OscillationProfile::sample(&m, 2f64.powi(-4), 2f64.powi(-120), 8).map_err(e)?;
    let value = dini_integral(&profile, 1e-2).map_err(e)?;
    let exact = 2.0 / 100f64.ln().sqrt();
    let rel = (value - exact).abs() / exact;
    Ok(verdict(
        rel < 0.02,
        format!("{value:.5} vs {exact:.5}, relative error {rel:.2e} (limit 2e-2)"),
    ))
}

fn dyadic_band() -> Outcome {
    let mut ratios = Vec::new();
    for m in CatalogModulus::dini_examples() {
        let profile =
            OscillationProfile::sample(&m, 2f64.powi(-4), 2f64.powi(-120), 8).map_err(e)?;
        for k in [4, 8, 12] {
            ratios.push(
                dyadic_sum_check(&profile, TildeParams::DEFAULT_KAPPA, 2f64.powi(-k))
                    .map_err(e)?
                    .ratio,
            );
        }
    }
    let band = spread(&ratios);
    let finite = ratios.iter().all(|r| r.is_finite() && *r > 0.0);
    Ok(verdict(
        finite && band <= 10.0,
        format!("ratio band {band:.3} over 9 cases (limit 10)"),
    ))
}

fn lemma_four() -> Outcome {
    let m = CatalogModulus::ShiftedLogPower(2.0);
    let params = TildeParams::new(0.25).map_err(e)?;
    let r: Vec<f64> = (2..=20).map(|k| 2f64.powi(-k)).collect();
    let rep = lemma4_bound_check_for(&m, &params, &r).map_err(e)?;
    Ok(verdict(
        rep.sup.is_finite() && rep.variation < 2.0,
        format!(
            "sup {:.3}, variation {:.3} (limit 2)",
            rep.sup, rep.variation
        ),
    ))
}

/// `u* = sin(pi x) sin(pi y)` with gradient and Hessian.
fn manufactured(x: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let k = std::f64::consts::PI;
    let (s1, c1) = (k * x[0]).sin_cos();
    let (s2, c2) = (k * x[1]).sin_cos();
    let m = k * k * c1 * c2;
    (
        s1 * s2,
        [k * c1 * s2, k * s1 * c2],
        [[-k * k * s1 * s2, m], [m, -k * k * s1 * s2]],
    )
}

fn solver_convergence() -> Outcome {
    let a = [[1.5, 0.3], [0.3, 1.0]];
    let mut worst = f64::INFINITY;
    let mut detail = Vec::new();
    for form in [Form::Divergence, Form::Nondivergence] {
        let mut errors = Vec::new();
        for n in [64, 128, 256, 512] {
            let g = Grid::with_boundary_nodes_at(n, 1.0).map_err(e)?;
            let field = constant_field(g, a).map_err(e)?;
            let source = match form {
                Form::Divergence => GridFunction::vector_from_fn(g, |x| {
                    let d = manufactured(x).1;
                    [
                        a[0][0] * d[0] + a[0][1] * d[1],
                        a[1][0] * d[0] + a[1][1] * d[1],
                    ]
                }),
                _ => GridFunction::scalar_from_fn(g, |x| {
                    let h = manufactured(x).2;
                    a[0][0] * h[0][0] + 2.0 * a[0][1] * h[0][1] + a[1][1] * h[1][1]
                }),
            };
            let op = assemble(form, &field, DofMap::interior(&g), Backend::Auto).map_err(e)?;
            let u = op.solve(&source).map_err(e)?.solution;
            let exact = GridFunction::scalar_from_fn(g, |x| manufactured(x).0);
            errors.push((g.h(), u.sub(&exact).map_err(e)?.l2_norm(&Region::Domain)));
        }
        let orders: Vec<f64> = errors
            .windows(2)
            .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
            .collect();
        worst = orders.iter().cloned().fold(worst, f64::min);
        detail.push(format!("{}: {:.3?}", form.name(), orders));
    }
    Ok(verdict(
        worst >= 1.8,
        format!("orders {} (limit 1.8)", detail.join("; ")),
    ))
}

/// `sum_c G(c) : D^2 v(c)` with central differences and `v = 0` off the dofs.
fn hessian_pairing_reference(
    big_g: &GridFunction<f64>,
    v: &GridFunction<f64>,
    dofs: &DofMap,
) -> (f64, f64) {
    let grid = *v.grid();
    let n = grid.n() as isize;
    let h2 = grid.h() * grid.h();
    let at = |i: isize, j: isize| {
        if i < 0 || j < 0 || i >= n || j >= n {
            return 0.0;
        }
        let c = (j * n + i) as usize;
        if dofs.dof(c).is_some() {
            v.values()[c]
        } else {
            0.0
        }
    };
    let (mut sum, mut abs) = (0.0, 0.0);
    for &c in dofs.cells() {
        let (i, j) = grid.cell(c);
        let (i, j) = (i as isize, j as isize);
        let vxx = (at(i + 1, j) - 2.0 * at(i, j) + at(i - 1, j)) / h2;
        let vyy = (at(i, j + 1) - 2.0 * at(i, j) + at(i, j - 1)) / h2;
        let vxy = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1))
            / (4.0 * h2);
        let m = big_g.at(c);
        let term = m[0] * vxx + (m[1] + m[2]) * vxy + m[3] * vyy;
        sum += term;
        abs += term.abs();
    }
    (sum, abs)
}

fn adjoint_identity() -> Outcome {
    let g = Grid::new(128, 1.0).map_err(e)?;
    let field = log_family(g, 0.25, LogScaling::for_grid(&g)).map_err(e)?;
    let options = SolveOptions {
        method: LinearMethod::Direct,
        ..SolveOptions::default()
    };
    let adj = assemble(Form::Adjoint, &field, DofMap::interior(&g), Backend::Sparse)
        .map_err(e)?
        .with_options(options);
    let nd = assemble(
        Form::Nondivergence,
        &field,
        DofMap::interior(&g),
        Backend::Sparse,
    )
    .map_err(e)?;
    let big_g = GridFunction::matrix_from_fn(g, |x: [f64; 2]| {
        let off = (2.0 * x[0] - x[1]).sin();
        [[1.0 + x[1] * x[1], off], [off, (3.0 * x[0]).cos()]]
    });
    let u = adj.solve_adjoint(&big_g).map_err(e)?.solution;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let modes: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.5..4.0),
                    rng.gen_range(0.5..4.0),
                    rng.gen_range(0.0..6.3),
                )
            })
            .collect();
        let v = GridFunction::scalar_from_fn(g, |x| {
            let bump = (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]);
            bump * modes
                .iter()
                .map(|&(c, k1, k2, ph)| c * (k1 * x[0] + k2 * x[1] + ph).sin())
                .sum::<f64>()
        });
        let v = adj.dofs().scatter(g, &adj.dofs().gather(&v));
        let mv = nd.apply(&v);
        let cells = adj.dofs().cells();
        let lhs: f64 = cells.iter().map(|&c| u.values()[c] * mv.values()[c]).sum();
        let lhs_abs: f64 = cells
            .iter()
            .map(|&c| (u.values()[c] * mv.values()[c]).abs())
            .sum();
        let (rhs, rhs_abs) = hessian_pairing_reference(&big_g, &v, adj.dofs());
        worst = worst.max((lhs - rhs).abs() / lhs_abs.max(rhs_abs));
    }
    Ok(verdict(
        worst < 1e-10,
        format!("worst relative defect {worst:.2e} over 20 v (limit 1e-10)"),
    ))
}

fn weak_type_uniformity() -> Outcome {
    let g = Grid::new(1024, 1.0).map_err(e)?;
    let field = identity(g);
    let radii: Vec<f64> = (2..=6).map(|k| 2f64.powi(-k)).collect();
    let mut passed = true;
    let mut detail = Vec::new();
    for (form, limit) in [
        (Form::Divergence, 2.0),
        (Form::Nondivergence, 3.0),
        (Form::Adjoint, 3.0),
    ] {
        let op = assemble(form, &field, DofMap::interior(&g), Backend::Auto).map_err(e)?;
        let study = concentration_study(&op, [0.0, 0.0], &radii, None).map_err(e)?;
        let v = study.variation();
        passed &= v.is_finite() && v < limit;
        detail.push(format!("{} {v:.3} (limit {limit})", form.name()));
    }
    Ok(verdict(passed, format!("variation {}", detail.join(", "))))
}

fn hormander_localization() -> Outcome {
    let g = Grid::new(512, 1.0).map_err(e)?;
    let op = assemble(
        Form::Divergence,
        &identity(g),
        DofMap::interior(&g),
        Backend::Auto,
    )
    .map_err(e)?;
    let centers: Vec<[f64; 2]> = [-0.25, 0.0, 0.25]
        .iter()
        .flat_map(|&y| [-0.25, 0.0, 0.25].map(|x| [x, y]))
        .collect();
    let rep = hormander_study(&op, &centers, &[0.125, 0.0625, 0.03125], 2.0).map_err(e)?;
    let slopes: Vec<f64> = rep.samples.iter().filter_map(|s| s.decay_slope()).collect();
    let excess = rep
        .samples
        .iter()
        .filter_map(|s| s.envelope_excess())
        .fold(0.0, f64::max);
    // A slope needs two annuli inside the domain; the largest bumps near the corners have one.
    let slopes_ok =
        2 * slopes.len() >= rep.samples.len() && slopes.iter().all(|s| (-2.0..=-0.5).contains(s));
    let lo = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(verdict(
        rep.sup_ratio.is_finite() && rep.variation() < 2.0 && slopes_ok && excess <= 2.0,
        format!(
            "{} samples, ratio variation {:.3} (limit 2), {} slopes in [{lo:.3}, {hi:.3}] (within [-2, -0.5]), envelope excess {excess:.3} (limit 2)",
            rep.samples.len(),
            rep.variation(),
            slopes.len()
        ),
    ))
}

fn dini_regime_weak_type() -> Outcome {
    let g = Grid::new(512, 1.0).map_err(e)?;
    let field = log_power_family(g, 2.0, Angular::Mode2, LogScaling::for_grid(&g)).map_err(e)?;
    let op = assemble(
        Form::Divergence,
        &field,
        DofMap::interior(&g),
        Backend::Auto,
    )
    .map_err(e)?;
    let radii: Vec<f64> = (2..=5).map(|k| 2f64.powi(-k)).collect();
    let study = concentration_study(&op, [0.0, 0.0], &radii, None).map_err(e)?;
    let v = study.variation();
    Ok(verdict(
        v.is_finite() && v < 3.0,
        format!(
            "constants {:.3?}, variation {v:.3} (limit 3)",
            study.constants()
        ),
    ))
}

/// `(phi_J / phi_0, least-squares C)` for a divergence solve at resolution `n`.
fn campanato_at(n: usize) -> Result<(f64, f64), String> {
    let g = Grid::new(n, 1.0).map_err(e)?;
    let field = log_family(g, 0.25, LogScaling::for_grid(&g)).map_err(e)?;
    let data = smooth_data_field(g, SmoothKind::Trig, Rank::Vector);
    let op = assemble(
        Form::Divergence,
        &field,
        DofMap::interior(&g),
        Backend::Auto,
    )
    .map_err(e)?;
    let u = op.solve(&data).map_err(e)?.solution;
    let target = regularity_target(Form::Divergence, &u);
    let params = TildeParams::new(0.25).map_err(e)?;
    let mut radii = Vec::new();
    let mut r = 1.0;
    while r >= g.min_ball_radius() {
        radii.push(r);
        r *= 0.5;
    }
    let wa = measure_profile(&field, &radii, &CenterLattice::adaptive()).map_err(e)?;
    let wg = measure_profile(&data, &radii, &CenterLattice::adaptive()).map_err(e)?;
    let levels = resolvable_levels(&g, 0.5, 0.25);
    let curve = campanato_decay(&target, [0.0, 0.0], 0.5, &params, levels, 0.5).map_err(e)?;
    let c =
        curve.fit_constant(|t| tilde_transform(&wa, &params, t) + tilde_transform(&wg, &params, t));
    Ok((curve.decay_ratio(), c))
}

fn campanato_stability() -> Outcome {
    let (d0, c0) = campanato_at(512)?;
    let (d1, c1) = campanato_at(1024)?;
    let ratio = c1 / c0;
    Ok(verdict(
        d0 < 0.1 && d1 < 0.1 && ratio.is_finite() && (0.5..=2.0).contains(&ratio),
        format!("decay {d0:.4} / {d1:.4} (limit 0.1), C {c0:.4} -> {c1:.4}, ratio {ratio:.3} (within [0.5, 2])"),
    ))
}

fn quasi_norm_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = Grid::new(32, 1.0).map_err(e)?;
    let random = |rng: &mut ChaCha8Rng| {
        let vals: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GridFunction::from_values(g, Rank::Scalar, vals).unwrap()
    };
    let mut failures = Vec::new();
    for case in 0..200 {
        let p = rng.gen_range(0.2..1.0);
        let ball = Ball::new(
            [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)],
            rng.gen_range(0.2..0.6),
        )
        .map_err(e)?;
        let f = random(&mut rng);
        let h = random(&mut rng);
        let lambda = rng.gen_range(-5.0..5.0);
        let nf = lp_quasi_mean(&f, &ball, p).map_err(e)?;
        let nh = lp_quasi_mean(&h, &ball, p).map_err(e)?;
        let scaled = lp_quasi_mean(&f.scaled(lambda), &ball, p).map_err(e)?;
        if (scaled - lambda.abs() * nf).abs() > 1e-12 * lambda.abs() * nf {
            failures.push(format!("homogeneity case {case}"));
        }
        let sum = lp_quasi_mean(&f.add(&h).map_err(e)?, &ball, p).map_err(e)?;
        if sum > 2f64.powf((1.0 - p) / p) * (nf + nh) * (1.0 + 1e-12) {
            failures.push(format!("quasi-triangle case {case}"));
        }
        let region = Region::Ball(ball);
        let direct = power_integral(&f, p, &region);
        let layered = layer_cake_integral(&f, p, &region);
        if (direct - layered).abs() > 1e-12 * direct {
            failures.push(format!("layer cake case {case}"));
        }
    }
    // For scalar data the p < 1 cost is concave between sample values, so the
    // infimum over constants is attained at one of them.
    let small = Grid::new(16, 1.0).map_err(e)?;
    for case in 0..10 {
        let p = rng.gen_range(0.25..0.9);
        let f = GridFunction::scalar_from_fn(small, |_| rng.gen_range(-1.0..1.0));
        let ball =
            Ball::new([rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)], 0.5).map_err(e)?;
        let cells = small.cells_in(&Region::Ball(ball));
        let cost = |q: f64| {
            let s: f64 = cells
                .iter()
                .map(|&c| (f.values()[c] - q).abs().powf(p))
                .sum();
            (s / cells.len() as f64).powf(1.0 / p)
        };
        let inf = cells
            .iter()
            .map(|&c| cost(f.values()[c]))
            .fold(f64::INFINITY, f64::min);
        let (phi, _) = campanato_phi(&f, &ball, p).map_err(e)?;
        if !(inf <= phi * (1.0 + 1e-12) && phi <= 2f64.powf(1.0 / p) * inf) {
            failures.push(format!("campanato comparability case {case}"));
        }
    }
    Ok(verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "200 quasi-norm cases and 10 infimum cases".into()
        } else {
            failures.join(", ")
        },
    ))
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, u64, fn() -> Outcome); 11] = [
        (1, "oscillation exponent", 120, oscillation_exponent),
        (2, "dini integral oracle", 1, dini_oracle),
        (3, "dyadic sum band", 1, dyadic_band),
        (4, "tilde Dini bound", 1, lemma_four),
        (5, "solver convergence", 120, solver_convergence),
        (6, "adjoint identity", 30, adjoint_identity),
        (7, "weak-(1,1) uniformity", 600, weak_type_uniformity),
        (8, "hormander localization", 300, hormander_localization),
        (9, "dini regime weak type", 600, dini_regime_weak_type),
        (10, "campanato decay", 300, campanato_stability),
        (11, "quasi-norm invariants", 30, quasi_norm_invariants),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut unexpected = 0;
    for (id, name, budget, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= Duration::from_secs(budget);
        let (passed, detail) = match outcome {
            Ok(v) => (v.passed && in_budget, v.detail),
            Err(err) => (false, format!("error: {err}")),
        };
        let known = KNOWN_RED.contains(&id);
        let tag = match (passed, known) {
            (true, false) => "PASS",
            (true, true) => "PASS (listed as known red)",
            (false, true) => "FAIL (known red)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {id:>2} {tag}: {name}: {detail}; {:.2}s of {budget}s",
            elapsed.as_secs_f64()
        );
        if !passed && !known {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
