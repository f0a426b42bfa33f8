use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use dinilab::coeffs::{
    constant_field, log_family, log_power_family, smooth_data_field, Angular, LogScaling,
    SmoothKind,
};
use dinilab::grid::{Ball, Grid, GridFunction, Region};
use dinilab::oscillation::{
    dini_integral, dyadic_sum_check, lemma4_bound_check_for, measure_profile, tilde_transform,
    CatalogModulus, CenterLattice, Modulus, OscillationProfile, TildeParams,
};
use dinilab::regularity::{
    campanato_decay, freezing_experiment, regularity_target, resolvable_levels, FreezeReport,
};
use dinilab::solver::{assemble, Backend, DiscreteOperator, DofMap, Form, SolveOptions};
use dinilab::weaktype::{
    concentration_study, hormander_study, WeakTypeReport, CONSTANT_COEFFICIENT_SEPARATION,
    DEFAULT_SEPARATION,
};
use dinilab::{CoefficientField64, Grid64};

use crate::config::ExperimentConfig;
use crate::RunError;

/// Validated inputs of a run with the grid-level objects already built.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub grid: Grid64,
    pub field: CoefficientField64,
    pub form: Form,
    pub data: SmoothKind,
    pub centers: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

pub struct Outcome {
    /// `(file name, CSV body)` in write order.
    pub tables: Vec<(String, String)>,
    pub summary: Value,
    pub check: Check,
}

fn config_err(e: dinilab::Error) -> RunError {
    RunError::Config(format!("field: {e}"))
}

fn solver_err(context: &str) -> impl Fn(dinilab::Error) -> RunError + '_ {
    move |source| RunError::Solver {
        context: context.to_string(),
        source,
    }
}

/// Independent generator per purpose, all derived from the config seed.
pub fn named_rng(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a of the name picks the stream.
    let stream = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn build_field(config: &ExperimentConfig, grid: Grid64) -> Result<CoefficientField64, RunError> {
    let f = &config.field;
    let scaling = || {
        let mut s = LogScaling::with_scale(&grid, f.scale * grid.extent());
        s.r_cap = f.r_cap;
        s
    };
    match f.name.as_str() {
        "constant" => constant_field(grid, [[f.a11, f.a12], [f.a21, f.a22]]),
        "log_family" => log_family(grid, f.gamma, scaling()),
        _ => {
            let angular = if f.angular == "radial" {
                Angular::Radial
            } else {
                Angular::Mode2
            };
            log_power_family(grid, f.sigma, angular, scaling())
        }
    }
    .map_err(config_err)
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, RunError> {
    let grid = Grid::new(config.grid.n, config.grid.extent)
        .map_err(|e| RunError::Config(format!("grid: {e}")))?;
    let field = build_field(config, grid)?;
    let form = Form::from_name(&config.params.form).expect("validated");
    if form != Form::Divergence && !field.is_symmetric() {
        return Err(RunError::Config(
            "field: nondivergence and adjoint forms need a symmetric field".into(),
        ));
    }
    let data = SmoothKind::from_name(&config.data.name).expect("validated");
    let mut centers =
        config
            .params
            .centers
            .clone()
            .unwrap_or_else(|| match config.experiment.as_str() {
                "hormander" => {
                    let q = 0.25 * grid.extent();
                    [-q, 0.0, q]
                        .iter()
                        .flat_map(|&y| [-q, 0.0, q].map(|x| [x, y]))
                        .collect()
                }
                _ => vec![[0.0, 0.0]],
            });
    let mut rng = named_rng(config.seed, "centers");
    let q = 0.25 * grid.extent();
    for _ in 0..config.params.random_centers {
        centers.push([rng.gen_range(-q..q), rng.gen_range(-q..q)]);
    }
    Ok(Prepared {
        config: config.clone(),
        grid,
        field,
        form,
        data,
        centers,
    })
}

pub fn execute(p: &Prepared) -> Result<Outcome, RunError> {
    match p.config.experiment.as_str() {
        "oscillation" => oscillation(p),
        "dini" => dini(p),
        "campanato" => campanato(p),
        "freezing" => freezing(p),
        "weaktype" => weaktype(p),
        "hormander" => hormander(p),
        "convergence" => convergence(p),
        other => unreachable!("validated experiment {other}"),
    }
}

fn dyadic_radii(top: f64, floor: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = top;
    while r >= floor * (1.0 - 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    out
}

fn lattice(p: &Prepared) -> CenterLattice {
    if p.config.params.lattice == "adaptive" {
        CenterLattice::adaptive()
    } else {
        CenterLattice::default()
    }
}

fn tilde_params(p: &Prepared) -> TildeParams {
    TildeParams::new(p.config.params.kappa).expect("validated kappa")
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn csv_from<F: FnOnce(&mut Vec<u8>) -> dinilab::Result<()>>(write: F) -> Result<String, RunError> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| RunError::Io(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("reports are UTF-8"))
}

fn pass_if(passed: bool, detail: String) -> Check {
    Check { passed, detail }
}

fn radii_or(p: &Prepared, default: Vec<f64>) -> Vec<f64> {
    p.config.params.radii.clone().unwrap_or(default)
}

fn oscillation(p: &Prepared) -> Result<Outcome, RunError> {
    let g = p.grid;
    let radii = radii_or(p, dyadic_radii(0.5 * g.extent(), g.min_ball_radius()));
    let profile =
        measure_profile(&p.field, &radii, &lattice(p)).map_err(solver_err("oscillation"))?;
    let table = csv_from(|w| profile.write_csv(w, &tilde_params(p)))?;
    // Radii in the field's own length unit.
    let unit = if p.config.field.name == "constant" {
        g.extent()
    } else {
        p.config.field.scale * g.extent()
    };
    let positive = profile.omega().iter().all(|&w| w > 0.0) && radii.iter().all(|&r| r < unit);
    let fitted = positive.then(|| {
        let xs: Vec<f64> = radii.iter().map(|r| (-(r / unit).ln()).ln()).collect();
        let ys: Vec<f64> = profile.omega().iter().map(|w| w.ln()).collect();
        slope(&xs, &ys)
    });
    let check = match (p.config.params.expected_slope, fitted) {
        (Some(e), Some(s)) => pass_if(
            (s - e).abs() <= p.config.params.slope_tolerance,
            format!("slope {s:.4} vs expected {e}"),
        ),
        (Some(e), None) => pass_if(false, format!("no slope to compare with {e}")),
        _ => pass_if(
            profile.omega().iter().all(|w| w.is_finite()),
            "oscillation finite".into(),
        ),
    };
    let summary = json!({ "radii": radii, "omega": profile.omega(), "slope_vs_loglog": fitted });
    Ok(Outcome {
        tables: vec![("oscillation.csv".into(), table)],
        summary,
        check,
    })
}

fn catalog_modulus(p: &Prepared) -> CatalogModulus {
    let s = p.config.params.modulus_exponent;
    match p.config.params.modulus.as_str() {
        "linear" => CatalogModulus::Linear,
        "constant" => CatalogModulus::Constant(s),
        "log_power" => CatalogModulus::LogPower(s),
        _ => CatalogModulus::ShiftedLogPower(s),
    }
}

fn dini(p: &Prepared) -> Result<Outcome, RunError> {
    let m = catalog_modulus(p);
    let radii = radii_or(p, vec![1e-2, 2f64.powi(-4), 2f64.powi(-8), 2f64.powi(-12)]);
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    let profile =
        OscillationProfile::sample(&m, r_max, 2f64.powi(-120), 8).map_err(solver_err("dini"))?;
    let mut table = String::from("r,dini_integral,dyadic_sum,fine_integral,dyadic_ratio\n");
    let mut ratios = Vec::new();
    let mut integrals = Vec::new();
    for &r in &radii {
        let integral = dini_integral(&profile, r).ok();
        let check = dyadic_sum_check(&profile, p.config.params.kappa, r).ok();
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:?}"));
        table.push_str(&format!(
            "{r:?},{},{},{},{}\n",
            fmt(integral),
            fmt(check.as_ref().map(|c| c.sum)),
            fmt(check.as_ref().map(|c| c.integral)),
            fmt(check.as_ref().map(|c| c.ratio))
        ));
        integrals.push(integral);
        ratios.extend(check.map(|c| c.ratio));
    }
    let lemma4 = m
        .omega(1.0)
        .is_finite()
        .then(|| lemma4_bound_check_for(&m, &tilde_params(p), &radii).ok())
        .flatten();
    let band = ratios.iter().cloned().fold(0.0, f64::max)
        / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let converged = integrals.iter().all(Option::is_some);
    let check = pass_if(
        converged && ratios.len() == radii.len() && band <= 10.0,
        format!("dini integrals finite: {converged}, dyadic ratio band {band:.3}"),
    );
    let summary = json!({
        "modulus": m.name(),
        "radii": radii,
        "dini_integral": integrals,
        "dyadic_ratio_band": band,
        "lemma4": lemma4,
    });
    Ok(Outcome {
        tables: vec![("dini.csv".into(), table)],
        summary,
        check,
    })
}

fn operator(
    p: &Prepared,
    grid: Grid64,
    field: &CoefficientField64,
) -> Result<DiscreteOperator<f64>, RunError> {
    let options = SolveOptions {
        tol: p.config.params.tol,
        ..SolveOptions::default()
    };
    Ok(
        assemble(p.form, field, DofMap::interior(&grid), Backend::Auto)
            .map_err(solver_err("assemble"))?
            .with_options(options),
    )
}

fn global_solution(p: &Prepared) -> Result<(GridFunction<f64>, GridFunction<f64>), RunError> {
    let data = smooth_data_field(p.grid, p.data, p.form.source_rank());
    let op = operator(p, p.grid, &p.field)?;
    let u = op
        .solve(&data)
        .map_err(solver_err("global solve"))?
        .solution;
    Ok((data, u))
}

fn campanato(p: &Prepared) -> Result<Outcome, RunError> {
    let params = tilde_params(p);
    let (data, u) = global_solution(p)?;
    let target = regularity_target(p.form, &u);
    let g = p.grid;
    let moduli_radii = dyadic_radii(g.extent(), g.min_ball_radius());
    let wa = measure_profile(&p.field, &moduli_radii, &CenterLattice::adaptive())
        .map_err(solver_err("omega_A"))?;
    let wg = measure_profile(&data, &moduli_radii, &CenterLattice::adaptive())
        .map_err(solver_err("omega_g"))?;
    let envelope = |t: f64| tilde_transform(&wa, &params, t) + tilde_transform(&wg, &params, t);
    let r0 = p.config.params.r0;
    let levels = p
        .config
        .params
        .levels
        .unwrap_or_else(|| resolvable_levels(&g, r0, params.kappa()));
    let mut table = String::new();
    let mut curves = Vec::new();
    let mut passed = true;
    for (k, &c) in p.centers.iter().enumerate() {
        let curve = campanato_decay(&target, c, r0, &params, levels, p.config.params.p)
            .map_err(solver_err("campanato"))?;
        let body = csv_from(|w| curve.write_csv(w))?;
        for (i, line) in body.lines().enumerate() {
            if i == 0 && k == 0 {
                table.push_str(&format!("center,cx,cy,{line}\n"));
            } else if i > 0 {
                table.push_str(&format!("{k},{:?},{:?},{line}\n", c[0], c[1]));
            }
        }
        passed &= curve.decay_ratio() < p.config.params.max_decay_ratio && curve.chaining_holds();
        curves.push(json!({
            "center": c,
            "phi": curve.phi,
            "decay_ratio": curve.decay_ratio(),
            "fitted_c": curve.fit_constant(envelope),
            "chaining_holds": curve.chaining_holds(),
            "center_gap": curve.center_gap(),
        }));
    }
    let check = pass_if(
        passed,
        format!(
            "decay ratio below {} with chaining at every centre",
            p.config.params.max_decay_ratio
        ),
    );
    Ok(Outcome {
        tables: vec![("campanato.csv".into(), table)],
        summary: json!({ "levels": levels, "curves": curves }),
        check,
    })
}

fn freezing(p: &Prepared) -> Result<Outcome, RunError> {
    let (data, u) = global_solution(p)?;
    let e = p.grid.extent();
    let radii = radii_or(p, vec![e / 8.0, e / 16.0, e / 32.0]);
    let mut table = format!("{}\n", FreezeReport::CSV_HEADER);
    let mut ratios = Vec::new();
    for &c in &p.centers {
        for &r in &radii {
            let ball = Ball::new(c, r).map_err(solver_err("freezing"))?;
            let rep = freezing_experiment(p.form, &p.field, &data, &u, &ball, p.config.params.p)
                .map_err(solver_err("freezing"))?;
            table.push_str(&rep.csv_row());
            table.push('\n');
            ratios.extend(rep.ratio);
        }
    }
    let max_var = p.config.params.max_variation.unwrap_or(4.0);
    let variation = spread(&ratios);
    let check = pass_if(
        variation <= max_var,
        format!("ratio variation {variation:.3} (limit {max_var})"),
    );
    Ok(Outcome {
        tables: vec![("freezing.csv".into(), table)],
        summary: json!({ "ratios": ratios, "variation": variation }),
        check,
    })
}

fn spread(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn weaktype(p: &Prepared) -> Result<Outcome, RunError> {
    let g = p.grid;
    let op = operator(p, g, &p.field)?;
    let floor = 4.0 * g.h();
    let default: Vec<f64> = (2..=5)
        .map(|k| g.extent() * 2f64.powi(-k))
        .filter(|&r| r >= floor)
        .collect();
    let radii = radii_or(p, default);
    let mut table = format!("{}\n", WeakTypeReport::CSV_HEADER);
    let mut studies = Vec::new();
    let mut worst = 0.0f64;
    for &c in &p.centers {
        let study = concentration_study(&op, c, &radii, p.config.params.alphas.as_deref())
            .map_err(solver_err("weaktype"))?;
        for rep in &study.reports {
            let mut buf = Vec::new();
            rep.write_csv_rows(&mut buf, &p.config.field.name)
                .map_err(|e| RunError::Io(e.to_string()))?;
            table.push_str(&String::from_utf8(buf).expect("utf-8"));
        }
        worst = worst.max(study.variation());
        studies.push(json!({ "center": c, "radii": study.radii, "constants": study.constants(), "variation": study.variation() }));
    }
    let max_var = p.config.params.max_variation.unwrap_or(2.0);
    let check = pass_if(
        worst < max_var,
        format!("weak-type constant variation {worst:.3} (limit {max_var})"),
    );
    Ok(Outcome {
        tables: vec![("weaktype.csv".into(), table)],
        summary: json!({ "studies": studies }),
        check,
    })
}

fn hormander(p: &Prepared) -> Result<Outcome, RunError> {
    let g = p.grid;
    let op = operator(p, g, &p.field)?;
    let e = g.extent();
    let radii = radii_or(p, vec![e / 8.0, e / 16.0, e / 32.0]);
    let constant = p.field.constant_value().is_some();
    let c = p.config.params.c.unwrap_or(if constant {
        CONSTANT_COEFFICIENT_SEPARATION
    } else {
        DEFAULT_SEPARATION
    });
    let rep = hormander_study(&op, &p.centers, &radii, c).map_err(solver_err("hormander"))?;
    let mut table = format!("{}\n", dinilab::weaktype::HormanderReport::CSV_HEADER);
    let rows = csv_from(|w| rep.write_csv_rows(w))?;
    table.push_str(&rows);
    let mut annuli = String::from("cx,cy,radius,inner,outer,mass\n");
    for s in &rep.samples {
        for a in &s.annuli {
            annuli.push_str(&format!(
                "{:?},{:?},{:?},{:?},{:?},{:?}\n",
                s.source.center[0], s.source.center[1], s.source.radius, a.inner, a.outer, a.mass
            ));
        }
    }
    let max_var = p.config.params.max_variation.unwrap_or(2.0);
    let check = pass_if(
        rep.variation() < max_var,
        format!("ratio variation {:.3} (limit {max_var})", rep.variation()),
    );
    let summary = json!({ "c": c, "sup_ratio": rep.sup_ratio, "min_ratio": rep.min_ratio, "variation": rep.variation() });
    Ok(Outcome {
        tables: vec![
            ("hormander.csv".into(), table),
            ("hormander_annuli.csv".into(), annuli),
        ],
        summary,
        check,
    })
}

fn convergence(p: &Prepared) -> Result<Outcome, RunError> {
    let sizes = p
        .config
        .params
        .sizes
        .clone()
        .unwrap_or_else(|| vec![32, 64, 128, 256]);
    let e = p.config.grid.extent;
    let mut rows = Vec::new();
    for &n in &sizes {
        let grid = Grid::with_boundary_nodes_at(n, e)
            .map_err(|err| RunError::Config(format!("params.sizes: {err}")))?;
        let field = build_field(&p.config, grid)?;
        let exact = GridFunction::scalar_from_fn(grid, |x| manufactured(x, e).0);
        let source = manufactured_source(p.form, &field, grid, e);
        let u = operator(p, grid, &field)?
            .solve(&source)
            .map_err(solver_err("convergence"))?
            .solution;
        let err = u.sub(&exact).expect("same grid").l2_norm(&Region::Domain);
        rows.push((n, grid.h(), err));
    }
    let mut table = String::from("n,h,l2_error,order\n");
    let mut orders = Vec::new();
    for (k, &(n, h, err)) in rows.iter().enumerate() {
        let order = (k > 0).then(|| {
            let (_, h0, e0) = rows[k - 1];
            (e0 / err).ln() / (h0 / h).ln()
        });
        orders.extend(order);
        table.push_str(&format!(
            "{n},{h:?},{err:?},{}\n",
            order.map_or(String::new(), |o| format!("{o:?}"))
        ));
    }
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let check = pass_if(
        min_order >= p.config.params.min_order,
        format!(
            "minimum observed order {min_order:.3} (required {})",
            p.config.params.min_order
        ),
    );
    Ok(Outcome {
        tables: vec![("convergence.csv".into(), table)],
        summary: json!({ "form": p.form.name(), "orders": orders, "min_order": min_order }),
        check,
    })
}

/// `u* = sin(pi x1 / E) sin(pi x2 / E)` with its gradient and Hessian.
fn manufactured(x: [f64; 2], e: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let k = std::f64::consts::PI / e;
    let (s1, c1) = (k * x[0]).sin_cos();
    let (s2, c2) = (k * x[1]).sin_cos();
    let m = k * k * c1 * c2;
    (
        s1 * s2,
        [k * c1 * s2, k * s1 * c2],
        [[-k * k * s1 * s2, m], [m, -k * k * s1 * s2]],
    )
}

/// Source whose solution is `u*`: `A grad u*`, `tr(A D^2 u*)` or `A u*` by form.
fn manufactured_source(
    form: Form,
    field: &CoefficientField64,
    grid: Grid64,
    e: f64,
) -> GridFunction<f64> {
    let rank = form.source_rank();
    let mut values = Vec::with_capacity(grid.len() * rank.components());
    for idx in 0..grid.len() {
        let a = field.at(idx);
        let (u, du, d2u) = manufactured(grid.point_of(idx), e);
        match form {
            Form::Divergence => {
                values.extend([a[0] * du[0] + a[1] * du[1], a[2] * du[0] + a[3] * du[1]])
            }
            Form::Nondivergence => values
                .push(a[0] * d2u[0][0] + a[1] * d2u[1][0] + a[2] * d2u[0][1] + a[3] * d2u[1][1]),
            Form::Adjoint => values.extend(a.iter().map(|&c| c * u)),
        }
    }
    GridFunction::from_values(grid, rank, values).expect("sizes agree")
}
