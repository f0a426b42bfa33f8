//! Weak type-(1,1) statistics of solution derivatives, compactly supported
//! bump sources and the localization test for mean-zero sources.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{finite_difference_gradient, finite_difference_hessian, region_l1_norm};
use crate::grid::{Ball, Grid, GridFunction, Rank, Region};
use crate::scalar::Real;
use crate::solver::{DiscreteOperator, Form};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BumpKind {
    MeanZeroVector,
    MeanZeroScalar,
    MeanZeroMatrix,
    NonnegScalar,
}

impl BumpKind {
    pub fn name(self) -> &'static str {
        match self {
            BumpKind::MeanZeroVector => "mean_zero_vector",
            BumpKind::MeanZeroScalar => "mean_zero_scalar",
            BumpKind::MeanZeroMatrix => "mean_zero_matrix",
            BumpKind::NonnegScalar => "nonneg_scalar",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            BumpKind::MeanZeroVector,
            BumpKind::MeanZeroScalar,
            BumpKind::MeanZeroMatrix,
            BumpKind::NonnegScalar,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    pub fn is_mean_zero(self) -> bool {
        self != BumpKind::NonnegScalar
    }

    /// Mean-zero bump suited to a form's source rank.
    pub fn mean_zero_for(form: Form) -> Self {
        match form {
            Form::Divergence => BumpKind::MeanZeroVector,
            Form::Nondivergence => BumpKind::MeanZeroScalar,
            Form::Adjoint => BumpKind::MeanZeroMatrix,
        }
    }
}

/// A compactly supported source with unit `L^1` norm.
#[derive(Clone, Debug)]
pub struct BumpSource<T> {
    pub center: [T; 2],
    pub radius: T,
    pub kind: BumpKind,
    /// `sum |b| h^2` after normalization.
    pub l1_norm: T,
    /// `sum b h^2` of the scalar profile.
    pub discrete_mean: f64,
    profile: GridFunction<T>,
}

/// Serializable description of a bump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpInfo {
    pub center: [f64; 2],
    pub radius: f64,
    pub kind: BumpKind,
}

fn quartic<T: Real>(grid: &Grid<T>, center: [T; 2], radius: T) -> Vec<T> {
    let mut out = vec![T::zero(); grid.len()];
    for idx in grid.cells_in(&Region::Ball(Ball { center, radius })) {
        let x = grid.point_of(idx);
        let s2 = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)) / (radius * radius);
        out[idx] = (T::one() - s2).powi(2);
    }
    out
}

/// Quartic bump `(1 - |x - c|^2 / r^2)^2`, or for mean-zero kinds the dipole of two
/// half-radius lobes along `x1`, balanced to exact discrete mean zero and scaled to
/// unit `L^1` norm. Vector and matrix kinds carry the profile in the `(1)` and `(1,1)` slot.
pub fn make_bump<T: Real>(
    grid: Grid<T>,
    center: [T; 2],
    radius: T,
    kind: BumpKind,
) -> Result<BumpSource<T>> {
    let min_radius = T::of(4.0) * grid.h();
    if !(radius >= min_radius) {
        return Err(Error::RadiusTooSmall {
            radius: radius.f64(),
            min_radius: min_radius.f64(),
        });
    }
    let mut values = if kind.is_mean_zero() {
        let half = radius * T::of(0.5);
        let pos = quartic(&grid, [center[0] + half, center[1]], half);
        let neg = quartic(&grid, [center[0] - half, center[1]], half);
        let sp: f64 = pos.iter().map(|v| v.f64()).sum();
        let sn: f64 = neg.iter().map(|v| v.f64()).sum();
        if sp == 0.0 || sn == 0.0 {
            return Err(Error::RadiusTooSmall {
                radius: radius.f64(),
                min_radius: min_radius.f64(),
            });
        }
        let w = T::of(sp / sn);
        pos.iter()
            .zip(&neg)
            .map(|(&p, &q)| p - w * q)
            .collect::<Vec<_>>()
    } else {
        quartic(&grid, center, radius)
    };
    let area = grid.cell_area().f64();
    let l1: f64 = values.iter().map(|v| v.abs().f64()).sum::<f64>() * area;
    let scale = T::of(1.0 / l1);
    values.iter_mut().for_each(|v| *v = *v * scale);
    let profile = GridFunction::from_values(grid, Rank::Scalar, values)?;
    let l1_norm = region_l1_norm(&profile, &Region::Domain);
    let discrete_mean = profile.values().iter().map(|v| v.f64()).sum::<f64>() * area;
    Ok(BumpSource {
        center,
        radius,
        kind,
        l1_norm,
        discrete_mean,
        profile,
    })
}

impl<T: Real> BumpSource<T> {
    pub fn info(&self) -> BumpInfo {
        BumpInfo {
            center: [self.center[0].f64(), self.center[1].f64()],
            radius: self.radius.f64(),
            kind: self.kind,
        }
    }

    /// The scalar profile.
    pub fn profile(&self) -> &GridFunction<T> {
        &self.profile
    }

    /// The profile placed in the first component of a field of `rank`; the norm is unchanged.
    pub fn lifted(&self, rank: Rank) -> GridFunction<T> {
        let grid = *self.profile.grid();
        let c = rank.components();
        let mut values = vec![T::zero(); grid.len() * c];
        for (i, &v) in self.profile.values().iter().enumerate() {
            values[i * c] = v;
        }
        GridFunction::from_values(grid, rank, values).expect("sizes agree")
    }

    /// Natural source field of the bump kind (nonnegative bumps are scalar).
    pub fn field(&self) -> GridFunction<T> {
        match self.kind {
            BumpKind::MeanZeroVector => self.lifted(Rank::Vector),
            BumpKind::MeanZeroMatrix => self.lifted(Rank::Matrix),
            BumpKind::MeanZeroScalar | BumpKind::NonnegScalar => self.profile.clone(),
        }
    }
}

/// Distribution-function statistics of one grid function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakTypeReport {
    pub alphas: Vec<f64>,
    /// `|{|f| > alpha}|` on the alpha grid.
    pub measures: Vec<f64>,
    /// `max_alpha alpha |{|f| > alpha}| / source_l1` on the grid.
    pub constant: f64,
    pub argmax_alpha: f64,
    /// The supremum over all `alpha`, from the sorted values (small grids only).
    pub exact_constant: Option<f64>,
    pub source_l1: f64,
    pub source: Option<BumpInfo>,
    pub form: Option<Form>,
}

/// Grids up to this many cells also get the exact supremum.
pub const EXACT_SUP_CELLS: usize = 1 << 20;

/// Number of points in the default alpha grid.
pub const DEFAULT_ALPHA_POINTS: usize = 64;

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Weak-type statistic of `f` over `region`.
///
/// Without `alphas` the grid spans `[10^-2 max|f|, max|f|]` with
/// [`DEFAULT_ALPHA_POINTS`] points, extended a decade downwards while the maximum
/// sits at its lower end.
pub fn weak_type_statistic<T: Real>(
    f: &GridFunction<T>,
    region: &Region<T>,
    source_l1: f64,
    alphas: Option<&[f64]>,
) -> Result<WeakTypeReport> {
    if !(source_l1 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "source L1 norm must be positive, got {source_l1}"
        )));
    }
    let mut vals: Vec<f64> = Vec::new();
    f.grid()
        .for_each_in(region, |i| vals.push(f.norm_at(i).f64()));
    vals.sort_unstable_by(|a, b| b.total_cmp(a));
    let area = f.grid().cell_area().f64();
    let measure = |alpha: f64| vals.partition_point(|&v| v > alpha) as f64 * area;
    let top = vals.first().copied().unwrap_or(0.0);
    let evaluate = |alphas: &[f64]| {
        let measures: Vec<f64> = alphas.iter().map(|&a| measure(a)).collect();
        let (k, best) = alphas
            .iter()
            .zip(&measures)
            .map(|(a, m)| a * m / source_l1)
            .enumerate()
            .fold((0, 0.0), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
        (measures, k, best)
    };
    let (alphas, measures, k, best) = match alphas {
        Some(a) => {
            if a.is_empty() || a.iter().any(|&x| !(x > 0.0)) || a.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter(
                    "alphas must be positive and increasing".into(),
                ));
            }
            let (m, k, b) = evaluate(a);
            (a.to_vec(), m, k, b)
        }
        None if top == 0.0 => (vec![], vec![], 0, 0.0),
        None => {
            let mut lo = 1e-2 * top;
            loop {
                let a = log_grid(lo, top, DEFAULT_ALPHA_POINTS);
                let (m, k, b) = evaluate(&a);
                if k > 0 || lo < 1e-10 * top {
                    break (a, m, k, b);
                }
                lo *= 0.1;
            }
        }
    };
    // Just below the k-th largest value exactly k + 1 values exceed alpha.
    let exact_constant = (vals.len() <= EXACT_SUP_CELLS).then(|| {
        vals.iter()
            .enumerate()
            .map(|(k, &v)| v * (k + 1) as f64 * area)
            .fold(0.0, f64::max)
            / source_l1
    });
    Ok(WeakTypeReport {
        argmax_alpha: alphas.get(k).copied().unwrap_or(0.0),
        alphas,
        measures,
        constant: best,
        exact_constant,
        source_l1,
        source: None,
        form: None,
    })
}

impl WeakTypeReport {
    /// Exact supremum when available, grid maximum otherwise.
    pub fn best_constant(&self) -> f64 {
        self.exact_constant.unwrap_or(self.constant)
    }

    pub const CSV_HEADER: &'static str = "form,field,cx,cy,radius,alpha,measure";

    /// Long-format rows `(form, field, center, radius, alpha, measure)`.
    pub fn write_csv_rows<W: Write>(&self, mut w: W, field: &str) -> Result<()> {
        let form = self.form.map_or("", Form::name);
        let (cx, cy, r) = self.source.map_or((f64::NAN, f64::NAN, f64::NAN), |s| {
            (s.center[0], s.center[1], s.radius)
        });
        for (a, m) in self.alphas.iter().zip(&self.measures) {
            writeln!(w, "{form},{field},{cx:?},{cy:?},{r:?},{a:?},{m:?}")?;
        }
        Ok(())
    }
}

/// `|Du|`, `|D^2 u|` or `|u|`: the quantity each form's weak-type estimate controls.
pub fn controlled_quantity<T: Real>(form: Form, u: &GridFunction<T>) -> GridFunction<T> {
    match form {
        Form::Divergence => finite_difference_gradient(u),
        Form::Nondivergence => finite_difference_hessian(u),
        Form::Adjoint => u.clone(),
    }
}

fn source_for<T: Real>(form: Form, bump: &BumpSource<T>) -> GridFunction<T> {
    bump.lifted(form.source_rank())
}

/// Solves `op` with `bump` as source and measures the controlled quantity over the domain.
pub fn bump_weak_type<T: Real>(
    op: &DiscreteOperator<T>,
    bump: &BumpSource<T>,
    alphas: Option<&[f64]>,
) -> Result<WeakTypeReport> {
    let u = op.solve(&source_for(op.form(), bump))?.solution;
    let t = controlled_quantity(op.form(), &u);
    let mut report = weak_type_statistic(&t, &Region::Domain, bump.l1_norm.f64(), alphas)?;
    report.source = Some(bump.info());
    report.form = Some(op.form());
    Ok(report)
}

/// `|Tb|` mass on one annulus `inner <= |x - center| < outer`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusMass {
    pub inner: f64,
    pub outer: f64,
    pub mass: f64,
}

/// Localization data for one bump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HormanderSample {
    pub source: BumpInfo,
    /// `int_{|x - center| >= c r} |Tb| / int |b|`.
    pub ratio: f64,
    /// Annuli `[c r 2^k, c r 2^(k+1))` that fit inside the domain.
    pub annuli: Vec<AnnulusMass>,
}

impl HormanderSample {
    /// Least-squares slope of `ln mass` against `ln inner radius`.
    pub fn decay_slope(&self) -> Option<f64> {
        if self.annuli.len() < 2 {
            return None;
        }
        let pts: Vec<(f64, f64)> = self
            .annuli
            .iter()
            .map(|a| (a.inner.ln(), a.mass.ln()))
            .collect();
        Some(least_squares_slope(&pts))
    }

    /// Worst `m_k / (m_0 R_0 / R_k)` over the annuli, the excess over the `r / R` envelope.
    pub fn envelope_excess(&self) -> Option<f64> {
        let first = self.annuli.first()?;
        Some(
            self.annuli
                .iter()
                .map(|a| a.mass / (first.mass * first.inner / a.inner))
                .fold(0.0, f64::max),
        )
    }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Separation factor for constant coefficients.
pub const CONSTANT_COEFFICIENT_SEPARATION: f64 = 2.0;
/// Separation factor for variable coefficients.
pub const DEFAULT_SEPARATION: f64 = 8.0;

/// Integrates the controlled quantity of the solution with source `bump` outside `B(center, c r)`.
pub fn hormander_test<T: Real>(
    op: &DiscreteOperator<T>,
    bump: &BumpSource<T>,
    c: f64,
) -> Result<HormanderSample> {
    if !bump.kind.is_mean_zero() {
        return Err(Error::InvalidParameter(
            "localization test needs a mean-zero bump".into(),
        ));
    }
    let grid = *op.grid();
    let extent = grid.extent().f64();
    let r_sep = c * bump.radius.f64();
    if r_sep >= extent {
        return Err(Error::InvalidParameter(format!(
            "c r = {r_sep} reaches past the domain half-width {extent}"
        )));
    }
    let u = op.solve(&source_for(op.form(), bump))?.solution;
    let t = controlled_quantity(op.form(), &u);
    let center = bump.center;
    let outside = Region::Exterior(Ball {
        center,
        radius: T::of(r_sep),
    });
    let ratio = region_l1_norm(&t, &outside).f64() / bump.l1_norm.f64();
    let room = extent - center[0].f64().abs().max(center[1].f64().abs());
    let mut annuli = Vec::new();
    let mut inner = r_sep;
    while 2.0 * inner <= room * (1.0 + 1e-12) {
        let region = Region::Annulus {
            center,
            inner: T::of(inner),
            outer: T::of(2.0 * inner),
        };
        annuli.push(AnnulusMass {
            inner,
            outer: 2.0 * inner,
            mass: region_l1_norm(&t, &region).f64(),
        });
        inner *= 2.0;
    }
    Ok(HormanderSample {
        source: bump.info(),
        ratio,
        annuli,
    })
}

/// Localization ratios over a family of bumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HormanderReport {
    pub form: Form,
    pub c: f64,
    pub samples: Vec<HormanderSample>,
    pub sup_ratio: f64,
    pub min_ratio: f64,
}

impl HormanderReport {
    pub fn variation(&self) -> f64 {
        self.sup_ratio / self.min_ratio
    }

    pub const CSV_HEADER: &'static str = "form,cx,cy,radius,ratio,decay_slope";

    pub fn write_csv_rows<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.samples {
            let slope = s.decay_slope().map_or(String::new(), |v| format!("{v:?}"));
            writeln!(
                w,
                "{},{:?},{:?},{:?},{:?},{slope}",
                self.form.name(),
                s.source.center[0],
                s.source.center[1],
                s.source.radius,
                s.ratio
            )?;
        }
        Ok(())
    }
}

/// Runs [`hormander_test`] for mean-zero bumps at every `(center, radius)` pair.
pub fn hormander_study<T: Real>(
    op: &DiscreteOperator<T>,
    centers: &[[T; 2]],
    radii: &[T],
    c: f64,
) -> Result<HormanderReport> {
    let kind = BumpKind::mean_zero_for(op.form());
    let mut samples = Vec::with_capacity(centers.len() * radii.len());
    for &center in centers {
        for &r in radii {
            let bump = make_bump(*op.grid(), center, r, kind)?;
            samples.push(hormander_test(op, &bump, c)?);
        }
    }
    let sup_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    let min_ratio = samples
        .iter()
        .map(|s| s.ratio)
        .fold(f64::INFINITY, f64::min);
    Ok(HormanderReport {
        form: op.form(),
        c,
        samples,
        sup_ratio,
        min_ratio,
    })
}

/// Weak-type constants for bumps of decreasing radius at one centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationStudy {
    pub form: Form,
    pub radii: Vec<f64>,
    pub reports: Vec<WeakTypeReport>,
}

impl ConcentrationStudy {
    pub fn constants(&self) -> Vec<f64> {
        self.reports
            .iter()
            .map(WeakTypeReport::best_constant)
            .collect()
    }

    /// `max / min` of the constants across radii.
    pub fn variation(&self) -> f64 {
        let c = self.constants();
        c.iter().copied().fold(0.0, f64::max) / c.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            form: Form,
            radii: &'a [f64],
            constants: Vec<f64>,
            variation: f64,
        }
        serde_json::to_string_pretty(&Summary {
            form: self.form,
            radii: &self.radii,
            constants: self.constants(),
            variation: self.variation(),
        })
        .expect("summary serializes")
    }
}

/// Nonnegative unit bumps at `center` with the given decreasing radii.
pub fn concentration_study<T: Real>(
    op: &DiscreteOperator<T>,
    center: [T; 2],
    radii: &[T],
    alphas: Option<&[f64]>,
) -> Result<ConcentrationStudy> {
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "concentration radii must decrease".into(),
        ));
    }
    let reports = radii
        .iter()
        .map(|&r| {
            bump_weak_type(
                op,
                &make_bump(*op.grid(), center, r, BumpKind::NonnegScalar)?,
                alphas,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConcentrationStudy {
        form: op.form(),
        radii: radii.iter().map(|r| r.f64()).collect(),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::constant_field;
    use crate::solver::{assemble, Backend, DofMap};

    fn grid(n: usize) -> Grid<f64> {
        Grid::new(n, 1.0).unwrap()
    }

    #[test]
    fn nonneg_bump_is_normalized() {
        let g = grid(128);
        let b = make_bump(g, [0.1, -0.2], 0.2, BumpKind::NonnegScalar).unwrap();
        assert!(b.profile().values().iter().all(|&v| v >= 0.0));
        assert!((b.discrete_mean - 1.0).abs() < 1e-12);
        assert!((b.l1_norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dipole_has_exact_mean_zero_and_compact_support() {
        let g = grid(128);
        let ball = Ball::new([0.25, 0.0], 0.15).unwrap();
        for kind in [
            BumpKind::MeanZeroScalar,
            BumpKind::MeanZeroVector,
            BumpKind::MeanZeroMatrix,
        ] {
            let b = make_bump(g, ball.center, ball.radius, kind).unwrap();
            assert!(b.discrete_mean.abs() < 1e-12);
            assert!((b.l1_norm - 1.0).abs() < 1e-12);
            let f = b.field();
            for k in 0..g.len() {
                if f.norm_at(k) != 0.0 {
                    assert!(ball.contains(g.point_of(k)));
                }
            }
            assert!((region_l1_norm(&f, &Region::Domain) - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            make_bump(g, [0.0, 0.0], 2.0 * g.h(), BumpKind::NonnegScalar),
            Err(Error::RadiusTooSmall { .. })
        ));
    }

    #[test]
    fn indicator_statistic_equals_its_area() {
        let g = grid(64);
        let f = GridFunction::scalar_from_fn(g, |x| if x[0] > 0.5 { -1.0 } else { 0.0 });
        let area = crate::grid::distribution_measure(&f, 0.5, &Region::Domain);
        let rep = weak_type_statistic(&f, &Region::Domain, 1.0, None).unwrap();
        assert_eq!(rep.exact_constant, Some(area));
        assert!(rep.constant <= area && rep.constant > 0.9 * area);
        assert!(rep.measures.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.alphas.len() >= 50);
    }

    #[test]
    fn statistic_is_homogeneous() {
        let g = grid(64);
        let f = GridFunction::scalar_from_fn(g, |x| 1.0 / (0.01 + x[0] * x[0] + x[1] * x[1]));
        let base = weak_type_statistic(&f, &Region::Domain, 2.0, None).unwrap();
        let c = 7.5;
        let alphas: Vec<f64> = base.alphas.iter().map(|a| a * c).collect();
        let scaled =
            weak_type_statistic(&f.scaled(-c), &Region::Domain, 2.0 * c, Some(&alphas)).unwrap();
        assert!((scaled.constant - base.constant).abs() < 1e-12 * base.constant);
        assert!(
            (scaled.best_constant() - base.best_constant()).abs() < 1e-12 * base.best_constant()
        );
        assert!(weak_type_statistic(&f, &Region::Domain, 1.0, Some(&[2.0, 1.0])).is_err());
    }

    #[test]
    fn localization_needs_mean_zero_bumps() {
        let g = grid(128);
        let op = assemble(
            Form::Divergence,
            &constant_field(g, [[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            DofMap::interior(&g),
            Backend::Auto,
        )
        .unwrap();
        let nonneg = make_bump(g, [0.0, 0.0], 0.1, BumpKind::NonnegScalar).unwrap();
        assert!(hormander_test(&op, &nonneg, 2.0).is_err());
        let dipole = make_bump(g, [0.0, 0.0], 0.1, BumpKind::MeanZeroVector).unwrap();
        let s = hormander_test(&op, &dipole, 2.0).unwrap();
        assert!(s.ratio > 0.0 && s.ratio.is_finite());
        assert_eq!(s.annuli.len(), 2);
        assert!(s.decay_slope().unwrap() < 0.0);
    }
}
