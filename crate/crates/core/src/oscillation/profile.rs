use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A modulus of continuity `t -> omega(t)` on `(0, 1]`.
pub trait Modulus {
    fn omega(&self, t: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Modulus for F {
    fn omega(&self, t: f64) -> f64 {
        self(t)
    }
}

/// Closed-form moduli used as oracles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "exponent")]
pub enum CatalogModulus {
    /// `omega(t) = t`.
    Linear,
    /// `omega(t) = c`.
    Constant(f64),
    /// `omega(t) = (-ln t)^(-s)`, meaningful for `t < 1`.
    LogPower(f64),
    /// `omega(t) = (ln(4 / t))^(-s)`, finite on all of `(0, 1]`.
    ShiftedLogPower(f64),
}

impl CatalogModulus {
    /// The three Dini moduli of the catalog.
    pub fn dini_examples() -> [CatalogModulus; 3] {
        [
            CatalogModulus::Linear,
            CatalogModulus::LogPower(1.5),
            CatalogModulus::ShiftedLogPower(2.0),
        ]
    }

    pub fn name(&self) -> String {
        match self {
            CatalogModulus::Linear => "t".into(),
            CatalogModulus::Constant(c) => format!("{c}"),
            CatalogModulus::LogPower(s) => format!("(-ln t)^-{s}"),
            CatalogModulus::ShiftedLogPower(s) => format!("(ln 4/t)^-{s}"),
        }
    }
}

impl Modulus for CatalogModulus {
    fn omega(&self, t: f64) -> f64 {
        match *self {
            CatalogModulus::Linear => t,
            CatalogModulus::Constant(c) => c,
            CatalogModulus::LogPower(s) => (-t.ln()).powf(-s),
            CatalogModulus::ShiftedLogPower(s) => (4.0 / t).ln().powf(-s),
        }
    }
}

/// Scale parameter `kappa` of the transformed modulus and iteration, with
/// `beta = ln(1/2) / ln(kappa)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TildeParams {
    kappa: f64,
    beta: f64,
}

impl TildeParams {
    pub const DEFAULT_KAPPA: f64 = 0.25;

    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa < 0.5) {
            return Err(Error::InvalidParameter(format!(
                "kappa must lie in (0, 1/2), got {kappa}"
            )));
        }
        Ok(TildeParams {
            kappa,
            beta: 0.5f64.ln() / kappa.ln(),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for TildeParams {
    fn default() -> Self {
        TildeParams::new(Self::DEFAULT_KAPPA).expect("default kappa is valid")
    }
}

/// `omega~(t) = sum_{i>=1} 2^-i (omega(t / kappa^i) [t / kappa^i <= 1] + omega(1) [t / kappa^i > 1])`.
///
/// Once `t / kappa^i` leaves `(0, 1]` the remaining terms form a geometric
/// series in `omega(1)`, which is summed in closed form.
pub fn tilde_transform<M: Modulus + ?Sized>(m: &M, params: &TildeParams, t: f64) -> f64 {
    let mut acc = 0.0;
    let mut weight = 0.5;
    let mut s = t / params.kappa;
    while s <= 1.0 {
        acc += weight * m.omega(s);
        s /= params.kappa;
        weight *= 0.5;
    }
    // sum_{i >= i0} 2^-i = 2^{1 - i0} = 2 * weight
    acc + 2.0 * weight * m.omega(1.0)
}

/// `omega~` as a modulus in its own right.
#[derive(Clone, Copy, Debug)]
pub struct TildeModulus<'a, M: ?Sized> {
    pub inner: &'a M,
    pub params: TildeParams,
}

impl<M: Modulus + ?Sized> Modulus for TildeModulus<'_, M> {
    fn omega(&self, t: f64) -> f64 {
        tilde_transform(self.inner, &self.params, t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiniFlag {
    Dini,
    NonDini,
    Undetermined,
}

/// Sampled modulus `r_k -> omega(r_k)` on strictly decreasing radii.
///
/// Between samples the modulus is interpolated linearly in `ln r`; outside the
/// sampled range it is held at the nearest sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationProfile {
    radii: Vec<f64>,
    omega: Vec<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    dini_flag: DiniFlag,
}

impl OscillationProfile {
    pub fn new(radii: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        if radii.len() != omega.len() || radii.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "profile needs matching non-empty radii and values, got {} and {}",
                radii.len(),
                omega.len()
            )));
        }
        if radii.iter().any(|&r| !(r > 0.0 && r.is_finite()))
            || radii.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::InvalidParameter(
                "profile radii must be positive and strictly decreasing".into(),
            ));
        }
        if omega.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(
                "profile values must be finite and nonnegative".into(),
            ));
        }
        Ok(OscillationProfile {
            radii,
            omega,
            c1: None,
            c2: None,
            dini_flag: DiniFlag::Undetermined,
        })
    }

    /// Samples `m` at `r_max * 2^(-k / per_octave)` down to `r_min`.
    pub fn sample<M: Modulus + ?Sized>(
        m: &M,
        r_max: f64,
        r_min: f64,
        per_octave: usize,
    ) -> Result<Self> {
        if !(r_max > r_min && r_min > 0.0) || per_octave == 0 {
            return Err(Error::InvalidParameter(format!(
                "need 0 < r_min < r_max and per_octave >= 1, got {r_min}, {r_max}, {per_octave}"
            )));
        }
        let steps = ((r_max / r_min).log2() * per_octave as f64).ceil() as usize;
        let ratio = 2f64.powf(-1.0 / per_octave as f64);
        let radii: Vec<f64> = (0..=steps).map(|k| r_max * ratio.powi(k as i32)).collect();
        let omega = radii.iter().map(|&r| m.omega(r)).collect();
        Self::new(radii, omega)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.radii[0]
    }

    pub fn r_min(&self) -> f64 {
        *self.radii.last().expect("profile is non-empty")
    }

    pub fn c1(&self) -> Option<f64> {
        self.c1
    }

    pub fn c2(&self) -> Option<f64> {
        self.c2
    }

    pub fn dini_flag(&self) -> DiniFlag {
        self.dini_flag
    }

    /// Interpolated value at radius `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let r = &self.radii;
        if t >= r[0] {
            return self.omega[0];
        }
        if t <= self.r_min() {
            return *self.omega.last().expect("profile is non-empty");
        }
        // radii are decreasing: first index with r[k] <= t.
        let k = r.partition_point(|&x| x > t);
        let (ra, rb) = (r[k - 1], r[k]);
        let (wa, wb) = (self.omega[k - 1], self.omega[k]);
        let s = (t.ln() - ra.ln()) / (rb.ln() - ra.ln());
        wa + s * (wb - wa)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.radii.clone(),
            self.omega.iter().map(|w| w * c).collect(),
        )
    }

    /// Records the almost-monotonicity constants for `kappa`.
    pub fn with_monotone_constants(mut self, kappa: f64) -> Result<Self> {
        let (c1, c2) = almost_monotone_constants(&self, kappa)?;
        self.c1 = Some(c1);
        self.c2 = Some(c2);
        Ok(self)
    }

    /// Sets the Dini flag from [`dini_integral`] at the largest radius.
    pub fn classified(mut self) -> Self {
        self.dini_flag = match dini_integral(&self, self.r_max()) {
            Ok(_) => DiniFlag::Dini,
            Err(Error::Divergent { .. }) => DiniFlag::NonDini,
            Err(_) => DiniFlag::Undetermined,
        };
        self
    }

    /// `int_{t}^{r_max} omega(s) / s ds` at every sample, exact for the interpolant.
    pub fn partial_integrals(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        out.push(0.0);
        for k in 1..self.len() {
            let dl = (self.radii[k - 1] / self.radii[k]).ln();
            acc += 0.5 * (self.omega[k - 1] + self.omega[k]) * dl;
            out.push(acc);
        }
        out
    }

    /// CSV with columns `r,omega,omega_tilde,dini_partial_sum`; `omega_tilde`
    /// is left empty for radii above 1.
    pub fn write_csv<W: Write>(&self, mut w: W, params: &TildeParams) -> Result<()> {
        writeln!(w, "r,omega,omega_tilde,dini_partial_sum")?;
        let partial = self.partial_integrals();
        for k in 0..self.len() {
            let r = self.radii[k];
            let tilde = if r <= 1.0 {
                format!("{:?}", tilde_transform(self, params, r))
            } else {
                String::new()
            };
            writeln!(w, "{:?},{:?},{},{:?}", r, self.omega[k], tilde, partial[k])?;
        }
        Ok(())
    }
}

impl Modulus for OscillationProfile {
    fn omega(&self, t: f64) -> f64 {
        self.eval(t)
    }
}

/// Controls of the dyadic Dini quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiniOptions {
    /// Ratio between consecutive levels `kappa^i r`.
    pub kappa: f64,
    /// Fewest levels below `r` the profile must reach.
    pub min_levels: usize,
    /// A tail estimate larger than `divergence_cap` times the partial sum counts as divergence.
    pub divergence_cap: f64,
    /// Levels used to fit the tail exponent.
    pub tail_fit_levels: usize,
    /// Tails decaying like `(-ln t)^(-s)` with `s` at or below this count as divergent.
    pub min_tail_exponent: f64,
}

impl Default for DiniOptions {
    fn default() -> Self {
        DiniOptions {
            kappa: 0.5,
            min_levels: 10,
            divergence_cap: 100.0,
            tail_fit_levels: 10,
            min_tail_exponent: 1.1,
        }
    }
}

struct DyadicLevels {
    values: Vec<f64>,
    radii: Vec<f64>,
    log_step: f64,
}

fn dyadic_levels(profile: &OscillationProfile, r: f64, opts: &DiniOptions) -> Result<DyadicLevels> {
    if !(opts.kappa > 0.0 && opts.kappa < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "level ratio must lie in (0, 1), got {}",
            opts.kappa
        )));
    }
    if r > profile.r_max() * (1.0 + 1e-12) || r <= 0.0 {
        return Err(Error::InsufficientSamples(format!(
            "upper limit {r:e} lies outside the sampled range (0, {:e}]",
            profile.r_max()
        )));
    }
    let floor = profile.r_min() * (1.0 - 1e-12);
    let mut radii = Vec::new();
    let mut t = r;
    while t >= floor {
        radii.push(t);
        t *= opts.kappa;
    }
    if radii.len() < opts.min_levels + 1 {
        return Err(Error::InsufficientSamples(format!(
            "{} levels below r = {r:e}, need {}",
            radii.len().saturating_sub(1),
            opts.min_levels
        )));
    }
    let values = radii.iter().map(|&t| profile.eval(t)).collect();
    Ok(DyadicLevels {
        values,
        radii,
        log_step: (1.0 / opts.kappa).ln(),
    })
}

/// Least-squares slope of `ln omega` against `ln(-ln t)` over the last levels,
/// negated: the exponent `s` of an `(-ln t)^(-s)` tail.
fn tail_exponent(levels: &DyadicLevels, fit: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> = levels
        .radii
        .iter()
        .zip(&levels.values)
        .rev()
        .take(fit.max(2))
        .filter(|&(&t, &w)| t < 1.0 && w > 0.0)
        .map(|(&t, &w)| ((-t.ln()).ln(), w.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Partial sum, tail estimate and level count; errors on detected divergence.
fn dini_parts(levels: &DyadicLevels, opts: &DiniOptions) -> Result<(f64, f64)> {
    let w = &levels.values;
    let j = w.len() - 1;
    let dl = levels.log_step;
    let mut partial = 0.5 * w[0] * dl;
    let mut sums = Vec::with_capacity(w.len());
    sums.push(partial);
    for i in 1..=j {
        let weight = if i == j { 0.5 } else { 1.0 };
        partial += weight * w[i] * dl;
        sums.push(partial);
    }
    let divergent = || Error::Divergent { partial, levels: j };

    // Growth rule: over the last 10 levels every increment is at least the
    // previous one and adds more than 1% to the running sum.
    let window = 10.min(j);
    let growing = (j + 1 - window..j).all(|i| {
        let inc = w[i] * dl;
        i >= 1 && w[i] >= w[i - 1] && inc > 0.01 * sums[i - 1]
    });
    if window >= 2 && growing && w[j] > 0.0 {
        return Err(divergent());
    }

    let t_last = levels.radii[j];
    let tail = if w[j] == 0.0 {
        0.0
    } else {
        match tail_exponent(levels, opts.tail_fit_levels) {
            Some(s) if s > opts.min_tail_exponent && t_last < 1.0 => {
                w[j] * (-t_last.ln()) / (s - 1.0)
            }
            _ => return Err(divergent()),
        }
    };
    if tail > opts.divergence_cap * partial {
        return Err(divergent());
    }
    Ok((partial, tail))
}

/// `int_0^r omega(t) / t dt` with default [`DiniOptions`].
pub fn dini_integral(profile: &OscillationProfile, r: f64) -> Result<f64> {
    dini_integral_with(profile, r, &DiniOptions::default())
}

/// `int_0^r omega(t) / t dt` as the trapezoidal dyadic sum
/// `ln(1/kappa) sum_i omega(kappa^i r)` (end levels halved) plus a tail
/// `omega_J (-ln t_J) / (s - 1)` extrapolated from the fitted decay exponent `s`.
pub fn dini_integral_with(profile: &OscillationProfile, r: f64, opts: &DiniOptions) -> Result<f64> {
    let levels = dyadic_levels(profile, r, opts)?;
    let (partial, tail) = dini_parts(&levels, opts)?;
    Ok(partial + tail)
}

/// Tightest `(c1, c2)` with `c1 omega(t) <= omega(s) <= c2 omega(t)` for
/// sampled `kappa t <= s <= t`.
pub fn almost_monotone_constants(profile: &OscillationProfile, kappa: f64) -> Result<(f64, f64)> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "kappa must lie in (0, 1), got {kappa}"
        )));
    }
    let r = profile.radii();
    let w = profile.omega();
    let floor = profile.r_min() * (1.0 - 1e-12);
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    let mut windows = 0;
    for a in 0..r.len() {
        let lo = kappa * r[a];
        if lo < floor {
            break;
        }
        let members: Vec<usize> = (a..r.len())
            .take_while(|&b| r[b] >= lo * (1.0 - 1e-12))
            .collect();
        if members.len() < 3 {
            return Err(Error::InsufficientSamples(format!(
                "window [{lo:e}, {:e}] holds {} samples, need 3",
                r[a],
                members.len()
            )));
        }
        windows += 1;
        let zeros = members.iter().filter(|&&b| w[b] == 0.0).count();
        if zeros == members.len() {
            c1 = c1.min(1.0);
            c2 = c2.max(1.0);
            continue;
        }
        if zeros > 0 {
            return Err(Error::NotAlmostMonotone { radius: r[a] });
        }
        for &b in &members {
            let q = w[b] / w[a];
            c1 = c1.min(q);
            c2 = c2.max(q);
        }
    }
    if windows == 0 {
        return Err(Error::InsufficientSamples(format!(
            "no complete window [kappa t, t] inside [{:e}, {:e}]",
            profile.r_min(),
            profile.r_max()
        )));
    }
    Ok((c1, c2))
}

/// Dyadic sum against the fine integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicCheck {
    pub r: f64,
    pub sum: f64,
    pub integral: f64,
    pub ratio: f64,
    pub levels: usize,
}

/// `(sum_{i>=0} omega(kappa^i r)) / int_0^r omega(t)/t dt`.
///
/// The sum carries the same extrapolated tail as [`dini_integral`], divided by
/// `ln(1/kappa)`; the integral is taken exactly over the interpolant between
/// the profile's own samples, plus the tail below the smallest sample.
pub fn dyadic_sum_check(profile: &OscillationProfile, kappa: f64, r: f64) -> Result<DyadicCheck> {
    let opts = DiniOptions {
        kappa,
        ..DiniOptions::default()
    };
    let levels = dyadic_levels(profile, r, &opts)?;
    let (_, tail) = dini_parts(&levels, &opts)?;
    let sum = levels.values.iter().sum::<f64>() + tail / levels.log_step;

    let fine = DiniOptions {
        kappa: 0.5,
        ..DiniOptions::default()
    };
    let fine_levels = dyadic_levels(profile, r, &fine)?;
    let (_, fine_tail) = dini_parts(&fine_levels, &fine)?;
    let integral = interpolant_integral(profile, r, profile.r_min()) + fine_tail
        - tail_offset(profile, &fine_levels);
    Ok(DyadicCheck {
        r,
        sum,
        integral,
        ratio: sum / integral,
        levels: levels.values.len() - 1,
    })
}

/// `int_lo^hi omega(t)/t dt` integrated exactly over the piecewise-linear
/// (in `ln t`) interpolant.
fn interpolant_integral(profile: &OscillationProfile, hi: f64, lo: f64) -> f64 {
    let mut knots = vec![hi];
    knots.extend(
        profile
            .radii()
            .iter()
            .copied()
            .filter(|&t| t < hi && t > lo),
    );
    knots.push(lo);
    knots
        .windows(2)
        .map(|p| 0.5 * (profile.eval(p[0]) + profile.eval(p[1])) * (p[0] / p[1]).ln())
        .sum()
}

/// The fine tail starts at the last dyadic level, which may sit above `r_min`;
/// this removes the overlap `int_{r_min}^{t_J}` already counted.
fn tail_offset(profile: &OscillationProfile, levels: &DyadicLevels) -> f64 {
    let t_last = *levels.radii.last().expect("levels are non-empty");
    if t_last > profile.r_min() {
        interpolant_integral(profile, t_last, profile.r_min())
    } else {
        0.0
    }
}

/// Products `ln(4/r) int_0^r omega~(t)/t dt` over the sampled `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaFourReport {
    pub r: Vec<f64>,
    pub products: Vec<f64>,
    pub sup: f64,
    pub min: f64,
    /// `sup / min`.
    pub variation: f64,
}

/// [`lemma4_bound_check_for`] with `omega(t) = (ln(t/4))^-2`.
pub fn lemma4_bound_check(params: &TildeParams, r_values: &[f64]) -> Result<LemmaFourReport> {
    lemma4_bound_check_for(&CatalogModulus::ShiftedLogPower(2.0), params, r_values)
}

/// Samples `omega~` of `m` and reports `ln(4/r) int_0^r omega~(t)/t dt` for each `r`.
pub fn lemma4_bound_check_for<M: Modulus + ?Sized>(
    m: &M,
    params: &TildeParams,
    r_values: &[f64],
) -> Result<LemmaFourReport> {
    if r_values.is_empty() || r_values.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::InvalidParameter(
            "r values must lie in (0, 1]".into(),
        ));
    }
    let r_low = r_values.iter().copied().fold(f64::INFINITY, f64::min);
    let tilde = TildeModulus {
        inner: m,
        params: *params,
    };
    let profile = OscillationProfile::sample(&tilde, 1.0, r_low * 2f64.powi(-40), 8)?;
    let mut products = Vec::with_capacity(r_values.len());
    for &r in r_values {
        products.push(dini_integral(&profile, r)? * (4.0 / r).ln());
    }
    let sup = products.iter().copied().fold(0.0, f64::max);
    let min = products.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LemmaFourReport {
        r: r_values.to_vec(),
        products,
        sup,
        min,
        variation: sup / min,
    })
}
