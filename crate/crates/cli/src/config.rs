//! Experiment configuration: a TOML file with `[grid]`, `[field]`, `[data]` and `[params]` tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::RunError;

pub const EXPERIMENTS: [&str; 7] = [
    "oscillation",
    "dini",
    "campanato",
    "freezing",
    "weaktype",
    "hormander",
    "convergence",
];
pub const FIELDS: [&str; 3] = ["constant", "log_family", "log_power_family"];
pub const DATA: [&str; 2] = ["trig", "polynomial"];
pub const FORMS: [&str; 3] = ["divergence", "nondivergence", "adjoint"];
pub const MODULI: [&str; 4] = ["linear", "constant", "log_power", "shifted_log_power"];
pub const LATTICES: [&str; 2] = ["default", "adaptive"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub grid: GridSpec,
    #[serde(default)]
    pub field: FieldSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub params: Params,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(default = "one")]
    pub extent: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSpec {
    pub name: String,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub angular: String,
    /// Log-field length scale in units of the grid extent.
    pub scale: f64,
    pub r_cap: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec {
            name: "constant".into(),
            a11: 1.0,
            a12: 0.0,
            a21: 0.0,
            a22: 1.0,
            gamma: 0.25,
            sigma: 2.0,
            angular: "mode2".into(),
            scale: 4.0,
            r_cap: 2f64.powi(-20),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    pub name: String,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            name: "trig".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub form: String,
    pub kappa: f64,
    pub p: f64,
    pub radii: Option<Vec<f64>>,
    pub centers: Option<Vec<[f64; 2]>>,
    /// Extra centres drawn uniformly from the central quarter of the domain.
    pub random_centers: usize,
    pub alphas: Option<Vec<f64>>,
    pub tol: f64,
    pub c: Option<f64>,
    pub r0: f64,
    pub levels: Option<usize>,
    pub sizes: Option<Vec<usize>>,
    pub lattice: String,
    pub modulus: String,
    pub modulus_exponent: f64,
    pub min_order: f64,
    pub max_variation: Option<f64>,
    pub max_decay_ratio: f64,
    pub expected_slope: Option<f64>,
    pub slope_tolerance: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            form: "divergence".into(),
            kappa: 0.25,
            p: 0.5,
            radii: None,
            centers: None,
            random_centers: 0,
            alphas: None,
            tol: 1e-10,
            c: None,
            r0: 0.5,
            levels: None,
            sizes: None,
            lattice: "default".into(),
            modulus: "log_power".into(),
            modulus_exponent: 1.5,
            min_order: 1.8,
            max_variation: None,
            max_decay_ratio: 0.1,
            expected_slope: None,
            slope_tolerance: 0.15,
        }
    }
}

/// `(key, type, default)` rows describing every configuration key.
pub fn schema() -> Vec<(&'static str, Vec<(String, &'static str, String)>)> {
    let f = FieldSpec::default();
    let p = Params::default();
    let row = |k: &str, t: &'static str, d: String| (k.to_string(), t, d);
    vec![
        (
            "config",
            vec![
                row("experiment", "string", "required".into()),
                row("seed", "integer", "0".into()),
                row("output_dir", "path", "out".into()),
                row("grid.n", "integer", "required".into()),
                row("grid.extent", "float", "1.0".into()),
            ],
        ),
        (
            "field constant",
            vec![
                row("field.a11", "float", f.a11.to_string()),
                row("field.a12", "float", f.a12.to_string()),
                row("field.a21", "float", f.a21.to_string()),
                row("field.a22", "float", f.a22.to_string()),
            ],
        ),
        (
            "field log_family",
            vec![
                row("field.gamma", "float", f.gamma.to_string()),
                row("field.scale", "float", f.scale.to_string()),
                row("field.r_cap", "float", format!("{:e}", f.r_cap)),
            ],
        ),
        (
            "field log_power_family",
            vec![
                row("field.sigma", "float", f.sigma.to_string()),
                row("field.angular", "string", f.angular.clone()),
                row("field.scale", "float", f.scale.to_string()),
                row("field.r_cap", "float", format!("{:e}", f.r_cap)),
            ],
        ),
        (
            "data",
            vec![row("data.name", "string", DataSpec::default().name)],
        ),
        (
            "params",
            vec![
                row("params.form", "string", p.form.clone()),
                row("params.kappa", "float", p.kappa.to_string()),
                row("params.p", "float", p.p.to_string()),
                row("params.radii", "float list", "per experiment".into()),
                row("params.centers", "point list", "[[0, 0]]".into()),
                row(
                    "params.random_centers",
                    "integer",
                    p.random_centers.to_string(),
                ),
                row("params.alphas", "float list", "auto".into()),
                row("params.tol", "float", format!("{:e}", p.tol)),
                row(
                    "params.c",
                    "float",
                    "2 for constant fields, 8 otherwise".into(),
                ),
                row("params.r0", "float", p.r0.to_string()),
                row("params.levels", "integer", "largest resolvable".into()),
                row("params.sizes", "integer list", "[32, 64, 128, 256]".into()),
                row("params.lattice", "string", p.lattice.clone()),
                row("params.modulus", "string", p.modulus.clone()),
                row(
                    "params.modulus_exponent",
                    "float",
                    p.modulus_exponent.to_string(),
                ),
                row("params.min_order", "float", p.min_order.to_string()),
                row(
                    "params.max_variation",
                    "float",
                    "2 (weaktype, hormander), 4 (freezing)".into(),
                ),
                row(
                    "params.max_decay_ratio",
                    "float",
                    p.max_decay_ratio.to_string(),
                ),
                row("params.expected_slope", "float", "none".into()),
                row(
                    "params.slope_tolerance",
                    "float",
                    p.slope_tolerance.to_string(),
                ),
            ],
        ),
    ]
}

fn config_error(key: &str, msg: impl std::fmt::Display) -> RunError {
    RunError::Config(format!("{key}: {msg}"))
}

fn one_of(key: &str, value: &str, allowed: &[&str]) -> Result<(), RunError> {
    if allowed.contains(&value) {
        Ok(())
    } else {
        Err(config_error(
            key,
            format!(
                "unknown value '{value}' (expected one of {})",
                allowed.join(", ")
            ),
        ))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Range and name checks; everything a run needs is checked here, before any output.
    pub fn validate(&self) -> Result<(), RunError> {
        one_of("experiment", &self.experiment, &EXPERIMENTS)?;
        one_of("field.name", &self.field.name, &FIELDS)?;
        one_of("data.name", &self.data.name, &DATA)?;
        one_of("params.form", &self.params.form, &FORMS)?;
        one_of("params.lattice", &self.params.lattice, &LATTICES)?;
        one_of("params.modulus", &self.params.modulus, &MODULI)?;
        one_of("field.angular", &self.field.angular, &["mode2", "radial"])?;
        if self.grid.n < 8 {
            return Err(config_error("grid.n", "must be at least 8"));
        }
        if !(self.grid.extent > 0.0 && self.grid.extent.is_finite()) {
            return Err(config_error("grid.extent", "must be positive"));
        }
        let p = &self.params;
        if !(p.kappa > 0.0 && p.kappa < 0.5) {
            return Err(config_error("params.kappa", "must lie in (0, 1/2)"));
        }
        if !(p.p > 0.0 && p.p < 1.0) {
            return Err(config_error("params.p", "must lie in (0, 1)"));
        }
        if !(p.tol > 0.0 && p.tol < 1.0) {
            return Err(config_error("params.tol", "must lie in (0, 1)"));
        }
        if !(p.r0 > 0.0) {
            return Err(config_error("params.r0", "must be positive"));
        }
        if let Some(r) = &p.radii {
            if r.is_empty() || r.iter().any(|&v| !(v > 0.0)) {
                return Err(config_error(
                    "params.radii",
                    "must be a non-empty list of positive radii",
                ));
            }
            if matches!(self.experiment.as_str(), "weaktype") && r.windows(2).any(|w| w[1] >= w[0])
            {
                return Err(config_error("params.radii", "must decrease"));
            }
        }
        if let Some(a) = &p.alphas {
            if a.is_empty() || a.iter().any(|&v| !(v > 0.0)) || a.windows(2).any(|w| w[1] <= w[0]) {
                return Err(config_error(
                    "params.alphas",
                    "must be positive and increasing",
                ));
            }
        }
        if let Some(c) = &p.centers {
            let e = self.grid.extent;
            if c.iter().any(|x| x[0].abs() >= e || x[1].abs() >= e) {
                return Err(config_error(
                    "params.centers",
                    "every centre must lie inside the domain",
                ));
            }
        }
        if let Some(s) = &p.sizes {
            if s.len() < 2 || s.iter().any(|&n| n < 8) || s.windows(2).any(|w| w[1] <= w[0]) {
                return Err(config_error(
                    "params.sizes",
                    "needs at least two increasing sizes >= 8",
                ));
            }
        }
        if let Some(c) = p.c {
            if !(c > 1.0) {
                return Err(config_error("params.c", "must exceed 1"));
            }
        }
        if !(p.modulus_exponent > 0.0) {
            return Err(config_error("params.modulus_exponent", "must be positive"));
        }
        if self.field.name != "constant" {
            let key = if self.field.name == "log_family" {
                "field.gamma"
            } else {
                "field.sigma"
            };
            let v = if self.field.name == "log_family" {
                self.field.gamma
            } else {
                self.field.sigma
            };
            if !(v > 0.0) {
                return Err(config_error(key, "must be positive"));
            }
        }
        if matches!(self.params.form.as_str(), "nondivergence" | "adjoint")
            && self.field.a12 != self.field.a21
        {
            return Err(config_error(
                "field.a12",
                "nondivergence and adjoint forms need a symmetric field",
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON echo, truncated to 16 digits. The output
    /// directory is left out: it says where results go, not what they are.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&ExperimentConfig {
            output_dir: None,
            ..self.clone()
        })
        .expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
