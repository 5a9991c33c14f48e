//! Scenario definitions: the built-in test surfaces and strict TOML loading.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{GeometryError, ManifoldSpec};
use crate::symbolics::{Expr, ParseError};

/// Two-peaks function on the unit sphere, written in a rotated frame
/// (rotation by 0.3 about x2, then 0.2 about x1, applied to x3 + 2·x1²).
/// The rotation keeps the Morse data of the upright version while moving
/// every critical point away from those of the quadratic sphere, so the
/// two functions admit an admissible homotopy in general position.
pub const TWO_PEAKS_F: &str = "-0.295520206661340*x1-0.189796060978687*x2+0.936293363584199*x3+2*(0.955336489125606*x1-0.058710801693827*x2+0.289629477625516*x3)^2";

const SPHERE_CONSTRAINT: &str = "x1^2+x2^2+x3^2-1";
const QUADRATIC_F: &str = "3*x1^2+2*x2^2+x3^2";
const TORUS_CONSTRAINT: &str = "(sqrt(x1^2+x3^2)-2)^2+x2^2-1";

pub const DEFAULT_OR_SEED: u64 = 7;
const DEFAULT_BOUNDING_RADIUS: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Toml { path: String, message: String },
    #[error("scenario field `{field}`: {source}")]
    Expression { field: String, source: ParseError },
    #[error("unknown scenario `{0}` (built-ins: sphere_quadratic, sphere_two_peaks, torus_tilted, torus_untilted, rp2)")]
    Unknown(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// On-disk scenario format. Unknown keys are rejected by name.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    ambient_dim: usize,
    constraints: Vec<String>,
    f: String,
    involution: Option<Vec<Vec<f64>>>,
    bounding_radius: Option<f64>,
    or_seed: Option<u64>,
    max_time: Option<f64>,
    level: Option<f64>,
    continue_to: Option<String>,
}

/// A fully resolved scenario: the manifold plus run options, with the
/// source strings kept for report echoing.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub spec: ManifoldSpec,
    pub or_seed: u64,
    pub max_time: Option<f64>,
    /// Preferred regular level for moduli-arc tracing, if pinned.
    pub level: Option<f64>,
    pub continue_to: Option<String>,
    pub constraints_src: Vec<String>,
    pub f_src: String,
    pub involution_src: Option<Vec<Vec<f64>>>,
    pub bounding_radius: f64,
}

fn assemble(
    name: String,
    ambient_dim: usize,
    constraints_src: Vec<String>,
    f_src: String,
    involution_src: Option<Vec<Vec<f64>>>,
    bounding_radius: f64,
    or_seed: u64,
    max_time: Option<f64>,
    level: Option<f64>,
    continue_to: Option<String>,
) -> Result<Scenario, ScenarioError> {
    let mut constraints = Vec::with_capacity(constraints_src.len());
    for (i, c) in constraints_src.iter().enumerate() {
        constraints.push(Expr::parse(c, ambient_dim).map_err(|source| {
            ScenarioError::Expression {
                field: format!("constraints[{i}]"),
                source,
            }
        })?);
    }
    let f = Expr::parse(&f_src, ambient_dim).map_err(|source| ScenarioError::Expression {
        field: "f".into(),
        source,
    })?;
    let involution = match &involution_src {
        None => None,
        Some(rows) => {
            if rows.len() != ambient_dim || rows.iter().any(|r| r.len() != ambient_dim) {
                return Err(ScenarioError::Invalid(format!(
                    "involution must be a {ambient_dim}x{ambient_dim} matrix"
                )));
            }
            Some(DMatrix::from_fn(ambient_dim, ambient_dim, |i, j| rows[i][j]))
        }
    };
    if !(bounding_radius.is_finite() && bounding_radius > 0.0) {
        return Err(ScenarioError::Invalid(
            "bounding_radius must be positive and finite".into(),
        ));
    }
    let spec = ManifoldSpec::new(
        ambient_dim,
        constraints,
        Arc::new(f),
        involution,
        name.clone(),
        bounding_radius,
    )?;
    Ok(Scenario {
        name,
        spec,
        or_seed,
        max_time,
        level,
        continue_to,
        constraints_src,
        f_src,
        involution_src,
        bounding_radius,
    })
}

fn simple_builtin(
    name: &str,
    constraints: &[&str],
    f: &str,
    involution: Option<Vec<Vec<f64>>>,
    radius: f64,
) -> Result<Scenario, ScenarioError> {
    assemble(
        name.to_string(),
        3,
        constraints.iter().map(|s| s.to_string()).collect(),
        f.to_string(),
        involution,
        radius,
        DEFAULT_OR_SEED,
        None,
        None,
        None,
    )
}

/// Resolve a built-in scenario by name. `torus_tilted` accepts an optional
/// tilt angle in radians as `torus_tilted(0.4)`; the default is 0.3.
pub fn builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let (base, arg) = match (name.find('('), name.ends_with(')')) {
        (Some(i), true) => (&name[..i], Some(&name[i + 1..name.len() - 1])),
        (None, false) => (name, None),
        _ => return Err(ScenarioError::Unknown(name.to_string())),
    };
    match (base, arg) {
        ("sphere_quadratic", None) => {
            simple_builtin("sphere_quadratic", &[SPHERE_CONSTRAINT], QUADRATIC_F, None, 1.5)
        }
        ("sphere_two_peaks", None) => {
            simple_builtin("sphere_two_peaks", &[SPHERE_CONSTRAINT], TWO_PEAKS_F, None, 1.5)
        }
        ("torus_untilted", None) => {
            simple_builtin("torus_untilted", &[TORUS_CONSTRAINT], "x3", None, 3.2)
        }
        ("torus_tilted", arg) => {
            let theta: f64 = match arg {
                None => 0.3,
                Some(a) => a
                    .trim()
                    .parse()
                    .map_err(|_| ScenarioError::Invalid(format!("bad tilt angle `{a}`")))?,
            };
            if !theta.is_finite() {
                return Err(ScenarioError::Invalid("tilt angle must be finite".into()));
            }
            let f = format!("{:.15}*x3+{:.15}*x2", theta.cos(), theta.sin());
            simple_builtin("torus_tilted", &[TORUS_CONSTRAINT], &f, None, 3.2)
        }
        ("rp2", None) => {
            let sigma = vec![
                vec![-1.0, 0.0, 0.0],
                vec![0.0, -1.0, 0.0],
                vec![0.0, 0.0, -1.0],
            ];
            simple_builtin("rp2", &[SPHERE_CONSTRAINT], QUADRATIC_F, Some(sigma), 1.5)
        }
        _ => Err(ScenarioError::Unknown(name.to_string())),
    }
}

/// Load a scenario from a TOML file. Parse errors carry the line and
/// column; unknown keys are rejected by name.
pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| ScenarioError::Toml {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if file.name.is_empty() {
        return Err(ScenarioError::Invalid("name must be nonempty".into()));
    }
    assemble(
        file.name,
        file.ambient_dim,
        file.constraints,
        file.f,
        file.involution,
        file.bounding_radius.unwrap_or(DEFAULT_BOUNDING_RADIUS),
        file.or_seed.unwrap_or(DEFAULT_OR_SEED),
        file.max_time,
        file.level,
        file.continue_to,
    )
}
