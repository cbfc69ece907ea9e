//! JSON problem specification.

use std::path::Path;
use std::sync::Arc;

use fundasym::funcspace::{from_table, ChebGrid, GridFunction, ANALYTIC, C64};
use fundasym::problem::{HalfPlane, SystemCoefficients};
use serde::Deserialize;
use thiserror::Error;

use crate::expr::{self, ParseError};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed spec at line {line}, column {column}: {message}")]
    Json { line: usize, column: usize, message: String },
    #[error("field '{field}': {source}")]
    Expr { field: String, source: ParseError },
    #[error("field '{field}': {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> SpecError {
    SpecError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Expr(String),
    Detailed(Detailed),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detailed {
    #[serde(default)]
    pub expr: Option<String>,
    #[serde(default)]
    pub table: Option<Table>,
    #[serde(default)]
    pub smoothness: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub x: Vec<f64>,
    pub re: Vec<f64>,
    #[serde(default)]
    pub im: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub a1: CoefficientSpec,
    pub a2: CoefficientSpec,
    #[serde(default)]
    pub b11: Option<CoefficientSpec>,
    #[serde(default)]
    pub b12: Option<CoefficientSpec>,
    #[serde(default)]
    pub b21: Option<CoefficientSpec>,
    #[serde(default)]
    pub b22: Option<CoefficientSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaRay {
    pub start: f64,
    pub factor: f64,
    pub count: usize,
    #[serde(default)]
    pub arg: f64,
}

impl LambdaRay {
    /// `start · factor^k · e^{i arg}`, `k = 0 … count−1`.
    pub fn samples(&self) -> Vec<C64> {
        (0..self.count)
            .map(|k| C64::from_polar(self.start * self.factor.powi(k as i32), self.arg))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub coefficients: Coefficients,
    #[serde(default = "default_n")]
    pub n: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_side")]
    pub half_plane: Side,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub lambda_ray: Option<LambdaRay>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub lambda_min: Option<f64>,
    /// `[re0, re1, im0, im1]`
    #[serde(default)]
    pub rect: Option<[f64; 4]>,
}

fn default_n() -> usize {
    1
}
fn default_side() -> Side {
    Side::Plus
}
fn default_grid() -> usize {
    256
}
fn default_tol() -> f64 {
    1e-12
}

impl ProblemSpec {
    pub fn from_str(text: &str) -> Result<Self, SpecError> {
        serde_json::from_str(text).map_err(|e| SpecError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str(&text)
    }

    pub fn half_plane(&self) -> HalfPlane {
        match self.half_plane {
            Side::Plus => HalfPlane::plus(self.kappa),
            Side::Minus => HalfPlane::minus(self.kappa),
        }
    }

    pub fn check_ray(&self, ray: &LambdaRay) -> Result<Vec<C64>, SpecError> {
        if !(ray.start > 0.0 && ray.factor > 1.0 && ray.arg.is_finite()) {
            return Err(invalid("lambda_ray", "need start > 0 and factor > 1"));
        }
        let hp = self.half_plane();
        let samples = ray.samples();
        if let Some(bad) = samples.iter().find(|l| !hp.contains(**l)) {
            return Err(invalid("lambda_ray", format!("sample {bad} lies outside the declared half-plane")));
        }
        Ok(samples)
    }

    pub fn build(&self) -> Result<SystemCoefficients, SpecError> {
        if self.grid < 2 {
            return Err(invalid("grid", "need at least 2 nodes"));
        }
        let g = ChebGrid::new(self.grid).map_err(|e| invalid("grid", e.to_string()))?;
        let c = &self.coefficients;
        let zero = CoefficientSpec::Expr("0".into());
        let get = |name: &str, spec: &CoefficientSpec| coefficient(&g, name, spec);
        let or_zero = |o: &Option<CoefficientSpec>| o.clone().unwrap_or_else(|| zero.clone());
        Ok(SystemCoefficients::new(
            get("a1", &c.a1)?,
            get("a2", &c.a2)?,
            get("b11", &or_zero(&c.b11))?,
            get("b12", &or_zero(&c.b12))?,
            get("b21", &or_zero(&c.b21))?,
            get("b22", &or_zero(&c.b22))?,
            self.n,
            self.epsilon,
        ))
    }
}

fn coefficient(g: &Arc<ChebGrid>, name: &str, spec: &CoefficientSpec) -> Result<GridFunction, SpecError> {
    let field = format!("coefficients.{name}");
    let from_expr = |src: &str, smoothness: u32| {
        let e = expr::parse(src).map_err(|source| SpecError::Expr { field: field.clone(), source })?;
        Ok(GridFunction::from_fn(g, smoothness, |x| e.eval(x)))
    };
    match spec {
        CoefficientSpec::Expr(src) => from_expr(src, ANALYTIC),
        CoefficientSpec::Detailed(d) => match (&d.expr, &d.table) {
            (Some(src), None) => from_expr(src, d.smoothness.unwrap_or(ANALYTIC)),
            (None, Some(t)) => {
                let values: Vec<C64> = match &t.im {
                    None => t.re.iter().map(|&r| C64::new(r, 0.0)).collect(),
                    Some(im) if im.len() == t.re.len() => {
                        t.re.iter().zip(im).map(|(&r, &i)| C64::new(r, i)).collect()
                    }
                    Some(_) => return Err(invalid(&field, "'re' and 'im' differ in length")),
                };
                from_table(g, &t.x, &values, d.smoothness.unwrap_or(0))
                    .map_err(|e| invalid(&field, e.to_string()))
            }
            _ => Err(invalid(&field, "give exactly one of 'expr' or 'table'")),
        },
    }
}
