//! The system `Y' = (λA + B)Y` on `[0, 1]`: coefficient validation, the
//! derived gauge quantities, and the diagonal factors `M(x)` and `E(x, λ)`.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::funcspace::{Base, ChebGrid, FuncSpaceError, GridFunction, C64};
use crate::scaled::{Mat2, ScaledMatrix};

/// The six coefficient functions, the expansion order `n` and the separation
/// margin `ε` with `a1 − a2 ≥ ε`.
#[derive(Debug, Clone)]
pub struct SystemCoefficients {
    pub a1: GridFunction,
    pub a2: GridFunction,
    pub b11: GridFunction,
    pub b12: GridFunction,
    pub b21: GridFunction,
    pub b22: GridFunction,
    pub order: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    GridMismatch {
        coefficient: &'static str,
    },
    NonFinite {
        coefficient: &'static str,
        x: f64,
    },
    NotReal {
        coefficient: &'static str,
        x: f64,
    },
    Sign {
        coefficient: &'static str,
        x: f64,
        value: f64,
    },
    Separation {
        x: f64,
        gap: f64,
        epsilon: f64,
    },
    Smoothness {
        coefficient: &'static str,
        required: u32,
        available: u32,
    },
    BadEpsilon(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GridMismatch { coefficient } => {
                write!(f, "{coefficient} is sampled on a different grid")
            }
            Violation::NonFinite { coefficient, x } => {
                write!(f, "{coefficient} is not finite at x={x}")
            }
            Violation::NotReal { coefficient, x } => {
                write!(f, "{coefficient} must be real-valued, fails at x={x}")
            }
            Violation::Sign {
                coefficient,
                x,
                value,
            } => {
                let want = if *coefficient == "a1" { "positive" } else { "negative" };
                write!(f, "sign violation: {coefficient} not {want} at x={x} (value {value})")
            }
            Violation::Separation { x, gap, epsilon } => {
                write!(f, "separation violation: a1 - a2 = {gap} < epsilon = {epsilon} at x={x}")
            }
            Violation::Smoothness {
                coefficient,
                required,
                available,
            } => write!(
                f,
                "smoothness shortfall: {coefficient} needs {required} derivatives, has {available}"
            ),
            Violation::BadEpsilon(e) => write!(f, "epsilon must be positive and finite, got {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid system:")?;
        for v in &self.violations {
            write!(f, " {v};")?;
        }
        Ok(())
    }
}

impl ValidationReport {
    pub fn has_sign_violation(&self, name: &str) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, Violation::Sign { coefficient, .. } if *coefficient == name))
    }
}

impl SystemCoefficients {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a1: GridFunction,
        a2: GridFunction,
        b11: GridFunction,
        b12: GridFunction,
        b21: GridFunction,
        b22: GridFunction,
        order: usize,
        epsilon: f64,
    ) -> Self {
        Self {
            a1,
            a2,
            b11,
            b12,
            b21,
            b22,
            order,
            epsilon,
        }
    }

    pub fn grid(&self) -> &Arc<ChebGrid> {
        self.a1.grid()
    }

    fn named(&self) -> [(&'static str, &GridFunction); 6] {
        [
            ("a1", &self.a1),
            ("a2", &self.a2),
            ("b11", &self.b11),
            ("b12", &self.b12),
            ("b21", &self.b21),
            ("b22", &self.b22),
        ]
    }

    /// The checks that every computation depends on: common grid, finite
    /// samples, real `a_i`, signs and separation.
    fn structural_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            out.push(Violation::BadEpsilon(self.epsilon));
        }
        let grid = self.grid();
        for (name, f) in self.named() {
            if !f.grid().same_as(grid) {
                out.push(Violation::GridMismatch { coefficient: name });
                continue;
            }
            if let Some((x, _)) = f
                .nodes()
                .iter()
                .zip(f.values())
                .find(|(_, v)| !(v.re.is_finite() && v.im.is_finite()))
            {
                out.push(Violation::NonFinite {
                    coefficient: name,
                    x: *x,
                });
            }
        }
        if !out.is_empty() {
            return out;
        }
        for (name, f, positive) in [("a1", &self.a1, true), ("a2", &self.a2, false)] {
            let nodes = f.nodes().iter().zip(f.values());
            if let Some((x, _)) = nodes
                .clone()
                .find(|(_, v)| v.im.abs() > 1e-12 * (1.0 + v.re.abs()))
            {
                out.push(Violation::NotReal {
                    coefficient: name,
                    x: *x,
                });
            }
            let bad = nodes.clone().find(|(_, v)| {
                if positive {
                    v.re <= 0.0
                } else {
                    v.re >= 0.0
                }
            });
            if let Some((x, v)) = bad {
                out.push(Violation::Sign {
                    coefficient: name,
                    x: *x,
                    value: v.re,
                });
            }
        }
        let sep = self
            .grid()
            .nodes()
            .iter()
            .zip(self.a1.values().iter().zip(self.a2.values()))
            .find(|(_, (p, q))| p.re - q.re < self.epsilon);
        if let Some((x, (p, q))) = sep {
            out.push(Violation::Separation {
                x: *x,
                gap: p.re - q.re,
                epsilon: self.epsilon,
            });
        }
        out
    }

    fn smoothness_violations(&self) -> Vec<Violation> {
        let n = self.order as u32;
        let diag = n.saturating_sub(1);
        self.named()
            .into_iter()
            .filter_map(|(name, f)| {
                let required = if name == "b11" || name == "b22" { diag } else { n };
                (f.smoothness() < required).then_some(Violation::Smoothness {
                    coefficient: name,
                    required,
                    available: f.smoothness(),
                })
            })
            .collect()
    }

    /// Check every hypothesis at every node and report all violations.
    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut violations = self.structural_violations();
        violations.extend(self.smoothness_violations());
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationReport { violations })
        }
    }

    /// The system seen through `λ ↦ −λ` with the two components exchanged:
    /// `a1' = −a2`, `a2' = −a1`, `b11' = b22`, `b12' = b21`. A half-plane
    /// `Re λ < κ` problem for `self` is a `Re λ' > −κ` problem for the result.
    pub fn mirrored(&self) -> Self {
        Self {
            a1: -&self.a2,
            a2: -&self.a1,
            b11: self.b22.clone(),
            b12: self.b21.clone(),
            b21: self.b12.clone(),
            b22: self.b11.clone(),
            order: self.order,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `Re λ > −κ`
    Plus,
    /// `Re λ < κ`
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub side: Side,
    pub kappa: f64,
}

impl HalfPlane {
    pub fn plus(kappa: f64) -> Self {
        Self {
            side: Side::Plus,
            kappa,
        }
    }

    pub fn minus(kappa: f64) -> Self {
        Self {
            side: Side::Minus,
            kappa,
        }
    }

    pub fn contains(&self, lambda: C64) -> bool {
        match self.side {
            Side::Plus => lambda.re > -self.kappa,
            Side::Minus => lambda.re < self.kappa,
        }
    }

    /// Map `λ` to the spectral parameter of the oriented (plus-side) system.
    pub fn to_plus(&self, lambda: C64) -> C64 {
        match self.side {
            Side::Plus => lambda,
            Side::Minus => -lambda,
        }
    }

    /// Coefficients of the oriented system; identity on the plus side.
    pub fn orient(&self, coeffs: &SystemCoefficients) -> SystemCoefficients {
        match self.side {
            Side::Plus => coeffs.clone(),
            Side::Minus => coeffs.mirrored(),
        }
    }
}

/// Gauge quantities `a`, `b`, `A_i`, `ρ`, `q12`, `q21` and the primitives of
/// the diagonal of `B`.
#[derive(Debug, Clone)]
pub struct DerivedQuantities {
    coeffs: SystemCoefficients,
    /// `a1 − a2`
    pub a: GridFunction,
    /// `exp ∫_0^x (b11 − b22)`
    pub b: GridFunction,
    pub b_inv: GridFunction,
    pub a1_int: GridFunction,
    pub a2_int: GridFunction,
    /// `A1 − A2`, strictly increasing from 0.
    pub rho: GridFunction,
    /// `b12 / b`
    pub q12: GridFunction,
    /// `b21 · b`
    pub q21: GridFunction,
    pub b11_int: GridFunction,
    pub b22_int: GridFunction,
}

impl DerivedQuantities {
    /// Compute the derived functions. Structural hypotheses (signs,
    /// separation, real `a_i`) are enforced here; the smoothness budget is
    /// left to the expansion, which reports shortfalls per order.
    pub fn new(coeffs: &SystemCoefficients) -> Result<Self, ValidationReport> {
        let violations = coeffs.structural_violations();
        if !violations.is_empty() {
            return Err(ValidationReport { violations });
        }
        let real = |f: &GridFunction| f.map(|v| C64::new(v.re, 0.0));
        let a1 = real(&coeffs.a1);
        let a2 = real(&coeffs.a2);
        let a = &a1 - &a2;
        let a1_int = a1.integrate_from(Base::Zero);
        let a2_int = a2.integrate_from(Base::Zero);
        let rho = &a1_int - &a2_int;
        let b11_int = coeffs.b11.integrate_from(Base::Zero);
        let b22_int = coeffs.b22.integrate_from(Base::Zero);
        let log_b = &b11_int - &b22_int;
        let b = log_b.exp();
        let b_inv = log_b.map(|v| (-v).exp());
        let q12 = &coeffs.b12 * &b_inv;
        let q21 = &coeffs.b21 * &b;
        Ok(Self {
            coeffs: coeffs.clone(),
            a,
            b,
            b_inv,
            a1_int,
            a2_int,
            rho,
            q12,
            q21,
            b11_int,
            b22_int,
        })
    }

    pub fn coefficients(&self) -> &SystemCoefficients {
        &self.coeffs
    }

    pub fn grid(&self) -> &Arc<ChebGrid> {
        self.coeffs.grid()
    }

    pub fn order(&self) -> usize {
        self.coeffs.order
    }

    /// `ρ(1)`
    pub fn rho_total(&self) -> f64 {
        self.rho.values().last().map_or(0.0, |v| v.re)
    }

    pub fn rho_at(&self, x: f64) -> Result<f64, FuncSpaceError> {
        Ok(self.rho.evaluate(x)?.re)
    }

    /// `M(x) = diag(e^{∫_0^x b11}, e^{∫_0^x b22})`
    pub fn matrix_m(&self, x: f64) -> Result<Mat2, FuncSpaceError> {
        Ok(Mat2::diag(
            self.b11_int.evaluate(x)?.exp(),
            self.b22_int.evaluate(x)?.exp(),
        ))
    }

    /// `E(x, λ)` as unit mantissas with exponents `(λA1(x), λA2(x))`.
    pub fn matrix_e(&self, x: f64, lambda: C64) -> Result<ScaledMatrix, FuncSpaceError> {
        Ok(ScaledMatrix::new(
            Mat2::identity(),
            [
                lambda * self.a1_int.evaluate(x)?,
                lambda * self.a2_int.evaluate(x)?,
            ],
        ))
    }
}
