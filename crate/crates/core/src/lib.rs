//! Asymptotic expansions of fundamental matrices of `Y' = (λA + B)Y` on
//! `[0, 1]`, where `A = diag(a1, a2)` with `a1 > 0 > a2`.
//!
//! The fundamental matrix is written as
//!
//! ```text
//! Y(x, λ) = M(x) (I + Σ_{m=1}^n R^m(x) λ^{-m} + o(λ^{-n})) E(x, λ)
//! M = diag(e^{∫b11}, e^{∫b22}),  E = diag(e^{λ∫a1}, e^{λ∫a2})
//! ```
//!
//! * [`funcspace`]: Chebyshev grid functions on `[0, 1]`.
//! * [`problem`]: coefficients, validation, derived gauge quantities.
//! * [`expansion`]: the `R^m` recurrences and `Y_asym`.
//! * [`neumann`]: Volterra operators, Neumann series, remainder integrals.
//! * [`oracle`]: direct integration, remainder-rate measurement, and the
//!   characteristic determinant of `y1(0) = 0`, `y2(1) = 0`.
//!
//! ```
//! use fundasym::funcspace::{ChebGrid, GridFunction};
//! use fundasym::problem::{HalfPlane, SystemCoefficients};
//! use fundasym::expansion::build_table;
//!
//! let g = ChebGrid::new(64).unwrap();
//! let k = |c: f64| GridFunction::constant(&g, c);
//! let coeffs = SystemCoefficients::new(k(1.0), k(-1.0), k(0.0), k(1.0), k(1.0), k(0.0), 2, 0.5);
//! let table = build_table(&coeffs, HalfPlane::plus(0.0)).unwrap();
//! let r1 = &table.r[0];
//! assert!((r1.r21.evaluate(0.3).unwrap().re - 0.5).abs() < 1e-12);
//! ```

pub mod eigen;
pub mod expansion;
pub mod funcspace;
pub mod neumann;
pub mod oracle;
pub mod problem;
pub mod scaled;

pub use expansion::{build_table, eval_y_asym, ExpansionTable, Mat2Fn};
pub use funcspace::{ChebGrid, GridFunction, C64};
pub use neumann::{ColumnFunction, RemainderEstimates};
pub use problem::{DerivedQuantities, HalfPlane, SystemCoefficients};
pub use scaled::{Mat2, Scaled, ScaledMatrix};
