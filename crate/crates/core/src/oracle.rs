//! Direct integration of `Y' = (λA + B)Y` as ground truth for the
//! expansion, the remainder-rate measurement, and the characteristic
//! determinant of the boundary conditions `y1(0) = 0`, `y2(1) = 0`.
//!
//! Each column is integrated in the direction in which its own exponential
//! dominates, with that exponential factored out:
//!
//! ```text
//! column 1: y = e^{λA1 + ∫b11} w,  w' = [[0, b12], [b21, −λa + b22 − b11]] w,  forward from w(0) = (1, 0)
//! column 2: y = e^{λA2 + ∫b22} w,  w' = [[λa + b11 − b22, b12], [b21, 0]] w,   backward from w(1) = (0, 1)
//! ```
//!
//! and then rescaled to `z11(1) = 1`, `z22(0) = 1`.

pub mod dop853;

use rayon::prelude::*;
use thiserror::Error;

use crate::expansion::ExpansionTable;
use crate::funcspace::{FuncSpaceError, GridFunction, InterpRow, C64};
use crate::neumann::{deoscillate, ColumnFunction, NeumannError};
use crate::problem::DerivedQuantities;
use crate::scaled::{Mat2, Scaled, ScaledMatrix};

pub use dop853::{OdeError, Stats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("integration failed at lambda = {lambda}: {source}")]
    Integration { lambda: C64, source: OdeError },
    #[error("normalization of column {column} degenerates at lambda = {lambda}")]
    Degenerate { column: usize, lambda: C64 },
    #[error("a rate fit needs at least 4 lambda samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Neumann(#[from] NeumannError),
    #[error(transparent)]
    Grid(#[from] FuncSpaceError),
}

pub const DEFAULT_TOL: f64 = 1e-10;

/// Coefficient values at arbitrary `x`, one barycentric row per point.
struct Coeffs<'a> {
    d: &'a DerivedQuantities,
}

impl Coeffs<'_> {
    /// `(a, b11, b12, b21, b22)`
    fn at(&self, x: f64) -> [C64; 5] {
        let row = self
            .d
            .grid()
            .interpolation_row(x.clamp(0.0, 1.0))
            .expect("clamped into [0, 1]");
        let c = self.d.coefficients();
        let ap = |f: &GridFunction| row.apply(f.values());
        [ap(&self.d.a), ap(&c.b11), ap(&c.b12), ap(&c.b21), ap(&c.b22)]
    }
}

/// One column of `Z` at the grid nodes.
#[derive(Debug, Clone)]
pub struct ColumnSolution {
    pub z: Vec<[C64; 2]>,
    pub stats: Stats,
}

/// Column `k` of `Z = M⁻¹ Y E⁻¹` at the grid nodes, normalized by
/// `z11(1) = 1, z21(0) = 0` (k = 1) or `z12(1) = 0, z22(0) = 1` (k = 2).
pub fn integrate_direct(d: &DerivedQuantities, lambda: C64, column: usize, tol: f64) -> Result<ColumnSolution, OracleError> {
    let cf = Coeffs { d };
    let nodes = d.grid().nodes();
    let opts = dop853::Options::with_tol(tol);
    let fail = |source| OracleError::Integration { lambda, source };
    let b = d.b.values();
    if column == 1 {
        let rhs = |x: f64, w: &[C64; 2]| {
            let [a, b11, b12, b21, b22] = cf.at(x);
            [b12 * w[1], b21 * w[0] + (-lambda * a + b22 - b11) * w[1]]
        };
        let one = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let (w, stats) = dop853::integrate(rhs, 0.0, one, nodes, &opts).map_err(fail)?;
        let scale = w[w.len() - 1][0];
        if scale.norm() < 1e-300 {
            return Err(OracleError::Degenerate { column, lambda });
        }
        let z = w
            .iter()
            .zip(b)
            .map(|(w, b)| [w[0] / scale, b * w[1] / scale])
            .collect();
        Ok(ColumnSolution { z, stats })
    } else {
        let rhs = |x: f64, w: &[C64; 2]| {
            let [a, b11, b12, b21, b22] = cf.at(x);
            [(lambda * a + b11 - b22) * w[0] + b12 * w[1], b21 * w[0]]
        };
        let rev: Vec<f64> = nodes.iter().rev().copied().collect();
        let unit = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let (mut w, stats) = dop853::integrate(rhs, 1.0, unit, &rev, &opts).map_err(fail)?;
        w.reverse();
        let scale = w[0][1];
        if scale.norm() < 1e-300 {
            return Err(OracleError::Degenerate { column, lambda });
        }
        let z = w
            .iter()
            .zip(b)
            .map(|(w, b)| [w[0] / (b * scale), w[1] / scale])
            .collect();
        Ok(ColumnSolution { z, stats })
    }
}

/// Both columns of the true normalized solution at the grid nodes.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub z: Vec<Mat2>,
    pub lambda: C64,
    pub stats: [Stats; 2],
    pub tol: f64,
}

impl OracleSolution {
    /// `det Z`, constant in `x`.
    pub fn det_z(&self) -> C64 {
        self.z[0].det()
    }

    pub fn column(&self, d: &DerivedQuantities, k: usize) -> ColumnFunction {
        let g = d.grid();
        let comp = |i: usize| {
            GridFunction::from_values(g, self.z.iter().map(|m| m[(i, k - 1)]).collect(), 0)
                .expect("one sample per node")
        };
        ColumnFunction::new(comp(0), comp(1))
    }

    /// `Y = M Z E` at node `j`, exponents kept separate.
    pub fn y(&self, d: &DerivedQuantities, j: usize) -> ScaledMatrix {
        let m = Mat2::diag(d.b11_int.values()[j].exp(), d.b22_int.values()[j].exp());
        ScaledMatrix::new(
            m * self.z[j],
            [self.lambda * d.a1_int.values()[j], self.lambda * d.a2_int.values()[j]],
        )
    }
}

pub fn solve(d: &DerivedQuantities, lambda: C64, tol: f64) -> Result<OracleSolution, OracleError> {
    let (c1, c2) = rayon::join(
        || integrate_direct(d, lambda, 1, tol),
        || integrate_direct(d, lambda, 2, tol),
    );
    let (c1, c2) = (c1?, c2?);
    let z = c1
        .z
        .iter()
        .zip(&c2.z)
        .map(|(a, b)| Mat2::from_columns(*a, *b))
        .collect();
    Ok(OracleSolution {
        x: d.grid().nodes().to_vec(),
        z,
        lambda,
        stats: [c1.stats, c2.stats],
        tol,
    })
}

/// `Δ(λ) = y2(1)` for the solution with `y(0) = (0, 1)`, i.e. the boundary
/// determinant `det [[Y11(0), Y12(0)], [Y21(1), Y22(1)]]` of the fundamental
/// matrix with `Y(0) = I`. Entire in `λ`.
pub fn characteristic_determinant(d: &DerivedQuantities, lambda: C64, tol: f64) -> Result<Scaled, OracleError> {
    let cf = Coeffs { d };
    let opts = dop853::Options::with_tol(tol);
    let upper = lambda.re >= 0.0;
    let rhs = |x: f64, w: &[C64; 2]| {
        let [a, b11, b12, b21, b22] = cf.at(x);
        if upper {
            [b12 * w[1], b21 * w[0] + (-lambda * a + b22 - b11) * w[1]]
        } else {
            [(lambda * a + b11 - b22) * w[0] + b12 * w[1], b21 * w[0]]
        }
    };
    let start = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let (w, _) = dop853::integrate(rhs, 0.0, start, &[1.0], &opts)
        .map_err(|source| OracleError::Integration { lambda, source })?;
    let last = d.grid().len() - 1;
    let exponent = if upper {
        lambda * d.a1_int.values()[last] + d.b11_int.values()[last]
    } else {
        lambda * d.a2_int.values()[last] + d.b22_int.values()[last]
    };
    Ok(Scaled::new(w[0][1], exponent))
}

/// Remainder of the truncated expansion along a ray of `λ` values.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub order: usize,
    pub lambdas: Vec<C64>,
    /// `max_x |Ẑ_true − (I + Σ R^m λ^{-m})|` per sample.
    pub errors: Vec<f64>,
    /// `errors[i] · |λ_i|^n`
    pub scaled: Vec<f64>,
    pub det_z: Vec<C64>,
    pub slope: f64,
    pub expected_slope: f64,
    pub floor_limited: bool,
}

pub const ERROR_FLOOR: f64 = 1e-12;
pub const SLOPE_MARGIN: f64 = 0.3;

impl RateReport {
    pub fn decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }

    /// Slope criterion for `n ≥ 1`; monotone decay for `n = 0`.
    pub fn passes(&self) -> bool {
        if self.floor_limited {
            return true;
        }
        if self.order == 0 {
            self.decreasing()
        } else {
            self.slope <= self.expected_slope + SLOPE_MARGIN
        }
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Distance between the de-oscillated true solution and the formal partial
/// sum at one `λ`, over all grid nodes.
pub fn remainder_at(
    table: &ExpansionTable,
    d: &DerivedQuantities,
    lambda: C64,
    tol: f64,
) -> Result<(f64, OracleSolution), OracleError> {
    let sol = solve(d, lambda, tol)?;
    let out = deoscillate(d, table, &sol.column(d, 1), &sol.column(d, 2), lambda)?;
    let mut worst: f64 = 0.0;
    for j in 0..d.grid().len() {
        let f = table.partial_sum_row(&InterpRow::Node(j), lambda);
        let (a, b) = (out.zhat1.at_node(d, j), out.zhat2.at_node(d, j));
        for i in 0..2 {
            worst = worst.max((a[i] - f[(i, 0)]).norm()).max((b[i] - f[(i, 1)]).norm());
        }
    }
    Ok((worst, sol))
}

/// Measure the remainder along `lambdas` (oriented frame, `|λ|` increasing)
/// and fit its log-log slope.
pub fn measure_remainder(
    table: &ExpansionTable,
    d: &DerivedQuantities,
    lambdas: &[C64],
    tol: f64,
) -> Result<RateReport, OracleError> {
    if lambdas.len() < 4 {
        return Err(OracleError::TooFewSamples(lambdas.len()));
    }
    let results = lambdas
        .par_iter()
        .map(|&l| remainder_at(table, d, l, tol))
        .collect::<Result<Vec<_>, _>>()?;
    let n = table.order;
    let errors: Vec<f64> = results.iter().map(|r| r.0).collect();
    let moduli: Vec<f64> = lambdas.iter().map(|l| l.norm()).collect();
    Ok(RateReport {
        order: n,
        lambdas: lambdas.to_vec(),
        scaled: errors
            .iter()
            .zip(&moduli)
            .map(|(e, m)| e * m.powi(n as i32))
            .collect(),
        det_z: results.iter().map(|r| r.1.det_z()).collect(),
        slope: loglog_slope(&moduli, &errors),
        expected_slope: -(n as f64 + 1.0),
        floor_limited: errors.iter().all(|&e| e < ERROR_FLOOR),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::{build_oriented, eval_y_asym};
    use crate::funcspace::{ChebGrid, ANALYTIC};
    use crate::problem::SystemCoefficients;
    use std::sync::Arc;

    fn dirac(grid: &Arc<ChebGrid>, b12: f64, b21: f64, n: usize) -> DerivedQuantities {
        let k = |c: f64| GridFunction::constant(grid, c);
        DerivedQuantities::new(&SystemCoefficients::new(
            k(1.0),
            k(-1.0),
            k(0.0),
            k(b12),
            k(b21),
            k(0.0),
            n,
            0.5,
        ))
        .unwrap()
    }

    /// `exp(xK)` for constant 2×2 `K`.
    fn expm(k: Mat2, x: f64) -> Mat2 {
        let half = (k[(0, 0)] + k[(1, 1)]) * 0.5;
        let shifted = k - Mat2::identity().scale(half);
        let mu = (-shifted.det()).sqrt();
        let (ch, sh) = ((mu * x).cosh(), if mu.norm() < 1e-300 { C64::new(x, 0.0) } else { (mu * x).sinh() / mu });
        (Mat2::identity().scale(ch) + shifted.scale(sh)).scale((half * x).exp())
    }

    #[test]
    fn zero_coupling_is_exact() {
        let g = ChebGrid::new(32).unwrap();
        let d = dirac(&g, 0.0, 0.0, 1);
        let sol = solve(&d, C64::new(300.0, 10.0), 1e-10).unwrap();
        for m in &sol.z {
            assert_eq!(*m, Mat2::identity());
        }
    }

    #[test]
    fn boundary_normalization() {
        let g = ChebGrid::new(64).unwrap();
        let d = dirac(&g, 0.7, -0.4, 1);
        let sol = solve(&d, C64::new(40.0, 5.0), 1e-11).unwrap();
        let last = g.len() - 1;
        assert!((sol.z[last][(0, 0)] - 1.0).norm() < 1e-15);
        assert_eq!(sol.z[0][(1, 0)], C64::new(0.0, 0.0));
        assert_eq!(sol.z[last][(0, 1)], C64::new(0.0, 0.0));
        assert!((sol.z[0][(1, 1)] - 1.0).norm() < 1e-15);
        for m in &sol.z {
            assert!((m.det() - sol.det_z()).norm() < 1e-9);
        }
    }

    #[test]
    fn matches_matrix_exponential() {
        let g = ChebGrid::new(64).unwrap();
        let c = 1.0;
        let d = dirac(&g, c, c, 1);
        let lam = C64::new(100.0, 0.0);
        let sol = solve(&d, lam, 1e-12).unwrap();
        let k = Mat2([[lam, C64::new(c, 0.0)], [C64::new(c, 0.0), -lam]]);
        // Column 1 of Z is proportional to e^{−λx}·(first column of exp(xK)),
        // scaled so that z11(1) = 1, since z21(0) = 0 there.
        let y1 = expm(k, 1.0);
        for (j, &x) in g.nodes().iter().enumerate() {
            let y = expm(k, x);
            let z11 = y[(0, 0)] * (-lam * x).exp() / (y1[(0, 0)] * (-lam).exp());
            let z21 = y[(1, 0)] * (-lam * x).exp() / (y1[(0, 0)] * (-lam).exp());
            assert!((sol.z[j][(0, 0)] - z11).norm() < 1e-8);
            assert!((sol.z[j][(1, 0)] - z21).norm() < 1e-8);
        }
    }

    #[test]
    fn lambda_zero_closed_form() {
        let g = ChebGrid::new(64).unwrap();
        let d = dirac(&g, 1.0, 1.0, 1);
        let sol = solve(&d, C64::new(0.0, 0.0), 1e-12).unwrap();
        // Z' = QZ with Q = [[0,1],[1,0]]: column 1 is (cosh x, sinh x)/cosh 1,
        // column 2 is (−sinh(1−x), cosh(1−x))/cosh 1.
        let c1 = 1f64.cosh();
        for (j, &x) in g.nodes().iter().enumerate() {
            let want = Mat2([
                [C64::new(x.cosh() / c1, 0.0), C64::new(-(1.0 - x).sinh() / c1, 0.0)],
                [C64::new(x.sinh() / c1, 0.0), C64::new((1.0 - x).cosh() / c1, 0.0)],
            ]);
            assert!((sol.z[j] - want).max_abs() < 1e-10);
        }
    }

    #[test]
    fn halving_tolerance_is_self_consistent() {
        let g = ChebGrid::new(64).unwrap();
        let f = |h: fn(f64) -> f64| GridFunction::from_real_fn(&g, ANALYTIC, h);
        let d = DerivedQuantities::new(&SystemCoefficients::new(
            f(|x| 1.0 + x * x / 4.0),
            f(|x| -1.0 - x / 2.0),
            f(|_| 0.0),
            f(f64::sin),
            f(f64::cos),
            f(|_| 0.0),
            1,
            0.5,
        ))
        .unwrap();
        let lam = C64::new(80.0, 30.0);
        let tol = 1e-9;
        let a = solve(&d, lam, tol).unwrap();
        let b = solve(&d, lam, tol / 2.0).unwrap();
        let diff = a.z.iter().zip(&b.z).map(|(p, q)| (*p - *q).max_abs()).fold(0.0, f64::max);
        assert!(diff < 10.0 * tol, "{diff}");
    }

    #[test]
    fn y_matches_asymptotic_form_without_coupling() {
        let g = ChebGrid::new(32).unwrap();
        let d = dirac(&g, 0.0, 0.0, 1);
        let table = build_oriented(&d, 1).unwrap();
        for l in [10.0, 100.0, 1000.0] {
            let lam = C64::new(l, 0.0);
            let sol = solve(&d, lam, 1e-10).unwrap();
            for (j, &x) in g.nodes().iter().enumerate() {
                let asym = eval_y_asym(&table, &d, x, lam).unwrap();
                assert!(asym.rel_distance(&sol.y(&d, j)) < 1e-10);
            }
        }
    }

    #[test]
    fn determinant_matches_closed_form() {
        let g = ChebGrid::new(32).unwrap();
        let d = dirac(&g, 1.0, 1.0, 1);
        for lam in [C64::new(1.7, 2.6), C64::new(-2.0, 7.0), C64::new(0.3, -30.0)] {
            let mu = (lam * lam + 1.0).sqrt();
            let want = mu.cosh() - lam * mu.sinh() / mu;
            let got = characteristic_determinant(&d, lam, 1e-12).unwrap().value();
            assert!((got - want).norm() < 1e-9 * want.norm().max(1.0), "{lam}: {got} vs {want}");
        }
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-2.0)).collect();
        assert!((loglog_slope(&x, &y) + 2.0).abs() < 1e-12);
    }
}
