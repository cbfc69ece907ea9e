//! Coefficients `R^m(x)` of the formal expansion `Z ~ I + Σ R^m λ^{-m}` and the
//! asymptotic fundamental matrix `Y_asym = M (I + Σ R^m λ^{-m}) E`.
//!
//! With `D f = f'/a`, `I1 f = −∫_x^1 q12 f`, `I2 f = ∫_0^x q21 f`,
//! `J1 = (q21/a) I1` and `J2 = −(q12/a) I2`:
//!
//! ```text
//! r21^1 = q21/a            r12^1 = −q12/a
//! r21^{m+1} = (−D + J1) r21^m
//! r12^{m+1} = ( D + J2) r12^m
//! r11^m = I1 r21^m         r22^m = I2 r12^m
//! ```

use thiserror::Error;

use crate::funcspace::{Base, FuncSpaceError, GridFunction, InterpRow, C64};
use crate::neumann;
use crate::problem::{DerivedQuantities, HalfPlane, Side, SystemCoefficients, ValidationReport};
use crate::scaled::{Mat2, ScaledMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExpansionError {
    #[error("smoothness budget exhausted: {entry} of order {order} cannot be differentiated")]
    Smoothness { order: usize, entry: &'static str },
    #[error("|lambda| = {modulus} is below the threshold lambda_min = {lambda_min}")]
    BelowThreshold { modulus: f64, lambda_min: f64 },
    #[error(transparent)]
    Invalid(#[from] ValidationReport),
    #[error(transparent)]
    Grid(#[from] FuncSpaceError),
}

/// A 2×2 matrix of grid functions.
#[derive(Debug, Clone)]
pub struct Mat2Fn {
    pub r11: GridFunction,
    pub r12: GridFunction,
    pub r21: GridFunction,
    pub r22: GridFunction,
}

impl Mat2Fn {
    pub fn entries(&self) -> [(&'static str, &GridFunction); 4] {
        [
            ("r11", &self.r11),
            ("r12", &self.r12),
            ("r21", &self.r21),
            ("r22", &self.r22),
        ]
    }

    pub fn at_row(&self, row: &InterpRow) -> Mat2 {
        Mat2([
            [row.apply(self.r11.values()), row.apply(self.r12.values())],
            [row.apply(self.r21.values()), row.apply(self.r22.values())],
        ])
    }

    pub fn at_node(&self, j: usize) -> Mat2 {
        self.at_row(&InterpRow::Node(j))
    }

    pub fn evaluate(&self, x: f64) -> Result<Mat2, FuncSpaceError> {
        Ok(self.at_row(&self.r11.grid().interpolation_row(x)?))
    }

    pub fn smoothness(&self) -> [u32; 4] {
        self.entries().map(|(_, f)| f.smoothness())
    }

    /// `s · P X P`
    fn exchanged_scaled(&self, s: f64) -> Self {
        Self {
            r11: &self.r22 * s,
            r12: &self.r21 * s,
            r21: &self.r12 * s,
            r22: &self.r11 * s,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries()
            .iter()
            .map(|(_, f)| f.max_abs())
            .fold(0.0, f64::max)
    }
}

fn differentiate(f: &GridFunction, order: usize, entry: &'static str) -> Result<GridFunction, ExpansionError> {
    f.derivative().map_err(|e| match e {
        FuncSpaceError::SmoothnessBudget => ExpansionError::Smoothness { order, entry },
        other => other.into(),
    })
}

fn close(d: &DerivedQuantities, r12: GridFunction, r21: GridFunction) -> Mat2Fn {
    let r11 = -&(&d.q12 * &r21).integrate_from(Base::One);
    let r22 = (&d.q21 * &r12).integrate_from(Base::Zero);
    Mat2Fn { r11, r12, r21, r22 }
}

/// `R^1`.
pub fn first_order(d: &DerivedQuantities) -> Result<Mat2Fn, ExpansionError> {
    for (entry, q) in [("r12", &d.q12), ("r21", &d.q21)] {
        if q.smoothness() < 1 {
            return Err(ExpansionError::Smoothness { order: 1, entry });
        }
    }
    let r21 = &d.q21 / &d.a;
    let r12 = -&(&d.q12 / &d.a);
    Ok(close(d, r12, r21))
}

/// `R^{m+1}` from `R^m`.
pub fn next_order(d: &DerivedQuantities, rm: &Mat2Fn, m: usize) -> Result<Mat2Fn, ExpansionError> {
    let dr21 = differentiate(&rm.r21, m, "r21")?;
    let dr12 = differentiate(&rm.r12, m, "r12")?;
    let r21 = &(&(&d.q21 * &rm.r11) - &dr21) / &d.a;
    let r12 = &(&dr12 - &(&d.q12 * &rm.r22)) / &d.a;
    Ok(close(d, r12, r21))
}

/// `R^1 … R^n` together with the modulus threshold below which the
/// expansion is not evaluated.
#[derive(Debug, Clone)]
pub struct ExpansionTable {
    pub order: usize,
    pub r: Vec<Mat2Fn>,
    pub half_plane: HalfPlane,
    pub lambda_min: f64,
}

impl ExpansionTable {
    /// Smoothness hints per order, entries in the order `r11, r12, r21, r22`.
    pub fn smoothness(&self) -> Vec<[u32; 4]> {
        self.r.iter().map(Mat2Fn::smoothness).collect()
    }

    pub fn with_lambda_min(mut self, lambda_min: f64) -> Self {
        self.lambda_min = lambda_min;
        self
    }

    /// `I + Σ_{m ≤ n} R^m λ^{-m}` at the interpolation row.
    pub fn partial_sum_row(&self, row: &InterpRow, lambda: C64) -> Mat2 {
        let inv = lambda.inv();
        let mut pow = C64::new(1.0, 0.0);
        let mut out = Mat2::identity();
        for rm in &self.r {
            pow *= inv;
            out = out + rm.at_row(row).scale(pow);
        }
        out
    }

    pub fn partial_sum(&self, x: f64, lambda: C64) -> Result<Mat2, FuncSpaceError> {
        let row = match self.r.first() {
            Some(r) => r.r11.grid().interpolation_row(x)?,
            None if (0.0..=1.0).contains(&x) => InterpRow::Node(0),
            None => return Err(FuncSpaceError::Domain(x)),
        };
        Ok(self.partial_sum_row(&row, lambda))
    }
}

/// Build `R^1 … R^n` for the half-plane `hp`. Coefficients for `Re λ < κ` are
/// computed on the mirrored system and mapped back by `R^m = (−1)^m P R'^m P`,
/// so the returned matrices always refer to the original system.
pub fn build_table(
    coeffs: &SystemCoefficients,
    hp: HalfPlane,
) -> Result<ExpansionTable, ExpansionError> {
    let oriented = hp.orient(coeffs);
    let d = DerivedQuantities::new(&oriented)?;
    let mut table = build_oriented(&d, coeffs.order)?;
    table.half_plane = hp;
    if hp.side == Side::Minus {
        table.r = table
            .r
            .iter()
            .enumerate()
            .map(|(i, rm)| rm.exchanged_scaled(if i % 2 == 0 { -1.0 } else { 1.0 }))
            .collect();
    }
    Ok(table)
}

/// Build the table for an already oriented (`Re λ > −κ`) system.
pub fn build_oriented(d: &DerivedQuantities, n: usize) -> Result<ExpansionTable, ExpansionError> {
    let mut r: Vec<Mat2Fn> = Vec::with_capacity(n);
    if n >= 1 {
        r.push(first_order(d)?);
    }
    for m in 1..n {
        let next = next_order(d, &r[m - 1], m)?;
        r.push(next);
    }
    Ok(ExpansionTable {
        order: n,
        r,
        half_plane: HalfPlane::plus(0.0),
        lambda_min: neumann::contraction_threshold(d),
    })
}

/// `Y_asym(x, λ) = M(x) (I + Σ R^m(x) λ^{-m}) E(x, λ)`, with the exponents of
/// `E` kept in the column channels. `d` is derived from the original system.
pub fn eval_y_asym(
    table: &ExpansionTable,
    d: &DerivedQuantities,
    x: f64,
    lambda: C64,
) -> Result<ScaledMatrix, ExpansionError> {
    let modulus = lambda.norm();
    if modulus < table.lambda_min {
        return Err(ExpansionError::BelowThreshold {
            modulus,
            lambda_min: table.lambda_min,
        });
    }
    let row = d.grid().interpolation_row(x)?;
    let z = table.partial_sum_row(&row, lambda);
    let m = Mat2::diag(row.apply(d.b11_int.values()).exp(), row.apply(d.b22_int.values()).exp());
    let exps = [
        lambda * row.apply(d.a1_int.values()),
        lambda * row.apply(d.a2_int.values()),
    ];
    Ok(ScaledMatrix::new(m * z, exps))
}

/// Max over nodes of the residual `Z' − λ(AZ − ZA) − QZ` of the truncated
/// series `Z = I + Σ R^m λ^{-m}`.
pub fn residual(table: &ExpansionTable, d: &DerivedQuantities, lambda: C64) -> Result<f64, ExpansionError> {
    let inv = lambda.inv();
    let grid = d.grid();
    let mut z = [
        GridFunction::constant(grid, 1.0),
        GridFunction::zero(grid),
        GridFunction::zero(grid),
        GridFunction::constant(grid, 1.0),
    ];
    let mut pow = C64::new(1.0, 0.0);
    for rm in &table.r {
        pow *= inv;
        for (k, (_, f)) in rm.entries().iter().enumerate() {
            z[k] = &z[k] + &(*f * pow);
        }
    }
    let dz = z
        .iter()
        .enumerate()
        .map(|(k, f)| differentiate(f, table.order, ["r11", "r12", "r21", "r22"][k]))
        .collect::<Result<Vec<_>, _>>()?;
    let mut worst: f64 = 0.0;
    for j in 0..grid.len() {
        let (a, q12, q21) = (d.a.values()[j], d.q12.values()[j], d.q21.values()[j]);
        let zj = z.each_ref().map(|f| f.values()[j]);
        let res = [
            dz[0].values()[j] - q12 * zj[2],
            dz[1].values()[j] - lambda * a * zj[1] - q12 * zj[3],
            dz[2].values()[j] + lambda * a * zj[2] - q21 * zj[0],
            dz[3].values()[j] - q21 * zj[1],
        ];
        worst = res.iter().map(|v| v.norm()).fold(worst, f64::max);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{ChebGrid, ANALYTIC};
    use std::sync::Arc;

    fn system(grid: &Arc<ChebGrid>, b12: f64, b21: f64, n: usize) -> SystemCoefficients {
        let k = |c: f64| GridFunction::constant(grid, c);
        SystemCoefficients::new(k(1.0), k(-1.0), k(0.0), k(b12), k(b21), k(0.0), n, 0.5)
    }

    fn variable(grid: &Arc<ChebGrid>, n: usize) -> SystemCoefficients {
        let f = |g: fn(f64) -> f64| GridFunction::from_real_fn(grid, ANALYTIC, g);
        SystemCoefficients::new(
            f(|x| 1.0 + x * x / 4.0),
            f(|x| -1.0 - x / 2.0),
            f(|x| 0.3 * x),
            f(f64::sin),
            f(f64::cos),
            f(|_| 0.0),
            n,
            0.5,
        )
    }

    fn close_to(f: &GridFunction, g: impl Fn(f64) -> f64) -> f64 {
        f.nodes()
            .iter()
            .zip(f.values())
            .map(|(&x, v)| (v - g(x)).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_coupling_gives_zero_table() {
        let g = ChebGrid::new(32).unwrap();
        let t = build_table(&system(&g, 0.0, 0.0, 2), HalfPlane::plus(0.0)).unwrap();
        assert_eq!(t.r.len(), 2);
        assert!(t.r.iter().all(|r| r.max_abs() == 0.0));
        assert_eq!(t.lambda_min, 0.0);
    }

    #[test]
    fn dirac_first_two_orders() {
        let g = ChebGrid::new(64).unwrap();
        let t = build_table(&system(&g, 1.0, 1.0, 2), HalfPlane::plus(0.0)).unwrap();
        let (r1, r2) = (&t.r[0], &t.r[1]);
        assert!(close_to(&r1.r21, |_| 0.5) < 1e-13);
        assert!(close_to(&r1.r12, |_| -0.5) < 1e-13);
        assert!(close_to(&r1.r11, |x| -(1.0 - x) / 2.0) < 1e-13);
        assert!(close_to(&r1.r22, |x| -x / 2.0) < 1e-13);
        assert!(close_to(&r2.r21, |x| -(1.0 - x) / 4.0) < 1e-12);
        assert!(close_to(&r2.r12, |x| x / 4.0) < 1e-12);
    }

    #[test]
    fn one_sided_coupling() {
        let g = ChebGrid::new(32).unwrap();
        let d = DerivedQuantities::new(&system(&g, 0.0, 1.0, 1)).unwrap();
        let r1 = first_order(&d).unwrap();
        assert_eq!(r1.r12.max_abs(), 0.0);
        assert_eq!(r1.r11.max_abs(), 0.0);
        assert_eq!(r1.r22.max_abs(), 0.0);
        assert!(close_to(&r1.r21, |_| 0.5) < 1e-14);
    }

    #[test]
    fn budget_error_names_order() {
        let g = ChebGrid::new(32).unwrap();
        let mut c = system(&g, 1.0, 1.0, 3);
        c.b12 = c.b12.clone().with_smoothness(1);
        let err = build_table(&c, HalfPlane::plus(0.0)).unwrap_err();
        assert_eq!(err, ExpansionError::Smoothness { order: 2, entry: "r12" });
    }

    #[test]
    fn endpoint_normalization() {
        let g = ChebGrid::new(64).unwrap();
        let t = build_table(&variable(&g, 3), HalfPlane::plus(0.0)).unwrap();
        for rm in &t.r {
            assert_eq!(rm.r11.values()[g.len() - 1], C64::new(0.0, 0.0));
            assert_eq!(rm.r22.values()[0], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn order_consistency() {
        let g = ChebGrid::new(256).unwrap();
        let c = variable(&g, 3);
        let d = DerivedQuantities::new(&c).unwrap();
        let t = build_oriented(&d, 3).unwrap();
        for m in 0..2 {
            let (rm, rn) = (&t.r[m], &t.r[m + 1]);
            let lhs = &d.a * &rn.r21;
            let rhs = &(&d.q21 * &rm.r11) - &rm.r21.derivative().unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-6);
            let lhs = &d.a * &rn.r12;
            let rhs = &rm.r12.derivative().unwrap() - &(&d.q12 * &rm.r22);
            assert!(lhs.max_abs_diff(&rhs) < 1e-6);
        }
    }

    #[test]
    fn residual_decays_like_lambda_power() {
        let g = ChebGrid::new(64).unwrap();
        for n in 1..=3 {
            let c = variable(&g, n);
            let d = DerivedQuantities::new(&c).unwrap();
            let t = build_oriented(&d, n).unwrap();
            let scaled: Vec<f64> = [50.0, 200.0, 1000.0]
                .iter()
                .map(|&l| residual(&t, &d, C64::new(l, 0.0)).unwrap() * l.powi(n as i32))
                .collect();
            assert!(scaled[2] <= 2.0 * scaled[0], "n={n}: {scaled:?}");
            assert!(scaled[0] > 1e-6);
        }
    }

    #[test]
    fn y_asym_examples() {
        let g = ChebGrid::new(32).unwrap();
        let c = system(&g, 1.0, 1.0, 1);
        let d = DerivedQuantities::new(&c).unwrap();
        let t = build_table(&c, HalfPlane::plus(0.0)).unwrap();
        let y = eval_y_asym(&t, &d, 1.0, C64::new(100.0, 0.0)).unwrap();
        assert!((y.mantissa[(1, 0)] - 0.005).norm() < 1e-14);
        assert!((y.col_exponents[0] - 100.0).norm() < 1e-12);

        let y0 = eval_y_asym(&t, &d, 0.0, C64::new(30.0, 7.0)).unwrap();
        assert_eq!(y0.col_exponents, [C64::new(0.0, 0.0); 2]);
        let want = t.partial_sum(0.0, C64::new(30.0, 7.0)).unwrap();
        assert!((y0.mantissa - want).max_abs() < 1e-15);

        let err = eval_y_asym(&t, &d, 0.5, C64::new(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, ExpansionError::BelowThreshold { .. }));
    }

    #[test]
    fn zero_coupling_is_m_times_e() {
        let g = ChebGrid::new(32).unwrap();
        let mut c = system(&g, 0.0, 0.0, 2);
        c.b11 = GridFunction::constant(&g, 0.5);
        let d = DerivedQuantities::new(&c).unwrap();
        let t = build_table(&c, HalfPlane::plus(0.0)).unwrap();
        let lam = C64::new(50.0, 3.0);
        let y = eval_y_asym(&t, &d, 0.7, lam).unwrap();
        let me = d.matrix_e(0.7, lam).unwrap().left_mul(&d.matrix_m(0.7).unwrap());
        assert!(y.rel_distance(&me) < 1e-15);
    }

    #[test]
    fn minus_side_table_maps_back() {
        let g = ChebGrid::new(64).unwrap();
        let c = variable(&g, 2);
        let t = build_table(&c, HalfPlane::minus(0.0)).unwrap();
        let d = DerivedQuantities::new(&c).unwrap();
        // In the original frame the recurrence for Re λ < 0 integrates the
        // diagonal from the opposite endpoints.
        for rm in &t.r {
            assert!(rm.r11.values()[0].norm() < 1e-15);
            assert!(rm.r22.values()[g.len() - 1].norm() < 1e-15);
        }
        let scaled: Vec<f64> = [-100.0, -1000.0]
            .iter()
            .map(|&l: &f64| {
                let t = t.clone();
                residual(&t, &d, C64::new(l, 0.0)).unwrap() * l.abs().powi(2)
            })
            .collect();
        assert!(scaled[1] <= 2.0 * scaled[0], "{scaled:?}");
    }
}
