//! Grid calculus on `[0, 1]`.
//!
//! Every scalar coefficient and every derived function of `x` is stored as a
//! [`GridFunction`]: complex samples at the nodes of a shared [`ChebGrid`]
//! (Chebyshev–Lobatto points) together with a smoothness hint that counts how
//! many derivatives of the sampled function may still be taken.
//!
//! Interpolation is barycentric and exact at the nodes. Differentiation,
//! indefinite integration and quadrature all go through the Chebyshev
//! coefficients of the interpolant, so a function that is a polynomial of
//! degree `< N` is handled exactly up to rounding.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Smoothness hint for functions given in closed form (analytic on `[0, 1]`).
pub const ANALYTIC: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuncSpaceError {
    #[error("abscissa {0} lies outside [0, 1]")]
    Domain(f64),
    #[error("smoothness budget exhausted: cannot differentiate a function with smoothness hint 0")]
    SmoothnessBudget,
    #[error("a Chebyshev grid needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("sample table: {0}")]
    Table(String),
}

/// Which endpoint an indefinite integral is anchored at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Base {
    /// `F(x) = ∫_0^x f`
    Zero,
    /// `F(x) = ∫_x^1 f`
    One,
}

/// Chebyshev–Lobatto nodes mapped to `[0, 1]`, in increasing order.
pub struct ChebGrid {
    nodes: Vec<f64>,
    bary: Vec<f64>,
    // (n + 1) rows of n entries: T_k evaluated at node j, row k = 0..=n.
    cheb: Vec<f64>,
    // Row-major differentiation matrix in x, rows summing to zero.
    diff: Vec<f64>,
    quad: Vec<f64>,
}

impl fmt::Debug for ChebGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChebGrid").field("size", &self.nodes.len()).finish()
    }
}

impl ChebGrid {
    pub fn new(size: usize) -> Result<Arc<Self>, FuncSpaceError> {
        if size < 2 {
            return Err(FuncSpaceError::TooFewNodes(size));
        }
        let m = size - 1;
        let half_angle = |j: usize| 0.5 * PI * j as f64 / m as f64;
        let mut nodes: Vec<f64> = (0..size)
            .map(|j| {
                if 2 * j <= m {
                    half_angle(j).sin().powi(2)
                } else {
                    1.0 - half_angle(m - j).sin().powi(2)
                }
            })
            .collect();
        nodes[0] = 0.0;
        nodes[m] = 1.0;

        let mut bary: Vec<f64> = (0..size)
            .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        bary[0] *= 0.5;
        bary[m] *= 0.5;

        // T_k(s_j) with s_j = -cos(pi j / m) equals cos(pi k (m - j) / m).
        let period = 2 * m;
        let mut cheb = vec![0.0; (size + 1) * size];
        for k in 0..=size {
            for j in 0..size {
                let r = (k * (m - j)) % period;
                cheb[k * size + j] = (PI * r as f64 / m as f64).cos();
            }
        }

        // x_i - x_j = sin(a_i + a_j) sin(a_i - a_j) with a_j = pi j / (2m)
        let mut diff = vec![0.0; size * size];
        for i in 0..size {
            let mut total = 0.0;
            for j in (0..size).filter(|&j| j != i) {
                let (p, q) = ((i + j) as f64, i as f64 - j as f64);
                let dx = (0.5 * PI * p / m as f64).sin() * (0.5 * PI * q / m as f64).sin();
                let v = bary[j] / bary[i] / dx;
                diff[i * size + j] = v;
                total += v;
            }
            diff[i * size + i] = -total;
        }

        let mut grid = ChebGrid {
            nodes,
            bary,
            cheb,
            diff,
            quad: Vec::new(),
        };
        grid.quad = grid.clenshaw_curtis_weights();
        Ok(Arc::new(grid))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature weights `w_j` with `∫_0^1 f ≈ Σ w_j f(x_j)`.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.quad
    }

    pub fn same_as(&self, other: &ChebGrid) -> bool {
        std::ptr::eq(self, other) || self.nodes == other.nodes
    }

    fn t(&self, k: usize, j: usize) -> f64 {
        self.cheb[k * self.nodes.len() + j]
    }

    fn clenshaw_curtis_weights(&self) -> Vec<f64> {
        let n = self.len();
        let mut w = vec![0.0; n];
        for j in 0..n {
            let mut unit = vec![C64::new(0.0, 0.0); n];
            unit[j] = C64::new(1.0, 0.0);
            let a = self.coefficients(&unit);
            w[j] = a
                .iter()
                .enumerate()
                .filter(|(k, _)| k % 2 == 0)
                .map(|(k, c)| c.re / (1.0 - (k * k) as f64))
                .sum();
        }
        w
    }

    /// Chebyshev coefficients (in `s = 2x - 1`) of the interpolant through `values`.
    pub fn coefficients(&self, values: &[C64]) -> Vec<C64> {
        let n = self.len();
        let m = n - 1;
        let scale = 2.0 / m as f64;
        let mut a = vec![C64::new(0.0, 0.0); n];
        for (k, ak) in a.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (j, v) in values.iter().enumerate() {
                let w = if j == 0 || j == m { 0.5 } else { 1.0 };
                acc += v * (w * self.t(k, j));
            }
            *ak = acc * scale;
        }
        a[0] *= 0.5;
        a[m] *= 0.5;
        a
    }

    /// Values at the nodes of `Σ_k a_k T_k`, for up to `len() + 1` coefficients.
    fn synthesize(&self, a: &[C64]) -> Vec<C64> {
        debug_assert!(a.len() <= self.len() + 1);
        (0..self.len())
            .map(|j| {
                a.iter()
                    .enumerate()
                    .map(|(k, c)| c * self.t(k, j))
                    .sum()
            })
            .collect()
    }

    /// Barycentric interpolation row at `x`: the weights `ℓ_j(x)` with
    /// `p(x) = Σ ℓ_j(x) f_j`. At a node the row is the unit vector.
    pub fn interpolation_row(&self, x: f64) -> Result<InterpRow, FuncSpaceError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(FuncSpaceError::Domain(x));
        }
        let mut row = Vec::with_capacity(self.len());
        let mut total = 0.0;
        for (j, (&xj, &wj)) in self.nodes.iter().zip(&self.bary).enumerate() {
            let d = x - xj;
            if d == 0.0 {
                return Ok(InterpRow::Node(j));
            }
            let c = wj / d;
            total += c;
            row.push(c);
        }
        row.iter_mut().for_each(|c| *c /= total);
        Ok(InterpRow::Weights(row))
    }
}

/// Barycentric weights for one evaluation point, reusable across functions
/// sampled on the same grid.
#[derive(Debug, Clone)]
pub enum InterpRow {
    Node(usize),
    Weights(Vec<f64>),
}

impl InterpRow {
    pub fn apply(&self, values: &[C64]) -> C64 {
        match self {
            InterpRow::Node(j) => values[*j],
            InterpRow::Weights(w) => w.iter().zip(values).map(|(c, v)| v * *c).sum(),
        }
    }
}

/// A complex-valued function on `[0, 1]` sampled at Chebyshev–Lobatto nodes.
#[derive(Clone)]
pub struct GridFunction {
    grid: Arc<ChebGrid>,
    values: Vec<C64>,
    smoothness: u32,
}

impl fmt::Debug for GridFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridFunction")
            .field("nodes", &self.values.len())
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl GridFunction {
    pub fn from_fn(grid: &Arc<ChebGrid>, smoothness: u32, f: impl Fn(f64) -> C64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self {
            grid: grid.clone(),
            values,
            smoothness,
        }
    }

    pub fn from_real_fn(grid: &Arc<ChebGrid>, smoothness: u32, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, smoothness, |x| C64::new(f(x), 0.0))
    }

    pub fn constant(grid: &Arc<ChebGrid>, c: impl Into<C64>) -> Self {
        let c = c.into();
        Self::from_fn(grid, ANALYTIC, |_| c)
    }

    pub fn zero(grid: &Arc<ChebGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn from_values(
        grid: &Arc<ChebGrid>,
        values: Vec<C64>,
        smoothness: u32,
    ) -> Result<Self, FuncSpaceError> {
        if values.len() != grid.len() {
            return Err(FuncSpaceError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            smoothness,
        })
    }

    pub fn grid(&self) -> &Arc<ChebGrid> {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    pub fn with_smoothness(mut self, smoothness: u32) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn evaluate(&self, x: f64) -> Result<C64, FuncSpaceError> {
        Ok(self.grid.interpolation_row(x)?.apply(&self.values))
    }

    pub fn derivative(&self) -> Result<Self, FuncSpaceError> {
        if self.smoothness == 0 {
            return Err(FuncSpaceError::SmoothnessBudget);
        }
        let n = self.grid.len();
        let values = self
            .grid
            .diff
            .chunks_exact(n)
            .zip(&self.values)
            .map(|(row, fi)| {
                row.iter()
                    .zip(&self.values)
                    .map(|(d, fj)| (fj - fi) * *d)
                    .sum()
            })
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
            smoothness: self.smoothness.saturating_sub(1),
        })
    }

    pub fn integrate_from(&self, base: Base) -> Self {
        let n = self.grid.len();
        let a = self.grid.coefficients(&self.values);
        let get = |k: usize| if k < n { a[k] } else { C64::new(0.0, 0.0) };
        let mut big = vec![C64::new(0.0, 0.0); n + 1];
        big[1] = get(0) - get(2) * 0.5;
        for (k, c) in big.iter_mut().enumerate().skip(2) {
            *c = (get(k - 1) - get(k + 1)) / (2.0 * k as f64);
        }
        // F(-1) = 0
        big[0] = -big
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| if k % 2 == 0 { *c } else { -*c })
            .sum::<C64>();
        let from_zero: Vec<C64> = self
            .grid
            .synthesize(&big)
            .into_iter()
            .map(|v| v * 0.5)
            .collect();
        let values = match base {
            Base::Zero => from_zero,
            Base::One => {
                let total = from_zero[n - 1];
                from_zero.iter().map(|v| total - v).collect()
            }
        };
        let mut values = values;
        match base {
            Base::Zero => values[0] = C64::new(0.0, 0.0),
            Base::One => values[n - 1] = C64::new(0.0, 0.0),
        }
        Self {
            grid: self.grid.clone(),
            values,
            smoothness: self.smoothness.saturating_add(1),
        }
    }

    pub fn definite_integral(&self) -> C64 {
        self.grid
            .quadrature_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| v * *w)
            .sum()
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            smoothness: self.smoothness,
        }
    }

    pub fn exp(&self) -> Self {
        self.map(|v| v.exp())
    }

    pub fn recip(&self) -> Self {
        self.map(|v| v.inv())
    }

    /// Pointwise modulus; the result carries no derivative budget.
    pub fn abs(&self) -> Self {
        let mut out = self.map(|v| C64::new(v.norm(), 0.0));
        out.smoothness = 0;
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Re-sample the interpolant on another grid.
    pub fn resample(&self, grid: &Arc<ChebGrid>) -> Self {
        let values = grid
            .nodes()
            .iter()
            .map(|&x| {
                self.evaluate(x)
                    .expect("grid nodes always lie in [0, 1]")
            })
            .collect();
        Self {
            grid: grid.clone(),
            values,
            smoothness: self.smoothness,
        }
    }

    fn zip_with(&self, other: &GridFunction, f: impl Fn(C64, C64) -> C64) -> Self {
        assert!(
            self.grid.same_as(&other.grid),
            "grid functions live on different grids"
        );
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            smoothness: self.smoothness.min(other.smoothness),
        }
    }
}

/// Resample an arbitrary `(x, value)` table onto `grid` by piecewise-linear
/// interpolation. The abscissae must be increasing and cover `[0, 1]`.
pub fn from_table(
    grid: &Arc<ChebGrid>,
    xs: &[f64],
    values: &[C64],
    smoothness: u32,
) -> Result<GridFunction, FuncSpaceError> {
    if xs.len() != values.len() {
        return Err(FuncSpaceError::LengthMismatch {
            expected: xs.len(),
            got: values.len(),
        });
    }
    if xs.len() < 2 {
        return Err(FuncSpaceError::Table("need at least two samples".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FuncSpaceError::Table("abscissae must be strictly increasing".into()));
    }
    if xs[0] != 0.0 || *xs.last().unwrap() != 1.0 {
        return Err(FuncSpaceError::Table("abscissae must start at 0 and end at 1".into()));
    }
    // A table sampled on Chebyshev–Lobatto nodes is taken as a grid function.
    if let Ok(own) = ChebGrid::new(xs.len()) {
        if own.nodes().iter().zip(xs).all(|(a, b)| (a - b).abs() <= 1e-14) {
            let f = GridFunction::from_values(&own, values.to_vec(), smoothness)?;
            return Ok(if own.same_as(grid) {
                GridFunction::from_values(grid, values.to_vec(), smoothness)?
            } else {
                f.resample(grid)
            });
        }
    }
    let mut out = Vec::with_capacity(grid.len());
    for &x in grid.nodes() {
        let i = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => {
                out.push(values[i]);
                continue;
            }
            Err(i) => i,
        };
        let (x0, x1) = (xs[i - 1], xs[i]);
        let t = (x - x0) / (x1 - x0);
        out.push(values[i - 1] * (1.0 - t) + values[i] * t);
    }
    GridFunction::from_values(grid, out, smoothness)
}

impl Add for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;
    fn sub(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a * b)
    }
}

impl Div for &GridFunction {
    type Output = GridFunction;
    fn div(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a / b)
    }
}

impl Mul<C64> for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: C64) -> GridFunction {
        self.map(|v| v * rhs)
    }
}

impl Mul<f64> for &GridFunction {
    type Output = GridFunction;
    fn mul(self, rhs: f64) -> GridFunction {
        self.map(|v| v * rhs)
    }
}

impl Neg for &GridFunction {
    type Output = GridFunction;
    fn neg(self) -> GridFunction {
        self.map(|v| -v)
    }
}
