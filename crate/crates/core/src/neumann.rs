//! Volterra operators `V1`, `V2`, their truncated Neumann series, the
//! remainder integrals `v_ij` with `Υ(λ)`, `Υ̂(λ)`, and the de-oscillation of
//! the Neumann columns.
//!
//! All routines work on the oriented system (`Re λ > −κ`); the minus
//! half-plane is reached through [`SystemCoefficients::mirrored`].
//!
//! Kernels `e^{c(ρ(x) − ρ(t))}` are integrated panel by panel between
//! consecutive breakpoints with a 16-point Gauss–Legendre rule and
//! accumulated by the recursions
//!
//! ```text
//! tail: T_j = e^{c(ρ_j − ρ_{j+1})} T_{j+1} + ∫_{x_j}^{x_{j+1}} h e^{c(ρ_j − ρ)}
//! head: H_{j+1} = e^{c(ρ_{j+1} − ρ_j)} H_j + ∫_{x_j}^{x_{j+1}} h e^{c(ρ_{j+1} − ρ)}
//! ```
//!
//! which never form a growing exponential when `Re c ≥ 0` (tail) or
//! `Re c ≤ 0` (head).
//!
//! [`SystemCoefficients::mirrored`]: crate::problem::SystemCoefficients::mirrored

use std::sync::OnceLock;

use thiserror::Error;

use crate::expansion::ExpansionTable;
use crate::funcspace::{FuncSpaceError, GridFunction, C64};
use crate::problem::DerivedQuantities;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeumannError {
    #[error("smoothness budget exhausted: (q/a)' needs q12 and q21 with smoothness at least 1")]
    Smoothness,
    #[error("kernel grows like e^{growth:.1} on [0, 1]; outside the supported half-plane")]
    UnboundedKernel { growth: f64 },
    #[error("lambda = {lambda} too small: C_q^int * Upsilon = {product:.3e} is not below 1/2")]
    LambdaTooSmall { lambda: C64, product: f64 },
    #[error("endpoint system is ill-conditioned (pivot {pivot:.3e})")]
    Conditioning { pivot: f64 },
    #[error("column channel refers to lambda = {channel}, operator applied at {lambda}")]
    ChannelMismatch { channel: C64, lambda: C64 },
    #[error("operator index must be 1 or 2, got {0}")]
    BadIndex(usize),
    #[error(transparent)]
    Grid(#[from] FuncSpaceError),
}

const GL_POINTS: usize = 16;
const MAX_GROWTH: f64 = 50.0;

fn gauss_legendre() -> &'static ([f64; GL_POINTS], [f64; GL_POINTS]) {
    static RULE: OnceLock<([f64; GL_POINTS], [f64; GL_POINTS])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_POINTS;
        let mut x = [0.0; GL_POINTS];
        let mut w = [0.0; GL_POINTS];
        for i in 0..n {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            x[n - 1 - i] = z;
            w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
        (x, w)
    })
}

/// Panel geometry between sorted breakpoints (grid nodes plus extra points).
struct Panels {
    bp: Vec<f64>,
    rho_bp: Vec<f64>,
    gl_x: Vec<f64>,
    gl_w: Vec<f64>,
    rho_gl: Vec<f64>,
}

impl Panels {
    fn new(d: &DerivedQuantities, extra: &[f64]) -> Result<Self, FuncSpaceError> {
        let mut bp: Vec<f64> = d.grid().nodes().to_vec();
        for &p in extra {
            if !(0.0..=1.0).contains(&p) {
                return Err(FuncSpaceError::Domain(p));
            }
            bp.push(p);
        }
        bp.sort_by(f64::total_cmp);
        bp.dedup();
        let (gx, gw) = gauss_legendre();
        let mut gl_x = Vec::with_capacity((bp.len() - 1) * GL_POINTS);
        let mut gl_w = Vec::with_capacity(gl_x.capacity());
        for p in bp.windows(2) {
            let (mid, half) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
            for g in 0..GL_POINTS {
                gl_x.push(mid + half * gx[g]);
                gl_w.push(half * gw[g]);
            }
        }
        let mut panels = Self {
            bp,
            rho_bp: Vec::new(),
            gl_x,
            gl_w,
            rho_gl: Vec::new(),
        };
        let all: Vec<f64> = panels.bp.iter().chain(&panels.gl_x).copied().collect();
        let rho = sample(d, &all, &[&d.rho])?.remove(0);
        let nb = panels.bp.len();
        panels.rho_bp = rho[..nb].iter().map(|v| v.re).collect();
        panels.rho_gl = rho[nb..].iter().map(|v| v.re).collect();
        Ok(panels)
    }

    fn index_of(&self, x: f64) -> usize {
        self.bp
            .binary_search_by(|p| p.total_cmp(&x))
            .expect("query point is a breakpoint")
    }

    fn sample(&self, d: &DerivedQuantities, fs: &[&GridFunction]) -> Result<Vec<Vec<C64>>, FuncSpaceError> {
        sample(d, &self.gl_x, fs)
    }

    /// `∫_x^1 h(t) e^{c(ρ(x) − ρ(t))} dt` at every breakpoint.
    fn tail(&self, h: &[C64], c: C64) -> Vec<C64> {
        let np = self.bp.len() - 1;
        let mut out = vec![C64::new(0.0, 0.0); np + 1];
        for j in (0..np).rev() {
            let r0 = self.rho_bp[j];
            let mut acc = (c * (r0 - self.rho_bp[j + 1])).exp() * out[j + 1];
            for g in j * GL_POINTS..(j + 1) * GL_POINTS {
                acc += h[g] * self.gl_w[g] * (c * (r0 - self.rho_gl[g])).exp();
            }
            out[j] = acc;
        }
        out
    }

    /// `∫_0^x h(t) e^{c(ρ(x) − ρ(t))} dt` at every breakpoint.
    fn head(&self, h: &[C64], c: C64) -> Vec<C64> {
        let np = self.bp.len() - 1;
        let mut out = vec![C64::new(0.0, 0.0); np + 1];
        for j in 0..np {
            let r1 = self.rho_bp[j + 1];
            let mut acc = (c * (r1 - self.rho_bp[j])).exp() * out[j];
            for g in j * GL_POINTS..(j + 1) * GL_POINTS {
                acc += h[g] * self.gl_w[g] * (c * (r1 - self.rho_gl[g])).exp();
            }
            out[j + 1] = acc;
        }
        out
    }
}

/// Values of several grid functions at arbitrary points, sharing one
/// barycentric row per point.
fn sample(d: &DerivedQuantities, xs: &[f64], fs: &[&GridFunction]) -> Result<Vec<Vec<C64>>, FuncSpaceError> {
    let mut out = vec![Vec::with_capacity(xs.len()); fs.len()];
    for &x in xs {
        let row = d.grid().interpolation_row(x)?;
        for (o, f) in out.iter_mut().zip(fs) {
            o.push(row.apply(f.values()));
        }
    }
    Ok(out)
}

fn check_growth(c: C64, rho1: f64, tail: bool) -> Result<(), NeumannError> {
    let wrong = if tail { -c.re } else { c.re };
    let growth = wrong * rho1;
    if growth > MAX_GROWTH {
        Err(NeumannError::UnboundedKernel { growth })
    } else {
        Ok(())
    }
}

/// Oscillatory factor attached to a column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Channel {
    None,
    /// `e^{−λρ(x)}`
    Decaying(C64),
    /// `e^{λ(ρ(x) − ρ(1))}`
    Growing(C64),
}

impl Channel {
    fn lambda(&self) -> Option<C64> {
        match self {
            Channel::None => None,
            Channel::Decaying(l) | Channel::Growing(l) => Some(*l),
        }
    }

    /// `σλ` with the channel factor `e^{σλ(ρ(x) − anchor)}`.
    fn sigma_lambda(&self) -> C64 {
        match self {
            Channel::None => C64::new(0.0, 0.0),
            Channel::Decaying(l) => -l,
            Channel::Growing(l) => *l,
        }
    }

    /// Exponent of the factor at a point with phase `rho`.
    pub fn exponent(&self, rho: f64, rho1: f64) -> C64 {
        match self {
            Channel::None => C64::new(0.0, 0.0),
            Channel::Decaying(l) => -l * rho,
            Channel::Growing(l) => l * (rho - rho1),
        }
    }
}

/// A column `e^{channel} (f1, f2)ᵀ`.
#[derive(Debug, Clone)]
pub struct ColumnFunction {
    pub f1: GridFunction,
    pub f2: GridFunction,
    pub channel: Channel,
}

impl ColumnFunction {
    pub fn new(f1: GridFunction, f2: GridFunction) -> Self {
        assert!(f1.grid().same_as(f2.grid()), "column components on different grids");
        Self {
            f1,
            f2,
            channel: Channel::None,
        }
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.channel = channel;
        self
    }

    /// `z_k^0`: the `k`-th unit vector.
    pub fn unit(d: &DerivedQuantities, k: usize) -> Self {
        let g = d.grid();
        let (one, zero) = (GridFunction::constant(g, 1.0), GridFunction::zero(g));
        if k == 1 {
            Self::new(one, zero)
        } else {
            Self::new(zero, one)
        }
    }

    /// Full values at node `j`.
    pub fn at_node(&self, d: &DerivedQuantities, j: usize) -> [C64; 2] {
        let e = self
            .channel
            .exponent(d.rho.values()[j].re, d.rho_total())
            .exp();
        [self.f1.values()[j] * e, self.f2.values()[j] * e]
    }

    /// The same column with the channel multiplied into the samples.
    pub fn materialize(&self, d: &DerivedQuantities) -> Self {
        let rho1 = d.rho_total();
        let factor = d.rho.map(|r| self.channel.exponent(r.re, rho1).exp());
        Self::new(&self.f1 * &factor, &self.f2 * &factor)
    }

    /// `max_x max(|z_1|, |z_2|)` of the full values over the nodes.
    pub fn sup_norm(&self, d: &DerivedQuantities) -> f64 {
        (0..d.grid().len())
            .map(|j| {
                let v = self.at_node(d, j);
                v[0].norm().max(v[1].norm())
            })
            .fold(0.0, f64::max)
    }

    fn combine(&self, other: &Self, s: C64) -> Self {
        Self {
            f1: &self.f1 + &(&other.f1 * s),
            f2: &self.f2 + &(&other.f2 * s),
            channel: self.channel,
        }
    }
}

/// Precomputed node panels for repeated application of `V_k(λ)`.
pub struct Neumann {
    d: DerivedQuantities,
    panels: Panels,
}

impl Neumann {
    pub fn new(d: &DerivedQuantities) -> Result<Self, NeumannError> {
        Ok(Self {
            panels: Panels::new(d, &[])?,
            d: d.clone(),
        })
    }

    pub fn derived(&self) -> &DerivedQuantities {
        &self.d
    }

    /// `V_k(λ)` applied to `col`. The channel is carried through: `V1`
    /// accepts `None` and `Decaying`, `V2` accepts `None` and `Growing`;
    /// other combinations are evaluated only while the kernel growth stays
    /// moderate.
    pub fn apply_v(&self, k: usize, lambda: C64, col: &ColumnFunction) -> Result<ColumnFunction, NeumannError> {
        if let Some(l) = col.channel.lambda() {
            if l != lambda {
                return Err(NeumannError::ChannelMismatch { channel: l, lambda });
            }
        }
        let sl = col.channel.sigma_lambda();
        let (c_tail, c_head) = match k {
            1 => (-sl, -lambda - sl),
            2 => (lambda - sl, -sl),
            _ => return Err(NeumannError::BadIndex(k)),
        };
        let rho1 = self.d.rho_total();
        check_growth(c_tail, rho1, true)?;
        check_growth(c_head, rho1, false)?;
        let s = self
            .panels
            .sample(&self.d, &[&self.d.q12, &self.d.q21, &col.f1, &col.f2])?;
        let h_tail: Vec<C64> = s[0].iter().zip(&s[3]).map(|(q, f)| q * f).collect();
        let h_head: Vec<C64> = s[1].iter().zip(&s[2]).map(|(q, f)| q * f).collect();
        let out1: Vec<C64> = self.panels.tail(&h_tail, c_tail).iter().map(|v| -v).collect();
        let out2 = self.panels.head(&h_head, c_head);
        let g = self.d.grid();
        let budget = self.d.q12.smoothness().min(self.d.q21.smoothness()).saturating_add(1);
        Ok(ColumnFunction {
            f1: GridFunction::from_values(g, out1, budget)?,
            f2: GridFunction::from_values(g, out2, budget)?,
            channel: col.channel,
        })
    }

    /// `Σ_{ν=0}^{N} V_k^ν z_k^0` with `N = max(2n, 1)`.
    pub fn solve(&self, k: usize, lambda: C64, n: usize) -> Result<NeumannSolution, NeumannError> {
        let kappa = (-lambda.re).max(0.0);
        let est = estimate_remainders(&self.d, lambda, kappa, DEFAULT_DENSITY)?;
        let product = est.c_q_int * est.upsilon;
        if product >= 0.5 {
            return Err(NeumannError::LambdaTooSmall { lambda, product });
        }
        let terms = (2 * n).max(1);
        let mut term = ColumnFunction::unit(&self.d, k);
        let mut sum = term.clone();
        for _ in 0..terms {
            term = self.apply_v(k, lambda, &term)?;
            sum = sum.combine(&term, C64::new(1.0, 0.0));
        }
        let c_v = est.c_v();
        Ok(NeumannSolution {
            column: sum,
            last_term: term,
            terms: terms + 1,
            upsilon: est.upsilon,
            c_v,
            tail_bound: c_v * est.upsilon.powi(n as i32 + 1),
        })
    }
}

#[derive(Debug, Clone)]
pub struct NeumannSolution {
    pub column: ColumnFunction,
    /// `V_k^N z_k^0`, the last term kept.
    pub last_term: ColumnFunction,
    /// Number of terms summed (`N + 1`).
    pub terms: usize,
    pub upsilon: f64,
    pub c_v: f64,
    /// `C_V Υ(λ)^{n+1}`
    pub tail_bound: f64,
}

pub fn apply_v(d: &DerivedQuantities, k: usize, lambda: C64, col: &ColumnFunction) -> Result<ColumnFunction, NeumannError> {
    Neumann::new(d)?.apply_v(k, lambda, col)
}

pub fn neumann_solve(d: &DerivedQuantities, k: usize, lambda: C64, n: usize) -> Result<NeumannSolution, NeumannError> {
    Neumann::new(d)?.solve(k, lambda, n)
}

/// `K(u) = −∫_u^1 q12 e^{−λ(ρ(t)−ρ(u))}` and `L(w) = −∫_0^w q21 e^{−λ(ρ(w)−ρ(t))}`
/// at the given points, with `q12`, `q21` replaced by `f12`, `f21`.
struct BaseIntegrals {
    rho: Vec<f64>,
    k: Vec<C64>,
    l: Vec<C64>,
}

fn base_integrals(
    d: &DerivedQuantities,
    f12: &GridFunction,
    f21: &GridFunction,
    lambda: C64,
    pts: &[f64],
) -> Result<BaseIntegrals, NeumannError> {
    let rho1 = d.rho_total();
    check_growth(lambda, rho1, true)?;
    let panels = Panels::new(d, pts)?;
    let s = panels.sample(d, &[f12, f21])?;
    let tail = panels.tail(&s[0], lambda);
    let head = panels.head(&s[1], -lambda);
    let idx: Vec<usize> = pts.iter().map(|&p| panels.index_of(p)).collect();
    Ok(BaseIntegrals {
        rho: idx.iter().map(|&i| panels.rho_bp[i]).collect(),
        k: idx.iter().map(|&i| -tail[i]).collect(),
        l: idx.iter().map(|&i| -head[i]).collect(),
    })
}

impl BaseIntegrals {
    /// `v_ij(s, x)` for points given by index into the base set.
    fn v(&self, i: usize, j: usize, s: usize, x: usize, lambda: C64) -> C64 {
        let r = &self.rho;
        match (i, j) {
            (1, 1) => {
                let u = s.max(x);
                (-lambda * (r[u] - r[s])).exp() * self.k[u]
            }
            (1, 2) => {
                let u = s.max(x);
                (lambda * (r[x] - r[u])).exp() * self.k[u]
            }
            (2, 1) => {
                let w = s.min(x);
                (-lambda * (r[x] - r[w])).exp() * self.l[w]
            }
            _ => {
                let w = s.min(x);
                (lambda * (r[w] - r[s])).exp() * self.l[w]
            }
        }
    }
}

fn check_ij(i: usize, j: usize) -> Result<(), NeumannError> {
    if !(1..=2).contains(&i) {
        return Err(NeumannError::BadIndex(i));
    }
    if !(1..=2).contains(&j) {
        return Err(NeumannError::BadIndex(j));
    }
    Ok(())
}

/// The remainder integral `v_ij(s, x, λ)`.
pub fn v_integral(d: &DerivedQuantities, i: usize, j: usize, s: f64, x: f64, lambda: C64) -> Result<C64, NeumannError> {
    check_ij(i, j)?;
    let mut pts = vec![s, x];
    pts.sort_by(f64::total_cmp);
    let base = base_integrals(d, &d.q12, &d.q21, lambda, &pts)?;
    let (si, xi) = if s <= x { (0, 1) } else { (1, 0) };
    Ok(base.v(i, j, si, xi, lambda))
}

fn h_functions(d: &DerivedQuantities) -> Result<(GridFunction, GridFunction), NeumannError> {
    let h = |q: &GridFunction| (q / &d.a).derivative().map_err(|_| NeumannError::Smoothness);
    Ok((h(&d.q12)?, h(&d.q21)?))
}

/// `v_ij = boundary + λ^{-1} v̂_ij`, returned as `(boundary, v̂_ij)`; the
/// boundary term already includes its `λ^{-1}`.
pub fn v_integral_ibp(
    d: &DerivedQuantities,
    i: usize,
    j: usize,
    s: f64,
    x: f64,
    lambda: C64,
) -> Result<(C64, C64), NeumannError> {
    check_ij(i, j)?;
    let (h12, h21) = h_functions(d)?;
    let mut pts = vec![s, x];
    pts.sort_by(f64::total_cmp);
    let base = base_integrals(d, &h12, &h21, lambda, &pts)?;
    let (si, xi) = if s <= x { (0, 1) } else { (1, 0) };
    let sign = if i == 1 { 1.0 } else { -1.0 };
    let hat = base.v(i, j, si, xi, lambda) * sign;

    let g12 = &d.q12 / &d.a;
    let g21 = &d.q21 / &d.a;
    let rho = |p: f64| d.rho_at(p);
    let inv = lambda.inv();
    let (rs, rx, r1) = (rho(s)?, rho(x)?, d.rho_total());
    let boundary = match (i, j) {
        (1, _) => {
            let u = s.max(x);
            let ru = rho(u)?;
            let phase = |rt: f64| if j == 1 { -lambda * (rt - rs) } else { lambda * (rx - rt) };
            inv * (g12.evaluate(1.0)? * phase(r1).exp() - g12.evaluate(u)? * phase(ru).exp())
        }
        _ => {
            let w = s.min(x);
            let rw = rho(w)?;
            let phase = |rt: f64| if j == 1 { -lambda * (rx - rt) } else { lambda * (rt - rs) };
            -inv * (g21.evaluate(w)? * phase(rw).exp() - g21.evaluate(0.0)? * phase(0.0).exp())
        }
    };
    Ok((boundary, hat))
}

/// Default side of the uniform `(s, x)` scan for `Υ`.
pub const DEFAULT_DENSITY: usize = 33;

#[derive(Debug, Clone, PartialEq)]
pub struct RemainderEstimates {
    pub upsilon: f64,
    pub upsilon_hat: Option<f64>,
    pub c_q_int: f64,
    pub c_q: f64,
    pub kappa: f64,
    pub lambda: C64,
    pub rho1: f64,
}

impl RemainderEstimates {
    /// `C_V = 2(1 + e^{2κρ(1)} C_q^int)`
    pub fn c_v(&self) -> f64 {
        2.0 * (1.0 + (2.0 * self.kappa * self.rho1).exp() * self.c_q_int)
    }

    /// `e^{2κρ(1)} C_q^int`, the bound on `‖V_k‖`.
    pub fn v_bound(&self) -> f64 {
        (2.0 * self.kappa * self.rho1).exp() * self.c_q_int
    }

    pub fn contracting(&self) -> bool {
        self.c_q_int * self.upsilon < 0.5
    }
}

/// `C_q^int = ∫_0^1 |q12| + |q21|`
pub fn c_q_int(d: &DerivedQuantities) -> f64 {
    (&d.q12.abs() + &d.q21.abs()).definite_integral().re
}

/// `C_q = 4 e^{2κρ(1)} (max|q12/a| + max|q21/a|)`
pub fn c_q(d: &DerivedQuantities, kappa: f64) -> f64 {
    let m = (&d.q12 / &d.a).max_abs() + (&d.q21 / &d.a).max_abs();
    4.0 * (2.0 * kappa * d.rho_total()).exp() * m
}

fn scan_max(base: &BaseIntegrals, lambda: C64) -> f64 {
    let n = base.rho.len();
    let mut worst: f64 = 0.0;
    for s in 0..n {
        for x in 0..n {
            for (i, j) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
                worst = worst.max(base.v(i, j, s, x, lambda).norm());
            }
        }
    }
    worst
}

/// `Υ(λ)` and `Υ̂(λ)` maximized over a uniform `density × density` grid in
/// `(s, x)`, together with `C_q` and `C_q^int`.
pub fn estimate_remainders(
    d: &DerivedQuantities,
    lambda: C64,
    kappa: f64,
    density: usize,
) -> Result<RemainderEstimates, NeumannError> {
    let density = density.max(2);
    let pts: Vec<f64> = (0..density).map(|i| i as f64 / (density - 1) as f64).collect();
    let base = base_integrals(d, &d.q12, &d.q21, lambda, &pts)?;
    let upsilon = scan_max(&base, lambda);
    let upsilon_hat = match h_functions(d) {
        Ok((h12, h21)) => Some(scan_max(&base_integrals(d, &h12, &h21, lambda, &pts)?, lambda)),
        Err(_) => None,
    };
    Ok(RemainderEstimates {
        upsilon,
        upsilon_hat,
        c_q_int: c_q_int(d),
        c_q: c_q(d, kappa),
        kappa,
        lambda,
        rho1: d.rho_total(),
    })
}

/// Smallest `λ = 2^j` on the positive axis with `C_q^int Υ(λ) < 1/2`; zero
/// when the coupling vanishes.
pub fn contraction_threshold(d: &DerivedQuantities) -> f64 {
    let cq = c_q_int(d);
    if cq == 0.0 {
        return 0.0;
    }
    let mut lambda = 1.0;
    while lambda < 1e12 {
        match estimate_remainders(d, C64::new(lambda, 0.0), 0.0, DEFAULT_DENSITY) {
            Ok(e) if cq * e.upsilon < 0.5 => return lambda,
            _ => lambda *= 2.0,
        }
    }
    lambda
}

/// Empirical lower bound on `‖V_k(λ)‖` (or `‖V_k(λ)²‖`) in `L∞ × L∞` from a
/// fixed family of probe columns.
pub fn operator_norm_probe(d: &DerivedQuantities, k: usize, lambda: C64, squared: bool) -> Result<f64, NeumannError> {
    let op = Neumann::new(d)?;
    let g = d.grid();
    let one = GridFunction::constant(g, 1.0);
    let zero = GridFunction::zero(g);
    let phase = |q: &GridFunction| q.map(|v| if v.norm() > 0.0 { v.conj() / v.norm() } else { C64::new(0.0, 0.0) });
    let (p21, p12) = (phase(&d.q21), phase(&d.q12));
    let mut probes = vec![
        (one.clone(), zero.clone()),
        (zero.clone(), one.clone()),
        (one.clone(), one.clone()),
        (one.clone(), -&one),
        (p21.clone(), p12.clone()),
        (p21.clone(), -&p12),
    ];
    for omega in [lambda.im, 2.0 * std::f64::consts::PI, 8.0 * std::f64::consts::PI] {
        let w = d.rho.map(|r| C64::new(0.0, omega * r.re).exp());
        let wc = w.map(|v| v.conj());
        probes.push((&p21 * &w, &p12 * &wc));
        probes.push((&p21 * &wc, &p12 * &w));
    }
    let mut best: f64 = 0.0;
    for (f1, f2) in probes {
        let col = ColumnFunction::new(f1, f2);
        let norm = col.sup_norm(d);
        if norm == 0.0 {
            continue;
        }
        let mut out = op.apply_v(k, lambda, &col)?;
        if squared {
            out = op.apply_v(k, lambda, &out)?;
        }
        best = best.max(out.sup_norm(d) / norm);
    }
    Ok(best)
}

/// Neumann columns recombined into the normalization of the formal
/// expansion.
#[derive(Debug, Clone)]
pub struct Deoscillated {
    pub zhat1: ColumnFunction,
    pub zhat2: ColumnFunction,
    pub c1: C64,
    pub c2: C64,
}

const MIN_PIVOT: f64 = 1e-8;

/// `ẑ1 = z1 − Ĉ1 e^{−λρ} z2`, `ẑ2 = z2 − Ĉ2 e^{λ(ρ−ρ(1))} z1`, with `Ĉ1`,
/// `Ĉ2` chosen so that `ẑ1_2(0)` and `ẑ2_1(1)` equal the formal partial
/// sums there. The columns are taken in the oriented frame.
pub fn deoscillate(
    d: &DerivedQuantities,
    table: &ExpansionTable,
    z1: &ColumnFunction,
    z2: &ColumnFunction,
    lambda: C64,
) -> Result<Deoscillated, NeumannError> {
    let last = d.grid().len() - 1;
    let f0 = table.partial_sum(0.0, lambda)?;
    let f1 = table.partial_sum(1.0, lambda)?;
    let (z1_0, z2_0) = (z1.at_node(d, 0), z2.at_node(d, 0));
    let (z1_1, z2_1) = (z1.at_node(d, last), z2.at_node(d, last));
    let (p1, p2) = (z2_0[1], z1_1[0]);
    for p in [p1, p2] {
        if p.norm() < MIN_PIVOT {
            return Err(NeumannError::Conditioning { pivot: p.norm() });
        }
    }
    let c1 = (z1_0[1] - f0[(1, 0)]) / p1;
    let c2 = (z2_1[0] - f1[(0, 1)]) / p2;
    let zhat1 = recombine(d, z1, z2, c1, |r, _| -lambda * r);
    let zhat2 = recombine(d, z2, z1, c2, |r, r1| lambda * (r - r1));
    Ok(Deoscillated { zhat1, zhat2, c1, c2 })
}

fn recombine(
    d: &DerivedQuantities,
    base: &ColumnFunction,
    other: &ColumnFunction,
    c: C64,
    exponent: impl Fn(f64, f64) -> C64,
) -> ColumnFunction {
    let rho1 = d.rho_total();
    let n = d.grid().len();
    let mut v1 = Vec::with_capacity(n);
    let mut v2 = Vec::with_capacity(n);
    for j in 0..n {
        let b = base.at_node(d, j);
        let o = other.at_node(d, j);
        let e = c * exponent(d.rho.values()[j].re, rho1).exp();
        v1.push(b[0] - e * o[0]);
        v2.push(b[1] - e * o[1]);
    }
    let g = d.grid();
    let sm = base.f1.smoothness().min(base.f2.smoothness());
    ColumnFunction::new(
        GridFunction::from_values(g, v1, sm).expect("grid length"),
        GridFunction::from_values(g, v2, sm).expect("grid length"),
    )
}
