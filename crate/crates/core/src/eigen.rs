//! Zeros of the characteristic determinant inside a rectangle: winding
//! numbers by the argument principle, recursive subdivision, Newton polish.

use rayon::prelude::*;
use thiserror::Error;

use crate::funcspace::C64;
use crate::oracle::{self, OracleError};
use crate::problem::DerivedQuantities;
use crate::scaled::Scaled;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("rectangle has zero or negative area")]
    EmptyRectangle,
    #[error("winding number on {rect} is unstable under contour refinement ({coarse} vs {fine})")]
    ContourResolution { rect: Rect, coarse: i64, fine: i64 },
    #[error("determinant vanishes on the contour near {0}")]
    ZeroOnContour(C64),
    #[error("subdivision did not isolate the zeros in {0}")]
    Unresolved(Rect),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// `[re0, re1] × [im0, im1]`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl std::fmt::Display for Rect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]x[{}, {}]i", self.re.0, self.re.1, self.im.0, self.im.1)
    }
}

impl Rect {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Result<Self, EigenError> {
        let ok = [re0, re1, im0, im1].iter().all(|v| v.is_finite()) && re1 > re0 && im1 > im0;
        if !ok {
            return Err(EigenError::EmptyRectangle);
        }
        Ok(Self { re: (re0, re1), im: (im0, im1) })
    }

    pub fn contains(&self, z: C64) -> bool {
        (self.re.0..=self.re.1).contains(&z.re) && (self.im.0..=self.im.1).contains(&z.im)
    }

    pub fn center(&self) -> C64 {
        C64::new(0.5 * (self.re.0 + self.re.1), 0.5 * (self.im.0 + self.im.1))
    }

    fn width(&self) -> f64 {
        self.re.1 - self.re.0
    }

    fn height(&self) -> f64 {
        self.im.1 - self.im.0
    }

    /// Counter-clockwise corners starting at the lower left.
    fn corners(&self) -> [C64; 4] {
        [
            C64::new(self.re.0, self.im.0),
            C64::new(self.re.1, self.im.0),
            C64::new(self.re.1, self.im.1),
            C64::new(self.re.0, self.im.1),
        ]
    }

    /// Split the longer side at fraction `t`.
    fn split(&self, t: f64) -> [Rect; 2] {
        if self.width() >= self.height() {
            let m = self.re.0 + t * self.width();
            [Rect { re: (self.re.0, m), ..*self }, Rect { re: (m, self.re.1), ..*self }]
        } else {
            let m = self.im.0 + t * self.height();
            [Rect { im: (self.im.0, m), ..*self }, Rect { im: (m, self.im.1), ..*self }]
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    pub tol: f64,
    /// Initial samples per unit length of contour.
    pub density: f64,
    pub max_depth: usize,
    pub newton_iters: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-12, density: 4.0, max_depth: 40, newton_iters: 60 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Root {
    pub lambda: C64,
    /// `|Δ(λ)|`
    pub residual: f64,
    pub cell: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenLocalization {
    pub rect: Rect,
    pub winding: i64,
    /// Leaf cells with their winding numbers.
    pub cells: Vec<(Rect, i64)>,
    pub roots: Vec<Root>,
}

const SPLIT: f64 = 0.5 + 0.0123;
const MAX_INCREMENT: f64 = std::f64::consts::FRAC_PI_3;

fn arg_increment(a: &Scaled, b: &Scaled) -> f64 {
    let raw = (b.mantissa / a.mantissa).arg() + (b.exponent.im - a.exponent.im);
    raw - std::f64::consts::TAU * (raw / std::f64::consts::TAU).round()
}

struct Contour<'f, F> {
    f: &'f F,
}

impl<F> Contour<'_, F>
where
    F: Fn(C64) -> Result<Scaled, EigenError> + Sync,
{
    fn eval(&self, z: C64) -> Result<Scaled, EigenError> {
        let v = (self.f)(z)?;
        if v.mantissa.norm() == 0.0 || !v.mantissa.norm().is_finite() {
            return Err(EigenError::ZeroOnContour(z));
        }
        Ok(v)
    }

    /// Total argument change along the segment `a → b`, bisecting any step
    /// whose increment exceeds `MAX_INCREMENT`.
    fn segment(&self, a: C64, b: C64, samples: usize) -> Result<f64, EigenError> {
        let pts: Vec<C64> = (0..=samples)
            .map(|k| a + (b - a) * (k as f64 / samples as f64))
            .collect();
        let vals = pts.par_iter().map(|&z| self.eval(z)).collect::<Result<Vec<_>, _>>()?;
        let mut total = 0.0;
        for k in 0..samples {
            total += self.step(pts[k], pts[k + 1], &vals[k], &vals[k + 1], 0)?;
        }
        Ok(total)
    }

    fn step(&self, za: C64, zb: C64, va: &Scaled, vb: &Scaled, depth: usize) -> Result<f64, EigenError> {
        let inc = arg_increment(va, vb);
        if inc.abs() <= MAX_INCREMENT {
            return Ok(inc);
        }
        if depth > 30 {
            return Err(EigenError::ZeroOnContour(0.5 * (za + zb)));
        }
        let zm = 0.5 * (za + zb);
        let vm = self.eval(zm)?;
        Ok(self.step(za, zm, va, &vm, depth + 1)? + self.step(zm, zb, &vm, vb, depth + 1)?)
    }

    fn winding_at(&self, r: &Rect, density: f64) -> Result<i64, EigenError> {
        let c = r.corners();
        let mut total = 0.0;
        for k in 0..4 {
            let (a, b) = (c[k], c[(k + 1) % 4]);
            let samples = ((b - a).norm() * density).ceil().max(4.0) as usize;
            total += self.segment(a, b, samples)?;
        }
        Ok((total / std::f64::consts::TAU).round() as i64)
    }

    /// Winding number, required to agree at two sample densities.
    fn winding(&self, r: &Rect, density: f64) -> Result<i64, EigenError> {
        let coarse = self.winding_at(r, density)?;
        let fine = self.winding_at(r, 2.0 * density)?;
        if coarse != fine {
            return Err(EigenError::ContourResolution { rect: *r, coarse, fine });
        }
        Ok(coarse)
    }
}

/// Newton step `Δ/Δ'` with a central difference, all values aligned to the
/// exponent of `Δ(z)`.
fn newton_step<F>(f: &F, z: C64) -> Result<C64, EigenError>
where
    F: Fn(C64) -> Result<Scaled, EigenError>,
{
    let h = 1e-6 * z.norm().max(1.0);
    let v = f(z)?;
    let align = |w: Scaled| w.mantissa * (w.exponent - v.exponent).exp();
    let p = align(f(z + h)?);
    let m = align(f(z - h)?);
    Ok(v.mantissa * (2.0 * h) / (p - m))
}

fn newton<F>(f: &F, start: C64, cell: &Rect, opts: &EigenOptions) -> Result<Option<Root>, EigenError>
where
    F: Fn(C64) -> Result<Scaled, EigenError>,
{
    let mut z = start;
    let scale = cell.width().max(cell.height());
    for _ in 0..opts.newton_iters {
        let step = newton_step(f, z)?;
        if !step.norm().is_finite() {
            return Ok(None);
        }
        z -= step;
        if !cell.contains(z) && (z - cell.center()).norm() > 2.0 * scale {
            return Ok(None);
        }
        if step.norm() <= 1e-13 * z.norm().max(1.0) {
            break;
        }
    }
    if !cell.contains(z) {
        return Ok(None);
    }
    let v = f(z)?;
    Ok(Some(Root { lambda: z, residual: v.abs(), cell: *cell }))
}

/// Localize and refine the zeros of `f` in `rect`.
pub fn localize_with<F>(f: &F, rect: Rect, opts: &EigenOptions) -> Result<EigenLocalization, EigenError>
where
    F: Fn(C64) -> Result<Scaled, EigenError> + Sync,
{
    if !(rect.width() > 0.0 && rect.height() > 0.0) {
        return Err(EigenError::EmptyRectangle);
    }
    let contour = Contour { f };
    let total = contour.winding(&rect, opts.density)?;
    let mut out = EigenLocalization { rect, winding: total, cells: Vec::new(), roots: Vec::new() };
    let mut stack = vec![(rect, total, 0usize)];
    while let Some((r, w, depth)) = stack.pop() {
        if w == 0 {
            out.cells.push((r, 0));
            continue;
        }
        if w == 1 {
            if let Some(root) = newton(f, r.center(), &r, opts)? {
                out.cells.push((r, 1));
                out.roots.push(root);
                continue;
            }
        }
        if depth >= opts.max_depth {
            return Err(EigenError::Unresolved(r));
        }
        let density = opts.density * (1u64 << depth.min(20)) as f64;
        let halves = r.split(SPLIT);
        let wa = contour.winding(&halves[0], density)?;
        let wb = contour.winding(&halves[1], density)?;
        if wa + wb != w || wa < 0 || wb < 0 {
            return Err(EigenError::ContourResolution { rect: r, coarse: w, fine: wa + wb });
        }
        stack.push((halves[0], wa, depth + 1));
        stack.push((halves[1], wb, depth + 1));
    }
    out.roots
        .sort_by(|a, b| a.lambda.im.total_cmp(&b.lambda.im).then(a.lambda.re.total_cmp(&b.lambda.re)));
    Ok(out)
}

/// Eigenvalues of `y1(0) = 0`, `y2(1) = 0` in `rect` from the oracle
/// characteristic determinant.
pub fn localize(d: &DerivedQuantities, rect: Rect, opts: &EigenOptions) -> Result<EigenLocalization, EigenError> {
    let tol = opts.tol;
    let f = |z: C64| oracle::characteristic_determinant(d, z, tol).map_err(EigenError::from);
    localize_with(&f, rect, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac_closed(z: C64) -> Result<Scaled, EigenError> {
        let mu = (z * z + 1.0).sqrt();
        Ok(Scaled::new(mu.cosh() - z * mu.sinh() / mu, C64::new(0.0, 0.0)))
    }

    #[test]
    fn empty_rectangle_is_an_error() {
        assert_eq!(Rect::new(0.0, 0.0, -1.0, 1.0), Err(EigenError::EmptyRectangle));
        let r = Rect { re: (1.0, 1.0), im: (0.0, 1.0) };
        assert!(matches!(
            localize_with(&dirac_closed, r, &EigenOptions::default()),
            Err(EigenError::EmptyRectangle)
        ));
    }

    #[test]
    fn polynomial_roots() {
        let roots = [C64::new(0.3, 0.2), C64::new(-0.4, 0.1), C64::new(0.31, 0.22)];
        let f = |z: C64| Ok(Scaled::new(roots.iter().map(|r| z - r).product(), C64::new(0.0, 0.0)));
        let loc = localize_with(&f, Rect::new(-1.0, 1.0, -1.0, 1.0).unwrap(), &EigenOptions::default()).unwrap();
        assert_eq!(loc.winding, 3);
        assert_eq!(loc.roots.len(), 3);
        for r in roots {
            assert!(loc.roots.iter().any(|x| (x.lambda - r).norm() < 1e-10));
        }
    }

    #[test]
    fn exponential_has_no_zeros() {
        let f = |z: C64| Ok(Scaled::new(C64::new(1.0, 0.0), -z));
        let loc = localize_with(&f, Rect::new(-1.0, 1.0, -40.0, 40.0).unwrap(), &EigenOptions::default()).unwrap();
        assert_eq!(loc.winding, 0);
        assert!(loc.roots.is_empty());
    }

    #[test]
    fn dirac_closed_form_roots() {
        let loc = localize_with(&dirac_closed, Rect::new(1.0, 3.0, -10.0, 10.0).unwrap(), &EigenOptions::default())
            .unwrap();
        assert_eq!(loc.winding, 6);
        assert_eq!(loc.roots.len(), 6);
        assert!(loc
            .roots
            .iter()
            .any(|r| (r.lambda - C64::new(1.7548150567, 2.6663322665)).norm() < 1e-8));
    }
}
