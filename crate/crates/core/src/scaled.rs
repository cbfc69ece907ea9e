//! 2×2 complex matrices and exponent-shifted values.
//!
//! Entries of `E(x, λ)` behave like `e^{λ A_j(x)}` and overflow `f64` long
//! before `|λ|` reaches the range of interest, so every quantity multiplied by
//! `E` keeps its exponent in a separate channel.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use crate::funcspace::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub fn zero() -> Self {
        Mat2([[C64::new(0.0, 0.0); 2]; 2])
    }

    pub fn identity() -> Self {
        Self::diag(C64::new(1.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn diag(d0: C64, d1: C64) -> Self {
        let z = C64::new(0.0, 0.0);
        Mat2([[d0, z], [z, d1]])
    }

    pub fn from_columns(c0: [C64; 2], c1: [C64; 2]) -> Self {
        Mat2([[c0[0], c1[0]], [c0[1], c1[1]]])
    }

    pub fn column(&self, j: usize) -> [C64; 2] {
        [self.0[0][j], self.0[1][j]]
    }

    pub fn det(&self) -> C64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|v| *v *= s);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Swap both rows and columns: `P X P` with `P` the exchange matrix.
    pub fn exchanged(&self) -> Self {
        let m = &self.0;
        Mat2([[m[1][1], m[1][0]], [m[0][1], m[0][0]]])
    }
}

impl Index<(usize, usize)> for Mat2 {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat2 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i][j]
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] += rhs.0[i][j];
            }
        }
        out
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, rhs: Mat2) -> Mat2 {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] -= rhs.0[i][j];
            }
        }
        out
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let mut out = Mat2::zero();
        for i in 0..2 {
            for j in 0..2 {
                out.0[i][j] = self.0[i][0] * rhs.0[0][j] + self.0[i][1] * rhs.0[1][j];
            }
        }
        out
    }
}

/// `mantissa · e^{exponent}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mantissa: C64,
    pub exponent: C64,
}

impl Scaled {
    pub fn new(mantissa: C64, exponent: C64) -> Self {
        Self { mantissa, exponent }
    }

    /// The plain value; overflows to infinity when the exponent is too large.
    pub fn value(&self) -> C64 {
        self.mantissa * self.exponent.exp()
    }

    pub fn ln_abs(&self) -> f64 {
        self.mantissa.norm().ln() + self.exponent.re
    }

    pub fn abs(&self) -> f64 {
        self.ln_abs().exp()
    }

    /// `|self − other| / |other|`, computed without leaving the exponent channel.
    pub fn rel_diff(&self, other: &Scaled) -> f64 {
        let aligned = self.mantissa * (self.exponent - other.exponent).exp();
        (aligned - other.mantissa).norm() / other.mantissa.norm()
    }
}

impl Mul for Scaled {
    type Output = Scaled;
    fn mul(self, rhs: Scaled) -> Scaled {
        Scaled::new(self.mantissa * rhs.mantissa, self.exponent + rhs.exponent)
    }
}

/// `mantissa · diag(e^{c_0}, e^{c_1})`: a matrix whose columns carry their own
/// exponents, the shape of anything of the form `X · E(x, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledMatrix {
    pub mantissa: Mat2,
    pub col_exponents: [C64; 2],
}

impl ScaledMatrix {
    pub fn new(mantissa: Mat2, col_exponents: [C64; 2]) -> Self {
        Self {
            mantissa,
            col_exponents,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Scaled {
        Scaled::new(self.mantissa[(i, j)], self.col_exponents[j])
    }

    /// Left-multiply by a plain matrix.
    pub fn left_mul(&self, m: &Mat2) -> Self {
        Self::new(*m * self.mantissa, self.col_exponents)
    }

    pub fn det(&self) -> Scaled {
        Scaled::new(
            self.mantissa.det(),
            self.col_exponents[0] + self.col_exponents[1],
        )
    }

    /// Largest column-relative deviation: for each column the entrywise
    /// difference after aligning exponents, divided by the column's largest
    /// entry in `other`.
    pub fn rel_distance(&self, other: &ScaledMatrix) -> f64 {
        (0..2)
            .map(|j| {
                let shift = (self.col_exponents[j] - other.col_exponents[j]).exp();
                let scale = (0..2)
                    .map(|i| other.mantissa[(i, j)].norm())
                    .fold(0.0, f64::max);
                (0..2)
                    .map(|i| (self.mantissa[(i, j)] * shift - other.mantissa[(i, j)]).norm())
                    .fold(0.0, f64::max)
                    / scale
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn mat2_algebra() {
        let a = Mat2([[c(1.0, 0.0), c(2.0, 1.0)], [c(0.0, -1.0), c(3.0, 0.0)]]);
        assert_eq!(a * Mat2::identity(), a);
        assert_eq!((a - a).max_abs(), 0.0);
        assert_eq!(a.det(), c(3.0, 0.0) - c(2.0, 1.0) * c(0.0, -1.0));
        let p = a.exchanged();
        assert_eq!(p[(0, 0)], a[(1, 1)]);
        assert_eq!(p[(0, 1)], a[(1, 0)]);
        assert_eq!(p.exchanged(), a);
    }

    #[test]
    fn scaled_values_survive_overflow() {
        let big = Scaled::new(c(0.5, 0.0), c(1000.0, 0.3));
        let v = big.value();
        assert!(!(v.re.is_finite() && v.im.is_finite()));
        assert!((big.ln_abs() - (1000.0 + 0.5f64.ln())).abs() < 1e-12);
        let same = Scaled::new(c(0.25, 0.0), c(1000.0 + 2f64.ln(), 0.3));
        assert!(same.rel_diff(&big) < 1e-12);
    }

    #[test]
    fn scaled_matrix_distance_aligns_columns() {
        let a = ScaledMatrix::new(Mat2::identity(), [c(700.0, 0.0), c(-700.0, 0.0)]);
        let b = ScaledMatrix::new(
            Mat2::identity().scale(c(std::f64::consts::E, 0.0)),
            [c(699.0, 0.0), c(-701.0, 0.0)],
        );
        assert!(a.rel_distance(&b) < 1e-15);
        let det = a.det();
        assert!((det.exponent - c(0.0, 0.0)).norm() < 1e-12);
    }
}
