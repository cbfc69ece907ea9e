//! Dormand–Prince 8(5,3) with complex state and step clipping onto
//! prescribed output abscissae.

use thiserror::Error;

use crate::funcspace::C64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at x = {x} (h = {h:.3e})")]
    StepUnderflow { x: f64, h: f64 },
    #[error("step limit reached at x = {x}")]
    MaxSteps { x: f64 },
    #[error("output abscissae must be monotone in the direction of integration")]
    BadOutputs,
    #[error("non-finite state at x = {x}")]
    NonFinite { x: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Options {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Largest accepted scaled error estimate (≤ 1).
    pub max_error: f64,
}

const C: [f64; 12] = [
    0.0,
    5.260_015_195_876_773E-2,
    7.890_022_793_815_16E-2,
    1.183_503_419_072_274E-1,
    2.816_496_580_927_726E-1,
    3.333_333_333_333_333E-1,
    0.25,
    3.076_923_076_923_077E-1,
    6.512_820_512_820_513E-1,
    0.6,
    8.571_428_571_428_571E-1,
    1.0,
];

const A: [[f64; 11]; 12] = [
    [0.0; 11],
    [5.260_015_195_876_773E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.972_505_698_453_79E-2, 5.917_517_095_361_37E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.958_758_547_680_685E-2, 0.0, 8.876_275_643_042_054E-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        2.413_651_341_592_667E-1,
        0.0,
        -8.845_494_793_282_861E-1,
        9.248_340_032_617_92E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.703_703_703_703_703_5E-2,
        0.0,
        0.0,
        1.708_286_087_294_738_6E-1,
        1.254_676_875_668_224_2E-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.7109375E-2,
        0.0,
        0.0,
        1.702_522_110_195_440_5E-1,
        6.021_653_898_045_596E-2,
        -1.7578125E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.709_200_011_850_479E-2,
        0.0,
        0.0,
        1.703_839_257_122_399_8E-1,
        1.072_620_304_463_732_8E-1,
        -1.531_943_774_862_440_2E-2,
        8.273_789_163_814_023E-3,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        6.241_109_587_160_757E-1,
        0.0,
        0.0,
        -3.360_892_629_446_941_4,
        -8.682_193_468_417_26E-1,
        2.759_209_969_944_671E1,
        2.015_406_755_047_789_4E1,
        -4.348_988_418_106_996E1,
        0.0,
        0.0,
        0.0,
    ],
    [
        4.776_625_364_382_643_4E-1,
        0.0,
        0.0,
        -2.488_114_619_971_667_7,
        -5.902_908_268_368_43E-1,
        2.123_005_144_818_119_3E1,
        1.527_923_363_288_242_3E1,
        -3.328_821_096_898_486E1,
        -2.033_120_170_850_862_7E-2,
        0.0,
        0.0,
    ],
    [
        -9.371_424_300_859_873E-1,
        0.0,
        0.0,
        5.186_372_428_844_064,
        1.091_437_348_996_729_5,
        -8.149_787_010_746_927,
        -1.852_006_565_999_696E1,
        2.273_948_709_935_050_5E1,
        2.493_605_552_679_652_3,
        -3.046_764_471_898_219_6,
        0.0,
    ],
    [
        2.273_310_147_516_538,
        0.0,
        0.0,
        -1.053_449_546_673_725E1,
        -2.000_872_058_224_862_5,
        -1.795_893_186_311_88E1,
        2.794_888_452_941_996E1,
        -2.858_998_277_135_023_5,
        -8.872_856_933_530_63,
        1.236_056_717_579_430_3E1,
        6.433_927_460_157_636E-1,
    ],
];

const B: [f64; 12] = [
    5.429_373_411_656_876_5E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_409,
    1.891_517_899_314_500_3,
    -5.801_203_960_010_585,
    3.111_643_669_578_199E-1,
    -1.521_609_496_625_161E-1,
    2.013_654_008_040_303_4E-1,
    4.471_061_572_777_259E-2,
];

const ER: [f64; 12] = [
    1.312_004_499_419_488E-2,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.225_156_446_376_204_4,
    -4.957_589_496_572_502E-1,
    1.664_377_182_454_986_4,
    -3.503_288_487_499_736_6E-1,
    3.341_791_187_130_175E-1,
    8.192_320_648_511_571E-2,
    -2.235_530_786_388_629_4E-2,
];

const BHH: [f64; 3] = [
    2.440_944_881_889_764E-1,
    7.338_466_882_816_118E-1,
    2.205_882_352_941_176_6E-2,
];

const SAFE: f64 = 0.9;

fn axpy<const N: usize>(y: &[C64; N], k: &[[C64; N]], coef: &[f64], h: f64) -> [C64; N] {
    let mut out = *y;
    for (kk, &c) in k.iter().zip(coef) {
        if c != 0.0 {
            for i in 0..N {
                out[i] += kk[i] * (c * h);
            }
        }
    }
    out
}

fn rms<const N: usize>(v: &[C64; N], sk: &[f64; N]) -> f64 {
    (v.iter().zip(sk).map(|(v, s)| (v.norm() / s).powi(2)).sum::<f64>() / N as f64).sqrt()
}

/// Integrate `y' = f(x, y)` from `(x0, y0)` and return the state at each
/// of `outputs`, which must be monotone in the direction of integration and
/// lie on the same side of `x0`.
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64, &[C64; N]) -> [C64; N],
    x0: f64,
    y0: [C64; N],
    outputs: &[f64],
    opts: &Options,
) -> Result<(Vec<[C64; N]>, Stats), OdeError> {
    let mut stats = Stats::default();
    let Some(&x_end) = outputs.last() else {
        return Ok((Vec::new(), stats));
    };
    let dir = if x_end >= x0 { 1.0 } else { -1.0 };
    if outputs.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0) || (outputs[0] - x0) * dir < 0.0 {
        return Err(OdeError::BadOutputs);
    }
    let span = (x_end - x0).abs();
    let mut out = Vec::with_capacity(outputs.len());
    let mut next = 0;
    while next < outputs.len() && outputs[next] == x0 {
        out.push(y0);
        next += 1;
    }
    if next == outputs.len() {
        return Ok((out, stats));
    }

    let mut x = x0;
    let mut y = y0;
    let mut k = [[C64::new(0.0, 0.0); N]; 12];
    k[0] = f(x, &y);
    stats.evaluations += 1;
    let sk_of = |a: &[C64; N], b: &[C64; N]| {
        let mut s = [0.0; N];
        for i in 0..N {
            s[i] = opts.atol + opts.rtol * a[i].norm().max(b[i].norm());
        }
        s
    };

    // Initial step: order-8 heuristic from the first two derivatives.
    let mut h = {
        let sk = sk_of(&y, &y);
        let (d0, d1) = (rms(&y, &sk), rms(&k[0], &sk));
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let y1 = axpy(&y, &k[..1], &[1.0], h0 * dir);
        let f1 = f(x + h0 * dir, &y1);
        stats.evaluations += 1;
        let mut diff = [C64::new(0.0, 0.0); N];
        for i in 0..N {
            diff[i] = f1[i] - k[0][i];
        }
        let d2 = rms(&diff, &sk) / h0;
        let m = d1.max(d2);
        let h1 = if m <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / m).powf(1.0 / 8.0) };
        (100.0 * h0).min(h1).min(span)
    };

    while next < outputs.len() {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(OdeError::MaxSteps { x });
        }
        let target = outputs[next];
        let remaining = (target - x).abs();
        let mut hs = h.min(remaining);
        let hits = hs >= remaining * (1.0 - 1e-12);
        if hits {
            hs = remaining;
        }
        if hs < 1e-14 * x.abs().max(1.0) && !hits {
            return Err(OdeError::StepUnderflow { x, h: hs });
        }
        let hd = hs * dir;

        for s in 1..12 {
            let ys = axpy(&y, &k[..s], &A[s][..s], hd);
            k[s] = f(x + C[s] * hd, &ys);
        }
        stats.evaluations += 11;
        let slope = axpy(&[C64::new(0.0, 0.0); N], &k, &B, 1.0);
        let mut y_new = y;
        for i in 0..N {
            y_new[i] += slope[i] * hd;
        }
        let sk = sk_of(&y, &y_new);
        let (mut err, mut err2) = (0.0, 0.0);
        for i in 0..N {
            let e3 = slope[i] - k[0][i] * BHH[0] - k[8][i] * BHH[1] - k[11][i] * BHH[2];
            err2 += (e3.norm() / sk[i]).powi(2);
            let e5: C64 = (0..12).map(|s| k[s][i] * ER[s]).sum();
            err += (e5.norm() / sk[i]).powi(2);
        }
        let mut deno = err + 0.01 * err2;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = hs * err * (1.0 / (deno * N as f64)).sqrt();
        if !err.is_finite() {
            return Err(OdeError::NonFinite { x });
        }
        let fac = (err.powf(1.0 / 8.0) / SAFE).clamp(1.0 / 6.0, 3.0);
        let h_new = hs / fac;

        if err <= 1.0 {
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(err);
            x = if hits { target } else { x + hd };
            y = y_new;
            if y.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
                return Err(OdeError::NonFinite { x });
            }
            k[0] = f(x, &y);
            stats.evaluations += 1;
            // Do not let a clipped step shrink the controller's step.
            h = if hits { h.max(h_new) } else { h_new };
            while next < outputs.len() && outputs[next] == x {
                out.push(y);
                next += 1;
            }
        } else {
            stats.rejected += 1;
            h = hs / (err.powf(1.0 / 8.0) / SAFE).min(3.0);
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_is_consistent() {
        for (s, row) in A.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            assert!((sum - C[s]).abs() < 1e-12, "row {s}");
        }
        assert!((B.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        assert!(ER.iter().sum::<f64>().abs() < 1e-13);
    }

    #[test]
    fn exponential_and_rotation() {
        let lam = C64::new(-3.0, 40.0);
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let (ys, stats) = integrate(
            |_, y: &[C64; 1]| [y[0] * lam],
            0.0,
            [C64::new(1.0, 0.0)],
            &xs,
            &Options::with_tol(1e-12),
        )
        .unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((y[0] - (lam * x).exp()).norm() < 1e-10);
        }
        assert!(stats.accepted > 10);
    }

    #[test]
    fn backward_integration() {
        let xs = [0.75, 0.5, 0.0];
        let (ys, _) = integrate(
            |x, _: &[C64; 1]| [C64::new(2.0 * x, 0.0)],
            1.0,
            [C64::new(1.0, 0.0)],
            &xs,
            &Options::with_tol(1e-12),
        )
        .unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((y[0].re - x * x).abs() < 1e-12);
        }
        assert!(integrate(
            |_, y: &[C64; 1]| *y,
            0.0,
            [C64::new(1.0, 0.0)],
            &[0.5, 0.2],
            &Options::with_tol(1e-8)
        )
        .is_err());
    }

    #[test]
    fn stiff_decay_stays_stable() {
        let (ys, _) = integrate(
            |_, y: &[C64; 2]| [y[1], y[1] * -2000.0 + y[0]],
            0.0,
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            &[1.0],
            &Options::with_tol(1e-10),
        )
        .unwrap();
        // y1' = y2 ≈ y1/2000 ⇒ y1(1) ≈ e^{1/2000}
        assert!((ys[0][0].re - (1.0f64 / 2000.0).exp()).abs() < 1e-6);
    }
}
