use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fundasym::eigen::{self, EigenOptions, Rect};
use fundasym::expansion::{build_oriented, build_table, ExpansionTable};
use fundasym::funcspace::{ANALYTIC, C64};
use fundasym::neumann::{estimate_remainders, operator_norm_probe, DEFAULT_DENSITY};
use fundasym::oracle::measure_remainder;
use fundasym::problem::{DerivedQuantities, SystemCoefficients};
use serde_json::{json, Value};

use crate::specfile::{LambdaRay, ProblemSpec, Side};

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Problem specification (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub grid: Option<usize>,
    /// `start,factor,count,arg`
    #[arg(long, value_name = "A,F,K,ARG")]
    pub lambda_ray: Option<String>,
    #[arg(long, value_enum)]
    pub half_plane: Option<Side>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Expansion order override.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// `re0,re1,im0,im1`
    #[arg(long, value_name = "RE0,RE1,IM0,IM1", allow_hyphen_values = true)]
    pub rect: Option<String>,
}

fn numbers(flag: &str, text: &str, count: usize) -> Result<Vec<f64>> {
    let v = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("--{flag}: expected {count} comma-separated numbers"))?;
    if v.len() != count {
        bail!("--{flag}: expected {count} comma-separated numbers, got {}", v.len());
    }
    Ok(v)
}

impl Common {
    fn load(&self) -> Result<ProblemSpec> {
        let mut spec = ProblemSpec::load(&self.spec)?;
        if let Some(g) = self.grid {
            spec.grid = g;
        }
        if let Some(s) = self.half_plane {
            spec.half_plane = s;
        }
        if let Some(k) = self.kappa {
            spec.kappa = k;
        }
        if let Some(n) = self.order {
            spec.n = n;
        }
        if let Some(t) = self.tol {
            spec.tol = t;
        }
        if let Some(r) = &self.lambda_ray {
            let v = numbers("lambda-ray", r, 4)?;
            if v[2] < 0.0 || v[2].fract() != 0.0 {
                bail!("--lambda-ray: count must be a nonnegative integer");
            }
            spec.lambda_ray = Some(LambdaRay { start: v[0], factor: v[1], count: v[2] as usize, arg: v[3] });
        }
        if let Some(r) = &self.rect {
            let v = numbers("rect", r, 4)?;
            spec.rect = Some([v[0], v[1], v[2], v[3]]);
        }
        if spec.tol.is_nan() || spec.tol <= 0.0 {
            bail!("field 'tol': must be positive");
        }
        Ok(spec)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("cannot create {}", self.out.display()))?;
        Ok(&self.out)
    }
}

fn validated(spec: &ProblemSpec) -> Result<SystemCoefficients> {
    let coeffs = spec.build()?;
    coeffs.validate()?;
    Ok(coeffs)
}

/// Oriented derived quantities and λ samples.
fn oriented(spec: &ProblemSpec, coeffs: &SystemCoefficients) -> Result<(DerivedQuantities, Vec<C64>)> {
    let ray = spec.lambda_ray.context("field 'lambda_ray' is required for this command")?;
    let samples = spec.check_ray(&ray)?;
    let hp = spec.half_plane();
    let d = DerivedQuantities::new(&hp.orient(coeffs))?;
    Ok((d, samples.into_iter().map(|l| hp.to_plus(l)).collect()))
}

fn smoothness_json(s: u32) -> Value {
    if s == ANALYTIC {
        json!("analytic")
    } else {
        json!(s)
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Plus => "plus",
        Side::Minus => "minus",
    }
}

pub const R_HEADER: &str = "x,re_r11,im_r11,re_r12,im_r12,re_r21,im_r21,re_r22,im_r22";

fn r_csv(table: &ExpansionTable, m: usize) -> String {
    let rm = &table.r[m];
    let grid = rm.r11.grid();
    let mut s = String::from(R_HEADER);
    s.push('\n');
    for (j, &x) in grid.nodes().iter().enumerate() {
        let v = rm.at_node(j);
        let _ = write!(s, "{}", num(x));
        for (i, k) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let _ = write!(s, ",{},{}", num(v[(i, k)].re), num(v[(i, k)].im));
        }
        s.push('\n');
    }
    s
}

pub fn expand(args: &Common) -> Result<bool> {
    let spec = args.load()?;
    let coeffs = validated(&spec)?;
    let mut table = build_table(&coeffs, spec.half_plane())?;
    if let Some(l) = spec.lambda_min {
        table = table.with_lambda_min(l);
    }
    let out = args.out_dir()?;
    let mut orders = Vec::new();
    for (m, s) in table.smoothness().into_iter().enumerate() {
        let file = format!("R_{}.csv", m + 1);
        write(&out.join(&file), &r_csv(&table, m))?;
        orders.push(json!({
            "m": m + 1,
            "file": file,
            "smoothness": {
                "r11": smoothness_json(s[0]),
                "r12": smoothness_json(s[1]),
                "r21": smoothness_json(s[2]),
                "r22": smoothness_json(s[3]),
            },
        }));
    }
    let input: Vec<Value> = [&coeffs.b12, &coeffs.b21].iter().map(|f| smoothness_json(f.smoothness())).collect();
    let manifest = json!({
        "command": "expand",
        "grid": spec.grid,
        "n": spec.n,
        "epsilon": spec.epsilon,
        "kappa": spec.kappa,
        "half_plane": side_name(spec.half_plane),
        "lambda_min": table.lambda_min,
        "smoothness_budget": {
            "b12_b21": input,
            "consumed": spec.n.saturating_sub(1),
        },
        "orders": orders,
    });
    write(&out.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {} order(s) to {}", table.order, out.display());
    Ok(true)
}

pub fn verify(args: &Common) -> Result<bool> {
    let spec = args.load()?;
    let coeffs = validated(&spec)?;
    let (d, lambdas) = oriented(&spec, &coeffs)?;
    let table = build_oriented(&d, spec.n)?;
    let rep = measure_remainder(&table, &d, &lambdas, spec.tol)?;
    let hp = spec.half_plane();
    let mut s = String::from("re_lambda,im_lambda,modulus,err,err_scaled,re_det_z,im_det_z\n");
    for i in 0..rep.lambdas.len() {
        let l = hp.to_plus(rep.lambdas[i]);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            num(l.re),
            num(l.im),
            num(l.norm()),
            num(rep.errors[i]),
            num(rep.scaled[i]),
            num(rep.det_z[i].re),
            num(rep.det_z[i].im)
        );
    }
    let pass = rep.passes();
    let _ = writeln!(
        s,
        "slope,{},expected,{},floor_limited,{},pass,{}",
        num(rep.slope),
        num(rep.expected_slope),
        rep.floor_limited,
        pass
    );
    let out = args.out_dir()?;
    write(&out.join("rate_report.csv"), &s)?;
    println!(
        "slope {:.3} (expected {:.1}{}): {}",
        rep.slope,
        rep.expected_slope,
        if rep.floor_limited { ", floor-limited" } else { "" },
        if pass { "pass" } else { "FAIL" }
    );
    Ok(pass)
}

pub fn neumann(args: &Common) -> Result<bool> {
    let spec = args.load()?;
    let coeffs = validated(&spec)?;
    let (d, lambdas) = oriented(&spec, &coeffs)?;
    let hp = spec.half_plane();
    let mut s = String::from(
        "re_lambda,im_lambda,modulus,upsilon,upsilon_hat,c_q_int,c_q,norm_v1,norm_v2,norm_v1_sq,norm_v2_sq,contracting\n",
    );
    for l in lambdas {
        let e = estimate_remainders(&d, l, spec.kappa, DEFAULT_DENSITY)?;
        let mut norms = [0.0; 4];
        for (i, (k, sq)) in [(1, false), (2, false), (1, true), (2, true)].into_iter().enumerate() {
            norms[i] = operator_norm_probe(&d, k, l, sq)?;
        }
        let orig = hp.to_plus(l);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            num(orig.re),
            num(orig.im),
            num(l.norm()),
            num(e.upsilon),
            e.upsilon_hat.map(num).unwrap_or_default(),
            num(e.c_q_int),
            num(e.c_q),
            num(norms[0]),
            num(norms[1]),
            num(norms[2]),
            num(norms[3]),
            e.contracting()
        );
    }
    let out = args.out_dir()?;
    write(&out.join("estimates.csv"), &s)?;
    println!("wrote estimates.csv to {}", out.display());
    Ok(true)
}

pub fn eigen(args: &Common) -> Result<bool> {
    let spec = args.load()?;
    let coeffs = validated(&spec)?;
    let [r0, r1, i0, i1] = spec.rect.context("field 'rect' is required for this command")?;
    let rect = Rect::new(r0, r1, i0, i1)?;
    let d = DerivedQuantities::new(&coeffs)?;
    let opts = EigenOptions { tol: spec.tol, ..EigenOptions::default() };
    let loc = eigen::localize(&d, rect, &opts)?;
    let rect_json = |r: &Rect| json!([r.re.0, r.re.1, r.im.0, r.im.1]);
    let doc = json!({
        "rect": rect_json(&loc.rect),
        "winding": loc.winding,
        "tol": spec.tol,
        "cells": loc.cells.iter().map(|(r, w)| json!({"rect": rect_json(r), "winding": w})).collect::<Vec<_>>(),
        "roots": loc.roots.iter().map(|r| json!({
            "re": r.lambda.re,
            "im": r.lambda.im,
            "residual": r.residual,
            "cell": rect_json(&r.cell),
        })).collect::<Vec<_>>(),
    });
    let out = args.out_dir()?;
    write(&out.join("eigen.json"), &serde_json::to_string_pretty(&doc)?)?;
    println!("winding {} in {}, {} root(s) refined", loc.winding, loc.rect, loc.roots.len());
    Ok(loc.winding == loc.roots.len() as i64)
}
