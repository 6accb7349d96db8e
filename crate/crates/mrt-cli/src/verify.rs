//! Built-in invariant suite behind `mrt verify`.

use std::f64::consts::PI;
use std::path::Path;

use mrt_core::{
    assemble_incompressible, build_compressible_equilibrium, build_grid, critical_2d, critical_M, critical_m_sweep,
    growing_mode_data, init_state, make_affine_profile, run_trajectory, solve_growth_rate, test_sequence_values,
    DensityProfile, EvolveSystem, FieldDir, GrowthOptions, ModeContext, ModeSpec, PhysicalParams, Rect2D, Scheme,
    Stability, StepScheme,
};
use serde_json::{json, Value};

use crate::output::{jnum, write_json, SCHEMA};
use crate::CliError;

/// One row of the report. `pass = None` marks a report-only measurement.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: Option<bool>,
    pub value: f64,
    pub bound: String,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, value: f64, bound: impl Into<String>) -> Check {
    Check { name, pass: Some(pass), value, bound: bound.into(), detail: String::new() }
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn affine() -> DensityProfile {
    make_affine_profile(1.0, 2.0, 1.0).expect("valid profile")
}

fn unit() -> PhysicalParams {
    PhysicalParams::incompressible(1.0, 1.0, 0.1).expect("valid parameters")
}

pub fn run_checks() -> Result<Vec<Check>, CliError> {
    let (p, prm) = (affine(), unit());
    let mc = 2.0 / PI;
    let cheb = build_grid(1.0, 64, Scheme::Chebyshev)?;
    let mut out = Vec::new();

    let v = critical_M(&p, &prm, &cheb)?;
    let e = (v / mc - 1.0).abs();
    out.push(check("critical_number_chebyshev_64", e <= 1e-8, e, "rel <= 1e-8"));
    let v = critical_M(&p, &prm, &build_grid(1.0, 256, Scheme::Fd2)?)?;
    let e = (v / mc - 1.0).abs();
    out.push(check("critical_number_fd2_256", e <= 1e-3, e, "rel <= 1e-3"));

    let rep = critical_m_sweep(&p, &prm, &cheb, FieldDir::X1, &[ModeSpec::new(1.0, 1, 0), ModeSpec::new(1.0, 0, 1)])?;
    out.push(check("slab_horizontal_field_unbounded", rep.infinite, rep.aggregate.value(), "aggregate = inf"));

    let sq = critical_2d(&Rect2D::square(16)?, &p, &prm, FieldDir::X1)?;
    let exact = 2.0 / (PI * 5f64.sqrt());
    let e = (sq.aggregate.value() / exact - 1.0).abs();
    out.push(check(
        "bounded_square_finite",
        sq.aggregate.is_finite() && e <= 1e-2,
        e,
        "finite, rel to 2/(pi sqrt 5) <= 1e-2",
    ));

    let mode = ModeSpec::new(1.0, 1, 0);
    let f = assemble_incompressible(&mode, &p, &prm, &cheb)?;
    let d = solve_growth_rate(&f, &GrowthOptions::default())?;
    let fp = d.fixed_point_residual / (d.scale * d.scale);
    out.push(check("growth_fixed_point", d.lambda.is_some() && fp <= 1e-16, fp, "|L^2 - alpha(L)| <= 1e-16 scale^2"));
    let worst = d.alpha_samples.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max);
    out.push(check("alpha_nonincreasing", worst <= 1e-10, worst, "increments <= 1e-10"));
    let again = solve_growth_rate(&f, &GrowthOptions::default())?;
    let same = again.lambda.map(f64::to_bits) == d.lambda.map(f64::to_bits) && again.maximizer == d.maximizer;
    out.push(check("deterministic_growth", same, 0.0, "bit-identical"));

    let mcx = critical_m_sweep(&p, &prm, &cheb, FieldDir::X3, &[mode])?.per_mode[0].value.value();
    let below = assemble_incompressible(&mode.with_field(FieldDir::X3, 0.999 * mcx), &p, &prm, &cheb)?;
    let above = assemble_incompressible(&mode.with_field(FieldDir::X3, 1.001 * mcx), &p, &prm, &cheb)?;
    let lo = solve_growth_rate(&below, &GrowthOptions::default())?;
    let hi = solve_growth_rate(&above, &GrowthOptions::default())?;
    out.push(check(
        "threshold_dichotomy",
        lo.status == Stability::Unstable && hi.status == Stability::Stable,
        mcx,
        "unstable at 0.999 m_c, stable at 1.001 m_c",
    ));

    let ks: Vec<f64> = [4.0, 8.0, 16.0, 32.0, 64.0].to_vec();
    let m_ref = critical_M(&p, &prm, &cheb)?;
    let seq = test_sequence_values(&p, &prm, &cheb, &ks)?;
    let err: Vec<f64> = seq.iter().map(|v| m_ref - v).collect();
    let s = slope(&ks, &err);
    out.push(check("test_sequence_slope", (-2.2..=-1.8).contains(&s), s, "slope in [-2.2, -1.8]"));
    let sweep: Vec<ModeSpec> = (1..=32).map(|k| ModeSpec::new(1.0, k, 0)).collect();
    let rep = critical_m_sweep(&p, &prm, &cheb, FieldDir::X3, &sweep)?;
    let kk: Vec<f64> = (4..=32).map(f64::from).collect();
    let ee: Vec<f64> = rep.per_mode[3..].iter().map(|v| m_ref - v.value.value()).collect();
    out.push(Check {
        name: "per_mode_slope",
        pass: None,
        value: slope(&kk, &ee),
        bound: "report only".into(),
        detail: "clamped per-mode values converge like k^-1".into(),
    });

    let g24 = build_grid(1.0, 24, Scheme::Chebyshev)?;
    let f = assemble_incompressible(&mode, &p, &prm, &g24)?;
    let d = solve_growth_rate(&f, &GrowthOptions::default())?;
    let lam = d.lambda.ok_or_else(|| CliError::Solver("reference mode is not unstable".into()))?;
    let sys = EvolveSystem::new(&f, &ModeContext::incompressible(&g24, &p, &prm))?;
    let (u0, x0) = growing_mode_data(&d).expect("unstable mode has growing data");
    let st = init_state(&sys, &u0, &x0)?;
    let drift = |dt: f64| -> Result<f64, CliError> {
        Ok(run_trajectory(&sys, &st, 2.0 / lam, dt, 1, StepScheme::Trapezoidal)?.max_energy_drift())
    };
    let r = drift(2e-2 / lam)? / drift(1e-2 / lam)?;
    out.push(check("energy_drift_second_order", (r - 4.0).abs() <= 0.8, r, "ratio 4 +- 0.8"));

    let cprm = PhysicalParams::new(1.0, 1.0, 0.1, 0.2, 1.0, 1.0)?;
    let cp = make_affine_profile(1.0, 2.0, -0.5)?;
    let eq = build_compressible_equilibrium(&cp, &cprm, 50.0, 1.0, &cheb)?;
    let top = eq.nodes.iter().map(|&x| cprm.g * cp.rho(x)).fold(0.0, f64::max);
    let e = eq.steady_residual / top;
    out.push(check("compressible_steady_residual", e <= 1e-8, e, "<= 1e-8 max g rho"));
    Ok(out)
}

/// Writes `verify.json`; fails when any asserted check fails.
pub fn verify(out: &Path) -> Result<String, CliError> {
    let checks = run_checks()?;
    let rows: Vec<Value> = checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "pass": c.pass,
                "value": jnum(c.value),
                "bound": c.bound,
                "detail": c.detail,
            })
        })
        .collect();
    let failed: Vec<&str> = checks.iter().filter(|c| c.pass == Some(false)).map(|c| c.name).collect();
    let doc = json!({ "schema": SCHEMA, "command": "verify", "all_pass": failed.is_empty(), "checks": rows });
    write_json(&out.join("verify.json"), &doc)?;
    if failed.is_empty() {
        Ok(format!("{} checks passed", checks.iter().filter(|c| c.pass.is_some()).count()))
    } else {
        Err(CliError::Verify(failed.join(", ")))
    }
}
