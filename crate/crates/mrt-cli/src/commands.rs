//! The `critical`, `growth`, `evolve` and `cr` commands.

use std::path::Path;

use mrt_core::{
    assemble_compressible, assemble_incompressible, compute_cr, critical_2d, critical_m_sweep, envelope_check,
    growing_mode_data, growth_rate_2d, init_state, random_smooth, run_trajectory, solve_growth_rate, CriticalReport,
    DVector, DispersionResult, EvolveSystem, ExtReal, ModeContext, ModeForms, ModeSpec, Rect2D, StepScheme,
};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{InitialData, Problem, RunConfig, TimeUnit};
use crate::output::{jnum, jopt, line_chart, num, opt_num, write_json, write_text, Series, Table, SCHEMA};
use crate::CliError;

fn mode_cells(m: &ModeSpec) -> Vec<String> {
    let (x1, x2) = m.xi();
    vec![m.j1.to_string(), m.j2.to_string(), num(x1), num(x2)]
}

fn rect_cells(r: &Rect2D) -> Vec<String> {
    vec![r.nx.to_string(), r.nz.to_string(), num((r.b1 - r.a1) / (2.0 * r.l))]
}

fn ext(v: ExtReal) -> f64 {
    v.value()
}

fn argmax_json(rep: &CriticalReport) -> Value {
    match rep.argmax.map(|i| &rep.per_mode[i].mode) {
        Some(m) => json!({ "j1": m.j1, "j2": m.j2 }),
        None => Value::Null,
    }
}

fn header(command: &str, cfg: &RunConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("schema".into(), json!(SCHEMA));
    m.insert("command".into(), json!(command));
    m.insert(
        "problem".into(),
        json!(match cfg.problem {
            Problem::Incompressible => "incompressible",
            Problem::Compressible => "compressible",
            Problem::Bounded2d => "bounded2d",
        }),
    );
    m
}

pub fn critical(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let p = cfg.profile()?;
    let prm = cfg.physical()?;
    let dir = cfg.field_dir()?;
    let mut doc = header("critical", cfg);
    doc.insert("field_dir".into(), json!(dir.index()));
    let (rep, table) = match cfg.problem {
        Problem::Incompressible => {
            let grid = cfg.grid()?;
            let modes = cfg.modes()?;
            let rep = critical_m_sweep(&p, &prm, &grid, dir, &modes)?;
            let mut t = Table::new(&["j1", "j2", "xi1", "xi2", "k", "m_c", "certificate", "note"]);
            for v in &rep.per_mode {
                let mut row = mode_cells(&v.mode);
                row.extend([num(v.k), num(ext(v.value)), opt_num(v.certificate), v.note.clone().unwrap_or_default()]);
                t.push(row);
            }
            doc.insert("scheme".into(), json!(grid.scheme.name()));
            doc.insert("n".into(), json!(grid.n));
            (rep, t)
        }
        Problem::Bounded2d => {
            let r = cfg.rect()?;
            let rep = critical_2d(&r, &p, &prm, dir)?;
            let mut t = Table::new(&["nx", "nz", "aspect", "m_c", "certificate"]);
            let mut row = rect_cells(&r);
            row.extend([num(ext(rep.aggregate)), opt_num(rep.per_mode[0].certificate)]);
            t.push(row);
            doc.insert("nx".into(), json!(r.nx));
            doc.insert("nz".into(), json!(r.nz));
            (rep, t)
        }
        Problem::Compressible => {
            return Err(CliError::Config("critical applies to incompressible and bounded2d problems; use cr".into()))
        }
    };
    table.write(&out.join("critical.csv"))?;
    doc.insert("aggregate".into(), jnum(ext(rep.aggregate)));
    doc.insert("infinite".into(), json!(rep.infinite));
    doc.insert("argmax".into(), argmax_json(&rep));
    doc.insert("reference_m_c".into(), jopt(rep.reference));
    doc.insert("monotone_in_k".into(), json!(rep.monotone_in_k));
    doc.insert("max_asymmetry".into(), jnum(rep.max_asymmetry));
    doc.insert("modes".into(), json!(rep.per_mode.len()));
    write_json(&out.join("critical.json"), &Value::Object(doc))?;

    let mut series = vec![Series {
        name: format!("m_C^{}", dir.index()),
        points: rep.per_mode.iter().map(|v| (v.k, ext(v.value))).collect(),
    }];
    if let (Some(r), Some(first), Some(last)) = (rep.reference, rep.per_mode.first(), rep.per_mode.last()) {
        series.push(Series { name: "M_C".into(), points: vec![(first.k, r), (last.k, r)] });
    }
    write_text(&out.join("critical.svg"), &line_chart("critical magnetic number", "|xi|", "m_C", &series, false))?;
    Ok(format!("aggregate m_C^{} = {}", dir.index(), rep.aggregate))
}

fn forms_for(cfg: &RunConfig, mode: &ModeSpec) -> Result<ModeForms, CliError> {
    let grid = cfg.grid()?;
    match cfg.problem {
        Problem::Incompressible => Ok(assemble_incompressible(mode, &cfg.profile()?, &cfg.physical()?, &grid)?),
        Problem::Compressible => Ok(assemble_compressible(mode, &cfg.equilibrium(&grid)?, &grid)?),
        Problem::Bounded2d => Err(CliError::Config("bounded2d has no Fourier modes".into())),
    }
}

fn growth_row(r: &DispersionResult) -> Vec<String> {
    vec![
        r.status.name().to_string(),
        opt_num(r.lambda),
        opt_num(r.frak_s),
        num(r.alpha0),
        num(r.alpha_at_lambda),
        num(r.fixed_point_residual),
        num(r.eig_residual),
    ]
}

const GROWTH_COLS: [&str; 7] =
    ["status", "lambda", "frak_s", "alpha0", "alpha_at_lambda", "fixed_point_residual", "eig_residual"];

pub fn growth(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let opts = cfg.growth_options();
    let mut doc = header("growth", cfg);
    let results: Vec<(Vec<String>, DispersionResult)> = match cfg.problem {
        Problem::Bounded2d => {
            let r = cfg.rect()?;
            let d = growth_rate_2d(&r, &cfg.profile()?, &cfg.physical()?, cfg.m, cfg.field_dir()?, &opts)?;
            vec![(rect_cells(&r), d)]
        }
        _ => {
            let modes = cfg.modes()?;
            // Assembly inputs are validated once up front so workers only see solver errors.
            let grid = cfg.grid()?;
            let (p, prm) = (cfg.profile()?, cfg.physical()?);
            let eq = match cfg.problem {
                Problem::Compressible => Some(cfg.equilibrium(&grid)?),
                _ => None,
            };
            modes
                .par_iter()
                .map(|m| {
                    let f = match &eq {
                        Some(eq) => assemble_compressible(m, eq, &grid)?,
                        None => assemble_incompressible(m, &p, &prm, &grid)?,
                    };
                    Ok((mode_cells(m), solve_growth_rate(&f, &opts)?))
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
    };
    let key_cols: &[&'static str] =
        if cfg.problem == Problem::Bounded2d { &["nx", "nz", "aspect"] } else { &["j1", "j2", "xi1", "xi2"] };
    let mut disp = Table::new(&[key_cols, &GROWTH_COLS[..]].concat());
    let mut alpha = Table::new(&[&key_cols[..2], &["s", "alpha"][..]].concat());
    for (key, d) in &results {
        let mut row = key.clone();
        row.extend(growth_row(d));
        disp.push(row);
        for &(s, a) in &d.alpha_samples {
            alpha.push(vec![key[0].clone(), key[1].clone(), num(s), num(a)]);
        }
    }
    disp.write(&out.join("dispersion.csv"))?;
    alpha.write(&out.join("alpha.csv"))?;

    let unstable: Vec<&DispersionResult> = results.iter().map(|r| &r.1).filter(|d| d.lambda.is_some()).collect();
    let top = unstable.iter().max_by(|a, b| a.lambda.unwrap().total_cmp(&b.lambda.unwrap()));
    doc.insert("rows".into(), json!(results.len()));
    doc.insert("unstable".into(), json!(unstable.len()));
    doc.insert("max_lambda".into(), jopt(top.map(|d| d.lambda.unwrap())));
    doc.insert("max_residual".into(), jnum(results.iter().map(|r| r.1.fixed_point_residual).fold(0.0, f64::max)));
    write_json(&out.join("growth.json"), &Value::Object(doc))?;

    let svg = if cfg.problem == Problem::Bounded2d {
        let d = &results[0].1;
        let s2 = d.alpha_samples.iter().map(|&(s, _)| (s, s * s)).collect();
        line_chart(
            "alpha(s) on the rectangle",
            "s",
            "alpha",
            &[
                Series { name: "alpha(s)".into(), points: d.alpha_samples.clone() },
                Series { name: "s^2".into(), points: s2 },
            ],
            false,
        )
    } else {
        let pts = results.iter().filter_map(|(_, d)| d.lambda.map(|l| (d.mode.k(), l))).collect();
        line_chart("growth rate", "|xi|", "Lambda", &[Series { name: "Lambda".into(), points: pts }], false)
    };
    write_text(&out.join("dispersion.svg"), &svg)?;
    Ok(format!("{} of {} rows unstable", unstable.len(), results.len()))
}

pub fn evolve(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    if cfg.problem == Problem::Bounded2d {
        return Err(CliError::Config("evolve needs a Fourier mode (incompressible or compressible)".into()));
    }
    let mode = cfg.modes()?[0];
    let grid = cfg.grid()?;
    let p = cfg.profile()?;
    let prm = cfg.physical()?;
    let eq = match cfg.problem {
        Problem::Compressible => Some(cfg.equilibrium(&grid)?),
        _ => None,
    };
    let forms = forms_for(cfg, &mode)?;
    let ctx = match &eq {
        Some(eq) => ModeContext::compressible(&grid, eq),
        None => ModeContext::incompressible(&grid, &p, &prm),
    };
    let sys = EvolveSystem::new(&forms, &ctx)?;
    let d = solve_growth_rate(&forms, &cfg.growth_options())?;

    let (u0, x0) = match cfg.initial {
        InitialData::Growing => growing_mode_data(&d)
            .ok_or_else(|| CliError::Config(format!("initial = growing but the mode is {}", d.status.name())))?,
        InitialData::Random => {
            let u0 = random_smooth(&grid, forms.kind, &forms.layout, cfg.seed);
            let x0 = if cfg.random_x0 {
                random_smooth(&grid, forms.kind, &forms.layout, cfg.seed.wrapping_add(1000))
            } else {
                DVector::zeros(u0.len())
            };
            (u0, x0)
        }
    };
    let unit = match cfg.time_unit {
        TimeUnit::Absolute => 1.0,
        TimeUnit::Growth => {
            1.0 / d.lambda.ok_or_else(|| CliError::Config("time_unit = growth needs an unstable mode".into()))?
        }
        TimeUnit::Viscous => cfg.l * cfg.l * p.sup_rho() / cfg.mu,
    };
    let t_end = cfg.t_end.unwrap_or(2.0) * unit;
    let dt = cfg.dt.unwrap_or(1e-3) * unit;
    let st = init_state(&sys, &u0, &x0)?;
    let rec = run_trajectory(&sys, &st, t_end, dt, cfg.every, StepScheme::Trapezoidal)?;
    let env = envelope_check(&rec, d.lambda);

    let mut t = Table::new(&["t", "norm_rho", "norm_u", "norm_diu", "norm_ut", "norm_gradu", "norm_N", "energy_drift"]);
    for i in 0..rec.times.len() {
        t.push(
            [
                rec.times[i],
                rec.norm_rho[i],
                rec.norm_u[i],
                rec.norm_diu[i],
                rec.norm_ut[i],
                rec.norm_gradu[i],
                rec.norm_n[i],
                rec.energy_drift[i],
            ]
            .iter()
            .map(|&x| num(x))
            .collect(),
        );
    }
    t.write(&out.join("trajectory.csv"))?;

    let l = rec.ledger;
    let bounded =
        rec.stable_regime && l.non_growing && [l.c_ut, l.c_u, l.c_rho_n].iter().all(|c| c.is_finite()) && !env.flagged;
    let mut doc = header("evolve", cfg);
    doc.insert("mode".into(), json!({ "j1": mode.j1, "j2": mode.j2, "field_dir": mode.dir.index(), "m": mode.m }));
    doc.insert(
        "initial".into(),
        json!(match cfg.initial {
            InitialData::Growing => "growing",
            InitialData::Random => "random",
        }),
    );
    doc.insert("seed".into(), json!(cfg.seed));
    doc.insert("dt".into(), jnum(dt));
    doc.insert("t_end".into(), jnum(rec.final_state.t));
    doc.insert("samples".into(), json!(rec.times.len()));
    doc.insert("dispersion".into(), json!({ "status": d.status.name(), "lambda": jopt(d.lambda) }));
    doc.insert(
        "fit".into(),
        json!({
            "lambda": jnum(rec.fit.lambda),
            "lo": jnum(rec.fit.lo),
            "hi": jnum(rec.fit.hi),
            "endpoint": jnum(rec.fit.endpoint),
        }),
    );
    doc.insert("energy_drift_max".into(), jnum(rec.max_energy_drift()));
    doc.insert("energy_drift_scaled_max".into(), jnum(rec.max_energy_drift_scaled()));
    doc.insert("integrated_identity".into(), jnum(rec.integrated_identity));
    let consts: Map<String, Value> = env.constants.iter().map(|(k, c)| (k.to_string(), jnum(*c))).collect();
    doc.insert(
        "envelope".into(),
        json!({ "constants": consts, "c_u_self": jnum(env.c_u_self), "bound_ratio": jnum(env.bound_ratio) }),
    );
    doc.insert(
        "ledger".into(),
        json!({
            "c_ut": jnum(l.c_ut),
            "c_u": jnum(l.c_u),
            "c_rho_n": jnum(l.c_rho_n),
            "non_growing": l.non_growing,
            "h1_final_ratio": jnum(l.h1_final_ratio),
            "rho_late_increment": jnum(l.rho_late_increment),
            "n_late_increment": jnum(l.n_late_increment),
            "t_late": jnum(l.t_late),
        }),
    );
    doc.insert(
        "flags".into(),
        json!({
            "bounded": bounded,
            "stable_regime": rec.stable_regime,
            "growing": !rec.stable_regime && rec.fit.lambda > 0.0,
            "envelope_flagged": env.flagged,
        }),
    );
    write_json(&out.join("summary.json"), &Value::Object(doc))?;

    let series: Vec<Series> = [("|u|", &rec.norm_u), ("|u_t|", &rec.norm_ut), ("|rho|", &rec.norm_rho)]
        .iter()
        .map(|(name, v)| Series {
            name: name.to_string(),
            points: rec.times.iter().copied().zip(v.iter().copied()).collect(),
        })
        .collect();
    write_text(&out.join("trajectory.svg"), &line_chart("trajectory norms", "t", "norm", &series, true))?;
    Ok(format!("fit lambda = {}, max energy drift = {}", num(rec.fit.lambda), num(rec.max_energy_drift())))
}

pub fn cr(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    if cfg.problem != Problem::Compressible {
        return Err(CliError::Config("cr applies to compressible problems".into()));
    }
    let grid = cfg.grid()?;
    let eq = cfg.equilibrium(&grid)?;
    let modes = cfg.modes()?;
    let rep = compute_cr(&eq, &grid, &modes)?;
    let mut t = Table::new(&["j1", "j2", "xi1", "xi2", "k", "c_r", "certificate", "note"]);
    for v in &rep.per_mode {
        let mut row = mode_cells(&v.mode);
        row.extend([num(v.k), num(ext(v.value)), opt_num(v.certificate), v.note.clone().unwrap_or_default()]);
        t.push(row);
    }
    t.write(&out.join("cr.csv"))?;
    let mut doc = header("cr", cfg);
    doc.insert("aggregate".into(), jnum(ext(rep.aggregate)));
    doc.insert("infinite".into(), json!(rep.infinite));
    doc.insert("argmax".into(), argmax_json(&rep));
    doc.insert("c_const".into(), jnum(eq.c_const));
    doc.insert("sign".into(), jnum(eq.sign));
    doc.insert("steady_residual".into(), jnum(eq.steady_residual));
    doc.insert("min_abs_mc".into(), jnum(eq.min_abs_mc()));
    doc.insert("max_asymmetry".into(), jnum(rep.max_asymmetry));
    doc.insert("modes".into(), json!(rep.per_mode.len()));
    write_json(&out.join("cr.json"), &Value::Object(doc))?;
    Ok(format!("aggregate C_r = {}", rep.aggregate))
}
