//! Linearized time evolution of one mode in second-order form.
//!
//! Writing `X` for the displacement (`Ẋ = y`, the reduced velocity), the density and
//! field perturbations are linear in `X`: `ϱ = −ρ̄'X3`, `N = m∂_i X` (incompressible)
//! or `ϱ = −div(ρ̄X)`, `N = m_c∂1X − X3M̄'_c − M̄_c div X` (compressible). Substituting
//! them into the momentum equation gives
//!
//! ```text
//! M ẏ + C y − K X = 0,   M ÿ + C ẏ − K y = 0,
//! ```
//!
//! with `M = J`, `C = V`, `K = E`. Initial data `(u0, ϱ0, N0)` are specified through
//! `(y0, X0)`, and `M ẏ0 = −C y0 + K X0`. The trapezoidal rule (Newmark `β = 1/4`,
//! `γ = 1/2`) keeps `M ẏ + C y − K X` exactly constant, and the energy
//! `ẏᵀMẏ − yᵀKy + 2∫ẏᵀCẏ` constant up to `O(Δt²)` from the trapezoidal dissipation sum.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dispersion::{DispersionResult, ModeContext};
use crate::eigcore::{lambda_max, symmetrize, EigError};
use crate::grid1d::{Grid1D, SubspaceOps};
use crate::modeforms::{Block, CompOps, Field, FieldDir, FormKind, IncGrams, ModeForms, ModeSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("incompatible initial data: {0}")]
    IncompatibleData(String),
    #[error("linear solve failed: {0}")]
    SolverFailure(String),
    #[error("invalid time step or horizon: {0}")]
    BadTime(String),
    #[error(transparent)]
    Eig(#[from] EigError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepScheme {
    /// Newmark average acceleration, identical to the trapezoidal rule.
    Trapezoidal,
    Newmark {
        beta: f64,
        gamma: f64,
    },
}

impl StepScheme {
    fn coefficients(self) -> (f64, f64) {
        match self {
            StepScheme::Trapezoidal => (0.25, 0.5),
            StepScheme::Newmark { beta, gamma } => (beta, gamma),
        }
    }
}

/// Quadratic forms of the norms appearing in the stability and growth estimates.
///
/// Velocity norms act on `y`, density and field norms on `X`.
#[derive(Debug, Clone)]
pub struct NormForms {
    /// `∫|u|²`.
    pub u: DMatrix<f64>,
    /// `∫|∇u|²`.
    pub grad: DMatrix<f64>,
    /// `∫|∂_i u|²` (`i = 1` for the compressible problem).
    pub di: DMatrix<f64>,
    /// `∫|div u|²` (zero for the incompressible problem).
    pub div: DMatrix<f64>,
    /// `∫ϱ²` as a form in `X`.
    pub rho: DMatrix<f64>,
    /// `∫|N|²` as a form in `X`.
    pub n: DMatrix<f64>,
}

/// Matrices of one mode ready for time stepping.
#[derive(Debug, Clone)]
pub struct EvolveSystem {
    pub kind: FormKind,
    pub mode: ModeSpec,
    pub m: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub norms: NormForms,
    pub layout: Vec<Block>,
    /// `λ_max(K; M) ≤ 0`: no mode can grow.
    pub stable: bool,
    pub alpha0: f64,
    /// Field strength entering `∂_i N = m ∂_i² X` (incompressible).
    pub m_field: f64,
    u_chol: Cholesky<f64, Dyn>,
    m_chol: Cholesky<f64, Dyn>,
}

fn scale_rows(op: &DMatrix<f64>, f: &[f64]) -> DMatrix<f64> {
    let mut out = op.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= f[i];
    }
    out
}

fn sym(mut m: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut m);
    m
}

impl EvolveSystem {
    pub fn new(forms: &ModeForms, ctx: &ModeContext<'_>) -> Result<Self, EvolveError> {
        let g1 = ctx.grid;
        let p = ctx.profile;
        let mode = forms.mode;
        let (xi1, _) = mode.xi();
        let k2 = mode.k().powi(2);
        let (norms, m_field) = match forms.kind {
            FormKind::Incompressible(dir) => {
                let gr = IncGrams::new(p, g1);
                let di = gr.di(dir, xi1, k2);
                let n = &di * (mode.m * mode.m);
                let zero_phi = DMatrix::zeros(gr.nd, gr.nd);
                let norms = NormForms {
                    u: sym(gr.l2(k2)),
                    grad: sym(gr.grad(k2)),
                    di: sym(di),
                    div: DMatrix::zeros(gr.nc + gr.nd, gr.nc + gr.nd),
                    rho: sym(gr.blockdiag(gr.c00_drho2.clone(), zero_phi)),
                    n: sym(n),
                };
                (norms, mode.m)
            }
            FormKind::Compressible => {
                let eq = ctx.equilibrium.ok_or_else(|| {
                    EvolveError::IncompatibleData("compressible evolution needs the equilibrium".into())
                })?;
                let ops = CompOps::new(&mode, g1);
                let x = &ops.x;
                let rho_b: Vec<f64> = x.iter().map(|&z| p.rho(z)).collect();
                let drho: Vec<f64> = x.iter().map(|&z| p.drho(z)).collect();
                let mc: Vec<f64> = x.iter().map(|&z| eq.mc_at(z)).collect();
                let dmc: Vec<f64> = x.iter().map(|&z| eq.dmc_at(z)).collect();
                let rop = scale_rows(&ops.div, &rho_b) + scale_rows(&ops.val[2], &drho);
                let n1 = scale_rows(&ops.val[0], &mc.iter().map(|m| -m * xi1).collect::<Vec<_>>())
                    - scale_rows(&ops.val[2], &dmc)
                    - scale_rows(&ops.div, &mc);
                let n2 = scale_rows(&ops.val[1], &mc.iter().map(|m| -m * xi1).collect::<Vec<_>>());
                let n3 = scale_rows(&ops.val[2], &mc.iter().map(|m| m * xi1).collect::<Vec<_>>());
                let one = |_: f64| 1.0;
                let norms = NormForms {
                    u: sym(ops.l2()),
                    grad: sym(ops.grad(k2)),
                    di: sym(ops.d1(xi1)),
                    div: sym(ops.div_sq()),
                    rho: sym(ops.gram(&rop, one, &rop)),
                    n: sym(ops.gram(&n1, one, &n1) + ops.gram(&n2, one, &n2) + ops.gram(&n3, one, &n3)),
                };
                (norms, 0.0)
            }
            other => {
                return Err(EvolveError::IncompatibleData(format!("cannot evolve {other:?} forms")));
            }
        };
        let alpha0 = lambda_max(&forms.e, &forms.j)?;
        Ok(Self {
            kind: forms.kind,
            mode,
            m: forms.j.clone(),
            c: forms.v.clone(),
            k: forms.e.clone(),
            u_chol: norms.u.clone().cholesky().ok_or(EigError::NotPositiveDefinite)?,
            m_chol: forms.j.clone().cholesky().ok_or(EigError::NotPositiveDefinite)?,
            norms,
            layout: forms.layout.clone(),
            stable: alpha0 <= 0.0,
            alpha0,
            m_field,
        })
    }

    pub fn dof(&self) -> usize {
        self.m.nrows()
    }

    fn quad(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
        x.dot(&(a * x))
    }

    /// `(fᵀ U⁻¹ f)^{1/2}`: L² norm of the field whose weak action is `f`.
    pub fn dual_norm(&self, f: &DVector<f64>) -> f64 {
        f.dot(&self.u_chol.solve(f)).max(0.0).sqrt()
    }

    fn solve_m(&self, f: &DVector<f64>) -> Result<DVector<f64>, EvolveError> {
        let x = self.m_chol.solve(f);
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(EvolveError::SolverFailure("mass solve produced non-finite values".into()))
        }
    }
}

/// Time-stepping state: velocity `y`, its derivatives, and displacement `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveState {
    pub t: f64,
    pub y: DVector<f64>,
    pub ydot: DVector<f64>,
    pub yddot: DVector<f64>,
    pub x: DVector<f64>,
}

/// Initial-data norms of the stability and growth estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialNorms {
    pub rho0: f64,
    pub n0: f64,
    pub u0: f64,
    pub gradu0: f64,
    pub diu0: f64,
    pub divu0: f64,
    /// `‖μΔu0‖` (viscous force of `u0`, measured as an L² field).
    pub visc0: f64,
    /// `‖∂_i N0‖`.
    pub din0: f64,
    /// `‖Q0‖` / `‖P0‖`: force exerted by `(ϱ0, N0)`.
    pub q0: f64,
    /// Energy constant `J0` / `I0`.
    pub energy0: f64,
    /// `y0ᵀCy0 = V(u0)`.
    pub v0: f64,
    /// `y0ᵀMy0 = ∫ρ̄|u0|²`.
    pub mass0: f64,
}

impl InitialNorms {
    /// `‖(ϱ0, ∂_i u0, μΔu0, ∂_i N0)‖²`.
    pub fn stability_combination(&self) -> f64 {
        self.rho0.powi(2) + self.diu0.powi(2) + self.visc0.powi(2) + self.din0.powi(2)
    }

    /// `‖(ϱ0, ∇u0, Δu0, N0, ∂_i N0)‖` plus `|I0|`: the data behind the growth envelopes.
    pub fn envelope_combination(&self) -> f64 {
        (self.rho0.powi(2)
            + self.u0.powi(2)
            + self.gradu0.powi(2)
            + self.visc0.powi(2)
            + self.n0.powi(2)
            + self.din0.powi(2)
            + self.energy0.abs())
        .sqrt()
    }
}

/// `M ẏ0 = −C y0 + K X0`, `M ÿ0 = −C ẏ0 + K y0`.
pub fn init_state(sys: &EvolveSystem, u0: &DVector<f64>, x0: &DVector<f64>) -> Result<EvolveState, EvolveError> {
    let n = sys.dof();
    if u0.len() != n || x0.len() != n {
        return Err(EvolveError::IncompatibleData(format!(
            "expected {n} unknowns, got u0: {}, X0: {}",
            u0.len(),
            x0.len()
        )));
    }
    if u0.iter().chain(x0.iter()).any(|v| !v.is_finite()) {
        return Err(EvolveError::IncompatibleData("non-finite entries".into()));
    }
    let ydot = sys.solve_m(&(&sys.k * x0 - &sys.c * u0))?;
    let yddot = sys.solve_m(&(&sys.k * u0 - &sys.c * &ydot))?;
    Ok(EvolveState { t: 0.0, y: u0.clone(), ydot, yddot, x: x0.clone() })
}

/// Growing-mode data: `u0 = ũ`, `X0 = ũ/Λ`, so `ϱ0 = ϱ̃` and `N0 = Ñ`.
pub fn growing_mode_data(d: &DispersionResult) -> Option<(DVector<f64>, DVector<f64>)> {
    let lam = d.lambda?;
    let u = d.maximizer.clone()?;
    let x = &u / lam;
    Some((u, x))
}

pub fn initial_norms(sys: &EvolveSystem, st: &EvolveState) -> InitialNorms {
    let q = EvolveSystem::quad;
    let nf = &sys.norms;
    let (y, x) = (&st.y, &st.x);
    let din0 = match sys.kind {
        FormKind::Incompressible(_) => sys.dual_norm(&(&nf.di * x * sys.m_field)),
        _ => sys.mode.xi().0.abs() * q(&nf.n, x).max(0.0).sqrt(),
    };
    InitialNorms {
        rho0: q(&nf.rho, x).max(0.0).sqrt(),
        n0: q(&nf.n, x).max(0.0).sqrt(),
        u0: q(&nf.u, y).max(0.0).sqrt(),
        gradu0: q(&nf.grad, y).max(0.0).sqrt(),
        diu0: q(&nf.di, y).max(0.0).sqrt(),
        divu0: q(&nf.div, y).max(0.0).sqrt(),
        visc0: sys.dual_norm(&(&sys.c * y)),
        din0,
        q0: sys.dual_norm(&(&sys.k * x)),
        energy0: q(&sys.m, &st.ydot) - q(&sys.k, y),
        v0: q(&sys.c, y),
        mass0: q(&sys.m, y),
    }
}

/// Factorized Newmark step for a fixed `Δt` (negative `Δt` steps backwards).
pub struct Stepper {
    lu: LU<f64, Dyn, Dyn>,
    dt: f64,
    beta: f64,
    gamma: f64,
}

impl Stepper {
    pub fn new(sys: &EvolveSystem, dt: f64, scheme: StepScheme) -> Result<Self, EvolveError> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(EvolveError::BadTime(format!("dt = {dt}")));
        }
        let (beta, gamma) = scheme.coefficients();
        let a = &sys.m + &sys.c * (gamma * dt) - &sys.k * (beta * dt * dt);
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(EvolveError::SolverFailure(format!("Newmark matrix singular at dt = {dt}")));
        }
        Ok(Self { lu, dt, beta, gamma })
    }

    pub fn advance(&self, sys: &EvolveSystem, s: &EvolveState) -> Result<EvolveState, EvolveError> {
        let (dt, beta, gamma) = (self.dt, self.beta, self.gamma);
        let ydot_pred = &s.ydot + &s.yddot * ((1.0 - gamma) * dt);
        let y_pred = &s.y + &s.ydot * dt + &s.yddot * ((0.5 - beta) * dt * dt);
        let rhs = &sys.k * &y_pred - &sys.c * &ydot_pred;
        let yddot = self.lu.solve(&rhs).ok_or_else(|| EvolveError::SolverFailure("Newmark solve failed".into()))?;
        let y = y_pred + &yddot * (beta * dt * dt);
        let ydot = ydot_pred + &yddot * (gamma * dt);
        let x = &s.x + (&s.y + &y) * (0.5 * dt);
        Ok(EvolveState { t: s.t + dt, y, ydot, yddot, x })
    }
}

/// One implicit step of size `dt > 0`.
pub fn step(sys: &EvolveSystem, state: &EvolveState, dt: f64, scheme: StepScheme) -> Result<EvolveState, EvolveError> {
    if !(dt > 0.0) {
        return Err(EvolveError::BadTime(format!("dt must be positive, got {dt}")));
    }
    Stepper::new(sys, dt, scheme)?.advance(sys, state)
}

/// Log-linear fit of `‖u(t)‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthFit {
    pub lambda: f64,
    /// Two-standard-error band on the slope.
    pub lo: f64,
    pub hi: f64,
    /// `ln(‖u(T)‖/‖u(0)‖)/T`.
    pub endpoint: f64,
}

/// Checks of the stability estimates on a finished run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityLedger {
    /// `max_t ‖u_t‖² / ‖(ϱ0, ∂_i u0, μΔu0, ∂_i N0)‖²`.
    pub c_ut: f64,
    /// `max_t ‖(u, ∂_i u)‖² / ‖(ϱ0, ∂_i u0, μΔu0, ∂_i N0)‖²`.
    pub c_u: f64,
    /// `max_t ‖(ϱ, N)‖² / ‖(ϱ0, u0, N0, Q0)‖²`.
    pub c_rho_n: f64,
    /// Second-half maxima do not exceed first-half maxima.
    pub non_growing: bool,
    /// `‖u(T)‖_{H¹} / max_t ‖u(t)‖_{H¹}`.
    pub h1_final_ratio: f64,
    /// `max_{t ≥ T_late} ‖ϱ(t) − ϱ(T)‖ / max_t ‖ϱ(t)‖`, likewise for `N`.
    pub rho_late_increment: f64,
    pub n_late_increment: f64,
    pub t_late: f64,
}

/// Time series of one run.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub kind: FormKind,
    pub dt: f64,
    pub scheme: StepScheme,
    pub times: Vec<f64>,
    pub norm_rho: Vec<f64>,
    pub norm_u: Vec<f64>,
    pub norm_diu: Vec<f64>,
    pub norm_ut: Vec<f64>,
    pub norm_gradu: Vec<f64>,
    pub norm_n: Vec<f64>,
    pub norm_divu: Vec<f64>,
    /// `|ẏᵀMẏ − yᵀKy + 2∫ẏᵀCẏ − J0| / max(1, |J0|)`.
    pub energy_drift: Vec<f64>,
    /// The same defect over the magnitude of the identity's terms at that time.
    pub energy_drift_scaled: Vec<f64>,
    /// `yᵀMy` and the trapezoidal `∫₀ᵗ yᵀCy`.
    pub mass_u: Vec<f64>,
    pub int_vu: Vec<f64>,
    /// `|Mẏ + Cy − KX| / (|Mẏ| + |Cy| + |KX|)` (time-integrated momentum identity).
    pub integrated_identity: f64,
    pub initial: InitialNorms,
    pub fit: GrowthFit,
    pub ledger: StabilityLedger,
    pub stable_regime: bool,
    pub final_state: EvolveState,
}

impl TrajectoryRecord {
    pub fn max_energy_drift(&self) -> f64 {
        self.energy_drift.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_energy_drift_scaled(&self) -> f64 {
        self.energy_drift_scaled.iter().copied().fold(0.0, f64::max)
    }
}

fn fit_growth(times: &[f64], norm: &[f64]) -> GrowthFit {
    let pts: Vec<(f64, f64)> =
        times.iter().zip(norm).filter(|(_, n)| **n > 0.0 && n.is_finite()).map(|(t, n)| (*t, n.ln())).collect();
    let endpoint = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) if b.0 > a.0 => (b.1 - a.1) / (b.0 - a.0),
        _ => f64::NAN,
    };
    let n = pts.len() as f64;
    if pts.len() < 3 {
        return GrowthFit { lambda: endpoint, lo: f64::NAN, hi: f64::NAN, endpoint };
    }
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt = pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let sty = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>();
    let slope = sty / stt;
    let sse = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mt)).powi(2)).sum::<f64>();
    let se = (sse / (n - 2.0) / stt).sqrt();
    GrowthFit { lambda: slope, lo: slope - 2.0 * se, hi: slope + 2.0 * se, endpoint }
}

/// Integrate to time `t_end` with step `dt`, recording diagnostics every `every` steps.
pub fn run_trajectory(
    sys: &EvolveSystem,
    state: &EvolveState,
    t_end: f64,
    dt: f64,
    every: usize,
    scheme: StepScheme,
) -> Result<TrajectoryRecord, EvolveError> {
    if !(t_end > 0.0 && dt > 0.0 && t_end.is_finite()) {
        return Err(EvolveError::BadTime(format!("T = {t_end}, dt = {dt}")));
    }
    let every = every.max(1);
    let steps = (t_end / dt).round().max(1.0) as usize;
    let stepper = Stepper::new(sys, dt, scheme)?;
    let q = EvolveSystem::quad;
    let nf = &sys.norms;
    let initial = initial_norms(sys, state);
    let j0 = initial.energy0;
    let t_late = 0.8 * steps as f64 * dt;

    let mut rec = TrajectoryRecord {
        kind: sys.kind,
        dt,
        scheme,
        times: Vec::new(),
        norm_rho: Vec::new(),
        norm_u: Vec::new(),
        norm_diu: Vec::new(),
        norm_ut: Vec::new(),
        norm_gradu: Vec::new(),
        norm_n: Vec::new(),
        norm_divu: Vec::new(),
        energy_drift: Vec::new(),
        energy_drift_scaled: Vec::new(),
        mass_u: Vec::new(),
        int_vu: Vec::new(),
        integrated_identity: 0.0,
        initial,
        fit: GrowthFit { lambda: f64::NAN, lo: f64::NAN, hi: f64::NAN, endpoint: f64::NAN },
        ledger: StabilityLedger {
            c_ut: f64::NAN,
            c_u: f64::NAN,
            c_rho_n: f64::NAN,
            non_growing: false,
            h1_final_ratio: f64::NAN,
            rho_late_increment: f64::NAN,
            n_late_increment: f64::NAN,
            t_late,
        },
        stable_regime: sys.stable,
        final_state: state.clone(),
    };
    let mut late_x: Vec<DVector<f64>> = Vec::new();
    let mut h1: Vec<f64> = Vec::new();

    let mut record = |rec: &mut TrajectoryRecord, s: &EvolveState, diss: f64, int_vu: f64| {
        let sq = |a: &DMatrix<f64>, v: &DVector<f64>| q(a, v).max(0.0).sqrt();
        rec.times.push(s.t);
        rec.norm_rho.push(sq(&nf.rho, &s.x));
        rec.norm_u.push(sq(&nf.u, &s.y));
        rec.norm_diu.push(sq(&nf.di, &s.y));
        rec.norm_ut.push(sq(&nf.u, &s.ydot));
        rec.norm_gradu.push(sq(&nf.grad, &s.y));
        rec.norm_n.push(sq(&nf.n, &s.x));
        rec.norm_divu.push(sq(&nf.div, &s.y));
        let (kin, pot) = (q(&sys.m, &s.ydot), q(&sys.k, &s.y));
        let lhs = kin - pot + 2.0 * diss;
        let scale = (kin.abs() + pot.abs() + 2.0 * diss.abs()).max(j0.abs()).max(f64::MIN_POSITIVE);
        rec.energy_drift.push((lhs - j0).abs() / j0.abs().max(1.0));
        rec.energy_drift_scaled.push((lhs - j0).abs() / scale);
        rec.mass_u.push(q(&sys.m, &s.y));
        rec.int_vu.push(int_vu);
        let my = &sys.m * &s.ydot;
        let cy = &sys.c * &s.y;
        let kx = &sys.k * &s.x;
        let r = (&my + &cy - &kx).amax() / (my.amax() + cy.amax() + kx.amax()).max(f64::MIN_POSITIVE);
        rec.integrated_identity = rec.integrated_identity.max(r);
        h1.push((q(&nf.u, &s.y) + q(&nf.grad, &s.y)).max(0.0).sqrt());
        if s.t >= t_late - 0.5 * dt {
            late_x.push(s.x.clone());
        }
    };

    let mut s = state.clone();
    let mut diss = 0.0;
    let mut int_vu = 0.0;
    record(&mut rec, &s, diss, int_vu);
    for i in 1..=steps {
        let next = stepper.advance(sys, &s)?;
        diss += 0.5 * dt * (q(&sys.c, &s.ydot) + q(&sys.c, &next.ydot));
        int_vu += 0.5 * dt * (q(&sys.c, &s.y) + q(&sys.c, &next.y));
        s = next;
        if i % every == 0 || i == steps {
            record(&mut rec, &s, diss, int_vu);
        }
    }
    rec.fit = fit_growth(&rec.times, &rec.norm_u);

    let b = initial.stability_combination();
    let bq = initial.rho0.powi(2) + initial.u0.powi(2) + initial.n0.powi(2) + initial.q0.powi(2);
    let ratio_max =
        |num: &dyn Fn(usize) -> f64, den: f64| (0..rec.times.len()).map(|i| num(i) / den).fold(0.0, f64::max);
    let ut2 = |i: usize| rec.norm_ut[i].powi(2);
    let u2 = |i: usize| rec.norm_u[i].powi(2) + rec.norm_diu[i].powi(2);
    let rn2 = |i: usize| rec.norm_rho[i].powi(2) + rec.norm_n[i].powi(2);
    let half = rec.times.len() / 2;
    let max_in = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let growing = |v: &[f64]| max_in(&v[half..]) > max_in(&v[..half.max(1)]) * (1.0 + 1e-9);
    let final_x = s.x.clone();
    let inc = |form: &DMatrix<f64>, series: &[f64]| {
        let top = max_in(series).max(f64::MIN_POSITIVE);
        late_x.iter().map(|x| q(form, &(x - &final_x)).max(0.0).sqrt()).fold(0.0, f64::max) / top
    };
    rec.ledger = StabilityLedger {
        c_ut: ratio_max(&ut2, b),
        c_u: ratio_max(&u2, b),
        c_rho_n: ratio_max(&rn2, bq),
        non_growing: !growing(&rec.norm_ut) && !growing(&h1),
        h1_final_ratio: h1.last().copied().unwrap_or(0.0) / max_in(&h1).max(f64::MIN_POSITIVE),
        rho_late_increment: inc(&nf.rho, &rec.norm_rho),
        n_late_increment: inc(&nf.n, &rec.norm_n),
        t_late,
    };
    rec.final_state = s;
    Ok(rec)
}

/// Fitted envelope constants `C = max_t norm(t) / (e^{Λt} B0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub lambda: Option<f64>,
    pub constants: Vec<(&'static str, f64)>,
    /// `max_t ‖u(t)‖ / (‖u0‖e^{Λt})`: equals 1 for growing-mode data.
    pub c_u_self: f64,
    /// Worst ratio of `yᵀMy + ∫yᵀCy` to `[y0ᵀMy0 + (I0 + 2K0)/(2Λ²)] e^{2Λt}`.
    pub bound_ratio: f64,
    pub flagged: bool,
    /// No growth rate supplied: only boundedness was checked.
    pub degenerate: bool,
}

pub fn envelope_check(rec: &TrajectoryRecord, lambda: Option<f64>) -> EnvelopeReport {
    let b0 = rec.initial.envelope_combination().max(f64::MIN_POSITIVE);
    let lam = lambda.unwrap_or(0.0);
    let series: [(&'static str, &Vec<f64>); 6] = [
        ("rho", &rec.norm_rho),
        ("u", &rec.norm_u),
        ("grad_u", &rec.norm_gradu),
        ("u_t", &rec.norm_ut),
        ("N", &rec.norm_n),
        ("d_i u", &rec.norm_diu),
    ];
    let constants: Vec<(&'static str, f64)> = series
        .iter()
        .map(|(name, v)| {
            let c = v.iter().zip(&rec.times).map(|(n, t)| n / ((lam * t).exp() * b0)).fold(0.0, f64::max);
            (*name, c)
        })
        .collect();
    let u0 = rec.norm_u.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let c_u_self = rec.norm_u.iter().zip(&rec.times).map(|(n, t)| n / (u0 * (lam * t).exp())).fold(0.0, f64::max);
    let mut bound_ratio = 0.0f64;
    if lam > 0.0 {
        let k0 = lam * rec.initial.v0;
        let base = rec.initial.mass0 + (rec.initial.energy0 + 2.0 * k0) / (2.0 * lam * lam);
        for (i, t) in rec.times.iter().enumerate() {
            let lhs = rec.mass_u[i] + rec.int_vu[i];
            let rhs = base * (2.0 * lam * t).exp();
            if rhs > 0.0 {
                bound_ratio = bound_ratio.max(lhs / rhs);
            } else if lhs > 0.0 {
                bound_ratio = f64::INFINITY;
            }
        }
    }
    let finite = constants.iter().all(|(_, c)| c.is_finite());
    let flagged = !finite || (lam > 0.0 && bound_ratio > 1.0 + 1e-6);
    EnvelopeReport { lambda, constants, c_u_self, bound_ratio, flagged, degenerate: lambda.is_none() }
}

/// `(1 − t²)² Σ_{k<8} a_k T_k(t)`, `t = x/l`, with `a_k` uniform in `±1/(1+k)²`.
fn smooth_sample(x: &[f64], l: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let a: Vec<f64> = (0..8).map(|k| rng.gen_range(-1.0..1.0) / ((1 + k) as f64).powi(2)).collect();
    DVector::from_iterator(
        x.len(),
        x.iter().map(|&xx| {
            let t = (xx / l).clamp(-1.0, 1.0);
            let (mut t0, mut t1) = (1.0, t);
            let mut s = a[0] + a[1] * t;
            for ak in &a[2..] {
                let t2 = 2.0 * t * t1 - t0;
                s += ak * t2;
                t0 = t1;
                t1 = t2;
            }
            (1.0 - t * t).powi(2) * s
        }),
    )
}

/// Seeded smooth reduced vector for every field of `layout`.
pub fn random_smooth(g1: &Grid1D, kind: FormKind, layout: &[Block], seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = layout.iter().map(|b| b.len).sum();
    let clamped_v3 = matches!(kind, FormKind::Incompressible(_) | FormKind::Quotient(_));
    let mut out = DVector::zeros(n);
    for b in layout {
        let space: &SubspaceOps = if b.field == Field::V3 && clamped_v3 { &g1.clamped } else { &g1.dirichlet };
        let nodal = smooth_sample(&g1.nodes, g1.l, &mut rng);
        out.rows_mut(b.offset, b.len).copy_from(&space.project(&nodal));
    }
    out
}

/// Direction of the incompressible field recorded in the forms, if any.
pub fn field_dir(kind: FormKind) -> Option<FieldDir> {
    match kind {
        FormKind::Incompressible(d) | FormKind::Quotient(d) => Some(d),
        _ => None,
    }
}
