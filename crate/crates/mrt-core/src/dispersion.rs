//! Critical magnetic numbers, the modified variational growth rate, C_r, and growing modes.
//!
//! For a mode with forms `(E, V, J)`, `α(s) = max_w (E − sV)(w)/J(w)` is convex and
//! nonincreasing in `s`. The growth rate is the fixed point `Λ = √α(Λ)`, located by
//! bisection on `h(s) = α(s) − s²` and polished by tangent-line (Newton) steps: the
//! maximizer `y` at `s` gives the supporting line `a − sb` with `a = E(y)`, `b = V(y)`,
//! whose intersection with `s²` approaches `Λ` monotonically from below.

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::eigcore::{
    lambda_max, lambda_max_sym, max_rayleigh, norm_inf, psd_ratio_sup, sym_eigen, sym_eigenvalues, CholeskyPencil,
    EigError, ExtReal, RatioOptions,
};
use crate::grid1d::{Bc, Grid1D, SubspaceOps};
use crate::modeforms::{
    assemble_cr_forms, assemble_quotient, Block, Field, FieldDir, FormKind, ModeError, ModeForms, ModeSpec,
};
use crate::profiles::{CompressibleEquilibrium, DensityProfile, PhysicalParams};
use nalgebra::DMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    #[error(transparent)]
    Eig(#[from] EigError),
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error("α(s0) > 0 but no sign change of α found below {ceiling:e} (α = {alpha:e})")]
    BracketFailure { ceiling: f64, alpha: f64 },
    #[error("no growing mode: the mode is stable")]
    NoGrowth,
    #[error("empty mode sweep")]
    EmptySweep,
    #[error("{0}")]
    Unsupported(String),
}

/// Controls for [`solve_growth_rate`].
#[derive(Debug, Clone, Copy)]
pub struct GrowthOptions {
    /// Probe `s0 = probe · scale`, `scale = √max(α(0), 1)`.
    pub probe: f64,
    /// Bisection stops once the bracket on `Λ` is below `tol · scale`.
    pub tol: f64,
    /// Upper limit for the 𝔖 bracket; default `10 α(0)/λ_min(V; J)`.
    pub ceiling: Option<f64>,
    /// Number of geometric `(s, α(s))` samples recorded.
    pub samples: usize,
    /// Keep the ξ-perpendicular field φ in the maximization (diagnostic).
    pub keep_phi: bool,
    /// `|α(0)|` at or below this is reported as marginal rather than stable.
    pub marginal_tol: f64,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self { probe: 1e-6, tol: 1e-8, ceiling: None, samples: 12, keep_phi: false, marginal_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Unstable,
    Stable,
    /// `α(0)` vanishes to tolerance: the threshold case `|m| = m_C`.
    Marginal,
}

impl Stability {
    pub fn name(self) -> &'static str {
        match self {
            Stability::Unstable => "unstable",
            Stability::Stable => "stable",
            Stability::Marginal => "marginal",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DispersionResult {
    pub mode: ModeSpec,
    pub kind: FormKind,
    pub status: Stability,
    pub alpha_samples: Vec<(f64, f64)>,
    pub alpha0: f64,
    pub frak_s: Option<f64>,
    pub lambda: Option<f64>,
    /// `E(y) − ΛV(y)` at the `J`-normalized maximizer `y`.
    pub alpha_at_lambda: f64,
    /// Largest eigenvalue of the pencil `(E − ΛV, J)`.
    pub alpha_eig_at_lambda: f64,
    /// `|Λ² − α(Λ)|` with `α` from the maximizer.
    pub fixed_point_residual: f64,
    /// Maximizer in the layout of the input forms (φ zero-filled when dropped).
    pub maximizer: Option<DVector<f64>>,
    pub layout: Vec<Block>,
    pub j_norm: f64,
    /// Discrete residual `‖(E − ΛV − Λ²J)y‖∞ / ((‖E‖ + Λ‖V‖ + Λ²‖J‖)‖y‖∞)`.
    pub eig_residual: f64,
    pub phi_dropped: bool,
    /// Largest φ coefficient of the maximizer when φ is kept.
    pub phi_max: f64,
    pub scale: f64,
}

/// `α(s)` pencil in Cholesky-reduced form: `α(s) = λ_max(Ẽ − sṼ)`.
pub struct GrowthPencil {
    chol: CholeskyPencil,
    et: DMatrix<f64>,
    vt: DMatrix<f64>,
}

impl GrowthPencil {
    pub fn new(forms: &ModeForms) -> Result<Self, EigError> {
        let chol = CholeskyPencil::new(&forms.j)?;
        let et = chol.reduce(&forms.e);
        let vt = chol.reduce(&forms.v);
        Ok(Self { chol, et, vt })
    }

    pub fn alpha(&self, s: f64) -> f64 {
        lambda_max_sym(&(&self.et - &self.vt * s))
    }

    /// `α(s)` with the unit maximizer in the reduced frame.
    fn alpha_vec(&self, s: f64) -> (f64, DVector<f64>) {
        let (vals, vecs) = sym_eigen(&(&self.et - &self.vt * s));
        let k = vals.len() - 1;
        (vals[k], vecs.column(k).into_owned())
    }

    fn quad(&self, m: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
        y.dot(&(m * y))
    }

    pub fn v_min(&self) -> f64 {
        sym_eigenvalues(&self.vt)[0]
    }
}

/// `α(s) = max (E − sV)/J` with its `J`-normalized maximizer.
pub fn alpha_of_s(forms: &ModeForms, s: f64) -> Result<(f64, DVector<f64>), DispersionError> {
    let a = &forms.e - &forms.v * s;
    Ok(max_rayleigh(&a, &forms.j)?)
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    let r = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (r * i as f64).exp()).collect()
}

/// Fixed sign so repeated solves report identical vectors.
fn normalize_sign(x: &mut DVector<f64>) {
    let imax = x.iamax();
    if x[imax] < 0.0 {
        x.neg_mut();
    }
}

pub fn solve_growth_rate(forms: &ModeForms, opts: &GrowthOptions) -> Result<DispersionResult, DispersionError> {
    let has_phi = forms.block(Field::Phi).is_some();
    let drop_phi = has_phi && !opts.keep_phi;
    let work = if drop_phi {
        let keep: Vec<Field> = forms.layout.iter().map(|b| b.field).filter(|f| *f != Field::Phi).collect();
        forms.restrict_to(&keep)
    } else {
        forms.clone()
    };
    let pencil = GrowthPencil::new(&work)?;
    let alpha0 = pencil.alpha(0.0);
    let scale = alpha0.max(1.0).sqrt();
    let s0 = opts.probe * scale;
    let a_s0 = pencil.alpha(s0);

    let mut result = DispersionResult {
        mode: forms.mode,
        kind: forms.kind,
        status: Stability::Stable,
        alpha_samples: Vec::new(),
        alpha0,
        frak_s: None,
        lambda: None,
        alpha_at_lambda: f64::NAN,
        alpha_eig_at_lambda: f64::NAN,
        fixed_point_residual: f64::NAN,
        maximizer: None,
        layout: forms.layout.clone(),
        j_norm: f64::NAN,
        eig_residual: f64::NAN,
        phi_dropped: drop_phi,
        phi_max: 0.0,
        scale,
    };

    if a_s0 <= 0.0 {
        result.status = if alpha0.abs() <= opts.marginal_tol { Stability::Marginal } else { Stability::Stable };
        result.alpha_samples = geometric(s0, scale, opts.samples).into_iter().map(|s| (s, pencil.alpha(s))).collect();
        return Ok(result);
    }
    result.status = Stability::Unstable;

    // h(s) = α(s) − s² is strictly decreasing where α > 0.
    let (mut lo, mut hi) = if a_s0 > s0 * s0 { (s0, a_s0.sqrt()) } else { (0.0, s0) };
    for _ in 0..200 {
        if hi - lo <= opts.tol * scale {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pencil.alpha(mid) - mid * mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // Newton on the supporting line; iterates increase towards Λ.
    let mut lam = lo;
    let (mut alpha_eig, mut y) = pencil.alpha_vec(lam);
    for _ in 0..50 {
        let a = pencil.quad(&pencil.et, &y);
        let b = pencil.quad(&pencil.vt, &y);
        if a <= 0.0 {
            break;
        }
        let next = 2.0 * a / (b + (b * b + 4.0 * a).sqrt());
        let done = (next - lam).abs() <= 4.0 * f64::EPSILON * lam;
        lam = next;
        let (ae, yy) = pencil.alpha_vec(lam);
        alpha_eig = ae;
        y = yy;
        if done {
            break;
        }
    }
    let a = pencil.quad(&pencil.et, &y);
    let b = pencil.quad(&pencil.vt, &y);
    let alpha_rq = a - lam * b;
    result.lambda = Some(lam);
    result.alpha_at_lambda = alpha_rq;
    result.alpha_eig_at_lambda = alpha_eig;
    result.fixed_point_residual = (lam * lam - alpha_rq).abs();

    // 𝔖: root of α, bracketed by doubling from Λ.
    let vmin = pencil.v_min();
    let ceiling = opts.ceiling.unwrap_or(if vmin > 0.0 { 10.0 * alpha0 / vmin } else { 1e12 }).max(4.0 * lam);
    let mut slo = lam;
    let mut shi = 2.0 * lam;
    while pencil.alpha(shi) > 0.0 {
        slo = shi;
        shi *= 2.0;
        if shi > ceiling {
            return Err(DispersionError::BracketFailure { ceiling, alpha: pencil.alpha(ceiling) });
        }
    }
    for _ in 0..200 {
        if shi - slo <= 1e-12 * shi {
            break;
        }
        let mid = 0.5 * (slo + shi);
        if pencil.alpha(mid) > 0.0 {
            slo = mid;
        } else {
            shi = mid;
        }
    }
    let frak = 0.5 * (slo + shi);
    result.frak_s = Some(frak);
    result.alpha_samples = geometric(s0, 2.0 * frak, opts.samples).into_iter().map(|s| (s, pencil.alpha(s))).collect();

    let mut x = pencil.chol.lift(&y);
    normalize_sign(&mut x);
    result.j_norm = x.dot(&(&work.j * &x));
    let r = &work.e * &x - &work.v * (lam * x.clone()) - &work.j * (lam * lam * x.clone());
    let denom = (norm_inf(&work.e) + lam * norm_inf(&work.v) + lam * lam * norm_inf(&work.j)) * x.amax();
    result.eig_residual = r.amax() / denom;

    let full = if drop_phi {
        let mut full = DVector::zeros(forms.dof());
        for wb in &work.layout {
            let fb = forms.block(wb.field).expect("restricted block exists in the full layout");
            full.rows_mut(fb.offset, fb.len).copy_from(&x.rows(wb.offset, wb.len));
        }
        full
    } else {
        if let Some(pb) = forms.block(Field::Phi) {
            result.phi_max = x.rows(pb.offset, pb.len).amax();
        }
        x
    };
    result.maximizer = Some(full);
    Ok(result)
}

fn dirichlet_quotient(p: &DensityProfile, params: &PhysicalParams, g1: &Grid1D) -> (DMatrix<f64>, DMatrix<f64>) {
    let s = &g1.dirichlet;
    let drho: Vec<f64> = s.x01.iter().map(|&x| params.g * p.drho(x)).collect();
    let ones = vec![params.lambda0; s.x01.len()];
    (SubspaceOps::gram(&s.s0, &s.w01, &drho, &s.s0), SubspaceOps::gram(&s.s1, &s.w01, &ones, &s.s1))
}

/// `M_C = √max(0, sup g∫ρ̄'ψ² / λ0∫ψ'²)` over `ψ ∈ H¹₀(−l, l)`.
#[allow(non_snake_case)]
pub fn critical_M(p: &DensityProfile, params: &PhysicalParams, g1: &Grid1D) -> Result<f64, DispersionError> {
    let (num, den) = dirichlet_quotient(p, params, g1);
    Ok(lambda_max(&num, &den)?.max(0.0).sqrt())
}

/// Quotient of the test fields built from the 1D maximizer `ψ`, at horizontal wavenumbers `ks`:
/// `√( g∫ρ̄'ψ² / λ0(k⁻²∫ψ''² + ∫ψ'²) )`, which tends to `M_C` like `k⁻²`.
pub fn test_sequence_values(
    p: &DensityProfile,
    params: &PhysicalParams,
    g1: &Grid1D,
    ks: &[f64],
) -> Result<Vec<f64>, DispersionError> {
    let (num, den) = dirichlet_quotient(p, params, g1);
    let (_, psi) = max_rayleigh(&num, &den)?;
    let s = &g1.dirichlet;
    let ones = vec![params.lambda0; s.x2.len()];
    let c = SubspaceOps::gram(&s.s2, &s.w2, &ones, &s.s2);
    let a = psi.dot(&(&num * &psi));
    let b = psi.dot(&(&den * &psi));
    let cc = psi.dot(&(&c * &psi));
    Ok(ks.iter().map(|k| (a / (cc / (k * k) + b)).max(0.0).sqrt()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalKind {
    Slab(FieldDir),
    Cr,
    Bounded2D(FieldDir),
}

#[derive(Debug, Clone)]
pub struct ModeValue {
    pub mode: ModeSpec,
    pub k: f64,
    pub value: ExtReal,
    /// Largest eigenvalue of `(E, J)`: positive iff the mode can grow.
    pub certificate: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CriticalReport {
    pub kind: CriticalKind,
    pub per_mode: Vec<ModeValue>,
    pub aggregate: ExtReal,
    pub argmax: Option<usize>,
    /// The aggregate is `+∞`.
    pub infinite: bool,
    /// `M_C` for slab reports.
    pub reference: Option<f64>,
    /// Per-mode values strictly increase with `|ξ|` (reported for `i = 3`).
    pub monotone_in_k: Option<bool>,
    pub max_asymmetry: f64,
}

fn aggregate(per_mode: &[ModeValue]) -> (ExtReal, Option<usize>) {
    let mut best: Option<(usize, ExtReal)> = None;
    for (i, m) in per_mode.iter().enumerate() {
        let better = match best {
            None => true,
            Some((_, b)) => m.value.value() > b.value(),
        };
        if better {
            best = Some((i, m.value));
        }
    }
    match best {
        Some((i, v)) => (v, Some(i)),
        None => (ExtReal::Finite(f64::NAN), None),
    }
}

fn quotient_value(forms: &ModeForms) -> Result<(ExtReal, f64), DispersionError> {
    let f = forms.restrict_to(&[Field::V3]);
    let d = f.d.as_ref().expect("quotient forms carry a denominator");
    let cert = lambda_max(&f.e, &f.j)?;
    if d.amax() == 0.0 {
        let tol = 1e-12 * (1.0 + norm_inf(&f.e) / norm_inf(&f.j));
        let v = if cert > tol { ExtReal::PosInf } else { ExtReal::Finite(0.0) };
        return Ok((v, cert));
    }
    let q = lambda_max(&f.e, d)?;
    Ok((ExtReal::Finite(q.max(0.0).sqrt()), cert))
}

/// Per-mode `m_C^i(ξ) = √max(0, sup g∫ρ̄'w3² / λ0∫|∂_i w|²)` and the supremum over the sweep.
pub fn critical_m_sweep(
    p: &DensityProfile,
    params: &PhysicalParams,
    g1: &Grid1D,
    dir: FieldDir,
    sweep: &[ModeSpec],
) -> Result<CriticalReport, DispersionError> {
    if sweep.is_empty() {
        return Err(DispersionError::EmptySweep);
    }
    let rows: Vec<(ModeValue, f64)> = sweep
        .par_iter()
        .map(|mode| {
            let forms = assemble_quotient(mode, p, params, g1, dir)?;
            let (value, cert) = quotient_value(&forms)?;
            let note = (!value.is_finite()).then(|| "denominator vanishes on a growing direction".to_string());
            Ok((ModeValue { mode: forms.mode, k: mode.k(), value, certificate: Some(cert), note }, forms.asymmetry))
        })
        .collect::<Result<_, DispersionError>>()?;
    let max_asymmetry = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let per_mode: Vec<ModeValue> = rows.into_iter().map(|r| r.0).collect();
    let (agg, argmax) = aggregate(&per_mode);
    let monotone = (dir == FieldDir::X3).then(|| {
        let mut sorted: Vec<&ModeValue> = per_mode.iter().collect();
        sorted.sort_by(|a, b| a.k.total_cmp(&b.k));
        sorted.windows(2).all(|w| w[0].k == w[1].k || w[1].value.value() > w[0].value.value())
    });
    Ok(CriticalReport {
        kind: CriticalKind::Slab(dir),
        per_mode,
        aggregate: agg,
        argmax,
        infinite: !agg.is_finite(),
        reference: Some(critical_M(p, params, g1)?),
        monotone_in_k: monotone,
        max_asymmetry,
    })
}

/// Per-mode `C_r(ξ) = sup E_c / λ0∫(|∂1w2|² + |∂1w3|² + |∂2w2 + ∂3w3|²)` and the sweep supremum.
pub fn compute_cr(
    eq: &CompressibleEquilibrium,
    g1: &Grid1D,
    sweep: &[ModeSpec],
) -> Result<CriticalReport, DispersionError> {
    if sweep.is_empty() {
        return Err(DispersionError::EmptySweep);
    }
    let opts = RatioOptions::default();
    let rows: Vec<(ModeValue, f64)> = sweep
        .par_iter()
        .map(|mode| {
            let forms = assemble_cr_forms(mode, eq, g1)?;
            let d = forms.d.as_ref().expect("C_r forms carry a denominator");
            let cert = lambda_max(&forms.e, &forms.j)?;
            let (value, note) = match psd_ratio_sup(&forms.e, d, &forms.j, (-1.0, 1.0), &opts) {
                Ok(v) => (v, None),
                Err(EigError::BracketExhausted { ceiling, g }) => {
                    (ExtReal::PosInf, Some(format!("bracket exhausted at {ceiling:e}, g = {g:e}")))
                }
                Err(e) => return Err(e.into()),
            };
            Ok((ModeValue { mode: *mode, k: mode.k(), value, certificate: Some(cert), note }, forms.asymmetry))
        })
        .collect::<Result<_, DispersionError>>()?;
    let max_asymmetry = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let per_mode: Vec<ModeValue> = rows.into_iter().map(|r| r.0).collect();
    let (agg, argmax) = aggregate(&per_mode);
    Ok(CriticalReport {
        kind: CriticalKind::Cr,
        per_mode,
        aggregate: agg,
        argmax,
        infinite: !agg.is_finite(),
        reference: None,
        monotone_in_k: None,
        max_asymmetry,
    })
}

/// Grid, profile and parameters a set of forms was assembled from.
#[derive(Debug, Clone, Copy)]
pub struct ModeContext<'a> {
    pub grid: &'a Grid1D,
    pub profile: &'a DensityProfile,
    pub params: &'a PhysicalParams,
    pub equilibrium: Option<&'a CompressibleEquilibrium>,
}

impl<'a> ModeContext<'a> {
    pub fn incompressible(grid: &'a Grid1D, profile: &'a DensityProfile, params: &'a PhysicalParams) -> Self {
        Self { grid, profile, params, equilibrium: None }
    }

    pub fn compressible(grid: &'a Grid1D, eq: &'a CompressibleEquilibrium) -> Self {
        Self { grid, profile: &eq.profile, params: &eq.params, equilibrium: Some(eq) }
    }
}

/// A complex field on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ModeField {
    fn real(v: Vec<f64>) -> Self {
        let n = v.len();
        Self { re: v, im: vec![0.0; n] }
    }

    fn imag(v: Vec<f64>) -> Self {
        let n = v.len();
        Self { re: vec![0.0; n], im: v }
    }

    /// `(∫|f|²)^{1/2}` with the nodal quadrature.
    pub fn norm(&self, g: &Grid1D) -> f64 {
        (g.dot(&self.re, &self.re) + g.dot(&self.im, &self.im)).sqrt()
    }
}

/// Separable solution `e^{Λt}(ϱ̃, ũ, Ñ)` built from the maximizer at `s = Λ`.
#[derive(Debug, Clone)]
pub struct GrowingMode {
    pub lambda: f64,
    pub nodes: Vec<f64>,
    pub u: [ModeField; 3],
    pub rho: ModeField,
    pub n: [ModeField; 3],
    /// `max|div ũ| / max|∂3ũ3|` at the nodes.
    pub div_u: f64,
    /// `max|div Ñ| / max|Ñ|`-scaled derivative size.
    pub div_n: f64,
    /// `max|Λϱ̃ + ρ̄'ũ3|` (incompressible) or `max|Λϱ̃ + div(ρ̄ũ)|` relative to the second term.
    pub rho_identity: f64,
    /// Relative L² residual of the strong-form eigenvalue problem.
    pub strong_residual: f64,
    /// Norms of the quantities the theory requires to be nonzero.
    pub non_vanishing: Vec<(&'static str, f64)>,
    pub j_norm: f64,
}

impl GrowingMode {
    pub fn all_nonzero(&self) -> bool {
        self.non_vanishing.iter().all(|(_, v)| *v > 1e-12)
    }
}

fn apply(m: &DMatrix<f64>, x: &DVector<f64>) -> Vec<f64> {
    (m * x).iter().copied().collect()
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn l2(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(w, v)| w * v * v).sum::<f64>().sqrt()
}

fn block_of(d: &DispersionResult, x: &DVector<f64>, f: Field) -> DVector<f64> {
    let b = d.layout.iter().find(|b| b.field == f).expect("field present in layout");
    x.rows(b.offset, b.len).into_owned()
}

pub fn build_growing_mode(d: &DispersionResult, ctx: &ModeContext<'_>) -> Result<GrowingMode, DispersionError> {
    let (lam, x) = match (d.lambda, &d.maximizer) {
        (Some(l), Some(x)) => (l, x),
        _ => return Err(DispersionError::NoGrowth),
    };
    match d.kind {
        FormKind::Incompressible(dir) => Ok(incompressible_mode(d, lam, x, dir, ctx)),
        FormKind::Compressible => {
            let eq = ctx.equilibrium.ok_or_else(|| {
                DispersionError::Unsupported("compressible growing mode needs the equilibrium".into())
            })?;
            Ok(compressible_mode(d, lam, x, eq, ctx))
        }
        other => Err(DispersionError::Unsupported(format!("no growing mode for {other:?} forms"))),
    }
}

fn incompressible_mode(
    d: &DispersionResult,
    lam: f64,
    x: &DVector<f64>,
    dir: FieldDir,
    ctx: &ModeContext<'_>,
) -> GrowingMode {
    let g = ctx.grid;
    let prm = ctx.params;
    let p = ctx.profile;
    let (xi1, xi2) = d.mode.xi();
    let k = d.mode.k();
    let k2 = k * k;
    let m = d.mode.m;
    let xv = block_of(d, x, Field::V3);
    let xp = block_of(d, x, Field::Phi);
    let (c, dd) = (&g.clamped, &g.dirichlet);
    let v = apply(&c.inject, &xv);
    let v1 = apply(&c.d1, &xv);
    let v2 = apply(&c.d2, &xv);
    let phi = apply(&dd.inject, &xp);
    let phi1 = apply(&dd.d1, &xp);
    let np = g.nodes.len();

    // û1 = i a1, û2 = i a2.
    let a1: Vec<f64> = (0..np).map(|j| xi1 * v1[j] / k2 - xi2 * phi[j] / k).collect();
    let a2: Vec<f64> = (0..np).map(|j| xi2 * v1[j] / k2 + xi1 * phi[j] / k).collect();
    let a1p: Vec<f64> = (0..np).map(|j| xi1 * v2[j] / k2 - xi2 * phi1[j] / k).collect();
    let a2p: Vec<f64> = (0..np).map(|j| xi2 * v2[j] / k2 + xi1 * phi1[j] / k).collect();
    let div: Vec<f64> = (0..np).map(|j| -xi1 * a1[j] - xi2 * a2[j] + v1[j]).collect();
    let div_u = amax(&div) / amax(&v1).max(f64::MIN_POSITIVE);

    let drho: Vec<f64> = g.nodes.iter().map(|&z| p.drho(z)).collect();
    let rho: Vec<f64> = (0..np).map(|j| -drho[j] * v[j] / lam).collect();
    let rho_identity = (0..np).map(|j| (lam * rho[j] + drho[j] * v[j]).abs()).fold(0.0, f64::max)
        / (0..np).map(|j| (drho[j] * v[j]).abs()).fold(f64::MIN_POSITIVE, f64::max);

    let (n, div_n) = match dir {
        FieldDir::X3 => {
            let n1: Vec<f64> = a1p.iter().map(|a| m * a / lam).collect();
            let n2: Vec<f64> = a2p.iter().map(|a| m * a / lam).collect();
            let n3: Vec<f64> = v1.iter().map(|a| m * a / lam).collect();
            let dn: Vec<f64> = (0..np).map(|j| m * (-xi1 * a1p[j] - xi2 * a2p[j] + v2[j]) / lam).collect();
            let s = amax(&v2) * m.abs() / lam;
            ([ModeField::imag(n1), ModeField::imag(n2), ModeField::real(n3)], amax(&dn) / s.max(f64::MIN_POSITIVE))
        }
        FieldDir::X1 => {
            let n1: Vec<f64> = a1.iter().map(|a| -m * xi1 * a / lam).collect();
            let n2: Vec<f64> = a2.iter().map(|a| -m * xi1 * a / lam).collect();
            let n3: Vec<f64> = v.iter().map(|a| m * xi1 * a / lam).collect();
            let dn: Vec<f64> = (0..np).map(|j| m * xi1 * div[j] / lam).collect();
            let s = amax(&v1) * (m * xi1).abs() / lam;
            ([ModeField::real(n1), ModeField::real(n2), ModeField::imag(n3)], amax(&dn) / s.max(f64::MIN_POSITIVE))
        }
    };

    let strong_residual = incompressible_residual(g, p, prm, dir, m, xi1, k, lam, &xv);
    let u = [ModeField::imag(a1.clone()), ModeField::imag(a2.clone()), ModeField::real(v.clone())];
    let w = &g.quad;
    let diu3 = match dir {
        FieldDir::X3 => l2(w, &v1),
        FieldDir::X1 => xi1.abs() * l2(w, &v),
    };
    let horiz = (l2(w, &a1).powi(2) + l2(w, &a2).powi(2)).sqrt();
    GrowingMode {
        lambda: lam,
        nodes: g.nodes.clone(),
        u,
        rho: ModeField::real(rho),
        n,
        div_u,
        div_n: if div_n.is_finite() { div_n } else { 0.0 },
        rho_identity,
        strong_residual,
        non_vanishing: vec![("u3", l2(w, &v)), ("d_i u3", diu3), ("u1,u2", horiz)],
        j_norm: d.j_norm,
    }
}

/// Relative residual of the incompressible eigenproblem written for `v3` alone.
///
/// With `B(f) = λ0m²f''` (`i = 3`) or `−λ0m²ξ1²f` (`i = 1`), the horizontal momentum
/// equations give the pressure-like `P = [Λμ(v''' − k²v') + B(v') − Λ²ρ̄v']/k²` and the
/// vertical one `Λ²ρ̄v − Λμ(v'' − k²v) + P' − B(v) − gρ̄'v = 0`.
#[allow(clippy::too_many_arguments)]
fn incompressible_residual(
    g: &Grid1D,
    p: &DensityProfile,
    prm: &PhysicalParams,
    dir: FieldDir,
    m: f64,
    xi1: f64,
    k: f64,
    lam: f64,
    xv: &DVector<f64>,
) -> f64 {
    let (pts, w) = g.residual_points();
    let dv = g.derivatives(Bc::Clamped, xv, 4);
    let k2 = k * k;
    let lm = prm.lambda0 * m * m;
    let mu = prm.mu;
    let n = pts.len();
    // Terms of the residual, summed pointwise and measured individually.
    let mut terms: Vec<Vec<f64>> = vec![vec![0.0; n]; 11];
    for q in 0..n {
        let (v0, v1, v2, v4) = (dv[0][q], dv[1][q], dv[2][q], dv[4][q]);
        let rho = p.rho(pts[q]);
        let drho = p.drho(pts[q]);
        let (b0, b2) = match dir {
            FieldDir::X3 => (lm * v2, lm * v4),
            FieldDir::X1 => (-lm * xi1 * xi1 * v0, -lm * xi1 * xi1 * v2),
        };
        let t = [
            lam * lam * rho * v0,
            -lam * mu * v2,
            lam * mu * k2 * v0,
            lam * mu * v4 / k2,
            -lam * mu * v2,
            b2 / k2,
            -lam * lam * drho * v1 / k2,
            -lam * lam * rho * v2 / k2,
            -b0,
            -prm.g * drho * v0,
            0.0,
        ];
        for (tt, val) in terms.iter_mut().zip(t) {
            tt[q] = val;
        }
    }
    let total: Vec<f64> = (0..n).map(|q| terms.iter().map(|t| t[q]).sum()).collect();
    let scale = terms.iter().map(|t| l2(&w, t)).fold(0.0, f64::max);
    l2(&w, &total) / scale
}

fn compressible_mode(
    d: &DispersionResult,
    lam: f64,
    x: &DVector<f64>,
    eq: &CompressibleEquilibrium,
    ctx: &ModeContext<'_>,
) -> GrowingMode {
    let g = ctx.grid;
    let p = &eq.profile;
    let (xi1, xi2) = d.mode.xi();
    let s = &g.dirichlet;
    let xs = [block_of(d, x, Field::V1), block_of(d, x, Field::V2), block_of(d, x, Field::V3)];
    let val: Vec<Vec<f64>> = xs.iter().map(|xx| apply(&s.inject, xx)).collect();
    let der: Vec<Vec<f64>> = xs.iter().map(|xx| apply(&s.d1, xx)).collect();
    let np = g.nodes.len();
    let dv: Vec<f64> = (0..np).map(|j| -xi1 * val[0][j] - xi2 * val[1][j] + der[2][j]).collect();
    let rho_b: Vec<f64> = g.nodes.iter().map(|&z| p.rho(z)).collect();
    let drho: Vec<f64> = g.nodes.iter().map(|&z| p.drho(z)).collect();
    let mc: Vec<f64> = g.nodes.iter().map(|&z| eq.mc_at(z)).collect();
    let dmc: Vec<f64> = g.nodes.iter().map(|&z| eq.dmc_at(z)).collect();
    let div_rho_u: Vec<f64> = (0..np).map(|j| rho_b[j] * dv[j] + drho[j] * val[2][j]).collect();
    let rho: Vec<f64> = div_rho_u.iter().map(|v| -v / lam).collect();
    let rho_identity = (0..np).map(|j| (lam * rho[j] + div_rho_u[j]).abs()).fold(0.0, f64::max)
        / amax(&div_rho_u).max(f64::MIN_POSITIVE);

    let n1: Vec<f64> = (0..np).map(|j| (-mc[j] * xi1 * val[0][j] - dmc[j] * val[2][j] - mc[j] * dv[j]) / lam).collect();
    let n2: Vec<f64> = (0..np).map(|j| -mc[j] * xi1 * val[1][j] / lam).collect();
    let n3: Vec<f64> = (0..np).map(|j| mc[j] * xi1 * val[2][j] / lam).collect();
    // div Ñ = i[ξ1 N1 + ξ2 N2 + ξ1(m_c' v3 + m_c v3')/Λ].
    let dn: Vec<f64> =
        (0..np).map(|j| xi1 * n1[j] + xi2 * n2[j] + xi1 * (dmc[j] * val[2][j] + mc[j] * der[2][j]) / lam).collect();
    let nscale = (0..np)
        .map(|j| (xi1 * n1[j]).abs().max((xi1 * mc[j] * der[2][j] / lam).abs()))
        .fold(f64::MIN_POSITIVE, f64::max);

    let strong_residual = compressible_residual(g, eq, xi1, xi2, lam, &xs);
    let w = &g.quad;
    let q1: Vec<f64> = (0..np).map(|j| dmc[j] * val[2][j] + mc[j] * (-xi2 * val[1][j] + der[2][j])).collect();
    let q2: Vec<f64> = (0..np).map(|j| mc[j] * xi1 * val[1][j]).collect();
    let mc_d1u3: Vec<f64> = (0..np).map(|j| mc[j] * xi1 * val[2][j]).collect();
    let mut non_vanishing = vec![
        ("u3", l2(w, &val[2])),
        ("m_c d_1 u3", l2(w, &mc_d1u3)),
        ("m_c' u3 + m_c(d_2 u2 + d_3 u3), m_c d_1 u2", (l2(w, &q1).powi(2) + l2(w, &q2).powi(2)).sqrt()),
        ("u1,u2", (l2(w, &val[0]).powi(2) + l2(w, &val[1]).powi(2)).sqrt()),
    ];
    if drho.iter().all(|&r| r >= 0.0) {
        non_vanishing.push(("div(rho u)", l2(w, &div_rho_u)));
    }
    GrowingMode {
        lambda: lam,
        nodes: g.nodes.clone(),
        u: [ModeField::imag(val[0].clone()), ModeField::imag(val[1].clone()), ModeField::real(val[2].clone())],
        rho: ModeField::real(rho),
        n: [ModeField::real(n1), ModeField::real(n2), ModeField::imag(n3)],
        div_u: 0.0,
        div_n: amax(&dn) / nscale,
        rho_identity,
        strong_residual,
        non_vanishing,
        j_norm: d.j_norm,
    }
}

/// Relative residual of `Λ²ρ̄v_j = E_j − ΛV_j`, the strong form of the compressible problem.
fn compressible_residual(
    g: &Grid1D,
    eq: &CompressibleEquilibrium,
    xi1: f64,
    xi2: f64,
    lam: f64,
    xs: &[DVector<f64>; 3],
) -> f64 {
    let prm = &eq.params;
    let p = &eq.profile;
    let (pts, w) = g.residual_points();
    let dv: Vec<Vec<Vec<f64>>> = xs.iter().map(|x| g.derivatives(Bc::Dirichlet, x, 2)).collect();
    let (mu, mu0, l0, gg) = (prm.mu, prm.mu0, prm.lambda0, prm.g);
    let k2 = xi1 * xi1 + xi2 * xi2;
    let n = pts.len();
    let mut res = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut scale = 0.0f64;
    let mut term_norms: Vec<Vec<f64>> = Vec::new();
    for q in 0..n {
        let z = pts[q];
        let rho = p.rho(z);
        let drho = p.drho(z);
        let pr = eq.p_rho(z);
        let dpr = eq.dp_rho(z);
        let m2 = eq.mc_sq(z);
        let dm2 = -2.0 * (prm.dpressure(rho) * drho + gg * rho) / l0;
        let [v1, v2, v3] = [&dv[0], &dv[1], &dv[2]];
        let d = -xi1 * v1[0][q] - xi2 * v2[0][q] + v3[1][q];
        let dp = -xi1 * v1[1][q] - xi2 * v2[1][q] + v3[2][q];
        let wv = -xi2 * v2[0][q] + v3[1][q];
        let wp = -xi2 * v2[1][q] + v3[2][q];
        let flux = gg * rho * v3[0][q] - pr * d;
        let t1 = vec![
            -xi1 * gg * rho * v3[0][q],
            xi1 * pr * d,
            -lam * mu * (k2 * v1[0][q] - v1[2][q]),
            lam * mu0 * xi1 * d,
            -lam * lam * rho * v1[0][q],
        ];
        let t2 = vec![
            -xi2 * flux,
            -l0 * m2 * (xi1 * xi1 * v2[0][q] - xi2 * wv),
            -lam * mu * (k2 * v2[0][q] - v2[2][q]),
            lam * mu0 * xi2 * d,
            -lam * lam * rho * v2[0][q],
        ];
        let t3 = vec![
            gg * drho * v3[0][q],
            gg * rho * d,
            -l0 * m2 * xi1 * xi1 * v3[0][q],
            -(gg * drho * v3[0][q] + gg * rho * v3[1][q]),
            dpr * d + pr * dp,
            l0 * dm2 * wv + l0 * m2 * wp,
            -lam * mu * (k2 * v3[0][q] - v3[2][q]),
            lam * mu0 * dp,
            -lam * lam * rho * v3[0][q],
        ];
        for (r, t) in res.iter_mut().zip([&t1, &t2, &t3]) {
            r[q] = t.iter().sum();
        }
        if term_norms.is_empty() {
            term_norms = vec![vec![0.0; n]; t1.len() + t2.len() + t3.len()];
        }
        for (slot, val) in term_norms.iter_mut().zip(t1.iter().chain(&t2).chain(&t3)) {
            slot[q] = *val;
        }
    }
    for t in &term_norms {
        scale = scale.max(l2(&w, t));
    }
    let total = res.iter().map(|r| l2(&w, r).powi(2)).sum::<f64>().sqrt();
    total / scale
}
