//! Equilibrium density profiles and the compressible magnetic equilibrium.
//!
//! Profiles are closures in `x3`; grids sample them wherever they need values,
//! so changing resolution never interpolates an earlier sampling.

use thiserror::Error;

use crate::grid1d::Grid1D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("density is not positive on [-l, l] (minimum {min})")]
    NonPositiveDensity { min: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("pressure deficit at node {node} (x3 = {x3}, radicand = {radicand})")]
    PressureDeficit { node: usize, x3: f64, radicand: f64 },
    #[error("table profile: {0}")]
    Table(String),
}

/// Physical constants: gravity, permeability, viscosities and the isentropic law `p = A ρ^γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub g: f64,
    pub lambda0: f64,
    pub mu: f64,
    /// `μ + ν` with ν the bulk viscosity; only the compressible problem reads it.
    pub mu0: f64,
    pub a: f64,
    pub gamma: f64,
}

impl PhysicalParams {
    pub fn new(g: f64, lambda0: f64, mu: f64, mu0: f64, a: f64, gamma: f64) -> Result<Self, ProfileError> {
        let p = Self { g, lambda0, mu, mu0, a, gamma };
        p.validate()?;
        Ok(p)
    }

    /// Parameters for the incompressible problem: `μ0 = μ`, `A = γ = 1` (unused).
    pub fn incompressible(g: f64, lambda0: f64, mu: f64) -> Result<Self, ProfileError> {
        Self::new(g, lambda0, mu, mu, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        fn positive(name: &'static str, v: f64) -> Result<(), ProfileError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ProfileError::InvalidParameter { name, reason: format!("must be > 0, got {v}") })
            }
        }
        positive("g", self.g)?;
        positive("lambda0", self.lambda0)?;
        positive("mu", self.mu)?;
        positive("A", self.a)?;
        if !(self.gamma.is_finite() && self.gamma >= 1.0) {
            return Err(ProfileError::InvalidParameter {
                name: "gamma",
                reason: format!("must be >= 1, got {}", self.gamma),
            });
        }
        let bulk = self.mu0 - self.mu;
        if !(self.mu0.is_finite() && 3.0 * bulk + 2.0 * self.mu >= 0.0) {
            return Err(ProfileError::InvalidParameter {
                name: "mu0",
                reason: format!("need 3(mu0 - mu) + 2 mu >= 0, got mu0 = {}", self.mu0),
            });
        }
        Ok(())
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        self.a * rho.powf(self.gamma)
    }

    /// `p'(ρ)`.
    pub fn dpressure(&self, rho: f64) -> f64 {
        self.a * self.gamma * rho.powf(self.gamma - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Affine {
        rho_mid: f64,
        beta: f64,
    },
    /// `rho_mid + amp * tanh(k x3)`
    Tanh {
        rho_mid: f64,
        amp: f64,
        k: f64,
    },
    Table(NaturalSpline),
}

/// Density `ρ̄(x3)` on `(−l, l)` with derivatives and the primitive `F(x3) = ∫_{−l}^{x3} ρ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    l: f64,
    shape: Shape,
}

impl DensityProfile {
    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn provenance(&self) -> Provenance {
        match self.shape {
            Shape::Table(_) => Provenance::Tabulated,
            _ => Provenance::Analytic,
        }
    }

    pub fn rho(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Affine { rho_mid, beta } => rho_mid + beta * x,
            Shape::Tanh { rho_mid, amp, k } => rho_mid + amp * (k * x).tanh(),
            Shape::Table(s) => s.eval(x).0,
        }
    }

    pub fn drho(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Affine { beta, .. } => *beta,
            Shape::Tanh { amp, k, .. } => {
                let c = (k * x).cosh();
                amp * k / (c * c)
            }
            Shape::Table(s) => s.eval(x).1,
        }
    }

    pub fn d2rho(&self, x: f64) -> f64 {
        match &self.shape {
            Shape::Affine { .. } => 0.0,
            Shape::Tanh { amp, k, .. } => {
                let c = (k * x).cosh();
                -2.0 * amp * k * k * (k * x).tanh() / (c * c)
            }
            Shape::Table(s) => s.eval(x).2,
        }
    }

    /// `F(x3) = ∫_{−l}^{x3} ρ̄`, anchored so that `F(−l) = 0`.
    pub fn primitive(&self, x: f64) -> f64 {
        let l = self.l;
        match &self.shape {
            Shape::Affine { rho_mid, beta } => rho_mid * (x + l) + 0.5 * beta * (x * x - l * l),
            Shape::Tanh { rho_mid, amp, k } => {
                // ln cosh is even, so the constant from the lower limit cancels in pairs.
                rho_mid * (x + l) + amp / k * (ln_cosh(k * x) - ln_cosh(k * l))
            }
            Shape::Table(s) => s.integral(-l, x),
        }
    }

    /// Samples `(ρ̄, ρ̄')` at the given points.
    pub fn sample(&self, xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (xs.iter().map(|&x| self.rho(x)).collect(), xs.iter().map(|&x| self.drho(x)).collect())
    }

    /// Infimum of ρ̄ over `[−l, l]`; exact for the analytic families.
    pub fn inf_rho(&self) -> f64 {
        let l = self.l;
        match &self.shape {
            Shape::Affine { rho_mid, beta } => rho_mid - beta.abs() * l,
            Shape::Tanh { rho_mid, amp, k } => rho_mid - amp.abs() * (k.abs() * l).tanh(),
            Shape::Table(_) => fine_points(l).map(|x| self.rho(x)).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn sup_rho(&self) -> f64 {
        let l = self.l;
        match &self.shape {
            Shape::Affine { rho_mid, beta } => rho_mid + beta.abs() * l,
            Shape::Tanh { rho_mid, amp, k } => rho_mid + amp.abs() * (k.abs() * l).tanh(),
            Shape::Table(_) => fine_points(l).map(|x| self.rho(x)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Maximum of ρ̄' over `[−l, l]`.
    pub fn max_drho(&self) -> f64 {
        let l = self.l;
        match &self.shape {
            Shape::Affine { beta, .. } => *beta,
            Shape::Tanh { amp, k, .. } => {
                if amp * k > 0.0 {
                    amp * k
                } else {
                    self.drho(l).max(self.drho(-l))
                }
            }
            Shape::Table(_) => fine_points(l).map(|x| self.drho(x)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn check_positive(self) -> Result<Self, ProfileError> {
        let min = self.inf_rho();
        if min > 0.0 && min.is_finite() {
            Ok(self)
        } else {
            Err(ProfileError::NonPositiveDensity { min })
        }
    }
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

fn fine_points(l: f64) -> impl Iterator<Item = f64> {
    const M: usize = 4000;
    (0..=M).map(move |i| -l + 2.0 * l * i as f64 / M as f64)
}

fn check_length(l: f64) -> Result<(), ProfileError> {
    if l.is_finite() && l > 0.0 {
        Ok(())
    } else {
        Err(ProfileError::InvalidParameter { name: "l", reason: format!("must be > 0, got {l}") })
    }
}

/// `ρ̄ = rho_mid + beta x3` on `(−l, l)`.
pub fn make_affine_profile(l: f64, rho_mid: f64, beta: f64) -> Result<DensityProfile, ProfileError> {
    check_length(l)?;
    if !(rho_mid.is_finite() && beta.is_finite()) {
        return Err(ProfileError::InvalidParameter { name: "rho_mid/beta", reason: "not finite".into() });
    }
    DensityProfile { l, shape: Shape::Affine { rho_mid, beta } }.check_positive()
}

/// `ρ̄ = rho_mid + amp tanh(k x3)` on `(−l, l)`.
pub fn make_tanh_profile(l: f64, rho_mid: f64, amp: f64, k: f64) -> Result<DensityProfile, ProfileError> {
    check_length(l)?;
    if !(rho_mid.is_finite() && amp.is_finite() && k.is_finite() && k != 0.0) {
        return Err(ProfileError::InvalidParameter {
            name: "tanh",
            reason: "rho_mid, amp must be finite and k nonzero".into(),
        });
    }
    DensityProfile { l, shape: Shape::Tanh { rho_mid, amp, k } }.check_positive()
}

/// Natural cubic spline through `(x, rho)`; the table must span a symmetric interval `[−l, l]`.
pub fn make_table_profile(x: &[f64], rho: &[f64]) -> Result<DensityProfile, ProfileError> {
    if x.len() != rho.len() || x.len() < 4 {
        return Err(ProfileError::Table("need at least 4 (x3, rho) rows of equal length".into()));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().chain(rho).any(|v| !v.is_finite()) {
        return Err(ProfileError::Table("x3 must be strictly increasing and all values finite".into()));
    }
    let l = 0.5 * (x[x.len() - 1] - x[0]);
    if (x[0] + l).abs() > 1e-12 * l.max(1.0) {
        return Err(ProfileError::Table(format!(
            "table must span a symmetric interval [-l, l], got [{}, {}]",
            x[0],
            x[x.len() - 1]
        )));
    }
    let spline = NaturalSpline::new(x.to_vec(), rho.to_vec());
    DensityProfile { l, shape: Shape::Table(spline) }.check_positive()
}

#[derive(Debug, Clone, PartialEq)]
struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalSpline {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        // Thomas algorithm for the second-derivative system.
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
            c[i] = h1 / diag;
            d[i] = (rhs - h0 * d[i - 1]) / diag;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        Self { x, y, m }
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// Value, first and second derivative; the end cubics extrapolate.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let i = self.segment(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - t) / h, (t - x0) / h);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let dv = (y1 - y0) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let d2v = a * m0 + b * m1;
        (v, dv, d2v)
    }

    /// Antiderivative of the segment cubic containing `t`, measured from the segment start.
    fn segment_integral(&self, i: usize, t: f64) -> f64 {
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        // With a = (x1 - s)/h, b = (s - x0)/h, integrate each term over s in [x0, t].
        let prim = |s: f64| {
            let a = (x1 - s) / h;
            let b = (s - x0) / h;
            -h * y0 * a * a / 2.0
                + h * y1 * b * b / 2.0
                + h * h * h / 6.0 * (-m0 * (a.powi(4) / 4.0 - a * a / 2.0) + m1 * (b.powi(4) / 4.0 - b * b / 2.0))
        };
        prim(t) - prim(x0)
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let (sign, lo, hi) = if hi >= lo { (1.0, lo, hi) } else { (-1.0, hi, lo) };
        let (ilo, ihi) = (self.segment(lo), self.segment(hi));
        let total = if ilo == ihi {
            self.segment_integral(ilo, hi) - self.segment_integral(ilo, lo)
        } else {
            let mut acc = self.segment_integral(ilo, self.x[ilo + 1]) - self.segment_integral(ilo, lo);
            for i in ilo + 1..ihi {
                acc += self.segment_integral(i, self.x[i + 1]);
            }
            acc + self.segment_integral(ihi, hi)
        };
        sign * total
    }
}

/// The three clauses of the RT admissibility condition, evaluated numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    pub inf_rho: f64,
    pub max_drho: f64,
    /// ρ̄ and ρ̄' finite on the closed interval.
    pub regular: bool,
    /// `inf ρ̄ > 0`.
    pub positive: bool,
    /// `ρ̄' > 0` somewhere: an RT-unstable region exists.
    pub rt_flag: bool,
}

pub fn validate_rt_conditions(p: &DensityProfile) -> ValidationReport {
    let l = p.l();
    let regular = fine_points(l).all(|x| p.rho(x).is_finite() && p.drho(x).is_finite());
    let inf_rho = p.inf_rho();
    let max_drho = p.max_drho();
    ValidationReport { inf_rho, max_drho, regular, positive: inf_rho > 0.0, rt_flag: max_drho > 0.0 }
}

/// Horizontal magnetic equilibrium `M̄_c = (m_c(x3), 0, 0)` balancing pressure and gravity.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressibleEquilibrium {
    pub profile: DensityProfile,
    pub params: PhysicalParams,
    pub c_const: f64,
    pub sign: f64,
    pub nodes: Vec<f64>,
    pub f: Vec<f64>,
    pub mc: Vec<f64>,
    pub dmc: Vec<f64>,
    /// `max |p'(ρ̄)ρ̄' + λ0 m_c m_c' + gρ̄|` with `m_c'` from independent differentiation.
    pub steady_residual: f64,
}

impl CompressibleEquilibrium {
    /// `m_c² = (2/λ0)(C − p(ρ̄) − gF)`; the only way the forms see the field.
    pub fn mc_sq(&self, x: f64) -> f64 {
        radicand(&self.profile, &self.params, self.c_const, x) * 2.0 / self.params.lambda0
    }

    pub fn mc_at(&self, x: f64) -> f64 {
        self.sign * self.mc_sq(x).max(0.0).sqrt()
    }

    /// `m_c m_c' = −(p'(ρ̄)ρ̄' + gρ̄)/λ0`.
    pub fn mc_dmc(&self, x: f64) -> f64 {
        let p = &self.params;
        let rho = self.profile.rho(x);
        -(p.dpressure(rho) * self.profile.drho(x) + p.g * rho) / p.lambda0
    }

    pub fn dmc_at(&self, x: f64) -> f64 {
        self.mc_dmc(x) / self.mc_at(x)
    }

    /// `p'(ρ̄)ρ̄ = Aγρ̄^γ`.
    pub fn p_rho(&self, x: f64) -> f64 {
        let rho = self.profile.rho(x);
        self.params.dpressure(rho) * rho
    }

    /// Derivative of `p'(ρ̄)ρ̄` in `x3`.
    pub fn dp_rho(&self, x: f64) -> f64 {
        let p = &self.params;
        let rho = self.profile.rho(x);
        p.a * p.gamma * p.gamma * rho.powf(p.gamma - 1.0) * self.profile.drho(x)
    }

    pub fn min_abs_mc(&self) -> f64 {
        self.mc.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()))
    }
}

fn radicand(p: &DensityProfile, params: &PhysicalParams, c: f64, x: f64) -> f64 {
    c - params.pressure(p.rho(x)) - params.g * p.primitive(x)
}

/// Central differences with two Richardson levels (sixth order).
fn richardson_derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let (d1, d2, d3) = (d(h), d(h / 2.0), d(h / 4.0));
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d3 - d2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

pub fn build_compressible_equilibrium(
    p: &DensityProfile,
    params: &PhysicalParams,
    c_const: f64,
    sign: f64,
    grid: &Grid1D,
) -> Result<CompressibleEquilibrium, ProfileError> {
    params.validate()?;
    if sign != 1.0 && sign != -1.0 {
        return Err(ProfileError::InvalidParameter { name: "sign", reason: format!("must be +1 or -1, got {sign}") });
    }
    let nodes = grid.nodes.clone();
    for (node, &x) in nodes.iter().enumerate() {
        let r = radicand(p, params, c_const, x);
        if !(r > 0.0) {
            return Err(ProfileError::PressureDeficit { node, x3: x, radicand: r });
        }
    }
    // Between nodes as well: the forms evaluate m_c² at quadrature points.
    let l = p.l();
    for x in fine_points(l) {
        let r = radicand(p, params, c_const, x);
        if !(r > 0.0) {
            let node = nodes
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            return Err(ProfileError::PressureDeficit { node, x3: x, radicand: r });
        }
    }
    let mut eq = CompressibleEquilibrium {
        profile: p.clone(),
        params: *params,
        c_const,
        sign,
        f: nodes.iter().map(|&x| p.primitive(x)).collect(),
        mc: Vec::new(),
        dmc: Vec::new(),
        nodes,
        steady_residual: 0.0,
    };
    eq.mc = eq.nodes.iter().map(|&x| eq.mc_at(x)).collect();
    eq.dmc = eq.nodes.iter().map(|&x| eq.dmc_at(x)).collect();
    let h = 4e-3 * l;
    eq.steady_residual = eq
        .nodes
        .iter()
        .zip(&eq.mc)
        .map(|(&x, &mc)| {
            let dmc_num = richardson_derivative(|t| eq.mc_at(t), x, h);
            let rho = p.rho(x);
            (params.dpressure(rho) * p.drho(x) + params.lambda0 * mc * dmc_num + params.g * rho).abs()
        })
        .fold(0.0, f64::max);
    Ok(eq)
}
