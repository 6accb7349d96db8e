//! Divergence-free fields on a rectangle `(a1, b1) × (−l, l)` with no-slip walls.
//!
//! A velocity `w = (∂3ψ, −∂1ψ)` is parametrized by a streamfunction `ψ` clamped on all
//! four walls (`ψ = ∂ψ/∂n = 0`). `ψ` is the tensor product of two uniform second-order
//! clamped subspaces, so every form is a sum of Kronecker products of 1D Grams.
//! Unknowns are ordered `ix·nz + iz`.

use nalgebra::{DMatrix, DVector};

use crate::dispersion::{
    solve_growth_rate, CriticalKind, CriticalReport, DispersionError, DispersionResult, GrowthOptions, ModeValue,
};
use crate::eigcore::{lambda_max, symmetrize};
use crate::grid1d::{build_grid, Grid1D, GridError, Scheme, SubspaceOps};
use crate::modeforms::{Block, Field, FieldDir, FormKind, ModeForms, ModeSpec};
use crate::profiles::{DensityProfile, PhysicalParams};

#[derive(Debug, Clone)]
pub struct Rect2D {
    pub a1: f64,
    pub b1: f64,
    pub l: f64,
    pub nx: usize,
    pub nz: usize,
    /// Horizontal grid on `(−(b1−a1)/2, (b1−a1)/2)`; forms do not depend on `x1`.
    pub gx: Grid1D,
    pub gz: Grid1D,
}

impl Rect2D {
    pub fn new(a1: f64, b1: f64, l: f64, nx: usize, nz: usize) -> Result<Self, GridError> {
        if !(a1.is_finite() && b1.is_finite() && b1 > a1) {
            return Err(GridError::BadLength(b1 - a1));
        }
        Ok(Self {
            a1,
            b1,
            l,
            nx,
            nz,
            gx: build_grid(0.5 * (b1 - a1), nx, Scheme::Fd2)?,
            gz: build_grid(l, nz, Scheme::Fd2)?,
        })
    }

    /// The square `(−1, 1)²` with `n × n` interior nodes.
    pub fn square(n: usize) -> Result<Self, GridError> {
        Self::new(-1.0, 1.0, 1.0, n, n)
    }

    pub fn dof(&self) -> usize {
        self.gx.clamped.dof * self.gz.clamped.dof
    }

    /// Node coordinates (both walls included) in `x1` and `x3`.
    pub fn nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let shift = 0.5 * (self.a1 + self.b1);
        (self.gx.nodes.iter().map(|x| x + shift).collect(), self.gz.nodes.clone())
    }

    fn as_matrix(&self, psi: &DVector<f64>) -> DMatrix<f64> {
        let (nx, nz) = (self.gx.clamped.dof, self.gz.clamped.dof);
        DMatrix::from_fn(nx, nz, |i, j| psi[i * nz + j])
    }

    /// Nodal `(w1, w3) = (∂3ψ, −∂1ψ)`, rows indexed by `x1` nodes.
    pub fn velocity(&self, psi: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let p = self.as_matrix(psi);
        let (cx, cz) = (&self.gx.clamped, &self.gz.clamped);
        let w1 = &cx.inject * &p * cz.d1.transpose();
        let w3 = -(&cx.d1 * &p * cz.inject.transpose());
        (w1, w3)
    }

    /// Nodal `∂1w1 + ∂3w3 = ∂1∂3ψ − ∂3∂1ψ`, evaluated in the two orders.
    pub fn divergence(&self, psi: &DVector<f64>) -> DMatrix<f64> {
        let p = self.as_matrix(psi);
        let (dx, dz) = (&self.gx.clamped.d1, &self.gz.clamped.d1);
        dx * (&p * dz.transpose()) - (dx * &p) * dz.transpose()
    }
}

/// `S0`, `S1`, `S2` Grams of a clamped space, with an optional weight on `S0`/`S1`.
fn grams(s: &SubspaceOps, f: impl Fn(f64) -> f64) -> [DMatrix<f64>; 3] {
    let c: Vec<f64> = s.x01.iter().map(|&x| f(x)).collect();
    let one2 = vec![1.0; s.x2.len()];
    [
        SubspaceOps::gram(&s.s0, &s.w01, &c, &s.s0),
        SubspaceOps::gram(&s.s1, &s.w01, &c, &s.s1),
        SubspaceOps::gram(&s.s2, &s.w2, &one2, &s.s2),
    ]
}

fn check_profile(r: &Rect2D, p: &DensityProfile) -> Result<(), DispersionError> {
    if (p.l() - r.l).abs() > 1e-12 * r.l {
        return Err(DispersionError::Unsupported(format!(
            "profile half-width {} does not match the rectangle half-height {}",
            p.l(),
            r.l
        )));
    }
    Ok(())
}

struct Parts {
    num: DMatrix<f64>,
    den: DMatrix<f64>,
    visc: DMatrix<f64>,
    mass: DMatrix<f64>,
}

fn parts(r: &Rect2D, p: &DensityProfile, params: &PhysicalParams, dir: FieldDir) -> Parts {
    let [x0, x1, x2] = grams(&r.gx.clamped, |_| 1.0);
    let [z0, z1, z2] = grams(&r.gz.clamped, |_| 1.0);
    let [z0r, z1r, _] = grams(&r.gz.clamped, |x| p.rho(x));
    let [z0d, _, _] = grams(&r.gz.clamped, |x| p.drho(x));
    let k = |a: &DMatrix<f64>, b: &DMatrix<f64>| a.kronecker(b);
    let mixed = k(&x1, &z1);
    let mut num = k(&x1, &z0d) * params.g;
    let mut mass = k(&x0, &z1r) + k(&x1, &z0r);
    let mut den = match dir {
        FieldDir::X1 => k(&x2, &z0) + &mixed,
        FieldDir::X3 => &mixed + k(&x0, &z2),
    } * params.lambda0;
    let mut visc = (&mixed * 2.0 + k(&x2, &z0) + k(&x0, &z2)) * params.mu;
    for m in [&mut num, &mut den, &mut visc, &mut mass] {
        symmetrize(m);
    }
    Parts { num, den, visc, mass }
}

fn forms_from(r: &Rect2D, parts: Parts, dir: FieldDir, m: f64) -> ModeForms {
    let Parts { num, den, visc, mass } = parts;
    let mut e = &num - &den * (m * m);
    symmetrize(&mut e);
    ModeForms {
        kind: FormKind::Bounded2D(dir),
        mode: ModeSpec::new(r.b1 - r.a1, 0, 0).with_field(dir, m),
        e,
        v: visc,
        j: mass,
        d: Some(den),
        layout: vec![Block { field: Field::Psi, offset: 0, len: r.dof() }],
        asymmetry: 0.0,
    }
}

/// Numerator `g∫ρ̄'(∂1ψ)²` in `e`, denominator `λ0∫|∂_i∇ψ|²` in `d`,
/// `v = μ∫|∇w|²`, `j = ∫ρ̄|∇ψ|²`.
pub fn assemble_2d_quotient(
    r: &Rect2D,
    p: &DensityProfile,
    params: &PhysicalParams,
    dir: FieldDir,
) -> Result<ModeForms, DispersionError> {
    check_profile(r, p)?;
    Ok(forms_from(r, parts(r, p, params, dir), dir, 0.0))
}

/// `m_C^i = √max(0, sup num/den)` on the rectangle.
pub fn critical_2d(
    r: &Rect2D,
    p: &DensityProfile,
    params: &PhysicalParams,
    dir: FieldDir,
) -> Result<CriticalReport, DispersionError> {
    let f = assemble_2d_quotient(r, p, params, dir)?;
    let d = f.d.as_ref().expect("2D quotient forms carry a denominator");
    let q = lambda_max(&f.e, d)?;
    let cert = lambda_max(&f.e, &f.j)?;
    let value = crate::eigcore::ExtReal::Finite(q.max(0.0).sqrt());
    Ok(CriticalReport {
        kind: CriticalKind::Bounded2D(dir),
        per_mode: vec![ModeValue { mode: f.mode, k: 0.0, value, certificate: Some(cert), note: None }],
        aggregate: value,
        argmax: Some(0),
        infinite: false,
        reference: None,
        monotone_in_k: None,
        max_asymmetry: f.asymmetry,
    })
}

/// Growth forms `E = g∫ρ̄'(∂1ψ)² − λ0m²∫|∂_i∇ψ|²` on the rectangle.
pub fn assemble_2d_growth(
    r: &Rect2D,
    p: &DensityProfile,
    params: &PhysicalParams,
    m: f64,
    dir: FieldDir,
) -> Result<ModeForms, DispersionError> {
    check_profile(r, p)?;
    Ok(forms_from(r, parts(r, p, params, dir), dir, m))
}

pub fn growth_rate_2d(
    r: &Rect2D,
    p: &DensityProfile,
    params: &PhysicalParams,
    m: f64,
    dir: FieldDir,
    opts: &GrowthOptions,
) -> Result<DispersionResult, DispersionError> {
    let forms = assemble_2d_growth(r, p, params, m, dir)?;
    solve_growth_rate(&forms, opts)
}
