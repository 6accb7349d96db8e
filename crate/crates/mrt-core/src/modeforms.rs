//! Quadratic forms of one horizontal Fourier mode `ξ ∈ (L⁻¹ℤ)²` on the periodic slab.
//!
//! Incompressible fields use the real unknowns `(v3, φ)`: `û3 = v3`, the component
//! parallel to `ξ` is `i v3'/|ξ|` (so `div û = 0` holds identically), and the
//! perpendicular one is `i φ`. Compressible fields use `(v1, v2, v3)` with
//! `û = (i v1, i v2, v3)`, which makes `div û = d(v) = −ξ1 v1 − ξ2 v2 + v3'` real.
//! Every matrix is a sum of Gram products on the grid's quadrature points.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::eigcore::{asymmetry, symmetrize};
use crate::grid1d::{Grid1D, SubspaceOps};
use crate::profiles::{CompressibleEquilibrium, DensityProfile, PhysicalParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModeError {
    #[error("ξ = (0, 0) has no divergence-free parametrization")]
    ZeroMode,
    #[error("horizontal period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("assembled form is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
}

/// Direction `i` of the background field `m e_i` (incompressible problem).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldDir {
    X1,
    X3,
}

impl FieldDir {
    pub fn index(self) -> u8 {
        match self {
            FieldDir::X1 => 1,
            FieldDir::X3 => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    Incompressible(FieldDir),
    Compressible,
    CrForms,
    Quotient(FieldDir),
    /// Streamfunction forms on a rectangle; `d` holds the quotient denominator.
    Bounded2D(FieldDir),
}

/// A reduced unknown field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Field {
    V1,
    V2,
    V3,
    Phi,
    /// Streamfunction of the bounded 2D problem.
    Psi,
}

/// Contiguous slice of the reduced vector holding one field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub field: Field,
    pub offset: usize,
    pub len: usize,
}

/// One horizontal mode `ξ = (j1, j2)/L` and, for the incompressible problem, the field `m e_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpec {
    pub period: f64,
    pub j1: i64,
    pub j2: i64,
    pub dir: FieldDir,
    pub m: f64,
}

impl ModeSpec {
    pub fn new(period: f64, j1: i64, j2: i64) -> Self {
        Self { period, j1, j2, dir: FieldDir::X3, m: 0.0 }
    }

    pub fn with_field(mut self, dir: FieldDir, m: f64) -> Self {
        self.dir = dir;
        self.m = m;
        self
    }

    pub fn xi(&self) -> (f64, f64) {
        (self.j1 as f64 / self.period, self.j2 as f64 / self.period)
    }

    /// `|ξ|`.
    pub fn k(&self) -> f64 {
        let (a, b) = self.xi();
        a.hypot(b)
    }

    fn check(&self, need_nonzero: bool) -> Result<(), ModeError> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(ModeError::BadPeriod(self.period));
        }
        if need_nonzero && self.j1 == 0 && self.j2 == 0 {
            return Err(ModeError::ZeroMode);
        }
        Ok(())
    }
}

/// Assembled forms of one mode.
///
/// `e`: energy form (or quotient numerator), `v`: dissipation, `j`: mass `∫ρ̄|w|²`,
/// `d`: C_r or quotient denominator when the kind has one.
#[derive(Debug, Clone)]
pub struct ModeForms {
    pub kind: FormKind,
    pub mode: ModeSpec,
    pub e: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub d: Option<DMatrix<f64>>,
    pub layout: Vec<Block>,
    /// Largest relative asymmetry seen before symmetrization.
    pub asymmetry: f64,
}

impl ModeForms {
    pub fn dof(&self) -> usize {
        self.j.nrows()
    }

    pub fn block(&self, field: Field) -> Option<Block> {
        self.layout.iter().copied().find(|b| b.field == field)
    }

    /// Sub-forms on the listed fields only (in layout order).
    pub fn restrict_to(&self, fields: &[Field]) -> ModeForms {
        let kept: Vec<Block> = self.layout.iter().copied().filter(|b| fields.contains(&b.field)).collect();
        let idx: Vec<usize> = kept.iter().flat_map(|b| b.offset..b.offset + b.len).collect();
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]);
        let mut offset = 0;
        let layout = kept
            .iter()
            .map(|b| {
                let nb = Block { field: b.field, offset, len: b.len };
                offset += b.len;
                nb
            })
            .collect();
        ModeForms {
            kind: self.kind,
            mode: self.mode,
            e: pick(&self.e),
            v: pick(&self.v),
            j: pick(&self.j),
            d: self.d.as_ref().map(pick),
            layout,
            asymmetry: self.asymmetry,
        }
    }
}

/// Gram matrices of the incompressible building blocks.
///
/// `c_ab(f) = ∫ f v^(a) v^(b)` on the clamped space, `d_ab(f)` likewise for φ.
#[derive(Debug, Clone)]
pub(crate) struct IncGrams {
    pub nc: usize,
    pub nd: usize,
    pub c00: DMatrix<f64>,
    pub c11: DMatrix<f64>,
    pub c22: DMatrix<f64>,
    pub c00_rho: DMatrix<f64>,
    pub c11_rho: DMatrix<f64>,
    pub c00_drho: DMatrix<f64>,
    pub c00_drho2: DMatrix<f64>,
    pub d00: DMatrix<f64>,
    pub d11: DMatrix<f64>,
    pub d00_rho: DMatrix<f64>,
}

fn gram0(s: &SubspaceOps, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let c: Vec<f64> = s.x01.iter().map(|&x| f(x)).collect();
    SubspaceOps::gram(&s.s0, &s.w01, &c, &s.s0)
}

fn gram1(s: &SubspaceOps, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let c: Vec<f64> = s.x01.iter().map(|&x| f(x)).collect();
    SubspaceOps::gram(&s.s1, &s.w01, &c, &s.s1)
}

fn gram2(s: &SubspaceOps, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let c: Vec<f64> = s.x2.iter().map(|&x| f(x)).collect();
    SubspaceOps::gram(&s.s2, &s.w2, &c, &s.s2)
}

impl IncGrams {
    pub fn new(p: &DensityProfile, g1: &Grid1D) -> Self {
        let (c, d) = (&g1.clamped, &g1.dirichlet);
        let one = |_: f64| 1.0;
        Self {
            nc: c.dof,
            nd: d.dof,
            c00: gram0(c, one),
            c11: gram1(c, one),
            c22: gram2(c, one),
            c00_rho: gram0(c, |x| p.rho(x)),
            c11_rho: gram1(c, |x| p.rho(x)),
            c00_drho: gram0(c, |x| p.drho(x)),
            c00_drho2: gram0(c, |x| p.drho(x).powi(2)),
            d00: gram0(d, one),
            d11: gram1(d, one),
            d00_rho: gram0(d, |x| p.rho(x)),
        }
    }

    pub fn layout(&self) -> Vec<Block> {
        vec![
            Block { field: Field::V3, offset: 0, len: self.nc },
            Block { field: Field::Phi, offset: self.nc, len: self.nd },
        ]
    }

    pub fn blockdiag(&self, a: DMatrix<f64>, b: DMatrix<f64>) -> DMatrix<f64> {
        let n = self.nc + self.nd;
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (self.nc, self.nc)).copy_from(&a);
        m.view_mut((self.nc, self.nc), (self.nd, self.nd)).copy_from(&b);
        m
    }

    /// `∫ρ̄|w|²`.
    pub fn mass(&self, k2: f64) -> DMatrix<f64> {
        self.blockdiag(&self.c00_rho + &self.c11_rho / k2, self.d00_rho.clone())
    }

    /// `∫|w|²`.
    pub fn l2(&self, k2: f64) -> DMatrix<f64> {
        self.blockdiag(&self.c00 + &self.c11 / k2, self.d00.clone())
    }

    /// `∫|∂3 w|²`.
    pub fn d3(&self, k2: f64) -> DMatrix<f64> {
        self.blockdiag(&self.c11 + &self.c22 / k2, self.d11.clone())
    }

    /// `∫|∂_i w|²`.
    pub fn di(&self, dir: FieldDir, xi1: f64, k2: f64) -> DMatrix<f64> {
        match dir {
            FieldDir::X3 => self.d3(k2),
            FieldDir::X1 => self.l2(k2) * (xi1 * xi1),
        }
    }

    /// `∫|∇w|²`.
    pub fn grad(&self, k2: f64) -> DMatrix<f64> {
        self.l2(k2) * k2 + self.d3(k2)
    }

    /// `g∫ρ̄' w3²`.
    pub fn gravity(&self, g: f64) -> DMatrix<f64> {
        self.blockdiag(&self.c00_drho * g, DMatrix::zeros(self.nd, self.nd))
    }
}

fn finish(mut m: DMatrix<f64>, worst: &mut f64) -> DMatrix<f64> {
    *worst = worst.max(asymmetry(&m));
    symmetrize(&mut m);
    m
}

pub fn assemble_incompressible(
    mode: &ModeSpec,
    p: &DensityProfile,
    params: &PhysicalParams,
    g1: &Grid1D,
) -> Result<ModeForms, ModeError> {
    mode.check(true)?;
    let gr = IncGrams::new(p, g1);
    let (xi1, _) = mode.xi();
    let k2 = mode.k().powi(2);
    let m2 = mode.m * mode.m;
    let mut worst = 0.0;
    let e = gr.gravity(params.g) - gr.di(mode.dir, xi1, k2) * (params.lambda0 * m2);
    let v = gr.grad(k2) * params.mu;
    Ok(ModeForms {
        kind: FormKind::Incompressible(mode.dir),
        mode: *mode,
        e: finish(e, &mut worst),
        v: finish(v, &mut worst),
        j: finish(gr.mass(k2), &mut worst),
        d: None,
        layout: gr.layout(),
        asymmetry: worst,
    })
}

/// Numerator `g∫ρ̄'w3²` in `e`, denominator `λ0∫|∂_i w|²` in `d`.
pub fn assemble_quotient(
    mode: &ModeSpec,
    p: &DensityProfile,
    params: &PhysicalParams,
    g1: &Grid1D,
    dir: FieldDir,
) -> Result<ModeForms, ModeError> {
    mode.check(true)?;
    let gr = IncGrams::new(p, g1);
    let (xi1, _) = mode.xi();
    let k2 = mode.k().powi(2);
    let mut worst = 0.0;
    Ok(ModeForms {
        kind: FormKind::Quotient(dir),
        mode: ModeSpec { dir, ..*mode },
        e: finish(gr.gravity(params.g), &mut worst),
        v: finish(gr.grad(k2) * params.mu, &mut worst),
        j: finish(gr.mass(k2), &mut worst),
        d: Some(finish(gr.di(dir, xi1, k2) * params.lambda0, &mut worst)),
        layout: gr.layout(),
        asymmetry: worst,
    })
}

/// Compressible operators sampled at the Dirichlet quadrature points.
///
/// Each maps the stacked `(v1, v2, v3)` to point values of a scalar integrand factor.
#[derive(Debug, Clone)]
pub(crate) struct CompOps {
    pub nd: usize,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    /// Components `v1, v2, v3` and their `x3` derivatives.
    pub val: [DMatrix<f64>; 3],
    pub der: [DMatrix<f64>; 3],
    /// `d(v) = −ξ1 v1 − ξ2 v2 + v3'`.
    pub div: DMatrix<f64>,
    /// `−ξ2 v2 + v3'`.
    pub w_op: DMatrix<f64>,
}

impl CompOps {
    pub fn new(mode: &ModeSpec, g1: &Grid1D) -> Self {
        let s = &g1.dirichlet;
        let nd = s.dof;
        let nq = s.x01.len();
        let (xi1, xi2) = mode.xi();
        let place = |src: &DMatrix<f64>, slot: usize, scale: f64| {
            let mut m = DMatrix::zeros(nq, 3 * nd);
            m.view_mut((0, slot * nd), (nq, nd)).copy_from(&(src * scale));
            m
        };
        let val = [place(&s.s0, 0, 1.0), place(&s.s0, 1, 1.0), place(&s.s0, 2, 1.0)];
        let der = [place(&s.s1, 0, 1.0), place(&s.s1, 1, 1.0), place(&s.s1, 2, 1.0)];
        let div = &val[0] * (-xi1) + &val[1] * (-xi2) + &der[2];
        let w_op = &val[1] * (-xi2) + &der[2];
        Self { nd, x: s.x01.clone(), w: s.w01.clone(), val, der, div, w_op }
    }

    pub fn gram(&self, a: &DMatrix<f64>, f: impl Fn(f64) -> f64, b: &DMatrix<f64>) -> DMatrix<f64> {
        let c: Vec<f64> = self.x.iter().map(|&x| f(x)).collect();
        SubspaceOps::gram(a, &self.w, &c, b)
    }

    pub fn layout(&self) -> Vec<Block> {
        [Field::V1, Field::V2, Field::V3]
            .iter()
            .enumerate()
            .map(|(i, &field)| Block { field, offset: i * self.nd, len: self.nd })
            .collect()
    }

    pub fn mass(&self, p: &DensityProfile) -> DMatrix<f64> {
        (0..3).map(|c| self.gram(&self.val[c], |x| p.rho(x), &self.val[c])).fold(self.zero(), |a, b| a + b)
    }

    pub fn l2(&self) -> DMatrix<f64> {
        (0..3).map(|c| self.gram(&self.val[c], |_| 1.0, &self.val[c])).fold(self.zero(), |a, b| a + b)
    }

    pub fn h1_semi(&self) -> DMatrix<f64> {
        (0..3).map(|c| self.gram(&self.der[c], |_| 1.0, &self.der[c])).fold(self.zero(), |a, b| a + b)
    }

    /// `∫|∇w|² = |ξ|²∫|w|² + ∫|w'|²`.
    pub fn grad(&self, k2: f64) -> DMatrix<f64> {
        self.l2() * k2 + self.h1_semi()
    }

    pub fn div_sq(&self) -> DMatrix<f64> {
        self.gram(&self.div, |_| 1.0, &self.div)
    }

    /// `∫|∂1 w|² = ξ1²∫|w|²`.
    pub fn d1(&self, xi1: f64) -> DMatrix<f64> {
        self.l2() * (xi1 * xi1)
    }

    fn zero(&self) -> DMatrix<f64> {
        DMatrix::zeros(3 * self.nd, 3 * self.nd)
    }

    pub fn energy(&self, mode: &ModeSpec, eq: &CompressibleEquilibrium) -> DMatrix<f64> {
        let p = &eq.profile;
        let prm = &eq.params;
        let (xi1, _) = mode.xi();
        let v2 = &self.val[1];
        let v3 = &self.val[2];
        let cross = self.gram(&self.div, |x| prm.g * p.rho(x), v3);
        self.gram(v3, |x| prm.g * p.drho(x), v3) + &cross + cross.transpose()
            - self.gram(&self.div, |x| eq.p_rho(x), &self.div)
            - self.gram(v2, |x| prm.lambda0 * eq.mc_sq(x) * xi1 * xi1, v2)
            - self.gram(v3, |x| prm.lambda0 * eq.mc_sq(x) * xi1 * xi1, v3)
            - self.gram(&self.w_op, |x| prm.lambda0 * eq.mc_sq(x), &self.w_op)
    }

    /// `λ0∫(ξ1² v2² + ξ1² v3² + (−ξ2 v2 + v3')²)`.
    pub fn cr_denominator(&self, mode: &ModeSpec, lambda0: f64) -> DMatrix<f64> {
        let (xi1, _) = mode.xi();
        (self.gram(&self.val[1], |_| xi1 * xi1, &self.val[1])
            + self.gram(&self.val[2], |_| xi1 * xi1, &self.val[2])
            + self.gram(&self.w_op, |_| 1.0, &self.w_op))
            * lambda0
    }
}

fn compressible_parts(
    mode: &ModeSpec,
    eq: &CompressibleEquilibrium,
    g1: &Grid1D,
    kind: FormKind,
) -> Result<ModeForms, ModeError> {
    mode.check(false)?;
    let ops = CompOps::new(mode, g1);
    let prm = &eq.params;
    let k2 = mode.k().powi(2);
    let mut worst = 0.0;
    let e = ops.energy(mode, eq);
    let v = ops.grad(k2) * prm.mu + ops.div_sq() * prm.mu0;
    let d = match kind {
        FormKind::CrForms => Some(finish(ops.cr_denominator(mode, prm.lambda0), &mut worst)),
        _ => None,
    };
    Ok(ModeForms {
        kind,
        mode: *mode,
        e: finish(e, &mut worst),
        v: finish(v, &mut worst),
        j: finish(ops.mass(&eq.profile), &mut worst),
        d,
        layout: ops.layout(),
        asymmetry: worst,
    })
}

pub fn assemble_compressible(
    mode: &ModeSpec,
    eq: &CompressibleEquilibrium,
    g1: &Grid1D,
) -> Result<ModeForms, ModeError> {
    compressible_parts(mode, eq, g1, FormKind::Compressible)
}

/// `E_c` with the C_r denominator in `d`.
pub fn assemble_cr_forms(mode: &ModeSpec, eq: &CompressibleEquilibrium, g1: &Grid1D) -> Result<ModeForms, ModeError> {
    compressible_parts(mode, eq, g1, FormKind::CrForms)
}
