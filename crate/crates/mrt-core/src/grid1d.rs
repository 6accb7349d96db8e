//! Vertical discretization of `(−l, l)`.
//!
//! A [`Grid1D`] carries nodes and quadrature for the closed interval together with two
//! reduced subspaces: Dirichlet (`v(±l) = 0`) and clamped (`v(±l) = v'(±l) = 0`).
//! Quadratic forms are assembled from sampling matrices: a reduced vector maps to
//! values, first and second derivatives at quadrature points, and every form is a
//! Gram product `Sᵀ diag(w c) S`, hence symmetric by construction.
//!
//! * `fd2`: uniform nodes; fields are continuous piecewise-linear between nodes and
//!   sampled at two Gauss points per cell. Clamped second derivatives are three-point
//!   differences at the nodes, with a mirrored ghost value `v(−l−h) = v(−l+h)`.
//! * `chebyshev`: Gauss–Lobatto nodes with Clenshaw–Curtis weights for nodal work;
//!   reduced fields use recombined Chebyshev bases that satisfy the boundary
//!   conditions exactly, sampled at Gauss–Legendre points so the forms are
//!   integrated exactly for polynomial coefficients.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::cheb;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("too few nodes: n = {0}, need n >= 8")]
    TooFewNodes(usize),
    #[error("half-width l must be positive and finite, got {0}")]
    BadLength(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Fd2,
    Chebyshev,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Fd2 => "fd2",
            Scheme::Chebyshev => "chebyshev",
        }
    }
}

/// A reduced function space with its sampling and nodal operators.
#[derive(Debug, Clone)]
pub struct SubspaceOps {
    pub dof: usize,
    /// Reduced vector to values at all grid nodes.
    pub inject: DMatrix<f64>,
    /// Weighted least-squares left inverse of `inject`.
    pub restrict: DMatrix<f64>,
    /// Reduced vector to first derivatives at all grid nodes.
    pub d1: DMatrix<f64>,
    /// Reduced vector to second derivatives at all grid nodes.
    pub d2: DMatrix<f64>,
    /// Quadrature points/weights where values and first derivatives are sampled.
    pub x01: Vec<f64>,
    pub w01: Vec<f64>,
    pub s0: DMatrix<f64>,
    pub s1: DMatrix<f64>,
    /// Quadrature points/weights for second derivatives.
    pub x2: Vec<f64>,
    pub w2: Vec<f64>,
    pub s2: DMatrix<f64>,
    /// Chebyshev coefficients in `t = x3/l` of the field (spectral grid only).
    pub coeffs: Option<DMatrix<f64>>,
}

impl SubspaceOps {
    /// `Sₐᵀ diag(w c) S_b` over the shared points of `sa` and `sb`.
    pub fn gram(sa: &DMatrix<f64>, w: &[f64], c: &[f64], sb: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = sb.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= w[i] * c[i];
        }
        sa.transpose() * scaled
    }

    /// Least-squares projection of nodal values onto the subspace.
    pub fn project(&self, nodal: &DVector<f64>) -> DVector<f64> {
        &self.restrict * nodal
    }
}

#[derive(Debug, Clone)]
pub struct Grid1D {
    pub l: f64,
    /// Interior node count.
    pub n: usize,
    pub scheme: Scheme,
    /// All nodes on `[−l, l]` including both endpoints, ascending.
    pub nodes: Vec<f64>,
    /// Quadrature weights at `nodes` (trapezoid or Clenshaw–Curtis).
    pub quad: Vec<f64>,
    /// Full-node differentiation matrices (no boundary condition).
    pub d1_full: DMatrix<f64>,
    pub d2_full: DMatrix<f64>,
    /// Differentiation on interior unknowns with zero boundary values.
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub dirichlet: SubspaceOps,
    pub clamped: SubspaceOps,
}

impl Grid1D {
    pub fn h(&self) -> f64 {
        2.0 * self.l / (self.n + 1) as f64
    }

    /// Interior nodes only.
    pub fn interior(&self) -> &[f64] {
        &self.nodes[1..self.nodes.len() - 1]
    }

    /// Weighted inner product with the nodal quadrature.
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        self.quad.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }
}

/// Boundary conditions of a reduced subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    Dirichlet,
    Clamped,
}

impl Grid1D {
    pub fn space(&self, bc: Bc) -> &SubspaceOps {
        match bc {
            Bc::Dirichlet => &self.dirichlet,
            Bc::Clamped => &self.clamped,
        }
    }

    /// Points and weights on which strong-form residuals are measured: interior nodes
    /// (fd2) or `2N` Gauss–Legendre points (Chebyshev).
    pub fn residual_points(&self) -> (Vec<f64>, Vec<f64>) {
        match self.scheme {
            Scheme::Fd2 => (self.interior().to_vec(), vec![self.h(); self.n]),
            Scheme::Chebyshev => {
                let (t, w) = cheb::gauss_legendre(2 * (self.n + 1));
                (t.iter().map(|t| self.l * t).collect(), w.iter().map(|w| self.l * w).collect())
            }
        }
    }

    /// Derivatives of orders `0..=order` (at most 4) of a reduced field at [`Self::residual_points`].
    ///
    /// Chebyshev fields are evaluated exactly from their coefficients after dropping the
    /// tail below `1e-15` of the largest one, which keeps rounding in the fourth derivative
    /// from growing with `N`. fd2 fields use central stencils with mirrored ghosts: even
    /// for clamped fields, odd for Dirichlet ones.
    pub fn derivatives(&self, bc: Bc, x: &DVector<f64>, order: usize) -> Vec<Vec<f64>> {
        assert!(order <= 4, "derivatives up to fourth order only");
        let space = self.space(bc);
        match self.scheme {
            Scheme::Chebyshev => {
                let b = space.coeffs.as_ref().expect("spectral subspace carries coefficients");
                let c = b * x;
                let cmax = c.amax();
                let last = (0..c.len()).rev().find(|&k| c[k].abs() > 1e-15 * cmax).unwrap_or(0);
                let (pts, _) = self.residual_points();
                let t: Vec<f64> = pts.iter().map(|p| p / self.l).collect();
                let v = cheb::vander_derivatives(&t, last.max(1), order);
                let cc = c.rows(0, last.max(1) + 1).into_owned();
                (0..=order).map(|m| (&v[m] * &cc / self.l.powi(m as i32)).iter().copied().collect()).collect()
            }
            Scheme::Fd2 => {
                let nodal = &space.inject * x;
                let np = nodal.len();
                let sgn = if bc == Bc::Clamped { 1.0 } else { -1.0 };
                let at = |j: isize| -> f64 {
                    if j < 0 {
                        sgn * nodal[(-j) as usize]
                    } else if j >= np as isize {
                        sgn * nodal[(2 * (np as isize - 1) - j) as usize]
                    } else {
                        nodal[j as usize]
                    }
                };
                let h = self.h();
                let mut out = vec![Vec::with_capacity(self.n); order + 1];
                for j in 1..=self.n as isize {
                    let f = [at(j - 2), at(j - 1), at(j), at(j + 1), at(j + 2)];
                    let d = [
                        f[2],
                        (f[3] - f[1]) / (2.0 * h),
                        (f[3] - 2.0 * f[2] + f[1]) / (h * h),
                        (f[4] - 2.0 * f[3] + 2.0 * f[1] - f[0]) / (2.0 * h.powi(3)),
                        (f[4] - 4.0 * f[3] + 6.0 * f[2] - 4.0 * f[1] + f[0]) / h.powi(4),
                    ];
                    for (m, o) in out.iter_mut().enumerate() {
                        o.push(d[m]);
                    }
                }
                out
            }
        }
    }
}

pub fn build_grid(l: f64, n: usize, scheme: Scheme) -> Result<Grid1D, GridError> {
    if !(l.is_finite() && l > 0.0) {
        return Err(GridError::BadLength(l));
    }
    if n < 8 {
        return Err(GridError::TooFewNodes(n));
    }
    Ok(match scheme {
        Scheme::Fd2 => build_fd2(l, n),
        Scheme::Chebyshev => build_chebyshev(l, n),
    })
}

/// The clamped (`H₀²`) operator set of a grid.
pub fn clamped_basis(g: &Grid1D) -> &SubspaceOps {
    &g.clamped
}

fn interior_columns(full: &DMatrix<f64>) -> DMatrix<f64> {
    let m = full.ncols();
    full.columns(1, m - 2).into_owned()
}

fn build_fd2(l: f64, n: usize) -> Grid1D {
    let np = n + 2;
    let h = 2.0 * l / (n + 1) as f64;
    let nodes: Vec<f64> = (0..np).map(|j| -l + j as f64 * h).collect();
    let mut quad = vec![h; np];
    quad[0] = h / 2.0;
    quad[np - 1] = h / 2.0;

    let mut d1_full = DMatrix::zeros(np, np);
    let mut d2_full = DMatrix::zeros(np, np);
    for j in 1..np - 1 {
        d1_full[(j, j - 1)] = -0.5 / h;
        d1_full[(j, j + 1)] = 0.5 / h;
        d2_full[(j, j - 1)] = 1.0 / (h * h);
        d2_full[(j, j)] = -2.0 / (h * h);
        d2_full[(j, j + 1)] = 1.0 / (h * h);
    }
    for (j, s) in [(0usize, 1.0), (np - 1, -1.0)] {
        let k = |o: usize| if s > 0.0 { j + o } else { j - o };
        d1_full[(j, k(0))] = -1.5 * s / h;
        d1_full[(j, k(1))] = 2.0 * s / h;
        d1_full[(j, k(2))] = -0.5 * s / h;
        d2_full[(j, k(0))] = 2.0 / (h * h);
        d2_full[(j, k(1))] = -5.0 / (h * h);
        d2_full[(j, k(2))] = 4.0 / (h * h);
        d2_full[(j, k(3))] = -1.0 / (h * h);
    }
    let d1 = interior_columns(&d1_full);
    let d2 = interior_columns(&d2_full);

    // Piecewise-linear sampling at two Gauss points per cell.
    let gp = [-(1.0 / 3.0f64).sqrt(), (1.0 / 3.0f64).sqrt()];
    let nq = 2 * (n + 1);
    let mut x01 = Vec::with_capacity(nq);
    let mut s0 = DMatrix::zeros(nq, n);
    let mut s1 = DMatrix::zeros(nq, n);
    for e in 0..=n {
        for (q, g) in gp.iter().enumerate() {
            let r = 2 * e + q;
            let t = 0.5 * (1.0 + g);
            x01.push(nodes[e] + t * h);
            for (node, phi, dphi) in [(e, 1.0 - t, -1.0 / h), (e + 1, t, 1.0 / h)] {
                if (1..=n).contains(&node) {
                    s0[(r, node - 1)] += phi;
                    s1[(r, node - 1)] += dphi;
                }
            }
        }
    }
    let w01 = vec![h / 2.0; nq];

    let mut inject = DMatrix::zeros(np, n);
    for j in 0..n {
        inject[(j + 1, j)] = 1.0;
    }
    let restrict = inject.transpose();

    let dirichlet = SubspaceOps {
        dof: n,
        inject: inject.clone(),
        restrict: restrict.clone(),
        d1: d1.clone(),
        d2: d2.clone(),
        x01: x01.clone(),
        w01: w01.clone(),
        s0: s0.clone(),
        s1: s1.clone(),
        x2: nodes.clone(),
        w2: quad.clone(),
        s2: d2.clone(),
        coeffs: None,
    };

    // Clamped: mirrored ghost values make the centred boundary slope vanish.
    let mut c1 = DMatrix::zeros(np, n);
    let mut c2 = DMatrix::zeros(np, n);
    let ghost = |k: isize| -> Option<usize> {
        let k = if k < 0 {
            -k
        } else if k > (n + 1) as isize {
            2 * (n + 1) as isize - k
        } else {
            k
        };
        let k = k as usize;
        if (1..=n).contains(&k) {
            Some(k - 1)
        } else {
            None
        }
    };
    for j in 0..np {
        let ji = j as isize;
        for (o, a1, a2) in [(-1isize, -0.5 / h, 1.0 / (h * h)), (0, 0.0, -2.0 / (h * h)), (1, 0.5 / h, 1.0 / (h * h))] {
            if let Some(c) = ghost(ji + o) {
                c1[(j, c)] += a1;
                c2[(j, c)] += a2;
            }
        }
    }
    let clamped = SubspaceOps {
        dof: n,
        inject,
        restrict,
        d1: c1,
        d2: c2.clone(),
        x01,
        w01,
        s0,
        s1,
        x2: nodes.clone(),
        w2: quad.clone(),
        s2: c2,
        coeffs: None,
    };

    Grid1D { l, n, scheme: Scheme::Fd2, nodes, quad, d1_full, d2_full, d1, d2, dirichlet, clamped }
}

fn build_chebyshev(l: f64, n: usize) -> Grid1D {
    let big_n = n + 1;
    let t = cheb::lobatto_nodes(big_n);
    let nodes: Vec<f64> = t.iter().map(|t| l * t).collect();
    let quad: Vec<f64> = cheb::clenshaw_curtis(big_n).iter().map(|w| l * w).collect();
    let d1_full = cheb::lobatto_diff(big_n) / l;
    let d2_full = &d1_full * &d1_full;
    let d1 = interior_columns(&d1_full);
    let d2 = interior_columns(&d2_full);

    // Gauss–Legendre with N + 3 points integrates degree 2N + 5 exactly: products of two
    // degree-N fields with an affine weight.
    let (tq, wq) = cheb::gauss_legendre(big_n + 3);
    let xq: Vec<f64> = tq.iter().map(|t| l * t).collect();
    let wq: Vec<f64> = wq.iter().map(|w| l * w).collect();
    let vq = cheb::vander_derivatives(&tq, big_n, 2);
    let vn = cheb::vander_derivatives(&t, big_n, 2);

    let dirichlet_coeffs = {
        let mut b = DMatrix::zeros(big_n + 1, big_n - 1);
        for k in 0..big_n - 1 {
            b[(k, k)] = 1.0;
            b[(k + 2, k)] = -1.0;
        }
        b
    };
    let clamped_coeffs = {
        let mut b = DMatrix::zeros(big_n + 1, big_n - 3);
        for k in 0..big_n - 3 {
            let kf = k as f64;
            b[(k, k)] = 1.0;
            b[(k + 2, k)] = -2.0 * (kf + 2.0) / (kf + 3.0);
            b[(k + 4, k)] = (kf + 1.0) / (kf + 3.0);
        }
        b
    };

    let make = |mut b: DMatrix<f64>, norm_order: usize| -> SubspaceOps {
        let s = [&vq[0] * &b, &vq[1] * &b / l, &vq[2] * &b / (l * l)];
        // Unit energy-norm columns keep the pencils well scaled.
        let scale: Vec<f64> = (0..b.ncols())
            .map(|j| {
                let e: f64 = (0..xq.len()).map(|i| wq[i] * s[norm_order][(i, j)].powi(2)).sum();
                1.0 / e.sqrt()
            })
            .collect();
        for (j, sc) in scale.iter().enumerate() {
            b.column_mut(j).scale_mut(*sc);
        }
        let s0 = &vq[0] * &b;
        let s1 = &vq[1] * &b / l;
        let s2 = &vq[2] * &b / (l * l);
        let inject = &vn[0] * &b;
        let d1 = &vn[1] * &b / l;
        let d2 = &vn[2] * &b / (l * l);
        let wdiag = DMatrix::from_diagonal(&DVector::from_vec(quad.clone()));
        let normal = inject.transpose() * &wdiag * &inject;
        let restrict = normal
            .cholesky()
            .expect("nodal mass of a recombined basis is positive definite")
            .solve(&(inject.transpose() * &wdiag));
        SubspaceOps {
            dof: b.ncols(),
            inject,
            restrict,
            d1,
            d2,
            x01: xq.clone(),
            w01: wq.clone(),
            s0,
            s1,
            x2: xq.clone(),
            w2: wq.clone(),
            s2,
            coeffs: Some(b),
        }
    };
    let dirichlet = make(dirichlet_coeffs, 1);
    let clamped = make(clamped_coeffs, 2);

    Grid1D { l, n, scheme: Scheme::Chebyshev, nodes, quad, d1_full, d2_full, d1, d2, dirichlet, clamped }
}
