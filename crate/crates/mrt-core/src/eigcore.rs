//! Dense generalized symmetric eigenproblems `A v = λ B v` with `B` positive definite.
//!
//! Cholesky reduction `L⁻¹ A L⁻ᵀ` followed by a symmetric tridiagonal eigensolve. The
//! factorizations run on `faer` in serial mode, so identical inputs give bit-identical
//! outputs regardless of the host thread pool.

use std::fmt;

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigError {
    #[error("B is not positive definite (Cholesky failed)")]
    NotPositiveDefinite,
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("D is not positive semidefinite (min eigenvalue {min:e}, norm {norm:e})")]
    NotPsd { min: f64, norm: f64 },
    #[error("bracket exhausted at ceiling {ceiling:e} (g = {g:e})")]
    BracketExhausted { ceiling: f64, g: f64 },
}

/// Eigenpairs in ascending order with `B`-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct GEigResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    /// `max_k |A v − λ B v| / (|A||v| + |λ||B||v|)` in infinity norms.
    pub residual_norm: f64,
}

/// A value that may be `+∞` (an unbounded supremum).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInf,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn value(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a.max(b)),
            _ => ExtReal::PosInf,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => f.write_str("inf"),
        }
    }
}

fn serial() {
    faer::set_global_parallelism(faer::Parallelism::None);
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a.read(i, j))
}

/// Infinity (max row sum) norm.
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `max|A − Aᵀ| / max|A|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..j {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// `(M + Mᵀ)/2` in place.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn check_square(a: &DMatrix<f64>, name: &str) -> Result<(), EigError> {
    if a.nrows() != a.ncols() {
        return Err(EigError::DimensionMismatch(format!("{name} is {}x{}", a.nrows(), a.ncols())));
    }
    Ok(())
}

const SYM_TOL: f64 = 1e-10;

/// Lower Cholesky factor of `B`, used to reduce pencils `(A, B)` to standard form.
#[derive(Debug, Clone)]
pub struct CholeskyPencil {
    l: Mat<f64>,
}

impl CholeskyPencil {
    pub fn new(b: &DMatrix<f64>) -> Result<Self, EigError> {
        check_square(b, "B")?;
        serial();
        let bf = to_faer(b);
        let chol = bf.cholesky(Side::Lower).map_err(|_| EigError::NotPositiveDefinite)?;
        Ok(Self { l: chol.compute_l() })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// `L⁻¹ A L⁻ᵀ`, symmetrized.
    pub fn reduce(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        serial();
        let mut x = to_faer(a);
        self.l.solve_lower_triangular_in_place(x.as_mut());
        let mut y = x.transpose().to_owned();
        self.l.solve_lower_triangular_in_place(y.as_mut());
        let mut out = from_faer(y.as_ref());
        symmetrize(&mut out);
        out
    }

    /// `x = L⁻ᵀ y`: maps a standard-form eigenvector back to the pencil.
    pub fn lift(&self, y: &DVector<f64>) -> DVector<f64> {
        serial();
        let mut x = Mat::from_fn(y.len(), 1, |i, _| y[i]);
        self.l.transpose().solve_upper_triangular_in_place(x.as_mut());
        DVector::from_fn(y.len(), |i, _| x.read(i, 0))
    }

    pub fn lift_matrix(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        serial();
        let mut x = to_faer(y);
        self.l.transpose().solve_upper_triangular_in_place(x.as_mut());
        from_faer(x.as_ref())
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    serial();
    let mut v = to_faer(a).selfadjoint_eigenvalues(Side::Lower);
    v.sort_by(f64::total_cmp);
    v
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.
pub fn sym_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    serial();
    let evd = to_faer(a).selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s().column_vector();
    let u = evd.u();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s.read(i).total_cmp(&s.read(j)));
    let vals = order.iter().map(|&i| s.read(i)).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| u.read(r, order[c]));
    (vals, vecs)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max_sym(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn solve_gsym(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<GEigResult, EigError> {
    check_square(a, "A")?;
    if a.nrows() != b.nrows() || b.nrows() != b.ncols() {
        return Err(EigError::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let asym = asymmetry(a);
    if asym > SYM_TOL {
        return Err(EigError::NotSymmetric(asym));
    }
    let pencil = CholeskyPencil::new(b)?;
    let (vals, y) = sym_eigen(&pencil.reduce(a));
    let vecs = pencil.lift_matrix(&y);

    let (na, nb) = (norm_inf(a), norm_inf(b));
    let av = a * &vecs;
    let bv = b * &vecs;
    let mut worst = 0.0f64;
    for (k, &lam) in vals.iter().enumerate() {
        let r = (av.column(k) - bv.column(k) * lam).amax();
        let v = vecs.column(k).amax();
        let denom = na * v + lam.abs() * nb * v;
        if denom > 0.0 {
            worst = worst.max(r / denom);
        }
    }
    Ok(GEigResult { eigenvalues: vals, eigenvectors: vecs, residual_norm: worst })
}

/// Largest generalized eigenvalue and its `B`-normalized eigenvector.
pub fn max_rayleigh(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(f64, DVector<f64>), EigError> {
    check_square(a, "A")?;
    let pencil = CholeskyPencil::new(b)?;
    let (vals, y) = sym_eigen(&pencil.reduce(a));
    let k = vals.len() - 1;
    let x = pencil.lift(&y.column(k).into_owned());
    Ok((vals[k], x))
}

/// Largest generalized eigenvalue only.
pub fn lambda_max(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, EigError> {
    check_square(a, "A")?;
    let pencil = CholeskyPencil::new(b)?;
    Ok(lambda_max_sym(&pencil.reduce(a)))
}

/// Controls for [`psd_ratio_sup`].
#[derive(Debug, Clone, Copy)]
pub struct RatioOptions {
    /// Largest `|c|` explored while expanding the bracket.
    pub ceiling: f64,
    /// Relative bracket width at which bisection stops.
    pub rtol: f64,
    /// `N` restricted to `ker D` must exceed `g_tol ‖N‖` for the supremum to count as `+∞`.
    pub g_tol: f64,
    /// Eigenvalues of the reduced `D` below `kernel_tol · λ_max(D)` span its kernel.
    pub kernel_tol: f64,
    /// `D` eigenvalues down to `−psd_tol ‖D‖` are accepted.
    pub psd_tol: f64,
}

impl Default for RatioOptions {
    fn default() -> Self {
        Self { ceiling: 1e12, rtol: 1e-12, g_tol: 1e-10, kernel_tol: 1e-12, psd_tol: 1e-10 }
    }
}

/// `sup N(w)/D(w)` over `D(w) > 0`, as `inf{c : N − cD ⪯ 0}`.
///
/// Bisection on `g(c) = λ_max(N − cD; B)`, nonincreasing because `D ⪰ 0`. Returns `+∞`
/// when `N` is positive on the kernel of `D`, or when `g` stays positive up to the ceiling.
pub fn psd_ratio_sup(
    n: &DMatrix<f64>,
    d: &DMatrix<f64>,
    b: &DMatrix<f64>,
    bracket: (f64, f64),
    opts: &RatioOptions,
) -> Result<ExtReal, EigError> {
    check_square(n, "N")?;
    check_square(d, "D")?;
    if n.shape() != d.shape() || n.shape() != b.shape() {
        return Err(EigError::DimensionMismatch("N, D, B must have equal shapes".into()));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) {
        return Err(EigError::DimensionMismatch(format!("empty bracket ({lo}, {hi})")));
    }
    let dn = d.amax();
    if dn > 0.0 {
        let dmin = sym_eigenvalues(d)[0];
        if dmin < -opts.psd_tol * norm_inf(d) {
            return Err(EigError::NotPsd { min: dmin, norm: norm_inf(d) });
        }
    }
    let pencil = CholeskyPencil::new(b)?;
    let nt = pencil.reduce(n);
    let dt = pencil.reduce(d);
    let (nn, nd) = (norm_inf(&nt), norm_inf(&dt));
    // N positive somewhere on ker D: the supremum is +∞ whatever the rounding at large c.
    let (dvals, dvecs) = sym_eigen(&dt);
    let dtop = dvals[dvals.len() - 1].max(0.0);
    let kernel: Vec<usize> = (0..dvals.len()).filter(|&i| dvals[i] <= opts.kernel_tol * dtop).collect();
    if !kernel.is_empty() {
        let q = dvecs.select_columns(&kernel);
        let nk = q.transpose() * &nt * &q;
        if lambda_max_sym(&nk) > opts.g_tol * nn {
            return Ok(ExtReal::PosInf);
        }
    }
    let g = |c: f64| lambda_max_sym(&(&nt - &dt * c));
    let rounding = |c: f64| 64.0 * f64::EPSILON * (nn + c.abs() * nd);
    let positive = |c: f64| g(c) > rounding(c);

    while positive(hi) {
        let width = hi - lo;
        lo = hi;
        hi += 2.0 * width;
        if hi > opts.ceiling {
            return Ok(ExtReal::PosInf);
        }
    }
    while !positive(lo) {
        let width = hi - lo;
        hi = lo;
        lo -= 2.0 * width;
        if lo < -opts.ceiling {
            return Err(EigError::BracketExhausted { ceiling: opts.ceiling, g: g(lo) });
        }
    }
    for _ in 0..400 {
        if hi - lo <= opts.rtol * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if positive(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ExtReal::Finite(hi))
}
