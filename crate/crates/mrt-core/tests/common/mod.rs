//! Independent oracles. Nothing here calls the crate's eigensolvers or quadrature.
#![allow(dead_code)]

use mrt_core::{DMatrix, DVector};

/// Cyclic Jacobi rotations; eigenvalues ascending with matching column eigenvectors.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        let scale: f64 = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let vals = idx.iter().map(|&i| m[(i, i)]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| v[(r, idx[c])]);
    (vals, vecs)
}

/// Lower Cholesky factor by the textbook column algorithm.
pub fn cholesky_lower(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = b[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        assert!(d > 0.0, "oracle Cholesky: matrix not positive definite");
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = b[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    l
}

/// `L⁻¹ M` by forward substitution.
pub fn forward_solve(l: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut x = m.clone();
    for c in 0..m.ncols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

/// Generalized eigenvalues of `(A, B)` via hand Cholesky and Jacobi.
pub fn gen_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let l = cholesky_lower(b);
    let y = forward_solve(&l, a);
    let c = forward_solve(&l, &y.transpose());
    let c = (&c + c.transpose()) * 0.5;
    jacobi_eigen(&c).0
}

/// Largest generalized eigenvalue by shifted inverse iteration then Rayleigh-quotient
/// iteration, using nalgebra LU only.
pub fn ascent_max(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma: f64) -> (f64, DVector<f64>) {
    let n = a.nrows();
    let rq = |x: &DVector<f64>| x.dot(&(a * x)) / x.dot(&(b * x));
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    let lu = (b * sigma - a).lu();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..20000 {
        let y = lu.solve(&(b * &x)).expect("shifted matrix invertible");
        x = &y / y.norm();
        let r = rq(&x);
        if (r - prev).abs() <= 1e-15 * r.abs().max(1.0) {
            break;
        }
        prev = r;
    }
    for _ in 0..4 {
        let r = rq(&x);
        let shifted = (b * (r + 1e-13 * r.abs().max(1e-8)) - a).lu();
        match shifted.solve(&(b * &x)) {
            Some(y) if y.iter().all(|v| v.is_finite()) => {
                let y = &y / y.norm();
                if rq(&y) >= r - 1e-14 * r.abs().max(1.0) {
                    x = y;
                } else {
                    break;
                }
            }
            _ => break,
        }
    }
    (rq(&x), x)
}

/// Gauss–Legendre nodes and weights on `(−1, 1)` by Newton iteration on `P_q`.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    for i in 0..q {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=q {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = q as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Coefficients of `d/dt` of a Chebyshev series.
pub fn cheb_derivative(c: &[f64]) -> Vec<f64> {
    let n = c.len();
    if n <= 1 {
        return vec![0.0];
    }
    let mut d = vec![0.0; n];
    for k in (1..n).rev() {
        d[k - 1] = d.get(k + 1).copied().unwrap_or(0.0) + 2.0 * k as f64 * c[k];
    }
    d[0] *= 0.5;
    d.truncate(n - 1);
    d
}

/// Clenshaw evaluation of `Σ c_k T_k(t)`.
pub fn cheb_eval(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c.first().copied().unwrap_or(0.0)
}

/// Values and `x`-derivatives up to `order` of a Chebyshev series in `t = x/l`.
pub fn series_derivatives(c: &[f64], l: f64, order: usize, xs: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut cur = c.to_vec();
    for m in 0..=order {
        out.push(xs.iter().map(|x| cheb_eval(&cur, x / l) / l.powi(m as i32)).collect());
        cur = cheb_derivative(&cur);
    }
    out
}

/// Deterministic pseudo-random numbers in `(−1, 1)` (SplitMix64).
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    pub fn vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.next())
    }

    pub fn spd(&mut self, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| self.next());
        &a * a.transpose() + DMatrix::identity(n, n) * n as f64
    }

    pub fn sym(&mut self, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| self.next());
        (&a + a.transpose()) * 0.5
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
