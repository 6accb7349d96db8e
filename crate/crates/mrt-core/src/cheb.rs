//! Chebyshev polynomials, Gauss–Lobatto nodes, and the two quadratures used by the spectral grid.

use std::f64::consts::PI;

use nalgebra::DMatrix;

/// Gauss–Lobatto points `t_j = −cos(πj/N)`, ascending, `j = 0..=N`.
pub fn lobatto_nodes(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|j| {
            // Symmetric evaluation keeps the midpoint and mirror pairs exact.
            let t = (PI * (2.0 * j as f64 - n as f64) / (2.0 * n as f64)).sin();
            if 2 * j == n {
                0.0
            } else {
                t
            }
        })
        .collect()
}

/// Clenshaw–Curtis weights for the Lobatto points on `[−1, 1]`.
pub fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    let theta: Vec<f64> = (0..=n).map(|j| PI * j as f64 / n as f64).collect();
    let nn = n as f64;
    if n % 2 == 0 {
        w[0] = 1.0 / (nn * nn - 1.0);
        w[n] = w[0];
    } else {
        w[0] = 1.0 / (nn * nn);
        w[n] = w[0];
    }
    for j in 1..n {
        let mut v = 1.0;
        if n % 2 == 0 {
            for k in 1..n / 2 {
                v -= 2.0 * (2.0 * k as f64 * theta[j]).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
            v -= (nn * theta[j]).cos() / (nn * nn - 1.0);
        } else {
            for k in 1..=(n - 1) / 2 {
                v -= 2.0 * (2.0 * k as f64 * theta[j]).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
        }
        w[j] = 2.0 * v / nn;
    }
    w
}

/// Gauss–Legendre nodes (ascending) and weights on `[−1, 1]` by Newton iteration.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; q];
    let mut w = vec![0.0; q];
    let m = q.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(q, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(q, z);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[q - 1 - i] = z;
        w[i] = wi;
        w[q - 1 - i] = wi;
    }
    if q % 2 == 1 {
        x[q / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// `T_k^{(m)}(t_i)` for `k = 0..=deg`, `m = 0..=order`; entry `[m]` is `len(t) × (deg+1)`.
pub fn vander_derivatives(t: &[f64], deg: usize, order: usize) -> Vec<DMatrix<f64>> {
    let mut out: Vec<DMatrix<f64>> = (0..=order).map(|_| DMatrix::zeros(t.len(), deg + 1)).collect();
    for (i, &x) in t.iter().enumerate() {
        for m in 0..=order {
            // T^{(m)}_{k+1} = 2m T^{(m-1)}_k + 2x T^{(m)}_k − T^{(m)}_{k−1}
            let mut prev = if m == 0 { 1.0 } else { 0.0 };
            out[m][(i, 0)] = prev;
            if deg == 0 {
                continue;
            }
            let mut cur = match m {
                0 => x,
                1 => 1.0,
                _ => 0.0,
            };
            out[m][(i, 1)] = cur;
            for k in 1..deg {
                let lower = if m == 0 { 0.0 } else { out[m - 1][(i, k)] };
                let next = 2.0 * m as f64 * lower + 2.0 * x * cur - prev;
                prev = cur;
                cur = next;
                out[m][(i, k + 1)] = cur;
            }
        }
    }
    out
}

/// Collocation first-derivative matrix on the Lobatto points of [`lobatto_nodes`].
pub fn lobatto_diff(n: usize) -> DMatrix<f64> {
    let x = lobatto_nodes(n);
    let c: Vec<f64> = (0..=n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            if i == 0 || i == n {
                2.0 * s
            } else {
                s
            }
        })
        .collect();
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        let mut row = 0.0;
        for j in 0..=n {
            if i != j {
                let v = c[i] / c[j] / (x[i] - x[j]);
                d[(i, j)] = v;
                row += v;
            }
        }
        d[(i, i)] = -row;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_high_degree_monomials() {
        let (x, w) = gauss_legendre(20);
        for p in 0..40 {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
            let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
            assert!((s - exact).abs() < 1e-14, "degree {p}: {s} vs {exact}");
        }
    }

    #[test]
    fn clenshaw_curtis_is_exact_to_degree_n() {
        for n in [8usize, 9, 16] {
            let x = lobatto_nodes(n);
            let w = clenshaw_curtis(n);
            for p in 0..=n {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((s - exact).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn vander_derivatives_match_closed_forms() {
        let t = [-0.9, -0.2, 0.4, 0.77];
        let v = vander_derivatives(&t, 6, 4);
        for (i, &x) in t.iter().enumerate() {
            // T_4 = 8x^4 − 8x^2 + 1
            assert!((v[0][(i, 4)] - (8.0 * x.powi(4) - 8.0 * x * x + 1.0)).abs() < 1e-14);
            assert!((v[1][(i, 4)] - (32.0 * x.powi(3) - 16.0 * x)).abs() < 1e-13);
            assert!((v[2][(i, 4)] - (96.0 * x * x - 16.0)).abs() < 1e-12);
            assert!((v[3][(i, 4)] - 192.0 * x).abs() < 1e-12);
            assert!((v[4][(i, 4)] - 192.0).abs() < 1e-11);
            assert!(v[4][(i, 3)].abs() < 1e-12);
        }
    }
}
