mod common;

use common::{gen_eigenvalues, loglog_slope};
use mrt_core::*;
use std::f64::consts::PI;

fn gram(s: &SubspaceOps, which: usize) -> DMatrix<f64> {
    match which {
        0 => SubspaceOps::gram(&s.s0, &s.w01, &vec![1.0; s.w01.len()], &s.s0),
        1 => SubspaceOps::gram(&s.s1, &s.w01, &vec![1.0; s.w01.len()], &s.s1),
        _ => SubspaceOps::gram(&s.s2, &s.w2, &vec![1.0; s.w2.len()], &s.s2),
    }
}

/// Smallest eigenvalue of `−ψ'' = μψ`, `ψ(±1) = 0`, from the nodal matrix `−D2`.
fn dirichlet_laplacian_min(g: &Grid1D) -> f64 {
    let m = -g.d2.rows(1, g.n).into_owned();
    m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
}

#[test]
fn quadrature_integrates_constants() {
    for scheme in [Scheme::Fd2, Scheme::Chebyshev] {
        let g = build_grid(1.0, 64, scheme).unwrap();
        assert!((g.quad.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(g.quad.iter().all(|w| *w > 0.0));
    }
}

#[test]
fn too_few_nodes_rejected() {
    assert_eq!(build_grid(1.0, 7, Scheme::Fd2).unwrap_err(), GridError::TooFewNodes(7));
    assert!(build_grid(0.0, 16, Scheme::Fd2).is_err());
}

#[test]
fn dirichlet_laplacian_sturm_liouville() {
    let exact = (PI / 2.0).powi(2);
    let fd = dirichlet_laplacian_min(&build_grid(1.0, 64, Scheme::Fd2).unwrap());
    assert!((fd - exact).abs() / exact < 1e-3, "fd2: {fd}");
    let ch = dirichlet_laplacian_min(&build_grid(1.0, 48, Scheme::Chebyshev).unwrap());
    assert!((ch - exact).abs() / exact < 1e-10, "chebyshev: {ch}");
}

#[test]
fn dirichlet_laplacian_second_order() {
    let exact = (PI / 2.0).powi(2);
    let ns = [32usize, 64, 128, 256];
    let err: Vec<f64> = ns
        .iter()
        .map(|&n| (dirichlet_laplacian_min(&build_grid(1.0, n, Scheme::Fd2).unwrap()) - exact).abs())
        .collect();
    let slope = loglog_slope(&ns.iter().map(|&n| n as f64).collect::<Vec<_>>(), &err);
    assert!((slope + 2.0).abs() <= 0.2, "slope {slope}");
}

#[test]
fn clamped_beam_eigenvalue() {
    // First clamped-clamped eigenvalue of ψ'''' = μψ on (−1, 1): (4.730040744862704/2)^4.
    let beam = (4.730_040_744_862_704_f64 / 2.0).powi(4);
    assert!((beam - 31.285_243_858_777).abs() < 1e-9);
    let g = build_grid(1.0, 128, Scheme::Fd2).unwrap();
    let mu = gen_eigenvalues(&gram(&g.clamped, 2), &gram(&g.clamped, 0))[0];
    assert!((mu - beam).abs() / beam < 1e-2, "fd2 beam eigenvalue {mu}");
    let g = build_grid(1.0, 40, Scheme::Chebyshev).unwrap();
    let mu = gen_eigenvalues(&gram(&g.clamped, 2), &gram(&g.clamped, 0))[0];
    assert!((mu - beam).abs() / beam < 1e-9, "chebyshev beam eigenvalue {mu}");
}

#[test]
fn constant_is_not_clamped() {
    for scheme in [Scheme::Fd2, Scheme::Chebyshev] {
        let g = build_grid(1.0, 32, scheme).unwrap();
        let one = DVector::from_element(g.nodes.len(), 1.0);
        let back = &g.clamped.inject * g.clamped.project(&one);
        let dev = (&back - &one).amax();
        assert!(dev > 0.1, "{scheme:?}: constant reproduced within {dev}");
    }
}

#[test]
fn clamped_function_is_captured() {
    let f = |x: f64| (1.0 - x * x).powi(2);
    let df = |x: f64| -4.0 * x * (1.0 - x * x);
    for (scheme, n, tol) in [(Scheme::Fd2, 64, 5e-3), (Scheme::Chebyshev, 16, 1e-12)] {
        let g = build_grid(1.0, n, scheme).unwrap();
        let nodal = DVector::from_iterator(g.nodes.len(), g.nodes.iter().map(|&x| f(x)));
        let x = g.clamped.project(&nodal);
        let vals = &g.clamped.inject * &x;
        let slopes = &g.clamped.d1 * &x;
        let last = g.nodes.len() - 1;
        assert!(vals[0].abs() < 1e-14 && vals[last].abs() < 1e-14);
        assert!(slopes[0].abs() <= tol && slopes[last].abs() <= tol, "{scheme:?} wall slopes");
        for (i, &xx) in g.nodes.iter().enumerate() {
            assert!((vals[i] - f(xx)).abs() <= tol);
            assert!((slopes[i] - df(xx)).abs() <= 10.0 * tol, "{scheme:?} slope at {xx}");
        }
    }
}

#[test]
fn first_derivative_of_identity() {
    for (scheme, tol) in [(Scheme::Fd2, 1e-12), (Scheme::Chebyshev, 1e-10)] {
        let g = build_grid(1.0, 32, scheme).unwrap();
        let x = DVector::from_column_slice(&g.nodes);
        let d = &g.d1_full * &x;
        for i in 1..g.nodes.len() - 1 {
            assert!((d[i] - 1.0).abs() < tol, "{scheme:?}");
        }
    }
}

#[test]
fn integration_by_parts_is_exact_for_fd2() {
    let g = build_grid(1.0, 40, Scheme::Fd2).unwrap();
    let w = &g.quad[1..g.quad.len() - 1];
    let f = DVector::from_iterator(g.n, g.interior().iter().map(|x| (PI * x).sin() + x * x - 1.0));
    let h = DVector::from_iterator(g.n, g.interior().iter().map(|x| (1.0 - x * x) * x.exp()));
    let d1 = g.d1.rows(1, g.n).into_owned();
    let df = &d1 * &f;
    let dh = &d1 * &h;
    let ip = |a: &DVector<f64>, b: &DVector<f64>| (0..g.n).map(|i| w[i] * a[i] * b[i]).sum::<f64>();
    assert!((ip(&df, &h) + ip(&f, &dh)).abs() < 1e-13);
}

#[test]
fn integration_by_parts_spectral() {
    let g = build_grid(1.0, 48, Scheme::Chebyshev).unwrap();
    let w = &g.quad[1..g.quad.len() - 1];
    let f = DVector::from_iterator(g.n, g.interior().iter().map(|x| (PI * x).sin()));
    let h = DVector::from_iterator(g.n, g.interior().iter().map(|x| (1.0 - x * x) * x.exp()));
    let d1 = g.d1.rows(1, g.n).into_owned();
    let df = &d1 * &f;
    let dh = &d1 * &h;
    let ip = |a: &DVector<f64>, b: &DVector<f64>| (0..g.n).map(|i| w[i] * a[i] * b[i]).sum::<f64>();
    assert!((ip(&df, &h) + ip(&f, &dh)).abs() < 1e-10);
}

#[test]
fn dirichlet_second_derivative_negative_definite() {
    for scheme in [Scheme::Fd2, Scheme::Chebyshev] {
        let g = build_grid(1.0, 24, scheme).unwrap();
        let k = gram(&g.dirichlet, 1);
        assert!(gen_eigenvalues(&k, &gram(&g.dirichlet, 0))[0] > 0.0);
    }
}

#[test]
fn strong_derivatives_of_clamped_polynomial() {
    let g = build_grid(1.0, 24, Scheme::Chebyshev).unwrap();
    let nodal = DVector::from_iterator(g.nodes.len(), g.nodes.iter().map(|x| (1.0 - x * x).powi(2) * x));
    let x = g.clamped.project(&nodal);
    let d = g.derivatives(Bc::Clamped, &x, 4);
    let (pts, _) = g.residual_points();
    for (q, &t) in pts.iter().enumerate() {
        // (x − 2x³ + x⁵)'''' = 120x.
        assert!((d[4][q] - 120.0 * t).abs() < 1e-8);
        assert!((d[1][q] - (1.0 - 6.0 * t * t + 5.0 * t.powi(4))).abs() < 1e-12);
    }
}
