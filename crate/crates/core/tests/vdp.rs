use std::f64::consts::TAU;

use nalgebra::Vector2;
use pbvp_core::lyapunov_schmidt::{root_at, GeneratingFamily, RootSettings};
use pbvp_core::newton::NewtonSettings;
use pbvp_core::spectral::rotation;
use pbvp_core::vdp::*;
use pbvp_core::{LinearSettings, PhaseVector};

/// Direct trapezoid evaluation of `∫₀^{2π} U(−τ) Z(φ₀(τ)) dτ`, exact for the
/// trigonometric polynomials involved once the node count exceeds the degree.
fn oracle_f(c: &[[f64; 2]]) -> Vec<Vector2<f64>> {
    let m = 4096;
    let h = TAU / m as f64;
    let mut acc = vec![Vector2::zeros(); c.len()];
    for j in 0..m {
        let t = j as f64 * h;
        let phi: Vec<Vector2<f64>> = c
            .iter()
            .enumerate()
            .map(|(k, p)| rotation((k + 1) as f64 * t) * Vector2::new(p[0], p[1]))
            .collect();
        let damping = 1.0 - phi.iter().map(|p| p.x * p.x).sum::<f64>();
        for (k, p) in phi.iter().enumerate() {
            let s = (k + 1) as f64;
            let z = Vector2::new(0.0, s * damping * p.y);
            acc[k] += rotation(-s * t) * z * h;
        }
    }
    acc
}

fn family(n: usize) -> (GeneratingFamily, VanDerPolRhs) {
    let (p, z) = build_vdp_problem(&VdpConfig::new(n, vec![1])).unwrap();
    (GeneratingFamily::new(p, LinearSettings { grid_size: 512, ..Default::default() }).unwrap(), z)
}

#[test]
fn amplitude_map_matches_direct_quadrature_and_algebraic_form() {
    let (fam, z) = family(3);
    for c in [
        [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
        [[0.3, -1.2], [0.7, 0.4], [-0.5, 0.2]],
        [[2.0, 1.0], [0.0, -0.6], [1.1, 0.0]],
    ] {
        let f = fam.amplitude_map(&z, &PhaseVector::from_arrays(&c)).unwrap();
        let want = oracle_f(&c);
        let alg = amplitude_system(&AmplitudePairs::from_arrays(&c));
        for k in 0..3 {
            assert!((f.pair(k) - want[k]).norm() < 1e-10, "mode {k}: {:?} vs {:?}", f.pair(k), want[k]);
            let kappa = reference_ratio(k + 1);
            assert!((want[k].x - kappa * alg[2 * k]).abs() < 1e-10);
            assert!((want[k].y - kappa * alg[2 * k + 1]).abs() < 1e-10);
        }
    }
}

#[test]
fn cross_check_recovers_mode_constants() {
    for n in [1, 2, 3] {
        let cfg = VdpConfig::new(n, vec![1]);
        let samples = sample_points(n, 12, 1.5, 42 + n as u64);
        let rep = cross_check_f(&cfg, &samples, 256, 1e-8).unwrap();
        assert!(rep.consistent && rep.sign_agreement, "{rep:?}");
        for m in &rep.modes {
            assert!((m.mean - reference_ratio(m.mode)).abs() < 1e-10, "{m:?}");
        }
    }
    let mut cfg = VdpConfig::new(1, vec![1]);
    cfg.w = 3.0;
    assert!(cross_check_f(&cfg, &[], 64, 1e-8).is_err());
}

#[test]
fn b0_kernel_dimension_equals_support_size() {
    for (n, support) in [(1, vec![1]), (2, vec![1]), (2, vec![1, 2]), (3, vec![1, 3])] {
        let cfg = VdpConfig::new(n, support.clone());
        let root = torus_roots(&cfg, 2, 11, &NewtonSettings::default()).remove(1).unwrap();
        let (fam, z) = family(n);
        let r = root_at(&fam, &z, &root.pairs, &RootSettings::default()).unwrap();
        assert!(r.f_residual < 1e-9, "{}", r.f_residual);
        assert_eq!(r.conditions.adjoint_kernel_dim, support.len(), "{support:?}");
        assert!(r.b0.discrepancy.unwrap() < 1e-6);
    }
}

#[test]
fn random_starts_are_deterministic() {
    let cfg = VdpConfig::new(3, vec![1, 2]);
    let s = NewtonSettings::default();
    let a: Vec<_> = torus_roots(&cfg, 4, 9, &s).into_iter().map(Result::unwrap).collect();
    let b: Vec<_> = torus_roots(&cfg, 4, 9, &s).into_iter().map(Result::unwrap).collect();
    assert_eq!(a, b);
    assert_eq!(torus_starts(&cfg, 4, 9)[0].pairs, PhaseVector::from_arrays(&[[1.0, 0.0], [1.0, 0.0], [0.0, 0.0]]));
}
