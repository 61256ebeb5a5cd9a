//! Lowest-band width of `U sin²(kx)` from Mathieu characteristic values,
//! computed by continued fractions and bisection, independent of the
//! plane-wave diagonalization in the library.
//!
//! With `z = kx` and energies in E_R the Schrödinger equation reads
//! `ψ'' + (E - U/2 + (U/2) cos 2z) ψ = 0`, a Mathieu equation with
//! `a = E - U/2`, `|q| = U/4`. The band bottom is `a_0(q)` and the zone-edge
//! top of the lowest band is `b_1(q)`.

use lattice_coherence::lattice::{band_structure, recoil_energy, LatticeConfig};
use lattice_coherence::units;

const DEPTH_TERMS: usize = 60;

/// `a - q G_1(a)` for the even π-periodic solutions.
fn even_residual(a: f64, q: f64) -> f64 {
    let mut g = 0.0;
    for r in (2..DEPTH_TERMS).rev() {
        g = q / (a - (4 * r * r) as f64 - q * g);
    }
    let g1 = 2.0 * q / (a - 4.0 - q * g);
    a - q * g1
}

/// `a - 1 + q - q H_1(a)` for the odd 2π-periodic solutions.
fn odd_residual(a: f64, q: f64) -> f64 {
    let mut h = 0.0;
    for r in (1..DEPTH_TERMS).rev() {
        let m = (2 * r + 1) as f64;
        h = q / (a - m * m - q * h);
    }
    a - 1.0 + q - q * h
}

/// Root of `f` between `lo` and `hi` by bisection; scans for a sign change
/// first because the continued fractions have poles.
fn root(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 4000;
    let step = (hi - lo) / n as f64;
    let mut a = lo;
    for _ in 0..n {
        let b = a + step;
        let (fa, fb) = (f(a), f(b));
        // a pole also flips the sign; a genuine root has small values on both sides
        if fa.signum() != fb.signum() && fa.abs() < 10.0 && fb.abs() < 10.0 {
            let (mut x0, mut x1) = (a, b);
            for _ in 0..200 {
                let m = 0.5 * (x0 + x1);
                if f(m).signum() == f(x0).signum() {
                    x0 = m;
                } else {
                    x1 = m;
                }
            }
            return 0.5 * (x0 + x1);
        }
        a = b;
    }
    panic!("no root in [{lo}, {hi}]");
}

fn mathieu_bandwidth(depth_u: f64) -> f64 {
    let q = depth_u / 4.0;
    // the lowest characteristic values lie below 1 and above -2q - 1
    let a0 = root(|a| even_residual(a, q), -2.0 * q - 2.0, 1.0);
    let b1 = root(|a| odd_residual(a, q), a0, 1.0 + q.max(1.0));
    b1 - a0
}

#[test]
fn small_depth_matches_perturbation_theory() {
    // a_0 ≈ -q²/2 and b_1 ≈ 1 - q for small q
    let q: f64 = 0.01;
    let a0 = root(|a| even_residual(a, q), -1.0, 0.5);
    assert!((a0 + q * q / 2.0).abs() < 1e-6);
    let b1 = root(|a| odd_residual(a, q), 0.5, 1.5);
    assert!((b1 - (1.0 - q - q * q / 8.0)).abs() < 1e-6);
}

#[test]
fn bandwidth_agrees_with_plane_waves() {
    for u in [1.0, 5.0, 10.0, 12.0, 18.0, 24.0, 30.0] {
        let oracle = mathieu_bandwidth(u);
        let band = band_structure(u, 31).unwrap();
        let rel = (band.width_er() / oracle - 1.0).abs();
        assert!(
            rel < 1e-6,
            "U = {u}: plane waves {} vs Mathieu {oracle}",
            band.width_er()
        );
    }
}

#[test]
fn deep_lattice_follows_the_asymptotic_tunneling() {
    // γ/E_R → (4/√π) U^{3/4} exp(-2√U) for U ≫ 1
    for u in [20.0f64, 30.0] {
        let asym = 4.0 / std::f64::consts::PI.sqrt() * u.powf(0.75) * (-2.0 * u.sqrt()).exp();
        let gamma = band_structure(u, 31).unwrap().tunneling_er();
        assert!((gamma / asym - 1.0).abs() < 0.15, "U = {u}: {gamma} vs {asym}");
    }
}

#[test]
fn recoil_energy_for_rubidium_at_852_nm() {
    let cfg = LatticeConfig::default();
    let k = std::f64::consts::TAU / 852e-9;
    let m = 86.909180527 * 1.66053906660e-27;
    let expected_hz = 1.054571817e-34 * k * k / (2.0 * m) / std::f64::consts::TAU;
    let got_hz = units::rad_to_hz(recoil_energy(&cfg).unwrap());
    assert!((got_hz / expected_hz - 1.0).abs() < 1e-12);
    assert!((got_hz - 3161.0).abs() < 5.0);
}
