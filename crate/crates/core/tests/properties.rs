//! Invariants checked over randomized inputs.

use lattice_coherence::analysis::{fit_peaks, Gaussian, PeakModel};
use lattice_coherence::dynamics::{evolve, quasimomentum_of, ArrayState};
use lattice_coherence::imaging::{synthesize_profile, ImagingConfig, NoiseConfig};
use lattice_coherence::lattice::{HubbardParams, LatticeConfig};
use num_complex::Complex64;
use proptest::prelude::*;

const SPACING: f64 = 129.3e-6;

fn model(shift: f64, amp: f64, w_c: f64, w_b: f64, f_b: f64) -> PeakModel {
    let d = SPACING;
    let g = |c: f64, w: f64, a: f64| Gaussian {
        center: c + shift,
        width: w * d,
        amplitude: a * amp,
    };
    PeakModel {
        narrow: [g(-d, 0.021, 30.0), g(0.0, w_c, 80.0), g(d, 0.019, 27.0)],
        broad: g(0.0, w_b, f_b),
        baseline: 0.1 * amp,
    }
}

fn grid() -> Vec<f64> {
    let px = 0.5e-6;
    let n = (4.0 * SPACING / px) as i64;
    (-n / 2..=n / 2).map(|k| k as f64 * px).collect()
}

fn params() -> HubbardParams {
    HubbardParams::derive(&LatticeConfig::default()).unwrap()
}

fn state(amps: Vec<Complex64>, total: f64) -> ArrayState {
    let n = amps.len() as i64;
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    ArrayState {
        sites: (-(n / 2)..=(n / 2)).take(amps.len()).collect(),
        occupations: amps.iter().map(|a| total * a.norm_sqr() / (norm * norm)).collect(),
        confinement: vec![0.0; amps.len()],
        amplitudes: amps.into_iter().map(|a| a / norm).collect(),
        total_atoms: total,
        time: 0.0,
        bloch_phase: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// Shifting the image moves every centre by the same amount; scaling the
    /// density scales every amplitude. Widths are unchanged in both cases.
    #[test]
    fn fit_is_translation_and_scale_covariant(
        shift in -5e-6f64..5e-6,
        scale in 0.2f64..20.0,
        w_c in 0.012f64..0.06,
        w_b in 0.4f64..0.9,
        f_b in 0.5f64..8.0,
    ) {
        let xs = grid();
        let base = fit_peaks(&model(0.0, 1.0, w_c, w_b, f_b).render(&xs), SPACING).unwrap();
        let moved = fit_peaks(&model(shift, scale, w_c, w_b, f_b).render(&xs), SPACING).unwrap();
        let pairs = base.model.narrow.iter().zip(&moved.model.narrow).chain([(&base.model.broad, &moved.model.broad)]);
        for (a, b) in pairs {
            prop_assert!((b.center - a.center - shift).abs() < 1e-8 * SPACING);
            prop_assert!((b.width / a.width - 1.0).abs() < 1e-8);
            prop_assert!((b.amplitude / (scale * a.amplitude) - 1.0).abs() < 1e-8);
        }
    }

    /// A real, mirror-symmetric array images to a mirror-symmetric profile.
    #[test]
    fn symmetric_array_gives_symmetric_profile(half in proptest::collection::vec(0.1f64..1.0, 3..9)) {
        let mut amps: Vec<Complex64> = half.iter().rev().map(|&v| Complex64::new(v, 0.0)).collect();
        amps.extend(half[1..].iter().map(|&v| Complex64::new(v, 0.0)));
        let p = params();
        let cfg = ImagingConfig { noise: NoiseConfig::off(), ..ImagingConfig::default() };
        let prof = synthesize_profile(&state(amps, 1500.0), &p, &cfg).unwrap();
        let n = prof.density.len();
        let peak = prof.density.iter().copied().fold(0.0, f64::max);
        for k in 0..n / 2 {
            prop_assert!((prof.density[k] - prof.density[n - 1 - k]).abs() < 1e-10 * peak);
        }
    }

    /// Coupled evolution conserves the norm to well below 1e-8 per ms.
    #[test]
    fn evolution_conserves_norm(
        mags in proptest::collection::vec(0.05f64..1.0, 5..15),
        phases in proptest::collection::vec(-3.1f64..3.1, 15),
        e_hz in 0.0f64..1500.0,
    ) {
        let amps: Vec<Complex64> = mags.iter().zip(&phases).map(|(&m, &t)| Complex64::from_polar(m, t)).collect();
        let s = state(amps, 1500.0);
        let traj = evolve(&s, &params(), lattice_coherence::units::hz_to_rad(e_hz), None, 5e-3, &[1e-3, 5e-3]).unwrap();
        prop_assert!(traj.drift_per_ms() < 1e-8);
        for st in &traj.states {
            prop_assert!((st.norm() - 1.0).abs() < 5e-8);
        }
    }

    /// A uniform phase gradient is read back as the quasimomentum.
    #[test]
    fn phase_gradient_is_the_quasimomentum(frac in -0.49f64..0.49, n in 4usize..20) {
        let amps: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(1.0, std::f64::consts::TAU * frac * i as f64))
            .collect();
        let q = quasimomentum_of(&amps).unwrap();
        prop_assert!((q.zone_fraction - frac).abs() < 1e-12);
        prop_assert!((q.resultant - 1.0).abs() < 1e-12);
    }
}
