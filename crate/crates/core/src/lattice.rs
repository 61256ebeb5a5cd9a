//! Bose-Hubbard parameters of a 1-D optical lattice.
//!
//! The lattice potential is `V(x) = U sin²(kx)` with `k = 2π/λ`, so the site
//! spacing is `d = λ/2` and the first Brillouin zone spans `q ∈ [-k, k]`.
//! Tunneling comes from the width of the lowest Bloch band obtained by
//! plane-wave diagonalization; the on-site interaction from a Gaussian
//! orbital whose axial width is the harmonic-oscillator length of one well.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::units::{self, AMU, HBAR, RB87_MASS_AMU};

/// Default plane-wave basis size for band-structure calculations.
pub const DEFAULT_PLANE_WAVES: usize = 31;

/// Quasimomentum samples across the zone (odd, so q = 0 and both edges are on the grid).
const BAND_Q_POINTS: usize = 65;

/// Band energies must agree to this many recoils when the basis grows by 10.
const BAND_CONVERGENCE_ER: f64 = 1e-6;

/// Experimental knobs for one lattice configuration, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeConfig {
    /// Lattice depth in units of the recoil energy.
    pub depth_u: f64,
    /// Lattice laser wavelength, m.
    pub wavelength: f64,
    /// Atomic mass, kg.
    pub atom_mass: f64,
    /// s-wave scattering length, m.
    pub scattering_length: f64,
    /// Atom number per shot.
    pub total_atoms: f64,
    /// Occupation of the central well. When unset it follows from
    /// `total_atoms` and the Gaussian array envelope.
    pub central_occupation: Option<f64>,
    /// 1/e radius of the occupation envelope, in sites.
    pub array_radius_sites: f64,
    /// Tilt per site E/ħ, rad/s.
    pub gradient_e: f64,
    /// Transverse Gaussian width of the on-site orbital, m.
    pub transverse_width: f64,
    /// Relative shot-to-shot atom-number fluctuation.
    pub shot_to_shot_sigma: f64,
    /// Plane-wave basis size used for the band structure.
    pub plane_waves: usize,
}

/// Transverse orbital width that puts gβ/h near 1.2 Hz at U = 10 E_R.
pub const DEFAULT_TRANSVERSE_WIDTH_UM: f64 = 2.3;

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            depth_u: 10.0,
            wavelength: units::nm(852.0),
            atom_mass: RB87_MASS_AMU * AMU,
            scattering_length: units::nm(5.3),
            total_atoms: 1500.0,
            central_occupation: None,
            array_radius_sites: 7.0,
            gradient_e: units::hz_to_rad(900.0),
            transverse_width: units::um(DEFAULT_TRANSVERSE_WIDTH_UM),
            shot_to_shot_sigma: 0.20,
            plane_waves: DEFAULT_PLANE_WAVES,
        }
    }
}

impl LatticeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_u > 0.0) {
            return Err(Error::Domain(format!("depth_u must be > 0, got {}", self.depth_u)));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::Domain(format!(
                "wavelength must be > 0, got {}",
                self.wavelength
            )));
        }
        if !(self.atom_mass > 0.0) {
            return Err(Error::Domain("atom mass must be > 0".into()));
        }
        if self.scattering_length < 0.0 {
            return Err(Error::Domain("scattering length must be >= 0".into()));
        }
        if !(self.array_radius_sites > 0.0) {
            return Err(Error::Domain("array radius must be > 0".into()));
        }
        if self.central_occupation() < 1.0 {
            return Err(Error::Domain(format!(
                "central occupation must be >= 1, got {:.3}",
                self.central_occupation()
            )));
        }
        if !(0.0..1.0).contains(&self.shot_to_shot_sigma) {
            return Err(Error::Domain(format!(
                "shot_to_shot_sigma must lie in [0, 1), got {}",
                self.shot_to_shot_sigma
            )));
        }
        if self.gradient_e < 0.0 {
            return Err(Error::Domain("gradient must be >= 0".into()));
        }
        Ok(())
    }

    /// Central-well occupation N. Defaults to `total / (√π R)`, the peak of a
    /// Gaussian envelope `N exp(-i²/R²)` holding `total_atoms`.
    pub fn central_occupation(&self) -> f64 {
        self.central_occupation
            .unwrap_or_else(|| self.total_atoms / (PI.sqrt() * self.array_radius_sites))
    }

    pub fn lattice_k(&self) -> f64 {
        TAU / self.wavelength
    }

    pub fn site_spacing(&self) -> f64 {
        self.wavelength / 2.0
    }

    pub fn with_depth(&self, depth_u: f64) -> Self {
        Self {
            depth_u,
            ..self.clone()
        }
    }
}

/// Derived Bose-Hubbard quantities. Rates are angular frequencies (energy/ħ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HubbardParams {
    pub depth_u: f64,
    /// Tunneling γ/ħ.
    pub gamma: f64,
    /// On-site interaction gβ/ħ.
    pub g_beta: f64,
    /// Recoil E_R/ħ.
    pub recoil: f64,
    /// d = λ/2.
    pub site_spacing: f64,
    /// 2ħk, kg m/s.
    pub bragg_momentum: f64,
    /// Gap between the two lowest bands at the zone edge, rad/s.
    pub edge_gap: f64,
    /// Axial Gaussian width of the on-site orbital, m.
    pub axial_width: f64,
    pub atom_mass: f64,
}

impl HubbardParams {
    pub fn derive(config: &LatticeConfig) -> Result<Self> {
        config.validate()?;
        let recoil = recoil_energy(config)?;
        let band = band_structure(config.depth_u, config.plane_waves)?;
        Ok(Self {
            depth_u: config.depth_u,
            gamma: band.tunneling_er() * recoil,
            g_beta: onsite_interaction(config)?,
            recoil,
            site_spacing: config.site_spacing(),
            bragg_momentum: 2.0 * HBAR * config.lattice_k(),
            edge_gap: band.edge_gap_er() * recoil,
            axial_width: axial_width(config)?,
            atom_mass: config.atom_mass,
        })
    }

    /// Separation of adjacent interference orders after a time of flight, m.
    pub fn peak_spacing(&self, tof: f64) -> f64 {
        self.bragg_momentum * tof / self.atom_mass
    }
}

/// Recoil energy E_R/ħ = ħk²/2m, rad/s.
pub fn recoil_energy(config: &LatticeConfig) -> Result<f64> {
    if !(config.wavelength > 0.0) {
        return Err(Error::Domain(format!(
            "wavelength must be > 0, got {}",
            config.wavelength
        )));
    }
    let k = config.lattice_k();
    Ok(HBAR * k * k / (2.0 * config.atom_mass))
}

/// The two lowest Bloch bands of `U sin²(kx)` sampled across the first zone.
#[derive(Debug, Clone)]
pub struct BandStructure {
    pub depth_u: f64,
    /// Quasimomentum in units of k, spanning [-1, 1].
    pub quasimomenta: Vec<f64>,
    /// Lowest band, units of E_R.
    pub lowest: Vec<f64>,
    /// First excited band, units of E_R.
    pub excited: Vec<f64>,
}

impl BandStructure {
    pub fn width_er(&self) -> f64 {
        let (lo, hi) = min_max(&self.lowest);
        hi - lo
    }

    /// Nearest-neighbour tunneling in E_R: a quarter of the lowest bandwidth.
    pub fn tunneling_er(&self) -> f64 {
        self.width_er() / 4.0
    }

    /// Gap between the two lowest bands at the zone edge, E_R.
    pub fn edge_gap_er(&self) -> f64 {
        let last = self.lowest.len() - 1;
        self.excited[last] - self.lowest[last]
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

/// Diagonalizes the single-particle lattice Hamiltonian in a basis of
/// `n_plane_waves` plane waves `e^{i(q + 2jk)x}` and returns the two lowest
/// bands in recoil units. Convergence is checked against a basis ten waves
/// larger.
pub fn band_structure(depth_u: f64, n_plane_waves: usize) -> Result<BandStructure> {
    if !(depth_u >= 0.0) || !depth_u.is_finite() {
        return Err(Error::Domain(format!("depth_u must be >= 0, got {depth_u}")));
    }
    if n_plane_waves < 11 || n_plane_waves.is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "plane-wave basis must be odd and >= 11, got {n_plane_waves}"
        )));
    }
    let quasimomenta: Vec<f64> = (0..BAND_Q_POINTS)
        .map(|i| -1.0 + 2.0 * i as f64 / (BAND_Q_POINTS - 1) as f64)
        .collect();
    let mut lowest = Vec::with_capacity(BAND_Q_POINTS);
    let mut excited = Vec::with_capacity(BAND_Q_POINTS);
    for &q in &quasimomenta {
        let small = lowest_two(depth_u, q, n_plane_waves);
        let large = lowest_two(depth_u, q, n_plane_waves + 10);
        let diff = (small[0] - large[0]).abs().max((small[1] - large[1]).abs());
        if diff > BAND_CONVERGENCE_ER {
            return Err(Error::Convergence(format!(
                "U = {depth_u} E_R with {n_plane_waves} plane waves: change {diff:.2e} E_R at q = {q:.3} k"
            )));
        }
        lowest.push(small[0]);
        excited.push(small[1]);
    }
    Ok(BandStructure {
        depth_u,
        quasimomenta,
        lowest,
        excited,
    })
}

/// Two lowest eigenvalues at quasimomentum `q` (units of k).
///
/// With `sin²(kx) = ½ - ¼(e^{2ikx} + e^{-2ikx})` the Hamiltonian in E_R is
/// `(q + 2j)² + U/2` on the diagonal and `-U/4` on the first off-diagonals.
fn lowest_two(depth_u: f64, q: f64, n: usize) -> [f64; 2] {
    let half = (n / 2) as f64;
    let h = DMatrix::from_fn(n, n, |r, c| {
        if r == c {
            let j = r as f64 - half;
            (q + 2.0 * j).powi(2) + depth_u / 2.0
        } else if r.abs_diff(c) == 1 {
            -depth_u / 4.0
        } else {
            0.0
        }
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    [ev[0], ev[1]]
}

/// Tunneling γ/ħ in rad/s for the configured depth.
pub fn tunneling(config: &LatticeConfig) -> Result<f64> {
    if !(1.0..=40.0).contains(&config.depth_u) {
        return Err(Error::Domain(format!(
            "tunneling is calibrated for 1 <= U <= 40 E_R, got {}",
            config.depth_u
        )));
    }
    let band = band_structure(config.depth_u, config.plane_waves)?;
    Ok(band.tunneling_er() * recoil_energy(config)?)
}

/// Harmonic-oscillator length of one lattice well: `ω_ax = 2√U E_R/ħ`.
pub fn axial_width(config: &LatticeConfig) -> Result<f64> {
    let omega_ax = 2.0 * config.depth_u.sqrt() * recoil_energy(config)?;
    if !(omega_ax > 0.0) {
        return Err(Error::Domain("axial trap frequency must be > 0".into()));
    }
    Ok((HBAR / (config.atom_mass * omega_ax)).sqrt())
}

/// On-site interaction gβ/ħ in rad/s for a 3-D Gaussian orbital.
pub fn onsite_interaction(config: &LatticeConfig) -> Result<f64> {
    if !(config.transverse_width > 0.0) {
        return Err(Error::Domain(format!(
            "transverse width must be > 0, got {}",
            config.transverse_width
        )));
    }
    let axial = axial_width(config)?;
    Ok(gaussian_interaction(
        config.scattering_length,
        config.atom_mass,
        axial,
        config.transverse_width,
    ))
}

/// `(4πħ a_s / m) ∫|w|⁴ d³r` for `|w|² = Π (√π a)⁻¹ exp(-x²/a²)`.
pub fn gaussian_interaction(scattering_length: f64, mass: f64, axial: f64, transverse: f64) -> f64 {
    let coupling = 4.0 * PI * HBAR * scattering_length / mass;
    let overlap = 1.0 / ((TAU).powf(1.5) * axial * transverse * transverse);
    coupling * overlap
}

/// Bloch period `T = 2π / (E/ħ)`, seconds.
pub fn bloch_period(gradient_e: f64) -> Result<f64> {
    if !(gradient_e > 0.0) {
        return Err(Error::Domain(format!("gradient must be > 0, got {gradient_e}")));
    }
    Ok(TAU / gradient_e)
}

/// Default fraction of the zone-edge gap above which Zener loss is flagged.
pub const DEFAULT_ZENER_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZenerCheck {
    pub flagged: bool,
    /// Tilt per site divided by the zone-edge gap.
    pub ratio: f64,
}

/// Advisory flag for interband (Zener) loss: raised when the tilt per site
/// exceeds `fraction` of the band gap at the zone edge.
pub fn zener_warning(params: &HubbardParams, gradient_e: f64, fraction: f64) -> ZenerCheck {
    let ratio = gradient_e.abs() / params.edge_gap;
    ZenerCheck {
        flagged: gradient_e.abs() > fraction * params.edge_gap,
        ratio,
    }
}

/// One row of the parameter table.
#[derive(Debug, Clone, Copy)]
pub struct ParamRow {
    pub depth_u: f64,
    pub gamma_hz: f64,
    pub g_beta_hz: f64,
    pub recoil_hz: f64,
    pub bloch_period_ms: f64,
}

pub fn param_row(config: &LatticeConfig) -> Result<ParamRow> {
    let p = HubbardParams::derive(config)?;
    let period = if config.gradient_e > 0.0 {
        units::to_ms(bloch_period(config.gradient_e)?)
    } else {
        f64::INFINITY
    };
    Ok(ParamRow {
        depth_u: config.depth_u,
        gamma_hz: units::rad_to_hz(p.gamma),
        g_beta_hz: units::rad_to_hz(p.g_beta),
        recoil_hz: units::rad_to_hz(p.recoil),
        bloch_period_ms: period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::hz_to_rad;

    fn cfg(u: f64) -> LatticeConfig {
        LatticeConfig::default().with_depth(u)
    }

    #[test]
    fn recoil_for_852_nm_rubidium() {
        // h / (2 m λ²) with the CODATA constants above: 3162.51 Hz.
        let er = units::rad_to_hz(recoil_energy(&cfg(10.0)).unwrap());
        assert!((er - 3162.51).abs() < 0.05, "E_R/h = {er}");
    }

    #[test]
    fn recoil_scales_inverse_square_in_wavelength() {
        let base = recoil_energy(&cfg(10.0)).unwrap();
        let mut c = cfg(10.0);
        c.wavelength *= 2.0;
        let doubled = recoil_energy(&c).unwrap();
        assert!((doubled / base - 0.25).abs() < 1e-12);
    }

    #[test]
    fn recoil_rejects_zero_wavelength() {
        let mut c = cfg(10.0);
        c.wavelength = 0.0;
        assert!(matches!(recoil_energy(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn free_particle_band() {
        let b = band_structure(0.0, 31).unwrap();
        for (q, e) in b.quasimomenta.iter().zip(&b.lowest) {
            assert!((e - q * q).abs() < 1e-12, "q = {q}: {e}");
        }
    }

    #[test]
    fn band_is_even_and_minimal_at_zero() {
        for u in [1.0, 5.0, 12.0, 24.0] {
            let b = band_structure(u, 31).unwrap();
            let n = b.lowest.len();
            for i in 0..n {
                assert!((b.lowest[i] - b.lowest[n - 1 - i]).abs() < 1e-10);
            }
            let (lo, _) = min_max(&b.lowest);
            assert_eq!(lo, b.lowest[n / 2]);
        }
    }

    #[test]
    fn basis_guards() {
        assert!(matches!(band_structure(10.0, 10), Err(Error::Domain(_))));
        assert!(matches!(band_structure(10.0, 9), Err(Error::Domain(_))));
        assert!(matches!(band_structure(-1.0, 31), Err(Error::Domain(_))));
        // 11 waves cannot hold a 40 E_R lattice to 1e-6 E_R
        assert!(matches!(band_structure(200.0, 11), Err(Error::Convergence(_))));
    }

    #[test]
    fn tunneling_calibration_points() {
        let g12 = units::rad_to_hz(tunneling(&cfg(12.0)).unwrap());
        assert!((g12 / 39.0 - 1.0).abs() < 0.2, "γ(12)/h = {g12}");
        let g5 = units::rad_to_hz(tunneling(&cfg(5.0)).unwrap());
        let g24 = units::rad_to_hz(tunneling(&cfg(24.0)).unwrap());
        assert!(g5 > 250.0 / 1.3 && g5 < 250.0 * 1.3, "γ(5)/h = {g5}");
        assert!(g24 > 4.0 / 1.3 && g24 < 4.0 * 1.3, "γ(24)/h = {g24}");
        assert!(g5 > g12 && g12 > g24);
    }

    #[test]
    fn tunneling_domain() {
        assert!(matches!(tunneling(&cfg(0.5)), Err(Error::Domain(_))));
        assert!(matches!(tunneling(&cfg(41.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn tunneling_monotone_in_depth() {
        let mut prev = f64::INFINITY;
        for i in 0..=38 {
            let u = 5.0 + 0.5 * i as f64;
            let g = band_structure(u, 31).unwrap().tunneling_er();
            assert!(g < prev, "not decreasing at U = {u}");
            prev = g;
        }
    }

    #[test]
    fn tunneling_near_asymptotic_form() {
        for u in [8.0, 12.0, 16.0, 20.0, 24.0] {
            let exact = band_structure(u, 31).unwrap().tunneling_er();
            let asym = 4.0 / PI.sqrt() * u.powf(0.75) * (-2.0 * u.sqrt()).exp();
            assert!((exact / asym - 1.0).abs() < 0.25, "U = {u}: {exact} vs {asym}");
        }
    }

    #[test]
    fn basis_doubling_is_converged() {
        for u in [5.0, 15.0, 30.0] {
            let a = band_structure(u, 31).unwrap().tunneling_er();
            let b = band_structure(u, 61).unwrap().tunneling_er();
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn interaction_in_quoted_range() {
        for i in 0..=19 {
            let u = 5.0 + i as f64;
            let gb = units::rad_to_hz(onsite_interaction(&cfg(u)).unwrap());
            assert!((0.6..=1.8).contains(&gb), "gβ({u})/h = {gb}");
        }
    }

    #[test]
    fn interaction_scaling_with_axial_width() {
        let c = cfg(10.0);
        let a = axial_width(&c).unwrap();
        let base = gaussian_interaction(c.scattering_length, c.atom_mass, a, c.transverse_width);
        let narrowed = gaussian_interaction(c.scattering_length, c.atom_mass, a / 2.0, c.transverse_width);
        assert!((narrowed / base - 2.0).abs() < 1e-12);
        // doubling the axial trap frequency narrows the orbital by √2
        let stiffer = gaussian_interaction(c.scattering_length, c.atom_mass, a / 2f64.sqrt(), c.transverse_width);
        assert!((stiffer / base - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn non_interacting_limit() {
        let mut c = cfg(10.0);
        c.scattering_length = 0.0;
        assert_eq!(onsite_interaction(&c).unwrap(), 0.0);
        c.transverse_width = 0.0;
        assert!(matches!(onsite_interaction(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn bloch_periods() {
        let t = bloch_period(hz_to_rad(900.0)).unwrap();
        assert!((t * 1e3 - 1.1111).abs() < 1e-3);
        let t1 = bloch_period(hz_to_rad(1000.0)).unwrap();
        assert!((t1 * 1e3 - 1.0).abs() < 1e-12);
        let t2 = bloch_period(hz_to_rad(2000.0)).unwrap();
        assert!((t2 / t1 - 0.5).abs() < 1e-12);
        assert!(matches!(bloch_period(0.0), Err(Error::Domain(_))));
        assert!(matches!(bloch_period(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn zener_flags() {
        let deep = HubbardParams::derive(&cfg(24.0)).unwrap();
        assert!(!zener_warning(&deep, hz_to_rad(900.0), DEFAULT_ZENER_FRACTION).flagged);
        let shallow = HubbardParams::derive(&cfg(1.0)).unwrap();
        assert!(zener_warning(&shallow, hz_to_rad(5000.0), DEFAULT_ZENER_FRACTION).flagged);
        assert!(!zener_warning(&shallow, 0.0, DEFAULT_ZENER_FRACTION).flagged);
    }

    #[test]
    fn derived_rates_positive() {
        for u in [5.0, 10.0, 22.5, 24.0] {
            let p = HubbardParams::derive(&cfg(u)).unwrap();
            assert!(p.gamma > 0.0 && p.g_beta > 0.0 && p.recoil > 0.0);
            assert!(p.gamma.is_finite() && p.g_beta.is_finite());
        }
    }

    #[test]
    fn side_peak_spacing_after_12_ms() {
        let p = HubbardParams::derive(&cfg(10.0)).unwrap();
        let s = units::to_um(p.peak_spacing(units::ms(12.0)));
        assert!((s - 129.3).abs() < 0.1, "{s}");
    }

    #[test]
    fn default_central_occupation() {
        let n = LatticeConfig::default().central_occupation();
        assert!((103.0..150.0).contains(&n), "{n}");
    }
}
