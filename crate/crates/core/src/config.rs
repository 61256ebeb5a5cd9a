//! Run configuration: a sectioned TOML file in laboratory units that maps
//! onto the simulation types.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::WidthMeasure;
use crate::dynamics::EnsembleSpec;
use crate::error::{Error, Result};
use crate::imaging::{Frame, ImagingConfig, NoiseConfig};
use crate::lattice::{LatticeConfig, DEFAULT_PLANE_WAVES, DEFAULT_TRANSVERSE_WIDTH_UM};
use crate::pipeline::{linspace, Scenario, DEFAULT_ISOLATION_RATIO};
use crate::states::{NumberModel, SqueezingFormula};
use crate::units::{self, AMU, RB87_MASS_AMU};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    /// Depth in recoil energies.
    pub depth_u: f64,
    pub wavelength_nm: f64,
    pub plane_waves: usize,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self {
            depth_u: 10.0,
            wavelength_nm: 852.0,
            plane_waves: DEFAULT_PLANE_WAVES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomsSection {
    pub mass_amu: f64,
    pub scattering_length_nm: f64,
    pub total_atoms: f64,
    /// Central-well occupation; derived from `total_atoms` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub central_occupation: Option<f64>,
    pub array_radius_sites: f64,
    pub transverse_width_um: f64,
    pub shot_to_shot_sigma: f64,
}

impl Default for AtomsSection {
    fn default() -> Self {
        Self {
            mass_amu: RB87_MASS_AMU,
            scattering_length_nm: 5.3,
            total_atoms: 1500.0,
            central_occupation: None,
            array_radius_sites: 7.0,
            transverse_width_um: DEFAULT_TRANSVERSE_WIDTH_UM,
            shot_to_shot_sigma: 0.20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradientSection {
    /// Energy offset between neighbouring sites, E/h in Hz.
    pub e_hz: f64,
    /// Tilt-to-tunneling ratio above which wells are held isolated.
    pub isolation_ratio: f64,
    /// Hold of the width-versus-tilt scan, ms.
    pub scan_hold_ms: f64,
}

impl Default for GradientSection {
    fn default() -> Self {
        Self {
            e_hz: 900.0,
            isolation_ratio: DEFAULT_ISOLATION_RATIO,
            scan_hold_ms: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimesSection {
    /// Lattice ramp; the loaded state is taken as adiabatic, so this is
    /// recorded but not simulated.
    pub t_ramp_ms: f64,
    /// Dephasing hold before the gradient is switched off (rephase).
    pub t_bloch_ms: f64,
    /// Longest hold after the switch-off.
    pub t_rephase_ms: f64,
    pub rephase_points: usize,
    /// Longest hold of the coherence-time scan.
    pub hold_max_ms: f64,
    pub hold_points: usize,
    /// Window of the recorded Bloch trajectory.
    pub bloch_window_ms: f64,
    pub bloch_points: usize,
    pub tof_ms: f64,
}

impl Default for TimesSection {
    fn default() -> Self {
        Self {
            t_ramp_ms: 350.0,
            t_bloch_ms: 80.0,
            t_rephase_ms: 20.0,
            rephase_points: 41,
            hold_max_ms: 50.0,
            hold_points: 21,
            bloch_window_ms: 3.0,
            bloch_points: 121,
            tof_ms: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n_samples: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    pub workers: usize,
    pub model: NumberModel,
    pub squeezing_formula: SqueezingFormula,
    /// Fixed per-site phase spread, rad; paired with the number spread when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_sigma: Option<f64>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let e = EnsembleSpec::default();
        Self {
            n_samples: e.n_samples,
            seed: e.master_seed,
            workers: e.workers,
            model: e.number_model,
            squeezing_formula: e.squeezing_formula,
            phase_sigma: e.phase_sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameChoice {
    Lab,
    #[default]
    Comoving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImagingSection {
    pub pixel_um: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_pixels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub onsite_width_um: Option<f64>,
    /// Point-spread width; one pixel when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution_blur_um: Option<f64>,
    pub frame: FrameChoice,
    pub noise: bool,
    pub number_fluct_sigma: f64,
    pub atom_shot: bool,
    pub photon_shot: bool,
    pub photon_sigma: f64,
    /// Write PGM frames next to the CSV output.
    pub write_images: bool,
    /// Transverse Gaussian width of rendered images, μm.
    pub image_transverse_um: f64,
}

impl Default for ImagingSection {
    fn default() -> Self {
        let n = NoiseConfig::default();
        Self {
            pixel_um: 0.5,
            n_pixels: None,
            onsite_width_um: None,
            resolution_blur_um: None,
            frame: FrameChoice::Comoving,
            noise: n.enabled,
            number_fluct_sigma: n.number_fluct_sigma,
            atom_shot: n.atom_shot,
            photon_shot: n.photon_shot,
            photon_sigma: n.photon_sigma,
            write_images: false,
            image_transverse_um: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthChoice {
    Narrow,
    #[default]
    Effective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub width_measure: WidthChoice,
    /// Depth sweep `min:max:step` in recoil energies.
    pub depths: String,
    /// Incoherent fraction below which a profile counts as fully coherent.
    pub noise_floor: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            width_measure: WidthChoice::Effective,
            depths: "5:24:1".into(),
            noise_floor: 0.05,
        }
    }
}

/// Complete configuration of a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub lattice: LatticeSection,
    pub atoms: AtomsSection,
    pub gradient: GradientSection,
    pub times: TimesSection,
    pub ensemble: EnsembleSection,
    pub imaging: ImagingSection,
    pub analysis: AnalysisSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Config(format!(
                "configuration file {} not found; write one with `latcoh init --config {}`",
                path.display(),
                path.display()
            )),
            _ => Error::io(path, e),
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Hex SHA-256 of the serialized configuration, first 16 digits. The
    /// worker count does not affect results and is left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.ensemble.workers = 0;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.times;
        let times = [
            ("t_ramp_ms", t.t_ramp_ms),
            ("t_bloch_ms", t.t_bloch_ms),
            ("t_rephase_ms", t.t_rephase_ms),
            ("hold_max_ms", t.hold_max_ms),
            ("bloch_window_ms", t.bloch_window_ms),
            ("tof_ms", t.tof_ms),
            ("scan_hold_ms", self.gradient.scan_hold_ms),
        ];
        for (name, v) in times {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(t.tof_ms > 0.0) {
            return Err(Error::Config("tof_ms must be > 0".into()));
        }
        if self.ensemble.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if !(self.imaging.pixel_um > 0.0) {
            return Err(Error::Config("pixel_um must be > 0".into()));
        }
        if !(self.gradient.isolation_ratio >= 0.0) {
            return Err(Error::Config("isolation_ratio must be >= 0".into()));
        }
        parse_range(&self.analysis.depths)?;
        self.lattice_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn lattice_config(&self) -> LatticeConfig {
        LatticeConfig {
            depth_u: self.lattice.depth_u,
            wavelength: units::nm(self.lattice.wavelength_nm),
            atom_mass: self.atoms.mass_amu * AMU,
            scattering_length: units::nm(self.atoms.scattering_length_nm),
            total_atoms: self.atoms.total_atoms,
            central_occupation: self.atoms.central_occupation,
            array_radius_sites: self.atoms.array_radius_sites,
            gradient_e: units::hz_to_rad(self.gradient.e_hz),
            transverse_width: units::um(self.atoms.transverse_width_um),
            shot_to_shot_sigma: self.atoms.shot_to_shot_sigma,
            plane_waves: self.lattice.plane_waves,
        }
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            n_samples: self.ensemble.n_samples,
            number_model: self.ensemble.model,
            squeezing_formula: self.ensemble.squeezing_formula,
            phase_sigma: self.ensemble.phase_sigma,
            master_seed: self.ensemble.seed,
            workers: self.ensemble.workers,
        }
    }

    pub fn imaging_config(&self) -> ImagingConfig {
        let im = &self.imaging;
        ImagingConfig {
            tof_time: units::ms(self.times.tof_ms),
            pixel_size: units::um(im.pixel_um),
            n_pixels: im.n_pixels,
            onsite_width: im.onsite_width_um.map(units::um),
            resolution_blur: im.resolution_blur_um.map(units::um),
            noise: NoiseConfig {
                enabled: im.noise,
                number_fluct_sigma: im.number_fluct_sigma,
                atom_shot: im.atom_shot,
                photon_shot: im.photon_shot,
                photon_sigma: im.photon_sigma,
            },
            frame: match im.frame {
                FrameChoice::Lab => Frame::Lab,
                FrameChoice::Comoving => Frame::Comoving,
            },
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            lattice: self.lattice_config(),
            ensemble: self.ensemble_spec(),
            imaging: self.imaging_config(),
            isolation_ratio: self.gradient.isolation_ratio,
            width_measure: match self.analysis.width_measure {
                WidthChoice::Narrow => WidthMeasure::Narrow,
                WidthChoice::Effective => WidthMeasure::Effective,
            },
        }
    }

    pub fn depths(&self) -> Result<Vec<f64>> {
        parse_range(&self.analysis.depths)
    }

    pub fn hold_times(&self) -> Vec<f64> {
        linspace(0.0, units::ms(self.times.hold_max_ms), self.times.hold_points)
    }

    pub fn rephase_times(&self) -> Vec<f64> {
        linspace(0.0, units::ms(self.times.t_rephase_ms), self.times.rephase_points)
    }

    pub fn bloch_times(&self) -> Vec<f64> {
        linspace(0.0, units::ms(self.times.bloch_window_ms), self.times.bloch_points)
    }
}

/// Parse `start:stop:step` (inclusive) or a single value.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("expected start:stop:step, got {text:?}"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    match parts[..] {
        [v] if v.is_finite() => Ok(vec![v]),
        [a, b, step] if a.is_finite() && b.is_finite() && step > 0.0 && b >= a => {
            let n = ((b - a) / step + 1e-9).floor() as usize + 1;
            Ok((0..n).map(|k| a + step * k as f64).collect())
        }
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = RunConfig::from_toml("[lattice]\ndepht_u = 3\n").unwrap_err();
        assert!(err.to_string().contains("depht_u"), "{err}");
    }

    #[test]
    fn negative_time_rejected() {
        assert!(RunConfig::from_toml("[times]\nt_bloch_ms = -1\n").is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_toml("[lattice]\ndepth_u = 12.0\n").unwrap();
        assert_eq!(cfg.lattice.depth_u, 12.0);
        assert_eq!(cfg.atoms, AtomsSection::default());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("5:24:1").unwrap().len(), 20);
        assert_eq!(parse_range("100:2000:100").unwrap().len(), 20);
        assert_eq!(parse_range("7").unwrap(), vec![7.0]);
        assert!(parse_range("5:1:1").is_err());
        assert!(parse_range("a:b").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let mut cfg = RunConfig::default();
        let h = cfg.hash();
        cfg.ensemble.workers = 3;
        assert_eq!(h, cfg.hash());
        cfg.ensemble.seed = 2;
        assert_ne!(h, cfg.hash());
    }

    #[test]
    fn scenario_matches_library_defaults() {
        let sc = RunConfig::default().scenario();
        let lib = Scenario::default();
        assert_eq!(sc.imaging, lib.imaging);
        assert_eq!(sc.ensemble, lib.ensemble);
        let (a, b) = (sc.lattice, lib.lattice);
        assert!((a.wavelength - b.wavelength).abs() < 1e-18);
        assert!((a.atom_mass / b.atom_mass - 1.0).abs() < 1e-12);
        assert_eq!(a.depth_u, b.depth_u);
    }
}
