//! Synthetic time-of-flight images of the array.
//!
//! After a long free expansion the density maps the initial momentum
//! distribution, `x = ħk t / m`. Each well is a Gaussian wavepacket of width
//! `a_z`, so the far-field density is the array factor `|Σ a_i e^{ikz_i}|²`
//! times the single-well envelope `|ψ̃(k)|² ∝ exp(-k² a_z²)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::dynamics::{sample_rng, ArrayState};
use crate::error::{Error, Result};
use crate::lattice::HubbardParams;
use crate::units::HBAR;

/// Largest fraction of the atoms allowed to fall outside the field of view.
pub const MAX_CLIPPED_FRACTION: f64 = 0.02;

/// Which phase frame the amplitudes are imaged in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    /// Raw amplitudes; peaks move with the Bloch oscillation.
    Lab,
    /// Gradient phase removed, as for a release after whole Bloch periods.
    #[default]
    Comoving,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Master switch; when false `add_noise` is the identity.
    pub enabled: bool,
    /// Lognormal shot-to-shot spread of the total atom number.
    pub number_fluct_sigma: f64,
    /// Poissonian atom counting per pixel.
    pub atom_shot: bool,
    /// Additive Gaussian detection noise.
    pub photon_shot: bool,
    /// Standard deviation of the detection noise, atoms per pixel.
    pub photon_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            number_fluct_sigma: 0.20,
            atom_shot: true,
            photon_shot: false,
            photon_sigma: 0.5,
        }
    }
}

impl NoiseConfig {
    pub fn off() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagingConfig {
    /// Time of flight, s.
    pub tof_time: f64,
    /// Pixel pitch in the image plane, m.
    pub pixel_size: f64,
    /// Number of pixels; `None` covers three diffraction orders on each side.
    pub n_pixels: Option<usize>,
    /// Axial width of the on-site orbital, m; `None` takes it from the lattice.
    pub onsite_width: Option<f64>,
    /// Gaussian point-spread width, m; `None` means one pixel.
    pub resolution_blur: Option<f64>,
    pub noise: NoiseConfig,
    pub frame: Frame,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            tof_time: 12e-3,
            pixel_size: 0.5e-6,
            n_pixels: None,
            onsite_width: None,
            resolution_blur: None,
            noise: NoiseConfig::default(),
            frame: Frame::Comoving,
        }
    }
}

impl ImagingConfig {
    pub fn blur(&self) -> f64 {
        self.resolution_blur.unwrap_or(self.pixel_size)
    }

    pub fn pixel_count(&self, params: &HubbardParams) -> usize {
        self.n_pixels.unwrap_or_else(|| {
            let half = (3.0 * params.peak_spacing(self.tof_time) / self.pixel_size).ceil() as usize;
            2 * half + 1
        })
    }

    /// Pixel centres, symmetric about zero.
    pub fn positions(&self, params: &HubbardParams) -> Vec<f64> {
        let n = self.pixel_count(params);
        let mid = (n as f64 - 1.0) / 2.0;
        (0..n).map(|p| (p as f64 - mid) * self.pixel_size).collect()
    }

    pub fn validate(&self, params: &HubbardParams) -> Result<()> {
        if !(self.tof_time > 0.0) {
            return Err(Error::Config("time of flight must be > 0".into()));
        }
        if !(self.pixel_size > 0.0) {
            return Err(Error::Config("pixel size must be > 0".into()));
        }
        if self.blur() < 0.0 {
            return Err(Error::Config("resolution blur must be >= 0".into()));
        }
        if matches!(self.onsite_width, Some(w) if !(w > 0.0)) {
            return Err(Error::Config("on-site width must be > 0".into()));
        }
        let half_fov = 0.5 * (self.pixel_count(params) as f64 - 1.0) * self.pixel_size;
        if half_fov < 1.5 * params.peak_spacing(self.tof_time) {
            return Err(Error::Config(format!(
                "field of view ±{:.1} μm does not reach 1.5 diffraction orders",
                half_fov * 1e6
            )));
        }
        let n = &self.noise;
        if !(0.0..1.0).contains(&n.number_fluct_sigma) || n.photon_sigma < 0.0 {
            return Err(Error::Config("noise amplitudes out of range".into()));
        }
        Ok(())
    }
}

/// Provenance carried with a profile.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileMeta {
    pub n_samples: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// One-dimensional density after time of flight, atoms per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    /// Pixel centres, m.
    pub positions: Vec<f64>,
    pub density: Vec<f64>,
    pub meta: ProfileMeta,
}

impl DensityProfile {
    pub fn total(&self) -> f64 {
        self.density.iter().sum()
    }

    pub fn pixel_size(&self) -> f64 {
        if self.positions.len() > 1 {
            self.positions[1] - self.positions[0]
        } else {
            0.0
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            density: vec![0.0; self.density.len()],
            ..self.clone()
        }
    }
}

/// Far-field density of one realization.
pub fn synthesize_profile(
    state: &ArrayState,
    params: &HubbardParams,
    config: &ImagingConfig,
) -> Result<DensityProfile> {
    config.validate(params)?;
    let positions = config.positions(params);
    let amps = match config.frame {
        Frame::Lab => state.amplitudes.clone(),
        Frame::Comoving => state.comoving_amplitudes(),
    };
    let a_z = config.onsite_width.unwrap_or(params.axial_width);
    let d = params.site_spacing;
    // k per metre of image-plane position and its per-pixel step
    let k_per_x = params.atom_mass / (HBAR * config.tof_time);
    let dk = k_per_x * config.pixel_size;
    // |ψ̃(k)|² normalized to ∫ dk/2π = 1
    let env_norm = 2.0 * PI.sqrt() * a_z;
    let mut density: Vec<f64> = positions
        .iter()
        .map(|&x| {
            let k = k_per_x * x;
            let w = Complex64::from_polar(1.0, k * d);
            let af = amps.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * w + c);
            state.total_atoms * af.norm_sqr() * env_norm * (-(k * a_z).powi(2)).exp() * dk / (2.0 * PI)
        })
        .collect();
    let captured: f64 = density.iter().sum();
    let clipped = 1.0 - captured / state.total_atoms;
    if clipped > MAX_CLIPPED_FRACTION {
        return Err(Error::Clipping { fraction: clipped });
    }
    let blur = config.blur();
    if blur > 0.0 {
        density = gaussian_blur(&density, blur / config.pixel_size);
    }
    Ok(DensityProfile {
        positions,
        density,
        meta: ProfileMeta {
            n_samples: 1,
            ..ProfileMeta::default()
        },
    })
}

/// Convolution with a normalized Gaussian of width `sigma_px` pixels.
pub fn gaussian_blur(values: &[f64], sigma_px: f64) -> Vec<f64> {
    if sigma_px <= 0.0 {
        return values.to_vec();
    }
    let half = (4.0 * sigma_px).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|j| (-0.5 * (j as f64 / sigma_px).powi(2)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let n = values.len() as isize;
    (0..n)
        .map(|p| {
            kernel
                .iter()
                .enumerate()
                .filter_map(|(m, w)| {
                    let q = p + m as isize - half;
                    (0..n).contains(&q).then(|| w * values[q as usize])
                })
                .sum::<f64>()
                / ksum
        })
        .collect()
}

/// Mean of single-shot profiles, accumulated in the given order.
pub fn average_profiles(profiles: &[DensityProfile]) -> Result<DensityProfile> {
    let first = profiles
        .first()
        .ok_or_else(|| Error::Domain("no profiles to average".into()))?;
    let mut out = first.zeros_like();
    for p in profiles {
        if p.density.len() != out.density.len() {
            return Err(Error::Domain("profiles on different grids".into()));
        }
        for (o, v) in out.density.iter_mut().zip(&p.density) {
            *o += v;
        }
    }
    let m = profiles.len() as f64;
    out.density.iter_mut().for_each(|v| *v /= m);
    out.meta.n_samples = profiles.iter().map(|p| p.meta.n_samples).sum();
    Ok(out)
}

/// One noisy shot: lognormal rescaling of the atom number, Poissonian
/// counting per pixel and optional additive detection noise (clipped at 0).
pub fn add_noise(profile: &DensityProfile, config: &NoiseConfig, seed: u64) -> DensityProfile {
    add_noise_stream(profile, config, seed, 0)
}

/// As [`add_noise`] with an explicit random stream, so that every shot of an
/// ensemble draws from its own sequence.
pub fn add_noise_stream(profile: &DensityProfile, config: &NoiseConfig, seed: u64, stream: usize) -> DensityProfile {
    if !config.enabled {
        return profile.clone();
    }
    let mut rng = sample_rng(seed, stream);
    let s = config.number_fluct_sigma;
    let scale = if s > 0.0 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        (s * z - 0.5 * s * s).exp()
    } else {
        1.0
    };
    let photon = Normal::new(0.0, config.photon_sigma.max(0.0)).expect("finite sigma");
    let density = profile
        .density
        .iter()
        .map(|&v| {
            let mean = (v * scale).max(0.0);
            let mut out = if config.atom_shot && mean > 0.0 {
                Poisson::new(mean).map(|p| p.sample(&mut rng)).unwrap_or(mean)
            } else {
                mean
            };
            if config.photon_shot && config.photon_sigma > 0.0 {
                out = (out + photon.sample(&mut rng)).max(0.0);
            }
            out
        })
        .collect();
    DensityProfile {
        density,
        meta: ProfileMeta {
            seed,
            ..profile.meta.clone()
        },
        ..profile.clone()
    }
}

/// Two-dimensional rendering: the profile times a normalized transverse
/// Gaussian, so that every column sums back to the profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Row-major atoms per pixel.
    pub pixels: Vec<f64>,
    pub pixel_size: f64,
}

pub fn render_image(profile: &DensityProfile, transverse_width: f64) -> Result<Image> {
    let pixel = profile.pixel_size();
    if !(transverse_width > 0.0) || !(pixel > 0.0) {
        return Err(Error::Domain(
            "render needs a positive transverse width and pixel size".into(),
        ));
    }
    let half = (4.0 * transverse_width / pixel).ceil() as isize;
    let column: Vec<f64> = (-half..=half)
        .map(|r| (-0.5 * (r as f64 * pixel / transverse_width).powi(2)).exp())
        .collect();
    let csum: f64 = column.iter().sum();
    let width = profile.density.len();
    let mut pixels = Vec::with_capacity(width * column.len());
    for g in &column {
        pixels.extend(profile.density.iter().map(|v| v * g / csum));
    }
    Ok(Image {
        width,
        height: column.len(),
        pixels,
        pixel_size: pixel,
    })
}

impl Image {
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.width)
            .map(|c| (0..self.height).map(|r| self.pixels[r * self.width + c]).sum())
            .collect()
    }

    /// 16-bit gray levels; the brightest pixel maps to 65535, an empty
    /// image to all zeros.
    pub fn gray_levels(&self) -> Vec<u16> {
        let top = self.pixels.iter().copied().fold(0.0, f64::max);
        if top <= 0.0 {
            return vec![0; self.pixels.len()];
        }
        self.pixels
            .iter()
            .map(|v| (v.max(0.0) / top * 65535.0).round() as u16)
            .collect()
    }

    /// Binary PGM (P5, maxval 65535, big-endian) plus a `.txt` sidecar with
    /// the scale and `meta` lines.
    pub fn write_pgm(&self, path: &Path, meta: &[(String, String)]) -> Result<()> {
        let levels = self.gray_levels();
        let mut bytes = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for l in &levels {
            bytes.extend_from_slice(&l.to_be_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let side = path.with_extension("txt");
        let top = self.pixels.iter().copied().fold(0.0, f64::max);
        let mut f = std::fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
        let mut text = format!(
            "width {}\nheight {}\npixel_size_um {}\natoms_per_gray_level {:e}\n",
            self.width,
            self.height,
            self.pixel_size * 1e6,
            top / 65535.0
        );
        for (k, v) in meta {
            text.push_str(&format!("{k} {v}\n"));
        }
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&side, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ArrayEnvelope, EnsembleSpec};
    use crate::lattice::LatticeConfig;

    fn setup() -> (HubbardParams, ArrayState) {
        let cfg = LatticeConfig::default();
        let p = HubbardParams::derive(&cfg).unwrap();
        let env = ArrayEnvelope::new(&cfg, &p, &EnsembleSpec::default()).unwrap();
        (p, ArrayState::mean_field(&env))
    }

    #[test]
    fn parseval_and_peak_positions() {
        let (p, s) = setup();
        let cfg = ImagingConfig {
            resolution_blur: Some(0.0),
            ..ImagingConfig::default()
        };
        let prof = synthesize_profile(&s, &p, &cfg).unwrap();
        assert!((prof.total() / s.total_atoms - 1.0).abs() < 0.01);
        let spacing = p.peak_spacing(cfg.tof_time);
        assert!((spacing * 1e6 - 129.3).abs() < 0.1);
        // local maxima near 0 and ±spacing
        let argmax_near = |x0: f64| {
            let mut best = (0usize, f64::MIN);
            for (i, (&x, &v)) in prof.positions.iter().zip(&prof.density).enumerate() {
                if (x - x0).abs() < 0.3 * spacing && v > best.1 {
                    best = (i, v);
                }
            }
            prof.positions[best.0]
        };
        for order in [-1.0, 0.0, 1.0] {
            assert!((argmax_near(order * spacing) - order * spacing).abs() <= cfg.pixel_size);
        }
    }

    #[test]
    fn small_field_of_view_clips() {
        let (p, s) = setup();
        let n = (2.0 * 1.6 * p.peak_spacing(12e-3) / 0.5e-6) as usize;
        let mut cfg = ImagingConfig {
            n_pixels: Some(n),
            ..ImagingConfig::default()
        };
        cfg.onsite_width = Some(p.axial_width / 4.0);
        assert!(matches!(synthesize_profile(&s, &p, &cfg), Err(Error::Clipping { .. })));
    }

    #[test]
    fn noise_off_is_identity() {
        let (p, s) = setup();
        let prof = synthesize_profile(&s, &p, &ImagingConfig::default()).unwrap();
        assert_eq!(add_noise(&prof, &NoiseConfig::off(), 3), prof);
    }

    #[test]
    fn lognormal_total_spread() {
        let prof = DensityProfile {
            positions: vec![0.0, 1.0],
            density: vec![500.0, 500.0],
            meta: ProfileMeta::default(),
        };
        let cfg = NoiseConfig {
            atom_shot: false,
            ..NoiseConfig::default()
        };
        let totals: Vec<f64> = (0..10_000)
            .map(|k| add_noise_stream(&prof, &cfg, 11, k).total())
            .collect();
        let mean = totals.iter().sum::<f64>() / totals.len() as f64;
        let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (totals.len() - 1) as f64;
        assert!((var.sqrt() / mean / 0.2 - 1.0).abs() < 0.1);
    }

    #[test]
    fn poisson_pixel_spread() {
        let prof = DensityProfile {
            positions: vec![0.0],
            density: vec![400.0],
            meta: ProfileMeta::default(),
        };
        let cfg = NoiseConfig {
            number_fluct_sigma: 0.0,
            ..NoiseConfig::default()
        };
        let v: Vec<f64> = (0..4000)
            .map(|k| add_noise_stream(&prof, &cfg, 5, k).density[0])
            .collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((sd - 20.0).abs() < 1.5, "{sd}");
    }

    #[test]
    fn image_columns_and_gray_levels() {
        let prof = DensityProfile {
            positions: (0..50).map(|i| i as f64 * 1e-6).collect(),
            density: (0..50).map(|i| (i as f64 - 20.0).abs()).collect(),
            meta: ProfileMeta::default(),
        };
        let img = render_image(&prof, 4e-6).unwrap();
        for (a, b) in img.column_sums().iter().zip(&prof.density) {
            assert!((a - b).abs() <= 1e-3 * b.max(1e-12));
        }
        assert_eq!(img.gray_levels().iter().copied().max(), Some(65535));
        let zero = render_image(&prof.zeros_like(), 4e-6).unwrap();
        assert!(zero.gray_levels().iter().all(|&g| g == 0));
    }

    #[test]
    fn blur_conserves_interior_mass() {
        let mut v = vec![0.0; 101];
        v[50] = 1.0;
        let b = gaussian_blur(&v, 2.0);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
