//! Interference-profile decomposition and coherence-time extraction.
//!
//! A profile is modelled as three narrow Gaussians (orders -1, 0, +1) on a
//! broad Gaussian background plus a constant. Internally positions are
//! measured in units of the expected order spacing from the middle of the
//! grid and densities in units of the profile maximum, which makes the fit
//! exactly translation- and scale-covariant.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, Bounds, LmOptions, LmOutcome};
use crate::imaging::{gaussian_blur, DensityProfile, ImagingConfig};
use crate::lattice::HubbardParams;

/// Half-width of the fitted region, in order spacings.
pub const FIT_WINDOW: f64 = 1.5;
/// Allowed relative deviation of the side-order distance from the hint.
pub const SPACING_TOLERANCE: f64 = 0.2;
/// Upper bound on a narrow width and lower bound on the broad width, in
/// order spacings.
pub const NARROW_MAX: f64 = 0.15;
pub const BROAD_MIN: f64 = 2.0 * NARROW_MAX;
pub const BROAD_MAX: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub center: f64,
    /// Standard deviation.
    pub width: f64,
    /// Peak height.
    pub amplitude: f64,
}

impl Gaussian {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (-0.5 * ((x - self.center) / self.width).powi(2)).exp()
    }

    pub fn area(&self) -> f64 {
        self.amplitude * self.width * TAU.sqrt()
    }
}

/// Three narrow orders `[left, centre, right]`, a broad peak and a baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakModel {
    pub narrow: [Gaussian; 3],
    pub broad: Gaussian,
    pub baseline: f64,
}

impl PeakModel {
    pub fn eval(&self, x: f64) -> f64 {
        self.baseline + self.broad.eval(x) + self.narrow.iter().map(|g| g.eval(x)).sum::<f64>()
    }

    /// Profile sampled on `positions`.
    pub fn render(&self, positions: &[f64]) -> DensityProfile {
        DensityProfile {
            positions: positions.to_vec(),
            density: positions.iter().map(|&x| self.eval(x)).collect(),
            meta: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWarning {
    /// The iteration limit was reached; parameters are the best found.
    NotConverged,
    /// Broad and narrow widths are nearly equal.
    Unidentifiable,
    /// A negative area entered the incoherent fraction and was clamped.
    NegativeArea,
    /// Side orders too weak to measure their distance.
    KinematicSpacing,
}

/// Index of each parameter in the internal vector.
mod ix {
    pub const A: [usize; 3] = [0, 1, 2];
    pub const C: usize = 3;
    pub const DL: usize = 4;
    pub const DR: usize = 5;
    pub const S: [usize; 3] = [6, 7, 8];
    pub const B: usize = 9;
    pub const CB: usize = 10;
    pub const SB: usize = 11;
    pub const BASE: usize = 12;
    pub const N: usize = 13;
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: PeakModel,
    pub residual_rms: f64,
    /// Variances in the order of [`FitResult::parameter_names`], physical units.
    pub covariance_diag: Vec<f64>,
    pub converged: bool,
    pub n_iterations: usize,
    pub gradient_measure: f64,
    /// Cost after every accepted iteration.
    pub cost_history: Vec<f64>,
    pub spacing_hint: f64,
    pub warnings: Vec<FitWarning>,
    /// Internal parameter vector and covariance (normalized units).
    raw: Vec<f64>,
    raw_cov: nalgebra::DMatrix<f64>,
    y_scale: f64,
}

impl FitResult {
    pub fn parameter_names() -> [&'static str; ix::N] {
        [
            "amp_left",
            "amp_center",
            "amp_right",
            "center",
            "dist_left",
            "dist_right",
            "width_left",
            "width_center",
            "width_right",
            "amp_broad",
            "center_broad",
            "width_broad",
            "baseline",
        ]
    }

    pub fn std_errors(&self) -> Vec<f64> {
        self.covariance_diag.iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    /// Mean distance of the side orders from the centre, m.
    pub fn fitted_spacing(&self) -> f64 {
        0.5 * (self.raw[ix::DL] + self.raw[ix::DR]) * self.spacing_hint
    }

    /// Build a result directly from a model (e.g. to post-process external
    /// fits); no covariance information.
    pub fn from_model(model: PeakModel, spacing_hint: f64) -> Self {
        let c = model.narrow[1].center;
        let raw = vec![
            model.narrow[0].amplitude,
            model.narrow[1].amplitude,
            model.narrow[2].amplitude,
            0.0,
            (c - model.narrow[0].center) / spacing_hint,
            (model.narrow[2].center - c) / spacing_hint,
            model.narrow[0].width / spacing_hint,
            model.narrow[1].width / spacing_hint,
            model.narrow[2].width / spacing_hint,
            model.broad.amplitude,
            (model.broad.center - c) / spacing_hint,
            model.broad.width / spacing_hint,
            model.baseline,
        ];
        Self {
            model,
            residual_rms: 0.0,
            covariance_diag: vec![0.0; ix::N],
            converged: true,
            n_iterations: 0,
            gradient_measure: 0.0,
            cost_history: vec![],
            spacing_hint,
            warnings: vec![],
            raw,
            raw_cov: nalgebra::DMatrix::zeros(ix::N, ix::N),
            y_scale: 1.0,
        }
    }
}

fn model_value(p: &[f64], u: f64) -> f64 {
    let g = |a: f64, c: f64, s: f64| a * (-0.5 * ((u - c) / s).powi(2)).exp();
    let c = p[ix::C];
    p[ix::BASE]
        + g(p[ix::A[0]], c - p[ix::DL], p[ix::S[0]])
        + g(p[ix::A[1]], c, p[ix::S[1]])
        + g(p[ix::A[2]], c + p[ix::DR], p[ix::S[2]])
        + g(p[ix::B], p[ix::CB], p[ix::SB])
}

fn bounds(pixel_u: f64) -> Bounds {
    let lo_w = (0.25 * pixel_u).max(1e-4);
    let d = (1.0 - SPACING_TOLERANCE, 1.0 + SPACING_TOLERANCE);
    let lower = vec![
        0.0, 0.0, 0.0, -0.5, d.0, d.0, lo_w, lo_w, lo_w, 0.0, -0.5, BROAD_MIN, -0.1,
    ];
    let upper = vec![
        f64::INFINITY,
        f64::INFINITY,
        f64::INFINITY,
        0.5,
        d.1,
        d.1,
        NARROW_MAX,
        NARROW_MAX,
        NARROW_MAX,
        f64::INFINITY,
        0.5,
        BROAD_MAX,
        0.1,
    ];
    let scale = vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.01, 1.0, 1.0, 0.1, 1.0];
    Bounds { lower, upper, scale }
}

/// Three-narrow plus one-broad Gaussian decomposition of `profile`.
/// `spacing_hint` is the expected distance between orders, m.
pub fn fit_peaks(profile: &DensityProfile, spacing_hint: f64) -> Result<FitResult> {
    fit_peaks_with(profile, spacing_hint, &LmOptions::default())
}

pub fn fit_peaks_with(profile: &DensityProfile, spacing_hint: f64, opts: &LmOptions) -> Result<FitResult> {
    if !(spacing_hint > 0.0) {
        return Err(Error::Fit("spacing hint must be > 0".into()));
    }
    let n = profile.positions.len();
    if n < 20 || profile.density.len() != n {
        return Err(Error::Fit("profile too short".into()));
    }
    let origin = 0.5 * (profile.positions[0] + profile.positions[n - 1]);
    let y_scale = profile.density.iter().copied().fold(0.0, f64::max);
    if !(y_scale > 0.0) {
        return Err(Error::Fit("profile has no positive density".into()));
    }
    let (us, ys): (Vec<f64>, Vec<f64>) = profile
        .positions
        .iter()
        .zip(&profile.density)
        .map(|(x, y)| ((x - origin) / spacing_hint, y / y_scale))
        .filter(|(u, _)| u.abs() <= FIT_WINDOW)
        .unzip();
    let span_lo = us.first().copied().unwrap_or(0.0);
    let span_hi = us.last().copied().unwrap_or(0.0);
    if span_lo > -1.0 - SPACING_TOLERANCE || span_hi < 1.0 + SPACING_TOLERANCE {
        return Err(Error::Fit("profile does not cover the three orders".into()));
    }
    let pixel_u = (us[1] - us[0]).abs();
    let b = bounds(pixel_u);
    let mut p0 = initial_guess(&us, &ys, pixel_u);
    b.clamp(&mut p0);
    let residual = |p: &[f64]| -> Vec<f64> { us.iter().zip(&ys).map(|(&u, &y)| model_value(p, u) - y).collect() };
    let out: LmOutcome = levenberg_marquardt(residual, &p0, &b, opts);
    if !out.cost.is_finite() {
        return Err(Error::Fit("non-finite residual".into()));
    }
    Ok(assemble(out, spacing_hint, origin, y_scale, us.len()))
}

fn initial_guess(us: &[f64], ys: &[f64], pixel_u: f64) -> Vec<f64> {
    let smooth = gaussian_blur(ys, (0.01 / pixel_u).max(1.0));
    let argmax_in = |lo: f64, hi: f64| -> (f64, f64) {
        us.iter().zip(&smooth).filter(|(u, _)| **u >= lo && **u <= hi).fold(
            (0.5 * (lo + hi), f64::MIN),
            |best, (&u, &y)| if y > best.1 { (u, y) } else { best },
        )
    };
    let value_at = |u0: f64| -> f64 {
        let k = us.partition_point(|&u| u < u0).min(us.len() - 1);
        smooth[k]
    };
    let (c0, yc) = argmax_in(-0.5, 0.5);
    // background from the midpoints between orders
    let mid = 0.5 * (value_at(c0 - 0.5) + value_at(c0 + 0.5));
    let broad0 = (mid / (-0.5f64 * (0.5 / 0.6f64).powi(2)).exp()).min(yc);
    let (cl, yl) = argmax_in(c0 - 1.0 - SPACING_TOLERANCE, c0 - 1.0 + SPACING_TOLERANCE);
    let (cr, yr) = argmax_in(c0 + 1.0 - SPACING_TOLERANCE, c0 + 1.0 + SPACING_TOLERANCE);
    let g_at = |u: f64| broad0 * (-0.5 * ((u - c0) / 0.6).powi(2)).exp();
    // half width at half maximum of the central order above the background
    let k0 = us.partition_point(|&u| u < c0).min(us.len() - 1);
    let half = 0.5 * (yc + mid);
    let mut k = k0;
    while k + 1 < us.len() && smooth[k] > half && us[k] - c0 < NARROW_MAX * 2.0 {
        k += 1;
    }
    let sigma = ((us[k] - c0) / (2.0 * 2f64.ln()).sqrt()).clamp(pixel_u, NARROW_MAX);
    vec![
        (yl - g_at(cl)).max(0.0),
        (yc - broad0).max(0.0),
        (yr - g_at(cr)).max(0.0),
        c0,
        c0 - cl,
        cr - c0,
        sigma,
        sigma,
        sigma,
        broad0.max(0.0),
        c0,
        0.6,
        0.0,
    ]
}

fn assemble(out: LmOutcome, spacing: f64, origin: f64, y_scale: f64, n_points: usize) -> FitResult {
    let p = &out.params;
    let x = |u: f64| origin + u * spacing;
    let c = p[ix::C];
    let narrow = [
        Gaussian {
            center: x(c - p[ix::DL]),
            width: p[ix::S[0]] * spacing,
            amplitude: p[ix::A[0]] * y_scale,
        },
        Gaussian {
            center: x(c),
            width: p[ix::S[1]] * spacing,
            amplitude: p[ix::A[1]] * y_scale,
        },
        Gaussian {
            center: x(c + p[ix::DR]),
            width: p[ix::S[2]] * spacing,
            amplitude: p[ix::A[2]] * y_scale,
        },
    ];
    let broad = Gaussian {
        center: x(p[ix::CB]),
        width: p[ix::SB] * spacing,
        amplitude: p[ix::B] * y_scale,
    };
    let model = PeakModel {
        narrow,
        broad,
        baseline: p[ix::BASE] * y_scale,
    };
    let unit = |j: usize| -> f64 {
        match j {
            0..=2 | 9 | 12 => y_scale,
            _ => spacing,
        }
    };
    let covariance_diag = (0..ix::N).map(|j| out.covariance[(j, j)] * unit(j).powi(2)).collect();
    let mut warnings = Vec::new();
    let converged = out.converged();
    if !converged {
        warnings.push(FitWarning::NotConverged);
    }
    let max_narrow = p[ix::S[0]].max(p[ix::S[1]]).max(p[ix::S[2]]);
    if p[ix::SB] < 2.0 * max_narrow * 1.05 {
        warnings.push(FitWarning::Unidentifiable);
    }
    FitResult {
        model,
        residual_rms: (2.0 * out.cost / n_points as f64).sqrt() * y_scale,
        covariance_diag,
        converged,
        n_iterations: out.iterations,
        gradient_measure: out.gradient_measure,
        cost_history: out.cost_history.iter().map(|c| c * y_scale * y_scale).collect(),
        spacing_hint: spacing,
        warnings,
        raw: out.params.clone(),
        raw_cov: out.covariance,
        y_scale,
    }
}

/// Broad-peak share of the fitted area, with its 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fraction {
    pub value: f64,
    pub error: f64,
    pub clamped: bool,
}

fn fraction_raw(p: &[f64]) -> (f64, bool) {
    let mut clamped = false;
    let mut area = |a: f64, s: f64| {
        let v = a * s;
        if v < 0.0 {
            clamped = true;
        }
        v.max(0.0)
    };
    let narrow: f64 = (0..3).map(|k| area(p[ix::A[k]], p[ix::S[k]])).sum();
    let broad = area(p[ix::B], p[ix::SB]);
    let total = narrow + broad;
    (
        if total > 0.0 {
            (broad / total).clamp(0.0, 1.0)
        } else {
            0.0
        },
        clamped,
    )
}

/// Broad-peak area over total fitted area, in `[0, 1]`.
pub fn incoherent_fraction(fit: &FitResult) -> Fraction {
    let (value, clamped) = fraction_raw(&fit.raw);
    let error = propagated_error(fit, |p| fraction_raw(p).0);
    Fraction { value, error, clamped }
}

/// First-order 1σ uncertainty of `g(raw parameters)` from the fit covariance.
fn propagated_error(fit: &FitResult, g: impl Fn(&[f64]) -> f64) -> f64 {
    let g0 = g(&fit.raw);
    let grad: Vec<f64> = (0..ix::N)
        .map(|j| {
            let h = 1e-7 * fit.raw[j].abs().max(1e-6);
            let mut q = fit.raw.clone();
            q[j] += h;
            (g(&q) - g0) / h
        })
        .collect();
    let mut var = 0.0;
    for a in 0..ix::N {
        for b in 0..ix::N {
            var += grad[a] * grad[b] * fit.raw_cov[(a, b)];
        }
    }
    var.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WidthMeasure {
    /// Width of the central narrow order alone.
    Narrow,
    /// Area-weighted mix of the narrow and broad widths,
    /// `(1 - f) σ_narrow + f σ_broad`.
    #[default]
    Effective,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralWidth {
    /// Width in units of the order spacing (2ħk).
    pub value: f64,
    /// 1σ fit uncertainty of `value`.
    pub error: f64,
    /// Spacing used for the conversion, m.
    pub spacing: f64,
    /// True when the fitted spacing was unusable and the kinematic one was used.
    pub kinematic_spacing: bool,
}

/// Central width of a fit in units of the order spacing.
pub fn central_width(
    fit: &FitResult,
    params: &HubbardParams,
    config: &ImagingConfig,
    measure: WidthMeasure,
) -> CentralWidth {
    let kinematic = params.peak_spacing(config.tof_time);
    central_width_with_spacing(fit, kinematic, measure)
}

pub fn central_width_with_spacing(fit: &FitResult, kinematic: f64, measure: WidthMeasure) -> CentralWidth {
    let err = fit.std_errors();
    let sides_resolved = (0..3).step_by(2).all(|k| {
        let a = fit.raw[ix::A[k]] * fit.y_scale;
        a > 0.0 && a > 3.0 * err[ix::A[k]]
    });
    let fitted = fit.fitted_spacing();
    let (spacing, kinematic_spacing) = if sides_resolved && ((fitted / kinematic) - 1.0).abs() <= SPACING_TOLERANCE {
        (fitted, false)
    } else {
        (kinematic, true)
    };
    let raw_width = |p: &[f64]| match measure {
        WidthMeasure::Narrow => p[ix::S[1]],
        WidthMeasure::Effective => {
            let f = fraction_raw(p).0;
            (1.0 - f) * p[ix::S[1]] + f * p[ix::SB]
        }
    };
    let to_spacing = fit.spacing_hint / spacing;
    CentralWidth {
        value: raw_width(&fit.raw) * to_spacing,
        error: propagated_error(fit, raw_width) * to_spacing,
        spacing,
        kinematic_spacing,
    }
}

/// Transform-limited σ of the central order for a Gaussian envelope of
/// 1/e radius `r_sites`: `1 / (2√2 π R)` order spacings.
pub fn transform_limited_width(r_sites: f64) -> f64 {
    1.0 / (2.0 * 2f64.sqrt() * PI * r_sites)
}

/// `w(t) = w_f - (w_f - w_0) exp(-(t/τ)²)`.
pub fn width_model(t: f64, w0: f64, wf: f64, tau: f64) -> f64 {
    wf - (wf - w0) * (-(t / tau).powi(2)).exp()
}

/// Result of fitting the width growth.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceScan {
    pub times: Vec<f64>,
    pub widths: Vec<f64>,
    pub tau_c: f64,
    pub tau_c_err: f64,
    pub w_0: f64,
    pub w_0_err: f64,
    pub w_f: f64,
    pub w_f_err: f64,
    pub converged: bool,
    /// Widths fall by more than the noise somewhere, the residual is large
    /// compared with the rise, or `w_f <= w_0`.
    pub poor_fit: bool,
    /// τ lies outside the sampled time range.
    pub extrapolated: bool,
    pub residual_rms: f64,
}

/// Least-squares fit of [`width_model`] to `(times, widths)`.
pub fn fit_coherence_time(times: &[f64], widths: &[f64]) -> Result<CoherenceScan> {
    if times.len() != widths.len() || times.len() < 5 {
        return Err(Error::Fit("need at least five (time, width) points".into()));
    }
    if times.iter().chain(widths).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite input".into()));
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let w_max = widths.iter().copied().fold(0.0, f64::max);
    if !(t_max > 0.0) || !(w_max > 0.0) {
        return Err(Error::Fit("times and widths must include positive values".into()));
    }
    let ts: Vec<f64> = times.iter().map(|t| t / t_max).collect();
    let ws: Vec<f64> = widths.iter().map(|w| w / w_max).collect();
    // start: earliest width, latest width, half-rise time
    let k_first = (0..ts.len()).min_by(|&a, &b| ts[a].total_cmp(&ts[b])).unwrap_or(0);
    let k_last = (0..ts.len()).max_by(|&a, &b| ts[a].total_cmp(&ts[b])).unwrap_or(0);
    let (w0, wf) = (ws[k_first], ws[k_last].max(ws[k_first] * 1.01));
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    let half = 0.5 * (w0 + wf);
    let t_half = order.iter().find(|&&k| ws[k] >= half).map_or(0.5, |&k| ts[k].max(0.05));
    let tau0 = t_half / 2f64.ln().sqrt();
    let b = Bounds {
        lower: vec![0.0, 0.0, 1e-4],
        upper: vec![f64::INFINITY, f64::INFINITY, 1e3],
        scale: vec![1.0, 1.0, 1.0],
    };
    let residual = |p: &[f64]| -> Vec<f64> {
        ts.iter()
            .zip(&ws)
            .map(|(&t, &w)| width_model(t, p[0], p[1], p[2]) - w)
            .collect()
    };
    let out = levenberg_marquardt(residual, &[w0, wf, tau0], &b, &LmOptions::default());
    let p = &out.params;
    let se = out.std_errors();
    let rms = (2.0 * out.cost / ts.len() as f64).sqrt();
    // a difference of two noisy points has spread √2·rms
    let drop_limit = 3.0 * 2f64.sqrt() * rms + 1e-9;
    let falls = order.windows(2).any(|w| ws[w[0]] - ws[w[1]] > drop_limit);
    let misfit = rms > 0.1 * (p[1] - p[0]).abs();
    let tau = p[2] * t_max;
    let t_min_pos = times.iter().copied().filter(|&t| t > 0.0).fold(f64::INFINITY, f64::min);
    Ok(CoherenceScan {
        times: times.to_vec(),
        widths: widths.to_vec(),
        tau_c: tau,
        tau_c_err: se[2] * t_max,
        w_0: p[0] * w_max,
        w_0_err: se[0] * w_max,
        w_f: p[1] * w_max,
        w_f_err: se[1] * w_max,
        converged: out.converged(),
        poor_fit: falls || misfit || p[1] <= p[0],
        extrapolated: tau > t_max || tau < t_min_pos,
        residual_rms: rms * w_max,
    })
}
