//! End-to-end experiments: sample an ensemble, hold it in the tilted
//! lattice, image it after time of flight and analyse the images.
//!
//! During a hold with `E ≥ κγ` (κ = `isolation_ratio`) the wells are treated
//! as isolated and evolved exactly; the Wannier-Stark states of a strongly
//! tilted lattice do not exchange atoms. Weaker tilts use the coupled
//! integrator.

use num_complex::Complex64;

use crate::analysis::{
    central_width_with_spacing, fit_coherence_time, fit_peaks, incoherent_fraction, CentralWidth, CoherenceScan,
    FitResult, Fraction, WidthMeasure,
};
use crate::dynamics::{
    equilibrium_confinement, evolve, evolve_isolated, quasimomentum, run_ensemble, sample_array, sawtooth_period,
    ArrayEnvelope, ArrayState, EnsembleSpec,
};
use crate::error::{Error, Result};
use crate::imaging::{add_noise_stream, synthesize_profile, DensityProfile, Frame, ImagingConfig, ProfileMeta};
use crate::lattice::{HubbardParams, LatticeConfig};
use crate::states::{coherence_time, quantum_depletion, squeezed_sigma, NumberModel, NumberStatistics};

/// Default tilt-to-tunneling ratio above which wells are held isolated.
pub const DEFAULT_ISOLATION_RATIO: f64 = 2.0;
/// Sites of the periodic array used for the depletion estimate.
pub const DEPLETION_SITES: usize = 32;
/// Offset separating imaging-noise streams from the sampling streams.
const NOISE_SEED_OFFSET: u64 = 0x5DEE_CE66_D1CE_5EED;

/// Everything needed to run an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub lattice: LatticeConfig,
    pub ensemble: EnsembleSpec,
    pub imaging: ImagingConfig,
    pub isolation_ratio: f64,
    pub width_measure: WidthMeasure,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            lattice: LatticeConfig::default(),
            ensemble: EnsembleSpec::default(),
            imaging: ImagingConfig::default(),
            isolation_ratio: DEFAULT_ISOLATION_RATIO,
            width_measure: WidthMeasure::Effective,
        }
    }
}

impl Scenario {
    pub fn params(&self) -> Result<HubbardParams> {
        HubbardParams::derive(&self.lattice)
    }

    pub fn with_depth(&self, depth_u: f64) -> Self {
        Self {
            lattice: self.lattice.with_depth(depth_u),
            ..self.clone()
        }
    }

    pub fn with_model(&self, model: NumberModel) -> Self {
        let mut s = self.clone();
        s.ensemble.number_model = model;
        s
    }

    /// Whether a hold at tilt `e` treats the wells as isolated.
    pub fn isolated(&self, params: &HubbardParams, e: f64) -> bool {
        params.gamma == 0.0 || (e > 0.0 && e >= self.isolation_ratio * params.gamma)
    }

    /// Central-well statistics under the configured number model.
    pub fn central_statistics(&self, params: &HubbardParams) -> Result<NumberStatistics> {
        NumberStatistics::for_model(
            self.ensemble.number_model,
            self.lattice.central_occupation(),
            params.g_beta,
            params.gamma,
            self.ensemble.squeezing_formula,
        )
    }
}

/// States of one sample at each of `times` after a hold at tilt `e`, in the
/// confinement that keeps the envelope stationary under the active
/// (isolated or coupled) dynamics.
pub fn hold_series(
    sc: &Scenario,
    state: &ArrayState,
    params: &HubbardParams,
    e: f64,
    times: &[f64],
) -> Result<Vec<ArrayState>> {
    let isolated = sc.isolated(params, e);
    let mut held = state.clone();
    held.confinement = equilibrium_confinement(
        &state.occupations,
        params.g_beta,
        if isolated { 0.0 } else { params.gamma },
    );
    if isolated {
        Ok(times.iter().map(|&t| evolve_isolated(&held, params, e, t)).collect())
    } else {
        let t_end = times.iter().copied().fold(0.0, f64::max);
        Ok(evolve(&held, params, e, None, t_end, times)?.states)
    }
}

/// Ensemble observables at one time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    /// Mean of the single-shot profiles.
    pub profile: DensityProfile,
    /// Ensemble neighbour coherence `|⟨Σ a_{i+1} a_i*⟩| / ⟨Σ|a_{i+1}||a_i|⟩`.
    pub coherence: f64,
    pub analysis: std::result::Result<ProfileAnalysis, String>,
}

#[derive(Debug, Clone)]
pub struct ProfileAnalysis {
    pub fit: FitResult,
    pub width: CentralWidth,
    pub fraction: Fraction,
}

impl Snapshot {
    pub fn width(&self) -> Option<f64> {
        self.analysis.as_ref().ok().map(|a| a.width.value)
    }

    pub fn fraction(&self) -> Option<f64> {
        self.analysis.as_ref().ok().map(|a| a.fraction.value)
    }
}

/// Fit one profile and derive its width and incoherent fraction.
pub fn analyse_profile(
    profile: &DensityProfile,
    params: &HubbardParams,
    imaging: &ImagingConfig,
    measure: WidthMeasure,
) -> Result<ProfileAnalysis> {
    let spacing = params.peak_spacing(imaging.tof_time);
    let fit = fit_peaks(profile, spacing)?;
    let width = central_width_with_spacing(&fit, spacing, measure);
    let fraction = incoherent_fraction(&fit);
    Ok(ProfileAnalysis { fit, width, fraction })
}

/// Run every sample through `series` (which returns its states at each of
/// `times`), image each state, average in sample order and analyse.
///
/// In the comoving frame each time is recentred on the ensemble-mean
/// quasimomentum, which differs from `E t` when a weak tilt only displaces
/// the cloud in its trap.
pub fn ensemble_snapshots<F>(sc: &Scenario, params: &HubbardParams, times: &[f64], series: F) -> Result<Vec<Snapshot>>
where
    F: Fn(&ArrayState) -> Result<Vec<ArrayState>> + Sync + Send,
{
    let spec = &sc.ensemble;
    if spec.n_samples == 0 {
        return Err(Error::Config("ensemble needs at least one sample".into()));
    }
    sc.imaging.validate(params)?;
    let env = ArrayEnvelope::new(&sc.lattice, params, spec)?;
    let n_t = times.len();
    let per_sample = run_ensemble(spec.n_samples, spec.workers, |k| {
        let initial = sample_array(&env, spec.master_seed, k);
        let states = series(&initial)?;
        if states.len() != n_t {
            return Err(Error::Domain("series returned the wrong number of states".into()));
        }
        Ok(states)
    })?;

    let mut sums = vec![(Complex64::new(0.0, 0.0), 0.0); n_t];
    for states in &per_sample {
        for (acc, st) in sums.iter_mut().zip(states) {
            let (c, w) = neighbour_sums(st);
            acc.0 += c;
            acc.1 += w;
        }
    }
    // the phase of the mean resultant is noise below ~3/√(samples · bonds)
    let floor = 3.0 / ((spec.n_samples * env.len().saturating_sub(1).max(1)) as f64).sqrt();
    let recentre: Vec<f64> = sums
        .iter()
        .map(|&(c, w)| {
            if sc.imaging.frame == Frame::Comoving && w > 0.0 && c.norm() / w > floor {
                c.arg()
            } else {
                0.0
            }
        })
        .collect();

    let shots = run_ensemble(spec.n_samples, spec.workers, |k| {
        per_sample[k]
            .iter()
            .zip(&recentre)
            .enumerate()
            .map(|(j, (st, phi))| {
                let mut st = st.clone();
                st.bloch_phase -= phi;
                let clean = synthesize_profile(&st, params, &sc.imaging)?;
                let shot = add_noise_stream(
                    &clean,
                    &sc.imaging.noise,
                    spec.master_seed.wrapping_add(NOISE_SEED_OFFSET),
                    k * n_t + j,
                );
                Ok(shot.density)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let positions = sc.imaging.positions(params);
    let m = spec.n_samples as f64;
    let mut snaps = Vec::with_capacity(n_t);
    for (j, &t) in times.iter().enumerate() {
        let mut density = vec![0.0; positions.len()];
        for sample in &shots {
            for (acc, v) in density.iter_mut().zip(&sample[j]) {
                *acc += v;
            }
        }
        density.iter_mut().for_each(|v| *v /= m);
        let profile = DensityProfile {
            positions: positions.clone(),
            density,
            meta: ProfileMeta {
                n_samples: spec.n_samples,
                seed: spec.master_seed,
                config_hash: String::new(),
            },
        };
        let analysis = analyse_profile(&profile, params, &sc.imaging, sc.width_measure).map_err(|e| e.to_string());
        let (c, w) = sums[j];
        snaps.push(Snapshot {
            time: t,
            profile,
            coherence: if w > 0.0 { c.norm() / w } else { 0.0 },
            analysis,
        });
    }
    Ok(snaps)
}

fn neighbour_sums(st: &ArrayState) -> (Complex64, f64) {
    let amps = st.comoving_amplitudes();
    amps.windows(2).fold((Complex64::new(0.0, 0.0), 0.0), |(c, w), p| {
        (c + p[1] * p[0].conj(), w + p[1].norm() * p[0].norm())
    })
}

/// Width growth during a hold at the configured gradient and the fitted
/// coherence time.
#[derive(Debug, Clone)]
pub struct CoherenceRun {
    pub depth_u: f64,
    pub model: NumberModel,
    pub params: HubbardParams,
    pub snapshots: Vec<Snapshot>,
    pub scan: std::result::Result<CoherenceScan, String>,
    /// `1 / (gβ σ)` for the central well.
    pub closed_form_tau: f64,
}

pub fn coherence_run(sc: &Scenario, hold_times: &[f64]) -> Result<CoherenceRun> {
    let params = sc.params()?;
    let e = sc.lattice.gradient_e;
    let snapshots = ensemble_snapshots(sc, &params, hold_times, |s| hold_series(sc, s, &params, e, hold_times))?;
    let (ts, ws): (Vec<f64>, Vec<f64>) = snapshots.iter().filter_map(|s| s.width().map(|w| (s.time, w))).unzip();
    let scan = fit_coherence_time(&ts, &ws).map_err(|e| e.to_string());
    let closed_form_tau = coherence_time(&sc.central_statistics(&params)?, params.g_beta)?;
    Ok(CoherenceRun {
        depth_u: sc.lattice.depth_u,
        model: sc.ensemble.number_model,
        params,
        snapshots,
        scan,
        closed_form_tau,
    })
}

/// One depth of a coherence-vs-depth table.
#[derive(Debug, Clone)]
pub struct DepthRow {
    pub depth_u: f64,
    pub gamma: f64,
    pub g_beta: f64,
    pub n_center: f64,
    pub sigma_squeezed: f64,
    pub tau_closed_coherent: f64,
    pub tau_closed_squeezed: f64,
    pub tau_coherent: std::result::Result<CoherenceScan, String>,
    pub tau_squeezed: std::result::Result<CoherenceScan, String>,
}

/// Coherent and squeezed pipelines at every depth. Failures are kept per
/// row instead of aborting the table.
pub fn coherence_vs_depth(
    sc: &Scenario,
    depths: &[f64],
    hold_times: &[f64],
) -> Vec<std::result::Result<DepthRow, String>> {
    depths
        .iter()
        .map(|&u| {
            let scd = sc.with_depth(u);
            let params = scd.params().map_err(|e| e.to_string())?;
            let n = scd.lattice.central_occupation();
            let sigma = squeezed_sigma(n, params.g_beta, params.gamma, scd.ensemble.squeezing_formula)
                .map_err(|e| e.to_string())?;
            let run = |model| -> std::result::Result<CoherenceScan, String> {
                let r = coherence_run(&scd.with_model(model), hold_times).map_err(|e| e.to_string())?;
                r.scan
            };
            Ok(DepthRow {
                depth_u: u,
                gamma: params.gamma,
                g_beta: params.g_beta,
                n_center: n,
                sigma_squeezed: sigma,
                tau_closed_coherent: 1.0 / (params.g_beta * n.sqrt()),
                tau_closed_squeezed: 1.0 / (params.g_beta * sigma),
                tau_coherent: run(NumberModel::Coherent),
                tau_squeezed: run(NumberModel::Squeezed),
            })
        })
        .collect()
}

/// Central width after a fixed hold, for each tilt.
#[derive(Debug, Clone)]
pub struct GradientPoint {
    pub gradient_e: f64,
    pub isolated: bool,
    pub snapshot: Snapshot,
}

/// Same samples (same seed) for every tilt, so differences between points
/// come from the tilt alone.
pub fn gradient_scan(sc: &Scenario, gradients: &[f64], hold: f64) -> Result<Vec<GradientPoint>> {
    let params = sc.params()?;
    gradients
        .iter()
        .map(|&e| {
            let snap = ensemble_snapshots(sc, &params, &[hold], |s| hold_series(sc, s, &params, e, &[hold]))?
                .pop()
                .expect("one time");
            Ok(GradientPoint {
                gradient_e: e,
                isolated: sc.isolated(&params, e),
                snapshot: snap,
            })
        })
        .collect()
}

/// Incoherent fraction of the freshly loaded array versus depth, next to
/// the Bogoliubov depletion.
#[derive(Debug, Clone)]
pub struct SqueezingRow {
    pub depth_u: f64,
    pub fraction: std::result::Result<Fraction, String>,
    pub depletion: f64,
    pub sigma_ratio: f64,
}

pub fn squeezing_curve(sc: &Scenario, depths: &[f64]) -> Result<Vec<SqueezingRow>> {
    depths
        .iter()
        .map(|&u| {
            let scd = sc.with_depth(u);
            let params = scd.params()?;
            let n = scd.lattice.central_occupation();
            let snap = ensemble_snapshots(&scd, &params, &[0.0], |s| Ok(vec![s.clone()]))?
                .pop()
                .expect("one time");
            let stats = scd.central_statistics(&params)?;
            Ok(SqueezingRow {
                depth_u: u,
                fraction: snap.analysis.map(|a| a.fraction),
                depletion: quantum_depletion(n, params.g_beta, params.gamma, DEPLETION_SITES)?,
                sigma_ratio: n.sqrt() / stats.sigma_n,
            })
        })
        .collect()
}

/// Width revival after the gradient is switched off.
#[derive(Debug, Clone)]
pub struct RephaseRun {
    pub params: HubbardParams,
    pub t_bloch: f64,
    pub snapshots: Vec<Snapshot>,
    /// Rephase time of the smallest width (parabolic refinement).
    pub min_width_time: Option<f64>,
    /// `2π / √(N gβ γ)`.
    pub josephson_period: f64,
}

/// Hold for `t_bloch` at the configured tilt, release the gradient (in the
/// co-moving frame), then keep holding for each of `rephase_times`. With
/// `tunneling = false` the wells stay uncoupled after the release.
pub fn rephase_run(sc: &Scenario, t_bloch: f64, rephase_times: &[f64], tunneling: bool) -> Result<RephaseRun> {
    let params = sc.params()?;
    let after = HubbardParams {
        gamma: if tunneling { params.gamma } else { 0.0 },
        ..params
    };
    let e = sc.lattice.gradient_e;
    let snapshots = ensemble_snapshots(sc, &params, rephase_times, |s| {
        let mut held = hold_series(sc, s, &params, e, &[t_bloch])?.pop().expect("one state");
        held.remove_bloch_phase();
        hold_series(sc, &held, &after, 0.0, rephase_times)
    })?;
    let (ts, ws): (Vec<f64>, Vec<f64>) = snapshots.iter().filter_map(|s| s.width().map(|w| (s.time, w))).unzip();
    let n = sc.lattice.central_occupation();
    Ok(RephaseRun {
        params,
        t_bloch,
        min_width_time: refined_minimum(&ts, &ws),
        josephson_period: std::f64::consts::TAU / (n * params.g_beta * params.gamma).sqrt(),
        snapshots,
    })
}

/// Width of the fluctuation-free, phase-locked array imaged and fitted
/// like any other profile: the transform limit of the measurement.
pub fn transform_limit(sc: &Scenario, params: &HubbardParams) -> Result<f64> {
    let env = ArrayEnvelope::new(&sc.lattice, params, &sc.ensemble)?;
    let imaging = ImagingConfig {
        noise: crate::imaging::NoiseConfig::off(),
        ..sc.imaging.clone()
    };
    let profile = synthesize_profile(&ArrayState::mean_field(&env), params, &imaging)?;
    Ok(analyse_profile(&profile, params, &imaging, sc.width_measure)?
        .width
        .value)
}

/// Location of the smallest value, refined by a parabola through the
/// neighbouring samples when it is interior.
pub fn refined_minimum(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let k = (0..ys.len()).min_by(|&a, &b| ys[a].total_cmp(&ys[b]))?;
    if k == 0 || k + 1 == ys.len() {
        return Some(xs[k]);
    }
    let (x0, x1, x2) = (xs[k - 1], xs[k], xs[k + 1]);
    let (y0, y1, y2) = (ys[k - 1], ys[k], ys[k + 1]);
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if a > 0.0 {
        Some((-b / (2.0 * a)).clamp(x0, x2))
    } else {
        Some(x1)
    }
}

/// Bloch-oscillation record of one sample in the lab frame.
#[derive(Debug, Clone)]
pub struct BlochTrajectory {
    pub times: Vec<f64>,
    pub quasimomentum: Vec<f64>,
    pub norm: Vec<f64>,
    /// Atom fractions in the windows around orders -1, 0, +1.
    pub order_weights: Vec<[f64; 3]>,
    pub states: Vec<ArrayState>,
    pub period: Option<f64>,
    pub drift_per_ms: f64,
}

/// Coupled evolution of sample 0 under the configured tilt, recorded at
/// `times`.
pub fn bloch_trajectory(sc: &Scenario, times: &[f64]) -> Result<BlochTrajectory> {
    let params = sc.params()?;
    let env = ArrayEnvelope::new(&sc.lattice, &params, &sc.ensemble)?;
    let s0 = sample_array(&env, sc.ensemble.master_seed, 0);
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let traj = evolve(&s0, &params, sc.lattice.gradient_e, None, t_end, times)?;
    let imaging = ImagingConfig {
        frame: Frame::Lab,
        ..sc.imaging.clone()
    };
    let spacing = params.peak_spacing(imaging.tof_time);
    let mut q = Vec::with_capacity(times.len());
    let mut weights = Vec::with_capacity(times.len());
    for st in &traj.states {
        q.push(quasimomentum(st)?.zone_fraction);
        weights.push(order_weights(&synthesize_profile(st, &params, &imaging)?, spacing));
    }
    Ok(BlochTrajectory {
        times: traj.times(),
        period: sawtooth_period(times, &q),
        norm: traj.states.iter().map(|s| s.norm()).collect(),
        quasimomentum: q,
        order_weights: weights,
        drift_per_ms: traj.drift_per_ms(),
        states: traj.states,
    })
}

/// Fractions of the profile within a quarter spacing of orders -1, 0, +1.
pub fn order_weights(profile: &DensityProfile, spacing: f64) -> [f64; 3] {
    let total = profile.total();
    let mut w = [0.0; 3];
    if total <= 0.0 {
        return w;
    }
    for (x, d) in profile.positions.iter().zip(&profile.density) {
        for (k, order) in [-1.0, 0.0, 1.0].iter().enumerate() {
            if (x - order * spacing).abs() < 0.25 * spacing {
                w[k] += d / total;
            }
        }
    }
    w
}

/// Evenly spaced grid from `start` to `stop` inclusive with `n` points.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![start],
        _ => (0..n)
            .map(|k| start + (stop - start) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}
