//! Mean-field dynamics of the lattice array with sampled initial number and
//! phase fluctuations.
//!
//! Each sample is a discrete nonlinear Schrödinger trajectory
//!
//! ```text
//! i da_i/dt = -γ (a_{i+1} + a_{i-1}) + (ε_i + gβ N_tot |a_i|²) a_i
//! ```
//!
//! with `ε_i = E i + V_i`. `V_i` is the confining potential that holds the
//! envelope `N_i` in equilibrium (see [`equilibrium_confinement`]), so that
//! only the sampled fluctuations dephase the array.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{HubbardParams, LatticeConfig};
use crate::states::{sigma_unchecked, NumberModel, SqueezingFormula};

/// Largest acceptable norm drift over one run.
pub const MAX_RUN_DRIFT: f64 = 1e-6;
/// Largest acceptable clipping bias of the sampled total atom number.
pub const MAX_TRUNCATION_BIAS: f64 = 0.01;
/// Steps per fastest period used when no step is given.
pub const STEPS_PER_RATE: f64 = 50.0;

/// Sampling recipe for an ensemble of initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSpec {
    pub n_samples: usize,
    pub number_model: NumberModel,
    pub squeezing_formula: SqueezingFormula,
    /// Fixed per-site phase spread (rad). `None` pairs it with the number
    /// spread as `1 / (2σ_i)`.
    pub phase_sigma: Option<f64>,
    pub master_seed: u64,
    /// Worker threads; 0 uses all available cores.
    pub workers: usize,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            n_samples: 128,
            number_model: NumberModel::Coherent,
            squeezing_formula: SqueezingFormula::HalfRatio,
            phase_sigma: None,
            master_seed: 1,
            workers: 0,
        }
    }
}

/// Mean occupations and fluctuation widths of every site in the window.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayEnvelope {
    /// Site labels, centred on 0.
    pub sites: Vec<i64>,
    /// Mean occupations N_i.
    pub occupations: Vec<f64>,
    /// Number spread σ_i.
    pub number_sigmas: Vec<f64>,
    /// Phase spread per site.
    pub phase_sigmas: Vec<f64>,
    /// Confinement of uncoupled wells, rad/s.
    pub confinement: Vec<f64>,
}

impl ArrayEnvelope {
    /// Gaussian envelope `N_0 exp(-i²/R²)` over `i ∈ [-⌈2R⌉, ⌈2R⌉]`.
    pub fn new(config: &LatticeConfig, params: &HubbardParams, spec: &EnsembleSpec) -> Result<Self> {
        config.validate()?;
        let r = config.array_radius_sites;
        let n0 = config.central_occupation();
        let half = (2.0 * r).ceil() as i64;
        let sites: Vec<i64> = (-half..=half).collect();
        let occupations: Vec<f64> = sites
            .iter()
            .map(|&i| n0 * (-((i * i) as f64) / (r * r)).exp())
            .collect();
        let number_sigmas: Vec<f64> = occupations
            .iter()
            .map(|&n| match spec.number_model {
                NumberModel::Coherent => n.sqrt(),
                NumberModel::Squeezed => sigma_unchecked(n, params.g_beta, params.gamma, spec.squeezing_formula),
            })
            .collect();
        let phase_sigmas = number_sigmas
            .iter()
            .map(|&s| match spec.phase_sigma {
                Some(p) => p,
                None if s > 0.0 => 1.0 / (2.0 * s),
                None => f64::INFINITY,
            })
            .collect();
        let confinement = equilibrium_confinement(&occupations, params.g_beta, 0.0);
        let env = Self {
            sites,
            occupations,
            number_sigmas,
            phase_sigmas,
            confinement,
        };
        let bias = env.truncation_bias();
        if bias > MAX_TRUNCATION_BIAS {
            return Err(Error::Config(format!(
                "clipping the number distribution at zero biases the atom number by {:.2}% (limit 1%)",
                100.0 * bias
            )));
        }
        Ok(env)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn total_atoms(&self) -> f64 {
        self.occupations.iter().sum()
    }

    /// Relative shift of the mean total atom number caused by clipping each
    /// normal draw at zero: `Σ (σφ(z) - N Φ(-z)) / Σ N` with `z = N/σ`.
    pub fn truncation_bias(&self) -> f64 {
        let shift: f64 = self
            .occupations
            .iter()
            .zip(&self.number_sigmas)
            .filter(|(_, &s)| s > 0.0)
            .map(|(&n, &s)| {
                let z = n / s;
                let pdf = (-0.5 * z * z).exp() / TAU.sqrt();
                let tail = 0.5 * libm::erfc(z / std::f64::consts::SQRT_2);
                s * pdf - n * tail
            })
            .sum();
        shift / self.total_atoms()
    }
}

/// Site potential `V_i` (with `V_0 = 0` at the centre) for which the real
/// envelope `√N_i` is a stationary state:
/// `V_i = gβ (N_0 - N_i) + γ (K_i - K_0)`, `K_i = (√N_{i+1} + √N_{i-1}) / √N_i`.
/// With `γ = 0` only the interaction term remains.
pub fn equilibrium_confinement(occupations: &[f64], g_beta: f64, gamma: f64) -> Vec<f64> {
    let n = occupations.len();
    let psi: Vec<f64> = occupations.iter().map(|v| v.sqrt()).collect();
    let kinetic = |i: usize| -> f64 {
        if gamma == 0.0 || psi[i] == 0.0 {
            return 0.0;
        }
        let up = if i + 1 < n { psi[i + 1] } else { 0.0 };
        let down = if i > 0 { psi[i - 1] } else { 0.0 };
        (up + down) / psi[i]
    };
    let c = n / 2;
    let (n0, k0) = (occupations[c], kinetic(c));
    (0..n)
        .map(|i| g_beta * (n0 - occupations[i]) + gamma * (kinetic(i) - k0))
        .collect()
}

/// One realization of the array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayState {
    pub sites: Vec<i64>,
    /// Normalized amplitudes, `Σ|a_i|² = 1`.
    pub amplitudes: Vec<Complex64>,
    /// Mean occupations N_i of the envelope.
    pub occupations: Vec<f64>,
    /// Confinement V_i, rad/s.
    pub confinement: Vec<f64>,
    /// Sampled total atom number of this realization.
    pub total_atoms: f64,
    pub time: f64,
    /// Accumulated `∫E dt`: phase per site imprinted by the gradient.
    pub bloch_phase: f64,
}

impl ArrayState {
    /// Phase-locked state with exactly the envelope occupations.
    pub fn mean_field(env: &ArrayEnvelope) -> Self {
        let total = env.total_atoms();
        Self {
            sites: env.sites.clone(),
            amplitudes: env
                .occupations
                .iter()
                .map(|n| Complex64::new((n / total).sqrt(), 0.0))
                .collect(),
            occupations: env.occupations.clone(),
            confinement: env.confinement.clone(),
            total_atoms: total,
            time: 0.0,
            bloch_phase: 0.0,
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Atoms in each site, `N_tot |a_i|²`.
    pub fn site_atoms(&self) -> Vec<f64> {
        self.amplitudes
            .iter()
            .map(|a| self.total_atoms * a.norm_sqr())
            .collect()
    }

    /// `ε_i = E i + V_i`.
    pub fn site_energies(&self, gradient_e: f64) -> Vec<f64> {
        self.sites
            .iter()
            .zip(&self.confinement)
            .map(|(&i, v)| gradient_e * i as f64 + v)
            .collect()
    }

    /// Amplitudes with the gradient phase `e^{-i E i t}` undone, i.e. the
    /// state seen in the frame co-moving with the Bloch oscillation.
    pub fn comoving_amplitudes(&self) -> Vec<Complex64> {
        self.sites
            .iter()
            .zip(&self.amplitudes)
            .map(|(&i, a)| a * Complex64::from_polar(1.0, self.bloch_phase * i as f64))
            .collect()
    }

    /// Move to the co-moving frame in place (release after a whole number
    /// of Bloch periods).
    pub fn remove_bloch_phase(&mut self) {
        self.amplitudes = self.comoving_amplitudes();
        self.bloch_phase = 0.0;
    }

    /// `Σ(ε_i + gβ N_tot |a_i|² / 2)|a_i|²` without the tunneling term.
    pub fn onsite_energy(&self, params: &HubbardParams, gradient_e: f64) -> f64 {
        self.site_energies(gradient_e)
            .iter()
            .zip(&self.amplitudes)
            .map(|(e, a)| {
                let p = a.norm_sqr();
                (e + 0.5 * params.g_beta * self.total_atoms * p) * p
            })
            .sum()
    }
}

/// Deterministic generator for sample `index` of an ensemble.
pub fn sample_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// Draw one realization: `n_i ~ N(N_i, σ_i²)` clipped at 0 and
/// `θ_i ~ N(0, σ_θ²)`; `a_i = √(n_i/Σn) e^{iθ_i}`.
pub fn sample_array(env: &ArrayEnvelope, master_seed: u64, index: usize) -> ArrayState {
    let mut rng = sample_rng(master_seed, index);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut n = Vec::with_capacity(env.len());
    let mut theta = Vec::with_capacity(env.len());
    for k in 0..env.len() {
        let z_n: f64 = std.sample(&mut rng);
        let z_t: f64 = std.sample(&mut rng);
        n.push((env.occupations[k] + env.number_sigmas[k] * z_n).max(0.0));
        let ps = env.phase_sigmas[k];
        // an unbounded spread means a uniformly random phase
        theta.push(if ps.is_finite() {
            ps * z_t
        } else {
            PI * libm::erf(z_t / std::f64::consts::SQRT_2)
        });
    }
    let total: f64 = n.iter().sum();
    let amplitudes = n
        .iter()
        .zip(&theta)
        .map(|(&ni, &t)| Complex64::from_polar((ni / total).sqrt(), t))
        .collect();
    ArrayState {
        sites: env.sites.clone(),
        amplitudes,
        occupations: env.occupations.clone(),
        confinement: env.confinement.clone(),
        total_atoms: total,
        time: 0.0,
        bloch_phase: 0.0,
    }
}

/// Sampled initial states of an ensemble, in sample order.
pub fn init_array(config: &LatticeConfig, params: &HubbardParams, spec: &EnsembleSpec) -> Result<Vec<ArrayState>> {
    if spec.n_samples == 0 {
        return Err(Error::Config("ensemble needs at least one sample".into()));
    }
    let env = ArrayEnvelope::new(config, params, spec)?;
    run_ensemble(spec.n_samples, spec.workers, |k| {
        Ok(sample_array(&env, spec.master_seed, k))
    })
}

/// Evaluate `job(k)` for `k in 0..n` on a pool of `workers` threads and
/// return the results in index order.
pub fn run_ensemble<T, F>(n: usize, workers: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&job).collect())
}

/// Fastest rate of the problem: `max(γ, E, gβ max n_i, max|Δε|)`.
pub fn fastest_rate(state: &ArrayState, params: &HubbardParams, gradient_e: f64) -> f64 {
    let eps = state.site_energies(gradient_e);
    let max_delta = eps.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let max_n = state.site_atoms().into_iter().fold(0.0, f64::max);
    params
        .gamma
        .max(gradient_e.abs())
        .max(params.g_beta * max_n)
        .max(max_delta)
}

/// Largest admissible step, `1 / (50 · fastest rate)`.
pub fn max_step(state: &ArrayState, params: &HubbardParams, gradient_e: f64) -> f64 {
    let rate = fastest_rate(state, params, gradient_e);
    if rate > 0.0 {
        1.0 / (STEPS_PER_RATE * rate)
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Recorded states, including the initial one.
    pub states: Vec<ArrayState>,
    /// Largest `|Σ|a|² - 1|` seen at the recorded times.
    pub norm_drift: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }

    /// Norm drift per simulated millisecond.
    pub fn drift_per_ms(&self) -> f64 {
        let span = self.states.last().map_or(0.0, |s| s.time) - self.states.first().map_or(0.0, |s| s.time);
        if span > 0.0 {
            self.norm_drift / (span * 1e3)
        } else {
            0.0
        }
    }
}

/// Fixed-step RK4 evolution for `t_end`, recording the state at each offset
/// in `record` (sorted, within `[0, t_end]`). With `dt = None` the step is
/// the largest admissible one.
pub fn evolve(
    state: &ArrayState,
    params: &HubbardParams,
    gradient_e: f64,
    dt: Option<f64>,
    t_end: f64,
    record: &[f64],
) -> Result<Trajectory> {
    if !(t_end >= 0.0) {
        return Err(Error::Domain("evolution time must be >= 0".into()));
    }
    let bound = max_step(state, params, gradient_e);
    let dt = match dt {
        Some(h) if !(h > 0.0) => return Err(Error::Domain("time step must be > 0".into())),
        Some(h) if h > bound * (1.0 + 1e-12) => {
            return Err(Error::Domain(format!(
                "time step {h:.3e} s exceeds stability bound {bound:.3e} s"
            )))
        }
        Some(h) => h,
        None => bound,
    };
    if record.windows(2).any(|w| w[1] < w[0]) || record.iter().any(|&t| t < 0.0 || t > t_end) {
        return Err(Error::Domain(
            "record times must be sorted and inside [0, t_end]".into(),
        ));
    }
    let eps = state.site_energies(gradient_e);
    let deltas: Vec<f64> = eps.windows(2).map(|w| w[1] - w[0]).collect();
    let mut stops: Vec<f64> = record.to_vec();
    if stops.last().copied() != Some(t_end) {
        stops.push(t_end);
    }
    let start = state.time;
    let mut rk = Rk4::new(state.amplitudes.len());
    let mut b = state.amplitudes.clone();
    let mut tau = 0.0;
    let mut steps = 0usize;
    let mut states = Vec::with_capacity(record.len() + 1);
    let mut drift: f64 = 0.0;
    for (k, &stop) in stops.iter().enumerate() {
        let span = stop - tau;
        if span > 0.0 {
            let n = (span / dt).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for _ in 0..n {
                rk.step(&mut b, tau, h, params, state.total_atoms, &deltas);
                tau += h;
            }
            steps += n;
        }
        tau = stop;
        let is_record = k < record.len();
        if is_record || k == stops.len() - 1 {
            let snap = snapshot(state, &b, &eps, tau, start, gradient_e);
            drift = drift.max((snap.norm() - 1.0).abs());
            if is_record {
                states.push(snap);
            }
        }
    }
    if drift > MAX_RUN_DRIFT {
        return Err(Error::StepSize {
            drift,
            limit: MAX_RUN_DRIFT,
        });
    }
    Ok(Trajectory {
        states,
        norm_drift: drift,
        steps,
    })
}

/// Final state after evolving for `t`.
pub fn propagate(state: &ArrayState, params: &HubbardParams, gradient_e: f64, t: f64) -> Result<ArrayState> {
    let traj = evolve(state, params, gradient_e, None, t, &[t])?;
    Ok(traj.states.into_iter().next().expect("one record"))
}

/// Exact evolution of uncoupled wells (`γ = 0`):
/// `a_i(t) = a_i e^{-i(ε_i + gβ N_tot|a_i|²) t}`.
pub fn evolve_isolated(state: &ArrayState, params: &HubbardParams, gradient_e: f64, t: f64) -> ArrayState {
    let eps = state.site_energies(gradient_e);
    let amplitudes = state
        .amplitudes
        .iter()
        .zip(&eps)
        .map(|(a, e)| {
            let rate = e + params.g_beta * state.total_atoms * a.norm_sqr();
            a * Complex64::from_polar(1.0, -rate * t)
        })
        .collect();
    ArrayState {
        amplitudes,
        time: state.time + t,
        bloch_phase: state.bloch_phase + gradient_e * t,
        ..state.clone()
    }
}

fn snapshot(origin: &ArrayState, b: &[Complex64], eps: &[f64], tau: f64, start: f64, gradient_e: f64) -> ArrayState {
    let amplitudes = b
        .iter()
        .zip(eps)
        .map(|(bi, e)| bi * Complex64::from_polar(1.0, -e * tau))
        .collect();
    ArrayState {
        amplitudes,
        time: start + tau,
        bloch_phase: origin.bloch_phase + gradient_e * tau,
        ..origin.clone()
    }
}

/// RK4 in the interaction picture `b_i = a_i e^{iε_i τ}`, which removes the
/// stiff linear site energies:
/// `i db_i/dτ = -γ(b_{i+1} e^{-iΔ_i τ} + b_{i-1} e^{iΔ_{i-1} τ}) + gβ N_tot |b_i|² b_i`.
struct Rk4 {
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
    phase: Vec<Complex64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); n];
        Self {
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z.clone(),
            phase: z,
        }
    }

    fn step(&mut self, b: &mut [Complex64], tau: f64, h: f64, p: &HubbardParams, n_tot: f64, deltas: &[f64]) {
        let Self { k, tmp, phase } = self;
        let g = p.g_beta * n_tot;
        let rhs = |src: &[Complex64], t: f64, phase: &mut [Complex64], out: &mut [Complex64]| {
            for (ph, d) in phase.iter_mut().zip(deltas) {
                *ph = Complex64::from_polar(1.0, -d * t);
            }
            let n = src.len();
            for i in 0..n {
                let mut hop = Complex64::new(0.0, 0.0);
                if i + 1 < n {
                    hop += src[i + 1] * phase[i];
                }
                if i > 0 {
                    hop += src[i - 1] * phase[i - 1].conj();
                }
                let v = -p.gamma * hop + g * src[i].norm_sqr() * src[i];
                out[i] = Complex64::new(v.im, -v.re);
            }
        };
        rhs(b, tau, phase, &mut k[0]);
        for i in 0..b.len() {
            tmp[i] = b[i] + 0.5 * h * k[0][i];
        }
        rhs(tmp, tau + 0.5 * h, phase, &mut k[1]);
        for i in 0..b.len() {
            tmp[i] = b[i] + 0.5 * h * k[1][i];
        }
        rhs(tmp, tau + 0.5 * h, phase, &mut k[2]);
        for i in 0..b.len() {
            tmp[i] = b[i] + h * k[2][i];
        }
        rhs(tmp, tau + h, phase, &mut k[3]);
        for i in 0..b.len() {
            b[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
    }
}

/// Quasimomentum estimate from neighbour phase differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quasimomentum {
    /// `q d / 2π`, wrapped to `(-1/2, 1/2]`.
    pub zone_fraction: f64,
    /// Normalized resultant length of `Σ a_{i+1} a_i*`.
    pub resultant: f64,
    /// False when the resultant is below `1e-3` and the phase is meaningless.
    pub defined: bool,
}

pub fn quasimomentum(state: &ArrayState) -> Result<Quasimomentum> {
    quasimomentum_of(&state.amplitudes)
}

pub fn quasimomentum_of(amplitudes: &[Complex64]) -> Result<Quasimomentum> {
    let occupied = amplitudes.iter().filter(|a| a.norm_sqr() > 0.0).count();
    if occupied < 2 {
        return Err(Error::Domain("quasimomentum needs at least two occupied sites".into()));
    }
    let (sum, weight) = amplitudes
        .windows(2)
        .fold((Complex64::new(0.0, 0.0), 0.0), |(s, w), p| {
            (s + p[1] * p[0].conj(), w + p[1].norm() * p[0].norm())
        });
    let resultant = if weight > 0.0 { sum.norm() / weight } else { 0.0 };
    let mut frac = sum.arg() / TAU;
    if frac <= -0.5 {
        frac += 1.0;
    }
    Ok(Quasimomentum {
        zone_fraction: frac,
        resultant,
        defined: resultant >= 1e-3,
    })
}

/// Ensemble-averaged neighbour coherence `|⟨Σ a_{i+1} a_i*⟩| / ⟨Σ|a_{i+1}||a_i|⟩`.
pub fn neighbour_coherence(states: &[ArrayState]) -> f64 {
    let (mut s, mut w) = (Complex64::new(0.0, 0.0), 0.0);
    for st in states {
        let amps = st.comoving_amplitudes();
        for p in amps.windows(2) {
            s += p[1] * p[0].conj();
            w += p[1].norm() * p[0].norm();
        }
    }
    if w > 0.0 {
        s.norm() / w
    } else {
        0.0
    }
}

/// Period of a sampled sawtooth (e.g. the quasimomentum) from its wrap
/// events, with linear interpolation of each crossing.
pub fn sawtooth_period(times: &[f64], values: &[f64]) -> Option<f64> {
    let mut crossings = Vec::new();
    for k in 1..values.len() {
        let (a, b) = (values[k - 1], values[k]);
        if (b - a).abs() > 0.5 {
            // unwrap b next to a and find where the unwrapped line hits ±1/2
            let b_un = if b > a { b - 1.0 } else { b + 1.0 };
            let edge = if b > a { -0.5 } else { 0.5 };
            let f = (edge - a) / (b_un - a);
            crossings.push(times[k - 1] + f * (times[k] - times[k - 1]));
        }
    }
    if crossings.len() < 2 {
        return None;
    }
    Some((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}
