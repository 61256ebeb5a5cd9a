//! Single-site number statistics and Fock-space dynamics.
//!
//! A site with on-site interaction `gβ n(n-1)/2` evolves each Fock component
//! at its own rate, so a superposition spread over `σ` number states loses
//! its order parameter on the time scale `1/(gβ σ)`. Number squeezing narrows
//! that spread and lengthens the coherence time.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which squeezing law to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqueezingFormula {
    /// `σ_S = (N² / (1 + N gβ / 2γ))^{1/4}` (Bogoliubov).
    #[default]
    HalfRatio,
    /// `σ_S = (N² / (1 + N gβ / γ))^{1/4}`.
    FullRatio,
}

/// Number-statistics family of the initial on-site state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberModel {
    #[default]
    Coherent,
    Squeezed,
}

impl std::fmt::Display for NumberModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NumberModel::Coherent => "coherent",
            NumberModel::Squeezed => "squeezed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Coherent,
    Squeezed,
    Fock,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumberStatistics {
    pub mean_n: f64,
    pub sigma_n: f64,
    pub regime: Regime,
}

impl NumberStatistics {
    pub fn coherent(mean_n: f64) -> Self {
        Self {
            mean_n,
            sigma_n: mean_n.sqrt(),
            regime: Regime::Coherent,
        }
    }

    /// Sub-Poissonian statistics. `sigma_n` must lie in `(0, √N]`.
    pub fn squeezed(mean_n: f64, sigma_n: f64) -> Result<Self> {
        if !(sigma_n > 0.0) || sigma_n > mean_n.sqrt() * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "squeezed sigma must lie in (0, sqrt(N)], got {sigma_n} for N = {mean_n}"
            )));
        }
        Ok(Self {
            mean_n,
            sigma_n,
            regime: Regime::Squeezed,
        })
    }

    pub fn fock(mean_n: f64) -> Self {
        Self {
            mean_n: mean_n.round(),
            sigma_n: 0.0,
            regime: Regime::Fock,
        }
    }

    /// Statistics of a site with mean occupation `n` under `model`.
    pub fn for_model(model: NumberModel, n: f64, g_beta: f64, gamma: f64, formula: SqueezingFormula) -> Result<Self> {
        match model {
            NumberModel::Coherent => Ok(Self::coherent(n)),
            NumberModel::Squeezed => Self::squeezed(n, squeezed_sigma(n, g_beta, gamma, formula)?),
        }
    }
}

/// Bogoliubov number uncertainty of a well holding `n` atoms.
pub fn squeezed_sigma(n: f64, g_beta: f64, gamma: f64, formula: SqueezingFormula) -> Result<f64> {
    if !(n >= 1.0) {
        return Err(Error::Domain(format!("occupation must be >= 1, got {n}")));
    }
    if !(g_beta >= 0.0) {
        return Err(Error::Domain(format!("g_beta must be >= 0, got {g_beta}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(
            "gamma must be > 0; use NumberStatistics::fock for isolated wells".into(),
        ));
    }
    Ok(sigma_unchecked(n, g_beta, gamma, formula))
}

/// Same law without the `n >= 1` guard, for sparsely filled envelope tails.
pub(crate) fn sigma_unchecked(n: f64, g_beta: f64, gamma: f64, formula: SqueezingFormula) -> f64 {
    let ratio = match formula {
        SqueezingFormula::HalfRatio => n * g_beta / (2.0 * gamma),
        SqueezingFormula::FullRatio => n * g_beta / gamma,
    };
    (n * n / (1.0 + ratio)).powf(0.25)
}

/// Fock-space amplitudes `c_n` for `n ∈ [n_min, n_min + len)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub n_min: usize,
    pub amplitudes: Vec<Complex64>,
    pub mean_n: f64,
    /// Coherent amplitude α when the state is a Glauber state.
    pub alpha: Option<Complex64>,
}

impl FockState {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.amplitudes
            .iter()
            .enumerate()
            .map(move |(i, c)| (self.n_min + i, c.norm_sqr()))
    }

    pub fn number_mean(&self) -> f64 {
        self.probabilities().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn number_variance(&self) -> f64 {
        let mean = self.number_mean();
        self.probabilities().map(|(n, p)| (n as f64 - mean).powi(2) * p).sum()
    }
}

/// Probabilities below this are dropped when extending a window.
const NEGLIGIBLE_WEIGHT: f64 = 1e-20;
const MAX_LOST_NORM: f64 = 1e-8;

/// Builds the Fock expansion of `stats`.
///
/// The window covers at least `truncation_sigmas` standard deviations on each
/// side and is extended until the dropped weight is negligible. Coherent
/// states get Poissonian amplitudes with real α; squeezed states get real
/// Gaussian amplitudes `exp(-(n-N)²/4σ²)`.
pub fn make_fock_state(stats: &NumberStatistics, truncation_sigmas: f64) -> Result<FockState> {
    if !(truncation_sigmas >= 6.0) {
        return Err(Error::Domain(format!(
            "truncation must cover >= 6 sigma, got {truncation_sigmas}"
        )));
    }
    if !(stats.mean_n >= 0.0) {
        return Err(Error::Domain("mean occupation must be >= 0".into()));
    }
    let n0 = stats.mean_n;
    if stats.regime == Regime::Fock || stats.sigma_n < 1e-3 {
        let n = n0.round() as usize;
        return Ok(FockState {
            n_min: n,
            amplitudes: vec![Complex64::new(1.0, 0.0)],
            mean_n: n as f64,
            alpha: None,
        });
    }

    let sigma = stats.sigma_n;
    let log_weight: Box<dyn Fn(f64) -> f64> = match stats.regime {
        Regime::Coherent => {
            let ln_n0 = n0.ln();
            Box::new(move |n: f64| n * ln_n0 - n0 - libm::lgamma(n + 1.0))
        }
        _ => Box::new(move |n: f64| -(n - n0).powi(2) / (2.0 * sigma * sigma)),
    };
    // Gaussian weights are unnormalized; normalize against the unclipped sum.
    let (mut lo, mut hi) = (
        (n0 - truncation_sigmas * sigma).floor(),
        (n0 + truncation_sigmas * sigma).ceil(),
    );
    while lo > 0.0 && log_weight(lo).exp() > NEGLIGIBLE_WEIGHT {
        lo -= 1.0;
    }
    while log_weight(hi).exp() > NEGLIGIBLE_WEIGHT {
        hi += 1.0;
    }
    let clipped_low = lo < 0.0;
    let lo = lo.max(0.0);

    let weights: Vec<f64> = (lo as usize..=hi as usize)
        .map(|n| log_weight(n as f64).exp())
        .collect();
    let kept: f64 = weights.iter().sum();

    if clipped_low && stats.regime != Regime::Coherent {
        let mut missing = 0.0;
        let mut n = -1.0;
        loop {
            let w = log_weight(n).exp();
            missing += w;
            if w < NEGLIGIBLE_WEIGHT {
                break;
            }
            n -= 1.0;
        }
        let lost = missing / (kept + missing);
        if lost > MAX_LOST_NORM {
            return Err(Error::Truncation { lost });
        }
    }

    let amplitudes = weights.iter().map(|w| Complex64::new((w / kept).sqrt(), 0.0)).collect();
    Ok(FockState {
        n_min: lo as usize,
        amplitudes,
        mean_n: n0,
        alpha: (stats.regime == Regime::Coherent).then(|| Complex64::new(n0.sqrt(), 0.0)),
    })
}

/// Exact order parameter `⟨â⟩(t)` of one interacting well:
/// `Σ_n c*_n c_{n+1} √(n+1) e^{-i gβ n t}`.
pub fn order_parameter(state: &FockState, g_beta: f64, t: f64) -> Complex64 {
    let c = &state.amplitudes;
    c.iter()
        .zip(c.iter().skip(1))
        .enumerate()
        .map(|(i, (cn, cn1))| {
            let n = (state.n_min + i) as f64;
            cn.conj() * cn1 * (n + 1.0).sqrt() * Complex64::from_polar(1.0, -g_beta * n * t)
        })
        .sum()
}

/// Closed-form collapse `√N exp(-N (gβ t)² / 2)` of a coherent state.
pub fn coherent_collapse(mean_n: f64, g_beta: f64, t: f64) -> f64 {
    mean_n.sqrt() * (-mean_n * (g_beta * t).powi(2) / 2.0).exp()
}

/// Coherence time `1 / (gβ σ)`, infinite when there is no interaction or no
/// number spread.
pub fn coherence_time(stats: &NumberStatistics, g_beta: f64) -> Result<f64> {
    if !(g_beta >= 0.0) {
        return Err(Error::Domain(format!("g_beta must be >= 0, got {g_beta}")));
    }
    if g_beta == 0.0 || stats.sigma_n == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (g_beta * stats.sigma_n))
}

/// Bogoliubov quantum depletion of a homogeneous periodic array with `n`
/// atoms per site.
pub fn quantum_depletion(n: f64, g_beta: f64, gamma: f64, n_sites: usize) -> Result<f64> {
    if n_sites < 4 {
        return Err(Error::Domain(format!("need at least 4 sites, got {n_sites}")));
    }
    if !(n > 0.0) || !(gamma > 0.0) || g_beta < 0.0 {
        return Err(Error::Domain("depletion needs n > 0, gamma > 0, g_beta >= 0".into()));
    }
    let mu = g_beta * n;
    let v2_sum: f64 = (1..n_sites)
        .map(|k| {
            let phase = std::f64::consts::PI * k as f64 / n_sites as f64;
            let eps = 4.0 * gamma * phase.sin().powi(2);
            let e = (eps * (eps + 2.0 * mu)).sqrt();
            ((eps + mu) / e - 1.0) / 2.0
        })
        .sum();
    Ok((v2_sum / (n * n_sites as f64)).clamp(0.0, 1.0))
}
