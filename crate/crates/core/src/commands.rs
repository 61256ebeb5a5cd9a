//! One function per figure-level experiment. Each writes CSV artifacts into
//! an output directory and reports what it wrote.

use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::imaging::render_image;
use crate::lattice::{bloch_period, param_row, zener_warning, HubbardParams, DEFAULT_ZENER_FRACTION};
use crate::output::{num, opt, Stamp, Table};
use crate::pipeline::{
    bloch_trajectory, coherence_run, coherence_vs_depth, gradient_scan, rephase_run, squeezing_curve, transform_limit,
    Scenario, Snapshot,
};
use crate::states::{coherence_time, squeezed_sigma, NumberStatistics};
use crate::two_site::{
    josephson_frequency, plasma_frequency, small_oscillation_frequency, TwoSiteInitial, TwoSiteModel,
};
use crate::units::{self, rad_to_hz, to_ms};

/// Files written by a command and a short human-readable summary.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    /// False when a headline result is missing: a profile could not be
    /// fitted at all, or a coherence-time fit failed or was flagged poor.
    pub converged: bool,
}

impl Outcome {
    fn new() -> Self {
        Self {
            converged: true,
            ..Self::default()
        }
    }
}

fn stamp(cfg: &RunConfig) -> Stamp {
    Stamp {
        config_hash: cfg.hash(),
        seed: cfg.ensemble.seed,
    }
}

/// Write the default configuration to `path`; refuses to overwrite.
pub fn cmd_init(path: &Path) -> Result<Outcome> {
    if path.exists() {
        return Err(Error::Config(format!("{} already exists", path.display())));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, RunConfig::default().to_toml()).map_err(|e| Error::io(path, e))?;
    let mut out = Outcome::new();
    out.files.push(path.to_path_buf());
    out.summary
        .push(format!("wrote default configuration to {}", path.display()));
    Ok(out)
}

pub fn params_table(cfg: &RunConfig, depths: &[f64]) -> Result<Table> {
    let mut t = Table::new(&[
        "depth_u",
        "gamma_hz",
        "g_beta_hz",
        "recoil_hz",
        "n_center",
        "sigma_squeezed",
        "tau_coherent_ms",
        "tau_squeezed_ms",
        "bloch_period_ms",
        "zener_ratio",
    ]);
    let base = cfg.lattice_config();
    let n = base.central_occupation();
    for &u in depths {
        let lc = base.with_depth(u);
        let row = param_row(&lc)?;
        let p = HubbardParams::derive(&lc)?;
        let sigma = squeezed_sigma(n, p.g_beta, p.gamma, cfg.ensemble.squeezing_formula)?;
        let tau_c = coherence_time(&NumberStatistics::coherent(n), p.g_beta)?;
        let tau_s = coherence_time(&NumberStatistics::squeezed(n, sigma)?, p.g_beta)?;
        t.push(vec![
            num(u),
            num(row.gamma_hz),
            num(row.g_beta_hz),
            num(row.recoil_hz),
            num(n),
            num(sigma),
            num(to_ms(tau_c)),
            num(to_ms(tau_s)),
            num(row.bloch_period_ms),
            num(zener_warning(&p, lc.gradient_e, DEFAULT_ZENER_FRACTION).ratio),
        ]);
    }
    Ok(t)
}

pub fn cmd_params(cfg: &RunConfig, depths: &[f64], out_dir: &Path) -> Result<Outcome> {
    let t = params_table(cfg, depths)?;
    let mut out = Outcome::new();
    out.files.push(t.write(&out_dir.join("params.csv"), &stamp(cfg))?);
    out.summary.push(format!(
        "{} depths, N = {:.1} atoms in the central well",
        depths.len(),
        cfg.lattice_config().central_occupation()
    ));
    Ok(out)
}

/// Width, its error, incoherent fraction and whether the peak fit converged
/// (best-so-far values are reported either way).
fn width_cells(s: &Snapshot) -> [String; 4] {
    match &s.analysis {
        Ok(a) => [
            num(a.width.value),
            num(a.width.error),
            num(a.fraction.value),
            (a.fit.converged as u8).to_string(),
        ],
        Err(_) => [String::new(), String::new(), String::new(), "0".into()],
    }
}

/// Bloch oscillation of one sample, plus the width-versus-tilt scan when
/// `scan_hz` is given.
pub fn cmd_bloch(cfg: &RunConfig, scan_hz: Option<&[f64]>, out_dir: &Path) -> Result<Outcome> {
    let sc = cfg.scenario();
    let st = stamp(cfg);
    let mut out = Outcome::new();
    match scan_hz {
        None => {
            let traj = bloch_trajectory(&sc, &cfg.bloch_times())?;
            let mut t = Table::new(&[
                "time_ms",
                "quasimomentum",
                "weight_minus",
                "weight_zero",
                "weight_plus",
                "norm",
            ]);
            for (k, time) in traj.times.iter().enumerate() {
                let w = traj.order_weights[k];
                t.push(vec![
                    num(to_ms(*time)),
                    num(traj.quasimomentum[k]),
                    num(w[0]),
                    num(w[1]),
                    num(w[2]),
                    num(traj.norm[k]),
                ]);
            }
            let expected = bloch_period(sc.lattice.gradient_e).ok();
            t.note("period_ms", opt(traj.period.map(to_ms)));
            t.note("expected_period_ms", opt(expected.map(to_ms)));
            t.note("norm_drift_per_ms", num(traj.drift_per_ms));
            out.files.push(t.write(&out_dir.join("bloch.csv"), &st)?);
            out.summary.push(format!(
                "Bloch period {} ms (expected {} ms)",
                opt(traj.period.map(to_ms)),
                opt(expected.map(to_ms))
            ));
            if cfg.imaging.write_images {
                let params = sc.params()?;
                let lab = crate::imaging::ImagingConfig {
                    frame: crate::imaging::Frame::Lab,
                    ..sc.imaging.clone()
                };
                let every = (traj.states.len() / 12).max(1);
                for (k, state) in traj.states.iter().enumerate().step_by(every) {
                    let profile = crate::imaging::synthesize_profile(state, &params, &lab)?;
                    let image = render_image(&profile, units::um(cfg.imaging.image_transverse_um))?;
                    let path = out_dir.join(format!("bloch_{k:04}.pgm"));
                    image.write_pgm(
                        &path,
                        &[
                            ("time_ms".into(), num(to_ms(traj.times[k]))),
                            ("config_hash".into(), st.config_hash.clone()),
                            ("seed".into(), st.seed.to_string()),
                        ],
                    )?;
                    out.files.push(path);
                }
            }
        }
        Some(es) => {
            let params = sc.params()?;
            let grads: Vec<f64> = es.iter().map(|&e| units::hz_to_rad(e)).collect();
            let points = gradient_scan(&sc, &grads, units::ms(cfg.gradient.scan_hold_ms))?;
            let mut t = Table::new(&[
                "e_hz",
                "e_over_gamma",
                "isolated",
                "width",
                "width_err",
                "fraction",
                "fit_converged",
                "coherence",
            ]);
            for p in &points {
                out.converged &= p.snapshot.analysis.is_ok();
                let [w, we, f, ok] = width_cells(&p.snapshot);
                t.push(vec![
                    num(rad_to_hz(p.gradient_e)),
                    num(p.gradient_e / params.gamma),
                    (p.isolated as u8).to_string(),
                    w,
                    we,
                    f,
                    ok,
                    num(p.snapshot.coherence),
                ]);
            }
            t.note("gamma_hz", num(rad_to_hz(params.gamma)));
            t.note("hold_ms", num(cfg.gradient.scan_hold_ms));
            t.note("transform_limit", num(transform_limit(&sc, &params)?));
            out.files.push(t.write(&out_dir.join("gradient_scan.csv"), &st)?);
            out.summary.push(format!(
                "{} tilts, gamma/2pi = {:.2} Hz",
                points.len(),
                rad_to_hz(params.gamma)
            ));
        }
    }
    Ok(out)
}

pub fn cmd_squeezing(cfg: &RunConfig, depths: &[f64], out_dir: &Path) -> Result<Outcome> {
    let sc = cfg.scenario();
    let rows = squeezing_curve(&sc, depths)?;
    let mut out = Outcome::new();
    let mut t = Table::new(&[
        "depth_u",
        "fraction",
        "fraction_err",
        "depletion",
        "sigma_ratio",
        "below_floor",
    ]);
    for r in &rows {
        let (f, fe, below) = match &r.fraction {
            Ok(f) => (
                num(f.value),
                num(f.error),
                ((f.value < cfg.analysis.noise_floor) as u8).to_string(),
            ),
            Err(_) => {
                out.converged = false;
                (String::new(), String::new(), String::new())
            }
        };
        t.push(vec![num(r.depth_u), f, fe, num(r.depletion), num(r.sigma_ratio), below]);
    }
    t.note("model", sc.ensemble.number_model);
    t.note("noise_floor", num(cfg.analysis.noise_floor));
    out.files.push(t.write(&out_dir.join("squeezing.csv"), &stamp(cfg))?);
    out.summary.push(format!(
        "{} depths under the {} model",
        rows.len(),
        sc.ensemble.number_model
    ));
    Ok(out)
}

/// Width growth and coherence time at the configured depth, or the
/// coherence-time table over `depths`.
pub fn cmd_coherence(cfg: &RunConfig, depths: Option<&[f64]>, out_dir: &Path) -> Result<Outcome> {
    let sc = cfg.scenario();
    let st = stamp(cfg);
    let mut out = Outcome::new();
    let holds = cfg.hold_times();
    match depths {
        None => {
            let run = coherence_run(&sc, &holds)?;
            let mut t = Table::new(&[
                "time_ms",
                "width",
                "width_err",
                "fraction",
                "fit_converged",
                "coherence",
                "model_width",
            ]);
            let scan = run.scan.as_ref().ok();
            for s in &run.snapshots {
                out.converged &= s.analysis.is_ok();
                let [w, we, f, ok] = width_cells(s);
                let model = scan.map(|c| crate::analysis::width_model(s.time, c.w_0, c.w_f, c.tau_c));
                t.push(vec![num(to_ms(s.time)), w, we, f, ok, num(s.coherence), opt(model)]);
            }
            t.note("depth_u", num(run.depth_u));
            t.note("model", run.model);
            t.note("tau_closed_form_ms", num(to_ms(run.closed_form_tau)));
            match &run.scan {
                Ok(c) => {
                    out.converged &= c.converged && !c.poor_fit;
                    t.note("tau_c_ms", num(to_ms(c.tau_c)));
                    t.note("tau_c_err_ms", num(to_ms(c.tau_c_err)));
                    t.note("w_0", num(c.w_0));
                    t.note("w_f", num(c.w_f));
                    t.note("poor_fit", c.poor_fit);
                    t.note("extrapolated", c.extrapolated);
                    out.summary.push(format!(
                        "tau_c = {:.2} +/- {:.2} ms (closed form {:.2} ms)",
                        to_ms(c.tau_c),
                        to_ms(c.tau_c_err),
                        to_ms(run.closed_form_tau)
                    ));
                }
                Err(e) => {
                    out.converged = false;
                    t.note("fit_error", e.replace(['\n', ','], " "));
                    out.summary.push(format!("coherence-time fit failed: {e}"));
                }
            }
            out.files.push(t.write(&out_dir.join("coherence.csv"), &st)?);
        }
        Some(ds) => {
            let rows = coherence_vs_depth(&sc, ds, &holds);
            let mut t = Table::new(&[
                "depth_u",
                "gamma_hz",
                "g_beta_hz",
                "n_center",
                "sigma_squeezed",
                "tau_closed_coherent_ms",
                "tau_closed_squeezed_ms",
                "tau_coherent_ms",
                "tau_coherent_err_ms",
                "tau_squeezed_ms",
                "tau_squeezed_err_ms",
                "coherent_fit_ok",
                "squeezed_fit_ok",
                "error",
            ]);
            for (u, row) in ds.iter().zip(&rows) {
                match row {
                    Ok(r) => {
                        let cell = |s: &std::result::Result<crate::analysis::CoherenceScan, String>| match s {
                            Ok(c) => (num(to_ms(c.tau_c)), num(to_ms(c.tau_c_err)), c.converged && !c.poor_fit),
                            Err(_) => (String::new(), String::new(), false),
                        };
                        let (tc, tce, okc) = cell(&r.tau_coherent);
                        let (ts, tse, oks) = cell(&r.tau_squeezed);
                        out.converged &= okc && oks;
                        t.push(vec![
                            num(r.depth_u),
                            num(rad_to_hz(r.gamma)),
                            num(rad_to_hz(r.g_beta)),
                            num(r.n_center),
                            num(r.sigma_squeezed),
                            num(to_ms(r.tau_closed_coherent)),
                            num(to_ms(r.tau_closed_squeezed)),
                            tc,
                            tce,
                            ts,
                            tse,
                            (okc as u8).to_string(),
                            (oks as u8).to_string(),
                            String::new(),
                        ]);
                    }
                    Err(e) => {
                        out.converged = false;
                        let mut cells = vec![num(*u)];
                        cells.extend(std::iter::repeat_n(String::new(), 12));
                        cells.push(e.clone());
                        t.push(cells);
                    }
                }
            }
            out.files.push(t.write(&out_dir.join("coherence_depths.csv"), &st)?);
            out.summary.push(format!("{} depths", ds.len()));
        }
    }
    Ok(out)
}

/// Width after the gradient is switched off, with the exact two-well
/// coherence for the same protocol alongside.
pub fn cmd_rephase(cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    let sc: Scenario = cfg.scenario();
    let times = cfg.rephase_times();
    let t_bloch = units::ms(cfg.times.t_bloch_ms);
    let run = rephase_run(&sc, t_bloch, &times, true)?;
    let p = run.params;
    let n = sc.lattice.central_occupation();

    let model = TwoSiteModel::new((2.0 * n).round() as usize, p.gamma, p.g_beta)?;
    let psi = model.initial_state(TwoSiteInitial::Coherent {
        imbalance: 0.0,
        phase: 0.0,
    })?;
    let pair = model.evolve(&model.dephase(&psi, t_bloch), &times);
    let half = model.n_total as f64 / 2.0;

    let mut out = Outcome::new();
    let mut t = Table::new(&[
        "time_ms",
        "width",
        "width_err",
        "fraction",
        "fit_converged",
        "coherence",
        "two_site_coherence",
    ]);
    for (k, s) in run.snapshots.iter().enumerate() {
        out.converged &= s.analysis.is_ok();
        let [w, we, f, ok] = width_cells(s);
        t.push(vec![
            num(to_ms(s.time)),
            w,
            we,
            f,
            ok,
            num(s.coherence),
            num(pair.coherence[k].norm() / half),
        ]);
    }
    let exact = small_oscillation_frequency(n, p.gamma, p.g_beta)?;
    t.note("t_bloch_ms", num(cfg.times.t_bloch_ms));
    t.note("min_width_ms", opt(run.min_width_time.map(to_ms)));
    t.note("josephson_period_ms", num(to_ms(run.josephson_period)));
    t.note(
        "josephson_hz",
        num(rad_to_hz(josephson_frequency(n, p.gamma, p.g_beta))),
    );
    t.note("plasma_hz", num(rad_to_hz(plasma_frequency(n, p.gamma, p.g_beta))));
    t.note("two_site_small_oscillation_hz", opt(exact.map(rad_to_hz)));
    out.files.push(t.write(&out_dir.join("rephase.csv"), &stamp(cfg))?);
    out.summary.push(format!(
        "width minimum at {} ms; 2pi/sqrt(N g beta gamma) = {:.2} ms",
        opt(run.min_width_time.map(to_ms)),
        to_ms(run.josephson_period)
    ));
    Ok(out)
}
