//! Bounded Levenberg-Marquardt least squares with a forward-difference
//! Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Convergence when `max_j |J_jᵀ r| / (‖J_j‖ ‖r‖)` falls below this.
    pub gradient_tolerance: f64,
    /// Relative finite-difference step.
    pub relative_step: f64,
    /// Convergence when a step changes no parameter by more than this
    /// fraction of its scale.
    pub step_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            relative_step: 1e-6,
            step_tolerance: 1e-13,
        }
    }
}

/// Box constraints and per-parameter scales.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Typical magnitude of each parameter; floors the finite-difference step.
    pub scale: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(scale: Vec<f64>) -> Self {
        let n = scale.len();
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            scale,
        }
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for ((v, lo), hi) in p.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Gradient,
    Step,
    /// Damping grew without finding a lower cost; the point is a minimum to
    /// working precision.
    Stalled,
    MaxIterations,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    /// Best parameters found (best-so-far when not converged).
    pub params: Vec<f64>,
    /// `½‖r‖²` at `params`.
    pub cost: f64,
    pub residuals: Vec<f64>,
    /// `s² (JᵀJ)⁺` with `s² = ‖r‖² / (m - n)`.
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub gradient_measure: f64,
    pub termination: Termination,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

impl LmOutcome {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::Gradient | Termination::Step | Termination::Stalled
        ) && self.cost.is_finite()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.params.len())
            .map(|j| self.covariance[(j, j)].max(0.0).sqrt())
            .collect()
    }
}

/// Minimize `½‖f(p)‖²` over the box `bounds`, starting from `p0`.
pub fn levenberg_marquardt<F>(f: F, p0: &[f64], bounds: &Bounds, opts: &LmOptions) -> LmOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    bounds.clamp(&mut p);
    let mut r = f(&p);
    let m = r.len();
    let mut cost = half_norm(&r);
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut termination = Termination::MaxIterations;
    let mut gradient_measure = f64::INFINITY;
    let mut iterations = 0;
    let mut jac = jacobian(&f, &p, &r, bounds, opts.relative_step);

    if !cost.is_finite() {
        termination = Termination::NonFinite;
    } else {
        'outer: for it in 0..opts.max_iterations {
            iterations = it + 1;
            let rv = DVector::from_column_slice(&r);
            let g = jac.transpose() * &rv;
            let a = jac.transpose() * &jac;
            gradient_measure = projected_gradient(&jac, &g, &rv, &p, bounds);
            if gradient_measure <= opts.gradient_tolerance || cost == 0.0 {
                termination = Termination::Gradient;
                break;
            }
            let diag_max = (0..n).map(|j| a[(j, j)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            loop {
                let mut damped = a.clone();
                for j in 0..n {
                    damped[(j, j)] += lambda * (a[(j, j)] + 1e-12 * diag_max);
                }
                let step = damped.cholesky().map(|c| c.solve(&(-&g)));
                if let Some(delta) = step {
                    let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
                    bounds.clamp(&mut trial);
                    let r_new = f(&trial);
                    let c_new = half_norm(&r_new);
                    if c_new.is_finite() && c_new < cost {
                        let small = trial
                            .iter()
                            .zip(&p)
                            .zip(&bounds.scale)
                            .all(|((t, o), s)| (t - o).abs() <= opts.step_tolerance * (o.abs() + s));
                        p = trial;
                        r = r_new;
                        cost = c_new;
                        history.push(cost);
                        lambda = (lambda / 3.0).max(1e-12);
                        jac = jacobian(&f, &p, &r, bounds, opts.relative_step);
                        if small {
                            termination = Termination::Step;
                            break 'outer;
                        }
                        continue 'outer;
                    }
                }
                lambda *= 4.0;
                if lambda > 1e16 {
                    termination = Termination::Stalled;
                    break 'outer;
                }
            }
        }
    }

    let rv = DVector::from_column_slice(&r);
    if gradient_measure.is_infinite() && cost.is_finite() {
        gradient_measure = projected_gradient(&jac, &(jac.transpose() * &rv), &rv, &p, bounds);
    }
    let a = jac.transpose() * &jac;
    let dof = (m as f64 - n as f64).max(1.0);
    let s2 = 2.0 * cost / dof;
    let covariance = a
        .clone()
        .pseudo_inverse(1e-12 * a.norm().max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN))
        * s2;
    LmOutcome {
        params: p,
        cost,
        residuals: r,
        covariance,
        iterations,
        gradient_measure,
        termination,
        cost_history: history,
    }
}

fn half_norm(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn jacobian<F>(f: &F, p: &[f64], r0: &[f64], bounds: &Bounds, rel: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut jac = DMatrix::zeros(r0.len(), p.len());
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let mut h = rel * p[j].abs().max(bounds.scale[j]);
        if p[j] + h > bounds.upper[j] {
            h = -h;
        }
        q[j] = p[j] + h;
        let rj = f(&q);
        for i in 0..r0.len() {
            jac[(i, j)] = (rj[i] - r0[i]) / h;
        }
        q[j] = p[j];
    }
    jac
}

/// Largest cosine between the residual and a Jacobian column, ignoring
/// parameters pinned at a bound by a gradient that points outward.
fn projected_gradient(jac: &DMatrix<f64>, g: &DVector<f64>, r: &DVector<f64>, p: &[f64], b: &Bounds) -> f64 {
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    (0..p.len())
        .filter(|&j| {
            let at_lower = p[j] <= b.lower[j] && g[j] > 0.0;
            let at_upper = p[j] >= b.upper[j] && g[j] < 0.0;
            !(at_lower || at_upper)
        })
        .map(|j| {
            let cn = jac.column(j).norm();
            if cn > 0.0 {
                g[j].abs() / (cn * rn)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_round_trip() {
        let ts: Vec<f64> = (0..40).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.5 * (-1.3 * t).exp() + 0.4).collect();
        let f = |p: &[f64]| {
            ts.iter()
                .zip(&ys)
                .map(|(t, y)| p[0] * (-p[1] * t).exp() + p[2] - y)
                .collect()
        };
        let out = levenberg_marquardt(
            f,
            &[1.0, 0.5, 0.0],
            &Bounds::unbounded(vec![1.0; 3]),
            &LmOptions::default(),
        );
        assert!(out.converged());
        for (a, b) in out.params.iter().zip([2.5, 1.3, 0.4]) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(out.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn bounds_are_respected() {
        // minimum at p = -1, constrained to p >= 0
        let f = |p: &[f64]| vec![p[0] + 1.0];
        let b = Bounds {
            lower: vec![0.0],
            upper: vec![10.0],
            scale: vec![1.0],
        };
        let out = levenberg_marquardt(f, &[3.0], &b, &LmOptions::default());
        assert_eq!(out.params[0], 0.0);
        assert!(out.converged());
    }

    #[test]
    fn rosenbrock() {
        let f = |p: &[f64]| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]];
        let out = levenberg_marquardt(f, &[-1.2, 1.0], &Bounds::unbounded(vec![1.0; 2]), &LmOptions::default());
        assert!((out.params[0] - 1.0).abs() < 1e-6 && (out.params[1] - 1.0).abs() < 1e-6);
    }
}
