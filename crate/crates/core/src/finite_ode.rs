//! Fixed-eps mutation-selection system, integrated in log space.
//!
//! The state is `w_i = eps ln u_i`, which evolves by
//!
//! ```text
//! w_i' = R_i(v) + eps * sum_{j != i} exp(-T(i,j)/eps) (exp((w_j - w_i)/eps) - 1)
//! ```
//!
//! so the reaction term stays O(1) and densities never underflow.

use std::ops::ControlFlow;

use crate::error::OdeError;
use crate::integrate::{dopri5, Tolerances};
use crate::scenario::{MassWindow, Scenario};

/// Exponents above this are treated as a failed right-hand-side evaluation.
const EXP_CLIP: f64 = 50.0;

#[derive(Debug, Clone, Copy)]
pub struct FiniteOdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the internal step.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for FiniteOdeOptions {
    fn default() -> Self {
        let t = Tolerances::default();
        FiniteOdeOptions {
            rtol: t.rtol,
            atol: t.atol,
            h_max: t.h_max,
            max_steps: t.max_steps,
        }
    }
}

/// Densities, log-densities and resources sampled on an output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub eps: f64,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Accepted internal steps.
    pub steps: usize,
    /// Largest accepted internal step.
    pub max_step: f64,
}

impl Trajectory {
    /// Builds a trajectory from stored log-densities.
    pub fn from_w(s: &Scenario, eps: f64, times: Vec<f64>, w: Vec<Vec<f64>>) -> Trajectory {
        let u: Vec<Vec<f64>> = w.iter().map(|row| row.iter().map(|x| (x / eps).exp()).collect()).collect();
        let v = u.iter().map(|row| s.resources_of(row)).collect();
        Trajectory {
            eps,
            times,
            u,
            w,
            v,
            steps: 0,
            max_step: 0.0,
        }
    }

    pub fn total_mass(&self, k: usize) -> f64 {
        self.u[k].iter().sum()
    }
}

/// Evenly spaced output times `0, dt, 2dt, ...` ending exactly at `t_max`.
pub fn output_grid(t_max: f64, dt_out: f64) -> Vec<f64> {
    let n = (t_max / dt_out + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * dt_out).collect();
    if let Some(last) = times.last_mut() {
        if (t_max - *last).abs() <= 1e-9 * dt_out {
            *last = t_max;
        } else {
            times.push(t_max);
        }
    }
    times
}

/// Log-space right-hand side; returns `false` if an exponent had to be clipped.
pub(crate) fn log_rhs(s: &Scenario, eps: f64, w: &[f64], u: &mut [f64], v: &mut [f64], dw: &mut [f64]) -> bool {
    let n = s.n();
    for i in 0..n {
        u[i] = (w[i] / eps).exp();
    }
    s.psi.apply(u, v);
    let mut ok = true;
    for i in 0..n {
        let mut mutation = 0.0;
        for j in 0..n {
            let c = s.costs.get(i, j);
            if j == i || !c.is_finite() {
                continue;
            }
            let x = (w[j] - w[i] - c) / eps;
            if x > EXP_CLIP {
                ok = false;
            }
            mutation += x.min(EXP_CLIP).exp() - (-c / eps).exp();
        }
        dw[i] = s.rate(i, v) + eps * mutation;
    }
    ok
}

/// Integrates the system on `[0, t_max]` and samples it every `dt_out`.
pub fn simulate_finite(s: &Scenario, eps: f64, t_max: f64, dt_out: f64) -> Result<Trajectory, OdeError> {
    simulate_finite_with(s, eps, t_max, dt_out, FiniteOdeOptions::default())
}

pub fn simulate_finite_with(
    s: &Scenario,
    eps: f64,
    t_max: f64,
    dt_out: f64,
    opts: FiniteOdeOptions,
) -> Result<Trajectory, OdeError> {
    if !(eps > 0.0 && t_max > 0.0 && dt_out > 0.0) {
        return Err(OdeError::Scenario(crate::error::ScenarioError::InvalidValue {
            key: "run".into(),
            reason: format!("eps, t_max and dt_out must be positive (got {eps}, {t_max}, {dt_out})"),
        }));
    }
    s.check_initial_mass(eps)?;
    let n = s.n();
    let times = output_grid(t_max, dt_out);
    let w0: Vec<f64> = s.h.values().iter().map(|h| -h).collect();
    let mut w_out: Vec<Vec<f64>> = Vec::with_capacity(times.len());
    w_out.push(w0.clone());
    let mut next = 1;

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; s.r()];
    let tol = Tolerances {
        rtol: opts.rtol,
        atol: opts.atol,
        h_max: opts.h_max,
        max_steps: opts.max_steps,
        ..Tolerances::default()
    };
    let stats = dopri5(
        |_, w, dw| log_rhs(s, eps, w, &mut u, &mut v, dw),
        0.0,
        &w0,
        t_max,
        tol,
        |step| {
            while next < times.len() && times[next] <= step.t1 {
                let mut row = vec![0.0; n];
                if times[next] == step.t1 {
                    row.copy_from_slice(step.y1);
                } else {
                    step.interpolate(times[next], &mut row);
                }
                w_out.push(row);
                next += 1;
            }
            ControlFlow::Continue(())
        },
    )?;
    while w_out.len() < times.len() {
        w_out.push(stats.y_final.clone());
    }
    let mut traj = Trajectory::from_w(s, eps, times, w_out);
    traj.steps = stats.accepted;
    traj.max_step = stats.max_step;
    Ok(traj)
}

/// First time the total mass leaves the window.
#[derive(Debug, Clone, PartialEq)]
pub struct MassViolation {
    pub time: f64,
    pub mass: f64,
    /// Signed distance outside the window (positive means violated).
    pub excess: f64,
    pub above: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub window: MassWindow,
    pub checked: usize,
    /// Smallest distance from the mass to either bound over stored times.
    pub min_margin: f64,
    pub first_violation: Option<MassViolation>,
    /// Whether the `lower_beta` bound also holds.
    pub beta_lower_holds: bool,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks the total-mass sandwich at every stored time (relative tolerance 1e-6).
pub fn check_mass_bounds(traj: &Trajectory, s: &Scenario) -> BoundsReport {
    let window = s.mass_window(traj.eps);
    let mut min_margin = f64::INFINITY;
    let mut first = None;
    let mut beta_lower = true;
    for (k, &t) in traj.times.iter().enumerate() {
        let mass = traj.total_mass(k);
        min_margin = min_margin.min((mass - window.lower).min(window.upper - mass));
        if mass < window.lower_beta * (1.0 - 1e-6) {
            beta_lower = false;
        }
        if first.is_none() && !window.contains(mass, 1e-6) {
            let above = mass > window.upper;
            first = Some(MassViolation {
                time: t,
                mass,
                excess: if above { mass - window.upper } else { window.lower - mass },
                above,
            });
        }
    }
    BoundsReport {
        window,
        checked: traj.times.len(),
        min_margin,
        first_violation: first,
        beta_lower_holds: beta_lower,
    }
}
