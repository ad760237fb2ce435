//! Convergence of `eps ln u^eps` to the limit value function over a list of
//! mutation scales.

use std::time::Instant;

use rayon::prelude::*;

use crate::equilibria::EquilibriumCache;
use crate::finite_ode::{check_mass_bounds, output_grid, simulate_finite, BoundsReport};
use crate::hj::{check_structure, evolve_hj_cached, EventLog, StructureReport, ValueFunction};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub eps: f64,
    /// `max_{t, i} |w^eps(t, i) - V(t, i)|` over the output grid.
    pub error: Option<f64>,
    pub runtime_s: f64,
    pub mass_bounds: Option<BoundsReport>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub scenario_id: String,
    pub eps: Vec<f64>,
    pub rows: Vec<StudyRow>,
    /// `None` when fewer than two errors are available.
    pub strictly_decreasing: Option<bool>,
    pub structure: Option<StructureReport>,
    pub hj_failure: Option<String>,
    pub hj_runtime_s: f64,
}

impl StudyResult {
    pub fn errors(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.error).collect()
    }

    pub fn monotonicity_note(&self) -> &'static str {
        match self.strictly_decreasing {
            None => "vacuous (fewer than two eps values)",
            Some(true) => "strictly decreasing",
            Some(false) => "not strictly decreasing",
        }
    }

    /// Every run finished, every check that ran passed.
    pub fn passed(&self) -> bool {
        self.hj_failure.is_none()
            && self.strictly_decreasing != Some(false)
            && self.structure.as_ref().is_some_and(|s| s.passed())
            && self
                .rows
                .iter()
                .all(|r| r.failure.is_none() && r.mass_bounds.as_ref().is_some_and(|b| b.passed()))
    }
}

/// Largest gap between `w` rows and the value function on the same times.
pub fn sup_error(vf: &ValueFunction, times: &[f64], w: &[Vec<f64>]) -> f64 {
    let values = vf.sample(times);
    let mut worst: f64 = 0.0;
    for (vrow, wrow) in values.iter().zip(w) {
        for (v, x) in vrow.iter().zip(wrow) {
            if v.is_finite() {
                worst = worst.max((x - v).abs());
            }
        }
    }
    worst
}

/// Solves the limit once, then the finite system for each `eps` in parallel.
/// Failures are recorded per row; the other rows still run.
pub fn run_study(s: &Scenario, scenario_id: &str, eps_list: &[f64], t_max: f64, dt_out: f64) -> StudyResult {
    let cache = EquilibriumCache::new(s);
    let start = Instant::now();
    let hj: Result<(ValueFunction, EventLog), _> = evolve_hj_cached(&cache, t_max);
    let hj_runtime_s = start.elapsed().as_secs_f64();
    let (vf, hj_failure) = match hj {
        Ok((vf, _)) => (Some(vf), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let structure = vf.as_ref().map(|vf| check_structure(vf, s));
    let times = output_grid(t_max, dt_out);

    let rows: Vec<StudyRow> = eps_list
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            match simulate_finite(s, eps, t_max, dt_out) {
                Ok(traj) => {
                    let runtime_s = start.elapsed().as_secs_f64();
                    debug_assert_eq!(traj.times.len(), times.len());
                    StudyRow {
                        eps,
                        error: vf.as_ref().map(|vf| sup_error(vf, &traj.times, &traj.w)),
                        runtime_s,
                        mass_bounds: Some(check_mass_bounds(&traj, s)),
                        failure: None,
                    }
                }
                Err(e) => StudyRow {
                    eps,
                    error: None,
                    runtime_s: start.elapsed().as_secs_f64(),
                    mass_bounds: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();

    let errors: Vec<f64> = rows.iter().filter_map(|r| r.error).collect();
    let strictly_decreasing = (errors.len() >= 2 && errors.len() == rows.len())
        .then(|| errors.windows(2).all(|p| p[1] < p[0]));
    StudyResult {
        scenario_id: scenario_id.to_string(),
        eps: eps_list.to_vec(),
        rows,
        strictly_decreasing,
        structure,
        hj_failure,
        hj_runtime_s,
    }
}
