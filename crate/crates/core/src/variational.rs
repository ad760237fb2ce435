//! Dynamic-programming oracle for the variational form of the limit and the
//! path rate function of the jump process.

use crate::equilibria::EquilibriumCache;
use crate::error::HjError;
use crate::hj::{initial_value, HJ_TOL};
use crate::scenario::{MutationCosts, Scenario};
use crate::subset::Subset;

/// A cadlag path on the trait space with finitely many jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub start: usize,
    /// `(time, new state)`, times strictly increasing in `(0, horizon]`.
    pub jumps: Vec<(f64, usize)>,
    pub horizon: f64,
}

impl JumpPath {
    pub fn constant(state: usize, horizon: f64) -> Self {
        JumpPath {
            start: state,
            jumps: Vec::new(),
            horizon,
        }
    }

    pub fn n_jumps(&self) -> usize {
        self.jumps.len()
    }

    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let mut x = self.start;
        for &(tj, j) in &self.jumps {
            if tj <= t {
                x = j;
            } else {
                break;
            }
        }
        x
    }

    pub fn end_state(&self) -> usize {
        self.jumps.last().map_or(self.start, |&(_, j)| j)
    }

    /// Sequence of visited states, starting with `start`.
    pub fn skeleton(&self) -> Vec<usize> {
        std::iter::once(self.start).chain(self.jumps.iter().map(|&(_, j)| j)).collect()
    }

    pub fn is_valid(&self, n: usize) -> bool {
        let mut prev_t = 0.0;
        let mut prev_x = self.start;
        if self.start >= n {
            return false;
        }
        for &(t, x) in &self.jumps {
            if !(t > prev_t && t <= self.horizon) || x == prev_x || x >= n {
                return false;
            }
            prev_t = t;
            prev_x = x;
        }
        true
    }
}

/// Sum of the jump costs along the path; `+inf` if any jump is forbidden.
pub fn path_rate(path: &JumpPath, costs: &MutationCosts) -> f64 {
    let mut prev = path.start;
    let mut total = 0.0;
    for &(_, x) in &path.jumps {
        total += costs.get(prev, x);
        prev = x;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backpointer {
    Stay,
    JumpFrom(usize),
}

/// Values `W(k dt, i)` with the argmax of each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DpGrid {
    pub dt: f64,
    pub steps: usize,
    /// `steps + 1` rows.
    pub w: Vec<Vec<f64>>,
    /// Row `k` holds the choices that produced `w[k + 1]`.
    pub back: Vec<Vec<Backpointer>>,
    /// Resources used for the step from row `k` to row `k + 1`.
    pub f: Vec<Vec<f64>>,
    pub zero_sets: Vec<Subset>,
    /// Which earlier trait realises `V(0, i)` when it is not `-h(i)`.
    pub initial_jump: Vec<Option<usize>>,
    pub raw_initial: Vec<f64>,
}

impl DpGrid {
    pub fn t_max(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Row index of grid time `t`, if `t` lies on the grid.
    pub fn row_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt).round();
        if k >= 0.0 && (k * self.dt - t).abs() <= 1e-9 * self.dt.max(t) && k as usize <= self.steps {
            Some(k as usize)
        } else {
            None
        }
    }
}

/// Forward dynamic programming
///
/// ```text
/// W(t+dt, i) = max{ W(t,i) + dt R_i(F), max_{j != i} W(t,j) - T(i,j) + dt R_j(F) }
/// ```
///
/// with `F` taken from the zero set of the current row. No renormalisation
/// is applied; a drift of `max W` beyond `dt max|R|` is an error.
pub fn dp_solve(s: &Scenario, t_max: f64, dt: f64) -> Result<DpGrid, HjError> {
    let cache = EquilibriumCache::new(s);
    dp_solve_cached(&cache, t_max, dt)
}

pub fn dp_solve_cached(cache: &EquilibriumCache<'_>, t_max: f64, dt: f64) -> Result<DpGrid, HjError> {
    let s = cache.scenario();
    if !(dt > 0.0 && dt <= 1e-2 + 1e-15) {
        return Err(HjError::InvalidArgument(format!("dt must lie in (0, 0.01], got {dt}")));
    }
    if !(t_max > 0.0) {
        return Err(HjError::InvalidArgument(format!("t_max must be positive, got {t_max}")));
    }
    let steps = (t_max / dt).round().max(1.0) as usize;
    let dt = t_max / steps as f64;
    let n = s.n();
    let (w0, _) = initial_value(&s.h, &s.costs);
    let raw_initial: Vec<f64> = s.h.values().iter().map(|x| -x).collect();
    let initial_jump = (0..n)
        .map(|i| {
            let mut best = raw_initial[i];
            let mut arg = None;
            for j in 0..n {
                if j != i && raw_initial[j] - s.costs.get(i, j) > best {
                    best = raw_initial[j] - s.costs.get(i, j);
                    arg = Some(j);
                }
            }
            arg
        })
        .collect();
    let drift_tol = dt * s.max_abs_rate() + HJ_TOL;

    let mut w = Vec::with_capacity(steps + 1);
    let mut back = Vec::with_capacity(steps);
    let mut f_rows = Vec::with_capacity(steps);
    let mut zero_sets = Vec::with_capacity(steps);
    w.push(w0);
    let mut rates = vec![0.0; n];
    for k in 0..steps {
        let row = &w[k];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max.abs() > drift_tol {
            return Err(HjError::MaxDrift {
                t: k as f64 * dt,
                max,
                tol: drift_tol,
            });
        }
        let mut a = Subset::from_indices(row.iter().enumerate().filter(|(_, &x)| x >= -HJ_TOL).map(|(i, _)| i));
        if a.is_empty() {
            a = Subset::from_indices(row.iter().enumerate().filter(|(_, &x)| x >= max - HJ_TOL).map(|(i, _)| i));
        }
        let f = cache.f(a)?;
        s.rates(&f, &mut rates);
        let mut next = vec![0.0; n];
        let mut bp = vec![Backpointer::Stay; n];
        for i in 0..n {
            let mut best = row[i] + dt * rates[i];
            let mut arg = Backpointer::Stay;
            for j in 0..n {
                let c = s.costs.get(i, j);
                if j == i || !c.is_finite() {
                    continue;
                }
                let cand = row[j] - c + dt * rates[j];
                if cand > best {
                    best = cand;
                    arg = Backpointer::JumpFrom(j);
                }
            }
            next[i] = best;
            bp[i] = arg;
        }
        w.push(next);
        back.push(bp);
        f_rows.push((*f).clone());
        zero_sets.push(a);
    }
    let last = &w[steps];
    let max = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.abs() > drift_tol {
        return Err(HjError::MaxDrift {
            t: t_max,
            max,
            tol: drift_tol,
        });
    }
    Ok(DpGrid {
        dt,
        steps,
        w,
        back,
        f: f_rows,
        zero_sets,
        initial_jump,
        raw_initial,
    })
}

/// Maximising path for `W(t, i)`, read forward from `i`.
///
/// Path time `s` corresponds to grid time `t - s`. A jump chosen on the
/// path step `[m dt, (m+1) dt]` is placed at its midpoint, so jump times are
/// exact to within one step. For incompatible initial data a final jump at
/// time `t` realises `V(0, .)`.
pub fn optimal_path(grid: &DpGrid, t: f64, i: usize) -> Option<JumpPath> {
    let big_k = grid.row_of(t)?;
    let horizon = grid.time(big_k);
    let mut x = i;
    let mut jumps = Vec::new();
    for m in 0..big_k {
        let row = big_k - m;
        if let Backpointer::JumpFrom(j) = grid.back[row - 1][x] {
            jumps.push(((m as f64 + 0.5) * grid.dt, j));
            x = j;
        }
    }
    if let Some(j) = grid.initial_jump[x] {
        jumps.push((horizon, j));
    }
    Some(JumpPath {
        start: i,
        jumps,
        horizon,
    })
}

/// Discrete objective of a path against the grid's resource schedule:
/// `-h(end) + sum_m dt R_{x_m}(F) - rate`, with `x_m` the state inside path
/// step `m` after any mid-step jump.
pub fn path_objective(grid: &DpGrid, s: &Scenario, path: &JumpPath) -> f64 {
    let big_k = grid.row_of(path.horizon).expect("path horizon must lie on the grid");
    let mut total = grid.raw_initial[path.end_state()] - path_rate(path, &s.costs);
    for m in 0..big_k {
        let x = path.state_at((m as f64 + 0.75) * grid.dt);
        total += grid.dt * s.rate(x, &grid.f[big_k - m - 1]);
    }
    total
}
