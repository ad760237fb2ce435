//! Steady states of the restricted dynamics `u_i' = u_i R_i(v(u))`, `i` in a
//! subset `A`, the admissibility/hyperbolicity conditions on them, the
//! resource map `F(A)`, and relaxation runs.

use std::collections::HashMap;
use std::ops::ControlFlow;
use std::sync::{Arc, RwLock};

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::EquilibriumError;
use crate::integrate::{dopri5, Tolerances};
use crate::scenario::{GrowthFamily, Scenario};
use crate::subset::Subset;

/// Largest subsystem whose supports are enumerated (2^20 supports).
pub const ENUMERATION_CAP: usize = 20;
pub const HYPERBOLICITY_TOL: f64 = 1e-7;
const ROOT_TOL: f64 = 1e-12;
const DEDUP_TOL: f64 = 1e-8;

/// A nonempty subset of traits on which the restricted dynamics run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Subsystem(Subset);

impl Subsystem {
    pub fn new(s: &Scenario, set: Subset) -> Result<Self, EquilibriumError> {
        if set.is_empty() {
            return Err(EquilibriumError::EmptySubset);
        }
        assert!(
            set.is_subset_of(Subset::full(s.n())),
            "subset {set} is not contained in the trait space"
        );
        Ok(Subsystem(set))
    }

    pub fn full(s: &Scenario) -> Self {
        Subsystem(Subset::full(s.n()))
    }

    pub fn set(self) -> Subset {
        self.0
    }
}

/// A steady state of the restricted dynamics on `subset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub subset: Subset,
    /// Densities over the whole trait space (zero outside the support).
    pub u_star: Vec<f64>,
    pub support: Subset,
    pub v: Vec<f64>,
    /// `(i, R_i(v))` for `i` in `subset` but not in the support.
    pub off_support_rates: Vec<(usize, f64)>,
    /// Eigenvalues of the linearisation, in the order of `subset`'s indices.
    pub spectrum: Vec<Complex<f64>>,
}

impl Equilibrium {
    pub fn min_abs_real(&self) -> f64 {
        self.spectrum.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn is_hyperbolic(&self) -> bool {
        self.min_abs_real() >= HYPERBOLICITY_TOL
    }

    pub fn is_admissible(&self) -> bool {
        self.off_support_rates.iter().all(|&(_, r)| r < 0.0)
    }

    /// `max_i |u_i R_i(v)|` over the subset.
    pub fn residual(&self, s: &Scenario) -> f64 {
        self.subset
            .iter()
            .map(|i| (self.u_star[i] * s.rate(i, &self.v)).abs())
            .fold(0.0, f64::max)
    }
}

/// Outcome of the root search on supports where no steady state was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportOutcome {
    /// Every start converged to a positive-residual minimum or left the
    /// positive orthant.
    NoRoot,
    /// Iterates blew up; recorded as a flagged support.
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStates {
    pub subset: Subset,
    /// All steady states, sorted by support bitmask (origin first).
    pub states: Vec<Equilibrium>,
    /// Supports on which the Newton iteration diverged.
    pub flagged: Vec<Subset>,
}

/// Enumerates every support `B` of `A` and solves `R_i(v) = 0`, `i` in `B`,
/// with damped Newton iterations from several deterministic starts.
pub fn steady_states(s: &Scenario, a: Subsystem) -> Result<SteadyStates, EquilibriumError> {
    let set = a.set();
    if set.len() > ENUMERATION_CAP {
        return Err(EquilibriumError::EnumerationCap {
            size: set.len(),
            cap: 1 << ENUMERATION_CAP,
        });
    }
    let supports: Vec<Subset> = set.subsets().collect();
    let per_support: Vec<(Subset, Result<Vec<Vec<f64>>, SupportOutcome>)> = supports
        .par_iter()
        .map(|&b| (b, solve_support(s, b)))
        .collect();
    let mut states = Vec::new();
    let mut flagged = Vec::new();
    for (b, res) in per_support {
        match res {
            Ok(roots) => {
                for u in roots {
                    states.push(describe(s, set, b, u));
                }
            }
            Err(SupportOutcome::Diverged) => flagged.push(b),
            Err(SupportOutcome::NoRoot) => {}
        }
    }
    Ok(SteadyStates {
        subset: set,
        states,
        flagged,
    })
}

fn describe(s: &Scenario, set: Subset, support: Subset, u: Vec<f64>) -> Equilibrium {
    let v = s.resources_of(&u);
    let off_support_rates = set.difference(support).iter().map(|i| (i, s.rate(i, &v))).collect();
    let spectrum = jacobian(s, set, &u).complex_eigenvalues().iter().copied().collect();
    Equilibrium {
        subset: set,
        u_star: u,
        support,
        v,
        off_support_rates,
        spectrum,
    }
}

/// Jacobian of `u_i R_i(v(u))` over `set`:
/// `d f_i / d u_k = delta_ik R_i + u_i sum_l dR_i/dv_l psi_l(k)`.
pub fn jacobian(s: &Scenario, set: Subset, u: &[f64]) -> DMatrix<f64> {
    let idx: Vec<usize> = set.iter().collect();
    let m = idx.len();
    let v = s.resources_of(u);
    let mut grad = vec![0.0; s.r()];
    let mut jac = DMatrix::zeros(m, m);
    for (a, &i) in idx.iter().enumerate() {
        s.model.family.gradient(&s.psi, i, &v, &mut grad);
        for (b, &k) in idx.iter().enumerate() {
            let dv: f64 = grad.iter().enumerate().map(|(l, g)| g * s.psi.get(l, k)).sum();
            jac[(a, b)] = u[i] * dv + if a == b { s.rate(i, &v) } else { 0.0 };
        }
    }
    jac
}

/// Roots of `R_i(v(u)) = 0` for `i` in `b`, with `u > 0` on `b` and 0 elsewhere.
fn solve_support(s: &Scenario, b: Subset) -> Result<Vec<Vec<f64>>, SupportOutcome> {
    let n = s.n();
    if b.is_empty() {
        return Ok(vec![vec![0.0; n]]);
    }
    let idx: Vec<usize> = b.iter().collect();
    let k = idx.len();
    let bounds = s.bounds();
    let scale = 0.5 * (bounds.v_min.max(1e-3) + bounds.v_max) / (k as f64 * s.psi.min());
    let mut starts: Vec<Vec<f64>> = [0.05, 0.3, 1.0, 3.0]
        .iter()
        .map(|f| vec![f * scale; k])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(b.mask());
    for _ in 0..6 {
        starts.push((0..k).map(|_| rng.random_range(0.01..2.0) * scale).collect());
    }

    let mut roots: Vec<Vec<f64>> = Vec::new();
    let mut diverged = 0;
    for x0 in starts {
        match levenberg_marquardt(s, &idx, x0) {
            Newton::Root(x) => {
                if x.iter().all(|&xi| xi > 0.0) {
                    let mut u = vec![0.0; n];
                    for (a, &i) in idx.iter().enumerate() {
                        u[i] = x[a];
                    }
                    if !roots.iter().any(|r| max_dist(r, &u) <= DEDUP_TOL) {
                        roots.push(u);
                    }
                }
            }
            Newton::Stalled => {}
            Newton::Diverged => diverged += 1,
        }
    }
    if !roots.is_empty() {
        roots.sort_by(|p, q| p.partial_cmp(q).unwrap_or(std::cmp::Ordering::Equal));
        Ok(roots)
    } else if diverged == 10 {
        Err(SupportOutcome::Diverged)
    } else {
        Err(SupportOutcome::NoRoot)
    }
}

enum Newton {
    Root(Vec<f64>),
    Stalled,
    Diverged,
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn support_residual(s: &Scenario, idx: &[usize], x: &[f64], g: &mut [f64], jac: Option<&mut DMatrix<f64>>) {
    let mut u = vec![0.0; s.n()];
    for (a, &i) in idx.iter().enumerate() {
        u[i] = x[a];
    }
    let v = s.resources_of(&u);
    for (a, &i) in idx.iter().enumerate() {
        g[a] = s.rate(i, &v);
    }
    if let Some(jac) = jac {
        let mut grad = vec![0.0; s.r()];
        for (a, &i) in idx.iter().enumerate() {
            s.model.family.gradient(&s.psi, i, &v, &mut grad);
            for (c, &k) in idx.iter().enumerate() {
                jac[(a, c)] = grad.iter().enumerate().map(|(l, gl)| gl * s.psi.get(l, k)).sum();
            }
        }
    }
}

fn levenberg_marquardt(s: &Scenario, idx: &[usize], mut x: Vec<f64>) -> Newton {
    let k = idx.len();
    let mut g = vec![0.0; k];
    let mut g_try = vec![0.0; k];
    let mut jac = DMatrix::zeros(k, k);
    let mut lambda = 1e-3;
    support_residual(s, idx, &x, &mut g, Some(&mut jac));
    let mut cost: f64 = g.iter().map(|r| r * r).sum();
    for _ in 0..300 {
        if g.iter().all(|r| r.abs() <= ROOT_TOL) {
            return Newton::Root(x);
        }
        let gv = DVector::from_column_slice(&g);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let rhs = -(&jt * &gv);
        let mut improved = false;
        for _ in 0..30 {
            let mut sys = jtj.clone();
            for d in 0..k {
                sys[(d, d)] += lambda * (1.0 + jtj[(d, d)]);
            }
            let Some(step) = sys.lu().solve(&rhs) else {
                lambda *= 10.0;
                continue;
            };
            // Keep Chemostat denominators positive.
            let mut frac: f64 = 1.0;
            for a in 0..k {
                if x[a] + step[a] < -0.5 * x[a].abs() - 1.0 {
                    frac = frac.min(0.5 * (x[a].abs() + 1.0) / step[a].abs());
                }
            }
            let x_try: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi + frac * si).collect();
            support_residual(s, idx, &x_try, &mut g_try, None);
            let c_try: f64 = g_try.iter().map(|r| r * r).sum();
            if c_try.is_finite() && c_try < cost {
                let small = max_dist(&x, &x_try) <= 1e-15 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max));
                x = x_try;
                cost = c_try;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                support_residual(s, idx, &x, &mut g, Some(&mut jac));
                if small && !g.iter().all(|r| r.abs() <= ROOT_TOL) {
                    return Newton::Stalled;
                }
                break;
            }
            lambda *= 10.0;
        }
        if x.iter().any(|v| !v.is_finite() || v.abs() > 1e10) {
            return Newton::Diverged;
        }
        if !improved {
            break;
        }
    }
    if g.iter().all(|r| r.abs() <= ROOT_TOL) {
        Newton::Root(x)
    } else if x.iter().any(|v| !v.is_finite() || v.abs() > 1e10) {
        Newton::Diverged
    } else {
        Newton::Stalled
    }
}

/// Summary of the steady states of one subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub subset: Subset,
    pub states: Vec<Equilibrium>,
    pub flagged: Vec<Subset>,
    pub all_hyperbolic: bool,
    pub admissible_equilibria: Vec<Equilibrium>,
    pub unique_admissible: bool,
    /// Lotka-Volterra: the Lyapunov function decreased along a relaxation run.
    /// Other families: relaxation runs reached the admissible state.
    pub lyapunov_checked: bool,
}

impl StabilityReport {
    pub fn admissible(&self) -> Option<&Equilibrium> {
        if self.unique_admissible {
            self.admissible_equilibria.first()
        } else {
            None
        }
    }
}

/// Builds the report without turning failures into errors.
pub fn stability_report(s: &Scenario, a: Subsystem) -> Result<StabilityReport, EquilibriumError> {
    let ss = steady_states(s, a)?;
    let all_hyperbolic = ss.states.iter().all(Equilibrium::is_hyperbolic);
    let admissible_equilibria: Vec<Equilibrium> = ss.states.iter().filter(|e| e.is_admissible()).cloned().collect();
    let unique_admissible = admissible_equilibria.len() == 1;
    let mut report = StabilityReport {
        subset: a.set(),
        states: ss.states,
        flagged: ss.flagged,
        all_hyperbolic,
        admissible_equilibria,
        unique_admissible,
        lyapunov_checked: false,
    };
    if report.all_hyperbolic && report.unique_admissible {
        report.lyapunov_checked = relaxation_check(s, a, &report);
    }
    Ok(report)
}

fn relaxation_check(s: &Scenario, a: Subsystem, report: &StabilityReport) -> bool {
    let target = &report.admissible_equilibria[0];
    let set = a.set();
    if set.len() == 1 {
        return true;
    }
    let n = s.n();
    let scale = s.bounds().v_max / (set.len() as f64 * s.psi.min());
    let mut starts = [vec![0.0; n], vec![0.0; n]];
    for (k, i) in set.iter().enumerate() {
        starts[0][i] = scale;
        starts[1][i] = scale * (0.2 + 1.5 * ((k * 7 + 3) % 5) as f64 / 4.0);
    }
    let is_lv = matches!(s.model.family, GrowthFamily::LotkaVolterra { .. });
    let opts = RelaxOptions {
        t_cap: 1e4,
        ..RelaxOptions::default()
    };
    starts.iter().all(|u0| match relax_to(s, a, u0, &target.u_star, 1e-4, opts) {
        Ok(run) => {
            !is_lv
                || run.u.iter().all(|u| {
                    let rate = lyapunov_rate(s, u).unwrap_or(f64::INFINITY);
                    rate <= 1e-12
                })
        }
        Err(_) => false,
    })
}

/// Verifies that every steady state on `A` is hyperbolic and exactly one is
/// admissible (support-feasible with negative off-support rates).
pub fn check_hypothesis_h(s: &Scenario, a: Subsystem) -> Result<StabilityReport, EquilibriumError> {
    let report = stability_report(s, a)?;
    if let Some(e) = report.states.iter().find(|e| !e.is_hyperbolic()) {
        return Err(EquilibriumError::NonHyperbolic {
            subset: a.set(),
            re: e.min_abs_real(),
        });
    }
    match report.admissible_equilibria.len() {
        0 => Err(EquilibriumError::NoAdmissible { subset: a.set() }),
        1 => Ok(report),
        count => Err(EquilibriumError::MultipleAdmissible { subset: a.set(), count }),
    }
}

/// Resource vector of the admissible steady state on `A`.
pub fn equilibrium_f(s: &Scenario, a: Subsystem) -> Result<Vec<f64>, EquilibriumError> {
    let report = check_hypothesis_h(s, a)?;
    Ok(report.admissible_equilibria[0].v.clone())
}

#[derive(Debug, Clone, Copy)]
pub struct RelaxOptions {
    pub t_cap: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            t_cap: 1e4,
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

/// A relaxation run of the restricted dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub times: Vec<f64>,
    /// Densities over the whole trait space at each accepted step.
    pub u: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub hitting_time: f64,
}

/// Integrates the restricted dynamics from `u0` until it enters the
/// `rho`-ball (Euclidean, over `A`) around the admissible steady state.
pub fn relax(s: &Scenario, a: Subsystem, u0: &[f64], rho: f64) -> Result<Relaxation, EquilibriumError> {
    relax_with(s, a, u0, rho, RelaxOptions::default())
}

pub fn relax_with(
    s: &Scenario,
    a: Subsystem,
    u0: &[f64],
    rho: f64,
    opts: RelaxOptions,
) -> Result<Relaxation, EquilibriumError> {
    let report = check_hypothesis_h(s, a)?;
    let target = report.admissible_equilibria[0].u_star.clone();
    relax_to(s, a, u0, &target, rho, opts)
}

fn relax_to(
    s: &Scenario,
    a: Subsystem,
    u0: &[f64],
    target: &[f64],
    rho: f64,
    opts: RelaxOptions,
) -> Result<Relaxation, EquilibriumError> {
    let idx: Vec<usize> = a.set().iter().collect();
    let n = s.n();
    for &i in &idx {
        assert!(u0[i] > 0.0, "initial density must be positive on the subsystem");
    }
    let lift = |y: &[f64]| {
        let mut u = vec![0.0; n];
        for (k, &i) in idx.iter().enumerate() {
            u[i] = y[k].exp();
        }
        u
    };
    let dist = |u: &[f64]| idx.iter().map(|&i| (u[i] - target[i]).powi(2)).sum::<f64>().sqrt();

    let y0: Vec<f64> = idx.iter().map(|&i| u0[i].ln()).collect();
    let start = lift(&y0);
    let mut run = Relaxation {
        times: vec![0.0],
        u: vec![start.clone()],
        target: target.to_vec(),
        hitting_time: f64::NAN,
    };
    if dist(&start) < rho {
        run.hitting_time = 0.0;
        return Ok(run);
    }

    let mut hit = None;
    let tol = Tolerances {
        rtol: opts.rtol,
        atol: opts.atol,
        ..Tolerances::default()
    };
    let mut ybuf = vec![0.0; idx.len()];
    dopri5(
        |_, y, dy| {
            let u = lift(y);
            let v = s.resources_of(&u);
            for (k, &i) in idx.iter().enumerate() {
                dy[k] = s.rate(i, &v);
            }
            true
        },
        0.0,
        &y0,
        opts.t_cap,
        tol,
        |step| {
            // Probe a few interior points so a brief dip into the ball is not missed.
            let mut inside_at = None;
            for q in 1..=4 {
                let t = step.t0 + (step.t1 - step.t0) * q as f64 / 4.0;
                step.interpolate(t, &mut ybuf);
                if dist(&lift(&ybuf)) < rho {
                    inside_at = Some(t);
                    break;
                }
            }
            run.times.push(step.t1);
            run.u.push(lift(step.y1));
            if let Some(t_in) = inside_at {
                let (mut lo, mut hi) = (step.t0, t_in);
                while hi - lo > 1e-12 * (1.0 + hi) {
                    let mid = 0.5 * (lo + hi);
                    step.interpolate(mid, &mut ybuf);
                    if dist(&lift(&ybuf)) < rho {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hit = Some(hi);
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        },
    )
    .map_err(|e| EquilibriumError::Integration(e.to_string()))?;
    match hit {
        Some(t) => {
            run.hitting_time = t;
            Ok(run)
        }
        None => Err(EquilibriumError::TimeoutNoConvergence { rho, t_cap: opts.t_cap }),
    }
}

/// Time derivative of `L(u) = 1/2 sum c_i psi_i(j) u_i u_j - sum c_i r_i u_i`
/// along the Lotka-Volterra dynamics.
pub fn lyapunov_rate(s: &Scenario, u: &[f64]) -> Result<f64, EquilibriumError> {
    let GrowthFamily::LotkaVolterra { r, c } = &s.model.family else {
        return Err(EquilibriumError::WrongFamily(s.model.family.name()));
    };
    let n = s.n();
    let v = s.resources_of(u);
    let mut rate = 0.0;
    for i in 0..n {
        let grad: f64 = (0..n)
            .map(|j| 0.5 * (c[i] * s.psi.get(i, j) + c[j] * s.psi.get(j, i)) * u[j])
            .sum::<f64>()
            - c[i] * r[i];
        rate += grad * u[i] * s.rate(i, &v);
    }
    Ok(rate)
}

/// Per-subset cache of `F(A)`; each subset is verified at most once.
#[derive(Debug)]
pub struct EquilibriumCache<'a> {
    scenario: &'a Scenario,
    map: RwLock<HashMap<u64, Result<Arc<Vec<f64>>, EquilibriumError>>>,
}

impl<'a> EquilibriumCache<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        EquilibriumCache {
            scenario,
            map: RwLock::new(HashMap::new()),
        }
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn f(&self, set: Subset) -> Result<Arc<Vec<f64>>, EquilibriumError> {
        if let Some(hit) = self.map.read().expect("cache lock poisoned").get(&set.mask()) {
            return hit.clone();
        }
        let computed = Subsystem::new(self.scenario, set)
            .and_then(|a| equilibrium_f(self.scenario, a))
            .map(Arc::new);
        self.map
            .write()
            .expect("cache lock poisoned")
            .entry(set.mask())
            .or_insert(computed)
            .clone()
    }

    /// Number of subsets verified so far.
    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
