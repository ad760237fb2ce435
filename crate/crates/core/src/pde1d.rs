//! Continuous-trait equation on a truncated interval `[-L, L]`:
//!
//! ```text
//! u_t = (eps/2) u_xx + u R(x, v) / eps,    v_l = int Psi_l(x) u dx
//! ```
//!
//! Each step applies implicit centred diffusion with no-flux ends, then the
//! reaction exactly per cell with `v` frozen at the start of the step. Both
//! parts keep `u` positive for any step size.

use crate::error::PdeError;

/// Fraction of the mass allowed in the two end cells.
pub const ESCAPE_LIMIT: f64 = 1e-6;

/// Uniform grid `-L, -L + dx, ..., L`, or a single cell of width `dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub x: Vec<f64>,
    pub dx: f64,
}

impl Grid {
    pub fn new(half_width: f64, dx: f64) -> Result<Self, PdeError> {
        if !(half_width > 0.0 && dx > 0.0 && dx.is_finite() && half_width.is_finite()) {
            return Err(PdeError::InvalidGrid(format!("need L > 0 and dx > 0, got L = {half_width}, dx = {dx}")));
        }
        let cells = 2.0 * half_width / dx;
        let k = cells.round();
        if (cells - k).abs() > 1e-9 * cells.max(1.0) || k < 2.0 {
            return Err(PdeError::InvalidGrid(format!("2L/dx = {cells} must be an integer of at least 2")));
        }
        let k = k as usize;
        let x = (0..=k).map(|j| -half_width + j as f64 * dx).collect();
        Ok(Grid { x, dx })
    }

    pub fn single(dx: f64) -> Self {
        Grid { x: vec![0.0], dx }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.len();
        if n == 1 {
            return vec![self.dx];
        }
        let mut w = vec![self.dx; n];
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
        w
    }

    /// Samples `f` at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.x.iter().map(|&x| f(x)).collect()
    }
}

/// Growth rate sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousGrowth {
    /// `R(x, v) = base(x) + sum_l slope_l(x) v_l`; `slope[l][k]`.
    Affine { base: Vec<f64>, slope: Vec<Vec<f64>> },
    /// `R(x, v) = -d(x) + c(x) sum_l alpha_l Psi_l(x) / (1 + v_l)`.
    Chemostat { d: Vec<f64>, c: Vec<f64>, alpha: Vec<f64> },
}

impl ContinuousGrowth {
    pub fn affine(grid: &Grid, base: impl Fn(f64) -> f64, slopes: &[&dyn Fn(f64) -> f64]) -> Self {
        ContinuousGrowth::Affine {
            base: grid.sample(base),
            slope: slopes.iter().map(|f| grid.sample(f)).collect(),
        }
    }

    fn rate(&self, psi: &[Vec<f64>], k: usize, v: &[f64]) -> f64 {
        match self {
            ContinuousGrowth::Affine { base, slope } => {
                base[k] + slope.iter().zip(v).map(|(s, vl)| s[k] * vl).sum::<f64>()
            }
            ContinuousGrowth::Chemostat { d, c, alpha } => {
                let s: f64 = alpha.iter().enumerate().map(|(l, a)| a * psi[l][k] / (1.0 + v[l])).sum();
                -d[k] + c[k] * s
            }
        }
    }

    fn check(&self, nx: usize, r: usize) -> Result<(), PdeError> {
        let bad = |what: &str| Err(PdeError::InvalidGrid(format!("growth {what} does not match the grid")));
        match self {
            ContinuousGrowth::Affine { base, slope } => {
                if base.len() != nx || slope.len() != r || slope.iter().any(|s| s.len() != nx) {
                    return bad("table");
                }
            }
            ContinuousGrowth::Chemostat { d, c, alpha } => {
                if d.len() != nx || c.len() != nx || alpha.len() != r {
                    return bad("coefficients");
                }
            }
        }
        Ok(())
    }
}

/// Constants of the growth assumptions used by the a priori bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeBounds {
    pub v_min: f64,
    pub v_max: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    pub grid: Grid,
    /// `psi[l][k]`, positive.
    pub psi: Vec<Vec<f64>>,
    pub growth: ContinuousGrowth,
    pub h: Vec<f64>,
    pub bounds: PdeBounds,
}

impl PdeProblem {
    pub fn new(
        grid: Grid,
        psi: Vec<Vec<f64>>,
        growth: ContinuousGrowth,
        h: Vec<f64>,
        bounds: PdeBounds,
    ) -> Result<Self, PdeError> {
        let nx = grid.len();
        if psi.is_empty() || psi.iter().any(|row| row.len() != nx) {
            return Err(PdeError::InvalidGrid("psi must have one row per resource, sampled on the grid".into()));
        }
        if psi.iter().flatten().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(PdeError::InvalidGrid("psi must be positive and finite".into()));
        }
        if h.len() != nx || h.iter().any(|x| !x.is_finite()) {
            return Err(PdeError::InvalidGrid("h must be finite and sampled on the grid".into()));
        }
        if !(bounds.v_min > 0.0 && bounds.v_min < bounds.v_max && bounds.a > 0.0) {
            return Err(PdeError::InvalidGrid(format!("invalid bounds {bounds:?}")));
        }
        growth.check(nx, psi.len())?;
        Ok(PdeProblem {
            grid,
            psi,
            growth,
            h,
            bounds,
        })
    }

    pub fn r(&self) -> usize {
        self.psi.len()
    }

    pub fn resources(&self, u: &[f64]) -> Vec<f64> {
        let w = self.grid.weights();
        self.psi
            .iter()
            .map(|p| p.iter().zip(u).zip(&w).map(|((a, b), c)| a * b * c).sum())
            .collect()
    }

    pub fn psi_min(&self) -> f64 {
        self.psi.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn psi_max(&self) -> f64 {
        self.psi.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// `max(|Psi_l|, |Psi_l'|, |Psi_l''|)` from grid differences.
    pub fn psi_w2_norm(&self, l: usize) -> f64 {
        let p = &self.psi[l];
        let dx = self.grid.dx;
        let mut norm = p.iter().copied().fold(0.0, f64::max);
        for k in 1..p.len() {
            norm = norm.max(((p[k] - p[k - 1]) / dx).abs());
        }
        for k in 1..p.len().saturating_sub(1) {
            norm = norm.max(((p[k + 1] - 2.0 * p[k] + p[k - 1]) / (dx * dx)).abs());
        }
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeOptions {
    pub eps: f64,
    pub t_max: f64,
    pub dt: f64,
    pub dt_out: f64,
    /// Switches the diffusion step off; used to compare with the finite system.
    pub diffusion: bool,
}

/// Snapshots of `u` and `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldHistory {
    pub x: Vec<f64>,
    pub dx: f64,
    pub eps: f64,
    pub times: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl FieldHistory {
    /// Trapezoid mass of snapshot `k`.
    pub fn mass(&self, k: usize) -> f64 {
        let g = Grid {
            x: self.x.clone(),
            dx: self.dx,
        };
        g.weights().iter().zip(&self.u[k]).map(|(a, b)| a * b).sum()
    }

    pub fn w(&self, k: usize) -> Vec<f64> {
        self.u[k].iter().map(|u| self.eps * u.ln()).collect()
    }
}

/// Factorised `(I - r L)` with reflecting ends, solved by the Thomas algorithm.
struct ImplicitDiffusion {
    lower: Vec<f64>,
    upper: Vec<f64>,
    denom: Vec<f64>,
}

impl ImplicitDiffusion {
    fn new(n: usize, r: f64) -> Self {
        let mut lower = vec![-r; n];
        let mut upper = vec![-r; n];
        let diag = vec![1.0 + 2.0 * r; n];
        upper[0] = -2.0 * r;
        lower[n - 1] = -2.0 * r;
        let mut cp = vec![0.0; n];
        let mut denom = vec![0.0; n];
        denom[0] = diag[0];
        cp[0] = upper[0] / denom[0];
        for k in 1..n {
            denom[k] = diag[k] - lower[k] * cp[k - 1];
            cp[k] = upper[k] / denom[k];
        }
        ImplicitDiffusion {
            lower,
            upper: cp,
            denom,
        }
    }

    fn solve(&self, u: &mut [f64]) {
        let n = u.len();
        u[0] /= self.denom[0];
        for k in 1..n {
            u[k] = (u[k] - self.lower[k] * u[k - 1]) / self.denom[k];
        }
        for k in (0..n - 1).rev() {
            u[k] -= self.upper[k] * u[k + 1];
        }
    }
}

fn steps_of(span: f64, dt: f64, what: &str) -> Result<usize, PdeError> {
    let k = (span / dt).round();
    if k < 1.0 || (k * dt - span).abs() > 1e-9 * span {
        return Err(PdeError::InvalidGrid(format!("{what} = {span} is not a multiple of dt = {dt}")));
    }
    Ok(k as usize)
}

pub fn simulate_pde(p: &PdeProblem, opts: PdeOptions) -> Result<FieldHistory, PdeError> {
    let PdeOptions {
        eps,
        t_max,
        dt,
        dt_out,
        diffusion,
    } = opts;
    if !(eps > 0.0 && t_max > 0.0 && dt > 0.0 && dt_out > 0.0) {
        return Err(PdeError::InvalidGrid("eps, t_max, dt and dt_out must be positive".into()));
    }
    let nx = p.grid.len();
    let diffusion = diffusion && nx > 1;
    if diffusion && dt > eps * p.grid.dx * (1.0 + 1e-12) {
        return Err(PdeError::InvalidGrid(format!(
            "dt = {dt} exceeds eps * dx = {}",
            eps * p.grid.dx
        )));
    }
    let steps = steps_of(t_max, dt, "t_max")?;
    let stride = steps_of(dt_out, dt, "dt_out")?;

    let mut u: Vec<f64> = p.h.iter().map(|h| (-h / eps).exp()).collect();
    let mut v = p.resources(&u);
    for (l, &vl) in v.iter().enumerate() {
        let b = p.bounds;
        if vl < b.v_min * (1.0 - 1e-12) || vl > b.v_max * (1.0 + 1e-12) {
            return Err(PdeError::InitialMassViolation {
                resource: l,
                value: vl,
                v_min: b.v_min,
                v_max: b.v_max,
            });
        }
    }

    let weights = p.grid.weights();
    let solver = diffusion.then(|| ImplicitDiffusion::new(nx, dt * eps / (2.0 * p.grid.dx * p.grid.dx)));
    let mut times = vec![0.0];
    let mut us = vec![u.clone()];
    let mut vs = vec![v.clone()];
    for step in 1..=steps {
        if let Some(solver) = &solver {
            solver.solve(&mut u);
        }
        for (k, uk) in u.iter_mut().enumerate() {
            *uk *= (dt * p.growth.rate(&p.psi, k, &v) / eps).exp();
        }
        v = p.resources(&u);
        let t = step as f64 * dt;
        if nx > 1 {
            let total: f64 = u.iter().zip(&weights).map(|(a, b)| a * b).sum();
            let edge = u[0] * weights[0] + u[nx - 1] * weights[nx - 1];
            let fraction = edge / total;
            if fraction > ESCAPE_LIMIT {
                return Err(PdeError::MassEscape {
                    t,
                    fraction,
                    limit: ESCAPE_LIMIT,
                });
            }
        }
        if step % stride == 0 || step == steps {
            times.push(if step == steps { t_max } else { t });
            us.push(u.clone());
            vs.push(v.clone());
        }
    }
    Ok(FieldHistory {
        x: p.grid.x.clone(),
        dx: p.grid.dx,
        eps,
        times,
        u: us,
        v: vs,
    })
}

/// Slack added to `[v_min, v_max]` by the a priori bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSlack {
    /// `A eps^2 |Psi_l|_{W^{2,inf}} / Psi_min`, as the derivation requires.
    pub derived: Vec<f64>,
    /// Smaller alternative `A eps^2 Psi_min / |Psi_l|_{W^{2,inf}}`.
    pub reduced: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub time: f64,
    /// `"v[l]"`, `"v_norm"` or `"mass"`.
    pub quantity: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeBoundsReport {
    pub eps: f64,
    pub slack: BoundSlack,
    pub times: Vec<f64>,
    /// Smallest signed distance to any bound at each snapshot (derived slack).
    pub margins: Vec<f64>,
    pub violations: Vec<BoundViolation>,
    /// Whether the bounds with the reduced slack hold as well.
    pub reduced_holds: bool,
}

impl PdeBoundsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<&BoundViolation> {
        self.violations.first()
    }
}

/// Checks resource and mass bounds at every snapshot, with tolerance 1e-6.
pub fn check_pde_bounds(history: &FieldHistory, p: &PdeProblem) -> PdeBoundsReport {
    const TOL: f64 = 1e-6;
    let eps2a = p.bounds.a * history.eps * history.eps;
    let (psi_min, psi_max) = (p.psi_min(), p.psi_max());
    let norms: Vec<f64> = (0..p.r()).map(|l| p.psi_w2_norm(l)).collect();
    let slack = BoundSlack {
        derived: norms.iter().map(|n| eps2a * n / psi_min).collect(),
        reduced: norms.iter().map(|n| eps2a * psi_min / n).collect(),
    };
    let worst = |c: &[f64]| c.iter().copied().fold(0.0, f64::max);
    let (vmin, vmax) = (p.bounds.v_min, p.bounds.v_max);
    let mut margins = Vec::with_capacity(history.times.len());
    let mut violations = Vec::new();
    let mut reduced_holds = true;

    for (k, &t) in history.times.iter().enumerate() {
        let v = &history.v[k];
        let norm: f64 = v.iter().map(|x| x.abs()).sum();
        let mass = history.mass(k);
        let mut margin = f64::INFINITY;
        let mut check = |quantity: String, value: f64, c: f64, c_disp: f64, scale_lo: f64, scale_hi: f64| {
            let lower = (vmin - c) / scale_lo;
            let upper = (vmax + c) / scale_hi;
            margin = margin.min((value - lower).min(upper - value));
            if value < lower - TOL || value > upper + TOL {
                violations.push(BoundViolation {
                    time: t,
                    quantity,
                    value,
                    lower,
                    upper,
                });
            }
            if value < (vmin - c_disp) / scale_lo - TOL || value > (vmax + c_disp) / scale_hi + TOL {
                reduced_holds = false;
            }
        };
        for (l, &vl) in v.iter().enumerate() {
            check(format!("v[{l}]"), vl, slack.derived[l], slack.reduced[l], 1.0, 1.0);
        }
        check("v_norm".into(), norm, worst(&slack.derived), worst(&slack.reduced), 1.0, 1.0);
        check("mass".into(), mass, worst(&slack.derived), worst(&slack.reduced), psi_max, psi_min);
        margins.push(margin);
    }
    PdeBoundsReport {
        eps: history.eps,
        slack,
        times: history.times.clone(),
        margins,
        violations,
        reduced_holds,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WkbReport {
    pub times: Vec<f64>,
    /// `eps ln u` per snapshot.
    pub w: Vec<Vec<f64>>,
    pub max_w: Vec<f64>,
    pub argmax_x: Vec<f64>,
    /// Largest `|w(t, x + dx) - w(t, x)| / dx` over all snapshots.
    pub lipschitz_x: f64,
    /// Largest `|w(t', x) - w(t, x)| / (t' - t)` over consecutive snapshots.
    pub lipschitz_t: f64,
}

pub fn wkb_extract(history: &FieldHistory) -> WkbReport {
    let w: Vec<Vec<f64>> = (0..history.times.len()).map(|k| history.w(k)).collect();
    let mut max_w = Vec::with_capacity(w.len());
    let mut argmax_x = Vec::with_capacity(w.len());
    let mut lipschitz_x: f64 = 0.0;
    for row in &w {
        let (k, m) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &x)| if x > acc.1 { (k, x) } else { acc });
        max_w.push(m);
        argmax_x.push(history.x[k]);
        for pair in row.windows(2) {
            lipschitz_x = lipschitz_x.max((pair[1] - pair[0]).abs() / history.dx);
        }
    }
    let mut lipschitz_t: f64 = 0.0;
    for k in 1..w.len() {
        let dt = history.times[k] - history.times[k - 1];
        for (a, b) in w[k].iter().zip(&w[k - 1]) {
            lipschitz_t = lipschitz_t.max((a - b).abs() / dt);
        }
    }
    WkbReport {
        times: history.times.clone(),
        w,
        max_w,
        argmax_x,
        lipschitz_x,
        lipschitz_t,
    }
}

/// Total mass `m(t)` of `m' = m (1 - m) / eps`.
pub fn logistic_mass(m0: f64, eps: f64, t: f64) -> f64 {
    let g = (t / eps).exp();
    m0 * g / (1.0 + m0 * (g - 1.0))
}

/// `Psi = 1`, `R = 1 - v`, `h = k x^2` on `[-L, L]`.
pub fn logistic_problem(half_width: f64, dx: f64, curvature: f64) -> Result<PdeProblem, PdeError> {
    let grid = Grid::new(half_width, dx)?;
    let growth = ContinuousGrowth::affine(&grid, |_| 1.0, &[&|_| -1.0]);
    let h = grid.sample(|x| curvature * x * x);
    let psi = vec![vec![1.0; grid.len()]];
    PdeProblem::new(
        grid,
        psi,
        growth,
        h,
        PdeBounds {
            v_min: 0.25,
            v_max: 2.5,
            a: 1.0,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_ode::simulate_finite;
    use crate::scenario::fixtures::single_chemostat;
    use crate::scenario::DeclaredBounds;

    fn opts(eps: f64, t_max: f64, dt: f64) -> PdeOptions {
        PdeOptions {
            eps,
            t_max,
            dt,
            dt_out: 0.01,
            diffusion: true,
        }
    }

    #[test]
    fn logistic_mass_follows_closed_form() {
        let p = logistic_problem(4.0, 0.02, 0.075).unwrap();
        let eps = 0.1;
        let hist = simulate_pde(&p, opts(eps, 1.0, 2e-4)).unwrap();
        let m0 = hist.mass(0);
        for k in 0..hist.times.len() {
            let exact = logistic_mass(m0, eps, hist.times[k]);
            assert!((hist.mass(k) - exact).abs() < 1e-3, "t = {}", hist.times[k]);
        }
        assert!((hist.mass(hist.times.len() - 1) - 1.0).abs() < 1e-3);
        assert!(hist.u.iter().flatten().all(|&u| u > 0.0));
    }

    #[test]
    fn initial_w_is_minus_h() {
        let p = logistic_problem(4.0, 0.02, 0.075).unwrap();
        let hist = simulate_pde(&p, opts(0.1, 0.02, 2e-4)).unwrap();
        let rep = wkb_extract(&hist);
        for (w, h) in rep.w[0].iter().zip(&p.h) {
            assert!((w + h).abs() < 1e-14);
        }
    }

    #[test]
    fn fittest_trait_stays_at_origin() {
        let grid = Grid::new(4.0, 0.02).unwrap();
        let growth = ContinuousGrowth::affine(&grid, |x| 1.0 - x * x, &[&|_| -1.0]);
        let h = grid.sample(|x| x * x);
        let psi = vec![vec![1.0; grid.len()]];
        let bounds = PdeBounds {
            v_min: 0.1,
            v_max: 2.5,
            a: 1.0,
        };
        let p = PdeProblem::new(grid, psi, growth, h, bounds).unwrap();
        let hist = simulate_pde(&p, opts(0.1, 0.5, 2e-4)).unwrap();
        let rep = wkb_extract(&hist);
        assert!(rep.argmax_x.iter().all(|x| x.abs() <= 0.02 + 1e-12));
    }

    #[test]
    fn single_cell_without_diffusion_is_the_finite_system() {
        let eps = 0.1;
        let declared = DeclaredBounds {
            v_min: Some(0.1),
            v_max: Some(2.0),
            ..Default::default()
        };
        let s = single_chemostat(2.0, 0.2, declared);
        let grid = Grid::single(1.0);
        let p = PdeProblem::new(
            grid,
            vec![vec![1.0]],
            ContinuousGrowth::Chemostat {
                d: vec![1.0],
                c: vec![2.0],
                alpha: vec![1.0],
            },
            vec![0.2],
            PdeBounds {
                v_min: s.bounds().v_min,
                v_max: s.bounds().v_max,
                a: s.bounds().a,
            },
        )
        .unwrap();
        let hist = simulate_pde(
            &p,
            PdeOptions {
                eps,
                t_max: 2.0,
                dt: 1e-5,
                dt_out: 0.1,
                diffusion: false,
            },
        )
        .unwrap();
        let traj = simulate_finite(&s, eps, 2.0, 0.1).unwrap();
        for k in 0..traj.times.len() {
            assert!((hist.u[k][0] - traj.u[k][0]).abs() < 1e-3, "t = {}", traj.times[k]);
        }
    }

    #[test]
    fn bounds_hold_for_logistic_and_flag_doubled_v() {
        let p = logistic_problem(4.0, 0.02, 0.075).unwrap();
        let hist = simulate_pde(&p, opts(0.1, 1.0, 2e-4)).unwrap();
        let rep = check_pde_bounds(&hist, &p);
        assert!(rep.passed(), "{:?}", rep.first_violation());
        assert!(rep.reduced_holds);
        assert!(rep.margins.iter().all(|&m| m >= -1e-6));

        let mut bad = hist.clone();
        for x in bad.v[3].iter_mut() {
            *x *= 2.0;
        }
        let rep = check_pde_bounds(&bad, &p);
        assert!(!rep.passed());
        assert!(rep.violations.iter().all(|v| (v.time - 0.03).abs() < 1e-12));
    }

    #[test]
    fn slack_scales_with_eps_squared() {
        let p = logistic_problem(4.0, 0.02, 0.075).unwrap();
        let a = check_pde_bounds(&simulate_pde(&p, opts(0.1, 0.1, 2e-4)).unwrap(), &p);
        let b = check_pde_bounds(&simulate_pde(&p, opts(0.05, 0.1, 1e-4)).unwrap(), &p);
        assert!((a.slack.derived[0] / b.slack.derived[0] - 4.0).abs() < 1e-12);
        assert!((a.slack.reduced[0] / b.slack.reduced[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_in_x_is_stable_in_eps() {
        let p = logistic_problem(4.0, 0.02, 0.075).unwrap();
        let a = wkb_extract(&simulate_pde(&p, opts(0.1, 1.0, 2e-4)).unwrap());
        let b = wkb_extract(&simulate_pde(&p, opts(0.05, 1.0, 1e-4)).unwrap());
        assert!((a.lipschitz_x - b.lipschitz_x).abs() < 0.25 * a.lipschitz_x);
        for rep in [&a, &b] {
            assert!(rep.max_w.iter().all(|m| m.abs() <= 0.5));
        }
    }

    #[test]
    fn mass_escape_is_reported() {
        let p = logistic_problem(1.0, 0.02, 0.075).unwrap();
        assert!(matches!(
            simulate_pde(&p, opts(0.1, 0.1, 2e-4)),
            Err(PdeError::MassEscape { .. })
        ));
    }

    #[test]
    fn initial_mass_outside_bounds_is_rejected() {
        let p = logistic_problem(4.0, 0.02, 0.01).unwrap();
        assert!(matches!(
            simulate_pde(&p, opts(0.1, 0.1, 2e-4)),
            Err(PdeError::InitialMassViolation { .. })
        ));
    }

    #[test]
    fn grid_rules() {
        assert!(Grid::new(1.0, 0.3).is_err());
        assert_eq!(Grid::new(1.0, 0.5).unwrap().len(), 5);
        let p = logistic_problem(4.0, 0.02, 0.075).unwrap();
        assert!(matches!(simulate_pde(&p, opts(0.1, 0.1, 0.01)), Err(PdeError::InvalidGrid(_))));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
        #[test]
        fn positive_and_within_a_priori_bounds(curvature in 0.075f64..0.3, eps in 0.1f64..0.3) {
            proptest::prop_assume!((std::f64::consts::PI * eps / curvature).sqrt() < 2.4);
            proptest::prop_assume!(curvature * 36.0 / eps > 20.0);
            let p = logistic_problem(6.0, 0.05, curvature).unwrap();
            let hist = simulate_pde(&p, opts(eps, 0.3, 1e-3)).unwrap();
            proptest::prop_assert!(hist.u.iter().flatten().all(|&u| u > 0.0));
            let rep = check_pde_bounds(&hist, &p);
            proptest::prop_assert!(rep.passed(), "{:?}", rep.first_violation());
        }
    }
}
