//! Jump-process sampling: Feynman-Kac estimates of the density, exact
//! probabilities of Skorokhod balls, and jump-count tails.
//!
//! The chain jumps `i -> j` at rate `exp(-T(i,j)/eps)`. Path `k` of a batch
//! draws from the ChaCha stream `k` of the batch seed, so results do not
//! depend on thread scheduling.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::MonteCarloError;
use crate::finite_ode::Trajectory;
use crate::scenario::{MutationCosts, Scenario};
use crate::variational::JumpPath;

/// One sampled path of the jump process.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpProcessSample {
    pub path: JumpPath,
    /// `ln` of the Feynman-Kac weight; `NaN` until an estimator fills it.
    pub log_weight: f64,
    pub stream: u64,
}

/// Jump rates of the chain at a fixed `eps`.
struct Rates {
    rate: Vec<Vec<f64>>,
    total: Vec<f64>,
}

impl Rates {
    fn new(costs: &MutationCosts, eps: f64) -> Rates {
        let n = costs.len();
        let rate: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| costs.rate(i, j, eps)).collect()).collect();
        let total = rate.iter().map(|row| row.iter().sum()).collect();
        Rates { rate, total }
    }

    /// Next jump after `now` from `x`, or `None` if it falls beyond `t`.
    fn next_jump(&self, rng: &mut ChaCha8Rng, x: usize, now: f64, t: f64) -> Option<(f64, usize)> {
        let c = self.total[x];
        if c <= 0.0 {
            return None;
        }
        let e: f64 = rng.sample(Exp1);
        let at = now + e / c;
        if at > t {
            return None;
        }
        let mut target = rng.random::<f64>() * c;
        let mut next = x;
        for (j, &r) in self.rate[x].iter().enumerate() {
            if r > 0.0 {
                next = j;
                if target < r {
                    break;
                }
                target -= r;
            }
        }
        Some((at, next))
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_one(rates: &Rates, i0: usize, t: f64, seed: u64, stream: u64) -> JumpPath {
    let mut rng = stream_rng(seed, stream);
    let mut path = JumpPath::constant(i0, t);
    let mut now = 0.0;
    let mut x = i0;
    while let Some((at, next)) = rates.next_jump(&mut rng, x, now, t) {
        path.jumps.push((at, next));
        now = at;
        x = next;
    }
    path
}

fn check_common(n_traits: usize, eps: f64, i0: usize, t: f64) -> Result<(), MonteCarloError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(MonteCarloError::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(MonteCarloError::InvalidArgument(format!("horizon must be non-negative, got {t}")));
    }
    if i0 >= n_traits {
        return Err(MonteCarloError::InvalidArgument(format!(
            "trait index {i0} out of range for {n_traits} traits"
        )));
    }
    Ok(())
}

/// `n` independent paths on `[0, t]` started at `i0`.
pub fn sample_paths(
    costs: &MutationCosts,
    eps: f64,
    i0: usize,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<JumpProcessSample>, MonteCarloError> {
    check_common(costs.len(), eps, i0, t)?;
    if n == 0 {
        return Err(MonteCarloError::InvalidArgument("path count must be at least 1".into()));
    }
    let rates = Rates::new(costs, eps);
    Ok((0..n as u64)
        .into_par_iter()
        .map(|k| JumpProcessSample {
            path: sample_one(&rates, i0, t, seed, k),
            log_weight: f64::NAN,
            stream: k,
        })
        .collect())
}

/// Resource vectors on a time grid, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceSchedule {
    pub times: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

impl ResourceSchedule {
    pub fn new(times: Vec<f64>, v: Vec<Vec<f64>>) -> Result<Self, MonteCarloError> {
        if times.is_empty() || times.len() != v.len() {
            return Err(MonteCarloError::InvalidArgument(
                "schedule needs one resource vector per time and at least one time".into(),
            ));
        }
        if times.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(MonteCarloError::InvalidArgument("schedule times must increase strictly".into()));
        }
        Ok(ResourceSchedule { times, v })
    }

    pub fn from_trajectory(traj: &Trajectory) -> Self {
        ResourceSchedule {
            times: traj.times.clone(),
            v: traj.v.clone(),
        }
    }

    /// Time-constant schedule on `[0, t]`.
    pub fn constant(v: Vec<f64>, t: f64) -> Self {
        ResourceSchedule {
            times: vec![0.0, t],
            v: vec![v.clone(), v],
        }
    }

    fn covers(&self, t: f64) -> Result<(), MonteCarloError> {
        let start = self.times[0];
        let end = *self.times.last().unwrap();
        let slack = 1e-12 * t.abs().max(1.0);
        if start > slack || end < t - slack {
            return Err(MonteCarloError::ScheduleGap { start, end, t });
        }
        Ok(())
    }

    fn interpolate(&self, k: usize, tau: f64, out: &mut [f64]) {
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let s = ((tau - t0) / (t1 - t0)).clamp(0.0, 1.0);
        for l in 0..out.len() {
            out[l] = self.v[k][l] + s * (self.v[k + 1][l] - self.v[k][l]);
        }
    }
}

/// Running integrals `G_i(tau) = int_{times[0]}^{tau} R_i(v) dtau`, exact on
/// each linear piece of the schedule.
struct CumulativeGrowth<'a> {
    s: &'a Scenario,
    sched: &'a ResourceSchedule,
    nodes: Vec<Vec<f64>>,
}

impl<'a> CumulativeGrowth<'a> {
    fn new(s: &'a Scenario, sched: &'a ResourceSchedule) -> Self {
        let nodes = (0..s.n())
            .map(|i| {
                let mut acc = vec![0.0; sched.times.len()];
                for k in 1..sched.times.len() {
                    let dt = sched.times[k] - sched.times[k - 1];
                    acc[k] = acc[k - 1]
                        + s.model.family.integral_linear(&s.psi, i, &sched.v[k - 1], &sched.v[k], dt);
                }
                acc
            })
            .collect();
        CumulativeGrowth { s, sched, nodes }
    }

    fn at(&self, i: usize, tau: f64, scratch: &mut [f64]) -> f64 {
        let times = &self.sched.times;
        if times.len() == 1 {
            return (tau - times[0]) * self.s.rate(i, &self.sched.v[0]);
        }
        let k = times.partition_point(|&x| x <= tau).clamp(1, times.len() - 1) - 1;
        self.sched.interpolate(k, tau, scratch);
        self.nodes[i][k]
            + self
                .s
                .model
                .family
                .integral_linear(&self.s.psi, i, &self.sched.v[k], scratch, tau - times[k])
    }

    /// `ln` of the weight `exp(-h(X_t)/eps + eps^-1 int_0^t R(X_s, v_{t-s}) ds)`.
    fn log_weight(&self, path: &JumpPath, eps: f64, scratch: &mut [f64]) -> f64 {
        let t = path.horizon;
        let mut integral = 0.0;
        let mut x = path.start;
        let mut s0 = 0.0;
        for &(sj, j) in path.jumps.iter().chain(std::iter::once(&(t, usize::MAX))) {
            integral += self.at(x, t - s0, scratch) - self.at(x, t - sj, scratch);
            s0 = sj;
            x = j;
        }
        (-self.s.h.get(path.end_state()) + integral) / eps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FkEstimate {
    pub estimate: f64,
    pub std_err: f64,
    /// `ln` of the estimate, accurate even when the estimate underflows.
    pub log_estimate: f64,
    pub n: usize,
}

/// Mean and standard error of weights given by their logarithms.
fn summarize_log_weights(logs: &[f64]) -> FkEstimate {
    let n = logs.len();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return FkEstimate {
            estimate: 0.0,
            std_err: 0.0,
            log_estimate: f64::NEG_INFINITY,
            n,
        };
    }
    let (mut s1, mut s2) = (0.0, 0.0);
    for &l in logs {
        let e = (l - m).exp();
        s1 += e;
        s2 += e * e;
    }
    let nf = n as f64;
    let var = if n > 1 { ((s2 - s1 * s1 / nf) / (nf - 1.0)).max(0.0) } else { 0.0 };
    let scale = m.exp();
    FkEstimate {
        estimate: scale * s1 / nf,
        std_err: scale * (var / nf).sqrt(),
        log_estimate: m + (s1 / nf).ln(),
        n,
    }
}

/// Feynman-Kac estimate of `u^eps(t, i)` from `n` sampled paths, with the
/// resource schedule read backwards in time along each path.
pub fn fk_estimate(
    s: &Scenario,
    schedule: &ResourceSchedule,
    eps: f64,
    t: f64,
    i: usize,
    n: usize,
    seed: u64,
) -> Result<FkEstimate, MonteCarloError> {
    check_common(s.n(), eps, i, t)?;
    if n == 0 {
        return Err(MonteCarloError::InvalidArgument("path count must be at least 1".into()));
    }
    if schedule.v.iter().any(|row| row.len() != s.r()) {
        return Err(MonteCarloError::InvalidArgument(format!(
            "schedule rows must have {} resources",
            s.r()
        )));
    }
    schedule.covers(t)?;
    let rates = Rates::new(&s.costs, eps);
    let growth = CumulativeGrowth::new(s, schedule);
    let logs: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; s.r()],
            |scratch, k| {
                let path = sample_one(&rates, i, t, seed, k);
                growth.log_weight(&path, eps, scratch)
            },
        )
        .collect();
    Ok(summarize_log_weights(&logs))
}

/// `ln` of the Feynman-Kac weight of a given path.
pub fn fk_log_weight(s: &Scenario, schedule: &ResourceSchedule, eps: f64, path: &JumpPath) -> Result<f64, MonteCarloError> {
    schedule.covers(path.horizon)?;
    let growth = CumulativeGrowth::new(s, schedule);
    Ok(growth.log_weight(path, eps, &mut vec![0.0; s.r()]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdpRow {
    pub eps: f64,
    pub probability: f64,
    pub eps_log_p: f64,
}

/// `int_a^b exp(-k x) dx`, stable for small `k`.
fn int_exp(k: f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let w = b - a;
    if (k * w).abs() < 1e-12 {
        w * (-k * a).exp()
    } else {
        (-k * a).exp() * -(-k * w).exp_m1() / k
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Golub-Welsch).
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut jac = DMatrix::zeros(m, m);
    for k in 1..m {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut out: Vec<(f64, f64)> = (0..m)
        .map(|k| (eig.eigenvalues[k], 2.0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Probability that the chain started at `phi.start` lies in the Skorokhod
/// ball of radius `delta` around `phi` on `[0, phi.horizon]`: same jump
/// skeleton, each jump time within `delta` of the corresponding one.
fn ball_probability(rates: &Rates, phi: &JumpPath, delta: f64, nodes: &[(f64, f64)]) -> f64 {
    let t = phi.horizon;
    let sk = phi.skeleton();
    let window = |s: f64| ((s - delta).max(0.0), (s + delta).min(t));
    match phi.jumps.as_slice() {
        [] => (-rates.total[sk[0]] * t).exp(),
        [(s1, _)] => {
            let (a, b) = window(*s1);
            let (x0, x1) = (sk[0], sk[1]);
            let (c0, c1) = (rates.total[x0], rates.total[x1]);
            rates.rate[x0][x1] * (-c1 * t).exp() * int_exp(c0 - c1, a, b)
        }
        [(s1, _), (s2, _)] => {
            let (a1, b1) = window(*s1);
            let (a2, b2) = window(*s2);
            let (x0, x1, x2) = (sk[0], sk[1], sk[2]);
            let (c0, c1, c2) = (rates.total[x0], rates.total[x1], rates.total[x2]);
            let (k1, k2) = (c0 - c1, c1 - c2);
            let lambda = rates.rate[x0][x1] * rates.rate[x1][x2];
            if lambda == 0.0 {
                return 0.0;
            }
            // Before a2 the inner integral over the second jump time is constant.
            let mut total = int_exp(k1, a1, b1.min(a2)) * int_exp(k2, a2, b2);
            let (lo, hi) = (a1.max(a2), b1.min(b2));
            if hi > lo {
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                total += nodes
                    .iter()
                    .map(|&(x, wgt)| {
                        let tau = mid + half * x;
                        wgt * (-k1 * tau).exp() * int_exp(k2, tau, b2)
                    })
                    .sum::<f64>()
                    * half;
            }
            lambda * (-c2 * t).exp() * total
        }
        _ => unreachable!(),
    }
}

/// Exact `eps ln P(X^eps in ball(phi, delta))` for each `eps`.
pub fn ldp_point_check(
    costs: &MutationCosts,
    eps_list: &[f64],
    phi: &JumpPath,
    delta: f64,
) -> Result<Vec<LdpRow>, MonteCarloError> {
    if phi.n_jumps() > 2 {
        return Err(MonteCarloError::TooManyJumps(phi.n_jumps()));
    }
    if !phi.is_valid(costs.len()) {
        return Err(MonteCarloError::InvalidArgument("reference path is not a valid jump path".into()));
    }
    if !(delta > 0.0) {
        return Err(MonteCarloError::InvalidArgument(format!("ball radius must be positive, got {delta}")));
    }
    let nodes = gauss_legendre(24);
    eps_list
        .iter()
        .map(|&eps| {
            check_common(costs.len(), eps, phi.start, phi.horizon)?;
            let p = ball_probability(&Rates::new(costs, eps), phi, delta, &nodes);
            Ok(LdpRow {
                eps,
                probability: p,
                eps_log_p: eps * p.ln(),
            })
        })
        .collect()
}

/// Least-squares slope of `ln P` against `1/eps`.
pub fn ldp_slope(rows: &[LdpRow]) -> f64 {
    let n = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|r| 1.0 / r.eps).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.probability.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpTail {
    pub jumps: usize,
    /// `(t^N / N!) * sum over N-step chains of prod exp(-T/eps)`.
    pub bound: f64,
    pub frequency: f64,
    /// Binomial standard error of `frequency`.
    pub std_err: f64,
    pub samples: usize,
}

/// Bound and sampled frequency of `P(at least big_n jumps before t)`.
pub fn jump_tail(
    costs: &MutationCosts,
    eps: f64,
    t: f64,
    i0: usize,
    big_n: usize,
    samples: usize,
    seed: u64,
) -> Result<JumpTail, MonteCarloError> {
    check_common(costs.len(), eps, i0, t)?;
    if big_n == 0 {
        return Ok(JumpTail {
            jumps: 0,
            bound: 1.0,
            frequency: 1.0,
            std_err: 0.0,
            samples,
        });
    }
    if samples == 0 {
        return Err(MonteCarloError::InvalidArgument("sample count must be at least 1".into()));
    }
    let rates = Rates::new(costs, eps);
    let n = costs.len();
    let mut chains = vec![0.0; n];
    chains[i0] = 1.0;
    let mut factor = 1.0;
    for m in 1..=big_n {
        let mut next = vec![0.0; n];
        for (i, &a) in chains.iter().enumerate() {
            for j in 0..n {
                next[j] += a * rates.rate[i][j];
            }
        }
        chains = next;
        factor *= t / m as f64;
    }
    let bound = factor * chains.iter().sum::<f64>();

    let hits: usize = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            let (mut now, mut x) = (0.0, i0);
            for _ in 0..big_n {
                match rates.next_jump(&mut rng, x, now, t) {
                    Some((at, next)) => {
                        now = at;
                        x = next;
                    }
                    None => return 0,
                }
            }
            1
        })
        .sum();
    let frequency = hits as f64 / samples as f64;
    Ok(JumpTail {
        jumps: big_n,
        bound,
        frequency,
        std_err: (frequency * (1.0 - frequency) / samples as f64).sqrt(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_ode::simulate_finite;
    use crate::scenario::fixtures::*;
    use crate::scenario::{DeclaredBounds, GrowthFamily, GrowthModel, InitialExponent, ResourceWeights, TraitSpace};

    fn inf_costs(n: usize) -> MutationCosts {
        MutationCosts::new(vec![vec![f64::INFINITY; n]; n]).unwrap()
    }

    #[test]
    fn no_jump_probability_matches_holding_law() {
        let costs = MutationCosts::uniform(2, 1.0).unwrap();
        let (eps, t, n) = (0.5, 1.0, 100_000);
        let paths = sample_paths(&costs, eps, 0, t, n, 7).unwrap();
        let p = (-costs.total_rate(0, eps) * t).exp();
        let freq = paths.iter().filter(|p| p.path.n_jumps() == 0).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= 3.0 * se, "{freq} vs {p}");
        for p in &paths {
            assert!(p.path.is_valid(2));
        }
    }

    #[test]
    fn forbidden_jumps_give_constant_paths() {
        let paths = sample_paths(&inf_costs(3), 0.2, 1, 5.0, 200, 1).unwrap();
        assert!(paths.iter().all(|p| p.path.jumps.is_empty() && p.path.start == 1));
    }

    #[test]
    fn same_seed_same_paths() {
        let costs = MutationCosts::uniform(3, 0.5).unwrap();
        let a = sample_paths(&costs, 0.5, 0, 3.0, 500, 11).unwrap();
        let b = sample_paths(&costs, 0.5, 0, 3.0, 500, 11).unwrap();
        let c = sample_paths(&costs, 0.5, 0, 3.0, 500, 12).unwrap();
        let paths = |v: &[JumpProcessSample]| v.iter().map(|p| p.path.clone()).collect::<Vec<_>>();
        assert_eq!(paths(&a), paths(&b));
        assert_ne!(paths(&a), paths(&c));
    }

    #[test]
    fn zero_growth_weight_is_one() {
        let s = zero_growth(2, 0.7, vec![0.0, 0.0]);
        let sched = ResourceSchedule::constant(vec![1.0], 1.0);
        let est = fk_estimate(&s, &sched, 0.3, 1.0, 0, 10_000, 3).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn constant_rate_single_trait_is_deterministic() {
        let (rho, h, eps, t) = (0.4, 0.3, 0.2, 1.5);
        let s = Scenario::new(
            TraitSpace::numbered(1).unwrap(),
            MutationCosts::new(vec![vec![0.0]]).unwrap(),
            ResourceWeights::new(vec![vec![1.0]]).unwrap(),
            GrowthModel::with_bounds(
                GrowthFamily::Table {
                    base: vec![rho],
                    slope: vec![vec![0.0]],
                },
                DeclaredBounds {
                    a: Some(1.0),
                    v_min: Some(0.1),
                    v_max: Some(10.0),
                    ..Default::default()
                },
            ),
            InitialExponent::new(vec![h]).unwrap(),
        )
        .unwrap();
        let sched = ResourceSchedule::new(vec![0.0, 0.7, 2.0], vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let est = fk_estimate(&s, &sched, eps, t, 0, 50, 0).unwrap();
        let exact = ((-h + rho * t) / eps).exp();
        assert!((est.estimate - exact).abs() <= 1e-12 * exact);
        assert!(est.std_err <= 1e-12 * exact);
    }

    #[test]
    fn schedule_must_cover_horizon() {
        let s = s1();
        let sched = ResourceSchedule::new(vec![0.0, 0.5], vec![vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(
            fk_estimate(&s, &sched, 0.3, 1.0, 0, 10, 0),
            Err(MonteCarloError::ScheduleGap { .. })
        ));
        let late = ResourceSchedule::new(vec![0.1, 2.0], vec![vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(
            fk_estimate(&s, &late, 0.3, 1.0, 0, 10, 0),
            Err(MonteCarloError::ScheduleGap { .. })
        ));
    }

    #[test]
    fn path_weight_integrates_schedule_backwards() {
        // R_i(v) is linear for the table family, so the leg integrals are simple.
        let s = Scenario::new(
            TraitSpace::numbered(2).unwrap(),
            MutationCosts::uniform(2, 1.0).unwrap(),
            ResourceWeights::new(vec![vec![1.0, 1.0]]).unwrap(),
            GrowthModel::with_bounds(
                GrowthFamily::Table {
                    base: vec![1.0, 0.0],
                    slope: vec![vec![-1.0], vec![0.0]],
                },
                DeclaredBounds {
                    a: Some(1.0),
                    v_min: Some(0.1),
                    v_max: Some(10.0),
                    ..Default::default()
                },
            ),
            InitialExponent::new(vec![0.2, 0.0]).unwrap(),
        )
        .unwrap();
        // v(tau) = tau on [0, 2]; path 0 -> 1 at s = 0.5, horizon 2.
        let sched = ResourceSchedule::new(vec![0.0, 2.0], vec![vec![0.0], vec![2.0]]).unwrap();
        let path = JumpPath {
            start: 0,
            jumps: vec![(0.5, 1)],
            horizon: 2.0,
        };
        let eps = 0.5;
        // Trait 0 on s in [0, 0.5] sees tau in [1.5, 2]: int (1 - tau) = 0.5 - 0.875.
        let expected = (-0.0 + (0.5 - 0.875)) / eps;
        let got = fk_log_weight(&s, &sched, eps, &path).unwrap();
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn fk_matches_ode_on_s1() {
        let s = s1();
        let eps = 0.3;
        let traj = simulate_finite(&s, eps, 1.0, 0.01).unwrap();
        let sched = ResourceSchedule::from_trajectory(&traj);
        let last = traj.times.len() - 1;
        for i in 0..2 {
            let est = fk_estimate(&s, &sched, eps, 1.0, i, 20_000, 42).unwrap();
            let reference = traj.u[last][i];
            assert!(
                (est.estimate - reference).abs() <= 3.0 * est.std_err + 2e-4 * reference,
                "trait {i}: {} +- {} vs {reference}",
                est.estimate,
                est.std_err
            );
        }
    }

    #[test]
    fn constant_path_ball() {
        let costs = MutationCosts::uniform(2, 1.0).unwrap();
        let phi = JumpPath::constant(0, 1.0);
        let rows = ldp_point_check(&costs, &[0.5, 0.1, 0.02], &phi, 0.25).unwrap();
        for r in &rows {
            assert!((r.probability - (-(-1.0 / r.eps).exp()).exp()).abs() < 1e-15);
        }
        assert!(rows[2].eps_log_p.abs() < 1e-15);
    }

    #[test]
    fn one_jump_ball_has_cost_slope() {
        let costs = MutationCosts::uniform(2, 1.0).unwrap();
        let phi = JumpPath {
            start: 0,
            jumps: vec![(0.5, 1)],
            horizon: 1.0,
        };
        let rows = ldp_point_check(&costs, &[0.1, 0.05], &phi, 0.25).unwrap();
        assert!((ldp_slope(&rows) + 1.0).abs() <= 0.05);
        assert!((rows[1].eps_log_p + 1.0).abs() <= 0.05);
        // Direct check against the integral with equal total rates.
        let eps = 0.1;
        let lam = (-1.0f64 / eps).exp();
        let direct = lam * 0.5 * (-lam).exp();
        let p = ldp_point_check(&costs, &[eps], &phi, 0.25).unwrap()[0].probability;
        assert!((p - direct).abs() <= 1e-14 * direct);
    }

    #[test]
    fn two_jump_ball_matches_quadrature_of_density() {
        let costs = MutationCosts::new(vec![vec![0.0, 0.6, 1.0], vec![0.8, 0.0, 0.5], vec![1.2, 0.9, 0.0]]).unwrap();
        let eps = 0.4;
        let phi = JumpPath {
            start: 0,
            jumps: vec![(0.8, 1), (1.1, 2)],
            horizon: 2.0,
        };
        let delta = 0.3;
        let p = ldp_point_check(&costs, &[eps], &phi, delta).unwrap()[0].probability;
        let r = Rates::new(&costs, eps);
        let m = 2000;
        let (a1, a2) = (0.5, 0.8);
        let h = 2.0 * delta / m as f64;
        let mut brute = 0.0;
        for p1 in 0..m {
            let t1 = a1 + (p1 as f64 + 0.5) * h;
            for p2 in 0..m {
                let t2 = a2 + (p2 as f64 + 0.5) * h;
                if t2 <= t1 {
                    continue;
                }
                brute += r.rate[0][1] * r.rate[1][2]
                    * (-r.total[0] * t1 - r.total[1] * (t2 - t1) - r.total[2] * (2.0 - t2)).exp()
                    * h
                    * h;
            }
        }
        assert!((p - brute).abs() < 2e-3 * brute, "{p} vs {brute}");
    }

    #[test]
    fn forbidden_jump_ball_is_empty() {
        let costs = MutationCosts::new(vec![vec![0.0, f64::INFINITY], vec![1.0, 0.0]]).unwrap();
        let phi = JumpPath {
            start: 0,
            jumps: vec![(0.5, 1)],
            horizon: 1.0,
        };
        let rows = ldp_point_check(&costs, &[0.1], &phi, 0.2).unwrap();
        assert_eq!(rows[0].probability, 0.0);
        assert_eq!(rows[0].eps_log_p, f64::NEG_INFINITY);
    }

    #[test]
    fn three_jumps_rejected() {
        let costs = MutationCosts::uniform(2, 1.0).unwrap();
        let phi = JumpPath {
            start: 0,
            jumps: vec![(0.2, 1), (0.4, 0), (0.6, 1)],
            horizon: 1.0,
        };
        assert_eq!(
            ldp_point_check(&costs, &[0.1], &phi, 0.05),
            Err(MonteCarloError::TooManyJumps(3))
        );
    }

    #[test]
    fn jump_tail_bounds() {
        let costs = MutationCosts::uniform(2, 1.0).unwrap();
        let one = jump_tail(&costs, 0.5, 1.0, 0, 1, 100_000, 5).unwrap();
        assert!((one.bound - (-2.0f64).exp()).abs() < 1e-15);
        assert!(one.frequency <= one.bound);
        let two = jump_tail(&costs, 0.5, 1.0, 0, 2, 100_000, 5).unwrap();
        assert!((two.bound - (-4.0f64).exp() / 2.0).abs() < 1e-15);
        assert!(two.frequency <= two.bound + 3.0 * two.std_err);
        let zero = jump_tail(&costs, 0.5, 1.0, 0, 0, 10, 5).unwrap();
        assert_eq!((zero.bound, zero.frequency), (1.0, 1.0));
    }

    #[test]
    fn jump_tail_log_bound_rearrangement() {
        let costs = MutationCosts::new(vec![vec![0.0, 0.7], vec![1.3, 0.0]]).unwrap();
        for &eps in &[0.5, 0.2, 0.1] {
            for &t in &[0.5, 1.0, 3.0] {
                for big_n in 1..6usize {
                    let tail = jump_tail(&costs, eps, t, 0, big_n, 1, 0).unwrap();
                    let log_fact: f64 = (1..=big_n).map(|k| (k as f64).ln()).sum();
                    let rhs = -(big_n as f64) * 0.7 + big_n as f64 * eps * t.ln() - eps * log_fact;
                    assert!(eps * tail.bound.ln() <= rhs + 1e-12);
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let nodes = gauss_legendre(6);
        let s: f64 = nodes.iter().map(|&(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-13);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn reruns_are_bit_identical(seed in proptest::prelude::any::<u64>(), i0 in 0usize..2) {
            let costs = MutationCosts::uniform(2, 1.0).unwrap();
            let a = sample_paths(&costs, 0.5, i0, 1.0, 64, seed).unwrap();
            let b = sample_paths(&costs, 0.5, i0, 1.0, 64, seed).unwrap();
            for (x, y) in a.iter().zip(&b) {
                proptest::prop_assert_eq!(&x.path, &y.path);
                proptest::prop_assert_eq!(x.stream, y.stream);
            }
            let s = s1();
            let sched = ResourceSchedule::constant(vec![1.0], 1.0);
            let x = fk_estimate(&s, &sched, 0.5, 1.0, i0, 256, seed).unwrap();
            let y = fk_estimate(&s, &sched, 0.5, 1.0, i0, 256, seed).unwrap();
            proptest::prop_assert_eq!(x.estimate.to_bits(), y.estimate.to_bits());
            proptest::prop_assert_eq!(x.std_err.to_bits(), y.std_err.to_bits());
        }
    }
}
