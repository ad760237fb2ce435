//! Limiting discrete Hamilton-Jacobi problem
//!
//! ```text
//! dV(t,i)/dt = max { R_j(F(A(t))) : V(t,j) - T(i,j) = V(t,i) },   A(t) = {V(t,.) = 0}
//! ```
//!
//! solved exactly: `V` is piecewise linear in time, and breakpoints are the
//! times at which a trait reaches zero or a cost constraint becomes tight.

use crate::equilibria::EquilibriumCache;
use crate::error::HjError;
use crate::scenario::{InitialExponent, MutationCosts, Scenario};
use crate::subset::Subset;

/// Tie tolerance for zero-set and active-set membership.
pub const HJ_TOL: f64 = 1e-9;
/// Tolerance on `max_i V(t, i) = 0`.
pub const MAX_ZERO_TOL: f64 = 1e-6;

/// Initial value `V(0,i) = max{-h(i), max_j -h(j) - T(i,j)}` and whether it
/// reduces to `-h` (compatible initial data).
pub fn initial_value(h: &InitialExponent, costs: &MutationCosts) -> (Vec<f64>, bool) {
    let n = costs.len();
    let raw: Vec<f64> = h.values().iter().map(|x| -x).collect();
    let mut compatible = true;
    let v = (0..n)
        .map(|i| {
            let mut best = raw[i];
            for j in 0..n {
                if j != i {
                    let cand = raw[j] - costs.get(i, j);
                    if cand > best {
                        best = cand;
                        compatible = false;
                    }
                }
            }
            best
        })
        .collect();
    (v, compatible)
}

/// `{i : V_i >= -tol}`; requires `max_i V_i = 0` within `tol`.
pub fn zero_set(values: &[f64], tol: f64) -> Result<Subset, HjError> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max.abs() <= tol) {
        return Err(HjError::MaxNotZero { max, tol });
    }
    Ok(Subset::from_indices(
        values.iter().enumerate().filter(|(_, &x)| x >= -tol).map(|(i, _)| i),
    ))
}

/// `{j : |V_j - T(i,j) - V_i| <= tol}`, always containing `i`.
pub fn active_set(values: &[f64], i: usize, costs: &MutationCosts, tol: f64) -> Subset {
    let mut set = Subset::singleton(i);
    for j in 0..values.len() {
        let c = costs.get(i, j);
        if j != i && c.is_finite() && (values[j] - c - values[i]).abs() <= tol {
            set.insert(j);
        }
    }
    set
}

/// One linear piece of the value function on `[t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub start: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Zero set in force on the open segment.
    pub zero_set: Subset,
    pub f: Vec<f64>,
    /// Active set of every trait at `t0`.
    pub active: Vec<Subset>,
}

impl Segment {
    pub fn value(&self, t: f64, out: &mut [f64]) {
        let dt = t - self.t0;
        for (o, (v, s)) in out.iter_mut().zip(self.start.iter().zip(&self.slopes)) {
            *o = v + s * dt;
        }
    }
}

/// Piecewise-linear `V(t, .)` on `[0, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub segments: Vec<Segment>,
    pub t_max: f64,
    /// Whether `-h` already satisfied the cost inequality at time 0.
    pub compatible: bool,
    /// `-h` itself (differs from `V(0, .)` for incompatible data).
    pub raw_initial: Vec<f64>,
}

impl ValueFunction {
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.segments.iter().map(|s| s.t0).collect();
        b.push(self.t_max);
        b
    }

    pub fn n(&self) -> usize {
        self.segments[0].start.len()
    }

    fn segment_at(&self, t: f64) -> &Segment {
        let k = self.segments.partition_point(|s| s.t0 <= t);
        &self.segments[k.saturating_sub(1)]
    }

    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.segment_at(t).value(t, &mut out);
        out
    }

    /// Values on the grid `0, dt, ..., t_max`.
    pub fn sample(&self, times: &[f64]) -> Vec<Vec<f64>> {
        times.iter().map(|&t| self.value_at(t)).collect()
    }

    /// Zero set in force right after `t`.
    pub fn zero_set_at(&self, t: f64) -> Subset {
        self.segment_at(t).zero_set
    }

    pub fn f_at(&self, t: f64) -> &[f64] {
        &self.segment_at(t).f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    ZeroSetChange,
    ActiveSetChange,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ZeroSetChange => "zero_set_change",
            EventKind::ActiveSetChange => "active_set_change",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub traits: Subset,
    /// Zero sets for a zero-set change; the trait's active set otherwise.
    pub before: Subset,
    pub after: Subset,
    /// Resources in force from this event on.
    pub f_after: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

/// Evolves `V` on `[0, t_max]`.
pub fn evolve_hj(s: &Scenario, t_max: f64) -> Result<(ValueFunction, EventLog), HjError> {
    let cache = EquilibriumCache::new(s);
    evolve_hj_cached(&cache, t_max)
}

/// As [`evolve_hj`], reusing verified subsets from `cache`.
pub fn evolve_hj_cached(cache: &EquilibriumCache<'_>, t_max: f64) -> Result<(ValueFunction, EventLog), HjError> {
    let s = cache.scenario();
    if !(t_max > 0.0) {
        return Err(HjError::InvalidArgument(format!("t_max must be positive, got {t_max}")));
    }
    let n = s.n();
    let (mut values, compatible) = initial_value(&s.h, &s.costs);
    let raw_initial: Vec<f64> = s.h.values().iter().map(|x| -x).collect();

    let gamma = s.costs.gamma();
    let m = s.bounds().m.max(s.max_abs_rate());
    let guard = if gamma.is_finite() {
        (n as f64 * (t_max * m / gamma + n as f64)).ceil() as usize
    } else {
        n * n
    };

    let mut t = 0.0;
    let mut segments: Vec<Segment> = Vec::new();
    let mut log = EventLog::default();
    let mut prev_zero: Option<Subset> = None;
    let mut prev_feeders: Option<Vec<Subset>> = None;
    let mut events_seen = 0usize;

    loop {
        let closed = zero_set(&values, MAX_ZERO_TOL)?;
        for (i, x) in values.iter_mut().enumerate() {
            if closed.contains(i) && x.abs() <= HJ_TOL {
                *x = 0.0;
            }
        }
        let active: Vec<Subset> = (0..n).map(|i| active_set(&values, i, &s.costs, HJ_TOL)).collect();

        // Traits of the closed zero set with negative slope leave at once.
        let mut a = Subset::from_indices(values.iter().enumerate().filter(|(_, &x)| x >= -HJ_TOL).map(|(i, _)| i));
        let (f, slopes) = loop {
            let f = cache.f(a)?;
            let slopes: Vec<f64> = (0..n)
                .map(|i| active[i].iter().map(|j| s.rate(j, &f)).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let keep = Subset::from_indices(a.iter().filter(|&i| slopes[i] >= -HJ_TOL));
            if keep == a || keep.is_empty() {
                break ((*f).clone(), slopes);
            }
            a = keep;
        };

        let feeders: Vec<Subset> = (0..n)
            .map(|i| {
                Subset::from_indices(
                    active[i]
                        .iter()
                        .filter(|&j| j != i && s.rate(j, &f) >= slopes[i] - HJ_TOL),
                )
            })
            .collect();

        let before_zero = prev_zero.unwrap_or(closed);
        if a != before_zero {
            log.events.push(Event {
                time: t,
                kind: EventKind::ZeroSetChange,
                traits: before_zero.difference(a).union(a.difference(before_zero)),
                before: before_zero,
                after: a,
                f_after: f.clone(),
            });
        }
        if let Some(prev) = &prev_feeders {
            for i in 0..n {
                if prev[i] != feeders[i] {
                    log.events.push(Event {
                        time: t,
                        kind: EventKind::ActiveSetChange,
                        traits: Subset::singleton(i),
                        before: prev[i].union(Subset::singleton(i)),
                        after: feeders[i].union(Subset::singleton(i)),
                        f_after: f.clone(),
                    });
                }
            }
        }
        prev_zero = Some(a);
        prev_feeders = Some(feeders);

        // Earliest upcoming breakpoint.
        let mut tau = f64::INFINITY;
        let mut snap_pairs: Vec<(usize, usize)> = Vec::new();
        let mut snap_zero: Vec<usize> = Vec::new();
        for i in 0..n {
            if values[i] < -HJ_TOL && slopes[i] > 0.0 {
                let cand = -values[i] / slopes[i];
                if cand < tau - 1e-13 {
                    tau = cand;
                    snap_zero.clear();
                    snap_pairs.clear();
                }
                if (cand - tau).abs() <= 1e-13 {
                    snap_zero.push(i);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let c = s.costs.get(i, j);
                if j == i || !c.is_finite() {
                    continue;
                }
                let gap = values[j] - c - values[i];
                if gap < -HJ_TOL && slopes[j] > slopes[i] {
                    let cand = -gap / (slopes[j] - slopes[i]);
                    if cand < tau - 1e-13 {
                        tau = cand;
                        snap_zero.clear();
                        snap_pairs.clear();
                    }
                    if (cand - tau).abs() <= 1e-13 {
                        snap_pairs.push((i, j));
                    }
                }
            }
        }

        let t_next = (t + tau).min(t_max);
        segments.push(Segment {
            t0: t,
            t1: t_next,
            start: values.clone(),
            slopes: slopes.clone(),
            zero_set: a,
            f: f.clone(),
            active,
        });
        if t_next >= t_max {
            break;
        }
        events_seen += 1;
        if events_seen > guard {
            return Err(HjError::EventStall {
                t,
                state: format!("values {values:?}, slopes {slopes:?}, zero set {a}"),
            });
        }
        for (x, sl) in values.iter_mut().zip(&slopes) {
            *x += sl * tau;
        }
        for &i in &snap_zero {
            values[i] = 0.0;
        }
        for &(i, j) in &snap_pairs {
            values[i] = values[j] - s.costs.get(i, j);
        }
        t = t_next;
    }

    Ok((
        ValueFunction {
            segments,
            t_max,
            compatible,
            raw_initial,
        },
        log,
    ))
}

/// Outcome of one structural check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOutcome {
    pub passed: bool,
    /// Worst violation found (0 if none).
    pub worst: f64,
    pub at_time: f64,
}

impl CheckOutcome {
    fn new() -> Self {
        CheckOutcome {
            passed: true,
            worst: 0.0,
            at_time: f64::NAN,
        }
    }

    fn record(&mut self, violation: f64, t: f64) {
        if violation > self.worst {
            self.worst = violation;
            self.at_time = t;
        }
        if violation > 0.0 {
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    /// `V(t,i) >= V(t,j) - T(i,j)` within 1e-9.
    pub cost_inequality: CheckOutcome,
    /// `max_i V(t,i) = 0` within 1e-6.
    pub max_zero: CheckOutcome,
    /// Slopes bounded by `M + max |R|` and no jumps between segments.
    pub lipschitz: CheckOutcome,
    /// One-step sandwich `V(t+d,i)` within `M d` of `max{V(t,i); max_j V(t,j) - T(i,j)}`.
    pub sandwich: CheckOutcome,
    /// Cost-inequality violation of `-h` itself at time 0, when incompatible.
    pub initial_raw_violation: Option<f64>,
    pub checked_times: usize,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.cost_inequality.passed && self.max_zero.passed && self.lipschitz.passed && self.sandwich.passed
    }
}

fn cost_violation(values: &[f64], costs: &MutationCosts) -> f64 {
    let n = values.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = costs.get(i, j);
            if i != j && c.is_finite() {
                worst = worst.max(values[j] - c - values[i]);
            }
        }
    }
    worst
}

/// Checks the structural properties of `vf` at breakpoints and segment midpoints.
pub fn check_structure(vf: &ValueFunction, s: &Scenario) -> StructureReport {
    let mut cost = CheckOutcome::new();
    let mut maxz = CheckOutcome::new();
    let mut lip = CheckOutcome::new();
    let mut sand = CheckOutcome::new();
    let bound = s.bounds().m + s.max_abs_rate();
    let m = s.bounds().m.max(s.max_abs_rate());

    let mut times = Vec::new();
    for seg in &vf.segments {
        times.push(seg.t0);
        times.push(0.5 * (seg.t0 + seg.t1));
    }
    times.push(vf.t_max);

    for &t in &times {
        let v = vf.value_at(t);
        cost.record(cost_violation(&v, &s.costs) - 1e-9, t);
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        maxz.record(max.abs() - MAX_ZERO_TOL, t);
    }

    for (k, seg) in vf.segments.iter().enumerate() {
        for &sl in &seg.slopes {
            lip.record(sl.abs() - bound, seg.t0);
        }
        if k > 0 {
            let prev = &vf.segments[k - 1];
            let mut end = vec![0.0; seg.start.len()];
            prev.value(seg.t0, &mut end);
            let jump = end.iter().zip(&seg.start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            lip.record(jump - 1e-9, seg.t0);
        }
    }

    for &t in &times {
        let vt = vf.value_at(t);
        for delta in [1e-3, 1e-2, 0.1, 0.5] {
            if t + delta > vf.t_max {
                continue;
            }
            let later = vf.value_at(t + delta);
            for i in 0..vt.len() {
                let mut base = vt[i];
                for j in 0..vt.len() {
                    if j != i {
                        base = base.max(vt[j] - s.costs.get(i, j));
                    }
                }
                sand.record((later[i] - base).abs() - m * delta - 1e-9, t);
            }
        }
    }

    let initial_raw_violation = if vf.compatible {
        None
    } else {
        Some(cost_violation(&vf.raw_initial, &s.costs))
    };

    StructureReport {
        cost_inequality: cost,
        max_zero: maxz,
        lipschitz: lip,
        sandwich: sand,
        initial_raw_violation,
        checked_times: times.len(),
    }
}
