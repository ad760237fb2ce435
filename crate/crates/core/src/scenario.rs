//! Problem instances: trait space, mutation costs, resource weights, growth
//! families and the initial exponent, plus validation of the standing
//! assumptions on them.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::ScenarioError;

/// Ordered, labelled trait space. Trait `i` is the `i`-th label.
#[derive(Debug, Clone, PartialEq)]
pub struct TraitSpace {
    labels: Vec<String>,
}

impl TraitSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, ScenarioError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(ScenarioError::Labels("at least one trait is required".into()));
        }
        for (k, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(ScenarioError::Labels(format!("label {k} is empty")));
            }
            if labels[..k].contains(l) {
                return Err(ScenarioError::Labels(format!("duplicate label `{l}`")));
            }
        }
        if labels.len() > 64 {
            return Err(ScenarioError::Labels("at most 64 traits are supported".into()));
        }
        Ok(TraitSpace { labels })
    }

    /// Traits labelled `1..=n`.
    pub fn numbered(n: usize) -> Result<Self, ScenarioError> {
        TraitSpace::new((1..=n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Mutation cost matrix. `cost(i, j)` is the exponential rate exponent of a
/// mutation `i -> j`; `f64::INFINITY` forbids the jump. The diagonal is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationCosts {
    cost: Vec<Vec<f64>>,
}

impl MutationCosts {
    /// Builds the matrix; the diagonal entries are ignored and stored as 0.
    pub fn new(mut cost: Vec<Vec<f64>>) -> Result<Self, ScenarioError> {
        let n = cost.len();
        if n == 0 {
            return Err(ScenarioError::Dimension("cost matrix is empty".into()));
        }
        for (i, row) in cost.iter_mut().enumerate() {
            if row.len() != n {
                return Err(ScenarioError::Dimension(format!(
                    "cost row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, c) in row.iter_mut().enumerate() {
                if i == j {
                    *c = 0.0;
                } else if c.is_nan() || *c <= 0.0 {
                    return Err(ScenarioError::InvalidValue {
                        key: format!("costs[{i}][{j}]"),
                        reason: format!("off-diagonal cost must be in (0, inf], got {c}"),
                    });
                }
            }
        }
        Ok(MutationCosts { cost })
    }

    /// Every off-diagonal cost equal to `c`.
    pub fn uniform(n: usize, c: f64) -> Result<Self, ScenarioError> {
        MutationCosts::new(vec![vec![c; n]; n])
    }

    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cost[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.cost
    }

    /// Smallest finite off-diagonal cost (`+inf` if there is none).
    pub fn gamma(&self) -> f64 {
        self.off_diagonal().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min)
    }

    /// Largest finite off-diagonal cost (`+inf` if there is none).
    pub fn beta(&self) -> f64 {
        let b = self
            .off_diagonal()
            .filter(|c| c.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if b == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            b
        }
    }

    /// Jump rate `exp(-cost(i, j)/eps)`; exactly 0 for infinite costs.
    pub fn rate(&self, i: usize, j: usize, eps: f64) -> f64 {
        if i == j {
            return 0.0;
        }
        let c = self.cost[i][j];
        if c.is_finite() {
            (-c / eps).exp()
        } else {
            0.0
        }
    }

    /// Total jump rate out of `i`.
    pub fn total_rate(&self, i: usize, eps: f64) -> f64 {
        (0..self.len()).map(|j| self.rate(i, j, eps)).sum()
    }

    /// Copy with traits reordered: new trait `k` is old trait `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> MutationCosts {
        let cost = perm
            .iter()
            .map(|&a| perm.iter().map(|&b| self.cost[a][b]).collect())
            .collect();
        MutationCosts { cost }
    }

    fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        self.cost
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, &c)| c))
    }
}

/// Infimum over distinct triples with `cost(i, k) < inf` of
/// `cost(i, j) + cost(j, k) - cost(i, k)`; `+inf` for an empty infimum.
pub fn triangle_slack(costs: &MutationCosts) -> Result<f64, ScenarioError> {
    let n = costs.len();
    let mut eta = f64::INFINITY;
    let mut worst = (0, 0, 0);
    for i in 0..n {
        for k in 0..n {
            if k == i || !costs.get(i, k).is_finite() {
                continue;
            }
            for j in 0..n {
                if j == i || j == k {
                    continue;
                }
                let s = costs.get(i, j) + costs.get(j, k) - costs.get(i, k);
                if s < eta {
                    eta = s;
                    worst = (i, j, k);
                }
            }
        }
    }
    if eta <= 0.0 {
        return Err(ScenarioError::SlackViolation {
            slack: eta,
            i: worst.0,
            j: worst.1,
            k: worst.2,
        });
    }
    Ok(eta)
}

/// Resource weights `psi[l][j]`, one row per resource, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceWeights {
    psi: Vec<Vec<f64>>,
}

impl ResourceWeights {
    pub fn new(psi: Vec<Vec<f64>>) -> Result<Self, ScenarioError> {
        if psi.is_empty() || psi[0].is_empty() {
            return Err(ScenarioError::Dimension("psi must have at least one row and column".into()));
        }
        let n = psi[0].len();
        for (l, row) in psi.iter().enumerate() {
            if row.len() != n {
                return Err(ScenarioError::Dimension(format!(
                    "psi row {l} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &p) in row.iter().enumerate() {
                if !(p.is_finite() && p > 0.0) {
                    return Err(ScenarioError::InvalidValue {
                        key: format!("psi[{l}][{j}]"),
                        reason: format!("weights must be finite and positive, got {p}"),
                    });
                }
            }
        }
        Ok(ResourceWeights { psi })
    }

    /// Number of resources.
    pub fn resources(&self) -> usize {
        self.psi.len()
    }

    /// Number of traits.
    pub fn traits(&self) -> usize {
        self.psi[0].len()
    }

    pub fn get(&self, l: usize, j: usize) -> f64 {
        self.psi[l][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.psi
    }

    pub fn min(&self) -> f64 {
        self.psi.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.psi.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// `v_l = sum_j psi[l][j] u_j`, written into `v`.
    pub fn apply(&self, u: &[f64], v: &mut [f64]) {
        for (vl, row) in v.iter_mut().zip(&self.psi) {
            *vl = row.iter().zip(u).map(|(p, x)| p * x).sum();
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> ResourceWeights {
        let psi = self.psi.iter().map(|row| perm.iter().map(|&a| row[a]).collect()).collect();
        ResourceWeights { psi }
    }
}

/// Resource vector `v_l = sum_j psi[l][j] u_j`.
pub fn resource_map(weights: &ResourceWeights, u: &[f64]) -> Result<Vec<f64>, ScenarioError> {
    if u.len() != weights.traits() {
        return Err(ScenarioError::Dimension(format!(
            "density vector has {} entries, weights expect {}",
            u.len(),
            weights.traits()
        )));
    }
    let mut v = vec![0.0; weights.resources()];
    weights.apply(u, &mut v);
    Ok(v)
}

/// Parametric growth-rate families `R_i(v)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GrowthFamily {
    /// `R_i(v) = -d_i + c_i sum_l alpha_l psi_l(i) / (1 + v_l)`.
    Chemostat { d: Vec<f64>, c: Vec<f64>, alpha: Vec<f64> },
    /// `R_i(v) = r_i - v_i`, one resource per trait; `c` are the symmetry weights.
    LotkaVolterra { r: Vec<f64>, c: Vec<f64> },
    /// Affine rates `R_i(v) = base_i + sum_l slope[i][l] v_l`, used for tests.
    Table { base: Vec<f64>, slope: Vec<Vec<f64>> },
}

impl GrowthFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GrowthFamily::Chemostat { .. } => "chemostat",
            GrowthFamily::LotkaVolterra { .. } => "lotka_volterra",
            GrowthFamily::Table { .. } => "table",
        }
    }

    /// Growth rate of trait `i` at resources `v`.
    pub fn rate(&self, psi: &ResourceWeights, i: usize, v: &[f64]) -> f64 {
        match self {
            GrowthFamily::Chemostat { d, c, alpha } => {
                let s: f64 = alpha
                    .iter()
                    .zip(v)
                    .enumerate()
                    .map(|(l, (a, vl))| a * psi.get(l, i) / (1.0 + vl))
                    .sum();
                -d[i] + c[i] * s
            }
            GrowthFamily::LotkaVolterra { r, .. } => r[i] - v[i],
            GrowthFamily::Table { base, slope } => {
                base[i] + slope[i].iter().zip(v).map(|(s, x)| s * x).sum::<f64>()
            }
        }
    }

    /// Partial derivatives `dR_i/dv_l`, written into `out`.
    pub fn gradient(&self, psi: &ResourceWeights, i: usize, v: &[f64], out: &mut [f64]) {
        match self {
            GrowthFamily::Chemostat { c, alpha, .. } => {
                for (l, o) in out.iter_mut().enumerate() {
                    *o = -c[i] * alpha[l] * psi.get(l, i) / (1.0 + v[l]).powi(2);
                }
            }
            GrowthFamily::LotkaVolterra { .. } => {
                for (l, o) in out.iter_mut().enumerate() {
                    *o = if l == i { -1.0 } else { 0.0 };
                }
            }
            GrowthFamily::Table { slope, .. } => out.copy_from_slice(&slope[i]),
        }
    }

    /// `int_0^dt R_i(v0 + (v1 - v0) s/dt) ds`, exact for every family.
    pub fn integral_linear(&self, psi: &ResourceWeights, i: usize, v0: &[f64], v1: &[f64], dt: f64) -> f64 {
        match self {
            GrowthFamily::Chemostat { d, c, alpha } => {
                let mut s = 0.0;
                for l in 0..alpha.len() {
                    let a = 1.0 + v0[l];
                    let b = 1.0 + v1[l];
                    // int_0^dt ds / (a + (b - a) s/dt) = dt * ln(b/a) / (b - a)
                    let rel = (b - a) / a;
                    let mean_inv = if rel.abs() < 1e-6 {
                        (1.0 - rel / 2.0 + rel * rel / 3.0) / a
                    } else {
                        (b / a).ln() / (b - a)
                    };
                    s += alpha[l] * psi.get(l, i) * mean_inv;
                }
                dt * (-d[i] + c[i] * s)
            }
            GrowthFamily::LotkaVolterra { .. } | GrowthFamily::Table { .. } => {
                0.5 * dt * (self.rate(psi, i, v0) + self.rate(psi, i, v1))
            }
        }
    }

    fn check_dims(&self, n: usize, r: usize) -> Result<(), ScenarioError> {
        let len = |key: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(ScenarioError::Dimension(format!("{key} has {got} entries, expected {want}")))
            }
        };
        let positive = |key: &str, xs: &[f64]| {
            for (k, &x) in xs.iter().enumerate() {
                if !(x.is_finite() && x > 0.0) {
                    return Err(ScenarioError::InvalidValue {
                        key: format!("model.{key}[{k}]"),
                        reason: format!("must be finite and positive, got {x}"),
                    });
                }
            }
            Ok(())
        };
        match self {
            GrowthFamily::Chemostat { d, c, alpha } => {
                len("model.d", d.len(), n)?;
                len("model.c", c.len(), n)?;
                len("model.alpha", alpha.len(), r)?;
                positive("d", d)?;
                positive("c", c)?;
                positive("alpha", alpha)
            }
            GrowthFamily::LotkaVolterra { r: rr, c } => {
                if n != r {
                    return Err(ScenarioError::Dimension(format!(
                        "Lotka-Volterra needs one resource per trait ({n} traits, {r} resources)"
                    )));
                }
                len("model.r", rr.len(), n)?;
                len("model.c", c.len(), n)?;
                positive("r", rr)?;
                positive("c", c)
            }
            GrowthFamily::Table { base, slope } => {
                len("model.base", base.len(), n)?;
                len("model.slope", slope.len(), n)?;
                for (i, row) in slope.iter().enumerate() {
                    len(&format!("model.slope[{i}]"), row.len(), r)?;
                }
                if base.iter().chain(slope.iter().flatten()).any(|x| !x.is_finite()) {
                    return Err(ScenarioError::InvalidValue {
                        key: "model".into(),
                        reason: "table entries must be finite".into(),
                    });
                }
                Ok(())
            }
        }
    }
}

/// Constants that may be declared explicitly instead of derived.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DeclaredBounds {
    pub a: Option<f64>,
    pub m: Option<f64>,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
}

/// Monotonicity constant `A`, envelope `M` and viability window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelBounds {
    pub a: f64,
    pub m: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// A growth family together with any declared constants.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthModel {
    pub family: GrowthFamily,
    pub declared: DeclaredBounds,
}

impl GrowthModel {
    pub fn new(family: GrowthFamily) -> Self {
        GrowthModel {
            family,
            declared: DeclaredBounds::default(),
        }
    }

    pub fn with_bounds(family: GrowthFamily, declared: DeclaredBounds) -> Self {
        GrowthModel { family, declared }
    }

    /// Derives the constants from the parameters where a closed form exists;
    /// declared values take precedence.
    pub fn resolve_bounds(&self, psi: &ResourceWeights) -> Result<ModelBounds, ScenarioError> {
        let n = psi.traits();
        let r = psi.resources();
        let dec = self.declared;
        let (v_min, v_max) = match &self.family {
            GrowthFamily::Chemostat { d, c, alpha } => {
                let lo = (0..n)
                    .map(|i| {
                        let cap: f64 = (0..r).map(|l| alpha[l] * psi.get(l, i)).sum();
                        c[i] * cap / d[i] - 1.0
                    })
                    .fold(f64::INFINITY, f64::min);
                let hi = match dec.v_max {
                    Some(x) => x,
                    None => {
                        let mut hi = f64::NEG_INFINITY;
                        for i in 0..n {
                            for l in 0..r {
                                let rest: f64 =
                                    (0..r).filter(|&k| k != l).map(|k| alpha[k] * psi.get(k, i)).sum();
                                let denom = d[i] - c[i] * rest;
                                if denom <= 0.0 {
                                    return Err(ScenarioError::MissingBounds(format!(
                                        "trait {i} stays viable however large resource {l} is; declare v_max"
                                    )));
                                }
                                hi = hi.max(c[i] * alpha[l] * psi.get(l, i) / denom - 1.0);
                            }
                        }
                        hi
                    }
                };
                (dec.v_min.unwrap_or(lo), hi)
            }
            GrowthFamily::LotkaVolterra { r: rr, .. } => (
                dec.v_min.unwrap_or_else(|| rr.iter().copied().fold(f64::INFINITY, f64::min)),
                dec.v_max.unwrap_or_else(|| rr.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            ),
            GrowthFamily::Table { .. } => match (dec.v_min, dec.v_max) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(ScenarioError::MissingBounds(
                        "table models must declare v_min and v_max".into(),
                    ))
                }
            },
        };
        if !(v_min.is_finite() && v_max.is_finite() && v_min <= v_max) {
            return Err(ScenarioError::InvalidValue {
                key: "model.bounds".into(),
                reason: format!("viability window [{v_min}, {v_max}] is not a finite interval"),
            });
        }
        let a = match (dec.a, &self.family) {
            (Some(a), _) => a,
            (None, GrowthFamily::Chemostat { c, alpha, .. }) => {
                let lo = (v_min / 2.0).max(0.0);
                let hi = 2.0 * v_max;
                let mut big: f64 = 0.0;
                let mut small = f64::INFINITY;
                for i in 0..n {
                    for l in 0..r {
                        let k = c[i] * alpha[l] * psi.get(l, i);
                        big = big.max(k / (1.0 + lo).powi(2));
                        small = small.min(k / (1.0 + hi).powi(2));
                    }
                }
                big.max(1.0 / small)
            }
            (None, GrowthFamily::LotkaVolterra { .. }) => 1.0,
            (None, GrowthFamily::Table { slope, .. }) => {
                let mags: Vec<f64> = slope.iter().flatten().map(|s| s.abs()).collect();
                let big = mags.iter().copied().fold(0.0, f64::max);
                let small = mags.iter().copied().fold(f64::INFINITY, f64::min);
                if small > 0.0 {
                    big.max(1.0 / small).max(1.0)
                } else {
                    return Err(ScenarioError::MissingBounds(
                        "table model with a zero slope must declare a".into(),
                    ));
                }
            }
        };
        if !(a.is_finite() && a >= 1.0) {
            return Err(ScenarioError::InvalidValue {
                key: "model.a".into(),
                reason: format!("monotonicity constant must be finite and >= 1, got {a}"),
            });
        }
        let m = match dec.m {
            Some(m) => m,
            None => {
                let lo = vec![0.0; r];
                let hi = vec![2.0 * v_max; r];
                (0..n)
                    .map(|i| self.family.rate(psi, i, &lo).abs().max(self.family.rate(psi, i, &hi).abs()))
                    .fold(0.0, f64::max)
            }
        };
        if !(m.is_finite() && m >= 0.0) {
            return Err(ScenarioError::InvalidValue {
                key: "model.m".into(),
                reason: format!("envelope bound must be finite and non-negative, got {m}"),
            });
        }
        Ok(ModelBounds { a, m, v_min, v_max })
    }
}

/// Growth rate of trait `i` at resources `v`.
pub fn evaluate_growth(model: &GrowthModel, weights: &ResourceWeights, i: usize, v: &[f64]) -> f64 {
    model.family.rate(weights, i, v)
}

/// Initial exponent: `u(0, i) = exp(-h(i)/eps)` for every eps.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialExponent {
    h: Vec<f64>,
}

impl InitialExponent {
    pub fn new(h: Vec<f64>) -> Result<Self, ScenarioError> {
        for (i, x) in h.iter().enumerate() {
            if !x.is_finite() {
                return Err(ScenarioError::InvalidValue {
                    key: format!("h[{i}]"),
                    reason: format!("initial exponent must be finite, got {x}"),
                });
            }
        }
        Ok(InitialExponent { h })
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    pub fn get(&self, i: usize) -> f64 {
        self.h[i]
    }
}

/// Bounds on the total mass `sum_i u(t, i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassWindow {
    /// Lower bound with the constants of the invariance argument.
    pub lower: f64,
    pub upper: f64,
    /// Lower bound using `A^-1` and the largest cost `beta`.
    pub lower_beta: f64,
}

impl MassWindow {
    pub fn contains(&self, mass: f64, rel_tol: f64) -> bool {
        mass >= self.lower - rel_tol * self.lower.abs() && mass <= self.upper * (1.0 + rel_tol)
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub traits: TraitSpace,
    pub costs: MutationCosts,
    pub psi: ResourceWeights,
    pub model: GrowthModel,
    pub h: InitialExponent,
    bounds: ModelBounds,
    slack: f64,
}

impl Scenario {
    pub fn new(
        traits: TraitSpace,
        costs: MutationCosts,
        psi: ResourceWeights,
        model: GrowthModel,
        h: InitialExponent,
    ) -> Result<Self, ScenarioError> {
        let n = traits.len();
        if costs.len() != n {
            return Err(ScenarioError::Dimension(format!("costs are {0}x{0}, expected {n}x{n}", costs.len())));
        }
        if psi.traits() != n {
            return Err(ScenarioError::Dimension(format!("psi has {} columns, expected {n}", psi.traits())));
        }
        if h.values().len() != n {
            return Err(ScenarioError::Dimension(format!("h has {} entries, expected {n}", h.values().len())));
        }
        model.family.check_dims(n, psi.resources())?;
        let slack = triangle_slack(&costs)?;
        let bounds = model.resolve_bounds(&psi)?;
        Ok(Scenario {
            traits,
            costs,
            psi,
            model,
            h,
            bounds,
            slack,
        })
    }

    pub fn n(&self) -> usize {
        self.traits.len()
    }

    /// Number of resources.
    pub fn r(&self) -> usize {
        self.psi.resources()
    }

    pub fn bounds(&self) -> ModelBounds {
        self.bounds
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn rate(&self, i: usize, v: &[f64]) -> f64 {
        self.model.family.rate(&self.psi, i, v)
    }

    pub fn rates(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.rate(i, v);
        }
    }

    pub fn resources_of(&self, u: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.r()];
        self.psi.apply(u, &mut v);
        v
    }

    /// Largest `|R_i(v)|` over the resource box `[v_min/2, 2 v_max]^r`
    /// (every family is monotone per coordinate, so corners suffice).
    pub fn max_abs_rate(&self) -> f64 {
        let r = self.r();
        let lo = (self.bounds.v_min / 2.0).max(0.0);
        let hi = 2.0 * self.bounds.v_max;
        let mut best: f64 = 0.0;
        let mut v = vec![0.0; r];
        for corner in 0..(1u64 << r.min(16)) {
            for (l, x) in v.iter_mut().enumerate() {
                *x = if corner >> l & 1 == 1 { hi } else { lo };
            }
            for i in 0..self.n() {
                best = best.max(self.rate(i, &v).abs());
            }
        }
        best
    }

    /// Mass window at a given eps.
    pub fn mass_window(&self, eps: f64) -> MassWindow {
        let b = self.bounds;
        let k = (self.n() - 1) as f64;
        let gamma = self.costs.gamma();
        let beta = self.costs.beta();
        let decay = |c: f64| if c.is_finite() { (-c / eps).exp() } else { 0.0 };
        let pmin = self.psi.min();
        let pmax = self.psi.max();
        MassWindow {
            lower: (b.v_min - b.a * k * decay(gamma)) / pmax,
            upper: (b.v_max + b.a * k * decay(gamma)) / pmin,
            lower_beta: (b.v_min - k * decay(beta) / b.a) / pmax,
        }
    }

    /// Initial densities `exp(-h/eps)`.
    pub fn initial_density(&self, eps: f64) -> Vec<f64> {
        self.h.values().iter().map(|x| (-x / eps).exp()).collect()
    }

    /// Checks the initial total mass against the window at `eps`.
    pub fn check_initial_mass(&self, eps: f64) -> Result<(), ScenarioError> {
        let mass: f64 = self.initial_density(eps).iter().sum();
        let w = self.mass_window(eps);
        if w.contains(mass, 1e-6) {
            Ok(())
        } else {
            Err(ScenarioError::InitialMassViolation {
                eps,
                mass,
                lower: w.lower,
                upper: w.upper,
            })
        }
    }

    /// Same instance with the initial exponent replaced.
    pub fn with_h(&self, h: Vec<f64>) -> Result<Scenario, ScenarioError> {
        Scenario::new(
            self.traits.clone(),
            self.costs.clone(),
            self.psi.clone(),
            self.model.clone(),
            InitialExponent::new(h)?,
        )
    }

    /// Same instance with traits reordered: new trait `k` is old trait `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Scenario, ScenarioError> {
        let pick = |xs: &[f64]| perm.iter().map(|&a| xs[a]).collect::<Vec<f64>>();
        let family = match &self.model.family {
            GrowthFamily::Chemostat { d, c, alpha } => GrowthFamily::Chemostat {
                d: pick(d),
                c: pick(c),
                alpha: alpha.clone(),
            },
            GrowthFamily::Table { base, slope } => GrowthFamily::Table {
                base: pick(base),
                slope: perm.iter().map(|&a| slope[a].clone()).collect(),
            },
            GrowthFamily::LotkaVolterra { .. } => {
                return Err(ScenarioError::InvalidValue {
                    key: "model.family".into(),
                    reason: "relabelling a Lotka-Volterra model also relabels its resources".into(),
                })
            }
        };
        Scenario::new(
            TraitSpace::new(perm.iter().map(|&a| self.traits.labels()[a].clone()))?,
            self.costs.permuted(perm),
            self.psi.permuted(perm),
            GrowthModel::with_bounds(family, self.model.declared),
            InitialExponent::new(pick(self.h.values()))?,
        )
    }
}

/// One failed assumption, with the offending sample where there is one.
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationFailure {
    Monotonicity {
        trait_idx: usize,
        resource: usize,
        v: Vec<f64>,
        derivative: f64,
        a: f64,
    },
    Viability {
        trait_idx: usize,
        capacity: f64,
        death: f64,
    },
    Asymmetry {
        i: usize,
        j: usize,
        lhs: f64,
        rhs: f64,
    },
    NotPositiveDefinite {
        min_eigenvalue: f64,
    },
    Window {
        trait_idx: usize,
        v: Vec<f64>,
        rate: f64,
        above: bool,
    },
    Slack(ScenarioError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub slack: f64,
    pub bounds: ModelBounds,
    pub failures: Vec<ValidationFailure>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks monotonicity of `R` in the resources on sampled points of the box
/// `[v_min/2, 2 v_max]^r`, the viability window, family-specific conditions
/// and strict positivity of the triangle slack. Never aborts.
pub fn validate_scenario(s: &Scenario, sample_count: usize) -> ValidationReport {
    let b = s.bounds();
    let n = s.n();
    let r = s.r();
    let fam = &s.model.family;
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);

    let lo = (b.v_min / 2.0).max(0.0);
    let hi = 2.0 * b.v_max;
    let is_lv = matches!(fam, GrowthFamily::LotkaVolterra { .. });
    let mut points: Vec<Vec<f64>> = vec![vec![lo; r], vec![hi; r]];
    for _ in 0..sample_count {
        points.push((0..r).map(|_| rng.random_range(lo..=hi)).collect());
    }
    'samples: for v in &points {
        for i in 0..n {
            for l in 0..r {
                let step = 1e-6 * v[l].abs().max(1.0);
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[l] += step;
                vm[l] = (vm[l] - step).max(0.0);
                let der = (fam.rate(&s.psi, i, &vp) - fam.rate(&s.psi, i, &vm)) / (vp[l] - vm[l]);
                let slack = 1e-6 * b.a + 1e-7;
                let ok = if is_lv && l != i {
                    der <= slack && der >= -b.a - slack
                } else {
                    der <= -1.0 / b.a + slack && der >= -b.a - slack
                };
                if !ok {
                    failures.push(ValidationFailure::Monotonicity {
                        trait_idx: i,
                        resource: l,
                        v: v.clone(),
                        derivative: der,
                        a: b.a,
                    });
                    break 'samples;
                }
            }
        }
    }

    // Viability window: every trait grows below v_min and declines above v_max.
    let mut window_points: Vec<(Vec<f64>, bool)> = Vec::new();
    for k in 0..=sample_count.max(r) {
        let dir: Vec<f64> = if k < r {
            (0..r).map(|l| if l == k { 1.0 } else { 0.0 }).collect()
        } else {
            let raw: Vec<f64> = (0..r).map(|_| rng.random_range(0.0..1.0f64) + 1e-9).collect();
            let tot: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / tot).collect()
        };
        let below = b.v_min * (1.0 - 1e-3);
        let above = b.v_max * (1.0 + 1e-3) + 1e-9;
        window_points.push((dir.iter().map(|x| x * below).collect(), false));
        window_points.push((dir.iter().map(|x| x * above).collect(), true));
    }
    'window: for (v, is_above) in &window_points {
        for i in 0..n {
            let (own, rate) = (v.get(i).copied().unwrap_or(0.0), fam.rate(&s.psi, i, v));
            let applies = if is_lv {
                if *is_above {
                    own > b.v_max
                } else {
                    own < b.v_min
                }
            } else {
                true
            };
            if !applies {
                continue;
            }
            let bad = if *is_above { rate >= 0.0 } else { rate <= 0.0 };
            if bad {
                failures.push(ValidationFailure::Window {
                    trait_idx: i,
                    v: v.clone(),
                    rate,
                    above: *is_above,
                });
                break 'window;
            }
        }
    }

    match fam {
        GrowthFamily::Chemostat { d, c, alpha } => {
            for i in 0..n {
                let capacity = c[i] * (0..r).map(|l| alpha[l] * s.psi.get(l, i)).sum::<f64>();
                if capacity <= d[i] {
                    failures.push(ValidationFailure::Viability {
                        trait_idx: i,
                        capacity,
                        death: d[i],
                    });
                }
            }
        }
        GrowthFamily::LotkaVolterra { c, .. } => {
            let q = DMatrix::from_fn(n, n, |i, j| c[i] * s.psi.get(i, j));
            for i in 0..n {
                for j in (i + 1)..n {
                    let (lhs, rhs) = (q[(i, j)], q[(j, i)]);
                    if (lhs - rhs).abs() > 1e-12 * lhs.abs().max(rhs.abs()) {
                        failures.push(ValidationFailure::Asymmetry { i, j, lhs, rhs });
                    }
                }
            }
            let sym = (&q + q.transpose()) * 0.5;
            let min_eig = sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
            if min_eig <= 0.0 {
                failures.push(ValidationFailure::NotPositiveDefinite { min_eigenvalue: min_eig });
            }
        }
        GrowthFamily::Table { .. } => {}
    }

    let slack = match triangle_slack(&s.costs) {
        Ok(x) => x,
        Err(e) => {
            let x = match e {
                ScenarioError::SlackViolation { slack, .. } => slack,
                _ => f64::NAN,
            };
            failures.push(ValidationFailure::Slack(e));
            x
        }
    };

    ValidationReport {
        samples: points.len(),
        slack,
        bounds: b,
        failures,
    }
}

/// Interaction matrix `c_i psi_i(j)` of a Lotka-Volterra model.
pub fn interaction_matrix(s: &Scenario) -> Option<DMatrix<f64>> {
    match &s.model.family {
        GrowthFamily::LotkaVolterra { c, .. } => Some(DMatrix::from_fn(s.n(), s.n(), |i, j| c[i] * s.psi.get(i, j))),
        _ => None,
    }
}

/// Ready-made instances used in tests, benches and examples.
pub mod fixtures {
    use super::*;

    /// Two traits competing for one chemostat resource: `d = (1, 1)`,
    /// `c = (2, 2)`, `alpha = 1`, `psi = (1, 0.8)`, unit symmetric costs and
    /// `h = (0, 0.5)`.
    pub fn s1() -> Scenario {
        s1_with_h(vec![0.0, 0.5])
    }

    pub fn s1_with_h(h: Vec<f64>) -> Scenario {
        Scenario::new(
            TraitSpace::numbered(2).unwrap(),
            MutationCosts::uniform(2, 1.0).unwrap(),
            ResourceWeights::new(vec![vec![1.0, 0.8]]).unwrap(),
            GrowthModel::new(GrowthFamily::Chemostat {
                d: vec![1.0, 1.0],
                c: vec![2.0, 2.0],
                alpha: vec![1.0],
            }),
            InitialExponent::new(h).unwrap(),
        )
        .unwrap()
    }

    /// Symmetric two-species Lotka-Volterra competition with
    /// `psi = [[1, 0.5], [0.5, 1]]` and unit growth rates.
    pub fn lv2() -> Scenario {
        Scenario::new(
            TraitSpace::numbered(2).unwrap(),
            MutationCosts::uniform(2, 1.0).unwrap(),
            ResourceWeights::new(vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap(),
            GrowthModel::new(GrowthFamily::LotkaVolterra {
                r: vec![1.0, 1.0],
                c: vec![1.0, 1.0],
            }),
            InitialExponent::new(vec![0.0, 0.0]).unwrap(),
        )
        .unwrap()
    }

    /// One chemostat trait with `d = 1`, `c`, `alpha = 1`, `psi = 1`.
    pub fn single_chemostat(c: f64, h: f64, declared: DeclaredBounds) -> Scenario {
        Scenario::new(
            TraitSpace::numbered(1).unwrap(),
            MutationCosts::uniform(1, 1.0).unwrap(),
            ResourceWeights::new(vec![vec![1.0]]).unwrap(),
            GrowthModel::with_bounds(
                GrowthFamily::Chemostat {
                    d: vec![1.0],
                    c: vec![c],
                    alpha: vec![1.0],
                },
                declared,
            ),
            InitialExponent::new(vec![h]).unwrap(),
        )
        .unwrap()
    }

    /// Affine table model with every rate identically zero.
    pub fn zero_growth(n: usize, cost: f64, h: Vec<f64>) -> Scenario {
        Scenario::new(
            TraitSpace::numbered(n).unwrap(),
            MutationCosts::uniform(n, cost).unwrap(),
            ResourceWeights::new(vec![vec![1.0; n]]).unwrap(),
            GrowthModel::with_bounds(
                GrowthFamily::Table {
                    base: vec![0.0; n],
                    slope: vec![vec![0.0]; n],
                },
                DeclaredBounds {
                    a: Some(1.0),
                    m: Some(1.0),
                    v_min: Some(0.01),
                    v_max: Some(100.0),
                },
            ),
            InitialExponent::new(h).unwrap(),
        )
        .unwrap()
    }
}
