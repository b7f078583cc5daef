//! Exact and empirical measure functionals on a finite state space.
//!
//! A [`DiscreteDistribution`] plays the role of the known law `P`, an
//! [`EmpiricalMeasure`] the role of `P_n`. Loss functions are tabulated per
//! state, so every population functional is a finite sum and can be computed
//! exactly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// A probability law on finitely many labelled states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    states: Vec<String>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(states: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidDistribution("at least one state required".into()));
        }
        if states.len() != weights.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} states but {} weights",
                states.len(),
                weights.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &states {
            if !seen.insert(s.as_str()) {
                return Err(Error::InvalidDistribution(format!("duplicate state `{s}`")));
            }
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("weight {w} is not a probability")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { states, weights })
    }

    /// Uniform law on states labelled `0..k`.
    pub fn uniform(k: usize) -> Result<Self> {
        let states = (0..k).map(|i| i.to_string()).collect();
        Self::new(states, vec![1.0 / k as f64; k])
    }

    /// Point mass at `index` among states labelled `0..k`.
    pub fn point_mass(k: usize, index: usize) -> Result<Self> {
        let states = (0..k).map(|i| i.to_string()).collect();
        let mut w = vec![0.0; k];
        *w.get_mut(index)
            .ok_or_else(|| Error::InvalidDistribution(format!("state {index} out of range")))? = 1.0;
        Self::new(states, w)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    fn check(&self, f: &LossFunction) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::StateSpaceMismatch { expected: self.len(), found: f.len() });
        }
        Ok(())
    }

    /// `Pf = Σ_x P(x) f(x)`.
    pub fn mean(&self, f: &LossFunction) -> Result<f64> {
        self.check(f)?;
        Ok(dot(&self.weights, f.values()))
    }

    /// `σ²(f) = Pf² − (Pf)²`, clipped at zero against rounding.
    pub fn variance(&self, f: &LossFunction) -> Result<f64> {
        self.check(f)?;
        Ok(weighted_variance(&self.weights, f.values().iter().copied()))
    }

    /// `σ(f − g)`.
    pub fn sd_of_difference(&self, f: &LossFunction, g: &LossFunction) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        let diff = f.values().iter().zip(g.values()).map(|(a, b)| a - b);
        Ok(weighted_variance(&self.weights, diff).sqrt())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Centred two-pass form; the raw `Pf² − (Pf)²` loses the shift invariance
// to cancellation for large offsets.
fn weighted_variance(weights: &[f64], values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m: f64 = weights.iter().zip(values.clone()).map(|(w, v)| w * v).sum();
    let v: f64 = weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * (v - m) * (v - m))
        .sum();
    v.max(0.0)
}

/// A loss tabulated on the states of the ambient distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossFunction(Vec<f64>);

impl LossFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidFunction(format!("non-finite value {v}")));
        }
        Ok(Self(values))
    }

    pub fn constant(c: f64, k: usize) -> Self {
        Self(vec![c; k])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `max_x |f(x) − g(x)|`.
    pub fn sup_norm_dev(&self, other: &LossFunction) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::StateSpaceMismatch { expected: self.len(), found: other.len() });
        }
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn sub(&self, other: &LossFunction) -> Result<LossFunction> {
        if self.len() != other.len() {
            return Err(Error::StateSpaceMismatch { expected: self.len(), found: other.len() });
        }
        Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn scaled(&self, factor: f64) -> LossFunction {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

/// Norm on the parameter space of a convex-parametric class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn apply(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().map(|x| x.abs()).fold(0.0, f64::max),
        }
    }

    /// `τ(a − b)`.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.apply(&d)
    }
}

/// Analytic loss map `θ ↦ γ_θ(x)`; lets the class be evaluated off the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMap {
    /// `γ_θ(x) = ‖loc(x) − θ‖₂²`, one location vector per state.
    Quadratic { locations: Vec<Vec<f64>> },
}

impl LossMap {
    pub fn eval(&self, theta: &[f64], state: usize) -> f64 {
        match self {
            LossMap::Quadratic { locations } => locations[state]
                .iter()
                .zip(theta)
                .map(|(l, t)| (l - t) * (l - t))
                .sum(),
        }
    }

    pub fn num_states(&self) -> usize {
        match self {
            LossMap::Quadratic { locations } => locations.len(),
        }
    }

    pub fn function(&self, theta: &[f64]) -> LossFunction {
        LossFunction((0..self.num_states()).map(|x| self.eval(theta, x)).collect())
    }
}

/// Parameter grid and norm of a convex-parametric class `{γ_θ : θ ∈ Θ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricSpec {
    pub params: Vec<Vec<f64>>,
    pub norm: Norm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassKind {
    Finite,
    ConvexParametric(ParametricSpec),
}

/// A finite, ordered family of loss functions.
///
/// `scale` records the divisor applied by [`FunctionClass::rescale_to_unit`]
/// so bounds on the rescaled class can be mapped back to the original units.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionClass {
    members: Vec<LossFunction>,
    kind: ClassKind,
    scale: f64,
}

impl FunctionClass {
    pub fn finite(members: Vec<LossFunction>) -> Result<Self> {
        let k = members.first().ok_or(Error::EmptyClass)?.len();
        if let Some(m) = members.iter().find(|m| m.len() != k) {
            return Err(Error::StateSpaceMismatch { expected: k, found: m.len() });
        }
        Ok(Self { members, kind: ClassKind::Finite, scale: 1.0 })
    }

    /// Materializes `γ_θ` on every grid point of `spec` through its loss map.
    pub fn convex_parametric(spec: ParametricSpec) -> Result<Self> {
        let map = spec
            .loss
            .as_ref()
            .ok_or_else(|| Error::InvalidParams("parametric class needs a loss map or explicit members".into()))?;
        let members = spec.params.iter().map(|t| map.function(t)).collect();
        Self::convex_parametric_with_members(spec, members)
    }

    /// Parametric class whose members are given explicitly, one per grid point.
    pub fn convex_parametric_with_members(spec: ParametricSpec, members: Vec<LossFunction>) -> Result<Self> {
        if members.len() != spec.params.len() {
            return Err(Error::InvalidParams(format!(
                "{} members for {} grid points",
                members.len(),
                spec.params.len()
            )));
        }
        let finite = Self::finite(members)?;
        if let Some(map) = &spec.loss {
            if map.num_states() != finite.num_states() {
                return Err(Error::StateSpaceMismatch { expected: finite.num_states(), found: map.num_states() });
            }
        }
        let class = Self { members: finite.members, kind: ClassKind::ConvexParametric(spec), scale: 1.0 };
        class.check_midpoint_convexity()?;
        Ok(class)
    }

    pub fn members(&self) -> &[LossFunction] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &LossFunction {
        &self.members[i]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn num_states(&self) -> usize {
        self.members[0].len()
    }

    pub fn kind(&self) -> &ClassKind {
        &self.kind
    }

    pub fn parametric(&self) -> Option<&ParametricSpec> {
        match &self.kind {
            ClassKind::ConvexParametric(spec) => Some(spec),
            ClassKind::Finite => None,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Sub-family made of the listed members, keeping the kind.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyClass);
        }
        let mut members = Vec::with_capacity(indices.len());
        for &i in indices {
            members.push(
                self.members
                    .get(i)
                    .ok_or_else(|| Error::InvalidParams(format!("member index {i} out of range")))?
                    .clone(),
            );
        }
        let kind = match &self.kind {
            ClassKind::Finite => ClassKind::Finite,
            ClassKind::ConvexParametric(spec) => ClassKind::ConvexParametric(ParametricSpec {
                params: indices.iter().map(|&i| spec.params[i].clone()).collect(),
                norm: spec.norm,
                loss: spec.loss.clone(),
            }),
        };
        Ok(Self { members, kind, scale: self.scale })
    }

    fn check_midpoint_convexity(&self) -> Result<()> {
        let ClassKind::ConvexParametric(spec) = &self.kind else {
            return Ok(());
        };
        let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|x| (x * 1e9).round() as i64).collect() };
        let index: HashMap<Vec<i64>, usize> =
            spec.params.iter().enumerate().map(|(i, p)| (key(p), i)).collect();
        for i in 0..spec.params.len() {
            for k in (i + 1)..spec.params.len() {
                let mid: Vec<f64> =
                    spec.params[i].iter().zip(&spec.params[k]).map(|(a, b)| 0.5 * (a + b)).collect();
                let Some(&j) = index.get(&key(&mid)) else { continue };
                for x in 0..self.num_states() {
                    let chord = 0.5 * (self.members[i].0[x] + self.members[k].0[x]);
                    if self.members[j].0[x] > chord + 1e-9 {
                        return Err(Error::NonConvexClass { member: j, state: x });
                    }
                }
            }
        }
        Ok(())
    }

    /// Exact minimizer of `Pf` over the class, lowest index on ties.
    pub fn exact_minimizer(&self, p: &DiscreteDistribution) -> Result<usize> {
        let risks = self
            .members
            .iter()
            .map(|f| p.mean(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(argmin(&risks))
    }

    /// Empirical risk minimizer, lowest index on ties.
    pub fn erm(&self, pn: &EmpiricalMeasure) -> Result<usize> {
        let risks = self
            .members
            .iter()
            .map(|f| pn.mean(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(argmin(&risks))
    }

    /// `ℰ(f) = Pf − min_{g∈F} Pg`.
    pub fn excess_risk(&self, p: &DiscreteDistribution, f: &LossFunction) -> Result<f64> {
        let best = self.exact_minimizer(p)?;
        Ok(p.mean(f)? - p.mean(&self.members[best])?)
    }

    /// Divides every member by `M = max_f max_x |f(x) − f̄(x)|` when `M > 1`,
    /// so that `|f − f̄| ≤ 1` holds across the class.
    pub fn rescale_to_unit(&self, p: &DiscreteDistribution) -> Result<FunctionClass> {
        let best = &self.members[self.exact_minimizer(p)?];
        let mut m: f64 = 0.0;
        for f in &self.members {
            m = m.max(f.sup_norm_dev(best)?);
        }
        if m <= 1.0 {
            return Ok(self.clone());
        }
        Ok(Self {
            members: self.members.iter().map(|f| f.scaled(1.0 / m)).collect(),
            kind: self.kind.clone(),
            scale: self.scale * m,
        })
    }
}

/// Index of the smallest entry, lowest index on ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// An i.i.d. draw of state indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub draws: Vec<usize>,
    pub seed: u64,
}

impl Sample {
    pub fn new(draws: Vec<usize>, seed: u64, num_states: usize) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(d) = draws.iter().find(|d| **d >= num_states) {
            return Err(Error::InvalidParams(format!("draw {d} is not a state index")));
        }
        Ok(Self { draws, seed })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// `P_n` stored as per-state counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    counts: Vec<u64>,
    n: u64,
}

impl EmpiricalMeasure {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let n = counts.iter().sum();
        Self { counts, n }
    }

    pub fn from_sample(sample: &Sample, num_states: usize) -> Self {
        let mut counts = vec![0u64; num_states];
        for &d in &sample.draws {
            counts[d] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `P_n f = (1/n) Σ_x counts(x) f(x)`.
    pub fn mean(&self, f: &LossFunction) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::EmptySample);
        }
        if f.len() != self.counts.len() {
            return Err(Error::StateSpaceMismatch { expected: self.counts.len(), found: f.len() });
        }
        let s: f64 = self.counts.iter().zip(f.values()).map(|(c, v)| *c as f64 * v).sum();
        Ok(s / self.n as f64)
    }
}

/// Exact population quantities of a class under `P`, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    /// Index of `f̄`.
    pub minimizer: usize,
    /// `Pf` per member.
    pub risk: Vec<f64>,
    /// `ℰ(f)` per member.
    pub excess: Vec<f64>,
    /// `σ(f − f̄)` per member.
    pub sigma: Vec<f64>,
    /// `sup_x |f − f̄|` per member.
    pub sup_dev: Vec<f64>,
}

impl ClassProfile {
    pub fn new(p: &DiscreteDistribution, class: &FunctionClass) -> Result<Self> {
        let risk = class.members().iter().map(|f| p.mean(f)).collect::<Result<Vec<_>>>()?;
        let minimizer = argmin(&risk);
        let best = class.member(minimizer);
        let excess = risk.iter().map(|r| r - risk[minimizer]).collect();
        let sigma = class
            .members()
            .iter()
            .map(|f| p.sd_of_difference(f, best))
            .collect::<Result<Vec<_>>>()?;
        let sup_dev = class
            .members()
            .iter()
            .map(|f| f.sup_norm_dev(best))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { minimizer, risk, excess, sigma, sup_dev })
    }

    pub fn len(&self) -> usize {
        self.risk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.risk.is_empty()
    }

    /// `(P_n − P)(f − f̄)` for every member.
    pub fn centered_increments(&self, class: &FunctionClass, pn: &EmpiricalMeasure) -> Result<Vec<f64>> {
        let emp = class.members().iter().map(|f| pn.mean(f)).collect::<Result<Vec<_>>>()?;
        let base = emp[self.minimizer];
        Ok(emp
            .iter()
            .zip(&self.risk)
            .map(|(e, r)| (e - base) - (r - self.risk[self.minimizer]))
            .collect())
    }
}
