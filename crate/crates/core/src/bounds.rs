//! Tail thresholds for the empirical-process supremum and the excess-risk
//! bound `δ_{t,n}` obtained by peeling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{ClassProfile, DiscreteDistribution, EmpiricalMeasure, FunctionClass};
use crate::tabulated::TabulatedFunction;

// Members with `|f − f̄|` this close to 1 still count as bounded by 1.
pub(crate) const UNIT_TOL: f64 = 1e-12;

/// Scalar knobs shared by the peeling bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Exponential tail level.
    pub t: f64,
    /// Peeling ratio, `> 1`.
    pub q: f64,
    /// `ε ∈ (0, 1/q)`.
    pub eps: f64,
    /// `ε̄` of the Bousquet threshold.
    #[serde(default = "default_eps_bar")]
    pub eps_bar: f64,
    /// Sample size.
    pub n: u64,
    /// Scale of the renormalized-loss condition; only used for parametric classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_n: Option<f64>,
}

pub fn default_eps_bar() -> f64 {
    3.0 / 5.0
}

impl BoundParams {
    pub fn new(t: f64, q: f64, eps: f64, n: u64) -> Result<Self> {
        let p = Self { t, q, eps, eps_bar: default_eps_bar(), n, eta_n: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_eta(mut self, eta_n: f64) -> Result<Self> {
        self.eta_n = Some(eta_n);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidParams(format!("t must be positive, got {}", self.t)));
        }
        if !(self.q > 1.0 && self.q.is_finite()) {
            return Err(Error::InvalidParams(format!("q must exceed 1, got {}", self.q)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParams(format!("eps must be positive, got {}", self.eps)));
        }
        if self.q * self.eps >= 1.0 {
            return Err(Error::PeelingConstraint(self.q * self.eps));
        }
        if !(self.eps_bar > 0.0) {
            return Err(Error::InvalidParams(format!("eps_bar must be positive, got {}", self.eps_bar)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParams("n must be at least 1".into()));
        }
        if let Some(eta) = self.eta_n {
            if !(eta > 0.0) {
                return Err(Error::InvalidParams(format!("eta_n must be positive, got {eta}")));
            }
        }
        Ok(())
    }
}

/// `δ_{t,n}` with its peeling tail probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessRiskBound {
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub delta_tn: f64,
    pub tail_prob: f64,
    pub vacuous: bool,
    pub t: f64,
    pub q: f64,
    pub eps: f64,
    pub n: u64,
    /// `H_t(1/ε)`.
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub h_at_inv_eps: f64,
}

/// `(1 + ε̄)·𝐄Z(σ) + σ√(2t/n) + (1/3 + 1/ε̄)·t/n`; `Z(σ)` exceeds it with
/// probability at most `e^{−t}`.
pub fn bousquet_threshold(ez_sigma: f64, sigma: f64, params: &BoundParams) -> f64 {
    let n = params.n as f64;
    (1.0 + params.eps_bar) * ez_sigma
        + sigma * (2.0 * params.t / n).sqrt()
        + (1.0 / 3.0 + 1.0 / params.eps_bar) * params.t / n
}

/// Bernstein deviation level `σ√(2t/n) + t/n`.
pub fn bernstein_threshold(sigma: f64, t: f64, n: u64) -> f64 {
    let n = n as f64;
    sigma * (2.0 * t / n).sqrt() + t / n
}

/// `log_q(q/δ)·e^{−t}` clipped to `[0, 1]`, with a flag for clipping from above.
pub fn peeling_tail(delta: f64, t: f64, q: f64) -> (f64, bool) {
    if !(delta > 0.0) || !delta.is_finite() {
        return (1.0, true);
    }
    let raw = (q / delta).ln() / q.ln() * (-t).exp();
    (raw.clamp(0.0, 1.0), raw > 1.0)
}

/// `δ_{t,n} = qε/(1−qε)·H_t(1/ε) + 2t/((1−qε)n)`.
pub fn delta_tn(h_t: &TabulatedFunction, params: &BoundParams) -> Result<ExcessRiskBound> {
    let qe = params.q * params.eps;
    if qe >= 1.0 {
        return Err(Error::PeelingConstraint(qe));
    }
    let h = h_t.eval(1.0 / params.eps);
    Ok(delta_tn_from_value(h, params))
}

pub fn delta_tn_from_value(h_at_inv_eps: f64, params: &BoundParams) -> ExcessRiskBound {
    let qe = params.q * params.eps;
    let delta = qe / (1.0 - qe) * h_at_inv_eps + 2.0 * params.t / ((1.0 - qe) * params.n as f64);
    let (tail_prob, clipped) = peeling_tail(delta, params.t, params.q);
    ExcessRiskBound {
        delta_tn: delta,
        tail_prob,
        vacuous: clipped || !delta.is_finite(),
        t: params.t,
        q: params.q,
        eps: params.eps,
        n: params.n,
        h_at_inv_eps,
    }
}

/// `sup_{f ∈ F₁^δ} |(P_n − P)(f − f̄)| / (ε(H + ℰ(f)) + 2t/(qn))`, where
/// `F₁^δ = {f : |f − f̄| ≤ 1, ℰ(f) > δ}`; zero when that set is empty.
pub fn ratio_statistic(
    p: &DiscreteDistribution,
    class: &FunctionClass,
    pn: &EmpiricalMeasure,
    params: &BoundParams,
    h_val: f64,
    delta: f64,
) -> Result<f64> {
    let profile = ClassProfile::new(p, class)?;
    let inc = profile.centered_increments(class, pn)?;
    Ok(ratio_from_increments(&profile, &inc, params, h_val, delta))
}

pub fn ratio_from_increments(
    profile: &ClassProfile,
    increments: &[f64],
    params: &BoundParams,
    h_val: f64,
    delta: f64,
) -> f64 {
    let slack = 2.0 * params.t / (params.q * params.n as f64);
    let mut sup = 0.0f64;
    for i in 0..profile.len() {
        if profile.excess[i] > delta && profile.sup_dev[i] <= 1.0 + UNIT_TOL {
            let denom = params.eps * (h_val + profile.excess[i]) + slack;
            sup = sup.max(increments[i].abs() / denom);
        }
    }
    sup
}
