//! Model selection with a data-splitting penalty.
//!
//! Each model `F_k` is a list of indices into the umbrella class `F`. The
//! penalty combines the signed cross-sample term `β̂(k)` with the margin
//! terms `α(k)` and `γ(k)`, which come from the conjugates of envelopes
//! computed under the known `P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::{legendre_conjugate, margin_envelope};
use crate::measures::{argmin, DiscreteDistribution, EmpiricalMeasure, FunctionClass};
use crate::tabulated::{merge_grids, TabulatedFunction};

// Slack for the inequality checks below.
const CHECK_TOL: f64 = 1e-9;

/// Nested or overlapping models inside one umbrella class.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFamily {
    umbrella: FunctionClass,
    models: Vec<Vec<usize>>,
    t_schedule: Vec<f64>,
    eps: f64,
}

impl ModelFamily {
    pub fn new(umbrella: FunctionClass, models: Vec<Vec<usize>>, t_schedule: Vec<f64>, eps: f64) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidParams("at least one model required".into()));
        }
        for (k, m) in models.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::EmptyClass);
            }
            if let Some(i) = m.iter().find(|i| **i >= umbrella.len()) {
                return Err(Error::InvalidParams(format!("model {k} references member {i} outside the umbrella")));
            }
        }
        if t_schedule.len() != models.len() {
            return Err(Error::InvalidParams(format!(
                "{} tail levels for {} models",
                t_schedule.len(),
                models.len()
            )));
        }
        if let Some(t) = t_schedule.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::InvalidParams(format!("tail level {t} must be positive")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParams(format!("model-selection eps must lie in (0, 1), got {eps}")));
        }
        Ok(Self { umbrella, models, t_schedule, eps })
    }

    /// `t_k = t + ln K`, so that `Σ_k e^{−t_k} = e^{−t}`.
    pub fn default_t_schedule(t: f64, models: usize) -> Vec<f64> {
        vec![t + (models as f64).ln(); models]
    }

    pub fn umbrella(&self) -> &FunctionClass {
        &self.umbrella
    }

    pub fn models(&self) -> &[Vec<usize>] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn t_schedule(&self) -> &[f64] {
        &self.t_schedule
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn model_class(&self, k: usize) -> Result<FunctionClass> {
        self.umbrella.subset(&self.models[k])
    }

    /// `Σ_k e^{−t_k}`.
    pub fn tail_budget(&self) -> f64 {
        self.t_schedule.iter().map(|t| (-t).exp()).sum()
    }
}

/// Population quantities of a family under `P`, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyProfile {
    /// `Pf` for every umbrella member.
    pub risk: Vec<f64>,
    /// Umbrella index of `f_*`.
    pub f_star: usize,
    /// Umbrella index of `f̄_k` per model.
    pub f_bar: Vec<usize>,
}

impl FamilyProfile {
    pub fn new(p: &DiscreteDistribution, family: &ModelFamily) -> Result<Self> {
        let risk = family
            .umbrella
            .members()
            .iter()
            .map(|f| p.mean(f))
            .collect::<Result<Vec<_>>>()?;
        let f_star = argmin(&risk);
        let f_bar = family.models.iter().map(|m| m[best_in(m, &risk)]).collect();
        Ok(Self { risk, f_star, f_bar })
    }

    /// `ℰ_*(f) = P(f − f_*)` for an umbrella index.
    pub fn overall_excess(&self, i: usize) -> f64 {
        self.risk[i] - self.risk[self.f_star]
    }
}

/// Position in `model` of its smallest entry of `values`, lowest position on ties.
fn best_in(model: &[usize], values: &[f64]) -> usize {
    let mut best = 0;
    for (pos, &i) in model.iter().enumerate().skip(1) {
        if values[i] < values[model[best]] {
            best = pos;
        }
    }
    best
}

/// Per-model minimizers and excess quantities for one pair of samples.
/// Indices are umbrella indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub k: usize,
    pub f_hat: usize,
    pub f_hat_prime: usize,
    pub f_bar: usize,
    /// `P(f̂_k − f̄_k)`.
    pub excess: f64,
    /// `P(f̂'_k − f̄_k)`.
    pub excess_prime: f64,
    /// `P_n(f̄_k − f̂_k)`.
    pub emp_excess: f64,
    /// `P'_n(f̄_k − f̂'_k)`.
    pub emp_excess_prime: f64,
    /// `P_n f̂_k`.
    pub emp_risk: f64,
}

/// Empirical risks of every umbrella member.
pub fn empirical_risks(family: &ModelFamily, pn: &EmpiricalMeasure) -> Result<Vec<f64>> {
    family.umbrella.members().iter().map(|f| pn.mean(f)).collect()
}

/// ERM in every model on both samples, plus the exact minimizers.
pub fn fit_models(
    family: &ModelFamily,
    profile: &FamilyProfile,
    pn: &EmpiricalMeasure,
    pn_prime: &EmpiricalMeasure,
) -> Result<Vec<ModelFit>> {
    if pn.n() != pn_prime.n() {
        return Err(Error::InvalidParams(format!(
            "split samples differ in size: {} vs {}",
            pn.n(),
            pn_prime.n()
        )));
    }
    let emp = empirical_risks(family, pn)?;
    let emp_prime = empirical_risks(family, pn_prime)?;
    Ok(fit_models_from_risks(family, profile, &emp, &emp_prime))
}

pub fn fit_models_from_risks(
    family: &ModelFamily,
    profile: &FamilyProfile,
    emp: &[f64],
    emp_prime: &[f64],
) -> Vec<ModelFit> {
    family
        .models
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let f_hat = m[best_in(m, emp)];
            let f_hat_prime = m[best_in(m, emp_prime)];
            let f_bar = profile.f_bar[k];
            ModelFit {
                k,
                f_hat,
                f_hat_prime,
                f_bar,
                excess: profile.risk[f_hat] - profile.risk[f_bar],
                excess_prime: profile.risk[f_hat_prime] - profile.risk[f_bar],
                emp_excess: emp[f_bar] - emp[f_hat],
                emp_excess_prime: emp_prime[f_bar] - emp_prime[f_hat_prime],
                emp_risk: emp[f_hat],
            }
        })
        .collect()
}

/// A margin term, `+∞` and flagged when the conjugate is infinite at its argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginTerm {
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub value: f64,
    pub vacuous: bool,
}

fn margin_term(conj: &TabulatedFunction, arg: f64, t_k: f64, n: u64, eps: f64) -> MarginTerm {
    let c = conj.eval(arg);
    let value = eps * c + t_k / n as f64;
    MarginTerm { value, vacuous: !value.is_finite() }
}

/// Argument of `φ*` in `α(k)`: `√(t_k/(nε²))`.
pub fn alpha_argument(t_k: f64, n: u64, eps: f64) -> f64 {
    (t_k / (n as f64 * eps * eps)).sqrt()
}

/// Argument of `φ_k*` in `γ(k)`: `√(2t_k/(nε²))`.
pub fn gamma_argument(t_k: f64, n: u64, eps: f64) -> f64 {
    (2.0 * t_k / (n as f64 * eps * eps)).sqrt()
}

/// `α(k) = εφ*(√(t_k/(nε²))) + t_k/n`.
pub fn alpha_k(phi_conj: &TabulatedFunction, t_k: f64, n: u64, eps: f64) -> MarginTerm {
    margin_term(phi_conj, alpha_argument(t_k, n, eps), t_k, n, eps)
}

/// `γ(k) = εφ_k*(√(2t_k/(nε²))) + t_k/n`.
pub fn gamma_k(phi_k_conj: &TabulatedFunction, t_k: f64, n: u64, eps: f64) -> MarginTerm {
    margin_term(phi_k_conj, gamma_argument(t_k, n, eps), t_k, n, eps)
}

/// `β̂(k) = (P'_n − P_n)(f̂_k − f̂'_k)`.
pub fn beta_hat(pn: &EmpiricalMeasure, pn_prime: &EmpiricalMeasure, fit: &ModelFit, umbrella: &FunctionClass) -> Result<f64> {
    let diff = umbrella.member(fit.f_hat).sub(umbrella.member(fit.f_hat_prime))?;
    Ok(pn_prime.mean(&diff)? - pn.mean(&diff)?)
}

fn beta_from_risks(fit: &ModelFit, emp: &[f64], emp_prime: &[f64]) -> f64 {
    (emp_prime[fit.f_hat] - emp_prime[fit.f_hat_prime]) - (emp[fit.f_hat] - emp[fit.f_hat_prime])
}

/// Envelopes `φ`, `φ_k` and their conjugates, tabulated where the penalty
/// needs them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyEnvelopes {
    pub phi: TabulatedFunction,
    pub phi_conj: TabulatedFunction,
    pub phi_k: Vec<TabulatedFunction>,
    pub phi_k_conj: Vec<TabulatedFunction>,
}

impl FamilyEnvelopes {
    pub fn new(p: &DiscreteDistribution, family: &ModelFamily, n: u64, v_grid: &[f64]) -> Result<Self> {
        let eps = family.eps;
        let mut args: Vec<f64> = Vec::new();
        for &t in &family.t_schedule {
            args.push(alpha_argument(t, n, eps));
            args.push(gamma_argument(t, n, eps));
        }
        let grid = merge_grids(&[&[0.0], v_grid, &args]);
        let phi = margin_envelope(p, &family.umbrella)?;
        let phi_conj = legendre_conjugate(&phi, &grid)?;
        let mut phi_k = Vec::with_capacity(family.len());
        let mut phi_k_conj = Vec::with_capacity(family.len());
        for k in 0..family.len() {
            let env = margin_envelope(p, &family.model_class(k)?)?;
            phi_k_conj.push(legendre_conjugate(&env, &grid)?);
            phi_k.push(env);
        }
        Ok(Self { phi, phi_conj, phi_k, phi_k_conj })
    }
}

/// Penalty components per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    #[serde(with = "crate::serde_ext::vec_f64")]
    pub alpha: Vec<f64>,
    #[serde(with = "crate::serde_ext::vec_f64")]
    pub gamma: Vec<f64>,
    pub beta_hat: Vec<f64>,
    #[serde(with = "crate::serde_ext::vec_f64")]
    pub pi_hat: Vec<f64>,
    pub vacuous: Vec<bool>,
}

impl PenaltySchedule {
    pub fn any_negative(&self) -> bool {
        self.pi_hat.iter().any(|p| *p < 0.0)
    }
}

/// `π̂(k) = β̂(k) + α(k) + 2γ(k)`.
pub fn pi_hat(alpha: &[MarginTerm], gamma: &[MarginTerm], beta: &[f64]) -> PenaltySchedule {
    let pi = alpha
        .iter()
        .zip(gamma)
        .zip(beta)
        .map(|((a, g), b)| b + a.value + 2.0 * g.value)
        .collect();
    PenaltySchedule {
        alpha: alpha.iter().map(|a| a.value).collect(),
        gamma: gamma.iter().map(|g| g.value).collect(),
        beta_hat: beta.to_vec(),
        pi_hat: pi,
        vacuous: alpha.iter().zip(gamma).map(|(a, g)| a.vacuous || g.vacuous).collect(),
    }
}

/// The margin terms depend only on `P`, `n` and the schedule.
pub fn margin_terms(envelopes: &FamilyEnvelopes, family: &ModelFamily, n: u64) -> (Vec<MarginTerm>, Vec<MarginTerm>) {
    let alpha = family
        .t_schedule
        .iter()
        .map(|&t| alpha_k(&envelopes.phi_conj, t, n, family.eps))
        .collect();
    let gamma = family
        .t_schedule
        .iter()
        .zip(&envelopes.phi_k_conj)
        .map(|(&t, c)| gamma_k(c, t, n, family.eps))
        .collect();
    (alpha, gamma)
}

pub fn penalties_from_risks(
    fits: &[ModelFit],
    alpha: &[MarginTerm],
    gamma: &[MarginTerm],
    emp: &[f64],
    emp_prime: &[f64],
) -> PenaltySchedule {
    let beta: Vec<f64> = fits.iter().map(|f| beta_from_risks(f, emp, emp_prime)).collect();
    pi_hat(alpha, gamma, &beta)
}

/// Outcome of one selection round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub k_hat: usize,
    /// `P_n f̂_k + π̂(k)` per model.
    #[serde(with = "crate::serde_ext::vec_f64")]
    pub objective: Vec<f64>,
    /// `ℰ_*(f̂_k̂)`.
    pub oracle_lhs: f64,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub oracle_rhs: f64,
    pub oracle_holds: bool,
    pub lemma5_holds: bool,
    pub penalty_valid: bool,
}

/// `k̂ = argmin_k {P_n f̂_k + π̂(k)}`, lowest index on ties.
pub fn select(fits: &[ModelFit], penalties: &PenaltySchedule) -> (usize, Vec<f64>) {
    let objective: Vec<f64> = fits.iter().zip(&penalties.pi_hat).map(|(f, p)| f.emp_risk + p).collect();
    (argmin(&objective), objective)
}

/// Both sides of the oracle inequality
/// `ℰ_*(f̂_k̂) ≤ (1−ε)⁻² min_k {ℰ_*(f̄_k) + (1−ε)[α(k) + π̂(k)]}`.
pub fn lemma4_oracle_check(
    profile: &FamilyProfile,
    fits: &[ModelFit],
    penalties: &PenaltySchedule,
    k_hat: usize,
    eps: f64,
) -> (f64, f64, bool) {
    let lhs = profile.overall_excess(fits[k_hat].f_hat);
    let inner = fits
        .iter()
        .map(|f| profile.overall_excess(f.f_bar) + (1.0 - eps) * (penalties.alpha[f.k] + penalties.pi_hat[f.k]))
        .fold(f64::INFINITY, f64::min);
    let rhs = inner / ((1.0 - eps) * (1.0 - eps));
    (lhs, rhs, lhs <= rhs + CHECK_TOL)
}

/// Per model: `β̂(k) + 2γ(k) ≥ (1−ε){ℰ'_k + ℰ_k} + ℰ̂'_k + ℰ̂_k`.
pub fn lemma5_event_check(fits: &[ModelFit], penalties: &PenaltySchedule, eps: f64) -> Vec<bool> {
    fits.iter()
        .map(|f| {
            let lhs = penalties.beta_hat[f.k] + 2.0 * penalties.gamma[f.k];
            let rhs = (1.0 - eps) * (f.excess_prime + f.excess) + f.emp_excess_prime + f.emp_excess;
            lhs >= rhs - CHECK_TOL
        })
        .collect()
}

/// True when `π̂(k) ≥ ℰ̂_k + (1−ε)ℰ_k + α(k)` for every k.
pub fn penalty_validity_event(fits: &[ModelFit], penalties: &PenaltySchedule, eps: f64) -> bool {
    fits.iter().all(|f| {
        penalties.pi_hat[f.k] >= f.emp_excess + (1.0 - eps) * f.excess + penalties.alpha[f.k] - CHECK_TOL
    })
}

/// Everything the selection layer decides for one pair of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRound {
    pub fits: Vec<ModelFit>,
    pub penalties: PenaltySchedule,
    pub result: SelectionResult,
}

pub fn run_selection(
    family: &ModelFamily,
    profile: &FamilyProfile,
    alpha: &[MarginTerm],
    gamma: &[MarginTerm],
    pn: &EmpiricalMeasure,
    pn_prime: &EmpiricalMeasure,
) -> Result<SelectionRound> {
    let emp = empirical_risks(family, pn)?;
    let emp_prime = empirical_risks(family, pn_prime)?;
    let fits = fit_models(family, profile, pn, pn_prime)?;
    let penalties = penalties_from_risks(&fits, alpha, gamma, &emp, &emp_prime);
    let (k_hat, objective) = select(&fits, &penalties);
    let (lhs, rhs, oracle_holds) = lemma4_oracle_check(profile, &fits, &penalties, k_hat, family.eps);
    let lemma5_holds = lemma5_event_check(&fits, &penalties, family.eps).iter().all(|b| *b);
    let penalty_valid = penalty_validity_event(&fits, &penalties, family.eps);
    Ok(SelectionRound {
        fits,
        penalties,
        result: SelectionResult {
            k_hat,
            objective,
            oracle_lhs: lhs,
            oracle_rhs: rhs,
            oracle_holds,
            lemma5_holds,
            penalty_valid,
        },
    })
}
