//! Bounds for convex-parametric classes whose losses need not be uniformly
//! bounded: the renormalized-loss condition, the margin map `𝐃`, `τ_n`, and
//! the interpolation `θ̃` between the empirical and population minimizers.

use serde::{Deserialize, Serialize};

use crate::bounds::UNIT_TOL;
use crate::error::{Error, Result};
use crate::measures::{ClassProfile, DiscreteDistribution, FunctionClass, Norm, ParametricSpec};
use crate::tabulated::{eval_hull, upper_hull, Extrapolation, TabulatedFunction};

const CHECK_TOL: f64 = 1e-9;

/// Outcome of a pointwise condition scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub holds: bool,
    /// Grid index of the member with the largest violation (or smallest slack).
    pub worst_member: Option<usize>,
    /// State attaining it, for per-state conditions.
    pub worst_state: Option<usize>,
    /// `lhs − rhs` at the worst point; positive means violated.
    pub worst_excess: f64,
}

fn spec_of(class: &FunctionClass) -> Result<&ParametricSpec> {
    class
        .parametric()
        .ok_or_else(|| Error::InvalidParams("condition needs a convex-parametric class".into()))
}

/// Scans `η_n|γ_θ(x) − γ_θ̄(x)| ≤ τ(θ − θ̄) ∨ η_n` over every grid θ and state x.
pub fn condition_bb_check(p: &DiscreteDistribution, class: &FunctionClass, eta_n: f64) -> Result<ConditionCheck> {
    let spec = spec_of(class)?;
    let bar = class.exact_minimizer(p)?;
    let theta_bar = &spec.params[bar];
    let f_bar = class.member(bar).values();
    let mut worst = ConditionCheck { holds: true, worst_member: None, worst_state: None, worst_excess: f64::NEG_INFINITY };
    for (i, (theta, f)) in spec.params.iter().zip(class.members()).enumerate() {
        let rhs = spec.norm.distance(theta, theta_bar).max(eta_n);
        for (x, (a, b)) in f.values().iter().zip(f_bar).enumerate() {
            let gap = eta_n * (a - b).abs() - rhs;
            if gap > worst.worst_excess {
                worst = ConditionCheck {
                    holds: true,
                    worst_member: Some(i),
                    worst_state: Some(x),
                    worst_excess: gap,
                };
            }
        }
    }
    worst.holds = worst.worst_excess <= CHECK_TOL;
    Ok(worst)
}

/// Members of `Θ₁ = {θ : |γ_θ − γ_θ̄| ≤ 1}` with their `(ℰ(γ_θ), τ(θ − θ̄))`.
fn theta_one_scatter(p: &DiscreteDistribution, class: &FunctionClass) -> Result<Vec<(usize, f64, f64)>> {
    let spec = spec_of(class)?;
    let profile = ClassProfile::new(p, class)?;
    let theta_bar = &spec.params[profile.minimizer];
    Ok((0..class.len())
        .filter(|&i| profile.sup_dev[i] <= 1.0 + UNIT_TOL)
        .map(|i| (i, profile.excess[i], spec.norm.distance(&spec.params[i], theta_bar)))
        .collect())
}

/// Smallest concave nondecreasing `𝐃` with `𝐃(ℰ(γ_θ)) ≥ τ(θ − θ̄)` on `Θ₁`.
pub fn cc_envelope(p: &DiscreteDistribution, class: &FunctionClass) -> Result<TabulatedFunction> {
    let mut scatter: Vec<(f64, f64)> = theta_one_scatter(p, class)?
        .into_iter()
        .map(|(_, e, tau)| (e, tau))
        .collect();
    scatter.push((0.0, 0.0));
    scatter.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(scatter.len());
    let mut run = 0.0f64;
    for (e, tau) in scatter {
        run = run.max(tau);
        match pts.last_mut() {
            Some(last) if e <= last.0 => last.1 = run,
            _ => pts.push((e, run)),
        }
    }
    let hull = upper_hull(&pts);
    let grid: Vec<f64> = hull.iter().map(|&i| pts[i].0).collect();
    let values = eval_hull(&pts, &hull, &grid);
    TabulatedFunction::new(grid, values, Extrapolation::Clamp)
}

/// Scans `𝐃(ℰ(γ_θ)) ≥ τ(θ − θ̄)` over `Θ₁`.
pub fn condition_cc_check(
    p: &DiscreteDistribution,
    class: &FunctionClass,
    d_bold: &TabulatedFunction,
) -> Result<ConditionCheck> {
    let mut worst = ConditionCheck { holds: true, worst_member: None, worst_state: None, worst_excess: f64::NEG_INFINITY };
    for (i, e, tau) in theta_one_scatter(p, class)? {
        let gap = tau - d_bold.eval(e);
        if gap > worst.worst_excess {
            worst = ConditionCheck { holds: true, worst_member: Some(i), worst_state: None, worst_excess: gap };
        }
    }
    worst.holds = worst.worst_excess <= CHECK_TOL;
    Ok(worst)
}

/// `τ_n = 𝐃(δ_{t,n})`.
pub fn tau_n(d_bold: &TabulatedFunction, delta_tn: f64) -> f64 {
    d_bold.eval(delta_tn)
}

/// `θ̃ = αθ̂ + (1 − α)θ̄` with `α = 2τ_n / (2τ_n + τ(θ̂ − θ̄))`.
pub fn interpolate_theta(theta_hat: &[f64], theta_bar: &[f64], tau_n: f64, norm: Norm) -> Result<(Vec<f64>, f64)> {
    if !(tau_n > 0.0) {
        return Err(Error::InvalidParams(format!("tau_n must be positive, got {tau_n}")));
    }
    if theta_hat.len() != theta_bar.len() {
        return Err(Error::InvalidParams("parameter dimensions differ".into()));
    }
    let dist = norm.distance(theta_hat, theta_bar);
    let alpha = 2.0 * tau_n / (2.0 * tau_n + dist);
    let theta = theta_hat
        .iter()
        .zip(theta_bar)
        .map(|(h, b)| alpha * h + (1.0 - alpha) * b)
        .collect();
    Ok((theta, alpha))
}
