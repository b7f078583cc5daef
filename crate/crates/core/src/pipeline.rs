//! Distribution-dependent construction of `δ_{t,n}`:
//! `𝐄Z → W_t(D(δ)) → ψ_t → ψ_t⁻¹ → H_t → δ_{t,n}`.

use serde::{Deserialize, Serialize};

use crate::bounds::{delta_tn_from_value, BoundParams, ExcessRiskBound, UNIT_TOL};
use crate::convex::{cc_envelope, condition_bb_check, condition_cc_check, tau_n, ConditionCheck};
use crate::error::{Error, Result};
use crate::margin::{build_psi, invert_psi, legendre_conjugate, margin_radius_from_profile, w_t, w_t_value};
use crate::measures::{ClassProfile, DiscreteDistribution, FunctionClass};
use crate::montecarlo::{estimate_ez, EzEstimate, SupremumIndex};
use crate::tabulated::{geometric_grid, merge_grids, Extrapolation, TabulatedFunction};

/// Geometric grid description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { min: 1e-4, max: 1.0, points: 256 }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Vec<f64>> {
        geometric_grid(self.min, self.max, self.points)
    }
}

/// Conjugate arguments are tabulated on `{0} ∪ [1e-2, 1e3]` plus the points
/// each bound actually evaluates.
pub fn default_v_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(geometric_grid(1e-2, 1e3, 256).expect("static grid"));
    g
}

/// Simulation knobs the pipeline needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSettings {
    pub delta_grid: GridSpec,
    pub sigma_grid: GridSpec,
    pub reps: usize,
    pub master_seed: u64,
    /// Multiple of the standard error added to the `𝐄Z` estimate.
    pub ez_inflation: f64,
}

/// Checks for convex-parametric classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexDiagnostics {
    pub eta_n: f64,
    /// The margin map `𝐃`.
    pub d_bold: TabulatedFunction,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub tau_n: f64,
    pub condition_bb: ConditionCheck,
    pub condition_cc: ConditionCheck,
    /// `τ_n ≤ η_n/2`.
    pub tau_n_hypothesis: bool,
}

impl ConvexDiagnostics {
    pub fn all_hold(&self) -> bool {
        self.condition_bb.holds && self.condition_cc.holds && self.tau_n_hypothesis
    }
}

/// Every intermediate of the bound construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPipeline {
    /// `D(δ)` on the δ grid.
    pub margin_radius: TabulatedFunction,
    pub ez: EzEstimate,
    /// `𝐄Z` estimate inflated by `ez_inflation` standard errors.
    pub ez_upper: TabulatedFunction,
    /// `W_t(σ)` from the inflated estimate.
    pub w_t: TabulatedFunction,
    /// `W_t(D(δ))` on the δ grid.
    pub w_of_d: TabulatedFunction,
    pub psi: TabulatedFunction,
    pub psi_inverse: TabulatedFunction,
    pub h_t: TabulatedFunction,
    pub bound: ExcessRiskBound,
    /// `|f − f̄| ≤ 1` for every member.
    pub condition_b: bool,
    /// Divisor applied to the class to reach `|f − f̄| ≤ 1`.
    pub class_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convex: Option<ConvexDiagnostics>,
}

impl BoundPipeline {
    pub fn build(
        p: &DiscreteDistribution,
        class: &FunctionClass,
        params: &BoundParams,
        settings: &PipelineSettings,
    ) -> Result<Self> {
        params.validate()?;
        let profile = ClassProfile::new(p, class)?;

        let base_delta = settings.delta_grid.build()?;
        let (lo, hi) = (settings.delta_grid.min, settings.delta_grid.max);
        // D(δ) only jumps at excess values; keeping them on the grid makes the
        // tabulated ψ an upper bound between grid points too.
        let jumps: Vec<f64> = profile.excess.iter().copied().filter(|e| *e >= lo && *e <= hi).collect();
        let delta_grid = merge_grids(&[&base_delta, &jumps]);

        let index = SupremumIndex::new(&profile);
        let sigma_grid = merge_grids(&[&settings.sigma_grid.build()?, index.knots()])
            .into_iter()
            .filter(|s| *s > 0.0)
            .collect::<Vec<_>>();

        let margin_radius = margin_radius_from_profile(&profile, &delta_grid)?;
        let ez = estimate_ez(p, class, params.n as usize, &sigma_grid, settings.reps, settings.master_seed)?;
        let ez_upper = ez.inflated(settings.ez_inflation)?;
        let w_sigma = w_t(&ez_upper, params.t, params.n)?;

        let root = (2.0 * params.t / params.n as f64).sqrt();
        let w_of_d = TabulatedFunction::from_fn(delta_grid.clone(), Extrapolation::Clamp, |d| {
            let radius = margin_radius.eval(d);
            w_t_value(ez_upper.eval_step_up(radius), radius, root)
        })?;
        let psi = build_psi(&w_of_d)?;
        let psi_inverse = invert_psi(&psi)?;
        let inv_eps = 1.0 / params.eps;
        let v_grid = merge_grids(&[&default_v_grid(), &[inv_eps]]);
        let h_t = legendre_conjugate(&psi_inverse, &v_grid)?;
        let bound = delta_tn_from_value(h_t.eval(inv_eps), params);

        let condition_b = profile.sup_dev.iter().all(|d| *d <= 1.0 + UNIT_TOL);
        let convex = match class.parametric() {
            Some(_) => {
                let eta_n = params
                    .eta_n
                    .ok_or_else(|| Error::InvalidParams("parametric class needs eta_n".into()))?;
                let d_bold = cc_envelope(p, class)?;
                let tau = if bound.delta_tn.is_finite() { tau_n(&d_bold, bound.delta_tn) } else { f64::INFINITY };
                Some(ConvexDiagnostics {
                    eta_n,
                    condition_bb: condition_bb_check(p, class, eta_n)?,
                    condition_cc: condition_cc_check(p, class, &d_bold)?,
                    tau_n_hypothesis: tau <= eta_n / 2.0,
                    tau_n: tau,
                    d_bold,
                })
            }
            None => None,
        };

        Ok(Self {
            margin_radius,
            ez,
            ez_upper,
            w_t: w_sigma,
            w_of_d,
            psi,
            psi_inverse,
            h_t,
            bound,
            condition_b,
            class_scale: class.scale(),
            convex,
        })
    }

    pub fn delta_grid(&self) -> &[f64] {
        self.psi.grid()
    }
}
