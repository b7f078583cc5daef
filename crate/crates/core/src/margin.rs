//! Margin radius, margin envelopes, the concave majorant `ψ_t`, and numeric
//! Legendre–Fenchel conjugates.
//!
//! Every object is a [`TabulatedFunction`]. Conjugates are taken of the
//! piecewise-linear interpolant, so they are exact for the tabulated function
//! and differ from the underlying smooth function only by grid resolution.

use crate::error::{Error, Result};
use crate::measures::{ClassProfile, DiscreteDistribution, FunctionClass};
use crate::tabulated::{eval_hull, lower_hull, upper_hull, Extrapolation, TabulatedFunction};

/// Additive ramp that makes `ψ_t` strictly increasing.
pub const PSI_RAMP: f64 = 1e-9;

/// Tolerance for the convexity check in [`legendre_conjugate`].
pub const CONVEXITY_TOL: f64 = 1e-8;

// Excess values within this distance of δ count as `ℰ(f) ≤ δ`.
const FILTER_TOL: f64 = 1e-12;

/// `D(δ) = max{σ(f − f̄) : ℰ(f) ≤ δ}` on each grid point.
pub fn margin_radius(
    p: &DiscreteDistribution,
    class: &FunctionClass,
    delta_grid: &[f64],
) -> Result<TabulatedFunction> {
    if class.is_empty() {
        return Err(Error::EmptyClass);
    }
    if delta_grid.first().is_some_and(|d| *d <= 0.0) {
        return Err(Error::InvalidParams("delta grid must be positive".into()));
    }
    let profile = ClassProfile::new(p, class)?;
    margin_radius_from_profile(&profile, delta_grid)
}

pub fn margin_radius_from_profile(profile: &ClassProfile, delta_grid: &[f64]) -> Result<TabulatedFunction> {
    let values = delta_grid
        .iter()
        .map(|&d| {
            profile
                .excess
                .iter()
                .zip(&profile.sigma)
                .filter(|(e, _)| **e <= d + FILTER_TOL)
                .map(|(_, s)| *s)
                .fold(0.0, f64::max)
        })
        .collect();
    TabulatedFunction::new(delta_grid.to_vec(), values, Extrapolation::Clamp)
}

/// Greatest convex minorant through the origin of the scatter
/// `{(σ(f − f_ref), P(f − f_ref)) : f ∈ F}`, where `f_ref` is the exact risk
/// minimizer of `class`.
///
/// Passing the umbrella class gives `φ` (reference `f_*`); passing a model
/// gives `φ_k` (reference `f̄_k`). The result is `+∞` past the largest `σ`
/// attained in the class, where no member constrains it.
pub fn margin_envelope(p: &DiscreteDistribution, class: &FunctionClass) -> Result<TabulatedFunction> {
    if class.is_empty() {
        return Err(Error::EmptyClass);
    }
    let profile = ClassProfile::new(p, class)?;
    envelope_from_scatter(profile.sigma.iter().copied().zip(profile.excess.iter().copied()))
}

/// Greatest convex nondecreasing minorant through `(0, 0)` of nonnegative
/// scatter points `(s, e)`. Points sharing an abscissa keep their minimum.
pub fn envelope_from_scatter(scatter: impl Iterator<Item = (f64, f64)>) -> Result<TabulatedFunction> {
    let mut pts: Vec<(f64, f64)> = scatter.filter(|(s, _)| *s > 0.0).collect();
    if pts.iter().any(|(_, e)| *e < 0.0) {
        return Err(Error::NegativeValues("envelope scatter excess".into()));
    }
    pts.push((0.0, 0.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut binned: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (s, e) in pts {
        match binned.last_mut() {
            Some(last) if s <= last.0 + FILTER_TOL * last.0.max(1.0) => last.1 = last.1.min(e),
            _ => binned.push((s, e)),
        }
    }
    let hull = lower_hull(&binned);
    let grid = hull.iter().map(|&i| binned[i].0).collect();
    let values = hull.iter().map(|&i| binned[i].1).collect();
    TabulatedFunction::new(grid, values, Extrapolation::Infinite)
}

/// `H(v) = sup_{u ≥ 0} [uv − G(u)]` for a convex nondecreasing `G` with
/// `G(0) = 0`, tabulated on the points of `v_grid`.
///
/// With linear extrapolation, `G` keeps its last slope forever and `H` is
/// `+∞` beyond that slope: those points are dropped and the result is tagged
/// [`Extrapolation::Infinite`]. With infinite extrapolation, `G`'s domain ends
/// at its last grid point, `H` is finite everywhere and continues linearly.
pub fn legendre_conjugate(g: &TabulatedFunction, v_grid: &[f64]) -> Result<TabulatedFunction> {
    let (u0, g0) = g.first();
    if u0.abs() > 1e-12 || g0.abs() > 1e-12 {
        return Err(Error::InvalidTabulation("conjugate needs G(0) = 0 at the first grid point".into()));
    }
    if v_grid.iter().any(|v| *v < 0.0) || v_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("v grid must be nonnegative and strictly increasing".into()));
    }
    if !g.is_nondecreasing(CONVEXITY_TOL) || !g.is_convex(CONVEXITY_TOL) {
        return Err(Error::ConjugateRequiresConvexity);
    }
    let slopes = g.slopes();
    let (cutoff, tag) = match g.extrapolation() {
        Extrapolation::Linear => (*slopes.last().expect("linear tabulation has a segment"), Extrapolation::Infinite),
        Extrapolation::Infinite => (f64::INFINITY, Extrapolation::Linear),
        Extrapolation::Clamp => return Err(Error::ConjugateRequiresConvexity),
    };

    // The maximizing vertex moves right as v grows: advance past every
    // segment whose slope does not exceed v.
    let (us, gs) = (g.grid(), g.values());
    let mut grid = Vec::with_capacity(v_grid.len());
    let mut values = Vec::with_capacity(v_grid.len());
    let mut i = 0;
    for &v in v_grid {
        if v > cutoff {
            break;
        }
        while i < slopes.len() && slopes[i] <= v {
            i += 1;
        }
        grid.push(v);
        values.push(us[i] * v - gs[i]);
    }
    if grid.len() < 2 {
        if grid.is_empty() {
            grid.push(0.0);
            values.push(0.0);
        }
        return TabulatedFunction::new(grid, values, Extrapolation::Infinite);
    }
    TabulatedFunction::new(grid, values, tag)
}

/// Least concave majorant of `w` anchored at the origin, plus a ramp
/// `PSI_RAMP·δ`.
///
/// Anchoring the hull at `(0, 0)` makes `ψ(δ)/δ` nonincreasing; the running
/// maximum taken first keeps the hull nondecreasing. The result dominates `w`
/// on its grid.
pub fn build_psi(w: &TabulatedFunction) -> Result<TabulatedFunction> {
    if w.grid()[0] <= 0.0 {
        return Err(Error::InvalidParams("psi needs a positive delta grid".into()));
    }
    if w.values().iter().any(|v| *v < 0.0) {
        return Err(Error::NegativeValues("W_t values".into()));
    }
    let mut pts = Vec::with_capacity(w.len() + 1);
    pts.push((0.0, 0.0));
    let mut run = 0.0f64;
    for (&d, &v) in w.grid().iter().zip(w.values()) {
        run = run.max(v);
        pts.push((d, run));
    }
    let hull = upper_hull(&pts);
    let majorant = eval_hull(&pts, &hull, w.grid());
    let values = w
        .grid()
        .iter()
        .zip(majorant)
        .map(|(d, m)| m + PSI_RAMP * d)
        .collect();
    TabulatedFunction::new(w.grid().to_vec(), values, Extrapolation::Linear)
}

/// `ψ_t⁻¹` on `[0, ψ(δ_max)]`, through the origin.
///
/// The domain is capped at the largest tabulated δ (excess risks never exceed
/// 1 under `|f − f̄| ≤ 1`), so the inverse is `+∞` beyond it.
pub fn invert_psi(psi: &TabulatedFunction) -> Result<TabulatedFunction> {
    if psi.values().windows(2).any(|w| w[1] <= w[0]) || psi.values()[0] <= 0.0 {
        return Err(Error::InvalidTabulation("psi must be positive and strictly increasing".into()));
    }
    // Exactly convex in theory; points along straight stretches of ψ only
    // add rounding noise to the slopes, so keep the lower-hull vertices.
    let mut pts = Vec::with_capacity(psi.len() + 1);
    pts.push((0.0, 0.0));
    pts.extend(psi.values().iter().copied().zip(psi.grid().iter().copied()));
    let hull = lower_hull(&pts);
    let grid = hull.iter().map(|&i| pts[i].0).collect();
    let values = hull.iter().map(|&i| pts[i].1).collect();
    TabulatedFunction::new(grid, values, Extrapolation::Infinite)
}

/// `W_t(σ) = (8/5)·𝐄Z(σ) + σ·√(2t/n)` on the grid of `ez`.
pub fn w_t(ez: &TabulatedFunction, t: f64, n: u64) -> Result<TabulatedFunction> {
    if t < 0.0 || n == 0 {
        return Err(Error::InvalidParams(format!("w_t needs t >= 0 and n >= 1, got t={t}, n={n}")));
    }
    if ez.values().iter().any(|v| *v < 0.0) {
        return Err(Error::NegativeValues("EZ".into()));
    }
    let root = (2.0 * t / n as f64).sqrt();
    let values = ez
        .grid()
        .iter()
        .zip(ez.values())
        .map(|(s, e)| w_t_value(*e, *s, root))
        .collect();
    TabulatedFunction::new(ez.grid().to_vec(), values, ez.extrapolation())
}

pub(crate) fn w_t_value(ez: f64, sigma: f64, root: f64) -> f64 {
    1.6 * ez + sigma * root
}
