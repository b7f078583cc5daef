//! Piecewise-linear tabulations on explicit grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Behaviour outside the tabulated grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extrapolation {
    /// Constant at the nearest end value.
    Clamp,
    /// Continue the end segment's slope.
    Linear,
    /// `+∞` outside the grid: the function's effective domain ends there.
    Infinite,
}

/// A real function known on a strictly increasing grid, linear in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTabulation")]
pub struct TabulatedFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    extrapolation: Extrapolation,
}

#[derive(Deserialize)]
struct RawTabulation {
    grid: Vec<f64>,
    values: Vec<f64>,
    extrapolation: Extrapolation,
}

impl TryFrom<RawTabulation> for TabulatedFunction {
    type Error = Error;

    fn try_from(raw: RawTabulation) -> Result<Self> {
        TabulatedFunction::new(raw.grid, raw.values, raw.extrapolation)
    }
}

impl TabulatedFunction {
    /// A single-point grid is accepted unless the extrapolation is linear.
    pub fn new(grid: Vec<f64>, values: Vec<f64>, extrapolation: Extrapolation) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::InvalidTabulation(format!(
                "{} abscissae but {} values",
                grid.len(),
                values.len()
            )));
        }
        let min_len = if extrapolation == Extrapolation::Linear { 2 } else { 1 };
        if grid.len() < min_len {
            return Err(Error::InvalidTabulation(format!("grid needs at least {min_len} points")));
        }
        if grid.iter().any(|x| !x.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTabulation("non-finite grid point or value".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTabulation("grid must be strictly increasing".into()));
        }
        Ok(Self { grid, values, extrapolation })
    }

    /// Tabulates `f` on `grid`.
    pub fn from_fn(grid: Vec<f64>, extrapolation: Extrapolation, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values, extrapolation)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn extrapolation(&self) -> Extrapolation {
        self.extrapolation
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn first(&self) -> (f64, f64) {
        (self.grid[0], self.values[0])
    }

    pub fn last(&self) -> (f64, f64) {
        let k = self.len() - 1;
        (self.grid[k], self.values[k])
    }

    /// Slope of segment `i` (between grid points `i` and `i + 1`).
    pub fn slope(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / (self.grid[i + 1] - self.grid[i])
    }

    pub fn slopes(&self) -> Vec<f64> {
        (0..self.len().saturating_sub(1)).map(|i| self.slope(i)).collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.len();
        let (lo, _) = self.first();
        let (hi, _) = self.last();
        if x < lo || x > hi {
            return match self.extrapolation {
                Extrapolation::Infinite => f64::INFINITY,
                Extrapolation::Clamp => {
                    if x < lo {
                        self.values[0]
                    } else {
                        self.values[k - 1]
                    }
                }
                Extrapolation::Linear => {
                    if x < lo {
                        self.values[0] + self.slope(0) * (x - lo)
                    } else {
                        self.values[k - 1] + self.slope(k - 2) * (x - hi)
                    }
                }
            };
        }
        match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => self.values[i],
            Err(i) => {
                let (x0, x1) = (self.grid[i - 1], self.grid[i]);
                let w = (x - x0) / (x1 - x0);
                self.values[i - 1] + w * (self.values[i] - self.values[i - 1])
            }
        }
    }

    /// Value at the smallest grid point `≥ x`; an upper bound for `f(x)` when
    /// the tabulated function is nondecreasing. Beyond the grid the
    /// extrapolation rule applies.
    pub fn eval_step_up(&self, x: f64) -> f64 {
        match self.grid.binary_search_by(|g| g.total_cmp(&x)) {
            Ok(i) => self.values[i],
            Err(i) if i < self.len() => self.values[i],
            Err(_) => self.eval(x),
        }
    }

    pub fn is_nondecreasing(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0] - tol)
    }

    /// Slopes nondecreasing up to a tolerance relative to their magnitude.
    pub fn is_convex(&self, tol: f64) -> bool {
        self.slopes()
            .windows(2)
            .all(|s| s[1] >= s[0] - tol * s[0].abs().max(1.0))
    }

    pub fn is_concave(&self, tol: f64) -> bool {
        self.slopes()
            .windows(2)
            .all(|s| s[1] <= s[0] + tol * s[0].abs().max(1.0))
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.slopes().into_iter().map(f64::abs).fold(0.0, f64::max)
    }
}

/// `count` geometrically spaced points spanning `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && count >= 2) {
        return Err(Error::InvalidParams(format!("bad geometric grid [{lo}, {hi}] x {count}")));
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    let mut g: Vec<f64> = (0..count).map(|i| lo * (ratio * i as f64).exp()).collect();
    g[0] = lo;
    g[count - 1] = hi;
    Ok(g)
}

/// Sorted union of grids, merging points closer than a relative `1e-12`.
pub fn merge_grids(parts: &[&[f64]]) -> Vec<f64> {
    let mut all: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).filter(|x| x.is_finite()).collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for x in all {
        match out.last() {
            Some(&y) if (x - y).abs() <= 1e-12 * y.abs().max(1e-300) => {}
            _ => out.push(x),
        }
    }
    out
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Indices of the lower convex hull of points sorted by strictly increasing x.
pub fn lower_hull(points: &[(f64, f64)]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if cross(points[a], points[b], points[i]) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Indices of the upper concave hull of points sorted by strictly increasing x.
pub fn upper_hull(points: &[(f64, f64)]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if cross(points[a], points[b], points[i]) >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Evaluates the piecewise-linear curve through `points[hull]` at every `x`
/// inside its span.
pub fn eval_hull(points: &[(f64, f64)], hull: &[usize], xs: &[f64]) -> Vec<f64> {
    let mut seg = 0;
    xs.iter()
        .map(|&x| {
            while seg + 2 < hull.len() && points[hull[seg + 1]].0 < x {
                seg += 1;
            }
            if hull.len() == 1 {
                return points[hull[0]].1;
            }
            let (x0, y0) = points[hull[seg]];
            let (x1, y1) = points[hull[seg + 1]];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        })
        .collect()
}
