//! Sampling with counter-derived seeds, realized suprema `Z(σ)`, and
//! Monte Carlo estimation of `𝐄Z(σ)`.
//!
//! Every random stream is keyed by `(master seed, index, role)`, so any draw
//! can be reproduced in isolation and results do not depend on how work is
//! scheduled across threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::UNIT_TOL;
use crate::error::{Error, Result};
use crate::measures::{ClassProfile, DiscreteDistribution, EmpiricalMeasure, FunctionClass, Sample};
use crate::tabulated::{Extrapolation, TabulatedFunction};

/// Purpose of a random stream; distinct roles never share a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleRole {
    Primary,
    Split,
    EzEstimation,
}

impl SampleRole {
    fn tag(self) -> u64 {
        match self {
            SampleRole::Primary => 0x5052_494d,
            SampleRole::Split => 0x5350_4c54,
            SampleRole::EzEstimation => 0x455a_4553,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the stream `(master, index, role)`.
pub fn stream_seed(master: u64, index: u64, role: SampleRole) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ index) ^ role.tag())
}

pub fn stream_rng(master: u64, index: u64, role: SampleRole) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, index, role))
}

/// `n` i.i.d. draws from `p` on the stream `(master, index, role)`.
pub fn draw_sample(p: &DiscreteDistribution, n: usize, master: u64, index: u64, role: SampleRole) -> Result<Sample> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let seed = stream_seed(master, index, role);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = WeightedIndex::new(p.weights()).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let draws = (0..n).map(|_| dist.sample(&mut rng)).collect();
    Sample::new(draws, seed, p.len())
}

/// Shortcut to the counts of a fresh sample.
pub fn draw_measure(p: &DiscreteDistribution, n: usize, master: u64, index: u64, role: SampleRole) -> Result<EmpiricalMeasure> {
    Ok(EmpiricalMeasure::from_sample(&draw_sample(p, n, master, index, role)?, p.len()))
}

/// Members eligible for `F_σ` (those with `|f − f̄| ≤ 1`), sorted by
/// `σ(f − f̄)`. `Z(σ)` is a right-continuous step function with jumps only at
/// the distinct `σ` values of these members.
#[derive(Debug, Clone, PartialEq)]
pub struct SupremumIndex {
    order: Vec<usize>,
    /// Distinct σ values at which `Z` can jump.
    knots: Vec<f64>,
    /// For each knot, how many entries of `order` have σ at or below it.
    knot_end: Vec<usize>,
}

impl SupremumIndex {
    pub fn new(profile: &ClassProfile) -> Self {
        let mut order: Vec<usize> = (0..profile.len())
            .filter(|&i| profile.sup_dev[i] <= 1.0 + UNIT_TOL)
            .collect();
        order.sort_by(|&a, &b| profile.sigma[a].total_cmp(&profile.sigma[b]).then(a.cmp(&b)));
        let mut knots: Vec<f64> = Vec::new();
        let mut knot_end: Vec<usize> = Vec::new();
        for (pos, &i) in order.iter().enumerate() {
            let s = profile.sigma[i];
            match knots.last() {
                Some(&k) if s <= k => *knot_end.last_mut().expect("parallel vectors") = pos + 1,
                _ => {
                    knots.push(s);
                    knot_end.push(pos + 1);
                }
            }
        }
        Self { order, knots, knot_end }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// `Z` at each knot for the given centered increments.
    pub fn z_at_knots(&self, increments: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.knots.len());
        let mut run = 0.0f64;
        let mut pos = 0;
        for &end in &self.knot_end {
            while pos < end {
                run = run.max(increments[self.order[pos]].abs());
                pos += 1;
            }
            out.push(run);
        }
        out
    }

    /// Evaluates the step function given by `z_at_knots` on a σ grid.
    pub fn on_grid(&self, z_knots: &[f64], sigma_grid: &[f64]) -> Vec<f64> {
        sigma_grid
            .iter()
            .map(|&s| {
                let count = self.knots.partition_point(|k| *k <= s + UNIT_TOL * s.max(1.0));
                if count == 0 {
                    0.0
                } else {
                    z_knots[count - 1]
                }
            })
            .collect()
    }
}

/// `Z(σ) = sup_{f ∈ F_σ} |(P_n − P)(f − f̄)|` on each grid σ, with
/// `F_σ = {f : σ(f − f̄) ≤ σ, |f − f̄| ≤ 1}`.
pub fn realized_z(
    p: &DiscreteDistribution,
    class: &FunctionClass,
    pn: &EmpiricalMeasure,
    sigma_grid: &[f64],
) -> Result<Vec<f64>> {
    let profile = ClassProfile::new(p, class)?;
    let index = SupremumIndex::new(&profile);
    let inc = profile.centered_increments(class, pn)?;
    Ok(index.on_grid(&index.z_at_knots(&inc), sigma_grid))
}

/// Sample mean and standard error of `Z(σ)` per grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EzEstimate {
    pub sigma: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub reps: usize,
}

impl EzEstimate {
    /// `mean + k·SE` as a tabulation in σ.
    pub fn inflated(&self, k: f64) -> Result<TabulatedFunction> {
        let values = self.mean.iter().zip(&self.std_error).map(|(m, s)| m + k * s).collect();
        TabulatedFunction::new(self.sigma.clone(), values, Extrapolation::Clamp)
    }
}

/// Estimates `𝐄Z(σ)` from `reps` independent samples of size `n` drawn on the
/// [`SampleRole::EzEstimation`] streams of `master`.
pub fn estimate_ez(
    p: &DiscreteDistribution,
    class: &FunctionClass,
    n: usize,
    sigma_grid: &[f64],
    reps: usize,
    master: u64,
) -> Result<EzEstimate> {
    if reps < 100 {
        return Err(Error::InvalidParams(format!("need at least 100 repetitions, got {reps}")));
    }
    let profile = ClassProfile::new(p, class)?;
    let index = SupremumIndex::new(&profile);
    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let pn = draw_measure(p, n, master, r, SampleRole::EzEstimation)?;
            let inc = profile.centered_increments(class, &pn)?;
            Ok(index.z_at_knots(&inc))
        })
        .collect::<Result<_>>()?;

    // Moments per knot in repetition order, then spread onto the grid.
    let k = index.knots().len();
    let mut sum = vec![0.0; k];
    for z in &per_rep {
        for (s, v) in sum.iter_mut().zip(z) {
            *s += v;
        }
    }
    let r = reps as f64;
    let mean_k: Vec<f64> = sum.iter().map(|s| s / r).collect();
    let mut ss = vec![0.0; k];
    for z in &per_rep {
        for ((acc, v), m) in ss.iter_mut().zip(z).zip(&mean_k) {
            *acc += (v - m) * (v - m);
        }
    }
    let se_k: Vec<f64> = ss.iter().map(|s| (s / (r - 1.0)).sqrt() / r.sqrt()).collect();
    Ok(EzEstimate {
        sigma: sigma_grid.to_vec(),
        mean: index.on_grid(&mean_k, sigma_grid),
        std_error: index.on_grid(&se_k, sigma_grid),
        reps,
    })
}
