//! Trial orchestration and coverage aggregation for every bound.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{peeling_tail, ratio_from_increments, BoundParams, UNIT_TOL};
use crate::convex::interpolate_theta;
use crate::error::{Error, Result};
use crate::measures::{ClassProfile, DiscreteDistribution, FunctionClass};
use crate::montecarlo::{draw_measure, SampleRole, SupremumIndex};
use crate::pipeline::{default_v_grid, BoundPipeline, PipelineSettings};
use crate::selection::{margin_terms, run_selection, FamilyEnvelopes, FamilyProfile, MarginTerm, ModelFamily, SelectionRound};

/// Which probability bound a coverage run checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    /// Uniform ratio bound on the unit-bounded part of the class.
    Lemma1,
    /// `ℰ(f̂) ≤ δ_{t,n}`.
    Lemma2,
    /// `ℰ(γ_θ̂) ≤ δ_{t,n}` for a convex-parametric class.
    Lemma3,
    /// Oracle inequality of the penalized selector.
    Lemma4,
    /// Split-sample penalty domination.
    Lemma5,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Lemma1, Suite::Lemma2, Suite::Lemma3, Suite::Lemma4, Suite::Lemma5];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Lemma2 => "lemma2",
            Suite::Lemma3 => "lemma3",
            Suite::Lemma4 => "lemma4",
            Suite::Lemma5 => "lemma5",
        }
    }

    pub fn parse(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }

    fn needs_family(self) -> bool {
        matches!(self, Suite::Lemma4 | Suite::Lemma5)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Monte Carlo knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSettings {
    pub trials: u64,
    pub pipeline: PipelineSettings,
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub fixture: Option<String>,
    pub distribution: DiscreteDistribution,
    /// Class after rescaling to `|f − f̄| ≤ 1` where requested.
    pub class: FunctionClass,
    pub family: Option<ModelFamily>,
    pub params: BoundParams,
    /// Threshold of the ratio event; chosen from the class when absent.
    pub lemma1_delta: Option<f64>,
    pub simulation: SimulationSettings,
    pub suites: Vec<Suite>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.simulation.trials == 0 {
            return Err(Error::InvalidParams("trial count must be at least 1".into()));
        }
        if self.distribution.len() != self.class.num_states() {
            return Err(Error::StateSpaceMismatch { expected: self.distribution.len(), found: self.class.num_states() });
        }
        for s in &self.suites {
            if s.needs_family() && self.family.is_none() {
                return Err(Error::InvalidParams(format!("suite {s} needs a models section")));
            }
            if *s == Suite::Lemma3 && self.class.parametric().is_none() {
                return Err(Error::InvalidParams("suite lemma3 needs a convex-parametric class".into()));
            }
        }
        Ok(())
    }

    fn wants(&self, s: Suite) -> bool {
        self.suites.contains(&s)
    }
}

/// Penalty ingredients that do not depend on the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSetup {
    pub envelopes: FamilyEnvelopes,
    pub alpha: Vec<MarginTerm>,
    pub gamma: Vec<MarginTerm>,
    pub t_schedule: Vec<f64>,
    /// `Σ_k e^{−t_k}`.
    pub tail_budget: f64,
}

impl SelectionSetup {
    pub fn build(p: &DiscreteDistribution, family: &ModelFamily, n: u64) -> Result<Self> {
        let envelopes = FamilyEnvelopes::new(p, family, n, &default_v_grid())?;
        let (alpha, gamma) = margin_terms(&envelopes, family, n);
        Ok(Self {
            envelopes,
            alpha,
            gamma,
            t_schedule: family.t_schedule().to_vec(),
            tail_budget: family.tail_budget(),
        })
    }

    pub fn vacuous(&self) -> bool {
        self.alpha.iter().chain(&self.gamma).any(|m| m.vacuous)
    }
}

/// Interpolated parameter for the convex-parametric bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaDiagnostic {
    /// `τ(θ̂ − θ̄)`.
    pub tau_hat: f64,
    pub alpha: f64,
    /// `τ(θ̃ − θ̄)`, at most `2τ_n` by construction.
    pub tau_tilde: f64,
}

/// Violation flags; `None` when the suite is off.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialEvents {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma1: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma2: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma3: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma4: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma5: Option<bool>,
    /// The selection penalty failed to dominate `ℰ̂_k + (1−ε)ℰ_k + α(k)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_invalid: Option<bool>,
}

impl TrialEvents {
    pub fn get(&self, s: Suite) -> Option<bool> {
        match s {
            Suite::Lemma1 => self.lemma1,
            Suite::Lemma2 => self.lemma2,
            Suite::Lemma3 => self.lemma3,
            Suite::Lemma4 => self.lemma4,
            Suite::Lemma5 => self.lemma5,
        }
    }
}

/// Everything observed on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    /// `Z` at the jump points listed in the report.
    pub z: Vec<f64>,
    /// Ratio statistic at each of the report's ratio thresholds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ratio: Vec<f64>,
    pub erm: usize,
    pub erm_excess: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaDiagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionRound>,
    pub events: TrialEvents,
}

/// Outcome of comparing a coverage frequency with its bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    /// The bound is clipped at 1 and says nothing.
    Vacuous,
    /// Preconditions of the bound fail on this configuration.
    NotApplicable,
}

/// Bound and observed frequency at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub delta: f64,
    pub bound: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub suite: Suite,
    /// Threshold of the headline event, when it has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub violations: u64,
    pub trials: u64,
    pub frequency: f64,
    /// Clipped to `[0, 1]`.
    pub bound: f64,
    pub vacuous: bool,
    pub std_error: f64,
    pub hypotheses_hold: bool,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_failure_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesPoint>,
}

pub fn binomial_std_error(freq: f64, trials: u64) -> f64 {
    (freq * (1.0 - freq) / trials as f64).sqrt()
}

fn frequency(count: u64, trials: u64) -> f64 {
    count as f64 / trials as f64
}

impl CoverageReport {
    fn new(suite: Suite, delta: Option<f64>, violations: u64, trials: u64, bound: f64, vacuous: bool, hypotheses_hold: bool) -> Self {
        let freq = frequency(violations, trials);
        let se = binomial_std_error(freq, trials);
        let verdict = if !hypotheses_hold {
            Verdict::NotApplicable
        } else if vacuous {
            Verdict::Vacuous
        } else if freq <= bound + 3.0 * se + 1e-12 {
            Verdict::Satisfied
        } else {
            Verdict::Violated
        };
        Self {
            suite,
            delta,
            violations,
            trials,
            frequency: freq,
            bound,
            vacuous,
            std_error: se,
            hypotheses_hold,
            verdict,
            penalty_failure_frequency: None,
            series: Vec::new(),
        }
    }

    /// Frequency within three standard errors of the bound.
    pub fn within_bound(&self) -> bool {
        self.frequency <= self.bound + 3.0 * self.std_error + 1e-12
    }
}

/// Output of a full coverage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutput {
    pub pipeline: BoundPipeline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionSetup>,
    /// σ values at which `Z` jumps; the columns of `TrialRecord::z`.
    pub z_knots: Vec<f64>,
    /// Thresholds of the ratio statistic; the first is the headline one.
    pub ratio_deltas: Vec<f64>,
    pub coverage: Vec<CoverageReport>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

/// Data-independent ingredients shared by every trial.
struct Shared<'a> {
    cfg: &'a ExperimentConfig,
    profile: ClassProfile,
    index: SupremumIndex,
    pipeline: &'a BoundPipeline,
    ratio_deltas: Vec<f64>,
    family_profile: Option<FamilyProfile>,
    selection: Option<&'a SelectionSetup>,
}

/// Smallest nonzero excess among unit-bounded members whose tail bound is
/// informative, else the smallest nonzero excess, else 1.
pub fn default_lemma1_delta(profile: &ClassProfile, params: &BoundParams) -> f64 {
    let candidates = ratio_candidates(profile);
    candidates
        .iter()
        .copied()
        .find(|d| !peeling_tail(*d, params.t, params.q).1)
        .or_else(|| candidates.first().copied())
        .unwrap_or(1.0)
}

fn ratio_candidates(profile: &ClassProfile) -> Vec<f64> {
    let mut c: Vec<f64> = (0..profile.len())
        .filter(|&i| profile.sup_dev[i] <= 1.0 + UNIT_TOL && profile.excess[i] > 0.0)
        .map(|i| profile.excess[i])
        .collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

fn run_trial(shared: &Shared<'_>, trial: u64) -> Result<TrialRecord> {
    let cfg = shared.cfg;
    let master = cfg.simulation.pipeline.master_seed;
    let n = cfg.params.n as usize;
    let (p, class) = (&cfg.distribution, &cfg.class);
    let pn = draw_measure(p, n, master, trial, SampleRole::Primary)?;
    let inc = shared.profile.centered_increments(class, &pn)?;
    let z = shared.index.z_at_knots(&inc);
    let erm = class.erm(&pn)?;
    let erm_excess = shared.profile.excess[erm];
    let bound = &shared.pipeline.bound;

    let mut events = TrialEvents::default();
    let ratio: Vec<f64> = if cfg.wants(Suite::Lemma1) {
        let h = bound.h_at_inv_eps;
        shared
            .ratio_deltas
            .iter()
            .map(|d| ratio_from_increments(&shared.profile, &inc, &cfg.params, h, *d))
            .collect()
    } else {
        Vec::new()
    };
    if let Some(r) = ratio.first() {
        events.lemma1 = Some(*r >= cfg.params.q);
    }
    if cfg.wants(Suite::Lemma2) {
        events.lemma2 = Some(erm_excess > bound.delta_tn);
    }

    let mut theta = None;
    if cfg.wants(Suite::Lemma3) {
        events.lemma3 = Some(erm_excess > bound.delta_tn);
        if let (Some(spec), Some(diag)) = (class.parametric(), shared.pipeline.convex.as_ref()) {
            if diag.tau_n > 0.0 && diag.tau_n.is_finite() {
                let theta_bar = &spec.params[shared.profile.minimizer];
                let theta_hat = &spec.params[erm];
                let (tilde, alpha) = interpolate_theta(theta_hat, theta_bar, diag.tau_n, spec.norm)?;
                theta = Some(ThetaDiagnostic {
                    tau_hat: spec.norm.distance(theta_hat, theta_bar),
                    alpha,
                    tau_tilde: spec.norm.distance(&tilde, theta_bar),
                });
            }
        }
    }

    let selection = match (cfg.family.as_ref(), shared.family_profile.as_ref(), shared.selection) {
        (Some(family), Some(fp), Some(setup)) if cfg.wants(Suite::Lemma4) || cfg.wants(Suite::Lemma5) => {
            let pn_prime = draw_measure(p, n, master, trial, SampleRole::Split)?;
            let round = run_selection(family, fp, &setup.alpha, &setup.gamma, &pn, &pn_prime)?;
            if cfg.wants(Suite::Lemma4) {
                events.lemma4 = Some(!round.result.oracle_holds);
                events.penalty_invalid = Some(!round.result.penalty_valid);
            }
            if cfg.wants(Suite::Lemma5) {
                events.lemma5 = Some(!round.result.lemma5_holds);
            }
            Some(round)
        }
        _ => None,
    };

    Ok(TrialRecord { trial, z, ratio, erm, erm_excess, theta, selection, events })
}

/// Builds the bound pipeline, runs every trial and aggregates coverage.
///
/// Trials run in parallel; each draws from its own seeded streams and the
/// aggregation folds records in trial order, so the output does not depend on
/// the number of worker threads.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<SuiteOutput> {
    cfg.validate()?;
    let pipeline = BoundPipeline::build(&cfg.distribution, &cfg.class, &cfg.params, &cfg.simulation.pipeline)?;
    run_suite_with(cfg, pipeline)
}

/// As [`run_suite`] with a prebuilt pipeline.
pub fn run_suite_with(cfg: &ExperimentConfig, pipeline: BoundPipeline) -> Result<SuiteOutput> {
    cfg.validate()?;
    let p = &cfg.distribution;
    let profile = ClassProfile::new(p, &cfg.class)?;
    let index = SupremumIndex::new(&profile);

    let mut ratio_deltas = Vec::new();
    if cfg.wants(Suite::Lemma1) {
        let head = cfg.lemma1_delta.unwrap_or_else(|| default_lemma1_delta(&profile, &cfg.params));
        ratio_deltas.push(head);
        ratio_deltas.extend(ratio_candidates(&profile).into_iter().filter(|d| *d != head));
    }

    let (family_profile, selection) = match &cfg.family {
        Some(family) if cfg.wants(Suite::Lemma4) || cfg.wants(Suite::Lemma5) => (
            Some(FamilyProfile::new(p, family)?),
            Some(SelectionSetup::build(p, family, cfg.params.n)?),
        ),
        _ => (None, None),
    };

    let shared = Shared {
        cfg,
        profile,
        index,
        pipeline: &pipeline,
        ratio_deltas,
        family_profile,
        selection: selection.as_ref(),
    };
    let records: Vec<TrialRecord> = (0..cfg.simulation.trials)
        .into_par_iter()
        .map(|t| run_trial(&shared, t))
        .collect::<Result<_>>()?;

    let coverage = aggregate(&shared, &records);
    let z_knots = shared.index.knots().to_vec();
    let ratio_deltas = shared.ratio_deltas.clone();
    drop(shared);
    Ok(SuiteOutput { pipeline, selection, z_knots, ratio_deltas, coverage, records })
}

fn count(records: &[TrialRecord], pred: impl Fn(&TrialRecord) -> bool) -> u64 {
    records.iter().filter(|r| pred(r)).count() as u64
}

fn aggregate(shared: &Shared<'_>, records: &[TrialRecord]) -> Vec<CoverageReport> {
    let cfg = shared.cfg;
    let trials = records.len() as u64;
    let params = &cfg.params;
    let bound = &shared.pipeline.bound;
    let mut out = Vec::new();
    let mut suites = cfg.suites.clone();
    suites.sort();
    suites.dedup();

    // Excess-risk events at every δ ≥ δ_{t,n} of the δ grid.
    let excess_series = || -> Vec<SeriesPoint> {
        let mut deltas = vec![bound.delta_tn];
        deltas.extend(shared.pipeline.delta_grid().iter().copied().filter(|d| *d > bound.delta_tn));
        deltas
            .into_iter()
            .filter(|d| d.is_finite())
            .map(|d| SeriesPoint {
                delta: d,
                bound: peeling_tail(d, params.t, params.q).0,
                frequency: frequency(count(records, |r| r.erm_excess > d), trials),
            })
            .collect()
    };

    for suite in suites {
        let report = match suite {
            Suite::Lemma1 => {
                let head = shared.ratio_deltas[0];
                let (tail, vac) = peeling_tail(head, params.t, params.q);
                let violations = count(records, |r| r.events.lemma1 == Some(true));
                let mut rep = CoverageReport::new(suite, Some(head), violations, trials, tail, vac, true);
                rep.series = shared
                    .ratio_deltas
                    .iter()
                    .enumerate()
                    .map(|(j, d)| SeriesPoint {
                        delta: *d,
                        bound: peeling_tail(*d, params.t, params.q).0,
                        frequency: frequency(count(records, |r| r.ratio[j] >= params.q), trials),
                    })
                    .collect();
                rep.series.sort_by(|a, b| a.delta.total_cmp(&b.delta));
                rep
            }
            Suite::Lemma2 | Suite::Lemma3 => {
                let hyp = match suite {
                    Suite::Lemma2 => shared.pipeline.condition_b,
                    _ => shared.pipeline.convex.as_ref().is_some_and(|c| c.all_hold()),
                };
                let violations = count(records, |r| r.events.get(suite) == Some(true));
                let mut rep =
                    CoverageReport::new(suite, Some(bound.delta_tn).filter(|d| d.is_finite()), violations, trials, bound.tail_prob, bound.vacuous, hyp);
                rep.series = excess_series();
                rep
            }
            Suite::Lemma4 | Suite::Lemma5 => {
                let setup = shared.selection.expect("validated family");
                let budget = setup.tail_budget;
                let violations = count(records, |r| r.events.get(suite) == Some(true));
                let (raw, pen_freq) = if suite == Suite::Lemma4 {
                    let pf = frequency(count(records, |r| r.events.penalty_invalid == Some(true)), trials);
                    (budget + pf, Some(pf))
                } else {
                    (budget, None)
                };
                let vacuous = raw > 1.0 || setup.vacuous();
                let mut rep = CoverageReport::new(suite, None, violations, trials, raw.min(1.0), vacuous, true);
                rep.penalty_failure_frequency = pen_freq;
                rep
            }
        };
        out.push(report);
    }
    out
}
