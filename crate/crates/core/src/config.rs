//! JSON experiment documents and their resolution into an [`ExperimentConfig`].
//!
//! Every top-level section is optional when the document names a fixture;
//! missing sections are then taken from the fixture. The effective document,
//! with all defaults written out, is what reports echo.

use serde::{Deserialize, Serialize};

use crate::bounds::{default_eps_bar, BoundParams};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::measures::{DiscreteDistribution, FunctionClass, LossFunction, LossMap, Norm, ParametricSpec};
use crate::pipeline::{GridSpec, PipelineSettings};
use crate::selection::ModelFamily;
use crate::suite::{ExperimentConfig, SimulationSettings, Suite};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSection {
    /// Labels; defaults to `"0"`, `"1"`, ….
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassSection {
    Finite {
        members: Vec<Vec<f64>>,
        /// Divide by `max |f − f̄|` when it exceeds 1.
        #[serde(default = "yes")]
        rescale: bool,
    },
    ConvexParametric {
        params: Vec<Vec<f64>>,
        norm: Norm,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        loss: Option<LossMap>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        members: Option<Vec<Vec<f64>>>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    /// Index lists into the class.
    pub members: Vec<Vec<usize>>,
    /// `ε` of the oracle inequality, in `(0, 1)`.
    #[serde(default = "default_selection_eps")]
    pub eps: f64,
}

fn default_selection_eps() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub t: f64,
    pub q: f64,
    pub eps: f64,
    pub eps_bar: f64,
    pub n: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_n: Option<f64>,
    /// One tail level per model; defaults to `t + ln K` each.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_schedule: Option<Vec<f64>>,
    /// Threshold of the ratio event.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma1_delta: Option<f64>,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            t: 2.0,
            q: 2.0,
            eps: 0.25,
            eps_bar: default_eps_bar(),
            n: 200,
            eta_n: None,
            t_schedule: None,
            lemma1_delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub trials: u64,
    pub reps: usize,
    pub master_seed: u64,
    pub delta_grid: GridSpec,
    pub sigma_grid: GridSpec,
    /// Standard errors added to the `𝐄Z` estimate.
    pub ez_inflation: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            trials: 10_000,
            reps: 10_000,
            master_seed: 0,
            delta_grid: GridSpec::default(),
            sigma_grid: GridSpec::default(),
            ez_inflation: 2.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<ModelsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suites: Option<Vec<Suite>>,
}

fn config_err(path: &str, e: impl std::fmt::Display) -> Error {
    Error::Config { path: path.to_string(), message: e.to_string() }
}

impl ConfigDocument {
    /// Parses JSON; errors carry the field path and line/column.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(if path.is_empty() { "." } else { &path }, e.into_inner())
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config documents always serialize")
    }

    /// Fills absent sections from the named fixture.
    pub fn with_fixture_defaults(&self) -> Result<Self> {
        let Some(name) = &self.fixture else {
            return Ok(self.clone());
        };
        let base = fixtures::fixture(name).map_err(|e| config_err("fixture", e))?;
        Ok(Self {
            fixture: Some(name.clone()),
            distribution: self.distribution.clone().or(base.distribution),
            class: self.class.clone().or(base.class),
            models: self.models.clone().or(base.models),
            params: self.params.clone().or(base.params),
            simulation: self.simulation.clone().or(base.simulation),
            suites: self.suites.clone().or(base.suites),
        })
    }

    /// Resolves into a validated experiment plus the effective document.
    pub fn resolve(&self) -> Result<(ExperimentConfig, ConfigDocument)> {
        let mut doc = self.with_fixture_defaults()?;
        let dist = doc.distribution.as_ref().ok_or_else(|| config_err("distribution", "missing section"))?;
        let states = dist
            .states
            .clone()
            .unwrap_or_else(|| (0..dist.weights.len()).map(|i| i.to_string()).collect());
        let distribution =
            DiscreteDistribution::new(states, dist.weights.clone()).map_err(|e| config_err("distribution.weights", e))?;

        let class_section = doc.class.as_ref().ok_or_else(|| config_err("class", "missing section"))?;
        let class = build_class(class_section, &distribution)?;
        if class.num_states() != distribution.len() {
            return Err(config_err(
                "class",
                Error::StateSpaceMismatch { expected: distribution.len(), found: class.num_states() },
            ));
        }

        let params_section = doc.params.get_or_insert_with(ParamsSection::default);
        let mut params = BoundParams::new(params_section.t, params_section.q, params_section.eps, params_section.n)
            .map_err(|e| config_err("params", e))?;
        params.eps_bar = params_section.eps_bar;
        params.eta_n = params_section.eta_n;
        params.validate().map_err(|e| config_err("params", e))?;

        let family = match &doc.models {
            Some(m) => {
                let schedule = params_section
                    .t_schedule
                    .get_or_insert_with(|| ModelFamily::default_t_schedule(params.t, m.members.len()))
                    .clone();
                Some(
                    ModelFamily::new(class.clone(), m.members.clone(), schedule, m.eps)
                        .map_err(|e| config_err("models", e))?,
                )
            }
            None => None,
        };
        let lemma1_delta = params_section.lemma1_delta;

        let sim = doc.simulation.get_or_insert_with(SimulationSection::default).clone();
        let suites = doc.suites.get_or_insert_with(Vec::new).clone();
        let cfg = ExperimentConfig {
            fixture: doc.fixture.clone(),
            distribution,
            class,
            family,
            params,
            lemma1_delta,
            simulation: SimulationSettings {
                trials: sim.trials,
                pipeline: PipelineSettings {
                    delta_grid: sim.delta_grid,
                    sigma_grid: sim.sigma_grid,
                    reps: sim.reps,
                    master_seed: sim.master_seed,
                    ez_inflation: sim.ez_inflation,
                },
            },
            suites,
        };
        cfg.validate().map_err(|e| config_err("suites", e))?;
        Ok((cfg, doc))
    }
}

fn to_functions(rows: &[Vec<f64>], path: &str) -> Result<Vec<LossFunction>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| LossFunction::new(r.clone()).map_err(|e| config_err(&format!("{path}[{i}]"), e)))
        .collect()
}

fn build_class(section: &ClassSection, p: &DiscreteDistribution) -> Result<FunctionClass> {
    match section {
        ClassSection::Finite { members, rescale } => {
            let class = FunctionClass::finite(to_functions(members, "class.members")?)
                .map_err(|e| config_err("class.members", e))?;
            if *rescale {
                class.rescale_to_unit(p).map_err(|e| config_err("class", e))
            } else {
                Ok(class)
            }
        }
        ClassSection::ConvexParametric { params, norm, loss, members } => {
            let spec = ParametricSpec { params: params.clone(), norm: *norm, loss: loss.clone() };
            match members {
                Some(rows) => {
                    FunctionClass::convex_parametric_with_members(spec, to_functions(rows, "class.members")?)
                }
                None => FunctionClass::convex_parametric(spec),
            }
            .map_err(|e| config_err("class", e))
        }
    }
}
