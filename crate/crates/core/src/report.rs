//! Report documents and plot-ready series.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ConfigDocument;
use crate::error::{Error, Result};
use crate::pipeline::BoundPipeline;
use crate::suite::{CoverageReport, SelectionSetup, SuiteOutput, TrialRecord, Verdict};

/// Everything a run produced apart from the per-trial stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    /// Effective configuration, defaults included.
    pub config: ConfigDocument,
    pub pipeline: BoundPipeline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionSetup>,
    pub z_knots: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ratio_deltas: Vec<f64>,
    #[serde(default)]
    pub coverage: Vec<CoverageReport>,
}

impl ReportDocument {
    pub fn from_output(config: ConfigDocument, out: &SuiteOutput) -> Self {
        Self {
            config,
            pipeline: out.pipeline.clone(),
            selection: out.selection.clone(),
            z_knots: out.z_knots.clone(),
            ratio_deltas: out.ratio_deltas.clone(),
            coverage: out.coverage.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })
    }

    pub fn any_violation(&self) -> bool {
        self.coverage.iter().any(|c| c.verdict == Verdict::Violated)
    }

    /// Every bound produced is vacuous (or there is nothing else to report).
    pub fn vacuous_only(&self) -> bool {
        if self.coverage.is_empty() {
            return self.pipeline.bound.vacuous;
        }
        self.coverage.iter().all(|c| c.verdict == Verdict::Vacuous)
    }
}

/// One record per line.
pub fn trial_stream(records: &[TrialRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("trial records always serialize"));
        s.push('\n');
    }
    s
}

/// Two-column numeric series.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl PlotSeries {
    fn new(name: impl Into<String>, xs: &[f64], ys: &[f64]) -> Self {
        Self { name: name.into(), points: xs.iter().copied().zip(ys.iter().copied()).collect() }
    }

    pub fn file_name(&self) -> String {
        format!("{}.dat", self.name)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (x, y) in &self.points {
            writeln!(s, "{x:.16e} {y:.16e}").expect("writing to a string");
        }
        s
    }
}

/// Pipeline tabulations plus bound and empirical frequency per suite.
///
/// Suites without a threshold sweep get a single row at `x = 0`.
pub fn plot_series(report: &ReportDocument) -> Vec<PlotSeries> {
    let pipe = &report.pipeline;
    let mut out = vec![
        PlotSeries::new("ez", &pipe.ez.sigma, &pipe.ez.mean),
        PlotSeries::new("psi", pipe.psi.grid(), pipe.psi.values()),
        PlotSeries::new("margin_radius", pipe.margin_radius.grid(), pipe.margin_radius.values()),
        PlotSeries::new("conjugate", pipe.h_t.grid(), pipe.h_t.values()),
    ];
    for c in &report.coverage {
        let (xs, bound, freq): (Vec<f64>, Vec<f64>, Vec<f64>) = if c.series.is_empty() {
            (vec![0.0], vec![c.bound], vec![c.frequency])
        } else {
            (
                c.series.iter().map(|p| p.delta).collect(),
                c.series.iter().map(|p| p.bound).collect(),
                c.series.iter().map(|p| p.frequency).collect(),
            )
        };
        out.push(PlotSeries::new(format!("{}_bound", c.suite), &xs, &bound));
        out.push(PlotSeries::new(format!("{}_empirical", c.suite), &xs, &freq));
    }
    out
}

/// Writes every series into `dir`, returning the paths.
pub fn write_plot_series(report: &ReportDocument, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    plot_series(report)
        .into_iter()
        .map(|s| {
            let path = dir.join(s.file_name());
            fs::write(&path, s.render())?;
            Ok(path)
        })
        .collect()
}
