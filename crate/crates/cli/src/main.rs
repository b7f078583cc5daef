use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use riskbound_core::config::ConfigDocument;
use riskbound_core::fixtures::{fixture, FIXTURES};
use riskbound_core::measures::EmpiricalMeasure;
use riskbound_core::montecarlo::{draw_measure, SampleRole};
use riskbound_core::report::{trial_stream, write_plot_series, ReportDocument};
use riskbound_core::selection::{run_selection, FamilyProfile};
use riskbound_core::suite::{run_suite, run_suite_with, ExperimentConfig, SelectionSetup, Suite, SuiteOutput};
use riskbound_core::pipeline::BoundPipeline;
use riskbound_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_VACUOUS: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

#[derive(Parser)]
#[command(name = "riskbound", version, about = "Excess-risk bounds and their Monte Carlo coverage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Experiment document (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in fixture, used when no config is given.
    #[arg(long, conflicts_with = "config")]
    fixture: Option<String>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the bound pipeline without coverage trials.
    Bound {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run coverage trials for the enabled suites.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        trials: Option<u64>,
        /// Suite to run; repeat to select several.
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
    /// Penalized model selection on one pair of samples.
    Select {
        #[command(flatten)]
        source: Source,
        /// JSON file with `primary` and `split` state counts.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Trial index whose seeded samples are used when no file is given.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Two-column series files from a report.
    Plotdata {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print a built-in fixture document.
    Fixture {
        /// One of two-point, random20, quadratic, nested, singleton.
        name: String,
    },
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Config { .. } | Error::UnknownFixture(_)) => EXIT_CONFIG,
            _ if error.is::<clap::Error>() => EXIT_CONFIG,
            _ => 1,
        };
        Self { code, error }
    }
}

fn config_failure(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_CONFIG, error: error.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Bound { source, out } => {
            let (cfg, doc) = load(&source, None, &[])?;
            let pipeline = BoundPipeline::build(&cfg.distribution, &cfg.class, &cfg.params, &cfg.simulation.pipeline)
                .map_err(anyhow::Error::from)?;
            let no_trials = ExperimentConfig { suites: Vec::new(), ..cfg.clone() };
            let mut output = run_suite_with(&no_trials, pipeline).map_err(anyhow::Error::from)?;
            output.selection = match &cfg.family {
                Some(family) => Some(SelectionSetup::build(&cfg.distribution, family, cfg.params.n).map_err(anyhow::Error::from)?),
                None => None,
            };
            let report = ReportDocument::from_output(doc, &output);
            write_report(&out, &report, None)?;
            let b = &report.pipeline.bound;
            println!("delta_tn = {} (tail probability {}, H_t(1/eps) = {})", b.delta_tn, b.tail_prob, b.h_at_inv_eps);
            if let Some(c) = &report.pipeline.convex {
                println!("tau_n = {} (eta_n = {}, conditions hold: {})", c.tau_n, c.eta_n, c.all_hold());
            }
            if b.vacuous {
                eprintln!("warning: the excess-risk bound is vacuous for this configuration");
                return Ok(EXIT_VACUOUS);
            }
            Ok(0)
        }
        Command::Simulate { source, out, trials, suites } => {
            let (cfg, doc) = load(&source, trials, &suites)?;
            let output: SuiteOutput = run_suite(&cfg).map_err(anyhow::Error::from)?;
            let report = ReportDocument::from_output(doc, &output);
            write_report(&out, &report, Some(&output))?;
            for c in &report.coverage {
                println!(
                    "{:<7} violations {:>6}/{:<6} freq {:.5} bound {:.5} se {:.5} {:?}",
                    c.suite.name(),
                    c.violations,
                    c.trials,
                    c.frequency,
                    c.bound,
                    c.std_error,
                    c.verdict
                );
            }
            if report.any_violation() {
                return Ok(EXIT_VIOLATION);
            }
            if report.vacuous_only() {
                eprintln!("warning: every enabled bound is vacuous");
                return Ok(EXIT_VACUOUS);
            }
            Ok(0)
        }
        Command::Select { source, samples, trial } => {
            let (cfg, _) = load(&source, None, &[])?;
            let family = cfg
                .family
                .as_ref()
                .ok_or_else(|| config_failure(anyhow::anyhow!("select needs a models section")))?;
            let (pn, pn_prime) = match samples {
                Some(path) => read_samples(&path)?,
                None => {
                    let master = cfg.simulation.pipeline.master_seed;
                    let n = cfg.params.n as usize;
                    (
                        draw_measure(&cfg.distribution, n, master, trial, SampleRole::Primary).map_err(anyhow::Error::from)?,
                        draw_measure(&cfg.distribution, n, master, trial, SampleRole::Split).map_err(anyhow::Error::from)?,
                    )
                }
            };
            let setup = SelectionSetup::build(&cfg.distribution, family, pn.n()).map_err(config_failure)?;
            let profile = FamilyProfile::new(&cfg.distribution, family).map_err(anyhow::Error::from)?;
            let round = run_selection(family, &profile, &setup.alpha, &setup.gamma, &pn, &pn_prime).map_err(config_failure)?;
            println!("{}", serde_json::to_string_pretty(&round).context("serializing selection")?);
            Ok(0)
        }
        Command::Plotdata { report, out } => {
            let text = fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            let doc = ReportDocument::from_json(&text).map_err(config_failure)?;
            for path in write_plot_series(&doc, &out).map_err(anyhow::Error::from)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
        Command::Fixture { name } => {
            let doc = fixture(&name).map_err(|e| config_failure(anyhow::anyhow!("{e}; known: {}", FIXTURES.join(", "))))?;
            println!("{}", doc.to_json());
            Ok(0)
        }
    }
}

fn load(source: &Source, trials: Option<u64>, suites: &[String]) -> Result<(ExperimentConfig, ConfigDocument), Failure> {
    if let Some(t) = source.threads {
        // a pool can only be installed once per process; later calls are no-ops
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let doc = match (&source.config, &source.fixture) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(config_failure)?;
            ConfigDocument::from_json(&text).map_err(config_failure)?
        }
        (None, Some(name)) => ConfigDocument { fixture: Some(name.clone()), ..ConfigDocument::default() },
        (None, None) => return Err(config_failure(anyhow::anyhow!("pass --config or --fixture"))),
    };
    let mut doc = doc.with_fixture_defaults().map_err(config_failure)?;
    if source.seed.is_some() || trials.is_some() {
        let sim = doc.simulation.get_or_insert_with(Default::default);
        if let Some(seed) = source.seed {
            sim.master_seed = seed;
        }
        if let Some(t) = trials {
            sim.trials = t;
        }
    }
    if !suites.is_empty() {
        let parsed = suites
            .iter()
            .map(|s| Suite::parse(s).ok_or_else(|| config_failure(anyhow::anyhow!("unknown suite {s}"))))
            .collect::<Result<Vec<_>, _>>()?;
        doc.suites = Some(parsed);
    }
    doc.resolve().map_err(config_failure)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleFile {
    primary: Vec<u64>,
    split: Vec<u64>,
}

fn read_samples(path: &Path) -> Result<(EmpiricalMeasure, EmpiricalMeasure), Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(config_failure)?;
    let file: SampleFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(config_failure)?;
    Ok((EmpiricalMeasure::from_counts(file.primary), EmpiricalMeasure::from_counts(file.split)))
}

fn write_report(out: &Path, report: &ReportDocument, output: Option<&SuiteOutput>) -> Result<(), Failure> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("report.json"), report.to_json()).context("writing report")?;
    if let Some(o) = output {
        fs::write(out.join("trials.jsonl"), trial_stream(&o.records)).context("writing trial stream")?;
    }
    Ok(())
}
