//! Built-in experiment documents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ClassSection, ConfigDocument, DistributionSection, ModelsSection, ParamsSection, SimulationSection};
use crate::error::{Error, Result};
use crate::measures::{LossMap, Norm};
use crate::selection::ModelFamily;
use crate::suite::Suite;

pub const FIXTURES: [&str; 5] = ["two-point", "random20", "quadratic", "nested", "singleton"];

/// The complete document of a named fixture.
pub fn fixture(name: &str) -> Result<ConfigDocument> {
    let doc = match name {
        "two-point" => two_point(),
        "random20" => random20(),
        "quadratic" => quadratic(),
        "nested" => nested(),
        "singleton" => singleton(),
        other => return Err(Error::UnknownFixture(other.to_string())),
    };
    Ok(ConfigDocument { fixture: Some(name.to_string()), ..doc })
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn seeded_weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| round4(rng.random_range(0.5..1.5))).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // put the rounding residue on the last state so the sum is 1 to the ulp
    let head: f64 = w[..k - 1].iter().sum();
    w[k - 1] = 1.0 - head;
    w
}

fn seeded_members(rng: &mut ChaCha8Rng, count: usize, k: usize, hi: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| (0..k).map(|_| round4(rng.random_range(0.0..hi))).collect())
        .collect()
}

fn uniform(k: usize) -> DistributionSection {
    DistributionSection { states: None, weights: vec![1.0 / k as f64; k] }
}

fn base(distribution: DistributionSection, class: ClassSection, suites: Vec<Suite>) -> ConfigDocument {
    ConfigDocument {
        fixture: None,
        distribution: Some(distribution),
        class: Some(class),
        models: None,
        params: Some(ParamsSection::default()),
        simulation: Some(SimulationSection::default()),
        suites: Some(suites),
    }
}

/// Two states, `{(0, 0), (0.4, 0)}`.
fn two_point() -> ConfigDocument {
    base(
        uniform(2),
        ClassSection::Finite { members: vec![vec![0.0, 0.0], vec![0.4, 0.0]], rescale: true },
        vec![Suite::Lemma1, Suite::Lemma2],
    )
}

/// Twenty losses drawn from `U[0, 1.5]` on eight states, rescaled to unit deviation.
fn random20() -> ConfigDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let weights = seeded_weights(&mut rng, 8);
    let members = seeded_members(&mut rng, 20, 8, 1.5);
    base(
        DistributionSection { states: None, weights },
        ClassSection::Finite { members, rescale: true },
        vec![Suite::Lemma1, Suite::Lemma2],
    )
}

/// `γ_θ(x) = (x − θ)²` with `x` uniform on `{−1/2, 0, 1/2}` and θ on a grid of `[−1, 1]`.
fn quadratic() -> ConfigDocument {
    let params = (0..=100).map(|i| vec![-1.0 + i as f64 / 50.0]).collect();
    let mut doc = base(
        DistributionSection { states: Some(vec!["-0.5".into(), "0".into(), "0.5".into()]), weights: vec![1.0 / 3.0; 3] },
        ClassSection::ConvexParametric {
            params,
            norm: Norm::L2,
            loss: Some(LossMap::Quadratic { locations: vec![vec![-0.5], vec![0.0], vec![0.5]] }),
            members: None,
        },
        vec![Suite::Lemma3],
    );
    doc.params = Some(ParamsSection { n: 2000, eta_n: Some(0.5), ..ParamsSection::default() });
    doc
}

/// Sixteen losses on six states, ordered by decreasing risk, with nested
/// prefix models of sizes 4, 9, 16.
fn nested() -> ConfigDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let weights = seeded_weights(&mut rng, 6);
    let mut members = seeded_members(&mut rng, 16, 6, 1.0);
    // decreasing risk: each larger model holds a strictly better minimizer
    let risk = |f: &Vec<f64>| f.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>();
    members.sort_by(|a, b| risk(b).total_cmp(&risk(a)));
    let mut doc = base(
        DistributionSection { states: None, weights },
        ClassSection::Finite { members, rescale: true },
        vec![Suite::Lemma4, Suite::Lemma5],
    );
    let models: Vec<Vec<usize>> = [4usize, 9, 16].iter().map(|&m| (0..m).collect()).collect();
    let params = ParamsSection::default();
    doc.params = Some(ParamsSection {
        t_schedule: Some(ModelFamily::default_t_schedule(params.t, models.len())),
        ..params
    });
    doc.models = Some(ModelsSection { members: models, eps: 0.5 });
    doc
}

/// One loss; every bound is trivially met.
fn singleton() -> ConfigDocument {
    let mut doc = base(
        uniform(3),
        ClassSection::Finite { members: vec![vec![0.2, 0.5, 0.1]], rescale: true },
        vec![Suite::Lemma1, Suite::Lemma2, Suite::Lemma4, Suite::Lemma5],
    );
    doc.models = Some(ModelsSection { members: vec![vec![0]], eps: 0.5 });
    doc.simulation = Some(SimulationSection { trials: 1, reps: 100, ..SimulationSection::default() });
    doc
}
