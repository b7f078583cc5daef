use riskbound_core::config::ConfigDocument;
use riskbound_core::fixtures::fixture;
use riskbound_core::report::{trial_stream, ReportDocument};
use riskbound_core::suite::{run_suite, SuiteOutput};

fn run_with_threads(doc: &ConfigDocument, threads: usize) -> (SuiteOutput, ConfigDocument) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let (cfg, echo) = doc.resolve().unwrap();
    (pool.install(|| run_suite(&cfg)).unwrap(), echo)
}

#[test]
fn output_is_independent_of_worker_count() {
    for name in ["random20", "nested"] {
        let mut doc = fixture(name).unwrap();
        let sim = doc.simulation.as_mut().unwrap();
        sim.trials = 500;
        sim.reps = 500;
        let (a, echo) = run_with_threads(&doc, 1);
        let (b, _) = run_with_threads(&doc, 5);
        assert_eq!(trial_stream(&a.records), trial_stream(&b.records), "{name}");
        let ra = ReportDocument::from_output(echo.clone(), &a).to_json();
        let rb = ReportDocument::from_output(echo.clone(), &b).to_json();
        assert_eq!(ra, rb, "{name}");

        // the echoed configuration reproduces the report
        let (c, _) = run_with_threads(&ConfigDocument::from_json(&echo.to_json()).unwrap(), 3);
        assert_eq!(ReportDocument::from_output(echo, &c).to_json(), ra);
    }
}

#[test]
fn reports_round_trip() {
    let mut doc = fixture("quadratic").unwrap();
    let sim = doc.simulation.as_mut().unwrap();
    sim.trials = 50;
    sim.reps = 200;
    let (out, echo) = run_with_threads(&doc, 2);
    let report = ReportDocument::from_output(echo, &out);
    let parsed = ReportDocument::from_json(&report.to_json()).unwrap();
    assert_eq!(parsed, report);
    for line in trial_stream(&out.records).lines() {
        let _: serde_json::Value = serde_json::from_str(line).unwrap();
    }
}
