//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riskbound_core::fixtures::fixture;
use riskbound_core::margin::legendre_conjugate;
use riskbound_core::measures::{DiscreteDistribution, FunctionClass, LossFunction};
use riskbound_core::montecarlo::estimate_ez;
use riskbound_core::selection::FamilyProfile;
use riskbound_core::suite::{run_suite, CoverageReport, Suite, SuiteOutput, Verdict};
use riskbound_core::tabulated::{Extrapolation, TabulatedFunction};

/// Binomial standard errors allowed above a bound.
const SE_MULT: f64 = 3.0;
const TRIALS: u64 = 10_000;
const EZ_REPS: usize = 10_000;
/// Floating-point slack on identities that are exact in real arithmetic.
const IDENTITY_TOL: f64 = 1e-12;
/// Relative slack for Fenchel–Young on tabulated pairs.
const FY_TOL: f64 = 1e-9;
const LEMMA1_BUDGET: Duration = Duration::from_secs(120);
const LEMMA2_BUDGET: Duration = Duration::from_secs(300);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run_fixture(name: &str, suites: &[Suite]) -> (SuiteOutput, Duration) {
    let mut doc = fixture(name).unwrap();
    let sim = doc.simulation.as_mut().unwrap();
    sim.trials = TRIALS;
    sim.reps = EZ_REPS;
    doc.suites = Some(suites.to_vec());
    let (cfg, _) = doc.resolve().unwrap();
    let start = Instant::now();
    let out = run_suite(&cfg).unwrap();
    (out, start.elapsed())
}

fn coverage(out: &SuiteOutput, suite: Suite) -> &CoverageReport {
    out.coverage.iter().find(|c| c.suite == suite).expect("suite ran")
}

fn within(c: &CoverageReport) -> bool {
    c.frequency <= c.bound + SE_MULT * c.std_error
}

fn describe(c: &CoverageReport) -> String {
    format!(
        "freq {:.5} ({} / {}), bound {:.5}, se {:.5}, vacuous {}, verdict {:?}",
        c.frequency, c.violations, c.trials, c.bound, c.std_error, c.vacuous, c.verdict
    )
}

fn lemma1(out: &SuiteOutput, elapsed: Duration) -> Outcome {
    let c = coverage(out, Suite::Lemma1);
    let cfg_class = fixture("random20").unwrap().resolve().unwrap().0;
    let profile = riskbound_core::measures::ClassProfile::new(&cfg_class.distribution, &cfg_class.class).unwrap();
    let smallest = profile.excess.iter().copied().filter(|e| *e > 0.0).fold(f64::INFINITY, f64::min);
    let delta = c.delta.unwrap();
    let flagged = !c.vacuous || c.verdict == Verdict::Vacuous;
    outcome(
        c.trials == TRIALS && delta >= smallest && within(c) && flagged && elapsed <= LEMMA1_BUDGET,
        format!("delta {delta:.5} (smallest excess {smallest:.5}), {}, {:.1?}", describe(c), elapsed),
    )
}

fn lemma2(out: &SuiteOutput, elapsed: Duration) -> Outcome {
    let c = coverage(out, Suite::Lemma2);
    let b = &out.pipeline.bound;
    outcome(
        c.trials == TRIALS && out.pipeline.ez.reps == EZ_REPS && b.delta_tn.is_finite() && within(c) && elapsed <= LEMMA2_BUDGET,
        format!("delta_tn {:.5}, H_t(1/eps) {:.5}, {}, {:.1?}", b.delta_tn, b.h_at_inv_eps, describe(c), elapsed),
    )
}

fn lemma3() -> Outcome {
    let (out, _) = run_fixture("quadratic", &[Suite::Lemma3]);
    let c = coverage(&out, Suite::Lemma3);
    let diag = out.pipeline.convex.as_ref().unwrap();
    let theta_ok = out
        .records
        .iter()
        .filter_map(|r| r.theta.as_ref())
        .all(|t| t.tau_tilde <= 2.0 * diag.tau_n * (1.0 + IDENTITY_TOL));
    outcome(
        diag.condition_bb.holds && diag.condition_cc.holds && diag.tau_n_hypothesis && c.hypotheses_hold && theta_ok && within(c),
        format!(
            "BB {}, CC {}, tau_n {:.5} <= eta_n/2 {:.5}, delta_tn {:.5}, {}",
            diag.condition_bb.holds,
            diag.condition_cc.holds,
            diag.tau_n,
            diag.eta_n / 2.0,
            out.pipeline.bound.delta_tn,
            describe(c)
        ),
    )
}

fn lemma5(out: &SuiteOutput) -> Outcome {
    let c = coverage(out, Suite::Lemma5);
    let setup = out.selection.as_ref().unwrap();
    let tk = 2.0 + 3f64.ln();
    let schedule_ok = setup.t_schedule.len() == 3 && setup.t_schedule.iter().all(|t| (t - tk).abs() <= IDENTITY_TOL);
    let budget_ok = (setup.tail_budget - (-2f64).exp()).abs() <= IDENTITY_TOL;
    outcome(
        schedule_ok && budget_ok && c.trials == TRIALS && within(c),
        format!("sum exp(-t_k) {:.5}, {}", setup.tail_budget, describe(c)),
    )
}

fn lemma4(out: &SuiteOutput) -> Outcome {
    let c = coverage(out, Suite::Lemma4);
    let setup = out.selection.as_ref().unwrap();
    let pf = c.penalty_failure_frequency.unwrap();
    let expected = (setup.tail_budget + pf).min(1.0);
    outcome(
        (c.bound - expected).abs() <= IDENTITY_TOL && within(c),
        format!("penalty failures {pf:.5}, {}", describe(c)),
    )
}

fn random_convex(rng: &mut ChaCha8Rng) -> TabulatedFunction {
    let k = rng.random_range(3..25);
    let mut slopes: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..4.0)).collect();
    slopes.sort_by(f64::total_cmp);
    let (mut grid, mut values) = (vec![0.0], vec![0.0]);
    for s in slopes {
        let du = rng.random_range(0.02..0.25);
        grid.push(grid.last().unwrap() + du);
        values.push(values.last().unwrap() + s * du);
    }
    TabulatedFunction::new(grid, values, Extrapolation::Infinite).unwrap()
}

fn conjugate_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let v_grid: Vec<f64> = (0..=160).map(|i| i as f64 * 0.03125).collect();
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..10 {
        let g = random_convex(&mut rng);
        let h = legendre_conjugate(&g, &v_grid).unwrap();
        let steps = 10_000;
        let u_max = g.last().0;
        let step = u_max / steps as f64;
        let tol = 2.0 * step * g.max_abs_slope().max(*v_grid.last().unwrap());
        for (&v, &hv) in h.grid().iter().zip(h.values()) {
            let brute = (0..=steps)
                .map(|i| {
                    let u = u_max * i as f64 / steps as f64;
                    u * v - g.eval(u)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let err = (hv - brute).abs();
            worst = worst.max(err / tol.max(f64::MIN_POSITIVE));
            ok &= err <= tol;
        }
    }
    // analytic pairs on [0, 2] with step 1e-3
    let step = 1e-3;
    let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * step).collect();
    let vs: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
    let sq = legendre_conjugate(&TabulatedFunction::from_fn(grid.clone(), Extrapolation::Infinite, |u| u * u).unwrap(), &vs).unwrap();
    let half = legendre_conjugate(&TabulatedFunction::from_fn(grid, Extrapolation::Infinite, |u| u * u / 2.0).unwrap(), &vs).unwrap();
    let lin = legendre_conjugate(&TabulatedFunction::new(vec![0.0, 1.0], vec![0.0, 1.5], Extrapolation::Linear).unwrap(), &vs).unwrap();
    let analytic = vs.iter().all(|&v| {
        (sq.eval(v) - v * v / 4.0).abs() <= step * step
            && (half.eval(v) - v * v / 2.0).abs() <= step * step
            && if v <= 1.5 { lin.eval(v) == 0.0 } else { lin.eval(v).is_infinite() }
    });
    outcome(ok && analytic, format!("worst error / tolerance {worst:.3}, analytic pairs {analytic}"))
}

fn enumeration_oracle() -> Outcome {
    let p = DiscreteDistribution::uniform(2).unwrap();
    let class = FunctionClass::finite(vec![
        LossFunction::new(vec![0.0, 0.0]).unwrap(),
        LossFunction::new(vec![0.4, 0.0]).unwrap(),
    ])
    .unwrap();
    let n = 100usize;
    let est = estimate_ez(&p, &class, n, &[0.2, 0.5], EZ_REPS, 31337).unwrap();
    let mut pmf = vec![0.5f64.powi(n as i32)];
    for k in 0..n {
        let next = pmf[k] * (n - k) as f64 / (k + 1) as f64;
        pmf.push(next);
    }
    let exact: f64 = pmf.iter().enumerate().map(|(c, w)| w * (0.4 * c as f64 / n as f64 - 0.2).abs()).sum();
    let err = (est.mean[0] - exact).abs();
    outcome(
        err <= SE_MULT * est.std_error[0] && est.mean[0] == est.mean[1],
        format!("estimate {:.6}, exact {exact:.6}, se {:.6}", est.mean[0], est.std_error[0]),
    )
}

fn fenchel_young(g: &TabulatedFunction, h: &TabulatedFunction) -> bool {
    g.grid().iter().zip(g.values()).all(|(&u, &gu)| {
        h.grid()
            .iter()
            .zip(h.values())
            .all(|(&v, &hv)| gu + hv >= u * v - FY_TOL * (1.0 + u * v))
    })
}

fn identities(r20: &SuiteOutput, nested: &SuiteOutput) -> Outcome {
    let (cfg, _) = fixture("nested").unwrap().resolve().unwrap();
    let family = cfg.family.as_ref().unwrap();
    let profile = FamilyProfile::new(&cfg.distribution, family).unwrap();
    let mut pi_exact = true;
    let mut worst_decomp = 0.0f64;
    for rec in &nested.records {
        let round = rec.selection.as_ref().unwrap();
        let pen = &round.penalties;
        for k in 0..pen.pi_hat.len() {
            pi_exact &= pen.pi_hat[k] == pen.beta_hat[k] + pen.alpha[k] + 2.0 * pen.gamma[k];
        }
        let fit = &round.fits[round.result.k_hat];
        let lhs = profile.overall_excess(fit.f_hat);
        worst_decomp = worst_decomp.max((lhs - (fit.excess + profile.overall_excess(fit.f_bar))).abs());
    }
    let dominates = [r20, nested].iter().all(|o| {
        o.pipeline
            .w_of_d
            .values()
            .iter()
            .zip(o.pipeline.psi.values())
            .all(|(w, s)| s >= w)
    });
    let env = &nested.selection.as_ref().unwrap().envelopes;
    let fy = fenchel_young(&r20.pipeline.psi_inverse, &r20.pipeline.h_t)
        && fenchel_young(&nested.pipeline.psi_inverse, &nested.pipeline.h_t)
        && fenchel_young(&env.phi, &env.phi_conj)
        && env.phi_k.iter().zip(&env.phi_k_conj).all(|(g, h)| fenchel_young(g, h));
    outcome(
        pi_exact && worst_decomp <= IDENTITY_TOL && dominates && fy,
        format!(
            "pi = beta + alpha + 2 gamma exact {pi_exact}, decomposition max error {worst_decomp:.2e}, psi >= W(D) {dominates}, Fenchel-Young {fy}"
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_riskbound");
    let mut ok = true;
    for (name, threads) in [("a", "1"), ("b", "8")] {
        let status = Command::new(bin)
            .args(["simulate", "--fixture", "nested", "--seed", "17", "--trials", "2000", "--threads", threads, "--out", name])
            .current_dir(dir.path())
            .output()
            .unwrap();
        ok &= status.status.success();
    }
    let read = |d: &str, f: &str| fs::read(dir.path().join(d).join(f)).unwrap_or_default();
    let report = ok && read("a", "report.json") == read("b", "report.json") && !read("a", "report.json").is_empty();
    let stream = ok && read("a", "trials.jsonl") == read("b", "trials.jsonl") && !read("a", "trials.jsonl").is_empty();
    outcome(report && stream, format!("report identical {report}, trial stream identical {stream} (1 vs 8 threads)"))
}

fn main() {
    let (r20, r20_time) = run_fixture("random20", &[Suite::Lemma1, Suite::Lemma2]);
    let (nested, _) = run_fixture("nested", &[Suite::Lemma4, Suite::Lemma5]);
    let results = [
        ("1 lemma1 coverage", lemma1(&r20, r20_time)),
        ("2 lemma2 coverage", lemma2(&r20, r20_time)),
        ("3 lemma3 coverage", lemma3()),
        ("4 lemma5 coverage", lemma5(&nested)),
        ("5 lemma4 oracle inequality", lemma4(&nested)),
        ("6 conjugate oracle", conjugate_oracle()),
        ("7 exact-enumeration oracle", enumeration_oracle()),
        ("8 structural identities", identities(&r20, &nested)),
        ("9 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
