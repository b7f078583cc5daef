use proptest::prelude::*;

use riskbound_core::config::{ConfigDocument, ParamsSection, SimulationSection};
use riskbound_core::convex::interpolate_theta;
use riskbound_core::margin::{build_psi, invert_psi, legendre_conjugate, margin_envelope, margin_radius, PSI_RAMP};
use riskbound_core::measures::{argmin, DiscreteDistribution, EmpiricalMeasure, FunctionClass, LossFunction, Norm};
use riskbound_core::montecarlo::{draw_measure, realized_z, SampleRole};
use riskbound_core::pipeline::GridSpec;
use riskbound_core::selection::{
    fit_models, lemma4_oracle_check, pi_hat, FamilyProfile, MarginTerm, ModelFamily,
};
use riskbound_core::tabulated::{geometric_grid, merge_grids, Extrapolation, TabulatedFunction};

fn weights(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, k).prop_map(|w| {
        let total: f64 = w.iter().sum();
        let mut out: Vec<f64> = w.iter().map(|x| x / total).collect();
        let head: f64 = out[..out.len() - 1].iter().sum();
        *out.last_mut().unwrap() = 1.0 - head;
        out
    })
}

fn dist_and_class(k: usize, m: usize) -> impl Strategy<Value = (DiscreteDistribution, FunctionClass)> {
    (weights(k), prop::collection::vec(prop::collection::vec(0.0f64..1.0, k), 1..=m)).prop_map(|(w, rows)| {
        let p = DiscreteDistribution::new((0..w.len()).map(|i| i.to_string()).collect(), w).unwrap();
        let class = FunctionClass::finite(rows.into_iter().map(|r| LossFunction::new(r).unwrap()).collect()).unwrap();
        (p, class)
    })
}

/// Convex nondecreasing through the origin, from sorted slopes.
fn convex_tab() -> impl Strategy<Value = TabulatedFunction> {
    prop::collection::vec((0.0f64..4.0, 0.01f64..0.5), 2..20).prop_map(|mut segs| {
        segs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut grid = vec![0.0];
        let mut values = vec![0.0];
        for (s, du) in segs {
            grid.push(grid.last().unwrap() + du);
            values.push(values.last().unwrap() + s * du);
        }
        TabulatedFunction::new(grid, values, Extrapolation::Infinite).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn variance_is_shift_invariant(w in weights(5), f in prop::collection::vec(-3.0f64..3.0, 5), c in -10.0f64..10.0) {
        let p = DiscreteDistribution::new((0..5).map(|i| i.to_string()).collect(), w).unwrap();
        let f = LossFunction::new(f).unwrap();
        let shifted = LossFunction::new(f.values().iter().map(|x| x + c).collect()).unwrap();
        let (a, b) = (p.variance(&f).unwrap(), p.variance(&shifted).unwrap());
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + c.abs()).powi(2));
    }

    #[test]
    fn erm_is_the_first_empirical_minimizer(
        (p, class) in dist_and_class(4, 12),
        counts in prop::collection::vec(0u64..30, 4),
    ) {
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let pn = EmpiricalMeasure::from_counts(counts);
        let risks: Vec<f64> = class.members().iter().map(|f| pn.mean(f).unwrap()).collect();
        let mut best = 0;
        for (i, r) in risks.iter().enumerate() {
            if *r < risks[best] { best = i; }
        }
        prop_assert_eq!(class.erm(&pn).unwrap(), best);
        prop_assert_eq!(argmin(&risks), best);
        let bar = class.exact_minimizer(&p).unwrap();
        prop_assert!(class.excess_risk(&p, class.member(bar)).unwrap() == 0.0);
    }

    #[test]
    fn rescaled_class_has_unit_deviation((p, class) in dist_and_class(3, 8), scale in 1.0f64..20.0) {
        let big = FunctionClass::finite(class.members().iter().map(|f| f.scaled(scale)).collect()).unwrap();
        let unit = big.rescale_to_unit(&p).unwrap();
        let bar = unit.member(unit.exact_minimizer(&p).unwrap()).clone();
        for f in unit.members() {
            prop_assert!(f.sup_norm_dev(&bar).unwrap() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn interpolated_theta_stays_within_twice_tau_n(
        hat in prop::collection::vec(-1e6f64..1e6, 1..4),
        tau_n in 1e-6f64..10.0,
    ) {
        let bar: Vec<f64> = hat.iter().map(|x| x * 0.3 - 1.0).collect();
        for norm in [Norm::L1, Norm::L2, Norm::Linf] {
            let (tilde, alpha) = interpolate_theta(&hat, &bar, tau_n, norm).unwrap();
            prop_assert!((0.0..=1.0).contains(&alpha));
            prop_assert!(norm.distance(&tilde, &bar) <= 2.0 * tau_n * (1.0 + 1e-9));
        }
    }

    #[test]
    fn fenchel_young_on_tabulated_pairs(g in convex_tab()) {
        let v_grid = merge_grids(&[&[0.0], &geometric_grid(1e-2, 1e2, 64).unwrap()]);
        let h = legendre_conjugate(&g, &v_grid).unwrap();
        prop_assert!(h.is_convex(1e-8));
        prop_assert!(h.is_nondecreasing(1e-12));
        for (&u, &gu) in g.grid().iter().zip(g.values()) {
            for (&v, &hv) in h.grid().iter().zip(h.values()) {
                prop_assert!(gu + hv >= u * v - 1e-9 * (1.0 + u * v));
            }
        }
    }

    #[test]
    fn psi_is_an_admissible_majorant(w in prop::collection::vec(0.0f64..1.0, 2..40)) {
        let grid = geometric_grid(1e-3, 1.0, w.len()).unwrap();
        let w = TabulatedFunction::new(grid, w, Extrapolation::Clamp).unwrap();
        let psi = build_psi(&w).unwrap();
        for (a, b) in w.values().iter().zip(psi.values()) {
            prop_assert!(b >= a);
        }
        prop_assert!(psi.is_concave(1e-9));
        let ratio: Vec<f64> = psi.grid().iter().zip(psi.values()).map(|(d, s)| s / d).collect();
        for r in ratio.windows(2) {
            prop_assert!(r[1] <= r[0] * (1.0 + 1e-9));
        }
        for s in psi.values().windows(2) {
            prop_assert!(s[1] > s[0]);
        }
        prop_assert!(psi.values()[0] >= PSI_RAMP * psi.grid()[0]);
        let inv = invert_psi(&psi).unwrap();
        prop_assert!(inv.is_convex(1e-8));
    }

    #[test]
    fn realized_z_is_monotone_in_sigma((p, class) in dist_and_class(4, 10), seed in any::<u64>()) {
        let pn = draw_measure(&p, 50, seed, 0, SampleRole::Primary).unwrap();
        let sigma = geometric_grid(1e-3, 1.0, 40).unwrap();
        let z = realized_z(&p, &class, &pn, &sigma).unwrap();
        for w in z.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        prop_assert!(z.iter().all(|x| x.is_finite() && *x >= 0.0));
    }

    #[test]
    fn margin_geometry_is_monotone((p, class) in dist_and_class(4, 10)) {
        let grid = geometric_grid(1e-4, 1.0, 64).unwrap();
        let d = margin_radius(&p, &class, &grid).unwrap();
        prop_assert!(d.is_nondecreasing(0.0));
        let env = margin_envelope(&p, &class).unwrap();
        prop_assert!(env.is_convex(1e-9));
        prop_assert_eq!(env.first(), (0.0, 0.0));
    }

    #[test]
    fn penalty_identity_and_excess_decomposition(
        (p, class) in dist_and_class(4, 9),
        seed in any::<u64>(),
        a in prop::collection::vec(0.0f64..0.5, 3),
        g in prop::collection::vec(0.0f64..0.5, 3),
    ) {
        let m = class.len();
        let models = vec![(0..m.min(2)).collect(), (0..m.min(5)).collect(), (0..m).collect::<Vec<_>>()];
        let family = ModelFamily::new(class, models, vec![2.0; 3], 0.5).unwrap();
        let profile = FamilyProfile::new(&p, &family).unwrap();
        let pn = draw_measure(&p, 40, seed, 1, SampleRole::Primary).unwrap();
        let pn2 = draw_measure(&p, 40, seed, 1, SampleRole::Split).unwrap();
        let fits = fit_models(&family, &profile, &pn, &pn2).unwrap();
        let alpha: Vec<MarginTerm> = a.iter().map(|v| MarginTerm { value: *v, vacuous: false }).collect();
        let gamma: Vec<MarginTerm> = g.iter().map(|v| MarginTerm { value: *v, vacuous: false }).collect();
        let beta: Vec<f64> = fits.iter().map(|f| f.emp_excess_prime - f.emp_excess).collect();
        let pen = pi_hat(&alpha, &gamma, &beta);
        for k in 0..3 {
            prop_assert_eq!(pen.pi_hat[k], beta[k] + a[k] + 2.0 * g[k]);
            let f = &fits[k];
            let lhs = profile.overall_excess(f.f_hat);
            prop_assert!((lhs - (f.excess + profile.overall_excess(f.f_bar))).abs() <= 1e-12);
        }
        let (lhs, rhs, _) = lemma4_oracle_check(&profile, &fits, &pen, 0, 0.5);
        prop_assert!(lhs.is_finite() && rhs.is_finite());
    }

    #[test]
    fn config_documents_round_trip(
        t in 0.1f64..5.0,
        n in 1u64..100_000,
        trials in 1u64..1_000_000,
        seed in any::<u64>(),
        eps_bar in 0.01f64..2.0,
        lo in 1e-8f64..1e-2,
    ) {
        let mut doc = riskbound_core::fixtures::fixture("nested").unwrap();
        doc.params = Some(ParamsSection { t, n, eps_bar, t_schedule: Some(vec![t, t * 1.5, t * 2.0]), ..ParamsSection::default() });
        doc.simulation = Some(SimulationSection {
            trials,
            master_seed: seed,
            delta_grid: GridSpec { min: lo, max: 1.0, points: 17 },
            ..SimulationSection::default()
        });
        let parsed = ConfigDocument::from_json(&doc.to_json()).unwrap();
        prop_assert_eq!(&parsed, &doc);
        let (_, echo) = parsed.resolve().unwrap();
        prop_assert_eq!(ConfigDocument::from_json(&echo.to_json()).unwrap(), echo);
    }
}
