use proptest::prelude::*;

use markdown_cuts::gen::{generate, oracle_solve, GenSpec, Preset, DEFAULT_ORACLE_CAP};
use markdown_cuts::master::{self, CutPool};
use markdown_cuts::model::{canonicalize, FirstWeek, RawConstraint};
use markdown_cuts::subproblem::SubproblemSolver;
use markdown_cuts::CutOrigin;

fn small(articles: usize, seed: u64, preset: Preset) -> markdown_cuts::Instance {
    let spec = GenSpec { articles, countries: 2, weeks: 3, discount_levels: 3, preset, seed, ..GenSpec::default() };
    generate(&spec).unwrap()
}

fn preset() -> impl Strategy<Value = Preset> {
    prop_oneof![Just(Preset::Easy), Just(Preset::Hard), Just(Preset::InfeasibleLink)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sdr_lower_sign_follows_the_discount(
        sales in 0.01f64..100.0,
        base in 1.0f64..200.0,
        d in 0.0f64..0.95,
        t in 0.0f64..0.95,
    ) {
        let c = canonicalize(&RawConstraint::sdr_lower(0, t)).unwrap();
        let fw = FirstWeek { sales, price: base * (1.0 - d), base_price: base };
        let v = c.contribution(&[fw]);
        prop_assert!((v - base * sales * (d - t)).abs() <= 1e-9 * base * sales);
        if (d - t).abs() > 1e-9 {
            prop_assert_eq!(v > 0.0, d > t);
        }
    }

    #[test]
    fn upper_rows_are_negated_and_round_trip(t in 0.0f64..0.99, sales in 0.0f64..50.0, base in 1.0f64..100.0, d in 0.0f64..0.9) {
        let raw = RawConstraint::sdr_upper(1, t);
        let c = canonicalize(&raw).unwrap();
        let fw = FirstWeek { sales, price: base * (1.0 - d), base_price: base };
        prop_assert_eq!(c.term(1, &fw), -raw.weights.eval(&fw));
        prop_assert_eq!(c.term(0, &fw), 0.0);
        prop_assert_eq!(c.to_raw(), raw);
    }

    #[test]
    fn lagrangian_is_convex(seed in 0u64..50, p in preset(), a in prop::collection::vec(0.0f64..1.0, 4), b in prop::collection::vec(0.0f64..1.0, 4), t in 0.0f64..=1.0) {
        let inst = small(4, seed, p);
        let bar = inst.lambda_bar;
        let solver = SubproblemSolver::new(&inst).unwrap();
        let la: Vec<f64> = a.iter().map(|x| x * bar).collect();
        let lb: Vec<f64> = b.iter().map(|x| x * bar).collect();
        let lm: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let fa = solver.evaluate_lr(&la).unwrap().value;
        let fb = solver.evaluate_lr(&lb).unwrap().value;
        let fm = solver.evaluate_lr(&lm).unwrap().value;
        let chord = t * fa + (1.0 - t) * fb;
        prop_assert!(fm <= chord + 1e-9 * chord.abs().max(1.0), "{} > {}", fm, chord);
    }

    #[test]
    fn lagrangian_bounds_the_optimum(seed in 0u64..50, p in preset(), a in prop::collection::vec(0.0f64..1.0, 4)) {
        let inst = small(3, seed, p);
        let lambda: Vec<f64> = a.iter().map(|x| x * inst.lambda_bar).collect();
        let lr = SubproblemSolver::new(&inst).unwrap().evaluate_lr(&lambda).unwrap().value;
        if let Some(o) = oracle_solve(&inst, DEFAULT_ORACLE_CAP).unwrap() {
            prop_assert!(o.value <= lr + 1e-9 * lr.abs().max(1.0));
        }
    }

    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), p in preset()) {
        let spec = GenSpec { articles: 6, preset: p, seed, ..GenSpec::default() };
        prop_assert_eq!(generate(&spec).unwrap().to_json().unwrap(), generate(&spec).unwrap().to_json().unwrap());
    }

    #[test]
    fn more_cuts_never_lower_the_master_bound(
        rows in prop::collection::vec(prop::collection::vec((0.0f64..10.0, -3.0f64..3.0, -3.0f64..3.0), 3), 2..6),
    ) {
        let mut pool = CutPool::new(3, vec![0.5, -0.5], 10.0);
        let mut last = f64::NEG_INFINITY;
        for cut in rows {
            let vals: Vec<(f64, Vec<f64>)> = cut.into_iter().map(|(f, c0, c1)| (f, vec![c0, c1])).collect();
            pool.add_values(&vals, CutOrigin::ExactLr).unwrap();
            let agg = master::solve_aggregated(&pool).unwrap().mu;
            let dis = master::solve_disaggregated(&pool).unwrap().mu;
            prop_assert!(agg >= last - 1e-9 * last.abs().max(1.0));
            prop_assert!(agg <= dis + 1e-9 * dis.abs().max(1.0));
            last = agg;
        }
    }
}
