use std::path::PathBuf;

use markdown_cuts::driver::bench::{bench_pool, max_violation_fixed_point, BenchMode};
use markdown_cuts::driver::{run, DriverConfig, RunStatus, Strategy};
use markdown_cuts::gen::{generate, GenSpec, Preset};
use markdown_cuts::master::{self, MasterOptions};
use markdown_cuts::{CutPool, Instance};

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_instance.json")
}

fn golden_spec() -> GenSpec {
    GenSpec { articles: 5, countries: 2, weeks: 3, discount_levels: 3, preset: Preset::Hard, seed: 2024, ..GenSpec::default() }
}

/// Set `UPDATE_GOLDEN=1` to re-record after an intended generator change.
#[test]
fn generator_output_matches_the_recorded_file() {
    let text = generate(&golden_spec()).unwrap().to_json().unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(golden_path(), &text).unwrap();
    }
    let recorded = std::fs::read_to_string(golden_path()).unwrap();
    assert_eq!(text, recorded);
}

#[test]
fn instances_survive_a_file_round_trip() {
    let inst = generate(&GenSpec { articles: 12, preset: Preset::InfeasibleLink, seed: 4, ..GenSpec::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    inst.save(&path).unwrap();
    let back = Instance::load(&path).unwrap();
    assert_eq!(back.to_json().unwrap(), inst.to_json().unwrap());
    assert_eq!(back.lambda_bar, inst.lambda_bar);
}

#[test]
fn solve_then_replay_the_frozen_pool() {
    let inst = generate(&GenSpec { articles: 30, preset: Preset::Hard, seed: 11, ..GenSpec::default() }).unwrap();
    let out = run(&inst, &DriverConfig::with_strategy(Strategy::None)).unwrap();
    let pool = CutPool::from_json(&out.pool.to_json().unwrap()).unwrap();
    assert_eq!(pool.len(), out.pool.len());

    let agg = master::solve_aggregated(&pool).unwrap().mu;
    assert!((agg - out.summary.mu).abs() <= 1e-9 * agg.abs().max(1.0));

    let opts = MasterOptions::default();
    let dis = master::solve_disaggregated(&pool).unwrap().mu;
    let j = pool.len();
    let fixed = max_violation_fixed_point(&pool, 10 * j * j, &opts).unwrap();
    assert!(fixed.converged);
    assert!((fixed.bound - dis).abs() <= 1e-6 * dis.abs());

    let report = bench_pool(&pool, &BenchMode::Partial(vec![1, 5, 30]), 3, &opts).unwrap();
    assert_eq!(report.best_source, "disaggregated");
    assert!(report.rows.last().unwrap().gap.abs() <= 1e-9);
    assert!(report.rows.windows(2).all(|w| w[1].bound >= w[0].bound - 1e-8 * w[0].bound.abs()));
}

#[test]
fn max_violation_closes_the_gap_on_a_hard_instance() {
    let inst = generate(&GenSpec { articles: 40, preset: Preset::Hard, seed: 5, ..GenSpec::default() }).unwrap();
    let none = run(&inst, &DriverConfig::with_strategy(Strategy::None)).unwrap().summary;
    let mv = run(&inst, &DriverConfig::with_strategy(Strategy::MaxViolation)).unwrap().summary;
    assert!(mv.gap_d_j.unwrap() <= none.gap_d_j.unwrap());
    assert_eq!(mv.status, RunStatus::Converged);
    assert!(mv.primal_profit <= mv.dual_bound * (1.0 + 1e-9));
}
