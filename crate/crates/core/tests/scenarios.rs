//! Shipped scenario files and the reference population.

use std::path::{Path, PathBuf};

use approx::assert_abs_diff_eq;
use ponwm_core::detectability::{population_stats, synth_population, SyntheticOrlParams};
use ponwm_core::otdr::{detect_events, peak_height_from_reflectance, synthesize_trace, TraceNoise};
use ponwm_core::scenario::{PopulationSource, Scenario};
use ponwm_core::topology::{path_loss, set_voa_for_budget, PathElement};

fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn every_shipped_scenario_loads() {
    let mut n = 0;
    for entry in std::fs::read_dir(dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn reference_population_regenerates() {
    let pop = synth_population(&SyntheticOrlParams::reference(1773)).unwrap();
    let mut buf = Vec::new();
    pop.write_csv(&mut buf).unwrap();
    let shipped = std::fs::read(dir().join("reference_population.csv")).unwrap();
    assert_eq!(buf, shipped);
}

#[test]
fn reference_population_statistics() {
    let s = Scenario::load(dir().join("coverage.toml")).unwrap();
    assert!(matches!(s.population, Some(PopulationSource::Csv(_))));
    let pop = s.load_population().unwrap();
    assert_eq!(pop.len(), 87);
    let a = population_stats(&pop, 1383.0).unwrap();
    let b = population_stats(&pop, 1650.0).unwrap();
    assert_abs_diff_eq!(b.mean_db - a.mean_db, 11.5, epsilon = 0.5);
    assert!(a.min_db >= 25.0 && a.max_db <= 60.0);
    assert!(b.min_db >= 46.0 && b.max_db <= 70.0);
}

#[test]
fn calibration_recovers_generating_values() {
    let s = Scenario::load(dir().join("coverage.toml")).unwrap();
    let dr: Vec<f64> = s.instruments.iter().map(|i| i.calibrated_dr_db.unwrap()).collect();
    assert_abs_diff_eq!(dr[0], 24.15, epsilon = 0.05);
    assert_abs_diff_eq!(dr[1], 25.25, epsilon = 0.05);
    assert_eq!(s.instruments[0].otdr.dr_effective_override_db, Some(dr[0]));
}

#[test]
fn synthetic_scenario_matches_shipped_file() {
    let s = Scenario::load(dir().join("synthetic_coverage.toml")).unwrap();
    let csv = Scenario::load(dir().join("coverage.toml")).unwrap();
    assert_eq!(
        s.load_population().unwrap().records(),
        csv.load_population().unwrap().records()
    );
}

#[test]
fn trace_scenario_peak_matches_analytic_height() {
    let s = Scenario::load(dir().join("trace.toml")).unwrap();
    let inst = s.instrument("wp1383").unwrap();
    let class = s.trace.budget.unwrap();
    let (_, top) = set_voa_for_budget(&s.topology, &class, 1383.0).unwrap();
    assert_abs_diff_eq!(path_loss(&top, 1383.0).unwrap(), 32.0, epsilon = 1e-12);
    let top = top
        .with_termination(PathElement::Ont {
            orl_db: s.trace.orl_db.unwrap(),
        })
        .unwrap();
    let trace = synthesize_trace(&top, &inst.otdr, TraceNoise::None).unwrap();
    let events = detect_events(&trace, 1.0).unwrap();
    assert_eq!(events.len(), 1);
    let expected =
        -32.0 + peak_height_from_reflectance(-32.0, trace.backscatter_db().unwrap()) - trace.noise_floor_db();
    assert_abs_diff_eq!(events[0].peak_height_above_floor_db, expected, epsilon = 0.05);
}
