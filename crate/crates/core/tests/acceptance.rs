//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ponwm_core::detectability::{
    coverage, coverage_sweep, detectable_units, detection_setup, population_stats, synth_population, terminated,
    OntPopulation, OntRecord, Provenance, SyntheticOrlParams,
};
use ponwm_core::interference::{max_headend_power, InterferenceSpec};
use ponwm_core::optics::{bend_loss, BendSpec};
use ponwm_core::otdr::{
    backscatter_level, detect_events, min_detectable_reflectance, peak_height_from_reflectance,
    reflectance_from_peak_height, synthesize_trace, OtdrSpec, TraceNoise,
};
use ponwm_core::raman::{analytic_onoff_gain, integrate, propagate, RamanPair, RamanScenario};
use ponwm_core::scenario::Scenario;
use ponwm_core::topology::{budget_of, splitter_loss, BudgetClassName, PonTopology, Splitter};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const PUMPS: [f64; 5] = [-3.0, 0.0, 3.0, 6.0, 9.0];
const SIGNALS: [f64; 5] = [-6.0, -3.75, -1.5, 0.75, 3.0];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn headend_power() -> Outcome {
    let p = max_headend_power(&InterferenceSpec::default()).map_err(|e| e.to_string())?;
    ensure((p - 9.0).abs() <= 1e-12, || format!("max headend power {p} dBm"))?;
    Ok(format!("max headend power {p:.12} dBm"))
}

fn splitter_model() -> Outcome {
    let s = Splitter::plc_1x32();
    let a = splitter_loss(&s, 1383.0).map_err(|e| e.to_string())?;
    let b = splitter_loss(&s, 1650.0).map_err(|e| e.to_string())?;
    ensure(a == 15.76 && b == 16.13, || format!("losses {a} / {b} dB"))?;
    ensure(((b - a) - 0.37).abs() < 1e-12, || format!("difference {} dB", b - a))?;
    Ok(format!("{a} dB @1383, {b} dB @1650, advantage {:.2} dB", b - a))
}

fn srs_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for &pump in &PUMPS {
        for &signal in &SIGNALS {
            let s =
                RamanScenario::for_pair(RamanPair::Gpon1383To1490, pump, signal, 22.0).map_err(|e| e.to_string())?;
            let ode = integrate(&s).map_err(|e| e.to_string())?.on_off_gain_db;
            let analytic = analytic_onoff_gain(&s).map_err(|e| e.to_string())?;
            let rel = (ode - analytic).abs() / analytic;
            worst = worst.max(rel);
            ensure(rel <= 0.02, || {
                format!("pump {pump} signal {signal}: ode {ode} vs analytic {analytic}")
            })?;
        }
    }
    let mut worst_photon: f64 = 0.0;
    for &pump in &PUMPS {
        for &signal in &SIGNALS {
            let mut s =
                RamanScenario::for_pair(RamanPair::Gpon1383To1490, pump, signal, 22.0).map_err(|e| e.to_string())?;
            s.pump_attenuation_db_km = 0.0;
            s.signal_attenuation_db_km = 0.0;
            let (p0, q0) = (1e-3 * 10f64.powf(pump / 10.0), 1e-3 * 10f64.powf(signal / 10.0));
            let (p, q) = propagate(&s, s.gain_coefficient, p0, q0);
            let before = s.pump_wavelength_nm * p0 + s.signal_wavelength_nm * q0;
            let after = s.pump_wavelength_nm * p + s.signal_wavelength_nm * q;
            let rel = ((after - before) / before).abs();
            worst_photon = worst_photon.max(rel);
            ensure(rel <= 1e-9, || {
                format!("photon number drifted by {rel:e} at {pump}/{signal} dBm")
            })?;
        }
    }
    Ok(format!(
        "max relative gain error {:.3}%, photon drift {worst_photon:.1e}",
        worst * 100.0
    ))
}

fn srs_bands() -> Outcome {
    let s = RamanScenario::for_pair(RamanPair::Gpon1383To1490, 9.0, 0.0, 22.0).map_err(|e| e.to_string())?;
    let gain = integrate(&s).map_err(|e| e.to_string())?.on_off_gain_db;
    ensure((0.05..=0.3).contains(&gain), || {
        format!("GPON worst-case gain {gain} dB")
    })?;
    let mut worst: f64 = 0.0;
    for &pump in &PUMPS {
        for &signal in &SIGNALS {
            let h =
                RamanScenario::for_pair(RamanPair::Hspon1342To1383, pump, signal, 22.0).map_err(|e| e.to_string())?;
            let dep = integrate(&h).map_err(|e| e.to_string())?.pump_depletion_db;
            worst = worst.max(dep);
            ensure(dep < 0.1, || format!("HSPON depletion {dep} dB at {pump}/{signal} dBm"))?;
        }
    }
    Ok(format!(
        "GPON gain {gain:.3} dB (against ~0.2 dB), HSPON max depletion {worst:.2e} dB"
    ))
}

fn detectability_oracle() -> Outcome {
    let mut params = SyntheticOrlParams::reference(424_242);
    params.count = 200;
    let pop = synth_population(&params).map_err(|e| e.to_string())?;
    let base = PonTopology::reference(20.0);
    let instruments = [
        OtdrSpec::water_peak_1383(),
        OtdrSpec::u_band_1650(),
        OtdrSpec::water_peak_1383().with_override(24.15),
        OtdrSpec::u_band_1650().with_override(25.25),
    ];
    let margin = 1.0;
    let (mut cells, mut detected, mut missed) = (0, 0, 0);
    for otdr in &instruments {
        for class in BudgetClassName::ALL.map(budget_of) {
            let setup = detection_setup(otdr, &base, &class).map_err(|e| e.to_string())?;
            let analytic: Vec<&str> = detectable_units(&pop, otdr, &base, &class, margin)
                .map_err(|e| e.to_string())?
                .iter()
                .map(|r| r.unit_id.as_str())
                .collect();
            let reflector_m = setup.topology.total_length_km() * 1000.0;
            let window = otdr.pulse_extent_m() + 2.0 * otdr.sample_spacing_m;
            let mut traced = Vec::new();
            for r in pop.records() {
                let top = terminated(&setup, r.orl_at(otdr.wavelength_nm).map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
                let trace = synthesize_trace(&top, otdr, TraceNoise::None).map_err(|e| e.to_string())?;
                let events = detect_events(&trace, margin).map_err(|e| e.to_string())?;
                if events
                    .iter()
                    .any(|e| e.distance_m >= reflector_m && e.distance_m <= reflector_m + window)
                {
                    traced.push(r.unit_id.as_str());
                }
            }
            ensure(analytic == traced, || {
                format!(
                    "{} nm {}: analytic {} units, trace {} units",
                    otdr.wavelength_nm,
                    class.name,
                    analytic.len(),
                    traced.len()
                )
            })?;
            cells += 1;
            detected += traced.len();
            missed += pop.len() - traced.len();
        }
    }
    ensure(detected > 0 && missed > 0, || {
        "oracle never separated detected from missed units".into()
    })?;
    Ok(format!(
        "{cells} cells x {} units identical ({detected} detected, {missed} missed)",
        pop.len()
    ))
}

fn calibrated_coverage() -> Outcome {
    let scenario = Scenario::load(scenarios_dir().join("coverage.toml")).map_err(|e| e.to_string())?;
    let pop = scenario.load_population().map_err(|e| e.to_string())?;
    let gap = population_stats(&pop, 1650.0).map_err(|e| e.to_string())?.mean_db
        - population_stats(&pop, 1383.0).map_err(|e| e.to_string())?.mean_db;
    let otdrs: Vec<OtdrSpec> = scenario.instruments.iter().map(|i| i.otdr.clone()).collect();
    let report = coverage_sweep(&pop, &otdrs, &scenario.topology, &scenario.budgets, &[1.0]);
    ensure(report.diagnostics.is_empty(), || report.diagnostics.join("; "))?;
    let target = |wl: f64, class: &str| match (wl as u32, class) {
        (1650, "B+") => 0.97,
        (1383, "B+") => 0.99,
        (1650, "C+") => 0.66,
        (1383, "C+") => 0.97,
        (1650, "D") => 0.00,
        (1383, "D") => 0.57,
        _ => f64::NAN,
    };
    ensure(report.rows.len() == 6, || {
        format!("{} coverage cells", report.rows.len())
    })?;
    let mut cells = Vec::new();
    for row in &report.rows {
        let t = target(row.wavelength_nm, &row.budget_class);
        ensure((row.fraction - t).abs() <= 0.10, || {
            format!(
                "{} nm {}: {:.3} vs {t}",
                row.wavelength_nm, row.budget_class, row.fraction
            )
        })?;
        if row.wavelength_nm == 1650.0 && row.budget_class == "D" {
            ensure(row.fraction == 0.0, || format!("D@1650 is {}", row.fraction))?;
        }
        cells.push(format!(
            "{}@{}={:.2}",
            row.budget_class, row.wavelength_nm, row.fraction
        ));
    }
    let drs: Vec<String> = scenario
        .instruments
        .iter()
        .map(|i| format!("{} DR {:.2} dB", i.id, i.calibrated_dr_db.unwrap_or(f64::NAN)))
        .collect();
    Ok(format!(
        "{} | {} | mean ORL gap {gap:.2} dB",
        cells.join(" "),
        drs.join(", ")
    ))
}

fn ordering_properties() -> Outcome {
    let base = PonTopology::reference(20.0);
    let strategy = (
        prop::collection::vec((25.0f64..60.0, 11.5f64..20.0), 5..60),
        18.0f64..30.0,
        -3.0f64..1.5,
        0.5f64..4.0,
    );
    let mut runner = TestRunner::new(Config {
        cases: 256,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |(units, dr1383, dr_delta, margin)| {
            // per-unit ORL at 1650 nm sits at least the reference gap above 1383 nm
            let records = units
                .iter()
                .enumerate()
                .map(|(i, (orl, gap))| OntRecord {
                    unit_id: format!("U{i}"),
                    vendor: "v".into(),
                    orl_db: [(1383, *orl), (1650, orl + gap)].into_iter().collect(),
                })
                .collect();
            let pop = OntPopulation::new(records, Provenance::MeasuredCsv).unwrap();
            let wp = OtdrSpec::water_peak_1383().with_override(dr1383);
            let ub = OtdrSpec::u_band_1650().with_override(dr1383 + dr_delta);
            let mut last: Option<(f64, f64, f64, f64)> = None;
            for class in BudgetClassName::ALL.map(budget_of) {
                let f1383 = coverage(&pop, &wp, &base, &class, margin).unwrap().fraction;
                let f1650 = coverage(&pop, &ub, &base, &class, margin).unwrap().fraction;
                prop_assert!(f1383 >= f1650, "{}: {} < {}", class.name, f1383, f1650);
                let mut max_orl = [0.0; 2];
                for (k, otdr) in [&wp, &ub].into_iter().enumerate() {
                    let s = detection_setup(otdr, &base, &class).unwrap();
                    max_orl[k] = -min_detectable_reflectance(otdr, s.path_loss_db, s.backscatter_db, margin).unwrap();
                }
                if let Some((p1383, p1650, o1383, o1650)) = last {
                    prop_assert!(f1383 <= p1383 && f1650 <= p1650);
                    prop_assert!(max_orl[0] <= o1383 + 1e-9 && max_orl[1] <= o1650 + 1e-9);
                }
                last = Some((f1383, f1650, max_orl[0], max_orl[1]));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("256 randomized populations and DR pairs".into())
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ponwm"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        String::from_utf8_lossy(&out.stderr).into_owned()
    })?;
    Ok(out.stdout)
}

fn round_trip_and_determinism() -> Outcome {
    let mut worst: f64 = 0.0;
    for b0 in [-79.0, -82.0] {
        let bs = backscatter_level(b0, 30.0).map_err(|e| e.to_string())?;
        for i in 0..=600 {
            let r = -70.0 + i as f64 * 0.1;
            let back =
                reflectance_from_peak_height(peak_height_from_reflectance(r, bs), bs).map_err(|e| e.to_string())?;
            worst = worst.max((back - r).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("round trip error {worst:e} dB"))?;

    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    let trace_cfg = scenarios_dir().join("trace.toml");
    let cov_cfg = scenarios_dir().join("synthetic_coverage.toml");
    let mut outputs = Vec::new();
    for dir in &dirs {
        let trace_out = dir.path().join("trace.csv");
        run_cli(&[
            "trace",
            "--config",
            trace_cfg.to_str().unwrap(),
            "--out",
            trace_out.to_str().unwrap(),
        ])?;
        let cov = run_cli(&["coverage", "--config", cov_cfg.to_str().unwrap(), "--seed", "99"])?;
        let mut files = Vec::new();
        for name in ["trace.csv", "trace.json", "trace_events.csv"] {
            files.push(std::fs::read(dir.path().join(name)).map_err(|e| e.to_string())?);
        }
        outputs.push((files, cov));
    }
    ensure(outputs[0] == outputs[1], || "repeated CLI runs differ".into())?;

    let bend = BendSpec::g657a1_10mm(1).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = [1383.0, 1625.0, 1650.0]
        .iter()
        .map(|wl| bend_loss(&bend, *wl))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(losses[0] < losses[1] && losses[1] < losses[2], || {
        format!("bend losses {losses:?}")
    })?;
    Ok(format!(
        "round trip {worst:.1e} dB, CLI outputs byte-identical, bend {:.1} < {:.1} < {:.1} dB",
        losses[0], losses[1], losses[2]
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("headend launch power", headend_power),
        ("32-way splitter model", splitter_model),
        ("SRS ODE vs analytic", srs_oracle),
        ("SRS magnitude bands", srs_bands),
        ("analytic vs trace detectability", detectability_oracle),
        ("calibrated coverage", calibrated_coverage),
        ("ordering properties", ordering_properties),
        ("round trip and determinism", round_trip_and_determinism),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {name} ({secs:.2} s): {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name} ({secs:.2} s): {detail}", n + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
