//! The `ponwm` command line.
//!
//! Exit codes: 0 on success, 1 when the analysis itself fails (a launch
//! power over the interference threshold, an infeasible budget), 2 for usage,
//! configuration and I/O errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::detectability::{coverage_sweep, detection_setup};
use crate::error::PonError;
use crate::interference::{check_launch, check_with_loss, max_headend_power, LaunchCheck};
use crate::otdr::{
    detect_events, effective_dynamic_range, min_detectable_reflectance, synthesize_trace, write_events_csv, TraceNoise,
};
use crate::raman::{sweep_powers, write_sweep_csv};
use crate::scenario::{Instrument, Scenario};
use crate::topology::{set_voa_for_budget, PathElement};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANALYSIS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ponwm", version, about = "PON OTDR monitoring simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize an OTDR trace and list its reflective events.
    Trace(CommonArgs),
    /// Fraction of the ONT population detectable per wavelength and budget.
    Coverage(CommonArgs),
    /// Minimum detectable reflectance per instrument and budget.
    Sensitivity(CommonArgs),
    /// Raman crosstalk sweeps.
    Srs(CommonArgs),
    /// Check an OTDR launch power against the interference threshold.
    Budget(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restricts the run to one instrument id.
    #[arg(long)]
    pub instrument: Option<String>,
    /// Overrides the scenario detection margins (dB).
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Analysis(String),
}

impl From<PonError> for Failure {
    fn from(e: PonError) -> Self {
        match e {
            PonError::Config(_) | PonError::Io(_) | PonError::Parse { .. } | PonError::Csv(_) | PonError::Json(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Analysis(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Analysis(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_ANALYSIS
        }
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let args = match &cli.command {
        Command::Trace(a) | Command::Coverage(a) | Command::Sensitivity(a) | Command::Srs(a) | Command::Budget(a) => a,
    };
    if let Some(m) = args.margin {
        if !(m > 0.0) {
            return Err(Failure::Usage(format!("--margin must be positive, got {m}")));
        }
    }
    let mut scenario = Scenario::load(&args.config)?;
    if let Some(seed) = args.seed {
        scenario = scenario.with_seed(seed);
    }
    if let Some(id) = &args.instrument {
        scenario.instrument(id)?;
    }
    match &cli.command {
        Command::Trace(a) => cmd_trace(&scenario, a, stdout, stderr),
        Command::Coverage(a) => cmd_coverage(&scenario, a, stdout, stderr),
        Command::Sensitivity(a) => cmd_sensitivity(&scenario, a, stdout, stderr),
        Command::Srs(a) => cmd_srs(&scenario, a, stdout),
        Command::Budget(a) => cmd_budget(&scenario, a, stdout),
    }
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

/// Runs `write` against `--out` or stdout.
fn emit<F>(out: Option<&Path>, stdout: &mut dyn Write, write: F) -> std::result::Result<(), Failure>
where
    F: FnOnce(&mut dyn Write) -> crate::Result<()>,
{
    match out {
        Some(path) => {
            let mut f = create(path)?;
            write(&mut f)?;
            f.flush()?;
        }
        None => write(stdout)?,
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn pick_instrument<'a>(
    scenario: &'a Scenario,
    explicit: Option<&str>,
    fallback: Option<&str>,
) -> std::result::Result<&'a Instrument, Failure> {
    match explicit.or(fallback) {
        Some(id) => Ok(scenario.instrument(id)?),
        None => scenario
            .instruments
            .first()
            .ok_or_else(|| Failure::Usage("scenario declares no instruments".into())),
    }
}

fn selected_instruments<'a>(
    scenario: &'a Scenario,
    args: &CommonArgs,
) -> std::result::Result<Vec<&'a Instrument>, Failure> {
    let list: Vec<&Instrument> = match &args.instrument {
        Some(id) => vec![scenario.instrument(id)?],
        None => scenario.instruments.iter().collect(),
    };
    if list.is_empty() {
        return Err(Failure::Usage("scenario declares no instruments".into()));
    }
    Ok(list)
}

fn margins(scenario: &Scenario, args: &CommonArgs) -> Vec<f64> {
    args.margin.map(|m| vec![m]).unwrap_or_else(|| scenario.margins.clone())
}

fn cmd_trace(scenario: &Scenario, args: &CommonArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let inst = pick_instrument(
        scenario,
        args.instrument.as_deref(),
        scenario.trace.instrument.as_deref(),
    )?;
    let settings = &scenario.trace;
    let mut topology = scenario.topology.clone();
    if let Some(class) = &settings.budget {
        let (_, adjusted) = set_voa_for_budget(&topology.without_termination(), class, inst.otdr.wavelength_nm)?;
        topology = match topology.termination() {
            Some(t) if settings.orl_db.is_none() => adjusted.with_termination(t.clone())?,
            _ => adjusted,
        };
    }
    if let Some(orl_db) = settings.orl_db {
        topology = topology
            .without_termination()
            .with_termination(PathElement::Ont { orl_db })?;
    }
    let noise = if settings.noise_sigma_db > 0.0 {
        let seed = scenario
            .seed
            .ok_or_else(|| Failure::Usage("trace noise needs a seed".into()))?;
        TraceNoise::Jitter {
            sigma_db: settings.noise_sigma_db,
            seed,
        }
    } else {
        TraceNoise::None
    };
    let trace = synthesize_trace(&topology, &inst.otdr, noise)?;
    let margin = margins(scenario, args)[0];
    let events = detect_events(&trace, margin)?;

    match &args.out {
        Some(path) => {
            let mut f = create(path)?;
            trace.write_csv(&mut f)?;
            f.flush()?;
            let meta_path = path.with_extension("json");
            let mut m = create(&meta_path)?;
            serde_json::to_writer_pretty(&mut m, &trace.metadata()).map_err(PonError::from)?;
            writeln!(m)?;
            m.flush()?;
            let events_path = sibling(path, "_events", "csv");
            let mut e = create(&events_path)?;
            write_events_csv(&events, &mut e)?;
            e.flush()?;
            writeln!(
                stdout,
                "{}: {} samples, {} reflective event(s)",
                inst.id,
                trace.len(),
                events.len()
            )?;
        }
        None => {
            trace.write_csv(&mut *stdout)?;
            for ev in &events {
                writeln!(
                    stderr,
                    "event at {} m, {:.3} dB above floor",
                    ev.distance_m, ev.peak_height_above_floor_db
                )?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_coverage(scenario: &Scenario, args: &CommonArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let population = scenario.load_population()?;
    let otdrs: Vec<_> = selected_instruments(scenario, args)?
        .into_iter()
        .map(|i| i.otdr.clone())
        .collect();
    let report = coverage_sweep(
        &population,
        &otdrs,
        &scenario.topology,
        &scenario.budgets,
        &margins(scenario, args),
    );
    for d in &report.diagnostics {
        writeln!(stderr, "warning: {d}")?;
    }
    let json = args
        .out
        .as_deref()
        .and_then(|p| p.extension())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    emit(args.out.as_deref(), stdout, |w| {
        if json {
            report.write_json(w)
        } else {
            report.write_csv(w)
        }
    })?;
    Ok(EXIT_OK)
}

fn cmd_sensitivity(
    scenario: &Scenario,
    args: &CommonArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CmdResult {
    let instruments = selected_instruments(scenario, args)?;
    let margins = margins(scenario, args);
    let mut rows: Vec<[String; 9]> = Vec::new();
    for inst in instruments {
        for class in &scenario.budgets {
            let setup = match detection_setup(&inst.otdr, &scenario.topology, class) {
                Ok(s) => s,
                Err(e) => {
                    writeln!(stderr, "warning: {} / {}: {e}", inst.id, class.name)?;
                    continue;
                }
            };
            for &margin in &margins {
                let r = min_detectable_reflectance(&inst.otdr, setup.path_loss_db, setup.backscatter_db, margin)?;
                rows.push([
                    inst.id.clone(),
                    inst.otdr.wavelength_nm.to_string(),
                    class.name.to_string(),
                    margin.to_string(),
                    format!("{:.6}", setup.path_loss_db),
                    format!("{:.6}", effective_dynamic_range(&inst.otdr)),
                    format!("{:.6}", setup.backscatter_db),
                    format!("{r:.6}"),
                    format!("{:.6}", -r),
                ]);
            }
        }
    }
    if rows.is_empty() {
        return Err(Failure::Analysis(
            "no instrument/budget combination could be evaluated".into(),
        ));
    }
    emit(args.out.as_deref(), stdout, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "instrument",
            "wavelength_nm",
            "budget_class",
            "margin_db",
            "path_loss_db",
            "dr_eff_db",
            "backscatter_db",
            "min_reflectance_db",
            "max_orl_db",
        ])?;
        for r in &rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(EXIT_OK)
}

fn cmd_srs(scenario: &Scenario, args: &CommonArgs, stdout: &mut dyn Write) -> CmdResult {
    if scenario.raman.is_empty() {
        return Err(Failure::Usage("scenario declares no [[raman]] sweeps".into()));
    }
    let many = scenario.raman.len() > 1;
    for sweep in &scenario.raman {
        let rows = sweep_powers(&sweep.base, &sweep.pump_powers_dbm, &sweep.signal_powers_dbm)?;
        match &args.out {
            Some(path) => {
                let target = if many {
                    sibling(path, &format!("_{}", sweep.name), "csv")
                } else {
                    path.clone()
                };
                emit(Some(&target), stdout, |w| write_sweep_csv(&rows, w))?;
            }
            None => {
                if many {
                    writeln!(stdout, "# {}", sweep.name)?;
                }
                write_sweep_csv(&rows, &mut *stdout)?;
            }
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BudgetReport {
    instrument: Option<String>,
    path_loss_headend_to_post_splitter_db: f64,
    max_headend_power_dbm: f64,
    #[serde(flatten)]
    check: LaunchCheck,
}

fn cmd_budget(scenario: &Scenario, args: &CommonArgs, stdout: &mut dyn Write) -> CmdResult {
    let settings = scenario
        .interference
        .as_ref()
        .ok_or_else(|| Failure::Usage("scenario has no [interference] section".into()))?;
    let (instrument, loss, check) = match settings.path_loss_headend_to_post_splitter_db {
        Some(loss) => {
            let spec = settings.spec_with_loss(loss);
            spec.validate()?;
            (None, loss, check_with_loss(settings.launch_dbm, loss, &spec))
        }
        None => {
            let inst = pick_instrument(scenario, args.instrument.as_deref(), settings.instrument.as_deref())?;
            let split = scenario
                .topology
                .first_splitter_index()
                .ok_or_else(|| Failure::Usage("topology has no splitter".into()))?;
            let loss = scenario.topology.prefix_loss(split + 1, inst.otdr.wavelength_nm)?;
            let check = check_launch(
                &scenario.topology,
                &inst.otdr,
                settings.launch_dbm,
                &settings.spec_with_loss(loss),
            )?;
            (Some(inst.id.clone()), loss, check)
        }
    };
    let report = BudgetReport {
        instrument,
        path_loss_headend_to_post_splitter_db: loss,
        max_headend_power_dbm: max_headend_power(&settings.spec_with_loss(loss))?,
        check,
    };
    emit(args.out.as_deref(), stdout, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(if check.pass { EXIT_OK } else { EXIT_ANALYSIS })
}
