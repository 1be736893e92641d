//! Declarative TOML scenarios consumed by the `ponwm` CLI.
//!
//! Fiber profiles, bends and splitters are declared by name and referenced
//! from the ordered `topology.elements` list. The built-in names `g652d`,
//! `g652ab_legacy`, `g657a1`, `g657a1_10mm` and `plc_1x32` resolve to the
//! shipped defaults without being declared. Relative paths (population CSV)
//! resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::detectability::{load_population, synth_population, OntPopulation, SyntheticOrlParams, WavelengthOrlParams};
use crate::error::{PonError, Result};
use crate::interference::InterferenceSpec;
use crate::optics::{Backscatter, BendSpec, FiberFamily, FiberProfile, SpectralTable};
use crate::otdr::{backscatter_level, calibrate_effective_dr, CalibrationObservation, OtdrSpec};
use crate::raman::{gain_coefficient_for, RamanPair, RamanScenario, DEFAULT_STEP_M};
use crate::topology::{budget_of, BudgetClass, BudgetClassName, PathElement, PonTopology, Splitter};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    seed: Option<u64>,
    #[serde(default)]
    fibers: Vec<RawFiber>,
    #[serde(default)]
    bends: Vec<RawBend>,
    #[serde(default)]
    splitters: Vec<RawSplitter>,
    topology: Option<RawTopology>,
    #[serde(default)]
    instruments: Vec<RawInstrument>,
    population: Option<RawPopulation>,
    budgets: Option<Vec<String>>,
    #[serde(default)]
    budget_overrides: BTreeMap<String, f64>,
    margins: Option<Vec<f64>>,
    trace: Option<RawTrace>,
    #[serde(default)]
    raman: Vec<RawRaman>,
    interference: Option<RawInterference>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFiber {
    name: String,
    family: FiberFamily,
    points: Option<Vec<[f64; 2]>>,
    backscatter_b0_db: Option<RawB0>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawB0 {
    Scalar(f64),
    Table(Vec<[f64; 2]>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBend {
    name: String,
    family: FiberFamily,
    radius_mm: f64,
    #[serde(default = "one")]
    turns: u32,
    points: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplitter {
    name: String,
    ports: u32,
    excess_points: Option<Vec<[f64; 2]>>,
    total_loss_points: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    uniformity_db: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    name: Option<String>,
    elements: Vec<RawElement>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawElement {
    Fiber {
        profile: String,
        length_km: f64,
    },
    Splitter {
        splitter: String,
    },
    Bend {
        bend: String,
        turns: Option<u32>,
    },
    Connector {
        loss_db: f64,
    },
    Voa {
        #[serde(default)]
        setting_db: f64,
    },
    Vbr {
        reflectance_db: f64,
    },
    Ont {
        orl_db: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstrument {
    id: String,
    wavelength_nm: f64,
    dr_datasheet_db: f64,
    #[serde(default = "datasheet_pulse")]
    datasheet_pulse_ns: f64,
    #[serde(default = "averaging")]
    datasheet_averaging_s: f64,
    #[serde(default = "operating_pulse")]
    operating_pulse_ns: f64,
    #[serde(default = "averaging")]
    operating_averaging_s: f64,
    dr_effective_override_db: Option<f64>,
    #[serde(default = "one_f64")]
    sample_spacing_m: f64,
    /// `[path_loss_db, min_reflectance_db, margin_db]` readings.
    calibration: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPopulation {
    csv: Option<PathBuf>,
    synthetic: Option<RawSynthetic>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynthetic {
    count: usize,
    wavelengths: Vec<WavelengthOrlParams>,
    vendors: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    instrument: Option<String>,
    budget: Option<String>,
    orl_db: Option<f64>,
    #[serde(default)]
    noise_sigma_db: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRaman {
    name: String,
    pair: String,
    pump_wavelength_nm: Option<f64>,
    signal_wavelength_nm: Option<f64>,
    gain_coefficient: Option<f64>,
    pump_attenuation_db_km: Option<f64>,
    signal_attenuation_db_km: Option<f64>,
    #[serde(default = "feeder_km")]
    length_km: f64,
    #[serde(default = "yes")]
    photon_term: bool,
    #[serde(default = "raman_step")]
    step_m: f64,
    pump_powers_dbm: Vec<f64>,
    signal_powers_dbm: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInterference {
    #[serde(default = "penalty_free")]
    penalty_free_post_splitter_dbm: f64,
    #[serde(default = "isolation")]
    isolation_db: f64,
    launch_dbm: f64,
    instrument: Option<String>,
    path_loss_headend_to_post_splitter_db: Option<f64>,
}

fn one() -> u32 {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn datasheet_pulse() -> f64 {
    20_000.0
}
fn operating_pulse() -> f64 {
    30.0
}
fn averaging() -> f64 {
    180.0
}
fn feeder_km() -> f64 {
    22.0
}
fn raman_step() -> f64 {
    DEFAULT_STEP_M
}
fn penalty_free() -> f64 {
    -7.8
}
fn isolation() -> f64 {
    40.0
}

fn pairs(points: &[[f64; 2]]) -> Vec<(f64, f64)> {
    points.iter().map(|[a, b]| (*a, *b)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    pub id: String,
    pub otdr: OtdrSpec,
    /// Set when the DR override was fitted from calibration readings.
    pub calibrated_dr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PopulationSource {
    Csv(PathBuf),
    Synthetic(SyntheticOrlParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSettings {
    pub instrument: Option<String>,
    pub budget: Option<BudgetClass>,
    pub orl_db: Option<f64>,
    pub noise_sigma_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamanSweep {
    pub name: String,
    pub base: RamanScenario,
    pub pump_powers_dbm: Vec<f64>,
    pub signal_powers_dbm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceSettings {
    pub penalty_free_post_splitter_dbm: f64,
    pub isolation_db: f64,
    pub launch_dbm: f64,
    pub instrument: Option<String>,
    /// Overrides the loss derived from the topology.
    pub path_loss_headend_to_post_splitter_db: Option<f64>,
}

impl InterferenceSettings {
    pub fn spec_with_loss(&self, loss_db: f64) -> InterferenceSpec {
        InterferenceSpec {
            penalty_free_post_splitter_dbm: self.penalty_free_post_splitter_dbm,
            isolation_db: self.isolation_db,
            path_loss_headend_to_post_splitter_db: loss_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: Option<u64>,
    pub topology: PonTopology,
    pub instruments: Vec<Instrument>,
    pub population: Option<PopulationSource>,
    pub budgets: Vec<BudgetClass>,
    pub margins: Vec<f64>,
    pub trace: TraceSettings,
    pub raman: Vec<RamanSweep>,
    pub interference: Option<InterferenceSettings>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PonError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| PonError::Config(e.to_string()))?;
        resolve(raw, base_dir)
    }

    /// Replaces the scenario seed (CLI `--seed`).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        if let Some(PopulationSource::Synthetic(p)) = &mut self.population {
            p.seed = seed;
        }
        self
    }

    pub fn instrument(&self, id: &str) -> Result<&Instrument> {
        self.instruments.iter().find(|i| i.id == id).ok_or_else(|| {
            PonError::Config(format!(
                "unknown instrument '{id}'; valid ids: {}",
                self.instrument_ids().join(", ")
            ))
        })
    }

    pub fn instrument_ids(&self) -> Vec<&str> {
        self.instruments.iter().map(|i| i.id.as_str()).collect()
    }

    pub fn load_population(&self) -> Result<OntPopulation> {
        match &self.population {
            Some(PopulationSource::Csv(path)) => {
                load_population(path).map_err(|e| PonError::Config(format!("population {}: {e}", path.display())))
            }
            Some(PopulationSource::Synthetic(params)) => synth_population(params),
            None => Err(PonError::Config("scenario has no [population] section".into())),
        }
    }
}

struct Library {
    fibers: BTreeMap<String, FiberProfile>,
    bends: BTreeMap<String, BendSpec>,
    splitters: BTreeMap<String, Splitter>,
}

impl Library {
    fn build(raw: &RawScenario) -> Result<Self> {
        let mut fibers: BTreeMap<String, FiberProfile> =
            [FiberFamily::G652D, FiberFamily::G652AbLegacy, FiberFamily::G657A1]
                .into_iter()
                .map(|f| {
                    let p = FiberProfile::default_for(f);
                    (p.name().to_string(), p)
                })
                .collect();
        for f in &raw.fibers {
            let defaults = FiberProfile::default_for(f.family);
            let points = f
                .points
                .as_deref()
                .map(pairs)
                .unwrap_or_else(|| defaults.attenuation_table().points().to_vec());
            let backscatter = match &f.backscatter_b0_db {
                None => defaults.backscatter().clone(),
                Some(RawB0::Scalar(b0)) => Backscatter::Scalar(*b0),
                Some(RawB0::Table(t)) => Backscatter::PerWavelength(SpectralTable::new(pairs(t))?),
            };
            let profile = FiberProfile::new(f.name.clone(), f.family, points, backscatter)
                .map_err(|e| PonError::Config(format!("fiber '{}': {e}", f.name)))?;
            fibers.insert(f.name.clone(), profile);
        }

        let mut bends = BTreeMap::new();
        bends.insert("g657a1_10mm".to_string(), BendSpec::g657a1_10mm(1)?);
        for b in &raw.bends {
            let spec = BendSpec::new(b.family, b.radius_mm, b.turns, pairs(&b.points))
                .map_err(|e| PonError::Config(format!("bend '{}': {e}", b.name)))?;
            bends.insert(b.name.clone(), spec);
        }

        let mut splitters = BTreeMap::new();
        splitters.insert("plc_1x32".to_string(), Splitter::plc_1x32());
        for s in &raw.splitters {
            let built = match (&s.excess_points, &s.total_loss_points) {
                (Some(e), None) => Splitter::new(s.ports, pairs(e), s.uniformity_db),
                (None, Some(t)) => Splitter::from_total_loss(s.ports, pairs(t), s.uniformity_db),
                _ => Err(PonError::invalid(
                    "give exactly one of excess_points or total_loss_points",
                )),
            }
            .map_err(|e| PonError::Config(format!("splitter '{}': {e}", s.name)))?;
            splitters.insert(s.name.clone(), built);
        }
        Ok(Self {
            fibers,
            bends,
            splitters,
        })
    }

    fn lookup<'a, T>(map: &'a BTreeMap<String, T>, kind: &str, name: &str) -> Result<&'a T> {
        map.get(name).ok_or_else(|| {
            PonError::Config(format!(
                "unknown {kind} '{name}'; known: {}",
                map.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    fn element(&self, raw: &RawElement) -> Result<PathElement> {
        Ok(match raw {
            RawElement::Fiber { profile, length_km } => PathElement::FiberSpan {
                profile: Self::lookup(&self.fibers, "fiber profile", profile)?.clone(),
                length_km: *length_km,
            },
            RawElement::Splitter { splitter } => {
                PathElement::Splitter(Self::lookup(&self.splitters, "splitter", splitter)?.clone())
            }
            RawElement::Bend { bend, turns } => {
                let b = Self::lookup(&self.bends, "bend", bend)?;
                PathElement::Bend(match turns {
                    Some(t) => b.with_turns(*t)?,
                    None => b.clone(),
                })
            }
            RawElement::Connector { loss_db } => PathElement::Connector { loss_db: *loss_db },
            RawElement::Voa { setting_db } => PathElement::Voa {
                setting_db: *setting_db,
            },
            RawElement::Vbr { reflectance_db } => PathElement::Vbr {
                reflectance_db: *reflectance_db,
            },
            RawElement::Ont { orl_db } => PathElement::Ont { orl_db: *orl_db },
        })
    }
}

fn parse_budget(name: &str, overrides: &BTreeMap<String, f64>) -> Result<BudgetClass> {
    let class: BudgetClassName = name.parse().map_err(|e: PonError| PonError::Config(e.to_string()))?;
    let mut budget = budget_of(class);
    if let Some(loss) = overrides.get(class.as_str()) {
        budget.max_odn_loss_db = *loss;
    }
    Ok(budget)
}

fn resolve(raw: RawScenario, base_dir: &Path) -> Result<Scenario> {
    let lib = Library::build(&raw)?;

    for key in raw.budget_overrides.keys() {
        key.parse::<BudgetClassName>()
            .map_err(|e| PonError::Config(format!("budget_overrides: {e}")))?;
    }
    let budget_names = raw
        .budgets
        .clone()
        .unwrap_or_else(|| BudgetClassName::ALL.iter().map(|b| b.as_str().to_string()).collect());
    let budgets = budget_names
        .iter()
        .map(|b| parse_budget(b, &raw.budget_overrides))
        .collect::<Result<Vec<_>>>()?;
    if !budgets.windows(2).all(|w| w[0].name != w[1].name) {
        return Err(PonError::Config("budget classes must not repeat".into()));
    }

    let margins = raw.margins.clone().unwrap_or_else(|| vec![1.0]);
    if margins.iter().any(|m| !(*m > 0.0)) {
        return Err(PonError::Config("margins must be positive".into()));
    }

    let topology = match &raw.topology {
        Some(t) => {
            let elements = t
                .elements
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    lib.element(e)
                        .map_err(|err| PonError::Config(format!("topology element {i}: {err}")))
                })
                .collect::<Result<Vec<_>>>()?;
            PonTopology::new(t.name.clone().unwrap_or_else(|| "topology".into()), elements)
                .map_err(|e| PonError::Config(e.to_string()))?
        }
        None => PonTopology::empty("empty"),
    };

    let mut instruments = Vec::with_capacity(raw.instruments.len());
    for ri in &raw.instruments {
        if instruments.iter().any(|i: &Instrument| i.id == ri.id) {
            return Err(PonError::Config(format!("duplicate instrument id '{}'", ri.id)));
        }
        let mut otdr = OtdrSpec {
            wavelength_nm: ri.wavelength_nm,
            dr_datasheet_db: ri.dr_datasheet_db,
            datasheet_pulse_ns: ri.datasheet_pulse_ns,
            datasheet_averaging_s: ri.datasheet_averaging_s,
            operating_pulse_ns: ri.operating_pulse_ns,
            operating_averaging_s: ri.operating_averaging_s,
            dr_effective_override_db: ri.dr_effective_override_db,
            sample_spacing_m: ri.sample_spacing_m,
        };
        otdr.validate()
            .map_err(|e| PonError::Config(format!("instrument '{}': {e}", ri.id)))?;
        let mut calibrated_dr_db = None;
        if let Some(readings) = &ri.calibration {
            if otdr.dr_effective_override_db.is_some() {
                return Err(PonError::Config(format!(
                    "instrument '{}': give either calibration readings or an override, not both",
                    ri.id
                )));
            }
            let profile = topology.last_fiber().ok_or_else(|| {
                PonError::Config(format!(
                    "instrument '{}': calibration needs a fiber span in the topology",
                    ri.id
                ))
            })?;
            let bs = backscatter_level(profile.backscatter_b0_at(otdr.wavelength_nm)?, otdr.operating_pulse_ns)?;
            let obs: Vec<CalibrationObservation> = readings
                .iter()
                .map(|[path_loss_db, min_reflectance_db, margin_db]| CalibrationObservation {
                    path_loss_db: *path_loss_db,
                    min_reflectance_db: *min_reflectance_db,
                    margin_db: *margin_db,
                })
                .collect();
            let dr = calibrate_effective_dr(&obs, bs)
                .map_err(|e| PonError::Config(format!("instrument '{}' calibration: {e}", ri.id)))?;
            otdr.dr_effective_override_db = Some(dr);
            calibrated_dr_db = Some(dr);
        }
        instruments.push(Instrument {
            id: ri.id.clone(),
            otdr,
            calibrated_dr_db,
        });
    }

    let population = match &raw.population {
        None => None,
        Some(RawPopulation {
            csv: Some(path),
            synthetic: None,
        }) => Some(PopulationSource::Csv(base_dir.join(path))),
        Some(RawPopulation {
            csv: None,
            synthetic: Some(s),
        }) => {
            let seed = raw
                .seed
                .ok_or_else(|| PonError::Config("a synthetic population needs a scenario seed".into()))?;
            let mut params = SyntheticOrlParams {
                wavelengths: s.wavelengths.clone(),
                count: s.count,
                seed,
                vendors: SyntheticOrlParams::reference(seed).vendors,
            };
            if let Some(v) = &s.vendors {
                params.vendors = v.clone();
            }
            params.validate().map_err(|e| PonError::Config(e.to_string()))?;
            Some(PopulationSource::Synthetic(params))
        }
        Some(_) => {
            return Err(PonError::Config(
                "population needs exactly one of csv or synthetic".into(),
            ))
        }
    };

    let trace = match &raw.trace {
        Some(t) => {
            if !(t.noise_sigma_db >= 0.0) {
                return Err(PonError::Config("trace noise_sigma_db must be non-negative".into()));
            }
            if t.noise_sigma_db > 0.0 && raw.seed.is_none() {
                return Err(PonError::Config("trace noise needs a scenario seed".into()));
            }
            TraceSettings {
                instrument: t.instrument.clone(),
                budget: t
                    .budget
                    .as_deref()
                    .map(|b| parse_budget(b, &raw.budget_overrides))
                    .transpose()?,
                orl_db: t.orl_db,
                noise_sigma_db: t.noise_sigma_db,
            }
        }
        None => TraceSettings {
            instrument: None,
            budget: None,
            orl_db: None,
            noise_sigma_db: 0.0,
        },
    };

    let raman = raw
        .raman
        .iter()
        .map(|r| resolve_raman(r).map_err(|e| PonError::Config(format!("raman '{}': {e}", r.name))))
        .collect::<Result<Vec<_>>>()?;

    let interference = raw.interference.as_ref().map(|i| InterferenceSettings {
        penalty_free_post_splitter_dbm: i.penalty_free_post_splitter_dbm,
        isolation_db: i.isolation_db,
        launch_dbm: i.launch_dbm,
        instrument: i.instrument.clone(),
        path_loss_headend_to_post_splitter_db: i.path_loss_headend_to_post_splitter_db,
    });

    let scenario = Scenario {
        name: raw.name.clone().unwrap_or_else(|| "scenario".into()),
        seed: raw.seed,
        topology,
        instruments,
        population,
        budgets,
        margins,
        trace,
        raman,
        interference,
    };
    for id in [
        &scenario.trace.instrument,
        &scenario.interference.as_ref().and_then(|i| i.instrument.clone()),
    ]
    .into_iter()
    .flatten()
    {
        scenario.instrument(id)?;
    }
    Ok(scenario)
}

fn resolve_raman(r: &RawRaman) -> Result<RamanSweep> {
    let pair = if r.pair == "custom" {
        match (r.pump_wavelength_nm, r.signal_wavelength_nm) {
            (Some(p), Some(s)) => RamanPair::Custom {
                pump_nm: p.round() as u32,
                signal_nm: s.round() as u32,
            },
            _ => {
                return Err(PonError::invalid(
                    "custom pairs need pump_wavelength_nm and signal_wavelength_nm",
                ))
            }
        }
    } else {
        r.pair.parse()?
    };
    let (pump_nm, signal_nm) = match pair {
        RamanPair::Custom { .. } => (
            r.pump_wavelength_nm.unwrap_or_default(),
            r.signal_wavelength_nm.unwrap_or_default(),
        ),
        _ => pair.wavelengths_nm(),
    };
    let gain = match r.gain_coefficient {
        Some(g) => g,
        None => gain_coefficient_for(pair)?,
    };
    let defaults = pair.default_attenuations();
    let pump_att = r
        .pump_attenuation_db_km
        .or(defaults.map(|d| d.0))
        .ok_or_else(|| PonError::invalid("custom pairs need pump_attenuation_db_km"))?;
    let signal_att = r
        .signal_attenuation_db_km
        .or(defaults.map(|d| d.1))
        .ok_or_else(|| PonError::invalid("custom pairs need signal_attenuation_db_km"))?;
    if r.pump_powers_dbm.is_empty() || r.signal_powers_dbm.is_empty() {
        return Err(PonError::invalid("power lists must not be empty"));
    }
    let base = RamanScenario {
        pump_wavelength_nm: pump_nm,
        signal_wavelength_nm: signal_nm,
        pump_power_in_dbm: r.pump_powers_dbm[0],
        signal_power_in_dbm: r.signal_powers_dbm[0],
        gain_coefficient: gain,
        pump_attenuation_db_km: pump_att,
        signal_attenuation_db_km: signal_att,
        length_km: r.length_km,
        photon_term: r.photon_term,
        step_m: r.step_m,
    };
    base.validate()?;
    Ok(RamanSweep {
        name: r.name.clone(),
        base,
        pump_powers_dbm: r.pump_powers_dbm.clone(),
        signal_powers_dbm: r.signal_powers_dbm.clone(),
    })
}
