//! ONT return-loss populations and the share of them an OTDR can see.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{PonError, Result};
use crate::otdr::{backscatter_level, min_detectable_reflectance, OtdrSpec};
use crate::topology::{path_loss, set_voa_for_budget, BudgetClass, PathElement, PonTopology};

/// Wavelength key used for per-unit ORL maps.
pub fn wavelength_key(wavelength_nm: f64) -> u32 {
    wavelength_nm.round() as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntRecord {
    pub unit_id: String,
    pub vendor: String,
    /// Wavelength (nm) → ORL (positive dB).
    pub orl_db: BTreeMap<u32, f64>,
}

impl OntRecord {
    pub fn orl_at(&self, wavelength_nm: f64) -> Result<f64> {
        let key = wavelength_key(wavelength_nm);
        self.orl_db
            .get(&key)
            .copied()
            .ok_or_else(|| PonError::MissingWavelength {
                unit_id: self.unit_id.clone(),
                wavelength_nm: key,
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    MeasuredCsv,
    Synthetic { seed: u64, params: SyntheticOrlParams },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OntPopulation {
    records: Vec<OntRecord>,
    provenance: Provenance,
}

impl OntPopulation {
    pub fn new(records: Vec<OntRecord>, provenance: Provenance) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.unit_id.as_str()) {
                return Err(PonError::invalid(format!("duplicate unit_id '{}'", r.unit_id)));
            }
            if r.orl_db.is_empty() {
                return Err(PonError::invalid(format!("unit '{}' has no ORL values", r.unit_id)));
            }
            if r.orl_db.values().any(|v| !(*v > 0.0)) {
                return Err(PonError::invalid(format!(
                    "unit '{}' has a non-positive ORL",
                    r.unit_id
                )));
            }
        }
        Ok(Self { records, provenance })
    }

    pub fn records(&self) -> &[OntRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn orls_at(&self, wavelength_nm: f64) -> Result<Vec<f64>> {
        self.records.iter().map(|r| r.orl_at(wavelength_nm)).collect()
    }

    /// Writes the population in the `unit_id,vendor,orl_<nm>_db,...` schema.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let wavelengths: Vec<u32> = self
            .records
            .iter()
            .flat_map(|r| r.orl_db.keys().copied())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["unit_id".to_string(), "vendor".to_string()];
        header.extend(wavelengths.iter().map(|nm| format!("orl_{nm}_db")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.unit_id.clone(), r.vendor.clone()];
            row.extend(
                wavelengths
                    .iter()
                    .map(|nm| r.orl_db.get(nm).map(|v| format!("{v:.3}")).unwrap_or_default()),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_population(path: impl AsRef<Path>) -> Result<OntPopulation> {
    read_population(std::fs::File::open(path)?)
}

/// Parses a population CSV. Row numbers in errors count data rows from 1.
pub fn read_population<R: Read>(input: R) -> Result<OntPopulation> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (unit_col, vendor_col) = match (column("unit_id"), column("vendor")) {
        (Some(u), Some(v)) => (u, v),
        _ => {
            return Err(PonError::Parse {
                row: 0,
                message: "header must contain unit_id and vendor".into(),
            })
        }
    };
    let orl_cols: Vec<(usize, u32)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let nm = h.strip_prefix("orl_")?.strip_suffix("_db")?.parse().ok()?;
            Some((i, nm))
        })
        .collect();
    for required in [1383, 1650] {
        if !orl_cols.iter().any(|(_, nm)| *nm == required) {
            return Err(PonError::Parse {
                row: 0,
                message: format!("missing column orl_{required}_db"),
            });
        }
    }

    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row_no = idx + 1;
        let row = row.map_err(|e| PonError::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |i: usize| row.get(i).unwrap_or("").to_string();
        let mut orl_db = BTreeMap::new();
        for &(col, nm) in &orl_cols {
            let raw = field(col);
            if raw.is_empty() {
                continue;
            }
            let value: f64 = raw.parse().map_err(|_| PonError::Parse {
                row: row_no,
                message: format!("orl_{nm}_db value '{raw}' is not a number"),
            })?;
            if !(value > 0.0) || !value.is_finite() {
                return Err(PonError::Parse {
                    row: row_no,
                    message: format!("orl_{nm}_db must be positive, got {value}"),
                });
            }
            orl_db.insert(nm, value);
        }
        if orl_db.is_empty() {
            return Err(PonError::Parse {
                row: row_no,
                message: "no ORL values".into(),
            });
        }
        records.push(OntRecord {
            unit_id: field(unit_col),
            vendor: field(vendor_col),
            orl_db,
        });
    }
    OntPopulation::new(records, Provenance::MeasuredCsv)
}

/// Target statistics for one wavelength of a synthetic population.
///
/// `mean_db` is the mean of the truncated distribution, not of its parent
/// normal; the parent location is solved for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthOrlParams {
    pub wavelength_nm: u32,
    pub mean_db: f64,
    pub std_dev_db: f64,
    pub min_db: f64,
    pub max_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOrlParams {
    pub wavelengths: Vec<WavelengthOrlParams>,
    pub count: usize,
    pub seed: u64,
    #[serde(default = "default_vendors")]
    pub vendors: Vec<String>,
}

fn default_vendors() -> Vec<String> {
    ["vendor_a", "vendor_b", "vendor_c", "vendor_d"]
        .map(String::from)
        .to_vec()
}

impl SyntheticOrlParams {
    /// Shipped reference: 87 units, 11.5 dB lower mean ORL at 1383 nm with a
    /// wider spread; the 1650 nm distribution is cut off at 46 dB.
    pub fn reference(seed: u64) -> Self {
        Self {
            wavelengths: vec![
                WavelengthOrlParams {
                    wavelength_nm: 1383,
                    mean_db: 39.5,
                    std_dev_db: 5.5,
                    min_db: 25.0,
                    max_db: 60.0,
                },
                WavelengthOrlParams {
                    wavelength_nm: 1650,
                    mean_db: 51.0,
                    std_dev_db: 5.0,
                    min_db: 46.0,
                    max_db: 70.0,
                },
            ],
            count: 87,
            seed,
            vendors: default_vendors(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelengths.is_empty() {
            return Err(PonError::invalid("synthetic population needs at least one wavelength"));
        }
        if self.vendors.is_empty() {
            return Err(PonError::invalid("synthetic population needs at least one vendor"));
        }
        let mut seen = HashSet::new();
        for w in &self.wavelengths {
            if !seen.insert(w.wavelength_nm) {
                return Err(PonError::invalid(format!(
                    "duplicate wavelength {} nm",
                    w.wavelength_nm
                )));
            }
            if !(w.min_db > 0.0 && w.min_db < w.mean_db && w.mean_db < w.max_db) {
                return Err(PonError::invalid(format!(
                    "{} nm: need 0 < min < mean < max, got {} / {} / {}",
                    w.wavelength_nm, w.min_db, w.mean_db, w.max_db
                )));
            }
            if !(w.std_dev_db > 0.0) {
                return Err(PonError::invalid(format!(
                    "{} nm: std-dev must be positive",
                    w.wavelength_nm
                )));
            }
        }
        Ok(())
    }
}

/// A normal truncated to `[lo, hi]`, parameterised by its parent.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedNormal {
    parent: Normal,
    location: f64,
    scale: f64,
    lo: f64,
    hi: f64,
    cdf_lo: f64,
    cdf_hi: f64,
}

impl TruncatedNormal {
    pub fn new(location: f64, scale: f64, lo: f64, hi: f64) -> Result<Self> {
        let parent = Normal::new(location, scale).map_err(|e| PonError::invalid(e.to_string()))?;
        let (cdf_lo, cdf_hi) = (parent.cdf(lo), parent.cdf(hi));
        if !(window_mass(&parent, lo, hi) > 0.0) {
            return Err(PonError::Numerical(format!(
                "truncation window [{lo}, {hi}] has no mass under N({location}, {scale})"
            )));
        }
        Ok(Self {
            parent,
            location,
            scale,
            lo,
            hi,
            cdf_lo,
            cdf_hi,
        })
    }

    /// Truncated distribution with the requested mean and parent scale.
    pub fn with_mean(mean: f64, scale: f64, lo: f64, hi: f64) -> Result<Self> {
        // truncated mean is increasing in the parent location
        let (mut a, mut b) = (lo - 10.0 * scale, hi + 10.0 * scale);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if Self::new(mid, scale, lo, hi)?.mean() < mean {
                a = mid;
            } else {
                b = mid;
            }
        }
        Self::new(0.5 * (a + b), scale, lo, hi)
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn mean(&self) -> f64 {
        let (mu, sigma) = (self.location, self.scale);
        let z = Normal::standard();
        let (a, b) = ((self.lo - mu) / sigma, (self.hi - mu) / sigma);
        mu + sigma * (z.pdf(a) - z.pdf(b)) / window_mass(&self.parent, self.lo, self.hi)
    }

    /// Inverse-CDF draw from a uniform variate in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let p = self.cdf_lo + u * (self.cdf_hi - self.cdf_lo);
        self.parent.inverse_cdf(p).clamp(self.lo, self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

// Upper-tail windows are differenced through the survival function.
fn window_mass(parent: &Normal, lo: f64, hi: f64) -> f64 {
    if parent.cdf(lo) > 0.5 {
        parent.sf(lo) - parent.sf(hi)
    } else {
        parent.cdf(hi) - parent.cdf(lo)
    }
}

/// Seeded truncated-normal ORL population.
pub fn synth_population(params: &SyntheticOrlParams) -> Result<OntPopulation> {
    params.validate()?;
    let dists = params
        .wavelengths
        .iter()
        .map(|w| {
            Ok((
                w.wavelength_nm,
                TruncatedNormal::with_mean(w.mean_db, w.std_dev_db, w.min_db, w.max_db)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let width = params.count.to_string().len().max(3);
    let records = (0..params.count)
        .map(|i| {
            let orl_db = dists
                .iter()
                .map(|(nm, d)| (*nm, (d.sample(&mut rng) * 1000.0).round() / 1000.0))
                .collect();
            OntRecord {
                unit_id: format!("ONT-{:0width$}", i + 1),
                vendor: params.vendors[i % params.vendors.len()].clone(),
                orl_db,
            }
        })
        .collect();
    OntPopulation::new(
        records,
        Provenance::Synthetic {
            seed: params.seed,
            params: params.clone(),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub mean_db: f64,
    pub std_dev_db: f64,
    pub min_db: f64,
    pub max_db: f64,
    pub count: usize,
}

/// Sample statistics (n − 1 standard deviation) of ORL at one wavelength.
pub fn population_stats(pop: &OntPopulation, wavelength_nm: f64) -> Result<PopulationStats> {
    let values = pop.orls_at(wavelength_nm)?;
    if values.is_empty() {
        return Err(PonError::invalid("population is empty"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(PopulationStats {
        mean_db: mean,
        std_dev_db: var.sqrt(),
        min_db: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max_db: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        count: values.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub wavelength_nm: f64,
    pub budget_class: String,
    pub margin_db: f64,
    pub detectable: usize,
    pub total: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    /// Cells that could not be evaluated, with the reason.
    pub diagnostics: Vec<String>,
}

impl CoverageReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "wavelength_nm",
            "budget_class",
            "margin_db",
            "detectable",
            "total",
            "fraction",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.wavelength_nm.to_string(),
                r.budget_class.clone(),
                r.margin_db.to_string(),
                r.detectable.to_string(),
                r.total.to_string(),
                r.fraction.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.rows)?;
        Ok(())
    }
}

/// Loss budget and backscatter seen by an instrument on the budget-adjusted
/// path.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSetup {
    pub topology: PonTopology,
    pub path_loss_db: f64,
    pub backscatter_db: f64,
}

/// Sets the VOA of `base` to the class budget at the instrument wavelength.
pub fn detection_setup(otdr: &OtdrSpec, base: &PonTopology, class: &BudgetClass) -> Result<DetectionSetup> {
    otdr.validate()?;
    let open = base.without_termination();
    let (_, topology) = set_voa_for_budget(&open, class, otdr.wavelength_nm)?;
    let profile = topology
        .last_fiber()
        .ok_or_else(|| PonError::Structural("topology has no fiber span to set the backscatter level".into()))?;
    let backscatter_db = backscatter_level(profile.backscatter_b0_at(otdr.wavelength_nm)?, otdr.operating_pulse_ns)?;
    Ok(DetectionSetup {
        path_loss_db: path_loss(&topology, otdr.wavelength_nm)?,
        topology,
        backscatter_db,
    })
}

/// Units whose reflection clears the detection threshold.
pub fn detectable_units<'a>(
    pop: &'a OntPopulation,
    otdr: &OtdrSpec,
    base: &PonTopology,
    class: &BudgetClass,
    margin_db: f64,
) -> Result<Vec<&'a OntRecord>> {
    let setup = detection_setup(otdr, base, class)?;
    let threshold = min_detectable_reflectance(otdr, setup.path_loss_db, setup.backscatter_db, margin_db)?;
    let mut out = Vec::new();
    for r in pop.records() {
        if -r.orl_at(otdr.wavelength_nm)? >= threshold {
            out.push(r);
        }
    }
    Ok(out)
}

pub fn coverage(
    pop: &OntPopulation,
    otdr: &OtdrSpec,
    base: &PonTopology,
    class: &BudgetClass,
    margin_db: f64,
) -> Result<CoverageRow> {
    let detectable = detectable_units(pop, otdr, base, class, margin_db)?.len();
    let total = pop.len();
    Ok(CoverageRow {
        wavelength_nm: otdr.wavelength_nm,
        budget_class: class.name.to_string(),
        margin_db,
        detectable,
        total,
        fraction: if total == 0 {
            0.0
        } else {
            detectable as f64 / total as f64
        },
    })
}

/// Every (instrument, class, margin) combination, in that nesting order.
pub fn coverage_sweep(
    pop: &OntPopulation,
    instruments: &[OtdrSpec],
    base: &PonTopology,
    classes: &[BudgetClass],
    margins: &[f64],
) -> CoverageReport {
    let mut report = CoverageReport::default();
    for otdr in instruments {
        for class in classes {
            for &margin in margins {
                match coverage(pop, otdr, base, class, margin) {
                    Ok(row) => report.rows.push(row),
                    Err(e) => report.diagnostics.push(format!(
                        "{} nm / {} / {} dB: {e}",
                        otdr.wavelength_nm, class.name, margin
                    )),
                }
            }
        }
    }
    report
}

/// Attaches a terminating ONT of the given ORL to the budget-adjusted path.
pub fn terminated(setup: &DetectionSetup, orl_db: f64) -> Result<PonTopology> {
    setup.topology.with_termination(PathElement::Ont { orl_db })
}
