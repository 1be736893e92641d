//! The monitored optical path: headend → feeder → splitter → VOA → ONT.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PonError, Result};
use crate::optics::{bend_loss, span_loss, BendSpec, FiberProfile, SpectralTable};

/// 1×N passive power splitter.
#[derive(Debug, Clone, PartialEq)]
pub struct Splitter {
    ports: u32,
    excess: SpectralTable,
    uniformity_db: f64,
}

impl Splitter {
    pub fn new(ports: u32, excess_points: Vec<(f64, f64)>, uniformity_db: f64) -> Result<Self> {
        if !(2..=128).contains(&ports) || !ports.is_power_of_two() {
            return Err(PonError::invalid(format!(
                "splitter port count must be a power of two in 2..=128, got {ports}"
            )));
        }
        if !(uniformity_db >= 0.0) {
            return Err(PonError::invalid("splitter uniformity must be non-negative"));
        }
        let excess = SpectralTable::new(excess_points)?;
        if excess.points().iter().any(|(_, e)| *e < 0.0) {
            return Err(PonError::invalid("splitter excess loss must be non-negative"));
        }
        Ok(Self {
            ports,
            excess,
            uniformity_db,
        })
    }

    /// Builds a splitter from measured mean total insertion loss per wavelength.
    pub fn from_total_loss(ports: u32, total_points: Vec<(f64, f64)>, uniformity_db: f64) -> Result<Self> {
        let ideal = ideal_split_loss(ports);
        let excess = total_points.into_iter().map(|(w, t)| (w, t - ideal)).collect();
        Self::new(ports, excess, uniformity_db)
    }

    /// 32-way PLC splitter: 15.76 dB mean at 1383 nm (0.69 dB uniformity),
    /// 16.13 dB at 1650 nm.
    pub fn plc_1x32() -> Self {
        Self::from_total_loss(32, vec![(1383.0, 15.76), (1650.0, 16.13)], 0.69).expect("static splitter")
    }

    pub fn ideal(ports: u32) -> Result<Self> {
        Self::new(ports, vec![(0.0, 0.0), (10_000.0, 0.0)], 0.0)
    }

    pub fn ports(&self) -> u32 {
        self.ports
    }

    pub fn uniformity_db(&self) -> f64 {
        self.uniformity_db
    }

    pub fn excess_table(&self) -> &SpectralTable {
        &self.excess
    }

    /// Per-port insertion loss, spread uniformly over ±uniformity/2 around
    /// the mean. Deterministic per seed.
    pub fn port_losses(&self, wavelength_nm: f64, seed: u64) -> Result<Vec<f64>> {
        let mean = splitter_loss(self, wavelength_nm)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..self.ports)
            .map(|_| mean + self.uniformity_db * (rng.random::<f64>() - 0.5))
            .collect())
    }
}

pub fn ideal_split_loss(ports: u32) -> f64 {
    10.0 * f64::from(ports).log10()
}

pub fn splitter_loss(splitter: &Splitter, wavelength_nm: f64) -> Result<f64> {
    let excess = splitter.excess.linear(wavelength_nm, "splitter wavelength")?;
    Ok(ideal_split_loss(splitter.ports) + excess)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathElement {
    FiberSpan { profile: FiberProfile, length_km: f64 },
    Splitter(Splitter),
    Bend(BendSpec),
    Connector { loss_db: f64 },
    Voa { setting_db: f64 },
    Vbr { reflectance_db: f64 },
    Ont { orl_db: f64 },
}

impl PathElement {
    pub fn fiber(profile: FiberProfile, length_km: f64) -> Self {
        PathElement::FiberSpan { profile, length_km }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            PathElement::FiberSpan { length_km, .. } => *length_km >= 0.0,
            PathElement::Connector { loss_db } => *loss_db >= 0.0,
            PathElement::Voa { setting_db } => *setting_db >= 0.0,
            PathElement::Vbr { reflectance_db } => *reflectance_db <= 0.0,
            PathElement::Ont { orl_db } => *orl_db >= 0.0,
            PathElement::Splitter(_) | PathElement::Bend(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(PonError::invalid(format!(
                "{} has an out-of-domain parameter",
                self.kind()
            )))
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PathElement::FiberSpan { .. } => "fiber",
            PathElement::Splitter(_) => "splitter",
            PathElement::Bend(_) => "bend",
            PathElement::Connector { .. } => "connector",
            PathElement::Voa { .. } => "voa",
            PathElement::Vbr { .. } => "vbr",
            PathElement::Ont { .. } => "ont",
        }
    }

    pub fn is_reflector(&self) -> bool {
        matches!(self, PathElement::Vbr { .. } | PathElement::Ont { .. })
    }

    /// Reflectance in dB (≤ 0) for terminating reflectors.
    pub fn reflectance_db(&self) -> Option<f64> {
        match self {
            PathElement::Vbr { reflectance_db } => Some(*reflectance_db),
            PathElement::Ont { orl_db } => Some(-orl_db),
            _ => None,
        }
    }

    pub fn length_km(&self) -> f64 {
        match self {
            PathElement::FiberSpan { length_km, .. } => *length_km,
            _ => 0.0,
        }
    }

    /// One-way loss in dB. Reflectors contribute nothing.
    pub fn loss_at(&self, wavelength_nm: f64) -> Result<f64> {
        match self {
            PathElement::FiberSpan { profile, length_km } => span_loss(profile, *length_km, wavelength_nm),
            PathElement::Splitter(s) => splitter_loss(s, wavelength_nm),
            PathElement::Bend(b) => bend_loss(b, wavelength_nm),
            PathElement::Connector { loss_db } => Ok(*loss_db),
            PathElement::Voa { setting_db } => Ok(*setting_db),
            PathElement::Vbr { .. } | PathElement::Ont { .. } => Ok(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PonTopology {
    name: String,
    elements: Vec<PathElement>,
}

impl PonTopology {
    pub fn new(name: impl Into<String>, elements: Vec<PathElement>) -> Result<Self> {
        for (i, e) in elements.iter().enumerate() {
            e.validate().map_err(|err| err.at_element(i))?;
            if e.is_reflector() && i + 1 != elements.len() {
                return Err(PonError::Structural(format!(
                    "reflector at element {i} must terminate the path"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            elements,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            elements: Vec::new(),
        }
    }

    /// 20 km feeder, 32-way splitter and a VOA at 0 dB, unterminated.
    pub fn reference(feeder_km: f64) -> Self {
        Self::new(
            "reference",
            vec![
                PathElement::fiber(FiberProfile::g652d(), feeder_km),
                PathElement::Splitter(Splitter::plc_1x32()),
                PathElement::Voa { setting_db: 0.0 },
            ],
        )
        .expect("static topology")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn elements(&self) -> &[PathElement] {
        &self.elements
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn termination(&self) -> Option<&PathElement> {
        self.elements.last().filter(|e| e.is_reflector())
    }

    pub fn total_length_km(&self) -> f64 {
        self.elements.iter().map(PathElement::length_km).sum()
    }

    /// The same path with its terminating reflector replaced (or added).
    pub fn with_termination(&self, reflector: PathElement) -> Result<Self> {
        if !reflector.is_reflector() {
            return Err(PonError::Structural(format!(
                "{} cannot terminate a path",
                reflector.kind()
            )));
        }
        let mut elements = self.without_termination().elements;
        elements.push(reflector);
        Self::new(self.name.clone(), elements)
    }

    pub fn without_termination(&self) -> Self {
        let mut elements = self.elements.clone();
        if elements.last().is_some_and(PathElement::is_reflector) {
            elements.pop();
        }
        Self {
            name: self.name.clone(),
            elements,
        }
    }

    /// Appends `other` after this path.
    pub fn concat(&self, other: &PonTopology) -> Result<Self> {
        let mut elements = self.elements.clone();
        elements.extend(other.elements.iter().cloned());
        Self::new(format!("{}+{}", self.name, other.name), elements)
    }

    /// Profile of the last fiber span, which sets the backscatter level seen
    /// around the termination.
    pub fn last_fiber(&self) -> Option<&FiberProfile> {
        self.elements.iter().rev().find_map(|e| match e {
            PathElement::FiberSpan { profile, .. } => Some(profile),
            _ => None,
        })
    }

    pub fn first_splitter_index(&self) -> Option<usize> {
        self.elements.iter().position(|e| matches!(e, PathElement::Splitter(_)))
    }

    /// Loss of elements `[0, end)`.
    pub fn prefix_loss(&self, end: usize, wavelength_nm: f64) -> Result<f64> {
        self.elements[..end].iter().enumerate().try_fold(0.0, |acc, (i, e)| {
            Ok(acc + e.loss_at(wavelength_nm).map_err(|err| err.at_element(i))?)
        })
    }

    fn voa_index(&self) -> Result<usize> {
        let mut voas = self
            .elements
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, PathElement::Voa { .. }))
            .map(|(i, _)| i);
        match (voas.next(), voas.next()) {
            (Some(i), None) => Ok(i),
            (None, _) => Err(PonError::Structural("topology has no VOA".into())),
            (Some(_), Some(_)) => Err(PonError::Structural("topology has more than one VOA".into())),
        }
    }
}

pub fn path_loss(topology: &PonTopology, wavelength_nm: f64) -> Result<f64> {
    topology.prefix_loss(topology.elements.len(), wavelength_nm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BudgetClassName {
    #[serde(rename = "B+")]
    Bplus,
    #[serde(rename = "C+")]
    Cplus,
    #[serde(rename = "D")]
    D,
}

impl BudgetClassName {
    pub const ALL: [BudgetClassName; 3] = [BudgetClassName::Bplus, BudgetClassName::Cplus, BudgetClassName::D];

    pub fn as_str(&self) -> &'static str {
        match self {
            BudgetClassName::Bplus => "B+",
            BudgetClassName::Cplus => "C+",
            BudgetClassName::D => "D",
        }
    }
}

impl fmt::Display for BudgetClassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BudgetClassName {
    type Err = PonError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B+" | "Bplus" => Ok(BudgetClassName::Bplus),
            "C+" | "Cplus" => Ok(BudgetClassName::Cplus),
            "D" => Ok(BudgetClassName::D),
            other => Err(PonError::invalid(format!(
                "unknown budget class '{other}' (expected B+, C+ or D)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetClass {
    pub name: BudgetClassName,
    pub max_odn_loss_db: f64,
}

/// Maximum ODN loss per class (B+ and C+ per G.984.2; D = 35 dB).
pub fn budget_of(name: BudgetClassName) -> BudgetClass {
    let max_odn_loss_db = match name {
        BudgetClassName::Bplus => 28.0,
        BudgetClassName::Cplus => 32.0,
        BudgetClassName::D => 35.0,
    };
    BudgetClass { name, max_odn_loss_db }
}

/// Sets the single VOA so the path loss equals the class budget.
///
/// Returns the VOA setting and the adjusted topology.
pub fn set_voa_for_budget(
    topology: &PonTopology,
    class: &BudgetClass,
    wavelength_nm: f64,
) -> Result<(f64, PonTopology)> {
    let voa = topology.voa_index()?;
    let mut zeroed = topology.clone();
    zeroed.elements[voa] = PathElement::Voa { setting_db: 0.0 };
    let base = path_loss(&zeroed, wavelength_nm)?;
    if base > class.max_odn_loss_db {
        return Err(PonError::Infeasible {
            budget: class.name.to_string(),
            max_loss: class.max_odn_loss_db,
            base_loss: base,
            shortfall: base - class.max_odn_loss_db,
        });
    }
    let setting = class.max_odn_loss_db - base;
    zeroed.elements[voa] = PathElement::Voa { setting_db: setting };
    Ok((setting, zeroed))
}
