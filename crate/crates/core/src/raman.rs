//! Stimulated Raman scattering between a co-propagating pump (shorter
//! wavelength) and signal.
//!
//! Powers in W, distance in km:
//!
//! ```text
//! dPs/dz = −αs·Ps + g·Pp·Ps
//! dPp/dz = −αp·Pp − (λs/λp)·g·Pp·Ps
//! ```
//!
//! The λs/λp factor conserves photon number and can be switched off.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PonError, Result};
use crate::optics::{db_per_km_to_neper, db_to_linear, effective_length};

/// 10·log10(e): dB per neper of power gain.
const DB_PER_NEPER: f64 = 10.0 * std::f64::consts::LOG10_E;

pub const DEFAULT_STEP_M: f64 = 10.0;
const MIN_STEP_M: f64 = 0.01;
const CONVERGENCE_DB: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RamanPair {
    /// 1383 nm OTDR pumping the 1490 nm GPON downstream.
    #[serde(rename = "GPON_1383_1490")]
    Gpon1383To1490,
    /// 1342 nm HSPON downstream pumping the 1383 nm OTDR.
    #[serde(rename = "HSPON_1342_1383")]
    Hspon1342To1383,
    #[serde(rename = "custom")]
    Custom { pump_nm: u32, signal_nm: u32 },
}

impl RamanPair {
    pub fn wavelengths_nm(&self) -> (f64, f64) {
        match self {
            RamanPair::Gpon1383To1490 => (1383.0, 1490.0),
            RamanPair::Hspon1342To1383 => (1342.0, 1383.0),
            RamanPair::Custom { pump_nm, signal_nm } => (f64::from(*pump_nm), f64::from(*signal_nm)),
        }
    }

    /// Default G.652.D attenuation (dB/km) as (pump, signal).
    pub fn default_attenuations(&self) -> Option<(f64, f64)> {
        match self {
            RamanPair::Gpon1383To1490 => Some((0.32, 0.24)),
            RamanPair::Hspon1342To1383 => Some((0.33, 0.32)),
            RamanPair::Custom { .. } => None,
        }
    }
}

impl FromStr for RamanPair {
    type Err = PonError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "GPON_1383_1490" => Ok(RamanPair::Gpon1383To1490),
            "HSPON_1342_1383" => Ok(RamanPair::Hspon1342To1383),
            other => Err(PonError::invalid(format!("unknown Raman pair '{other}'"))),
        }
    }
}

/// Raman gain coefficient in 1/(W·km).
pub fn gain_coefficient_for(pair: RamanPair) -> Result<f64> {
    match pair {
        RamanPair::Gpon1383To1490 => Ok(0.3),
        RamanPair::Hspon1342To1383 => Ok(0.17),
        RamanPair::Custom { pump_nm, signal_nm } => Err(PonError::invalid(format!(
            "no built-in gain coefficient for {pump_nm}/{signal_nm} nm; supply one explicitly"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanScenario {
    pub pump_wavelength_nm: f64,
    pub signal_wavelength_nm: f64,
    /// dBm; `-inf` means no pump.
    pub pump_power_in_dbm: f64,
    pub signal_power_in_dbm: f64,
    pub gain_coefficient: f64,
    pub pump_attenuation_db_km: f64,
    pub signal_attenuation_db_km: f64,
    pub length_km: f64,
    pub photon_term: bool,
    pub step_m: f64,
}

impl RamanScenario {
    /// Built-in pair over a G.652.D feeder with default attenuation and step.
    pub fn for_pair(pair: RamanPair, pump_dbm: f64, signal_dbm: f64, length_km: f64) -> Result<Self> {
        let (pump_nm, signal_nm) = pair.wavelengths_nm();
        let (ap, as_) = pair
            .default_attenuations()
            .ok_or_else(|| PonError::invalid("custom pairs need explicit attenuations"))?;
        Ok(Self {
            pump_wavelength_nm: pump_nm,
            signal_wavelength_nm: signal_nm,
            pump_power_in_dbm: pump_dbm,
            signal_power_in_dbm: signal_dbm,
            gain_coefficient: gain_coefficient_for(pair)?,
            pump_attenuation_db_km: ap,
            signal_attenuation_db_km: as_,
            length_km,
            photon_term: true,
            step_m: DEFAULT_STEP_M,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pump_wavelength_nm < self.signal_wavelength_nm) {
            return Err(PonError::invalid(
                "pump wavelength must be shorter than the signal wavelength",
            ));
        }
        if !(self.gain_coefficient >= 0.0) {
            return Err(PonError::invalid("Raman gain coefficient must be non-negative"));
        }
        if !(self.pump_attenuation_db_km >= 0.0 && self.signal_attenuation_db_km >= 0.0) {
            return Err(PonError::invalid("attenuation must be non-negative"));
        }
        if !(self.length_km > 0.0) {
            return Err(PonError::invalid("fiber length must be positive"));
        }
        if !(self.step_m > 0.0 && self.step_m <= self.length_km * 1000.0) {
            return Err(PonError::invalid("step must be positive and no longer than the fiber"));
        }
        if self.signal_power_in_dbm.is_nan() || self.pump_power_in_dbm.is_nan() {
            return Err(PonError::invalid("powers must not be NaN"));
        }
        Ok(())
    }

    fn with_step(&self, step_m: f64) -> Self {
        Self { step_m, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamanResult {
    pub signal_out_on_dbm: f64,
    pub signal_out_off_dbm: f64,
    pub pump_out_on_dbm: f64,
    pub pump_out_off_dbm: f64,
    pub on_off_gain_db: f64,
    pub pump_depletion_db: f64,
}

/// Coupled (pump, signal) powers in W after `length_km`.
///
/// Fixed-step classical RK4; the last step is shortened to land exactly on
/// the fiber end.
pub fn propagate(s: &RamanScenario, gain: f64, pump_w: f64, signal_w: f64) -> (f64, f64) {
    let ap = db_per_km_to_neper(s.pump_attenuation_db_km);
    let as_ = db_per_km_to_neper(s.signal_attenuation_db_km);
    let ratio = if s.photon_term {
        s.signal_wavelength_nm / s.pump_wavelength_nm
    } else {
        1.0
    };
    let rhs = |p: f64, q: f64| -> (f64, f64) {
        let transfer = gain * p * q;
        (-ap * p - ratio * transfer, -as_ * q + transfer)
    };

    let steps = (s.length_km * 1000.0 / s.step_m).ceil().max(1.0) as usize;
    let h = s.length_km / steps as f64;
    let (mut p, mut q) = (pump_w, signal_w);
    for _ in 0..steps {
        let k1 = rhs(p, q);
        let k2 = rhs(p + 0.5 * h * k1.0, q + 0.5 * h * k1.1);
        let k3 = rhs(p + 0.5 * h * k2.0, q + 0.5 * h * k2.1);
        let k4 = rhs(p + h * k3.0, q + h * k3.1);
        p += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        q += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (p, q)
}

fn dbm_to_w(dbm: f64) -> f64 {
    db_to_linear(dbm) * 1e-3
}

fn w_to_dbm(w: f64) -> f64 {
    if w > 0.0 {
        10.0 * (w * 1e3).log10()
    } else {
        f64::NEG_INFINITY
    }
}

fn ratio_db(num: f64, den: f64) -> f64 {
    if num == den {
        0.0
    } else {
        10.0 * (num / den).log10()
    }
}

fn integrate_at(s: &RamanScenario) -> RamanResult {
    let (pump, signal) = (dbm_to_w(s.pump_power_in_dbm), dbm_to_w(s.signal_power_in_dbm));
    let (p_on, q_on) = propagate(s, s.gain_coefficient, pump, signal);
    let (p_off, q_off) = propagate(s, 0.0, pump, signal);
    RamanResult {
        signal_out_on_dbm: w_to_dbm(q_on),
        signal_out_off_dbm: w_to_dbm(q_off),
        pump_out_on_dbm: w_to_dbm(p_on),
        pump_out_off_dbm: w_to_dbm(p_off),
        on_off_gain_db: ratio_db(q_on, q_off),
        pump_depletion_db: ratio_db(p_off, p_on),
    }
}

/// Integrates the scenario, halving the step until the on-off gain and pump
/// depletion move by less than 1e-6 dB.
pub fn integrate(scenario: &RamanScenario) -> Result<RamanResult> {
    scenario.validate()?;
    let mut step = scenario.step_m;
    let mut coarse = integrate_at(scenario);
    loop {
        let half = step / 2.0;
        let fine = integrate_at(&scenario.with_step(half));
        let moved = (fine.on_off_gain_db - coarse.on_off_gain_db)
            .abs()
            .max((fine.pump_depletion_db - coarse.pump_depletion_db).abs());
        if moved < CONVERGENCE_DB {
            return Ok(fine);
        }
        if half < MIN_STEP_M {
            return Err(PonError::Numerical(format!(
                "Raman integration did not converge (change {moved:.3e} dB at {half} m step)"
            )));
        }
        step = half;
        coarse = fine;
    }
}

/// Undepleted-pump on-off gain: 10·log10(e)·g·Pp·Leff(αp, L).
pub fn analytic_onoff_gain(scenario: &RamanScenario) -> Result<f64> {
    scenario.validate()?;
    let leff = effective_length(scenario.pump_attenuation_db_km, scenario.length_km)?;
    Ok(DB_PER_NEPER * scenario.gain_coefficient * dbm_to_w(scenario.pump_power_in_dbm) * leff)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub pump_dbm: f64,
    pub signal_dbm: f64,
    pub result: RamanResult,
}

/// Pump-major grid over the given launch powers.
pub fn sweep_powers(base: &RamanScenario, pump_powers: &[f64], signal_powers: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(pump_powers.len() * signal_powers.len());
    for &pump_dbm in pump_powers {
        for &signal_dbm in signal_powers {
            let s = RamanScenario {
                pump_power_in_dbm: pump_dbm,
                signal_power_in_dbm: signal_dbm,
                ..base.clone()
            };
            rows.push(SweepRow {
                pump_dbm,
                signal_dbm,
                result: integrate(&s)?,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "pump_dbm",
        "signal_dbm",
        "on_off_gain_db",
        "pump_depletion_db",
        "signal_out_on_dbm",
        "pump_out_on_dbm",
    ])?;
    for r in rows {
        w.write_record([
            r.pump_dbm.to_string(),
            r.signal_dbm.to_string(),
            format!("{:.9}", r.result.on_off_gain_db),
            format!("{:.9}", r.result.pump_depletion_db),
            format!("{:.9}", r.result.signal_out_on_dbm),
            format!("{:.9}", r.result.pump_out_on_dbm),
        ])?;
    }
    w.flush()?;
    Ok(())
}
