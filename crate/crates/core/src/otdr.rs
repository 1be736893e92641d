//! OTDR instrument model: dynamic range, backscatter, reflective peaks,
//! trace synthesis and event detection.
//!
//! Traces use the one-way display convention: the trace starts at 0 dB,
//! every element loss appears once, and a reflector of reflectance `R` rises
//! `δ = 5·log10(1 + 10^((R − B)/10))` above the local backscatter, where `B`
//! is the backscatter level for the operating pulse.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PonError, Result};
use crate::topology::{PathElement, PonTopology};

const LOG10_E: f64 = std::f64::consts::LOG10_E;
const LN10: f64 = std::f64::consts::LN_10;

/// Group index used to convert pulse width to spatial extent.
pub const GROUP_INDEX: f64 = 1.468;
const SPEED_OF_LIGHT_M_PER_NS: f64 = 0.299_792_458;

/// Floor-level samples appended after the end of the path.
const TAIL_M: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtdrSpec {
    pub wavelength_nm: f64,
    pub dr_datasheet_db: f64,
    pub datasheet_pulse_ns: f64,
    pub datasheet_averaging_s: f64,
    pub operating_pulse_ns: f64,
    pub operating_averaging_s: f64,
    #[serde(default)]
    pub dr_effective_override_db: Option<f64>,
    pub sample_spacing_m: f64,
}

impl OtdrSpec {
    /// Datasheet DR quoted at 20 µs / 180 s, operated at 30 ns / 180 s.
    pub fn with_datasheet(wavelength_nm: f64, dr_datasheet_db: f64) -> Self {
        Self {
            wavelength_nm,
            dr_datasheet_db,
            datasheet_pulse_ns: 20_000.0,
            datasheet_averaging_s: 180.0,
            operating_pulse_ns: 30.0,
            operating_averaging_s: 180.0,
            dr_effective_override_db: None,
            sample_spacing_m: 1.0,
        }
    }

    /// 1383 nm instrument, 37 dB datasheet DR.
    pub fn water_peak_1383() -> Self {
        Self::with_datasheet(1383.0, 37.0)
    }

    /// 1650 nm PON-monitoring instrument, 46 dB datasheet DR.
    pub fn u_band_1650() -> Self {
        Self::with_datasheet(1650.0, 46.0)
    }

    pub fn with_override(mut self, dr_eff_db: f64) -> Self {
        self.dr_effective_override_db = Some(dr_eff_db);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength_nm),
            ("datasheet dynamic range", self.dr_datasheet_db),
            ("datasheet pulse", self.datasheet_pulse_ns),
            ("datasheet averaging", self.datasheet_averaging_s),
            ("operating pulse", self.operating_pulse_ns),
            ("operating averaging", self.operating_averaging_s),
            ("sample spacing", self.sample_spacing_m),
        ];
        for (what, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PonError::invalid(format!("OTDR {what} must be positive, got {v}")));
            }
        }
        if let Some(dr) = self.dr_effective_override_db {
            if !(dr > 0.0) {
                return Err(PonError::invalid(format!(
                    "effective dynamic range override must be positive, got {dr}"
                )));
            }
        }
        Ok(())
    }

    /// Spatial extent of the operating pulse in metres.
    pub fn pulse_extent_m(&self) -> f64 {
        self.operating_pulse_ns * SPEED_OF_LIGHT_M_PER_NS / (2.0 * GROUP_INDEX)
    }
}

/// Dynamic range at the operating pulse and averaging time.
pub fn effective_dynamic_range(spec: &OtdrSpec) -> f64 {
    if let Some(dr) = spec.dr_effective_override_db {
        return dr;
    }
    spec.dr_datasheet_db
        + 5.0 * (spec.operating_pulse_ns / spec.datasheet_pulse_ns).log10()
        + 2.5 * (spec.operating_averaging_s / spec.datasheet_averaging_s).log10()
}

/// Backscatter level for a pulse of `pulse_ns`, given the 1 ns capture level.
pub fn backscatter_level(b0_db: f64, pulse_ns: f64) -> Result<f64> {
    if !(pulse_ns > 0.0) {
        return Err(PonError::invalid(format!(
            "pulse width must be positive, got {pulse_ns} ns"
        )));
    }
    Ok(b0_db + 10.0 * pulse_ns.log10())
}

pub fn peak_height_from_reflectance(reflectance_db: f64, backscatter_db: f64) -> f64 {
    let ratio = 10f64.powf((reflectance_db - backscatter_db) / 10.0);
    5.0 * LOG10_E * ratio.ln_1p()
}

pub fn reflectance_from_peak_height(height_db: f64, backscatter_db: f64) -> Result<f64> {
    if !(height_db > 0.0) {
        return Err(PonError::invalid(format!(
            "peak height must be positive, got {height_db} dB"
        )));
    }
    Ok(backscatter_db + 10.0 * LOG10_E * (height_db * LN10 / 5.0).exp_m1().ln())
}

/// Smallest reflectance that produces a peak `margin_db` above the noise floor
/// and `margin_db` above the local backscatter.
///
/// With the baseline buried in the floor the peak must climb
/// `path_loss − DR_eff + margin`; once backscatter is visible the peak only
/// has to stand `margin` above it.
pub fn min_detectable_reflectance(
    otdr: &OtdrSpec,
    path_loss_db: f64,
    backscatter_db: f64,
    margin_db: f64,
) -> Result<f64> {
    if !(margin_db > 0.0) {
        return Err(PonError::invalid(format!(
            "margin must be positive, got {margin_db} dB"
        )));
    }
    let required = required_peak_height(effective_dynamic_range(otdr), path_loss_db, margin_db);
    reflectance_from_peak_height(required, backscatter_db)
}

fn required_peak_height(dr_eff_db: f64, path_loss_db: f64, margin_db: f64) -> f64 {
    (path_loss_db - dr_eff_db + margin_db).max(margin_db)
}

/// One bench reading: the weakest reflection seen at a given path loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationObservation {
    pub path_loss_db: f64,
    pub min_reflectance_db: f64,
    pub margin_db: f64,
}

/// Least-squares fit of the effective dynamic range to sensitivity readings.
pub fn calibrate_effective_dr(observations: &[CalibrationObservation], backscatter_db: f64) -> Result<f64> {
    if observations.is_empty() {
        return Err(PonError::invalid("calibration needs at least one observation"));
    }
    // direct inversion of each informative reading gives the starting point
    let inverted: Vec<f64> = observations
        .iter()
        .filter_map(|o| {
            let height = peak_height_from_reflectance(o.min_reflectance_db, backscatter_db);
            (height > o.margin_db).then_some(o.path_loss_db + o.margin_db - height)
        })
        .collect();
    if inverted.is_empty() {
        return Err(PonError::Numerical(
            "no observation lies in the floor-limited regime; dynamic range is not identifiable".into(),
        ));
    }
    let mut dr = inverted.iter().sum::<f64>() / inverted.len() as f64;

    let residuals = |dr: f64| -> Result<(f64, f64, f64)> {
        // (sse, Σ J·r, Σ J²)
        let mut acc = (0.0, 0.0, 0.0);
        for o in observations {
            let height = required_peak_height(dr, o.path_loss_db, o.margin_db);
            let r = reflectance_from_peak_height(height, backscatter_db)? - o.min_reflectance_db;
            let j = if o.path_loss_db - dr > 0.0 {
                let x = 10f64.powf(height / 5.0);
                -2.0 * x / (x - 1.0)
            } else {
                0.0
            };
            acc.0 += r * r;
            acc.1 += j * r;
            acc.2 += j * j;
        }
        Ok(acc)
    };

    for _ in 0..200 {
        let (sse, jr, jj) = residuals(dr)?;
        if jj == 0.0 {
            break;
        }
        let mut step = -jr / jj;
        let mut improved = false;
        for _ in 0..60 {
            if residuals(dr + step)?.0 <= sse {
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
        dr += step;
        if step.abs() < 1e-13 {
            break;
        }
    }
    Ok(dr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceNoise {
    None,
    /// Zero-mean Gaussian jitter in dB, applied before clamping to the floor.
    Jitter {
        sigma_db: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    spacing_m: f64,
    levels: Vec<f64>,
    noise_floor_db: f64,
    wavelength_nm: f64,
    pulse_ns: f64,
    dr_eff_db: f64,
    backscatter_db: Option<f64>,
    seed: u64,
    noise_sigma_db: f64,
}

impl Trace {
    pub fn spacing_m(&self) -> f64 {
        self.spacing_m
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn distance_m(&self, index: usize) -> f64 {
        index as f64 * self.spacing_m
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.levels.iter().enumerate().map(|(i, l)| (self.distance_m(i), *l))
    }

    pub fn noise_floor_db(&self) -> f64 {
        self.noise_floor_db
    }

    pub fn wavelength_nm(&self) -> f64 {
        self.wavelength_nm
    }

    pub fn pulse_ns(&self) -> f64 {
        self.pulse_ns
    }

    pub fn dr_eff_db(&self) -> f64 {
        self.dr_eff_db
    }

    pub fn backscatter_db(&self) -> Option<f64> {
        self.backscatter_db
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_sigma_db(&self) -> f64 {
        self.noise_sigma_db
    }

    pub fn metadata(&self) -> TraceMetadata {
        TraceMetadata {
            wavelength_nm: self.wavelength_nm,
            pulse_ns: self.pulse_ns,
            dr_eff_db: self.dr_eff_db,
            seed: self.seed,
            noise_sigma_db: self.noise_sigma_db,
            noise_floor_db: self.noise_floor_db,
            sample_spacing_m: self.spacing_m,
            backscatter_db: self.backscatter_db,
            samples: self.levels.len(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["distance_m", "level_db"])?;
        for (d, l) in self.samples() {
            w.write_record([d.to_string(), l.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// JSON sidecar written next to an exported trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub wavelength_nm: f64,
    pub pulse_ns: f64,
    pub dr_eff_db: f64,
    pub seed: u64,
    pub noise_sigma_db: f64,
    pub noise_floor_db: f64,
    pub sample_spacing_m: f64,
    pub backscatter_db: Option<f64>,
    pub samples: usize,
}

// Level function breakpoint: from `pos_m` on, level = level_db + slope·(d − pos_m).
struct Breakpoint {
    pos_m: f64,
    level_db: f64,
    slope_db_per_m: f64,
}

/// Synthesizes a one-way-display trace of `topology` as seen by `otdr`.
///
/// The sample at a reflector's position shows the arriving backscatter; the
/// reflective peak occupies the following pulse-width worth of samples.
/// Beyond the end of the path the trace sits at the noise floor.
pub fn synthesize_trace(topology: &PonTopology, otdr: &OtdrSpec, noise: TraceNoise) -> Result<Trace> {
    otdr.validate()?;
    let wavelength = otdr.wavelength_nm;
    let dr_eff = effective_dynamic_range(otdr);
    let floor = -dr_eff;
    let spacing = otdr.sample_spacing_m;
    let (seed, sigma) = match noise {
        TraceNoise::None => (0, 0.0),
        TraceNoise::Jitter { sigma_db, seed } => {
            if !(sigma_db >= 0.0) {
                return Err(PonError::invalid("noise sigma must be non-negative"));
            }
            (seed, sigma_db)
        }
    };
    let backscatter = match topology.last_fiber() {
        Some(p) => Some(backscatter_level(
            p.backscatter_b0_at(wavelength)?,
            otdr.operating_pulse_ns,
        )?),
        None => None,
    };

    let mut trace = Trace {
        spacing_m: spacing,
        levels: Vec::new(),
        noise_floor_db: floor,
        wavelength_nm: wavelength,
        pulse_ns: otdr.operating_pulse_ns,
        dr_eff_db: dr_eff,
        backscatter_db: backscatter,
        seed,
        noise_sigma_db: sigma,
    };
    if topology.is_empty() {
        trace.levels = vec![0.0f64.max(floor); 2];
        return Ok(trace);
    }

    let mut breakpoints = vec![Breakpoint {
        pos_m: 0.0,
        level_db: 0.0,
        slope_db_per_m: 0.0,
    }];
    let mut pos = 0.0;
    let mut level = 0.0;
    let mut reflection = None;
    for (i, element) in topology.elements().iter().enumerate() {
        let loss = element.loss_at(wavelength).map_err(|e| e.at_element(i))?;
        match element {
            PathElement::FiberSpan { length_km, .. } => {
                let len_m = length_km * 1000.0;
                if len_m > 0.0 {
                    breakpoints.push(Breakpoint {
                        pos_m: pos,
                        level_db: level,
                        slope_db_per_m: -loss / len_m,
                    });
                    pos += len_m;
                    level -= loss;
                    breakpoints.push(Breakpoint {
                        pos_m: pos,
                        level_db: level,
                        slope_db_per_m: 0.0,
                    });
                }
            }
            PathElement::Vbr { .. } | PathElement::Ont { .. } => {
                let bs = backscatter.ok_or_else(|| {
                    PonError::Structural("a reflector needs a preceding fiber span to set the backscatter level".into())
                })?;
                let r = element.reflectance_db().expect("reflector");
                reflection = Some((pos, level, peak_height_from_reflectance(r, bs)));
            }
            _ => {
                level -= loss;
                breakpoints.push(Breakpoint {
                    pos_m: pos,
                    level_db: level,
                    slope_db_per_m: 0.0,
                });
            }
        }
    }

    let first_at_or_after = |d: f64| (d / spacing).ceil() as usize;
    let end_index = first_at_or_after(pos);
    let peak = reflection.map(|(_, base, height)| {
        let width = ((otdr.pulse_extent_m() / spacing).round() as usize).max(1);
        (end_index + 1, width, base + height)
    });
    let path_end = match peak {
        Some((start, width, _)) => start + width,
        None => end_index + 1,
    };
    let total = path_end + ((TAIL_M / spacing).ceil() as usize).max(2);

    let mut raw = Vec::with_capacity(total);
    let mut bp = 0;
    for i in 0..total {
        let d = i as f64 * spacing;
        let value = match peak {
            Some((start, width, top)) if (start..start + width).contains(&i) => top,
            _ if i >= path_end => f64::NEG_INFINITY,
            _ => {
                while bp + 1 < breakpoints.len() && breakpoints[bp + 1].pos_m <= d {
                    bp += 1;
                }
                let b = &breakpoints[bp];
                b.level_db + b.slope_db_per_m * (d - b.pos_m)
            }
        };
        raw.push(value);
    }

    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| PonError::invalid(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in raw.iter_mut() {
            // draw for every sample so the stream does not depend on levels
            let jitter = normal.sample(&mut rng);
            if v.is_finite() {
                *v += jitter;
            }
        }
    }
    trace.levels = raw.into_iter().map(|v| v.max(floor)).collect();
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectiveEvent {
    pub distance_m: f64,
    pub peak_height_above_floor_db: f64,
    /// Only inferred where the backscatter before the peak clears the floor.
    pub inferred_reflectance_db: Option<f64>,
}

/// Finds reflective peaks standing at least `margin_db` above both the noise
/// floor and the sample preceding them. Flat-topped peaks count once, at
/// their leading edge.
pub fn detect_events(trace: &Trace, margin_db: f64) -> Result<Vec<ReflectiveEvent>> {
    if !(margin_db > 0.0) {
        return Err(PonError::invalid(format!(
            "margin must be positive, got {margin_db} dB"
        )));
    }
    let levels = &trace.levels;
    let floor = trace.noise_floor_db;
    let mut events = Vec::new();
    let mut i = 1;
    while i + 1 < levels.len() {
        if levels[i] <= levels[i - 1] {
            i += 1;
            continue;
        }
        let top = levels[i];
        let mut j = i;
        while j + 1 < levels.len() && levels[j + 1] == top {
            j += 1;
        }
        if j + 1 >= levels.len() {
            break;
        }
        if levels[j + 1] < top {
            let before = levels[i - 1];
            let rise = top - before;
            if top - floor >= margin_db && rise >= margin_db {
                let inferred = match trace.backscatter_db {
                    Some(bs) if before > floor => Some(reflectance_from_peak_height(rise, bs)?.min(0.0)),
                    _ => None,
                };
                events.push(ReflectiveEvent {
                    distance_m: trace.distance_m(i),
                    peak_height_above_floor_db: top - floor,
                    inferred_reflectance_db: inferred,
                });
            }
        }
        i = j + 1;
    }
    Ok(events)
}

pub fn write_events_csv<W: Write>(events: &[ReflectiveEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["distance_m", "height_db", "reflectance_db"])?;
    for e in events {
        w.write_record([
            e.distance_m.to_string(),
            e.peak_height_above_floor_db.to_string(),
            e.inferred_reflectance_db.map(|r| r.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::FiberProfile;
    use crate::topology::{budget_of, set_voa_for_budget, BudgetClassName};
    use approx::assert_abs_diff_eq;

    const B1383: f64 = -64.228_787_452_803_38; // -79 + 10·log10(30)

    fn cplus_trace(orl: f64, noise: TraceNoise) -> Trace {
        let base = PonTopology::reference(20.0);
        let (_, t) = set_voa_for_budget(&base, &budget_of(BudgetClassName::Cplus), 1383.0).unwrap();
        let t = t.with_termination(PathElement::Ont { orl_db: orl }).unwrap();
        synthesize_trace(&t, &OtdrSpec::water_peak_1383(), noise).unwrap()
    }

    #[test]
    fn derating() {
        assert_abs_diff_eq!(
            effective_dynamic_range(&OtdrSpec::water_peak_1383()),
            22.88,
            epsilon = 0.01
        );
        let mut same = OtdrSpec::water_peak_1383();
        same.operating_pulse_ns = same.datasheet_pulse_ns;
        assert_abs_diff_eq!(effective_dynamic_range(&same), 37.0, epsilon = 1e-12);
        assert_eq!(
            effective_dynamic_range(&OtdrSpec::water_peak_1383().with_override(25.0)),
            25.0
        );
        assert!(
            effective_dynamic_range(&OtdrSpec::u_band_1650()) > effective_dynamic_range(&OtdrSpec::water_peak_1383())
        );
    }

    #[test]
    fn averaging_term() {
        let mut s = OtdrSpec::water_peak_1383();
        s.operating_averaging_s = 18.0;
        assert_abs_diff_eq!(
            effective_dynamic_range(&s),
            effective_dynamic_range(&OtdrSpec::water_peak_1383()) - 2.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn spec_validation() {
        let mut s = OtdrSpec::water_peak_1383();
        s.sample_spacing_m = 0.0;
        assert!(s.validate().is_err());
        assert!(OtdrSpec::water_peak_1383().with_override(-1.0).validate().is_err());
    }

    #[test]
    fn backscatter_examples() {
        assert_eq!(backscatter_level(-79.0, 1.0).unwrap(), -79.0);
        assert_abs_diff_eq!(backscatter_level(-79.0, 30.0).unwrap(), -64.23, epsilon = 0.01);
        assert_abs_diff_eq!(backscatter_level(-82.0, 30.0).unwrap(), -67.23, epsilon = 0.01);
        assert!(backscatter_level(-79.0, 0.0).is_err());
    }

    #[test]
    fn peak_height_examples() {
        assert_abs_diff_eq!(peak_height_from_reflectance(-60.0, -60.0), 1.5051, epsilon = 0.001);
        assert_abs_diff_eq!(peak_height_from_reflectance(-32.0, -64.23), 16.12, epsilon = 0.02);
        assert!(peak_height_from_reflectance(-200.0, -64.23) < 1e-6);
        assert_abs_diff_eq!(
            reflectance_from_peak_height(5.0 * 2f64.log10(), -64.0).unwrap(),
            -64.0,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            reflectance_from_peak_height(16.12, -64.23).unwrap(),
            -32.0,
            epsilon = 0.05
        );
        assert!(reflectance_from_peak_height(0.0, -64.0).is_err());
    }

    #[test]
    fn min_detectable_examples() {
        let otdr = OtdrSpec::water_peak_1383().with_override(22.88);
        let c = min_detectable_reflectance(&otdr, 32.0, -64.23, 1.0).unwrap();
        assert_abs_diff_eq!(c, -44.0, epsilon = 0.1);
        let d = min_detectable_reflectance(&otdr, 35.0, -64.23, 1.0).unwrap();
        assert_abs_diff_eq!(d, -38.0, epsilon = 0.2);
        let boundary = min_detectable_reflectance(&otdr, 22.88 - 1.0, -64.23, 1.0).unwrap();
        assert_abs_diff_eq!(
            boundary,
            reflectance_from_peak_height(1.0, -64.23).unwrap(),
            epsilon = 1e-12
        );
        // fully visible backscatter keeps the margin-height requirement
        let easy = min_detectable_reflectance(&otdr, 10.0, -64.23, 1.0).unwrap();
        assert_abs_diff_eq!(easy, boundary, epsilon = 1e-12);
        assert!(min_detectable_reflectance(&otdr, 32.0, -64.23, 0.0).is_err());
    }

    #[test]
    fn empty_topology_trace() {
        let t = synthesize_trace(&PonTopology::empty("e"), &OtdrSpec::water_peak_1383(), TraceNoise::None).unwrap();
        assert_eq!(t.levels(), &[0.0, 0.0]);
        assert_abs_diff_eq!(t.noise_floor_db(), -22.88, epsilon = 0.01);
        assert!(detect_events(&t, 1.0).unwrap().is_empty());
    }

    #[test]
    fn cplus_ont_peak_clears_floor_by_seven_db() {
        let t = cplus_trace(32.0, TraceNoise::None);
        let peak = t.levels().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // the trace starts at 0 dB, so look past the feeder
        let top = t.levels()[20_002];
        assert_abs_diff_eq!(top, -32.0 + peak_height_from_reflectance(-32.0, B1383), epsilon = 1e-9);
        assert_abs_diff_eq!(top - t.noise_floor_db(), 7.00, epsilon = 0.05);
        assert_eq!(peak, 0.0);
        let events = detect_events(&t, 1.0).unwrap();
        assert_eq!(events.len(), 1);
        assert_abs_diff_eq!(events[0].distance_m, 20_001.0, epsilon = 1e-9);
        assert_eq!(events[0].inferred_reflectance_db, None);
        assert!(detect_events(&t, 8.0).unwrap().is_empty());
    }

    #[test]
    fn baseline_slope_matches_attenuation() {
        let t = cplus_trace(32.0, TraceNoise::None);
        let slope_db_per_km = (t.levels()[5000] - t.levels()[15000]) / 10.0;
        assert_abs_diff_eq!(slope_db_per_km, 0.32, epsilon = 1e-9);
        assert!(t.levels().iter().all(|l| *l >= t.noise_floor_db()));
    }

    #[test]
    fn inferred_reflectance_when_backscatter_visible() {
        let t = PonTopology::new(
            "short",
            vec![
                PathElement::fiber(FiberProfile::g652d(), 2.0),
                PathElement::Vbr { reflectance_db: -45.0 },
            ],
        )
        .unwrap();
        let trace = synthesize_trace(&t, &OtdrSpec::water_peak_1383(), TraceNoise::None).unwrap();
        let events = detect_events(&trace, 1.0).unwrap();
        assert_eq!(events.len(), 1);
        assert_abs_diff_eq!(events[0].inferred_reflectance_db.unwrap(), -45.0, epsilon = 1e-9);
    }

    #[test]
    fn flat_trace_has_no_events() {
        let t = PonTopology::new("flat", vec![PathElement::fiber(FiberProfile::g652d(), 1.0)]).unwrap();
        let trace = synthesize_trace(&t, &OtdrSpec::water_peak_1383(), TraceNoise::None).unwrap();
        assert!(detect_events(&trace, 0.5).unwrap().is_empty());
    }

    #[test]
    fn jitter_is_seed_deterministic() {
        let noise = TraceNoise::Jitter {
            sigma_db: 0.3,
            seed: 11,
        };
        let a = cplus_trace(32.0, noise);
        let b = cplus_trace(32.0, noise);
        assert_eq!(a, b);
        let c = cplus_trace(
            32.0,
            TraceNoise::Jitter {
                sigma_db: 0.3,
                seed: 12,
            },
        );
        assert_ne!(a.levels(), c.levels());
        assert!(a.levels().iter().all(|l| *l >= a.noise_floor_db()));
    }

    #[test]
    fn calibration_single_observation_is_exact() {
        let otdr = OtdrSpec::water_peak_1383().with_override(22.88);
        let r = min_detectable_reflectance(&otdr, 32.0, B1383, 1.0).unwrap();
        let obs = [CalibrationObservation {
            path_loss_db: 32.0,
            min_reflectance_db: r,
            margin_db: 1.0,
        }];
        assert_abs_diff_eq!(calibrate_effective_dr(&obs, B1383).unwrap(), 22.88, epsilon = 1e-6);
        assert!(calibrate_effective_dr(&[], B1383).is_err());
    }

    #[test]
    fn csv_exports() {
        let t = cplus_trace(32.0, TraceNoise::None);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("distance_m,level_db\n0,0\n1,"));
        let mut ev = Vec::new();
        write_events_csv(&detect_events(&t, 1.0).unwrap(), &mut ev).unwrap();
        let ev = String::from_utf8(ev).unwrap();
        assert_eq!(ev.lines().count(), 2);
        assert!(ev.lines().nth(1).unwrap().ends_with(','));
    }
}
