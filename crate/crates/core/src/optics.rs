//! Wavelength-dependent fiber physics shared by every other module.
//!
//! Attenuation spectra are stored as knot tables and interpolated linearly.
//! Macrobend loss is interpolated linearly in log(dB) since it grows roughly
//! exponentially with wavelength and only a handful of anchors are known.

use serde::{Deserialize, Serialize};

use crate::error::{PonError, Result};

const LN10_OVER_10: f64 = std::f64::consts::LN_10 / 10.0;

/// Below this linear attenuation (1/km) the effective length is taken as the
/// physical length.
pub const SMALL_ALPHA_PER_KM: f64 = 1e-9;

/// dB → linear ratio (or dBm → mW).
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear ratio (or mW) → dB (or dBm).
pub fn linear_to_db(linear: f64) -> Result<f64> {
    if !(linear > 0.0) || !linear.is_finite() {
        return Err(PonError::invalid(format!(
            "cannot take dB of non-positive value {linear}"
        )));
    }
    Ok(10.0 * linear.log10())
}

/// dB/km → natural-log attenuation in 1/km.
pub fn db_per_km_to_neper(attenuation_db_km: f64) -> f64 {
    attenuation_db_km * LN10_OVER_10
}

/// An ordered (wavelength nm, value) table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTable {
    points: Vec<(f64, f64)>,
}

impl SpectralTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(PonError::invalid("spectral table needs at least one point"));
        }
        if points.iter().any(|(w, v)| !w.is_finite() || !v.is_finite()) {
            return Err(PonError::invalid("spectral table contains non-finite values"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(PonError::invalid(
                "spectral table wavelengths must be strictly increasing",
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn range(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    fn bracket(&self, wavelength_nm: f64, what: &'static str) -> Result<Bracket> {
        let (min, max) = self.range();
        if !(wavelength_nm >= min && wavelength_nm <= max) {
            return Err(PonError::OutOfRange {
                what,
                value: wavelength_nm,
                min,
                max,
            });
        }
        // partition_point gives the first knot strictly above the query
        let hi = self.points.partition_point(|(w, _)| *w <= wavelength_nm);
        if hi == 0 || self.points[hi - 1].0 == wavelength_nm {
            let idx = hi.saturating_sub(1);
            return Ok(Bracket::Knot(self.points[idx].1));
        }
        let (w0, v0) = self.points[hi - 1];
        let (w1, v1) = self.points[hi];
        Ok(Bracket::Between {
            t: (wavelength_nm - w0) / (w1 - w0),
            v0,
            v1,
        })
    }

    /// Piecewise-linear interpolation, exact at knots.
    pub fn linear(&self, wavelength_nm: f64, what: &'static str) -> Result<f64> {
        Ok(match self.bracket(wavelength_nm, what)? {
            Bracket::Knot(v) => v,
            Bracket::Between { t, v0, v1 } => v0 + t * (v1 - v0),
        })
    }

    /// Interpolation linear in log(value). Segments touching a zero value
    /// fall back to linear interpolation.
    pub fn log_linear(&self, wavelength_nm: f64, what: &'static str) -> Result<f64> {
        Ok(match self.bracket(wavelength_nm, what)? {
            Bracket::Knot(v) => v,
            Bracket::Between { t, v0, v1 } if v0 > 0.0 && v1 > 0.0 => (v0.ln() + t * (v1.ln() - v0.ln())).exp(),
            Bracket::Between { t, v0, v1 } => v0 + t * (v1 - v0),
        })
    }
}

enum Bracket {
    Knot(f64),
    Between { t: f64, v0: f64, v1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FiberFamily {
    #[serde(rename = "G652AB_legacy", alias = "G652AB")]
    G652AbLegacy,
    #[serde(rename = "G652D")]
    G652D,
    #[serde(rename = "G657A1")]
    G657A1,
}

impl FiberFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            FiberFamily::G652AbLegacy => "G652AB_legacy",
            FiberFamily::G652D => "G652D",
            FiberFamily::G657A1 => "G657A1",
        }
    }
}

impl std::str::FromStr for FiberFamily {
    type Err = PonError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "G652AB_legacy" | "G652AB" => Ok(FiberFamily::G652AbLegacy),
            "G652D" => Ok(FiberFamily::G652D),
            "G657A1" => Ok(FiberFamily::G657A1),
            other => Err(PonError::invalid(format!("unknown fiber family '{other}'"))),
        }
    }
}

/// Backscatter capture level for a 1 ns pulse, relative to the launched
/// pulse power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Backscatter {
    Scalar(f64),
    PerWavelength(SpectralTable),
}

impl Backscatter {
    pub fn b0_at(&self, wavelength_nm: f64) -> Result<f64> {
        match self {
            Backscatter::Scalar(b0) => Ok(*b0),
            Backscatter::PerWavelength(table) => table.linear(wavelength_nm, "backscatter wavelength"),
        }
    }

    fn validate(&self) -> Result<()> {
        let all_negative = match self {
            Backscatter::Scalar(b0) => *b0 < 0.0,
            Backscatter::PerWavelength(t) => t.points().iter().all(|(_, b)| *b < 0.0),
        };
        if all_negative {
            Ok(())
        } else {
            Err(PonError::invalid("backscatter b0 must be below 0 dB"))
        }
    }
}

pub const G652D_ATTENUATION: [(f64, f64); 6] = [
    (1310.0, 0.33),
    (1383.0, 0.32),
    (1490.0, 0.24),
    (1550.0, 0.20),
    (1625.0, 0.23),
    (1650.0, 0.25),
];

pub const G652AB_LEGACY_ATTENUATION: [(f64, f64); 6] = [
    (1310.0, 0.33),
    (1383.0, 1.0),
    (1490.0, 0.24),
    (1550.0, 0.20),
    (1625.0, 0.23),
    (1650.0, 0.25),
];

// Rayleigh backscatter scales as λ^-4 between the 1383/1650 anchors.
pub const DEFAULT_BACKSCATTER_B0: [(f64, f64); 6] = [
    (1310.0, -78.06),
    (1383.0, -79.0),
    (1490.0, -80.29),
    (1550.0, -80.98),
    (1625.0, -81.80),
    (1650.0, -82.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberProfile {
    name: String,
    family: FiberFamily,
    attenuation: SpectralTable,
    backscatter: Backscatter,
}

impl FiberProfile {
    pub fn new(
        name: impl Into<String>,
        family: FiberFamily,
        attenuation_points: Vec<(f64, f64)>,
        backscatter: Backscatter,
    ) -> Result<Self> {
        let attenuation = SpectralTable::new(attenuation_points)?;
        if attenuation.points().iter().any(|(_, a)| *a <= 0.0) {
            return Err(PonError::invalid("attenuation values must be positive"));
        }
        backscatter.validate()?;
        Ok(Self {
            name: name.into(),
            family,
            attenuation,
            backscatter,
        })
    }

    /// Shipped default profile for a fiber family.
    pub fn default_for(family: FiberFamily) -> Self {
        let (name, points) = match family {
            FiberFamily::G652AbLegacy => ("g652ab_legacy", G652AB_LEGACY_ATTENUATION),
            FiberFamily::G652D => ("g652d", G652D_ATTENUATION),
            // G.657.A1 is G.652.D compliant in straight-fiber attenuation
            FiberFamily::G657A1 => ("g657a1", G652D_ATTENUATION),
        };
        Self::new(
            name,
            family,
            points.to_vec(),
            Backscatter::PerWavelength(SpectralTable::new(DEFAULT_BACKSCATTER_B0.to_vec()).expect("static table")),
        )
        .expect("static profile")
    }

    pub fn g652d() -> Self {
        Self::default_for(FiberFamily::G652D)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> FiberFamily {
        self.family
    }

    pub fn attenuation_table(&self) -> &SpectralTable {
        &self.attenuation
    }

    pub fn backscatter(&self) -> &Backscatter {
        &self.backscatter
    }

    pub fn backscatter_b0_at(&self, wavelength_nm: f64) -> Result<f64> {
        self.backscatter.b0_at(wavelength_nm)
    }
}

/// Attenuation in dB/km at `wavelength_nm`.
pub fn attenuation_at(profile: &FiberProfile, wavelength_nm: f64) -> Result<f64> {
    profile.attenuation.linear(wavelength_nm, "wavelength")
}

pub fn span_loss(profile: &FiberProfile, length_km: f64, wavelength_nm: f64) -> Result<f64> {
    if !(length_km >= 0.0) {
        return Err(PonError::invalid(format!(
            "span length must be non-negative, got {length_km} km"
        )));
    }
    Ok(attenuation_at(profile, wavelength_nm)? * length_km)
}

/// A macrobend: `turns` identical loops of the given radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendSpec {
    fiber_family: FiberFamily,
    radius_mm: f64,
    turns: u32,
    loss_per_turn: SpectralTable,
}

impl BendSpec {
    pub fn new(
        fiber_family: FiberFamily,
        radius_mm: f64,
        turns: u32,
        wavelength_loss_points: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if turns == 0 {
            return Err(PonError::invalid("a bend needs at least one turn"));
        }
        if !(radius_mm > 0.0) {
            return Err(PonError::invalid("bend radius must be positive"));
        }
        let loss_per_turn = SpectralTable::new(wavelength_loss_points)?;
        if loss_per_turn.points().iter().any(|(_, l)| *l < 0.0) {
            return Err(PonError::invalid("bend loss per turn must be non-negative"));
        }
        Ok(Self {
            fiber_family,
            radius_mm,
            turns,
            loss_per_turn,
        })
    }

    /// One 10 mm bend on G.657.A1: <0.2 dB at 1383, 1.5 dB at 1625 and
    /// about 2 dB at 1650 nm.
    pub fn g657a1_10mm(turns: u32) -> Result<Self> {
        Self::new(
            FiberFamily::G657A1,
            10.0,
            turns,
            vec![(1383.0, 0.2), (1625.0, 1.5), (1650.0, 2.0)],
        )
    }

    pub fn fiber_family(&self) -> FiberFamily {
        self.fiber_family
    }

    pub fn radius_mm(&self) -> f64 {
        self.radius_mm
    }

    pub fn turns(&self) -> u32 {
        self.turns
    }

    pub fn loss_table(&self) -> &SpectralTable {
        &self.loss_per_turn
    }

    pub fn with_turns(&self, turns: u32) -> Result<Self> {
        Self::new(
            self.fiber_family,
            self.radius_mm,
            turns,
            self.loss_per_turn.points().to_vec(),
        )
    }
}

pub fn bend_loss(bend: &BendSpec, wavelength_nm: f64) -> Result<f64> {
    let per_turn = bend.loss_per_turn.log_linear(wavelength_nm, "bend wavelength")?;
    Ok(per_turn * f64::from(bend.turns))
}

/// Nonlinear effective length (km) of a span with the given attenuation.
pub fn effective_length(attenuation_db_km: f64, length_km: f64) -> Result<f64> {
    if !(attenuation_db_km >= 0.0) || !(length_km >= 0.0) {
        return Err(PonError::invalid(format!(
            "effective length needs non-negative attenuation and length, got {attenuation_db_km} dB/km, {length_km} km"
        )));
    }
    let alpha = db_per_km_to_neper(attenuation_db_km);
    if alpha < SMALL_ALPHA_PER_KM {
        return Ok(length_km);
    }
    Ok(-(-alpha * length_km).exp_m1() / alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_g652d_at_water_peak() {
        let p = FiberProfile::g652d();
        assert_eq!(attenuation_at(&p, 1383.0).unwrap(), 0.32);
    }

    #[test]
    fn knots_are_exact() {
        let p = FiberProfile::g652d();
        for (w, a) in G652D_ATTENUATION {
            assert_eq!(attenuation_at(&p, w).unwrap(), a);
        }
    }

    #[test]
    fn midpoint_interpolation() {
        let p = FiberProfile::new(
            "t",
            FiberFamily::G652D,
            vec![(1300.0, 0.4), (1400.0, 0.2)],
            Backscatter::Scalar(-79.0),
        )
        .unwrap();
        assert_abs_diff_eq!(attenuation_at(&p, 1350.0).unwrap(), 0.30, epsilon = 1e-12);
    }

    #[test]
    fn out_of_range_names_interval() {
        let err = attenuation_at(&FiberProfile::g652d(), 1700.0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1310") && msg.contains("1650"), "{msg}");
    }

    #[test]
    fn rejects_bad_profiles() {
        let bs = Backscatter::Scalar(-79.0);
        assert!(FiberProfile::new("x", FiberFamily::G652D, vec![(1400.0, 0.2), (1300.0, 0.3)], bs.clone()).is_err());
        assert!(FiberProfile::new("x", FiberFamily::G652D, vec![(1300.0, 0.0)], bs).is_err());
        assert!(FiberProfile::new("x", FiberFamily::G652D, vec![(1300.0, 0.3)], Backscatter::Scalar(1.0)).is_err());
    }

    #[test]
    fn legacy_water_peak() {
        let p = FiberProfile::default_for(FiberFamily::G652AbLegacy);
        assert_eq!(attenuation_at(&p, 1383.0).unwrap(), 1.0);
    }

    #[test]
    fn span_losses() {
        let p = FiberProfile::g652d();
        assert_eq!(span_loss(&p, 0.0, 1383.0).unwrap(), 0.0);
        assert_abs_diff_eq!(span_loss(&p, 22.0, 1383.0).unwrap(), 7.04, epsilon = 1e-12);
        assert_abs_diff_eq!(span_loss(&p, 20.0, 1383.0).unwrap(), 6.40, epsilon = 1e-12);
        assert!(span_loss(&p, -1.0, 1383.0).is_err());
    }

    #[test]
    fn g657a1_bend_anchors() {
        let b = BendSpec::g657a1_10mm(1).unwrap();
        assert_abs_diff_eq!(bend_loss(&b, 1625.0).unwrap(), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(bend_loss(&b, 1650.0).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bend_loss(&b, 1383.0).unwrap(), 0.2, epsilon = 1e-12);
        assert!(bend_loss(&b, 1310.0).is_err());
    }

    #[test]
    fn bend_interpolates_in_log_space() {
        let b = BendSpec::new(FiberFamily::G657A1, 10.0, 1, vec![(1400.0, 0.1), (1600.0, 1.0)]).unwrap();
        // geometric mean at the midpoint
        assert_abs_diff_eq!(bend_loss(&b, 1500.0).unwrap(), 0.1f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn turns_scale_linearly() {
        let b = BendSpec::g657a1_10mm(3).unwrap();
        assert_abs_diff_eq!(bend_loss(&b, 1625.0).unwrap(), 4.5, epsilon = 1e-12);
        assert!(BendSpec::g657a1_10mm(0).is_err());
    }

    #[test]
    fn effective_length_examples() {
        assert_eq!(effective_length(0.0, 22.0).unwrap(), 22.0);
        assert_eq!(effective_length(0.35, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(effective_length(0.35, 22.0).unwrap(), 10.30, epsilon = 0.01);
        assert!(effective_length(-0.1, 1.0).is_err());
    }

    #[test]
    fn db_conversions() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert_abs_diff_eq!(db_to_linear(9.0), 7.943, epsilon = 0.001);
        assert!(linear_to_db(0.0).is_err());
        assert!(linear_to_db(-1.0).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn db_round_trip(x in -50.0f64..20.0) {
                let back = linear_to_db(db_to_linear(x)).unwrap();
                prop_assert!((back - x).abs() < 1e-12);
            }

            #[test]
            fn span_loss_is_additive(a in 0.0f64..50.0, b in 0.0f64..50.0, w in 1310.0f64..1650.0) {
                let p = FiberProfile::g652d();
                let whole = span_loss(&p, a + b, w).unwrap();
                let parts = span_loss(&p, a, w).unwrap() + span_loss(&p, b, w).unwrap();
                prop_assert!((whole - parts).abs() < 1e-12);
            }

            #[test]
            fn effective_length_bounded(att in 0.01f64..2.0, len in 0.01f64..100.0) {
                let leff = effective_length(att, len).unwrap();
                let alpha = db_per_km_to_neper(att);
                prop_assert!(leff <= len.min(1.0 / alpha) * (1.0 + 1e-12));
                prop_assert!(leff > 0.0);
            }

            #[test]
            fn attenuation_monotone_within_segments(t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, seg in 0usize..5) {
                let p = FiberProfile::g652d();
                let (w0, a0) = G652D_ATTENUATION[seg];
                let (w1, a1) = G652D_ATTENUATION[seg + 1];
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let v_lo = attenuation_at(&p, w0 + lo * (w1 - w0)).unwrap();
                let v_hi = attenuation_at(&p, w0 + hi * (w1 - w0)).unwrap();
                if a1 >= a0 {
                    prop_assert!(v_hi >= v_lo - 1e-15);
                } else {
                    prop_assert!(v_hi <= v_lo + 1e-15);
                }
            }
        }
    }
}
