//! Grid-asset depreciation of the substation transformer.
//!
//! Loading is turned into hot-spot temperature with the usual exponential
//! top-oil model, hot-spot temperature into insulation aging through the
//! Arrhenius acceleration factor, and aging plus losses into a daily cost:
//!
//! ```text
//! TCO = L_T * C_o + CL * A + LL * B(s)
//! A   = span hours
//! B   = sum over intervals of s(t)^2 * dt_hours
//! ```
//!
//! where `CL`/`LL` are the no-load and rated load losses priced at
//! `energy_price`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{interval_of, session_intervals, Fleet, MINUTES_PER_DAY};
use crate::fcm::CaptureResult;

/// Hot-spot temperature (°C) at which the aging acceleration factor is 1.
pub const REFERENCE_HOTSPOT_C: f64 = 110.0;
/// Arrhenius activation constant (K).
pub const AGING_CONSTANT_K: f64 = 15000.0;

#[derive(Debug, Error)]
pub enum GadmError {
    #[error("invalid transformer spec: {0}")]
    InvalidSpec(String),
    #[error("interval of {0} minutes does not divide a day")]
    BadInterval(u32),
    #[error("base load covers {found} minutes, expected one day ({expected})")]
    SpanMismatch { expected: u32, found: u32 },
    #[error("profile covers {found} h, expected {expected} h")]
    ProfileSpan { expected: f64, found: f64 },
    #[error("base load: {0}")]
    BaseLoad(String),
    #[error("failed to read base load {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalSpec {
    pub ambient_c: f64,
    /// Rated hot-spot rise over top oil.
    pub hotspot_rise_c: f64,
    /// Rated top-oil rise over ambient.
    pub top_oil_rise_c: f64,
    pub oil_exponent: f64,
    pub winding_exponent: f64,
    pub oil_time_constant_min: f64,
}

impl Default for ThermalSpec {
    fn default() -> Self {
        Self {
            ambient_c: 30.0,
            hotspot_rise_c: 35.0,
            top_oil_rise_c: 50.0,
            oil_exponent: 0.9,
            winding_exponent: 0.8,
            oil_time_constant_min: 180.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerSpec {
    pub rated_kva: f64,
    pub capital_cost: f64,
    pub no_load_loss_kw: f64,
    pub load_loss_rated_kw: f64,
    /// Currency per kWh.
    pub energy_price: f64,
    pub thermal: ThermalSpec,
    pub insulation_life_hours: f64,
}

impl Default for TransformerSpec {
    fn default() -> Self {
        Self {
            rated_kva: 2500.0,
            capital_cost: 200_000.0,
            no_load_loss_kw: 5.0,
            load_loss_rated_kw: 25.0,
            energy_price: 0.1,
            thermal: ThermalSpec::default(),
            insulation_life_hours: 180_000.0,
        }
    }
}

impl TransformerSpec {
    pub fn validate(&self) -> Result<(), GadmError> {
        let t = &self.thermal;
        let positive = [
            ("rated_kva", self.rated_kva),
            ("capital_cost", self.capital_cost),
            ("no_load_loss_kw", self.no_load_loss_kw),
            ("load_loss_rated_kw", self.load_loss_rated_kw),
            ("energy_price", self.energy_price),
            ("insulation_life_hours", self.insulation_life_hours),
            ("thermal.ambient_c", t.ambient_c),
            ("thermal.hotspot_rise_c", t.hotspot_rise_c),
            ("thermal.top_oil_rise_c", t.top_oil_rise_c),
            ("thermal.oil_time_constant_min", t.oil_time_constant_min),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(GadmError::InvalidSpec(format!(
                    "{name} must be finite and > 0, got {value}"
                )));
            }
        }
        for (name, value) in [
            ("thermal.oil_exponent", t.oil_exponent),
            ("thermal.winding_exponent", t.winding_exponent),
        ] {
            if !(value > 0.0 && value <= 2.0) {
                return Err(GadmError::InvalidSpec(format!(
                    "{name} must lie in (0, 2], got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Ratio of rated load loss to no-load loss.
    pub fn loss_ratio(&self) -> f64 {
        self.load_loss_rated_kw / self.no_load_loss_kw
    }

    /// Steady-state top-oil rise over ambient at per-unit loading `s`.
    pub fn ultimate_top_oil_rise(&self, s: f64) -> f64 {
        let r = self.loss_ratio();
        self.thermal.top_oil_rise_c
            * ((1.0 + r * s * s) / (1.0 + r)).powf(self.thermal.oil_exponent)
    }

    /// Hot-spot rise over top oil at per-unit loading `s`.
    pub fn hotspot_rise(&self, s: f64) -> f64 {
        self.thermal.hotspot_rise_c * s.powf(2.0 * self.thermal.winding_exponent)
    }
}

/// Day-long base load in kW per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseLoad {
    interval_minutes: u32,
    kw: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct BaseLoadRow {
    interval_index: usize,
    kw: f64,
}

impl BaseLoad {
    /// `kw` must cover exactly one day.
    pub fn new(interval_minutes: u32, kw: Vec<f64>) -> Result<Self, GadmError> {
        if interval_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(interval_minutes) {
            return Err(GadmError::BadInterval(interval_minutes));
        }
        let found = kw.len() as u32 * interval_minutes;
        if found != MINUTES_PER_DAY {
            return Err(GadmError::SpanMismatch {
                expected: MINUTES_PER_DAY,
                found,
            });
        }
        if let Some(i) = kw.iter().position(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(GadmError::BaseLoad(format!(
                "interval {i}: kw must be finite and >= 0, got {}",
                kw[i]
            )));
        }
        Ok(Self {
            interval_minutes,
            kw,
        })
    }

    pub fn flat(interval_minutes: u32, kw: f64) -> Result<Self, GadmError> {
        let count = MINUTES_PER_DAY.checked_div(interval_minutes).unwrap_or(0);
        Self::new(interval_minutes, vec![kw; count as usize])
    }

    /// Reads `interval_index,kw` rows; the interval length is inferred from
    /// the row count.
    pub fn from_csv_reader<R: std::io::Read>(reader: R, origin: &str) -> Result<Self, GadmError> {
        let mut kw = Vec::new();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        for (line, row) in rdr.deserialize::<BaseLoadRow>().enumerate() {
            let row = row.map_err(|source| GadmError::Csv {
                path: origin.to_string(),
                source,
            })?;
            if row.interval_index != line {
                return Err(GadmError::BaseLoad(format!(
                    "row {}: expected interval_index {line}, found {}",
                    line + 2,
                    row.interval_index
                )));
            }
            kw.push(row.kw);
        }
        if kw.is_empty() || !(MINUTES_PER_DAY as usize).is_multiple_of(kw.len()) {
            return Err(GadmError::BaseLoad(format!(
                "{} rows do not split a day into whole-minute intervals",
                kw.len()
            )));
        }
        Self::new(MINUTES_PER_DAY / kw.len() as u32, kw)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self, GadmError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| GadmError::Csv {
            path: path.display().to_string(),
            source: e.into(),
        })?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn interval_minutes(&self) -> u32 {
        self.interval_minutes
    }

    pub fn kw(&self) -> &[f64] {
        &self.kw
    }

    pub fn span_hours(&self) -> f64 {
        self.kw.len() as f64 * self.interval_minutes as f64 / 60.0
    }
}

/// Per-unit transformer loading per interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadingProfile {
    pub interval_minutes: u32,
    pub s: Vec<f64>,
}

impl LoadingProfile {
    pub fn new(interval_minutes: u32, s: Vec<f64>) -> Self {
        Self {
            interval_minutes,
            s,
        }
    }

    pub fn interval_hours(&self) -> f64 {
        self.interval_minutes as f64 / 60.0
    }

    pub fn span_hours(&self) -> f64 {
        self.s.len() as f64 * self.interval_hours()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcoComponents {
    pub aging_cost: f64,
    pub no_load_loss_cost: f64,
    pub load_loss_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcoResult {
    /// Fraction of insulation life consumed over the span.
    pub loss_of_life: f64,
    pub tco: f64,
    pub components: TcoComponents,
    pub peak_loading: f64,
    pub peak_hotspot_c: f64,
}

/// Base load plus every captured charging session, divided by the rating.
pub fn build_loading(
    base_load: &BaseLoad,
    capture: &CaptureResult,
    fleet: &Fleet,
    spec: &TransformerSpec,
) -> Result<LoadingProfile, GadmError> {
    let interval = base_load.interval_minutes;
    if interval == 0 || !MINUTES_PER_DAY.is_multiple_of(interval) {
        return Err(GadmError::BadInterval(interval));
    }
    let count = base_load.kw.len();
    if count as u32 * interval != MINUTES_PER_DAY {
        return Err(GadmError::SpanMismatch {
            expected: MINUTES_PER_DAY,
            found: count as u32 * interval,
        });
    }
    let fleet_spec = fleet.spec();
    let power = fleet_spec.charge_power_kw;
    let pulse = session_intervals(fleet_spec.charge_energy_kwh, power, interval).min(count);
    let mut kw = base_load.kw.clone();
    for v in &capture.captured_vehicles {
        let start = interval_of(v.arrival_minute, interval);
        for k in 0..pulse {
            kw[(start + k) % count] += power;
        }
    }
    let rated = spec.rated_kva;
    Ok(LoadingProfile {
        interval_minutes: interval,
        s: kw.into_iter().map(|k| k / rated).collect(),
    })
}

/// Top-oil rise over ambient at the end of each interval, starting from the
/// steady state for the first interval's loading.
pub fn top_oil_rise(profile: &LoadingProfile, spec: &TransformerSpec) -> Vec<f64> {
    let Some(&first) = profile.s.first() else {
        return Vec::new();
    };
    top_oil_rise_from(profile, spec, spec.ultimate_top_oil_rise(first))
}

/// As [`top_oil_rise`] with an explicit initial top-oil rise.
pub fn top_oil_rise_from(
    profile: &LoadingProfile,
    spec: &TransformerSpec,
    initial: f64,
) -> Vec<f64> {
    let decay = (-(profile.interval_minutes as f64) / spec.thermal.oil_time_constant_min).exp();
    let mut current = initial;
    profile
        .s
        .iter()
        .map(|&s| {
            let ultimate = spec.ultimate_top_oil_rise(s);
            current = ultimate + (current - ultimate) * decay;
            current
        })
        .collect()
}

/// Winding hot-spot temperature (°C) per interval.
pub fn hotspot_temperature(profile: &LoadingProfile, spec: &TransformerSpec) -> Vec<f64> {
    top_oil_rise(profile, spec)
        .into_iter()
        .zip(&profile.s)
        .map(|(oil, &s)| spec.thermal.ambient_c + oil + spec.hotspot_rise(s))
        .collect()
}

/// Arrhenius aging acceleration factor, exactly 1 at 110 °C.
pub fn aging_acceleration(hotspot_c: f64) -> f64 {
    let reference_k = REFERENCE_HOTSPOT_C + 273.0;
    (AGING_CONSTANT_K / reference_k - AGING_CONSTANT_K / (hotspot_c + 273.0)).exp()
}

/// Fraction of normal insulation life consumed by the hot-spot sequence.
pub fn loss_of_life(hotspots: &[f64], interval_minutes: u32, spec: &TransformerSpec) -> f64 {
    let dt_hours = interval_minutes as f64 / 60.0;
    let equivalent_hours: f64 = hotspots
        .iter()
        .map(|&t| aging_acceleration(t) * dt_hours)
        .sum();
    equivalent_hours / spec.insulation_life_hours
}

pub fn tco(
    profile: &LoadingProfile,
    spec: &TransformerSpec,
    span_hours: f64,
) -> Result<TcoResult, GadmError> {
    let covered = profile.span_hours();
    if (covered - span_hours).abs() > 1e-9 * span_hours.max(1.0) {
        return Err(GadmError::ProfileSpan {
            expected: span_hours,
            found: covered,
        });
    }
    let hotspots = hotspot_temperature(profile, spec);
    let lt = loss_of_life(&hotspots, profile.interval_minutes, spec);
    let dt = profile.interval_hours();
    let squared_loading_hours: f64 = profile.s.iter().map(|s| s * s * dt).sum();
    let components = TcoComponents {
        aging_cost: lt * spec.capital_cost,
        no_load_loss_cost: spec.no_load_loss_kw * span_hours * spec.energy_price,
        load_loss_cost: spec.load_loss_rated_kw * squared_loading_hours * spec.energy_price,
    };
    Ok(TcoResult {
        loss_of_life: lt,
        tco: components.aging_cost + components.no_load_loss_cost + components.load_loss_cost,
        components,
        peak_loading: profile.s.iter().copied().fold(0.0, f64::max),
        peak_hotspot_c: hotspots.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
