//! TOML run configuration.
//!
//! Every key is optional; an empty file gives the baseline set-up. Numeric
//! values may be bare numbers in the canonical unit of the key or strings
//! with a unit suffix such as `"1km"`, `"50us"` or `"50/km2"`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::coverage::Scenario;
use crate::error::{Error, Result};
use crate::experiments::{Axis, SimSettings, SweepSpec};
use crate::model::{LastStageReading, SolverOptions, SuccessNormalization};
use crate::timing::{AccessMode, BackoffSchedule, MacTiming, MICROS_PER_SECOND};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub timing: TimingConfig,
    pub solver: SolverConfig,
    pub sim: SimSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Metres.
    #[serde(deserialize_with = "de_length")]
    pub radius: f64,
    /// Metres per second.
    #[serde(deserialize_with = "de_speed")]
    pub velocity: f64,
    /// Devices per km^2.
    #[serde(deserialize_with = "de_density")]
    pub density: f64,
    #[serde(deserialize_with = "de_window")]
    pub cw_min: u32,
    #[serde(
        deserialize_with = "de_opt_window",
        skip_serializing_if = "Option::is_none"
    )]
    pub cw_max: Option<u32>,
    #[serde(deserialize_with = "de_retry_limit")]
    pub retry_limit: u32,
    pub access_mode: AccessMode,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            radius: 1000.0,
            velocity: 10.0,
            density: 50.0,
            cw_min: 8,
            cw_max: None,
            retry_limit: 7,
            access_mode: AccessMode::Basic,
        }
    }
}

/// Durations in microseconds, rate in bit/s, payload in bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(deserialize_with = "de_micros")]
    pub slot: u64,
    #[serde(deserialize_with = "de_micros")]
    pub sifs: u64,
    #[serde(deserialize_with = "de_micros")]
    pub difs: u64,
    #[serde(deserialize_with = "de_micros")]
    pub header: u64,
    #[serde(deserialize_with = "de_micros")]
    pub ack: u64,
    #[serde(deserialize_with = "de_micros")]
    pub rts: u64,
    #[serde(deserialize_with = "de_micros")]
    pub cts: u64,
    #[serde(deserialize_with = "de_micros")]
    pub ack_timeout: u64,
    #[serde(deserialize_with = "de_micros")]
    pub cts_timeout: u64,
    #[serde(deserialize_with = "de_micros")]
    pub prop_delay: u64,
    #[serde(deserialize_with = "de_rate")]
    pub data_rate: f64,
    #[serde(deserialize_with = "de_bytes")]
    pub payload: u64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        let t = MacTiming::default();
        Self {
            slot: t.delta_idle,
            sifs: t.sifs,
            difs: t.difs,
            header: t.t_header,
            ack: t.t_ack,
            rts: t.t_rts,
            cts: t.t_cts,
            ack_timeout: t.t_ack_timeout,
            cts_timeout: t.t_cts_timeout,
            prop_delay: t.prop_delay,
            data_rate: 1e6,
            payload: 8 * 1024,
        }
    }
}

impl TimingConfig {
    /// Payload airtime in whole microseconds.
    pub fn payload_time(&self) -> u64 {
        (self.payload as f64 * 8.0 / self.data_rate * MICROS_PER_SECOND).round() as u64
    }

    pub fn mac_timing(&self, mode: AccessMode) -> Result<MacTiming> {
        let timing = MacTiming {
            delta_idle: self.slot,
            sifs: self.sifs,
            difs: self.difs,
            t_header: self.header,
            t_payload: self.payload_time(),
            t_ack: self.ack,
            t_rts: self.rts,
            t_cts: self.cts,
            t_ack_timeout: self.ack_timeout,
            t_cts_timeout: self.cts_timeout,
            prop_delay: self.prop_delay,
            access_mode: mode,
        };
        timing.validate()?;
        Ok(timing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(deserialize_with = "de_damping")]
    pub damping: f64,
    #[serde(deserialize_with = "de_positive")]
    pub inner_tolerance: f64,
    #[serde(deserialize_with = "de_count")]
    pub inner_max_iterations: usize,
    #[serde(deserialize_with = "de_positive")]
    pub outer_tolerance: f64,
    #[serde(deserialize_with = "de_count")]
    pub outer_max_iterations: usize,
    pub last_stage: LastStageReading,
    pub success: SuccessNormalization,
    pub quitting: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            damping: o.damping,
            inner_tolerance: o.inner_tolerance,
            inner_max_iterations: o.inner_max_iterations,
            outer_tolerance: o.outer_tolerance,
            outer_max_iterations: o.outer_max_iterations,
            last_stage: o.last_stage,
            success: o.success,
            quitting: o.quitting,
        }
    }
}

/// Durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub seed: u64,
    #[serde(deserialize_with = "de_seeds")]
    pub seeds: u32,
    #[serde(deserialize_with = "de_seconds")]
    pub measured_time: f64,
    #[serde(
        deserialize_with = "de_opt_seconds",
        skip_serializing_if = "Option::is_none"
    )]
    pub warmup_time: Option<f64>,
    #[serde(
        deserialize_with = "de_opt_seconds",
        skip_serializing_if = "Option::is_none"
    )]
    pub max_time: Option<f64>,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimSettings::default();
        Self {
            seed: s.seed,
            seeds: s.n_seeds,
            measured_time: s.measured_time,
            warmup_time: s.warmup_time,
            max_time: s.max_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    /// Default grid of the axis when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default = "all_modes")]
    pub modes: Vec<AccessMode>,
}

fn all_modes() -> Vec<AccessMode> {
    AccessMode::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn schedule(&self) -> Result<BackoffSchedule> {
        let s = &self.scenario;
        BackoffSchedule::new(s.cw_min, s.cw_max, s.retry_limit)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let s = &self.scenario;
        Scenario::new(
            s.radius,
            s.velocity,
            s.density,
            self.schedule()?,
            self.timing.mac_timing(s.access_mode)?,
        )
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            damping: s.damping,
            inner_tolerance: s.inner_tolerance,
            inner_max_iterations: s.inner_max_iterations,
            outer_tolerance: s.outer_tolerance,
            outer_max_iterations: s.outer_max_iterations,
            last_stage: s.last_stage,
            success: s.success,
            quitting: s.quitting,
        }
    }

    pub fn sim_settings(&self) -> SimSettings {
        SimSettings {
            seed: self.sim.seed,
            n_seeds: self.sim.seeds,
            measured_time: self.sim.measured_time,
            warmup_time: self.sim.warmup_time,
            max_time: self.sim.max_time,
        }
    }

    /// The configured sweep, or `None` without a `[sweep]` section.
    pub fn sweep_spec(&self) -> Result<Option<SweepSpec>> {
        let Some(sweep) = &self.sweep else {
            return Ok(None);
        };
        let values = if sweep.values.is_empty() {
            sweep.axis.default_values()
        } else {
            sweep.values.clone()
        };
        let mut spec = SweepSpec::new(sweep.axis, values, self.scenario()?);
        spec.modes = sweep.modes.clone();
        spec.sim = self.sim_settings();
        spec.solver = self.solver_options();
        spec.validate()?;
        Ok(Some(spec))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawQuantity {
    Int(i64),
    Float(f64),
    Text(String),
}

/// `(suffix, factor to the canonical unit)`.
type Units = &'static [(&'static str, f64)];

const LENGTH: Units = &[("m", 1.0), ("km", 1000.0)];
const SPEED: Units = &[("m/s", 1.0), ("km/h", 1.0 / 3.6)];
const DENSITY: Units = &[("/km2", 1.0), ("/km^2", 1.0), ("/m2", 1e6), ("/m^2", 1e6)];
const MICROS: Units = &[("us", 1.0), ("µs", 1.0), ("ms", 1e3), ("s", 1e6)];
const SECONDS: Units = &[("s", 1.0), ("ms", 1e-3), ("min", 60.0), ("h", 3600.0)];
const RATE: Units = &[
    ("bps", 1.0),
    ("bit/s", 1.0),
    ("kbps", 1e3),
    ("kbit/s", 1e3),
    ("Mbps", 1e6),
    ("Mbit/s", 1e6),
];
const BYTES: Units = &[
    ("B", 1.0),
    ("kB", 1024.0),
    ("KiB", 1024.0),
    ("MB", 1048576.0),
];
const NONE: Units = &[];

fn quantity(raw: RawQuantity, units: Units, what: &str) -> std::result::Result<f64, String> {
    let text = match raw {
        RawQuantity::Int(i) => return Ok(i as f64),
        RawQuantity::Float(f) => return Ok(f),
        RawQuantity::Text(t) => t,
    };
    let t = text.trim();
    let split = t
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit() || c == '.' || c == '_' || (i == 0 && (c == '-' || c == '+')))
                && !((c == 'e' || c == 'E')
                    && t[i + 1..].starts_with(|d: char| d.is_ascii_digit() || d == '-'))
        })
        .map_or(t.len(), |(i, _)| i);
    let (number, unit) = t.split_at(split);
    let value: f64 = number
        .replace('_', "")
        .parse()
        .map_err(|_| format!("`{text}` is not a {what}"))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(value);
    }
    units
        .iter()
        .find(|(suffix, _)| *suffix == unit)
        .map(|(_, factor)| value * factor)
        .ok_or_else(|| {
            let known: Vec<&str> = units.iter().map(|(s, _)| *s).collect();
            format!("unknown unit `{unit}` for a {what} (expected one of {known:?})")
        })
}

fn positive<'de, D: Deserializer<'de>>(
    d: D,
    units: Units,
    what: &str,
) -> std::result::Result<f64, D::Error> {
    let value =
        quantity(RawQuantity::deserialize(d)?, units, what).map_err(serde::de::Error::custom)?;
    if !(value > 0.0 && value.is_finite()) {
        return Err(serde::de::Error::custom(format!(
            "{what} must be positive, got {value}"
        )));
    }
    Ok(value)
}

fn whole<'de, D: Deserializer<'de>>(
    d: D,
    units: Units,
    what: &str,
) -> std::result::Result<u64, D::Error> {
    let value = positive(d, units, what)?;
    if value.fract() != 0.0 || value > u64::MAX as f64 {
        return Err(serde::de::Error::custom(format!(
            "{what} must be a whole number, got {value}"
        )));
    }
    Ok(value as u64)
}

fn de_length<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    positive(d, LENGTH, "length")
}

fn de_speed<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    positive(d, SPEED, "speed")
}

fn de_density<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    positive(d, DENSITY, "density")
}

fn de_micros<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    whole(d, MICROS, "duration in microseconds")
}

fn de_seconds<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    positive(d, SECONDS, "duration")
}

fn de_opt_seconds<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    de_seconds(d).map(Some)
}

fn de_rate<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    positive(d, RATE, "data rate")
}

fn de_bytes<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
    whole(d, BYTES, "size in bytes")
}

fn de_positive<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    positive(d, NONE, "number")
}

fn de_damping<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    let value = positive(d, NONE, "damping factor")?;
    if value > 1.0 {
        return Err(serde::de::Error::custom(
            "damping factor must lie in (0, 1]",
        ));
    }
    Ok(value)
}

fn de_count<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<usize, D::Error> {
    whole(d, NONE, "count").map(|v| v as usize)
}

fn de_seeds<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u32, D::Error> {
    let n = whole(d, NONE, "seed count")?;
    u32::try_from(n).map_err(|_| serde::de::Error::custom("seed count too large"))
}

fn de_window<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u32, D::Error> {
    let w = whole(d, NONE, "contention window")?;
    if w < 2 || !w.is_power_of_two() || w > u64::from(u32::MAX) {
        return Err(serde::de::Error::custom(format!(
            "contention window must be a power of two >= 2, got {w}"
        )));
    }
    Ok(w as u32)
}

fn de_opt_window<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u32>, D::Error> {
    de_window(d).map(Some)
}

fn de_retry_limit<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u32, D::Error> {
    let value = i64::deserialize(d)?;
    if !(0..=40).contains(&value) {
        return Err(serde::de::Error::custom(format!(
            "retry limit must lie in 0..=40, got {value}"
        )));
    }
    Ok(value as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::baseline_scenario;

    #[test]
    fn empty_file_gives_baseline() {
        let config = RunConfig::parse("").unwrap();
        assert_eq!(config, RunConfig::default());
        let t = config.scenario().unwrap().timing;
        assert_eq!(
            (t.delta_idle, t.sifs, t.difs, t.t_ack, t.t_rts, t.t_cts),
            (50, 28, 128, 112, 160, 112)
        );
        assert_eq!(
            (t.t_ack_timeout, t.t_cts_timeout, t.t_payload),
            (300, 300, 65_536)
        );
        assert_eq!(config.scenario().unwrap(), baseline_scenario());
    }

    #[test]
    fn units_are_converted() {
        let config = RunConfig::parse(
            r#"
            [scenario]
            radius = "1.5km"
            velocity = "36km/h"
            density = "0.00007/m2"
            [timing]
            slot = "0.05ms"
            data_rate = "2Mbps"
            payload = "4kB"
            [sim]
            measured_time = "2min"
            "#,
        )
        .unwrap();
        assert_eq!(config.scenario.radius, 1500.0);
        assert!((config.scenario.velocity - 10.0).abs() < 1e-12);
        assert!((config.scenario.density - 70.0).abs() < 1e-9);
        assert_eq!(config.timing.slot, 50);
        assert_eq!(config.timing.payload_time(), 16_384);
        assert_eq!(config.sim.measured_time, 120.0);
    }

    #[test]
    fn negative_radius_names_the_field() {
        let err = RunConfig::parse("[scenario]\nradius = -5\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("radius"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_units() {
        let err = RunConfig::parse("[scenario]\nradios = 5\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("radios"), "{err}");
        let err = RunConfig::parse("[timing]\nsifs = \"28 parsecs\"\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("unknown unit"), "{err}");
        assert!(RunConfig::parse("[timing]\ndifs = 0\n").is_err());
        assert!(RunConfig::parse("[scenario]\ncw_min = 12\n").is_err());
        assert!(RunConfig::parse("bogus = 1\n").is_err());
    }

    #[test]
    fn round_trip() {
        let text = r#"
            [scenario]
            radius = "2km"
            cw_max = 1024
            access_mode = "rts-cts"
            [solver]
            last_stage = "traversal-success"
            success = "unconditional"
            [sim]
            seeds = 5
            warmup_time = 300
            [sweep]
            axis = "velocity"
            values = [5, 10, 15]
            [output]
            csv = "out.csv"
        "#;
        let config = RunConfig::parse(text).unwrap();
        let again = RunConfig::parse(&config.to_toml()).unwrap();
        assert_eq!(config, again);
        let spec = again.sweep_spec().unwrap().unwrap();
        assert_eq!(spec.values, vec![5.0, 10.0, 15.0]);
        assert_eq!(spec.modes, AccessMode::ALL.to_vec());
        assert_eq!(spec.sim.n_seeds, 5);
    }

    #[test]
    fn sweep_defaults_to_axis_grid() {
        let config = RunConfig::parse("[sweep]\naxis = \"cw-min\"\n").unwrap();
        let spec = config.sweep_spec().unwrap().unwrap();
        assert_eq!(spec.values, Axis::CwMin.default_values());
        assert!(RunConfig::parse("")
            .unwrap()
            .sweep_spec()
            .unwrap()
            .is_none());
    }
}
