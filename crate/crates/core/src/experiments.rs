//! Parameter sweeps pairing the analytic model with replicated simulation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{Scenario, PER_KM2_TO_PER_M2};
use crate::error::{invalid, Error, Result};
use crate::model::{solve_fixed_point, SolverOptions};
use crate::sim::{replicate, Replication, SimConfig};
use crate::timing::{AccessMode, BackoffSchedule};

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// UAV speed in m/s.
    Velocity,
    /// Device density in devices per km^2.
    Density,
    RetryLimit,
    CwMin,
    /// Coverage radius in metres.
    Radius,
}

impl Axis {
    pub const ALL: [Axis; 5] = [
        Axis::Velocity,
        Axis::Density,
        Axis::RetryLimit,
        Axis::CwMin,
        Axis::Radius,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Velocity => "velocity",
            Axis::Density => "density",
            Axis::RetryLimit => "retry-limit",
            Axis::CwMin => "cw-min",
            Axis::Radius => "radius",
        }
    }

    /// Axis label with unit, for plots.
    pub fn label(self) -> &'static str {
        match self {
            Axis::Velocity => "UAV velocity (m/s)",
            Axis::Density => "device density (1/km^2)",
            Axis::RetryLimit => "retry limit L",
            Axis::CwMin => "initial contention window",
            Axis::Radius => "coverage radius (m)",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            Axis::Velocity => vec![5.0, 10.0, 15.0, 20.0, 25.0],
            Axis::Density => vec![50.0, 60.0, 70.0, 80.0, 90.0, 100.0],
            Axis::RetryLimit => vec![7.0, 8.0, 10.0, 12.0, 14.0],
            Axis::CwMin => vec![8.0, 16.0, 32.0, 64.0, 128.0, 256.0],
            Axis::Radius => vec![1000.0, 1250.0, 1500.0, 1750.0, 2000.0],
        }
    }

    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        let mut s = base.clone();
        match self {
            Axis::Velocity => s.velocity = value,
            Axis::Density => s.density = value * PER_KM2_TO_PER_M2,
            Axis::Radius => s.radius = value,
            Axis::RetryLimit => {
                let limit = whole(value, "retry_limit")?;
                s.schedule = BackoffSchedule::new(s.schedule.cw_min(), s.schedule.cw_max(), limit)?;
            }
            Axis::CwMin => {
                let cw = whole(value, "cw_min")?;
                let cap = s.schedule.cw_max().map(|c| c.max(cw));
                s.schedule = BackoffSchedule::new(cw, cap, s.schedule.retry_limit())?;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

fn whole(value: f64, name: &'static str) -> Result<u32> {
    if value < 0.0 || value.fract() != 0.0 || value > f64::from(u32::MAX) {
        return Err(invalid(name, format!("{value} is not a whole number")));
    }
    Ok(value as u32)
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| invalid("axis", format!("unknown axis `{s}`")))
    }
}

/// Simulation settings shared by all points of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub seed: u64,
    pub n_seeds: u32,
    /// Counted seconds per flight.
    pub measured_time: f64,
    /// Warm-up in seconds; one footprint crossing when `None`.
    pub warmup_time: Option<f64>,
    pub max_time: Option<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            seed: 1,
            n_seeds: 20,
            measured_time: crate::sim::DEFAULT_MEASURED_TIME,
            warmup_time: None,
            max_time: None,
        }
    }
}

impl SimSettings {
    pub fn config(&self, scenario: Scenario) -> SimConfig {
        let mut config = SimConfig::new(scenario, self.seed);
        if let Some(w) = self.warmup_time {
            config.warmup_time = w;
        }
        config.max_time = self.max_time;
        config.with_measured_time(self.measured_time)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub base: Scenario,
    pub modes: Vec<AccessMode>,
    pub sim: SimSettings,
    pub solver: SolverOptions,
}

impl SweepSpec {
    pub fn new(axis: Axis, values: Vec<f64>, base: Scenario) -> Self {
        Self {
            axis,
            values,
            base,
            modes: AccessMode::ALL.to_vec(),
            sim: SimSettings::default(),
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(invalid("values", "sweep needs at least one value"));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("values", "must be strictly increasing"));
        }
        if self.modes.is_empty() {
            return Err(invalid("modes", "sweep needs at least one access mode"));
        }
        if self.sim.n_seeds == 0 {
            return Err(invalid("seeds", "must be at least 1"));
        }
        Ok(())
    }
}

/// Model output at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelPoint {
    pub throughput: f64,
    pub iters_outer: usize,
    pub iters_inner: usize,
    pub n_clusters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: Axis,
    pub value: f64,
    pub mode: AccessMode,
    /// Solver failure message when the model has no value here.
    pub model: std::result::Result<ModelPoint, String>,
    pub sim_mean: f64,
    /// Half-width of the 95% interval; `None` when undefined.
    pub sim_ci95: Option<f64>,
}

impl SweepRow {
    pub fn s_model(&self) -> Option<f64> {
        self.model.as_ref().ok().map(|m| m.throughput)
    }

    pub fn abs_err(&self) -> Option<f64> {
        self.s_model().map(|s| (s - self.sim_mean).abs())
    }

    pub fn rel_err(&self) -> Option<f64> {
        self.abs_err().map(|e| e / self.sim_mean.abs())
    }

    pub fn model_inside_ci(&self) -> bool {
        match (self.s_model(), self.sim_ci95) {
            (Some(s), Some(h)) => (s - self.sim_mean).abs() <= h,
            _ => false,
        }
    }

    fn sim_interval(&self) -> (f64, f64) {
        let h = self.sim_ci95.unwrap_or(0.0);
        (self.sim_mean - h, self.sim_mean + h)
    }
}

/// Solves the model and replicates the simulation for one scenario.
pub fn evaluate_point(
    scenario: &Scenario,
    sim: &SimSettings,
    solver: &SolverOptions,
) -> Result<(std::result::Result<ModelPoint, String>, Replication)> {
    let model = solve_fixed_point(scenario, solver)
        .map(|m| ModelPoint {
            throughput: m.throughput,
            iters_outer: m.iterations.outer,
            iters_inner: m.iterations.inner,
            n_clusters: m.cluster_count(),
        })
        .map_err(|e| e.to_string());
    let replication = replicate(&sim.config(scenario.clone()), sim.n_seeds)?;
    Ok((model, replication))
}

/// Rows ordered by axis value, then by the order of `spec.modes`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let points: Vec<(f64, AccessMode)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.modes.iter().map(move |&m| (v, m)))
        .collect();
    points
        .par_iter()
        .map(|&(value, mode)| {
            let mut scenario = spec.axis.apply(&spec.base, value)?;
            scenario.timing = scenario.timing.with_mode(mode);
            let (model, rep) = evaluate_point(&scenario, &spec.sim, &spec.solver)?;
            Ok(SweepRow {
                axis: spec.axis,
                value,
                mode,
                model,
                sim_mean: rep.mean,
                sim_ci95: rep.ci95,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Decreasing,
    Increasing,
}

/// Which column a trend is checked on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Model,
    Simulation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    /// Inversions that stay within overlapping simulation intervals.
    Warn {
        indices: Vec<usize>,
    },
    /// First pair `(index, index + 1)` that breaks the trend.
    Fail {
        index: usize,
        reason: String,
    },
}

impl Verdict {
    pub fn acceptable(&self) -> bool {
        !matches!(self, Verdict::Fail { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("pass"),
            Verdict::Warn { indices } => write!(f, "warn (inversions within CI at {indices:?})"),
            Verdict::Fail { index, reason } => write!(f, "fail at pair {index}: {reason}"),
        }
    }
}

/// Checks that `column` moves strictly in the `expected` direction along
/// `rows`, which must share one access mode and be sorted by value.
pub fn trend_check(rows: &[SweepRow], column: Column, expected: Trend) -> Verdict {
    let mut warnings = Vec::new();
    for (i, pair) in rows.windows(2).enumerate() {
        let value = |r: &SweepRow| match column {
            Column::Model => r.s_model(),
            Column::Simulation => Some(r.sim_mean),
        };
        let (Some(a), Some(b)) = (value(&pair[0]), value(&pair[1])) else {
            return Verdict::Fail {
                index: i,
                reason: "model has no value".into(),
            };
        };
        let ok = match expected {
            Trend::Decreasing => b < a,
            Trend::Increasing => b > a,
        };
        if ok {
            continue;
        }
        let (lo0, hi0) = pair[0].sim_interval();
        let (lo1, hi1) = pair[1].sim_interval();
        let overlap =
            pair[0].sim_ci95.is_some() && pair[1].sim_ci95.is_some() && lo0 <= hi1 && lo1 <= hi0;
        if overlap {
            warnings.push(i);
        } else {
            return Verdict::Fail {
                index: i,
                reason: format!("{a:.4} -> {b:.4}"),
            };
        }
    }
    if warnings.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Warn { indices: warnings }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agreement {
    pub points: usize,
    /// Points where the model produced a value.
    pub solved: usize,
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
    pub inside_ci: usize,
}

impl Agreement {
    pub fn inside_fraction(&self) -> f64 {
        if self.points == 0 {
            0.0
        } else {
            self.inside_ci as f64 / self.points as f64
        }
    }
}

impl fmt::Display for Agreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "points={} solved={} inside_ci={} ({:.1}%) max_abs_err={:.6} mean_abs_err={:.6}",
            self.points,
            self.solved,
            self.inside_ci,
            100.0 * self.inside_fraction(),
            self.max_abs_err,
            self.mean_abs_err
        )
    }
}

pub fn agreement_report(rows: &[SweepRow]) -> Agreement {
    let errors: Vec<f64> = rows.iter().filter_map(SweepRow::abs_err).collect();
    let solved = errors.len();
    Agreement {
        points: rows.len(),
        solved,
        max_abs_err: errors.iter().copied().fold(0.0, f64::max),
        mean_abs_err: if solved == 0 {
            0.0
        } else {
            errors.iter().sum::<f64>() / solved as f64
        },
        inside_ci: rows.iter().filter(|r| r.model_inside_ci()).count(),
    }
}

/// Rows of one access mode, in sweep order.
pub fn rows_for_mode(rows: &[SweepRow], mode: AccessMode) -> Vec<SweepRow> {
    rows.iter().filter(|r| r.mode == mode).cloned().collect()
}
