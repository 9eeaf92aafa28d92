//! Acceptance suite: one check per criterion, each returning a pass/fail
//! line. Used by the `acceptance` test target and by `uavmac validate`.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coverage::{
    self, baseline_scenario, expected_silence, expected_silence_tagged,
    expected_single_transmitter, Scenario,
};
use crate::error::Error;
use crate::experiments::{
    agreement_report, evaluate_point, rows_for_mode, run_sweep, trend_check, Axis, Column,
    SimSettings, SweepRow, SweepSpec, Trend,
};
use crate::model::{
    busy_probability, classes_for, implied_traversal_cost, quitting_probability,
    saturation_throughput, solve_classes, solve_fixed_point, stationary_b00,
    stationary_distribution, success_probabilities, transmission_from_b00,
    transmission_probability, ClassSolution, ContentionClass, LastStageReading, ModelSolution,
    Population, SolverOptions, SuccessNormalization,
};
use crate::reference;
use crate::report::{replication_table, sweep_csv};
use crate::sim::{replicate, replicate_fixed, FixedConfig};
use crate::timing::{AccessMode, BackoffSchedule, MacTiming};

pub const SERIES_TOLERANCE: f64 = 1e-12;
pub const SERIES_GRID_POINTS: usize = 200;
pub const CHAIN_TOLERANCE: f64 = 1e-10;
pub const CHAIN_CASES: usize = 50;
pub const CLASSICAL_MODEL_TOLERANCE: f64 = 1e-9;
pub const CLASSICAL_SIM_RELATIVE: f64 = 0.02;
pub const CLASSICAL_SIM_EVENTS: u64 = 1_000_000;
pub const CLASSICAL_DEVICES: [u32; 3] = [5, 10, 20];
pub const RENEWAL_RELATIVE: f64 = 0.01;
pub const RENEWAL_EVENTS: u64 = 1_000_000;
pub const AGREEMENT_MIN_INSIDE: usize = 6;
pub const AGREEMENT_MAX_ABS: f64 = 0.05;
pub const CW_256_CEILING: f64 = 0.05;
pub const FUZZ_CASES: usize = 100;
pub const FUZZ_RESIDUAL: f64 = 1e-10;
pub const FUZZ_DELTA_RELATIVE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seeds: u32,
    /// Counted seconds per simulated flight.
    pub measured_time: f64,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seeds: 20,
            measured_time: crate::sim::DEFAULT_MEASURED_TIME,
            seed: 1,
        }
    }
}

impl Settings {
    fn sim(&self) -> SimSettings {
        SimSettings {
            seed: self.seed,
            n_seeds: self.seeds,
            measured_time: self.measured_time,
            ..SimSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}. {} ({:.1} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn timed(id: u8, name: &'static str, check: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = check();
    Outcome {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

/// Closed forms against truncated Poisson series on a 20 x 10 grid.
pub fn closed_form_series() -> Outcome {
    timed(1, "closed-form/series equivalence", || {
        let means: Vec<f64> = (0..20)
            .map(|k| 1e-3 * (5e5f64).powf(k as f64 / 19.0))
            .collect();
        let taus = [0.0, 1e-4, 0.01, 0.1, 0.3, 0.5, 0.8, 0.99, 1.0 - 1e-10, 1.0];
        let mut worst = 0.0f64;
        let mut points = 0;
        for &mu in &means {
            for &tau in &taus {
                points += 1;
                for (a, b) in [
                    (
                        expected_silence(mu, tau),
                        reference::series_silence(mu, tau),
                    ),
                    (
                        expected_silence_tagged(mu, tau),
                        reference::series_silence_tagged(mu, tau),
                    ),
                    (
                        expected_single_transmitter(mu, tau),
                        reference::series_single_transmitter(mu, tau),
                    ),
                ] {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        (
            points == SERIES_GRID_POINTS && worst < SERIES_TOLERANCE,
            format!("{points} points, max abs diff {worst:.2e} (tol {SERIES_TOLERANCE:.0e})"),
        )
    })
}

/// Stationary vector against a power-iterated transition matrix.
pub fn chain_oracle() -> Outcome {
    timed(2, "chain-oracle equivalence", || {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
        let mut worst = 0.0f64;
        for case in 0..CHAIN_CASES {
            let w0 = 1u32 << rng.random_range(1..=5);
            let limit = rng.random_range(0..=6);
            let cap = rng.random_bool(0.3).then(|| w0 << rng.random_range(0..=3));
            let p = match case {
                0 => 0.5,
                1 => 0.5 - 1e-12,
                2 => 0.5 + 1e-12,
                3 => 0.0,
                4 => 0.999,
                _ => rng.random::<f64>(),
            };
            let schedule = BackoffSchedule::new(w0, cap, limit).expect("valid schedule");
            let dense = reference::dense_chain_stationary(p, &schedule);
            worst = worst.max((stationary_b00(p, &schedule) - dense[0][0]).abs());
            let ours = stationary_distribution(p, &schedule);
            for (a, b) in ours.iter().flatten().zip(dense.iter().flatten()) {
                worst = worst.max((a - b).abs());
            }
        }
        (
            worst < CHAIN_TOLERANCE,
            format!("{CHAIN_CASES} cases, max abs diff {worst:.2e} (tol {CHAIN_TOLERANCE:.0e})"),
        )
    })
}

/// Single class of `n` devices without mobility against the classical
/// retry-limit model, analytically and by simulation.
pub fn classical_degeneracy(settings: &Settings) -> Outcome {
    timed(3, "classical single-class degeneracy", || {
        let timing = MacTiming::default();
        let schedule = BackoffSchedule::default();
        let options = SolverOptions {
            quitting: false,
            inner_tolerance: 1e-14,
            inner_max_iterations: 1_000_000,
            ..SolverOptions::default()
        };
        let per_seed = CLASSICAL_SIM_EVENTS.div_ceil(u64::from(settings.seeds.max(1)));
        let mut passed = true;
        let mut parts = Vec::new();
        for n in CLASSICAL_DEVICES {
            let class = ContentionClass {
                traversals: 1,
                population: Population::Fixed(n),
            };
            let model = solve_classes(&[class], &schedule, &timing, &options).throughput;
            let classical = reference::bianchi_fixed_n(n, &schedule, &timing).throughput;
            let rep = replicate_fixed(
                &FixedConfig {
                    timing,
                    schedule,
                    devices: n as usize,
                    busy_events: per_seed,
                    warmup_events: 10_000,
                    seed: settings.seed,
                },
                settings.seeds,
            );
            let model_diff = (model - classical).abs();
            let sim_rel = (rep.mean - classical).abs() / classical;
            passed &= model_diff < CLASSICAL_MODEL_TOLERANCE && sim_rel < CLASSICAL_SIM_RELATIVE;
            parts.push(format!(
                "n={n}: model {model:.6} classical {classical:.6} (diff {model_diff:.1e}) sim {:.6} (rel {:.2}%)",
                rep.mean,
                100.0 * sim_rel
            ));
        }
        (passed, parts.join("; "))
    })
}

/// One always-covered device: a renewal cycle of mean backoff plus success.
pub fn single_device_renewal(settings: &Settings) -> Outcome {
    timed(4, "single-device renewal", || {
        let timing = MacTiming::default();
        let schedule = BackoffSchedule::default();
        let report = crate::sim::run_fixed(&FixedConfig {
            timing,
            schedule,
            devices: 1,
            busy_events: RENEWAL_EVENTS,
            warmup_events: 0,
            seed: settings.seed,
        });
        let w0 = f64::from(schedule.cw_min());
        let expected = timing.t_payload as f64
            / ((w0 - 1.0) / 2.0 * timing.delta_idle as f64 + timing.busy_success_time() as f64);
        let rel = (report.normalized_throughput - expected).abs() / expected;
        (
            rel < RENEWAL_RELATIVE,
            format!(
                "sim {:.6} expected {expected:.6} rel {:.3}% over {} events",
                report.normalized_throughput,
                100.0 * rel,
                report.busy_events()
            ),
        )
    })
}

/// The eight baseline grid points used by the agreement and access-mode
/// checks.
pub fn baseline_grid(settings: &Settings) -> crate::Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for v in [10.0, 20.0] {
        for cw in [8.0, 16.0] {
            for mode in AccessMode::ALL {
                let mut scenario =
                    Axis::CwMin.apply(&Axis::Velocity.apply(&baseline_scenario(), v)?, cw)?;
                scenario.timing = scenario.timing.with_mode(mode);
                let (model, rep) =
                    evaluate_point(&scenario, &settings.sim(), &SolverOptions::default())?;
                rows.push(SweepRow {
                    axis: Axis::Velocity,
                    value: v,
                    mode,
                    model,
                    sim_mean: rep.mean,
                    sim_ci95: rep.ci95,
                });
            }
        }
    }
    Ok(rows)
}

fn describe_grid(rows: &[SweepRow]) -> String {
    rows.iter()
        .enumerate()
        .map(|(k, r)| {
            let cw = if k % 4 < 2 { 8 } else { 16 };
            format!(
                "v={} cw={cw} {}: model {} sim {:.4}+-{:.4}",
                r.value,
                r.mode,
                r.s_model().map_or("n/a".into(), |s| format!("{s:.4}")),
                r.sim_mean,
                r.sim_ci95.unwrap_or(f64::NAN)
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn model_simulation_agreement(rows: &[SweepRow]) -> Outcome {
    timed(5, "model-simulation agreement", || {
        let a = agreement_report(rows);
        let passed = a.solved == rows.len()
            && a.inside_ci >= AGREEMENT_MIN_INSIDE
            && a.max_abs_err <= AGREEMENT_MAX_ABS;
        (
            passed,
            format!(
                "{} inside CI (need >= {AGREEMENT_MIN_INSIDE}), max abs err {:.4} (need <= {AGREEMENT_MAX_ABS}); {}",
                a.inside_ci,
                a.max_abs_err,
                describe_grid(rows)
            ),
        )
    })
}

struct TrendCase {
    axis: Axis,
    values: Vec<f64>,
}

fn trend_cases() -> Vec<TrendCase> {
    vec![
        TrendCase {
            axis: Axis::Velocity,
            values: vec![5.0, 10.0, 15.0, 20.0, 25.0],
        },
        TrendCase {
            axis: Axis::Density,
            values: vec![50.0, 60.0, 70.0, 80.0, 90.0, 100.0],
        },
        TrendCase {
            axis: Axis::RetryLimit,
            values: vec![7.0, 8.0, 10.0, 12.0, 14.0],
        },
        TrendCase {
            axis: Axis::CwMin,
            values: Axis::CwMin.default_values(),
        },
        TrendCase {
            axis: Axis::Radius,
            values: vec![1000.0, 1250.0, 1500.0, 1750.0, 2000.0],
        },
    ]
}

/// Trend sweeps on the model column with simulation intervals as tolerance,
/// plus RTS/CTS against basic access on the baseline grid.
pub fn trend_reproduction(settings: &Settings, grid: &[SweepRow]) -> Outcome {
    timed(6, "trend reproduction", || {
        let mut passed = true;
        let mut parts = Vec::new();
        for case in trend_cases() {
            let mut spec = SweepSpec::new(case.axis, case.values, baseline_scenario());
            spec.sim = settings.sim();
            let rows = match run_sweep(&spec) {
                Ok(rows) => rows,
                Err(e) => {
                    passed = false;
                    parts.push(format!("{}: sweep failed: {e}", case.axis));
                    continue;
                }
            };
            for mode in AccessMode::ALL {
                let rows = rows_for_mode(&rows, mode);
                let model = trend_check(&rows, Column::Model, Trend::Decreasing);
                let sim = trend_check(&rows, Column::Simulation, Trend::Decreasing);
                passed &= model.acceptable();
                let values: Vec<String> = rows
                    .iter()
                    .map(|r| {
                        format!(
                            "{}/{:.3}",
                            r.s_model().map_or("n/a".into(), |s| format!("{s:.3}")),
                            r.sim_mean
                        )
                    })
                    .collect();
                parts.push(format!(
                    "{} {mode}: model {model}, sim {sim} [model/sim {}]",
                    case.axis,
                    values.join(" ")
                ));
                if case.axis == Axis::CwMin && mode == AccessMode::Basic {
                    let last = rows.last().and_then(SweepRow::s_model);
                    let low = last.is_some_and(|s| s < CW_256_CEILING);
                    passed &= low;
                    parts.push(format!(
                        "basic S(256) = {} (need < {CW_256_CEILING})",
                        last.map_or("n/a".into(), |s| format!("{s:.4}"))
                    ));
                }
            }
        }
        let mut worse = Vec::new();
        for pair in grid.chunks(2) {
            let (basic, rts) = (&pair[0], &pair[1]);
            let ok = match (basic.s_model(), rts.s_model()) {
                (Some(b), Some(r)) => r >= b,
                _ => false,
            };
            if !ok {
                worse.push(format!("v={}", basic.value));
            }
        }
        passed &= worse.is_empty();
        parts.push(if worse.is_empty() {
            "RTS/CTS >= basic at all baseline points".into()
        } else {
            format!("RTS/CTS below basic at {}", worse.join(","))
        });
        (passed, parts.join("; "))
    })
}

/// Re-derives every per-cluster quantity of `solution` with the public
/// building blocks and returns the largest discrepancy and the relative
/// traversal-cost change.
pub fn independent_residual(
    scenario: &Scenario,
    solution: &ModelSolution,
    options: &SolverOptions,
) -> crate::Result<(f64, f64)> {
    let partition =
        coverage::build_clusters_capped(scenario, solution.delta, solution.partition.capped_at)?;
    if partition != solution.partition {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let classes = classes_for(&partition);
    let taus: Vec<f64> = solution.clusters.iter().map(|s| s.tau).collect();
    let busy = busy_probability(&classes, &taus);
    let limit = scenario.schedule.retry_limit() as i32;
    let mut worst = 0.0f64;
    for ((class, state), q) in classes.iter().zip(&solution.clusters).zip(busy) {
        let p_eq = (1.0 - state.quit) * q + state.quit;
        let b00 = stationary_b00(p_eq, &scenario.schedule);
        let tau = transmission_from_b00(b00, p_eq, &scenario.schedule);
        let p_last = match options.last_stage {
            LastStageReading::StationaryLastStage => p_eq.powi(limit) * b00,
            LastStageReading::TraversalSuccess => 1.0 - p_eq.powi(limit + 1),
        };
        let quit = if options.quitting {
            quitting_probability(p_last, class.traversals)?
        } else {
            0.0
        };
        for (a, b) in [
            (q, state.q_busy),
            (p_eq, state.p_eq),
            (b00, state.b00),
            (tau, state.tau),
            (quit, state.quit),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    let p_tr = transmission_probability(&classes, &taus);
    let p_s_per_class = success_probabilities(&classes, &taus);
    let p_s: f64 = p_s_per_class.iter().sum();
    let p_success = match options.success {
        SuccessNormalization::Conditional if p_tr > 0.0 => (p_s / p_tr).min(1.0),
        SuccessNormalization::Conditional => 0.0,
        SuccessNormalization::Unconditional => p_s,
    };
    let substituted = ClassSolution {
        states: solution.clusters.clone(),
        p_tr,
        p_s,
        p_s_per_class,
        p_success,
        throughput: saturation_throughput(p_tr, p_success, &scenario.timing),
        iterations: 0,
        residual: 0.0,
    };
    worst = worst.max((substituted.throughput - solution.throughput).abs());
    let implied =
        implied_traversal_cost(&classes, &substituted, &scenario.timing, &scenario.schedule)?;
    Ok((worst, (implied - solution.delta).abs() / solution.delta))
}

/// Random scenarios: every returned solution must verify independently;
/// failures must be reported errors.
pub fn solver_robustness() -> Outcome {
    timed(7, "solver robustness", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7_777);
        let options = SolverOptions::default();
        let (mut converged, mut silent) = (0, Vec::new());
        let mut failures: std::collections::BTreeMap<&'static str, usize> = Default::default();
        let mut worst = 0.0f64;
        for case in 0..FUZZ_CASES {
            let schedule =
                BackoffSchedule::new(1 << rng.random_range(2..=6), None, rng.random_range(0..=10))
                    .expect("valid schedule");
            let mode = if rng.random_bool(0.5) {
                AccessMode::Basic
            } else {
                AccessMode::RtsCts
            };
            let scenario = Scenario::new(
                rng.random_range(300.0..2500.0),
                rng.random_range(1.0..40.0),
                rng.random_range(5.0..200.0),
                schedule,
                MacTiming::default().with_mode(mode),
            )
            .expect("valid scenario");
            match solve_fixed_point(&scenario, &options) {
                Ok(solution) => match independent_residual(&scenario, &solution, &options) {
                    Ok((r, d))
                        if r < FUZZ_RESIDUAL
                            && d < FUZZ_DELTA_RELATIVE
                            && solution.residuals.max_class() < FUZZ_RESIDUAL =>
                    {
                        converged += 1;
                        worst = worst.max(r);
                    }
                    other => silent.push(format!("case {case}: {other:?}")),
                },
                Err(e) => {
                    let kind = match e {
                        Error::Infeasible(_) => "infeasible",
                        Error::NonConvergence { .. } => "non-convergence",
                        _ => "other",
                    };
                    *failures.entry(kind).or_default() += 1;
                }
            }
        }
        (
            silent.is_empty(),
            format!(
                "{FUZZ_CASES} cases: {converged} converged (max residual {worst:.1e}), reported failures {failures:?}, {} unverified{}",
                silent.len(),
                if silent.is_empty() { String::new() } else { format!(" [{}]", silent.join("; ")) }
            ),
        )
    })
}

/// Runs the `simulate` and `sweep` renderings twice and compares bytes.
pub fn determinism() -> Outcome {
    timed(8, "determinism", || {
        let render = || -> crate::Result<(String, String)> {
            let scenario = baseline_scenario();
            let sim = SimSettings {
                n_seeds: 3,
                measured_time: 1_000.0,
                ..SimSettings::default()
            };
            let rep = replicate(&sim.config(scenario.clone()), sim.n_seeds)?;
            let simulate = replication_table(&scenario, &rep);
            let mut spec = SweepSpec::new(Axis::Velocity, vec![10.0, 20.0], scenario);
            spec.sim = sim;
            Ok((simulate, sweep_csv(&run_sweep(&spec)?)))
        };
        match (render(), render()) {
            (Ok(a), Ok(b)) => (
                a == b,
                format!(
                    "simulate output {} bytes, sweep csv {} bytes, identical: {}",
                    a.0.len(),
                    a.1.len(),
                    a == b
                ),
            ),
            (Err(e), _) | (_, Err(e)) => (false, format!("run failed: {e}")),
        }
    })
}

/// All eight checks in order.
pub fn run_all(settings: &Settings) -> Vec<Outcome> {
    let mut out = vec![
        closed_form_series(),
        chain_oracle(),
        classical_degeneracy(settings),
        single_device_renewal(settings),
    ];
    match baseline_grid(settings) {
        Ok(grid) => {
            out.push(model_simulation_agreement(&grid));
            out.push(trend_reproduction(settings, &grid));
        }
        Err(e) => {
            for (id, name) in [(5, "model-simulation agreement"), (6, "trend reproduction")] {
                out.push(Outcome {
                    id,
                    name,
                    passed: false,
                    detail: format!("baseline grid failed: {e}"),
                    elapsed: Duration::ZERO,
                });
            }
        }
    }
    out.push(solver_robustness());
    out.push(determinism());
    out
}

/// Verdict helper for callers that only need the overall status.
pub fn all_passed(outcomes: &[Outcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}
