//! Analytic saturation-throughput model with quitting.
//!
//! Each cluster `i` is a contention class whose devices may complete `m_i`
//! traversals of the backoff stages before leaving the footprint. A device's
//! backoff is the classical retry-limited chain in which a transmission
//! attempt fails with the *equivalent* probability
//! `P_eq = (1 - Q_i) q_i + Q_i`: it either collides (`q_i`) or quits (`Q_i`).
//!
//! The per-class unknowns `(tau_i, Q_i)` are solved by damped fixed-point
//! iteration for a given partition; the partition itself depends on the
//! traversal cost `Delta`, which depends on the solution. The outer loop in
//! [`solve_fixed_point`] iterates `Delta` to self-consistency.

use serde::{Deserialize, Serialize};

use crate::coverage::{self, ClusterSet, Scenario};
use crate::error::{invalid, Error, ResidualSnapshot, Result};
use crate::timing::{traversal_cost, BackoffSchedule, MacTiming};

/// Classes with a smaller mean population are left out of every product.
const NEGLIGIBLE_MEAN: f64 = 1e-12;

/// How many devices a contention class holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Population {
    /// Poisson number of devices with this mean.
    Poisson(f64),
    /// Exactly this many devices.
    Fixed(u32),
}

impl Population {
    pub fn mean(&self) -> f64 {
        match *self {
            Population::Poisson(mu) => mu,
            Population::Fixed(n) => f64::from(n),
        }
    }

    fn negligible(&self) -> bool {
        self.mean() < NEGLIGIBLE_MEAN
    }

    /// Probability that no device of the class transmits.
    pub fn silence(&self, tau: f64) -> f64 {
        match *self {
            Population::Poisson(mu) => coverage::expected_silence(mu, tau),
            Population::Fixed(n) => (1.0 - tau).powi(n as i32),
        }
    }

    /// Own-class factor of a tagged device's busy probability.
    pub fn tagged_silence(&self, tau: f64) -> f64 {
        match *self {
            Population::Poisson(mu) => coverage::expected_silence_tagged(mu, tau),
            Population::Fixed(0) => 1.0,
            Population::Fixed(n) => (1.0 - tau).powi(n as i32 - 1),
        }
    }

    /// Probability that exactly one device of the class transmits.
    pub fn single_transmitter(&self, tau: f64) -> f64 {
        match *self {
            Population::Poisson(mu) => coverage::expected_single_transmitter(mu, tau),
            Population::Fixed(0) => 0.0,
            Population::Fixed(n) => f64::from(n) * tau * (1.0 - tau).powi(n as i32 - 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentionClass {
    /// Full traversals `m_i` the class can complete while covered.
    pub traversals: u32,
    pub population: Population,
}

/// What the "probability of reaching the last stage" in the quitting
/// probability stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LastStageReading {
    /// Stationary probability of state `(L, 0)`, `P_eq^L b_00`.
    #[default]
    StationaryLastStage,
    /// Probability that one traversal delivers the packet, `1 - P_eq^{L+1}`.
    TraversalSuccess,
}

/// Which success probability enters the throughput ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuccessNormalization {
    /// `P_s / P_tr`, success given that somebody transmits.
    #[default]
    Conditional,
    /// `P_s` as summed over the classes.
    Unconditional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub damping: f64,
    pub inner_tolerance: f64,
    pub inner_max_iterations: usize,
    pub outer_tolerance: f64,
    pub outer_max_iterations: usize,
    pub last_stage: LastStageReading,
    pub success: SuccessNormalization,
    /// When false every `Q_i` is held at zero.
    pub quitting: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            inner_tolerance: 1e-10,
            inner_max_iterations: 10_000,
            outer_tolerance: 1e-6,
            outer_max_iterations: 100,
            last_stage: LastStageReading::default(),
            success: SuccessNormalization::default(),
            quitting: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid("damping", "must lie in (0, 1]"));
        }
        for (name, tol) in [
            ("inner_tolerance", self.inner_tolerance),
            ("outer_tolerance", self.outer_tolerance),
        ] {
            if !(tol > 0.0) {
                return Err(invalid(name, "must be positive"));
            }
        }
        if self.inner_max_iterations == 0 || self.outer_max_iterations == 0 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// Converged per-class quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterState {
    /// Transmission probability in a random slot.
    pub tau: f64,
    /// Probability the channel is sensed busy.
    pub q_busy: f64,
    /// Quitting probability.
    pub quit: f64,
    pub p_eq: f64,
    pub b00: f64,
    /// Probability entering the quitting probability (see [`LastStageReading`]).
    pub p_reach_last: f64,
}

/// `Q = (1 - P_b)^m`.
pub fn quitting_probability(p_reach_last: f64, traversals: u32) -> Result<f64> {
    if traversals == 0 {
        return Err(invalid("traversals", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p_reach_last) {
        return Err(invalid(
            "p_reach_last",
            format!("{p_reach_last} is not a probability"),
        ));
    }
    Ok((1.0 - p_reach_last).powf(f64::from(traversals)))
}

/// Products of `silence` over all classes except `i`, for every `i`.
fn leave_one_out_silence(classes: &[ContentionClass], taus: &[f64]) -> Vec<f64> {
    let factors: Vec<f64> = classes
        .iter()
        .zip(taus)
        .map(|(c, &t)| {
            if c.population.negligible() {
                1.0
            } else {
                c.population.silence(t)
            }
        })
        .collect();
    let k = factors.len();
    let mut prefix = vec![1.0; k + 1];
    for i in 0..k {
        prefix[i + 1] = prefix[i] * factors[i];
    }
    let mut suffix = vec![1.0; k + 1];
    for i in (0..k).rev() {
        suffix[i] = suffix[i + 1] * factors[i];
    }
    (0..k).map(|i| prefix[i] * suffix[i + 1]).collect()
}

/// Busy probability sensed by a device of each class:
/// `q_i = 1 - prod_{h != i} silence_h * tagged_i`.
pub fn busy_probability(classes: &[ContentionClass], taus: &[f64]) -> Vec<f64> {
    assert_eq!(classes.len(), taus.len());
    leave_one_out_silence(classes, taus)
        .into_iter()
        .zip(classes.iter().zip(taus))
        .map(|(others, (c, &t))| (1.0 - others * c.population.tagged_silence(t)).clamp(0.0, 1.0))
        .collect()
}

/// Probability that at least one device transmits.
pub fn transmission_probability(classes: &[ContentionClass], taus: &[f64]) -> f64 {
    assert_eq!(classes.len(), taus.len());
    let silent: f64 = classes
        .iter()
        .zip(taus)
        .filter(|(c, _)| !c.population.negligible())
        .map(|(c, &t)| c.population.silence(t))
        .product();
    1.0 - silent
}

/// Probability that the slot carries a success from class `i`.
pub fn success_probabilities(classes: &[ContentionClass], taus: &[f64]) -> Vec<f64> {
    assert_eq!(classes.len(), taus.len());
    leave_one_out_silence(classes, taus)
        .into_iter()
        .zip(classes.iter().zip(taus))
        .map(|(others, (c, &t))| {
            if c.population.negligible() {
                0.0
            } else {
                others * c.population.single_transmitter(t)
            }
        })
        .collect()
}

/// Stationary probability of state `(0, 0)` of the retry-limited backoff
/// chain when every attempt fails with probability `p_eq`.
///
/// Normalisation gives `1 = b_00 sum_j p^j (W_j + 1) / 2`; the finite sums are
/// evaluated directly, so `p_eq = 1/2` and `p_eq = 1` need no special case.
pub fn stationary_b00(p_eq: f64, schedule: &BackoffSchedule) -> f64 {
    let mut weight = 1.0;
    let mut total = 0.0;
    for w in schedule.windows() {
        total += weight * (w as f64 + 1.0) / 2.0;
        weight *= p_eq;
    }
    1.0 / total
}

/// Full stationary vector `b[j][k]`, `b_{j,0} = p^j b_00` and
/// `b_{j,k} = (W_j - k) / W_j * b_{j,0}`.
pub fn stationary_distribution(p_eq: f64, schedule: &BackoffSchedule) -> Vec<Vec<f64>> {
    let b00 = stationary_b00(p_eq, schedule);
    let mut head = b00;
    schedule
        .windows()
        .map(|w| {
            let row = (0..w).map(|k| (w - k) as f64 / w as f64 * head).collect();
            head *= p_eq;
            row
        })
        .collect()
}

/// `tau = b_00 (1 - p^{L+1}) / (1 - p)`, as the finite sum `b_00 sum_j p^j`.
pub fn transmission_from_b00(b00: f64, p_eq: f64, schedule: &BackoffSchedule) -> f64 {
    let stages = schedule.retry_limit() as i32 + 1;
    b00 * (0..stages).map(|j| p_eq.powi(j)).sum::<f64>()
}

fn reach_last(p_eq: f64, b00: f64, schedule: &BackoffSchedule, reading: LastStageReading) -> f64 {
    let limit = schedule.retry_limit() as i32;
    match reading {
        LastStageReading::StationaryLastStage => p_eq.powi(limit) * b00,
        LastStageReading::TraversalSuccess => 1.0 - p_eq.powi(limit + 1),
    }
}

/// Saturation throughput: share of channel time carrying payload.
///
/// A collision occupies the channel for `T_c + T_o`.
pub fn saturation_throughput(p_tr: f64, p_success: f64, timing: &MacTiming) -> f64 {
    if p_tr <= 0.0 {
        return 0.0;
    }
    let payload = timing.t_payload as f64;
    let sigma = timing.delta_idle as f64;
    let t_s = timing.busy_success_time() as f64;
    let t_c = timing.collision_cost() as f64;
    let useful = p_success * p_tr * payload;
    useful / ((1.0 - p_tr) * sigma + p_success * p_tr * t_s + p_tr * (1.0 - p_success) * t_c)
}

/// Evaluates one sweep of the per-class map at `(taus, quits)`.
fn evaluate(
    classes: &[ContentionClass],
    taus: &[f64],
    quits: &[f64],
    schedule: &BackoffSchedule,
    options: &SolverOptions,
) -> Vec<ClusterState> {
    let busy = busy_probability(classes, taus);
    classes
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let q = busy[i];
            let quit = quits[i];
            let p_eq = ((1.0 - quit) * q + quit).clamp(0.0, 1.0);
            let b00 = stationary_b00(p_eq, schedule);
            let tau = transmission_from_b00(b00, p_eq, schedule);
            let p_reach_last = reach_last(p_eq, b00, schedule, options.last_stage);
            let next_quit = if options.quitting {
                (1.0 - p_reach_last).powf(f64::from(class.traversals.max(1)))
            } else {
                0.0
            };
            ClusterState {
                tau,
                q_busy: q,
                quit: next_quit,
                p_eq,
                b00,
                p_reach_last,
            }
        })
        .collect()
}

/// Solution of the per-class fixed point for fixed classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSolution {
    pub states: Vec<ClusterState>,
    pub p_tr: f64,
    /// Sum of the per-class success probabilities.
    pub p_s: f64,
    pub p_s_per_class: Vec<f64>,
    /// Success probability used in the throughput ratio.
    pub p_success: f64,
    pub throughput: f64,
    pub iterations: usize,
    /// `max |F(x) - x|` at the returned point.
    pub residual: f64,
}

/// Damped fixed point on `(tau_i, Q_i)` for a fixed set of classes.
pub fn solve_classes(
    classes: &[ContentionClass],
    schedule: &BackoffSchedule,
    timing: &MacTiming,
    options: &SolverOptions,
) -> ClassSolution {
    solve_classes_from(classes, schedule, timing, options, None)
}

fn solve_classes_from(
    classes: &[ContentionClass],
    schedule: &BackoffSchedule,
    timing: &MacTiming,
    options: &SolverOptions,
    warm: Option<(&[f64], &[f64])>,
) -> ClassSolution {
    let k = classes.len();
    let (mut taus, mut quits) = match warm {
        Some((t, q)) if t.len() == k && q.len() == k => (t.to_vec(), q.to_vec()),
        _ => {
            let start = 2.0 / (f64::from(schedule.cw_min()) + 1.0);
            (vec![start; k], vec![0.0; k])
        }
    };
    let alpha = options.damping;
    let mut iterations = 0;
    let (states, residual) = loop {
        iterations += 1;
        let mapped = evaluate(classes, &taus, &quits, schedule, options);
        let residual = mapped
            .iter()
            .zip(taus.iter().zip(&quits))
            .map(|(m, (t, q))| (m.tau - t).abs().max((m.quit - q).abs()))
            .fold(0.0, f64::max);
        if residual < options.inner_tolerance || iterations >= options.inner_max_iterations {
            let states = mapped
                .into_iter()
                .zip(taus.iter().zip(&quits))
                .map(|(m, (&tau, &quit))| ClusterState { tau, quit, ..m })
                .collect::<Vec<_>>();
            break (states, residual);
        }
        for (i, m) in mapped.iter().enumerate() {
            taus[i] += alpha * (m.tau - taus[i]);
            quits[i] += alpha * (m.quit - quits[i]);
        }
    };
    let taus: Vec<f64> = states.iter().map(|s| s.tau).collect();
    let p_tr = transmission_probability(classes, &taus);
    let p_s_per_class = success_probabilities(classes, &taus);
    let p_s: f64 = p_s_per_class.iter().sum();
    let p_success = success_share(p_s, p_tr, options.success);
    ClassSolution {
        throughput: saturation_throughput(p_tr, p_success, timing),
        states,
        p_tr,
        p_s,
        p_s_per_class,
        p_success,
        iterations,
        residual,
    }
}

fn success_share(p_s: f64, p_tr: f64, normalization: SuccessNormalization) -> f64 {
    match normalization {
        SuccessNormalization::Conditional if p_tr > 0.0 => (p_s / p_tr).min(1.0),
        SuccessNormalization::Conditional => 0.0,
        SuccessNormalization::Unconditional => p_s,
    }
}

/// Per-equation residuals of a returned solution, recomputed from its
/// `tau_i` and `Q_i`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub tau: f64,
    pub busy: f64,
    pub quit: f64,
    pub p_eq: f64,
    pub b00: f64,
    /// `|Delta(solution) - Delta| / Delta`.
    pub delta_rel: f64,
}

impl Residuals {
    /// Largest residual among the per-class equations.
    pub fn max_class(&self) -> f64 {
        [self.tau, self.busy, self.quit, self.p_eq, self.b00]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Substitutes `states` back into every per-class equation.
pub fn class_residuals(
    classes: &[ContentionClass],
    states: &[ClusterState],
    schedule: &BackoffSchedule,
    options: &SolverOptions,
) -> Residuals {
    let taus: Vec<f64> = states.iter().map(|s| s.tau).collect();
    let quits: Vec<f64> = states.iter().map(|s| s.quit).collect();
    let fresh = evaluate(classes, &taus, &quits, schedule, options);
    let mut r = Residuals::default();
    for (s, f) in states.iter().zip(&fresh) {
        r.busy = r.busy.max((s.q_busy - f.q_busy).abs());
        r.p_eq = r.p_eq.max((s.p_eq - f.p_eq).abs());
        r.b00 = r.b00.max((s.b00 - f.b00).abs());
        r.tau = r.tau.max((s.tau - f.tau).abs());
        r.quit = r.quit.max((s.quit - f.quit).abs());
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Iterations {
    pub outer: usize,
    pub inner: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSolution {
    pub partition: ClusterSet,
    pub clusters: Vec<ClusterState>,
    /// Converged traversal cost in seconds.
    pub delta: f64,
    pub p_tr: f64,
    /// Sum of the per-cluster success probabilities.
    pub p_s: f64,
    /// Success probability used in the throughput ratio.
    pub p_success: f64,
    pub throughput: f64,
    pub residuals: Residuals,
    pub iterations: Iterations,
    pub diagnostics: Vec<String>,
}

impl ModelSolution {
    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn classes(&self) -> Vec<ContentionClass> {
        classes_for(&self.partition)
    }
}

pub fn classes_for(partition: &ClusterSet) -> Vec<ContentionClass> {
    partition
        .clusters
        .iter()
        .map(|c| ContentionClass {
            traversals: c.index,
            population: Population::Poisson(c.mean_count),
        })
        .collect()
}

/// Traversal cost implied by a class solution: the population-weighted mean
/// of the per-cluster costs. Infinite when some cluster senses a busy channel
/// with certainty.
pub fn implied_traversal_cost(
    classes: &[ContentionClass],
    solution: &ClassSolution,
    timing: &MacTiming,
    schedule: &BackoffSchedule,
) -> Result<f64> {
    let p_b = solution.p_tr;
    let p_s = (solution.p_success * solution.p_tr).min(p_b);
    let mut weighted = 0.0;
    let mut weight = 0.0;
    for (class, state) in classes.iter().zip(&solution.states) {
        let w = class.population.mean();
        if w < NEGLIGIBLE_MEAN {
            continue;
        }
        let cost = if state.q_busy >= 1.0 {
            f64::INFINITY
        } else {
            traversal_cost(timing, schedule, state.q_busy, p_s, p_b)?
        };
        weighted += w * cost;
        weight += w;
    }
    if weight == 0.0 {
        return traversal_cost(timing, schedule, 0.0, 0.0, 0.0);
    }
    Ok(weighted / weight)
}

/// Largest allowed traversal cost as a fraction of the centreline chord time.
const DELTA_CEILING: f64 = 1.0 - 1e-9;
/// Consecutive clamped proposals after which the scenario is declared
/// infeasible.
const MAX_PINNED: usize = 40;

/// Solves the coupled model for a scenario.
pub fn solve_fixed_point(scenario: &Scenario, options: &SolverOptions) -> Result<ModelSolution> {
    scenario.validate()?;
    options.validate()?;
    let timing = &scenario.timing;
    let schedule = &scenario.schedule;
    let ceiling = scenario.max_chord_duration() * DELTA_CEILING;

    let mut delta = traversal_cost(timing, schedule, 0.0, 0.0, 0.0)?;
    if coverage::cluster_count(scenario, delta)? == 0 {
        return Err(Error::Infeasible(format!(
            "even without contention a traversal takes {delta:.3} s, longer than the \
             centreline crossing time {:.3} s",
            scenario.max_chord_duration()
        )));
    }

    let mut alpha = options.damping;
    let mut frozen: Option<u32> = None;
    let mut counts: Vec<usize> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut warm: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut inner_total = 0;
    let mut pinned = 0;
    let mut last_rel = f64::INFINITY;
    let mut snapshot = ResidualSnapshot::default();

    for outer in 1..=options.outer_max_iterations {
        let partition = coverage::build_clusters_capped(scenario, delta, frozen)?;
        let classes = classes_for(&partition);
        let solution = solve_classes_from(
            &classes,
            schedule,
            timing,
            options,
            warm.as_ref().map(|(t, q)| (t.as_slice(), q.as_slice())),
        );
        inner_total += solution.iterations;
        let implied = implied_traversal_cost(&classes, &solution, timing, schedule)?;
        let rel = (implied - delta).abs() / delta;
        snapshot = ResidualSnapshot {
            inner: solution.residual,
            delta_rel: rel,
        };
        counts.push(partition.len());
        let count_stable = counts.len() >= 2 && counts[counts.len() - 2] == partition.len();

        if rel < options.outer_tolerance
            && count_stable
            && solution.residual < options.inner_tolerance
        {
            let mut residuals = class_residuals(&classes, &solution.states, schedule, options);
            residuals.delta_rel = rel;
            if let Some(n) = partition.capped_at {
                diagnostics.push(format!("cluster count held at {n}"));
            }
            return Ok(ModelSolution {
                clusters: solution.states,
                delta,
                p_tr: solution.p_tr,
                p_s: solution.p_s,
                p_success: solution.p_success,
                throughput: solution.throughput,
                residuals,
                iterations: Iterations {
                    outer,
                    inner: inner_total,
                },
                diagnostics,
                partition,
            });
        }

        if implied >= ceiling {
            pinned += 1;
            if pinned >= MAX_PINNED {
                return Err(Error::Infeasible(format!(
                    "traversal cost stays above the centreline crossing time {:.3} s",
                    scenario.max_chord_duration()
                )));
            }
        } else {
            pinned = 0;
        }
        // Shrink the step when the relative change grows.
        if rel > last_rel && alpha > 1.0 / 64.0 {
            alpha *= 0.5;
        }
        last_rel = rel;
        delta += alpha * (implied.min(ceiling) - delta);

        if frozen.is_none() {
            if let Some(n) = alternating_pair(&counts) {
                frozen = Some(n);
                diagnostics.push(format!(
                    "cluster count oscillated; frozen at {n} after {outer} outer iterations"
                ));
            }
        }
        warm = Some((
            solution.states.iter().map(|s| s.tau).collect(),
            solution.states.iter().map(|s| s.quit).collect(),
        ));
    }
    Err(Error::NonConvergence {
        outer: options.outer_max_iterations,
        residuals: snapshot,
    })
}

/// Smaller of two values the recent history alternates between.
fn alternating_pair(counts: &[usize]) -> Option<u32> {
    const WINDOW: usize = 6;
    if counts.len() < WINDOW {
        return None;
    }
    let tail = &counts[counts.len() - WINDOW..];
    let (a, b) = (tail[0], tail[1]);
    if a == b {
        return None;
    }
    let alternates = tail
        .iter()
        .enumerate()
        .all(|(i, &c)| c == if i % 2 == 0 { a } else { b });
    alternates.then(|| a.min(b) as u32)
}
