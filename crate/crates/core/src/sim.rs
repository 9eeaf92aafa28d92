//! Slotted Monte Carlo simulation of saturated CSMA/CA under a moving
//! circular footprint.
//!
//! Every device that is inside the footprint always has a packet. Counters are
//! frozen while the channel is busy; each idle slot and each completed busy
//! period ends one backoff slot and decrements every waiting counter by one.
//! Counters are kept as the absolute slot index at which the device fires, so
//! runs of idle slots are skipped in one step.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::coverage::Scenario;
use crate::error::{invalid, Result};
use crate::timing::{BackoffSchedule, MacTiming, MICROS_PER_SECOND};

/// Runs with fewer counted busy events are flagged as low confidence.
pub const MIN_CONFIDENT_EVENTS: u64 = 100_000;
/// Default length of the counted part of a flight, in seconds.
pub const DEFAULT_MEASURED_TIME: f64 = 8_000.0;

/// A ground device of the generated field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldDevice {
    /// Position along the flight axis, metres from the corridor start.
    pub along_position: f64,
    /// Signed distance from the flight axis in metres.
    pub lateral_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: Scenario,
    /// Corridor length in metres.
    pub flight_length: f64,
    /// Seconds excluded from the statistics at the start.
    pub warmup_time: f64,
    pub seed: u64,
    /// Optional cap on simulated seconds.
    pub max_time: Option<f64>,
    /// When set, successes are bucketed by `floor(T(x) / cluster_delta)`.
    pub cluster_delta: Option<f64>,
}

impl SimConfig {
    /// Warm-up of one footprint crossing followed by
    /// [`DEFAULT_MEASURED_TIME`] counted seconds.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        let warmup_time = scenario.max_chord_duration();
        let flight_length =
            scenario.radius + scenario.velocity * (warmup_time + DEFAULT_MEASURED_TIME);
        Self {
            scenario,
            flight_length,
            warmup_time,
            seed,
            max_time: None,
            cluster_delta: None,
        }
    }

    pub fn with_measured_time(mut self, seconds: f64) -> Self {
        self.flight_length =
            self.scenario.radius + self.scenario.velocity * (self.warmup_time + seconds);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if !(self.flight_length >= 10.0 * self.scenario.radius) {
            return Err(invalid(
                "flight_length",
                "must be at least ten coverage radii",
            ));
        }
        if !(self.warmup_time >= 0.0 && self.warmup_time.is_finite()) {
            return Err(invalid("warmup_time", "must be non-negative"));
        }
        if let Some(t) = self.max_time {
            if !(t > 0.0) {
                return Err(invalid("max_time", "must be positive"));
            }
        }
        if let Some(d) = self.cluster_delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(invalid("cluster_delta", "must be positive"));
            }
        }
        Ok(())
    }

    /// Time at which the footprint reaches the end of the corridor; the run
    /// stops there so that the footprint never leaves the populated strip.
    pub fn end_time(&self) -> f64 {
        let end = (self.flight_length - self.scenario.radius) / self.scenario.velocity;
        self.max_time.map_or(end, |m| end.min(m))
    }
}

/// Homogeneous Poisson field on `[0, flight_length] x [-R, R]`, sorted by
/// along-track position.
pub fn spawn_field<R: Rng>(
    density: f64,
    radius: f64,
    flight_length: f64,
    rng: &mut R,
) -> Vec<FieldDevice> {
    let mean = density * 2.0 * radius * flight_length;
    if mean <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(mean).expect("positive mean").sample(rng) as usize;
    let mut field: Vec<FieldDevice> = (0..count)
        .map(|_| FieldDevice {
            along_position: rng.random::<f64>() * flight_length,
            lateral_offset: (rng.random::<f64>() * 2.0 - 1.0) * radius,
        })
        .collect();
    field.sort_by(|a, b| a.along_position.total_cmp(&b.along_position));
    field
}

/// A device as seen by the channel: when it is covered, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Presence {
    pub enter: u64,
    pub exit: u64,
    pub bucket: Option<u32>,
}

impl Presence {
    pub fn always() -> Self {
        Self {
            enter: 0,
            exit: u64::MAX,
            bucket: None,
        }
    }
}

#[derive(Debug, Clone)]
struct Station {
    id: usize,
    stage: u32,
    exit: u64,
    bucket: Option<u32>,
    rng: ChaCha8Rng,
}

/// Result of one engine step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    /// A run of idle slots.
    Idle {
        slots: u64,
    },
    Success,
    Collision {
        colliders: usize,
    },
}

/// Channel state of one run.
#[derive(Debug, Clone)]
pub struct Engine {
    timing: MacTiming,
    schedule: BackoffSchedule,
    seed: u64,
    presence: Vec<Presence>,
    /// Indices into `presence` sorted by entry time.
    arrivals: Vec<usize>,
    next_arrival: usize,
    stations: Vec<Station>,
    /// Slot index at which each station transmits; parallel to `stations`.
    fire_at: Vec<u64>,
    /// Backoff slots elapsed so far, idle or busy.
    slot_index: u64,
    /// Current time in microseconds.
    clock: u64,
    end: u64,
    warmup: u64,
    stats: SimReport,
}

impl Engine {
    pub fn new(
        timing: MacTiming,
        schedule: BackoffSchedule,
        presence: Vec<Presence>,
        seed: u64,
        warmup: u64,
        end: u64,
    ) -> Self {
        let mut arrivals: Vec<usize> = (0..presence.len()).collect();
        arrivals.sort_by_key(|&i| (presence[i].enter, i));
        let mut engine = Self {
            timing,
            schedule,
            seed,
            presence,
            arrivals,
            next_arrival: 0,
            stations: Vec::new(),
            fire_at: Vec::new(),
            slot_index: 0,
            clock: 0,
            end,
            warmup,
            stats: SimReport::default(),
        };
        engine.refresh();
        engine
    }

    /// `n` devices that are covered for the whole run.
    pub fn fixed(timing: MacTiming, schedule: BackoffSchedule, devices: usize, seed: u64) -> Self {
        Self::new(
            timing,
            schedule,
            vec![Presence::always(); devices],
            seed,
            0,
            u64::MAX,
        )
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn finished(&self) -> bool {
        self.clock >= self.end
    }

    pub fn active_count(&self) -> usize {
        self.stations.len()
    }

    /// `(stage, counter)` of every active device, in admission order.
    pub fn backoff_states(&self) -> Vec<(u32, u64)> {
        self.stations
            .iter()
            .zip(&self.fire_at)
            .map(|(s, &f)| (s.stage, f - self.slot_index))
            .collect()
    }

    /// Overrides the backoff counter of the `k`-th active device.
    pub fn set_counter(&mut self, k: usize, counter: u64) -> Result<()> {
        let window = self.schedule.window(self.stations[k].stage);
        if counter >= window {
            return Err(invalid(
                "counter",
                format!("{counter} is not below window {window}"),
            ));
        }
        self.fire_at[k] = self.slot_index + counter;
        Ok(())
    }

    pub fn report(&self) -> &SimReport {
        &self.stats
    }

    fn draw(&mut self, k: usize) {
        let window = self.schedule.window(self.stations[k].stage);
        let counter = self.stations[k].rng.random_range(0..window);
        self.fire_at[k] = self.slot_index + counter;
    }

    /// Admits devices whose entry time has passed and drops those that left.
    fn refresh(&mut self) {
        let now = self.clock;
        let mut k = 0;
        while k < self.stations.len() {
            if self.stations[k].exit <= now {
                self.stations.swap_remove(k);
                self.fire_at.swap_remove(k);
                if now >= self.warmup {
                    self.stats.departures += 1;
                }
            } else {
                k += 1;
            }
        }
        while self.next_arrival < self.arrivals.len() {
            let id = self.arrivals[self.next_arrival];
            let p = self.presence[id];
            if p.enter > now {
                break;
            }
            self.next_arrival += 1;
            if p.exit <= now {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(id as u64 + 1);
            self.stations.push(Station {
                id,
                stage: 0,
                exit: p.exit,
                bucket: p.bucket,
                rng,
            });
            self.fire_at.push(0);
            let last = self.stations.len() - 1;
            self.draw(last);
        }
    }

    fn next_membership_change(&self) -> u64 {
        let arrival = self
            .arrivals
            .get(self.next_arrival)
            .map_or(u64::MAX, |&i| self.presence[i].enter);
        let exit = self
            .stations
            .iter()
            .map(|s| s.exit)
            .min()
            .unwrap_or(u64::MAX);
        arrival.min(exit)
    }

    fn counted(&self) -> bool {
        self.clock >= self.warmup
    }

    fn idle(&mut self, slots: u64) -> Event {
        let delta = self.timing.delta_idle;
        // Slots that start at or after the warm-up boundary are counted.
        let counted = if self.clock >= self.warmup {
            slots
        } else {
            let skip = (self.warmup - self.clock).div_ceil(delta);
            slots.saturating_sub(skip)
        };
        self.stats.idle_slots += counted;
        self.stats.idle_time += counted * delta;
        self.slot_index += slots;
        self.clock += slots * delta;
        Event::Idle { slots }
    }

    /// Advances by one channel event; consecutive idle slots are one event.
    /// Returns the elapsed microseconds.
    pub fn step(&mut self) -> (Event, u64) {
        let start = self.clock;
        let delta = self.timing.delta_idle;
        let change = self.next_membership_change().min(self.end);
        let slots_to = |t: u64| t.saturating_sub(start).div_ceil(delta).max(1);
        let next_fire = self.fire_at.iter().copied().min();
        let event = match next_fire {
            Some(fire) if fire == self.slot_index => self.transmit(),
            Some(fire) => self.idle((fire - self.slot_index).min(slots_to(change))),
            None if change == u64::MAX => self.idle(1),
            None => self.idle(slots_to(change)),
        };
        if self.clock >= self.next_membership_change() {
            self.refresh();
        }
        debug_assert!(self
            .stations
            .iter()
            .zip(&self.fire_at)
            .all(|(s, &f)| f >= self.slot_index
                && f - self.slot_index < self.schedule.window(s.stage)));
        (event, self.clock - start)
    }

    fn transmit(&mut self) -> Event {
        let now = self.slot_index;
        let senders: Vec<usize> = (0..self.fire_at.len())
            .filter(|&k| self.fire_at[k] == now)
            .collect();
        let counted = self.counted();
        self.slot_index += 1;
        if senders.len() == 1 {
            let k = senders[0];
            let busy = self.timing.busy_success_time();
            if counted {
                self.stats.successes += 1;
                self.stats.success_time += busy;
                self.stats.delivered_payload_time += self.timing.t_payload;
                if let Some(b) = self.stations[k].bucket {
                    *self.stats.per_cluster_successes.entry(b).or_insert(0) += 1;
                }
            }
            self.clock += busy;
            self.stations[k].stage = 0;
            self.draw(k);
            Event::Success
        } else {
            let busy = self.timing.collision_cost();
            if counted {
                self.stats.collisions += 1;
                self.stats.collision_time += busy;
            }
            self.clock += busy;
            for &k in &senders {
                let station = &mut self.stations[k];
                if station.stage >= self.schedule.retry_limit() {
                    station.stage = 0;
                    if counted {
                        self.stats.drops += 1;
                    }
                } else {
                    station.stage += 1;
                }
                self.draw(k);
            }
            Event::Collision {
                colliders: senders.len(),
            }
        }
    }

    /// Steps until the end time, or until `busy_events` counted busy events
    /// when given.
    pub fn run_until(&mut self, busy_events: Option<u64>) -> SimReport {
        while !self.finished() {
            if let Some(target) = busy_events {
                if self.stats.busy_events() >= target {
                    break;
                }
            }
            self.step();
        }
        self.finish()
    }

    fn finish(&self) -> SimReport {
        let mut report = self.stats.clone();
        report.counted_time = report.idle_time + report.success_time + report.collision_time;
        report.normalized_throughput = if report.counted_time == 0 {
            0.0
        } else {
            report.delivered_payload_time as f64 / report.counted_time as f64
        };
        report.low_confidence = report.busy_events() < MIN_CONFIDENT_EVENTS;
        report.devices = self.presence.len();
        report
    }

    /// Id of the `k`-th active device in the generated field.
    pub fn device_id(&self, k: usize) -> usize {
        self.stations[k].id
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimReport {
    pub successes: u64,
    pub collisions: u64,
    /// Packets dropped at the retry limit.
    pub drops: u64,
    /// Devices that left the footprint while contending.
    pub departures: u64,
    pub idle_slots: u64,
    /// Durations in microseconds.
    pub idle_time: u64,
    pub success_time: u64,
    pub collision_time: u64,
    pub delivered_payload_time: u64,
    pub counted_time: u64,
    pub normalized_throughput: f64,
    pub per_cluster_successes: BTreeMap<u32, u64>,
    pub low_confidence: bool,
    /// Devices in the generated field.
    pub devices: usize,
}

impl SimReport {
    pub fn busy_events(&self) -> u64 {
        self.successes + self.collisions
    }

    /// Fraction of busy events that were collisions.
    pub fn collision_fraction(&self) -> f64 {
        match self.busy_events() {
            0 => 0.0,
            n => self.collisions as f64 / n as f64,
        }
    }
}

fn to_micros(seconds: f64) -> u64 {
    (seconds * MICROS_PER_SECOND).round() as u64
}

/// Coverage interval of every field device for a UAV starting at the
/// corridor origin.
pub fn presence_for(config: &SimConfig, field: &[FieldDevice]) -> Vec<Presence> {
    let r = config.scenario.radius;
    let v = config.scenario.velocity;
    field
        .iter()
        .map(|d| {
            let half = (r * r - d.lateral_offset * d.lateral_offset)
                .max(0.0)
                .sqrt();
            let bucket = config.cluster_delta.map(|delta| {
                let chord = 2.0 * half / v;
                (chord / delta).floor() as u32
            });
            Presence {
                enter: to_micros(((d.along_position - half) / v).max(0.0)),
                exit: to_micros((d.along_position + half) / v),
                bucket,
            }
        })
        .collect()
}

/// Runs one flight.
pub fn run(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let s = &config.scenario;
    let field = spawn_field(s.density, s.radius, config.flight_length, &mut rng);
    let presence = presence_for(config, &field);
    let mut engine = Engine::new(
        s.timing,
        s.schedule,
        presence,
        config.seed,
        to_micros(config.warmup_time),
        to_micros(config.end_time()),
    );
    Ok(engine.run_until(None))
}

/// `n` always-covered devices with no mobility, stopped after `busy_events`
/// counted busy events following `warmup_events` uncounted ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedConfig {
    pub timing: MacTiming,
    pub schedule: BackoffSchedule,
    pub devices: usize,
    pub busy_events: u64,
    pub warmup_events: u64,
    pub seed: u64,
}

pub fn run_fixed(config: &FixedConfig) -> SimReport {
    let mut engine = Engine::fixed(config.timing, config.schedule, config.devices, config.seed);
    if config.warmup_events > 0 {
        engine.warmup = u64::MAX;
        let mut busy = 0;
        while busy < config.warmup_events && engine.active_count() > 0 {
            if !matches!(engine.step().0, Event::Idle { .. }) {
                busy += 1;
            }
        }
        engine.warmup = engine.clock;
        engine.stats = SimReport::default();
    }
    if engine.active_count() == 0 {
        // Only idle slots are possible; simulate a bounded stretch of them.
        engine.end = engine.clock + config.busy_events.max(1) * engine.timing.delta_idle;
        return engine.run_until(None);
    }
    engine.run_until(Some(config.busy_events))
}

/// Per-seed reports with a Student-t interval on the mean throughput.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub seeds: Vec<u64>,
    pub reports: Vec<SimReport>,
    pub mean: f64,
    pub std_dev: f64,
    /// Half-width of the 95% interval; `None` for a single seed.
    pub ci95: Option<f64>,
}

impl Replication {
    pub fn from_reports(seeds: Vec<u64>, reports: Vec<SimReport>) -> Self {
        let values: Vec<f64> = reports.iter().map(|r| r.normalized_throughput).collect();
        let (mean, std_dev, ci95) = mean_ci95(&values);
        Self {
            seeds,
            reports,
            mean,
            std_dev,
            ci95,
        }
    }

    pub fn ci_undefined(&self) -> bool {
        self.ci95.is_none()
    }

    pub fn low_confidence(&self) -> bool {
        self.ci95.is_none() || self.reports.iter().any(|r| r.low_confidence)
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci95.is_some_and(|h| (value - self.mean).abs() <= h)
    }
}

/// Sample mean, standard deviation and 95% Student-t half-width.
pub fn mean_ci95(values: &[f64]) -> (f64, f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    (mean, sd, Some(t * sd / (n as f64).sqrt()))
}

/// Seeds `base_seed .. base_seed + n_seeds`, run in parallel.
pub fn replicate(config: &SimConfig, n_seeds: u32) -> Result<Replication> {
    if n_seeds == 0 {
        return Err(invalid("n_seeds", "must be at least 1"));
    }
    let seeds: Vec<u64> = (0..u64::from(n_seeds)).map(|k| config.seed + k).collect();
    let reports = seeds
        .par_iter()
        .map(|&seed| {
            run(&SimConfig {
                seed,
                ..config.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Replication::from_reports(seeds, reports))
}

pub fn replicate_fixed(config: &FixedConfig, n_seeds: u32) -> Replication {
    let seeds: Vec<u64> = (0..u64::from(n_seeds.max(1)))
        .map(|k| config.seed + k)
        .collect();
    let reports = seeds
        .par_iter()
        .map(|&seed| {
            run_fixed(&FixedConfig {
                seed,
                ..config.clone()
            })
        })
        .collect();
    Replication::from_reports(seeds, reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::baseline_scenario;
    use crate::reference;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn fixed(devices: usize, busy_events: u64, cw_min: u32, seed: u64) -> FixedConfig {
        FixedConfig {
            timing: MacTiming::default(),
            schedule: BackoffSchedule::new(cw_min, None, 7).unwrap(),
            devices,
            busy_events,
            warmup_events: 1_000,
            seed,
        }
    }

    #[test]
    fn empty_channel_is_idle() {
        let report = run_fixed(&fixed(0, 1_000, 8, 1));
        assert_eq!(report.busy_events(), 0);
        assert_eq!(report.normalized_throughput, 0.0);
        assert!(report.idle_slots > 0);
    }

    #[test]
    fn forced_equal_counters_collide() {
        let mut engine = Engine::fixed(MacTiming::default(), BackoffSchedule::default(), 2, 3);
        engine.set_counter(0, 4).unwrap();
        engine.set_counter(1, 4).unwrap();
        let (event, elapsed) = engine.step();
        assert_eq!(event, Event::Idle { slots: 4 });
        assert_eq!(elapsed, 4 * 50);
        let (event, elapsed) = engine.step();
        assert_eq!(event, Event::Collision { colliders: 2 });
        assert_eq!(elapsed, MacTiming::default().collision_cost());
        assert!(engine.backoff_states().iter().all(|&(stage, _)| stage == 1));
        assert!(engine.set_counter(0, 16).is_err());
    }

    #[test]
    fn busy_period_ends_a_slot() {
        let mut engine = Engine::fixed(MacTiming::default(), BackoffSchedule::default(), 2, 3);
        engine.set_counter(0, 2).unwrap();
        engine.set_counter(1, 5).unwrap();
        assert_eq!(engine.step().0, Event::Idle { slots: 2 });
        assert_eq!(engine.step().0, Event::Success);
        assert_eq!(engine.backoff_states()[1], (0, 2));
    }

    #[test]
    fn time_accounting_is_exact() {
        let mut engine = Engine::fixed(MacTiming::default(), BackoffSchedule::default(), 6, 9);
        let mut total = 0;
        for _ in 0..20_000 {
            total += engine.step().1;
        }
        assert_eq!(total, engine.clock());
        let r = engine.run_until(Some(0));
        assert_eq!(r.counted_time, engine.clock());
        assert!((0.0..=1.0).contains(&r.normalized_throughput));
    }

    #[test]
    fn single_device_renewal() {
        let timing = MacTiming::default();
        let report = run_fixed(&fixed(1, 200_000, 8, 5));
        let expected = timing.t_payload as f64
            / (3.5 * timing.delta_idle as f64 + timing.busy_success_time() as f64);
        let rel = (report.normalized_throughput - expected).abs() / expected;
        assert!(rel < 0.01, "{} vs {expected}", report.normalized_throughput);
        assert_eq!(report.collisions, 0);
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let mut config = SimConfig::new(baseline_scenario(), 42).with_measured_time(1_000.0);
        config.cluster_delta = Some(100.0);
        assert_eq!(run(&config).unwrap(), run(&config).unwrap());
        let other = SimConfig {
            seed: 43,
            ..config.clone()
        };
        assert_ne!(run(&config).unwrap(), run(&other).unwrap());
    }

    #[test]
    fn flight_report_invariants() {
        let mut config = SimConfig::new(baseline_scenario(), 7).with_measured_time(1_000.0);
        config.cluster_delta = Some(50.0);
        let r = run(&config).unwrap();
        assert_eq!(
            r.counted_time,
            r.idle_time + r.success_time + r.collision_time
        );
        assert!((0.0..=1.0).contains(&r.normalized_throughput));
        assert!(r.low_confidence);
        assert_eq!(r.per_cluster_successes.values().sum::<u64>(), r.successes);
        assert!(r.departures > 0);
    }

    #[test]
    fn spawn_count_matches_poisson_mean() {
        let (density, radius, length) = (50e-6, 1000.0, 20_000.0);
        let mean = density * 2.0 * radius * length;
        let counts: Vec<f64> = (0..100)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                spawn_field(density, radius, length, &mut rng).len() as f64
            })
            .collect();
        let avg = counts.iter().sum::<f64>() / 100.0;
        assert!((avg - mean).abs() < 3.0 * (mean / 100.0).sqrt());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(spawn_field(0.0, radius, length, &mut rng).is_empty());
    }

    fn ks_uniform_p_value(mut samples: Vec<f64>) -> f64 {
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let d = samples
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).max((i as f64 + 1.0) / n - x))
            .fold(0.0, f64::max);
        // Asymptotic Kolmogorov distribution.
        let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
        let tail: f64 = (1..100)
            .map(|k| {
                let k = k as f64;
                2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        tail.clamp(0.0, 1.0)
    }

    #[test]
    fn spawn_marginals_are_uniform() {
        let (radius, length) = (1000.0, 20_000.0);
        let mut along = Vec::new();
        let mut lateral = Vec::new();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for d in spawn_field(50e-6, radius, length, &mut rng) {
                along.push(d.along_position / length);
                lateral.push((d.lateral_offset + radius) / (2.0 * radius));
            }
        }
        assert!(ks_uniform_p_value(along) > 0.01);
        assert!(ks_uniform_p_value(lateral) > 0.01);
    }

    #[test]
    fn fixed_population_matches_classical_model() {
        let timing = MacTiming::default();
        let schedule = BackoffSchedule::new(16, None, 7).unwrap();
        let expected = reference::bianchi_fixed_n(10, &schedule, &timing).throughput;
        let rep = replicate_fixed(&fixed(10, 100_000, 16, 11), 4);
        let rel = (rep.mean - expected).abs() / expected;
        assert!(rel < 0.02, "{} vs {expected}", rep.mean);
    }

    #[test]
    fn single_seed_interval_is_undefined() {
        let rep = replicate_fixed(&fixed(3, 2_000, 8, 1), 1);
        assert!(rep.ci_undefined());
        assert!(rep.low_confidence());
    }

    #[test]
    fn interval_narrows_with_more_seeds() {
        let few = replicate_fixed(&fixed(5, 5_000, 8, 100), 5);
        let many = replicate_fixed(&fixed(5, 5_000, 8, 100), 40);
        assert!(many.ci95.unwrap() < few.ci95.unwrap());
    }

    #[test]
    fn interval_coverage_near_nominal() {
        // Normal samples with known mean: the t-interval should cover it
        // about 95% of the time.
        let normal = Normal::new(0.3, 0.02).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let trials = 2_000;
        let covered = (0..trials)
            .filter(|_| {
                let xs: Vec<f64> = (0..10)
                    .map(|_| normal.inverse_cdf(rng.random::<f64>()))
                    .collect();
                let (m, _, h) = mean_ci95(&xs);
                (m - 0.3).abs() <= h.unwrap()
            })
            .count();
        let rate = covered as f64 / trials as f64;
        assert!((0.93..=0.97).contains(&rate), "{rate}");
    }
}
