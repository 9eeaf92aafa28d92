//! Protocol time constants, busy/collision durations for basic and RTS/CTS
//! access, the binary exponential backoff schedule, and the expected time a
//! packet needs to run through every backoff stage.
//!
//! All protocol constants are integer microseconds. Derived means (`E(B)`,
//! `E(F)`, the traversal cost) are reals; the traversal cost is returned in
//! seconds because it is compared against chord crossing times.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MICROS_PER_SECOND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AccessMode {
    #[default]
    Basic,
    RtsCts,
}

impl AccessMode {
    pub const ALL: [AccessMode; 2] = [AccessMode::Basic, AccessMode::RtsCts];

    pub fn as_str(self) -> &'static str {
        match self {
            AccessMode::Basic => "basic",
            AccessMode::RtsCts => "rts-cts",
        }
    }
}

impl std::fmt::Display for AccessMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AccessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(AccessMode::Basic),
            "rts-cts" | "rtscts" | "rts/cts" => Ok(AccessMode::RtsCts),
            other => Err(invalid("mode", format!("unknown access mode `{other}`"))),
        }
    }
}

/// MAC and PHY time constants, all in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacTiming {
    /// Idle slot length.
    pub delta_idle: u64,
    pub sifs: u64,
    pub difs: u64,
    /// MAC + PHY header transmission time.
    pub t_header: u64,
    /// Payload transmission time; also the mean payload in the throughput
    /// numerator.
    pub t_payload: u64,
    pub t_ack: u64,
    pub t_rts: u64,
    pub t_cts: u64,
    pub t_ack_timeout: u64,
    pub t_cts_timeout: u64,
    /// Propagation term of the basic-access busy durations.
    pub prop_delay: u64,
    pub access_mode: AccessMode,
}

impl Default for MacTiming {
    /// 1 Mbit/s channel, 8 kB payload, 802.11-style constants.
    fn default() -> Self {
        Self {
            delta_idle: 50,
            sifs: 28,
            difs: 128,
            t_header: 400,
            t_payload: 65_536,
            t_ack: 112,
            t_rts: 160,
            t_cts: 112,
            t_ack_timeout: 300,
            t_cts_timeout: 300,
            prop_delay: 1,
            access_mode: AccessMode::Basic,
        }
    }
}

impl MacTiming {
    pub fn with_mode(mut self, mode: AccessMode) -> Self {
        self.access_mode = mode;
        self
    }

    /// Checks that every constant is strictly positive.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("delta_idle", self.delta_idle),
            ("sifs", self.sifs),
            ("difs", self.difs),
            ("t_header", self.t_header),
            ("t_payload", self.t_payload),
            ("t_ack", self.t_ack),
            ("t_rts", self.t_rts),
            ("t_cts", self.t_cts),
            ("t_ack_timeout", self.t_ack_timeout),
            ("t_cts_timeout", self.t_cts_timeout),
            ("prop_delay", self.prop_delay),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(invalid(name, "duration must be strictly positive"));
            }
        }
        Ok(())
    }

    /// `T_s`: channel time consumed by a successful exchange.
    pub fn busy_success_time(&self) -> u64 {
        match self.access_mode {
            AccessMode::Basic => {
                self.t_header
                    + self.t_payload
                    + self.sifs
                    + self.t_ack
                    + self.difs
                    + 2 * self.prop_delay
            }
            AccessMode::RtsCts => {
                self.t_rts
                    + self.t_cts
                    + self.t_header
                    + self.t_payload
                    + 3 * self.sifs
                    + self.t_ack
                    + self.difs
            }
        }
    }

    /// `T_c`: channel time consumed by a collision.
    ///
    /// The RTS/CTS variant charges `T_RTS + SIFS + T_ACK + DIFS` as printed
    /// in the model, not the CTS-timeout form of 802.11.
    pub fn busy_collision_time(&self) -> u64 {
        match self.access_mode {
            AccessMode::Basic => self.t_header + self.t_payload + self.difs + self.prop_delay,
            AccessMode::RtsCts => self.t_rts + self.sifs + self.t_ack + self.difs,
        }
    }

    /// `T_o`: wait after a collision before sensing again.
    pub fn post_collision_wait(&self) -> u64 {
        match self.access_mode {
            AccessMode::Basic => self.sifs + self.t_ack_timeout,
            AccessMode::RtsCts => self.sifs + self.t_cts_timeout,
        }
    }

    /// Shared-clock cost of one collision event, `T_c + T_o`.
    pub fn collision_cost(&self) -> u64 {
        self.busy_collision_time() + self.post_collision_wait()
    }
}

/// Contention windows per backoff stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackoffSchedule {
    cw_min: u32,
    cw_max: Option<u32>,
    retry_limit: u32,
}

impl BackoffSchedule {
    pub fn new(cw_min: u32, cw_max: Option<u32>, retry_limit: u32) -> Result<Self> {
        if cw_min < 2 || !cw_min.is_power_of_two() {
            return Err(invalid(
                "cw_min",
                format!("{cw_min} is not a power of two >= 2"),
            ));
        }
        if let Some(max) = cw_max {
            if max < cw_min || !max.is_power_of_two() {
                return Err(invalid(
                    "cw_max",
                    format!("{max} must be a power of two >= cw_min ({cw_min})"),
                ));
            }
        }
        // 2^L * cw_min must stay representable.
        if retry_limit > 40 {
            return Err(invalid("retry_limit", format!("{retry_limit} exceeds 40")));
        }
        Ok(Self {
            cw_min,
            cw_max,
            retry_limit,
        })
    }

    pub fn cw_min(&self) -> u32 {
        self.cw_min
    }

    pub fn cw_max(&self) -> Option<u32> {
        self.cw_max
    }

    pub fn retry_limit(&self) -> u32 {
        self.retry_limit
    }

    /// Contention window of stage `j`, `min(2^j * CW_min, CW_max)`.
    pub fn window(&self, stage: u32) -> u64 {
        let doubled = u64::from(self.cw_min) << stage.min(63);
        match self.cw_max {
            Some(max) => doubled.min(u64::from(max)),
            None => doubled,
        }
    }

    pub fn windows(&self) -> impl Iterator<Item = u64> + '_ {
        (0..=self.retry_limit).map(|j| self.window(j))
    }

    /// `E(B)`: backoff slots counted down when a packet visits every stage.
    pub fn mean_backoff_counter(&self) -> f64 {
        self.windows().map(|w| (w as f64 - 1.0) / 2.0).sum()
    }
}

impl Default for BackoffSchedule {
    fn default() -> Self {
        Self {
            cw_min: 8,
            cw_max: None,
            retry_limit: 7,
        }
    }
}

/// `E(F) = E(B) q / (1 - q)`: expected number of busy periods that freeze the
/// counter while `eb` idle slots are counted down.
pub fn mean_freeze_time(eb: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) || q.is_nan() {
        return Err(invalid("q", format!("{q} is not a probability")));
    }
    if q >= 1.0 {
        return Err(Error::FreezeDivergence(q));
    }
    Ok(eb * q / (1.0 - q))
}

/// Expected time (seconds) for a packet to traverse all backoff stages:
/// idle countdown, freezes weighted by the success/collision mixture, and one
/// collision plus timeout per failed stage.
pub fn traversal_cost(
    timing: &MacTiming,
    schedule: &BackoffSchedule,
    q: f64,
    p_s: f64,
    p_b: f64,
) -> Result<f64> {
    for (name, p) in [("p_s", p_s), ("p_b", p_b)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(name, format!("{p} is not a probability")));
        }
    }
    if p_s > p_b {
        return Err(invalid("p_s", format!("{p_s} exceeds p_b = {p_b}")));
    }
    let eb = schedule.mean_backoff_counter();
    let ef = mean_freeze_time(eb, q)?;
    let t_s = timing.busy_success_time() as f64;
    let t_c = timing.busy_collision_time() as f64;
    let freeze = if ef == 0.0 {
        0.0
    } else if p_b == 0.0 {
        return Err(Error::UndefinedMixture(ef));
    } else {
        let success_share = p_s / p_b;
        ef * (success_share * t_s + (1.0 - success_share) * t_c)
    };
    let failures = f64::from(schedule.retry_limit) * timing.collision_cost() as f64;
    Ok((eb * timing.delta_idle as f64 + freeze + failures) / MICROS_PER_SECOND)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zeroed() -> MacTiming {
        MacTiming {
            delta_idle: 0,
            sifs: 0,
            difs: 0,
            t_header: 0,
            t_payload: 0,
            t_ack: 0,
            t_rts: 0,
            t_cts: 0,
            t_ack_timeout: 0,
            t_cts_timeout: 0,
            prop_delay: 0,
            access_mode: AccessMode::Basic,
        }
    }

    #[test]
    fn success_time_basic_defaults() {
        let t = MacTiming::default();
        assert_eq!(t.t_payload, 8 * 1024 * 8);
        assert_eq!(t.busy_success_time(), 400 + 65_536 + 28 + 112 + 128 + 2);
    }

    #[test]
    fn success_time_degenerate_sum() {
        let t = MacTiming {
            t_payload: 1,
            ..zeroed()
        };
        assert_eq!(t.busy_success_time(), 1);
    }

    #[test]
    fn success_time_rts_term_by_term() {
        let t = MacTiming::default().with_mode(AccessMode::RtsCts);
        let terms = [160, 112, 400, 65_536, 3 * 28, 112, 128];
        assert_eq!(t.busy_success_time(), terms.iter().sum::<u64>());
        assert_eq!(t.busy_success_time(), 66_532);
    }

    #[test]
    fn collision_times() {
        let basic = MacTiming::default();
        assert_eq!(basic.busy_collision_time(), 400 + 65_536 + 128 + 1);
        let no_payload = MacTiming {
            t_payload: 0,
            ..basic
        };
        assert_eq!(no_payload.busy_collision_time(), 400 + 128 + 1);
        let rts = basic.with_mode(AccessMode::RtsCts);
        assert_eq!(rts.busy_collision_time(), 428);
    }

    #[test]
    fn post_collision_waits() {
        let basic = MacTiming::default();
        assert_eq!(basic.post_collision_wait(), 328);
        assert_eq!(
            basic.with_mode(AccessMode::RtsCts).post_collision_wait(),
            328
        );
        let t = MacTiming {
            sifs: 28,
            ..zeroed()
        };
        assert_eq!(t.post_collision_wait(), 28);
    }

    #[test]
    fn default_success_exceeds_collision() {
        for mode in AccessMode::ALL {
            let t = MacTiming::default().with_mode(mode);
            assert!(t.busy_success_time() > t.busy_collision_time());
            t.validate().unwrap();
        }
        assert!(zeroed().validate().is_err());
    }

    #[test]
    fn mean_backoff_examples() {
        let s = BackoffSchedule::new(8, None, 7).unwrap();
        let oracle: f64 = (0..=7).map(|j| ((1u64 << j) * 8 - 1) as f64 / 2.0).sum();
        assert_eq!(oracle, 1016.0);
        assert_eq!(s.mean_backoff_counter(), 1016.0);

        let single = BackoffSchedule::new(2, None, 0).unwrap();
        assert_eq!(single.mean_backoff_counter(), 0.5);

        let capped = BackoffSchedule::new(16, Some(1024), 7).unwrap();
        let windows = [16u64, 32, 64, 128, 256, 512, 1024, 1024];
        let oracle: f64 = windows.iter().map(|&w| (w - 1) as f64 / 2.0).sum();
        assert_eq!(capped.mean_backoff_counter(), oracle);
        assert_eq!(capped.windows().collect::<Vec<_>>(), windows);
    }

    #[test]
    fn schedule_validation() {
        assert!(BackoffSchedule::new(1, None, 7).is_err());
        assert!(BackoffSchedule::new(12, None, 7).is_err());
        assert!(BackoffSchedule::new(16, Some(8), 7).is_err());
        assert!(BackoffSchedule::new(16, Some(1000), 7).is_err());
        assert!(BackoffSchedule::new(16, Some(16), 7).is_ok());
    }

    #[test]
    fn freeze_time_examples() {
        assert_eq!(mean_freeze_time(1016.0, 0.0).unwrap(), 0.0);
        assert_eq!(mean_freeze_time(1016.0, 0.5).unwrap(), 1016.0);
        assert!((mean_freeze_time(1016.0, 0.2).unwrap() - 254.0).abs() < 1e-12);
        assert!(matches!(
            mean_freeze_time(1016.0, 1.0),
            Err(Error::FreezeDivergence(_))
        ));
    }

    #[test]
    fn traversal_cost_without_freezing() {
        let t = MacTiming::default();
        let s = BackoffSchedule::default();
        let got = traversal_cost(&t, &s, 0.0, 0.0, 0.0).unwrap();
        let want = (1016.0 * 50.0 + 7.0 * (66_065.0 + 328.0)) / 1e6;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn traversal_cost_pure_success_mixture() {
        let t = MacTiming::default();
        let s = BackoffSchedule::default();
        let got = traversal_cost(&t, &s, 0.4, 0.3, 0.3).unwrap();
        let ef = 1016.0 * 0.4 / 0.6;
        let want = (1016.0 * 50.0 + ef * 66_206.0 + 7.0 * 66_393.0) / 1e6;
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn traversal_cost_term_by_term() {
        let t = MacTiming::default();
        let s = BackoffSchedule::default();
        // q = 0.3, p_s / p_b = 0.8
        let got = traversal_cost(&t, &s, 0.3, 0.4, 0.5).unwrap();
        let backoff = 1016.0 * 50.0;
        let freezes = 1016.0 * 0.3 / 0.7;
        let mixture = 0.8 * 66_206.0 + 0.2 * 66_065.0;
        let failures = 7.0 * (66_065.0 + 328.0);
        let want = (backoff + freezes * mixture + failures) / 1e6;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn traversal_cost_rejects_undefined_mixture() {
        let t = MacTiming::default();
        let s = BackoffSchedule::default();
        assert!(matches!(
            traversal_cost(&t, &s, 0.3, 0.0, 0.0),
            Err(Error::UndefinedMixture(_))
        ));
        assert!(traversal_cost(&t, &s, 0.3, 0.6, 0.5).is_err());
    }

    #[test]
    fn traversal_cost_monotone_in_q_and_retry_limit() {
        let t = MacTiming::default();
        let mut prev = 0.0;
        for k in 0..50 {
            let q = k as f64 / 50.0;
            let c = traversal_cost(&t, &BackoffSchedule::default(), q, 0.4, 0.5).unwrap();
            assert!(c > prev);
            prev = c;
        }
        let mut prev = 0.0;
        for l in 0..14 {
            let s = BackoffSchedule::new(8, None, l).unwrap();
            let c = traversal_cost(&t, &s, 0.3, 0.4, 0.5).unwrap();
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn windows_double_until_cap() {
        let s = BackoffSchedule::new(8, None, 7).unwrap();
        for j in 0..=7 {
            assert_eq!(s.window(j), 8 << j);
        }
        let capped = BackoffSchedule::new(8, Some(64), 7).unwrap();
        let w: Vec<_> = capped.windows().collect();
        assert!(w.windows(2).all(|p| p[0] <= p[1]));
        assert_eq!(*w.last().unwrap(), 64);
    }
}
