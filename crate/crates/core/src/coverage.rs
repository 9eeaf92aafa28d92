//! Geometry of a circular footprint moving along a straight line, and the
//! partition of the footprint into bands ("clusters") by the number of full
//! backoff traversals a device at that lateral offset can complete.
//!
//! A device at lateral offset `x` from the flight centreline stays covered for
//! the chord crossing time `2 sqrt(R^2 - x^2) / v`. Cluster `i` collects the
//! devices whose crossing time holds exactly `i` traversal costs; band `0`
//! (devices near the rim) is kept as the residual band and excluded from the
//! model.
//!
//! Device counts per band are Poisson with mean `rho * A_i`. The expectations
//! the model needs over that distribution have closed forms, provided here.

use crate::error::{invalid, Error, Result};
use crate::timing::{BackoffSchedule, MacTiming};

/// Devices per square kilometre to devices per square metre.
pub const PER_KM2_TO_PER_M2: f64 = 1e-6;

/// Below this `1 - tau` the tagged-silence expectation switches to its limit.
const TAGGED_LIMIT_BRANCH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Coverage radius `R` in metres.
    pub radius: f64,
    /// UAV speed in m/s.
    pub velocity: f64,
    /// Device density in devices per m^2.
    pub density: f64,
    pub schedule: BackoffSchedule,
    pub timing: MacTiming,
}

impl Scenario {
    /// `density_per_km2` is converted to devices per m^2.
    pub fn new(
        radius: f64,
        velocity: f64,
        density_per_km2: f64,
        schedule: BackoffSchedule,
        timing: MacTiming,
    ) -> Result<Self> {
        let s = Self {
            radius,
            velocity,
            density: density_per_km2 * PER_KM2_TO_PER_M2,
            schedule,
            timing,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("radius", self.radius),
            ("velocity", self.velocity),
            ("density", self.density),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(invalid(
                    name,
                    format!("{value} must be positive and finite"),
                ));
            }
        }
        self.timing.validate()
    }

    pub fn density_per_km2(&self) -> f64 {
        self.density / PER_KM2_TO_PER_M2
    }

    /// Crossing time of the centreline chord, `2R / v`, in seconds.
    pub fn max_chord_duration(&self) -> f64 {
        2.0 * self.radius / self.velocity
    }

    /// Seconds a device at `lateral_offset` stays inside the footprint.
    pub fn chord_duration(&self, lateral_offset: f64) -> Result<f64> {
        let x = lateral_offset.abs();
        if x >= self.radius {
            return Err(Error::OutOfCoverage {
                offset: lateral_offset,
                radius: self.radius,
            });
        }
        let half = (self.radius * self.radius - x * x).sqrt();
        Ok(2.0 * half / self.velocity)
    }

    /// Number of full traversals `floor(T(x) / delta)` at `lateral_offset`.
    pub fn traversal_count(&self, lateral_offset: f64, delta: f64) -> Result<u64> {
        positive_delta(delta)?;
        let t = self.chord_duration(lateral_offset)?;
        Ok((t / delta).floor() as u64)
    }

    /// Expected number of devices inside the whole footprint.
    pub fn mean_devices_in_disk(&self) -> f64 {
        self.density * std::f64::consts::PI * self.radius * self.radius
    }
}

fn positive_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(
            "delta",
            format!("{delta} must be positive and finite"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Number of full traversals, `m_i = i`.
    pub index: u32,
    /// `(inner, outer)` bounds of `|x|`, in metres: the band is
    /// `inner < |x| <= outer`.
    pub lateral_bounds: (f64, f64),
    /// Disk-band area `A_i` in m^2 (both sides of the centreline).
    pub area: f64,
    /// Poisson intensity `rho * A_i`.
    pub mean_count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    /// Traversal cost (seconds) the partition was built from.
    pub traversal_cost: f64,
    /// Devices that cannot finish a single traversal; `index == 0`.
    pub residual: Cluster,
    /// Set when the innermost cluster absorbed bands beyond a frozen count.
    pub capped_at: Option<u32>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.residual.area + self.clusters.iter().map(|c| c.area).sum::<f64>()
    }

    pub fn modelled_mean_count(&self) -> f64 {
        self.clusters.iter().map(|c| c.mean_count).sum()
    }
}

/// Antiderivative of the full chord length `2 sqrt(R^2 - x^2)`.
fn chord_integral(radius: f64, x: f64) -> f64 {
    let x = x.clamp(0.0, radius);
    let r2 = radius * radius;
    x * (r2 - x * x).max(0.0).sqrt() + r2 * (x / radius).clamp(-1.0, 1.0).asin()
}

/// Area of `{ inner < |x| <= outer }` intersected with the disk.
pub fn band_area(radius: f64, inner: f64, outer: f64) -> f64 {
    2.0 * (chord_integral(radius, outer) - chord_integral(radius, inner))
}

/// Offset `|x|` where the crossing time equals `k` traversal costs.
fn boundary(scenario: &Scenario, k: f64, delta: f64) -> f64 {
    let half = k * scenario.velocity * delta / 2.0;
    let r2 = scenario.radius * scenario.radius;
    (r2 - half * half).max(0.0).sqrt()
}

/// Number of clusters `floor(2R / (v delta))`.
pub fn cluster_count(scenario: &Scenario, delta: f64) -> Result<u32> {
    positive_delta(delta)?;
    let n = (scenario.max_chord_duration() / delta).floor();
    Ok(n.min(f64::from(u32::MAX)) as u32)
}

/// Partitions the footprint by traversal count for cost `delta` (seconds).
pub fn build_clusters(scenario: &Scenario, delta: f64) -> Result<ClusterSet> {
    build_clusters_capped(scenario, delta, None)
}

/// Like [`build_clusters`], but with at most `cap` clusters; the innermost
/// cluster then extends to the centreline.
pub fn build_clusters_capped(
    scenario: &Scenario,
    delta: f64,
    cap: Option<u32>,
) -> Result<ClusterSet> {
    let natural = cluster_count(scenario, delta)?;
    if natural == 0 {
        return Err(Error::Infeasible(format!(
            "traversal cost {delta:.3} s exceeds the centreline crossing time {:.3} s",
            scenario.max_chord_duration()
        )));
    }
    // An exact integer ratio leaves cluster `natural` with zero width.
    let natural = if boundary(scenario, f64::from(natural), delta) <= 0.0 {
        natural - 1
    } else {
        natural
    };
    if natural == 0 {
        return Err(Error::Infeasible(format!(
            "traversal cost {delta:.3} s equals the centreline crossing time"
        )));
    }
    let n = cap.map_or(natural, |c| c.min(natural).max(1));
    let r = scenario.radius;
    let mut clusters = Vec::with_capacity(n as usize);
    for i in 1..=n {
        let outer = boundary(scenario, f64::from(i), delta);
        let inner = if i == n {
            0.0
        } else {
            boundary(scenario, f64::from(i + 1), delta)
        };
        let area = band_area(r, inner, outer);
        clusters.push(Cluster {
            index: i,
            lateral_bounds: (inner, outer),
            area,
            mean_count: scenario.density * area,
        });
    }
    let rim = boundary(scenario, 1.0, delta);
    let residual_area = band_area(r, rim, r);
    Ok(ClusterSet {
        clusters,
        traversal_cost: delta,
        residual: Cluster {
            index: 0,
            lateral_bounds: (rim, r),
            area: residual_area,
            mean_count: scenario.density * residual_area,
        },
        capped_at: (n < natural).then_some(n),
    })
}

/// Poisson pmf `mu^n e^{-mu} / n!`, evaluated in log space.
pub fn poisson_weight(mean_count: f64, n: u64) -> f64 {
    if mean_count == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    let log = nf * mean_count.ln() - mean_count - statrs::function::gamma::ln_gamma(nf + 1.0);
    log.exp()
}

/// `E[(1 - tau)^n]` for `n ~ Poisson(mu)`: probability that no device of the
/// band transmits.
pub fn expected_silence(mean_count: f64, tau: f64) -> f64 {
    (-mean_count * tau).exp()
}

/// `sum_{n >= 1} f(n) (1 - tau)^(n - 1)`: the own-band factor of the busy
/// probability, `(e^{-mu tau} - e^{-mu}) / (1 - tau)`.
pub fn expected_silence_tagged(mean_count: f64, tau: f64) -> f64 {
    let gap = 1.0 - tau;
    if gap < TAGGED_LIMIT_BRANCH {
        let x = mean_count * gap;
        return mean_count * (-mean_count).exp() * (1.0 + x / 2.0 + x * x / 6.0);
    }
    // e^{-mu tau} (1 - e^{-mu (1 - tau)}) avoids cancellation near tau = 1
    // and overflow for large mu.
    -(-mean_count * tau).exp() * (-mean_count * gap).exp_m1() / gap
}

/// `E[n tau (1 - tau)^(n - 1)] = mu tau e^{-mu tau}`: probability that exactly
/// one device of the band transmits.
pub fn expected_single_transmitter(mean_count: f64, tau: f64) -> f64 {
    mean_count * tau * (-mean_count * tau).exp()
}

/// Convenience for the default 1 km / 10 m/s / 50 per km^2 set-up.
pub fn baseline_scenario() -> Scenario {
    Scenario::new(
        1000.0,
        10.0,
        50.0,
        BackoffSchedule::default(),
        MacTiming::default(),
    )
    .expect("baseline parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use proptest::prelude::*;

    fn scenario(radius: f64, velocity: f64) -> Scenario {
        Scenario::new(
            radius,
            velocity,
            50.0,
            BackoffSchedule::default(),
            MacTiming::default(),
        )
        .unwrap()
    }

    #[test]
    fn chord_examples() {
        let s = scenario(1000.0, 10.0);
        assert_eq!(s.chord_duration(0.0).unwrap(), 200.0);
        let x = 1000.0 * (std::f64::consts::PI / 3.0).sin();
        assert!((s.chord_duration(x).unwrap() - 100.0).abs() < 1e-9);
        let fast = scenario(1000.0, 20.0);
        assert!((fast.chord_duration(600.0).unwrap() - 80.0).abs() < 1e-12);
        assert!(matches!(
            s.chord_duration(1000.0),
            Err(Error::OutOfCoverage { .. })
        ));
        assert!(s.chord_duration(-1200.0).is_err());
    }

    #[test]
    fn traversal_count_examples() {
        let s = scenario(1000.0, 10.0);
        // T(0) = 200 s
        assert_eq!(s.traversal_count(0.0, 200.0 / 3.7).unwrap(), 3);
        assert_eq!(s.traversal_count(0.0, 9.1).unwrap(), 21);
        assert_eq!(s.traversal_count(999.0, 9.1).unwrap(), 0);
        assert!(s.traversal_count(0.0, 0.0).is_err());
    }

    #[test]
    fn cluster_count_example() {
        let s = scenario(1000.0, 10.0);
        assert_eq!(cluster_count(&s, 9.1).unwrap(), 21);
        let set = build_clusters(&s, 9.1).unwrap();
        assert_eq!(set.len(), 21);
        assert_eq!(set.clusters[20].lateral_bounds.0, 0.0);
    }

    #[test]
    fn infeasible_when_no_traversal_fits() {
        let s = scenario(1000.0, 10.0);
        assert!(matches!(
            build_clusters(&s, 250.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn clusters_match_traversal_counts() {
        let s = scenario(1000.0, 10.0);
        let delta = 9.1;
        let set = build_clusters(&s, delta).unwrap();
        for c in &set.clusters {
            let (inner, outer) = c.lateral_bounds;
            let mid = 0.5 * (inner + outer);
            assert_eq!(s.traversal_count(mid, delta).unwrap(), u64::from(c.index));
            assert!(c.area > 0.0 && c.mean_count > 0.0);
        }
        let (rim, _) = set.residual.lateral_bounds;
        assert_eq!(s.traversal_count(0.5 * (rim + 1000.0), delta).unwrap(), 0);
    }

    #[test]
    fn band_areas_match_quadrature() {
        // v * delta >= R: only a few clusters
        let s = scenario(1000.0, 25.0);
        let set = build_clusters(&s, 50.0).unwrap();
        assert!(set.len() <= 2);
        for c in set.clusters.iter().chain(std::iter::once(&set.residual)) {
            let (a, b) = c.lateral_bounds;
            let quad = reference::band_area_quadrature(s.radius, a, b);
            assert!(
                ((c.area - quad) / quad).abs() < 1e-9,
                "{} vs {quad}",
                c.area
            );
        }
    }

    #[test]
    fn capped_partition_absorbs_inner_bands() {
        let s = scenario(1000.0, 10.0);
        let full = build_clusters(&s, 9.1).unwrap();
        let capped = build_clusters_capped(&s, 9.1, Some(5)).unwrap();
        assert_eq!(capped.len(), 5);
        assert_eq!(capped.capped_at, Some(5));
        assert!((capped.total_area() - full.total_area()).abs() < 1e-6);
        assert_eq!(capped.clusters[4].lateral_bounds.0, 0.0);
    }

    #[test]
    fn poisson_weight_examples() {
        assert!((poisson_weight(0.5, 0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((poisson_weight(0.5, 0) - 0.60653).abs() < 1e-5);
        let want = 27.0 * (-3.0f64).exp() / 6.0;
        assert!((poisson_weight(3.0, 3) - want).abs() < 1e-15);
        assert!((poisson_weight(3.0, 3) - 0.22404).abs() < 1e-5);
        for mu in [1e-3f64, 0.7, 12.0, 157.0, 500.0] {
            let cutoff = (mu + 20.0 * mu.sqrt()).ceil().max(50.0) as u64;
            let total: f64 = (0..=cutoff).map(|n| poisson_weight(mu, n)).sum();
            assert!((total - 1.0).abs() < 1e-12, "mu = {mu}: {total}");
        }
        assert_eq!(poisson_weight(0.0, 0), 1.0);
        assert_eq!(poisson_weight(0.0, 2), 0.0);
    }

    #[test]
    fn silence_examples() {
        assert_eq!(expected_silence(4.0, 0.0), 1.0);
        assert!((expected_silence(2.0, 0.1) - 0.81873).abs() < 1e-5);
        assert!((expected_silence(2.0, 1.0) - (-2.0f64).exp()).abs() < 1e-15);
        let series = reference::series_silence(2.0, 0.1);
        assert!((expected_silence(2.0, 0.1) - series).abs() < 1e-12);
    }

    #[test]
    fn tagged_silence_examples() {
        let mu: f64 = 2.0;
        assert!((expected_silence_tagged(mu, 0.0) - (1.0 - (-mu).exp())).abs() < 1e-15);
        let v = expected_silence_tagged(2.0, 0.1);
        assert!((v - 0.75932).abs() < 1e-5);
        assert!((v - reference::series_silence_tagged(2.0, 0.1)).abs() < 1e-12);
        let limit = mu * (-mu).exp();
        assert!((expected_silence_tagged(mu, 1.0) - limit).abs() < 1e-15);
        // both sides of the limit branch
        for gap in [1e-8, 1e-10] {
            let tau = 1.0 - gap;
            let series = reference::series_silence_tagged(mu, tau);
            assert!((expected_silence_tagged(mu, tau) - series).abs() < 1e-12);
        }
        for mu in [800.0, 5000.0] {
            let v = expected_silence_tagged(mu, 0.001);
            assert!(v.is_finite() && v > 0.0);
            assert!((v - (-mu * 0.001f64).exp() / 0.999).abs() < 1e-12);
        }
    }

    #[test]
    fn single_transmitter_examples() {
        assert_eq!(expected_single_transmitter(3.0, 0.0), 0.0);
        let v = expected_single_transmitter(2.0, 0.1);
        assert!((v - 0.2 * (-0.2f64).exp()).abs() < 1e-15);
        assert!((v - 0.16375).abs() < 1e-5);
        assert!((v - reference::series_single_transmitter(2.0, 0.1)).abs() < 1e-12);
        let mu = 40.0;
        let peak = expected_single_transmitter(mu, 1.0 / mu);
        assert!((peak - (-1.0f64).exp()).abs() < 1e-15);
        assert!(expected_single_transmitter(mu, 1.1 / mu) < peak);
        assert!(expected_single_transmitter(mu, 0.9 / mu) < peak);
    }

    proptest! {
        #[test]
        fn bands_tile_the_disk(
            radius in 100.0f64..5000.0,
            velocity in 1.0f64..40.0,
            frac in 0.001f64..1.0,
        ) {
            let s = scenario(radius, velocity);
            let delta = frac * s.max_chord_duration();
            let set = build_clusters(&s, delta).unwrap();
            let disk = std::f64::consts::PI * radius * radius;
            prop_assert!(((set.total_area() - disk) / disk).abs() < 1e-9);
            for pair in set.clusters.windows(2) {
                prop_assert!(pair[0].lateral_bounds.0 == pair[1].lateral_bounds.1);
                prop_assert!(pair[0].lateral_bounds.0 >= pair[1].lateral_bounds.0);
            }
        }

        #[test]
        fn traversal_count_monotone(
            x1 in 0.0f64..999.0,
            x2 in 0.0f64..999.0,
            v1 in 1.0f64..30.0,
            v2 in 1.0f64..30.0,
            delta in 0.5f64..60.0,
        ) {
            let (xa, xb) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
            let (va, vb) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            let sa = scenario(1000.0, va);
            let sb = scenario(1000.0, vb);
            prop_assert!(sa.traversal_count(xa, delta).unwrap() >= sa.traversal_count(xb, delta).unwrap());
            prop_assert!(sa.traversal_count(xa, delta).unwrap() >= sb.traversal_count(xa, delta).unwrap());
        }

        #[test]
        fn chord_is_symmetric(x in -999.0f64..999.0) {
            let s = scenario(1000.0, 10.0);
            prop_assert_eq!(s.chord_duration(x).unwrap(), s.chord_duration(-x).unwrap());
        }

        #[test]
        fn closed_forms_match_series(mu in 1e-3f64..500.0, tau in 0.0f64..=1.0) {
            prop_assert!((expected_silence(mu, tau) - reference::series_silence(mu, tau)).abs() < 1e-12);
            prop_assert!((expected_silence_tagged(mu, tau) - reference::series_silence_tagged(mu, tau)).abs() < 1e-12);
            prop_assert!((expected_single_transmitter(mu, tau) - reference::series_single_transmitter(mu, tau)).abs() < 1e-12);
        }
    }
}
