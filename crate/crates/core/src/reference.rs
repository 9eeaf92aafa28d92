//! Independent reference computations used by the test suites and the
//! `validate` command. Nothing on the production path calls into this module.
//!
//! Each routine reaches its answer by a different road than the code it
//! checks: truncated Poisson series instead of closed forms, a sparse power
//! iteration over the explicit backoff chain instead of the normalisation
//! sum, bisection on the classical single-class fixed point instead of
//! damped iteration, and so on.

use crate::model::{ContentionClass, Population};
use crate::timing::{BackoffSchedule, MacTiming};

/// Number of terms kept for a truncated Poisson series: `mu + 20 sqrt(mu)`,
/// at least 50.
pub fn series_cutoff(mean_count: f64) -> u64 {
    (mean_count + 20.0 * mean_count.sqrt()).ceil().max(50.0) as u64
}

/// Poisson weights by the recursion `f(n) = f(n-1) mu / n`.
fn poisson_terms(mean_count: f64) -> impl Iterator<Item = (u64, f64)> {
    let cutoff = series_cutoff(mean_count);
    let mut weight = (-mean_count).exp();
    (0..=cutoff).map(move |n| {
        if n > 0 {
            weight *= mean_count / n as f64;
        }
        (n, weight)
    })
}

pub fn series_silence(mean_count: f64, tau: f64) -> f64 {
    poisson_terms(mean_count)
        .map(|(n, f)| f * (1.0 - tau).powi(n as i32))
        .sum()
}

pub fn series_silence_tagged(mean_count: f64, tau: f64) -> f64 {
    poisson_terms(mean_count)
        .skip(1)
        .map(|(n, f)| f * (1.0 - tau).powi(n as i32 - 1))
        .sum()
}

pub fn series_single_transmitter(mean_count: f64, tau: f64) -> f64 {
    poisson_terms(mean_count)
        .skip(1)
        .map(|(n, f)| f * n as f64 * tau * (1.0 - tau).powi(n as i32 - 1))
        .sum()
}

/// Busy probability of every class from per-factor series.
pub fn series_busy_probability(means: &[f64], taus: &[f64]) -> Vec<f64> {
    (0..means.len())
        .map(|i| {
            let others: f64 = (0..means.len())
                .filter(|&h| h != i)
                .map(|h| series_silence(means[h], taus[h]))
                .product();
            1.0 - others * series_silence_tagged(means[i], taus[i])
        })
        .collect()
}

/// Per-class success probability by explicit enumeration of the joint device
/// counts (each count truncated at `max_count`).
pub fn enumerate_success_probabilities(means: &[f64], taus: &[f64], max_count: u32) -> Vec<f64> {
    let k = means.len();
    let pmf = |mu: f64, n: u32| -> f64 {
        let mut w = (-mu).exp();
        for j in 1..=n {
            w *= mu / f64::from(j);
        }
        w
    };
    let mut out = vec![0.0; k];
    let mut counts = vec![0u32; k];
    loop {
        let weight: f64 = counts
            .iter()
            .zip(means)
            .map(|(&n, &mu)| pmf(mu, n))
            .product();
        // Exactly one transmitter overall, and it belongs to class i.
        for i in 0..k {
            let mut p = 1.0;
            for h in 0..k {
                let n = counts[h] as i32;
                let t = taus[h];
                p *= if h == i {
                    f64::from(counts[h]) * t * (1.0 - t).powi(n - 1)
                } else {
                    (1.0 - t).powi(n)
                };
            }
            out[i] += weight * p;
        }
        // odometer
        let mut pos = 0;
        loop {
            if pos == k {
                return out;
            }
            counts[pos] += 1;
            if counts[pos] <= max_count {
                break;
            }
            counts[pos] = 0;
            pos += 1;
        }
    }
}

/// Adaptive Simpson integration of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Disk-band area by quadrature in the angular variable `x = R sin(theta)`.
pub fn band_area_quadrature(radius: f64, inner: f64, outer: f64) -> f64 {
    let lo = (inner / radius).clamp(0.0, 1.0).asin();
    let hi = (outer / radius).clamp(0.0, 1.0).asin();
    // chord length 2 R cos(theta) times dx = R cos(theta) dtheta, both sides
    let integrand = |theta: f64| 4.0 * radius * radius * theta.cos().powi(2);
    adaptive_simpson(&integrand, lo, hi, 1e-9 * radius * radius)
}

/// Stationary distribution of the backoff chain, built state by state from
/// its transition rules and found by power iteration.
///
/// States are `(stage j, counter k)`, `k < W_j`. A counter above zero counts
/// down; at zero the device transmits, fails with `p_eq` and moves to stage
/// `j + 1` (uniform counter), otherwise returns to stage 0. Stage `L` always
/// returns to stage 0.
pub fn dense_chain_stationary(p_eq: f64, schedule: &BackoffSchedule) -> Vec<Vec<f64>> {
    let limit = schedule.retry_limit() as usize;
    let windows: Vec<usize> = schedule.windows().map(|w| w as usize).collect();
    let mut offsets = Vec::with_capacity(windows.len());
    let mut total = 0usize;
    for &w in &windows {
        offsets.push(total);
        total += w;
    }
    let index = |j: usize, k: usize| offsets[j] + k;

    // (from, to, probability), grouped: uniform jumps are kept as ranges.
    let mut step: Vec<(usize, usize, f64)> = Vec::new();
    let mut spread: Vec<(usize, usize, f64)> = Vec::new(); // (from, stage, prob)
    for j in 0..=limit {
        for k in 0..windows[j] {
            if k > 0 {
                step.push((index(j, k), index(j, k - 1), 1.0));
            } else if j < limit {
                spread.push((index(j, 0), 0, 1.0 - p_eq));
                spread.push((index(j, 0), j + 1, p_eq));
            } else {
                spread.push((index(j, 0), 0, 1.0));
            }
        }
    }

    let mut dist = vec![1.0 / total as f64; total];
    let mut next = vec![0.0; total];
    // The chain is aperiodic (a zero draw returns to (0, 0) immediately), so
    // power iteration converges; lazy averaging speeds up the slowest modes.
    for iteration in 0..5_000_000u64 {
        next.iter_mut().for_each(|x| *x = 0.0);
        for &(from, to, p) in &step {
            next[to] += p * dist[from];
        }
        for &(from, stage, p) in &spread {
            let mass = p * dist[from] / windows[stage] as f64;
            if mass != 0.0 {
                for k in 0..windows[stage] {
                    next[index(stage, k)] += mass;
                }
            }
        }
        let lazy = 0.5;
        let mut change = 0.0;
        for (d, n) in dist.iter_mut().zip(&next) {
            let updated = lazy * *d + (1.0 - lazy) * n;
            change += (updated - *d).abs();
            *d = updated;
        }
        let norm: f64 = dist.iter().sum();
        dist.iter_mut().for_each(|x| *x /= norm);
        if change < 1e-15 && iteration > 10 {
            break;
        }
    }
    (0..=limit)
        .map(|j| dist[offsets[j]..offsets[j] + windows[j]].to_vec())
        .collect()
}

/// Single-class saturation model with a fixed number of devices, solved by
/// bisection on the collision probability. Windows double without a cap.
#[derive(Debug, Clone, Copy)]
pub struct BianchiPoint {
    pub tau: f64,
    pub collision: f64,
    pub throughput: f64,
}

/// Transmission probability for collision probability `p`, uncapped windows,
/// retry limit `m`:
/// `2(1-2p)(1-p^{m+1}) / [(1-2p)(1-p^{m+1}) + W(1-p)(1-(2p)^{m+1})]`.
pub fn bianchi_tau(p: f64, w: f64, m: u32) -> f64 {
    let e = m as i32 + 1;
    let a = 1.0 - 2.0 * p;
    if a.abs() < 1e-6 {
        // (1 - (2p)^{m+1}) / (1 - 2p) -> sum of powers of 2p
        let s: f64 = (0..e).map(|j| (2.0 * p).powi(j)).sum();
        let num = 2.0 * (1.0 - p.powi(e));
        return num / ((1.0 - p.powi(e)) + w * (1.0 - p) * s);
    }
    2.0 * a * (1.0 - p.powi(e))
        / (a * (1.0 - p.powi(e)) + w * (1.0 - p) * (1.0 - (2.0 * p).powi(e)))
}

pub fn bianchi_fixed_n(n: u32, schedule: &BackoffSchedule, timing: &MacTiming) -> BianchiPoint {
    assert!(
        schedule.cw_max().is_none(),
        "reference assumes uncapped windows"
    );
    let w = f64::from(schedule.cw_min());
    let m = schedule.retry_limit();
    let g = |p: f64| p - (1.0 - (1.0 - bianchi_tau(p, w, m)).powi(n as i32 - 1));
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let tau = bianchi_tau(p, w, m);
    let nf = f64::from(n);
    let p_tr = 1.0 - (1.0 - tau).powi(n as i32);
    let p_s = nf * tau * (1.0 - tau).powi(n as i32 - 1) / p_tr;
    let sigma = timing.delta_idle as f64;
    let t_s = timing.busy_success_time() as f64;
    let t_c = timing.collision_cost() as f64;
    let throughput = p_s * p_tr * timing.t_payload as f64
        / ((1.0 - p_tr) * sigma + p_tr * p_s * t_s + p_tr * (1.0 - p_s) * t_c);
    BianchiPoint {
        tau,
        collision: p,
        throughput,
    }
}

/// Multi-class Poisson model without quitting, solved by nested bisection:
/// the outer unknown is the aggregate attempt rate `sum mu_h tau_h`, the
/// inner unknowns are the per-class `tau_i` given that aggregate.
pub fn quitting_free_multiclass(
    classes: &[ContentionClass],
    schedule: &BackoffSchedule,
) -> Vec<f64> {
    let means: Vec<f64> = classes
        .iter()
        .map(|c| match c.population {
            Population::Poisson(mu) => mu,
            Population::Fixed(_) => panic!("reference handles Poisson classes only"),
        })
        .collect();
    let tau_of_p = |p: f64| -> f64 {
        let windows: Vec<f64> = schedule.windows().map(|w| w as f64).collect();
        let attempts: f64 = (0..windows.len()).map(|j| p.powi(j as i32)).sum();
        let slots: f64 = windows
            .iter()
            .enumerate()
            .map(|(j, w)| p.powi(j as i32) * (w + 1.0) / 2.0)
            .sum();
        attempts / slots
    };
    let taus_given = |aggregate: f64| -> Vec<f64> {
        means
            .iter()
            .map(|&mu| {
                // tau = T(q(tau)), q = 1 - e^{-(A - mu tau)} tagged(mu, tau)
                let h = |t: f64| {
                    let tagged = series_silence_tagged(mu, t);
                    let q = 1.0 - (-(aggregate - mu * t).max(0.0)).exp() * tagged;
                    t - tau_of_p(q.clamp(0.0, 1.0))
                };
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if h(mid) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    };
    let total_mean: f64 = means.iter().sum();
    let (mut lo, mut hi) = (0.0f64, total_mean);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let taus = taus_given(mid);
        let implied: f64 = means.iter().zip(&taus).map(|(m, t)| m * t).sum();
        if implied < mid {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    taus_given(0.5 * (lo + hi))
}
