//! Text and CSV renderings of model solutions, simulation runs and sweeps.
//! All output is a pure function of its input.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::Deserialize;

use crate::coverage::Scenario;
use crate::error::{Error, Result};
use crate::experiments::{agreement_report, SweepRow};
use crate::model::ModelSolution;
use crate::sim::Replication;

pub const SWEEP_HEADER: [&str; 11] = [
    "axis",
    "value",
    "mode",
    "S_model",
    "S_sim_mean",
    "S_sim_ci95",
    "abs_err",
    "rel_err",
    "iters_outer",
    "iters_inner",
    "n_clusters",
];

fn fixed(v: f64) -> String {
    format!("{v:.6}")
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let model = r.model.as_ref().ok();
        w.write_record([
            r.axis.as_str().to_string(),
            r.value.to_string(),
            r.mode.as_str().to_string(),
            opt(r.s_model(), fixed),
            fixed(r.sim_mean),
            opt(r.sim_ci95, fixed),
            opt(r.abs_err(), fixed),
            opt(r.rel_err(), fixed),
            opt(model, |m| m.iters_outer.to_string()),
            opt(model, |m| m.iters_inner.to_string()),
            opt(model, |m| m.n_clusters.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut buf = Vec::new();
    write_sweep_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

/// One parsed line of a sweep CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SweepRecord {
    pub axis: String,
    pub value: f64,
    pub mode: String,
    #[serde(rename = "S_model")]
    pub s_model: Option<f64>,
    #[serde(rename = "S_sim_mean")]
    pub sim_mean: f64,
    #[serde(rename = "S_sim_ci95")]
    pub sim_ci95: Option<f64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub iters_outer: Option<usize>,
    pub iters_inner: Option<usize>,
    pub n_clusters: Option<usize>,
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != SWEEP_HEADER {
        return Err(Error::Csv(format!("unexpected header {header:?}")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Summary lines printed after a sweep.
pub fn sweep_summary(rows: &[SweepRow]) -> String {
    let mut s = format!("agreement: {}\n", agreement_report(rows));
    for r in rows {
        if let Err(e) = &r.model {
            let _ = writeln!(s, "model failed at {}={} {}: {e}", r.axis, r.value, r.mode);
        }
    }
    s
}

fn scenario_line(scenario: &Scenario) -> String {
    format!(
        "R={} m, v={} m/s, rho={}/km^2, CW_min={}, L={}, mode={}",
        scenario.radius,
        scenario.velocity,
        scenario.density_per_km2(),
        scenario.schedule.cw_min(),
        scenario.schedule.retry_limit(),
        scenario.timing.access_mode
    )
}

pub const MODEL_HEADER: &str =
    "radius,velocity,density,cw_min,retry_limit,mode,S_model,delta,n_clusters,iters_outer,iters_inner,max_residual";

pub fn model_table(scenario: &Scenario, solution: &ModelSolution) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", scenario_line(scenario));
    let _ = writeln!(
        s,
        "N={} clusters, Delta={:.6} s, S={:.6}",
        solution.cluster_count(),
        solution.delta,
        solution.throughput
    );
    let _ = writeln!(
        s,
        "P_tr={:.6} P_s={:.6} P_success={:.6}",
        solution.p_tr, solution.p_s, solution.p_success
    );
    let r = &solution.residuals;
    let _ = writeln!(
        s,
        "iterations: outer={} inner={}; residuals: tau={:.1e} q={:.1e} Q={:.1e} P_eq={:.1e} b00={:.1e} delta_rel={:.1e}",
        solution.iterations.outer,
        solution.iterations.inner,
        r.tau,
        r.busy,
        r.quit,
        r.p_eq,
        r.b00,
        r.delta_rel
    );
    for d in &solution.diagnostics {
        let _ = writeln!(s, "note: {d}");
    }
    let _ = writeln!(
        s,
        "{:>4} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "i", "x_in(m)", "x_out(m)", "mu", "tau", "q", "Q", "P_eq"
    );
    for (c, st) in solution.partition.clusters.iter().zip(&solution.clusters) {
        let _ = writeln!(
            s,
            "{:>4} {:>10.3} {:>10.3} {:>10.4} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            c.index,
            c.lateral_bounds.0,
            c.lateral_bounds.1,
            c.mean_count,
            st.tau,
            st.q_busy,
            st.quit,
            st.p_eq
        );
    }
    let _ = writeln!(s, "{MODEL_HEADER}");
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{:.6},{:.6},{},{},{},{:.3e}",
        scenario.radius,
        scenario.velocity,
        scenario.density_per_km2(),
        scenario.schedule.cw_min(),
        scenario.schedule.retry_limit(),
        scenario.timing.access_mode,
        solution.throughput,
        solution.delta,
        solution.cluster_count(),
        solution.iterations.outer,
        solution.iterations.inner,
        solution.residuals.max_class()
    );
    s
}

pub fn replication_table(scenario: &Scenario, rep: &Replication) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", scenario_line(scenario));
    let _ = writeln!(
        s,
        "seed,throughput,successes,collisions,drops,departures,devices,low_confidence"
    );
    for (seed, r) in rep.seeds.iter().zip(&rep.reports) {
        let _ = writeln!(
            s,
            "{seed},{:.6},{},{},{},{},{},{}",
            r.normalized_throughput,
            r.successes,
            r.collisions,
            r.drops,
            r.departures,
            r.devices,
            r.low_confidence
        );
    }
    match rep.ci95 {
        Some(h) => {
            let _ = writeln!(
                s,
                "mean={:.6} ci95={:.6} seeds={}",
                rep.mean,
                h,
                rep.seeds.len()
            );
        }
        None => {
            let _ = writeln!(
                s,
                "mean={:.6} ci95=undefined (single seed) seeds={}",
                rep.mean,
                rep.seeds.len()
            );
        }
    }
    if rep.low_confidence() {
        let _ = writeln!(s, "warning: low confidence result");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Axis, ModelPoint};
    use crate::timing::AccessMode;

    fn rows() -> Vec<SweepRow> {
        vec![
            SweepRow {
                axis: Axis::Velocity,
                value: 10.0,
                mode: AccessMode::Basic,
                model: Ok(ModelPoint {
                    throughput: 0.5,
                    iters_outer: 3,
                    iters_inner: 40,
                    n_clusters: 2,
                }),
                sim_mean: 0.4,
                sim_ci95: Some(0.01),
            },
            SweepRow {
                axis: Axis::Velocity,
                value: 12.5,
                mode: AccessMode::RtsCts,
                model: Err("did not converge".into()),
                sim_mean: 0.9,
                sim_ci95: None,
            },
        ]
    }

    #[test]
    fn header_is_fixed() {
        let text = sweep_csv(&rows());
        assert!(text.starts_with(
            "axis,value,mode,S_model,S_sim_mean,S_sim_ci95,abs_err,rel_err,iters_outer,iters_inner,n_clusters\n"
        ));
        assert!(!text.contains('\r'));
        assert!(text.contains("velocity,12.5,rts-cts,,0.900000,,,,,,\n"));
    }

    #[test]
    fn csv_round_trip() {
        let text = sweep_csv(&rows());
        let records = read_sweep_csv(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].s_model, Some(0.5));
        assert_eq!(records[0].abs_err, Some(0.1));
        assert_eq!(records[1].s_model, None);
        assert_eq!(records[1].n_clusters, None);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_sweep_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
