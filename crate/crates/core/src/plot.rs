//! Self-contained SVG line charts of sweep results: the model as a line,
//! simulation means as points with 95% error bars.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::Axis;
use crate::report::SweepRecord;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

/// One chart per `(axis, mode)` pair, keyed by file name.
pub fn render_plots(records: &[SweepRecord]) -> Result<BTreeMap<String, String>> {
    if records.is_empty() {
        return Err(Error::Csv("no rows to plot".into()));
    }
    let mut groups: BTreeMap<(String, String), Vec<&SweepRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.axis.clone(), r.mode.clone()))
            .or_default()
            .push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((axis, mode), mut rows)| {
            rows.sort_by(|a, b| a.value.total_cmp(&b.value));
            let label = axis
                .parse::<Axis>()
                .map(Axis::label)
                .unwrap_or(axis.as_str())
                .to_string();
            let svg = render_chart(&label, &mode, &rows);
            (format!("{axis}_{mode}.svg"), svg)
        })
        .collect())
}

/// Renders every chart before writing any file.
pub fn write_plots(records: &[SweepRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    let charts = render_plots(records)?;
    std::fs::create_dir_all(dir)?;
    charts
        .into_iter()
        .map(|(name, svg)| {
            let path = dir.join(name);
            std::fs::write(&path, svg)?;
            Ok(path)
        })
        .collect()
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x_min) / (self.x_max - self.x_min) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - v / self.y_max * (HEIGHT - TOP - BOTTOM)
    }
}

fn render_chart(x_label: &str, mode: &str, rows: &[&SweepRecord]) -> String {
    let mut x_min = rows.first().map_or(0.0, |r| r.value);
    let mut x_max = rows.last().map_or(1.0, |r| r.value);
    if x_max <= x_min {
        x_min -= 0.5;
        x_max += 0.5;
    }
    let top = rows
        .iter()
        .flat_map(|r| {
            [
                r.s_model.unwrap_or(0.0),
                r.sim_mean + r.sim_ci95.unwrap_or(0.0),
            ]
        })
        .fold(0.0, f64::max);
    let y_max = ((top * 10.0).ceil() / 10.0).clamp(0.1, 1.0).max(top);
    let f = Frame {
        x_min,
        x_max,
        y_max,
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" style="font-family:sans-serif;font-size:12px">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="100%" height="100%" style="fill:white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" style="text-anchor:middle;font-size:14px">saturation throughput ({mode})</text>"#,
        WIDTH / 2.0
    );

    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" style="fill:none;stroke:black"/>"#
    );
    for k in 0..=TICKS {
        let xv = x_min + (x_max - x_min) * k as f64 / TICKS as f64;
        let yv = y_max * k as f64 / TICKS as f64;
        let (px, py) = (f.x(xv), f.y(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{:.2}" style="stroke:black"/><text x="{px:.2}" y="{:.2}" style="text-anchor:middle">{}</text>"#,
            y0 + 5.0,
            y0 + 20.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" style="stroke:black"/><line x1="{x0}" y1="{py:.2}" x2="{x1}" y2="{py:.2}" style="stroke:#dddddd"/><text x="{:.2}" y="{:.2}" style="text-anchor:end">{yv:.2}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" style="text-anchor:middle">{x_label}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" transform="rotate(-90 18 {:.2})" style="text-anchor:middle">normalized throughput S</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    // Model line, broken where the solver produced no value.
    let mut segment: Vec<String> = Vec::new();
    let flush = |segment: &mut Vec<String>, s: &mut String| {
        if segment.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" style="fill:none;stroke:#1f77b4;stroke-width:2"/>"#,
                segment.join(" ")
            );
        } else if let Some(p) = segment.first() {
            let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(
                s,
                r#"<circle cx="{cx}" cy="{cy}" r="2" style="fill:#1f77b4"/>"#
            );
        }
        segment.clear();
    };
    for r in rows {
        match r.s_model {
            Some(m) => segment.push(format!("{:.2},{:.2}", f.x(r.value), f.y(m))),
            None => flush(&mut segment, &mut s),
        }
    }
    flush(&mut segment, &mut s);

    for r in rows {
        let (px, py) = (f.x(r.value), f.y(r.sim_mean));
        if let Some(h) = r.sim_ci95 {
            let (lo, hi) = (f.y((r.sim_mean - h).max(0.0)), f.y(r.sim_mean + h));
            let _ = writeln!(
                s,
                r#"<path d="M{px:.2} {lo:.2} L{px:.2} {hi:.2} M{:.2} {lo:.2} L{:.2} {lo:.2} M{:.2} {hi:.2} L{:.2} {hi:.2}" style="stroke:#d62728"/>"#,
                px - 4.0,
                px + 4.0,
                px - 4.0,
                px + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="4" style="fill:none;stroke:#d62728;stroke-width:1.5"/>"#
        );
    }

    let lx = x1 - 150.0;
    let _ = writeln!(
        s,
        r#"<line x1="{lx}" y1="{}" x2="{}" y2="{}" style="stroke:#1f77b4;stroke-width:2"/><text x="{}" y="{}">model</text>"#,
        TOP + 10.0,
        lx + 25.0,
        TOP + 10.0,
        lx + 32.0,
        TOP + 14.0
    );
    let _ = writeln!(
        s,
        r#"<circle cx="{}" cy="{}" r="4" style="fill:none;stroke:#d62728;stroke-width:1.5"/><text x="{}" y="{}">simulation (95% CI)</text>"#,
        lx + 12.5,
        TOP + 28.0,
        lx + 32.0,
        TOP + 32.0
    );
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64) -> String {
    if v.fract().abs() < 1e-9 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}
