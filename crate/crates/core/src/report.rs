//! CSV, JSON, and SVG outputs for benchmark runs.
//!
//! All writers are pure functions of their inputs, so re-running a
//! benchmark with the same seed reproduces every output file byte for
//! byte.
//!
//! # CSV schema
//!
//! One row per `(step, body)`, steps `0..=n_steps`, bodies in free-body
//! order. The base columns are
//!
//! ```text
//! step,body,truth_x,truth_y,truth_theta,truth_vx,truth_vy,truth_omega,
//! meas_x,meas_y,meas_theta
//! ```
//!
//! followed, for each filter track present (in record order, `{f}` is the
//! track name), by
//!
//! ```text
//! {f}_x,{f}_y,{f}_theta,{f}_vx,{f}_vy,{f}_omega,
//! {f}_var_x,{f}_var_y,{f}_var_theta,{f}_var_vx,{f}_var_vy,{f}_var_omega,
//! {f}_sep,{f}_stick,{f}_slide_pos,{f}_slide_neg,
//! {f}_ess,{f}_resampled,{f}_underflow,{f}_qp_infeasible,{f}_regularized,
//! {f}_penetration
//! ```
//!
//! Ensemble-level columns (the label histogram, `ess`, the flags, and
//! `penetration`) carry the same value on every body row of a step.
//! Booleans are written as `0`/`1`; floats use the shortest decimal form
//! that round-trips.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::harness::{ComparisonReport, FilterTrack, RunRecord};
use crate::{Error, Result};

/// Renders the trajectory CSV described in the module docs.
pub fn run_csv(rec: &RunRecord) -> String {
    let mut out = String::new();
    out.push_str("step,body,truth_x,truth_y,truth_theta,truth_vx,truth_vy,truth_omega");
    out.push_str(",meas_x,meas_y,meas_theta");
    for track in &rec.filters {
        let f = &track.name;
        for col in ["x", "y", "theta", "vx", "vy", "omega"] {
            let _ = write!(out, ",{f}_{col}");
        }
        for col in ["var_x", "var_y", "var_theta", "var_vx", "var_vy", "var_omega"] {
            let _ = write!(out, ",{f}_{col}");
        }
        for col in [
            "sep",
            "stick",
            "slide_pos",
            "slide_neg",
            "ess",
            "resampled",
            "underflow",
            "qp_infeasible",
            "regularized",
            "penetration",
        ] {
            let _ = write!(out, ",{f}_{col}");
        }
    }
    out.push('\n');

    let nd = 3 * rec.n_free();
    for t in 0..=rec.n_steps {
        for (j, id) in rec.body_ids.iter().enumerate() {
            let _ = write!(out, "{t},{id}");
            for d in 0..3 {
                let _ = write!(out, ",{}", rec.truth_q[t][3 * j + d]);
            }
            for d in 0..3 {
                let _ = write!(out, ",{}", rec.truth_v[t][3 * j + d]);
            }
            for d in 0..3 {
                let _ = write!(out, ",{}", rec.meas[t][3 * j + d]);
            }
            for track in &rec.filters {
                for d in 0..3 {
                    let _ = write!(out, ",{}", track.mean[t][3 * j + d]);
                }
                for d in 0..3 {
                    let _ = write!(out, ",{}", track.mean[t][nd + 3 * j + d]);
                }
                for d in 0..3 {
                    let _ = write!(out, ",{}", track.cov_diag[t][3 * j + d]);
                }
                for d in 0..3 {
                    let _ = write!(out, ",{}", track.cov_diag[t][nd + 3 * j + d]);
                }
                for count in track.label_histogram[t] {
                    let _ = write!(out, ",{count}");
                }
                let _ = write!(
                    out,
                    ",{},{},{},{},{},{}",
                    track.ess[t],
                    track.resampled[t] as u8,
                    track.weight_underflow[t] as u8,
                    track.qp_infeasible[t],
                    track.regularized[t],
                    track.penetration[t],
                );
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_run_csv(rec: &RunRecord, path: &Path) -> Result<()> {
    fs::write(path, run_csv(rec))?;
    Ok(())
}

/// Serializes a comparison report as pretty-printed JSON.
pub fn report_json(report: &ComparisonReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn write_report_json(report: &ComparisonReport, path: &Path) -> Result<()> {
    fs::write(path, report_json(report)?)?;
    Ok(())
}

/// One swept parameter value with its full comparison report.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub report: ComparisonReport,
}

/// Results of a parameter sweep, one point per swept value.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub param: String,
    pub points: Vec<SweepPoint>,
}

pub fn write_sweep_json(report: &SweepReport, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

// --- SVG line charts ---

const CHART_W: f64 = 860.0;
const CHART_H: f64 = 420.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 48.0;

struct Series<'a> {
    name: &'a str,
    color: &'a str,
    values: Vec<f64>,
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn line_chart(title: &str, series: &[Series]) -> String {
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for &v in &s.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let mut pad = 0.05 * (hi - lo);
    if pad == 0.0 {
        pad = 0.05 * hi.abs().max(1.0);
    }
    let (lo, hi) = (lo - pad, hi + pad);

    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let plot_h = CHART_H - MARGIN_T - MARGIN_B;
    let x_of = |t: f64| MARGIN_L + plot_w * t / (n.max(2) - 1) as f64;
    let y_of = |v: f64| MARGIN_T + plot_h * (1.0 - (v - lo) / (hi - lo));

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {CHART_W} {CHART_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{CHART_W}" height="{CHART_H}" fill="white"/>"#
    );
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{title}</text>"#,
        MARGIN_L + plot_w / 2.0
    );

    // axes, grid, and tick labels
    for k in 0..5 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_of(v);
        let _ = write!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##,
            MARGIN_L + plot_w
        );
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0,
            tick_label(v)
        );
    }
    for k in 0..5 {
        let t = (n.saturating_sub(1)) as f64 * k as f64 / 4.0;
        let x = x_of(t);
        let _ = write!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_T + plot_h + 18.0,
            tick_label(t.round())
        );
    }
    let _ = write!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{:.1}" stroke="black"/>"#,
        MARGIN_T + plot_h
    );
    let _ = write!(
        svg,
        r#"<line x1="{MARGIN_L}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    );
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">step</text>"#,
        MARGIN_L + plot_w / 2.0,
        CHART_H - 10.0
    );

    // data series
    for s in series {
        if s.values.is_empty() {
            continue;
        }
        let mut points = String::new();
        for (t, &v) in s.values.iter().enumerate() {
            let _ = write!(points, "{:.2},{:.2} ", x_of(t as f64), y_of(v));
        }
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
            points.trim_end(),
            s.color
        );
    }

    // legend
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_T + 8.0 + 16.0 * i as f64;
        let x = MARGIN_L + plot_w - 150.0;
        let _ = write!(
            svg,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/>"#,
            x + 22.0,
            s.color
        );
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            x + 28.0,
            y + 4.0,
            s.name
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn track_color(track: &FilterTrack) -> &'static str {
    match track.name.as_str() {
        "unconstrained" => "#d62728",
        "constrained" => "#1f77b4",
        _ => "#2ca02c",
    }
}

/// Writes one SVG line chart per (free body, DOF) into `dir`.
///
/// Each chart overlays the ground truth, the measurements (pose DOFs
/// only), and every filter track in the record.
pub fn write_svg_plots(rec: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    const DOF_NAMES: [&str; 6] = ["x", "y", "theta", "vx", "vy", "omega"];
    let nd = 3 * rec.n_free();
    let steps = 0..=rec.n_steps;
    let mut paths = Vec::new();

    for (j, id) in rec.body_ids.iter().enumerate() {
        for (d, dof) in DOF_NAMES.iter().enumerate() {
            let truth: Vec<f64> = steps
                .clone()
                .map(|t| {
                    if d < 3 {
                        rec.truth_q[t][3 * j + d]
                    } else {
                        rec.truth_v[t][3 * j + d - 3]
                    }
                })
                .collect();
            let mut series = vec![Series {
                name: "truth",
                color: "#000000",
                values: truth,
            }];
            if d < 3 {
                series.push(Series {
                    name: "measured",
                    color: "#bbbbbb",
                    values: steps.clone().map(|t| rec.meas[t][3 * j + d]).collect(),
                });
            }
            for track in &rec.filters {
                let idx = if d < 3 { 3 * j + d } else { nd + 3 * j + d - 3 };
                series.push(Series {
                    name: &track.name,
                    color: track_color(track),
                    values: steps.clone().map(|t| track.mean[t][idx]).collect(),
                });
            }
            let title = format!("{} body {} {}", rec.scenario, id, dof);
            let path = dir.join(format!("body{id}_{dof}.svg"));
            fs::write(&path, line_chart(&title, &series))?;
            paths.push(path);
        }
    }
    Ok(paths)
}
