//! CSV, JSON and SVG artifacts for experiment results.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use stackbelief_core::RunSummary;

use crate::error::{io_err, Result};
use crate::harness::{ExperimentResult, Scheme, StatsTable};
use crate::scenario::Intention;

/// Percentages in CSV files carry one decimal; JSON keeps full precision.
fn pct(v: f64) -> String {
    format!("{v:.1}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path).map_err(io_err(path))?))
}

fn cells(table: &StatsTable) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..table.truths.len()).flat_map(move |r| (0..table.schemes.len()).map(move |c| (r, c)))
}

pub fn write_win_matrix(path: &Path, table: &StatsTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["true_intention", "scheme", "percent", "n"])?;
    for (r, c) in cells(table) {
        w.write_record([
            table.truths[r].to_string(),
            table.schemes[c].to_string(),
            pct(table.win_percent[r][c]),
            table.run_count[r].to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_pct_higher(path: &Path, table: &StatsTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["true_intention", "scheme", "pct_higher", "n"])?;
    for (r, c) in cells(table) {
        w.write_record([
            table.truths[r].to_string(),
            table.schemes[c].to_string(),
            pct(table.pct_higher[r][c]),
            table.run_count[r].to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_tau_sweep(path: &Path, tables: &[StatsTable]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["tau", "true_intention", "scheme", "percent", "n"])?;
    for table in tables {
        for (r, c) in cells(table) {
            w.write_record([
                table.tau.to_string(),
                table.truths[r].to_string(),
                table.schemes[c].to_string(),
                pct(table.win_percent[r][c]),
                table.run_count[r].to_string(),
            ])?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Adaptive-scheme posteriors, one row per observation step. Returns the
/// number of rows written (zero when no adaptive runs exist).
pub fn write_posterior_trace(path: &Path, result: &ExperimentResult) -> Result<usize> {
    let mut w = csv_writer(path)?;
    w.write_record(["tau", "run_index", "true_intention", "t", "p_T", "p_I", "p_A"])?;
    let mut rows = 0;
    for g in &result.groups {
        let Ok(outcomes) = &g.outcome else { continue };
        for trace in outcomes.iter().filter_map(|o| o.posterior_trace.as_ref()) {
            for (t, probs) in trace.iter().enumerate() {
                let mut rec = vec![g.tau.to_string(), g.run_index.to_string(), g.truth.to_string(), t.to_string()];
                rec.extend(probs.iter().map(|p| format!("{p:.6e}")));
                w.write_record(&rec)?;
                rows += 1;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(rows)
}

#[derive(Serialize)]
struct LogLine<'a> {
    run_index: usize,
    true_intention: Intention,
    tau: usize,
    sigma_leader: f64,
    sigma_follower: f64,
    scheme: Option<Scheme>,
    error: Option<&'a str>,
    #[serde(flatten)]
    run: Option<RunSummary>,
}

/// One JSON object per (run, scheme); failed runs get a single line with
/// the error message.
pub fn write_run_log(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for g in &result.groups {
        let base = |scheme, error, run| LogLine {
            run_index: g.run_index,
            true_intention: g.truth,
            tau: g.tau,
            sigma_leader: g.sample.sigma_leader,
            sigma_follower: g.sample.sigma_follower,
            scheme,
            error,
            run,
        };
        match &g.outcome {
            Ok(outcomes) => {
                for o in outcomes {
                    serde_json::to_writer(&mut w, &base(Some(o.scheme), None, Some(o.record.summary())))?;
                    w.write_all(b"\n").map_err(io_err(path))?;
                }
            }
            Err(e) => {
                serde_json::to_writer(&mut w, &base(None, Some(e), None))?;
                w.write_all(b"\n").map_err(io_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn write_stats_json(path: &Path, tables: &[StatsTable]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut w, tables)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

const PALETTE: [&str; 6] = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377"];

fn svg_open(width: f64, height: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        width / 2.0
    )
}

fn legend(s: &mut String, x: f64, y: f64, names: &[String]) {
    for (k, name) in names.iter().enumerate() {
        let yy = y + 16.0 * k as f64;
        let _ = writeln!(s, "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>", yy - 9.0, PALETTE[k % 6]);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{yy}\">{name}</text>", x + 14.0);
    }
}

/// Grouped bar chart: one group per true intention, one bar per scheme.
pub fn bar_chart_svg(title: &str, table: &StatsTable, values: &[Vec<f64>], y_label: &str) -> String {
    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (60.0, 130.0, 40.0, 40.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let y_max = values.iter().flatten().copied().fold(0.0f64, f64::max).max(1e-9) * 1.05;
    let mut s = svg_open(w, h, title);
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        top + plot_h,
        left + plot_w,
        top + plot_h
    );
    let _ = writeln!(s, "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"black\"/>", top + plot_h);
    let _ = writeln!(
        s,
        "<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">{y_label}</text>",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y_max:.1}</text>", left - 4.0, top + 4.0);
    let groups = table.truths.len().max(1) as f64;
    let group_w = plot_w / groups;
    let bar_w = group_w * 0.8 / table.schemes.len().max(1) as f64;
    for (r, truth) in table.truths.iter().enumerate() {
        let gx = left + group_w * r as f64 + group_w * 0.1;
        for (c, v) in values[r].iter().enumerate() {
            let bh = plot_h * v / y_max;
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"><title>{truth} / {}: {v:.2}</title></rect>",
                gx + bar_w * c as f64,
                top + plot_h - bh,
                bar_w,
                bh,
                PALETTE[c % 6],
                table.schemes[c]
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">true {truth}</text>",
            gx + group_w * 0.4,
            top + plot_h + 18.0
        );
    }
    let names: Vec<String> = table.schemes.iter().map(Scheme::to_string).collect();
    legend(&mut s, left + plot_w + 15.0, top + 10.0, &names);
    s.push_str("</svg>\n");
    s
}

/// Win percentage against tau, one panel per true intention.
pub fn tau_sweep_svg(title: &str, tables: &[StatsTable]) -> String {
    let Some(first) = tables.first() else { return svg_open(200.0, 40.0, title) + "</svg>\n" };
    let panel_h = 200.0;
    let (w, left, right, top) = (640.0, 60.0, 130.0, 40.0);
    let plot_w = w - left - right;
    let h = top + panel_h * first.truths.len() as f64 + 20.0;
    let mut s = svg_open(w, h, title);
    let taus: Vec<f64> = tables.iter().map(|t| t.tau as f64).collect();
    let (t_min, t_max) = (taus.iter().copied().fold(f64::MAX, f64::min), taus.iter().copied().fold(f64::MIN, f64::max));
    let span = (t_max - t_min).max(1.0);
    for (r, truth) in first.truths.iter().enumerate() {
        let y0 = top + panel_h * r as f64;
        let ph = panel_h - 50.0;
        let _ = writeln!(s, "<text x=\"{left}\" y=\"{}\">true {truth}</text>", y0 + 10.0);
        let _ =
            writeln!(s, "<rect x=\"{left}\" y=\"{}\" width=\"{plot_w}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>", y0 + 15.0);
        for (k, tau) in taus.iter().enumerate() {
            let x = left + plot_w * (tau - t_min) / span;
            let _ = writeln!(s, "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>", y0 + ph + 30.0, tables[k].tau);
        }
        for (c, _) in first.schemes.iter().enumerate() {
            let pts: Vec<String> = tables
                .iter()
                .zip(&taus)
                .map(|(t, tau)| {
                    let x = left + plot_w * (tau - t_min) / span;
                    let y = y0 + 15.0 + ph * (1.0 - t.win_percent[r][c] / 100.0);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
                pts.join(" "),
                PALETTE[c % 6]
            );
        }
    }
    let names: Vec<String> = first.schemes.iter().map(Scheme::to_string).collect();
    legend(&mut s, left + plot_w + 15.0, top + 25.0, &names);
    s.push_str("</svg>\n");
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}
