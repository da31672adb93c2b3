//! Aggregation of run records into a CSV and deterministic SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use pkpiece::planner::Mode;

use crate::experiment::{write_csv, RunRecord};

pub const REPORT_CSV: &str = "report.csv";

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Mean of `f` over successful runs and success rate, per mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub runs: usize,
    pub success_rate: f64,
    pub mean_time_s: f64,
    pub mean_states: f64,
    pub mean_cells: f64,
    pub mean_replay: f64,
}

pub fn summarize<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Option<Summary> {
    let all: Vec<&RunRecord> = records.into_iter().collect();
    let ok: Vec<&&RunRecord> = all.iter().filter(|r| r.success).collect();
    if all.is_empty() {
        return None;
    }
    let m = |f: fn(&RunRecord) -> f64| mean(ok.iter().map(|r| f(r))).unwrap_or(0.0);
    Some(Summary {
        runs: all.len(),
        success_rate: ok.len() as f64 / all.len() as f64,
        mean_time_s: m(|r| r.wall_time_s),
        mean_states: m(|r| r.states as f64),
        mean_cells: m(|r| r.cells as f64),
        mean_replay: m(|r| r.replay_frac),
    })
}

fn by_mode(records: &[RunRecord]) -> BTreeMap<Mode, Vec<&RunRecord>> {
    let mut m: BTreeMap<Mode, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        m.entry(r.mode).or_default().push(r);
    }
    m
}

struct Frame {
    x0: f64,
    x1: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 {
            self.x1 - self.x0
        } else {
            1.0
        };
        LEFT + (x - self.x0) / span * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = if self.y1 > 0.0 { self.y1 } else { 1.0 };
        H - BOTTOM - y / span * (H - TOP - BOTTOM)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn open(title: &str, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        esc(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    );
    s
}

fn axes(s: &mut String, f: &Frame) {
    let (xa, xb, yb, yt) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(
        s,
        r#"<line x1="{xa}" y1="{yb}" x2="{xb}" y2="{yb}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{xa}" y1="{yb}" x2="{xa}" y2="{yt}" stroke="black"/>"#
    );
    for i in 0..=4 {
        let v = f.y1 * i as f64 / 4.0;
        let y = f.py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{xa}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            xa - 4.0,
            xa - 6.0,
            y + 4.0,
            tick(v)
        );
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(s: &mut String, names: &[String]) {
    for (i, n) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 10.0,
            COLORS[i % COLORS.len()],
            x + 18.0,
            y,
            esc(n)
        );
    }
}

/// Line chart, one series per entry.
pub fn line_chart(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let xs = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0));
    let x0 = xs.clone().fold(f64::INFINITY, f64::min);
    let x1 = xs.fold(f64::NEG_INFINITY, f64::max);
    let ymax = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.1))
        .fold(0.0, f64::max);
    let f = Frame {
        x0: if x0.is_finite() { x0 } else { 0.0 },
        x1: if x1.is_finite() { x1 } else { 1.0 },
        y1: if ymax > 0.0 { ymax * 1.1 } else { 1.0 },
    };
    let mut s = open(title, xlabel, ylabel);
    axes(&mut s, &f);
    let mut ticks: Vec<f64> = series
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.0))
        .collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let px = f.px(x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            H - BOTTOM,
            H - BOTTOM + 4.0,
            H - BOTTOM + 18.0,
            tick(x)
        );
    }
    for (i, (_, pts)) in series.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#,
                f.px(x),
                f.py(y)
            );
        }
    }
    legend(
        &mut s,
        &series.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
    );
    s.push_str("</svg>\n");
    s
}

/// Grouped bar chart: `groups[g] = (label, values per series)`.
pub fn bar_chart(
    title: &str,
    ylabel: &str,
    series: &[String],
    groups: &[(String, Vec<f64>)],
) -> String {
    let ymax = groups
        .iter()
        .flat_map(|g| g.1.iter().copied())
        .fold(0.0, f64::max);
    let f = Frame {
        x0: 0.0,
        x1: groups.len().max(1) as f64,
        y1: if ymax > 0.0 { ymax * 1.1 } else { 1.0 },
    };
    let mut s = open(title, "", ylabel);
    axes(&mut s, &f);
    let slot = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    let bar = slot * 0.7 / series.len().max(1) as f64;
    for (g, (label, vals)) in groups.iter().enumerate() {
        let gx = LEFT + slot * g as f64 + slot * 0.15;
        for (i, v) in vals.iter().enumerate() {
            let y = f.py(*v);
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{y:.1}" width="{bar:.1}" height="{:.1}" fill="{}"/>"#,
                gx + bar * i as f64,
                H - BOTTOM - y,
                COLORS[i % COLORS.len()]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + slot * (g as f64 + 0.5),
            H - BOTTOM + 18.0,
            esc(label)
        );
    }
    legend(&mut s, series);
    s.push_str("</svg>\n");
    s
}

fn sweep_charts(records: &[RunRecord]) -> Vec<(String, String)> {
    // param -> mode -> value bits -> records
    let mut groups: BTreeMap<String, BTreeMap<Mode, BTreeMap<u64, Vec<&RunRecord>>>> =
        BTreeMap::new();
    for r in records {
        if let Some((p, v)) = r.sweep_point() {
            // Order-preserving key for non-negative values.
            let key = if v >= 0.0 { v.to_bits() } else { 0 };
            groups
                .entry(p.to_string())
                .or_default()
                .entry(r.mode)
                .or_default()
                .entry(key)
                .or_default()
                .push(r);
        }
    }
    let mut out = Vec::new();
    for (param, modes) in &groups {
        let series = |f: fn(&Summary) -> f64| -> Vec<(String, Vec<(f64, f64)>)> {
            modes
                .iter()
                .map(|(m, pts)| {
                    let line = pts
                        .iter()
                        .filter_map(|(x, rs)| {
                            summarize(rs.iter().copied()).map(|s| (f64::from_bits(*x), f(&s)))
                        })
                        .collect();
                    (m.name().to_string(), line)
                })
                .collect()
        };
        out.push((
            format!("time_vs_{param}.svg"),
            line_chart(
                &format!("Planning time vs {param}"),
                param,
                "mean time of solved runs (s)",
                &series(|s| s.mean_time_s),
            ),
        ));
        out.push((
            format!("success_vs_{param}.svg"),
            line_chart(
                &format!("Success rate vs {param}"),
                param,
                "fraction solved",
                &series(|s| s.success_rate),
            ),
        ));
        out.push((
            format!("replay_vs_{param}.svg"),
            line_chart(
                &format!("Open-loop replay success vs {param}"),
                param,
                "mean replay success",
                &series(|s| s.mean_replay),
            ),
        ));
    }
    out
}

/// File name and contents of every chart derived from `records`.
pub fn charts(records: &[RunRecord]) -> Vec<(String, String)> {
    if records.is_empty() {
        return Vec::new();
    }
    let modes = by_mode(records);
    let summaries: Vec<(String, Summary)> = modes
        .iter()
        .filter_map(|(m, rs)| summarize(rs.iter().copied()).map(|s| (m.name().to_string(), s)))
        .collect();
    let mut out = vec![
        (
            "states_cells.svg".to_string(),
            bar_chart(
                "Tree size of solved runs",
                "mean count",
                &["states".to_string(), "cells".to_string()],
                &summaries
                    .iter()
                    .map(|(n, s)| (n.clone(), vec![s.mean_states, s.mean_cells]))
                    .collect::<Vec<_>>(),
            ),
        ),
        (
            "replay.svg".to_string(),
            bar_chart(
                "Open-loop replay success",
                "mean fraction",
                &["replay".to_string()],
                &summaries
                    .iter()
                    .map(|(n, s)| (n.clone(), vec![s.mean_replay]))
                    .collect::<Vec<_>>(),
            ),
        ),
    ];
    out.extend(sweep_charts(records));
    out
}

/// Writes `report.csv` and every chart into `dir`. Returns the written paths.
/// An empty record list produces the CSV header only.
pub fn emit_report(records: &[RunRecord], dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(REPORT_CSV);
    write_csv(fs::File::create(&csv_path)?, records)?;
    let mut written = vec![csv_path];
    for (name, svg) in charts(records) {
        let p = dir.join(name);
        fs::write(&p, svg)?;
        written.push(p);
    }
    Ok(written)
}
