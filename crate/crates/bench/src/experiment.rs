//! Seeded benchmark campaigns.
//!
//! A campaign is the cartesian product of sweep points, seeds and modes.
//! Each finished run is appended to a CSV file immediately; restarting the
//! same campaign skips every row already present.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use pkpiece::planner::{plan, Mode, Outcome};
use serde::{Deserialize, Serialize};

use crate::replay::replay_open_loop;
use crate::scenario::{Scenario, ScenarioError};

/// CSV column order.
pub const COLUMNS: [&str; 10] = [
    "scenario",
    "seed",
    "mode",
    "sweep",
    "success",
    "wall_time_s",
    "states",
    "cells",
    "plan_len_s",
    "replay_frac",
];

/// One planner run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub seed: u64,
    pub mode: Mode,
    /// `param=value`, or empty when no sweep is active.
    pub sweep: String,
    pub success: bool,
    pub wall_time_s: f64,
    pub states: usize,
    pub cells: usize,
    pub plan_len_s: f64,
    pub replay_frac: f64,
}

pub type RecordKey = (String, u64, Mode, String);

impl RunRecord {
    pub fn key(&self) -> RecordKey {
        (
            self.scenario.clone(),
            self.seed,
            self.mode,
            self.sweep.clone(),
        )
    }

    /// Fields in [`COLUMNS`] order with fixed formatting.
    pub fn to_row(&self) -> [String; 10] {
        [
            self.scenario.clone(),
            self.seed.to_string(),
            self.mode.name().to_string(),
            self.sweep.clone(),
            u8::from(self.success).to_string(),
            format!("{:.6}", self.wall_time_s),
            self.states.to_string(),
            self.cells.to_string(),
            format!("{:.3}", self.plan_len_s),
            format!("{:.4}", self.replay_frac),
        ]
    }

    pub fn from_row(row: &csv::StringRecord) -> io::Result<Self> {
        let bad = |what: &str| {
            io::Error::new(io::ErrorKind::InvalidData, format!("bad {what} in {row:?}"))
        };
        if row.len() != COLUMNS.len() {
            return Err(bad("column count"));
        }
        let f = |i: usize| row.get(i).unwrap_or_default();
        Ok(Self {
            scenario: f(0).to_string(),
            seed: f(1).parse().map_err(|_| bad("seed"))?,
            mode: f(2).parse().map_err(|_| bad("mode"))?,
            sweep: f(3).to_string(),
            success: match f(4) {
                "1" => true,
                "0" => false,
                _ => return Err(bad("success")),
            },
            wall_time_s: f(5).parse().map_err(|_| bad("wall_time_s"))?,
            states: f(6).parse().map_err(|_| bad("states"))?,
            cells: f(7).parse().map_err(|_| bad("cells"))?,
            plan_len_s: f(8).parse().map_err(|_| bad("plan_len_s"))?,
            replay_frac: f(9).parse().map_err(|_| bad("replay_frac"))?,
        })
    }

    /// Sweep parameter and value, if any.
    pub fn sweep_point(&self) -> Option<(&str, f64)> {
        let (p, v) = self.sweep.split_once('=')?;
        Some((p, v.parse().ok()?))
    }
}

/// Writes `records` as a complete CSV document (header included).
pub fn write_csv<W: io::Write>(out: W, records: &[RunRecord]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()
}

pub fn read_csv(path: &Path) -> io::Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(io::Error::other)?;
    let header = rd.headers().map_err(io::Error::other)?;
    if header.iter().ne(COLUMNS) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "unexpected CSV header",
        ));
    }
    rd.records()
        .map(|r| RunRecord::from_row(&r.map_err(io::Error::other)?))
        .collect()
}

/// A parameter and the values to try.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<f64>,
}

impl std::str::FromStr for Sweep {
    type Err = String;

    /// `param=v1,v2,...`
    fn from_str(s: &str) -> Result<Self, String> {
        let (param, vals) = s.split_once('=').ok_or("expected param=v1,v2,...")?;
        let values = vals
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad sweep value '{v}'"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if param.is_empty() || values.is_empty() {
            return Err("expected param=v1,v2,...".into());
        }
        Ok(Sweep {
            param: param.to_string(),
            values,
        })
    }
}

pub fn sweep_label(param: &str, value: f64) -> String {
    format!("{param}={value}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    /// Noisy executions per solved plan; zero skips replay.
    pub replay_trials: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self { replay_trials: 100 }
    }
}

/// Seed of the replay stream for a planner seed.
pub fn replay_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

fn failed(scenario: &Scenario, seed: u64, mode: Mode, sweep: &str) -> RunRecord {
    RunRecord {
        scenario: scenario.name.clone(),
        seed,
        mode,
        sweep: sweep.to_string(),
        success: false,
        wall_time_s: 0.0,
        states: 0,
        cells: 0,
        plan_len_s: 0.0,
        replay_frac: 0.0,
    }
}

/// Plans once and, on success, replays the plan under noise.
pub fn run_once(
    scenario: &Scenario,
    seed: u64,
    mode: Mode,
    sweep: &str,
    opts: &ExperimentOptions,
) -> RunRecord {
    let mut rec = failed(scenario, seed, mode, sweep);
    let query = match scenario.query(mode) {
        Ok(q) => q,
        Err(e) => {
            log::error!("{} seed {seed}: {e}", scenario.name);
            return rec;
        }
    };
    let outcome = match plan(&query, seed) {
        Ok(o) => o,
        Err(e) => {
            log::error!("{} seed {seed} {}: {e}", scenario.name, mode.name());
            return rec;
        }
    };
    let stats = outcome.statistics();
    rec.wall_time_s = stats.wall_time_s;
    rec.states = stats.states;
    rec.cells = stats.cells;
    if let Outcome::Solved(p) = &outcome {
        rec.success = true;
        rec.plan_len_s = p.duration;
        if opts.replay_trials > 0 {
            rec.replay_frac = replay_open_loop(&query, p, opts.replay_trials, replay_seed(seed));
        }
    }
    rec
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    /// Records of the whole campaign in run order, resumed ones included.
    pub records: Vec<RunRecord>,
    /// Planner invocations performed by this call.
    pub executed: usize,
}

/// Runs every (sweep point, seed, mode) combination. With `log_path`, rows
/// already in that CSV are reused and new rows are appended as they finish.
/// A panicking run becomes a failed record.
pub fn run_experiment(
    scenario: &Scenario,
    seeds: &[u64],
    modes: &[Mode],
    sweep: Option<&Sweep>,
    opts: &ExperimentOptions,
    log_path: Option<&Path>,
) -> Result<CampaignResult, ScenarioError> {
    let points: Vec<(Scenario, String)> = match sweep {
        None => vec![(scenario.clone(), String::new())],
        Some(s) => s
            .values
            .iter()
            .map(|v| {
                Ok((
                    scenario.with_param(&s.param, *v)?,
                    sweep_label(&s.param, *v),
                ))
            })
            .collect::<Result<_, ScenarioError>>()?,
    };
    let io_err = |e: io::Error| ScenarioError::Io {
        path: log_path
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
        source: e,
    };
    let existing = match log_path {
        Some(p) if p.exists() => read_csv(p).map_err(io_err)?,
        _ => Vec::new(),
    };
    let done: HashSet<RecordKey> = existing.iter().map(RunRecord::key).collect();
    let mut writer = match log_path {
        Some(p) => {
            let fresh = !p.exists();
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(io_err)?;
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(file);
            if fresh {
                w.write_record(COLUMNS).map_err(|e| io_err(e.into()))?;
                w.flush().map_err(io_err)?;
            }
            Some(w)
        }
        None => None,
    };

    let mut records = Vec::new();
    let mut executed = 0;
    for (sc, label) in &points {
        for &seed in seeds {
            for &mode in modes {
                let key = (sc.name.clone(), seed, mode, label.clone());
                if done.contains(&key) {
                    let prev = existing
                        .iter()
                        .find(|r| r.key() == key)
                        .expect("key present");
                    records.push(prev.clone());
                    continue;
                }
                executed += 1;
                let rec = catch_unwind(AssertUnwindSafe(|| run_once(sc, seed, mode, label, opts)))
                    .unwrap_or_else(|_| {
                        log::error!("{} seed {seed} {} panicked", sc.name, mode.name());
                        failed(sc, seed, mode, label)
                    });
                log::info!(
                    "{} {label} seed {seed} {}: success {} in {:.3} s",
                    sc.name,
                    mode.name(),
                    rec.success,
                    rec.wall_time_s
                );
                if let Some(w) = writer.as_mut() {
                    w.write_record(rec.to_row()).map_err(|e| io_err(e.into()))?;
                    w.flush().map_err(io_err)?;
                }
                records.push(rec);
            }
        }
    }
    Ok(CampaignResult { records, executed })
}

/// Parses `A..B` (inclusive) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed '{a}'"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed '{b}'"))?;
        if a > b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("bad seed '{v}'")))
        .collect()
}
