use pkbench::experiment::{
    parse_seeds, read_csv, run_experiment, write_csv, ExperimentOptions, RunRecord, Sweep,
};
use pkbench::report::{charts, emit_report, REPORT_CSV};
use pkbench::scenario::Scenario;
use pkpiece::planner::Mode;

fn record(seed: u64, mode: Mode, sweep: &str, success: bool) -> RunRecord {
    RunRecord {
        scenario: "tabletop-3".into(),
        seed,
        mode,
        sweep: sweep.into(),
        success,
        wall_time_s: 0.25 + seed as f64 / 3.0,
        states: 40 + seed as usize,
        cells: 20 + seed as usize,
        plan_len_s: if success { 1.0 / 3.0 } else { 0.0 },
        replay_frac: if success { 2.0 / 3.0 } else { 0.0 },
    }
}

fn fixture() -> Vec<RunRecord> {
    let mut v = Vec::new();
    for sweep in ["n_p=2", "n_p=4"] {
        for seed in 0..2 {
            for mode in [Mode::Probabilistic, Mode::Baseline] {
                v.push(record(
                    seed,
                    mode,
                    sweep,
                    seed == 0 || mode == Mode::Probabilistic,
                ));
            }
        }
    }
    v
}

#[test]
fn csv_matches_golden_file() {
    let mut buf = Vec::new();
    write_csv(&mut buf, &fixture()).unwrap();
    let golden = include_str!("golden/report.csv");
    assert_eq!(String::from_utf8(buf).unwrap(), golden);
}

#[test]
fn csv_round_trips_through_the_reader() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_csv(std::fs::File::create(&path).unwrap(), &fixture()).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back.len(), 8);
    for (a, b) in back.iter().zip(fixture()) {
        assert_eq!(a.to_row(), b.to_row());
    }
}

#[test]
fn empty_report_has_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let written = emit_report(&[], dir.path()).unwrap();
    assert_eq!(written.len(), 1);
    let text = std::fs::read_to_string(dir.path().join(REPORT_CSV)).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("scenario,seed,mode,sweep,success"));
    let svgs = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "svg")
        })
        .count();
    assert_eq!(svgs, 0);
}

#[test]
fn charts_are_deterministic_and_cover_sweeps() {
    let a = charts(&fixture());
    let b = charts(&fixture());
    assert_eq!(a, b);
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "states_cells.svg",
        "replay.svg",
        "time_vs_n_p.svg",
        "success_vs_n_p.svg",
        "replay_vs_n_p.svg",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    for (_, svg) in &a {
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}

#[test]
fn seeds_and_sweeps_parse() {
    assert_eq!(parse_seeds("3..5").unwrap(), vec![3, 4, 5]);
    assert_eq!(parse_seeds("1,7").unwrap(), vec![1, 7]);
    assert!(parse_seeds("5..3").is_err());
    let s: Sweep = "clutter=0,5,10".parse().unwrap();
    assert_eq!(
        (s.param.as_str(), s.values),
        ("clutter", vec![0.0, 5.0, 10.0])
    );
    assert!("clutter".parse::<Sweep>().is_err());
    assert!("k=a".parse::<Sweep>().is_err());
}

fn quick_scenario() -> Scenario {
    let mut s = Scenario::tabletop(3);
    s.planner.k = 3;
    s.planner.n_p = 3;
    s.planner.max_iterations = Some(400);
    s
}

#[test]
fn campaign_resumes_without_rerunning() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("runs.csv");
    let sc = quick_scenario();
    let modes = [Mode::Probabilistic, Mode::Baseline];
    let sweep: Sweep = "n_p=2,4".parse().unwrap();
    let opts = ExperimentOptions { replay_trials: 3 };

    let first = run_experiment(&sc, &[0, 1], &modes, Some(&sweep), &opts, Some(&log)).unwrap();
    assert_eq!(first.executed, 8);
    assert_eq!(read_csv(&log).unwrap().len(), 8);

    let again = run_experiment(&sc, &[0, 1], &modes, Some(&sweep), &opts, Some(&log)).unwrap();
    assert_eq!(again.executed, 0);
    let rows = |v: &[RunRecord]| v.iter().map(RunRecord::to_row).collect::<Vec<_>>();
    assert_eq!(rows(&first.records), rows(&again.records));

    // Simulate an interruption after three rows.
    let text = std::fs::read_to_string(&log).unwrap();
    let kept: Vec<&str> = text.lines().take(4).collect();
    std::fs::write(&log, kept.join("\n") + "\n").unwrap();
    let resumed = run_experiment(&sc, &[0, 1], &modes, Some(&sweep), &opts, Some(&log)).unwrap();
    assert_eq!(resumed.executed, 5);
    let without_time = |v: &[RunRecord]| {
        v.iter()
            .map(|r| {
                RunRecord {
                    wall_time_s: 0.0,
                    ..r.clone()
                }
                .to_row()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(without_time(&first.records), without_time(&resumed.records));
    assert_eq!(read_csv(&log).unwrap().len(), 8);
}

#[test]
fn failing_runs_become_records() {
    let mut sc = quick_scenario();
    sc.planner.max_iterations = Some(1);
    let out = run_experiment(
        &sc,
        &[0],
        &[Mode::Baseline],
        None,
        &ExperimentOptions::default(),
        None,
    )
    .unwrap();
    assert_eq!(out.records.len(), 1);
    let r = &out.records[0];
    assert!(!r.success);
    assert_eq!(
        (r.replay_frac, r.plan_len_s, r.sweep.as_str()),
        (0.0, 0.0, "")
    );
    assert!(r.states >= 1);
}
