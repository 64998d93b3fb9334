use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stemprolif"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SIM: &str = r#"{"s0": 500, "r": 0.15, "coeffs": {"a0": 1.3, "a1": 0.0, "a2": 0.0},
    "k": 3, "s": 0.01, "n_subjects": 5, "t_points": 8, "seed": 11}"#;

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.json"), SIM).unwrap();
    for out in ["a.csv", "b.csv"] {
        let o = run(&["simulate", "sim.json", "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |name: &str| fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.csv.meta.json"), read("b.csv.meta.json"));

    let o = run(&["simulate", "sim.json", "--out", "c.csv", "--seed", "12"], dir.path());
    assert!(o.status.success());
    assert_ne!(read("a.csv"), read("c.csv"));

    let meta: serde_json::Value = serde_json::from_slice(&read("a.csv.meta.json")).unwrap();
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["horizon_reason"], "decay");
    assert_eq!(meta["schedule"].as_array().unwrap().len(), 8);
}

#[test]
fn config_errors_exit_two_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("extra.json"), r#"{"s0": 10, "colour": 1}"#).unwrap();
    let o = run(&["simulate", "extra.json", "--out", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"));

    fs::write(
        dir.path().join("rate.json"),
        r#"{"s0": 10, "r": -1, "coeffs": {"a0": 1.3, "a1": 0, "a2": 0}, "n_subjects": 2, "t_points": 4}"#,
    )
    .unwrap();
    let o = run(&["simulate", "rate.json", "--out", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("r:"));

    let o = run(&["simulate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimate_writes_report_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.json"), SIM).unwrap();
    assert!(run(&["simulate", "sim.json", "--out", "cohort.csv"], dir.path()).status.success());
    let o = run(&["estimate", "cohort.csv", "--out", "report.json", "--method", "wls"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let r_hat = report["r_hat"].as_f64().unwrap();
    assert!(r_hat > 0.05 && r_hat < 0.4, "r_hat = {r_hat}");
    assert!(report["coeffs_hat"]["a0"].is_number());

    let table = fs::read_to_string(dir.path().join("report.trajectory.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("t,s_star_hat,f_hat,s_star_obs_median,f_obs_median"));
    assert_eq!(lines.count(), 9);
}

#[test]
fn estimate_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("tiny.csv"),
        "subject_id,t,stem_count,diff_count\na,1,5,0\n",
    )
    .unwrap();
    let o = run(&["estimate", "tiny.csv", "--out", "r.json"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

const LOG: &str = "cell_id,generation,time_first_observed,time_last_observed,outcome,lineage
1,1,0,12,SYM_RENEW,MEP
2,1,0,30,ASYM_RENEW,MEP
3,2,12,25,DIFF,MEP
4,2,12,41,NONE,MEP
5,2,30,44,SYM_RENEW,MkP
";

#[test]
fn ingest_aggregates_and_subsamples() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("log.csv"), LOG).unwrap();
    let o = run(&["ingest", "log.csv", "--out", "counts.csv", "--interval", "20"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let series = fs::read_to_string(dir.path().join("counts.series.csv")).unwrap();
    let rows: Vec<&str> = series.lines().skip(1).collect();
    assert_eq!(rows, ["0,2,0", "12,3,0", "25,2,2", "30,2,3"]);

    let counts = fs::read_to_string(dir.path().join("counts.csv")).unwrap();
    let rows: Vec<&str> = counts.lines().skip(1).collect();
    assert_eq!(rows, ["series_1,20,3,0", "series_1,30,2,3"]);
}

#[test]
fn ingest_rejects_non_positive_interval() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("log.csv"), LOG).unwrap();
    for interval in ["0", "-5"] {
        let o = run(
            &["ingest", "log.csv", "--out", "c.csv", &format!("--interval={interval}")],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("interval"));
    }
}

#[test]
fn sweep_writes_one_row_per_replicate_plus_medians() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("spec.json"),
        r#"{"n": [5], "r": [0.2], "t_points": [6], "coeffs": [{"a0": 1.3, "a1": 0, "a2": 0}],
            "replicates": 3, "base_seed": 5}"#,
    )
    .unwrap();
    let o = run(&["sweep", "spec.json", "--out", "sweep.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 3 + 1);

    fs::write(dir.path().join("bad.json"), r#"{"replicates": 0}"#).unwrap();
    let o = run(&["sweep", "bad.json", "--out", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicates"));
}
