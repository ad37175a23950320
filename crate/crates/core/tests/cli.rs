use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use actihmm::hmm::{viterbi, HmmParams};
use actihmm::ingest::{log_transform, read_epoch_csv, read_label_csv};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_actihmm")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn simulate_into(dir: &Path, seed: &str) {
    let o = run(dir, &["simulate", "--out-dir", "sim", "--epochs", "1440", "--seed", seed]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
    assert_eq!(code(&run(dir.path(), &["--version"])), 0);
    assert_eq!(code(&run(dir.path(), &["score", "--help"])), 0);
}

#[test]
fn usage_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &[])), 3);
    assert_eq!(code(&run(dir.path(), &["fit"])), 3);
    assert_eq!(code(&run(dir.path(), &["no-such-command"])), 3);
    assert_eq!(code(&run(dir.path(), &["verify", "--max-t", "40"])), 3);
    simulate_into(dir.path(), "1");
    assert_eq!(code(&run(dir.path(), &["score", "sim/counts.csv", "--out", "x.csv", "--min-minutes", "-1"])), 3);
    assert_eq!(code(&run(dir.path(), &["fit", "sim/counts.csv", "--out", "p.txt", "--tol", "0"])), 3);
    assert_eq!(code(&run(dir.path(), &["as-score", "sim/counts.csv", "--out", "a.csv"])), 3);
}

#[test]
fn io_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["fit", "missing.csv", "--out", "p.txt"])), 2);
    fs::write(dir.path().join("bad.csv"), "timestamp,count\n2012-05-01T21:00:00Z,-4\n2012-05-01T21:00:30Z,1\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["fit", "bad.csv", "--out", "p.txt"])), 2);
    fs::write(dir.path().join("p.txt"), "not a parameter file\n").unwrap();
    simulate_into(dir.path(), "1");
    assert_eq!(code(&run(dir.path(), &["score", "sim/counts.csv", "--params", "p.txt", "--out", "s.csv"])), 2);
}

#[test]
fn outputs_never_overwrite_inputs() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "2");
    let before = fs::read(dir.path().join("sim/counts.csv")).unwrap();
    let o = run(dir.path(), &["score", "sim/counts.csv", "--out", "sim/counts.csv"]);
    assert_eq!(code(&o), 3);
    assert_eq!(fs::read(dir.path().join("sim/counts.csv")).unwrap(), before);
}

#[test]
fn verify_passes_and_catches_an_injected_fault() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["verify", "--trials", "40"])), 0);
    assert_eq!(code(&run(dir.path(), &["verify", "--trials", "20", "--inject-fault"])), 1);
}

#[test]
fn stdout_stays_empty_without_json() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "3");
    let o = run(dir.path(), &["fit", "sim/counts.csv", "--out", "p.txt"]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let o = run(dir.path(), &["--json", "fit", "sim/counts.csv", "--out", "q.txt"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["converged"].is_boolean());
}

#[test]
fn capped_fit_reports_non_convergence_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "4");
    let o = run(dir.path(), &["fit", "sim/counts.csv", "--out", "p.txt", "--max-iter", "1"]);
    assert_eq!(code(&o), 0);
    let log = fs::read_to_string(dir.path().join("p.txt.log")).unwrap();
    assert!(log.contains("converged=false"), "{log}");
    assert!(log.contains("iterations=1"));
    assert!(HmmParams::<f64>::read_file(dir.path().join("p.txt")).is_ok());
}

#[test]
fn score_without_smoothing_is_the_viterbi_path() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "5");
    let d = dir.path();
    assert_eq!(code(&run(d, &["score", "sim/counts.csv", "--params", "sim/params.txt", "--out", "raw.csv", "--min-minutes", "0"])), 0);
    let series = read_epoch_csv(d.join("sim/counts.csv")).unwrap();
    let params = HmmParams::<f64>::read_file(d.join("sim/params.txt")).unwrap();
    let expected = viterbi(&log_transform::<f64>(&series), &params);
    let got = read_label_csv(d.join("raw.csv"), series.len(), series.epoch_seconds()).unwrap();
    assert_eq!(got, expected);
}

#[test]
fn inline_fit_matches_fit_then_score() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "6");
    let d = dir.path();
    assert_eq!(code(&run(d, &["fit", "sim/counts.csv", "--out", "p.txt"])), 0);
    assert_eq!(code(&run(d, &["score", "sim/counts.csv", "--params", "p.txt", "--out", "two_step.csv"])), 0);
    assert_eq!(code(&run(d, &["score", "sim/counts.csv", "--out", "inline.csv"])), 0);
    assert_eq!(fs::read(d.join("two_step.csv")).unwrap(), fs::read(d.join("inline.csv")).unwrap());
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate_into(a.path(), "9");
    simulate_into(b.path(), "9");
    for f in ["counts.csv", "labels.csv", "params.txt", "window.txt"] {
        assert_eq!(fs::read(a.path().join("sim").join(f)).unwrap(), fs::read(b.path().join("sim").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn as_score_reports_its_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(d, &["simulate", "--out-dir", "night", "--night", "120,960,120", "--seed", "3"]);
    assert_eq!(code(&o), 0);
    let o = run(d, &["as-score", "night/counts.csv", "--window", "night/window.txt", "--out", "as.csv", "--as-raw-thresholds"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let endpoints = fs::read_to_string(d.join("as.csv.endpoints")).unwrap();
    assert!(endpoints.contains("sleep_start_index=") && endpoints.contains("no_sleep_interval=false"), "{endpoints}");
}

const COUNTS: &str = "timestamp,count
2012-05-01T21:00:00Z,0
2012-05-01T21:00:30Z,0
2012-05-01T21:01:00Z,0
2012-05-01T21:01:30Z,0
2012-05-01T21:02:00Z,0
2012-05-01T21:02:30Z,0
2012-05-01T21:03:00Z,0
2012-05-01T21:03:30Z,50
2012-05-01T21:04:00Z,50
2012-05-01T21:04:30Z,50
";

fn labels(tokens: &str) -> String {
    let mut s = String::from("epoch_index,state\n");
    for (i, c) in tokens.chars().enumerate() {
        s.push_str(&format!("{i},{c}\n"));
    }
    s
}

#[test]
fn compare_matches_the_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("counts.csv"), COUNTS).unwrap();
    fs::write(d.join("truth.csv"), labels("SSSSSSSWWW")).unwrap();
    fs::write(d.join("pred.csv"), labels("SSSSSSWSWW")).unwrap();
    let o = run(
        d,
        &[
            "compare",
            "--truth",
            "truth.csv",
            "--pred",
            "hmm=pred.csv",
            "--epochs",
            "counts.csv",
            "--lights-out",
            "2012-05-01T21:00:00Z",
            "--lights-on",
            "2012-05-01T21:05:00Z",
            "--go-to-bed",
            "2012-05-01T21:00:00Z",
            "--get-up",
            "2012-05-01T21:04:30Z",
            "--recording",
            "night1",
            "--out",
            "report.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let row = "night1,5.000000,3.500000,0.000000,1.500000,70.000000,\
0.800000,0.857143,0.666667,0.857143,0.666667,\
6.000000,1.000000,1.000000,2.000000,3.500000,0.000000,1.500000,70.000000";
    let values = row.split_once(',').unwrap().1;
    let expected = format!(
        "recording,truth_total_epochs_min,truth_tst_min,truth_latency_min,truth_waso_min,truth_efficiency_pct,\
hmm_accuracy,hmm_sensitivity_sleep,hmm_specificity_sleep,hmm_ppv_sleep,hmm_ppv_wake,\
hmm_tp_sleep,hmm_fn_sleep,hmm_fp_sleep,hmm_tn_sleep,hmm_tst_min,hmm_latency_min,hmm_waso_min,hmm_efficiency_pct\n\
{row}\nmean,{values}\nmin,{values}\nmax,{values}\n"
    );
    assert_eq!(fs::read_to_string(d.join("report.csv")).unwrap(), expected);
}

#[test]
fn compare_takes_several_predictors_and_checks_lengths() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("counts.csv"), COUNTS).unwrap();
    fs::write(d.join("truth.csv"), labels("SSSSSSSWWW")).unwrap();
    fs::write(d.join("a.csv"), labels("SSSSSSSSSS")).unwrap();
    fs::write(d.join("b.csv"), labels("WWWWWWWWWW")).unwrap();
    fs::write(d.join("short.csv"), labels("SSS")).unwrap();
    let window = ["--lights-out", "2012-05-01T21:00:00Z", "--lights-on", "2012-05-01T21:05:00Z", "--go-to-bed", "2012-05-01T21:00:00Z", "--get-up", "2012-05-01T21:04:30Z"];
    let mut args = vec!["compare", "--truth", "truth.csv", "--pred", "a.csv", "--pred", "b.csv", "--epochs", "counts.csv", "--out", "r.csv"];
    args.extend(window);
    assert_eq!(code(&run(d, &args)), 0);
    let report = fs::read_to_string(d.join("r.csv")).unwrap();
    let header: Vec<&str> = report.lines().next().unwrap().split(',').collect();
    assert!(header.contains(&"a_accuracy") && header.contains(&"b_accuracy"));
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "a_specificity_sleep").unwrap();
    assert_eq!(row[col], "0.000000");
    let col = header.iter().position(|h| *h == "b_sensitivity_sleep").unwrap();
    assert_eq!(row[col], "0.000000");
    let col = header.iter().position(|h| *h == "b_ppv_sleep").unwrap();
    assert_eq!(row[col], "NA");

    let mut bad = vec!["compare", "--truth", "truth.csv", "--pred", "short.csv", "--epochs", "counts.csv", "--out", "r2.csv"];
    bad.extend(window);
    assert_eq!(code(&run(d, &bad)), 2);
}
