use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use actihmm::actiwatch::{as_score, AsConfig};
use actihmm::hmm::{baum_welch, default_init, viterbi, FitReport, HmmError, DEFAULT_MAX_ITER, DEFAULT_TOL};
use actihmm::ingest::{
    log_transform, parse_timestamp, read_epoch_csv, read_label_csv, read_window_file, write_epoch_csv, write_label_csv,
    write_window_file, EpochSeries, IngestError, State, StateSequence, StudyWindow, WindowTimes,
};
use actihmm::postprocess::{smooth, DEFAULT_MIN_MINUTES};
use actihmm::report::CompareReport;
use actihmm::simulate::{consolidated_night, default_start, simulate, simulate_with_states, SimSpec};
use actihmm::verify::{self, VerifyConfig};
use actihmm::Params;

/// Sleep/wake scoring of actigraphy counts.
#[derive(Parser)]
#[command(name = "actihmm", version, about)]
struct Cli {
    /// Print a JSON run summary on standard output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic recording with known states.
    Simulate(SimulateArgs),
    /// Fit model parameters to an epoch CSV.
    Fit(FitArgs),
    /// Decode sleep/wake labels with the model.
    Score(ScoreArgs),
    /// Score with the threshold algorithm.
    AsScore(AsScoreArgs),
    /// Compare predicted labels against reference labels.
    Compare(CompareArgs),
    /// Check the model code against exhaustive enumeration.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory for counts.csv, labels.csv, params.txt and window.txt.
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of epochs.
    #[arg(long, default_value_t = 2880)]
    epochs: usize,
    #[arg(long, default_value_t = 30)]
    epoch_seconds: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generating parameters (default: cohort means).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Start time, ISO-8601 UTC.
    #[arg(long)]
    start: Option<String>,
    /// Fixed single-night path instead of the Markov chain:
    /// WAKE_BEFORE,SLEEP,WAKE_AFTER in epochs (overrides --epochs).
    #[arg(long, value_parser = parse_night)]
    night: Option<(usize, usize, usize)>,
}

#[derive(Args)]
struct EmArgs {
    /// Relative log-likelihood change that stops EM.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

#[derive(Args)]
struct FitArgs {
    input: PathBuf,
    /// Parameter file to write.
    #[arg(long)]
    out: PathBuf,
    /// Fit log (default: <out>.log).
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args)]
struct ScoreArgs {
    input: PathBuf,
    /// Label CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Parameter file; fitted inline when absent.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Minimum run length kept by smoothing; 0 disables it.
    #[arg(long, default_value_t = DEFAULT_MIN_MINUTES)]
    min_minutes: f64,
    /// Per-state standardized residuals for plotting.
    #[arg(long)]
    residuals: Option<PathBuf>,
    #[command(flatten)]
    em: EmArgs,
}

#[derive(Args)]
struct WindowArgs {
    /// Window sidecar file (key=value timestamps).
    #[arg(long, conflicts_with_all = ["lights_out", "lights_on", "go_to_bed", "get_up"])]
    window: Option<PathBuf>,
    #[arg(long, requires_all = ["lights_on", "go_to_bed", "get_up"])]
    lights_out: Option<String>,
    #[arg(long, requires_all = ["lights_out", "go_to_bed", "get_up"])]
    lights_on: Option<String>,
    #[arg(long, requires_all = ["lights_out", "lights_on", "get_up"])]
    go_to_bed: Option<String>,
    #[arg(long, requires_all = ["lights_out", "lights_on", "go_to_bed"])]
    get_up: Option<String>,
}

#[derive(Args)]
struct AsFlags {
    #[arg(long, default_value_t = 4.0)]
    immobility_start_cpm: f64,
    #[arg(long, default_value_t = 6.0)]
    immobility_end_cpm: f64,
    #[arg(long, default_value_t = 10.0)]
    start_window_min: f64,
    #[arg(long, default_value_t = 6.0)]
    end_window_min: f64,
    #[arg(long, default_value_t = 1.0)]
    start_tolerance_min: f64,
    #[arg(long, default_value_t = 2)]
    end_tolerance_epochs: usize,
    /// Apply thresholds to raw counts instead of rescored totals.
    #[arg(long)]
    as_raw_thresholds: bool,
}

#[derive(Args)]
struct AsScoreArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Endpoint diagnostics (default: <out>.endpoints).
    #[arg(long)]
    endpoints: Option<PathBuf>,
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    cfg: AsFlags,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference labels.
    #[arg(long)]
    truth: PathBuf,
    /// Predicted labels as NAME=PATH or PATH (named by file stem); repeatable.
    #[arg(long = "pred", required = true)]
    preds: Vec<String>,
    /// Epoch CSV of the recording, for its length, epoch and start time.
    #[arg(long)]
    epochs: PathBuf,
    #[command(flatten)]
    window: WindowArgs,
    /// Recording name in the report (default: truth file stem).
    #[arg(long)]
    recording: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 12)]
    max_t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn parse_night(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] if a + b + c > 0 => Ok((a, b, c)),
        _ => Err("expected three epoch counts WAKE_BEFORE,SLEEP,WAKE_AFTER".into()),
    }
}

/// Exit code classes.
#[derive(Debug)]
enum Failure {
    /// Verification or validation failure.
    Check(String),
    /// Unreadable, unwritable or malformed files.
    Io(String),
    /// Flag values that cannot be used.
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Io(_) => 2,
            Failure::Usage(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::Io(m) | Failure::Usage(m) => m,
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        Failure::Io(e.to_string())
    }
}

fn io_err(path: &Path, e: impl Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn hmm_err(e: HmmError) -> Failure {
    match e {
        HmmError::Io(_) | HmmError::ParamFile { .. } => Failure::Io(e.to_string()),
        other => Failure::Check(other.to_string()),
    }
}

fn read_params(path: &Path) -> Result<Params, Failure> {
    Params::read_file(path).map_err(|e| match e {
        HmmError::InvalidParams(m) => Failure::Io(format!("{}: {m}", path.display())),
        other => hmm_err(other),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Refuses to write over any input file.
fn guard_outputs(inputs: &[&Path], outputs: &[&Path]) -> Result<(), Failure> {
    let canon = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    for o in outputs {
        if inputs.iter().any(|i| canon(i) == canon(o)) {
            return Err(Failure::Usage(format!("output {} would overwrite an input", o.display())));
        }
    }
    Ok(())
}

fn check_em(em: &EmArgs) -> Result<(), Failure> {
    if !(em.tol.is_finite() && em.tol > 0.0) || em.max_iter == 0 {
        return Err(Failure::Usage("--tol must be positive and --max-iter at least 1".into()));
    }
    Ok(())
}

fn load_window(args: &WindowArgs, series: &EpochSeries) -> Result<StudyWindow, Failure> {
    let times = match (&args.window, &args.lights_out, &args.lights_on, &args.go_to_bed, &args.get_up) {
        (Some(path), ..) => read_window_file(path)?,
        (None, Some(lo), Some(ln), Some(gb), Some(gu)) => {
            let ts = |s: &str| parse_timestamp(s).map_err(|e| Failure::Usage(e.to_string()));
            WindowTimes { lights_out: ts(lo)?, lights_on: ts(ln)?, go_to_bed: ts(gb)?, get_up: ts(gu)? }
        }
        _ => return Err(Failure::Usage("give --window or all of --lights-out/--lights-on/--go-to-bed/--get-up".into())),
    };
    Ok(times.to_window(series)?)
}

fn fit_log(report: &FitReport<f64>) -> String {
    format!(
        "iterations={}\nlog_likelihood={:.16e}\nconverged={}\nrelabeled={}\n",
        report.iterations,
        report.final_log_likelihood().unwrap_or(f64::NAN),
        report.converged,
        report.relabeled
    )
}

fn fit_summary(report: &FitReport<f64>) -> Value {
    json!({
        "iterations": report.iterations,
        "log_likelihood": report.final_log_likelihood(),
        "converged": report.converged,
        "relabeled": report.relabeled,
    })
}

fn run_fit(series: &EpochSeries, em: &EmArgs) -> Result<FitReport<f64>, Failure> {
    let obs = log_transform::<f64>(series);
    let report = baum_welch(&obs, &default_init(&obs), em.tol, em.max_iter).map_err(hmm_err)?;
    if !report.converged {
        eprintln!("warning: EM stopped at --max-iter {} without converging", em.max_iter);
    }
    Ok(report)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Value, Failure> {
    let params = match &a.params {
        Some(p) => read_params(p)?,
        None => Params::cohort_means(),
    };
    let start = match &a.start {
        Some(s) => parse_timestamp(s).map_err(|e| Failure::Usage(e.to_string()))?,
        None => default_start(),
    };
    if a.epochs == 0 {
        return Err(Failure::Usage("--epochs must be at least 1".into()));
    }
    // validates the epoch length before any sampling
    EpochSeries::new(start, a.epoch_seconds, vec![0]).map_err(|e| Failure::Usage(e.to_string()))?;
    let sim = match a.night {
        Some((before, sleep, after)) => {
            simulate_with_states(&params, &consolidated_night(before, sleep, after), a.epoch_seconds, a.seed, start)
        }
        None => simulate(&SimSpec { params, t_epochs: a.epochs, epoch_seconds: a.epoch_seconds, seed: a.seed, start_time: start }),
    }
    .map_err(|e| Failure::Usage(e.to_string()))?;

    fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    let counts = a.out_dir.join("counts.csv");
    let labels = a.out_dir.join("labels.csv");
    let params_path = a.out_dir.join("params.txt");
    let window_path = a.out_dir.join("window.txt");
    write_epoch_csv(&sim.series, &counts)?;
    write_label_csv(&sim.states, &labels)?;
    params.write_file(&params_path).map_err(hmm_err)?;
    let n = sim.series.len();
    let window = StudyWindow { lights_out: 0, lights_on: n, go_to_bed: 0, get_up: n - 1 };
    write_window_file(&WindowTimes::from_window(&window, &sim.series), &window_path)?;
    Ok(json!({
        "epochs": n,
        "seed": a.seed,
        "outputs": [counts, labels, params_path, window_path],
    }))
}

fn cmd_fit(a: &FitArgs) -> Result<Value, Failure> {
    check_em(&a.em)?;
    let log = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log"));
    guard_outputs(&[&a.input], &[&a.out, &log])?;
    let series = read_epoch_csv(&a.input)?;
    let report = run_fit(&series, &a.em)?;
    report.params.write_file(&a.out).map_err(hmm_err)?;
    write_text(&log, &fit_log(&report))?;
    eprint!("{}", fit_log(&report));
    let mut summary = fit_summary(&report);
    summary["outputs"] = json!([a.out, log]);
    Ok(summary)
}

fn residual_dump(obs: &[f64], states: &StateSequence, p: &Params) -> String {
    let mut out = String::from("epoch_index,state,value,standardized\n");
    for (t, (&x, &s)) in obs.iter().zip(states.states()).enumerate() {
        let z = match s {
            // exact zeros belong to the point mass, not the continuous part
            State::Sleep if x == 0.0 => continue,
            State::Sleep => (x - p.sleep().mu1()) / p.sleep().sigma1(),
            State::Wake => (x - p.wake().mu2()) / p.wake().sigma2(),
        };
        out.push_str(&format!("{t},{},{x:.6},{z:.6}\n", s.token()));
    }
    out
}

fn cmd_score(a: &ScoreArgs) -> Result<Value, Failure> {
    if !a.min_minutes.is_finite() || a.min_minutes < 0.0 {
        return Err(Failure::Usage("--min-minutes must be non-negative".into()));
    }
    check_em(&a.em)?;
    let mut inputs: Vec<&Path> = vec![&a.input];
    if let Some(p) = &a.params {
        inputs.push(p);
    }
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(r) = &a.residuals {
        outputs.push(r);
    }
    guard_outputs(&inputs, &outputs)?;
    let series = read_epoch_csv(&a.input)?;
    let mut summary = json!({});
    let params = match &a.params {
        Some(p) => read_params(p)?,
        None => {
            let report = run_fit(&series, &a.em)?;
            summary["fit"] = fit_summary(&report);
            report.params
        }
    };
    let obs = log_transform::<f64>(&series);
    let decoded = viterbi(&obs, &params);
    let labels = smooth(&decoded, a.min_minutes);
    write_label_csv(&labels, &a.out)?;
    if let Some(r) = &a.residuals {
        write_text(r, &residual_dump(obs.values(), &labels, &params))?;
    }
    let sleep = labels.states().iter().filter(|&&s| s == State::Sleep).count();
    eprintln!("scored {} epochs, {} sleep", labels.len(), sleep);
    summary["epochs"] = json!(labels.len());
    summary["sleep_epochs"] = json!(sleep);
    summary["outputs"] = json!(outputs);
    Ok(summary)
}

fn as_config(f: &AsFlags) -> AsConfig {
    AsConfig {
        immobility_start_cpm: f.immobility_start_cpm,
        immobility_end_cpm: f.immobility_end_cpm,
        start_window_minutes: f.start_window_min,
        end_window_minutes: f.end_window_min,
        start_tolerance_minutes: f.start_tolerance_min,
        end_tolerance_epochs: f.end_tolerance_epochs,
        raw_thresholds: f.as_raw_thresholds,
    }
}

fn cmd_as_score(a: &AsScoreArgs) -> Result<Value, Failure> {
    let cfg = as_config(&a.cfg);
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let endpoints = a.endpoints.clone().unwrap_or_else(|| with_suffix(&a.out, ".endpoints"));
    let mut inputs: Vec<&Path> = vec![&a.input];
    if let Some(w) = &a.window.window {
        inputs.push(w);
    }
    guard_outputs(&inputs, &[&a.out, &endpoints])?;
    let series = read_epoch_csv(&a.input)?;
    let window = load_window(&a.window, &series)?;
    let scored = as_score(&series, &window, &cfg).map_err(|e| match e {
        actihmm::actiwatch::ActiwatchError::UnsupportedEpoch(_) => Failure::Io(e.to_string()),
        other => Failure::Usage(other.to_string()),
    })?;
    write_label_csv(&scored.labels, &a.out)?;
    let show = |i: Option<usize>| match i {
        Some(i) => format!("{}", series.time_of(i).format("%Y-%m-%dT%H:%M:%SZ")),
        None => "NA".to_string(),
    };
    let text = format!(
        "sleep_start={}\nsleep_end={}\nsleep_start_index={}\nsleep_end_index={}\nno_sleep_interval={}\n",
        show(scored.sleep_start),
        show(scored.sleep_end),
        scored.sleep_start.map_or("NA".into(), |i| i.to_string()),
        scored.sleep_end.map_or("NA".into(), |i| i.to_string()),
        scored.no_sleep_interval
    );
    write_text(&endpoints, &text)?;
    eprint!("{text}");
    if scored.no_sleep_interval {
        eprintln!("warning: no sleep interval found; all epochs scored wake");
    }
    Ok(json!({
        "sleep_start": scored.sleep_start,
        "sleep_end": scored.sleep_end,
        "no_sleep_interval": scored.no_sleep_interval,
        "outputs": [a.out, endpoints],
    }))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "pred".into())
}

fn cmd_compare(a: &CompareArgs) -> Result<Value, Failure> {
    let preds: Vec<(String, PathBuf)> = a
        .preds
        .iter()
        .map(|p| match p.split_once('=') {
            Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
            _ => (stem(Path::new(p)), PathBuf::from(p)),
        })
        .collect();
    for (i, (name, _)) in preds.iter().enumerate() {
        if name.contains(',') || preds[..i].iter().any(|(n, _)| n == name) {
            return Err(Failure::Usage(format!("predictor name {name:?} is repeated or contains a comma")));
        }
    }
    let mut inputs: Vec<&Path> = vec![&a.truth, &a.epochs];
    inputs.extend(preds.iter().map(|(_, p)| p.as_path()));
    if let Some(w) = &a.window.window {
        inputs.push(w);
    }
    guard_outputs(&inputs, &[&a.out])?;

    let series = read_epoch_csv(&a.epochs)?;
    let window = load_window(&a.window, &series)?;
    let n = series.len();
    let es = series.epoch_seconds();
    let label_err = |path: &Path, e: IngestError| {
        Failure::Io(format!("{} (checked against {}, {n} epochs): {e}", path.display(), a.epochs.display()))
    };
    let truth = read_label_csv(&a.truth, n, es).map_err(|e| label_err(&a.truth, e))?;
    let mut seqs = Vec::with_capacity(preds.len());
    for (_, path) in &preds {
        seqs.push(read_label_csv(path, n, es).map_err(|e| label_err(path, e))?);
    }
    let mut report = CompareReport::new(preds.iter().map(|(n, _)| n.clone()).collect());
    let recording = a.recording.clone().unwrap_or_else(|| stem(&a.truth));
    let refs: Vec<&StateSequence> = seqs.iter().collect();
    report.add_recording(&recording, &truth, &refs, &window).map_err(|e| Failure::Io(e.to_string()))?;
    write_text(&a.out, &report.to_csv())?;
    eprintln!("compared {} predictor(s) over {n} epochs", preds.len());
    Ok(json!({ "recording": recording, "predictors": preds.iter().map(|(n, _)| n).collect::<Vec<_>>(), "outputs": [a.out] }))
}

fn cmd_verify(a: &VerifyArgs, json_out: bool) -> Result<Value, Failure> {
    if a.trials == 0 || a.max_t == 0 || a.max_t > actihmm::hmm::MAX_ENUMERATION_LEN {
        return Err(Failure::Usage(format!(
            "--trials must be positive and --max-t in 1..={}",
            actihmm::hmm::MAX_ENUMERATION_LEN
        )));
    }
    let cfg = VerifyConfig { trials: a.trials, max_t: a.max_t, seed: a.seed, inject_fault: a.inject_fault };
    let results = verify::run(&cfg);
    eprint!("{}", verify::format_table(&results));
    let summary = json!({
        "seed": a.seed,
        "checks": results.iter().map(|r| json!({
            "name": r.name,
            "trials": r.trials,
            "failures": r.failures,
            "worst": r.worst,
            "first_failing_seed": r.first_failure,
            "passed": r.passed(),
        })).collect::<Vec<_>>(),
    });
    if results.iter().all(|r| r.passed()) {
        Ok(summary)
    } else {
        if json_out {
            println!("{summary}");
        }
        Err(Failure::Check("verification failed".into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Score(a) => cmd_score(a),
        Command::AsScore(a) => cmd_as_score(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Verify(a) => cmd_verify(a, cli.json),
    };
    match result {
        Ok(summary) => {
            if cli.json {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
