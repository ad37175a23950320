//! Epoch-count time series, label sequences, analysis windows, and the
//! plain-text file formats they travel in.
//!
//! Timestamps in files are ISO-8601 UTC with second resolution
//! (`2012-05-01T21:30:00Z`). Internally only the start time plus epoch index
//! arithmetic is used.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("row {row}: {msg}")]
    Format { row: usize, msg: String },
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid value: {0}")]
    Invalid(String),
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io { path: path.to_path_buf(), source }
    }

    fn row(row: usize, msg: impl Into<String>) -> Self {
        IngestError::Format { row, msg: msg.into() }
    }
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// Hidden state label. Index 0 is sleep, index 1 is wake.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    Sleep,
    Wake,
}

impl State {
    pub const ALL: [State; 2] = [State::Sleep, State::Wake];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            State::Sleep => 0,
            State::Wake => 1,
        }
    }

    #[inline]
    pub fn from_index(i: usize) -> State {
        if i == 0 {
            State::Sleep
        } else {
            State::Wake
        }
    }

    #[inline]
    pub fn other(self) -> State {
        match self {
            State::Sleep => State::Wake,
            State::Wake => State::Sleep,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            State::Sleep => "S",
            State::Wake => "W",
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

fn check_epoch_seconds(epoch_seconds: u32) -> Result<()> {
    if epoch_seconds == 0 || !(60u32.is_multiple_of(epoch_seconds) || epoch_seconds.is_multiple_of(60)) {
        return Err(IngestError::Invalid(format!(
            "epoch length {epoch_seconds} s must divide 60 or be a multiple of 60"
        )));
    }
    Ok(())
}

/// Activity counts per epoch, starting at `start_time`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochSeries {
    start_time: DateTime<Utc>,
    epoch_seconds: u32,
    counts: Vec<u32>,
}

impl EpochSeries {
    pub const DEFAULT_EPOCH_SECONDS: u32 = 30;

    pub fn new(start_time: DateTime<Utc>, epoch_seconds: u32, counts: Vec<u32>) -> Result<Self> {
        check_epoch_seconds(epoch_seconds)?;
        if counts.is_empty() {
            return Err(IngestError::Empty("epoch series has no counts"));
        }
        if start_time.timestamp_subsec_nanos() != 0 {
            return Err(IngestError::Invalid("start time must have whole-second resolution".into()));
        }
        Ok(EpochSeries { start_time, epoch_seconds, counts })
    }

    pub fn start_time(&self) -> DateTime<Utc> {
        self.start_time
    }

    pub fn epoch_seconds(&self) -> u32 {
        self.epoch_seconds
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn time_of(&self, index: usize) -> DateTime<Utc> {
        self.start_time + Duration::seconds(index as i64 * self.epoch_seconds as i64)
    }

    /// Epoch containing `ts` (floor). `None` if `ts` precedes the series.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let secs = (ts - self.start_time).num_seconds();
        if secs < 0 {
            return None;
        }
        Some((secs / self.epoch_seconds as i64) as usize)
    }
}

/// `ln(count + 1)` per epoch: the observation sequence the HMM models.
#[derive(Clone, Debug, PartialEq)]
pub struct LogSeries<F> {
    values: Vec<F>,
    epoch_seconds: u32,
}

impl<F: Scalar> LogSeries<F> {
    /// Builds a series from already-transformed values (non-negative, finite).
    pub fn from_values(values: Vec<F>, epoch_seconds: u32) -> Result<Self> {
        check_epoch_seconds(epoch_seconds)?;
        if values.is_empty() {
            return Err(IngestError::Empty("log series has no values"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < F::zero()) {
            return Err(IngestError::Invalid(format!("log value at epoch {i} is negative or non-finite")));
        }
        Ok(LogSeries { values, epoch_seconds })
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn epoch_seconds(&self) -> u32 {
        self.epoch_seconds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Natural-log transform `ln(count + 1)`; zero counts map to an exact zero.
pub fn log_transform<F: Scalar>(series: &EpochSeries) -> LogSeries<F> {
    let values = series
        .counts
        .iter()
        .map(|&c| (F::from_u32(c).expect("u32 fits scalar") + F::one()).ln())
        .collect();
    LogSeries { values, epoch_seconds: series.epoch_seconds }
}

/// Per-epoch sleep/wake labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateSequence {
    states: Vec<State>,
    epoch_seconds: u32,
}

impl StateSequence {
    pub fn new(states: Vec<State>, epoch_seconds: u32) -> Result<Self> {
        check_epoch_seconds(epoch_seconds)?;
        if states.is_empty() {
            return Err(IngestError::Empty("state sequence has no epochs"));
        }
        Ok(StateSequence { states, epoch_seconds })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn epoch_seconds(&self) -> u32 {
        self.epoch_seconds
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn into_states(self) -> Vec<State> {
        self.states
    }
}

/// Analysis window in epoch indices.
///
/// `lights_out..lights_on` is the half-open span used for sleep variables;
/// `go_to_bed` and `get_up` are the diary times the AS algorithm scans from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StudyWindow {
    pub lights_out: usize,
    pub lights_on: usize,
    pub go_to_bed: usize,
    pub get_up: usize,
}

impl StudyWindow {
    pub fn new(lights_out: usize, lights_on: usize, go_to_bed: usize, get_up: usize, len: usize) -> Result<Self> {
        let w = StudyWindow { lights_out, lights_on, go_to_bed, get_up };
        w.validate(len)?;
        Ok(w)
    }

    /// Whole recording: lights out at the first epoch, on after the last.
    pub fn full(len: usize) -> Self {
        StudyWindow { lights_out: 0, lights_on: len, go_to_bed: 0, get_up: len.saturating_sub(1) }
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        if self.lights_out >= self.lights_on || self.lights_on > len {
            return Err(IngestError::Invalid(format!(
                "need lights_out < lights_on <= {len}, got {}..{}",
                self.lights_out, self.lights_on
            )));
        }
        if self.go_to_bed > self.get_up || self.get_up >= len {
            return Err(IngestError::Invalid(format!(
                "need go_to_bed <= get_up < {len}, got {}..{}",
                self.go_to_bed, self.get_up
            )));
        }
        Ok(())
    }

    /// Number of epochs between lights out and lights on.
    pub fn span(&self) -> usize {
        self.lights_on - self.lights_out
    }
}

fn format_ts(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn parse_ts(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let ts = DateTime::parse_from_rfc3339(s.trim())
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))?
        .with_timezone(&Utc);
    if ts.timestamp_subsec_nanos() != 0 {
        return Err(format!("timestamp {s:?} has sub-second precision"));
    }
    Ok(ts)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| IngestError::io(path, e))
}

fn csv_reader<R: Read>(reader: R, expected: [&str; 2]) -> Result<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| IngestError::Malformed(e.to_string()))?;
    if headers.len() != 2 || headers.get(0) != Some(expected[0]) || headers.get(1) != Some(expected[1]) {
        return Err(IngestError::Malformed(format!(
            "expected header `{},{}`, found `{}`",
            expected[0],
            expected[1],
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(rdr)
}

/// Parses an epoch CSV (`timestamp,count`). Rows are numbered from 1 after
/// the header in error messages.
pub fn parse_epoch_csv<R: Read>(reader: R) -> Result<EpochSeries> {
    let mut rdr = csv_reader(reader, ["timestamp", "count"])?;
    let mut start = None;
    let mut prev: Option<DateTime<Utc>> = None;
    let mut spacing: Option<i64> = None;
    let mut counts = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| IngestError::row(row, e.to_string()))?;
        if rec.len() != 2 {
            return Err(IngestError::row(row, format!("expected 2 fields, found {}", rec.len())));
        }
        let ts = parse_ts(&rec[0]).map_err(|m| IngestError::row(row, m))?;
        let count: u32 = rec[1]
            .parse()
            .map_err(|_| IngestError::row(row, format!("count {:?} is not a non-negative integer", &rec[1])))?;
        if let Some(p) = prev {
            let d = (ts - p).num_seconds();
            match spacing {
                None if d <= 0 => return Err(IngestError::row(row, "timestamps must be strictly ascending")),
                None => spacing = Some(d),
                Some(s) if s != d => {
                    return Err(IngestError::row(row, format!("spacing {d} s differs from {s} s")))
                }
                Some(_) => {}
            }
        } else {
            start = Some(ts);
        }
        prev = Some(ts);
        counts.push(count);
    }
    let (Some(start), Some(spacing)) = (start, spacing) else {
        return Err(IngestError::Empty("need at least two rows to infer the epoch length"));
    };
    let epoch_seconds = u32::try_from(spacing).map_err(|_| IngestError::Invalid("epoch spacing too large".into()))?;
    EpochSeries::new(start, epoch_seconds, counts)
}

pub fn read_epoch_csv(path: impl AsRef<Path>) -> Result<EpochSeries> {
    let path = path.as_ref();
    parse_epoch_csv(BufReader::new(open(path)?)).map_err(|e| match e {
        IngestError::Io { .. } => e,
        other => IngestError::Malformed(format!("{}: {other}", path.display())),
    })
}

pub fn format_epoch_csv<W: Write>(series: &EpochSeries, mut out: W) -> io::Result<()> {
    out.write_all(b"timestamp,count\n")?;
    for (i, c) in series.counts.iter().enumerate() {
        writeln!(out, "{},{}", format_ts(series.time_of(i)), c)?;
    }
    out.flush()
}

pub fn write_epoch_csv(series: &EpochSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| IngestError::io(path, e))?;
    format_epoch_csv(series, io::BufWriter::new(f)).map_err(|e| IngestError::io(path, e))
}

/// Parses a label CSV (`epoch_index,state`). Rows may come in any order but
/// every index in `0..expected_len` must appear exactly once.
pub fn parse_label_csv<R: Read>(reader: R, expected_len: usize, epoch_seconds: u32) -> Result<StateSequence> {
    let mut rdr = csv_reader(reader, ["epoch_index", "state"])?;
    let mut slots: Vec<Option<State>> = vec![None; expected_len];
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        rows += 1;
        let rec = rec.map_err(|e| IngestError::row(row, e.to_string()))?;
        if rec.len() != 2 {
            return Err(IngestError::row(row, format!("expected 2 fields, found {}", rec.len())));
        }
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| IngestError::row(row, format!("bad epoch index {:?}", &rec[0])))?;
        let state = match &rec[1] {
            "S" => State::Sleep,
            "W" => State::Wake,
            other => return Err(IngestError::row(row, format!("unknown state token {other:?} (expected S or W)"))),
        };
        let slot = slots.get_mut(idx).ok_or_else(|| {
            IngestError::row(row, format!("epoch index {idx} out of range for length {expected_len}"))
        })?;
        if slot.is_some() {
            return Err(IngestError::row(row, format!("duplicate epoch index {idx}")));
        }
        *slot = Some(state);
    }
    if rows != expected_len {
        return Err(IngestError::Malformed(format!("length mismatch: {rows} label rows, expected {expected_len}")));
    }
    // rows == expected_len with no duplicates and all in range means no gaps
    let states = slots.into_iter().map(|s| s.expect("every slot filled")).collect();
    StateSequence::new(states, epoch_seconds)
}

pub fn read_label_csv(path: impl AsRef<Path>, expected_len: usize, epoch_seconds: u32) -> Result<StateSequence> {
    let path = path.as_ref();
    parse_label_csv(BufReader::new(open(path)?), expected_len, epoch_seconds).map_err(|e| match e {
        IngestError::Io { .. } => e,
        other => IngestError::Malformed(format!("{}: {other}", path.display())),
    })
}

pub fn format_label_csv<W: Write>(states: &StateSequence, mut out: W) -> io::Result<()> {
    out.write_all(b"epoch_index,state\n")?;
    for (i, s) in states.states.iter().enumerate() {
        writeln!(out, "{i},{s}")?;
    }
    out.flush()
}

pub fn write_label_csv(states: &StateSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| IngestError::io(path, e))?;
    format_label_csv(states, io::BufWriter::new(f)).map_err(|e| IngestError::io(path, e))
}

/// Window boundaries as wall-clock times, as stored in the sidecar file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowTimes {
    pub lights_out: DateTime<Utc>,
    pub lights_on: DateTime<Utc>,
    pub go_to_bed: DateTime<Utc>,
    pub get_up: DateTime<Utc>,
}

impl WindowTimes {
    pub fn from_window(window: &StudyWindow, series: &EpochSeries) -> Self {
        WindowTimes {
            lights_out: series.time_of(window.lights_out),
            lights_on: series.time_of(window.lights_on),
            go_to_bed: series.time_of(window.go_to_bed),
            get_up: series.time_of(window.get_up),
        }
    }

    /// Floors each time to its containing epoch and validates the result.
    pub fn to_window(&self, series: &EpochSeries) -> Result<StudyWindow> {
        let idx = |name: &str, ts: DateTime<Utc>| {
            series
                .index_of(ts)
                .ok_or_else(|| IngestError::Invalid(format!("{name} {} precedes the recording", format_ts(ts))))
        };
        StudyWindow::new(
            idx("lights_out", self.lights_out)?,
            idx("lights_on", self.lights_on)?,
            idx("go_to_bed", self.go_to_bed)?,
            idx("get_up", self.get_up)?,
            series.len(),
        )
    }
}

/// Parses the `key=value` window sidecar. Blank lines and `#` comments are
/// ignored; all four keys are required.
pub fn parse_window_times<R: BufRead>(reader: R) -> Result<WindowTimes> {
    let mut fields: [Option<DateTime<Utc>>; 4] = [None; 4];
    const KEYS: [&str; 4] = ["lights_out", "lights_on", "go_to_bed", "get_up"];
    for (i, line) in reader.lines().enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| IngestError::row(row, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| IngestError::row(row, format!("expected key=value, found {line:?}")))?;
        let slot = KEYS
            .iter()
            .position(|k| *k == key.trim())
            .ok_or_else(|| IngestError::row(row, format!("unknown key {:?}", key.trim())))?;
        if fields[slot].is_some() {
            return Err(IngestError::row(row, format!("duplicate key {}", KEYS[slot])));
        }
        fields[slot] = Some(parse_ts(value).map_err(|m| IngestError::row(row, m))?);
    }
    let get = |i: usize| fields[i].ok_or_else(|| IngestError::Malformed(format!("missing key {}", KEYS[i])));
    Ok(WindowTimes { lights_out: get(0)?, lights_on: get(1)?, go_to_bed: get(2)?, get_up: get(3)? })
}

pub fn read_window_file(path: impl AsRef<Path>) -> Result<WindowTimes> {
    let path = path.as_ref();
    parse_window_times(BufReader::new(open(path)?)).map_err(|e| match e {
        IngestError::Io { .. } => e,
        other => IngestError::Malformed(format!("{}: {other}", path.display())),
    })
}

pub fn format_window_times<W: Write>(times: &WindowTimes, mut out: W) -> io::Result<()> {
    writeln!(out, "lights_out={}", format_ts(times.lights_out))?;
    writeln!(out, "lights_on={}", format_ts(times.lights_on))?;
    writeln!(out, "go_to_bed={}", format_ts(times.go_to_bed))?;
    writeln!(out, "get_up={}", format_ts(times.get_up))?;
    out.flush()
}

pub fn write_window_file(times: &WindowTimes, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| IngestError::io(path, e))?;
    format_window_times(times, io::BufWriter::new(f)).map_err(|e| IngestError::io(path, e))
}

/// Parses an ISO-8601 UTC timestamp as accepted by the file formats.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    parse_ts(s).map_err(IngestError::Invalid)
}
