//! Threshold-based sleep scoring in the style of the Actiwatch software.
//!
//! Each epoch gets a total score: its own count, plus one fifth of every
//! count whose epoch starts within one minute of it, plus one twenty-fifth of
//! every count between one and two minutes away. Sleep starts at the first
//! immobile window after the go-to-bed time and ends at the last epoch of the
//! latest immobile window before the get-up time.
//!
//! All windows and thresholds are specified per minute and converted to the
//! recording's epoch length.

use thiserror::Error;

use crate::ingest::{EpochSeries, State, StateSequence, StudyWindow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActiwatchError {
    #[error("epoch length {0} s not supported (expected 15, 30, 60 or 120)")]
    UnsupportedEpoch(u32),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid window: {0}")]
    Window(String),
}

/// Thresholds and window lengths. Per-minute quantities are scaled by the
/// epoch length at use.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsConfig {
    /// Immobility threshold for finding sleep start, counts per minute.
    pub immobility_start_cpm: f64,
    /// Immobility threshold for finding sleep end, counts per minute.
    pub immobility_end_cpm: f64,
    pub start_window_minutes: f64,
    pub end_window_minutes: f64,
    /// Epochs above threshold tolerated in the start window, as minutes.
    pub start_tolerance_minutes: f64,
    /// Epochs above threshold tolerated in the end window.
    pub end_tolerance_epochs: usize,
    /// Compare raw counts instead of rescored totals against the thresholds.
    pub raw_thresholds: bool,
}

impl Default for AsConfig {
    fn default() -> Self {
        AsConfig {
            immobility_start_cpm: 4.0,
            immobility_end_cpm: 6.0,
            start_window_minutes: 10.0,
            end_window_minutes: 6.0,
            start_tolerance_minutes: 1.0,
            end_tolerance_epochs: 2,
            raw_thresholds: false,
        }
    }
}

impl AsConfig {
    pub fn validate(&self) -> Result<(), ActiwatchError> {
        let positive = [
            ("immobility_start_cpm", self.immobility_start_cpm),
            ("immobility_end_cpm", self.immobility_end_cpm),
            ("start_window_minutes", self.start_window_minutes),
            ("end_window_minutes", self.end_window_minutes),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ActiwatchError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.start_tolerance_minutes.is_finite() && self.start_tolerance_minutes >= 0.0) {
            return Err(ActiwatchError::Config("start_tolerance_minutes must be non-negative".into()));
        }
        Ok(())
    }
}

fn check_epoch(epoch_seconds: u32) -> Result<(), ActiwatchError> {
    match epoch_seconds {
        15 | 30 | 60 | 120 => Ok(()),
        other => Err(ActiwatchError::UnsupportedEpoch(other)),
    }
}

fn minutes_to_epochs(minutes: f64, epoch_seconds: u32) -> usize {
    ((minutes * 60.0 / epoch_seconds as f64).round() as usize).max(1)
}

fn per_epoch_threshold(cpm: f64, epoch_seconds: u32) -> f64 {
    cpm * epoch_seconds as f64 / 60.0
}

/// Rescored totals for raw counts at the given epoch length.
pub fn rescore_counts(counts: &[u32], epoch_seconds: u32) -> Result<Vec<f64>, ActiwatchError> {
    check_epoch(epoch_seconds)?;
    let near = (60 / epoch_seconds) as usize;
    let far = (120 / epoch_seconds) as usize;
    let n = counts.len();
    let c = |i: usize| counts[i] as u64;
    // accumulate 25 × total in integers, divide once
    Ok((0..n)
        .map(|t| {
            let mut acc = 25 * c(t);
            for k in 1..=far {
                let weight = if k <= near { 5 } else { 1 };
                if t >= k {
                    acc += weight * c(t - k);
                }
                if t + k < n {
                    acc += weight * c(t + k);
                }
            }
            acc as f64 / 25.0
        })
        .collect())
}

pub fn rescore(series: &EpochSeries) -> Result<Vec<f64>, ActiwatchError> {
    rescore_counts(series.counts(), series.epoch_seconds())
}

/// First index `t >= go_to_bed` whose window `[t, t + W)` has at most the
/// tolerated number of scores above the start threshold.
pub fn find_sleep_start_in(scores: &[f64], epoch_seconds: u32, go_to_bed: usize, cfg: &AsConfig) -> Option<usize> {
    let w = minutes_to_epochs(cfg.start_window_minutes, epoch_seconds);
    let tolerance = (cfg.start_tolerance_minutes * 60.0 / epoch_seconds as f64).floor() as usize;
    let threshold = per_epoch_threshold(cfg.immobility_start_cpm, epoch_seconds);
    if go_to_bed + w > scores.len() {
        return None;
    }
    let above = |i: usize| (scores[i] > threshold) as usize;
    let mut count: usize = (go_to_bed..go_to_bed + w).map(above).sum();
    let mut t = go_to_bed;
    loop {
        if count <= tolerance {
            return Some(t);
        }
        if t + w >= scores.len() {
            return None;
        }
        count = count - above(t) + above(t + w);
        t += 1;
    }
}

/// Last index `e <= get_up` of the latest window `[e - W + 1, e]` with at most
/// the tolerated number of scores above the end threshold.
pub fn find_sleep_end_in(scores: &[f64], epoch_seconds: u32, get_up: usize, cfg: &AsConfig) -> Option<usize> {
    let w = minutes_to_epochs(cfg.end_window_minutes, epoch_seconds);
    let threshold = per_epoch_threshold(cfg.immobility_end_cpm, epoch_seconds);
    let get_up = get_up.min(scores.len().checked_sub(1)?);
    if get_up + 1 < w {
        return None;
    }
    let above = |i: usize| (scores[i] > threshold) as usize;
    let mut count: usize = (get_up + 1 - w..=get_up).map(above).sum();
    let mut e = get_up;
    loop {
        if count <= cfg.end_tolerance_epochs {
            return Some(e);
        }
        if e + 1 == w {
            return None;
        }
        count = count - above(e) + above(e - w);
        e -= 1;
    }
}

fn scores_for(series: &EpochSeries, cfg: &AsConfig) -> Result<Vec<f64>, ActiwatchError> {
    cfg.validate()?;
    if cfg.raw_thresholds {
        check_epoch(series.epoch_seconds())?;
        Ok(series.counts().iter().map(|&c| c as f64).collect())
    } else {
        rescore(series)
    }
}

fn check_window(series: &EpochSeries, window: &StudyWindow) -> Result<(), ActiwatchError> {
    window.validate(series.len()).map_err(|e| ActiwatchError::Window(e.to_string()))
}

pub fn find_sleep_start(series: &EpochSeries, window: &StudyWindow, cfg: &AsConfig) -> Result<Option<usize>, ActiwatchError> {
    check_window(series, window)?;
    let scores = scores_for(series, cfg)?;
    Ok(find_sleep_start_in(&scores, series.epoch_seconds(), window.go_to_bed, cfg))
}

pub fn find_sleep_end(series: &EpochSeries, window: &StudyWindow, cfg: &AsConfig) -> Result<Option<usize>, ActiwatchError> {
    check_window(series, window)?;
    let scores = scores_for(series, cfg)?;
    Ok(find_sleep_end_in(&scores, series.epoch_seconds(), window.get_up, cfg))
}

/// Labels plus the detected endpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct AsScoring {
    pub labels: StateSequence,
    pub sleep_start: Option<usize>,
    pub sleep_end: Option<usize>,
    /// Set when no sleep interval was found (an endpoint is missing, or the
    /// end precedes the start); every epoch is then wake.
    pub no_sleep_interval: bool,
}

/// Sleep on `[start, end]`, wake elsewhere. All wake if either endpoint is
/// missing or `end < start`.
pub fn assemble(len: usize, epoch_seconds: u32, start: Option<usize>, end: Option<usize>) -> AsScoring {
    let mut states = vec![State::Wake; len];
    let interval = match (start, end) {
        (Some(s), Some(e)) if s <= e && e < len => Some((s, e)),
        _ => None,
    };
    if let Some((s, e)) = interval {
        states[s..=e].fill(State::Sleep);
    }
    AsScoring {
        labels: StateSequence::new(states, epoch_seconds).expect("non-empty"),
        sleep_start: start,
        sleep_end: end,
        no_sleep_interval: interval.is_none(),
    }
}

/// Full scoring: rescore, find both endpoints, assemble the labels.
pub fn as_score(series: &EpochSeries, window: &StudyWindow, cfg: &AsConfig) -> Result<AsScoring, ActiwatchError> {
    check_window(series, window)?;
    let scores = scores_for(series, cfg)?;
    let start = find_sleep_start_in(&scores, series.epoch_seconds(), window.go_to_bed, cfg);
    let end = find_sleep_end_in(&scores, series.epoch_seconds(), window.get_up, cfg);
    Ok(assemble(series.len(), series.epoch_seconds(), start, end))
}
