//! Epoch-level agreement against reference labels, per-night sleep
//! variables, and the cross-subject statistics used to compare scorers.

use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::ingest::{State, StateSequence, StudyWindow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction has {pred} epochs but reference has {truth}")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("no epochs to compare")]
    Empty,
    #[error("invalid window: {0}")]
    Window(String),
    #[error("sequences of length {x} and {y}: need equal lengths of at least 2")]
    BadSample { x: usize, y: usize },
    #[error("correlation undefined: a sequence has zero variance")]
    UndefinedCorrelation,
    #[error("paired t undefined: differences have zero variance")]
    UndefinedTest,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// 2×2 table with sleep as the positive class and the reference as truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp_sleep: usize,
    pub fn_sleep: usize,
    pub fp_sleep: usize,
    pub tn_sleep: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp_sleep + self.fn_sleep + self.fp_sleep + self.tn_sleep
    }
}

pub fn confusion(pred: &StateSequence, truth: &StateSequence) -> Result<Confusion> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.states().iter().zip(truth.states()) {
        match (t, p) {
            (State::Sleep, State::Sleep) => c.tp_sleep += 1,
            (State::Sleep, State::Wake) => c.fn_sleep += 1,
            (State::Wake, State::Sleep) => c.fp_sleep += 1,
            (State::Wake, State::Wake) => c.tn_sleep += 1,
        }
    }
    Ok(c)
}

/// Agreement rates. `None` marks a 0/0 ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub accuracy: f64,
    pub sensitivity_sleep: Option<f64>,
    pub specificity_sleep: Option<f64>,
    pub ppv_sleep: Option<f64>,
    pub ppv_wake: Option<f64>,
    pub confusion: Confusion,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn epoch_metrics(c: Confusion) -> Result<EpochMetrics> {
    let n = c.total();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(EpochMetrics {
        accuracy: (c.tp_sleep + c.tn_sleep) as f64 / n as f64,
        sensitivity_sleep: ratio(c.tp_sleep, c.tp_sleep + c.fn_sleep),
        specificity_sleep: ratio(c.tn_sleep, c.tn_sleep + c.fp_sleep),
        ppv_sleep: ratio(c.tp_sleep, c.tp_sleep + c.fp_sleep),
        ppv_wake: ratio(c.tn_sleep, c.tn_sleep + c.fn_sleep),
        confusion: c,
    })
}

/// Sleep summary over `[lights_out, lights_on)`, in minutes and percent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SleepVariables {
    pub total_epochs_min: f64,
    pub total_sleep_time_min: f64,
    pub sleep_latency_min: f64,
    pub waso_min: f64,
    pub sleep_efficiency_pct: f64,
}

/// With no sleep in the window, latency is the whole window and WASO and
/// efficiency are zero.
pub fn sleep_variables(pred: &StateSequence, window: &StudyWindow) -> Result<SleepVariables> {
    window.validate(pred.len()).map_err(|e| MetricsError::Window(e.to_string()))?;
    let states = &pred.states()[window.lights_out..window.lights_on];
    let minutes = |epochs: usize| epochs as f64 * pred.epoch_seconds() as f64 / 60.0;
    let sleep = states.iter().filter(|&&s| s == State::Sleep).count();
    let (latency, waso) = match states.iter().position(|&s| s == State::Sleep) {
        Some(first) => (first, states[first..].iter().filter(|&&s| s == State::Wake).count()),
        None => (states.len(), 0),
    };
    Ok(SleepVariables {
        total_epochs_min: minutes(states.len()),
        total_sleep_time_min: minutes(sleep),
        sleep_latency_min: minutes(latency),
        waso_min: minutes(waso),
        sleep_efficiency_pct: 100.0 * sleep as f64 / states.len() as f64,
    })
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MetricsError::BadSample { x: x.len(), y: y.len() });
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample Pearson correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedT {
    pub t: f64,
    pub df: usize,
    pub p_two_sided: f64,
}

/// Paired t-test on `x - y`.
pub fn paired_t(x: &[f64], y: &[f64]) -> Result<PairedT> {
    check_pair(x, y)?;
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let var = d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(MetricsError::UndefinedTest);
    }
    let t = m / (var.sqrt() / n.sqrt());
    let df = d.len() - 1;
    let nu = df as f64;
    let p = beta_reg(nu / 2.0, 0.5, nu / (nu + t * t));
    Ok(PairedT { t, df, p_two_sided: p })
}

/// Mean, minimum and maximum over the defined entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[Option<f64>]) -> Option<Summary> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return None;
    }
    Some(Summary {
        mean: mean(&defined),
        min: defined.iter().copied().fold(f64::INFINITY, f64::min),
        max: defined.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
