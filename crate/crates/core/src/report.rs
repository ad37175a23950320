//! The comparison report: one row per recording with reference sleep
//! variables and, for each predictor, agreement metrics, confusion counts
//! and its own sleep variables; then mean, min and max rows.
//!
//! Numbers are written with six decimals; undefined values as `NA`.

use std::fmt::Write as _;

use crate::ingest::{StateSequence, StudyWindow};
use crate::metrics::{confusion, epoch_metrics, sleep_variables, summarize, MetricsError, SleepVariables};

const SLEEP_VARIABLE_COLUMNS: [&str; 5] = ["total_epochs_min", "tst_min", "latency_min", "waso_min", "efficiency_pct"];
const METRIC_COLUMNS: [&str; 9] = [
    "accuracy",
    "sensitivity_sleep",
    "specificity_sleep",
    "ppv_sleep",
    "ppv_wake",
    "tp_sleep",
    "fn_sleep",
    "fp_sleep",
    "tn_sleep",
];

fn sleep_cells(v: &SleepVariables) -> [Option<f64>; 5] {
    [
        Some(v.total_epochs_min),
        Some(v.total_sleep_time_min),
        Some(v.sleep_latency_min),
        Some(v.waso_min),
        Some(v.sleep_efficiency_pct),
    ]
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "NA".to_string(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    predictors: Vec<String>,
    rows: Vec<(String, Vec<Option<f64>>)>,
}

impl CompareReport {
    pub fn new(predictors: Vec<String>) -> Self {
        CompareReport { predictors, rows: Vec::new() }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["recording".to_string()];
        h.extend(SLEEP_VARIABLE_COLUMNS.iter().map(|c| format!("truth_{c}")));
        for p in &self.predictors {
            h.extend(METRIC_COLUMNS.iter().chain(&SLEEP_VARIABLE_COLUMNS[1..]).map(|c| format!("{p}_{c}")));
        }
        h
    }

    /// Adds a recording. `preds` must follow the predictor order given to
    /// [`CompareReport::new`].
    pub fn add_recording(
        &mut self,
        name: &str,
        truth: &StateSequence,
        preds: &[&StateSequence],
        window: &StudyWindow,
    ) -> Result<(), MetricsError> {
        assert_eq!(preds.len(), self.predictors.len(), "one sequence per predictor");
        let mut cells: Vec<Option<f64>> = sleep_cells(&sleep_variables(truth, window)?).to_vec();
        for pred in preds {
            let m = epoch_metrics(confusion(pred, truth)?)?;
            let c = m.confusion;
            cells.extend([
                Some(m.accuracy),
                m.sensitivity_sleep,
                m.specificity_sleep,
                m.ppv_sleep,
                m.ppv_wake,
                Some(c.tp_sleep as f64),
                Some(c.fn_sleep as f64),
                Some(c.fp_sleep as f64),
                Some(c.tn_sleep as f64),
            ]);
            cells.extend(&sleep_cells(&sleep_variables(pred, window)?)[1..]);
        }
        self.rows.push((name.to_string(), cells));
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        let line = |out: &mut String, name: &str, cells: &[Option<f64>]| {
            out.push_str(name);
            for &c in cells {
                let _ = write!(out, ",{}", cell(c));
            }
            out.push('\n');
        };
        for (name, cells) in &self.rows {
            line(&mut out, name, cells);
        }
        if self.rows.is_empty() {
            return out;
        }
        let width = self.rows[0].1.len();
        let columns: Vec<Vec<Option<f64>>> =
            (0..width).map(|j| self.rows.iter().map(|(_, r)| r[j]).collect()).collect();
        let summaries: Vec<_> = columns.iter().map(|c| summarize(c)).collect();
        line(&mut out, "mean", &summaries.iter().map(|s| s.map(|s| s.mean)).collect::<Vec<_>>());
        line(&mut out, "min", &summaries.iter().map(|s| s.map(|s| s.min)).collect::<Vec<_>>());
        line(&mut out, "max", &summaries.iter().map(|s| s.map(|s| s.max)).collect::<Vec<_>>());
        out
    }
}
