use super::forward_backward::forward_backward;
use super::{HmmError, HmmParams};
use crate::emissions::{fit_sleep_weighted, fit_wake_weighted, SleepEmission, WakeEmission};
use crate::ingest::{LogSeries, State, StateSequence};
use crate::scalar::Scalar;

/// Shortest series Baum-Welch will fit.
pub const MIN_FIT_LEN: usize = 10;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 500;

/// Outcome of a Baum-Welch run.
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport<F> {
    pub params: HmmParams<F>,
    /// Log-likelihood at the start of each iteration.
    pub log_likelihood_trace: Vec<F>,
    pub iterations: usize,
    pub converged: bool,
    /// True when the first run ended with the sleep location above the wake
    /// mean and the fit was redone from the state-swapped parameters.
    pub relabeled: bool,
}

impl<F: Scalar> FitReport<F> {
    pub fn final_log_likelihood(&self) -> Option<F> {
        self.log_likelihood_trace.last().copied()
    }
}

struct Run<F> {
    params: HmmParams<F>,
    trace: Vec<F>,
    converged: bool,
}

fn run<F: Scalar>(obs: &[F], init: HmmParams<F>, tol: F, max_iter: usize) -> Result<Run<F>, HmmError> {
    let mut params = init;
    let mut trace: Vec<F> = Vec::new();
    let mut converged = false;
    let mut sleep_w = vec![F::zero(); obs.len()];
    let mut wake_w = vec![F::zero(); obs.len()];

    for iteration in 0..max_iter {
        let (post, _) = forward_backward(obs, &params, false);
        let ll = post.log_likelihood;
        if let Some(&prev) = trace.last() {
            trace.push(ll);
            if ((ll - prev) / prev.abs()).abs() < tol {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }

        for (t, g) in post.gamma.iter().enumerate() {
            sleep_w[t] = g[0];
            wake_w[t] = g[1];
        }
        let sleep = fit_sleep_weighted(obs, &sleep_w, params.sleep())
            .map_err(|source| HmmError::EmissionFit { iteration, state: State::Sleep, source })?
            .emission;
        let wake = fit_wake_weighted(obs, &wake_w)
            .map_err(|source| HmmError::EmissionFit { iteration, state: State::Wake, source })?;

        let old_a = params.a();
        let mut a = old_a;
        for (i, row) in post.expected_transitions.iter().enumerate() {
            let total = row[0] + row[1];
            if total > F::zero() {
                a[i][0] = row[0] / total;
                a[i][1] = F::one() - a[i][0];
            }
        }
        let g0 = post.gamma[0];
        let pi = [g0[0], F::one() - g0[0]];
        params = HmmParams::new(a, sleep, wake, pi)?;
    }
    Ok(Run { params, trace, converged })
}

/// Fits the model by EM.
///
/// Stops when the relative change in log-likelihood between consecutive
/// iterations drops below `tol`, or after `max_iter` E-steps. If the result
/// has `mu1 >= mu2` the fit is repeated once from the state-swapped
/// parameters so that sleep is always the low-activity state.
pub fn baum_welch<F: Scalar>(obs: &LogSeries<F>, init: &HmmParams<F>, tol: F, max_iter: usize) -> Result<FitReport<F>, HmmError> {
    if obs.len() < MIN_FIT_LEN {
        return Err(HmmError::TooShort { len: obs.len(), min: MIN_FIT_LEN });
    }
    if !(tol > F::zero()) || max_iter == 0 {
        return Err(HmmError::InvalidParams("tolerance must be positive and max_iter at least 1".into()));
    }
    let values = obs.values();
    let mut result = run(values, *init, tol, max_iter)?;
    let mut relabeled = false;
    if result.params.sleep().mu1() >= result.params.wake().mu2() {
        relabeled = true;
        result = run(values, result.params.swapped()?, tol, max_iter)?;
        if result.params.sleep().mu1() >= result.params.wake().mu2() {
            return Err(HmmError::Unidentifiable);
        }
    }
    Ok(FitReport {
        params: result.params,
        iterations: result.trace.len(),
        log_likelihood_trace: result.trace,
        converged: result.converged,
        relabeled,
    })
}

/// [`default_init`] followed by [`baum_welch`] with the default tolerance
/// and iteration cap.
pub fn fit_default<F: Scalar>(obs: &LogSeries<F>) -> Result<FitReport<F>, HmmError> {
    baum_welch(obs, &default_init(obs), F::lit(DEFAULT_TOL), DEFAULT_MAX_ITER)
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile<F: Scalar>(sorted: &[F], q: F) -> F {
    let pos = q * F::from_count(sorted.len() - 1);
    let lo = pos.floor().to_usize().unwrap_or(0).min(sorted.len() - 1);
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - F::from_count(lo);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn mean<F: Scalar>(xs: impl Iterator<Item = F>) -> Option<F> {
    let (sum, n) = xs.fold((F::zero(), 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / F::from_count(n))
}

/// Deterministic starting point for EM.
///
/// Over the nonzero observations: `mu1` is the mean of those strictly below
/// their 40th percentile (1.0 if none), `mu2` the mean of those strictly above
/// the 60th (`mu1 + 2` if none). Both scales start at 1, `alpha` at the zero
/// fraction clamped to `[0.05, 0.95]`, the chain at 0.95 persistence with a
/// uniform start.
pub fn default_init<F: Scalar>(obs: &LogSeries<F>) -> HmmParams<F> {
    let values = obs.values();
    let mut nonzero: Vec<F> = values.iter().copied().filter(|v| *v > F::zero()).collect();
    nonzero.sort_by(|a, b| a.partial_cmp(b).expect("finite log values"));
    let (mu1, mu2) = if nonzero.is_empty() {
        (F::one(), F::lit(3.0))
    } else {
        let p40 = percentile(&nonzero, F::lit(0.4));
        let p60 = percentile(&nonzero, F::lit(0.6));
        let mu1 = mean(nonzero.iter().copied().filter(|v| *v < p40)).unwrap_or(F::one());
        let mu2 = mean(nonzero.iter().copied().filter(|v| *v > p60)).unwrap_or(mu1 + F::lit(2.0));
        (mu1, if mu2 > mu1 { mu2 } else { mu1 + F::lit(2.0) })
    };
    let zeros = values.len() - nonzero.len();
    let alpha = (F::from_count(zeros) / F::from_count(values.len())).max(F::lit(0.05)).min(F::lit(0.95));
    let stay = F::lit(0.95);
    let leave = F::lit(0.05);
    HmmParams::new(
        [[stay, leave], [leave, stay]],
        SleepEmission::new(alpha, mu1, F::one()).expect("alpha clamped into (0,1)"),
        WakeEmission::new(mu2, F::one()).expect("finite mean"),
        [F::lit(0.5), F::lit(0.5)],
    )
    .expect("rows sum to one")
}

/// Estimates parameters directly from labelled epochs: each emission from
/// its own epochs (0/1 weights), transitions from label-to-label counts, and
/// the initial distribution from label frequencies.
pub fn estimate_supervised<F: Scalar>(obs: &LogSeries<F>, labels: &StateSequence) -> Result<HmmParams<F>, HmmError> {
    if obs.len() != labels.len() {
        return Err(HmmError::InvalidParams(format!(
            "{} observations but {} labels",
            obs.len(),
            labels.len()
        )));
    }
    let values = obs.values();
    let states = labels.states();
    let weights = |s: State| -> Vec<F> { states.iter().map(|&x| if x == s { F::one() } else { F::zero() }).collect() };
    let init = default_init(obs);
    let sleep = fit_sleep_weighted(values, &weights(State::Sleep), init.sleep())
        .map_err(|source| HmmError::EmissionFit { iteration: 0, state: State::Sleep, source })?
        .emission;
    let wake = fit_wake_weighted(values, &weights(State::Wake))
        .map_err(|source| HmmError::EmissionFit { iteration: 0, state: State::Wake, source })?;

    let mut counts = [[0usize; 2]; 2];
    for w in states.windows(2) {
        counts[w[0].index()][w[1].index()] += 1;
    }
    let mut a = init.a();
    for (i, row) in counts.iter().enumerate() {
        let total = row[0] + row[1];
        if total > 0 {
            a[i][0] = F::from_count(row[0]) / F::from_count(total);
            a[i][1] = F::one() - a[i][0];
        }
    }
    let n_sleep = states.iter().filter(|s| **s == State::Sleep).count();
    let p_sleep = F::from_count(n_sleep) / F::from_count(states.len());
    HmmParams::new(a, sleep, wake, [p_sleep, F::one() - p_sleep])
}
