//! Forward-backward in log space.
//!
//! The forward pass carries normalized log filtering probabilities; the
//! log-likelihood accumulates the per-step log normalizers. The backward
//! messages are renormalized at every step. Zero start or transition
//! probabilities are carried as `-inf` and never produce NaN.

use super::HmmParams;
use crate::ingest::LogSeries;
use crate::scalar::{ln_add_exp, Scalar};

fn ln_emission_table<F: Scalar>(obs: &[F], params: &HmmParams<F>) -> Vec<[F; 2]> {
    obs.iter().map(|&o| params.ln_emissions(o)).collect()
}

struct Forward<F> {
    /// `ln P(X_t = i | O_1..O_t)`.
    ln_filter: Vec<[F; 2]>,
    log_likelihood: F,
}

fn forward<F: Scalar>(lb: &[[F; 2]], params: &HmmParams<F>) -> Forward<F> {
    let la = params.ln_a();
    let lpi = params.ln_pi();
    let mut ln_filter = Vec::with_capacity(lb.len());
    let mut ll = F::zero();
    let mut prev = [F::zero(); 2];
    for (t, b) in lb.iter().enumerate() {
        let pred = if t == 0 {
            lpi
        } else {
            [ln_add_exp(prev[0] + la[0][0], prev[1] + la[1][0]), ln_add_exp(prev[0] + la[0][1], prev[1] + la[1][1])]
        };
        let joint = [pred[0] + b[0], pred[1] + b[1]];
        let norm = ln_add_exp(joint[0], joint[1]);
        prev = [joint[0] - norm, joint[1] - norm];
        ll += norm;
        ln_filter.push(prev);
    }
    Forward { ln_filter, log_likelihood: ll }
}

/// `ln P(observations | params)` by the forward recursion.
pub fn forward_log_likelihood<F: Scalar>(obs: &LogSeries<F>, params: &HmmParams<F>) -> F {
    forward(&ln_emission_table(obs.values(), params), params).log_likelihood
}

/// E-step output.
#[derive(Clone, Debug)]
pub struct Posteriors<F> {
    /// `P(X_t = i | O)` per epoch.
    pub gamma: Vec<[F; 2]>,
    /// `Σ_t P(X_t = i, X_{t+1} = j | O)`.
    pub expected_transitions: [[F; 2]; 2],
    pub log_likelihood: F,
}

fn normalize_ln<F: Scalar>(v: [F; 2]) -> [F; 2] {
    let norm = ln_add_exp(v[0], v[1]);
    [(v[0] - norm).exp(), (v[1] - norm).exp()]
}

/// Runs forward-backward. When `keep_pairwise` is set, the per-step pairwise
/// posteriors are returned as well (used by tests and the verifier).
pub(crate) fn forward_backward<F: Scalar>(
    obs: &[F],
    params: &HmmParams<F>,
    keep_pairwise: bool,
) -> (Posteriors<F>, Vec<[[F; 2]; 2]>) {
    let lb = ln_emission_table(obs, params);
    let fwd = forward(&lb, params);
    let la = params.ln_a();
    let n = obs.len();

    // backward messages, each normalized to log-sum zero
    let mut ln_beta = vec![[F::zero(); 2]; n];
    for t in (0..n.saturating_sub(1)).rev() {
        let nb = ln_beta[t + 1];
        let b = lb[t + 1];
        let raw = [
            ln_add_exp(la[0][0] + b[0] + nb[0], la[0][1] + b[1] + nb[1]),
            ln_add_exp(la[1][0] + b[0] + nb[0], la[1][1] + b[1] + nb[1]),
        ];
        let norm = ln_add_exp(raw[0], raw[1]);
        ln_beta[t] = [raw[0] - norm, raw[1] - norm];
    }

    let gamma: Vec<[F; 2]> = fwd
        .ln_filter
        .iter()
        .zip(&ln_beta)
        .map(|(f, be)| normalize_ln([f[0] + be[0], f[1] + be[1]]))
        .collect();

    let mut expected = [[F::zero(); 2]; 2];
    let mut pairwise = Vec::new();
    for t in 0..n.saturating_sub(1) {
        let f = fwd.ln_filter[t];
        let b = lb[t + 1];
        let be = ln_beta[t + 1];
        let mut lxi = [[F::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                lxi[i][j] = f[i] + la[i][j] + b[j] + be[j];
            }
        }
        let norm = ln_add_exp(ln_add_exp(lxi[0][0], lxi[0][1]), ln_add_exp(lxi[1][0], lxi[1][1]));
        let mut xi = [[F::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                xi[i][j] = (lxi[i][j] - norm).exp();
                expected[i][j] += xi[i][j];
            }
        }
        if keep_pairwise {
            pairwise.push(xi);
        }
    }

    (Posteriors { gamma, expected_transitions: expected, log_likelihood: fwd.log_likelihood }, pairwise)
}

/// Posterior state probabilities `γ_t` for every epoch.
pub fn posterior_marginals<F: Scalar>(obs: &LogSeries<F>, params: &HmmParams<F>) -> Vec<[F; 2]> {
    forward_backward(obs.values(), params, false).0.gamma
}

/// Pairwise posteriors `ξ_t(i, j) = P(X_t = i, X_{t+1} = j | O)`, length `T - 1`.
pub fn pairwise_posteriors<F: Scalar>(obs: &LogSeries<F>, params: &HmmParams<F>) -> Vec<[[F; 2]; 2]> {
    forward_backward(obs.values(), params, true).1
}
