//! Helpers shared by the integration tests: independent densities built on
//! statrs, exhaustive path enumeration, and adaptive Simpson quadrature.
#![allow(dead_code)]

use actihmm::emissions::{SleepEmission, WakeEmission};
use actihmm::hmm::HmmParams;
use actihmm::{Logs, Params, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Cohort-mean parameters used for the simulation checks.
pub fn cohort() -> Params {
    HmmParams::new(
        [[0.960, 0.040], [0.055, 0.945]],
        SleepEmission::new(0.731, 2.486, 1.248).unwrap(),
        WakeEmission::new(4.803, 0.866).unwrap(),
        [0.5, 0.5],
    )
    .unwrap()
}

/// Emission density evaluated without the library's log-space code.
pub fn density(p: &Params, state: State, x: f64) -> f64 {
    match state {
        State::Sleep => {
            let s = p.sleep();
            let n = Normal::new(s.mu1(), s.sigma1()).unwrap();
            let f = n.pdf(x) / n.sf(0.0);
            if x == 0.0 {
                s.alpha() + (1.0 - s.alpha()) * f
            } else {
                (1.0 - s.alpha()) * f
            }
        }
        State::Wake => Normal::new(p.wake().mu2(), p.wake().sigma2()).unwrap().pdf(x),
    }
}

fn path_prob(obs: &[f64], p: &Params, path: &[State]) -> f64 {
    let a = p.a();
    let mut prob = p.pi()[path[0].index()] * density(p, path[0], obs[0]);
    for t in 1..obs.len() {
        prob *= a[path[t - 1].index()][path[t].index()] * density(p, path[t], obs[t]);
    }
    prob
}

fn path_of(bits: usize, t: usize) -> Vec<State> {
    // most significant bit is epoch 0, so counting up is lexicographic
    (0..t).map(|i| if bits >> (t - 1 - i) & 1 == 0 { State::Sleep } else { State::Wake }).collect()
}

/// Likelihood by summing all 2^T path probabilities.
pub fn enumerate_likelihood(obs: &[f64], p: &Params) -> f64 {
    (0..1usize << obs.len()).map(|b| path_prob(obs, p, &path_of(b, obs.len()))).sum()
}

/// Most probable path; the first in lexicographic order (Sleep before Wake)
/// wins ties.
pub fn enumerate_argmax(obs: &[f64], p: &Params) -> Vec<State> {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for b in 0..1usize << obs.len() {
        let path = path_of(b, obs.len());
        let pr = path_prob(obs, p, &path);
        if pr > best.0 {
            best = (pr, path);
        }
    }
    best.1
}

/// Per-epoch posterior state probabilities by enumeration.
pub fn enumerate_posteriors(obs: &[f64], p: &Params) -> Vec<[f64; 2]> {
    let mut acc = vec![[0.0; 2]; obs.len()];
    let mut total = 0.0;
    for b in 0..1usize << obs.len() {
        let path = path_of(b, obs.len());
        let pr = path_prob(obs, p, &path);
        total += pr;
        for (t, s) in path.iter().enumerate() {
            acc[t][s.index()] += pr;
        }
    }
    acc.iter().map(|r| [r[0] / total, r[1] / total]).collect()
}

/// Random parameters kept in a range where linear-space enumeration does not
/// underflow, and a random series of length `1..=max_t` with about a third
/// zeros.
pub fn random_instance(rng: &mut ChaCha8Rng, max_t: usize) -> (Logs, Params) {
    let a11: f64 = rng.random_range(0.01..0.99);
    let a22: f64 = rng.random_range(0.01..0.99);
    let p0: f64 = rng.random_range(0.01..0.99);
    let params = HmmParams::new(
        [[a11, 1.0 - a11], [1.0 - a22, a22]],
        SleepEmission::new(rng.random_range(0.01..0.99), rng.random_range(-1.0..5.0), rng.random_range(0.3..3.0)).unwrap(),
        WakeEmission::new(rng.random_range(0.0..7.0), rng.random_range(0.3..3.0)).unwrap(),
        [p0, 1.0 - p0],
    )
    .unwrap();
    let t = rng.random_range(1..=max_t);
    let values = (0..t)
        .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..8.0) })
        .collect();
    (Logs::from_values(values, 30).unwrap(), params)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (g(lm), g(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_step(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `g` over `[a, b]`.
pub fn simpson<G: Fn(f64) -> f64>(g: G, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (g(a), g(0.5 * (a + b)), g(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&g, a, b, fa, fm, fb, whole, tol, 50)
}

/// Quadrature over `[a, b]` split at points spaced geometrically on both
/// sides of `center`, so a density concentrated near it is resolved.
pub fn simpson_graded<G: Fn(f64) -> f64>(g: G, a: f64, b: f64, center: f64, tol: f64) -> f64 {
    let mut cuts = vec![a, b];
    if center > a && center < b {
        cuts.push(center);
    }
    let mut h = 1e-14 * (b - a);
    while h < b - a {
        cuts.extend([center - h, center + h].into_iter().filter(|&x| x > a && x < b));
        h *= 4.0;
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let per = tol / cuts.len() as f64;
    cuts.windows(2).map(|w| simpson(&g, w[0], w[1], per)).sum()
}

/// Point mass plus the continuous part integrated over `(0, 20]`.
pub fn sleep_total_mass(s: &SleepEmission<f64>) -> f64 {
    let cont = |x: f64| s.ln_continuous(x).exp();
    s.alpha() + simpson_graded(cont, 0.0, 20.0, s.mu1().clamp(0.0, 20.0), 1e-9)
}

/// Wake density integrated over `mu2 ± 10 sigma2`.
pub fn wake_total_mass(w: &WakeEmission<f64>) -> f64 {
    let (lo, hi) = (w.mu2() - 10.0 * w.sigma2(), w.mu2() + 10.0 * w.sigma2());
    simpson(|x| w.ln_density(x).exp(), lo, hi, 1e-11)
}
