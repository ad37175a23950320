//! Randomized self-check: the forward recursion, posteriors and Viterbi
//! against exhaustive enumeration, and EM log-likelihood ascent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::emissions::{SleepEmission, WakeEmission};
use crate::hmm::{
    baum_welch, brute_force_likelihood, brute_force_posteriors, brute_force_viterbi, default_init, forward_log_likelihood,
    posterior_marginals, viterbi, HmmParams,
};
use crate::ingest::{log_transform, LogSeries};
use crate::simulate::{simulate, SimSpec};

pub const FORWARD_REL_TOL: f64 = 1e-10;
pub const POSTERIOR_ABS_TOL: f64 = 1e-9;
pub const ASCENT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyConfig {
    pub trials: usize,
    pub max_t: usize,
    pub seed: u64,
    /// Perturbs the forward likelihood so the suite must fail.
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { trials: 200, max_t: 12, seed: 0, inject_fault: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    /// Seed of the first failing instance.
    pub first_failure: Option<u64>,
    pub worst: f64,
}

impl CheckResult {
    fn new(name: &'static str) -> Self {
        CheckResult { name, trials: 0, failures: 0, first_failure: None, worst: 0.0 }
    }

    fn record(&mut self, seed: u64, error: f64, ok: bool) {
        self.trials += 1;
        self.worst = self.worst.max(error);
        if !ok {
            self.failures += 1;
            self.first_failure.get_or_insert(seed);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Per-instance seed derived from the run seed and trial index.
pub fn instance_seed(seed: u64, trial: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random valid parameters.
pub fn random_params(rng: &mut impl Rng) -> HmmParams<f64> {
    let a11 = rng.random_range(0.02..0.98);
    let a22 = rng.random_range(0.02..0.98);
    let mu1 = rng.random_range(-1.0..4.0);
    let sleep = SleepEmission::new(rng.random_range(0.02..0.98), mu1, rng.random_range(0.2..2.5)).expect("in range");
    let wake = WakeEmission::new(rng.random_range(0.0..7.0), rng.random_range(0.2..2.5)).expect("in range");
    let p = rng.random_range(0.02..0.98);
    HmmParams::new([[a11, 1.0 - a11], [1.0 - a22, a22]], sleep, wake, [p, 1.0 - p]).expect("valid")
}

/// Random parameters and a random length-`1..=max_t` series, about a third
/// of it zeros.
pub fn random_instance(seed: u64, max_t: usize) -> (LogSeries<f64>, HmmParams<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(&mut rng);
    let t = rng.random_range(1..=max_t.max(1));
    let values = (0..t)
        .map(|_| if rng.random_bool(0.35) { 0.0 } else { rng.random_range(0.0..8.0) })
        .collect();
    (LogSeries::from_values(values, 30).expect("non-negative"), params)
}

fn separated_params(rng: &mut impl Rng) -> HmmParams<f64> {
    let a11 = rng.random_range(0.85..0.99);
    let a22 = rng.random_range(0.85..0.99);
    let mu1 = rng.random_range(1.0..3.0);
    let sleep = SleepEmission::new(rng.random_range(0.3..0.9), mu1, rng.random_range(0.5..1.5)).expect("in range");
    let wake = WakeEmission::new(mu1 + rng.random_range(1.5..3.0), rng.random_range(0.5..1.2)).expect("in range");
    HmmParams::new([[a11, 1.0 - a11], [1.0 - a22, a22]], sleep, wake, [0.5, 0.5]).expect("valid")
}

/// Largest decrease between consecutive log-likelihoods in an EM trace.
pub fn max_decrease(trace: &[f64]) -> f64 {
    trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

/// Runs every check. `trials` instances each for the enumeration checks and
/// `max(1, trials / 20)` simulated EM fits.
pub fn run(cfg: &VerifyConfig) -> Vec<CheckResult> {
    let mut forward = CheckResult::new("forward likelihood vs enumeration");
    let mut post = CheckResult::new("posterior marginals vs enumeration");
    let mut vit = CheckResult::new("viterbi path vs enumeration");
    let mut em = CheckResult::new("baum-welch log-likelihood ascent");
    let max_t = cfg.max_t.clamp(1, crate::hmm::MAX_ENUMERATION_LEN);

    for trial in 0..cfg.trials {
        let seed = instance_seed(cfg.seed, trial);
        let (obs, params) = random_instance(seed, max_t);

        let mut ll = forward_log_likelihood(&obs, &params);
        if cfg.inject_fault {
            ll *= 1.0 + 1e-6;
        }
        let reference = brute_force_likelihood(&obs, &params).expect("within enumeration limit");
        let rel = ((ll - reference) / reference.abs().max(f64::MIN_POSITIVE)).abs();
        forward.record(seed, rel, rel <= FORWARD_REL_TOL);

        let gamma = posterior_marginals(&obs, &params);
        let reference = brute_force_posteriors(&obs, &params).expect("within enumeration limit");
        let err = gamma
            .iter()
            .zip(&reference)
            .flat_map(|(g, r)| [(g[0] - r[0]).abs(), (g[1] - r[1]).abs()])
            .fold(0.0, f64::max);
        post.record(seed, err, err <= POSTERIOR_ABS_TOL);

        let path = viterbi(&obs, &params);
        let reference = brute_force_viterbi(&obs, &params).expect("within enumeration limit");
        let mismatches = path.states().iter().zip(reference.states()).filter(|(a, b)| a != b).count();
        vit.record(seed, mismatches as f64, mismatches == 0);
    }

    for trial in 0..(cfg.trials / 20).max(1) {
        let seed = instance_seed(cfg.seed ^ 0xE11E, trial);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = separated_params(&mut rng);
        let sim = simulate(&SimSpec::new(params, 400, seed)).expect("positive length");
        let obs = log_transform::<f64>(&sim.series);
        let fit = baum_welch(&obs, &default_init(&obs), 1e-8, 60);
        match fit {
            Ok(report) => {
                let worst = max_decrease(&report.log_likelihood_trace);
                em.record(seed, worst, worst <= ASCENT_TOL);
            }
            Err(_) => em.record(seed, f64::INFINITY, false),
        }
    }
    vec![forward, post, vit, em]
}

/// Plain-text table, one line per check.
pub fn format_table(results: &[CheckResult]) -> String {
    let mut out = format!("{:<40} {:>7} {:>9} {:>12}  status\n", "check", "trials", "failures", "worst");
    for r in results {
        out.push_str(&format!(
            "{:<40} {:>7} {:>9} {:>12.3e}  {}",
            r.name,
            r.trials,
            r.failures,
            r.worst,
            if r.passed() { "PASS" } else { "FAIL" }
        ));
        if let Some(seed) = r.first_failure {
            out.push_str(&format!(" (first failing instance seed {seed})"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let results = run(&VerifyConfig { trials: 40, ..VerifyConfig::default() });
        assert!(results.iter().all(CheckResult::passed), "{}", format_table(&results));
    }

    #[test]
    fn injected_fault_is_caught() {
        let results = run(&VerifyConfig { trials: 20, inject_fault: true, ..VerifyConfig::default() });
        assert!(!results[0].passed());
        assert!(results[0].first_failure.is_some());
    }

    #[test]
    fn instances_reproduce() {
        assert_eq!(random_instance(instance_seed(5, 3), 12), random_instance(instance_seed(5, 3), 12));
        assert_ne!(instance_seed(5, 3), instance_seed(5, 4));
    }
}
