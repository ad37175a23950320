//! Emission laws for the two hidden states, on the `ln(count + 1)` scale.
//!
//! Sleep epochs follow a zero-inflated Gaussian truncated to `[0, ∞)`: with
//! probability `alpha` an exact zero, otherwise a draw from `N(mu1, sigma1²)`
//! conditioned on being non-negative. The likelihood of an observation of
//! exactly zero is the point mass plus the continuous density at zero,
//!
//! ```text
//! b1(0) = alpha + (1 - alpha) · φ(-mu1/sigma1) / (sigma1 · Φ(mu1/sigma1))
//! b1(x) =         (1 - alpha) · φ((x - mu1)/sigma1) / (sigma1 · Φ(mu1/sigma1)),  x > 0
//! ```
//!
//! Wake epochs follow a plain Gaussian `N(mu2, sigma2²)`.

use thiserror::Error;

use crate::scalar::{half_ln_2pi, inverse_mills, ln_add_exp, ln_std_normal_cdf, ln_std_normal_pdf, Scalar};

/// Lower clamp for the zero-inflation weight after fitting.
pub const ALPHA_MIN: f64 = 1e-6;
/// Upper clamp for the zero-inflation weight after fitting.
pub const ALPHA_MAX: f64 = 1.0 - 1e-6;
/// Floor on both standard deviations.
pub const SIGMA_FLOOR: f64 = 1e-3;
/// Search box for the truncated-Gaussian location.
pub const MU1_BOUNDS: (f64, f64) = (-5.0, 10.0);
/// Search box for the truncated-Gaussian scale.
pub const SIGMA1_BOUNDS: (f64, f64) = (SIGMA_FLOOR, 5.0);

const INNER_TOL: f64 = 1e-8;
const INNER_MAX_ITER: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmissionError {
    #[error("observation {0} is outside the emission's domain")]
    Domain(f64),
    #[error("invalid emission parameter: {0}")]
    Parameter(String),
    #[error("observation and weight lengths differ ({obs} vs {weights})")]
    LengthMismatch { obs: usize, weights: usize },
    #[error("weights must be finite and non-negative")]
    BadWeight,
    #[error("all weights are zero")]
    DegenerateWeights,
}

type Result<T> = std::result::Result<T, EmissionError>;

/// Zero-inflated truncated Gaussian for the sleep state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SleepEmission<F> {
    alpha: F,
    mu1: F,
    sigma1: F,
}

impl<F: Scalar> SleepEmission<F> {
    /// Requires `0 < alpha < 1`, finite `mu1`, and `sigma1 >= 1e-3`.
    pub fn new(alpha: F, mu1: F, sigma1: F) -> Result<Self> {
        if !(alpha > F::zero() && alpha < F::one()) {
            return Err(EmissionError::Parameter(format!("alpha {alpha} not in (0, 1)")));
        }
        if !mu1.is_finite() {
            return Err(EmissionError::Parameter(format!("mu1 {mu1} not finite")));
        }
        if !(sigma1.is_finite() && sigma1 >= F::lit(SIGMA_FLOOR)) {
            return Err(EmissionError::Parameter(format!("sigma1 {sigma1} below {SIGMA_FLOOR}")));
        }
        Ok(SleepEmission { alpha, mu1, sigma1 })
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn mu1(&self) -> F {
        self.mu1
    }

    pub fn sigma1(&self) -> F {
        self.sigma1
    }

    /// Log of the continuous part `(1-alpha) · f(x)` (no point mass).
    #[inline]
    pub fn ln_continuous(&self, x: F) -> F {
        (-self.alpha).ln_1p() + ln_truncated_density(x, self.mu1, self.sigma1)
    }

    /// Log-likelihood of one observation; no domain checks.
    #[inline]
    pub fn ln_density(&self, obs: F) -> F {
        if obs == F::zero() {
            ln_add_exp(self.alpha.ln(), self.ln_continuous(obs))
        } else {
            self.ln_continuous(obs)
        }
    }

    /// Probability that an observation is exactly zero under the sampler:
    /// the point mass only (the truncated Gaussian is continuous).
    pub fn point_mass(&self) -> F {
        self.alpha
    }
}

/// Gaussian for the wake state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WakeEmission<F> {
    mu2: F,
    sigma2: F,
}

impl<F: Scalar> WakeEmission<F> {
    pub fn new(mu2: F, sigma2: F) -> Result<Self> {
        if !mu2.is_finite() {
            return Err(EmissionError::Parameter(format!("mu2 {mu2} not finite")));
        }
        if !(sigma2.is_finite() && sigma2 >= F::lit(SIGMA_FLOOR)) {
            return Err(EmissionError::Parameter(format!("sigma2 {sigma2} below {SIGMA_FLOOR}")));
        }
        Ok(WakeEmission { mu2, sigma2 })
    }

    pub fn mu2(&self) -> F {
        self.mu2
    }

    pub fn sigma2(&self) -> F {
        self.sigma2
    }

    #[inline]
    pub fn ln_density(&self, obs: F) -> F {
        ln_std_normal_pdf((obs - self.mu2) / self.sigma2) - self.sigma2.ln()
    }
}

/// `ln[ φ((x-mu)/sigma) / (sigma · Φ(mu/sigma)) ]`, the density of
/// `N(mu, sigma²)` truncated to `[0, ∞)`.
#[inline]
fn ln_truncated_density<F: Scalar>(x: F, mu: F, sigma: F) -> F {
    ln_std_normal_pdf((x - mu) / sigma) - sigma.ln() - ln_std_normal_cdf(mu / sigma)
}

/// Sleep-state log-likelihood of one `ln(count+1)` observation.
pub fn sleep_log_emission<F: Scalar>(obs: F, p: &SleepEmission<F>) -> Result<F> {
    if !obs.is_finite() || obs < F::zero() {
        return Err(EmissionError::Domain(obs.as_f64()));
    }
    Ok(p.ln_density(obs))
}

/// Wake-state log-likelihood of one observation.
pub fn wake_log_emission<F: Scalar>(obs: F, p: &WakeEmission<F>) -> Result<F> {
    if !obs.is_finite() {
        return Err(EmissionError::Domain(obs.as_f64()));
    }
    Ok(p.ln_density(obs))
}

fn check_weighted<F: Scalar>(obs: &[F], weights: &[F], nonneg_obs: bool) -> Result<F> {
    if obs.len() != weights.len() {
        return Err(EmissionError::LengthMismatch { obs: obs.len(), weights: weights.len() });
    }
    let mut total = F::zero();
    for (&o, &w) in obs.iter().zip(weights) {
        if !o.is_finite() || (nonneg_obs && o < F::zero()) {
            return Err(EmissionError::Domain(o.as_f64()));
        }
        if !w.is_finite() || w < F::zero() {
            return Err(EmissionError::BadWeight);
        }
        total += w;
    }
    if total <= F::zero() {
        return Err(EmissionError::DegenerateWeights);
    }
    Ok(total)
}

/// `Σ w·ln b1(o)`, summed directly.
pub fn sleep_objective<F: Scalar>(obs: &[F], weights: &[F], p: &SleepEmission<F>) -> F {
    obs.iter()
        .zip(weights)
        .filter(|(_, &w)| w > F::zero())
        .fold(F::zero(), |acc, (&o, &w)| acc + w * p.ln_density(o))
}

/// Closed-form weighted Gaussian MLE, standard deviation floored at 1e-3.
pub fn fit_wake_weighted<F: Scalar>(obs: &[F], weights: &[F]) -> Result<WakeEmission<F>> {
    let total = check_weighted(obs, weights, false)?;
    let mean = obs.iter().zip(weights).fold(F::zero(), |acc, (&o, &w)| acc + w * o) / total;
    let var = obs.iter().zip(weights).fold(F::zero(), |acc, (&o, &w)| {
        let d = o - mean;
        acc + w * d * d
    }) / total;
    let sigma = var.sqrt().max(F::lit(SIGMA_FLOOR));
    WakeEmission::new(mean, sigma)
}

/// Result of the sleep-emission M-step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SleepFit<F> {
    pub emission: SleepEmission<F>,
    /// `Σ w·ln b1(o)` at `emission`.
    pub objective: F,
    pub iterations: usize,
    /// False when the inner loop hit its iteration cap; `emission` is then
    /// the best point found so far.
    pub converged: bool,
}

/// Weighted sufficient statistics: total weight on exact zeros, and the
/// weight, mean and centred second moment of the positive observations.
#[derive(Clone, Copy, Debug)]
struct SleepStats<F> {
    zero_w: F,
    pos_w: F,
    pos_mean: F,
    pos_m2: F,
}

impl<F: Scalar> SleepStats<F> {
    fn collect(obs: &[F], weights: &[F]) -> Self {
        let mut s = SleepStats { zero_w: F::zero(), pos_w: F::zero(), pos_mean: F::zero(), pos_m2: F::zero() };
        for (&o, &w) in obs.iter().zip(weights) {
            if w <= F::zero() {
                continue;
            }
            if o == F::zero() {
                s.zero_w += w;
            } else {
                // weighted Welford update
                s.pos_w += w;
                let d = o - s.pos_mean;
                s.pos_mean += d * w / s.pos_w;
                s.pos_m2 += w * d * (o - s.pos_mean);
            }
        }
        s
    }

    fn objective(&self, alpha: F, mu: F, sigma: F) -> F {
        let ln_1m_alpha = (-alpha).ln_1p();
        let ln_norm = sigma.ln() + ln_std_normal_cdf(mu / sigma);
        let mut j = F::zero();
        if self.zero_w > F::zero() {
            let cont0 = ln_1m_alpha + ln_std_normal_pdf(-mu / sigma) - ln_norm;
            j += self.zero_w * ln_add_exp(alpha.ln(), cont0);
        }
        if self.pos_w > F::zero() {
            let d = self.pos_mean - mu;
            let sq = self.pos_m2 + self.pos_w * d * d;
            j += self.pos_w * (ln_1m_alpha - ln_norm - half_ln_2pi::<F>()) - sq / (F::lit(2.0) * sigma * sigma);
        }
        j
    }
}

/// Weighted data for the truncated-Gaussian part: total weight, mean, and
/// centred second moment.
#[derive(Clone, Copy, Debug)]
struct TnData<F> {
    w: F,
    mean: F,
    m2: F,
}

impl<F: Scalar> TnData<F> {
    /// Positive observations plus `zero_w` weight placed at `x = 0`.
    fn with_zeros(stats: &SleepStats<F>, zero_w: F) -> Self {
        let w = stats.pos_w + zero_w;
        let mean = stats.pos_w * stats.pos_mean / w;
        let m2 = stats.pos_m2 + stats.pos_w * (stats.pos_mean - mean).powi(2) + zero_w * mean * mean;
        TnData { w, mean, m2 }
    }

    /// Weighted log-likelihood of the truncated Gaussian, up to a constant.
    fn objective(&self, mu: F, sigma: F) -> F {
        let d = self.mean - mu;
        -self.w * (sigma.ln() + ln_std_normal_cdf(mu / sigma)) - (self.m2 + self.w * d * d) / (F::lit(2.0) * sigma * sigma)
    }
}

fn in_box<F: Scalar>(mu: F, sigma: F) -> bool {
    mu >= F::lit(MU1_BOUNDS.0) && mu <= F::lit(MU1_BOUNDS.1) && sigma >= F::lit(SIGMA1_BOUNDS.0) && sigma <= F::lit(SIGMA1_BOUNDS.1)
}

fn clamp_to_box<F: Scalar>(mu: F, sigma: F) -> (F, F) {
    (
        mu.max(F::lit(MU1_BOUNDS.0)).min(F::lit(MU1_BOUNDS.1)),
        sigma.max(F::lit(SIGMA1_BOUNDS.0)).min(F::lit(SIGMA1_BOUNDS.1)),
    )
}

/// Maximizes the weighted truncated-Gaussian likelihood over `(mu, sigma)`.
///
/// Newton steps are taken in the natural parameters
/// `(mu/sigma², -1/(2 sigma²))`, where the log-likelihood is concave and the
/// negative Hessian is `w · Cov(X, X²)` under the current fit. Each step is
/// halved until the objective improves. If an accepted step leaves the box,
/// or the covariance is numerically singular, the search continues as a
/// bounded coordinate search.
fn maximize_truncated<F: Scalar>(data: &TnData<F>, start: (F, F)) -> (F, F) {
    let tol = F::lit(INNER_TOL);
    let (mut mu, mut sigma) = clamp_to_box(start.0, start.1);
    let mut current = data.objective(mu, sigma);

    for _ in 0..INNER_MAX_ITER {
        let Some(step) = newton_step(data, mu, sigma) else {
            return coordinate_search(data, (mu, sigma));
        };
        let eta1 = mu / (sigma * sigma);
        let eta2 = -F::one() / (F::lit(2.0) * sigma * sigma);
        let mut scale = F::one();
        let mut accepted = None;
        for _ in 0..50 {
            let e1 = eta1 + scale * step.0;
            let e2 = eta2 + scale * step.1;
            if e2 < F::zero() {
                let s = (-F::one() / (F::lit(2.0) * e2)).sqrt();
                let m = e1 * s * s;
                let val = data.objective(m, s);
                if val.is_finite() && val > current {
                    accepted = Some((m, s, val));
                    break;
                }
            }
            scale *= F::lit(0.5);
        }
        let Some((m, s, val)) = accepted else {
            // no ascent direction left at working precision
            return (mu, sigma);
        };
        if !in_box(m, s) {
            return coordinate_search(data, (mu, sigma));
        }
        let change = (m - mu).abs().max((s - sigma).abs());
        mu = m;
        sigma = s;
        current = val;
        if change < tol {
            break;
        }
    }
    (mu, sigma)
}

/// Newton direction in natural-parameter space, or `None` if the Fisher
/// matrix is not usable.
fn newton_step<F: Scalar>(data: &TnData<F>, mu: F, sigma: F) -> Option<(F, F)> {
    let a = mu / sigma;
    let lam = inverse_mills(a);
    // raw moments of the standard normal truncated to [-a, ∞)
    let c = -a;
    let ez1 = lam;
    let ez2 = F::one() + c * lam;
    let ez3 = F::lit(2.0) * lam + c * c * lam;
    let ez4 = F::lit(3.0) * ez2 + c * c * c * lam;
    let var_z = ez2 - ez1 * ez1;
    let cov_z = ez3 - ez1 * ez2;
    let var_z2 = ez4 - ez2 * ez2;

    let s2 = sigma * sigma;
    let var_x = s2 * var_z;
    let cov_x = s2 * sigma * cov_z + F::lit(2.0) * mu * var_x;
    let var_x2 = s2 * s2 * var_z2 + F::lit(4.0) * mu * s2 * sigma * cov_z + F::lit(4.0) * mu * mu * var_x;

    let ex = mu + sigma * ez1;
    let ex2 = mu * mu + F::lit(2.0) * mu * sigma * ez1 + s2 * ez2;
    let g1 = data.w * (data.mean - ex);
    let g2 = data.m2 + data.w * data.mean * data.mean - data.w * ex2;

    let det = var_x * var_x2 - cov_x * cov_x;
    if !(det.is_finite() && det > F::zero() && var_x > F::zero()) {
        return None;
    }
    // (w·C)⁻¹ g
    let inv = F::one() / (data.w * det);
    let d1 = inv * (var_x2 * g1 - cov_x * g2);
    let d2 = inv * (-cov_x * g1 + var_x * g2);
    (d1.is_finite() && d2.is_finite()).then_some((d1, d2))
}

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
fn golden_max<F: Scalar>(f: impl Fn(F) -> F, mut lo: F, mut hi: F, tol: F) -> F {
    let (end_lo, end_hi) = (lo, hi);
    let inv_phi = F::lit(0.618_033_988_749_894_8);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = (lo + hi) * F::lit(0.5);
    // keep the best of the final points and the original endpoints, so a
    // maximum on the boundary is returned exactly
    [(mid, f(mid)), (x1, f1), (x2, f2), (end_lo, f(end_lo)), (end_hi, f(end_hi))]
        .into_iter()
        .fold((mid, F::neg_infinity()), |best, p| if p.1 > best.1 { p } else { best })
        .0
}

/// 1-D maximization by a coarse scan followed by golden section in the
/// bracket around the best scan point.
fn scan_then_golden<F: Scalar>(f: impl Fn(F) -> F, lo: F, hi: F, tol: F) -> F {
    const N: usize = 32;
    let h = (hi - lo) / F::from_count(N);
    let mut best = 0;
    let mut best_v = F::neg_infinity();
    for i in 0..=N {
        let v = f(lo + h * F::from_count(i));
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    let a = lo + h * F::from_count(best.saturating_sub(1));
    let b = (lo + h * F::from_count((best + 1).min(N))).min(hi);
    golden_max(f, a, b, tol)
}

/// Bounded cyclic coordinate ascent over `mu` (concave for fixed `sigma`)
/// and `ln sigma`.
fn coordinate_search<F: Scalar>(data: &TnData<F>, start: (F, F)) -> (F, F) {
    let tol = F::lit(INNER_TOL);
    let (mut mu, mut sigma) = clamp_to_box(start.0, start.1);
    let mut current = data.objective(mu, sigma);
    let (ls_lo, ls_hi) = (F::lit(SIGMA1_BOUNDS.0).ln(), F::lit(SIGMA1_BOUNDS.1).ln());
    for _ in 0..INNER_MAX_ITER {
        let m = golden_max(|m| data.objective(m, sigma), F::lit(MU1_BOUNDS.0), F::lit(MU1_BOUNDS.1), tol * F::lit(0.1));
        let m = if data.objective(m, sigma) >= current { m } else { mu };
        let ls = scan_then_golden(|ls: F| data.objective(m, ls.exp()), ls_lo, ls_hi, tol * F::lit(0.1));
        let s = if ls <= ls_lo {
            F::lit(SIGMA1_BOUNDS.0)
        } else if ls >= ls_hi {
            F::lit(SIGMA1_BOUNDS.1)
        } else {
            ls.exp()
        };
        let val = data.objective(m, s);
        if !(val >= current) {
            break;
        }
        let change = (m - mu).abs().max((s - sigma).abs());
        mu = m;
        sigma = s;
        current = val;
        if change < tol {
            break;
        }
    }
    (mu, sigma)
}

/// Best `alpha` for fixed `(mu, sigma)`. The objective is concave in `alpha`,
/// so the clamped stationary point is the maximizer.
fn best_alpha<F: Scalar>(stats: &SleepStats<F>, mu: F, sigma: F) -> F {
    let (a_min, a_max) = (F::lit(ALPHA_MIN), F::lit(ALPHA_MAX));
    if stats.zero_w <= F::zero() {
        return a_min;
    }
    let ln_c = ln_truncated_density(F::zero(), mu, sigma);
    if ln_c >= F::zero() {
        return a_min;
    }
    let c = ln_c.exp();
    let a = (stats.zero_w * (F::one() - c) - stats.pos_w * c) / ((F::one() - c) * (stats.zero_w + stats.pos_w));
    a.max(a_min).min(a_max)
}

/// The objective with `alpha` profiled out.
fn profile<F: Scalar>(stats: &SleepStats<F>, mu: F, ln_sigma: F) -> F {
    let sigma = ln_sigma.exp();
    stats.objective(best_alpha(stats, mu, sigma), mu, sigma)
}

/// Coarse scan of the profiled objective over `(mu, ln sigma)`.
fn profile_scan<F: Scalar>(stats: &SleepStats<F>) -> (F, F) {
    const N: usize = 48;
    let (ls_lo, ls_hi) = (F::lit(SIGMA1_BOUNDS.0).ln(), F::lit(SIGMA1_BOUNDS.1).ln());
    let (m_lo, m_hi) = (F::lit(MU1_BOUNDS.0), F::lit(MU1_BOUNDS.1));
    let mut best = (m_lo, ls_lo, F::neg_infinity());
    for i in 0..=N {
        let mu = m_lo + (m_hi - m_lo) * F::from_count(i) / F::from_count(N);
        for j in 0..=N {
            let ls = ls_lo + (ls_hi - ls_lo) * F::from_count(j) / F::from_count(N);
            let v = profile(stats, mu, ls);
            if v > best.2 {
                best = (mu, ls, v);
            }
        }
    }
    (best.0, best.1)
}

/// Bracketed coordinate ascent on the profiled objective; brackets shrink
/// when a sweep stops improving.
fn profile_polish<F: Scalar>(stats: &SleepStats<F>, start: (F, F)) -> SleepEmission<F> {
    let (ls_lo, ls_hi) = (F::lit(SIGMA1_BOUNDS.0).ln(), F::lit(SIGMA1_BOUNDS.1).ln());
    let (m_lo, m_hi) = (F::lit(MU1_BOUNDS.0), F::lit(MU1_BOUNDS.1));
    let (mut mu, mut ls) = (start.0.max(m_lo).min(m_hi), start.1.max(ls_lo).min(ls_hi));
    let mut current = profile(stats, mu, ls);
    let (mut hm, mut hs) = (F::lit(0.5), F::lit(0.5));
    let tol = F::lit(1e-12);
    for _ in 0..400 {
        let m = golden_max(|m| profile(stats, m, ls), (mu - hm).max(m_lo), (mu + hm).min(m_hi), tol);
        let m = if profile(stats, m, ls) > current { m } else { mu };
        let s = golden_max(|s| profile(stats, m, s), (ls - hs).max(ls_lo), (ls + hs).min(ls_hi), tol);
        let s = if profile(stats, m, s) > profile(stats, m, ls) { s } else { ls };
        let val = profile(stats, m, s);
        let moved = (m - mu).abs().max((s - ls).abs());
        if val > current {
            mu = m;
            ls = s;
            current = val;
        }
        if moved < F::lit(0.25) * hm.min(hs) {
            hm *= F::lit(0.5);
            hs *= F::lit(0.5);
        }
        if hm < F::lit(1e-10) {
            break;
        }
    }
    let sigma = if ls <= ls_lo { F::lit(SIGMA1_BOUNDS.0) } else if ls >= ls_hi { F::lit(SIGMA1_BOUNDS.1) } else { ls.exp() };
    SleepEmission { alpha: best_alpha(stats, mu, sigma), mu1: mu, sigma1: sigma }
}

/// Weighted maximum-likelihood update of the sleep emission.
///
/// Inner EM: exact zeros are split between the point mass and the truncated
/// density at zero in proportion to their contributions to `b1(0)`; `alpha`
/// becomes the weighted fraction assigned to the point mass, and
/// `(mu1, sigma1)` maximize the truncated-Gaussian likelihood of the rest.
/// `alpha` is clamped to `[1e-6, 1 - 1e-6]` and the scale search is bounded
/// below at `1e-3`.
///
/// EM crawls when `alpha` heads for a bound, and the objective can have
/// several modes, so the EM result is then polished, together with the
/// best point of a coarse scan, by coordinate ascent on the objective with
/// `alpha` profiled out in closed form. The best candidate is returned.
///
/// With only zeros carrying weight the optimum lies on the box boundary:
/// the truncated density at zero grows without bound as `mu1 → -∞` and
/// `sigma1 → 0`, so the zeros end up explained by the left tail at
/// `mu1 = -5`, `sigma1 = 1e-3` rather than by the point mass.
///
/// The returned parameters never score below `init` on the weighted
/// objective.
pub fn fit_sleep_weighted<F: Scalar>(obs: &[F], weights: &[F], init: &SleepEmission<F>) -> Result<SleepFit<F>> {
    let total = check_weighted(obs, weights, true)?;
    let stats = SleepStats::collect(obs, weights);
    let a_min = F::lit(ALPHA_MIN);
    let a_max = F::lit(ALPHA_MAX);
    let init_obj = stats.objective(init.alpha, init.mu1, init.sigma1);

    let mut alpha = init.alpha.max(a_min).min(a_max);
    let (mut mu, mut sigma) = clamp_to_box(init.mu1, init.sigma1);
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..INNER_MAX_ITER {
        iterations += 1;
        let cont0 = (-alpha).ln_1p() + ln_truncated_density(F::zero(), mu, sigma);
        let ln_a = alpha.ln();
        let r = (ln_a - ln_add_exp(ln_a, cont0)).exp();
        let new_alpha = (stats.zero_w * r / total).max(a_min).min(a_max);
        let data = TnData::with_zeros(&stats, stats.zero_w * (F::one() - r));
        let (new_mu, new_sigma) = if data.w > F::zero() { maximize_truncated(&data, (mu, sigma)) } else { (mu, sigma) };
        let change = (new_alpha - alpha).abs().max((new_mu - mu).abs()).max((new_sigma - sigma).abs());
        alpha = new_alpha;
        mu = new_mu;
        sigma = new_sigma;
        if change < F::lit(INNER_TOL) {
            converged = true;
            break;
        }
    }

    let em = SleepEmission { alpha, mu1: mu, sigma1: sigma.max(F::lit(SIGMA_FLOOR)) };
    let score = |e: &SleepEmission<F>| stats.objective(e.alpha, e.mu1, e.sigma1);
    let candidates = [
        profile_polish(&stats, (em.mu1, em.sigma1.ln())),
        profile_polish(&stats, profile_scan(&stats)),
        em,
        *init,
    ];
    let emission = candidates
        .into_iter()
        .fold(*init, |best, c| if score(&c) > score(&best) { c } else { best });
    debug_assert!(stats.objective(emission.alpha, emission.mu1, emission.sigma1) >= init_obj);
    let objective = sleep_objective(obs, weights, &emission);
    Ok(SleepFit { emission, objective, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort_sleep() -> SleepEmission<f64> {
        SleepEmission::new(0.731, 2.486, 1.248).unwrap()
    }

    #[test]
    fn zero_observation_with_near_one_alpha() {
        let p = SleepEmission::new(1.0 - 1e-12, 2.486, 1.248).unwrap();
        assert!(sleep_log_emission(0.0_f64, &p).unwrap().abs() < 1e-11);
    }

    #[test]
    fn zero_observation_standard_case() {
        // ln(0.5 + 0.5·φ(0)/Φ(0)), 40-digit oracle: -0.10653645079702144...
        let p = SleepEmission::new(0.5, 0.0, 1.0).unwrap();
        let v = sleep_log_emission(0.0_f64, &p).unwrap();
        assert!((v - (-0.106_536_450_797_021_44)).abs() < 1e-14, "{v}");
    }

    #[test]
    fn positive_observation_at_cohort_means() {
        // oracle: -2.430065440959887181...
        let v = sleep_log_emission(2.486, &cohort_sleep()).unwrap();
        assert!((v - (-2.430_065_440_959_887)).abs() < 1e-12, "{v}");
        // and b1(0) at the cohort means: -0.29691686988981780...
        let z = sleep_log_emission(0.0, &cohort_sleep()).unwrap();
        assert!((z - (-0.296_916_869_889_817_8)).abs() < 1e-12, "{z}");
    }

    #[test]
    fn wake_closed_forms() {
        let unit = WakeEmission::new(1.7, 1.0).unwrap();
        assert!((wake_log_emission(1.7_f64, &unit).unwrap() - (-0.918_938_533_204_672_7)).abs() < 1e-15);
        // -ln(0.866) - ln(2π)/2 = -0.77506816278497084...
        let w = WakeEmission::new(4.803, 0.866).unwrap();
        assert!((wake_log_emission(4.803_f64, &w).unwrap() - (-0.775_068_162_784_970_8)).abs() < 1e-14);
        for c in [0.1, 1.0, 3.3] {
            assert_eq!(wake_log_emission(4.803 + c, &w).unwrap(), wake_log_emission(4.803 - c, &w).unwrap());
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(sleep_log_emission(f64::NAN, &cohort_sleep()), Err(EmissionError::Domain(_))));
        assert!(matches!(sleep_log_emission(-0.5, &cohort_sleep()), Err(EmissionError::Domain(_))));
        let w = WakeEmission::new(4.8, 0.9).unwrap();
        assert!(matches!(wake_log_emission(f64::INFINITY, &w), Err(EmissionError::Domain(_))));
        assert!(SleepEmission::new(1.0, 2.0, 1.0).is_err());
        assert!(SleepEmission::new(0.5, 2.0, 1e-4).is_err());
        assert!(WakeEmission::new(0.5, 0.0).is_err());
    }

    #[test]
    fn wake_fit_small_cases() {
        let w = fit_wake_weighted(&[1.0, 3.0], &[1.0, 1.0]).unwrap();
        assert_eq!((w.mu2(), w.sigma2()), (2.0, 1.0));
        let w = fit_wake_weighted(&[1.0, 3.0], &[1.0, 0.0]).unwrap();
        assert_eq!((w.mu2(), w.sigma2()), (1.0, 1e-3));
        assert_eq!(fit_wake_weighted(&[1.0, 3.0], &[0.0, 0.0]), Err(EmissionError::DegenerateWeights));
        assert!(matches!(fit_wake_weighted(&[1.0], &[1.0, 1.0]), Err(EmissionError::LengthMismatch { .. })));
        assert_eq!(fit_wake_weighted(&[1.0], &[-1.0]), Err(EmissionError::BadWeight));
    }

    #[test]
    fn sleep_fit_all_zero_observations() {
        let obs = vec![0.0; 50];
        let weights: Vec<f64> = (0..50).map(|i| 0.2 + 0.01 * i as f64).collect();
        let init = SleepEmission::new(0.5, 2.0, 1.0).unwrap();
        let fit = fit_sleep_weighted(&obs, &weights, &init).unwrap();
        assert!(fit.objective >= sleep_objective(&obs, &weights, &init));
        // the zeros are fully explained, here by the left tail at the box corner
        assert!(sleep_log_emission(0.0, &fit.emission).unwrap().exp() >= 0.99);
        assert!((fit.emission.mu1() - MU1_BOUNDS.0).abs() < 1e-6);
        assert!((fit.emission.sigma1() - SIGMA_FLOOR).abs() < 1e-9);
        let stats = SleepStats::collect(&obs, &weights);
        let grid = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / 49.0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..50 {
            for j in 0..50 {
                for k in 0..50 {
                    let a = grid(ALPHA_MIN, ALPHA_MAX, i);
                    let v = stats.objective(a, grid(MU1_BOUNDS.0, MU1_BOUNDS.1, j), grid(SIGMA1_BOUNDS.0, SIGMA1_BOUNDS.1, k));
                    best = best.max(v);
                }
            }
        }
        assert!(fit.objective >= best - 1e-6, "{} < {best}", fit.objective);
    }

    #[test]
    fn sleep_fit_single_repeated_value_hits_sigma_floor() {
        let obs = vec![2.0; 40];
        let weights = vec![1.0; 40];
        let fit = fit_sleep_weighted(&obs, &weights, &cohort_sleep()).unwrap();
        assert_eq!(fit.emission.sigma1(), 1e-3);
        assert!((fit.emission.mu1() - 2.0).abs() < 1e-6);
        assert_eq!(fit.emission.alpha(), ALPHA_MIN);
    }

    #[test]
    fn sleep_fit_errors() {
        let init = cohort_sleep();
        assert_eq!(fit_sleep_weighted(&[0.0, 1.0], &[0.0, 0.0], &init), Err(EmissionError::DegenerateWeights));
        assert!(matches!(fit_sleep_weighted(&[-1.0], &[1.0], &init), Err(EmissionError::Domain(_))));
    }

    #[test]
    fn stats_objective_matches_direct_sum() {
        let obs = [0.0, 0.0, 0.7, 1.1, 2.3, 0.0, 3.9];
        let weights = [0.9, 0.1, 0.5, 1.0, 0.3, 0.7, 0.2];
        let p = cohort_sleep();
        let stats = SleepStats::collect(&obs, &weights);
        let a = stats.objective(p.alpha(), p.mu1(), p.sigma1());
        let b = sleep_objective(&obs, &weights, &p);
        assert!((a - b).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn truncated_mle_matches_untruncated_when_truncation_is_negligible() {
        // far from zero the truncated MLE is the plain weighted mean / sd
        let obs = [9.0, 9.5, 10.0, 10.5, 11.0];
        let data = TnData { w: 5.0, mean: 10.0, m2: obs.iter().map(|x| (x - 10.0_f64).powi(2)).sum() };
        let (mu, sigma) = maximize_truncated(&data, (8.0, 1.0));
        assert!((mu - 10.0).abs() < 1e-7, "{mu}");
        assert!((sigma - (2.5_f64 / 5.0).sqrt()).abs() < 1e-7, "{sigma}");
    }

    #[test]
    fn f32_emissions_track_f64() {
        let p32 = SleepEmission::new(0.731_f32, 2.486, 1.248).unwrap();
        let v32 = sleep_log_emission(1.5_f32, &p32).unwrap() as f64;
        let v64 = sleep_log_emission(1.5, &cohort_sleep()).unwrap();
        assert!((v32 - v64).abs() < 1e-5);
    }

    #[test]
    fn closed_form_alpha_beats_a_dense_scan() {
        let obs = [0.0, 0.0, 0.0, 1.2, 2.5, 3.1, 0.4, 0.0];
        let w = [1.0, 0.5, 0.8, 1.0, 0.3, 0.9, 0.7, 0.2];
        let stats = SleepStats::collect(&obs, &w);
        for (mu, sigma) in [(1.0, 1.0), (2.5, 0.7), (-2.0, 0.5), (6.0, 2.0)] {
            let a = best_alpha(&stats, mu, sigma);
            let at = stats.objective(a, mu, sigma);
            for i in 0..=1000 {
                let x = ALPHA_MIN + (ALPHA_MAX - ALPHA_MIN) * i as f64 / 1000.0;
                assert!(stats.objective(x, mu, sigma) <= at + 1e-12);
            }
        }
    }

    #[test]
    fn boundary_alpha_is_reached() {
        // zeros are rarer than the truncated density at 0 predicts, so the
        // point mass should vanish
        let mut obs = vec![0.0];
        obs.extend((1..40).map(|i| 0.05 * i as f64));
        let w = vec![1.0; obs.len()];
        let fit = fit_sleep_weighted(&obs, &w, &SleepEmission::new(0.5, 1.0, 1.0).unwrap()).unwrap();
        assert!(fit.emission.alpha() < 1e-3, "{:?}", fit.emission);
    }
}
