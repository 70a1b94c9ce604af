//! Bayesian psychophysics: Stevens-law observers drawn from a hierarchical
//! population, Weber/JND constraints, the recursive Gaussian update, MAP force
//! correction under a log-normal tissue prior, and simulated 2AFC experiments.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{invalid, Error, Result};

/// z-score of the 75 % point of a standard normal.
pub const Z75: f64 = 0.674_489_750_196_081_7;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Per-observer Stevens and Weber parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverParams {
    pub stevens_alpha: f64,
    pub stevens_beta: f64,
    /// σ², intensity units squared.
    pub sensory_var: f64,
    pub weber_fraction: f64,
}

impl ObserverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.stevens_alpha > 0.0 && self.stevens_alpha.is_finite()) {
            return Err(invalid("stevens_alpha", "must be positive"));
        }
        if !self.stevens_beta.is_finite() {
            return Err(invalid("stevens_beta", "must be finite"));
        }
        if !(self.sensory_var > 0.0 && self.sensory_var.is_finite()) {
            return Err(invalid("sensory_var", "must be positive"));
        }
        if !(self.weber_fraction > 0.0 && self.weber_fraction < 1.0) {
            return Err(invalid("weber_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn intensity(&self, force: f64) -> Result<f64> {
        stevens_map(force, self.stevens_alpha, self.stevens_beta)
    }
}

/// Population-level priors over observer parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperpriors {
    pub mu_alpha: f64,
    pub tau_alpha: f64,
    pub mu_beta: f64,
    pub tau_beta: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub kappa_mean: f64,
    pub tau_kappa: f64,
}

impl Default for Hyperpriors {
    fn default() -> Self {
        Self {
            mu_alpha: 0.0,
            tau_alpha: 0.25,
            mu_beta: 1.0,
            tau_beta: 0.15,
            a_sigma: 3.0,
            b_sigma: 0.5,
            kappa_mean: 0.1,
            tau_kappa: 0.02,
        }
    }
}

impl Hyperpriors {
    /// Scales may be zero (degenerate, point-mass priors); the inverse-gamma
    /// shape must exceed one so that σ² has a finite mean.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu_alpha", self.mu_alpha),
            ("mu_beta", self.mu_beta),
            ("kappa_mean", self.kappa_mean),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        for (name, v) in [("tau_alpha", self.tau_alpha), ("tau_beta", self.tau_beta), ("tau_kappa", self.tau_kappa)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be non-negative"));
            }
        }
        if !(self.a_sigma > 1.0 && self.a_sigma.is_finite()) {
            return Err(invalid("a_sigma", "must exceed 1"));
        }
        if !(self.b_sigma > 0.0 && self.b_sigma.is_finite()) {
            return Err(invalid("b_sigma", "must be positive"));
        }
        if !(self.kappa_mean > 0.0 && self.kappa_mean < 1.0) {
            return Err(invalid("kappa_mean", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Gaussian belief about the current force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPosterior {
    pub mean: f64,
    pub var: f64,
}

/// Log-normal prior on the true force plus Gaussian sensor noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TissuePrior {
    pub mu_f: f64,
    pub tau_f: f64,
    pub sigma_mech: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptResult {
    pub mean_intensity: f64,
    pub var_intensity: f64,
}

/// Stevens' power law `α·F^β`.
pub fn stevens_map(force: f64, alpha: f64, beta: f64) -> Result<f64> {
    if force < 0.0 || force.is_nan() {
        return Err(invalid("force", "Stevens mapping needs a non-negative magnitude"));
    }
    if force == 0.0 && beta > 0.0 {
        return Ok(0.0);
    }
    Ok(alpha * libm::pow(force, beta))
}

fn draw_observer<R: Rng + ?Sized>(h: &Hyperpriors, rng: &mut R) -> ObserverParams {
    let z: f64 = rng.sample(StandardNormal);
    let stevens_alpha = libm::exp(h.mu_alpha + h.tau_alpha * z);
    let z: f64 = rng.sample(StandardNormal);
    let stevens_beta = h.mu_beta + h.tau_beta * z;
    // InvGamma(a, b) = b / Gamma(a, 1)
    let g = Gamma::new(h.a_sigma, 1.0).expect("validated shape").sample(rng);
    let sensory_var = h.b_sigma / g;
    // Normal truncated to (0, 1) by rejection; the hyperprior keeps this
    // essentially always on the first draw.
    let mut weber_fraction = h.kappa_mean;
    for _ in 0..64 {
        let z: f64 = rng.sample(StandardNormal);
        let k = h.kappa_mean + h.tau_kappa * z;
        if k > 0.0 && k < 1.0 {
            weber_fraction = k;
            break;
        }
    }
    ObserverParams { stevens_alpha, stevens_beta, sensory_var, weber_fraction }
}

/// One observer from the hierarchical population, deterministic per seed.
pub fn sample_observer(h: &Hyperpriors, seed: u64) -> Result<ObserverParams> {
    h.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(draw_observer(h, &mut rng))
}

/// `n` observers from one seeded stream (posterior-predictive sample set).
pub fn sample_population(h: &Hyperpriors, n: usize, seed: u64) -> Result<Vec<ObserverParams>> {
    h.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| draw_observer(h, &mut rng)).collect())
}

/// The recursive update exactly as printed:
///
/// ```text
/// μ_t  = (σ_y²·μ_{t−1} + σ_f²·y_t) / (σ_y² + σ_f²)
/// σ_t² =  σ_y²·σ_f²               / (σ_y² + σ_f²)
/// ```
///
/// The previous variance does not enter; this is the steady-state form of the
/// textbook update rather than the textbook update itself.
pub fn recursive_update(post: GaussianPosterior, y: f64, sigma_f_sq: f64, sigma_y_sq: f64) -> GaussianPosterior {
    debug_assert!(sigma_f_sq > 0.0 && sigma_y_sq > 0.0);
    let total = sigma_y_sq + sigma_f_sq;
    GaussianPosterior {
        mean: (sigma_y_sq * post.mean + sigma_f_sq * y) / total,
        var: sigma_y_sq * sigma_f_sq / total,
    }
}

impl TissuePrior {
    pub fn validate(&self) -> Result<()> {
        if !self.mu_f.is_finite() {
            return Err(invalid("mu_f", "must be finite"));
        }
        if !(self.tau_f > 0.0) {
            return Err(invalid("tau_f", "must be positive"));
        }
        if !(self.sigma_mech > 0.0 && self.sigma_mech.is_finite()) {
            return Err(invalid("sigma_mech", "must be positive"));
        }
        Ok(())
    }

    /// Unnormalised log posterior of the true force.
    pub fn log_posterior(&self, f_obs: f64, f: f64) -> f64 {
        let r = (f_obs - f) / self.sigma_mech;
        let l = (libm::log(f) - self.mu_f) / self.tau_f;
        -0.5 * r * r - libm::log(f) - 0.5 * l * l
    }

    pub fn gradient(&self, f_obs: f64, f: f64) -> f64 {
        let s2 = self.sigma_mech * self.sigma_mech;
        let t2 = self.tau_f * self.tau_f;
        (f_obs - f) / s2 - 1.0 / f - (libm::log(f) - self.mu_f) / (t2 * f)
    }

    fn curvature(&self, f: f64) -> f64 {
        let s2 = self.sigma_mech * self.sigma_mech;
        let t2 = self.tau_f * self.tau_f;
        -1.0 / s2 + (1.0 - (1.0 - (libm::log(f) - self.mu_f)) / t2) / (f * f)
    }
}

/// Posterior mode of the true force given one noisy observation.
///
/// The log-normal density carries a `1/F` factor, so with a very wide prior
/// the posterior is unbounded as `F → 0`; that spike is not a useful force
/// estimate.  The returned value is therefore the highest *interior*
/// stationary maximum inside the bracket `(1e-9, F_obs + 10σ)` (grown if the
/// gradient is still positive at its top), located by a log-spaced gradient
/// scan and polished by bisection-safeguarded Newton.  Only when no interior
/// maximum exists does the grid argmax come back.
pub fn map_estimate(f_obs: f64, prior: &TissuePrior) -> Result<f64> {
    if !f_obs.is_finite() {
        return Err(invalid("f_obs", "must be finite"));
    }
    prior.validate()?;
    const LO: f64 = 1e-9;
    let mut hi = (f_obs + 10.0 * prior.sigma_mech).max(10.0 * LO);
    let mut grown = 0;
    while prior.gradient(f_obs, hi) > 0.0 {
        hi *= 2.0;
        grown += 1;
        if grown > 200 {
            return Err(Error::NoConvergence("posterior mode beyond any finite bracket"));
        }
    }

    const N: usize = 4096;
    let ratio = libm::log(hi / LO) / (N - 1) as f64;
    let at = |i: usize| if i == N - 1 { hi } else { LO * libm::exp(ratio * i as f64) };

    let mut best: Option<(f64, f64)> = None;
    let mut grid_best = (LO, f64::NEG_INFINITY);
    let mut prev_f = at(0);
    let mut prev_g = prior.gradient(f_obs, prev_f);
    for i in 0..N {
        let f = at(i);
        let lp = prior.log_posterior(f_obs, f);
        if lp > grid_best.1 {
            grid_best = (f, lp);
        }
        if i == 0 {
            continue;
        }
        let g = prior.gradient(f_obs, f);
        if prev_g > 0.0 && g <= 0.0 {
            let mode = polish(prior, f_obs, prev_f, f)?;
            let lp = prior.log_posterior(f_obs, mode);
            if best.is_none_or(|(_, b)| lp > b) {
                best = Some((mode, lp));
            }
        }
        prev_f = f;
        prev_g = g;
    }
    Ok(best.map_or(grid_best.0, |(f, _)| f))
}

fn polish(prior: &TissuePrior, f_obs: f64, mut a: f64, mut b: f64) -> Result<f64> {
    let mut x = 0.5 * (a + b);
    for _ in 0..300 {
        let g = prior.gradient(f_obs, x);
        if g.abs() <= 1e-10 {
            return Ok(x);
        }
        if g > 0.0 {
            a = x;
        } else {
            b = x;
        }
        let h = prior.curvature(x);
        let newton = x - g / h;
        x = if h < 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if b - a <= 4.0 * f64::EPSILON * x {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence("MAP Newton iteration"))
}

/// Monte-Carlo mean and variance of `α_j·F^{β_j}` over an observer sample set.
pub fn perceived_force(force: f64, samples: &[ObserverParams]) -> Result<PerceptResult> {
    if samples.is_empty() {
        return Err(Error::Empty("observer samples"));
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, o) in samples.iter().enumerate() {
        let s = o.intensity(force)?;
        let delta = s - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (s - mean);
    }
    Ok(PerceptResult { mean_intensity: mean, var_intensity: (m2 / samples.len() as f64).max(0.0) })
}

/// Hold the previous output while the change stays below the JND.
pub fn weber_deadband(prev: f64, new: f64, kappa: f64) -> f64 {
    if prev == 0.0 {
        return new;
    }
    if (new - prev).abs() < kappa * prev.abs() {
        prev
    } else {
        new
    }
}

/// Running deadband over a sequence; the first sample passes through.
pub fn deadband_sequence(forces: &[f64], kappa: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(forces.len());
    for &f in forces {
        let next = match out.last() {
            Some(&prev) => weber_deadband(prev, f, kappa),
            None => f,
        };
        out.push(next);
    }
    out
}

/// One row of a psychometric table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsychometricRow {
    pub delta: f64,
    pub n: usize,
    pub n_correct: usize,
    pub p_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsychometricTable {
    pub base_force: f64,
    pub rows: Vec<PsychometricRow>,
}

/// Cumulative-Gaussian fit `P(correct) = Φ(Δ/s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsychometricFit {
    pub scale: f64,
    /// Force increment at 75 % correct.
    pub jnd: f64,
    pub weber_fraction: f64,
}

/// Intensity-noise coefficient giving a 75 %-correct point at `Δ = κ·F` in
/// 2AFC: the noise SD on an interval is `c·S` with `c = β·κ / (√2·z₇₅)`.
pub fn weber_noise_coefficient(o: &ObserverParams) -> f64 {
    (o.stevens_beta * o.weber_fraction).abs() / (core::f64::consts::SQRT_2 * Z75)
}

/// One 2AFC presentation: is the comparison judged stronger than the standard?
pub fn judge_stronger<R: Rng + ?Sized>(o: &ObserverParams, standard: f64, comparison: f64, rng: &mut R) -> Result<bool> {
    let c = weber_noise_coefficient(o);
    let s1 = o.intensity(standard)?;
    let s2 = o.intensity(comparison)?;
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let n1 = s1 + c * s1.abs() * z1;
    let n2 = s2 + c * s2.abs() * z2;
    Ok(if n1 == n2 { rng.random_bool(0.5) } else { n2 > n1 })
}

/// One 2AFC presentation scored against the physical ordering.
pub fn two_afc<R: Rng + ?Sized>(o: &ObserverParams, standard: f64, comparison: f64, rng: &mut R) -> Result<bool> {
    Ok(judge_stronger(o, standard, comparison, rng)? == (comparison >= standard))
}

/// Two-interval forced choice at each increment in `deltas`.
pub fn simulate_jnd_experiment(
    base_force: f64,
    deltas: &[f64],
    observer: &ObserverParams,
    n_trials_per_delta: usize,
    seed: u64,
) -> Result<PsychometricTable> {
    if !(base_force > 0.0 && base_force.is_finite()) {
        return Err(invalid("base_force", "must be positive"));
    }
    if n_trials_per_delta == 0 {
        return Err(invalid("n_trials_per_delta", "need at least one trial"));
    }
    observer.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let comparison = base_force + delta.abs();
        let mut n_correct = 0;
        for _ in 0..n_trials_per_delta {
            if two_afc(observer, base_force, comparison, &mut rng)? {
                n_correct += 1;
            }
        }
        rows.push(PsychometricRow {
            delta: delta.abs(),
            n: n_trials_per_delta,
            n_correct,
            p_hat: n_correct as f64 / n_trials_per_delta as f64,
        });
    }
    Ok(PsychometricTable { base_force, rows })
}

fn psychometric_nll(rows: &[PsychometricRow], scale: f64) -> f64 {
    let mut nll = 0.0;
    for r in rows {
        let p = normal_cdf(r.delta / scale).clamp(1e-12, 1.0 - 1e-12);
        nll -= r.n_correct as f64 * libm::log(p) + (r.n - r.n_correct) as f64 * libm::log(1.0 - p);
    }
    nll
}

/// Maximum-likelihood cumulative-Gaussian fit (golden section on log s).
pub fn fit_psychometric(table: &PsychometricTable) -> Result<PsychometricFit> {
    let dmax = table.rows.iter().map(|r| r.delta).fold(0.0, f64::max);
    if dmax <= 0.0 {
        return Err(Error::Empty("psychometric table has no positive increments"));
    }
    let (mut a, mut b) = (libm::log(dmax * 1e-4), libm::log(dmax * 1e4));
    let phi = 0.5 * (libm::sqrt(5.0) - 1.0);
    let f = |ls: f64| psychometric_nll(&table.rows, libm::exp(ls));
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let scale = libm::exp(0.5 * (a + b));
    let jnd = Z75 * scale;
    Ok(PsychometricFit { scale, jnd, weber_fraction: jnd / table.base_force })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stevens_examples() {
        assert_eq!(stevens_map(7.0, 1.0, 1.0).unwrap(), 7.0);
        assert_eq!(stevens_map(4.0, 1.0, 0.5).unwrap(), 2.0);
        assert_eq!(stevens_map(0.0, 2.0, 0.7).unwrap(), 0.0);
        assert!(stevens_map(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn deadband_examples() {
        assert_eq!(weber_deadband(1.0, 1.05, 0.1), 1.0);
        assert_eq!(weber_deadband(1.0, 1.2, 0.1), 1.2);
        assert_eq!(weber_deadband(0.0, 0.3, 0.1), 0.3);
    }

    #[test]
    fn normal_cdf_landmarks() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(Z75) - 0.75).abs() < 1e-12);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }
}
