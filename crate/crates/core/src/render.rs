//! The per-tick force pipeline.
//!
//! ```text
//! measured state ─▶ (track) ─▶ (Koopman lead) ─▶ F_raw ─▶ + C·r ─▶ low-pass ─▶ Padé delay
//! ```
//!
//! The raw baseline is a spring–damper about a rest position.  The adjusted
//! condition predicts the state a few ticks ahead with the lifted model and
//! adds `C` times the lifted residual rate; the perceptual condition first
//! tracks the state with the recursive Gaussian update, using the Koopman
//! one-step prediction as prior mean.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::StateVector;
use crate::error::{invalid, Error, Result};
use crate::koopman::KoopmanModel;
use crate::percept::{recursive_update, GaussianPosterior};

/// `−K_f(x − x₀) − B_f·ẋ` for matrix gains.
pub fn raw_force(x: &[f64], x0: &[f64], xdot: &[f64], kf: &DMatrix<f64>, bf: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = x.len();
    if x0.len() != n || xdot.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len().min(xdot.len()) });
    }
    if kf.shape() != (n, n) || bf.shape() != (n, n) {
        return Err(Error::DimensionMismatch { expected: n, got: kf.nrows() });
    }
    let dx = DVector::from_iterator(n, x.iter().zip(x0).map(|(a, b)| a - b));
    let v = DVector::from_column_slice(xdot);
    Ok(-(kf * dx) - bf * v)
}

/// Scalar spring–damper force.
#[inline]
pub fn raw_force_1d(x: f64, x0: f64, xdot: f64, kf: f64, bf: f64) -> f64 {
    -kf * (x - x0) - bf * xdot
}

/// Lifted residual rate `(Kφ + Bu − φ_next)/dt`.
pub fn residual_rate(model: &KoopmanModel, phi: &[f64], u: &[f64], phi_next: &[f64]) -> Result<Vec<f64>> {
    let n = model.n_lifted();
    if phi.len() != n || phi_next.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: phi.len().min(phi_next.len()) });
    }
    if u.len() != model.n_inputs() {
        return Err(Error::DimensionMismatch { expected: model.n_inputs(), got: u.len() });
    }
    let mut r = vec![0.0; n];
    model.step_into(phi, u, &mut r);
    for (ri, next) in r.iter_mut().zip(phi_next) {
        *ri = (*ri - next) / model.dt;
    }
    Ok(r)
}

/// `F_adj = F_raw + C·r` for a scalar force and a row of correction gains.
pub fn corrected_force(
    f_raw: f64,
    model: &KoopmanModel,
    phi: &[f64],
    u: &[f64],
    phi_next: &[f64],
    correction: &[f64],
) -> Result<f64> {
    let r = residual_rate(model, phi, u, phi_next)?;
    if correction.len() != r.len() {
        return Err(Error::DimensionMismatch { expected: r.len(), got: correction.len() });
    }
    Ok(f_raw + dot(correction, &r))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// First-order low-pass `1/(1 + tc·s)`, zero-order-hold discretised.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterState {
    pub y: f64,
}

pub fn lowpass_step(state: FilterState, input: f64, dt: f64, time_constant: f64) -> (FilterState, f64) {
    let a = 1.0 - libm::exp(-dt / time_constant);
    let y = state.y + a * (input - state.y);
    (FilterState { y }, y)
}

/// First-order Padé delay `(1 − τs/2)/(1 + τs/2)` via the bilinear transform.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DelayState {
    pub prev_input: f64,
    pub prev_output: f64,
}

pub fn pade_delay_step(state: DelayState, input: f64, dt: f64, tau: f64) -> (DelayState, f64) {
    if tau == 0.0 {
        return (DelayState { prev_input: input, prev_output: input }, input);
    }
    let a = tau / dt;
    let y = ((1.0 - a) * input + (1.0 + a) * state.prev_input - (1.0 - a) * state.prev_output) / (1.0 + a);
    (DelayState { prev_input: input, prev_output: y }, y)
}

/// Result of the iterative force computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub force: Vec<f64>,
    pub iterations: usize,
    /// ‖e_t‖ for t = 0..=iterations.
    pub errors: Vec<f64>,
}

/// Iterate `F ← F + g·(F_d − F)` until `‖F_d − F‖ ≤ tol`.
///
/// The recursion is carried in error coordinates, `e ← (1 − g)·e`, so the
/// recorded errors are `(1 − g)ᵗ‖e₀‖` up to one rounding per step instead of
/// accumulating cancellation from `F_d − F`.
pub fn converge_force(f0: &[f64], desired: &[f64], gain: f64, tol: f64) -> Result<Convergence> {
    if f0.len() != desired.len() {
        return Err(Error::DimensionMismatch { expected: desired.len(), got: f0.len() });
    }
    if !(gain > 0.0 && gain <= 1.0) {
        return Err(invalid("convergence_gain", "must lie in (0, 1]"));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let mut e: Vec<f64> = desired.iter().zip(f0).map(|(d, f)| d - f).collect();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(invalid("f0", "forces must be finite"));
    }
    let norm = |e: &[f64]| libm::sqrt(e.iter().map(|v| v * v).sum::<f64>());
    let mut errors = vec![norm(&e)];
    let shrink = 1.0 - gain;
    while *errors.last().unwrap() > tol {
        for v in e.iter_mut() {
            *v *= shrink;
        }
        errors.push(norm(&e));
    }
    let force = desired.iter().zip(&e).map(|(d, e)| d - e).collect();
    Ok(Convergence { force, iterations: errors.len() - 1, errors })
}

/// Which of the three compared pipelines a session runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    /// Spring–damper baseline on the measured state.
    Raw,
    /// Koopman lead prediction plus residual correction.
    Adjusted,
    /// Bayesian state tracking in front of the adjusted pipeline.
    Perceptual,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Raw, Condition::Adjusted, Condition::Perceptual];

    pub fn label(self) -> &'static str {
        match self {
            Condition::Raw => "raw",
            Condition::Adjusted => "adjusted",
            Condition::Perceptual => "perceptual",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl core::fmt::Display for Condition {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

impl core::str::FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" | "baseline" => Ok(Condition::Raw),
            "adjusted" | "adj" | "koopman" => Ok(Condition::Adjusted),
            "perceptual" | "perc" => Ok(Condition::Perceptual),
            _ => Err(invalid("condition", "expected raw, adjusted or perceptual")),
        }
    }
}

/// Gains and time constants for one single-axis rendering session.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub condition: Condition,
    /// K_f, N/m
    pub stiffness: f64,
    /// B_f, N·s/m
    pub damping: f64,
    /// x₀, m
    pub rest_position: f64,
    /// One row of C, one entry per lifted observable.
    pub correction: Vec<f64>,
    pub filter_time_constant: f64,
    pub latency_tau: f64,
    pub dt: f64,
    /// Per-tick step toward the stage output; 1 passes it straight through.
    pub convergence_gain: f64,
    /// Ticks of Koopman look-ahead.
    pub lead: usize,
    /// Steady-state gain g = σ_f²/(σ_f² + σ_y²) of the state tracker, per
    /// channel (position, velocity, deformation).
    pub tracking_gain: [f64; 3],
    /// Sensor noise SD per state channel; channels with zero noise are not tracked.
    pub measurement_sd: [f64; 3],
    /// Innovation gate in standard deviations: a measurement further than
    /// this from the tracker's prediction on any channel re-seeds the tracker
    /// from the measurement.  `f64::INFINITY` disables the gate.
    pub innovation_gate: f64,
    /// Tool mass for the nominal successor state in the residual.
    pub tool_mass: f64,
}

impl RenderConfig {
    /// Pass-through pipeline around a spring–damper.
    pub fn spring_damper(stiffness: f64, damping: f64, rest_position: f64, n_lifted: usize) -> Self {
        Self {
            condition: Condition::Raw,
            stiffness,
            damping,
            rest_position,
            correction: vec![0.0; n_lifted],
            filter_time_constant: 5.0e-3,
            latency_tau: 4.3e-3,
            dt: 1.0e-3,
            convergence_gain: 1.0,
            lead: 0,
            tracking_gain: [1.0; 3],
            measurement_sd: [0.0; 3],
            innovation_gate: 6.0,
            tool_mass: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness >= 0.0) {
            return Err(invalid("stiffness", "K_f must be positive semidefinite"));
        }
        if !(self.damping >= 0.0) {
            return Err(invalid("damping", "B_f must be positive semidefinite"));
        }
        if !(self.filter_time_constant >= 0.0) {
            return Err(invalid("filter_time_constant", "must be non-negative"));
        }
        if !(self.latency_tau >= 0.0) {
            return Err(invalid("latency_tau", "must be non-negative"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if !(self.convergence_gain > 0.0 && self.convergence_gain <= 1.0) {
            return Err(invalid("convergence_gain", "must lie in (0, 1]"));
        }
        if self.tracking_gain.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
            return Err(invalid("tracking_gain", "must lie in (0, 1]"));
        }
        if !(self.innovation_gate > 0.0) {
            return Err(invalid("innovation_gate", "must be positive"));
        }
        if !(self.tool_mass > 0.0) {
            return Err(invalid("tool_mass", "must be positive"));
        }
        if self.correction.iter().any(|c| !c.is_finite()) {
            return Err(invalid("correction", "must be finite"));
        }
        Ok(())
    }

    fn raw(&self, s: &[f64; 3]) -> f64 {
        raw_force_1d(s[0], self.rest_position, s[1], self.stiffness, self.damping)
    }
}

/// Everything one tick produced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceSample {
    pub tick_index: usize,
    pub f_raw: f64,
    pub f_adj: f64,
    pub f_filt: f64,
    pub f_delayed: f64,
    /// Wall-clock seconds spent in the tick (zero with [`NullClock`]).
    pub compute_time: f64,
}

/// Monotone seconds source for timing ticks.
pub trait TickClock {
    fn now(&self) -> f64;
}

/// Clock that never advances.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullClock;

impl TickClock for NullClock {
    fn now(&self) -> f64 {
        0.0
    }
}

/// Single-owner state of one rendering session.
#[derive(Debug, Clone)]
pub struct RenderSession<'m> {
    config: RenderConfig,
    model: &'m KoopmanModel,
    contact: fn(&StateVector) -> bool,
    filter: FilterState,
    delay: DelayState,
    command: f64,
    tick: usize,
    estimate: Option<[f64; 3]>,
    prev_input: f64,
    // scratch
    phi: Vec<f64>,
    phi_next: Vec<f64>,
    phi_nom: Vec<f64>,
}

impl<'m> RenderSession<'m> {
    pub fn new(config: RenderConfig, model: &'m KoopmanModel, contact: fn(&StateVector) -> bool) -> Result<Self> {
        config.validate()?;
        let n = model.n_lifted();
        if model.dictionary.n_state() != 3 || model.n_inputs() != 1 {
            return Err(Error::DimensionMismatch { expected: 3, got: model.dictionary.n_state() });
        }
        if config.correction.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: config.correction.len() });
        }
        Ok(Self {
            config,
            model,
            contact,
            filter: FilterState::default(),
            delay: DelayState::default(),
            command: 0.0,
            tick: 0,
            estimate: None,
            prev_input: 0.0,
            phi: vec![0.0; n],
            phi_next: vec![0.0; n],
            phi_nom: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &RenderConfig {
        &self.config
    }

    /// Current tracked state (perceptual condition only).
    pub fn estimate(&self) -> Option<StateVector> {
        self.estimate.map(|e| StateVector::new(e[0], e[1], e[2]))
    }

    /// Back to the start-of-session state.
    pub fn reset(&mut self) {
        self.filter = FilterState::default();
        self.delay = DelayState::default();
        self.command = 0.0;
        self.tick = 0;
        self.estimate = None;
        self.prev_input = 0.0;
    }

    pub fn tick(&mut self, measured: &StateVector, input: f64) -> Result<ForceSample> {
        self.tick_timed(measured, input, &NullClock)
    }

    /// One pipeline tick on the measured state under the operator command.
    pub fn tick_timed(&mut self, measured: &StateVector, input: f64, clock: &dyn TickClock) -> Result<ForceSample> {
        let start = clock.now();
        let y = measured.to_array();
        if y.iter().any(|v| !v.is_finite()) || !input.is_finite() {
            return Err(Error::NonFiniteState { step: self.tick });
        }
        let (f_raw, f_adj) = match self.config.condition {
            Condition::Raw => {
                let f = if (self.contact)(measured) { self.config.raw(&y) } else { 0.0 };
                (f, f)
            }
            Condition::Adjusted => self.koopman_force(y, input),
            Condition::Perceptual => {
                let z = self.track(y);
                self.koopman_force(z, input)
            }
        };
        self.prev_input = input;
        if !(f_raw.is_finite() && f_adj.is_finite()) {
            return Err(Error::NonFiniteState { step: self.tick });
        }

        let c = &self.config;
        self.command += c.convergence_gain * (f_adj - self.command);
        let f_filt = if c.filter_time_constant > 0.0 {
            let (st, out) = lowpass_step(self.filter, self.command, c.dt, c.filter_time_constant);
            self.filter = st;
            out
        } else {
            self.command
        };
        let (st, f_delayed) = pade_delay_step(self.delay, f_filt, c.dt, c.latency_tau);
        self.delay = st;

        let sample = ForceSample {
            tick_index: self.tick,
            f_raw,
            f_adj,
            f_filt,
            f_delayed,
            compute_time: clock.now() - start,
        };
        self.tick += 1;
        Ok(sample)
    }

    /// Per-channel recursive update around the lifted one-step prediction.
    fn track(&mut self, y: [f64; 3]) -> [f64; 3] {
        let Some(prev) = self.estimate else {
            self.estimate = Some(y);
            return y;
        };
        let dict = &self.model.dictionary;
        dict.lift_into(&prev, &mut self.phi);
        self.model.step_into(&self.phi, &[self.prev_input], &mut self.phi_next);
        let mut prior = [0.0; 3];
        dict.project(&self.phi_next, &mut prior);

        let mut est = [0.0; 3];
        for i in 0..3 {
            let g = self.config.tracking_gain[i];
            let sd = self.config.measurement_sd[i];
            est[i] = if sd > 0.0 && g < 1.0 {
                let sy2 = sd * sd;
                let sf2 = g / (1.0 - g) * sy2;
                let spread = libm::sqrt(sy2 + sf2);
                if !((y[i] - prior[i]).abs() <= self.config.innovation_gate * spread) {
                    // lost track: start over from the measurement
                    self.estimate = Some(y);
                    return y;
                }
                let post = GaussianPosterior { mean: prior[i], var: sf2 };
                recursive_update(post, y[i], sf2, sy2).mean
            } else {
                y[i]
            };
        }
        self.estimate = Some(est);
        est
    }

    fn koopman_force(&mut self, z: [f64; 3], input: f64) -> (f64, f64) {
        let model = self.model;
        let dict = &model.dictionary;
        dict.lift_into(&z, &mut self.phi);
        for _ in 0..self.config.lead {
            model.step_into(&self.phi, &[input], &mut self.phi_next);
            core::mem::swap(&mut self.phi, &mut self.phi_next);
        }
        let mut xs = [0.0; 3];
        dict.project(&self.phi, &mut xs);
        let sv = StateVector::new(xs[0], xs[1], xs[2]);
        if !(self.contact)(&sv) {
            return (0.0, 0.0);
        }
        let (r, f_raw) = nominal_residual(model, &self.config, &xs, input, &mut self.phi, &mut self.phi_next, &mut self.phi_nom);
        (f_raw, f_raw + dot(&self.config.correction, r))
    }
}

/// Lifted residual rate of the Koopman step against the nominal free-tool
/// successor under the raw force, and that raw force.  Leaves the residual in
/// `next`, which is returned.
pub(crate) fn nominal_residual<'a>(
    model: &KoopmanModel,
    config: &RenderConfig,
    xs: &[f64; 3],
    input: f64,
    phi: &mut [f64],
    next: &'a mut [f64],
    nom_buf: &mut [f64],
) -> (&'a [f64], f64) {
    let dt = model.dt;
    let f_raw = config.raw(xs);
    let v = xs[1] + dt * (input + f_raw) / config.tool_mass;
    let nominal = [xs[0] + dt * v, v, xs[2]];
    let dict = &model.dictionary;
    dict.lift_into(xs, phi);
    model.step_into(phi, &[input], next);
    dict.lift_into(&nominal, nom_buf);
    for (r, p) in next.iter_mut().zip(nom_buf.iter()) {
        *r = (*r - p) / dt;
    }
    (next, f_raw)
}

/// Residual regressors for fitting `C`: row per sample.
pub fn residual_features(model: &KoopmanModel, config: &RenderConfig, state: &StateVector, input: f64) -> (Vec<f64>, f64) {
    let n = model.n_lifted();
    let (mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (r, f) = nominal_residual(model, config, &state.to_array(), input, &mut a, &mut b, &mut c);
    (r.to_vec(), f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_force_examples() {
        assert_eq!(raw_force_1d(0.01, 0.0, 0.0, 100.0, 0.0), -1.0);
        assert_eq!(raw_force_1d(0.3, 0.3, 0.0, 100.0, 7.0), 0.0);
        let extra = raw_force_1d(0.01, 0.0, 0.1, 100.0, 2.0) - raw_force_1d(0.01, 0.0, 0.0, 100.0, 2.0);
        assert!((extra + 0.2).abs() < 1e-15);
    }

    #[test]
    fn convergence_examples() {
        let c = converge_force(&[0.0], &[1.0], 0.5, 0.2).unwrap();
        assert_eq!(c.errors[3], 0.125);
        assert_eq!(converge_force(&[3.0], &[1.0], 1.0, 1e-12).unwrap().iterations, 1);
        assert_eq!(converge_force(&[0.0], &[1.0], 0.5, 1e-3).unwrap().iterations, 10);
    }

    #[test]
    fn tau_zero_is_pass_through() {
        let (_, y) = pade_delay_step(DelayState::default(), 2.5, 1e-3, 0.0);
        assert_eq!(y, 2.5);
    }
}
