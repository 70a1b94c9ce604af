//! Ground-truth plants for the three canonical tasks.
//!
//! Every plant is a single-axis tool of mass `m` pressing on a task-specific
//! environment.  The state is `(position, velocity, deformation)` where
//! `deformation` is the environment's internal coordinate: tissue indentation
//! for palpation, wall penetration for the rigid wall, and cut depth for
//! milling.
//!
//! # Integration
//!
//! One tick advances the tool with an implicit (incremental-potential) Euler
//! step: positions and contact forces are evaluated at the end of the step,
//! while the operator command is held over the step.  For palpation and the
//! wall the step is the minimiser of
//!
//! ```text
//! m/(2h²)·(x − x₀ − h·v₀)² − u·x + U(x, δ) + D(δ − δ₀)
//! ```
//!
//! with a convex potential `U` and a quadratic dissipation term `D`.  That
//! makes total mechanical energy non-increasing under zero input for any step
//! size, which the fully explicit or symplectic variants cannot promise once
//! the tissue damper sits in series with the contact spring.  Milling updates
//! its cut depth explicitly from the end-of-step contact force.

use core::fmt;
use core::str::FromStr;

use alloc::string::ToString;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Task identifier for the three canonical scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskId {
    /// T1 — soft tissue palpation with graded stiffness.
    Palpation,
    /// T2 — abrupt contact with a stiff wall.
    RigidWall,
    /// T3 — incremental bone milling.
    BoneMilling,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::Palpation, TaskId::RigidWall, TaskId::BoneMilling];

    pub fn label(self) -> &'static str {
        match self {
            TaskId::Palpation => "T1",
            TaskId::RigidWall => "T2",
            TaskId::BoneMilling => "T3",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "t1" | "palpation" | "t1_palpation" => Ok(TaskId::Palpation),
            "t2" | "wall" | "rigid_wall" | "t2_rigid_wall" => Ok(TaskId::RigidWall),
            "t3" | "milling" | "bone_milling" | "t3_bone_milling" => Ok(TaskId::BoneMilling),
            _ => Err(Error::UnknownTask(s.to_string())),
        }
    }
}

/// Tool state along the interaction axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    /// m
    pub position: f64,
    /// m/s
    pub velocity: f64,
    /// m
    pub deformation: f64,
}

impl StateVector {
    pub const DIM: usize = 3;

    pub fn new(position: f64, velocity: f64, deformation: f64) -> Self {
        Self { position, velocity, deformation }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.position, self.velocity, self.deformation]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2])
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite() && self.deformation.is_finite()
    }
}

/// Cubic-hardening Kelvin–Voigt tissue behind a contact spring.
///
/// The tissue element obeys `b·δ̇ = F_c − k₁δ − k₂δ³` with
/// `F_c = k_c·(x − δ)⁺` the force transmitted through the tool tip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PalpationParams {
    /// Surface elastic modulus, Pa.
    pub modulus_surface: f64,
    /// Modulus reached at `grading_depth`, Pa.
    pub modulus_deep: f64,
    /// Flat-punch contact radius used to turn moduli into N/m.
    pub contact_radius: f64,
    /// Indentation at which the secant stiffness reaches `modulus_deep`.
    pub grading_depth: f64,
    /// Tissue damping b, N·s/m.
    pub damping: f64,
    /// Tool-tip contact stiffness k_c, N/m.
    pub contact_stiffness: f64,
}

impl Default for PalpationParams {
    fn default() -> Self {
        Self {
            modulus_surface: 5.0e3,
            modulus_deep: 50.0e3,
            contact_radius: 2.0e-3,
            grading_depth: 10.0e-3,
            damping: 10.0,
            contact_stiffness: 300.0,
        }
    }
}

impl PalpationParams {
    /// Linear tissue stiffness k₁ = 2·E*·a with E* = E/(1−ν²), ν = ½.
    pub fn k1(&self) -> f64 {
        8.0 / 3.0 * self.modulus_surface * self.contact_radius
    }

    /// Cubic coefficient chosen so that the secant stiffness k₁ + k₂δ²
    /// equals the deep modulus' stiffness at `grading_depth`.
    pub fn k2(&self) -> f64 {
        let ratio = self.modulus_deep / self.modulus_surface - 1.0;
        self.k1() * ratio / (self.grading_depth * self.grading_depth)
    }

    /// Tissue indentation at which the tool held at `x` is in equilibrium.
    pub fn equilibrium_deformation(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let (k1, k2, kc) = (self.k1(), self.k2(), self.contact_stiffness);
        let (mut lo, mut hi) = (0.0, x);
        for _ in 0..200 {
            let d = 0.5 * (lo + hi);
            if kc * (x - d) > k1 * d + k2 * d * d * d {
                lo = d;
            } else {
                hi = d;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Unilateral spring–damper wall at `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallParams {
    pub stiffness: f64,
    pub damping: f64,
}

impl Default for WallParams {
    fn default() -> Self {
        Self { stiffness: 2.0e3, damping: 20.0 }
    }
}

/// Bone milling: a stiff contact against the current cut floor `d`, and a
/// floor that recedes at `ḋ = F_c / (c·ρ·(d₀ + d))`.
///
/// Equivalently the cutting resistance is `F = c·ρ·(d₀ + d)·ḋ`: linear in the
/// feed rate at fixed depth, linear in density, growing with depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MillingParams {
    pub contact_stiffness: f64,
    /// g/cm³
    pub density: f64,
    /// Cutting coefficient c, N·s/m² per (g/cm³).
    pub cutting_coefficient: f64,
    /// Engagement depth d₀ present at first touch, m.
    pub depth_offset: f64,
}

impl Default for MillingParams {
    fn default() -> Self {
        Self {
            contact_stiffness: 1.0e4,
            density: 1.8,
            cutting_coefficient: 2.8e5,
            depth_offset: 1.0e-3,
        }
    }
}

impl MillingParams {
    /// Cutting resistance at depth `d` and feed rate `feed`.
    pub fn resistance(&self, depth: f64, feed: f64) -> f64 {
        self.cutting_coefficient * self.density * (self.depth_offset + depth) * feed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskParams {
    Palpation(PalpationParams),
    RigidWall(WallParams),
    BoneMilling(MillingParams),
}

impl TaskParams {
    pub fn default_for(task: TaskId) -> Self {
        match task {
            TaskId::Palpation => TaskParams::Palpation(PalpationParams::default()),
            TaskId::RigidWall => TaskParams::RigidWall(WallParams::default()),
            TaskId::BoneMilling => TaskParams::BoneMilling(MillingParams::default()),
        }
    }

    pub fn task(&self) -> TaskId {
        match self {
            TaskParams::Palpation(_) => TaskId::Palpation,
            TaskParams::RigidWall(_) => TaskId::RigidWall,
            TaskParams::BoneMilling(_) => TaskId::BoneMilling,
        }
    }
}

/// A fully parameterised ground-truth plant.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub task: TaskId,
    pub params: TaskParams,
    /// kg
    pub tool_mass: f64,
    /// Symmetric saturation on the operator command, N.
    pub input_limit: f64,
    /// Euler–Maruyama diffusion per state component (units/√s).
    pub process_noise_sd: [f64; 3],
    /// Additive observation noise per state component.
    pub measurement_noise_sd: [f64; 3],
    pub initial: StateVector,
}

/// Build a plant for `task` from `params`, validating physical ranges.
pub fn make_task_model(task: TaskId, params: TaskParams) -> Result<PlantModel> {
    if params.task() != task {
        return Err(invalid("params", "parameter set does not belong to the requested task"));
    }
    let positive = |name: &'static str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(invalid(name, "must be strictly positive"))
        }
    };
    let initial = match params {
        TaskParams::Palpation(p) => {
            positive("modulus_surface", p.modulus_surface)?;
            positive("modulus_deep", p.modulus_deep)?;
            positive("contact_radius", p.contact_radius)?;
            positive("grading_depth", p.grading_depth)?;
            positive("damping", p.damping)?;
            positive("contact_stiffness", p.contact_stiffness)?;
            if p.modulus_deep < p.modulus_surface {
                return Err(invalid("modulus_deep", "must not be below the surface modulus"));
            }
            StateVector::new(1.0e-3, 0.0, 0.0)
        }
        TaskParams::RigidWall(p) => {
            positive("stiffness", p.stiffness)?;
            positive("damping", p.damping)?;
            StateVector::new(-2.0e-3, 0.0, 0.0)
        }
        TaskParams::BoneMilling(p) => {
            positive("contact_stiffness", p.contact_stiffness)?;
            positive("density", p.density)?;
            positive("cutting_coefficient", p.cutting_coefficient)?;
            positive("depth_offset", p.depth_offset)?;
            StateVector::default()
        }
    };
    Ok(PlantModel {
        task,
        params,
        tool_mass: 0.1,
        input_limit: 50.0,
        process_noise_sd: [0.0; 3],
        measurement_noise_sd: [1.0e-5, 1.0e-2, 1.0e-5],
        initial,
    })
}

impl PlantModel {
    /// Default plant for a task.
    pub fn for_task(task: TaskId) -> Self {
        make_task_model(task, TaskParams::default_for(task)).expect("defaults are valid")
    }

    pub fn with_initial(mut self, s: StateVector) -> Self {
        self.initial = s;
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.process_noise_sd = [0.0; 3];
        self.measurement_noise_sd = [0.0; 3];
        self
    }

    /// Force the environment exerts on the tool (N, positive pushes toward +x).
    pub fn reaction_force(&self, s: &StateVector) -> f64 {
        match &self.params {
            TaskParams::Palpation(p) => -p.contact_stiffness * (s.position - s.deformation).max(0.0),
            TaskParams::RigidWall(p) => {
                if s.position > 0.0 {
                    -(p.stiffness * s.position + p.damping * s.velocity)
                } else {
                    0.0
                }
            }
            TaskParams::BoneMilling(p) => -p.contact_stiffness * (s.position - s.deformation).max(0.0),
        }
    }

    pub fn in_contact(&self, s: &StateVector) -> bool {
        contact_predicate(self.task)(s)
    }

    /// Kinetic plus stored elastic energy, J.
    pub fn mechanical_energy(&self, s: &StateVector) -> f64 {
        let kinetic = 0.5 * self.tool_mass * s.velocity * s.velocity;
        let stored = match &self.params {
            TaskParams::Palpation(p) => {
                let gap = (s.position - s.deformation).max(0.0);
                let d = s.deformation;
                0.5 * p.contact_stiffness * gap * gap + 0.5 * p.k1() * d * d + 0.25 * p.k2() * d * d * d * d
            }
            TaskParams::RigidWall(p) => {
                let pen = s.position.max(0.0);
                0.5 * p.stiffness * pen * pen
            }
            TaskParams::BoneMilling(p) => {
                let gap = (s.position - s.deformation).max(0.0);
                0.5 * p.contact_stiffness * gap * gap
            }
        };
        kinetic + stored
    }

    /// Rest state with the tool held at `x` (tissue relaxed onto the tool for T1).
    pub fn rest_state(&self, x: f64) -> StateVector {
        match &self.params {
            TaskParams::Palpation(p) => StateVector::new(x, 0.0, p.equilibrium_deformation(x)),
            TaskParams::RigidWall(_) => StateVector::new(x, 0.0, x.max(0.0)),
            TaskParams::BoneMilling(_) => StateVector::new(x, 0.0, 0.0),
        }
    }

    /// One noise-free tick of length `h` under command `u`.
    pub fn step(&self, s: &StateVector, u: f64, h: f64) -> StateVector {
        let m = self.tool_mass;
        let inertia = m / (h * h);
        // Free-flight target position under the held command.
        let x_free = s.position + h * s.velocity + u / inertia;
        match &self.params {
            TaskParams::Palpation(p) => palpation_step(p, s, x_free, inertia, h),
            TaskParams::RigidWall(p) => {
                let x = if x_free <= 0.0 {
                    x_free
                } else {
                    let c = p.damping / h;
                    let x = (inertia * x_free + c * s.position) / (inertia + p.stiffness + c);
                    x.max(0.0)
                };
                StateVector::new(x, (x - s.position) / h, x.max(0.0))
            }
            TaskParams::BoneMilling(p) => {
                let d = s.deformation;
                let x = if x_free <= d {
                    x_free
                } else {
                    (inertia * x_free + p.contact_stiffness * d) / (inertia + p.contact_stiffness)
                };
                let fc = p.contact_stiffness * (x - d).max(0.0);
                let depth = d + h * fc / (p.cutting_coefficient * p.density * (p.depth_offset + d));
                StateVector::new(x, (x - s.position) / h, depth)
            }
        }
    }

    /// `n` sub-steps of length `h/n` under the same held command.
    pub fn step_refined(&self, s: &StateVector, u: f64, h: f64, n: usize) -> StateVector {
        let sub = h / n as f64;
        let mut x = *s;
        for _ in 0..n {
            x = self.step(&x, u, sub);
        }
        x
    }
}

/// Contact predicate for a task, usable without a plant instance.
pub fn contact_predicate(task: TaskId) -> fn(&StateVector) -> bool {
    match task {
        TaskId::Palpation | TaskId::BoneMilling => |s| s.position > s.deformation,
        TaskId::RigidWall => |s| s.position > 0.0,
    }
}

fn palpation_step(p: &PalpationParams, s: &StateVector, x_free: f64, inertia: f64, h: f64) -> StateVector {
    let (k1, k2, kc) = (p.k1(), p.k2(), p.contact_stiffness);
    let a = p.damping / h;
    let d0 = s.deformation;
    // Root of a(δ−δ₀) + k_eff(δ − x_t) + k₁δ + k₂δ³ on δ ≥ 0.  The function is
    // increasing and convex there, so Newton from the linear-part root (which
    // lies to the right of the true root) converges monotonically.
    let solve = |keff: f64, xt: f64| -> f64 {
        let g = |d: f64| a * (d - d0) + keff * (d - xt) + k1 * d + k2 * d * d * d;
        if g(0.0) >= 0.0 {
            return 0.0;
        }
        let mut d = (a * d0 + keff * xt) / (a + keff + k1);
        for _ in 0..100 {
            let step = g(d) / (a + keff + k1 + 3.0 * k2 * d * d);
            d -= step;
            if step.abs() <= 1e-15 * d.abs().max(1e-12) {
                break;
            }
        }
        d.max(0.0)
    };
    let d_free = solve(0.0, 0.0);
    if x_free <= d_free {
        return StateVector::new(x_free, (x_free - s.position) / h, d_free);
    }
    let keff = kc * inertia / (inertia + kc);
    let d = solve(keff, x_free);
    let x = (inertia * x_free + kc * d) / (inertia + kc);
    StateVector::new(x, (x - s.position) / h, d)
}

/// Something that produces an operator command every tick.
pub trait InputPolicy {
    fn command(&mut self, t: f64, dt: f64, state: &StateVector) -> f64;
}

/// No actuation at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroInput;

impl InputPolicy for ZeroInput {
    fn command(&mut self, _t: f64, _dt: f64, _state: &StateVector) -> f64 {
        0.0
    }
}

impl<F: FnMut(f64, f64, &StateVector) -> f64> InputPolicy for F {
    fn command(&mut self, t: f64, dt: f64, state: &StateVector) -> f64 {
        self(t, dt, state)
    }
}

/// Desired tool motion the simulated operator tries to follow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    /// `offset + amplitude·(1 − cos(2πft + φ))/2` — press-and-release cycles.
    RaisedCosine { offset: f64, amplitude: f64, frequency: f64, phase: f64 },
    /// `feed·t + amplitude·sin(2πft + φ)` — steady advance with oscillation.
    FeedSine { feed: f64, amplitude: f64, frequency: f64, phase: f64 },
    /// Constant set point.
    Hold { position: f64 },
}

impl Reference {
    /// Desired (position, velocity) at time `t`.
    pub fn desired(&self, t: f64) -> (f64, f64) {
        use core::f64::consts::PI;
        match *self {
            Reference::RaisedCosine { offset, amplitude, frequency, phase } => {
                let w = 2.0 * PI * frequency;
                let arg = w * t + phase;
                (
                    offset + amplitude * (1.0 - libm::cos(arg)) / 2.0,
                    amplitude * PI * frequency * libm::sin(arg),
                )
            }
            Reference::FeedSine { feed, amplitude, frequency, phase } => {
                let w = 2.0 * PI * frequency;
                let arg = w * t + phase;
                (feed * t + amplitude * libm::sin(arg), feed + amplitude * w * libm::cos(arg))
            }
            Reference::Hold { position } => (position, 0.0),
        }
    }

    pub fn with_phase(self, phase: f64) -> Self {
        match self {
            Reference::RaisedCosine { offset, amplitude, frequency, .. } => {
                Reference::RaisedCosine { offset, amplitude, frequency, phase }
            }
            Reference::FeedSine { feed, amplitude, frequency, .. } => {
                Reference::FeedSine { feed, amplitude, frequency, phase }
            }
            hold => hold,
        }
    }
}

/// Simulated hand: PD tracking of a reference plus Ornstein–Uhlenbeck force
/// tremor whose stationary SD is `tremor_sd`.
#[derive(Debug, Clone)]
pub struct OperatorPolicy {
    pub reference: Reference,
    pub kp: f64,
    pub kd: f64,
    pub tremor_sd: f64,
    pub tremor_tau: f64,
    tremor: f64,
    rng: ChaCha8Rng,
}

impl OperatorPolicy {
    pub fn new(reference: Reference, kp: f64, kd: f64, tremor_sd: f64, tremor_tau: f64, seed: u64) -> Self {
        Self { reference, kp, kd, tremor_sd, tremor_tau, tremor: 0.0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// The default operator for a task.  `noise_multiplier` scales the tremor
    /// (expertise groups) and `phase` shifts the reference.
    pub fn for_task(task: TaskId, noise_multiplier: f64, phase: f64, seed: u64) -> Self {
        let (reference, kp, kd, sd) = match task {
            TaskId::Palpation => (
                Reference::RaisedCosine { offset: 1.0e-3, amplitude: 6.0e-3, frequency: 1.0, phase },
                150.0,
                3.0,
                0.05,
            ),
            TaskId::RigidWall => (
                Reference::RaisedCosine { offset: -2.0e-3, amplitude: 4.0e-3, frequency: 1.5, phase },
                400.0,
                8.0,
                0.1,
            ),
            TaskId::BoneMilling => (
                Reference::FeedSine { feed: 2.0e-3, amplitude: 0.5e-3, frequency: 0.8, phase },
                300.0,
                5.0,
                0.1,
            ),
        };
        Self::new(reference, kp, kd, sd * noise_multiplier, 0.05, seed)
    }
}

impl InputPolicy for OperatorPolicy {
    fn command(&mut self, t: f64, dt: f64, state: &StateVector) -> f64 {
        if self.tremor_sd > 0.0 {
            let xi: f64 = self.rng.sample(StandardNormal);
            let decay = dt / self.tremor_tau;
            self.tremor += -self.tremor * decay + self.tremor_sd * libm::sqrt(2.0 * decay) * xi;
        }
        let (xd, vd) = self.reference.desired(t);
        self.kp * (xd - state.position) + self.kd * (vd - state.velocity) + self.tremor
    }
}

/// Uniformly sampled run of a plant.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Command applied over `[t_k, t_{k+1})`.
    pub inputs: Vec<f64>,
    /// Noisy observations `x + v`.
    pub outputs: Vec<StateVector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Integrate `plant` under `policy` for `duration` seconds.
///
/// Returns `round(duration/dt) + 1` samples.  Process noise enters with
/// Euler–Maruyama scaling, measurement noise is added to the recorded
/// outputs only; both come from `seed` on separate ChaCha streams.
pub fn simulate_trajectory(
    plant: &PlantModel,
    policy: &mut dyn InputPolicy,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive and finite"));
    }
    if !(duration >= dt) {
        return Err(invalid("duration", "must be at least one step"));
    }
    let steps = libm::round(duration / dt) as usize;
    let mut process = ChaCha8Rng::seed_from_u64(seed);
    process.set_stream(1);
    let mut sensor = ChaCha8Rng::seed_from_u64(seed);
    sensor.set_stream(2);

    let sqrt_dt = libm::sqrt(dt);
    let mut traj = Trajectory {
        dt,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
    };
    let mut s = plant.initial;
    for k in 0..=steps {
        if !s.is_finite() {
            return Err(Error::NonFiniteState { step: k });
        }
        let t = k as f64 * dt;
        let u = policy.command(t, dt, &s).clamp(-plant.input_limit, plant.input_limit);
        let mut y = s.to_array();
        for (c, sd) in y.iter_mut().zip(plant.measurement_noise_sd) {
            if sd > 0.0 {
                let e: f64 = sensor.sample(StandardNormal);
                *c += sd * e;
            }
        }
        traj.times.push(t);
        traj.states.push(s);
        traj.inputs.push(u);
        traj.outputs.push(StateVector::from_slice(&y));
        if k == steps {
            break;
        }
        if !u.is_finite() {
            return Err(Error::NonFiniteState { step: k + 1 });
        }
        let mut next = plant.step(&s, u, dt).to_array();
        for (c, sd) in next.iter_mut().zip(plant.process_noise_sd) {
            if sd > 0.0 {
                let e: f64 = process.sample(StandardNormal);
                *c += sd * sqrt_dt * e;
            }
        }
        s = StateVector::from_slice(&next);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn secant_stiffness_reaches_deep_modulus_at_grading_depth() {
        let p = PalpationParams::default();
        let d = p.grading_depth;
        let secant = p.k1() + p.k2() * d * d;
        let expected = 8.0 / 3.0 * p.modulus_deep * p.contact_radius;
        assert!((secant - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn unknown_task_is_rejected() {
        assert!(matches!("T7".parse::<TaskId>(), Err(Error::UnknownTask(_))));
        assert_eq!("t2".parse::<TaskId>().unwrap(), TaskId::RigidWall);
    }

    #[test]
    fn mismatched_parameter_set_is_rejected() {
        let r = make_task_model(TaskId::RigidWall, TaskParams::default_for(TaskId::Palpation));
        assert!(r.is_err());
        let bad = TaskParams::RigidWall(WallParams { stiffness: -1.0, damping: 1.0 });
        assert!(make_task_model(TaskId::RigidWall, bad).is_err());
    }

    #[test]
    fn wall_exerts_nothing_outside() {
        let plant = PlantModel::for_task(TaskId::RigidWall);
        let s = StateVector::new(-1e-3, 0.3, 0.0);
        assert_eq!(plant.reaction_force(&s), 0.0);
    }

    #[test]
    fn milling_resistance_is_linear_in_feed() {
        let p = MillingParams::default();
        let r1 = p.resistance(2e-3, 1e-3);
        let r2 = p.resistance(2e-3, 2e-3);
        assert!((r2 - 2.0 * r1).abs() < 1e-12 * r2);
    }

    #[test]
    fn equilibrium_balances_forces() {
        let p = PalpationParams::default();
        let x = 4e-3;
        let d = p.equilibrium_deformation(x);
        let lhs = p.contact_stiffness * (x - d);
        let rhs = p.k1() * d + p.k2() * d * d * d;
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
