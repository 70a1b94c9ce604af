//! Trials: training a rendering pipeline for a task, running one seeded trial
//! under each rendering condition, and scoring it.
//!
//! # Seeds
//!
//! Every random stream is derived from a master seed with [`split_seed`], a
//! SplitMix64 chain over `(master, tag…)`.  The tags used here:
//!
//! | stream                           | tags                                  |
//! |----------------------------------|---------------------------------------|
//! | training run `i` of a task       | `[TRAIN, task, i]`                    |
//! | calibration run `i` of a task    | `[CALIBRATE, task, i]`                |
//! | trial                            | `[TRIAL, task, group, trial_index]`   |
//! | user tremor scale                | `[USER, task, group, user]`           |
//!
//! All three conditions of a trial share the trial seed (paired design): they
//! see the same plant run, the same sensor noise and the same observer.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{contact_predicate, simulate_trajectory, OperatorPolicy, PlantModel, TaskId, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::koopman::{fit_edmd, Dictionary, KoopmanModel, Ridge, SnapshotSeq};
use crate::percept::{judge_stronger, sample_observer, Hyperpriors, ObserverParams};
use crate::render::{residual_features, Condition, ForceSample, NullClock, RenderConfig, RenderSession, TickClock};

pub const TAG_TRAIN: u64 = 1;
pub const TAG_CALIBRATE: u64 = 2;
pub const TAG_TRIAL: u64 = 3;
pub const TAG_USER: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed from a master seed and a tag path.
pub fn split_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Operator expertise, simulated as a tremor multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Novice,
    Intermediate,
    Expert,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Novice, Group::Intermediate, Group::Expert];

    pub fn noise_multiplier(self) -> f64 {
        match self {
            Group::Novice => 1.5,
            Group::Intermediate => 1.0,
            Group::Expert => 0.6,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Group::Novice => "novice",
            Group::Intermediate => "intermediate",
            Group::Expert => "expert",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl core::fmt::Display for Group {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.label())
    }
}

impl core::str::FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "novice" => Ok(Group::Novice),
            "intermediate" => Ok(Group::Intermediate),
            "expert" => Ok(Group::Expert),
            _ => Err(invalid("group", "expected novice, intermediate or expert")),
        }
    }
}

/// Normalised and raw error/smoothness metrics of one force trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityMetrics {
    pub mae: f64,
    pub rms: f64,
    pub eps_f: f64,
    /// Mean absolute discrete jerk, m/s³.
    pub smoothness_raw: f64,
    /// `1/(1 + smoothness_raw)`.
    pub smoothness_norm: f64,
}

/// MAE, RMS and `‖F_sim − F_ref‖₂/‖F_ref‖₂`, plus the jerk of `velocities`.
pub fn compute_fidelity_metrics(sim: &[f64], reference: &[f64], velocities: &[f64], dt: f64) -> Result<FidelityMetrics> {
    if sim.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), got: sim.len() });
    }
    if sim.len() < 2 {
        return Err(Error::InsufficientData { need: 2, have: sim.len() });
    }
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be positive"));
    }
    let n = sim.len() as f64;
    let (mut abs, mut sq, mut ref_sq) = (0.0, 0.0, 0.0);
    for (s, r) in sim.iter().zip(reference) {
        let d = s - r;
        abs += d.abs();
        sq += d * d;
        ref_sq += r * r;
    }
    if ref_sq == 0.0 {
        return Err(Error::ZeroReference);
    }
    let smoothness_raw = if velocities.len() >= 3 {
        let dt2 = dt * dt;
        velocities.windows(3).map(|w| ((w[2] - 2.0 * w[1] + w[0]) / dt2).abs()).sum::<f64>()
            / (velocities.len() - 2) as f64
    } else {
        0.0
    };
    Ok(FidelityMetrics {
        mae: abs / n,
        rms: libm::sqrt(sq / n),
        eps_f: libm::sqrt(sq / ref_sq),
        smoothness_raw,
        smoothness_norm: 1.0 / (1.0 + smoothness_raw),
    })
}

/// Everything needed to train and run the pipelines for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSettings {
    pub dt: f64,
    pub dictionary_degree: u32,
    pub ridge: Ridge,
    pub train_runs: usize,
    pub train_duration: f64,
    pub calibration_runs: usize,
    pub calibration_duration: f64,
    pub max_lead: usize,
    pub tracking_gains: Vec<f64>,
    /// Tracker re-seed threshold, standard deviations of the innovation.
    pub innovation_gate: f64,
    /// Relative ridge on the normal equations of C.
    pub correction_ridge: f64,
    pub filter_time_constant: f64,
    pub latency_tau: f64,
    pub convergence_gain: f64,
    pub trial_duration: f64,
    pub hyperpriors: Hyperpriors,
    /// 2AFC presentations per trial for perceptual accuracy.
    pub presentations: usize,
    /// Probe offset in Weber fractions for the 2AFC classification.
    pub probe_jnds: f64,
    pub users_per_group: usize,
    /// Log-SD of the per-user tremor scale.
    pub user_spread: f64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            dt: 1.0e-3,
            dictionary_degree: 2,
            ridge: Ridge::Absolute(1.0e-10),
            train_runs: 9,
            train_duration: 4.0,
            calibration_runs: 3,
            calibration_duration: 3.0,
            max_lead: 12,
            tracking_gains: vec![0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.7],
            innovation_gate: 6.0,
            correction_ridge: 1.0e-9,
            filter_time_constant: 5.0e-3,
            latency_tau: 4.3e-3,
            convergence_gain: 1.0,
            trial_duration: 3.0,
            hyperpriors: Hyperpriors::default(),
            presentations: 20,
            probe_jnds: 2.0,
            users_per_group: 10,
            user_spread: 0.2,
        }
    }
}

impl PipelineSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        if self.train_runs == 0 || self.calibration_runs == 0 {
            return Err(invalid("train_runs", "need at least one training and one calibration run"));
        }
        if self.tracking_gains.is_empty() || self.tracking_gains.iter().any(|g| !(*g > 0.0 && *g <= 1.0)) {
            return Err(invalid("tracking_gains", "need gains in (0, 1]"));
        }
        if self.users_per_group == 0 {
            return Err(invalid("users_per_group", "must be positive"));
        }
        self.hyperpriors.validate()
    }
}

/// A task's fitted model and calibrated per-condition render settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub task: TaskId,
    pub plant: PlantModel,
    pub model: KoopmanModel,
    pub stiffness: f64,
    pub damping: f64,
    pub rest_position: f64,
    pub correction: Vec<f64>,
    /// Lead per condition, indexed by [`Condition::index`].
    pub leads: [usize; 3],
    pub tracking_gain: [f64; 3],
    pub settings: PipelineSettings,
}

fn group_for_run(i: usize) -> Group {
    Group::ALL[i % 3]
}

fn seeded_run(plant: &PlantModel, group_mult: f64, seed: u64, duration: f64, dt: f64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random_range(0.0..core::f64::consts::TAU);
    let mut policy = OperatorPolicy::for_task(plant.task, group_mult, phase, rng.random());
    simulate_trajectory(plant, &mut policy, duration, dt, rng.random())
}

/// Least-squares solve with a relative Tikhonov term on the normal equations.
fn ridge_solve(rows: &[Vec<f64>], targets: &[f64], rel: f64) -> Result<Vec<f64>> {
    let p = rows.first().map_or(0, Vec::len);
    if rows.len() < p || p == 0 {
        return Err(Error::InsufficientData { need: p.max(1), have: rows.len() });
    }
    let mut g = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for (r, t) in rows.iter().zip(targets) {
        for i in 0..p {
            rhs[i] += r[i] * t;
            for j in i..p {
                g[(i, j)] += r[i] * r[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    let shift = rel * g.trace() / p as f64;
    for i in 0..p {
        g[(i, i)] += shift;
    }
    let chol = g.cholesky().ok_or(Error::SingularSystem)?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

impl TrainedPipeline {
    /// Render configuration for one condition.
    pub fn config(&self, condition: Condition) -> RenderConfig {
        let s = &self.settings;
        let n = self.model.n_lifted();
        RenderConfig {
            condition,
            stiffness: self.stiffness,
            damping: self.damping,
            rest_position: self.rest_position,
            correction: if condition == Condition::Raw { vec![0.0; n] } else { self.correction.clone() },
            filter_time_constant: s.filter_time_constant,
            latency_tau: s.latency_tau,
            dt: s.dt,
            convergence_gain: s.convergence_gain,
            lead: self.leads[condition.index()],
            tracking_gain: if condition == Condition::Perceptual { self.tracking_gain } else { [1.0; 3] },
            measurement_sd: self.plant.measurement_noise_sd,
            innovation_gate: s.innovation_gate,
            tool_mass: self.plant.tool_mass,
        }
    }

    /// Render a recorded run and return the delivered forces.
    pub fn render(&self, config: RenderConfig, traj: &Trajectory, clock: &dyn TickClock) -> Result<Vec<ForceSample>> {
        let mut session = RenderSession::new(config, &self.model, contact_predicate(self.task))?;
        traj.outputs
            .iter()
            .zip(&traj.inputs)
            .map(|(y, &u)| session.tick_timed(y, u, clock))
            .collect()
    }

    fn calibration_score(&self, config: &RenderConfig, runs: &[(Trajectory, Vec<f64>)]) -> Result<f64> {
        let mut total = 0.0;
        for (traj, ideal) in runs {
            let out = self.render(config.clone(), traj, &NullClock)?;
            let sim: Vec<f64> = out.iter().map(|s| s.f_delayed).collect();
            total += compute_fidelity_metrics(&sim, ideal, &[], self.settings.dt)?.eps_f;
        }
        Ok(total / runs.len() as f64)
    }
}

/// Fit the Koopman model, the raw spring–damper baseline and the correction
/// gains on seeded training runs, then calibrate leads and the tracking gain
/// on separate calibration runs.
pub fn train_pipeline(plant: &PlantModel, settings: &PipelineSettings, master_seed: u64) -> Result<TrainedPipeline> {
    settings.validate()?;
    let task = plant.task;
    let dt = settings.dt;
    let contact = contact_predicate(task);

    let mut runs = Vec::with_capacity(settings.train_runs);
    for i in 0..settings.train_runs {
        let seed = split_seed(master_seed, &[TAG_TRAIN, task.index() as u64, i as u64]);
        runs.push(seeded_run(plant, group_for_run(i).noise_multiplier(), seed, settings.train_duration, dt)?);
    }
    let dict = Dictionary::monomials(3, settings.dictionary_degree, true);
    let data: Vec<SnapshotSeq> = runs.iter().map(SnapshotSeq::from_trajectory).collect();
    let model = fit_edmd(&data, &dict, settings.ridge)?;

    // Raw baseline F ≈ −K_f·x − B_f·v + c₀ over contact samples.
    let (mut rows, mut targets) = (Vec::new(), Vec::new());
    for t in &runs {
        for s in t.states.iter().filter(|s| contact(s)) {
            rows.push(vec![-s.position, -s.velocity, 1.0]);
            targets.push(plant.reaction_force(s));
        }
    }
    let coef = ridge_solve(&rows, &targets, 0.0)?;
    let (stiffness, damping, c0) = if coef[1] >= 0.0 {
        (coef[0], coef[1], coef[2])
    } else {
        // a negative damper would be active; refit the spring alone
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[2]]).collect();
        let c = ridge_solve(&rows, &targets, 0.0)?;
        (c[0], 0.0, c[1])
    };
    if !(stiffness > 0.0) {
        return Err(Error::NoConvergence("spring-damper baseline fit has non-positive stiffness"));
    }
    let mut out = TrainedPipeline::bare(plant, model, stiffness, damping, c0 / stiffness, settings);
    fit_correction(&mut out, &runs)?;
    calibrate(&mut out, master_seed)?;
    Ok(out)
}

impl TrainedPipeline {
    fn bare(
        plant: &PlantModel,
        model: KoopmanModel,
        stiffness: f64,
        damping: f64,
        rest_position: f64,
        settings: &PipelineSettings,
    ) -> Self {
        let n = model.n_lifted();
        Self {
            task: plant.task,
            plant: plant.clone(),
            model,
            stiffness,
            damping,
            rest_position,
            correction: vec![0.0; n],
            leads: [0; 3],
            tracking_gain: [1.0; 3],
            settings: settings.clone(),
        }
    }
}

fn fit_correction(p: &mut TrainedPipeline, runs: &[Trajectory]) -> Result<()> {
    let contact = contact_predicate(p.task);
    let config = p.config(Condition::Adjusted);
    let (mut rows, mut targets) = (Vec::new(), Vec::new());
    for t in runs {
        for (s, &u) in t.states.iter().zip(&t.inputs) {
            if !contact(s) {
                continue;
            }
            let (r, f_raw) = residual_features(&p.model, &config, s, u);
            rows.push(r);
            targets.push(p.plant.reaction_force(s) - f_raw);
        }
    }
    p.correction = ridge_solve(&rows, &targets, p.settings.correction_ridge)?;
    Ok(())
}

fn calibrate(p: &mut TrainedPipeline, master_seed: u64) -> Result<()> {
    let s = p.settings.clone();
    let mut runs = Vec::with_capacity(s.calibration_runs);
    for i in 0..s.calibration_runs {
        let seed = split_seed(master_seed, &[TAG_CALIBRATE, p.task.index() as u64, i as u64]);
        let t = seeded_run(&p.plant, group_for_run(i).noise_multiplier(), seed, s.calibration_duration, s.dt)?;
        let ideal = t.states.iter().map(|x| p.plant.reaction_force(x)).collect();
        runs.push((t, ideal));
    }

    let mut best = (f64::INFINITY, 0);
    for lead in 0..=s.max_lead {
        let mut c = p.config(Condition::Adjusted);
        c.lead = lead;
        let e = p.calibration_score(&c, &runs)?;
        if e < best.0 {
            best = (e, lead);
        }
    }
    p.leads[Condition::Adjusted.index()] = best.1;

    // Joint scalar gain and lead first, then each channel group on its own
    // (velocity; position with deformation), then the lead once more.
    let score = |gain: [f64; 3], lead: usize| -> Result<f64> {
        let mut c = p.config(Condition::Perceptual);
        c.lead = lead;
        c.tracking_gain = gain;
        p.calibration_score(&c, &runs)
    };
    let mut best = (f64::INFINITY, 0, [1.0; 3]);
    for &g in &s.tracking_gains {
        for lead in 0..=s.max_lead {
            let e = score([g; 3], lead)?;
            if e < best.0 {
                best = (e, lead, [g; 3]);
            }
        }
    }
    for channels in [&[1usize][..], &[0, 2][..]] {
        for &g in &s.tracking_gains {
            let mut gain = best.2;
            for &i in channels {
                gain[i] = g;
            }
            let e = score(gain, best.1)?;
            if e < best.0 {
                best = (e, best.1, gain);
            }
        }
    }
    for lead in 0..=s.max_lead {
        let e = score(best.2, lead)?;
        if e < best.0 {
            best = (e, lead, best.2);
        }
    }
    p.leads[Condition::Perceptual.index()] = best.1;
    p.tracking_gain = best.2;
    Ok(())
}

/// One scored trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub task: TaskId,
    pub group: Group,
    pub condition: Condition,
    pub trial_index: usize,
    pub user: usize,
    pub seed: u64,
    pub eps_f: f64,
    /// Modelled end-to-end delay, s (see [`modelled_latency`]).
    pub latency: f64,
    pub percept_accuracy: f64,
    /// RMS hand position error, m.
    pub task_error: f64,
    pub smoothness_raw: f64,
    pub smoothness_norm: f64,
}

/// A trial's record plus its per-tick trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRun {
    pub record: TrialRecord,
    pub ticks: Vec<ForceSample>,
    pub ideal: Vec<f64>,
    pub trajectory: Trajectory,
}

/// Effective delay of the delivered force: the Padé delay τ plus the
/// low-frequency group delay of the low-pass, minus the Koopman look-ahead,
/// floored at zero.
pub fn modelled_latency(config: &RenderConfig) -> f64 {
    (config.latency_tau + config.filter_time_constant - config.lead as f64 * config.dt).max(0.0)
}

/// Per-trial seed.
pub fn trial_seed(master: u64, task: TaskId, group: Group, trial_index: usize) -> u64 {
    split_seed(master, &[TAG_TRIAL, task.index() as u64, group.index() as u64, trial_index as u64])
}

/// Tremor scale of a simulated user: log-normal around 1.
pub fn user_scale(master: u64, task: TaskId, group: Group, user: usize, spread: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(master, &[TAG_USER, task.index() as u64, group.index() as u64, user as u64]));
    let z: f64 = rng.sample(StandardNormal);
    libm::exp(spread * z - 0.5 * spread * spread)
}

/// Simulate, render and score one trial.
///
/// The plant never feels the rendered force (the tool is position-driven by
/// the operator command), so the operator-side quantities are computed from a
/// quasi-static hand model: the hand holds the tool through its stiffness
/// `K_h`, and a rendering error `ΔF` displaces it by `ΔF/K_h`.  Task error is
/// the RMS of `(x − x_d) + ΔF/K_h` and smoothness is the jerk of that hand
/// position.
pub fn run_trial(
    pipeline: &TrainedPipeline,
    condition: Condition,
    group: Group,
    trial_index: usize,
    master_seed: u64,
    clock: &dyn TickClock,
) -> Result<TrialRun> {
    let s = &pipeline.settings;
    let task = pipeline.task;
    let seed = trial_seed(master_seed, task, group, trial_index);
    let user = trial_index % s.users_per_group;
    let mult = group.noise_multiplier() * user_scale(master_seed, task, group, user, s.user_spread);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random_range(0.0..core::f64::consts::TAU);
    let mut policy = OperatorPolicy::for_task(task, mult, phase, rng.random());
    let reference = policy.reference;
    let hand_stiffness = policy.kp;
    let traj = simulate_trajectory(&pipeline.plant, &mut policy, s.trial_duration, s.dt, rng.random())?;
    let observer = sample_observer(&s.hyperpriors, rng.random())?;
    let mut percept_rng = ChaCha8Rng::seed_from_u64(rng.random());

    let config = pipeline.config(condition);
    let latency = modelled_latency(&config);
    let ticks = pipeline.render(config, &traj, clock)?;
    let ideal: Vec<f64> = traj.states.iter().map(|x| pipeline.plant.reaction_force(x)).collect();
    let delivered: Vec<f64> = ticks.iter().map(|t| t.f_delayed).collect();

    let hand: Vec<f64> = traj
        .states
        .iter()
        .zip(&traj.times)
        .zip(delivered.iter().zip(&ideal))
        .map(|((x, &t), (f, fi))| x.position - reference.desired(t).0 + (f - fi) / hand_stiffness)
        .collect();
    let task_error = libm::sqrt(hand.iter().map(|e| e * e).sum::<f64>() / hand.len() as f64);
    let hand_velocity: Vec<f64> = traj
        .states
        .iter()
        .zip(delivered.iter().zip(&ideal))
        .map(|(x, (f, fi))| x.position + (f - fi) / hand_stiffness)
        .collect::<Vec<_>>()
        .windows(2)
        .map(|w| (w[1] - w[0]) / s.dt)
        .collect();

    let m = compute_fidelity_metrics(&delivered, &ideal, &hand_velocity, s.dt)?;
    let percept_accuracy = classify(&observer, &delivered, &ideal, s, &mut percept_rng)?;

    let record = TrialRecord {
        task,
        group,
        condition,
        trial_index,
        user,
        seed,
        eps_f: m.eps_f,
        latency,
        percept_accuracy,
        task_error,
        smoothness_raw: m.smoothness_raw,
        smoothness_norm: m.smoothness_norm,
    };
    Ok(TrialRun { record, ticks, ideal, trajectory: traj })
}

/// Fraction of 2AFC presentations in which the observer, feeling the rendered
/// force against a probe `(1 ± probe_jnds·κ)·|F_ideal|`, gives the answer the
/// ideal force would have given.
fn classify<R: Rng>(o: &ObserverParams, delivered: &[f64], ideal: &[f64], s: &PipelineSettings, rng: &mut R) -> Result<f64> {
    let peak = ideal.iter().fold(0.0f64, |a, f| a.max(f.abs()));
    let candidates: Vec<usize> = (0..ideal.len()).filter(|&k| ideal[k].abs() > 0.1 * peak).collect();
    if candidates.is_empty() || s.presentations == 0 {
        return Ok(1.0);
    }
    let mut correct = 0;
    for _ in 0..s.presentations {
        let k = candidates[rng.random_range(0..candidates.len())];
        let truth = ideal[k].abs();
        let up = rng.random_bool(0.5);
        let probe = truth * (1.0 + if up { 1.0 } else { -1.0 } * s.probe_jnds * o.weber_fraction);
        // the ideal force is stronger than the probe exactly when the probe is below it
        if judge_stronger(o, probe, delivered[k].abs(), rng)? == !up {
            correct += 1;
        }
    }
    Ok(correct as f64 / s.presentations as f64)
}
