//! TOML run configuration.  Every key is optional; omitted keys take the
//! defaults below.
//!
//! ```toml
//! [campaign]
//! seed = 7
//! trials = 100            # per task × group cell
//! bootstrap_resamples = 10000
//! power_replicates = 1000
//!
//! [pipeline]
//! dt = 0.001
//! trial_duration = 3.0
//!
//! [render]
//! filter_time_constant = 0.005
//! latency_tau = 0.0043
//!
//! [percept]
//! presentations = 20
//! probe_jnds = 2.0
//!
//! [contact]
//! k = 1000.0
//! b = 5.0
//!
//! [fem]
//! young = 2.0e11
//! ```

use std::path::Path;

use haptolab_core::contact::ContactParams;
use haptolab_core::fem::Material;
use haptolab_core::harness::PipelineSettings;
use haptolab_core::koopman::Ridge;
use serde::Deserialize;

use crate::error::{io_err, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSection {
    pub seed: u64,
    pub trials: usize,
    pub bootstrap_resamples: usize,
    pub power_replicates: usize,
    /// Shift of one group, in residual SDs, for the power analysis.
    pub power_shift_sd: f64,
    pub alpha: f64,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self { seed: 7, trials: 100, bootstrap_resamples: 10_000, power_replicates: 1_000, power_shift_sd: 0.5, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub dt: f64,
    pub dictionary_degree: u32,
    pub ridge: f64,
    pub train_runs: usize,
    pub train_duration: f64,
    pub calibration_runs: usize,
    pub calibration_duration: f64,
    pub max_lead: usize,
    pub tracking_gains: Vec<f64>,
    pub innovation_gate: f64,
    pub correction_ridge: f64,
    pub trial_duration: f64,
    pub users_per_group: usize,
    pub user_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSection {
    pub filter_time_constant: f64,
    pub latency_tau: f64,
    pub convergence_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptSection {
    pub presentations: usize,
    pub probe_jnds: f64,
    pub weber_fraction: f64,
    pub jnd_trials: usize,
    pub jnd_base_force: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactSection {
    pub k: f64,
    pub b: f64,
    pub tool_mass: f64,
    pub dt: f64,
    pub duration: f64,
    /// Voxel edge of the slab phantom, m.
    pub voxel: f64,
    pub dims: [usize; 3],
    /// Height of the slab's top face, m.
    pub surface: f64,
    /// Launch height above the contact onset plane, m, and downward speed, m/s.
    pub drop_height: f64,
    pub drop_speed: f64,
}

impl Default for ContactSection {
    fn default() -> Self {
        Self {
            k: 1.0e3,
            b: 5.0,
            tool_mass: 0.05,
            dt: 1.0e-3,
            duration: 10.0,
            voxel: 1.0e-4,
            dims: [8, 8, 40],
            surface: 1.0e-3,
            drop_height: 1.0e-3,
            drop_speed: 0.1,
        }
    }
}

impl ContactSection {
    pub fn params(&self) -> ContactParams {
        ContactParams { k: self.k, b: self.b, tool_mass: self.tool_mass, dt: self.dt }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FemSection {
    pub young: f64,
    pub poisson: f64,
    pub bar_length: f64,
    pub bar_area: f64,
    pub bar_elements: usize,
    pub load: f64,
}

impl Default for FemSection {
    fn default() -> Self {
        Self { young: 2.0e11, poisson: 0.3, bar_length: 1.0, bar_area: 1.0e-4, bar_elements: 16, load: 1.0e3 }
    }
}

impl FemSection {
    pub fn material(&self) -> Material {
        Material { young: self.young, poisson: self.poisson }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub campaign: CampaignSection,
    pub pipeline: PipelineSection,
    pub render: RenderSection,
    pub percept: PerceptSection,
    pub contact: ContactSection,
    pub fem: FemSection,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineSettings::default();
        let ridge = match d.ridge {
            Ridge::Absolute(l) => l,
            Ridge::TraceScaled(l) => l,
        };
        Self {
            dt: d.dt,
            dictionary_degree: d.dictionary_degree,
            ridge,
            train_runs: d.train_runs,
            train_duration: d.train_duration,
            calibration_runs: d.calibration_runs,
            calibration_duration: d.calibration_duration,
            max_lead: d.max_lead,
            tracking_gains: d.tracking_gains,
            innovation_gate: d.innovation_gate,
            correction_ridge: d.correction_ridge,
            trial_duration: d.trial_duration,
            users_per_group: d.users_per_group,
            user_spread: d.user_spread,
        }
    }
}

impl Default for RenderSection {
    fn default() -> Self {
        let d = PipelineSettings::default();
        Self { filter_time_constant: d.filter_time_constant, latency_tau: d.latency_tau, convergence_gain: d.convergence_gain }
    }
}

impl Default for PerceptSection {
    fn default() -> Self {
        let d = PipelineSettings::default();
        Self { presentations: d.presentations, probe_jnds: d.probe_jnds, weber_fraction: 0.1, jnd_trials: 1000, jnd_base_force: 2.0 }
    }
}

impl LabConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    /// Core pipeline settings assembled from the pipeline, render and
    /// percept sections.
    pub fn pipeline_settings(&self) -> PipelineSettings {
        let p = &self.pipeline;
        PipelineSettings {
            dt: p.dt,
            dictionary_degree: p.dictionary_degree,
            ridge: Ridge::Absolute(p.ridge),
            train_runs: p.train_runs,
            train_duration: p.train_duration,
            calibration_runs: p.calibration_runs,
            calibration_duration: p.calibration_duration,
            max_lead: p.max_lead,
            tracking_gains: p.tracking_gains.clone(),
            innovation_gate: p.innovation_gate,
            correction_ridge: p.correction_ridge,
            filter_time_constant: self.render.filter_time_constant,
            latency_tau: self.render.latency_tau,
            convergence_gain: self.render.convergence_gain,
            trial_duration: p.trial_duration,
            presentations: self.percept.presentations,
            probe_jnds: self.percept.probe_jnds,
            users_per_group: p.users_per_group,
            user_spread: p.user_spread,
            ..PipelineSettings::default()
        }
    }
}
