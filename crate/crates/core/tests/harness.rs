use haptolab_core::dynamics::{PlantModel, TaskId};
use haptolab_core::harness::*;
use haptolab_core::render::{Condition, NullClock};
use haptolab_core::Error;
use proptest::prelude::*;

fn quick_settings() -> PipelineSettings {
    PipelineSettings {
        train_runs: 3,
        train_duration: 2.0,
        calibration_runs: 1,
        calibration_duration: 1.5,
        max_lead: 4,
        tracking_gains: vec![0.2, 0.7],
        trial_duration: 1.0,
        ..Default::default()
    }
}

#[test]
fn fidelity_metric_examples() {
    let m = compute_fidelity_metrics(&[1.0, 2.0], &[1.0, 1.0], &[], 1e-3).unwrap();
    assert!((m.eps_f - 0.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(m.mae, 0.5);
    assert!((m.rms - 0.5f64.sqrt()).abs() < 1e-15);

    let m = compute_fidelity_metrics(&[1.5, -0.5, 2.5], &[1.0, -1.0, 2.0], &[], 1e-3).unwrap();
    assert!((m.mae - 0.5).abs() < 1e-15 && (m.rms - 0.5).abs() < 1e-15);

    let v: Vec<f64> = (0..10).map(|k| 0.1 + 0.01 * k as f64).collect();
    let m = compute_fidelity_metrics(&[1.0, 1.0], &[1.0, 1.0], &v, 1e-3).unwrap();
    assert_eq!(m.eps_f, 0.0);
    assert!(m.smoothness_raw < 1e-6);
    assert!((m.smoothness_norm - 1.0).abs() < 1e-6);
}

#[test]
fn jerk_of_a_quadratic_velocity_is_its_second_derivative() {
    let dt = 1e-3;
    let v: Vec<f64> = (0..50).map(|k| 3.0 * (k as f64 * dt).powi(2)).collect();
    let m = compute_fidelity_metrics(&[1.0, 1.0], &[1.0, 1.0], &v, dt).unwrap();
    assert!((m.smoothness_raw - 6.0).abs() < 1e-6);
}

#[test]
fn fidelity_metric_errors() {
    assert_eq!(compute_fidelity_metrics(&[1.0, 1.0], &[0.0, 0.0], &[], 1e-3), Err(Error::ZeroReference));
    assert!(matches!(compute_fidelity_metrics(&[1.0], &[1.0], &[], 1e-3), Err(Error::InsufficientData { .. })));
    assert!(matches!(
        compute_fidelity_metrics(&[1.0, 2.0], &[1.0], &[], 1e-3),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn seed_splitting_is_deterministic_and_separates_streams() {
    assert_eq!(split_seed(7, &[TAG_TRIAL, 1, 2]), split_seed(7, &[TAG_TRIAL, 1, 2]));
    let mut seen = std::collections::HashSet::new();
    for task in 0..3 {
        for group in 0..3 {
            for trial in 0..100 {
                assert!(seen.insert(split_seed(7, &[TAG_TRIAL, task, group, trial])));
            }
        }
    }
    assert_ne!(split_seed(7, &[TAG_TRIAL]), split_seed(8, &[TAG_TRIAL]));
}

#[test]
fn group_labels_round_trip() {
    for g in Group::ALL {
        assert_eq!(g.to_string().parse::<Group>().unwrap(), g);
    }
    assert!(Group::Novice.noise_multiplier() > Group::Intermediate.noise_multiplier());
    assert!(Group::Intermediate.noise_multiplier() > Group::Expert.noise_multiplier());
}

#[test]
fn user_scales_are_seeded_and_centred() {
    let a = user_scale(3, TaskId::Palpation, Group::Novice, 4, 0.2);
    assert_eq!(a, user_scale(3, TaskId::Palpation, Group::Novice, 4, 0.2));
    let mean = (0..4000).map(|u| user_scale(3, TaskId::RigidWall, Group::Expert, u, 0.2)).sum::<f64>() / 4000.0;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn trials_are_reproducible_and_well_formed() {
    let plant = PlantModel::for_task(TaskId::Palpation);
    let pipe = train_pipeline(&plant, &quick_settings(), 5).unwrap();
    for condition in Condition::ALL {
        let a = run_trial(&pipe, condition, Group::Intermediate, 3, 5, &NullClock).unwrap();
        let b = run_trial(&pipe, condition, Group::Intermediate, 3, 5, &NullClock).unwrap();
        assert_eq!(a, b);
        let r = &a.record;
        assert_eq!((r.condition, r.trial_index, r.user), (condition, 3, 3));
        assert!(r.eps_f.is_finite() && r.eps_f >= 0.0);
        assert!((0.0..=1.0).contains(&r.percept_accuracy));
        assert!(r.task_error >= 0.0);
        assert!(r.smoothness_norm > 0.0 && r.smoothness_norm <= 1.0);
        assert_eq!(r.latency, modelled_latency(&pipe.config(condition)));
        assert!(r.latency <= pipe.settings.latency_tau + pipe.settings.filter_time_constant);
        assert_eq!(a.ticks.len(), a.ideal.len());
    }
    // conditions share the simulated trajectory
    let raw = run_trial(&pipe, Condition::Raw, Group::Novice, 0, 5, &NullClock).unwrap();
    let adj = run_trial(&pipe, Condition::Adjusted, Group::Novice, 0, 5, &NullClock).unwrap();
    assert_eq!(raw.trajectory, adj.trajectory);
    let other = run_trial(&pipe, Condition::Raw, Group::Novice, 1, 5, &NullClock).unwrap();
    assert_ne!(raw.trajectory, other.trajectory);
}

#[test]
fn invalid_settings_are_rejected() {
    let plant = PlantModel::for_task(TaskId::RigidWall);
    let s = PipelineSettings { tracking_gains: vec![], ..quick_settings() };
    assert!(train_pipeline(&plant, &s, 1).is_err());
}

proptest! {
    #[test]
    fn eps_f_is_scale_invariant(
        reference in prop::collection::vec(-5.0..5.0f64, 2..40),
        noise in prop::collection::vec(-1.0..1.0f64, 40),
        s in 0.01..100.0f64,
    ) {
        let norm: f64 = reference.iter().map(|r| r * r).sum();
        prop_assume!(norm > 1e-6);
        let sim: Vec<f64> = reference.iter().zip(&noise).map(|(r, n)| r + n).collect();
        let a = compute_fidelity_metrics(&sim, &reference, &[], 1e-3).unwrap();
        let ss: Vec<f64> = sim.iter().map(|v| v * s).collect();
        let rs: Vec<f64> = reference.iter().map(|v| v * s).collect();
        let b = compute_fidelity_metrics(&ss, &rs, &[], 1e-3).unwrap();
        prop_assert!((a.eps_f - b.eps_f).abs() <= 1e-12 * (1.0 + a.eps_f));
        prop_assert!(a.mae <= a.rms + 1e-15);
    }
}
