use haptolab_core::dynamics::{PlantModel, TaskId};
use haptolab_core::koopman::{
    fit_edmd, lift, predict_lifted, verify_error_order, Dictionary, LinearPlant, OrderSetup, Ridge, SnapshotSeq,
};
use haptolab_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar_series(a: f64, b: f64, len: usize, seed: u64) -> SnapshotSeq {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 1.0;
    let (mut xs, mut us) = (Vec::new(), Vec::new());
    for _ in 0..len {
        let u: f64 = rng.random_range(-1.0..1.0);
        xs.push(x);
        us.push(u);
        x = a * x + b * u;
    }
    SnapshotSeq::new(0.01, 1, 1, xs, us).unwrap()
}

#[test]
fn lift_examples() {
    let d = Dictionary::from_exponents(1, vec![vec![1], vec![2]]).unwrap();
    assert_eq!(lift(&[3.0], &d).unwrap().as_slice(), &[3.0, 9.0]);

    let quad = Dictionary::monomials(3, 2, false);
    assert!(lift(&[0.0, 0.0, 0.0], &quad).unwrap().iter().all(|&v| v == 0.0));

    let id = Dictionary::identity(2);
    assert_eq!(lift(&[1.0, 2.0], &id).unwrap().as_slice(), &[1.0, 2.0]);
}

#[test]
fn lift_rejects_wrong_dimension() {
    let d = Dictionary::identity(2);
    assert!(matches!(lift(&[1.0], &d), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn recovers_scalar_decay_and_input_gain() {
    let data = scalar_series(0.9, 0.0, 50, 1);
    let m = fit_edmd(&[data], &Dictionary::identity(1), Ridge::Absolute(0.0));
    // inputs are random but B = 0 in the data; K must still be exact
    let m = m.unwrap();
    assert!((m.k[(0, 0)] - 0.9).abs() < 1e-8);

    let data = scalar_series(0.9, 0.1, 50, 2);
    let m = fit_edmd(&[data], &Dictionary::identity(1), Ridge::Absolute(0.0)).unwrap();
    assert!((m.k[(0, 0)] - 0.9).abs() < 1e-8);
    assert!((m.b[(0, 0)] - 0.1).abs() < 1e-8);
    assert!(m.fit_residual <= 1e-10);
}

#[test]
fn huge_ridge_shrinks_operator_to_zero() {
    let data = [scalar_series(0.9, 0.1, 200, 3)];
    let dict = Dictionary::identity(1);
    let mut last = f64::INFINITY;
    for lam in [1e-6, 1e-2, 1.0, 1e2, 1e4, 1e8, 1e12] {
        let n = fit_edmd(&data, &dict, Ridge::Absolute(lam)).unwrap().operator_norm_f();
        assert!(n <= last + 1e-15);
        last = n;
    }
    assert!(last < 1e-9);
}

#[test]
fn too_few_pairs_and_mixed_steps_are_errors() {
    let short = scalar_series(0.9, 0.1, 2, 4);
    let dict = Dictionary::monomials(1, 3, true);
    assert!(matches!(
        fit_edmd(&[short], &dict, Ridge::default()),
        Err(Error::InsufficientData { .. })
    ));
    let a = scalar_series(0.9, 0.1, 20, 5);
    let mut b = scalar_series(0.9, 0.1, 20, 6);
    b.dt = 0.02;
    assert!(matches!(
        fit_edmd(&[a, b], &Dictionary::identity(1), Ridge::default()),
        Err(Error::InconsistentStep { .. })
    ));
}

#[test]
fn collinear_regressors_without_ridge_are_reported() {
    // x stays at zero, so the identity column is identically zero
    let seq = SnapshotSeq::new(0.01, 1, 1, vec![0.0; 30], (0..30).map(|i| i as f64).collect()).unwrap();
    let r = fit_edmd(&[seq.clone()], &Dictionary::identity(1), Ridge::Absolute(0.0));
    assert!(matches!(r, Err(Error::RankDeficient { .. })));
    assert!(fit_edmd(&[seq], &Dictionary::identity(1), Ridge::Absolute(1e-6)).is_ok());
}

#[test]
fn multivariable_linear_plant_is_recovered_exactly() {
    let k_true = DMatrix::from_row_slice(3, 3, &[0.95, 0.1, 0.0, -0.05, 0.9, 0.02, 0.0, 0.03, 0.8]);
    let b_true = DMatrix::from_row_slice(3, 2, &[0.1, 0.0, 0.0, 0.2, 0.05, -0.1]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut seqs = Vec::new();
    for _ in 0..3 {
        let mut x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let (mut xs, mut us) = (Vec::new(), Vec::new());
        for _ in 0..60 {
            let u = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            xs.extend(x.iter());
            us.extend(u.iter());
            x = &k_true * &x + &b_true * &u;
        }
        seqs.push(SnapshotSeq::new(0.001, 3, 2, xs, us).unwrap());
    }
    let m = fit_edmd(&seqs, &Dictionary::identity(3), Ridge::Absolute(0.0)).unwrap();
    assert!((&m.k - &k_true).norm() <= 1e-8);
    assert!((&m.b - &b_true).norm() <= 1e-8);
    assert!(m.fit_residual <= 1e-10);
}

#[test]
fn prediction_examples() {
    let data = scalar_series(0.5, 0.0, 30, 8);
    let m = fit_edmd(&[data], &Dictionary::identity(1), Ridge::Absolute(0.0)).unwrap();
    let traj = predict_lifted(&m, &DVector::from_element(1, 1.0), &[0.0; 3], 3).unwrap();
    assert_eq!(traj.len(), 4);
    assert_eq!(traj[0][0], 1.0);
    assert!((traj[3][0] - 0.125).abs() < 1e-12);
}

#[test]
fn identity_operator_holds_state() {
    let mut m = fit_edmd(&[scalar_series(0.9, 0.1, 30, 9)], &Dictionary::identity(1), Ridge::Absolute(0.0)).unwrap();
    m.k = DMatrix::identity(1, 1);
    m.b = DMatrix::zeros(1, 1);
    let traj = predict_lifted(&m, &DVector::from_element(1, 0.7), &[1.0; 5], 5).unwrap();
    assert!(traj.iter().all(|p| p[0] == 0.7));
}

#[test]
fn generator_of_exactly_discretised_linear_plant() {
    let plant = LinearPlant {
        a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -40.0, -2.0]),
        b: DVector::from_row_slice(&[0.0, 1.0]),
    };
    let setup = OrderSetup {
        initial: vec![0.01, 0.0],
        train: vec![haptolab_core::koopman::Excitation {
            reference: haptolab_core::dynamics::Reference::RaisedCosine {
                offset: 0.0,
                amplitude: 0.01,
                frequency: 1.3,
                phase: 0.2,
            },
            kp: 10.0,
            kd: 1.0,
        }],
        test: haptolab_core::koopman::Excitation {
            reference: haptolab_core::dynamics::Reference::Hold { position: 0.005 },
            kp: 5.0,
            kd: 0.5,
        },
        train_duration: 2.0,
        test_duration: 1.0,
        oracle_step: 1e-4,
        halvings: 2,
    };
    let dict = Dictionary::identity(2);
    let mut generators = Vec::new();
    let out = verify_error_order(
        &plant,
        &setup,
        |d| {
            let m = fit_edmd(d, &dict, Ridge::Absolute(0.0))?;
            generators.push(m.continuous_generator()?);
            Ok(m)
        },
        4e-3,
    )
    .unwrap();
    assert!(out.exact, "errors {:?}", out.errors);
    assert!(out.ratio.is_none());
    for g in generators {
        assert!((g - &plant.a).norm() < 1e-6 * plant.a.norm());
    }
}

#[test]
fn palpation_prediction_error_is_second_order_in_dt() {
    let plant = PlantModel::for_task(TaskId::Palpation).noiseless();
    let setup = OrderSetup::palpation(&plant);
    let dict = Dictionary::monomials(3, 2, true);
    let out = verify_error_order(&plant, &setup, |d| fit_edmd(d, &dict, Ridge::Absolute(0.0)), 4e-3).unwrap();
    let ratio = out.ratio.unwrap();
    let cumulative = out.cumulative.unwrap();
    assert!((3.2..=4.8).contains(&ratio), "ratio {ratio}, errors {:?}", out.errors);
    assert!((10.0..=22.0).contains(&cumulative), "cumulative {cumulative}");
}

proptest! {
    #[test]
    fn projection_recovers_state(x in prop::array::uniform3(-1e2f64..1e2)) {
        let d = Dictionary::monomials(3, 3, true);
        let phi = lift(&x, &d).unwrap();
        let mut back = [0.0; 3];
        d.project(phi.as_slice(), &mut back);
        prop_assert_eq!(back, x);
    }

    #[test]
    fn ridge_never_grows_the_operator(seed in 0u64..500, l1 in 0.0f64..10.0, l2 in 0.0f64..10.0) {
        let data = [scalar_series(0.8, 0.3, 40, seed)];
        let dict = Dictionary::monomials(1, 2, true);
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let a = fit_edmd(&data, &dict, Ridge::Absolute(lo + 1e-9)).unwrap().operator_norm_f();
        let b = fit_edmd(&data, &dict, Ridge::Absolute(hi + 1e-9)).unwrap().operator_norm_f();
        prop_assert!(b <= a * (1.0 + 1e-9));
    }

    #[test]
    fn rollout_is_repeated_one_step(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let k = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.4..0.4));
        let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let mut m = fit_edmd(&[scalar_series(0.9, 0.1, 30, seed)], &Dictionary::identity(1), Ridge::Absolute(0.0)).unwrap();
        m.k = k.clone();
        m.b = b.clone();
        let phi0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let u: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let traj = predict_lifted(&m, &phi0, &u, 5).unwrap();
        let mut p = phi0.clone();
        for (j, uj) in u.iter().enumerate() {
            p = &k * &p + &b * DVector::from_element(1, *uj);
            prop_assert!((&p - &traj[j + 1]).norm() <= 1e-12 * (1.0 + p.norm()));
        }
    }
}
