use haptolab_core::contact::*;
use haptolab_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_grid(rng: &mut ChaCha8Rng, n: usize, density: f64) -> VoxelGrid {
    let mut g = VoxelGrid::new([0.0; 3], 1e-4, [n; 3]).unwrap();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                if rng.random::<f64>() < density {
                    g.set([i, j, k], true);
                }
            }
        }
    }
    g
}

fn channel() -> VoxelGrid {
    VoxelGrid::channel([0.0; 3], 1e-4, [8, 8, 60], 1e-3, 5e-3).unwrap()
}

fn launch(grid: &VoxelGrid) -> [f64; 3] {
    let c = grid.center([4, 4, 30]);
    [c[0], c[1], 3e-3]
}

#[test]
fn free_space_proxy_is_the_tip() {
    let g = VoxelGrid::slab([0.0; 3], 1e-3, [4, 4, 4], 1e-3).unwrap();
    let p = [2e-3, 2e-3, 3.2e-3];
    assert!(!g.in_contact(p));
    assert_eq!(nearest_surface_point(&g, p).unwrap(), p);
}

#[test]
fn proxy_inside_a_slab_sits_on_the_first_free_voxel() {
    let g = VoxelGrid::slab([0.0; 3], 1e-3, [4, 4, 4], 1e-3).unwrap();
    // layer k = 0 is tissue, k = 1 is the first free layer
    let p = [1.5e-3, 2.5e-3, 0.2e-3];
    assert!(g.in_contact(p));
    assert_eq!(nearest_surface_point(&g, p).unwrap(), g.center([1, 2, 1]));
}

#[test]
fn contact_starts_at_the_boundary_voxel_centre() {
    let g = VoxelGrid::slab([0.0; 3], 1e-3, [4, 4, 4], 1e-3).unwrap();
    let c = g.center([1, 1, 1]);
    assert!(!g.in_contact([c[0], c[1], c[2] + 1e-6]));
    assert!(g.in_contact([c[0], c[1], c[2] - 1e-6]));
    // at onset the proxy is the voxel centre, so the spring is relaxed
    let p = [c[0], c[1], c[2] - 1e-9];
    let q = nearest_surface_point(&g, p).unwrap();
    assert!((q[2] - p[2]).abs() < 2e-9);
}

#[test]
fn equidistant_candidates_pick_the_smallest_index() {
    let mut g = VoxelGrid::new([0.0; 3], 1.0, [3, 1, 1]).unwrap();
    g.set([1, 0, 0], true);
    let (v, _) = nearest_free_center(&g, [1.5, 0.5, 0.5]).unwrap();
    assert_eq!(v, [0, 0, 0]);
    assert_eq!(nearest_free_center_brute(&g, [1.5, 0.5, 0.5]).unwrap().0, [0, 0, 0]);
}

#[test]
fn fully_occupied_grid_has_no_proxy() {
    let mut g = VoxelGrid::new([0.0; 3], 1.0, [2, 2, 2]).unwrap();
    g.fill(|_| true);
    assert_eq!(nearest_surface_point(&g, [1.0, 1.0, 1.0]), Err(Error::EmptyAdmissibleSet));
}

#[test]
fn shell_search_matches_brute_force_on_64_cubed_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for density in [0.3, 0.9, 0.999] {
        let g = random_grid(&mut rng, 64, density);
        for _ in 0..100 {
            let p = [0; 3].map(|_| rng.random_range(-0.5e-3..6.9e-3));
            assert_eq!(nearest_free_center(&g, p).unwrap(), nearest_free_center_brute(&g, p).unwrap());
        }
    }
}

#[test]
fn force_at_rest_and_on_the_proxy_is_zero() {
    let prm = ContactParams::default();
    assert_eq!(contact_force([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [0.0; 3], &prm), [0.0; 3]);
}

#[test]
fn damping_opposes_velocity() {
    let prm = ContactParams { k: 1e3, b: 5.0, ..Default::default() };
    let f = contact_force([0.0; 3], [0.0; 3], [0.1, -0.2, 0.0], &prm);
    assert_eq!(f, [-0.5, 1.0, 0.0]);
}

#[test]
fn passivity_check_reports_the_worst_step() {
    let t = EnergyTrace { energy: vec![1.0, 0.9, 0.9 + 2e-9, 0.5] };
    let v = passivity_check(&t, 1e-9);
    assert!(!v.passive);
    assert!((v.max_increment - 2e-9).abs() < 1e-15);
    assert!(passivity_check(&EnergyTrace { energy: vec![1.0, 1.0] }, 1e-9).passive);
}

/// One launch onto a slab from 1 mm above the onset plane at 0.1 m/s: at
/// 1 kHz the tool reaches the plane exactly on a tick.
fn slab_launch(grid: &VoxelGrid) -> [f64; 3] {
    let c = grid.center([4, 4, 10]);
    [c[0], c[1], c[2] + 1e-3]
}

fn slab() -> VoxelGrid {
    VoxelGrid::slab([0.0; 3], 1e-4, [8, 8, 40], 1e-3).unwrap()
}

#[test]
fn damped_bounce_at_1khz_never_gains_energy() {
    let g = slab();
    for b in [1.0, 2.0, 5.0] {
        let prm = ContactParams { k: 1e3, b, tool_mass: 0.05, dt: 1e-3 };
        let run = simulate_bounce(&g, &prm, slab_launch(&g), [0.0, 0.0, -0.1], 10.0).unwrap();
        assert_eq!(run.impacts, 1);
        let v = passivity_check(&run.trace, 1e-9);
        assert!(v.passive, "b={b}: max increment {}", v.max_increment);
        // the tool leaves slower than it arrived
        let e = &run.trace.energy;
        assert!(e[e.len() - 1] < 0.9 * e[0]);
    }
}

#[test]
fn repeated_bounces_dissipate_except_at_onset() {
    let g = channel();
    for (k, b) in [(1e3, 2.0), (1e3, 5.0), (5e3, 5.0)] {
        let prm = ContactParams { k, b, tool_mass: 0.05, dt: 1e-3 };
        let run = simulate_bounce(&g, &prm, launch(&g), [0.0, 0.0, -0.1], 10.0).unwrap();
        assert!(run.impacts >= 3, "k={k} b={b}: only {} impacts", run.impacts);
        assert_eq!(run.onset_steps.len(), run.impacts);
        for (t, inc) in run.trace.increments().enumerate() {
            if run.onset_steps.contains(&t) {
                // the entry tick lands past the onset plane; the gain is the
                // spring energy of that overshoot
                let p = run.positions[t + 1];
                let q = nearest_surface_point(&g, p).unwrap();
                let spring = 0.5 * k * ((q[2] - p[2]).powi(2));
                assert!((inc - spring).abs() < 1e-12, "k={k} b={b} t={t}: {inc} vs {spring}");
                assert!(inc <= 0.5 * k * (0.1 * prm.dt).powi(2) + 1e-15);
            } else {
                assert!(inc <= 1e-9, "k={k} b={b} t={t}: {inc}");
            }
        }
    }
}

#[test]
fn damping_below_h_times_k_can_gain_energy_inside_contact() {
    let g = channel();
    let prm = ContactParams { k: 1e3, b: 0.1, tool_mass: 0.05, dt: 1e-3 };
    let run = simulate_bounce(&g, &prm, launch(&g), [0.0, 0.0, -0.1], 10.0).unwrap();
    let worst = run
        .trace
        .increments()
        .enumerate()
        .filter(|(t, _)| !run.onset_steps.contains(t))
        .map(|(_, inc)| inc)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(worst > 1e-9);
}

#[test]
fn undamped_bounce_at_100hz_injects_energy() {
    let g = slab();
    let prm = ContactParams { k: 1e3, b: 0.0, tool_mass: 0.05, dt: 1e-2 };
    let run = simulate_bounce(&g, &prm, slab_launch(&g), [0.0, 0.0, -0.1], 10.0).unwrap();
    assert!(!passivity_check(&run.trace, 1e-9).passive);
}

#[test]
fn energy_is_constant_in_free_flight() {
    let g = channel();
    let prm = ContactParams::default();
    let run = simulate_bounce(&g, &prm, launch(&g), [0.0, 0.0, -0.1], 0.015).unwrap();
    assert_eq!(run.contact_ticks, 0);
    let e0 = run.trace.energy[0];
    assert!(run.trace.energy.iter().all(|e| (e - e0).abs() < 1e-15));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proxy_is_free_or_the_tip(seed in any::<u64>(), px in 0.0..1.6e-3f64, py in 0.0..1.6e-3f64, pz in 0.0..1.6e-3f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_grid(&mut rng, 16, 0.6);
        let p = [px, py, pz];
        match nearest_surface_point(&g, p) {
            Ok(q) if g.in_contact(p) => {
                let v = g.voxel_of(q).unwrap();
                prop_assert!(!g.is_occupied(v));
                prop_assert_eq!(nearest_free_center_brute(&g, p).unwrap().1, q);
            }
            Ok(q) => prop_assert_eq!(q, p),
            Err(e) => prop_assert_eq!(e, Error::EmptyAdmissibleSet),
        }
    }

    #[test]
    fn force_is_linear_in_offset_and_velocity(
        d in prop::array::uniform3(-1e-3..1e-3f64),
        v in prop::array::uniform3(-1.0..1.0f64),
        s in 0.1..10.0f64,
    ) {
        let prm = ContactParams { k: 800.0, b: 3.0, ..Default::default() };
        let f1 = contact_force(d, [0.0; 3], v, &prm);
        let f2 = contact_force(d.map(|x| x * s), [0.0; 3], v.map(|x| x * s), &prm);
        for a in 0..3 {
            prop_assert!((f2[a] - s * f1[a]).abs() <= 1e-9 * (1.0 + f2[a].abs()));
        }
    }
}
