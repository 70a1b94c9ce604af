//! Naive reference implementations shared by the statistics tests and the
//! acceptance suite.  Each one follows the textbook definition by the most
//! direct route, sharing no code with the library.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_where(y: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
    let sel: Vec<f64> = (0..y.len()).filter(|&k| keep(k)).map(|k| y[k]).collect();
    mean(&sel)
}

/// `(SS_A, SS_B, SS_AB, SS_E)` of a balanced two-way layout, each summed
/// observation by observation.
pub fn two_way_ss(y: &[f64], a: &[usize], b: &[usize]) -> (f64, f64, f64, f64) {
    let grand = mean(y);
    let (mut ss_a, mut ss_b, mut ss_cells, mut ss_e) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..y.len() {
        let ma = mean_where(y, |j| a[j] == a[k]);
        let mb = mean_where(y, |j| b[j] == b[k]);
        let mc = mean_where(y, |j| a[j] == a[k] && b[j] == b[k]);
        ss_a += (ma - grand).powi(2);
        ss_b += (mb - grand).powi(2);
        ss_cells += (mc - grand).powi(2);
        ss_e += (y[k] - mc).powi(2);
    }
    (ss_a, ss_b, ss_cells - ss_a - ss_b, ss_e)
}

/// Wilks' Λ from LU determinants of explicitly summed scatter matrices.
pub fn wilks(obs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let p = obs[0].len();
    let g = labels.iter().max().unwrap() + 1;
    let n = obs.len();
    let grand: Vec<f64> = (0..p).map(|c| obs.iter().map(|o| o[c]).sum::<f64>() / n as f64).collect();
    let mut w = DMatrix::<f64>::zeros(p, p);
    let mut t = DMatrix::<f64>::zeros(p, p);
    for grp in 0..g {
        let members: Vec<&Vec<f64>> = obs.iter().zip(labels).filter(|(_, &l)| l == grp).map(|(o, _)| o).collect();
        let m: Vec<f64> = (0..p).map(|c| members.iter().map(|o| o[c]).sum::<f64>() / members.len() as f64).collect();
        for o in members {
            for i in 0..p {
                for j in 0..p {
                    w[(i, j)] += (o[i] - m[i]) * (o[j] - m[j]);
                    t[(i, j)] += (o[i] - grand[i]) * (o[j] - grand[j]);
                }
            }
        }
    }
    w.determinant() / t.determinant()
}

/// `(mae, rms, eps_f)`
pub fn force_errors(sim: &[f64], reference: &[f64]) -> (f64, f64, f64) {
    let n = sim.len() as f64;
    let d: Vec<f64> = sim.iter().zip(reference).map(|(s, r)| s - r).collect();
    let mae = d.iter().map(|x| x.abs()).sum::<f64>() / n;
    let rms = (d.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (mae, rms, norm(&d) / norm(reference))
}

/// Mean absolute third difference of positions, via a second difference of
/// velocities.
pub fn mean_jerk(v: &[f64], dt: f64) -> f64 {
    let mut total = 0.0;
    for k in 2..v.len() {
        let a1 = (v[k] - v[k - 1]) / dt;
        let a0 = (v[k - 1] - v[k - 2]) / dt;
        total += ((a1 - a0) / dt).abs();
    }
    total / (v.len() - 2) as f64
}

/// Percentile bootstrap of the mean with a separate generator and an
/// explicit index loop.
pub fn bootstrap_mean_ci(x: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..x.len() {
                s += x[rng.random_range(0..x.len())];
            }
            s / x.len() as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |q: f64| {
        let pos = q * (resamples - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        means[lo] + (means[hi] - means[lo]) * (pos - lo as f64)
    };
    (at(0.025), at(0.975))
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Balanced 2 × 5 layout with 5 observations per cell (50 records).
pub fn layout_50(seed: u64) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut y, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..2 {
        for j in 0..5 {
            for _ in 0..5 {
                y.push(rng.random_range(-1.0..1.0) + 0.3 * i as f64 + 0.1 * j as f64);
                a.push(i);
                b.push(j);
            }
        }
    }
    (y, a, b)
}

/// 50 four-dimensional observations in three groups of uneven size.
pub fn groups_50(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = Vec::new();
    let mut labels = Vec::new();
    for k in 0..50 {
        let g = [0, 1, 2, 0, 1][k % 5];
        obs.push((0..4).map(|c| rng.random_range(-1.0..1.0) + 0.2 * (g * c) as f64).collect());
        labels.push(g);
    }
    (obs, labels)
}
