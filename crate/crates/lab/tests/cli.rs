//! Drives the built binary in a scratch directory.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use haptolab::campaign::REPORT_CSVS;
use haptolab::formats::{mesh_to_text, voxels_from_text, write_records};
use haptolab_core::fem::Mesh;
use haptolab_core::harness::TrialRecord;

const QUICK: &str = "\
[pipeline]
train_runs = 4
train_duration = 1.5
calibration_runs = 2
calibration_duration = 1.0
trial_duration = 1.0
users_per_group = 2
";

fn lab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_haptolab")).arg("--out").arg(out).args(args).output().expect("spawn haptolab")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stdout:\n{}\nstderr:\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn fem_check_passes_and_solves_a_mesh_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&lab(dir.path(), &["fem-check"]));
    assert!(text.contains("relative error"));

    let case = haptolab::checks::bar_case(2.0, 4, 1e-4, 500.0);
    assert_eq!(case.mesh, Mesh::bar_chain(2.0, 4, 1e-4));
    let mesh = dir.path().join("bar.mesh");
    fs::write(&mesh, mesh_to_text(&case)).unwrap();
    ok(&lab(dir.path(), &["fem-check", "--mesh", mesh.to_str().unwrap()]));
    let csv = fs::read_to_string(dir.path().join("displacements.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + case.mesh.nodes.len());
}

#[test]
fn contact_check_exports_the_phantom() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&lab(dir.path(), &["contact-check", "--export-grid"]));
    assert!(text.contains("passive"));
    let grid = voxels_from_text(&fs::read_to_string(dir.path().join("slab.vox")).unwrap()).unwrap();
    assert_eq!(grid.dims(), [8, 8, 40]);
    assert!(grid.count_occupied() > 0);
}

#[test]
fn calibrate_writes_observers_and_a_psychometric_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&lab(dir.path(), &["--seed", "5", "calibrate", "--observers", "50"]));
    assert!(text.contains("Weber fraction"));
    let observers = haptolab::formats::observers_from_text(&fs::read_to_string(dir.path().join("observers.txt")).unwrap()).unwrap();
    assert_eq!(observers.len(), 50);
    assert!(fs::read_to_string(dir.path().join("psychometric.csv")).unwrap().lines().count() > 2);
}

#[test]
fn fit_and_simulate_with_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quick.toml");
    fs::write(&cfg, QUICK).unwrap();
    let cfg = cfg.to_str().unwrap();
    ok(&lab(dir.path(), &["--config", cfg, "fit", "--task", "t2"]));
    let model = fs::read_to_string(dir.path().join("model_T2.txt")).unwrap();
    haptolab::formats::koopman_from_text(&model).unwrap();

    ok(&lab(dir.path(), &["--config", cfg, "--plots", "simulate", "--task", "t1", "--condition", "raw"]));
    let ticks = fs::read_to_string(dir.path().join("ticks.csv")).unwrap();
    // header plus ticks 0..=1000 of a one-second trial
    assert_eq!(ticks.lines().count(), 1 + 1001);
    assert!(dir.path().join("trajectory.csv").exists());
    assert!(fs::read_to_string(dir.path().join("force.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn report_rebuilds_statistics_from_records() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<TrialRecord> = {
        // a small synthetic but fully crossed record set
        use haptolab_core::dynamics::TaskId;
        use haptolab_core::harness::Group;
        use haptolab_core::render::Condition;
        let mut v = Vec::new();
        let mut k = 0usize;
        for c in Condition::ALL {
            for t in TaskId::ALL {
                for g in Group::ALL {
                    for i in 0..8 {
                        k += 1;
                        let w = (k as f64 * 0.618).fract();
                        let z = (k as f64 * 0.414).fract();
                        v.push(TrialRecord {
                            task: t,
                            group: g,
                            condition: c,
                            trial_index: i,
                            user: i % 2,
                            seed: k as u64,
                            eps_f: 0.1 + 0.05 * w + 0.02 * c as usize as f64,
                            latency: 1e-3 + 1e-3 * z,
                            percept_accuracy: 0.5 + 0.4 * z,
                            task_error: 1e-3 * (1.0 + w),
                            smoothness_raw: 1e3 * (1.0 + z),
                            smoothness_norm: 1.0 + w * z,
                        });
                    }
                }
            }
        }
        v
    };
    let path = dir.path().join("given.csv");
    write_records(fs::File::create(&path).unwrap(), &records).unwrap();
    let text = ok(&lab(dir.path(), &["report", "--records", path.to_str().unwrap()]));
    assert!(!text.is_empty());
    for name in REPORT_CSVS.iter().filter(|n| **n != "records.csv") {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[campaign]\nsed = 1\n").unwrap();
    let o = lab(dir.path(), &["--config", cfg.to_str().unwrap(), "fem-check"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sed"));

    let o = lab(dir.path(), &["report", "--records", dir.path().join("missing.csv").to_str().unwrap()]);
    assert!(!o.status.success());
    let o = lab(dir.path(), &["simulate", "--task", "t7"]);
    assert!(!o.status.success());
}
