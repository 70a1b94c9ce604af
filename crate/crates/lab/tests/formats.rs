use haptolab::config::LabConfig;
use haptolab::formats::*;
use haptolab::Error;
use haptolab_core::contact::VoxelGrid;
use haptolab_core::dynamics::TaskId;
use haptolab_core::fem::{Element, Mesh};
use haptolab_core::harness::{Group, TrialRecord};
use haptolab_core::koopman::{Dictionary, KoopmanModel};
use haptolab_core::percept::ObserverParams;
use haptolab_core::render::Condition;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn record(k: usize) -> TrialRecord {
    let x = k as f64;
    TrialRecord {
        task: [TaskId::Palpation, TaskId::RigidWall, TaskId::BoneMilling][k % 3],
        group: [Group::Novice, Group::Intermediate, Group::Expert][(k / 3) % 3],
        condition: [Condition::Raw, Condition::Adjusted, Condition::Perceptual][(k / 9) % 3],
        trial_index: k,
        user: k % 4,
        seed: 0xdead_beef_u64.wrapping_mul(k as u64 + 1),
        eps_f: 0.1 + 1.0 / (x + 3.0),
        latency: 1e-3 * x.sqrt(),
        percept_accuracy: (k % 7) as f64 / 7.0,
        task_error: 1e-4 * std::f64::consts::PI * x,
        smoothness_raw: 1e7 / (x + 1.0),
        smoothness_norm: (x + 0.5).ln(),
    }
}

#[test]
fn records_round_trip_bit_for_bit() {
    let recs: Vec<TrialRecord> = (0..40).map(record).collect();
    let mut buf = Vec::new();
    write_records(&mut buf, &recs).unwrap();
    let header = std::str::from_utf8(&buf).unwrap().lines().next().unwrap().to_owned();
    assert_eq!(header, RECORD_COLUMNS.join(","));
    assert_eq!(read_records(buf.as_slice()).unwrap(), recs);
}

#[test]
fn malformed_records_are_rejected() {
    let mut buf = Vec::new();
    write_records(&mut buf, &[record(1)]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let bad_task = text.replace(",T2,", ",T9,").replacen("T2,", "T9,", 1);
    assert!(read_records(bad_task.as_bytes()).is_err());
    let truncated: String = text.lines().next().unwrap().to_owned() + "\nT2,novice\n";
    assert!(read_records(truncated.as_bytes()).is_err());
}

fn model() -> KoopmanModel {
    let dictionary = Dictionary::monomials(2, 2, true);
    let n = dictionary.len();
    KoopmanModel {
        k: DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) as f64).sin() / 3.0),
        b: DMatrix::from_fn(n, 1, |i, _| 1e-3 * (i as f64 + 0.1)),
        dictionary,
        ridge_lambda: 1e-10,
        fit_residual: 2.5e-7,
        dt: 1e-3,
    }
}

#[test]
fn koopman_model_round_trips() {
    let m = model();
    let text = koopman_to_text(&m);
    assert_eq!(koopman_from_text(&text).unwrap(), m);
}

#[test]
fn koopman_text_errors_name_the_line() {
    let text = koopman_to_text(&model());
    let lines: Vec<&str> = text.lines().collect();
    // drop the last matrix row
    let short = lines[..lines.len() - 1].join("\n");
    assert!(matches!(koopman_from_text(&short), Err(Error::Format { .. })));
    let garbled = text.replacen("dt", "dt oops", 1);
    match koopman_from_text(&garbled) {
        Err(Error::Format { line, .. }) => assert!(line >= 1),
        other => panic!("{other:?}"),
    }
    assert!(matches!(koopman_from_text("koopman-model 99\n"), Err(Error::Format { .. })));
}

#[test]
fn observers_round_trip() {
    let pop: Vec<ObserverParams> = (0..5)
        .map(|i| ObserverParams { stevens_alpha: 1.0 + 0.1 * i as f64, stevens_beta: 0.67, sensory_var: 0.01 * (i + 1) as f64, weber_fraction: 0.1 })
        .collect();
    assert_eq!(observers_from_text(&observers_to_text(&pop)).unwrap(), pop);
}

#[test]
fn slab_voxels_round_trip_and_stay_compact() {
    let g = VoxelGrid::slab([-4e-4, -4e-4, -2e-3], 1e-4, [8, 8, 40], 1e-3).unwrap();
    let text = voxels_to_text(&g);
    assert!(text.len() < 1000, "run-length text is {} bytes", text.len());
    assert_eq!(voxels_from_text(&text).unwrap(), g);
}

#[test]
fn voxel_runs_must_cover_the_grid() {
    let g = VoxelGrid::new([0.0; 3], 1.0, [2, 2, 2]).unwrap();
    let text = voxels_to_text(&g);
    let wrong = text.replace("2 2 2", "2 2 3");
    assert!(matches!(voxels_from_text(&wrong), Err(Error::Format { .. })));
}

proptest! {
    #[test]
    fn arbitrary_occupancy_round_trips(bits in prop::collection::vec(any::<bool>(), 60)) {
        let mut g = VoxelGrid::new([0.5, -1.0, 2.0], 0.25, [3, 4, 5]).unwrap();
        for (idx, b) in bits.iter().enumerate() {
            g.set([idx % 3, (idx / 3) % 4, idx / 12], *b);
        }
        prop_assert_eq!(voxels_from_text(&voxels_to_text(&g)).unwrap(), g);
    }
}

#[test]
fn mesh_case_round_trips() {
    let mut mesh = Mesh::bar_chain(1.0, 3, 1e-4);
    mesh.nodes.push([0.5, 0.5]);
    mesh.elements.push(Element::Tri { nodes: [1, 2, 4], thickness: 0.01 });
    let mut loads = DVector::zeros(mesh.n_dofs());
    loads[6] = 1e3;
    loads[9] = -2.5;
    let case = MeshCase { mesh, fixed: vec![0, 1, 3], loads };
    assert_eq!(mesh_from_text(&mesh_to_text(&case)).unwrap(), case);
}

#[test]
fn mesh_with_dangling_node_is_rejected() {
    let text = "mesh 1\nnodes 2\n0 0\n1 0\nelements 1\nbar 0 5 1e-4\nfixed 0\nloads 0\n";
    assert!(mesh_from_text(text).is_err());
}

#[test]
fn config_defaults_and_partial_overrides() {
    let empty = LabConfig::from_toml("").unwrap();
    assert_eq!(empty, LabConfig::default());
    assert_eq!(empty.campaign.seed, 7);
    assert_eq!(empty.campaign.trials, 100);

    let cfg = LabConfig::from_toml("[campaign]\nseed = 42\n\n[contact]\nb = 2.0\n").unwrap();
    assert_eq!(cfg.campaign.seed, 42);
    assert_eq!(cfg.campaign.trials, 100);
    assert_eq!(cfg.contact.b, 2.0);
    assert_eq!(cfg.contact.k, LabConfig::default().contact.k);
    assert_eq!(cfg.pipeline_settings(), LabConfig::default().pipeline_settings());
}

#[test]
fn unknown_config_keys_are_errors() {
    assert!(matches!(LabConfig::from_toml("[campaign]\nseeds = 1\n"), Err(Error::Config(_))));
    assert!(matches!(LabConfig::from_toml("[nonsense]\n"), Err(Error::Config(_))));
}
