use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use haptolab::campaign::{analyze, condition_means, run_campaign, write_records_file, write_report, CampaignOptions, StatsReport};
use haptolab::checks::{contact_check, fem_check};
use haptolab::config::LabConfig;
use haptolab::formats::{self, mesh_from_text};
use haptolab::plots;
use haptolab::stats::Metric;
use haptolab_core::dynamics::{PlantModel, TaskId};
use haptolab_core::fem::{assemble_stiffness, solve_displacement, symmetry_defect};
use haptolab_core::harness::{run_trial, train_pipeline, Group};
use haptolab_core::percept::{fit_psychometric, sample_population, simulate_jnd_experiment, ObserverParams};
use haptolab_core::render::Condition;

/// Haptic rendering lab: fit, simulate and evaluate rendering pipelines.
#[derive(Parser)]
#[command(name = "haptolab", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Trials per task × group cell (overrides the configuration).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    plots: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the Koopman model and render settings for a task.
    Fit {
        #[arg(long, default_value = "palpation")]
        task: TaskId,
    },
    /// Run one trial and write its per-tick log.
    Simulate {
        #[arg(long, default_value = "palpation")]
        task: TaskId,
        #[arg(long, default_value = "intermediate")]
        group: Group,
        #[arg(long, default_value = "perceptual")]
        condition: Condition,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Sample an observer population and run a 2AFC JND experiment.
    Calibrate {
        #[arg(long, default_value_t = 1000)]
        observers: usize,
    },
    /// Run the full campaign and write records and the statistics report.
    Evaluate {
        /// Time render ticks with the wall clock (written to timing.txt).
        #[arg(long)]
        timing: bool,
    },
    /// Recompute the statistics report from an existing records file.
    Report {
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Stiffness symmetry and bar deflection checks, or one mesh file.
    FemCheck {
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
    /// Passivity of a damped bounce on a voxel slab.
    ContactCheck {
        /// Write the slab phantom in the voxel text format.
        #[arg(long)]
        export_grid: bool,
    },
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_plots(out: &Path, records: &[haptolab_core::harness::TrialRecord], report: &StatsReport) -> anyhow::Result<()> {
    plots::save(&out.join("eps_f.svg"), &plots::condition_bars("Force fidelity error by task", &condition_means(records, Metric::EpsF)))?;
    plots::save(&out.join("task_error.svg"), &plots::condition_bars("Task error by task", &condition_means(records, Metric::TaskError)))?;
    plots::save(&out.join("hpi.svg"), &plots::hpi_bars(&report.hpi_means))?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => LabConfig::load(p)?,
        None => LabConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.campaign.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.campaign.trials = t;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.as_path();
    let seed = cfg.campaign.seed;

    match cli.command {
        Command::Fit { task } => {
            let pipe = train_pipeline(&PlantModel::for_task(task), &cfg.pipeline_settings(), seed)?;
            let path = out.join(format!("model_{task}.txt"));
            fs::write(&path, formats::koopman_to_text(&pipe.model))?;
            println!("{task}: {} observables, residual {:.3e}", pipe.model.n_lifted(), pipe.model.fit_residual);
            println!("baseline K_f = {:.4} N/m, B_f = {:.4} N·s/m", pipe.stiffness, pipe.damping);
            println!("leads [raw, adjusted, perceptual] = {:?}, tracking gains = {:?}", pipe.leads, pipe.tracking_gain);
            println!("model written to {}", path.display());
        }
        Command::Simulate { task, group, condition, trial } => {
            let pipe = train_pipeline(&PlantModel::for_task(task), &cfg.pipeline_settings(), seed)?;
            let run = run_trial(&pipe, condition, group, trial, seed, &haptolab::campaign::WallClock::default())?;
            formats::write_ticks(create(&out.join("ticks.csv"))?, &run.ticks, &run.ideal)?;
            formats::write_trajectory(create(&out.join("trajectory.csv"))?, &run.trajectory)?;
            let r = &run.record;
            println!(
                "{task} {group} {condition} trial {trial}: eps_F {:.4}, accuracy {:.2}, task error {:.3e} m, smoothness {:.3}",
                r.eps_f, r.percept_accuracy, r.task_error, r.smoothness_norm
            );
            if cli.plots {
                plots::save(&out.join("force.svg"), &plots::force_trace("Delivered vs ideal force", &run.ticks, &run.ideal))?;
            }
        }
        Command::Calibrate { observers } => {
            let h = cfg.pipeline_settings().hyperpriors;
            let pop = sample_population(&h, observers, seed)?;
            fs::write(out.join("observers.txt"), formats::observers_to_text(&pop))?;
            let p = &cfg.percept;
            let observer = ObserverParams { weber_fraction: p.weber_fraction, ..pop[0] };
            let base = p.jnd_base_force;
            let deltas: Vec<f64> = (0..=8).map(|i| base * p.weber_fraction * 0.25 * i as f64).collect();
            let table = simulate_jnd_experiment(base, &deltas, &observer, p.jnd_trials, seed)?;
            formats::write_psychometric(create(&out.join("psychometric.csv"))?, &table)?;
            let fit = fit_psychometric(&table)?;
            println!("{observers} observers written; JND {:.4} N, Weber fraction {:.4} (true {})", fit.jnd, fit.weber_fraction, p.weber_fraction);
        }
        Command::Evaluate { timing } => {
            let opts = CampaignOptions { timing, ..CampaignOptions::from_config(&cfg) };
            let run = run_campaign(&opts)?;
            write_records_file(out, &run.records)?;
            let report = analyze(&run.records, &opts);
            write_report(out, &report)?;
            if let Some(t) = run.median_tick_time {
                fs::write(out.join("timing.txt"), format!("median_tick_compute_time_s {t:.6e}\n"))?;
            }
            if cli.plots {
                write_plots(out, &run.records, &report)?;
            }
            print!("{}", haptolab::campaign::render_text(&report));
            if !report.failures.is_empty() {
                bail!("{} report section(s) failed; see failures.txt", report.failures.len());
            }
        }
        Command::Report { records } => {
            let path = records.unwrap_or_else(|| out.join("records.csv"));
            let recs = formats::read_records(File::open(&path).with_context(|| format!("opening {}", path.display()))?)?;
            let opts = CampaignOptions::from_config(&cfg);
            let report = analyze(&recs, &opts);
            write_report(out, &report)?;
            if cli.plots {
                write_plots(out, &recs, &report)?;
            }
            print!("{}", haptolab::campaign::render_text(&report));
        }
        Command::FemCheck { mesh } => match mesh {
            Some(path) => {
                let case = mesh_from_text(&fs::read_to_string(&path)?)?;
                let material = cfg.fem.material();
                let k = assemble_stiffness(&case.mesh, &material)?;
                let u = solve_displacement(&k, &case.loads, &case.fixed)?;
                formats::write_displacements(create(&out.join("displacements.csv"))?, &u)?;
                println!("{} dofs, symmetry defect {:.3e}, max |u| {:.6e}", case.mesh.n_dofs(), symmetry_defect(&k), u.amax());
            }
            None => {
                let r = fem_check(&cfg.fem)?;
                for (label, dofs, d) in &r.meshes {
                    println!("{label:<12} {dofs:>5} dofs  symmetry defect {d:.3e}");
                }
                println!("bar tip {:.9e} m, FL/EA {:.9e} m, relative error {:.3e}", r.bar_tip, r.bar_tip_expected, r.bar_relative_error());
                if r.max_symmetry_defect() > 1e-12 || r.bar_relative_error() > 1e-9 {
                    bail!("stiffness check failed");
                }
            }
        },
        Command::ContactCheck { export_grid } => {
            let c = &cfg.contact;
            if export_grid {
                let (grid, _, _) = haptolab::checks::slab_scenario(c)?;
                fs::write(out.join("slab.vox"), formats::voxels_to_text(&grid))?;
            }
            let r = contact_check(c)?;
            println!(
                "k={} b={} dt={}: {} impact(s), max energy increment {:.3e} J, {}",
                c.k,
                c.b,
                c.dt,
                r.impacts,
                r.damped.max_increment,
                if r.damped.passive { "passive" } else { "NOT passive" }
            );
            println!("energy {:.4e} J -> {:.4e} J", r.initial_energy, r.final_energy);
            println!(
                "b=0 at 100 Hz: max energy increment {:.3e} J ({})",
                r.undamped_slow.max_increment,
                if r.undamped_slow.passive { "passive" } else { "violates passivity, as expected" }
            );
            if !r.damped.passive {
                bail!("damped bounce gained energy");
            }
        }
    }
    Ok(())
}
