//! The study campaign: train one pipeline per task, run every
//! (task, group, trial) cell under all three rendering conditions, and
//! reduce the records into a statistics report.
//!
//! Trials run on the rayon pool.  Each trial owns its seed stream, results
//! are collected in job order, and all reductions happen on one thread, so
//! every CSV is a pure function of (settings, master seed).  Wall-clock tick
//! timings are the one non-deterministic output and are kept out of the CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use haptolab_core::dynamics::{PlantModel, TaskId};
use haptolab_core::harness::{run_trial, split_seed, train_pipeline, Group, PipelineSettings, TrainedPipeline, TrialRecord};
use haptolab_core::render::{Condition, NullClock, TickClock};
use rayon::prelude::*;

use crate::config::LabConfig;
use crate::error::{io_err, Error, Result};
use crate::formats::write_records;
use crate::stats::{
    bayes_regress, effect_stats, fit_anova, hpi_by_condition, hpi_gap, manova_wilks, of_condition, power_mc,
    split_by, AnovaModel, BayesPosterior, EffectConfig, EffectStats, Factor, HpiGap, HpiResult, Manova, Metric,
    NigPrior, PowerResult,
};

/// Seed tags for the analysis streams, disjoint from the harness tags.
const TAG_BOOTSTRAP: u64 = 11;
const TAG_POWER: u64 = 12;
const TAG_HPI: u64 = 13;

/// `Instant`-backed clock for timing render ticks.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    origin: Instant,
}

impl Default for WallClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl TickClock for WallClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOptions {
    pub seed: u64,
    /// Trials per task × group cell.
    pub trials: usize,
    pub settings: PipelineSettings,
    pub bootstrap_resamples: usize,
    pub power_replicates: usize,
    pub power_shift_sd: f64,
    pub alpha: f64,
    /// Time render ticks with the wall clock.
    pub timing: bool,
}

impl CampaignOptions {
    pub fn from_config(cfg: &LabConfig) -> Self {
        let c = &cfg.campaign;
        Self {
            seed: c.seed,
            trials: c.trials,
            settings: cfg.pipeline_settings(),
            bootstrap_resamples: c.bootstrap_resamples,
            power_replicates: c.power_replicates,
            power_shift_sd: c.power_shift_sd,
            alpha: c.alpha,
            timing: false,
        }
    }
}

impl Default for CampaignOptions {
    fn default() -> Self {
        Self::from_config(&LabConfig::default())
    }
}

#[derive(Debug, Clone)]
pub struct CampaignRun {
    pub pipelines: Vec<TrainedPipeline>,
    /// Ordered by condition, task, group, trial.
    pub records: Vec<TrialRecord>,
    /// Median over trials of the per-trial median tick compute time, s.
    pub median_tick_time: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Train the three task pipelines in parallel.
pub fn train_all(settings: &PipelineSettings, seed: u64) -> Result<Vec<TrainedPipeline>> {
    TaskId::ALL
        .par_iter()
        .map(|&t| train_pipeline(&PlantModel::for_task(t), settings, seed).map_err(Error::from))
        .collect()
}

/// Run every trial of the factorial design against already trained pipelines.
pub fn run_trials(pipelines: &[TrainedPipeline], opts: &CampaignOptions) -> Result<CampaignRun> {
    if opts.trials < 2 {
        return Err(Error::Invalid("need at least two trials per cell".into()));
    }
    let jobs: Vec<(usize, Group, usize)> = (0..pipelines.len())
        .flat_map(|p| Group::ALL.into_iter().flat_map(move |g| (0..opts.trials).map(move |k| (p, g, k))))
        .collect();
    let wall = WallClock::default();
    let results: Vec<(Vec<TrialRecord>, Option<f64>)> = jobs
        .par_iter()
        .map(|&(p, group, k)| {
            let clock: &dyn TickClock = if opts.timing { &wall } else { &NullClock };
            let mut recs = Vec::with_capacity(3);
            let mut times = Vec::new();
            for c in Condition::ALL {
                let run = run_trial(&pipelines[p], c, group, k, opts.seed, clock)?;
                if opts.timing {
                    times.extend(run.ticks.iter().map(|t| t.compute_time));
                }
                recs.push(run.record);
            }
            Ok((recs, median(times)))
        })
        .collect::<Result<_>>()?;

    let median_tick_time = median(results.iter().filter_map(|r| r.1).collect());
    let mut records: Vec<TrialRecord> = results.into_iter().flat_map(|r| r.0).collect();
    records.sort_by_key(|r| (r.condition, r.task, r.group, r.trial_index));
    Ok(CampaignRun { pipelines: pipelines.to_vec(), records, median_tick_time })
}

pub fn run_campaign(opts: &CampaignOptions) -> Result<CampaignRun> {
    let pipelines = train_all(&opts.settings, opts.seed)?;
    run_trials(&pipelines, opts)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

fn summarize(xs: &[f64]) -> CellSummary {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    CellSummary { n, mean, sd }
}

/// Mean and SD of a metric per (task, condition).
pub fn condition_means(records: &[TrialRecord], metric: Metric) -> BTreeMap<(TaskId, Condition), CellSummary> {
    let mut cells: BTreeMap<(TaskId, Condition), Vec<f64>> = BTreeMap::new();
    for r in records {
        cells.entry((r.task, r.condition)).or_default().push(metric.value(r));
    }
    cells.into_iter().map(|(k, v)| (k, summarize(&v))).collect()
}

#[derive(Debug, Clone)]
pub struct StatsReport {
    pub anova: Vec<(Condition, Metric, AnovaModel)>,
    /// (scope, factor, result); scope is a condition label or `all`.
    pub manova: Vec<(String, &'static str, Manova)>,
    pub bayes: Option<BayesPosterior>,
    pub effects: Vec<(String, Metric, EffectStats)>,
    pub power: Option<PowerResult>,
    pub hpi: Option<HpiResult>,
    pub hpi_means: BTreeMap<Condition, f64>,
    /// (better, baseline, gap)
    pub hpi_gaps: Vec<(Condition, Condition, HpiGap)>,
    pub summary: BTreeMap<(TaskId, Condition), Vec<CellSummary>>,
    /// Sections that could not be computed, with the reason.
    pub failures: Vec<(String, String)>,
}

impl StatsReport {
    pub fn gap(&self, better: Condition, baseline: Condition) -> Option<&HpiGap> {
        self.hpi_gaps.iter().find(|(a, b, _)| *a == better && *b == baseline).map(|g| &g.2)
    }
}

fn record<T>(failures: &mut Vec<(String, String)>, what: impl Into<String>, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            failures.push((what.into(), e.to_string()));
            None
        }
    }
}

pub fn analyze(records: &[TrialRecord], opts: &CampaignOptions) -> StatsReport {
    let mut failures = Vec::new();
    let mut anova = Vec::new();
    let mut manova = Vec::new();
    let mut effects = Vec::new();
    for c in Condition::ALL {
        let sub = of_condition(records, c);
        for m in Metric::OUTCOMES {
            if let Some(a) = record(&mut failures, format!("anova {c} {m}"), fit_anova(&sub, m)) {
                anova.push((c, m, a));
            }
        }
        for f in [Factor::Group, Factor::Task] {
            if let Some(r) = record(&mut failures, format!("manova {c} {}", f.name()), manova_wilks(&sub, &Metric::OUTCOMES, f)) {
                manova.push((c.to_string(), f.name(), r));
            }
        }
    }
    if let Some(r) = record(&mut failures, "manova all condition", manova_wilks(records, &Metric::OUTCOMES, Factor::Condition)) {
        manova.push(("all".into(), Factor::Condition.name(), r));
    }
    let bayes = record(&mut failures, "bayes", bayes_regress(records, &NigPrior::default()));

    for (i, m) in Metric::OUTCOMES.into_iter().enumerate() {
        let seed = split_seed(opts.seed, &[TAG_BOOTSTRAP, i as u64]);
        let levels = split_by(records, m, Factor::Condition);
        let r = effect_stats(&levels, (Condition::Raw.index(), Condition::Perceptual.index()), opts.bootstrap_resamples, seed);
        if let Some(e) = record(&mut failures, format!("effects condition {m}"), r) {
            effects.push(("condition".to_string(), m, e));
        }
    }
    let perceptual = of_condition(records, Condition::Perceptual);
    let levels = split_by(&perceptual, Metric::TaskError, Factor::Group);
    let seed = split_seed(opts.seed, &[TAG_BOOTSTRAP, 99]);
    let r = effect_stats(&levels, (Group::Novice.index(), Group::Expert.index()), opts.bootstrap_resamples, seed);
    if let Some(e) = record(&mut failures, "effects group task_error", r) {
        effects.push(("group".to_string(), Metric::TaskError, e));
    }

    let cfg = EffectConfig { groups: 3, tasks: 3, shift_sd: opts.power_shift_sd };
    let power = record(
        &mut failures,
        "power",
        power_mc(&cfg, opts.trials, opts.alpha, opts.power_replicates, split_seed(opts.seed, &[TAG_POWER])),
    );

    let mut hpi_means = BTreeMap::new();
    let mut hpi_gaps = Vec::new();
    let hpi = record(&mut failures, "hpi", hpi_by_condition(records)).map(|(res, by)| {
        for (c, s) in &by {
            hpi_means.insert(*c, s.iter().sum::<f64>() / s.len() as f64);
        }
        for (k, better) in [Condition::Adjusted, Condition::Perceptual].into_iter().enumerate() {
            if let (Some(a), Some(b)) = (by.get(&better), by.get(&Condition::Raw)) {
                let seed = split_seed(opts.seed, &[TAG_HPI, k as u64]);
                if let Some(g) = record(&mut failures, format!("hpi gap {better}"), hpi_gap(a, b, opts.bootstrap_resamples, seed)) {
                    hpi_gaps.push((better, Condition::Raw, g));
                }
            }
        }
        res
    });

    let mut summary = BTreeMap::new();
    for m in Metric::ALL {
        for (k, s) in condition_means(records, m) {
            summary.entry(k).or_insert_with(Vec::new).push(s);
        }
    }
    StatsReport { anova, manova, bayes, effects, power, hpi, hpi_means, hpi_gaps, summary, failures }
}

// ---------------------------------------------------------------- output

fn g(v: f64) -> String {
    format!("{v:.10e}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), g)
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(io_err(&path))?;
    Ok(path)
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Names of the CSV files written by [`write_report`], all deterministic.
pub const REPORT_CSVS: [&str; 9] =
    ["anova.csv", "manova.csv", "bayes.csv", "effects.csv", "pairwise.csv", "power.csv", "hpi.csv", "summary.csv", "records.csv"];

pub fn write_records_file(dir: &Path, records: &[TrialRecord]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("records.csv");
    let f = fs::File::create(&path).map_err(io_err(&path))?;
    write_records(std::io::BufWriter::new(f), records)?;
    Ok(path)
}

/// Write the CSV tables, `report.txt`, and `failures.txt` when any section
/// could not be computed.
pub fn write_report(dir: &Path, report: &StatsReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let rows = report
        .anova
        .iter()
        .flat_map(|(c, m, a)| {
            let mut v: Vec<Vec<String>> = a
                .rows
                .iter()
                .map(|r| vec![c.to_string(), m.to_string(), r.effect.into(), g(r.ss), g(r.df), g(r.ms), opt(r.f), opt(r.p)])
                .collect();
            v.push(vec![c.to_string(), m.to_string(), "error".into(), g(a.ss_error), g(a.df_error), g(a.residual_var), "NA".into(), "NA".into()]);
            v.push(vec![c.to_string(), m.to_string(), "user_var".into(), "NA".into(), "NA".into(), opt(a.user_var), "NA".into(), "NA".into()]);
            v
        })
        .collect();
    write_file(dir, "anova.csv", &csv_text(&["condition", "metric", "effect", "ss", "df", "ms", "f", "p"], rows)?)?;

    let rows = report
        .manova
        .iter()
        .map(|(s, f, m)| vec![s.clone(), (*f).into(), g(m.lambda), g(m.chi2), g(m.df), g(m.p)])
        .collect();
    write_file(dir, "manova.csv", &csv_text(&["scope", "factor", "wilks_lambda", "chi2", "df", "p"], rows)?)?;

    let names = ["beta0", "beta1_eps_f", "beta2_latency"];
    let rows = report
        .bayes
        .iter()
        .flat_map(|b| {
            (0..b.mean.len()).map(move |j| {
                let mut row = vec![names[j].to_string(), g(b.mean[j]), g(b.intervals[j].0), g(b.intervals[j].1)];
                row.extend((0..b.mean.len()).map(|k| g(b.cov[(j, k)])));
                row
            })
        })
        .chain(report.bayes.iter().map(|b| vec!["sigma2".into(), g(b.sigma2_mean), "NA".into(), "NA".into(), "NA".into(), "NA".into(), "NA".into()]))
        .collect();
    write_file(dir, "bayes.csv", &csv_text(&["parameter", "mean", "ci_low", "ci_high", "cov_0", "cov_1", "cov_2"], rows)?)?;

    let rows = report
        .effects
        .iter()
        .map(|(f, m, e)| {
            vec![
                f.clone(),
                m.to_string(),
                e.contrast.0.to_string(),
                e.contrast.1.to_string(),
                g(e.mean_diff),
                g(e.cohens_d),
                g(e.partial_eta_sq),
                g(e.ci.0),
                g(e.ci.1),
            ]
        })
        .collect();
    write_file(
        dir,
        "effects.csv",
        &csv_text(&["factor", "metric", "level_a", "level_b", "mean_diff", "cohens_d", "partial_eta_sq", "ci_low", "ci_high"], rows)?,
    )?;

    let rows = report
        .effects
        .iter()
        .flat_map(|(f, m, e)| {
            e.pairwise.iter().map(move |p| {
                vec![f.clone(), m.to_string(), p.a.to_string(), p.b.to_string(), g(p.t), g(p.df), g(p.p), g(p.p_bonferroni)]
            })
        })
        .collect();
    write_file(dir, "pairwise.csv", &csv_text(&["factor", "metric", "level_a", "level_b", "t", "df", "p", "p_bonferroni"], rows)?)?;

    let rows = report
        .power
        .iter()
        .map(|p| vec![p.replicates.to_string(), g(p.type1_rate), g(p.type1_se), g(p.power), g(p.power_se)])
        .collect();
    write_file(dir, "power.csv", &csv_text(&["replicates", "type1_rate", "type1_se", "power", "power_se"], rows)?)?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    if let Some(h) = &report.hpi {
        for (i, m) in ["neg_eps_f", "percept_accuracy", "neg_task_error", "smoothness_norm"].iter().enumerate() {
            rows.push(vec!["weight".into(), (*m).into(), g(h.weights[i]), "NA".into(), "NA".into()]);
        }
    }
    for (c, m) in &report.hpi_means {
        rows.push(vec!["mean".into(), c.to_string(), g(*m), "NA".into(), "NA".into()]);
    }
    for (a, b, gap) in &report.hpi_gaps {
        rows.push(vec!["gap".into(), format!("{a}-{b}"), g(gap.gap), g(gap.probability), format!("{}:{}", g(gap.ci.0), g(gap.ci.1))]);
    }
    write_file(dir, "hpi.csv", &csv_text(&["kind", "key", "value", "probability", "ci"], rows)?)?;

    let mut header = vec!["task", "condition"];
    let metric_cols: Vec<String> = Metric::ALL.iter().flat_map(|m| [format!("{m}_mean"), format!("{m}_sd")]).collect();
    header.extend(metric_cols.iter().map(String::as_str));
    let rows = report
        .summary
        .iter()
        .map(|((t, c), cells)| {
            let mut row = vec![t.to_string(), c.to_string()];
            row.extend(cells.iter().flat_map(|s| [g(s.mean), g(s.sd)]));
            row
        })
        .collect();
    write_file(dir, "summary.csv", &csv_text(&header, rows)?)?;

    write_file(dir, "report.txt", &render_text(report))?;
    let manifest = dir.join("failures.txt");
    if report.failures.is_empty() {
        if manifest.exists() {
            fs::remove_file(&manifest).map_err(io_err(&manifest))?;
        }
    } else {
        let text: String = report.failures.iter().map(|(w, e)| format!("{w}: {e}\n")).collect();
        write_file(dir, "failures.txt", &text)?;
    }
    Ok(())
}

/// Human-readable report.
pub fn render_text(report: &StatsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Force fidelity (mean eps_F ± SD)");
    let _ = writeln!(s, "{:<14} {:>22} {:>22} {:>22}", "task", "raw", "adjusted", "perceptual");
    for t in TaskId::ALL {
        let _ = write!(s, "{:<14}", t.to_string());
        for c in Condition::ALL {
            if let Some(cells) = report.summary.get(&(t, c)) {
                let e = &cells[0];
                let _ = write!(s, " {:>22}", format!("{:.4} ± {:.4}", e.mean, e.sd));
            }
        }
        s.push('\n');
    }

    let _ = writeln!(s, "\nTwo-way ANOVA (group × task), per condition");
    for (c, m, a) in &report.anova {
        let _ = write!(s, "  {c:<10} {m:<17}");
        if a.no_variance() {
            let _ = write!(s, " no variance");
        }
        for r in &a.rows {
            let _ = write!(s, "  {}: F={} p={}", r.effect, r.f.map_or("NA".into(), |f| format!("{f:.3}")), r.p.map_or("NA".into(), |p| format!("{p:.3e}")));
        }
        let _ = writeln!(s, "  σ_u²={}", a.user_var.map_or("NA".into(), |v| format!("{v:.3e}")));
    }

    let _ = writeln!(s, "\nMANOVA (Wilks)");
    for (scope, f, m) in &report.manova {
        let _ = writeln!(s, "  {scope:<10} by {f:<9} Λ={:.4} χ²={:.2} df={} p={:.3e}", m.lambda, m.chi2, m.df, m.p);
    }

    if let Some(b) = &report.bayes {
        let _ = writeln!(s, "\nBayesian regression task_error ~ β0 + β1·eps_F + β2·latency");
        for (j, n) in ["β0", "β1", "β2"].iter().enumerate() {
            let _ = writeln!(s, "  {n} = {:.4e}  95% CI [{:.4e}, {:.4e}]", b.mean[j], b.intervals[j].0, b.intervals[j].1);
        }
        let _ = writeln!(s, "  E[σ²] = {:.4e}", b.sigma2_mean);
    }

    let _ = writeln!(s, "\nEffect sizes");
    for (f, m, e) in &report.effects {
        let _ = writeln!(
            s,
            "  {f:<9} {m:<17} levels {}−{}: d={:.3} partial η²={:.3} diff={:.4e} CI [{:.4e}, {:.4e}]",
            e.contrast.0, e.contrast.1, e.cohens_d, e.partial_eta_sq, e.mean_diff, e.ci.0, e.ci.1
        );
        for p in &e.pairwise {
            let _ = writeln!(s, "      {} vs {}: t={:.3} p_bonf={:.3e}", p.a, p.b, p.t, p.p_bonferroni);
        }
    }

    if let Some(p) = &report.power {
        let _ = writeln!(
            s,
            "\nPower ({} replicates): type I = {:.3} ± {:.3}, power = {:.3} ± {:.3}",
            p.replicates, p.type1_rate, p.type1_se, p.power, p.power_se
        );
    }

    if let Some(h) = &report.hpi {
        let _ = writeln!(
            s,
            "\nPerformance index weights [−eps_F, accuracy, −task_error, smoothness] = [{:.3}, {:.3}, {:.3}, {:.3}]{}",
            h.weights[0],
            h.weights[1],
            h.weights[2],
            h.weights[3],
            if h.fallback { " (equal-weight fallback)" } else { "" }
        );
        for (c, m) in &report.hpi_means {
            let _ = writeln!(s, "  {c:<10} mean {m:.4}");
        }
        for (a, b, g) in &report.hpi_gaps {
            let _ = writeln!(s, "  {a} − {b}: gap {:.4}, P(gap > 0) = {:.4}", g.gap, g.probability);
        }
    }

    if !report.failures.is_empty() {
        let _ = writeln!(s, "\nSections not computed");
        for (w, e) in &report.failures {
            let _ = writeln!(s, "  {w}: {e}");
        }
    }
    s
}
