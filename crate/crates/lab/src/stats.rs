//! Study statistics: balanced two-way ANOVA with a method-of-moments user
//! variance, Wilks' MANOVA, conjugate Bayesian regression, effect sizes with
//! bootstrap intervals and Bonferroni-corrected Welch tests, Monte-Carlo
//! power, and the PCA-weighted performance index.
//!
//! Every routine has a plain-slice form used by the calibration experiments
//! and a [`TrialRecord`] form used by the campaign.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use haptolab_core::harness::{split_seed, Group, TrialRecord};
use haptolab_core::render::Condition;
use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};

/// Per-trial outcome columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    EpsF,
    Latency,
    PerceptAccuracy,
    TaskError,
    SmoothnessRaw,
    SmoothnessNorm,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::EpsF,
        Metric::Latency,
        Metric::PerceptAccuracy,
        Metric::TaskError,
        Metric::SmoothnessRaw,
        Metric::SmoothnessNorm,
    ];

    /// The four metrics entering MANOVA and the performance index.
    pub const OUTCOMES: [Metric; 4] =
        [Metric::EpsF, Metric::PerceptAccuracy, Metric::TaskError, Metric::SmoothnessNorm];

    pub fn value(self, r: &TrialRecord) -> f64 {
        match self {
            Metric::EpsF => r.eps_f,
            Metric::Latency => r.latency,
            Metric::PerceptAccuracy => r.percept_accuracy,
            Metric::TaskError => r.task_error,
            Metric::SmoothnessRaw => r.smoothness_raw,
            Metric::SmoothnessNorm => r.smoothness_norm,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::EpsF => "eps_f",
            Metric::Latency => "latency",
            Metric::PerceptAccuracy => "percept_accuracy",
            Metric::TaskError => "task_error",
            Metric::SmoothnessRaw => "smoothness_raw",
            Metric::SmoothnessNorm => "smoothness_norm",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown metric `{s}`")))
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn f_sf(f: f64, d1: f64, d2: f64) -> f64 {
    FisherSnedecor::new(d1, d2).map(|d| d.sf(f)).unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------- ANOVA

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaRow {
    pub effect: &'static str,
    pub ss: f64,
    pub df: f64,
    pub ms: f64,
    /// `None` when the residual mean square is zero ("no variance").
    pub f: Option<f64>,
    pub p: Option<f64>,
}

/// `y = μ + α_i + β_j + (αβ)_ij + u + ε` with sum-to-zero effects.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaModel {
    pub grand_mean: f64,
    pub a_effects: Vec<f64>,
    pub b_effects: Vec<f64>,
    /// `interaction[i][j]`
    pub interaction: Vec<Vec<f64>>,
    pub n_per_cell: usize,
    /// Rows for A, B, A×B.
    pub rows: [AnovaRow; 3],
    pub ss_error: f64,
    pub df_error: f64,
    pub residual_var: f64,
    /// Method-of-moments variance of user intercepts nested in cells
    /// (floored at zero); `None` without a balanced user layout.
    pub user_var: Option<f64>,
}

impl AnovaModel {
    pub fn no_variance(&self) -> bool {
        self.rows.iter().all(|r| r.f.is_none())
    }
}

fn levels(idx: &[usize]) -> usize {
    idx.iter().copied().max().map_or(0, |m| m + 1)
}

/// Balanced two-way fixed-effects ANOVA.
///
/// `a` and `b` are level indices; `users`, if given, labels subjects nested
/// within the (a, b) cells.
pub fn anova_two_way(y: &[f64], a: &[usize], b: &[usize], users: Option<&[usize]>) -> Result<AnovaModel> {
    let n = y.len();
    if a.len() != n || b.len() != n || users.is_some_and(|u| u.len() != n) {
        return Err(Error::Invalid("factor columns differ in length from the response".into()));
    }
    let (na, nb) = (levels(a), levels(b));
    if na < 2 || nb < 1 {
        return Err(Error::Insufficient("need at least two levels of the first factor".into()));
    }
    let mut count = vec![vec![0usize; nb]; na];
    let mut sum = vec![vec![0.0; nb]; na];
    for k in 0..n {
        count[a[k]][b[k]] += 1;
        sum[a[k]][b[k]] += y[k];
    }
    let r = count[0][0];
    if count.iter().flatten().any(|&c| c != r) {
        return Err(Error::Unbalanced("cells hold different numbers of observations".into()));
    }
    if r < 2 {
        return Err(Error::Insufficient("need at least two observations per cell".into()));
    }
    let cell: Vec<Vec<f64>> = sum.iter().map(|row| row.iter().map(|s| s / r as f64).collect()).collect();
    let mu = cell.iter().flatten().sum::<f64>() / (na * nb) as f64;
    let a_mean: Vec<f64> = cell.iter().map(|row| row.iter().sum::<f64>() / nb as f64).collect();
    let b_mean: Vec<f64> = (0..nb).map(|j| cell.iter().map(|row| row[j]).sum::<f64>() / na as f64).collect();
    let a_eff: Vec<f64> = a_mean.iter().map(|m| m - mu).collect();
    let b_eff: Vec<f64> = b_mean.iter().map(|m| m - mu).collect();
    let inter: Vec<Vec<f64>> = (0..na)
        .map(|i| (0..nb).map(|j| cell[i][j] - a_mean[i] - b_mean[j] + mu).collect())
        .collect();

    let rf = r as f64;
    let ss_a = rf * nb as f64 * a_eff.iter().map(|e| e * e).sum::<f64>();
    let ss_b = rf * na as f64 * b_eff.iter().map(|e| e * e).sum::<f64>();
    let ss_ab = rf * inter.iter().flatten().map(|e| e * e).sum::<f64>();
    let ss_e: f64 = (0..n).map(|k| (y[k] - cell[a[k]][b[k]]).powi(2)).sum();
    let df_a = (na - 1) as f64;
    let df_b = (nb - 1) as f64;
    let df_ab = df_a * df_b;
    let df_e = (na * nb * (r - 1)) as f64;
    let ms_e = ss_e / df_e;
    let row = |effect, ss: f64, df: f64| {
        let ms = if df > 0.0 { ss / df } else { 0.0 };
        let (f, p) = if ms_e > 0.0 && df > 0.0 {
            let f = ms / ms_e;
            (Some(f), Some(f_sf(f, df, df_e)))
        } else {
            (None, None)
        };
        AnovaRow { effect, ss, df, ms, f, p }
    };
    let rows = [row("A", ss_a, df_a), row("B", ss_b, df_b), row("AxB", ss_ab, df_ab)];
    let user_var = users.and_then(|u| nested_user_variance(y, a, b, u, &cell, na, nb));
    Ok(AnovaModel {
        grand_mean: mu,
        a_effects: a_eff,
        b_effects: b_eff,
        interaction: inter,
        n_per_cell: r,
        rows,
        ss_error: ss_e,
        df_error: df_e,
        residual_var: ms_e,
        user_var,
    })
}

fn nested_user_variance(
    y: &[f64],
    a: &[usize],
    b: &[usize],
    users: &[usize],
    cell: &[Vec<f64>],
    na: usize,
    nb: usize,
) -> Option<f64> {
    let mut by_user: BTreeMap<(usize, usize, usize), (usize, f64)> = BTreeMap::new();
    for k in 0..y.len() {
        let e = by_user.entry((a[k], b[k], users[k])).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += y[k];
    }
    let reps = by_user.values().next()?.0;
    if reps < 2 || by_user.values().any(|(c, _)| *c != reps) {
        return None;
    }
    let mut ss_u = 0.0;
    for (&(i, j, _), &(c, s)) in &by_user {
        ss_u += c as f64 * (s / c as f64 - cell[i][j]).powi(2);
    }
    let ss_w: f64 = (0..y.len())
        .map(|k| {
            let (c, s) = by_user[&(a[k], b[k], users[k])];
            (y[k] - s / c as f64).powi(2)
        })
        .sum();
    let df_u = (by_user.len() - na * nb) as f64;
    let df_w = (y.len() - by_user.len()) as f64;
    if df_u <= 0.0 {
        return None;
    }
    Some(((ss_u / df_u - ss_w / df_w) / reps as f64).max(0.0))
}

/// Two-way ANOVA of one metric over group × task, users nested in cells.
///
/// Pass the records of a single rendering condition.
pub fn fit_anova(records: &[TrialRecord], metric: Metric) -> Result<AnovaModel> {
    let y: Vec<f64> = records.iter().map(|r| metric.value(r)).collect();
    let a: Vec<usize> = records.iter().map(|r| r.group.index()).collect();
    let b: Vec<usize> = records.iter().map(|r| r.task.index()).collect();
    let u: Vec<usize> = records.iter().map(|r| r.user).collect();
    anova_two_way(&y, &a, &b, Some(&u))
}

/// One-way ANOVA over level samples: `(F, p, SS_between, SS_within)`.
pub fn one_way_anova(levels: &[Vec<f64>]) -> Result<(f64, f64, f64, f64)> {
    let g = levels.len();
    if g < 2 || levels.iter().any(|l| l.is_empty()) {
        return Err(Error::Insufficient("need two or more non-empty levels".into()));
    }
    let n: usize = levels.iter().map(Vec::len).sum();
    let grand = levels.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for l in levels {
        let m = mean(l);
        ssb += l.len() as f64 * (m - grand).powi(2);
        ssw += l.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let (d1, d2) = ((g - 1) as f64, (n - g) as f64);
    let f = (ssb / d1) / (ssw / d2);
    Ok((f, f_sf(f, d1, d2), ssb, ssw))
}

// ---------------------------------------------------------------- MANOVA

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manova {
    pub lambda: f64,
    pub chi2: f64,
    pub df: f64,
    pub p: f64,
}

/// Within- and between-group scatter matrices.
pub fn scatter_matrices(obs: &[Vec<f64>], labels: &[usize]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = obs.first().map_or(0, Vec::len);
    if p == 0 || obs.len() != labels.len() || obs.iter().any(|o| o.len() != p) {
        return Err(Error::Invalid("observations must share a non-zero dimension and have one label each".into()));
    }
    let g = levels(labels);
    let mut sums = vec![DVector::<f64>::zeros(p); g];
    let mut counts = vec![0usize; g];
    for (o, &l) in obs.iter().zip(labels) {
        sums[l] += DVector::from_column_slice(o);
        counts[l] += 1;
    }
    let total: DVector<f64> = sums.iter().fold(DVector::zeros(p), |acc, s| acc + s) / obs.len() as f64;
    let means: Vec<DVector<f64>> =
        sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { s.clone() }).collect();
    let mut w = DMatrix::zeros(p, p);
    for (o, &l) in obs.iter().zip(labels) {
        let d = DVector::from_column_slice(o) - &means[l];
        w += &d * d.transpose();
    }
    let mut bm = DMatrix::zeros(p, p);
    for (m, &c) in means.iter().zip(&counts) {
        let d = m - &total;
        bm += (&d * d.transpose()) * c as f64;
    }
    Ok((w, bm))
}

fn log_det_spd(m: DMatrix<f64>) -> Option<f64> {
    let scale = m.diagonal().amax();
    let chol = m.cholesky()?;
    let d = chol.l_dirty().diagonal();
    if d.iter().any(|&x| !(x * x > 1e-13 * scale)) {
        return None;
    }
    Some(2.0 * d.iter().map(|x| x.ln()).sum::<f64>())
}

/// Wilks' Λ = det W / det(W + B) with Bartlett's χ² approximation.
pub fn manova_wilks_raw(obs: &[Vec<f64>], labels: &[usize]) -> Result<Manova> {
    let (w, b) = scatter_matrices(obs, labels)?;
    let p = w.nrows();
    let g = levels(labels);
    if g < 2 {
        return Err(Error::Insufficient("MANOVA needs at least two groups".into()));
    }
    let mut counts = vec![0usize; g];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().any(|&c| c <= p) {
        return Err(Error::Insufficient(format!("every group needs more than {p} observations")));
    }
    let ld_w = log_det_spd(w.clone()).ok_or(Error::SingularScatter)?;
    let ld_t = log_det_spd(w + b).ok_or(Error::SingularScatter)?;
    let log_lambda = (ld_w - ld_t).min(0.0);
    let n = obs.len() as f64;
    let chi2 = -(n - 1.0 - (p + g) as f64 / 2.0) * log_lambda;
    let df = (p * (g - 1)) as f64;
    let p_value = ChiSquared::new(df).map(|d| d.sf(chi2)).unwrap_or(f64::NAN);
    Ok(Manova { lambda: log_lambda.exp(), chi2, df, p: p_value })
}

/// Grouping factor for record-level tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Group,
    Task,
    Condition,
}

impl Factor {
    pub fn level(self, r: &TrialRecord) -> usize {
        match self {
            Factor::Group => r.group.index(),
            Factor::Task => r.task.index(),
            Factor::Condition => r.condition.index(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Factor::Group => "group",
            Factor::Task => "task",
            Factor::Condition => "condition",
        }
    }
}

pub fn manova_wilks(records: &[TrialRecord], metrics: &[Metric], factor: Factor) -> Result<Manova> {
    let obs: Vec<Vec<f64>> = records.iter().map(|r| metrics.iter().map(|m| m.value(r)).collect()).collect();
    let labels: Vec<usize> = records.iter().map(|r| factor.level(r)).collect();
    manova_wilks_raw(&obs, &labels)
}

// ---------------------------------------------------- Bayesian regression

/// Normal–inverse-gamma prior `β | σ² ~ N(0, σ²Λ₀⁻¹)`, `σ² ~ IG(a₀, b₀)`.
///
/// `Λ₀ = precision_scale · diag(XᵀX)` so the prior is scale-aware; `b₀ =
/// a₀ · b_scale · Var(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigPrior {
    pub precision_scale: f64,
    pub a0: f64,
    pub b_scale: f64,
}

impl Default for NigPrior {
    fn default() -> Self {
        Self { precision_scale: 1e-10, a0: 1e-3, b_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesPosterior {
    pub mean: DVector<f64>,
    /// Posterior covariance of β, `b_n/(a_n − 1)·V_n`.
    pub cov: DMatrix<f64>,
    pub a_n: f64,
    pub b_n: f64,
    /// Marginal 95 % credible intervals (Student-t).
    pub intervals: Vec<(f64, f64)>,
    pub sigma2_mean: f64,
}

pub fn bayes_regress_xy(x: &DMatrix<f64>, y: &DVector<f64>, prior: &NigPrior) -> Result<BayesPosterior> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Invalid("response length differs from the design".into()));
    }
    if n < p + 1 {
        return Err(Error::Insufficient(format!("need more than {p} observations")));
    }
    let sv = x.clone().svd(false, false).singular_values;
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !(lo > 1e-10 * hi) {
        return Err(Error::RankDeficient);
    }
    let xtx = x.transpose() * x;
    let prec0 = DMatrix::from_diagonal(&(xtx.diagonal() * prior.precision_scale));
    let vn_inv = &xtx + &prec0;
    let chol = vn_inv.clone().cholesky().ok_or(Error::RankDeficient)?;
    let xty = x.transpose() * y;
    let mn = chol.solve(&xty);
    let vn = chol.inverse();
    let ym = y.mean();
    let var_y = y.iter().map(|v| (v - ym).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let a_n = prior.a0 + n as f64 / 2.0;
    let b0 = prior.a0 * prior.b_scale * var_y;
    let quad = y.dot(y) - mn.dot(&(&vn_inv * &mn));
    let b_n = b0 + 0.5 * quad.max(0.0);
    let t = StudentsT::new(0.0, 1.0, 2.0 * a_n).map_err(|e| Error::Invalid(e.to_string()))?;
    let q = t.inverse_cdf(0.975);
    let intervals = (0..p)
        .map(|j| {
            let half = q * (b_n / a_n * vn[(j, j)]).sqrt();
            (mn[j] - half, mn[j] + half)
        })
        .collect();
    let sigma2_mean = if a_n > 1.0 { b_n / (a_n - 1.0) } else { f64::INFINITY };
    Ok(BayesPosterior { cov: vn * sigma2_mean, mean: mn, a_n, b_n, intervals, sigma2_mean })
}

/// `task_error ~ N(β₀ + β₁·ε_F + β₂·latency, σ²)`
pub fn bayes_regress(records: &[TrialRecord], prior: &NigPrior) -> Result<BayesPosterior> {
    if records.len() < 4 {
        return Err(Error::Insufficient("need at least four records".into()));
    }
    let x = DMatrix::from_fn(records.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => records[i].eps_f,
        _ => records[i].latency,
    });
    let y = DVector::from_iterator(records.len(), records.iter().map(|r| r.task_error));
    bayes_regress_xy(&x, &y, prior)
}

// ---------------------------------------------------------- effect sizes

#[derive(Debug, Clone, PartialEq)]
pub struct Pairwise {
    pub a: usize,
    pub b: usize,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub p_bonferroni: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectStats {
    pub contrast: (usize, usize),
    pub mean_diff: f64,
    pub cohens_d: f64,
    pub partial_eta_sq: f64,
    /// Percentile bootstrap 95 % interval of the mean difference.
    pub ci: (f64, f64),
    pub pairwise: Vec<Pairwise>,
}

/// Welch's two-sample t test: `(t, df, two-sided p)`.
pub fn welch_t(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (vx, vy) = (sample_var(x) / nx, sample_var(y) / ny);
    let se2 = vx + vy;
    let t = (mean(x) - mean(y)) / se2.sqrt();
    let df = se2 * se2 / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0));
    let p = if se2 > 0.0 {
        StudentsT::new(0.0, 1.0, df).map(|d| 2.0 * d.sf(t.abs())).unwrap_or(f64::NAN)
    } else if t.is_nan() {
        1.0
    } else {
        0.0
    };
    (t, df, p.min(1.0))
}

/// Percentile of sorted data with linear interpolation.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval for `mean(x) − mean(y)`, resampling each
/// sample independently.
pub fn bootstrap_mean_diff(x: &[f64], y: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diffs = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mx = (0..x.len()).map(|_| x[rng.random_range(0..x.len())]).sum::<f64>() / x.len() as f64;
        let my = (0..y.len()).map(|_| y[rng.random_range(0..y.len())]).sum::<f64>() / y.len() as f64;
        diffs.push(mx - my);
    }
    diffs.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&diffs, tail), quantile_sorted(&diffs, 1.0 - tail))
}

/// Cohen's d, partial η², a bootstrap interval for one contrast, and all
/// pairwise Welch tests with a Bonferroni factor equal to the number of pairs.
pub fn effect_stats(levels: &[Vec<f64>], contrast: (usize, usize), resamples: usize, seed: u64) -> Result<EffectStats> {
    if levels.len() < 2 || levels.iter().any(|l| l.len() < 2) {
        return Err(Error::Insufficient("need two or more levels with two or more observations".into()));
    }
    let (i, j) = contrast;
    if i >= levels.len() || j >= levels.len() || i == j {
        return Err(Error::Invalid("contrast must name two different levels".into()));
    }
    let (x, y) = (&levels[i], &levels[j]);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let pooled = (((nx - 1.0) * sample_var(x) + (ny - 1.0) * sample_var(y)) / (nx + ny - 2.0)).sqrt();
    if !(pooled > 0.0) {
        return Err(Error::ZeroPooledSd);
    }
    let mean_diff = mean(x) - mean(y);
    let (_, _, ssb, ssw) = one_way_anova(levels)?;
    let partial_eta_sq = if ssb + ssw > 0.0 { ssb / (ssb + ssw) } else { 0.0 };
    let ci = bootstrap_mean_diff(x, y, resamples, 0.95, seed);
    let k = levels.len();
    let n_pairs = (k * (k - 1) / 2) as f64;
    let mut pairwise = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let (t, df, p) = welch_t(&levels[a], &levels[b]);
            pairwise.push(Pairwise { a, b, t, df, p, p_bonferroni: (p * n_pairs).min(1.0) });
        }
    }
    Ok(EffectStats { contrast, mean_diff, cohens_d: mean_diff / pooled, partial_eta_sq, ci, pairwise })
}

/// Level samples of `metric` split by `factor`.
pub fn split_by(records: &[TrialRecord], metric: Metric, factor: Factor) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for r in records {
        out[factor.level(r)].push(metric.value(r));
    }
    out.retain(|l| !l.is_empty());
    out
}

// ------------------------------------------------------------------ power

/// Balanced group × task population with a shift on the first group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectConfig {
    pub groups: usize,
    pub tasks: usize,
    /// Added to every observation of group 0, in units of the residual SD.
    pub shift_sd: f64,
}

impl Default for EffectConfig {
    fn default() -> Self {
        Self { groups: 3, tasks: 3, shift_sd: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerResult {
    pub type1_rate: f64,
    pub power: f64,
    pub type1_se: f64,
    pub power_se: f64,
    pub replicates: usize,
}

fn simulate_two_way(cfg: &EffectConfig, n_per_cell: usize, shift: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let mut y = Vec::with_capacity(cfg.groups * cfg.tasks * n_per_cell);
    let (mut a, mut b) = (Vec::with_capacity(y.capacity()), Vec::with_capacity(y.capacity()));
    for g in 0..cfg.groups {
        for t in 0..cfg.tasks {
            for _ in 0..n_per_cell {
                let z: f64 = rng.sample(StandardNormal);
                y.push(z + if g == 0 { shift } else { 0.0 });
                a.push(g);
                b.push(t);
            }
        }
    }
    (y, a, b)
}

/// Rejection rates of the group F test under the null and under the
/// configured shift.
pub fn power_mc(cfg: &EffectConfig, n_per_cell: usize, alpha: f64, replicates: usize, seed: u64) -> Result<PowerResult> {
    if replicates < 100 {
        return Err(Error::Invalid("use at least 100 replicates".into()));
    }
    if cfg.groups < 2 || cfg.tasks < 1 || n_per_cell < 2 {
        return Err(Error::Invalid("need ≥ 2 groups, ≥ 1 task and ≥ 2 observations per cell".into()));
    }
    let mut null_rng = ChaCha8Rng::seed_from_u64(split_seed(seed, &[0]));
    let mut alt_rng = ChaCha8Rng::seed_from_u64(split_seed(seed, &[1]));
    let (mut rej0, mut rej1) = (0usize, 0usize);
    for _ in 0..replicates {
        let (y, a, b) = simulate_two_way(cfg, n_per_cell, 0.0, &mut null_rng);
        if anova_two_way(&y, &a, &b, None)?.rows[0].p.is_some_and(|p| p < alpha) {
            rej0 += 1;
        }
        let (y, a, b) = simulate_two_way(cfg, n_per_cell, cfg.shift_sd, &mut alt_rng);
        if anova_two_way(&y, &a, &b, None)?.rows[0].p.is_some_and(|p| p < alpha) {
            rej1 += 1;
        }
    }
    let r = replicates as f64;
    let (t1, pw) = (rej0 as f64 / r, rej1 as f64 / r);
    Ok(PowerResult {
        type1_rate: t1,
        power: pw,
        type1_se: (t1 * (1.0 - t1) / r).sqrt(),
        power_se: (pw * (1.0 - pw) / r).sqrt(),
        replicates,
    })
}

/// MANOVA rejection rate on null Gaussian data.
pub fn manova_null_rate(groups: usize, dims: usize, n_per_group: usize, alpha: f64, replicates: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejections = 0;
    for _ in 0..replicates {
        let mut obs = Vec::with_capacity(groups * n_per_group);
        let mut labels = Vec::with_capacity(groups * n_per_group);
        for g in 0..groups {
            for _ in 0..n_per_group {
                obs.push((0..dims).map(|_| rng.sample(StandardNormal)).collect());
                labels.push(g);
            }
        }
        if manova_wilks_raw(&obs, &labels)?.p < alpha {
            rejections += 1;
        }
    }
    Ok(rejections as f64 / replicates as f64)
}

/// Frequency with which the 95 % credible interval of β₁ covers the truth on
/// synthetic `y = β₀ + β₁x₁ + β₂x₂ + ε`.
pub fn bayes_coverage(n: usize, replicates: usize, seed: u64) -> Result<f64> {
    let beta = [0.4, 1.5, -0.7];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = 0;
    for _ in 0..replicates {
        let x = DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let y = DVector::from_fn(n, |i, _| {
            let e: f64 = rng.sample(StandardNormal);
            beta[0] + beta[1] * x[(i, 1)] + beta[2] * x[(i, 2)] + 0.3 * e
        });
        let post = bayes_regress_xy(&x, &y, &NigPrior::default())?;
        let (lo, hi) = post.intervals[1];
        if lo <= beta[1] && beta[1] <= hi {
            covered += 1;
        }
    }
    Ok(covered as f64 / replicates as f64)
}

// -------------------------------------------------------------------- HPI

#[derive(Debug, Clone, PartialEq)]
pub struct HpiResult {
    /// Non-negative, summing to one.
    pub weights: [f64; 4],
    /// Per trial, in [0, 1].
    pub scores: Vec<f64>,
    /// Equal weights were used because the covariance was degenerate.
    pub fallback: bool,
}

/// Orient the four outcome metrics so that larger is better:
/// `[−ε_F, percept_accuracy, −task_error, smoothness_norm]`.
pub fn oriented_metrics(r: &TrialRecord) -> [f64; 4] {
    [-r.eps_f, r.percept_accuracy, -r.task_error, r.smoothness_norm]
}

/// Min-max normalise each column (constant columns map to 0), weight by the
/// absolute first principal component of the normalised covariance.
pub fn hpi(matrix: &[[f64; 4]]) -> Result<HpiResult> {
    let n = matrix.len();
    if n < 5 {
        return Err(Error::Insufficient("the performance index needs at least five trials".into()));
    }
    let mut norm = vec![[0.0; 4]; n];
    for c in 0..4 {
        let (lo, hi) = matrix.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[c]), hi.max(r[c])));
        let range = hi - lo;
        for (dst, src) in norm.iter_mut().zip(matrix) {
            dst[c] = if range > 0.0 { (src[c] - lo) / range } else { 0.0 };
        }
    }
    let mut m = [0.0; 4];
    for r in &norm {
        for c in 0..4 {
            m[c] += r[c] / n as f64;
        }
    }
    let mut cov = Matrix4::<f64>::zeros();
    for r in &norm {
        for i in 0..4 {
            for j in 0..4 {
                cov[(i, j)] += (r[i] - m[i]) * (r[j] - m[j]) / (n as f64 - 1.0);
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let (k, &top) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("four eigenvalues");
    let mut weights = [0.25; 4];
    let mut fallback = true;
    if top > 1e-12 {
        let v = eig.eigenvectors.column(k);
        let s: f64 = v.iter().map(|x| x.abs()).sum();
        if s > 0.0 {
            for c in 0..4 {
                weights[c] = v[c].abs() / s;
            }
            fallback = false;
        }
    }
    let scores = norm.iter().map(|r| (0..4).map(|c| weights[c] * r[c]).sum()).collect();
    Ok(HpiResult { weights, scores, fallback })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpiGap {
    pub mean_a: f64,
    pub mean_b: f64,
    pub gap: f64,
    /// Fraction of paired bootstrap resamples with `mean_a > mean_b`.
    pub probability: f64,
    pub ci: (f64, f64),
}

/// Paired bootstrap of `mean(a) − mean(b)` over matched trials.
pub fn hpi_gap(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<HpiGap> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Invalid("paired samples must be non-empty and of equal length".into()));
    }
    if resamples == 0 {
        return Err(Error::Invalid("need at least one resample".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaps = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        gaps.push((0..d.len()).map(|_| d[rng.random_range(0..d.len())]).sum::<f64>() / d.len() as f64);
    }
    let probability = gaps.iter().filter(|g| **g > 0.0).count() as f64 / resamples as f64;
    gaps.sort_by(f64::total_cmp);
    Ok(HpiGap {
        mean_a: mean(a),
        mean_b: mean(b),
        gap: mean(&d),
        probability,
        ci: (quantile_sorted(&gaps, 0.025), quantile_sorted(&gaps, 0.975)),
    })
}

/// Performance index over the records of all conditions, normalised jointly;
/// returns per-condition scores aligned by (task, group, trial).
pub fn hpi_by_condition(records: &[TrialRecord]) -> Result<(HpiResult, BTreeMap<Condition, Vec<f64>>)> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.condition, r.task, r.group, r.trial_index));
    let matrix: Vec<[f64; 4]> = sorted.iter().map(|r| oriented_metrics(r)).collect();
    let res = hpi(&matrix)?;
    let mut by: BTreeMap<Condition, Vec<f64>> = BTreeMap::new();
    for (r, s) in sorted.iter().zip(&res.scores) {
        by.entry(r.condition).or_default().push(*s);
    }
    Ok((res, by))
}

/// Records of one group.
pub fn of_group(records: &[TrialRecord], g: Group) -> Vec<TrialRecord> {
    records.iter().filter(|r| r.group == g).cloned().collect()
}

/// Records of one condition.
pub fn of_condition(records: &[TrialRecord], c: Condition) -> Vec<TrialRecord> {
    records.iter().filter(|r| r.condition == c).cloned().collect()
}
