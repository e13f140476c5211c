//! Monte Carlo harness: replicate runs, moment tables, slope fits, normality
//! statistics, conditioning by rejection, degree law and stabilization tails.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_fast, degree_stats_pooled, TailFit};
use crate::measures::{ext_expectation_constant, iso_expectation_constant, MeasureError};
use crate::model::{make_params, ModelError, ModelParams};
use crate::quadrature::QuadratureSpec;
use crate::sampler::{mix_seed, sample_band, sample_disc, SampleError};
use crate::scores::{count_scores, stabilization_radii, stabilization_tail_exponent, ScoreError};
use crate::stats::{
    excess_kurtosis, fit_line, jackknife_mean, jackknife_variance, ks_to_normal, mean, skewness,
    variance, Interval, LineFit,
};

/// Fewest replicates for which moments are reported.
pub const MIN_REPLICATES: usize = 30;
/// Fewest replicates for which a normality verdict is given.
pub const MIN_VERDICT_REPLICATES: usize = 500;
/// Replicates behind a variance slope fit.
pub const MIN_SLOPE_REPLICATES: usize = 200;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config asks for {requested:e} points, above the budget of {budget:e}")]
    BudgetExceeded { requested: f64, budget: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("thread pool: {0}")]
    Threads(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Iso,
    Ext,
    /// Isolated vertices at height at most `4 ln R`.
    IsoCut,
    /// Extreme vertices at height at most `4 ln R`.
    ExtCut,
}

impl Statistic {
    pub fn value(self, row: &CountRow) -> f64 {
        (match self {
            Statistic::Iso => row.s_iso,
            Statistic::Ext => row.s_ext,
            Statistic::IsoCut => row.s_iso_cut,
            Statistic::ExtCut => row.s_ext_cut,
        }) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningKind {
    NoPointsAbove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightRule {
    /// `R / (2 alpha) + ln ln R / (2 alpha)`.
    LogLogShift,
}

impl HeightRule {
    pub fn height(self, params: &ModelParams) -> f64 {
        let (r, a) = (params.radius(), params.alpha());
        match self {
            HeightRule::LogLogShift => (r + r.ln().ln()) / (2.0 * a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditioning {
    pub kind: ConditioningKind,
    pub height: HeightRule,
}

fn all_statistics() -> Vec<Statistic> {
    vec![Statistic::Iso, Statistic::Ext, Statistic::IsoCut, Statistic::ExtCut]
}

fn default_budget() -> f64 {
    2e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alphas: Vec<f64>,
    pub nu: f64,
    pub n_grid: Vec<u64>,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default = "all_statistics")]
    pub statistics: Vec<Statistic>,
    #[serde(default)]
    pub conditioning: Option<Conditioning>,
    /// Overrides the default `5 ln R` slack height.
    #[serde(default)]
    pub slack_height: Option<f64>,
    /// Upper limit on the expected number of sampled points over all runs.
    #[serde(default = "default_budget")]
    pub max_points: f64,
    #[serde(default)]
    pub degree_law: Option<DegreeLawSpec>,
    #[serde(default)]
    pub stabilization: Option<StabilizationSpec>,
}

/// Pooled degree-law run at one size, for every alpha of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeLawSpec {
    pub n: u64,
    pub replicates: usize,
}

fn default_t_grid() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]
}

fn default_min_exceed() -> usize {
    30
}

/// Stabilization-tail calibration on limit-process samples, for every alpha of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizationSpec {
    pub n_grid: Vec<u64>,
    pub replicates: usize,
    #[serde(default = "default_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_min_exceed")]
    pub min_exceed: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidConfig(m));
        if self.alphas.is_empty() {
            return bad("alphas must be non-empty".into());
        }
        let extras = self.degree_law.is_some() || self.stabilization.is_some();
        if self.n_grid.is_empty() && !extras {
            return bad("n_grid must be non-empty".into());
        }
        if !self.n_grid.is_empty() && self.replicates < 1 {
            return bad("replicates must be positive".into());
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return bad("n_grid must be strictly increasing".into());
        }
        for &a in &self.alphas {
            for &n in &self.n_grid {
                make_params(a, self.nu, n as f64, self.slack_height)?;
            }
        }
        let mut per_alpha = self.replicates as f64 * self.n_grid.iter().sum::<u64>() as f64;
        if let Some(d) = &self.degree_law {
            if d.replicates < 1 {
                return bad("degree_law.replicates must be positive".into());
            }
            make_params(self.alphas[0], self.nu, d.n as f64, None)?;
            per_alpha += d.replicates as f64 * d.n as f64;
        }
        if let Some(st) = &self.stabilization {
            if st.replicates < 1 || st.n_grid.is_empty() || st.t_grid.is_empty() {
                return bad("stabilization needs replicates, n_grid and t_grid".into());
            }
            if !st.n_grid.windows(2).all(|w| w[0] < w[1]) {
                return bad("stabilization.n_grid must be strictly increasing".into());
            }
            if st.t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return bad("stabilization.t_grid must hold positive distances".into());
            }
            for &n in &st.n_grid {
                make_params(self.alphas[0], self.nu, n as f64, None)?;
            }
            per_alpha += st.replicates as f64 * st.n_grid.iter().sum::<u64>() as f64;
        }
        let requested = self.alphas.len() as f64 * per_alpha;
        if requested > self.max_points {
            return Err(ExperimentError::BudgetExceeded {
                requested,
                budget: self.max_points,
            });
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        toml::from_str(text).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::InvalidConfig(e.to_string()))
    }
}

/// One replicate of one `(alpha, n)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub alpha: f64,
    pub n: u64,
    pub replicate: usize,
    pub seed: u64,
    pub n_points: usize,
    pub s_iso: u64,
    pub s_ext: u64,
    pub s_iso_cut: u64,
    pub s_ext_cut: u64,
    pub mean_degree: f64,
    /// Height of the highest point, used for conditioning.
    pub max_height: f64,
}

// Separate seed streams so side runs never reuse the count replicates' seeds.
const DEGREE_STREAM: u64 = 0x6465_6772;
const STABILIZATION_STREAM: u64 = 0x7374_6162;

/// Seed of replicate `k` in the cell `(alpha, n)`.
///
/// Keyed by the cell values, so a replicate keeps its seed when the grid changes.
pub fn replicate_seed(master: u64, alpha: f64, n: u64, k: usize) -> u64 {
    mix_seed(mix_seed(mix_seed(master, alpha.to_bits()), n), k as u64)
}

pub fn simulate_replicate(
    params: &ModelParams,
    n: u64,
    replicate: usize,
    seed: u64,
) -> Result<CountRow, ExperimentError> {
    let ps = sample_disc(params, seed)?;
    let g = build_fast(&ps);
    let c = count_scores(&ps, &g);
    Ok(CountRow {
        alpha: params.alpha(),
        n,
        replicate,
        seed,
        n_points: ps.len(),
        s_iso: c.s_iso,
        s_ext: c.s_ext,
        s_iso_cut: c.s_iso_cut,
        s_ext_cut: c.s_ext_cut,
        mean_degree: if ps.is_empty() {
            0.0
        } else {
            2.0 * g.n_edges() as f64 / ps.len() as f64
        },
        max_height: ps.max_height(),
    })
}

/// Runs every cell; `on_cell` sees each finished cell in grid order.
///
/// Rows are produced in `(alpha, n, replicate)` order whatever the thread count.
pub fn run_counts<F: FnMut(&[CountRow])>(
    config: &ExperimentConfig,
    threads: Option<usize>,
    mut on_cell: F,
) -> Result<Vec<CountRow>, ExperimentError> {
    config.validate()?;
    let pool = thread_pool(threads)?;
    counts_in(&pool, config, &mut on_cell)
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, ExperimentError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    builder
        .build()
        .map_err(|e| ExperimentError::Threads(e.to_string()))
}

fn counts_in<F: FnMut(&[CountRow])>(
    pool: &rayon::ThreadPool,
    config: &ExperimentConfig,
    on_cell: &mut F,
) -> Result<Vec<CountRow>, ExperimentError> {
    let mut rows = Vec::new();
    for &alpha in &config.alphas {
        for &n in &config.n_grid {
            let params = make_params(alpha, config.nu, n as f64, config.slack_height)?;
            let cell: Result<Vec<CountRow>, ExperimentError> = pool.install(|| {
                (0..config.replicates)
                    .into_par_iter()
                    .map(|k| {
                        simulate_replicate(&params, n, k, replicate_seed(config.master_seed, alpha, n, k))
                    })
                    .collect()
            });
            let cell = cell?;
            on_cell(&cell);
            rows.extend(cell);
        }
    }
    Ok(rows)
}

pub const COUNTS_HEADER: [&str; 10] = [
    "alpha",
    "n",
    "replicate",
    "seed",
    "N",
    "s_iso",
    "s_ext",
    "s_iso_H",
    "s_ext_H",
    "mean_degree",
];

pub fn write_counts_header<W: Write>(w: &mut csv::Writer<W>) -> Result<(), ExperimentError> {
    w.write_record(COUNTS_HEADER)?;
    Ok(())
}

pub fn write_count_rows<W: Write>(w: &mut csv::Writer<W>, rows: &[CountRow]) -> Result<(), ExperimentError> {
    for r in rows {
        w.write_record([
            r.alpha.to_string(),
            r.n.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            r.n_points.to_string(),
            r.s_iso.to_string(),
            r.s_ext.to_string(),
            r.s_iso_cut.to_string(),
            r.s_ext_cut.to_string(),
            format!("{:.17e}", r.mean_degree),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn cell_rows<'a>(rows: &'a [CountRow], alpha: f64, n: u64) -> Vec<&'a CountRow> {
    rows.iter().filter(|r| r.alpha == alpha && r.n == n).collect()
}

fn values(rows: &[&CountRow], stat: Statistic) -> Vec<f64> {
    rows.iter().map(|r| stat.value(r)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NormalConsistent,
    NotNormalConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityStats {
    pub replicates: usize,
    pub ks: f64,
    /// `1.5 * 1.63 / sqrt(replicates)`.
    pub ks_threshold: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Present only with enough replicates.
    pub verdict: Option<Verdict>,
}

/// KS distance of the standardized sample to N(0, 1), with shape statistics.
pub fn normality_test(samples: &[f64]) -> NormalityStats {
    let m = samples.len();
    let ks = ks_to_normal(samples);
    let ks_threshold = 1.5 * 1.63 / (m as f64).sqrt();
    NormalityStats {
        replicates: m,
        ks,
        ks_threshold,
        skewness: skewness(samples),
        excess_kurtosis: excess_kurtosis(samples),
        verdict: (m >= MIN_VERDICT_REPLICATES).then_some(if ks < ks_threshold {
            Verdict::NormalConsistent
        } else {
            Verdict::NotNormalConsistent
        }),
    }
}

/// Non-normal signature: `|skewness| > 0.5` in each of the given cells, all with enough replicates.
pub fn non_normal_signature(cells: &[NormalityStats]) -> bool {
    !cells.is_empty()
        && cells
            .iter()
            .all(|c| c.replicates >= MIN_VERDICT_REPLICATES && c.skewness.abs() > 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatSummary {
    pub statistic: Statistic,
    pub mean: Interval,
    pub variance: Interval,
    pub normality: NormalityStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub alpha: f64,
    pub n: u64,
    pub replicates: usize,
    pub mean_points: f64,
    pub mean_degree: f64,
    pub statistics: Vec<StatSummary>,
}

pub fn summarize_cell(rows: &[&CountRow], statistics: &[Statistic]) -> Option<CellSummary> {
    let first = rows.first()?;
    let mut out = Vec::new();
    if rows.len() >= MIN_REPLICATES {
        for &s in statistics {
            let v = values(rows, s);
            let mut normality = normality_test(&v);
            if first.alpha == 1.0 {
                // Boundary case: statistics are descriptive only.
                normality.verdict = None;
            }
            out.push(StatSummary {
                statistic: s,
                mean: jackknife_mean(&v),
                variance: jackknife_variance(&v),
                normality,
            });
        }
    }
    Some(CellSummary {
        alpha: first.alpha,
        n: first.n,
        replicates: rows.len(),
        mean_points: rows.iter().map(|r| r.n_points as f64).sum::<f64>() / rows.len() as f64,
        mean_degree: rows.iter().map(|r| r.mean_degree).sum::<f64>() / rows.len() as f64,
        statistics: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationRow {
    pub alpha: f64,
    pub n: u64,
    pub statistic: Statistic,
    pub mean_over_n: f64,
    pub limit: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationTrend {
    pub alpha: f64,
    pub statistic: Statistic,
    pub first_gap: f64,
    pub last_gap: f64,
    /// Gap at the largest `n` below the gap at the smallest `n`.
    pub improving: bool,
    /// Gaps strictly decrease along the grid.
    pub monotone: bool,
}

/// Parameters for evaluating n-free limit constants; any admissible n gives the same values.
pub fn limit_params(alpha: f64, nu: f64) -> Result<ModelParams, ExperimentError> {
    Ok(make_params(alpha, nu, nu * 1e6, None)?)
}

/// Limit constants of `E[S_iso] / n` and `E[S_ext] / n`.
pub fn limit_constants(alpha: f64, nu: f64, spec: &QuadratureSpec) -> Result<(f64, f64), ExperimentError> {
    let p = limit_params(alpha, nu)?;
    Ok((iso_expectation_constant(&p, spec)?, ext_expectation_constant(&p, spec)?))
}

pub fn expectation_convergence(
    rows: &[CountRow],
    alphas: &[f64],
    nu: f64,
    n_grid: &[u64],
    spec: &QuadratureSpec,
) -> Result<(Vec<ExpectationRow>, Vec<ExpectationTrend>), ExperimentError> {
    let mut table = Vec::new();
    let mut trends = Vec::new();
    for &alpha in alphas {
        let (iso, ext) = limit_constants(alpha, nu, spec)?;
        for (stat, limit) in [(Statistic::Iso, iso), (Statistic::Ext, ext)] {
            let mut gaps = Vec::new();
            for &n in n_grid {
                let cell = cell_rows(rows, alpha, n);
                if cell.is_empty() {
                    continue;
                }
                let m = mean(&values(&cell, stat)) / n as f64;
                let gap = (m - limit).abs() / limit;
                gaps.push(gap);
                table.push(ExpectationRow {
                    alpha,
                    n,
                    statistic: stat,
                    mean_over_n: m,
                    limit,
                    relative_gap: gap,
                });
            }
            if gaps.len() >= 2 {
                trends.push(ExpectationTrend {
                    alpha,
                    statistic: stat,
                    first_gap: gaps[0],
                    last_gap: *gaps.last().unwrap(),
                    improving: gaps.last().unwrap() < &gaps[0],
                    monotone: gaps.windows(2).all(|w| w[1] < w[0]),
                });
            }
        }
    }
    Ok((table, trends))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceFit {
    pub alpha: f64,
    pub statistic: Statistic,
    /// `(n, variance)` per grid point.
    pub points: Vec<(u64, f64)>,
    pub fit: LineFit,
    /// `max / min` of `Var / (n ln n)` over the grid.
    pub n_log_n_spread: f64,
}

/// Fit of `ln Var` against `ln n`; `None` with fewer than 4 usable grid points.
pub fn variance_scaling(rows: &[CountRow], alpha: f64, stat: Statistic, n_grid: &[u64]) -> Option<VarianceFit> {
    let points: Vec<(u64, f64)> = n_grid
        .iter()
        .filter_map(|&n| {
            let cell = cell_rows(rows, alpha, n);
            (cell.len() >= MIN_REPLICATES).then(|| (n, variance(&values(&cell, stat))))
        })
        .filter(|p| p.1 > 0.0)
        .collect();
    if points.len() < 4 {
        return None;
    }
    let fit = fit_line(
        &points
            .iter()
            .map(|&(n, v)| ((n as f64).ln(), v.ln()))
            .collect::<Vec<_>>(),
    );
    let ratios: Vec<f64> = points
        .iter()
        .map(|&(n, v)| v / (n as f64 * (n as f64).ln()))
        .collect();
    let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(VarianceFit {
        alpha,
        statistic: stat,
        points,
        fit,
        n_log_n_spread: spread,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalRow {
    pub alpha: f64,
    pub n: u64,
    pub height: f64,
    pub replicates: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub variance_all: f64,
    pub variance_conditional: f64,
    pub ratio: f64,
    pub warning: Option<String>,
}

/// `Var[S_iso | no point above h] / Var[S_iso]` by discarding replicates.
pub fn conditional_variance(
    rows: &[CountRow],
    alpha: f64,
    nu: f64,
    n: u64,
    cond: &Conditioning,
) -> Result<Option<ConditionalRow>, ExperimentError> {
    let cell = cell_rows(rows, alpha, n);
    if cell.len() < MIN_REPLICATES {
        return Ok(None);
    }
    let params = make_params(alpha, nu, n as f64, None)?;
    let h = cond.height.height(&params);
    let kept: Vec<&CountRow> = cell.iter().copied().filter(|r| r.max_height <= h).collect();
    let rate = kept.len() as f64 / cell.len() as f64;
    let all = variance(&values(&cell, Statistic::Iso));
    let cond_var = if kept.len() >= 2 {
        variance(&values(&kept, Statistic::Iso))
    } else {
        f64::NAN
    };
    let mut warning = None;
    if rate < 0.1 {
        warning = Some(format!(
            "conditioning event kept only {:.1}% of replicates at alpha = {alpha}, n = {n}",
            100.0 * rate
        ));
    }
    if !(0.5..1.0).contains(&alpha) {
        let note = format!("alpha = {alpha} is outside (1/2, 1); conditioning run is a control");
        warning = Some(warning.map_or(note.clone(), |w| format!("{w}; {note}")));
    }
    Ok(Some(ConditionalRow {
        alpha,
        n,
        height: h,
        replicates: cell.len(),
        accepted: kept.len(),
        acceptance_rate: rate,
        variance_all: all,
        variance_conditional: cond_var,
        ratio: cond_var / all,
        warning,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    pub expectation: Vec<ExpectationRow>,
    pub expectation_trends: Vec<ExpectationTrend>,
    pub variance: Vec<VarianceFit>,
    pub conditional: Vec<ConditionalRow>,
    pub degree_law: Vec<DegreeLawReport>,
    pub stabilization: Vec<StabilizationSeries>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationSeries {
    pub alpha: f64,
    pub runs: Vec<StabilizationReport>,
    /// `max / min` of the calibrated constant over the grid.
    pub spread: f64,
}

/// Counts, report and the optional degree-law and stabilization runs.
pub fn run_experiment<F: FnMut(&[CountRow])>(
    config: &ExperimentConfig,
    threads: Option<usize>,
    mut on_cell: F,
) -> Result<(Vec<CountRow>, ExperimentReport), ExperimentError> {
    config.validate()?;
    let pool = thread_pool(threads)?;
    let rows = counts_in(&pool, config, &mut on_cell)?;
    let mut report = build_report(config, &rows)?;
    pool.install(|| -> Result<(), ExperimentError> {
        for &a in &config.alphas {
            if let Some(d) = &config.degree_law {
                let r = degree_law(a, config.nu, d.n, d.replicates, config.master_seed)?;
                if r.degenerate {
                    report
                        .warnings
                        .push(format!("degree law at alpha = {a}: graph has no edges"));
                }
                report.degree_law.push(r);
            }
            if let Some(st) = &config.stabilization {
                let runs = st
                    .n_grid
                    .iter()
                    .map(|&n| {
                        stabilization_tail(a, config.nu, n, st.replicates, config.master_seed, &st.t_grid, st.min_exceed)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let cs = runs.iter().map(|r| r.constant);
                let spread = cs.clone().fold(0.0, f64::max) / cs.fold(f64::INFINITY, f64::min);
                report.stabilization.push(StabilizationSeries { alpha: a, runs, spread });
            }
        }
        Ok(())
    })?;
    Ok((rows, report))
}

pub fn build_report(config: &ExperimentConfig, rows: &[CountRow]) -> Result<ExperimentReport, ExperimentError> {
    let mut warnings = Vec::new();
    let cells: Vec<CellSummary> = config
        .alphas
        .iter()
        .flat_map(|&a| config.n_grid.iter().map(move |&n| (a, n)))
        .filter_map(|(a, n)| summarize_cell(&cell_rows(rows, a, n), &config.statistics))
        .collect();
    if config.replicates < MIN_REPLICATES {
        warnings.push(format!(
            "{} replicates per cell: moments need at least {MIN_REPLICATES}",
            config.replicates
        ));
    }
    let (expectation, expectation_trends) = if config.n_grid.len() >= 3 {
        expectation_convergence(rows, &config.alphas, config.nu, &config.n_grid, &QuadratureSpec::default())?
    } else {
        (Vec::new(), Vec::new())
    };
    let mut variance = Vec::new();
    if config.replicates >= MIN_SLOPE_REPLICATES {
        for &a in &config.alphas {
            for &s in &config.statistics {
                variance.extend(variance_scaling(rows, a, s, &config.n_grid));
            }
        }
    }
    let mut conditional = Vec::new();
    if let Some(cond) = &config.conditioning {
        for &a in &config.alphas {
            for &n in &config.n_grid {
                if let Some(row) = conditional_variance(rows, a, config.nu, n, cond)? {
                    warnings.extend(row.warning.clone());
                    conditional.push(row);
                }
            }
        }
    }
    Ok(ExperimentReport {
        config: config.clone(),
        cells,
        expectation,
        expectation_trends,
        variance,
        conditional,
        degree_law: Vec::new(),
        stabilization: Vec::new(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeLawReport {
    pub alpha: f64,
    pub nu: f64,
    pub n: u64,
    pub replicates: usize,
    pub mean_degree: f64,
    pub limit: f64,
    pub relative_gap: f64,
    pub tail: Option<TailFit>,
    /// No edges at all: nothing to fit.
    pub degenerate: bool,
}

/// Mean degree and pooled degree tail over independent replicates.
pub fn degree_law(
    alpha: f64,
    nu: f64,
    n: u64,
    replicates: usize,
    master_seed: u64,
) -> Result<DegreeLawReport, ExperimentError> {
    let params = make_params(alpha, nu, n as f64, None)?;
    let per: Result<Vec<Vec<usize>>, ExperimentError> = (0..replicates)
        .into_par_iter()
        .map(|k| {
            let ps = sample_disc(&params, replicate_seed(mix_seed(master_seed, DEGREE_STREAM), alpha, n, k))?;
            Ok(build_fast(&ps).degrees())
        })
        .collect();
    let degrees: Vec<usize> = per?.concat();
    let stats = degree_stats_pooled(&degrees, None);
    let limit = params.limit_mean_degree();
    Ok(DegreeLawReport {
        alpha,
        nu,
        n,
        replicates,
        mean_degree: stats.mean_degree,
        limit,
        relative_gap: (stats.mean_degree - limit).abs() / limit,
        tail: stats.tail,
        degenerate: stats.max_degree == 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationReport {
    pub n: u64,
    /// Smallest `c` with `P(radius >= t) <= c e^{alpha y / 2} e^{-phi(t)}` on every usable cell.
    pub constant: f64,
    pub cells_used: usize,
    pub vertices: usize,
}

/// Calibrates the stabilization tail constant on limit-process samples.
///
/// Heights are binned by unit intervals below the cutoff; each bin is
/// compared against its lower edge, where the bound is tightest. Only cells
/// with at least `min_exceed` exceedances enter, to keep noise out of the maximum.
pub fn stabilization_tail(
    alpha: f64,
    nu: f64,
    n: u64,
    replicates: usize,
    master_seed: u64,
    t_grid: &[f64],
    min_exceed: usize,
) -> Result<StabilizationReport, ExperimentError> {
    let params = make_params(alpha, nu, n as f64, None)?;
    let radii: Result<Vec<Vec<(f64, f64)>>, ExperimentError> = (0..replicates)
        .into_par_iter()
        .map(|k| {
            let seed = replicate_seed(mix_seed(master_seed, STABILIZATION_STREAM), alpha, n, k);
            let ps = sample_band(&params, seed, params.radius())?;
            let g = build_fast(&ps);
            let r = stabilization_radii(&ps, &g)?;
            Ok(r.iter()
                .zip(&ps.band)
                .filter_map(|(r, b)| r.map(|r| (b.y, r)))
                .collect())
        })
        .collect();
    let radii = radii?.concat();
    let n_bins = params.cutoff_height().floor() as usize;
    let mut constant: f64 = 0.0;
    let mut used = 0;
    for b in 0..n_bins {
        let in_bin: Vec<f64> = radii
            .iter()
            .filter(|(y, _)| *y >= b as f64 && *y < (b + 1) as f64)
            .map(|p| p.1)
            .collect();
        if in_bin.is_empty() {
            continue;
        }
        for &t in t_grid {
            let exceed = in_bin.iter().filter(|&&r| r >= t).count();
            if exceed < min_exceed {
                continue;
            }
            let p = exceed as f64 / in_bin.len() as f64;
            let envelope = (alpha * b as f64 / 2.0 - stabilization_tail_exponent(t, &params)).exp();
            constant = constant.max(p / envelope);
            used += 1;
        }
    }
    Ok(StabilizationReport {
        n,
        constant,
        cells_used: used,
        vertices: radii.len(),
    })
}
