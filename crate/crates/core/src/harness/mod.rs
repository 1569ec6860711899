//! Seeded sweep harness.
//!
//! A sweep runs every (topology, density, seed) point of a config: generate a
//! bundle, shuffle its rows into k folds and, per fold, standardize with the
//! training statistics, fit each method on the training rows and score the
//! held-out rows against the bundle's ground truth. Points run in parallel on
//! the rayon pool; every point owns its own random sub-streams, so the rows
//! do not depend on scheduling. Fits that fail become rows with a failure
//! message instead of aborting the sweep.

mod config;
mod plot;
mod tables;
mod tune;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Axis;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    default_penalties, load_config, load_config_with, parse_config, Arm, ExperimentConfig, GlassoSettings, Preset,
    RawConfig, Regime, DEFAULT_DENSITY_GRID,
};
pub use plot::{emit_density_plot, PlotMetric};
pub use tables::{aggregate_tables, Table, TableRow, Tables};
pub use tune::{select_penalties, PenaltyCandidate, PenaltyChoice, PenaltySearch};

use crate::datagen::{column_stats, generate_bundle, standardize_with, SyntheticBundle};
use crate::error::{Error, Result};
use crate::graphs::{density_to_params, Topology};
use crate::metrics::{alignment, laplacian_energy, r2_global, selectivity, MetricsReport};
use crate::models::{fit_grpca, fit_pca, fit_sparse_pca, reconstruct, FactorModel, GrpcaConfig};
use crate::numerics::{Matrix, RandomSource};
use crate::precision::{glasso_cv, oracle_precision, CvOptions, GlassoOptions, PrecisionEstimate};

const FOLD_STREAM: u64 = 0xF01D;

/// Generator seed of one sweep point. Depends on the seed, topology and
/// density value only, so the same point gets the same bundle whatever else
/// the grid contains.
pub fn point_seed(seed: u64, topology: Topology, density: f64) -> u64 {
    let tag = density.to_bits().rotate_left(8) ^ topology as u64;
    RandomSource::new(seed).substream(tag).seed()
}

/// Training and held-out rows of one fold, standardized with training
/// statistics.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub train: Matrix,
    pub test: Matrix,
}

/// Row permutation used to cut folds for a bundle.
pub fn fold_permutation(bundle: &SyntheticBundle) -> Vec<usize> {
    let n = bundle.x.nrows();
    let mut rs = RandomSource::new(bundle.config.seed).substream(FOLD_STREAM);
    index::sample(&mut rs, n, n).into_vec()
}

/// Splits `x` into `k` folds over the permuted rows.
pub fn make_folds(x: &Matrix, permutation: &[usize], k: usize) -> Vec<FoldData> {
    crate::precision::fold_ranges(permutation.len(), k)
        .into_iter()
        .map(|range| {
            let test_idx = &permutation[range.clone()];
            let train_idx: Vec<usize> = permutation[..range.start]
                .iter()
                .chain(&permutation[range.end..])
                .copied()
                .collect();
            let train_raw = x.select(Axis(0), &train_idx);
            let test_raw = x.select(Axis(0), test_idx);
            let (means, stds) = column_stats(&train_raw);
            FoldData {
                train: standardize_with(&train_raw, &means, &stds),
                test: standardize_with(&test_raw, &means, &stds),
            }
        })
        .collect()
}

/// Solver settings with the per-sample penalties scaled to `n_train` rows.
pub fn scaled_model(model: &GrpcaConfig, n_train: usize) -> GrpcaConfig {
    GrpcaConfig {
        alpha: model.alpha * n_train as f64,
        lambda: model.lambda * n_train as f64,
        ..model.clone()
    }
}

/// Learned precision for one training fold.
pub fn learn_precision(train: &Matrix, settings: &GlassoSettings) -> Result<PrecisionEstimate> {
    let opts = CvOptions {
        k_folds: settings.folds,
        path: None,
        path_len: settings.path_len,
        glasso: GlassoOptions {
            tol: settings.tol,
            max_iter: settings.max_iter,
            lasso_tol: settings.lasso_tol,
            ..GlassoOptions::default()
        },
    };
    glasso_cv(train, &opts)
}

/// GR-PCA on the support graph of `precision`. The oracle and learned arms
/// share this path and differ only in the estimate passed in.
pub fn fit_with_precision(train: &Matrix, precision: &PrecisionEstimate, model: &GrpcaConfig) -> Result<FactorModel> {
    fit_grpca(train, &precision.support_graph, &scaled_model(model, train.nrows()))
}

/// Scores of one fitted model on a held-out fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldScores {
    pub r2_true: f64,
    pub r2_nuis: f64,
    pub selectivity: f64,
    pub alignment: f64,
    pub r2_global: f64,
    pub laplacian_energy: f64,
    pub matching: Vec<crate::metrics::MatchedPair>,
}

pub fn score_model(model: &FactorModel, test: &Matrix, bundle: &SyntheticBundle) -> Result<FoldScores> {
    if model.all_zero {
        return Err(Error::InvalidParameter("every loading was thresholded to zero".into()));
    }
    let xhat = reconstruct(model, test)?;
    let sel = selectivity(test, &xhat, &bundle.v_star, &bundle.v_nu)?;
    let al = alignment(&model.v, &bundle.v_star)?;
    Ok(FoldScores {
        r2_true: sel.r2_true,
        r2_nuis: sel.r2_nuis,
        selectivity: sel.delta,
        alignment: al.score,
        r2_global: r2_global(test, &xhat)?,
        laplacian_energy: laplacian_energy(&bundle.graph, &model.v)?,
        matching: al.matching,
    })
}

/// Labels shared by every row of one sweep point.
#[derive(Debug, Clone)]
struct PointLabels {
    regime: Regime,
    topology: Topology,
    target_density: f64,
    achieved_density: f64,
    seed: u64,
}

fn report(labels: &PointLabels, arm: Arm, fold: usize, outcome: Result<(FoldScores, bool)>) -> MetricsReport {
    let mut row = MetricsReport {
        method: arm.label().to_string(),
        regime: labels.regime.label().to_string(),
        topology: labels.topology.label().to_string(),
        target_density: labels.target_density,
        achieved_density: labels.achieved_density,
        seed: labels.seed,
        fold,
        r2_true: f64::NAN,
        r2_nuis: f64::NAN,
        selectivity: f64::NAN,
        alignment: f64::NAN,
        r2_global: f64::NAN,
        laplacian_energy: f64::NAN,
        matching: Vec::new(),
        converged: false,
        failure: None,
    };
    match outcome {
        Ok((s, converged)) => {
            row.r2_true = s.r2_true;
            row.r2_nuis = s.r2_nuis;
            row.selectivity = s.selectivity;
            row.alignment = s.alignment;
            row.r2_global = s.r2_global;
            row.laplacian_energy = s.laplacian_energy;
            row.matching = s.matching;
            row.converged = converged;
        }
        Err(e) => row.failure = Some(e.to_string()),
    }
    row
}

/// Fits and scores one arm on one fold.
pub fn run_arm(
    arm: Arm,
    fold: &FoldData,
    bundle: &SyntheticBundle,
    cfg: &ExperimentConfig,
    oracle: &PrecisionEstimate,
) -> Result<(FoldScores, bool)> {
    let model_cfg = scaled_model(&cfg.model, fold.train.nrows());
    let (model, precision_converged) = match arm {
        Arm::Pca => (fit_pca(&fold.train, cfg.model.r)?, true),
        Arm::SparsePca => (fit_sparse_pca(&fold.train, &model_cfg)?, true),
        Arm::GrpcaOracle => (fit_with_precision(&fold.train, oracle, &cfg.model)?, true),
        Arm::GrpcaLearned => {
            let learned = learn_precision(&fold.train, &cfg.glasso)?;
            let model = fit_with_precision(&fold.train, &learned, &cfg.model)?;
            (model, learned.diagnostics.converged)
        }
    };
    let scores = score_model(&model, &fold.test, bundle)?;
    let converged = match arm {
        Arm::Pca => true,
        _ => model.converged && precision_converged,
    };
    Ok((scores, converged))
}

/// Generator settings of one sweep point.
pub fn point_generator(cfg: &ExperimentConfig, seed: u64, topology: Topology, density: f64) -> crate::datagen::GeneratorConfig {
    crate::datagen::GeneratorConfig {
        seed: point_seed(seed, topology, density),
        ..cfg.generator.clone()
    }
}

/// Bundle of one sweep point.
pub fn point_bundle(cfg: &ExperimentConfig, seed: u64, topology: Topology, density: f64) -> Result<SyntheticBundle> {
    let (kind, _) = density_to_params(topology, cfg.generator.p, density)?;
    generate_bundle(kind, &point_generator(cfg, seed, topology, density))
}

fn run_point(cfg: &ExperimentConfig, topology: Topology, density: f64, seed: u64) -> Vec<MetricsReport> {
    let mut labels = PointLabels {
        regime: cfg.regime,
        topology,
        target_density: density,
        achieved_density: f64::NAN,
        seed,
    };
    let bundle = match point_bundle(cfg, seed, topology, density) {
        Ok(b) => b,
        Err(e) => {
            log::warn!("{topology} density {density} seed {seed}: {e}");
            let message = e.to_string();
            return (0..cfg.folds)
                .flat_map(|fold| {
                    let labels = &labels;
                    let message = message.clone();
                    cfg.methods
                        .iter()
                        .map(move |&arm| report(labels, arm, fold, Err(Error::InvalidParameter(message.clone()))))
                })
                .collect();
        }
    };
    labels.achieved_density = bundle.achieved_density();
    let oracle = oracle_precision(&bundle.theta_true);
    let folds = make_folds(&bundle.x, &fold_permutation(&bundle), cfg.folds);
    let mut rows = Vec::with_capacity(cfg.folds * cfg.methods.len());
    for (f, fold) in folds.iter().enumerate() {
        for &arm in &cfg.methods {
            let outcome = match &oracle {
                Ok(o) => run_arm(arm, fold, &bundle, cfg, o),
                Err(e) => Err(Error::InvalidParameter(format!("oracle precision: {e}"))),
            };
            if let Err(e) = &outcome {
                log::warn!("{} {topology} density {density} seed {seed} fold {f}: {e}", arm.label());
            }
            rows.push(report(&labels, arm, f, outcome));
        }
    }
    log::info!("{} {topology} density {density} seed {seed}: done", cfg.regime.label());
    rows
}

/// Order used for rows on disk: regime, topology, density, seed, fold, method.
pub fn sort_rows(rows: &mut [MetricsReport]) {
    rows.sort_by(|a, b| {
        cell_key(a)
            .0
            .cmp(&cell_key(b).0)
            .then_with(|| a.regime.cmp(&b.regime))
            .then_with(|| Topology::parse(&a.topology).cmp(&Topology::parse(&b.topology)))
            .then_with(|| a.topology.cmp(&b.topology))
            .then_with(|| a.target_density.total_cmp(&b.target_density))
            .then_with(|| a.seed.cmp(&b.seed))
            .then_with(|| a.fold.cmp(&b.fold))
            .then_with(|| Arm::parse(&a.method).cmp(&Arm::parse(&b.method)))
            .then_with(|| a.method.cmp(&b.method))
    });
}

/// Mean and spread of one metric over the usable rows of a group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

/// Aggregate over one (method, regime, topology) cell, optionally restricted
/// to one target density. Failed rows are excluded from the summaries and
/// counted in `failed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub regime: String,
    pub topology: String,
    pub target_density: Option<f64>,
    pub achieved_density: f64,
    pub total: usize,
    pub failed: usize,
    pub nonconverged: usize,
    pub selectivity: Summary,
    pub alignment: Summary,
    pub r2_global: Summary,
    pub laplacian_energy: Summary,
}

impl Aggregate {
    fn of(rows: &[&MetricsReport], target_density: Option<f64>) -> Self {
        let ok: Vec<&&MetricsReport> = rows.iter().filter(|r| !r.failed()).collect();
        let collect = |f: fn(&MetricsReport) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
        let achieved: Vec<f64> = rows
            .iter()
            .map(|r| r.achieved_density)
            .filter(|d| d.is_finite())
            .collect();
        Self {
            method: rows[0].method.clone(),
            regime: rows[0].regime.clone(),
            topology: rows[0].topology.clone(),
            target_density,
            achieved_density: Summary::of(&achieved).mean,
            total: rows.len(),
            failed: rows.len() - ok.len(),
            nonconverged: ok.iter().filter(|r| !r.converged).count(),
            selectivity: Summary::of(&collect(|r| r.selectivity)),
            alignment: Summary::of(&collect(|r| r.alignment)),
            r2_global: Summary::of(&collect(|r| r.r2_global)),
            laplacian_energy: Summary::of(&collect(|r| r.laplacian_energy)),
        }
    }
}

/// Every row of a sweep and its aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<MetricsReport>,
    /// One entry per (method, regime, topology), densities pooled.
    pub overall: Vec<Aggregate>,
    /// One entry per (method, regime, topology, target density).
    pub by_density: Vec<Aggregate>,
}

type CellKey = (Option<Regime>, String, Option<Topology>, String, Option<Arm>, String);

fn cell_key(r: &MetricsReport) -> CellKey {
    (
        Regime::parse(&r.regime),
        r.regime.clone(),
        Topology::parse(&r.topology),
        r.topology.clone(),
        Arm::parse(&r.method),
        r.method.clone(),
    )
}

impl SweepResult {
    /// Sorts the rows and computes the aggregates.
    pub fn from_rows(mut rows: Vec<MetricsReport>) -> Self {
        sort_rows(&mut rows);
        let mut cells: BTreeMap<CellKey, Vec<&MetricsReport>> = BTreeMap::new();
        for r in &rows {
            cells.entry(cell_key(r)).or_default().push(r);
        }
        let mut overall = Vec::new();
        let mut by_density = Vec::new();
        for members in cells.values() {
            overall.push(Aggregate::of(members, None));
            let mut densities: Vec<f64> = members.iter().map(|r| r.target_density).collect();
            densities.sort_by(f64::total_cmp);
            densities.dedup();
            for d in densities {
                let at: Vec<&MetricsReport> = members.iter().copied().filter(|r| r.target_density == d).collect();
                by_density.push(Aggregate::of(&at, Some(d)));
            }
        }
        drop(cells);
        Self {
            rows,
            overall,
            by_density,
        }
    }

    pub fn overall_for(&self, method: &str, regime: &str, topology: &str) -> Option<&Aggregate> {
        self.overall
            .iter()
            .find(|a| a.method == method && a.regime == regime && a.topology == topology)
    }

    pub fn density_for(&self, method: &str, topology: &str, density: f64) -> Option<&Aggregate> {
        self.by_density
            .iter()
            .find(|a| a.method == method && a.topology == topology && a.target_density == Some(density))
    }
}

/// Runs every sweep point of `cfg` on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let points: Vec<(Topology, f64, u64)> = cfg
        .topologies
        .iter()
        .flat_map(|&t| {
            cfg.density_grid
                .iter()
                .flat_map(move |&d| cfg.seeds.iter().map(move |&s| (t, d, s)))
        })
        .collect();
    let rows: Vec<MetricsReport> = points
        .par_iter()
        .flat_map_iter(|&(t, d, s)| run_point(cfg, t, d, s))
        .collect();
    Ok(SweepResult::from_rows(rows))
}

/// [`run_experiment`] on a dedicated pool of `threads` workers (`None` uses
/// the global pool).
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SweepResult> {
    with_threads(threads, || run_experiment(cfg))?
}

/// Runs `f` on a pool of `threads` workers, or on the global pool for `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(f)),
    }
}

pub fn rows_to_csv(rows: &[MetricsReport]) -> String {
    let mut out = String::from(MetricsReport::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn read_rows(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == MetricsReport::CSV_HEADER => {}
        _ => {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: "missing or unexpected header".into(),
            })
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            MetricsReport::from_csv_row(l).map_err(|e| match e {
                Error::Parse { column, message, .. } => Error::Parse {
                    line: i + 2,
                    column,
                    message,
                },
                other => other,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attrition {
    pub total: usize,
    pub failed: usize,
    pub nonconverged: usize,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub crate_version: String,
    /// SHA-256 of the resolved config's canonical JSON.
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub rows: usize,
    /// Per method.
    pub attrition: BTreeMap<String, Attrition>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(cfg)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn manifest(cfg: &ExperimentConfig, result: &SweepResult) -> Result<Manifest> {
    let mut attrition: BTreeMap<String, Attrition> = BTreeMap::new();
    for r in &result.rows {
        let a = attrition.entry(r.method.clone()).or_insert(Attrition {
            total: 0,
            failed: 0,
            nonconverged: 0,
        });
        a.total += 1;
        if r.failed() {
            a.failed += 1;
        } else if !r.converged {
            a.nonconverged += 1;
        }
    }
    Ok(Manifest {
        format_version: 1,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(cfg)?,
        config: cfg.clone(),
        rows: result.rows.len(),
        attrition,
    })
}

/// Writes the three tables (CSV and text) into `dir`.
pub fn write_tables(result: &SweepResult, dir: &Path) -> Result<Tables> {
    let tables = aggregate_tables(result);
    for (name, t) in tables.named() {
        fs::write(dir.join(format!("tables_{name}.csv")), t.to_csv())?;
        fs::write(dir.join(format!("tables_{name}.txt")), t.to_text())?;
    }
    Ok(tables)
}

/// Writes one density plot per metric into `dir/plots`; metrics without
/// enough densities are skipped with a warning.
pub fn write_plots(result: &SweepResult, dir: &Path) -> Result<Vec<PlotMetric>> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut written = Vec::new();
    for metric in PlotMetric::ALL {
        match emit_density_plot(result, metric) {
            Ok(svg) => {
                fs::write(plots.join(format!("{}.svg", metric.label())), svg)?;
                written.push(metric);
            }
            Err(Error::InsufficientData(why)) => log::warn!("no {} plot: {why}", metric.label()),
            Err(e) => return Err(e),
        }
    }
    Ok(written)
}

/// Writes rows, tables, plots and the manifest of a finished sweep.
pub fn write_outputs(cfg: &ExperimentConfig, result: &SweepResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("rows.csv"), rows_to_csv(&result.rows))?;
    write_tables(result, dir)?;
    write_plots(result, dir)?;
    let m = manifest(cfg, result)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}
