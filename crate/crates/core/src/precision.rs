//! Sparse precision estimation: graphical lasso by block coordinate descent,
//! K-fold cross-validated penalty selection, oracle passthrough, a
//! thresholded-inverse fallback and import of external estimates.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::soft_threshold;
use crate::error::{Error, Result};
use crate::graphs::{adjacency_from_precision, FeatureGraph};
use crate::numerics::{cholesky, symmetrize, Matrix};

/// Support threshold for estimated precision matrices.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;
/// Tolerance on the smallest eigenvalue of an input covariance.
const PSD_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Oracle,
    GlassoCv,
    GlassoFixed,
    ThresholdedInverse,
    External,
}

/// Mean held-out log-likelihood of one penalty on the CV path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub penalty: f64,
    /// `None` when no fold produced a converged, positive-definite fit.
    pub mean_loglik: Option<f64>,
    pub converged_folds: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecisionDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Dual objective `−log det W` after each sweep (non-increasing). The
    /// starting point is not dual-feasible, so the trace begins after the
    /// first sweep.
    pub objective_trace: Vec<f64>,
    /// Whether every sweep kept the objective within `1e-9` of the previous one.
    pub monotone: bool,
    pub dual_gap: Option<f64>,
    pub cv_path: Vec<CvPoint>,
}

#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub theta: Matrix,
    pub penalty: f64,
    pub provenance: Provenance,
    pub support_graph: FeatureGraph,
    pub diagnostics: PrecisionDiagnostics,
}

impl PrecisionEstimate {
    fn new(theta: Matrix, penalty: f64, provenance: Provenance, threshold: f64, diagnostics: PrecisionDiagnostics) -> Result<Self> {
        let support_graph = adjacency_from_precision(&theta, threshold)?;
        Ok(Self {
            theta,
            penalty,
            provenance,
            support_graph,
            diagnostics,
        })
    }
}

/// `S = XᵀX / n` for column-centered `X`.
pub fn empirical_covariance(x: &Matrix) -> Result<Matrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    Ok(symmetrize(&(x.t().dot(x) / n as f64)))
}

fn centered(x: &Matrix, means: &Array1<f64>) -> Matrix {
    x - &means.view().insert_axis(Axis(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlassoOptions {
    /// Sweep tolerance relative to the mean absolute off-diagonal of `S`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative tolerance of the inner lasso coordinate descent.
    pub lasso_tol: f64,
    pub lasso_max_iter: usize,
}

impl Default for GlassoOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 100,
            lasso_tol: 1e-10,
            lasso_max_iter: 1000,
        }
    }
}

/// Working covariance `W` and per-column lasso coefficients, reusable as a
/// warm start along a penalty path.
#[derive(Debug, Clone)]
struct GlassoState {
    p: usize,
    w: Vec<f64>,
    /// Row `j` holds the lasso coefficients of column `j` (entry `j` unused).
    beta: Vec<f64>,
}

impl GlassoState {
    fn cold(s: &Matrix) -> Self {
        let p = s.nrows();
        let mut w = vec![0.0; p * p];
        for j in 0..p {
            w[j * p + j] = s[[j, j]];
        }
        Self {
            p,
            w,
            beta: vec![0.0; p * p],
        }
    }

    fn w_matrix(&self) -> Matrix {
        Array2::from_shape_vec((self.p, self.p), self.w.clone()).expect("square")
    }

    /// Precision implied by the stored coefficients.
    fn theta(&self) -> Matrix {
        let p = self.p;
        let mut theta = Array2::zeros((p, p));
        for j in 0..p {
            let b = &self.beta[j * p..(j + 1) * p];
            let w = &self.w[j * p..(j + 1) * p];
            let mut quad = 0.0;
            for k in 0..p {
                if k != j {
                    quad += w[k] * b[k];
                }
            }
            let tjj = 1.0 / (w[j] - quad);
            theta[[j, j]] = tjj;
            for k in 0..p {
                if k != j {
                    theta[[k, j]] = -b[k] * tjj;
                }
            }
        }
        symmetrize(&theta)
    }
}

fn log_det_w(state: &GlassoState) -> Option<f64> {
    cholesky(&state.w_matrix()).ok().map(|f| f.log_det())
}

fn mean_abs_offdiag(s: &Matrix) -> f64 {
    let p = s.nrows();
    if p < 2 {
        return 0.0;
    }
    let total: f64 = s.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, v)| v.abs()).sum();
    total / (p * (p - 1)) as f64
}

fn check_covariance(s: &Matrix) -> Result<()> {
    if s.nrows() != s.ncols() || s.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "covariance must be square and non-empty, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let shifted = s + &(Array2::<f64>::eye(s.nrows()) * PSD_SLACK);
    cholesky(&shifted)?;
    if let Some(j) = (0..s.nrows()).find(|&j| !(s[[j, j]] > 0.0)) {
        return Err(Error::NotPositiveDefinite { index: j, pivot: s[[j, j]] });
    }
    Ok(())
}

/// Solves the column-`j` lasso `min ½βᵀW₁₁β − s₁₂ᵀβ + ρ‖β‖₁` in place and
/// writes `W₁₁β` back into row and column `j` of `W`. Returns the summed
/// absolute change of `W`.
fn update_column(state: &mut GlassoState, s: &Matrix, j: usize, penalty: f64, opts: &GlassoOptions) -> f64 {
    let p = state.p;
    let w = &mut state.w;
    let beta = &mut state.beta[j * p..(j + 1) * p];
    // g = W₁₁β over the indices k ≠ j
    let mut g = vec![0.0; p];
    for l in 0..p {
        if l == j || beta[l] == 0.0 {
            continue;
        }
        let bl = beta[l];
        let col = &w[l * p..(l + 1) * p];
        for k in 0..p {
            g[k] += col[k] * bl;
        }
    }
    for _ in 0..opts.lasso_max_iter {
        let mut max_delta = 0.0f64;
        let mut max_beta = 0.0f64;
        for k in 0..p {
            if k == j {
                continue;
            }
            let wkk = w[k * p + k];
            let old = beta[k];
            let r = s[[j, k]] - (g[k] - wkk * old);
            let new = soft_threshold(r, penalty) / wkk;
            if new != old {
                let delta = new - old;
                beta[k] = new;
                let col = &w[k * p..(k + 1) * p];
                for l in 0..p {
                    g[l] += col[l] * delta;
                }
                max_delta = max_delta.max(delta.abs());
            }
            max_beta = max_beta.max(new.abs());
        }
        if max_delta <= opts.lasso_tol * max_beta.max(1e-12) {
            break;
        }
    }
    let mut change = 0.0;
    for k in 0..p {
        if k == j {
            continue;
        }
        change += 2.0 * (w[j * p + k] - g[k]).abs();
        w[j * p + k] = g[k];
        w[k * p + j] = g[k];
    }
    change
}

fn primal_objective(s: &Matrix, theta: &Matrix, penalty: f64) -> Option<f64> {
    let log_det = cholesky(theta).ok()?.log_det();
    let trace: f64 = (s * theta).sum();
    let l1: f64 = theta.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, v)| v.abs()).sum();
    Some(log_det - trace - penalty * l1)
}

fn run_glasso(s: &Matrix, penalty: f64, opts: &GlassoOptions, state: &mut GlassoState) -> PrecisionDiagnostics {
    let p = s.nrows();
    let scale = mean_abs_offdiag(s);
    let mut diag = PrecisionDiagnostics {
        monotone: true,
        ..Default::default()
    };
    if p == 1 {
        if let Some(ld) = log_det_w(state) {
            diag.objective_trace.push(-ld);
        }
        diag.converged = true;
        return diag;
    }
    for sweep in 1..=opts.max_iter {
        let mut change = 0.0;
        for j in 0..p {
            change += update_column(state, s, j, penalty, opts);
        }
        diag.iterations = sweep;
        if let Some(ld) = log_det_w(state) {
            if let Some(&prev) = diag.objective_trace.last() {
                if -ld > prev + 1e-9 {
                    diag.monotone = false;
                }
            }
            diag.objective_trace.push(-ld);
        }
        let mean_change = change / (p * (p - 1)) as f64;
        if mean_change <= opts.tol * scale {
            diag.converged = true;
            break;
        }
    }
    if !diag.converged {
        log::debug!("glasso at penalty {penalty} stopped after {} sweeps", diag.iterations);
    }
    diag
}

fn finish(s: &Matrix, penalty: f64, state: &GlassoState, mut diag: PrecisionDiagnostics, provenance: Provenance) -> Result<PrecisionEstimate> {
    let mut theta = state.theta();
    if cholesky(&theta).is_err() {
        // inconsistent coefficients from an unconverged run; fall back to W⁻¹
        diag.converged = false;
        theta = cholesky(&state.w_matrix())?.inverse();
    }
    let dual = diag.objective_trace.last().map(|d| d - s.nrows() as f64);
    diag.dual_gap = match (dual, primal_objective(s, &theta, penalty)) {
        (Some(d), Some(pr)) => Some(d - pr),
        _ => None,
    };
    PrecisionEstimate::new(theta, penalty, provenance, SUPPORT_THRESHOLD, diag)
}

/// Graphical lasso at a fixed penalty on the off-diagonal entries.
///
/// A run that exhausts `max_iter` returns its last iterate with
/// `diagnostics.converged = false` instead of an error.
pub fn glasso(s: &Matrix, penalty: f64, opts: &GlassoOptions) -> Result<PrecisionEstimate> {
    if !(penalty > 0.0) {
        return Err(Error::InvalidParameter(format!("glasso penalty must be > 0, got {penalty}")));
    }
    check_covariance(s)?;
    let mut state = GlassoState::cold(s);
    let diag = run_glasso(s, penalty, opts, &mut state);
    finish(s, penalty, &state, diag, Provenance::GlassoFixed)
}

/// `count` penalties log-spaced from `ρ_max` down to `0.01·ρ_max`, where
/// `ρ_max` is the largest absolute off-diagonal covariance.
pub fn default_path(s: &Matrix, count: usize) -> Vec<f64> {
    let p = s.nrows();
    let rho_max = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .fold(0.0f64, |m, (i, j)| m.max(s[[i, j]].abs()));
    if rho_max == 0.0 || count == 0 {
        return Vec::new();
    }
    if count == 1 {
        return vec![rho_max];
    }
    let lo = (0.01 * rho_max).ln();
    let hi = rho_max.ln();
    (0..count)
        .map(|i| (hi + (lo - hi) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k_folds: usize,
    /// Explicit penalty path; the default path is used when `None`.
    pub path: Option<Vec<f64>>,
    pub path_len: usize,
    pub glasso: GlassoOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            k_folds: 5,
            path: None,
            path_len: 20,
            glasso: GlassoOptions::default(),
        }
    }
}

/// Contiguous row ranges of `k` nearly equal folds.
pub fn fold_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn heldout_loglik(theta: &Matrix, s_test: &Matrix) -> Option<f64> {
    let log_det = cholesky(theta).ok()?.log_det();
    Some(log_det - (s_test * theta).sum())
}

/// Per-penalty held-out log-likelihoods of one fold (descending path, warm
/// started); `None` marks a failed or unconverged fit.
fn fold_scores(train: &Matrix, test: &Matrix, path: &[f64], opts: &GlassoOptions) -> Vec<Option<f64>> {
    let means = train.mean_axis(Axis(0)).expect("non-empty fold");
    let s_train = match empirical_covariance(&centered(train, &means)) {
        Ok(s) => s,
        Err(_) => return vec![None; path.len()],
    };
    if check_covariance(&s_train).is_err() {
        return vec![None; path.len()];
    }
    let xt = centered(test, &means);
    let s_test = xt.t().dot(&xt) / test.nrows() as f64;
    let mut state = GlassoState::cold(&s_train);
    path.iter()
        .map(|&rho| {
            let diag = run_glasso(&s_train, rho, opts, &mut state);
            if !diag.converged {
                return None;
            }
            heldout_loglik(&state.theta(), &s_test)
        })
        .collect()
}

/// K-fold cross-validated graphical lasso followed by a refit on all rows at
/// the selected penalty. Ties go to the larger penalty.
pub fn glasso_cv(x: &Matrix, opts: &CvOptions) -> Result<PrecisionEstimate> {
    let n = x.nrows();
    if opts.k_folds < 2 {
        return Err(Error::InvalidParameter(format!("k_folds must be >= 2, got {}", opts.k_folds)));
    }
    if n < opts.k_folds || n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let means = x.mean_axis(Axis(0)).expect("n >= 2");
    let s_full = empirical_covariance(&centered(x, &means))?;
    check_covariance(&s_full)?;

    let mut path = match &opts.path {
        Some(p) => p.clone(),
        None => default_path(&s_full, opts.path_len),
    };
    if path.is_empty() {
        if opts.path.is_some() {
            return Err(Error::InvalidParameter("penalty path is empty".into()));
        }
        // no off-diagonal covariance at all: the diagonal estimate is exact
        let theta = Array2::from_diag(&s_full.diag().mapv(|v| 1.0 / v));
        let diag = PrecisionDiagnostics {
            converged: true,
            monotone: true,
            ..Default::default()
        };
        return PrecisionEstimate::new(theta, 0.0, Provenance::GlassoCv, SUPPORT_THRESHOLD, diag);
    }
    if path.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidParameter("penalties must be positive and finite".into()));
    }
    path.sort_by(|a, b| b.total_cmp(a));
    path.dedup();

    let folds = fold_ranges(n, opts.k_folds);
    let per_fold: Vec<Vec<Option<f64>>> = folds
        .par_iter()
        .map(|range| {
            let test = x.slice(ndarray::s![range.clone(), ..]).to_owned();
            let keep: Vec<usize> = (0..n).filter(|i| !range.contains(i)).collect();
            let train = x.select(Axis(0), &keep);
            fold_scores(&train, &test, &path, &opts.glasso)
        })
        .collect();

    let cv_path: Vec<CvPoint> = path
        .iter()
        .enumerate()
        .map(|(i, &penalty)| {
            let scores: Vec<f64> = per_fold.iter().filter_map(|f| f[i]).collect();
            CvPoint {
                penalty,
                mean_loglik: (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64),
                converged_folds: scores.len(),
            }
        })
        .collect();

    let mut best: Option<&CvPoint> = None;
    for point in &cv_path {
        if let Some(score) = point.mean_loglik {
            // descending path: strict improvement keeps ties at the larger penalty
            if best.map_or(true, |b| score > b.mean_loglik.expect("scored")) {
                best = Some(point);
            }
        }
    }
    let chosen = best.ok_or(Error::AllFitsFailed)?.penalty;

    let mut state = GlassoState::cold(&s_full);
    for &rho in path.iter().take_while(|&&r| r > chosen) {
        run_glasso(&s_full, rho, &opts.glasso, &mut state);
    }
    let mut diag = run_glasso(&s_full, chosen, &opts.glasso, &mut state);
    diag.cv_path = cv_path;
    finish(&s_full, chosen, &state, diag, Provenance::GlassoCv)
}

/// Passes a known precision through; the support is its exact nonzeros.
pub fn oracle_precision(theta_true: &Matrix) -> Result<PrecisionEstimate> {
    cholesky(theta_true)?;
    let diag = PrecisionDiagnostics {
        converged: true,
        monotone: true,
        ..Default::default()
    };
    PrecisionEstimate::new(theta_true.clone(), 0.0, Provenance::Oracle, 0.0, diag)
}

/// Inverse of `S + ridge·I` with off-diagonal entries below `threshold` in
/// magnitude set to zero. The diagonal is raised until the result is
/// positive definite again.
pub fn thresholded_inverse(s: &Matrix, ridge: f64, threshold: f64) -> Result<PrecisionEstimate> {
    check_covariance(s)?;
    let p = s.nrows();
    let eye = Array2::<f64>::eye(p);
    let mut theta = cholesky(&(s + &(&eye * ridge.max(0.0))))?.inverse();
    for i in 0..p {
        for j in 0..p {
            if i != j && theta[[i, j]].abs() < threshold {
                theta[[i, j]] = 0.0;
            }
        }
    }
    let mut shift = 0.0;
    let base = theta.diag().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    while cholesky(&theta).is_err() {
        let add = if shift == 0.0 { 1e-6 * base } else { shift };
        theta = theta + &(&eye * add);
        shift += add;
    }
    let diag = PrecisionDiagnostics {
        converged: true,
        monotone: true,
        ..Default::default()
    };
    PrecisionEstimate::new(theta, 0.0, Provenance::ThresholdedInverse, SUPPORT_THRESHOLD, diag)
}

/// Loads an externally computed precision matrix (square, symmetric CSV).
pub fn import_precision(path: &Path) -> Result<PrecisionEstimate> {
    let theta = crate::io::read_symmetric(path, 1e-10)?;
    cholesky(&symmetrize(&theta))?;
    let diag = PrecisionDiagnostics {
        converged: true,
        monotone: true,
        ..Default::default()
    };
    PrecisionEstimate::new(symmetrize(&theta), 0.0, Provenance::External, SUPPORT_THRESHOLD, diag)
}
