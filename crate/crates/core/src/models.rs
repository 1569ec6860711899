//! Low-rank factor models behind one fit / transform / reconstruct
//! interface: PCA, an ℓ1-penalized factorization baseline (sparse PCA) and
//! graph-regularized PCA.
//!
//! The penalized models minimize
//!
//! ```text
//! ½‖X − UVᵀ‖²_F + α Σ_j ‖V_j:‖₁ / (1 + d_j) + (λ/2) tr(VᵀLV)
//! ```
//!
//! by alternating a score update for `U` with proximal-gradient steps on `V`.
//! Both updates are exact or majorized descents, so the objective trace never
//! increases.
//!
//! The objective is unchanged by `U → cU`, `V → V/c` in its fit term but its
//! penalties shrink with `c`, so without a scale anchor the alternation slowly
//! trades penalty for scale and drifts back toward plain PCA. By default each
//! score column is therefore held to `‖U_:k‖² ≤ n`; set
//! [`GrpcaConfig::bounded_scores`] to `false` for the unanchored scheme.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::datagen::soft_threshold;
use crate::error::{Error, Result};
use crate::graphs::FeatureGraph;
use crate::io::write_matrix;
use crate::numerics::{cholesky, frobenius_sq, spectral_norm_sym, standard_normal, symmetric_eigen, truncated_svd, Matrix, RandomSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Init {
    Svd,
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrpcaConfig {
    pub r: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub max_outer: usize,
    pub tol_rel_obj: f64,
    pub inner_steps: usize,
    pub init: Init,
    /// Keep every score column inside the ball `‖U_:k‖² ≤ n`.
    pub bounded_scores: bool,
}

impl Default for GrpcaConfig {
    fn default() -> Self {
        Self {
            r: 8,
            alpha: 1.0,
            lambda: 1.0,
            max_outer: 500,
            tol_rel_obj: 1e-7,
            inner_steps: 5,
            init: Init::Svd,
            bounded_scores: true,
        }
    }
}

impl GrpcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::InvalidParameter("r must be >= 1".into()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.inner_steps == 0 || self.max_outer == 0 {
            return Err(Error::InvalidParameter("inner_steps and max_outer must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pca,
    SparsePca,
    Grpca,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::SparsePca => "sparse_pca",
            Method::Grpca => "grpca",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FactorModel {
    pub u: Matrix,
    pub v: Matrix,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub method: Method,
    pub graph_used: Option<FeatureGraph>,
    /// Every loading was thresholded to zero; `u` is then zero as well.
    pub all_zero: bool,
    pub config: Option<GrpcaConfig>,
}

impl FactorModel {
    /// Whether every step kept the objective within `1e-9` of the previous one.
    pub fn is_monotone(&self) -> bool {
        self.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0))
    }
}

fn check_graph(x: &Matrix, g: &FeatureGraph) -> Result<()> {
    if g.p() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, data has {} columns",
            g.p(),
            x.ncols()
        )));
    }
    Ok(())
}

fn degree_weights(g: &FeatureGraph) -> Array1<f64> {
    g.degrees().iter().map(|&d| 1.0 / (1.0 + d as f64)).collect()
}

fn weighted_l1(v: &Matrix, weights: &Array1<f64>) -> f64 {
    v.axis_iter(Axis(0))
        .zip(weights)
        .map(|(row, w)| w * row.iter().map(|x| x.abs()).sum::<f64>())
        .sum()
}

fn laplacian_term(lap: &Matrix, v: &Matrix) -> f64 {
    (v * &lap.dot(v)).sum()
}

/// Value of the penalized objective.
pub fn objective(x: &Matrix, u: &Matrix, v: &Matrix, g: &FeatureGraph, alpha: f64, lambda: f64) -> Result<f64> {
    let (n, p) = x.dim();
    if u.nrows() != n || v.nrows() != p || u.ncols() != v.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "X {n}x{p}, U {}x{}, V {}x{}",
            u.nrows(),
            u.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    check_graph(x, g)?;
    let fit = 0.5 * frobenius_sq(&(x - &u.dot(&v.t())).view());
    Ok(fit + alpha * weighted_l1(v, &degree_weights(g)) + 0.5 * lambda * laplacian_term(g.laplacian(), v))
}

/// Gradient `V(UᵀU) − XᵀU + λLV` of the smooth part of the objective in `V`.
pub fn smooth_gradient(x: &Matrix, u: &Matrix, v: &Matrix, g: &FeatureGraph, lambda: f64) -> Result<Matrix> {
    check_graph(x, g)?;
    let mut grad = v.dot(&u.t().dot(u)) - x.t().dot(u);
    if lambda != 0.0 {
        grad = grad + g.laplacian().dot(v) * lambda;
    }
    Ok(grad)
}

/// Everything the alternating solver needs besides the data.
struct Penalty<'a> {
    weights: Array1<f64>,
    laplacian: Option<&'a Matrix>,
    lap_norm: f64,
    alpha: f64,
    lambda: f64,
}

impl Penalty<'_> {
    fn value(&self, v: &Matrix) -> f64 {
        let smooth = match self.laplacian {
            Some(l) if self.lambda != 0.0 => 0.5 * self.lambda * laplacian_term(l, v),
            _ => 0.0,
        };
        self.alpha * weighted_l1(v, &self.weights) + smooth
    }
}

/// `½‖X − UVᵀ‖²` from cached products: `‖X‖² − 2 tr(VᵀXᵀU) + tr(UᵀU·VᵀV)`.
fn fit_term(x_sq: f64, xtu: &Matrix, utu: &Matrix, v: &Matrix) -> f64 {
    let cross = (v * xtu).sum();
    let quad = (utu * &v.t().dot(v)).sum();
    (0.5 * (x_sq - 2.0 * cross + quad)).max(0.0)
}

/// Least-squares scores `X·V·(VᵀV)⁻¹`, with the ridge `1e-10·tr(VᵀV)/r`
/// only when the plain Gram matrix is not positive definite. Dead (all-zero)
/// loadings get zero scores.
fn least_squares_scores(x: &Matrix, v: &Matrix) -> Result<Matrix> {
    let live: Vec<usize> = (0..v.ncols()).filter(|&k| v.column(k).iter().any(|&z| z != 0.0)).collect();
    if live.is_empty() {
        return Err(Error::DegenerateLoadings);
    }
    if live.len() < v.ncols() {
        let scores = least_squares_scores(x, &v.select(Axis(1), &live))?;
        let mut u = Array2::zeros((x.nrows(), v.ncols()));
        for (i, &k) in live.iter().enumerate() {
            u.column_mut(k).assign(&scores.column(i));
        }
        return Ok(u);
    }
    let gram = v.t().dot(v);
    let xv = x.dot(v);
    let factor = match cholesky(&gram) {
        Ok(f) => f,
        Err(_) => {
            let r = gram.nrows() as f64;
            let ridge = 1e-10 * gram.diag().sum() / r;
            if !(ridge > 0.0) {
                return Err(Error::DegenerateLoadings);
            }
            let ridged = &gram + &(Array2::<f64>::eye(gram.nrows()) * ridge);
            cholesky(&ridged).map_err(|_| Error::DegenerateLoadings)?
        }
    };
    Ok(factor.solve(&xv.t().to_owned()).reversed_axes())
}

/// Exact minimizer of the fit term over `U` with every column held to
/// `‖U_:k‖² ≤ n`, by cyclic block coordinate descent over columns.
///
/// The minimizer lies in the column span of `XV`, so the descent runs on
/// coefficients `B` with `U = XV·B`, warm-started from the projection of the
/// current `u`; a sweep then costs `O(r³)` instead of `O(n·r²)`.
fn bounded_scores(x: &Matrix, v: &Matrix, u: &mut Matrix) {
    let n = x.nrows() as f64;
    let radius_sq = n;
    let gram = v.t().dot(v);
    let xv = x.dot(v);
    let c = xv.t().dot(&xv);
    let r = v.ncols();
    let mut b = match cholesky(&c) {
        Ok(f) => f.solve(&xv.t().dot(u)),
        Err(_) => Array2::zeros((r, r)),
    };
    for _ in 0..1000 {
        let mut max_change = 0.0f64;
        let mut max_norm = 0.0f64;
        for k in 0..r {
            let gkk = gram[[k, k]];
            let mut col = Array1::<f64>::zeros(r);
            if gkk > 0.0 {
                col[k] = 1.0;
                for l in 0..r {
                    if l != k && gram[[l, k]] != 0.0 {
                        col.scaled_add(-gram[[l, k]], &b.column(l));
                    }
                }
                col /= gkk;
                let norm_sq = col.dot(&c.dot(&col)).max(0.0);
                if norm_sq > radius_sq {
                    col *= (radius_sq / norm_sq).sqrt();
                }
                max_norm = max_norm.max(norm_sq.min(radius_sq).sqrt());
            }
            // a dead loading leaves its score free; zero keeps it inert
            let diff = &col - &b.column(k);
            max_change = max_change.max(diff.dot(&c.dot(&diff)).max(0.0).sqrt());
            b.column_mut(k).assign(&col);
        }
        if max_change <= 1e-12 * max_norm.max(1e-300) {
            break;
        }
    }
    *u = xv.dot(&b);
}

fn largest_eigenvalue(sym: &Matrix) -> f64 {
    match symmetric_eigen(sym) {
        Ok(e) => e.values.iter().cloned().fold(0.0, f64::max),
        Err(_) => spectral_norm_sym(&sym.view(), 1000) * 1.01,
    }
}

/// Laplacian spectral norm from power iteration, padded by 1% and capped by
/// the Gershgorin bound `2·max degree`.
fn laplacian_norm(g: &FeatureGraph) -> f64 {
    let bound = 2.0 * g.degrees().iter().copied().max().unwrap_or(0) as f64;
    (spectral_norm_sym(&g.laplacian().view(), 2000) * 1.01).min(bound)
}

/// Flips each loading (and its score) so the largest-magnitude loading entry
/// is positive.
fn fix_signs(u: &mut Matrix, v: &mut Matrix) {
    for k in 0..v.ncols() {
        let col = v.column(k);
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            v.column_mut(k).mapv_inplace(|x| -x);
            u.column_mut(k).mapv_inplace(|x| -x);
        }
    }
}

fn initial_factors(x: &Matrix, cfg: &GrpcaConfig) -> Result<(Matrix, Matrix)> {
    let (n, p) = x.dim();
    let max = n.min(p);
    if cfg.r > max {
        return Err(Error::RankTooLarge { rank: cfg.r, max });
    }
    let scale = (n as f64).sqrt();
    match cfg.init {
        Init::Svd => {
            let svd = truncated_svd(x, cfg.r)?;
            let v = &svd.v * &(&svd.s / scale);
            Ok((svd.u * scale, v))
        }
        Init::Random { seed } => {
            let mut rs = RandomSource::new(seed);
            let spread = (frobenius_sq(&x.view()) / (n * p) as f64).sqrt().max(1e-12);
            let v = standard_normal(&mut rs, p, cfg.r) * spread;
            let mut u = Array2::zeros((n, cfg.r));
            if cfg.bounded_scores {
                bounded_scores(x, &v, &mut u);
            } else {
                u = least_squares_scores(x, &v)?;
            }
            Ok((u, v))
        }
    }
}

fn fit_penalized(x: &Matrix, cfg: &GrpcaConfig, penalty: Penalty<'_>, method: Method, graph: Option<FeatureGraph>) -> Result<FactorModel> {
    cfg.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("data contain non-finite values".into()));
    }
    let (mut u, mut v) = initial_factors(x, cfg)?;
    let x_sq = frobenius_sq(&x.view());
    let objective_at = |u: &Matrix, v: &Matrix| {
        let xtu = x.t().dot(u);
        fit_term(x_sq, &xtu, &u.t().dot(u), v) + penalty.value(v)
    };
    let mut trace = vec![objective_at(&u, &v)];
    let mut converged = false;
    let mut all_zero = false;
    let mut iterations = 0;

    for outer in 1..=cfg.max_outer {
        iterations = outer;
        // U-step
        if cfg.bounded_scores {
            bounded_scores(x, &v, &mut u);
        } else {
            u = least_squares_scores(x, &v)?;
        }
        // V-step
        let utu = u.t().dot(&u);
        let xtu = x.t().dot(&u);
        let lipschitz = largest_eigenvalue(&utu) + penalty.lambda * penalty.lap_norm;
        if !(lipschitz > 0.0) {
            all_zero = true;
            break;
        }
        let step = 1.0 / lipschitz;
        for _ in 0..cfg.inner_steps {
            let mut grad = v.dot(&utu) - &xtu;
            if let Some(l) = penalty.laplacian {
                if penalty.lambda != 0.0 {
                    grad.scaled_add(penalty.lambda, &l.dot(&v));
                }
            }
            v.scaled_add(-step, &grad);
            for (mut row, &w) in v.axis_iter_mut(Axis(0)).zip(&penalty.weights) {
                let level = step * penalty.alpha * w;
                row.mapv_inplace(|z| soft_threshold(z, level));
            }
        }
        let value = fit_term(x_sq, &xtu, &utu, &v) + penalty.value(&v);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(value);
        if v.iter().all(|&z| z == 0.0) {
            all_zero = true;
            u.fill(0.0);
            break;
        }
        if (prev - value) <= cfg.tol_rel_obj * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if all_zero {
        log::debug!("{} loadings collapsed to zero at alpha={}", method.label(), cfg.alpha);
    }
    fix_signs(&mut u, &mut v);
    Ok(FactorModel {
        u,
        v,
        objective_trace: trace,
        converged: converged && !all_zero,
        iterations,
        method,
        graph_used: graph,
        all_zero,
        config: Some(cfg.clone()),
    })
}

/// Graph-regularized PCA on column-standardized `x` with feature graph `g`.
pub fn fit_grpca(x: &Matrix, g: &FeatureGraph, cfg: &GrpcaConfig) -> Result<FactorModel> {
    check_graph(x, g)?;
    let penalty = Penalty {
        weights: degree_weights(g),
        laplacian: Some(g.laplacian()),
        lap_norm: if cfg.lambda > 0.0 { laplacian_norm(g) } else { 0.0 },
        alpha: cfg.alpha,
        lambda: cfg.lambda,
    };
    fit_penalized(x, cfg, penalty, Method::Grpca, Some(g.clone()))
}

/// ℓ1-penalized factorization: the same solver with `λ = 0` and unit weights.
/// `cfg.lambda` is ignored.
pub fn fit_sparse_pca(x: &Matrix, cfg: &GrpcaConfig) -> Result<FactorModel> {
    let cfg = GrpcaConfig { lambda: 0.0, ..cfg.clone() };
    let penalty = Penalty {
        weights: Array1::ones(x.ncols()),
        laplacian: None,
        lap_norm: 0.0,
        alpha: cfg.alpha,
        lambda: 0.0,
    };
    fit_penalized(x, &cfg, penalty, Method::SparsePca, None)
}

/// Rank-`r` PCA: orthonormal loadings from the truncated SVD, scores `X·V`.
pub fn fit_pca(x: &Matrix, r: usize) -> Result<FactorModel> {
    let svd = truncated_svd(x, r)?;
    let v = svd.v;
    let u = x.dot(&v);
    Ok(FactorModel {
        u,
        v,
        objective_trace: Vec::new(),
        converged: true,
        iterations: 0,
        method: Method::Pca,
        graph_used: None,
        all_zero: false,
        config: None,
    })
}

/// Least-squares scores of new rows against the frozen loadings.
pub fn transform(model: &FactorModel, x_new: &Matrix) -> Result<Matrix> {
    if x_new.ncols() != model.v.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} features, data has {}",
            model.v.nrows(),
            x_new.ncols()
        )));
    }
    least_squares_scores(x_new, &model.v)
}

pub fn reconstruct(model: &FactorModel, x_new: &Matrix) -> Result<Matrix> {
    Ok(transform(model, x_new)?.dot(&model.v.t()))
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelMeta {
    method: Method,
    converged: bool,
    iterations: usize,
    all_zero: bool,
    objective_trace: Vec<f64>,
    config: Option<GrpcaConfig>,
    graph_edges: Option<usize>,
}

/// Writes `U.csv`, `V.csv` and `meta.json` into `dir`.
pub fn export_model(model: &FactorModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("U.csv"), &model.u)?;
    write_matrix(&dir.join("V.csv"), &model.v)?;
    let meta = ModelMeta {
        method: model.method,
        converged: model.converged,
        iterations: model.iterations,
        all_zero: model.all_zero,
        objective_trace: model.objective_trace.clone(),
        config: model.config.clone(),
        graph_edges: model.graph_used.as_ref().map(|g| g.edges().len()),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::laplacian_quadratic;
    use crate::numerics::orthonormalize_columns;
    use ndarray::array;

    fn principal_angle_max(a: &Matrix, b: &Matrix) -> f64 {
        let mut qa = a.clone();
        let mut qb = b.clone();
        orthonormalize_columns(&mut qa);
        orthonormalize_columns(&mut qb);
        let m = qa.t().dot(&qb);
        // smallest singular value of QaᵀQb is the cosine of the largest angle
        let eig = symmetric_eigen(&m.t().dot(&m)).unwrap();
        eig.values[0].max(0.0).sqrt().min(1.0).acos()
    }

    fn planted(n: usize, p: usize, r: usize, noise: f64, seed: u64) -> Matrix {
        let mut rs = RandomSource::new(seed);
        let scores = standard_normal(&mut rs, n, r);
        let mut load = standard_normal(&mut rs, p, r);
        for (k, mut col) in load.columns_mut().into_iter().enumerate() {
            col *= 3.0 + 2.0 * (r - k) as f64;
        }
        scores.dot(&load.t()) + standard_normal(&mut rs, n, p) * noise
    }

    fn tiny_cfg(r: usize) -> GrpcaConfig {
        GrpcaConfig {
            r,
            alpha: 1e-8,
            lambda: 0.0,
            tol_rel_obj: 1e-14,
            max_outer: 200,
            ..Default::default()
        }
    }

    #[test]
    fn objective_examples() {
        let mut rs = RandomSource::new(1);
        let x = standard_normal(&mut rs, 4, 3);
        let g = FeatureGraph::path(3).unwrap();
        let zero_u = Array2::zeros((4, 2));
        let zero_v = Array2::zeros((3, 2));
        let f = objective(&x, &zero_u, &zero_v, &g, 0.7, 2.0).unwrap();
        assert!((f - 0.5 * frobenius_sq(&x.view())).abs() < 1e-14);

        let u = standard_normal(&mut rs, 4, 2);
        let v = standard_normal(&mut rs, 3, 2);
        let (alpha, lambda) = (0.3, 1.7);
        let mut fit = 0.0;
        for i in 0..4 {
            for j in 0..3 {
                let mut m = 0.0;
                for k in 0..2 {
                    m += u[[i, k]] * v[[j, k]];
                }
                fit += (x[[i, j]] - m).powi(2);
            }
        }
        let deg = [1.0, 2.0, 1.0];
        let mut l1 = 0.0;
        for j in 0..3 {
            for k in 0..2 {
                l1 += v[[j, k]].abs() / (1.0 + deg[j]);
            }
        }
        let mut smooth = 0.0;
        for k in 0..2 {
            smooth += (v[[0, k]] - v[[1, k]]).powi(2) + (v[[1, k]] - v[[2, k]]).powi(2);
        }
        let oracle = 0.5 * fit + alpha * l1 + 0.5 * lambda * smooth;
        assert!((objective(&x, &u, &v, &g, alpha, lambda).unwrap() - oracle).abs() < 1e-10);

        let exact = u.dot(&v.t());
        let f = objective(&exact, &u, &v, &FeatureGraph::empty(3).unwrap(), 1e-12, 0.0).unwrap();
        assert!(f < 1e-10);
        assert!(objective(&x, &u, &v, &FeatureGraph::path(4).unwrap(), 1.0, 1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            let mut rs = RandomSource::new(100 + seed);
            let x = standard_normal(&mut rs, 6, 4);
            let u = standard_normal(&mut rs, 6, 2);
            let v = standard_normal(&mut rs, 4, 2);
            let g = FeatureGraph::path(4).unwrap();
            let lambda = 0.8;
            let smooth = |v: &Matrix| 0.5 * frobenius_sq(&(&x - &u.dot(&v.t())).view()) + 0.5 * lambda * laplacian_quadratic(&g, v).unwrap();
            let grad = smooth_gradient(&x, &u, &v, &g, lambda).unwrap();
            let h = 1e-6;
            for j in 0..4 {
                for k in 0..2 {
                    let mut vp = v.clone();
                    let mut vm = v.clone();
                    vp[[j, k]] += h;
                    vm[[j, k]] -= h;
                    let fd = (smooth(&vp) - smooth(&vm)) / (2.0 * h);
                    let rel = (fd - grad[[j, k]]).abs() / grad[[j, k]].abs().max(1.0);
                    assert!(rel < 1e-5, "seed {seed} ({j},{k}): {fd} vs {}", grad[[j, k]]);
                }
            }
        }
    }

    #[test]
    fn pca_examples() {
        // orthogonal planted directions with distinct strengths
        let mut rs = RandomSource::new(2);
        let mut dirs = standard_normal(&mut rs, 6, 2);
        orthonormalize_columns(&mut dirs);
        let mut scores = standard_normal(&mut rs, 200, 2);
        orthonormalize_columns(&mut scores);
        let x = scores.dot(&(&dirs * &array![5.0, 2.0]).t());
        let m = fit_pca(&x, 2).unwrap();
        for k in 0..2 {
            assert!((m.v.column(k).dot(&dirs.column(k)).abs() - 1.0).abs() < 1e-10);
        }
        assert!((&m.v.t().dot(&m.v) - &Array2::<f64>::eye(2)).iter().all(|d| d.abs() < 1e-8));

        let x = standard_normal(&mut rs, 12, 5);
        let full = fit_pca(&x, 5).unwrap();
        assert!((&reconstruct(&full, &x).unwrap() - &x).iter().all(|d| d.abs() < 1e-10));
        assert!(matches!(fit_pca(&x, 6), Err(Error::RankTooLarge { .. })));

        let pc1 = fit_pca(&x, 1).unwrap();
        let explained = frobenius_sq(&pc1.u.view());
        let top = symmetric_eigen(&x.t().dot(&x)).unwrap().values[4];
        assert!((explained - top).abs() < 1e-8 * top);
    }

    #[test]
    fn tiny_alpha_recovers_svd_subspace() {
        let x = planted(80, 10, 3, 0.5, 3);
        let svd = truncated_svd(&x, 3).unwrap();
        let edgeless = FeatureGraph::empty(10).unwrap();
        let gr = fit_grpca(&x, &edgeless, &tiny_cfg(3)).unwrap();
        assert!(principal_angle_max(&gr.v, &svd.v) <= 1e-3);
        let sp = fit_sparse_pca(&x, &tiny_cfg(3)).unwrap();
        assert!(principal_angle_max(&sp.v, &svd.v) <= 1e-3);
        assert!(gr.is_monotone() && sp.is_monotone());
    }

    #[test]
    fn reduction_chain_on_edgeless_graph() {
        // λ = 0 on an edgeless graph makes GR-PCA's weights all 1: identical to sparse PCA
        let x = planted(60, 8, 2, 1.0, 4);
        let cfg = GrpcaConfig { r: 2, alpha: 5.0, lambda: 0.0, ..Default::default() };
        let gr = fit_grpca(&x, &FeatureGraph::empty(8).unwrap(), &cfg).unwrap();
        let sp = fit_sparse_pca(&x, &cfg).unwrap();
        assert!((&gr.v - &sp.v).iter().all(|d| d.abs() < 1e-12));
        assert_eq!(gr.objective_trace, sp.objective_trace);
    }

    #[test]
    fn huge_lambda_gives_constant_or_zero_columns() {
        let x = planted(60, 8, 2, 1.0, 5);
        let g = FeatureGraph::path(8).unwrap();
        let cfg = GrpcaConfig { r: 2, alpha: 1e-3, lambda: 1e6, max_outer: 2000, ..Default::default() };
        let m = fit_grpca(&x, &g, &cfg).unwrap();
        assert!(m.is_monotone());
        let energy = laplacian_quadratic(&g, &m.v).unwrap();
        assert!(energy <= 1e-6 * frobenius_sq(&m.v.view()).max(1e-300), "energy {energy}");
    }

    #[test]
    fn sparse_pca_zeros_and_collapse() {
        let mut rs = RandomSource::new(6);
        let n = 200;
        let mut load = Array2::zeros((20, 2));
        for j in 0..4 {
            load[[j, 0]] = 3.0;
            load[[10 + j, 1]] = 2.0;
        }
        let x = standard_normal(&mut rs, n, 2).dot(&load.t()) + standard_normal(&mut rs, n, 20) * 0.3;
        let cfg = GrpcaConfig { r: 2, alpha: 40.0, lambda: 0.0, ..Default::default() };
        let m = fit_sparse_pca(&x, &cfg).unwrap();
        let zeros = m.v.iter().filter(|&&z| z == 0.0).count() as f64 / m.v.len() as f64;
        assert!(zeros > 0.5, "zero fraction {zeros}");
        assert!(m.is_monotone());

        let huge = GrpcaConfig { alpha: 1e9, ..cfg };
        let m = fit_sparse_pca(&x, &huge).unwrap();
        assert!(m.all_zero && !m.converged);
        assert!(matches!(transform(&m, &x), Err(Error::DegenerateLoadings)));
    }

    #[test]
    fn v_step_fixed_point_satisfies_kkt() {
        let x = planted(50, 6, 2, 1.0, 7);
        let g = FeatureGraph::path(6).unwrap();
        let cfg = GrpcaConfig { r: 2, alpha: 20.0, lambda: 3.0, tol_rel_obj: 1e-15, max_outer: 20000, ..Default::default() };
        let m = fit_grpca(&x, &g, &cfg).unwrap();
        assert!(m.is_monotone());
        let grad = smooth_gradient(&x, &m.u, &m.v, &g, cfg.lambda).unwrap();
        let w = degree_weights(&g);
        for j in 0..6 {
            for k in 0..2 {
                let level = cfg.alpha * w[j];
                let vjk = m.v[[j, k]];
                if vjk == 0.0 {
                    assert!(grad[[j, k]].abs() <= level + 1e-4);
                } else {
                    assert!((grad[[j, k]] + level * vjk.signum()).abs() <= 1e-4, "({j},{k}) {}", grad[[j, k]] + level * vjk.signum());
                }
            }
        }
    }

    #[test]
    fn transform_examples() {
        let x = planted(40, 5, 2, 0.5, 8);
        let pca = fit_pca(&x, 2).unwrap();
        assert!((&transform(&pca, &x).unwrap() - &x.dot(&pca.v)).iter().all(|d| d.abs() < 1e-10));

        let v = array![[1.0], [2.0], [2.0]];
        let model = FactorModel {
            u: Array2::zeros((1, 1)),
            v: v.clone(),
            objective_trace: vec![],
            converged: true,
            iterations: 0,
            method: Method::Grpca,
            graph_used: None,
            all_zero: false,
            config: None,
        };
        let row = array![[3.0, 0.0, 3.0]];
        let score = transform(&model, &row).unwrap()[[0, 0]];
        assert!((score - 9.0 / 9.0).abs() < 1e-15);
        assert_eq!(reconstruct(&model, &Array2::zeros((2, 3))).unwrap(), Array2::<f64>::zeros((2, 3)));
    }

    #[test]
    fn unbounded_transform_reproduces_training_scores() {
        let x = planted(60, 6, 2, 1.0, 9);
        let g = FeatureGraph::path(6).unwrap();
        let cfg = GrpcaConfig { r: 2, alpha: 2.0, lambda: 1.0, bounded_scores: false, max_outer: 20, ..Default::default() };
        let m = fit_grpca(&x, &g, &cfg).unwrap();
        // the last U-step preceded the last V-step, so refit U on the final V
        let u = least_squares_scores(&x, &m.v).unwrap();
        assert!((&transform(&m, &x).unwrap() - &u).iter().all(|d| d.abs() < 1e-8));
    }

    #[test]
    fn rank_one_planted_reconstruction() {
        let mut rs = RandomSource::new(10);
        let a = standard_normal(&mut rs, 30, 1);
        let b = standard_normal(&mut rs, 7, 1);
        let x = a.dot(&b.t());
        let m = fit_grpca(&x, &FeatureGraph::empty(7).unwrap(), &tiny_cfg(1)).unwrap();
        let err = frobenius_sq(&(&reconstruct(&m, &x).unwrap() - &x).view()) / frobenius_sq(&x.view());
        assert!(err.sqrt() <= 1e-3);
    }

    #[test]
    fn export_writes_three_files() {
        let x = planted(30, 5, 2, 0.5, 11);
        let m = fit_grpca(&x, &FeatureGraph::path(5).unwrap(), &GrpcaConfig { r: 2, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_model(&m, dir.path()).unwrap();
        assert_eq!(crate::io::read_matrix(&dir.path().join("V.csv")).unwrap(), m.v);
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["method"], "grpca");
    }
}
