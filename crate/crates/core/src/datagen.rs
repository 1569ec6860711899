//! Synthetic graph-structured data.
//!
//! A bundle is built in six steps: draw a feature graph; plant smooth true
//! loadings by Tikhonov-filtering ball masks on the graph and soft-thresholding
//! them; plant sparse, randomly signed nuisance spikes on sub-maximal-degree
//! nodes; draw Gaussian scores with geometrically decaying variances; draw
//! noise with precision `τI + βL`; sum everything and standardize columns.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{self, FeatureGraph, TopologyKind};
use crate::io;
use crate::numerics::{cholesky, spd_solve, standard_normal, Matrix, RandomSource};

/// Generator parameters. Field names follow the usual symbols: `gamma` is
/// the Tikhonov smoothness, `omega` the soft-threshold level, `s` the spike
/// count per nuisance component, `tau`/`beta` the noise precision weights
/// and `sigma_e` the noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub p: usize,
    pub n: usize,
    pub r: usize,
    /// Number of nuisance components; `None` means one per true component.
    pub q_count: Option<usize>,
    /// Total nuisance score variance as a multiple of the total true score
    /// variance. `None` gives nuisance components the true-score variances.
    pub q_ratio: Option<f64>,
    pub gamma: f64,
    pub omega: f64,
    /// Ball radius (hops) around each center, shared by all components.
    pub radius: usize,
    /// Per-component radii; overrides `radius` when present.
    pub radii: Option<Vec<usize>>,
    /// Explicit centers; sampled uniformly without replacement when absent.
    pub centers: Option<Vec<usize>>,
    pub s: usize,
    pub sigma1_sq: f64,
    pub score_decay: f64,
    pub tau: f64,
    pub beta: f64,
    #[serde(rename = "sigma_E")]
    pub sigma_e: f64,
    /// How many times `omega` may be halved for a column that thresholds to
    /// zero before giving up. Zero makes degeneracy an error.
    pub omega_halvings: u32,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            p: 144,
            n: 10_000,
            r: 8,
            q_count: None,
            q_ratio: Some(0.1),
            gamma: 16.0,
            omega: 0.4,
            radius: 2,
            radii: None,
            centers: None,
            s: 60,
            sigma1_sq: 1.0,
            score_decay: 0.85,
            tau: 0.55,
            beta: 1.15,
            sigma_e: 1.0,
            omega_halvings: 10,
            seed: 0,
        }
    }
}

/// Which score block is being drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreRole {
    True,
    Nuisance,
}

impl GeneratorConfig {
    pub fn nuisance_count(&self) -> usize {
        self.q_count.unwrap_or(self.r)
    }

    pub fn radius_of(&self, k: usize) -> usize {
        self.radii.as_ref().map_or(self.radius, |r| r[k])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::RangeViolation {
                field: field.to_string(),
                message,
            })
        };
        if self.r < 1 {
            return bad("r", "need at least one component".into());
        }
        if self.r > self.p {
            return bad("r", format!("{} components on {} features", self.r, self.p));
        }
        if self.n < 2 {
            return bad("n", format!("need at least 2 samples, got {}", self.n));
        }
        if self.s < 1 {
            return bad("s", "need at least one spike".into());
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma", format!("{} < 0", self.gamma));
        }
        if !(self.omega >= 0.0) {
            return bad("omega", format!("{} < 0", self.omega));
        }
        if !(self.sigma1_sq > 0.0) {
            return bad("sigma1_sq", format!("{} <= 0", self.sigma1_sq));
        }
        if !(self.score_decay > 0.0 && self.score_decay <= 1.0) {
            return bad("score_decay", format!("{} outside (0,1]", self.score_decay));
        }
        if !(self.tau > 0.0) {
            return bad("tau", format!("{} <= 0", self.tau));
        }
        if !(self.beta >= 0.0) {
            return bad("beta", format!("{} < 0", self.beta));
        }
        if !(self.sigma_e >= 0.0) {
            return bad("sigma_E", format!("{} < 0", self.sigma_e));
        }
        if let Some(q) = self.q_ratio {
            if !(q >= 0.0) {
                return bad("q_ratio", format!("{q} < 0"));
            }
        }
        if let Some(radii) = &self.radii {
            if radii.len() != self.r {
                return bad("radii", format!("{} radii for {} components", radii.len(), self.r));
            }
        }
        if let Some(centers) = &self.centers {
            if centers.len() != self.r || centers.iter().any(|&c| c >= self.p) {
                return bad("centers", format!("need {} centers below {}", self.r, self.p));
            }
        }
        Ok(())
    }

    /// Score variances for one block. True scores decay as
    /// `σ₁²·decay^(k−1)`; nuisance scores use the same profile, rescaled so
    /// their sum is `q_ratio` times the true sum when a ratio is set.
    pub fn score_variances(&self, role: ScoreRole) -> Vec<f64> {
        let profile = |count: usize| -> Vec<f64> {
            (0..count)
                .map(|k| self.sigma1_sq * self.score_decay.powi(k as i32))
                .collect()
        };
        match role {
            ScoreRole::True => profile(self.r),
            ScoreRole::Nuisance => {
                let mut vars = profile(self.nuisance_count());
                if let Some(q) = self.q_ratio {
                    let true_total: f64 = profile(self.r).iter().sum();
                    let nuis_total: f64 = vars.iter().sum();
                    if nuis_total > 0.0 {
                        let scale = q * true_total / nuis_total;
                        vars.iter_mut().for_each(|v| *v *= scale);
                    }
                }
                vars
            }
        }
    }
}

/// Smooth ground-truth loadings with the bookkeeping needed to reproduce them.
#[derive(Debug, Clone)]
pub struct TrueLoadings {
    pub v: Matrix,
    pub centers: Vec<usize>,
    /// Threshold actually applied per column after any halvings.
    pub effective_omega: Vec<f64>,
    /// Ball radius actually used per column.
    pub effective_radius: Vec<usize>,
}

/// Entrywise soft-threshold `sign(x)·max(|x| − t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Hard ball mask: 1 on nodes within `radius` hops of `center`.
pub fn ball_mask(graph: &FeatureGraph, center: usize, radius: usize) -> Array1<f64> {
    graph
        .bfs_distances(center)
        .into_iter()
        .map(|d| match d {
            Some(d) if d <= radius => 1.0,
            _ => 0.0,
        })
        .collect()
}

/// `(I + γL)⁻¹ b` for each column of `b`.
pub fn tikhonov_filter(graph: &FeatureGraph, gamma: f64, b: &Matrix) -> Result<Matrix> {
    let p = graph.p();
    let system = Array2::<f64>::eye(p) + graph.laplacian() * gamma;
    spd_solve(&system, b)
}

/// Columns whose residual against the earlier columns falls below this are
/// treated as duplicates when centers are sampled.
pub const MIN_COLUMN_RESIDUAL: f64 = 1e-6;

fn threshold_column(
    col: ndarray::ArrayView1<f64>,
    cfg: &GeneratorConfig,
    k: usize,
) -> Result<(Array1<f64>, f64)> {
    let mut omega = cfg.omega;
    let mut halvings = 0;
    let thresholded = loop {
        let t: Array1<f64> = col.mapv(|x| soft_threshold(x, omega));
        if t.iter().any(|&x| x != 0.0) {
            break t;
        }
        if halvings >= cfg.omega_halvings {
            return Err(Error::DegenerateComponent { component: k, omega });
        }
        halvings += 1;
        omega *= 0.5;
    };
    if halvings > 0 {
        log::debug!("component {k}: omega halved {halvings}x to {omega}");
    }
    let norm = thresholded.dot(&thresholded).sqrt();
    Ok((thresholded / norm, omega))
}

/// Norm of `v` after removing its projection onto the orthonormal `basis`.
fn residual(basis: &[Array1<f64>], v: &Array1<f64>) -> (Array1<f64>, f64) {
    let mut r = v.clone();
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&r);
            r.scaled_add(-c, q);
        }
    }
    let norm = r.dot(&r).sqrt();
    (r, norm)
}

/// Smooth true loadings: normalized, soft-thresholded Tikhonov smoothing of
/// a ball mask around each center.
///
/// Sampled centers are drawn by walking a uniform random permutation of the
/// nodes. When a candidate's column is numerically in the span of the columns
/// already kept (dense graphs, where balls cover everything), its radius is
/// reduced one hop at a time; if even radius 0 adds nothing the node is
/// skipped. The loadings therefore always have full column rank.
pub fn make_true_loadings(
    graph: &FeatureGraph,
    cfg: &GeneratorConfig,
    rs: &mut RandomSource,
) -> Result<TrueLoadings> {
    let p = graph.p();
    if cfg.r > p {
        return Err(Error::InvalidParameter(format!("{} components on {p} nodes", cfg.r)));
    }
    let filter = cholesky(&(Array2::<f64>::eye(p) + graph.laplacian() * cfg.gamma))?;
    let smooth = |c: usize, radius: usize, k: usize| {
        let b = ball_mask(graph, c, radius).insert_axis(Axis(1)).to_owned();
        threshold_column(filter.solve(&b).column(0), cfg, k)
    };

    let mut v = Array2::zeros((p, cfg.r));
    let mut centers = Vec::with_capacity(cfg.r);
    let mut effective_omega = Vec::with_capacity(cfg.r);
    let mut effective_radius = Vec::with_capacity(cfg.r);
    if let Some(given) = &cfg.centers {
        for (k, &c) in given.iter().enumerate() {
            let (col, omega) = smooth(c, cfg.radius_of(k), k)?;
            v.column_mut(k).assign(&col);
            centers.push(c);
            effective_omega.push(omega);
            effective_radius.push(cfg.radius_of(k));
        }
    } else {
        let mut basis: Vec<Array1<f64>> = Vec::with_capacity(cfg.r);
        'nodes: for c in index::sample(rs, p, p).into_iter() {
            let k = centers.len();
            if k == cfg.r {
                break;
            }
            for radius in (0..=cfg.radius_of(k)).rev() {
                let (col, omega) = smooth(c, radius, k)?;
                let (r, norm) = residual(&basis, &col);
                if norm >= MIN_COLUMN_RESIDUAL {
                    basis.push(r / norm);
                    v.column_mut(k).assign(&col);
                    centers.push(c);
                    effective_omega.push(omega);
                    effective_radius.push(radius);
                    continue 'nodes;
                }
            }
        }
    }
    if centers.len() < cfg.r {
        return Err(Error::InvalidParameter(format!(
            "only {} of {} smooth components are linearly independent on this graph",
            centers.len(),
            cfg.r
        )));
    }
    Ok(TrueLoadings {
        v,
        centers,
        effective_omega,
        effective_radius,
    })
}

/// Sparse nuisance loadings: `s` random sub-maximal-degree nodes per column
/// with Rademacher signs, entries `±1/√s`.
pub fn make_nuisance_loadings(
    graph: &FeatureGraph,
    cfg: &GeneratorConfig,
    rs: &mut RandomSource,
) -> Result<Matrix> {
    let p = graph.p();
    let count = cfg.nuisance_count();
    let mut v = Array2::zeros((p, count));
    if count == 0 {
        return Ok(v);
    }
    let boundary = graph.sub_maximal_nodes();
    if boundary.len() < cfg.s {
        return Err(Error::InsufficientBoundary {
            needed: cfg.s,
            available: boundary.len(),
        });
    }
    let magnitude = 1.0 / (cfg.s as f64).sqrt();
    for l in 0..count {
        let picks = index::sample(rs, boundary.len(), cfg.s);
        for i in picks.iter() {
            v[[boundary[i], l]] = rs.rademacher() * magnitude;
        }
    }
    Ok(v)
}

/// `n × count` Gaussian scores, column `k` with the role's `k`-th variance.
pub fn make_scores(
    cfg: &GeneratorConfig,
    rs: &mut RandomSource,
    n: usize,
    count: usize,
    role: ScoreRole,
) -> Matrix {
    let vars = cfg.score_variances(role);
    let mut u = standard_normal(rs, n, count);
    for (k, mut col) in u.axis_iter_mut(Axis(1)).enumerate() {
        let sd = vars.get(k).copied().unwrap_or(0.0).sqrt();
        col.mapv_inplace(|z| z * sd);
    }
    u
}

/// Noise precision `τI + βL`.
pub fn noise_precision(graph: &FeatureGraph, tau: f64, beta: f64) -> Matrix {
    Array2::<f64>::eye(graph.p()) * tau + graph.laplacian() * beta
}

/// `n` rows drawn i.i.d. from `N(0, Θ⁻¹)` with `Θ = τI + βL`.
///
/// With `Θ = R·Rᵀ`, each row is `R⁻ᵀ·z` for standard normal `z`, computed
/// for all rows at once as `Z·R⁻¹`.
pub fn sample_noise(
    graph: &FeatureGraph,
    tau: f64,
    beta: f64,
    rs: &mut RandomSource,
    n: usize,
) -> Result<Matrix> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let p = graph.p();
    let factor = cholesky(&noise_precision(graph, tau, beta))?;
    let r_inv = factor.solve_lower(&Array2::eye(p));
    let z = standard_normal(rs, n, p);
    Ok(z.dot(&r_inv))
}

/// A generated data set together with all of its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticBundle {
    /// Column-standardized data, `n × p`.
    pub x: Matrix,
    pub v_star: Matrix,
    pub v_nu: Matrix,
    pub u_star: Matrix,
    pub u_nu: Matrix,
    pub graph: FeatureGraph,
    pub kind: TopologyKind,
    pub theta_true: Matrix,
    pub column_means: Array1<f64>,
    pub column_stds: Array1<f64>,
    pub centers: Vec<usize>,
    pub effective_omega: Vec<f64>,
    pub effective_radius: Vec<usize>,
    pub config: GeneratorConfig,
}

impl SyntheticBundle {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn achieved_density(&self) -> f64 {
        self.graph.density()
    }
}

/// Column means and population standard deviations. Constant columns get a
/// standard deviation of 1 so that standardization leaves them at zero.
pub fn column_stats(x: &Matrix) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let means = x.mean_axis(Axis(0)).expect("non-empty");
    let stds = x
        .axis_iter(Axis(1))
        .zip(means.iter())
        .map(|(col, &m)| {
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (means, stds)
}

pub fn standardize_with(x: &Matrix, means: &Array1<f64>, stds: &Array1<f64>) -> Matrix {
    (x - means) / stds
}

/// Builds a bundle end to end. Deterministic in `(kind, cfg)`; each stage
/// draws from its own child stream of `cfg.seed`.
pub fn generate_bundle(kind: TopologyKind, cfg: &GeneratorConfig) -> Result<SyntheticBundle> {
    cfg.validate()?;
    let root = RandomSource::new(cfg.seed);
    let graph = graphs::generate(kind, cfg.p, &mut root.substream(1))?;
    let truth = make_true_loadings(&graph, cfg, &mut root.substream(2))?;
    let v_nu = make_nuisance_loadings(&graph, cfg, &mut root.substream(3))?;
    let u_star = make_scores(cfg, &mut root.substream(4), cfg.n, cfg.r, ScoreRole::True);
    let u_nu = make_scores(
        cfg,
        &mut root.substream(5),
        cfg.n,
        cfg.nuisance_count(),
        ScoreRole::Nuisance,
    );
    let noise = sample_noise(&graph, cfg.tau, cfg.beta, &mut root.substream(6), cfg.n)?;

    let raw = u_star.dot(&truth.v.t()) + u_nu.dot(&v_nu.t()) + noise * cfg.sigma_e;
    let (column_means, column_stds) = column_stats(&raw);
    let x = standardize_with(&raw, &column_means, &column_stds);
    let theta_true = noise_precision(&graph, cfg.tau, cfg.beta);
    Ok(SyntheticBundle {
        x,
        v_star: truth.v,
        v_nu,
        u_star,
        u_nu,
        graph,
        kind,
        theta_true,
        column_means,
        column_stds,
        centers: truth.centers,
        effective_omega: truth.effective_omega,
        effective_radius: truth.effective_radius,
        config: cfg.clone(),
    })
}

/// Contents of `meta.json` in an exported bundle directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub format_version: u32,
    pub topology: TopologyKind,
    pub config: GeneratorConfig,
    pub achieved_density: f64,
    pub edge_count: usize,
    pub centers: Vec<usize>,
    pub effective_omega: Vec<f64>,
    pub effective_radius: Vec<usize>,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
}

/// Writes `X.csv`, `V_star.csv`, `V_nu.csv`, `U_star.csv`, `U_nu.csv`,
/// `edges.txt` and `meta.json` into `dir`.
pub fn export_bundle(bundle: &SyntheticBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    io::write_matrix(&dir.join("X.csv"), &bundle.x)?;
    io::write_matrix(&dir.join("V_star.csv"), &bundle.v_star)?;
    io::write_matrix(&dir.join("V_nu.csv"), &bundle.v_nu)?;
    io::write_matrix(&dir.join("U_star.csv"), &bundle.u_star)?;
    io::write_matrix(&dir.join("U_nu.csv"), &bundle.u_nu)?;
    fs::write(dir.join("edges.txt"), bundle.graph.to_edge_list())?;
    let meta = BundleMeta {
        format_version: 1,
        topology: bundle.kind,
        config: bundle.config.clone(),
        achieved_density: bundle.achieved_density(),
        edge_count: bundle.graph.edges().len(),
        centers: bundle.centers.clone(),
        effective_omega: bundle.effective_omega.clone(),
        effective_radius: bundle.effective_radius.clone(),
        column_means: bundle.column_means.to_vec(),
        column_stds: bundle.column_stds.to_vec(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn read_block(dir: &Path, name: &str, rows: usize) -> Result<Matrix> {
    let m = io::read_matrix(&dir.join(name))?;
    if m.nrows() == 0 {
        return Ok(Array2::zeros((rows, 0)));
    }
    if m.nrows() != rows {
        return Err(Error::Format {
            path: dir.join(name).display().to_string(),
            message: format!("expected {rows} rows, found {}", m.nrows()),
        });
    }
    Ok(m)
}

pub fn import_bundle(dir: &Path) -> Result<SyntheticBundle> {
    let meta: BundleMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let cfg = meta.config;
    let graph = FeatureGraph::from_edge_list(&fs::read_to_string(dir.join("edges.txt"))?, Some(cfg.p))?;
    let x = read_block(dir, "X.csv", cfg.n)?;
    let v_star = read_block(dir, "V_star.csv", cfg.p)?;
    let v_nu = read_block(dir, "V_nu.csv", cfg.p)?;
    let u_star = read_block(dir, "U_star.csv", cfg.n)?;
    let u_nu = read_block(dir, "U_nu.csv", cfg.n)?;
    if x.ncols() != cfg.p {
        return Err(Error::Format {
            path: dir.join("X.csv").display().to_string(),
            message: format!("expected {} columns, found {}", cfg.p, x.ncols()),
        });
    }
    let theta_true = noise_precision(&graph, cfg.tau, cfg.beta);
    Ok(SyntheticBundle {
        x,
        v_star,
        v_nu,
        u_star,
        u_nu,
        graph,
        kind: meta.topology,
        theta_true,
        column_means: Array1::from(meta.column_means),
        column_stds: Array1::from(meta.column_stds),
        centers: meta.centers,
        effective_omega: meta.effective_omega,
        effective_radius: meta.effective_radius,
        config: cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::frobenius_norm;
    use ndarray::array;

    fn small_cfg() -> GeneratorConfig {
        GeneratorConfig {
            p: 30,
            n: 400,
            r: 3,
            s: 4,
            gamma: 2.0,
            omega: 0.05,
            radius: 1,
            seed: 9,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn unfiltered_loadings_are_normalized_masks() {
        let g = FeatureGraph::path(6).unwrap();
        let cfg = GeneratorConfig {
            p: 6,
            r: 1,
            gamma: 0.0,
            omega: 0.0,
            radius: 1,
            centers: Some(vec![2]),
            ..GeneratorConfig::default()
        };
        let t = make_true_loadings(&g, &cfg, &mut RandomSource::new(0)).unwrap();
        let w = 1.0 / 3.0f64.sqrt();
        let expected = array![0.0, w, w, w, 0.0, 0.0];
        assert!((&t.v.column(0) - &expected).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn smoothed_delta_on_path() {
        // (I + L)⁻¹ e₂ on P3 is (2, 4, 2)/8 by cofactors
        let g = FeatureGraph::path(3).unwrap();
        let cfg = GeneratorConfig {
            p: 3,
            r: 1,
            gamma: 1.0,
            omega: 0.0,
            radius: 0,
            centers: Some(vec![1]),
            ..GeneratorConfig::default()
        };
        let t = make_true_loadings(&g, &cfg, &mut RandomSource::new(0)).unwrap();
        let raw: Array1<f64> = array![2.0, 4.0, 2.0];
        let expected = &raw / raw.dot(&raw).sqrt();
        assert!((&t.v.column(0) - &expected).iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn overlarge_threshold_is_degenerate() {
        let g = FeatureGraph::path(5).unwrap();
        let cfg = GeneratorConfig {
            p: 5,
            r: 1,
            gamma: 1.0,
            omega: 1.0,
            radius: 0,
            omega_halvings: 0,
            centers: Some(vec![2]),
            ..GeneratorConfig::default()
        };
        let err = make_true_loadings(&g, &cfg, &mut RandomSource::new(0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateComponent { component: 0, .. }));

        let lenient = GeneratorConfig { omega_halvings: 10, ..cfg };
        let t = make_true_loadings(&g, &lenient, &mut RandomSource::new(0)).unwrap();
        assert!(t.effective_omega[0] < 1.0);
        assert!((t.v.column(0).dot(&t.v.column(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_centers_avoid_duplicate_balls() {
        // both ends of the edge give the same radius-1 ball
        let g = FeatureGraph::new(3, [(0, 1)]).unwrap();
        let cfg = GeneratorConfig {
            p: 3,
            r: 3,
            gamma: 0.0,
            omega: 0.0,
            radius: 1,
            ..GeneratorConfig::default()
        };
        for seed in 0..20 {
            let t = make_true_loadings(&g, &cfg, &mut RandomSource::new(seed)).unwrap();
            let gram = t.v.t().dot(&t.v);
            assert!(crate::numerics::cholesky(&gram).is_ok());
            assert!(t.effective_radius.contains(&0));
        }
    }

    #[test]
    fn dense_graphs_shrink_the_radius() {
        // every radius-1 ball on K6 is the whole graph
        let edges: Vec<(usize, usize)> =
            (0..6).flat_map(|i| (i + 1..6).map(move |j| (i, j))).collect();
        let g = FeatureGraph::new(6, edges).unwrap();
        let cfg = GeneratorConfig {
            p: 6,
            r: 3,
            gamma: 0.0,
            omega: 0.0,
            radius: 1,
            ..GeneratorConfig::default()
        };
        let t = make_true_loadings(&g, &cfg, &mut RandomSource::new(3)).unwrap();
        assert_eq!(t.effective_radius, vec![1, 0, 0]);
        let gram = t.v.t().dot(&t.v);
        assert!(crate::numerics::cholesky(&gram).is_ok());
    }

    #[test]
    fn smoothing_is_positive_on_the_component() {
        let g = FeatureGraph::new(7, [(0, 1), (1, 2), (2, 3), (4, 5)]).unwrap();
        let b = ball_mask(&g, 1, 1).insert_axis(Axis(1)).to_owned();
        let s = tikhonov_filter(&g, 3.0, &b).unwrap();
        for j in 0..4 {
            assert!(s[[j, 0]] > 0.0);
        }
        for j in 4..7 {
            assert_eq!(s[[j, 0]], 0.0);
        }
    }

    #[test]
    fn nuisance_spikes() {
        let g = FeatureGraph::new(6, [(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]).unwrap();
        let one = GeneratorConfig { p: 6, r: 2, s: 1, ..GeneratorConfig::default() };
        let v = make_nuisance_loadings(&g, &one, &mut RandomSource::new(3)).unwrap();
        for col in v.columns() {
            let nz: Vec<_> = col.iter().enumerate().filter(|(_, x)| **x != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert_ne!(nz[0].0, 0, "hub has maximal degree");
            assert_eq!(nz[0].1.abs(), 1.0);
        }
        let four = GeneratorConfig { s: 4, ..one };
        let v = make_nuisance_loadings(&g, &four, &mut RandomSource::new(3)).unwrap();
        for col in v.columns() {
            assert_eq!(col.iter().filter(|x| **x != 0.0).count(), 4);
            assert!(col.iter().all(|&x| x == 0.0 || x.abs() == 0.5));
        }
        let err = make_nuisance_loadings(&FeatureGraph::complete(6).unwrap(), &four, &mut RandomSource::new(3));
        assert!(matches!(err, Err(Error::InsufficientBoundary { needed: 4, available: 0 })));
    }

    #[test]
    fn score_variance_profile() {
        let cfg = GeneratorConfig { sigma1_sq: 2.0, score_decay: 0.5, r: 2, ..GeneratorConfig::default() };
        let u = make_scores(&cfg, &mut RandomSource::new(1), 100_000, 2, ScoreRole::True);
        let var = |k: usize| u.column(k).iter().map(|x| x * x).sum::<f64>() / u.nrows() as f64;
        let ratio = var(1) / var(0);
        assert!((ratio - 0.5).abs() < 0.02, "{ratio}");
        assert_eq!(make_scores(&cfg, &mut RandomSource::new(1), 10, 0, ScoreRole::True).ncols(), 0);
        let a = make_scores(&cfg, &mut RandomSource::new(5), 10, 2, ScoreRole::True);
        let b = make_scores(&cfg, &mut RandomSource::new(5), 10, 2, ScoreRole::True);
        assert_eq!(a, b);
    }

    #[test]
    fn nuisance_variance_ratio() {
        let cfg = GeneratorConfig { q_ratio: Some(2.0), q_count: Some(3), r: 4, ..GeneratorConfig::default() };
        let t: f64 = cfg.score_variances(ScoreRole::True).iter().sum();
        let v = cfg.score_variances(ScoreRole::Nuisance);
        assert_eq!(v.len(), 3);
        assert!((v.iter().sum::<f64>() - 2.0 * t).abs() < 1e-12);
    }

    #[test]
    fn diagonal_noise_has_variance_one_over_tau() {
        let g = FeatureGraph::path(4).unwrap();
        let e = sample_noise(&g, 4.0, 0.0, &mut RandomSource::new(2), 50_000).unwrap();
        for col in e.columns() {
            let var = col.iter().map(|x| x * x).sum::<f64>() / col.len() as f64;
            assert!((var - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn path_noise_matches_closed_form_inverse() {
        // Θ = [[2,-1,0],[-1,3,-1],[0,-1,2]], det 8, adjugate by cofactors
        let theta_inv = array![[5.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 5.0]] / 8.0;
        let g = FeatureGraph::path(3).unwrap();
        let n = 100_000;
        let e = sample_noise(&g, 1.0, 1.0, &mut RandomSource::new(8), n).unwrap();
        let cov = e.t().dot(&e) / n as f64;
        let err = (&cov - &theta_inv).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(err < 0.05, "max entry error {err}");
        assert!(cov[[0, 1]] > 0.0 && cov[[1, 2]] > 0.0);
    }

    #[test]
    fn bundle_is_standardized_and_deterministic() {
        let kind = TopologyKind::ErdosRenyi { edge_prob: 0.2 };
        let a = generate_bundle(kind, &small_cfg()).unwrap();
        let b = generate_bundle(kind, &small_cfg()).unwrap();
        assert_eq!(a.x, b.x);
        for col in a.x.columns() {
            let m = col.mean().unwrap();
            let sd = (col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(m.abs() <= 1e-10);
            assert!((sd - 1.0).abs() <= 1e-8);
        }
        for col in a.v_star.columns().into_iter().chain(a.v_nu.columns()) {
            assert!((col.dot(&col) - 1.0).abs() < 1e-12);
        }
        assert!(crate::numerics::cholesky(&a.theta_true).is_ok());
    }

    #[test]
    fn noiseless_rank_one_bundle() {
        let cfg = GeneratorConfig {
            r: 1,
            q_count: Some(0),
            sigma_e: 0.0,
            ..small_cfg()
        };
        let bundle = generate_bundle(TopologyKind::ErdosRenyi { edge_prob: 0.2 }, &cfg).unwrap();
        let svd = crate::numerics::truncated_svd(&bundle.x, 1).unwrap();
        let resid = frobenius_norm(&(&bundle.x - &svd.reconstruct()).view());
        assert!(resid <= 1e-8 * frobenius_norm(&bundle.x.view()));
    }

    #[test]
    fn export_import_round_trip() {
        let bundle = generate_bundle(TopologyKind::BarabasiAlbert { attach_m: 2 }, &small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_bundle(&bundle, dir.path()).unwrap();
        let back = import_bundle(dir.path()).unwrap();
        assert_eq!(back.x, bundle.x);
        assert_eq!(back.v_star, bundle.v_star);
        assert_eq!(back.graph, bundle.graph);
        assert_eq!(back.config, bundle.config);
        assert_eq!(back.theta_true, bundle.theta_true);
    }
}
