//! Out-of-sample evaluation: subspace selectivity, matched alignment of
//! loadings, global reconstruction R², and the Laplacian energy of fitted
//! loadings.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{laplacian_quadratic, FeatureGraph};
use crate::numerics::{cholesky, frobenius_sq, Matrix};

/// Orthogonal projector `V(VᵀV)⁻¹Vᵀ` onto the column space of `v`.
pub fn projector(v: &Matrix) -> Result<Matrix> {
    if v.ncols() == 0 {
        return Err(Error::EmptyLoadings);
    }
    if v.ncols() > v.nrows() {
        return Err(Error::RankDeficient);
    }
    // scale columns to unit norm first so the rank test is scale-free
    let norms: Vec<f64> = v.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    if norms.iter().any(|&n| n == 0.0) {
        return Err(Error::RankDeficient);
    }
    let mut w = v.clone();
    for (mut col, &n) in w.columns_mut().into_iter().zip(&norms) {
        col /= n;
    }
    let gram = w.t().dot(&w);
    let factor = cholesky(&crate::numerics::symmetrize(&gram)).map_err(|_| Error::RankDeficient)?;
    if factor.lower().diag().iter().any(|&d| d < 1e-7) {
        return Err(Error::RankDeficient);
    }
    // Π = W·G⁻¹·Wᵀ = (W R⁻ᵀ)(W R⁻ᵀ)ᵀ with G = R Rᵀ
    let q = factor.solve_lower(&w.t().to_owned()).reversed_axes();
    Ok(q.dot(&q.t()))
}

/// Fractions of test variance reproduced inside the true and nuisance
/// subspaces, and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selectivity {
    pub r2_true: f64,
    pub r2_nuis: f64,
    pub delta: f64,
}

fn check_same_shape(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn subspace_r2(x: &Matrix, xhat: &Matrix, proj: &Matrix, label: &'static str) -> Result<f64> {
    let xp = x.dot(proj);
    let denom = frobenius_sq(&xp.view());
    if denom == 0.0 {
        return Err(Error::ZeroSubspaceVariance(label));
    }
    let resid = xp - xhat.dot(proj);
    Ok(1.0 - frobenius_sq(&resid.view()) / denom)
}

pub fn selectivity(x_te: &Matrix, xhat_te: &Matrix, v_star: &Matrix, v_nu: &Matrix) -> Result<Selectivity> {
    check_same_shape(x_te, xhat_te)?;
    if v_star.nrows() != x_te.ncols() || v_nu.nrows() != x_te.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "loadings have {}/{} rows, data has {} columns",
            v_star.nrows(),
            v_nu.nrows(),
            x_te.ncols()
        )));
    }
    let r2_true = subspace_r2(x_te, xhat_te, &projector(v_star)?, "true")?;
    let r2_nuis = subspace_r2(x_te, xhat_te, &projector(v_nu)?, "nuisance")?;
    Ok(Selectivity {
        r2_true,
        r2_nuis,
        delta: r2_true - r2_nuis,
    })
}

/// `1 − ‖X − X̂‖²_F / ‖X‖²_F`.
pub fn r2_global(x_te: &Matrix, xhat_te: &Matrix) -> Result<f64> {
    check_same_shape(x_te, xhat_te)?;
    let denom = frobenius_sq(&x_te.view());
    if denom == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(1.0 - frobenius_sq(&(x_te - xhat_te).view()) / denom)
}

/// `tr(VᵀLV)` of fitted loadings.
pub fn laplacian_energy(graph: &FeatureGraph, v: &Matrix) -> Result<f64> {
    laplacian_quadratic(graph, v)
}

/// One matched pair of the alignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub true_idx: usize,
    pub est_idx: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub score: f64,
    pub matching: Vec<MatchedPair>,
}

fn unit_columns(v: &Matrix) -> Matrix {
    let mut out = v.clone();
    for mut col in out.columns_mut() {
        let n = col.dot(&col).sqrt();
        if n > 0.0 {
            col /= n;
        }
    }
    out
}

/// Mean absolute cosine over the optimal one-to-one matching of estimated
/// to true loading columns. Zero columns have similarity 0 to everything.
pub fn alignment(v_hat: &Matrix, v_star: &Matrix) -> Result<Alignment> {
    if v_hat.ncols() == 0 || v_star.ncols() == 0 {
        return Err(Error::EmptyLoadings);
    }
    if v_hat.nrows() != v_star.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "estimated loadings have {} rows, true loadings {}",
            v_hat.nrows(),
            v_star.nrows()
        )));
    }
    let sim = unit_columns(v_star).t().dot(&unit_columns(v_hat)).mapv(f64::abs);
    let pairs = solve_assignment(&sim);
    let matching: Vec<MatchedPair> = pairs
        .into_iter()
        .map(|(k, j)| MatchedPair {
            true_idx: k,
            est_idx: j,
            similarity: sim[[k, j]],
        })
        .collect();
    let r_match = v_star.ncols().min(v_hat.ncols()) as f64;
    let total: f64 = matching.iter().map(|m| m.similarity).sum();
    Ok(Alignment {
        score: total / r_match,
        matching,
    })
}

/// Minimum-cost assignment of every row to a distinct column (`rows ≤ cols`)
/// by shortest augmenting paths with dual potentials. Returns the column of
/// each row.
fn hungarian_min(cost: &Matrix) -> Vec<usize> {
    let (n, m) = cost.dim();
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    // 1-based bookkeeping; index 0 is the virtual root
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![usize::MAX; n];
    for j in 1..=m {
        if owner[j] != 0 {
            col_of[owner[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Best total similarity of a matching of size `min(rows, cols)` on the
/// given sub-problem.
fn best_total(sim: &Matrix, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let transpose = rows.len() > cols.len();
    let (a, b) = if transpose { (cols, rows) } else { (rows, cols) };
    let cost = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| {
        let (r, c) = if transpose { (b[j], a[i]) } else { (a[i], b[j]) };
        -sim[[r, c]]
    });
    hungarian_min(&cost)
        .iter()
        .enumerate()
        .map(|(i, &j)| -cost[[i, j]])
        .sum()
}

/// Maximum-total-similarity one-to-one matching of size `min(a, b)` for an
/// `a × b` similarity matrix, as `(row, col)` pairs sorted by row.
///
/// Among optimal matchings (totals within `1e-12` relative) the one with the
/// lexicographically smallest pair list is returned.
pub fn solve_assignment(sim: &Matrix) -> Vec<(usize, usize)> {
    let (a, b) = sim.dim();
    let all_rows: Vec<usize> = (0..a).collect();
    let all_cols: Vec<usize> = (0..b).collect();
    let optimum = best_total(sim, &all_rows, &all_cols);
    let scale = sim.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-12 * scale * (a.max(b) as f64);
    let size = a.min(b);

    let mut pairs = Vec::with_capacity(size);
    let mut free_cols = all_cols;
    let mut fixed = 0.0;
    for i in 0..a {
        if pairs.len() == size {
            break;
        }
        let later_rows: Vec<usize> = ((i + 1)..a).collect();
        for (pos, &j) in free_cols.iter().enumerate() {
            let mut rest_cols = free_cols.clone();
            rest_cols.remove(pos);
            let need = size - pairs.len() - 1;
            if later_rows.len().min(rest_cols.len()) < need {
                continue;
            }
            let total = fixed + sim[[i, j]] + best_total(sim, &later_rows, &rest_cols);
            if total >= optimum - tol {
                pairs.push((i, j));
                fixed += sim[[i, j]];
                free_cols = rest_cols;
                break;
            }
        }
    }
    pairs
}

/// Evaluation labels and scores for one fitted model on one test fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub regime: String,
    pub topology: String,
    pub target_density: f64,
    pub achieved_density: f64,
    pub seed: u64,
    pub fold: usize,
    pub r2_true: f64,
    pub r2_nuis: f64,
    pub selectivity: f64,
    pub alignment: f64,
    pub r2_global: f64,
    pub laplacian_energy: f64,
    pub matching: Vec<MatchedPair>,
    /// Solver convergence (model fit and, for learned graphs, precision).
    pub converged: bool,
    /// Set when the fit or the scoring failed; scores are then NaN.
    pub failure: Option<String>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "method,regime,topology,target_density,achieved_density,seed,fold,\
r2_true,r2_nuis,selectivity,alignment,r2_global,laplacian_energy,converged,failure,matching";

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    /// One CSV line matching [`CSV_HEADER`](Self::CSV_HEADER). The matching
    /// column is `true:est:similarity` triples joined by `;`.
    pub fn to_csv_row(&self) -> String {
        let matching = self
            .matching
            .iter()
            .map(|m| format!("{}:{}:{}", m.true_idx, m.est_idx, m.similarity))
            .collect::<Vec<_>>()
            .join(";");
        let failure = self.failure.as_deref().unwrap_or("").replace([',', '\n'], " ");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.regime,
            self.topology,
            self.target_density,
            self.achieved_density,
            self.seed,
            self.fold,
            self.r2_true,
            self.r2_nuis,
            self.selectivity,
            self.alignment,
            self.r2_global,
            self.laplacian_energy,
            self.converged,
            failure,
            matching
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |column: usize, message: String| Error::Parse { line: 0, column, message };
        if fields.len() != 16 {
            return Err(parse_err(0, format!("expected 16 fields, found {}", fields.len())));
        }
        let num = |c: usize| -> Result<f64> {
            fields[c]
                .parse()
                .map_err(|_| parse_err(c + 1, format!("`{}` is not a number", fields[c])))
        };
        let int = |c: usize| -> Result<u64> {
            fields[c]
                .parse()
                .map_err(|_| parse_err(c + 1, format!("`{}` is not an integer", fields[c])))
        };
        let matching = if fields[15].is_empty() {
            Vec::new()
        } else {
            fields[15]
                .split(';')
                .map(|t| {
                    let parts: Vec<&str> = t.split(':').collect();
                    match parts.as_slice() {
                        [k, j, s] => Ok(MatchedPair {
                            true_idx: k.parse().map_err(|_| parse_err(16, t.to_string()))?,
                            est_idx: j.parse().map_err(|_| parse_err(16, t.to_string()))?,
                            similarity: s.parse().map_err(|_| parse_err(16, t.to_string()))?,
                        }),
                        _ => Err(parse_err(16, format!("bad matching entry `{t}`"))),
                    }
                })
                .collect::<Result<_>>()?
        };
        Ok(Self {
            method: fields[0].to_string(),
            regime: fields[1].to_string(),
            topology: fields[2].to_string(),
            target_density: num(3)?,
            achieved_density: num(4)?,
            seed: int(5)?,
            fold: int(6)? as usize,
            r2_true: num(7)?,
            r2_nuis: num(8)?,
            selectivity: num(9)?,
            alignment: num(10)?,
            r2_global: num(11)?,
            laplacian_energy: num(12)?,
            converged: fields[13] == "true",
            failure: (!fields[14].is_empty()).then(|| fields[14].to_string()),
            matching,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{orthonormalize_columns, standard_normal, RandomSource};
    use ndarray::{array, Axis};

    fn brute_force(sim: &Matrix) -> f64 {
        fn go(sim: &Matrix, row: usize, used: &mut Vec<bool>, left: usize) -> f64 {
            let (a, b) = sim.dim();
            if left == 0 {
                return 0.0;
            }
            if a - row < left {
                return f64::NEG_INFINITY;
            }
            // either skip this row (only possible when rows outnumber the matching)
            let mut best = go(sim, row + 1, used, left);
            for j in 0..b {
                if !used[j] {
                    used[j] = true;
                    best = best.max(sim[[row, j]] + go(sim, row + 1, used, left - 1));
                    used[j] = false;
                }
            }
            best
        }
        let (a, b) = sim.dim();
        go(sim, 0, &mut vec![false; b], a.min(b))
    }

    fn total(sim: &Matrix, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(i, j)| sim[[i, j]]).sum()
    }

    #[test]
    fn projector_examples() {
        let mut v = standard_normal(&mut RandomSource::new(1), 6, 2);
        orthonormalize_columns(&mut v);
        let p = projector(&v).unwrap();
        assert!((&p - &v.dot(&v.t())).iter().all(|d| d.abs() < 1e-12));

        let e1 = array![[1.0], [0.0], [0.0]];
        let p = projector(&e1).unwrap();
        assert!((&p - &Array2::from_diag(&array![1.0, 0.0, 0.0])).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn projector_of_skewed_basis_matches_gram_schmidt() {
        let v = array![[1.0, 1.0], [0.0, 1.0], [1.0, 3.0]];
        let mut q = v.clone();
        orthonormalize_columns(&mut q);
        let p = projector(&v).unwrap();
        assert!((&p - &q.dot(&q.t())).iter().all(|d| d.abs() < 1e-10));
        assert!((&p.dot(&p) - &p).iter().all(|d| d.abs() < 1e-8));
        assert!((p.diag().sum() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn projector_rejects_dependent_columns() {
        let v = array![[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]];
        assert!(matches!(projector(&v), Err(Error::RankDeficient)));
    }

    #[test]
    fn selectivity_examples() {
        let mut rs = RandomSource::new(4);
        let x = standard_normal(&mut rs, 20, 4);
        let v_star = array![[1.0], [0.0], [0.0], [0.0]];
        let v_nu = array![[0.0], [1.0], [0.0], [0.0]];
        let s = selectivity(&x, &x, &v_star, &v_nu).unwrap();
        assert_eq!((s.r2_true, s.r2_nuis, s.delta), (1.0, 1.0, 0.0));
        let s = selectivity(&x, &Array2::zeros((20, 4)), &v_star, &v_nu).unwrap();
        assert_eq!((s.r2_true, s.r2_nuis, s.delta), (0.0, 0.0, 0.0));
        let xhat = x.dot(&projector(&v_star).unwrap());
        let s = selectivity(&x, &xhat, &v_star, &v_nu).unwrap();
        assert!((s.r2_true - 1.0).abs() < 1e-12 && s.r2_nuis.abs() < 1e-12);
        assert!((s.delta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn selectivity_zero_subspace_variance() {
        let x = array![[1.0, 0.0], [2.0, 0.0]];
        let err = selectivity(&x, &x, &array![[1.0], [0.0]], &array![[0.0], [1.0]]).unwrap_err();
        assert!(matches!(err, Error::ZeroSubspaceVariance("nuisance")));
    }

    #[test]
    fn r2_examples() {
        let x = standard_normal(&mut RandomSource::new(2), 5, 3);
        assert_eq!(r2_global(&x, &x).unwrap(), 1.0);
        assert_eq!(r2_global(&x, &Array2::zeros((5, 3))).unwrap(), 0.0);
        assert!((r2_global(&x, &(&x / 2.0)).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(r2_global(&Array2::zeros((2, 2)), &Array2::zeros((2, 2))), Err(Error::ZeroVariance)));
    }

    #[test]
    fn alignment_prefers_cross_matching() {
        // similarity [[0.9, 0.8], [0.7, 0.1]]: diagonal totals 1.0, cross 1.5
        let sim = array![[0.9, 0.8], [0.7, 0.1]];
        assert_eq!(solve_assignment(&sim), vec![(0, 1), (1, 0)]);
        assert!((total(&sim, &solve_assignment(&sim)) / 2.0 - 0.75).abs() < 1e-15);
    }

    #[test]
    fn alignment_invariances() {
        let mut v = standard_normal(&mut RandomSource::new(6), 10, 3);
        orthonormalize_columns(&mut v);
        let shuffled = ndarray::concatenate![Axis(1), v.column(2).insert_axis(Axis(1)), -&v.column(0).insert_axis(Axis(1)), v.column(1).insert_axis(Axis(1))];
        assert!((alignment(&shuffled, &v).unwrap().score - 1.0).abs() < 1e-12);

        let v_star = array![[1.0], [0.0], [0.0]];
        let v_hat = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        assert_eq!(alignment(&v_hat, &v_star).unwrap().score, 0.0);
        assert!(matches!(alignment(&Array2::zeros((3, 0)), &v_star), Err(Error::EmptyLoadings)));
    }

    #[test]
    fn zero_columns_have_zero_similarity() {
        let v_star = array![[1.0, 0.0], [0.0, 1.0]];
        let v_hat = array![[0.0, 1.0], [0.0, 0.0]];
        let a = alignment(&v_hat, &v_star).unwrap();
        assert!((a.score - 0.5).abs() < 1e-15);
    }

    #[test]
    fn assignment_edge_cases() {
        let dominant = array![[5.0, 1.0, 0.0], [1.0, 5.0, 1.0], [0.0, 1.0, 5.0]];
        assert_eq!(solve_assignment(&dominant), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(solve_assignment(&array![[0.1, 0.7, 0.3]]), vec![(0, 1)]);
        assert_eq!(solve_assignment(&array![[0.1], [0.7], [0.3]]), vec![(1, 0)]);
        // all ties resolve to the lexicographically smallest matching
        assert_eq!(solve_assignment(&Array2::from_elem((3, 4), 0.5)), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(solve_assignment(&Array2::from_elem((4, 2), 0.5)), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn assignment_matches_brute_force_5x5() {
        let mut rs = RandomSource::new(10);
        for _ in 0..1000 {
            let sim = Array2::from_shape_fn((5, 5), |_| rs.uniform());
            let got = solve_assignment(&sim);
            assert!((total(&sim, &got) - brute_force(&sim)).abs() < 1e-12);
        }
    }

    #[test]
    fn report_csv_round_trip() {
        let report = MetricsReport {
            method: "grpca_oracle".into(),
            regime: "anisotropic".into(),
            topology: "ER".into(),
            target_density: 0.1,
            achieved_density: 0.0983,
            seed: 3,
            fold: 2,
            r2_true: 0.5,
            r2_nuis: 0.25,
            selectivity: 0.25,
            alignment: 0.9,
            r2_global: 0.6,
            laplacian_energy: 1.5,
            matching: vec![MatchedPair { true_idx: 0, est_idx: 1, similarity: 0.75 }],
            converged: true,
            failure: None,
        };
        let row = report.to_csv_row();
        assert_eq!(row.split(',').count(), MetricsReport::CSV_HEADER.split(',').count());
        assert_eq!(MetricsReport::from_csv_row(&row).unwrap(), report);
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(serde_json::from_str::<MetricsReport>(&json).unwrap(), report);
    }
}
