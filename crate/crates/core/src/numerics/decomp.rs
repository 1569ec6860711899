use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{frobenius_norm, Matrix};
use crate::error::{Error, Result};

const PIVOT_FLOOR: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

/// Lower-triangular factor `R` with `R·Rᵀ = A`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: Matrix,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `R·y = b` column by column.
    pub fn solve_lower(&self, b: &Matrix) -> Matrix {
        let n = self.dim();
        let mut y = b.clone();
        for c in 0..y.ncols() {
            for i in 0..n {
                let mut acc = y[[i, c]];
                for k in 0..i {
                    acc -= self.lower[[i, k]] * y[[k, c]];
                }
                y[[i, c]] = acc / self.lower[[i, i]];
            }
        }
        y
    }

    /// Solves `Rᵀ·x = b` column by column.
    pub fn solve_upper(&self, b: &Matrix) -> Matrix {
        let n = self.dim();
        let mut x = b.clone();
        for c in 0..x.ncols() {
            for i in (0..n).rev() {
                let mut acc = x[[i, c]];
                for k in (i + 1)..n {
                    acc -= self.lower[[k, i]] * x[[k, c]];
                }
                x[[i, c]] = acc / self.lower[[i, i]];
            }
        }
        x
    }

    /// Solves `A·X = B`.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn inverse(&self) -> Matrix {
        let inv = self.solve(&Array2::eye(self.dim()));
        super::symmetrize(&inv)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diag().iter().map(|d| d.ln()).sum::<f64>()
    }
}

fn check_square(a: &Matrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    let n = a.nrows();
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[[i, j]] - a[[j, i]]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidParameter(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Unpivoted Cholesky factorization of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<CholeskyFactor> {
    check_square(a, "cholesky input")?;
    check_symmetric(a)?;
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > PIVOT_FLOOR) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = acc / d;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

/// Solves `A·X = B` for symmetric positive-definite `A`.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "spd_solve: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    Ok(cholesky(a)?.solve(b))
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Array1<f64>,
    pub vectors: Matrix,
}

/// Cyclic Jacobi eigensolver.
///
/// The input is symmetrized as `(A + Aᵀ)/2` first. Sweeps stop once the
/// off-diagonal Frobenius mass falls to `dim·ε·‖A‖_F`; the cap is `100·dim`
/// sweeps.
pub fn symmetric_eigen(a: &Matrix) -> Result<EigenDecomposition> {
    check_square(a, "eigen input")?;
    let n = a.nrows();
    let mut m = super::symmetrize(a);
    let mut v = Array2::<f64>::eye(n);
    let scale = frobenius_norm(&m.view());
    if n == 1 || scale == 0.0 {
        return Ok(sorted(m.diag().to_owned(), v));
    }
    let max_sweeps = 100 * n;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off.sqrt() <= f64::EPSILON * n as f64 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - sn * mkq;
                    m[[k, q]] = sn * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - sn * mqk;
                    m[[q, k]] = sn * mpk + c * mqk;
                }
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - sn * vkq;
                    v[[k, q]] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "jacobi eigensolver",
            iterations: max_sweeps,
        });
    }
    Ok(sorted(m.diag().to_owned(), v))
}

fn sorted(values: Array1<f64>, vectors: Matrix) -> EigenDecomposition {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let values = order.iter().map(|&i| values[i]).collect();
    let vectors = vectors.select(Axis(1), &order);
    EigenDecomposition { values, vectors }
}

/// Orthonormalizes the columns of `a` in place by modified Gram–Schmidt
/// (two passes). Columns that fall below `1e-12` relative norm are replaced
/// by canonical basis vectors orthogonal to the ones kept so far.
pub fn orthonormalize_columns(a: &mut Matrix) {
    let (n, k) = a.dim();
    let scale = a
        .axis_iter(Axis(1))
        .map(|c| c.dot(&c).sqrt())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let mut next_basis = 0usize;
    for j in 0..k {
        let mut attempts = 0;
        loop {
            for _ in 0..2 {
                for i in 0..j {
                    let (done, mut rest) = a.view_mut().split_at(Axis(1), j);
                    let qi = done.column(i);
                    let mut col = rest.column_mut(0);
                    let proj = qi.dot(&col);
                    col.scaled_add(-proj, &qi);
                }
            }
            let norm = a.column(j).dot(&a.column(j)).sqrt();
            if norm > 1e-12 * scale || attempts > n {
                if norm > 0.0 {
                    a.column_mut(j).mapv_inplace(|x| x / norm);
                }
                break;
            }
            let mut col = a.column_mut(j);
            col.fill(0.0);
            col[next_basis % n] = 1.0;
            next_basis += 1;
            attempts += 1;
        }
    }
}

/// Largest eigenvalue magnitude of a symmetric matrix by power iteration.
pub fn spectral_norm_sym(a: &ArrayView2<f64>, max_iter: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic start with no special alignment to graph structure
    let mut x: Array1<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    let mut norm = x.dot(&x).sqrt();
    x /= norm;
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let y = a.dot(&x);
        norm = y.dot(&y).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let prev = estimate;
        estimate = norm;
        x = y / norm;
        if (estimate - prev).abs() <= 1e-10 * estimate {
            break;
        }
    }
    estimate
}
