use ndarray::{s, Array1, Axis};

use super::decomp::{orthonormalize_columns, symmetric_eigen};
use super::{rng::standard_normal, Matrix, RandomSource};
use crate::error::{Error, Result};

/// Above this size the Gram route gives way to subspace iteration.
const GRAM_LIMIT: usize = 512;
const OVERSAMPLING: usize = 2;
const POWER_STEPS: usize = 7;
const SKETCH_SEED: u64 = 0x5EED_0F5D;

/// Leading `r` singular triplets, singular values descending.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub s: Array1<f64>,
    pub v: Matrix,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> Matrix {
        (&self.u * &self.s).dot(&self.v.t())
    }
}

/// Rank-`r` SVD of `x`.
///
/// For `min(n, p) ≤ 512` this eigendecomposes the smaller Gram matrix and
/// recovers the other factor by projection. Larger inputs use blocked
/// subspace iteration with two oversampling vectors and seven power steps.
/// Each right singular vector is sign-flipped so that its largest-magnitude
/// entry is positive.
pub fn truncated_svd(x: &Matrix, r: usize) -> Result<TruncatedSvd> {
    let (n, p) = x.dim();
    let max = n.min(p);
    if r == 0 || r > max {
        return Err(Error::RankTooLarge { rank: r, max });
    }
    let mut out = if max <= GRAM_LIMIT {
        gram_svd(x, r)?
    } else {
        subspace_svd(x, r)?
    };
    fix_signs(&mut out);
    Ok(out)
}

fn gram_svd(x: &Matrix, r: usize) -> Result<TruncatedSvd> {
    let (n, p) = x.dim();
    if p <= n {
        let (v, s, u) = right_from_gram(x, r)?;
        Ok(TruncatedSvd { u, s, v })
    } else {
        let xt = x.t().to_owned();
        let (u, s, v) = right_from_gram(&xt, r)?;
        Ok(TruncatedSvd { u, s, v })
    }
}

/// For tall `a`, returns `(V, s, U)` with `a ≈ U·diag(s)·Vᵀ`.
fn right_from_gram(a: &Matrix, r: usize) -> Result<(Matrix, Array1<f64>, Matrix)> {
    let gram = a.t().dot(a);
    let eig = symmetric_eigen(&gram)?;
    let k = gram.nrows();
    let order: Vec<usize> = (0..r).map(|i| k - 1 - i).collect();
    let v = eig.vectors.select(Axis(1), &order);
    let mut u = a.dot(&v);
    let s: Array1<f64> = u.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).collect();
    let tiny = s.iter().cloned().fold(0.0, f64::max) * 1e-13;
    for (j, &sj) in s.iter().enumerate() {
        if sj > tiny {
            u.column_mut(j).mapv_inplace(|x| x / sj);
        } else {
            u.column_mut(j).fill(0.0);
        }
    }
    // keeps U orthonormal when trailing singular values vanish
    if s.iter().any(|&sj| sj <= tiny) {
        orthonormalize_columns(&mut u);
    }
    let s = s.mapv(|sj| if sj > tiny { sj } else { 0.0 });
    Ok((v, s, u))
}

fn subspace_svd(x: &Matrix, r: usize) -> Result<TruncatedSvd> {
    let (_, p) = x.dim();
    let k = (r + OVERSAMPLING).min(x.nrows().min(p));
    let mut rs = RandomSource::new(SKETCH_SEED);
    let omega = standard_normal(&mut rs, p, k);
    let mut q = x.dot(&omega);
    orthonormalize_columns(&mut q);
    for _ in 0..POWER_STEPS {
        let mut z = x.t().dot(&q);
        orthonormalize_columns(&mut z);
        q = x.dot(&z);
        orthonormalize_columns(&mut q);
    }
    // B = Qᵀ X is k×p; its right factors are those of X restricted to span(Q)
    let b = q.t().dot(x);
    let bt = b.t().to_owned();
    let (ub, s, v) = right_from_gram(&bt, k)?;
    let u = q.dot(&ub);
    Ok(TruncatedSvd {
        u: u.slice(s![.., ..r]).to_owned(),
        s: s.slice(s![..r]).to_owned(),
        v: v.slice(s![.., ..r]).to_owned(),
    })
}

fn fix_signs(svd: &mut TruncatedSvd) {
    for j in 0..svd.v.ncols() {
        let col = svd.v.column(j);
        let pivot = col
            .iter()
            .cloned()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            svd.v.column_mut(j).mapv_inplace(|x| -x);
            svd.u.column_mut(j).mapv_inplace(|x| -x);
        }
    }
}
