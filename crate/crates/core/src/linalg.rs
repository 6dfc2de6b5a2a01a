//! Truncated SVD of large operators.
//!
//! `top_svd` runs Golub-Kahan-Lanczos bidiagonalization with full
//! reorthogonalization, so the cross-covariance `X^T Y` is only ever
//! touched through products `X^T (Y v)` and `Y^T (X u)`. Small problems
//! fall back to a dense decomposition.

use nalgebra::{DMatrix, DVector, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A real matrix known through its action on vectors.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A v`
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
    /// `A^T u`
    fn apply_transpose(&self, u: &DVector<f64>) -> DVector<f64>;
    fn to_dense(&self) -> DMatrix<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }

    fn apply_transpose(&self, u: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(u)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// The product `x^T y` of two matrices sharing their row dimension.
#[derive(Debug, Clone, Copy)]
pub struct CrossProduct<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DMatrix<f64>,
}

impl<'a> CrossProduct<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::Dimension(format!("row counts differ: {} vs {}", x.nrows(), y.nrows())));
        }
        Ok(Self { x, y })
    }
}

impl LinearOperator for CrossProduct<'_> {
    fn nrows(&self) -> usize {
        self.x.ncols()
    }

    fn ncols(&self) -> usize {
        self.y.ncols()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.x.tr_mul(&(self.y * v))
    }

    fn apply_transpose(&self, u: &DVector<f64>) -> DVector<f64> {
        self.y.tr_mul(&(self.x * u))
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.x.tr_mul(self.y)
    }
}

/// Leading singular triplets, values descending, vectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriplets {
    pub values: Vec<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

impl SvdTriplets {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    /// Ritz residual bound relative to the largest singular value.
    pub tol: f64,
    /// Largest Krylov dimension before giving up.
    pub max_dim: usize,
    /// Problems with `min(rows, cols)` at or below this use a dense SVD.
    pub dense_threshold: usize,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_dim: 600, dense_threshold: 64 }
    }
}

pub fn top_svd<A: LinearOperator + ?Sized>(op: &A, k: usize) -> Result<SvdTriplets> {
    top_svd_with(op, k, &SvdOptions::default())
}

pub fn top_svd_with<A: LinearOperator + ?Sized>(op: &A, k: usize, opts: &SvdOptions) -> Result<SvdTriplets> {
    let (m, n) = (op.nrows(), op.ncols());
    let min_dim = m.min(n);
    if k == 0 || k > min_dim {
        return Err(Error::invalid("k", format!("need 1 <= k <= {min_dim}, got {k}")));
    }
    let mut out = if min_dim <= opts.dense_threshold {
        dense_top(op.to_dense(), k)
    } else {
        lanczos_top(op, k, opts)?
    };
    fix_signs(&mut out);
    Ok(out)
}

fn dense_top(a: DMatrix<f64>, k: usize) -> SvdTriplets {
    let svd = SVD::new(a, true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let order = &order[..k];
    SvdTriplets {
        values: order.iter().map(|&i| svd.singular_values[i]).collect(),
        left: DMatrix::from_columns(&order.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>()),
        right: DMatrix::from_columns(&order.iter().map(|&i| v_t.row(i).transpose()).collect::<Vec<_>>()),
    }
}

/// Orthogonalizes `w` against `basis` twice (classical Gram-Schmidt, repeated).
fn reorthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(w);
            w.axpy(-c, b, 1.0);
        }
    }
}

fn fresh_direction(rng: &mut ChaCha8Rng, dim: usize, basis: &[DVector<f64>]) -> Result<DVector<f64>> {
    for _ in 0..8 {
        let mut w = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        reorthogonalize(&mut w, basis);
        let norm = w.norm();
        if norm > 1e-8 {
            return Ok(w / norm);
        }
    }
    Err(Error::Convergence(format!("could not extend a Krylov basis of size {} in dimension {dim}", basis.len())))
}

fn lanczos_top<A: LinearOperator + ?Sized>(op: &A, k: usize, opts: &SvdOptions) -> Result<SvdTriplets> {
    let (m, n) = (op.nrows(), op.ncols());
    let limit = opts.max_dim.min(m.min(n)).max(k);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c_0b1d_0001);

    let mut us: Vec<DVector<f64>> = Vec::new();
    let mut vs: Vec<DVector<f64>> = vec![fresh_direction(&mut rng, n, &[])?];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut scale = 0.0_f64;
    let check_every = 4;

    for j in 0..limit {
        let mut u = op.apply(&vs[j]);
        if let (Some(prev), Some(&beta)) = (us.last(), betas.last()) {
            u.axpy(-beta, prev, 1.0);
        }
        reorthogonalize(&mut u, &us);
        let mut alpha = u.norm();
        scale = scale.max(alpha);
        if alpha <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            alpha = 0.0;
            u = fresh_direction(&mut rng, m, &us)?;
        } else {
            u /= alpha;
        }
        alphas.push(alpha);
        us.push(u);

        let mut v = op.apply_transpose(&us[j]);
        v.axpy(-alpha, &vs[j], 1.0);
        reorthogonalize(&mut v, &vs);
        let mut beta = v.norm();
        scale = scale.max(beta);
        let last = j + 1 == limit;
        let breakdown = beta <= 1e-13 * scale.max(f64::MIN_POSITIVE);
        if breakdown {
            beta = 0.0;
        }

        let size = j + 1;
        if size >= k && (last || breakdown || size % check_every == 0) {
            let (values, p, q) = bidiagonal_svd(&alphas, &betas);
            let top = values[0].max(f64::MIN_POSITIVE);
            let converged = (0..k).all(|i| beta * p[(size - 1, i)].abs() <= opts.tol * top);
            if converged || size == m.min(n) {
                return Ok(assemble(&us, &vs, &values, &p, &q, k));
            }
            if last {
                let worst = (0..k).map(|i| beta * p[(size - 1, i)].abs() / top).fold(0.0, f64::max);
                return Err(Error::Convergence(format!(
                    "top-{k} SVD not converged after {size} Lanczos steps (relative residual {worst:.3e})"
                )));
            }
        }
        betas.push(beta);
        let next = if breakdown { fresh_direction(&mut rng, n, &vs)? } else { v / beta };
        vs.push(next);
    }
    unreachable!("loop returns at the final step")
}

/// SVD of the upper bidiagonal matrix with diagonal `alphas` and
/// superdiagonal `betas`, sorted descending: `(values, P, Q)` with `B = P S Q^T`.
fn bidiagonal_svd(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let s = alphas.len();
    let b = DMatrix::from_fn(s, s, |i, j| {
        if i == j {
            alphas[i]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    });
    let svd = SVD::new(b, true, true);
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let p = DMatrix::from_columns(&order.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    let q = DMatrix::from_columns(&order.iter().map(|&i| v.column(i).into_owned()).collect::<Vec<_>>());
    (values, p, q)
}

fn assemble(
    us: &[DVector<f64>],
    vs: &[DVector<f64>],
    values: &[f64],
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    k: usize,
) -> SvdTriplets {
    let combine = |basis: &[DVector<f64>], coeffs: &DMatrix<f64>, i: usize| {
        let mut out = DVector::zeros(basis[0].len());
        for (b, c) in basis.iter().zip(coeffs.column(i).iter()) {
            out.axpy(*c, b, 1.0);
        }
        let norm = out.norm();
        out / norm
    };
    let size = values.len();
    SvdTriplets {
        values: values[..k].to_vec(),
        left: DMatrix::from_columns(&(0..k).map(|i| combine(&us[..size], p, i)).collect::<Vec<_>>()),
        right: DMatrix::from_columns(&(0..k).map(|i| combine(&vs[..size], q, i)).collect::<Vec<_>>()),
    }
}

/// Flips each pair so the largest-magnitude entry of the left vector is positive.
fn fix_signs(t: &mut SvdTriplets) {
    for i in 0..t.values.len() {
        let col = t.left.column(i);
        let pivot = col.iter().copied().fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            t.left.column_mut(i).neg_mut();
            t.right.column_mut(i).neg_mut();
        }
    }
}

/// All squared singular values of `a`, descending, via the eigenvalues of
/// the smaller Gram matrix.
pub fn squared_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let gram = if a.nrows() <= a.ncols() { a * a.transpose() } else { a.tr_mul(a) };
    let mut ev: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}
