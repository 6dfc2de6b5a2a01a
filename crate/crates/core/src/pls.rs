//! Partial least squares on a pair of data matrices sharing their rows.
//!
//! Mode-A PLS repeats, for `s = 1..r0`:
//!
//! 1. take the top singular pair `(u, v)` of the current `X^T Y`;
//! 2. scores `u_x = X u`, `u_y = Y v`;
//! 3. loadings `v_x = X^T u_x / |u_x|^2`, `v_y = Y^T u_y / |u_y|^2`;
//! 4. deflate `X -= u_x v_x^T`, `Y -= u_y v_y^T`.
//!
//! PLS-SVD skips step 3 and the deflation: the loadings are the top `r0`
//! singular vectors of a single decomposition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{top_svd_with, CrossProduct, SvdOptions};
use crate::sim::ModelInstance;

#[derive(Debug, Clone, PartialEq)]
pub struct PlsStep {
    pub u_hat_x: DVector<f64>,
    pub u_hat_y: DVector<f64>,
    pub v_hat_x: DVector<f64>,
    pub v_hat_y: DVector<f64>,
    /// Singular value of the (possibly deflated) cross product at this step.
    pub singular_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlsEstimates {
    pub steps: Vec<PlsStep>,
}

fn check_inputs(x: &DMatrix<f64>, y: &DMatrix<f64>, r0: usize) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!("row counts differ: {} vs {}", x.nrows(), y.nrows())));
    }
    let limit = x.ncols().min(y.ncols());
    if r0 == 0 || r0 > limit {
        return Err(Error::invalid("r0", format!("need 1 <= r0 <= {limit}, got {r0}")));
    }
    Ok(())
}

fn at_step(step: usize) -> impl Fn(Error) -> Error {
    move |e| Error::PlsStep { step, source: Box::new(e) }
}

pub fn pls_mode_a(x: &DMatrix<f64>, y: &DMatrix<f64>, r0: usize) -> Result<PlsEstimates> {
    pls_mode_a_with(x, y, r0, &SvdOptions::default())
}

pub fn pls_mode_a_with(x: &DMatrix<f64>, y: &DMatrix<f64>, r0: usize, opts: &SvdOptions) -> Result<PlsEstimates> {
    Ok(deflate(x, y, r0, opts)?.0)
}

/// Mode-A PLS that also returns the deflated working matrices.
pub fn pls_mode_a_deflated(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r0: usize,
    opts: &SvdOptions,
) -> Result<(PlsEstimates, DMatrix<f64>, DMatrix<f64>)> {
    deflate(x, y, r0, opts)
}

fn deflate(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    r0: usize,
    opts: &SvdOptions,
) -> Result<(PlsEstimates, DMatrix<f64>, DMatrix<f64>)> {
    check_inputs(x, y, r0)?;
    let mut xw = x.clone();
    let mut yw = y.clone();
    let mut steps = Vec::with_capacity(r0);
    for step in 1..=r0 {
        let wrap = at_step(step);
        let top = top_svd_with(&CrossProduct { x: &xw, y: &yw }, 1, opts).map_err(&wrap)?;
        let (u, v) = (top.left.column(0).into_owned(), top.right.column(0).into_owned());
        let u_hat_x = &xw * &u;
        let u_hat_y = &yw * &v;
        let (nx, ny) = (u_hat_x.norm_squared(), u_hat_y.norm_squared());
        if nx == 0.0 || ny == 0.0 {
            return Err(wrap(Error::Degenerate(format!("zero score vector (|u_x|^2 = {nx}, |u_y|^2 = {ny})"))));
        }
        let v_hat_x = xw.tr_mul(&u_hat_x) / nx;
        let v_hat_y = yw.tr_mul(&u_hat_y) / ny;
        xw.ger(-1.0, &u_hat_x, &v_hat_x, 1.0);
        yw.ger(-1.0, &u_hat_y, &v_hat_y, 1.0);
        steps.push(PlsStep { u_hat_x, u_hat_y, v_hat_x, v_hat_y, singular_value: top.values[0] });
    }
    Ok((PlsEstimates { steps }, xw, yw))
}

pub fn pls_svd(x: &DMatrix<f64>, y: &DMatrix<f64>, r0: usize) -> Result<PlsEstimates> {
    pls_svd_with(x, y, r0, &SvdOptions::default())
}

pub fn pls_svd_with(x: &DMatrix<f64>, y: &DMatrix<f64>, r0: usize, opts: &SvdOptions) -> Result<PlsEstimates> {
    check_inputs(x, y, r0)?;
    let t = top_svd_with(&CrossProduct { x, y }, r0, opts).map_err(at_step(1))?;
    let steps = (0..r0)
        .map(|i| {
            let v_hat_x = t.left.column(i).into_owned();
            let v_hat_y = t.right.column(i).into_owned();
            PlsStep { u_hat_x: x * &v_hat_x, u_hat_y: y * &v_hat_y, v_hat_x, v_hat_y, singular_value: t.values[i] }
        })
        .collect();
    Ok(PlsEstimates { steps })
}

/// `<a, b>^2 / (|a|^2 |b|^2)`, zero when either vector vanishes.
pub fn normalized_overlap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let denom = a.norm_squared() * b.norm_squared();
    if denom == 0.0 {
        0.0
    } else {
        a.dot(b).powi(2) / denom
    }
}

/// Normalized squared overlaps of one estimate step with one planted component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryRow {
    /// 1-based PLS step.
    pub step: usize,
    /// 1-based planted component.
    pub component: usize,
    pub v_x: f64,
    pub v_y: f64,
    pub u_x: f64,
    pub u_y: f64,
}

/// Every (step, component) pair, step-major.
pub fn recovery_report(estimates: &PlsEstimates, instance: &ModelInstance) -> Vec<RecoveryRow> {
    let mut rows = Vec::with_capacity(estimates.steps.len() * instance.v_x.len());
    for (s, est) in estimates.steps.iter().enumerate() {
        for k in 0..instance.v_x.len() {
            rows.push(RecoveryRow {
                step: s + 1,
                component: k + 1,
                v_x: normalized_overlap(&est.v_hat_x, &instance.v_x[k]),
                v_y: normalized_overlap(&est.v_hat_y, &instance.v_y[k]),
                u_x: normalized_overlap(&est.u_hat_x, &instance.u_x[k]),
                u_y: normalized_overlap(&est.u_hat_y, &instance.u_y[k]),
            });
        }
    }
    rows
}
