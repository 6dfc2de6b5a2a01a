//! Outlier singular values: which spikes detach from the bulk and where
//! they land.
//!
//! Every spike contributes two candidate outliers, one per positive root
//! `r_minus <= r_plus` of its cubic `R`. A root detaches iff it lies at or
//! below `tau_plus`, and its limit position is `b(r)`.

use rayon::prelude::*;

use crate::bulk::{position_formula, BulkLaw};
use crate::error::{Error, Result};
use crate::polys::{r_pair, tau_plus, AspectRatios, Spike};

/// Lower end of the lambda search range.
pub const LAMBDA_MIN: f64 = 1e-6;
/// Upper end of the lambda search range.
pub const LAMBDA_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Branch {
    Minus,
    Plus,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::Minus => "minus",
            Branch::Plus => "plus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierPrediction {
    /// 1-based index into the spike list.
    pub spike_index: usize,
    pub branch: Branch,
    pub r_value: f64,
    /// Limiting singular value; the edge when not detectable.
    pub position: f64,
    pub detectable: bool,
}

/// `b(r)`: outlier position for `r <= tau_plus`, the edge otherwise.
pub fn b_of(ratios: &AspectRatios, r: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::domain("b_of", format!("r must be finite and > 0, got {r}")));
    }
    let tau = tau_plus(ratios)?;
    Ok(position_formula(ratios, r.min(tau)))
}

fn b_with_tau(ratios: &AspectRatios, tau: f64, r: f64) -> f64 {
    position_formula(ratios, r.min(tau))
}

/// The `2 r` predictions, sorted by descending position with ties broken
/// by `(spike_index, branch)`.
pub fn predict_outliers(ratios: &AspectRatios, spikes: &[Spike]) -> Result<Vec<OutlierPrediction>> {
    let tau = tau_plus(ratios)?;
    let mut out = Vec::with_capacity(2 * spikes.len());
    for (k, spike) in spikes.iter().enumerate() {
        let (lo, hi) = r_pair(&ratios.orient(*spike))?;
        for (branch, r) in [(Branch::Minus, lo), (Branch::Plus, hi)] {
            out.push(OutlierPrediction {
                spike_index: k + 1,
                branch,
                r_value: r,
                position: b_with_tau(ratios, tau, r),
                detectable: r <= tau,
            });
        }
    }
    out.sort_by(|a, b| {
        b.position
            .total_cmp(&a.position)
            .then(a.spike_index.cmp(&b.spike_index))
            .then(a.branch.cmp(&b.branch))
    });
    Ok(out)
}

/// `tau_plus - r_minus`; positive iff at least one outlier detaches.
pub fn detection_margin(ratios: &AspectRatios, spike: &Spike) -> Result<f64> {
    Ok(tau_plus(ratios)? - r_pair(spike)?.0)
}

fn margin_with_tau(tau: f64, lambda_x: f64, lambda_y: f64, rho: f64) -> Result<f64> {
    Ok(tau - r_pair(&Spike::new(lambda_x, lambda_y, rho)?)?.0)
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("rho", format!("must lie in (-1, 1), got {rho}")))
    }
}

/// Bisection for the zero of a nondecreasing `margin` on `[lo, hi]`, given
/// `margin(lo) < 0 <= margin(hi)`.
fn bisect<F>(mut lo: f64, mut hi: f64, tol: f64, margin: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    while hi - lo > tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if margin(mid)? >= 0.0 { hi = mid } else { lo = mid }
    }
    Ok(hi)
}

/// Geometric bracket expansion from `[LAMBDA_MIN, 1]` up to `LAMBDA_MAX`.
/// Returns `None` when the margin stays negative up to `LAMBDA_MAX`.
fn expand_bracket<F>(margin: &F) -> Result<Option<(f64, f64)>>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut lo = LAMBDA_MIN;
    let mut hi = 1.0;
    loop {
        if margin(hi)? >= 0.0 {
            return Ok(Some((lo, hi)));
        }
        if hi >= LAMBDA_MAX {
            return Ok(None);
        }
        lo = hi;
        hi = (hi * 2.0).min(LAMBDA_MAX);
    }
}

/// Smallest `lambda` such that the spike `(lambda, lambda, rho)` is at
/// criticality, to absolute tolerance `1e-10` (relative above 1).
pub fn critical_lambda_symmetric(ratios: &AspectRatios, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let tau = tau_plus(ratios)?;
    let margin = |l: f64| margin_with_tau(tau, l, l, rho);
    if margin(LAMBDA_MIN)? >= 0.0 {
        return Err(Error::Solver(format!("detectable already at lambda = {LAMBDA_MIN}; no bracket")));
    }
    let (lo, hi) = expand_bracket(&margin)?
        .ok_or_else(|| Error::Solver(format!("no sign change of the margin on ({LAMBDA_MIN}, {LAMBDA_MAX})")))?;
    bisect(lo, hi, 1e-10, margin)
}

/// Critical `lambda_y` at one `lambda_x` of a phase diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryValue {
    /// Detection requires `lambda_y >=` this value.
    Finite(f64),
    /// Detectable for every `lambda_y > 0`.
    AnyPositive,
    /// Not detectable for any `lambda_y <= LAMBDA_MAX`.
    Unreachable,
}

impl BoundaryValue {
    /// `0` for [`BoundaryValue::AnyPositive`], `+inf` for [`BoundaryValue::Unreachable`].
    pub fn as_f64(self) -> f64 {
        match self {
            BoundaryValue::Finite(v) => v,
            BoundaryValue::AnyPositive => 0.0,
            BoundaryValue::Unreachable => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub lambda_x: f64,
    pub critical_lambda_y: BoundaryValue,
}

/// Infimum of detectable `lambda_y` for each `lambda_x` of an ascending grid,
/// bisected to `1e-8`. Grid points are processed in parallel.
pub fn phase_boundary(ratios: &AspectRatios, rho: f64, lambda_x_grid: &[f64]) -> Result<Vec<BoundaryPoint>> {
    check_rho(rho)?;
    if lambda_x_grid.is_empty() {
        return Err(Error::invalid("lambda_x_grid", "grid is empty"));
    }
    if lambda_x_grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::invalid("lambda_x_grid", "entries must be finite and > 0"));
    }
    if lambda_x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("lambda_x_grid", "grid must be strictly ascending"));
    }
    let tau = tau_plus(ratios)?;
    lambda_x_grid
        .par_iter()
        .map(|&lx| {
            let margin = |ly: f64| margin_with_tau(tau, lx, ly, rho);
            let value = if margin(LAMBDA_MIN)? >= 0.0 {
                BoundaryValue::AnyPositive
            } else {
                match expand_bracket(&margin)? {
                    None => BoundaryValue::Unreachable,
                    Some((lo, hi)) => BoundaryValue::Finite(bisect(lo, hi, 1e-8, margin)?),
                }
            };
            Ok(BoundaryPoint { lambda_x: lx, critical_lambda_y: value })
        })
        .collect()
}

/// Edge-clamped positions of both branches of one spike, `(b(r_minus), b(r_plus))`.
pub fn branch_positions(law: &BulkLaw, spike: &Spike) -> Result<(f64, f64)> {
    let ratios = law.ratios();
    let (lo, hi) = r_pair(&ratios.orient(*spike))?;
    let tau = law.tau_plus();
    Ok((b_with_tau(&ratios, tau, lo), b_with_tau(&ratios, tau, hi)))
}
