//! Limiting squared overlaps between outlier singular vectors and the
//! planted directions, plus the two-vector rotation that combines both
//! outliers of one spike.
//!
//! For a spike `(l_x, l_y, rho)` and `z` above the edge, with `x = t(z^2)`:
//!
//! ```text
//! j(z)  = (x - 1/l_x)(x - 1/l_y) - rho^2 W(x) / z^2
//! f_x(z) = h_x(z) (rho^2 W(x) / z^2 + x / l_y - x^2)
//! f_y(z) = h_y(z) (rho^2 W(x) / z^2 + x / l_x - x^2)
//! W(x)  = (1 + x)^2 (1 + a_x x)(1 + a_y x)
//! ```
//!
//! `j` is the determinant of the 4x4 coupling matrix `K - A` and vanishes
//! exactly at the outlier positions. The overlaps are the residues
//! `m_x = 2 f_x / j'` and `m_y = 2 f_y / j'` at `z = b(r)`.
//!
//! Left singular vectors pair with the X-side signal and right singular
//! vectors with the Y-side signal.

use nalgebra::Matrix4;

use crate::bulk::{position_formula, BulkLaw};
use crate::error::{Error, Result};
use crate::outliers::Branch;
use crate::polys::{r_pair, AspectRatios, Spike};

/// Relative step of the central-difference check on `j'`.
pub const FD_STEP: f64 = 1e-6;
/// Allowed relative disagreement between analytic and finite-difference `j'`.
pub const FD_TOLERANCE: f64 = 1e-5;
/// Slack under which an overlap outside `[0, 1]` is clamped rather than rejected.
pub const CLAMP_SLACK: f64 = 1e-6;

/// Limiting diagonal resolvent entries at `z`, in canonical channel order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HValues {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
}

impl HValues {
    pub fn at(ratios: &AspectRatios, z: f64, x: f64) -> Self {
        let (ax, ay) = (ratios.alpha_x(), ratios.alpha_y());
        Self {
            h1: (1.0 + ax * x) / z,
            h2: z * x / (1.0 + ay * x),
            h3: (1.0 + ay * x) / z,
            h4: z * x / (1.0 + ax * x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapPrediction {
    pub spike_index: usize,
    pub branch: Branch,
    /// Limit of `<left outlier vector, v_x>^2`.
    pub m_x: f64,
    /// Limit of `<right outlier vector, v_y>^2`.
    pub m_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationPlan {
    pub beta_opt: f64,
    pub q_opt: f64,
}

fn above_edge(law: &BulkLaw, z: f64, op: &'static str) -> Result<f64> {
    if !(z.is_finite() && z > law.sigma_plus()) {
        return Err(Error::domain(op, format!("z = {z} must exceed the edge {}", law.sigma_plus())));
    }
    law.t_of(z * z)
}

pub fn h_values(ratios: &AspectRatios, z: f64) -> Result<HValues> {
    let law = BulkLaw::new(*ratios)?;
    let x = above_edge(&law, z, "h_values")?;
    Ok(HValues::at(ratios, z, x))
}

fn big_n(ratios: &AspectRatios, x: f64) -> f64 {
    (1.0 + x) * (1.0 + ratios.alpha_x() * x) * (1.0 + ratios.alpha_y() * x)
}

fn big_n_prime(ratios: &AspectRatios, x: f64) -> f64 {
    let (ax, ay) = (ratios.alpha_x(), ratios.alpha_y());
    (1.0 + ax * x) * (1.0 + ay * x) + ax * (1.0 + x) * (1.0 + ay * x) + ay * (1.0 + x) * (1.0 + ax * x)
}

fn weight(ratios: &AspectRatios, x: f64) -> f64 {
    (1.0 + x) * big_n(ratios, x)
}

fn weight_prime(ratios: &AspectRatios, x: f64) -> f64 {
    big_n(ratios, x) + (1.0 + x) * big_n_prime(ratios, x)
}

fn j_at(ratios: &AspectRatios, s: &Spike, z: f64, x: f64) -> f64 {
    (x - 1.0 / s.lambda_x) * (x - 1.0 / s.lambda_y) - s.rho * s.rho * weight(ratios, x) / (z * z)
}

/// Total `z`-derivative of `j` along the transform branch `x(z)`.
fn j_prime_at(ratios: &AspectRatios, s: &Spike, z: f64, x: f64) -> f64 {
    let r2 = s.rho * s.rho;
    let z2 = z * z;
    let dx_dz = 2.0 * z * x / (big_n_prime(ratios, x) - z2);
    let dj_dx = 2.0 * x - 1.0 / s.lambda_x - 1.0 / s.lambda_y - r2 * weight_prime(ratios, x) / z2;
    dj_dx * dx_dz + 2.0 * r2 * weight(ratios, x) / (z2 * z)
}

fn f_at(ratios: &AspectRatios, s: &Spike, z: f64, x: f64) -> (f64, f64) {
    let common = s.rho * s.rho * weight(ratios, x) / (z * z) - x * x;
    let hx = (1.0 + ratios.channel_x() * x) / z;
    let hy = (1.0 + ratios.channel_y() * x) / z;
    (hx * (common + x / s.lambda_y), hy * (common + x / s.lambda_x))
}

/// `K - A` in canonical channel order: `K` carries the h-values on its
/// diagonal and `rho * x` at `(2, 4)`; `A` is the inverse of the spike's
/// signal-coupling matrix.
pub fn coupling_matrix(ratios: &AspectRatios, spike: &Spike, z: f64) -> Result<Matrix4<f64>> {
    let law = BulkLaw::new(*ratios)?;
    let x = above_edge(&law, z, "coupling_matrix")?;
    let s = ratios.orient(*spike);
    let h = HValues::at(ratios, z, x);
    let (a, c) = (1.0 / s.lambda_x.sqrt(), 1.0 / s.lambda_y.sqrt());
    let rx = s.rho * x;
    #[rustfmt::skip]
    let m = Matrix4::new(
        h.h1, 0.0,          0.0,  -a,
        0.0,  h.h2,         -c,   rx + s.rho,
        0.0,  -c,           h.h3, 0.0,
        -a,   rx + s.rho,   0.0,  h.h4,
    );
    Ok(m)
}

pub fn j_func(ratios: &AspectRatios, spike: &Spike, z: f64) -> Result<f64> {
    let law = BulkLaw::new(*ratios)?;
    let x = above_edge(&law, z, "j_func")?;
    Ok(j_at(ratios, spike, z, x))
}

/// Central difference of [`j_func`] with step `FD_STEP * z`.
pub fn j_derivative_fd(ratios: &AspectRatios, spike: &Spike, z: f64) -> Result<f64> {
    let h = FD_STEP * z;
    Ok((j_func(ratios, spike, z + h)? - j_func(ratios, spike, z - h)?) / (2.0 * h))
}

/// Analytic `j'(z)`, cross-checked against [`j_derivative_fd`] whenever
/// the difference stencil stays clear of the edge.
pub fn j_derivative(ratios: &AspectRatios, spike: &Spike, z: f64) -> Result<f64> {
    let law = BulkLaw::new(*ratios)?;
    let x = above_edge(&law, z, "j_derivative")?;
    let analytic = j_prime_at(ratios, spike, z, x);
    check_derivative(&law, spike, z, analytic)?;
    Ok(analytic)
}

fn check_derivative(law: &BulkLaw, spike: &Spike, z: f64, analytic: f64) -> Result<()> {
    if z * (1.0 - 2.0 * FD_STEP) <= law.sigma_plus() * (1.0 + 1e-3) {
        return Ok(());
    }
    let fd = j_derivative_fd(&law.ratios(), spike, z)?;
    let scale = analytic.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
    if (analytic - fd).abs() > FD_TOLERANCE * scale {
        return Err(Error::Consistency(format!(
            "j'({z}) analytic {analytic} vs finite difference {fd} for {spike:?}"
        )));
    }
    Ok(())
}

/// `(f_x, f_y)` in the caller's channel labels.
pub fn f_values(ratios: &AspectRatios, spike: &Spike, z: f64) -> Result<(f64, f64)> {
    let law = BulkLaw::new(*ratios)?;
    let x = above_edge(&law, z, "f_values")?;
    Ok(f_at(ratios, spike, z, x))
}

fn clamp_unit(v: f64, what: &str) -> Result<f64> {
    if !(v.is_finite() && (-CLAMP_SLACK..=1.0 + CLAMP_SLACK).contains(&v)) {
        return Err(Error::Consistency(format!("{what} = {v} lies outside [0, 1]")));
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Limiting squared overlaps of one branch, `(0, 0)` when undetectable.
pub fn overlap_m(ratios: &AspectRatios, spike: &Spike, branch: Branch) -> Result<OverlapPrediction> {
    overlap_with(&BulkLaw::new(*ratios)?, spike, 1, branch)
}

fn overlap_with(law: &BulkLaw, spike: &Spike, spike_index: usize, branch: Branch) -> Result<OverlapPrediction> {
    let ratios = law.ratios();
    let (lo, hi) = r_pair(spike)?;
    let r = match branch {
        Branch::Minus => lo,
        Branch::Plus => hi,
    };
    if r > law.tau_plus() {
        return Ok(OverlapPrediction { spike_index, branch, m_x: 0.0, m_y: 0.0 });
    }
    // On the detectable side t(b(r)^2) = r, so the root itself is the
    // transform value at the outlier.
    let z = position_formula(&ratios, r);
    let dj = j_prime_at(&ratios, spike, z, r);
    check_derivative(law, spike, z, dj)?;
    let (fx, fy) = f_at(&ratios, spike, z, r);
    Ok(OverlapPrediction {
        spike_index,
        branch,
        m_x: clamp_unit(2.0 * fx / dj, "m_x")?,
        m_y: clamp_unit(2.0 * fy / dj, "m_y")?,
    })
}

/// Both branches of every spike, in spike order with the minus branch first.
pub fn predict_overlaps(ratios: &AspectRatios, spikes: &[Spike]) -> Result<Vec<OverlapPrediction>> {
    let law = BulkLaw::new(*ratios)?;
    let mut out = Vec::with_capacity(2 * spikes.len());
    for (k, spike) in spikes.iter().enumerate() {
        for branch in [Branch::Minus, Branch::Plus] {
            out.push(overlap_with(&law, spike, k + 1, branch)?);
        }
    }
    Ok(out)
}

/// Rotation angle `beta = m_minus / sqrt(m_minus^2 + m_plus^2)` and the
/// rotated overlap `q = beta m_minus + sqrt(1 - beta^2) m_plus`.
pub fn beta_optimal(m_minus: f64, m_plus: f64) -> Result<RotationPlan> {
    for (name, v) in [("m_minus", m_minus), ("m_plus", m_plus)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")));
        }
    }
    if m_minus == 0.0 && m_plus == 0.0 {
        return Err(Error::Degenerate("both overlaps are zero; rotation undefined".into()));
    }
    let norm = m_minus.hypot(m_plus);
    let beta = m_minus / norm;
    let q = beta * m_minus + (1.0 - beta * beta).max(0.0).sqrt() * m_plus;
    Ok(RotationPlan { beta_opt: beta, q_opt: q })
}

/// Limiting squared overlap of `beta u_minus + sqrt(1 - beta^2) u_plus`
/// with the planted vector, for outlier vectors whose signs are aligned
/// with it: `(beta sqrt(m_minus) + sqrt(1 - beta^2) sqrt(m_plus))^2`.
pub fn rotated_overlap_limit(m_minus: f64, m_plus: f64, beta: f64) -> f64 {
    let c = (1.0 - beta * beta).max(0.0).sqrt();
    (beta * m_minus.max(0.0).sqrt() + c * m_plus.max(0.0).sqrt()).powi(2)
}
