//! Model parameters and the three cubic polynomials that drive the theory.
//!
//! Aspect ratios follow the convention `alpha = n / d`: the shared sample
//! dimension divided by the channel dimension. This is the reading under
//! which the edge `sigma_plus` matches simulated spectra; the alternative
//! `d / n` reading misses the largest singular value by ~60% at
//! `n = 1000, d_x = d_y = 2000` (see `tests/sim_calibration.rs`).
//!
//! `P` is the fixed-point cubic of the bulk transform, `Q` locates the
//! bulk edge and `R` carries the outlier condition of one spike.

use std::ops::{Add, Mul, Sub};

use nalgebra::Matrix3;

use crate::error::{Error, Result};

/// Relative distance under which two real roots are reported as one double root.
pub const ROOT_CLUSTER_TOL: f64 = 1e-7;

/// The pair `(alpha_x, alpha_y)`, stored with `alpha_x >= alpha_y`.
///
/// Construction swaps the channels when needed and records it, so callers
/// can map canonical results back onto their own channel labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AspectRatios {
    alpha_x: f64,
    alpha_y: f64,
    swapped: bool,
}

impl AspectRatios {
    pub fn new(alpha_x: f64, alpha_y: f64) -> Result<Self> {
        for (name, v) in [("alpha_x", alpha_x), ("alpha_y", alpha_y)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(if alpha_x >= alpha_y {
            Self { alpha_x, alpha_y, swapped: false }
        } else {
            Self { alpha_x: alpha_y, alpha_y: alpha_x, swapped: true }
        })
    }

    /// Ratios realized by concrete dimensions: `(n / d_x, n / d_y)`.
    pub fn from_dims(n: usize, d_x: usize, d_y: usize) -> Result<Self> {
        if n == 0 || d_x == 0 || d_y == 0 {
            return Err(Error::invalid("dims", format!("n={n}, d_x={d_x}, d_y={d_y} must all be >= 1")));
        }
        Self::new(n as f64 / d_x as f64, n as f64 / d_y as f64)
    }

    /// Canonical (larger) ratio.
    pub fn alpha_x(&self) -> f64 {
        self.alpha_x
    }

    /// Canonical (smaller) ratio.
    pub fn alpha_y(&self) -> f64 {
        self.alpha_y
    }

    pub fn is_swapped(&self) -> bool {
        self.swapped
    }

    /// Ratio of the caller's X channel.
    pub fn channel_x(&self) -> f64 {
        if self.swapped { self.alpha_y } else { self.alpha_x }
    }

    /// Ratio of the caller's Y channel.
    pub fn channel_y(&self) -> f64 {
        if self.swapped { self.alpha_x } else { self.alpha_y }
    }

    /// Expresses a caller-labelled spike in the canonical channel order.
    pub fn orient(&self, spike: Spike) -> Spike {
        if self.swapped { spike.swapped() } else { spike }
    }
}

/// One rank-one signal component: SNRs per channel and latent correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spike {
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub rho: f64,
}

impl Spike {
    pub fn new(lambda_x: f64, lambda_y: f64, rho: f64) -> Result<Self> {
        for (name, v) in [("lambda_x", lambda_x), ("lambda_y", lambda_y)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(rho.is_finite() && rho.abs() < 1.0) {
            return Err(Error::invalid("rho", format!("must lie in (-1, 1), got {rho}")));
        }
        Ok(Self { lambda_x, lambda_y, rho })
    }

    /// The same spike with the channel roles exchanged.
    pub fn swapped(self) -> Self {
        Self { lambda_x: self.lambda_y, lambda_y: self.lambda_x, rho: self.rho }
    }
}

/// Coefficients of `c0 + c1 x + c2 x^2 + c3 x^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicCoeffs {
    c: [f64; 4],
}

impl CubicCoeffs {
    /// A proper cubic; `c3` must be nonzero.
    pub fn new(c0: f64, c1: f64, c2: f64, c3: f64) -> Result<Self> {
        let c = [c0, c1, c2, c3];
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coeffs", format!("non-finite coefficient in {c:?}")));
        }
        if c3 == 0.0 {
            return Err(Error::invalid("c3", "leading coefficient is zero; use CubicCoeffs::degenerate"));
        }
        Ok(Self { c })
    }

    /// Opt-in constructor that accepts `c3 = 0` (quadratic or linear input).
    pub fn degenerate(c0: f64, c1: f64, c2: f64, c3: f64) -> Result<Self> {
        let c = [c0, c1, c2, c3];
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coeffs", format!("non-finite coefficient in {c:?}")));
        }
        Ok(Self { c })
    }

    pub fn coeffs(&self) -> [f64; 4] {
        self.c
    }

    pub fn eval(&self, x: f64) -> f64 {
        let [c0, c1, c2, c3] = self.c;
        c0 + x * (c1 + x * (c2 + x * c3))
    }

    pub fn eval_derivative(&self, x: f64) -> f64 {
        let [_, c1, c2, c3] = self.c;
        c1 + x * (2.0 * c2 + x * 3.0 * c3)
    }

    fn eval_second_derivative(&self, x: f64) -> f64 {
        2.0 * self.c[2] + 6.0 * self.c[3] * x
    }

    fn inf_norm(&self) -> f64 {
        self.c.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// `P(x, z) = 1 + (1 + a_x + a_y - z) x + (a_x + a_y + a_x a_y) x^2 + a_x a_y x^3`.
///
/// Generic so the same expression serves real and complex arguments.
pub fn eval_p<T>(ratios: &AspectRatios, x: T, z: T) -> T
where
    T: Copy + From<f64> + Add<Output = T> + Sub<Output = T> + Mul<Output = T>,
{
    let (ax, ay) = (ratios.alpha_x, ratios.alpha_y);
    let c1 = T::from(1.0 + ax + ay) - z;
    let c2 = T::from(ax + ay + ax * ay);
    let c3 = T::from(ax * ay);
    T::from(1.0) + x * (c1 + x * (c2 + x * c3))
}

/// Coefficients of `P(., z)` as a cubic in `x` for real `z`.
pub fn p_coeffs(ratios: &AspectRatios, z: f64) -> CubicCoeffs {
    let (ax, ay) = (ratios.alpha_x, ratios.alpha_y);
    CubicCoeffs { c: [1.0, 1.0 + ax + ay - z, ax + ay + ax * ay, ax * ay] }
}

pub fn q_coeffs(ratios: &AspectRatios) -> CubicCoeffs {
    let (ax, ay) = (ratios.alpha_x, ratios.alpha_y);
    CubicCoeffs { c: [1.0, 0.0, -(ax * ay + ax + ay), -2.0 * ax * ay] }
}

/// `Q(x) = 1 - (a_x a_y + a_x + a_y) x^2 - 2 a_x a_y x^3`.
pub fn eval_q(ratios: &AspectRatios, x: f64) -> f64 {
    q_coeffs(ratios).eval(x)
}

/// Coefficients of the outlier cubic `R = (1 + x) q(x)` with
/// `q(x) = 1 - (l_x + l_y + rho^2 l_x l_y) x + l_x l_y (1 - rho^2) x^2`.
///
/// `q` is the determinant condition of the 4x4 spike block once the
/// `rho * t` coupling between the two noise-projected directions is kept;
/// the root at `x = -1` is spurious for the outlier problem.
pub fn r_coeffs(spike: &Spike) -> CubicCoeffs {
    let Spike { lambda_x: lx, lambda_y: ly, rho } = *spike;
    let prod = lx * ly;
    let r2 = rho * rho;
    CubicCoeffs {
        c: [
            1.0,
            1.0 - lx - ly - r2 * prod,
            prod * (1.0 - 2.0 * r2) - lx - ly,
            prod * (1.0 - r2),
        ],
    }
}

pub fn eval_r(spike: &Spike, x: f64) -> f64 {
    r_coeffs(spike).eval(x)
}

/// All real roots in ascending order, double roots listed twice.
///
/// Roots come from the eigenvalues of the companion matrix and are then
/// polished by Newton steps (on `p'` for clustered pairs).
pub fn real_roots(coeffs: &CubicCoeffs) -> Result<Vec<f64>> {
    let [c0, c1, c2, c3] = coeffs.c;
    if c1 == 0.0 && c2 == 0.0 && c3 == 0.0 {
        return Err(Error::Degenerate(format!("constant polynomial {c0}")));
    }
    let mut roots = if c3 != 0.0 {
        companion_real_roots(coeffs)
    } else if c2 != 0.0 {
        quadratic_real_roots(c0, c1, c2)
    } else {
        vec![-c0 / c1]
    };
    roots.sort_by(|a, b| a.total_cmp(b));
    Ok(roots)
}

fn scale(v: f64) -> f64 {
    v.abs().max(1.0)
}

fn companion_real_roots(p: &CubicCoeffs) -> Vec<f64> {
    let [c0, c1, c2, c3] = p.c;
    let (a0, a1, a2) = (c0 / c3, c1 / c3, c2 / c3);
    #[rustfmt::skip]
    let companion = Matrix3::new(
        0.0, 0.0, -a0,
        1.0, 0.0, -a1,
        0.0, 1.0, -a2,
    );
    let mut candidates: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|e| e.im.abs() <= ROOT_CLUSTER_TOL * scale(e.re))
        .map(|e| e.re)
        .collect();
    candidates.sort_by(|a, b| a.total_cmp(b));

    let mut out = Vec::with_capacity(3);
    let mut i = 0;
    while i < candidates.len() {
        let mut j = i + 1;
        while j < candidates.len() && (candidates[j] - candidates[i]).abs() <= ROOT_CLUSTER_TOL * scale(candidates[i]) {
            j += 1;
        }
        let cluster = &candidates[i..j];
        let mean = cluster.iter().sum::<f64>() / cluster.len() as f64;
        if cluster.len() == 1 {
            out.push(polish_simple(p, mean));
        } else {
            let r = polish_multiple(p, mean);
            out.extend(std::iter::repeat_n(r, cluster.len()));
        }
        i = j;
    }
    out
}

fn quadratic_real_roots(c0: f64, c1: f64, c2: f64) -> Vec<f64> {
    let disc = c1 * c1 - 4.0 * c2 * c0;
    let tol = ROOT_CLUSTER_TOL * (c1 * c1).max((4.0 * c2 * c0).abs()).max(f64::MIN_POSITIVE);
    if disc < -tol {
        return Vec::new();
    }
    if disc.abs() <= tol {
        let r = -c1 / (2.0 * c2);
        return vec![r, r];
    }
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    if q == 0.0 {
        // c1 = 0 and c0 = 0 would give disc = 0; here only c1 = 0 with c0/c2 < 0.
        let r = (-c0 / c2).sqrt();
        return vec![-r, r];
    }
    vec![q / c2, c0 / q]
}

fn polish_simple(p: &CubicCoeffs, mut x: f64) -> f64 {
    let mut best = p.eval(x).abs();
    for _ in 0..8 {
        let d = p.eval_derivative(x);
        if d == 0.0 {
            break;
        }
        let next = x - p.eval(x) / d;
        let val = p.eval(next).abs();
        if !(val < best) {
            break;
        }
        best = val;
        x = next;
    }
    x
}

fn polish_multiple(p: &CubicCoeffs, mut x: f64) -> f64 {
    // A double root of p is a simple root of p'.
    let mut best = p.eval(x).abs();
    for _ in 0..8 {
        let d2 = p.eval_second_derivative(x);
        if d2 == 0.0 {
            break;
        }
        let next = x - p.eval_derivative(x) / d2;
        let val = p.eval(next).abs();
        if !(val <= best) {
            break;
        }
        best = val;
        x = next;
    }
    x
}

/// Residual bound used by the root checks: `1e-12 * max(1, |coeffs|_inf)`.
pub fn residual_tolerance(coeffs: &CubicCoeffs) -> f64 {
    1e-12 * coeffs.inf_norm().max(1.0)
}

/// The unique positive root of `Q`, the transform value at the bulk edge.
pub fn tau_plus(ratios: &AspectRatios) -> Result<f64> {
    let q = q_coeffs(ratios);
    let pos: Vec<f64> = real_roots(&q)?.into_iter().filter(|&r| r > 0.0).collect();
    match pos.as_slice() {
        [t] => Ok(*t),
        _ => Err(Error::Solver(format!("Q{:?} returned {} positive roots, expected 1", q.c, pos.len()))),
    }
}

/// The two positive roots `(r_minus, r_plus)` of `R`, ascending.
pub fn r_pair(spike: &Spike) -> Result<(f64, f64)> {
    let r = r_coeffs(spike);
    let pos: Vec<f64> = real_roots(&r)?.into_iter().filter(|&v| v > 0.0).collect();
    match pos.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(Error::Solver(format!(
            "R{:?} for {spike:?} returned {} positive roots, expected 2",
            r.c,
            pos.len()
        ))),
    }
}
