//! Limiting spectrum of the unspiked cross-covariance `X^T Y`.
//!
//! The transform variable `x` used throughout is the root of
//! `P(x, z^2) = 0`. The T-transform of the squared-singular-value law,
//! normalized over the smaller channel `d_x`, is `alpha_x * x`, so the
//! Stieltjes transform is `g(w) = (1 + alpha_x x(w)) / w`.
//!
//! When `alpha_x < 1` the sample dimension is the smallest, the product has
//! rank `n` and a fraction `1 - alpha_x` of the squared singular values sits
//! at zero. [`density`] returns the absolutely continuous part only.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::{Complex, Matrix3};

use crate::error::{Error, Result};
use crate::polys::{eval_p, p_coeffs, real_roots, tau_plus, AspectRatios};

pub type Complex64 = Complex<f64>;

/// Default Stieltjes smoothing width.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// `sqrt((1 + r)(1 + a_x r)(1 + a_y r) / r)`, without clamping.
///
/// At `r = tau_plus` this is the bulk edge; for `r < tau_plus` it is the
/// position of an outlier.
pub fn position_formula(ratios: &AspectRatios, r: f64) -> f64 {
    let (ax, ay) = (ratios.alpha_x(), ratios.alpha_y());
    ((1.0 + r) * (1.0 + ax * r) * (1.0 + ay * r) / r).sqrt()
}

/// Rightmost edge of the singular-value bulk.
pub fn edge(ratios: &AspectRatios) -> Result<f64> {
    Ok(position_formula(ratios, tau_plus(ratios)?))
}

/// Mass of the absolutely continuous part: `min(1, alpha_x)`.
pub fn continuous_mass(ratios: &AspectRatios) -> f64 {
    ratios.alpha_x().min(1.0)
}

/// Edge data for one pair of aspect ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkLaw {
    ratios: AspectRatios,
    sigma_plus: f64,
    tau_plus: f64,
}

impl BulkLaw {
    pub fn new(ratios: AspectRatios) -> Result<Self> {
        let tau_plus = tau_plus(&ratios)?;
        Ok(Self { ratios, sigma_plus: position_formula(&ratios, tau_plus), tau_plus })
    }

    pub fn ratios(&self) -> AspectRatios {
        self.ratios
    }

    /// Edge of the singular values.
    pub fn sigma_plus(&self) -> f64 {
        self.sigma_plus
    }

    /// Transform value at the edge.
    pub fn tau_plus(&self) -> f64 {
        self.tau_plus
    }

    /// Edge of the squared singular values.
    pub fn edge_squared(&self) -> f64 {
        self.sigma_plus * self.sigma_plus
    }

    pub fn t_of(&self, z_squared: f64) -> Result<f64> {
        t_of_with(self, z_squared)
    }

    pub fn density(&self, x: f64, epsilon: f64) -> Result<f64> {
        density(&self.ratios, x, epsilon)
    }
}

/// Real transform branch at `z_squared >= edge^2`, the root of
/// `P(t, z_squared)` in `(0, tau_plus]`.
pub fn t_of(ratios: &AspectRatios, z_squared: f64) -> Result<f64> {
    t_of_with(&BulkLaw::new(*ratios)?, z_squared)
}

fn t_of_with(law: &BulkLaw, z_squared: f64) -> Result<f64> {
    let edge2 = law.edge_squared();
    let tau = law.tau_plus;
    if !(z_squared.is_finite() && z_squared >= edge2 * (1.0 - 1e-13)) {
        return Err(Error::domain("t_of", format!("z^2 = {z_squared} lies below the bulk edge {edge2}")));
    }
    if z_squared <= edge2 {
        return Ok(tau);
    }
    let ratios = law.ratios;
    let f = |x: f64| eval_p(&ratios, x, z_squared);
    let coeffs = p_coeffs(&ratios, z_squared);

    // P(0) = 1 > 0 and P(tau) = -(z^2 - edge^2) tau < 0 bracket the branch.
    let seed = real_roots(&coeffs)?
        .into_iter()
        .filter(|&r| r > 0.0 && r <= tau)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
    let (mut lo, mut hi) = (0.0_f64, tau);
    let mut x = seed.unwrap_or(0.5 * tau);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 { lo = x } else { hi = x }
        let d = coeffs.eval_derivative(x);
        let newton = x - fx / d;
        let next = if d != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.max(f64::MIN_POSITIVE) {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Complex transform branch for `Im(w) < 0`.
///
/// Among the roots of `P(., w)` with nonnegative imaginary part, the
/// physical one maximizes `Im g(w)`; spurious roots either leave the upper
/// half-plane or give `Im g <= 0`.
pub fn t_complex(ratios: &AspectRatios, w: Complex64) -> Result<Complex64> {
    if !(w.re.is_finite() && w.im.is_finite() && w.im < 0.0) {
        return Err(Error::domain("t_complex", format!("need Im(w) < 0, got {w}")));
    }
    let (ax, ay) = (ratios.alpha_x(), ratios.alpha_y());
    let lead = ax * ay;
    let a2 = Complex64::new((ax + ay + ax * ay) / lead, 0.0);
    let a1 = (Complex64::new(1.0 + ax + ay, 0.0) - w) / lead;
    let a0 = Complex64::new(1.0 / lead, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    #[rustfmt::skip]
    let companion = Matrix3::new(
        zero, zero, -a0,
        one,  zero, -a1,
        zero, one,  -a2,
    );
    let eig = companion
        .eigenvalues()
        .ok_or_else(|| Error::Solver(format!("complex Schur failed for w = {w}")))?;

    let p = |x: Complex64| eval_p(ratios, x, w);
    let dp = |x: Complex64| {
        Complex64::new(1.0 + ax + ay, 0.0) - w + x * (2.0 * (ax + ay + ax * ay) + x * 3.0 * ax * ay)
    };
    let polish = |mut x: Complex64| {
        for _ in 0..4 {
            let d = dp(x);
            if d.norm() == 0.0 {
                break;
            }
            let next = x - p(x) / d;
            if p(next).norm() >= p(x).norm() {
                break;
            }
            x = next;
        }
        x
    };
    let stieltjes_im = |x: Complex64| ((one + ax * x) / w).im;
    eig.iter()
        .map(|&x| polish(x))
        .filter(|x| x.im >= -1e-12 * x.norm().max(1.0))
        .max_by(|a, b| stieltjes_im(*a).total_cmp(&stieltjes_im(*b)))
        .ok_or_else(|| Error::Solver(format!("no root in the closed upper half-plane at w = {w}")))
}

/// Stieltjes transform of the squared-singular-value law, atom included.
pub fn stieltjes(ratios: &AspectRatios, w: Complex64) -> Result<Complex64> {
    let x = t_complex(ratios, w)?;
    Ok((1.0 + ratios.alpha_x() * x) / w)
}

fn smoothed_density(ratios: &AspectRatios, x: f64, epsilon: f64) -> Result<f64> {
    let w = Complex64::new(x, -epsilon);
    let mut g = stieltjes(ratios, w)?;
    let atom = 1.0 - continuous_mass(ratios);
    if atom > 0.0 {
        g -= atom / w;
    }
    Ok(g.im / std::f64::consts::PI)
}

/// Density of the continuous part of the squared-singular-value law at `x`,
/// by Stieltjes inversion at widths `epsilon` and `epsilon / 2` combined by
/// linear Richardson extrapolation.
pub fn density(ratios: &AspectRatios, x: f64, epsilon: f64) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::domain("density", format!("x must be finite and > 0, got {x}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(Error::domain("density", format!("epsilon must lie in (0, 1e-3], got {epsilon}")));
    }
    let coarse = smoothed_density(ratios, x, epsilon)?;
    let fine = smoothed_density(ratios, x, 0.5 * epsilon)?;
    Ok((2.0 * fine - coarse).max(0.0))
}

/// Integral of [`density`] over `[lo, hi]`.
///
/// Uses Gauss-Legendre in `u` with `x = lo + (hi - lo) u^3`, which absorbs
/// the integrable blow-up of the density at the origin.
pub fn integrate_density(ratios: &AspectRatios, lo: f64, hi: f64, epsilon: f64) -> Result<f64> {
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::domain("integrate_density", format!("need 0 <= lo < hi, got [{lo}, {hi}]")));
    }
    let rule = GaussLegendre::new(NonZeroUsize::new(48).expect("nonzero degree"));
    let width = hi - lo;
    let mut failure = None;
    let value = rule.integrate(0.0, 1.0, |u| {
        let x = lo + width * u * u * u;
        if x <= 0.0 {
            return 0.0;
        }
        match density(ratios, x, epsilon) {
            Ok(d) => d * 3.0 * width * u * u,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ratios(ax: f64, ay: f64) -> AspectRatios {
        AspectRatios::new(ax, ay).unwrap()
    }

    #[test]
    fn edge_examples() {
        let a = ratios(1.0, 1.0);
        assert_abs_diff_eq!(edge(&a).unwrap(), 6.75_f64.sqrt(), epsilon = 1e-12);
        for (ax, ay) in [(1.0, 1.0), (2.0, 0.5), (0.3, 0.2), (5.0, 3.0)] {
            let a = ratios(ax, ay);
            let law = BulkLaw::new(a).unwrap();
            let res = eval_p(&a, law.tau_plus(), law.edge_squared());
            assert!(res.abs() < 1e-10, "residual {res} at {a:?}");
        }
    }

    #[test]
    fn t_of_examples() {
        let a = ratios(1.0, 1.0);
        assert_abs_diff_eq!(t_of(&a, 6.75).unwrap(), 0.5, epsilon = 1e-12);
        assert!(t_of(&a, 1e8).unwrap() < 1e-6);
        let t = t_of(&a, 10.0).unwrap();
        assert!(t > 0.0 && t < 0.5);
        assert!(eval_p(&a, t, 10.0).abs() <= 1e-10);
        assert!(matches!(t_of(&a, 6.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn t_of_is_decreasing_and_solves_p() {
        for (ax, ay) in [(1.0, 1.0), (2.0, 0.5), (0.4, 0.1), (8.0, 8.0)] {
            let law = BulkLaw::new(ratios(ax, ay)).unwrap();
            let e2 = law.edge_squared();
            let mut prev = f64::INFINITY;
            for i in 0..1000 {
                let z2 = e2 * (1.0 + 9.0 * i as f64 / 999.0);
                let t = law.t_of(z2).unwrap();
                assert!(t > 0.0 && t <= law.tau_plus());
                assert!(t < prev, "not decreasing at z2={z2}");
                assert!(eval_p(&law.ratios(), t, z2).abs() <= 1e-10);
                prev = t;
            }
        }
    }

    #[test]
    fn t_complex_examples() {
        let a = ratios(1.0, 1.0);
        let t = t_complex(&a, Complex64::new(6.75, -1e-9)).unwrap();
        assert!((t - Complex64::new(0.5, 0.0)).norm() < 1e-3);
        let t = t_complex(&a, Complex64::new(1e8, -1.0)).unwrap();
        assert!(t.norm() < 1e-7);
        let t = t_complex(&a, Complex64::new(0.0, -1e8)).unwrap();
        assert!(t.norm() < 1e-7);
        let t = t_complex(&a, Complex64::new(3.0, -1e-8)).unwrap();
        assert!(t.im > 1e-3);
        assert!(eval_p(&a, t, Complex64::new(3.0, -1e-8)).norm() < 1e-10);
        assert!(t_complex(&a, Complex64::new(3.0, 0.0)).is_err());
    }

    #[test]
    fn complex_branch_meets_real_branch() {
        let a = ratios(2.0, 0.5);
        let law = BulkLaw::new(a).unwrap();
        for z2 in [1.01 * law.edge_squared(), 2.0 * law.edge_squared(), 50.0] {
            let real = law.t_of(z2).unwrap();
            let cplx = t_complex(&a, Complex64::new(z2, -1e-10)).unwrap();
            assert!((cplx.re - real).abs() < 1e-7, "{z2}: {cplx} vs {real}");
        }
    }

    #[test]
    fn density_vanishes_outside_support() {
        for (ax, ay) in [(1.0, 1.0), (2.0, 0.5), (0.5, 0.25)] {
            let law = BulkLaw::new(ratios(ax, ay)).unwrap();
            assert!(law.density(2.0 * law.edge_squared(), DEFAULT_EPSILON).unwrap() < 1e-4);
        }
        let a = ratios(1.0, 1.0);
        assert!(density(&a, 0.0, 1e-6).is_err());
        assert!(density(&a, 1.0, 1e-2).is_err());
    }

    #[test]
    fn density_integrates_to_continuous_mass() {
        for (ax, ay) in [(1.0, 1.0), (2.0, 0.5), (4.0, 2.0), (0.5, 0.25), (0.8, 0.8)] {
            let a = ratios(ax, ay);
            let e2 = edge(&a).unwrap().powi(2);
            let bins = 64;
            let mass: f64 = (0..bins)
                .map(|i| {
                    let lo = e2 * i as f64 / bins as f64;
                    let hi = e2 * (i + 1) as f64 / bins as f64;
                    integrate_density(&a, lo, hi, DEFAULT_EPSILON).unwrap()
                })
                .sum();
            let expected = continuous_mass(&a);
            assert!((mass - expected).abs() < 0.01 * expected, "{a:?}: mass {mass} vs {expected}");
        }
    }

    #[test]
    fn swap_invariance() {
        let a = AspectRatios::new(0.5, 2.0).unwrap();
        let b = AspectRatios::new(2.0, 0.5).unwrap();
        assert_eq!(edge(&a).unwrap(), edge(&b).unwrap());
        assert_eq!(density(&a, 1.3, 1e-6).unwrap(), density(&b, 1.3, 1e-6).unwrap());
    }
}
