//! Finite-size sampling of the spiked model
//!
//! ```text
//! X~ = X + sum_k sqrt(l_x,k) u_x,k v_x,k^T     (n x d_x)
//! Y~ = Y + sum_k sqrt(l_y,k) u_y,k v_y,k^T     (n x d_y)
//! ```
//!
//! with i.i.d. `N(0, 1/d_x)` and `N(0, 1/d_y)` noise entries and unit
//! planted vectors. Dimensions are `d = round(n / alpha)`, and theory
//! comparisons should use [`ModelConfig::realized_ratios`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{squared_singular_values, top_svd_with, CrossProduct, SvdOptions, SvdTriplets};
use crate::outliers::OutlierPrediction;
use crate::polys::{AspectRatios, Spike};

/// Model size and parameters. Ratios and spikes use the caller's channel labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    ratios: AspectRatios,
    spikes: Vec<Spike>,
    n: usize,
    seed: u64,
    d_x: usize,
    d_y: usize,
}

impl ModelConfig {
    pub fn new(ratios: AspectRatios, spikes: Vec<Spike>, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "must be >= 1"));
        }
        let d_x = (n as f64 / ratios.channel_x()).round();
        let d_y = (n as f64 / ratios.channel_y()).round();
        if d_x < 1.0 || d_y < 1.0 {
            return Err(Error::invalid("n", format!("n = {n} gives empty channels (d_x = {d_x}, d_y = {d_y})")));
        }
        // One f64 matrix per channel; refuse anything beyond 2^31 entries each.
        let too_big = |d: f64| d * n as f64 > (1u64 << 31) as f64;
        if too_big(d_x) || too_big(d_y) {
            return Err(Error::invalid("n", format!("dimensions n={n}, d_x={d_x}, d_y={d_y} are too large")));
        }
        let (d_x, d_y) = (d_x as usize, d_y as usize);
        if 10 * spikes.len() > d_x.min(d_y) {
            return Err(Error::invalid(
                "spikes",
                format!("{} spikes need min(d_x, d_y) >= {}, got {}", spikes.len(), 10 * spikes.len(), d_x.min(d_y)),
            ));
        }
        Ok(Self { ratios, spikes, n, seed, d_x, d_y })
    }

    pub fn ratios(&self) -> AspectRatios {
        self.ratios
    }

    pub fn spikes(&self) -> &[Spike] {
        &self.spikes
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d_x, self.d_y)
    }

    /// `(n / d_x, n / d_y)` after rounding.
    pub fn realized_ratios(&self) -> AspectRatios {
        AspectRatios::from_dims(self.n, self.d_x, self.d_y).expect("dimensions validated at construction")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// One draw of the model together with its planted vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInstance {
    pub x_tilde: DMatrix<f64>,
    pub y_tilde: DMatrix<f64>,
    pub u_x: Vec<DVector<f64>>,
    pub u_y: Vec<DVector<f64>>,
    pub v_x: Vec<DVector<f64>>,
    pub v_y: Vec<DVector<f64>>,
}

impl ModelInstance {
    pub fn cross_product(&self) -> CrossProduct<'_> {
        CrossProduct { x: &self.x_tilde, y: &self.y_tilde }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    let v = DVector::from_fn(dim, |_, _| gaussian(rng));
    let norm = v.norm();
    v / norm
}

pub fn sample_instance(config: &ModelConfig) -> Result<ModelInstance> {
    sample_instance_scaled(config, 1.0)
}

/// Like [`sample_instance`] with the noise multiplied by `noise_scale`
/// (`0` gives the pure signal part). The random stream is identical.
pub fn sample_instance_scaled(config: &ModelConfig, noise_scale: f64) -> Result<ModelInstance> {
    if !(noise_scale.is_finite() && noise_scale >= 0.0) {
        return Err(Error::invalid("noise_scale", format!("must be finite and >= 0, got {noise_scale}")));
    }
    let (n, d_x, d_y) = (config.n, config.d_x, config.d_y);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sx = noise_scale / (d_x as f64).sqrt();
    let sy = noise_scale / (d_y as f64).sqrt();
    let mut x_tilde = DMatrix::from_fn(n, d_x, |_, _| sx * gaussian(&mut rng));
    let mut y_tilde = DMatrix::from_fn(n, d_y, |_, _| sy * gaussian(&mut rng));

    let r = config.spikes.len();
    let (mut u_x, mut u_y, mut v_x, mut v_y) =
        (Vec::with_capacity(r), Vec::with_capacity(r), Vec::with_capacity(r), Vec::with_capacity(r));
    for s in &config.spikes {
        let vx = unit_gaussian(&mut rng, d_x);
        let vy = unit_gaussian(&mut rng, d_y);
        let gx = DVector::from_fn(n, |_, _| gaussian(&mut rng));
        let w = DVector::from_fn(n, |_, _| gaussian(&mut rng));
        let gy = &gx * s.rho + w * (1.0 - s.rho * s.rho).sqrt();
        let ux = gx.normalize();
        let uy = gy.normalize();
        x_tilde.ger(s.lambda_x.sqrt(), &ux, &vx, 1.0);
        y_tilde.ger(s.lambda_y.sqrt(), &uy, &vy, 1.0);
        u_x.push(ux);
        u_y.push(uy);
        v_x.push(vx);
        v_y.push(vy);
    }
    Ok(ModelInstance { x_tilde, y_tilde, u_x, u_y, v_x, v_y })
}

/// `X~^T Y~`, dense.
pub fn cross_cov(instance: &ModelInstance) -> DMatrix<f64> {
    instance.x_tilde.tr_mul(&instance.y_tilde)
}

/// Leading singular triplets of `X~^T Y~` without forming the product.
pub fn top_triplets(instance: &ModelInstance, k: usize, opts: &SvdOptions) -> Result<SvdTriplets> {
    top_svd_with(&instance.cross_product(), k, opts)
}

/// Counts on equal-width bins over `[lo, hi]`; values outside are dropped
/// and `hi` itself falls in the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid("histogram", format!("need bins >= 1 and lo < hi, got {bins} bins on [{lo}, {hi}]")));
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let i = (((v - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Ok(Self { edges, counts })
    }

    /// Count per bin divided by `total * width`.
    pub fn densities(&self, total: usize) -> Vec<f64> {
        self.counts
            .iter()
            .zip(self.edges.windows(2))
            .map(|(c, e)| *c as f64 / (total as f64 * (e[1] - e[0])))
            .collect()
    }
}

/// Top singular triplets plus, optionally, a histogram of all squared
/// singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSpectrum {
    pub singular_values: Vec<f64>,
    pub left_vectors: DMatrix<f64>,
    pub right_vectors: DMatrix<f64>,
    pub histogram: Option<Histogram>,
}

/// Binning of squared singular values for [`empirical_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

pub fn empirical_spectrum(
    instance: &ModelInstance,
    k: usize,
    binning: Option<Binning>,
    opts: &SvdOptions,
) -> Result<EmpiricalSpectrum> {
    let t = top_triplets(instance, k, opts)?;
    let histogram = match binning {
        None => None,
        Some(b) => Some(Histogram::new(&squared_singular_values(&cross_cov(instance)), b.lo, b.hi, b.bins)?),
    };
    Ok(EmpiricalSpectrum { singular_values: t.values, left_vectors: t.left, right_vectors: t.right, histogram })
}

/// Squared inner products of the singular vectors with the planted ones:
/// `x[k][i] = <left_i, v_x,k>^2`, `y[k][i] = <right_i, v_y,k>^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapTable {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

pub fn empirical_overlaps(instance: &ModelInstance, triplets: &SvdTriplets) -> OverlapTable {
    let sq = |basis: &DMatrix<f64>, v: &DVector<f64>| -> Vec<f64> {
        basis.column_iter().map(|c| c.dot(v).powi(2)).collect()
    };
    OverlapTable {
        x: instance.v_x.iter().map(|v| sq(&triplets.left, v)).collect(),
        y: instance.v_y.iter().map(|v| sq(&triplets.right, v)).collect(),
    }
}

/// One prediction paired with an empirical singular value, if any remained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierMatch {
    pub prediction: OutlierPrediction,
    pub empirical_index: Option<usize>,
    pub empirical: Option<f64>,
    pub abs_gap: Option<f64>,
    pub rel_gap: Option<f64>,
}

/// Greedy nearest-value pairing of detectable predictions with the top
/// empirical singular values: the closest remaining pair is matched first
/// and each empirical value is used at most once. Output follows the order
/// of the detectable predictions.
pub fn match_outliers(predicted: &[OutlierPrediction], empirical: &[f64]) -> Vec<OutlierMatch> {
    let detectable: Vec<&OutlierPrediction> = predicted.iter().filter(|p| p.detectable).collect();
    let pool = detectable.len().min(empirical.len());
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(detectable.len() * pool);
    for (pi, p) in detectable.iter().enumerate() {
        for (ei, e) in empirical[..pool].iter().enumerate() {
            pairs.push(((p.position - e).abs(), pi, ei));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned: Vec<Option<usize>> = vec![None; detectable.len()];
    let mut used = vec![false; pool];
    for (_, pi, ei) in pairs {
        if assigned[pi].is_none() && !used[ei] {
            assigned[pi] = Some(ei);
            used[ei] = true;
        }
    }
    detectable
        .iter()
        .zip(assigned)
        .map(|(p, ei)| {
            let empirical = ei.map(|i| empirical[i]);
            let abs_gap = empirical.map(|e| (e - p.position).abs());
            OutlierMatch {
                prediction: **p,
                empirical_index: ei,
                empirical,
                abs_gap,
                rel_gap: abs_gap.map(|g| g / p.position),
            }
        })
        .collect()
}

/// Seed of trial `index`, derived from `base` with the splitmix64 finalizer.
pub fn trial_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `trials` independent draws in parallel and returns the results in
/// trial order. Trial `i` samples with seed `trial_seed(config.seed(), i)`.
pub fn run_trials<T, F>(config: &ModelConfig, trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &ModelInstance) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let inst = sample_instance(&config.with_seed(trial_seed(config.seed(), i as u64)))?;
            f(i, &inst)
        })
        .collect()
}
