//! Stationary autocovariance kernels and generalized fluctuations.
//!
//! For wide-sense stationary noise with autocovariance `κ`, the serial
//! derivatives satisfy `E[w^(n)_t w^(m)_{t+h}] = (-1)^n κ^(n+m)(h)`. At lag zero
//! this gives the generalized covariance, whose odd blocks vanish
//! (checkerboard structure).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gen::{GenNoise, MAX_ORDER};
use crate::linalg;

/// Default series radius used when a custom series does not state one.
pub const DEFAULT_SERIES_RADIUS: f64 = 0.5;

/// Autocovariance family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// White noise convolved with a Gaussian of standard deviation `sigma`:
    /// `κ(h) = exp(-h²/4σ²) / (2√π σ)`.
    Gaussian { sigma: f64 },
    /// `κ(h) = 1 / (1 + h²)`.
    SquareRational,
    /// Taylor coefficients of `κ` at zero, `κ(h) = Σ c_k h^k`, usable for `|h| <= radius`.
    CustomSeries {
        coefficients: Vec<f64>,
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

fn default_radius() -> f64 {
    DEFAULT_SERIES_RADIUS
}

fn default_scale() -> f64 {
    1.0
}

/// A scalar stationary kernel, applied as `κ(h) · I_d` across state components.
///
/// `variance_scale` multiplies the family's autocovariance; the noise itself
/// is scaled by its square root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    #[serde(flatten)]
    pub family: KernelFamily,
    #[serde(default = "default_scale")]
    pub variance_scale: f64,
}

impl Kernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian { sigma }, 1.0)
    }

    pub fn square_rational() -> Self {
        Self {
            family: KernelFamily::SquareRational,
            variance_scale: 1.0,
        }
    }

    pub fn custom_series(coefficients: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(KernelFamily::CustomSeries { coefficients, radius }, 1.0)
    }

    pub fn new(family: KernelFamily, variance_scale: f64) -> Result<Self> {
        let k = Self { family, variance_scale };
        k.validate()?;
        Ok(k)
    }

    pub fn with_variance_scale(mut self, scale: f64) -> Result<Self> {
        self.variance_scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance_scale.is_finite() && self.variance_scale >= 0.0) {
            return Err(Error::InvalidKernel(
                "variance_scale must be finite and non-negative".into(),
            ));
        }
        match &self.family {
            KernelFamily::Gaussian { sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidKernel("gaussian sigma must be positive".into()));
                }
            }
            KernelFamily::SquareRational => {}
            KernelFamily::CustomSeries { coefficients, radius } => {
                if coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidKernel("non-finite series coefficient".into()));
                }
                if coefficients.iter().skip(1).step_by(2).any(|c| *c != 0.0) {
                    return Err(Error::InvalidKernel(
                        "series coefficients must define an even function".into(),
                    ));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidKernel("series radius must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// `κ(h)`.
    pub fn eval(&self, h: f64) -> Result<f64> {
        self.deriv(0, h)
    }

    /// `κ^(j)(0)`. Odd orders are exactly zero.
    pub fn deriv_at_zero(&self, j: usize) -> Result<f64> {
        if let KernelFamily::CustomSeries { coefficients, .. } = &self.family {
            if j >= coefficients.len() {
                return Err(Error::InsufficientKernelOrder {
                    requested: j,
                    available: coefficients.len().saturating_sub(1),
                });
            }
        }
        if j % 2 == 1 {
            return Ok(0.0);
        }
        let n = j / 2;
        let v = match &self.family {
            KernelFamily::Gaussian { sigma } => {
                let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
                sign * double_factorial_odd(n) / (2f64.powi(n as i32 + 1) * PI.sqrt() * sigma.powi(2 * n as i32 + 1))
            }
            KernelFamily::SquareRational => {
                let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
                sign * factorial(j)
            }
            KernelFamily::CustomSeries { coefficients, .. } => coefficients[j] * factorial(j),
        };
        Ok(self.variance_scale * v)
    }

    /// `κ^(j)(h)`.
    ///
    /// The Gaussian family uses the Hermite closed form, the square-rational
    /// family the partial-fraction closed form, and custom series their
    /// termwise derivative (valid inside the configured radius).
    pub fn deriv(&self, j: usize, h: f64) -> Result<f64> {
        if h == 0.0 {
            return self.deriv_at_zero(j);
        }
        let v = match &self.family {
            KernelFamily::Gaussian { sigma } => {
                // Gaussian with variance τ² = 2σ²: d^j/dh^j e^{-h²/2τ²} = (-1/τ)^j He_j(h/τ) e^{-h²/2τ²}.
                let tau = std::f64::consts::SQRT_2 * sigma;
                let u = h / tau;
                let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
                let c = 1.0 / (2.0 * PI.sqrt() * sigma);
                c * sign * hermite_he(j, u) * (-0.5 * u * u).exp() / tau.powi(j as i32)
            }
            KernelFamily::SquareRational => {
                // 1/(1+h²) = Im 1/(h - i), so κ^(j)(h) = (-1)^j j! Im (h - i)^{-(j+1)}.
                let r = (h * h + 1.0).sqrt();
                let theta = (-1.0f64).atan2(h);
                let k = (j + 1) as f64;
                let im = -r.powf(-k) * (k * theta).sin();
                let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
                sign * factorial(j) * im
            }
            KernelFamily::CustomSeries { coefficients, radius } => {
                if h.abs() > *radius {
                    return Err(Error::OutsideSeriesRadius {
                        lag: h,
                        radius: *radius,
                    });
                }
                if j >= coefficients.len() {
                    return Err(Error::InsufficientKernelOrder {
                        requested: j,
                        available: coefficients.len().saturating_sub(1),
                    });
                }
                let mut acc = 0.0;
                for (k, c) in coefficients.iter().enumerate().skip(j) {
                    // k! / (k-j)!
                    let falling: f64 = ((k - j + 1)..=k).map(|v| v as f64).product();
                    acc += c * falling * h.powi((k - j) as i32);
                }
                acc
            }
        };
        Ok(self.variance_scale * v)
    }

    /// Radius `R` such that `κ` is analytic on `|h| < 2R`, or `None` when `κ` is entire.
    pub fn analytic_half_radius(&self) -> Option<f64> {
        match &self.family {
            KernelFamily::Gaussian { .. } => None,
            KernelFamily::SquareRational => Some(0.5),
            KernelFamily::CustomSeries { radius, .. } => Some(radius / 2.0),
        }
    }
}

/// `(2n-1)!!`, with `(-1)!! = 1`.
fn double_factorial_odd(n: usize) -> f64 {
    (1..=n).map(|k| (2 * k - 1) as f64).product()
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Probabilists' Hermite polynomial `He_n(x)`.
fn hermite_he(n: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Generalized noise covariance of orders `0..order` over a `dim`-dimensional state.
#[derive(Debug, Clone, PartialEq)]
pub struct GenCov {
    order: usize,
    dim: usize,
    matrix: DMatrix<f64>,
}

impl GenCov {
    /// Number of stacked orders `N` (the matrix is `Nd × Nd`).
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Wraps an arbitrary symmetric PSD matrix (for example a hand-built test covariance).
    pub fn from_matrix(order: usize, dim: usize, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != order * dim || matrix.ncols() != order * dim {
            return Err(Error::Dimension(format!(
                "generalized covariance of {order} orders over dim {dim} must be {0}x{0}",
                order * dim
            )));
        }
        if !linalg::is_symmetric(&matrix, 1e-12) || !linalg::is_psd(&matrix, 1e-9) {
            return Err(Error::InvalidCovariance);
        }
        Ok(Self { order, dim, matrix })
    }

    /// Scales the whole covariance by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> GenCov {
        Self {
            order: self.order,
            dim: self.dim,
            matrix: &self.matrix * factor,
        }
    }
}

/// Builds the `order·dim` square generalized covariance with block `(n, m)`
/// equal to `(-1)^n κ^(n+m)(0) I_dim`.
pub fn build_gen_cov(kernel: &Kernel, order: usize, dim: usize) -> Result<GenCov> {
    let m = build_cross_cov(kernel, order, dim, 0.0)?;
    if !linalg::is_psd(&m, 1e-9) {
        return Err(Error::InvalidKernel(
            "kernel derivatives do not yield a positive semi-definite covariance".into(),
        ));
    }
    Ok(GenCov { order, dim, matrix: m })
}

/// `E[w_t w_{t+h}^T]` in generalized coordinates: block `(n, m)` is `(-1)^n κ^(n+m)(h) I_dim`.
pub fn build_cross_cov(kernel: &Kernel, order: usize, dim: usize, h: f64) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if order == 0 || dim == 0 {
        return Err(Error::Dimension("covariance needs order >= 1 and dim >= 1".into()));
    }
    if order > MAX_ORDER {
        return Err(Error::OrderTooLarge { order, max: MAX_ORDER });
    }
    let derivs = (0..2 * order - 1)
        .map(|j| kernel.deriv(j, h))
        .collect::<Result<Vec<_>>>()?;
    let mut m = DMatrix::zeros(order * dim, order * dim);
    for n in 0..order {
        for k in 0..order {
            // At lag zero the odd blocks are zero by construction.
            if h == 0.0 && (n + k) % 2 == 1 {
                continue;
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let v = sign * derivs[n + k];
            for i in 0..dim {
                m[(n * dim + i, k * dim + i)] = v;
            }
        }
    }
    Ok(m)
}

/// Lower-triangular sampling factor for a generalized covariance.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    order: usize,
    dim: usize,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl NoiseSampler {
    pub fn new(cov: &GenCov) -> Result<Self> {
        let ch = linalg::jittered_cholesky(cov.matrix())?;
        Ok(Self {
            order: cov.order,
            dim: cov.dim,
            factor: ch.factor,
            jitter: ch.jitter,
        })
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// One draw from `N(0, Σ)` using `rng`.
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> GenNoise {
        let n = self.factor.nrows();
        let xi = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
        let v = &self.factor * xi;
        GenNoise::from_vector(self.dim, self.order - 1, v).expect("finite sample")
    }

    /// `count` i.i.d. draws from a ChaCha8 stream seeded with `seed`.
    pub fn sample(&self, seed: u64, count: usize) -> Vec<GenNoise> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.draw(&mut rng)).collect()
    }
}

/// `count` i.i.d. draws of generalized fluctuations `w ~ N(0, cov)`.
pub fn sample_gen_noise(cov: &GenCov, seed: u64, count: usize) -> Result<Vec<GenNoise>> {
    Ok(NoiseSampler::new(cov)?.sample(seed, count))
}

/// Smallest positive lag at which the empirical autocovariance of `samples`
/// crosses zero, linearly interpolated and expressed in time units.
///
/// Lags up to a quarter of the series length are examined; if none crosses,
/// the largest examined lag is returned.
pub fn first_zero_crossing(samples: &[f64], dt: f64) -> Result<f64> {
    const MIN_LEN: usize = 8;
    if samples.len() < MIN_LEN {
        return Err(Error::SeriesTooShort {
            needed: MIN_LEN,
            got: samples.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    let acov = empirical_autocovariance(samples, samples.len() / 4)?;
    for k in 1..acov.len() {
        if acov[k] <= 0.0 {
            let (a, b) = (acov[k - 1], acov[k]);
            let frac = if a == b { 0.0 } else { a / (a - b) };
            return Ok((k as f64 - 1.0 + frac) * dt);
        }
    }
    Ok((acov.len() - 1) as f64 * dt)
}

/// Biased (divide by `n`) mean-removed autocovariance at lags `0..=max_lag`.
pub fn empirical_autocovariance(samples: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = samples.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= f64::EPSILON * mean.abs().max(1.0) * 1e-6 || c0 == 0.0 {
        return Err(Error::ZeroVarianceSeries);
    }
    Ok((0..=max_lag.min(n - 1))
        .map(|k| {
            centered[..n - k]
                .iter()
                .zip(&centered[k..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect())
}
