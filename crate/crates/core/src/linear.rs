//! Closed-form statistics of `ẋ = A x + w` in generalized coordinates.
//!
//! Truncating the zigzag expansion at order `N` gives a Gaussian process with
//! mean `Σ_n A^n z t^n/n!` and covariance
//! `Σ_{k,l} C_k(t) (-1)^k κ^(k+l)(0) C_l(s)^T`, where
//! `C_k(t) = Σ_{n=k+1}^N (t^n/n!) A^(n-1-k)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gen::{exp_shift_matrix, GenPoint};
use crate::linalg;
use crate::noise::Kernel;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub z: DVector<f64>,
    pub kernel: Kernel,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, z: DVector<f64>, kernel: Kernel) -> Result<Self> {
        if !a.is_square() || a.nrows() != z.len() || z.is_empty() {
            return Err(Error::Dimension(format!(
                "A is {}x{} but z has length {}",
                a.nrows(),
                a.ncols(),
                z.len()
            )));
        }
        if a.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear model"));
        }
        kernel.validate()?;
        Ok(Self { a, z, kernel })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// `A^0, …, A^n`.
    fn powers(&self, n: usize) -> Vec<DMatrix<f64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n + 1);
        out.push(DMatrix::identity(d, d));
        for k in 1..=n {
            out.push(&self.a * &out[k - 1]);
        }
        out
    }
}

/// `Σ_{n=0}^N A^n z t^n / n!`.
pub fn linear_mean(lm: &LinearModel, order: usize, t: f64) -> DVector<f64> {
    let mut acc = lm.z.clone();
    let mut term = lm.z.clone();
    for n in 1..=order {
        term = &lm.a * term * (t / n as f64);
        acc += &term;
    }
    acc
}

/// `C_k(t)` for `k = 0..N-1`.
fn noise_loadings(powers: &[DMatrix<f64>], order: usize, t: f64) -> Vec<DMatrix<f64>> {
    let d = powers[0].nrows();
    let w = crate::gen::taylor_weights(order, t);
    (0..order)
        .map(|k| {
            let mut c = DMatrix::zeros(d, d);
            for n in (k + 1)..=order {
                c += &powers[n - 1 - k] * w[n];
            }
            c
        })
        .collect()
}

/// Cross-covariance of the order-`N` expansion at times `t` and `s`.
pub fn linear_cov(lm: &LinearModel, order: usize, t: f64, s: f64) -> Result<DMatrix<f64>> {
    let d = lm.dim();
    if order == 0 {
        return Ok(DMatrix::zeros(d, d));
    }
    let kappa = (0..=2 * (order - 1))
        .map(|j| lm.kernel.deriv_at_zero(j))
        .collect::<Result<Vec<_>>>()?;
    let powers = lm.powers(order);
    let ct = noise_loadings(&powers, order, t);
    let cs = noise_loadings(&powers, order, s);
    let mut cov = DMatrix::zeros(d, d);
    for (k, ck) in ct.iter().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        for (l, cl) in cs.iter().enumerate() {
            let sigma = sign * kappa[k + l];
            if sigma != 0.0 {
                cov += ck * cl.transpose() * sigma;
            }
        }
    }
    if t == s {
        cov = linalg::symmetrize(&cov);
    }
    Ok(cov)
}

/// `R / max(1, ‖A‖∞, ‖A^T‖∞)` with `‖A‖∞ = max_i Σ_j |A_ij|`.
pub fn convergence_radius(a: &DMatrix<f64>, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    Ok(r / radius_divisor(a))
}

/// `max(1, ‖A‖∞, ‖A^T‖∞)`.
pub fn radius_divisor(a: &DMatrix<f64>) -> f64 {
    let row = a
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let col = a
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    1.0f64.max(row).max(col)
}

/// Pushes `N(μ₀, Ξ₀)` through `exp(tD)`: mean `taylor_eval(μ₀, t)`, covariance `M Ξ₀ M^T`.
pub fn gaussian_pushforward(mu0: &GenPoint, xi0: &DMatrix<f64>, t: f64) -> Result<(GenPoint, DMatrix<f64>)> {
    let n = mu0.as_vector().len();
    if xi0.shape() != (n, n) {
        return Err(Error::Dimension(format!("covariance must be {n}x{n}")));
    }
    if !linalg::is_symmetric(xi0, 1e-12) || !linalg::is_psd(xi0, 1e-9) {
        return Err(Error::InvalidCovariance);
    }
    let m = exp_shift_matrix(mu0.order(), t, mu0.dim());
    let cov = linalg::symmetrize(&(&m * xi0 * m.transpose()));
    Ok((mu0.taylor_eval(t), cov))
}
