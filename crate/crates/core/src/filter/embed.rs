//! Lifting sampled observations into generalized coordinates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gen::GenPoint;
use crate::noise::factorial;

/// A generalized observation `𝐲_t = (y^(0), …, y^(M))` at time `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenObservation {
    pub time: f64,
    pub y: GenPoint,
}

impl GenObservation {
    /// `M`, the highest derivative order.
    pub fn order(&self) -> usize {
        self.y.order()
    }
}

/// How sampled observations are turned into derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    FiniteDiff,
    #[default]
    InverseTaylor,
}

impl Embedding {
    pub fn embed(self, series: &[Vec<f64>], dt: f64, order: usize, index: usize) -> Result<GenObservation> {
        match self {
            Embedding::FiniteDiff => embed_finite_diff(series, dt, order, index),
            Embedding::InverseTaylor => embed_inverse_taylor(series, dt, order, index),
        }
    }
}

fn check_history(series: &[Vec<f64>], dt: f64, order: usize, index: usize) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    if index < order || index >= series.len() {
        return Err(Error::NotEnoughSamples {
            index,
            needed: order + 1,
        });
    }
    let m = series[index].len();
    if m == 0 || series[index - order..=index].iter().any(|s| s.len() != m) {
        return Err(Error::Dimension(
            "observation samples must share one non-zero length".into(),
        ));
    }
    if series[index - order..=index].iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observation series"));
    }
    Ok(m)
}

/// `y^(k)` is the `k`-th backward difference at `index` divided by `dt^k`.
pub fn embed_finite_diff(series: &[Vec<f64>], dt: f64, order: usize, index: usize) -> Result<GenObservation> {
    let m = check_history(series, dt, order, index)?;
    let mut coords = Vec::with_capacity(order + 1);
    // Row j of `diffs` holds ∇^k y at index − j, refined in place as k grows.
    let mut diffs: Vec<Vec<f64>> = (0..=order).map(|j| series[index - j].clone()).collect();
    coords.push(diffs[0].clone());
    for k in 1..=order {
        for j in 0..=(order - k) {
            for c in 0..m {
                diffs[j][c] -= diffs[j + 1][c];
            }
        }
        let scale = dt.powi(k as i32);
        coords.push(diffs[0].iter().map(|v| v / scale).collect());
    }
    Ok(GenObservation {
        time: index as f64 * dt,
        y: GenPoint::new(&coords)?,
    })
}

/// Derivatives of the degree-`M` polynomial through the `M + 1` most recent samples.
///
/// Solves `y_{t - i dt} = Σ_n y^(n) (-i dt)^n / n!` for `i = 0..M`, with the
/// unknowns rescaled to `y^(n) dt^n / n!` so the system matrix is the integer
/// Vandermonde matrix `(-i)^n`.
pub fn embed_inverse_taylor(series: &[Vec<f64>], dt: f64, order: usize, index: usize) -> Result<GenObservation> {
    let m = check_history(series, dt, order, index)?;
    let k = order + 1;
    let v = DMatrix::from_fn(k, k, |i, n| (-(i as f64)).powi(n as i32));
    let lu = v.lu();
    let rhs = DMatrix::from_fn(k, m, |i, c| series[index - i][c]);
    let u = lu.solve(&rhs).ok_or(Error::EmbeddingFailure)?;
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::EmbeddingFailure);
    }
    let coords: Vec<Vec<f64>> = (0..k)
        .map(|n| {
            let s = factorial(n) / dt.powi(n as i32);
            (0..m).map(|c| u[(n, c)] * s).collect()
        })
        .collect();
    Ok(GenObservation {
        time: index as f64 * dt,
        y: GenPoint::new(&coords)?,
    })
}

/// Embeds every sample from `start` (at least `order`) to the end of the series.
pub fn embed_series(
    series: &[Vec<f64>],
    dt: f64,
    order: usize,
    start: usize,
    method: Embedding,
) -> Result<Vec<GenObservation>> {
    (start.max(order)..series.len())
        .map(|i| method.embed(series, dt, order, i))
        .collect()
}

/// Residual of the embedded polynomial against the samples it interpolates.
pub fn interpolation_residual(obs: &GenObservation, series: &[Vec<f64>], dt: f64, index: usize) -> f64 {
    let order = obs.order();
    (0..=order)
        .map(|i| {
            let p = obs.y.taylor_value(-(i as f64) * dt);
            let s = DVector::from_column_slice(&series[index - i]);
            let scale = s.amax().max(1.0);
            (DVector::from_vec(p) - s).amax() / scale
        })
        .fold(0.0, f64::max)
}
