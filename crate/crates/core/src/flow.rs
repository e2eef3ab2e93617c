//! Lifting flows and observation maps to generalized coordinates.
//!
//! The exact lift propagates jets through the expression graph, so output
//! order `n` is the `n`-th time derivative of `f(x_t)` given the derivatives
//! of `x_t`. The local-linear lift keeps only `∇f(x^(0))`:
//! `(f(x^(0)), ∇f x^(1), …, ∇f x^(N-1))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::gen::GenPoint;
use crate::jet::{Dual, Jet};
use crate::model::{self, ModelSpec};

/// Exact jet propagation or the local linear approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    #[default]
    Exact,
    Linear,
}

/// `(f^(0), …, f^(N-1))` for a point of order `N`, stacked order-major.
pub fn gen_flow_exact(model: &ModelSpec, x: &GenPoint) -> Result<DVector<f64>> {
    check_point(model, x)?;
    Ok(lift_exact(model.flow(), x, x.order()))
}

/// `(f(x^(0)), ∇f(x^(0)) x^(1), …, ∇f(x^(0)) x^(N-1))`.
pub fn gen_flow_linear(model: &ModelSpec, x: &GenPoint) -> Result<DVector<f64>> {
    check_point(model, x)?;
    Ok(lift_linear(model.flow(), x, x.order()))
}

pub fn gen_flow(model: &ModelSpec, x: &GenPoint, mode: FlowMode) -> Result<DVector<f64>> {
    match mode {
        FlowMode::Exact => gen_flow_exact(model, x),
        FlowMode::Linear => gen_flow_linear(model, x),
    }
}

/// `∂𝐟/∂x`, an `Nd × (N+1)d` matrix.
///
/// Linear mode gives the block-diagonal `∇f(x^(0))` structure with a zero
/// top-order column. Exact mode differentiates the jet propagation in
/// forward mode; [`gen_jacobian_fd`] is the finite-difference equivalent.
pub fn gen_jacobian(model: &ModelSpec, x: &GenPoint, mode: FlowMode) -> Result<DMatrix<f64>> {
    check_point(model, x)?;
    Ok(match mode {
        FlowMode::Exact => jacobian_exact(model.flow(), x, x.order()),
        FlowMode::Linear => jacobian_linear(model.flow(), x, x.order()),
    })
}

/// Central-difference Jacobian of [`gen_flow_exact`] with steps `1e-6 (1 + |x_j|)`.
pub fn gen_jacobian_fd(model: &ModelSpec, x: &GenPoint) -> Result<DMatrix<f64>> {
    check_point(model, x)?;
    Ok(jacobian_fd(model.flow(), x, x.order()))
}

/// `(g^(0), …, g^(M))` for `M <= N`, stacked order-major.
pub fn gen_likelihood(model: &ModelSpec, x: &GenPoint, m: usize, mode: FlowMode) -> Result<DVector<f64>> {
    let obs = model.obs_map()?;
    check_obs_order(model, x, m)?;
    Ok(match mode {
        FlowMode::Exact => lift_exact(obs, x, m + 1),
        FlowMode::Linear => lift_linear(obs, x, m + 1),
    })
}

/// `∂𝐠/∂x`, an `(M+1)m × (N+1)d` matrix; columns above order `M` are zero.
pub fn gen_obs_jacobian(model: &ModelSpec, x: &GenPoint, m: usize, mode: FlowMode) -> Result<DMatrix<f64>> {
    let obs = model.obs_map()?;
    check_obs_order(model, x, m)?;
    Ok(match mode {
        FlowMode::Exact => jacobian_exact(obs, x, m + 1),
        FlowMode::Linear => jacobian_linear(obs, x, m + 1),
    })
}

fn check_point(model: &ModelSpec, x: &GenPoint) -> Result<()> {
    if x.dim() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "point has dimension {}, model has {}",
            x.dim(),
            model.state_dim()
        )));
    }
    if x.order() == 0 {
        return Err(Error::ZeroOrder);
    }
    Ok(())
}

fn check_obs_order(model: &ModelSpec, x: &GenPoint, m: usize) -> Result<()> {
    if x.dim() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "point has dimension {}, model has {}",
            x.dim(),
            model.state_dim()
        )));
    }
    if m > x.order() {
        return Err(Error::InvalidArgument(format!(
            "observation order {m} exceeds state order {}",
            x.order()
        )));
    }
    Ok(())
}

/// Exact lift of `exprs` using orders `0..count` of `x`.
pub(crate) fn lift_exact(exprs: &[Expr], x: &GenPoint, count: usize) -> DVector<f64> {
    let d = x.dim();
    let jets: Vec<Jet<f64>> = (0..d)
        .map(|i| Jet::new((0..count).map(|n| x.coord(n)[i]).collect()))
        .collect();
    let outs: Vec<Jet<f64>> = exprs.iter().map(|e| e.eval(&jets)).collect();
    let m = exprs.len();
    DVector::from_fn(count * m, |r, _| outs[r % m].coeffs()[r / m])
}

fn lift_linear(exprs: &[Expr], x: &GenPoint, count: usize) -> DVector<f64> {
    let m = exprs.len();
    let x0 = x.coord(0);
    let f0 = model::eval_exprs(exprs, x0);
    let jac = model::jacobian(exprs, x0);
    let mut out = DVector::zeros(count * m);
    out.rows_mut(0, m).copy_from(&f0);
    for n in 1..count {
        let xn = DVector::from_column_slice(x.coord(n));
        out.rows_mut(n * m, m).copy_from(&(&jac * xn));
    }
    out
}

fn jacobian_linear(exprs: &[Expr], x: &GenPoint, count: usize) -> DMatrix<f64> {
    let (m, d) = (exprs.len(), x.dim());
    let jac = model::jacobian(exprs, x.coord(0));
    let mut out = DMatrix::zeros(count * m, x.len_orders() * d);
    for n in 0..count {
        out.view_mut((n * m, n * d), (m, d)).copy_from(&jac);
    }
    out
}

fn jacobian_exact(exprs: &[Expr], x: &GenPoint, count: usize) -> DMatrix<f64> {
    let (m, d) = (exprs.len(), x.dim());
    let mut jets: Vec<Jet<Dual>> = (0..d)
        .map(|i| Jet::new((0..count).map(|n| Dual::constant(x.coord(n)[i])).collect()))
        .collect();
    let mut out = DMatrix::zeros(count * m, x.len_orders() * d);
    // Inputs above order count-1 never enter the lift, so their columns stay zero.
    for k in 0..count {
        for i in 0..d {
            set_tangent(&mut jets[i], k, 1.0);
            for (r, e) in exprs.iter().enumerate() {
                let y = e.eval(&jets);
                for (n, c) in y.coeffs().iter().enumerate() {
                    out[(n * m + r, k * d + i)] = c.d;
                }
            }
            set_tangent(&mut jets[i], k, 0.0);
        }
    }
    out
}

fn set_tangent(jet: &mut Jet<Dual>, k: usize, v: f64) {
    let mut coeffs = std::mem::replace(jet, Jet::new(vec![Dual::default()])).into_coeffs();
    coeffs[k].d = v;
    *jet = Jet::new(coeffs);
}

fn jacobian_fd(exprs: &[Expr], x: &GenPoint, count: usize) -> DMatrix<f64> {
    let (m, d) = (exprs.len(), x.dim());
    let base = x.as_vector();
    let mut out = DMatrix::zeros(count * m, base.len());
    for j in 0..base.len() {
        let h = 1e-6 * (1.0 + base[j].abs());
        let mut plus = base.clone();
        plus[j] += h;
        let mut minus = base.clone();
        minus[j] -= h;
        let fp = lift_exact(
            exprs,
            &GenPoint::from_vector(d, x.order(), plus).expect("finite"),
            count,
        );
        let fm = lift_exact(
            exprs,
            &GenPoint::from_vector(d, x.order(), minus).expect("finite"),
            count,
        );
        out.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    out
}
