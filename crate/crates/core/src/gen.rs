//! Generalized-coordinate vectors and the shift operators acting on them.
//!
//! A [`GenPoint`] of order `N` over a `d`-dimensional state stacks the serial
//! derivatives `x^(0), x^(1), ..., x^(N)`. Storage is order-major: the `d`
//! components of order 0 come first, then order 1, and so on. In this layout
//! the shift `D` is `S ⊗ I_d` where `S` is the nilpotent `(N+1)×(N+1)` shift.
//!
//! Coordinates are true derivatives; factorials only appear when the point
//! is evaluated as a Taylor polynomial.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest supported order of motion.
pub const MAX_ORDER: usize = 64;

/// Stacked serial derivatives of a `dim`-dimensional state, orders `0..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenPoint {
    dim: usize,
    order: usize,
    data: DVector<f64>,
}

/// Generalized fluctuations `w^(0..N-1)` share the layout of a point of order `N-1`.
pub type GenNoise = GenPoint;

impl GenPoint {
    /// Builds a point from `order + 1` coordinate vectors of equal length.
    pub fn new(coords: &[Vec<f64>]) -> Result<Self> {
        let first = coords
            .first()
            .ok_or_else(|| Error::Dimension("a generalized point needs at least one order".into()))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Dimension("base dimension must be positive".into()));
        }
        if coords.iter().any(|c| c.len() != dim) {
            return Err(Error::Dimension("all orders must share the base dimension".into()));
        }
        let order = coords.len() - 1;
        let data = DVector::from_iterator(coords.len() * dim, coords.iter().flatten().copied());
        Self::from_vector(dim, order, data)
    }

    pub fn zeros(dim: usize, order: usize) -> Self {
        assert!(dim > 0, "base dimension must be positive");
        Self {
            dim,
            order,
            data: DVector::zeros((order + 1) * dim),
        }
    }

    /// Wraps an order-major flat vector.
    pub fn from_vector(dim: usize, order: usize, data: DVector<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("base dimension must be positive".into()));
        }
        if order > MAX_ORDER {
            return Err(Error::OrderTooLarge { order, max: MAX_ORDER });
        }
        if data.len() != (order + 1) * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for dim {dim} order {order}, got {}",
                (order + 1) * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generalized point"));
        }
        Ok(Self { dim, order, data })
    }

    /// The order-0 coordinate set to `base`, all higher orders zero.
    pub fn constant(base: &[f64], order: usize) -> Self {
        let mut p = Self::zeros(base.len(), order);
        p.coord_mut(0).copy_from_slice(base);
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stacked coordinate vectors (`order + 1`).
    pub fn len_orders(&self) -> usize {
        self.order + 1
    }

    pub fn coord(&self, n: usize) -> &[f64] {
        &self.data.as_slice()[n * self.dim..(n + 1) * self.dim]
    }

    pub fn coord_mut(&mut self, n: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.data.as_mut_slice()[n * d..(n + 1) * d]
    }

    pub fn coords(&self) -> impl Iterator<Item = &[f64]> {
        self.data.as_slice().chunks(self.dim)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    /// Orders `0..=order` of this point; `order` must not exceed `self.order()`.
    pub fn truncate(&self, order: usize) -> GenPoint {
        assert!(order <= self.order);
        let data = DVector::from_column_slice(&self.data.as_slice()[..(order + 1) * self.dim]);
        Self {
            dim: self.dim,
            order,
            data,
        }
    }

    /// `D x`: moves every order down by one and zero-fills the top order.
    pub fn shift(&self) -> GenPoint {
        let d = self.dim;
        let mut out = GenPoint::zeros(d, self.order);
        let src = self.data.as_slice();
        out.data.as_mut_slice()[..self.order * d].copy_from_slice(&src[d..]);
        out
    }

    /// `D' x = (x^(1), ..., x^(N))`, a stack of `N` vectors.
    pub fn shift_drop(&self) -> Result<GenPoint> {
        if self.order == 0 {
            return Err(Error::ZeroOrder);
        }
        let d = self.dim;
        let data = DVector::from_column_slice(&self.data.as_slice()[d..]);
        Ok(GenPoint {
            dim: d,
            order: self.order - 1,
            data,
        })
    }

    /// `exp(tD) x`: each coordinate becomes the Taylor polynomial of the
    /// coordinates above it, `x_t^(n) = Σ_i x^(n+i) t^i / i!`.
    pub fn taylor_eval(&self, t: f64) -> GenPoint {
        let d = self.dim;
        let n_ord = self.order + 1;
        let weights = taylor_weights(self.order, t);
        let src = self.data.as_slice();
        let mut out = vec![0.0; n_ord * d];
        for n in 0..n_ord {
            let row = &mut out[n * d..(n + 1) * d];
            for (i, w) in weights.iter().enumerate().take(n_ord - n) {
                let c = &src[(n + i) * d..(n + i + 1) * d];
                for (r, v) in row.iter_mut().zip(c) {
                    *r += w * v;
                }
            }
        }
        GenPoint {
            dim: d,
            order: self.order,
            data: DVector::from_vec(out),
        }
    }

    /// The order-0 entry of [`taylor_eval`](Self::taylor_eval), without the higher orders.
    pub fn taylor_value(&self, t: f64) -> Vec<f64> {
        let d = self.dim;
        let weights = taylor_weights(self.order, t);
        let mut out = vec![0.0; d];
        for (c, w) in self.coords().zip(&weights) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += w * v;
            }
        }
        out
    }
}

/// `t^i / i!` for `i = 0..=order`.
pub fn taylor_weights(order: usize, t: f64) -> Vec<f64> {
    let mut w = Vec::with_capacity(order + 1);
    let mut acc = 1.0;
    w.push(acc);
    for i in 1..=order {
        acc *= t / i as f64;
        w.push(acc);
    }
    w
}

/// Flattened `exp(tD)` for order `order` over a `dim`-dimensional state.
pub fn exp_shift_matrix(order: usize, t: f64, dim: usize) -> DMatrix<f64> {
    let n = order + 1;
    let w = taylor_weights(order, t);
    let mut m = DMatrix::zeros(n * dim, n * dim);
    for r in 0..n {
        for c in r..n {
            for i in 0..dim {
                m[(r * dim + i, c * dim + i)] = w[c - r];
            }
        }
    }
    m
}

/// Flattened `D`, the `(N+1)d × (N+1)d` shift.
pub fn shift_matrix(order: usize, dim: usize) -> DMatrix<f64> {
    let n = order + 1;
    let mut m = DMatrix::zeros(n * dim, n * dim);
    for r in 0..order {
        for i in 0..dim {
            m[(r * dim + i, (r + 1) * dim + i)] = 1.0;
        }
    }
    m
}

/// Flattened `D'`, the `Nd × (N+1)d` shift that drops the top order.
pub fn shift_drop_matrix(order: usize, dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(order * dim, (order + 1) * dim);
    for r in 0..order {
        for i in 0..dim {
            m[(r * dim + i, (r + 1) * dim + i)] = 1.0;
        }
    }
    m
}
