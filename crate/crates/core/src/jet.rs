//! Truncated Taylor arithmetic.
//!
//! A [`Jet`] holds the derivatives `u(0), u'(0), …, u^(K)(0)` of a scalar
//! function of time. Products follow the Leibniz rule, so propagating jets
//! through a polynomial graph yields the time derivatives of the composite.

use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

/// Values an expression graph can be evaluated over.
pub trait Ring: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    /// The constant `c`, shaped like `self`.
    fn constant_like(&self, c: f64) -> Self;
    fn scale(&self, c: f64) -> Self;
}

/// Scalar coefficient types for jets.
pub trait Scalar: Copy + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn from_f64(c: f64) -> Self;
    fn scale(self, c: f64) -> Self;
    fn value(self) -> f64;
}

impl Scalar for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn value(self) -> f64 {
        self
    }
}

impl Ring for f64 {
    fn constant_like(&self, c: f64) -> Self {
        c
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
}

/// First-order forward-mode dual number `v + d ε`, `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }

    pub fn constant(v: f64) -> Self {
        Self { v, d: 0.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.v * o.d + self.d * o.v)
    }
}

impl Scalar for Dual {
    fn from_f64(c: f64) -> Self {
        Dual::constant(c)
    }
    fn scale(self, c: f64) -> Self {
        Dual::new(self.v * c, self.d * c)
    }
    fn value(self) -> f64 {
        self.v
    }
}

impl Ring for Dual {
    fn constant_like(&self, c: f64) -> Self {
        Dual::constant(c)
    }
    fn scale(&self, c: f64) -> Self {
        Scalar::scale(*self, c)
    }
}

/// Derivative-scaled truncated Taylor series: entry `k` is the `k`-th derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet<T: Scalar = f64> {
    coeffs: Vec<T>,
}

impl<T: Scalar> Jet<T> {
    /// Jet with the given derivatives; its order is `coeffs.len() - 1`.
    pub fn new(coeffs: Vec<T>) -> Self {
        assert!(!coeffs.is_empty(), "a jet needs at least one coefficient");
        Self { coeffs }
    }

    pub fn constant(c: f64, order: usize) -> Self {
        let mut coeffs = vec![T::from_f64(0.0); order + 1];
        coeffs[0] = T::from_f64(c);
        Self { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut result = self.constant_like(1.0);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = result * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        result
    }
}

impl<T: Scalar> Add for Jet<T> {
    type Output = Jet<T>;
    fn add(self, o: Jet<T>) -> Jet<T> {
        debug_assert_eq!(self.coeffs.len(), o.coeffs.len());
        Jet::new(self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| *a + *b).collect())
    }
}

impl<T: Scalar> Sub for Jet<T> {
    type Output = Jet<T>;
    fn sub(self, o: Jet<T>) -> Jet<T> {
        debug_assert_eq!(self.coeffs.len(), o.coeffs.len());
        Jet::new(self.coeffs.iter().zip(&o.coeffs).map(|(a, b)| *a - *b).collect())
    }
}

impl<T: Scalar> Mul for Jet<T> {
    type Output = Jet<T>;
    fn mul(self, o: Jet<T>) -> Jet<T> {
        debug_assert_eq!(self.coeffs.len(), o.coeffs.len());
        let n = self.coeffs.len();
        let mut out = Vec::with_capacity(n);
        // Pascal row for the current k, updated in place.
        let mut binom = vec![1.0f64; n];
        for k in 0..n {
            if k > 0 {
                for j in (1..k).rev() {
                    binom[j] += binom[j - 1];
                }
            }
            let mut acc = (self.coeffs[0] * o.coeffs[k]).scale(binom[0]);
            for j in 1..=k {
                acc = acc + (self.coeffs[j] * o.coeffs[k - j]).scale(binom[j]);
            }
            out.push(acc);
        }
        Jet::new(out)
    }
}

impl<T: Scalar> Ring for Jet<T> {
    fn constant_like(&self, c: f64) -> Self {
        Jet::constant(c, self.order())
    }
    fn scale(&self, c: f64) -> Self {
        Jet::new(self.coeffs.iter().map(|v| v.scale(c)).collect())
    }
}
