//! Dense linear-algebra helpers shared by the noise, action and filter code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Jitter multipliers tried, in order, before a factorization is declared failed.
/// Each is scaled by `trace / n`.
pub const JITTER_LADDER: [f64; 8] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// A lower Cholesky factor together with the diagonal jitter that was needed.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub factor: DMatrix<f64>,
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn jittered(&self) -> bool {
        self.jitter > 0.0
    }

    /// `log det` of the (jittered) matrix.
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solves `(L L^T) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .factor
            .solve_lower_triangular(b)
            .expect("Cholesky factor has a positive diagonal");
        self.factor
            .tr_solve_lower_triangular(&y)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.factor.nrows();
        let linv = self
            .factor
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("Cholesky factor has a positive diagonal");
        let inv = linv.transpose() * &linv;
        symmetrize(&inv)
    }
}

/// Cholesky factorization with escalating diagonal jitter `ε · trace / n`.
///
/// An identically zero matrix factors to the zero matrix.
pub fn jittered_cholesky(m: &DMatrix<f64>) -> Result<JitteredCholesky> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension("Cholesky needs a square matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    if m.iter().all(|v| *v == 0.0) {
        return Ok(JitteredCholesky {
            factor: DMatrix::zeros(n, n),
            jitter: 0.0,
        });
    }
    let scale = (m.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    for eps in JITTER_LADDER {
        let mut a = m.clone();
        let jitter = eps * scale;
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = a.cholesky() {
            let factor = ch.l();
            if factor.diagonal().iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Ok(JitteredCholesky { factor, jitter });
            }
        }
    }
    Err(Error::DegenerateCovariance)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

/// Smallest eigenvalue is at least `-rel_tol` times the largest magnitude.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    if m.nrows() == 0 {
        return true;
    }
    let eig = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let max = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    min >= -rel_tol * max
}

/// Symmetric inverse with one step of iterative refinement.
#[derive(Debug, Clone)]
pub struct SymInverse {
    pub inverse: DMatrix<f64>,
    /// Diagonal jitter added before factorization; zero when none was needed.
    pub jitter: f64,
    /// Whether the matrix was (after jitter) positive definite.
    pub positive_definite: bool,
}

/// Inverts a symmetric matrix: Cholesky with jitter first, LU as a fallback
/// for indefinite but nonsingular input.
pub fn symmetric_inverse(m: &DMatrix<f64>) -> Result<SymInverse> {
    let n = m.nrows();
    let (mut inv, jitter, pd) = match jittered_cholesky(m) {
        Ok(ch) if ch.factor.diagonal().iter().all(|v| *v > 0.0) => (ch.inverse(), ch.jitter, true),
        _ => {
            let inv = m.clone().lu().try_inverse().ok_or(Error::SingularHessian)?;
            (inv, 0.0, false)
        }
    };
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularHessian);
    }
    // X <- X + X (I - M X)
    let residual = DMatrix::<f64>::identity(n, n) - m * &inv;
    inv += &inv * residual;
    Ok(SymInverse {
        inverse: symmetrize(&inv),
        jitter,
        positive_definite: pd,
    })
}

/// `log det m` for a symmetric matrix with positive determinant.
pub fn log_det_positive(m: &DMatrix<f64>) -> Result<f64> {
    if let Some(ch) = m.clone().cholesky() {
        return Ok(2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>());
    }
    let lu = m.clone().lu();
    let u = lu.u();
    let mut sign = if lu.p().determinant::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut acc = 0.0;
    for v in u.diagonal().iter() {
        if *v == 0.0 {
            return Err(Error::OutsideLaplaceDomain);
        }
        if *v < 0.0 {
            sign = -sign;
        }
        acc += v.abs().ln();
    }
    if sign > 0.0 {
        Ok(acc)
    } else {
        Err(Error::OutsideLaplaceDomain)
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}
