//! The generative model, its energy and the Laplace free energy.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::embed::GenObservation;
use crate::flow::{self, FlowMode};
use crate::gen::{shift_drop_matrix, GenPoint};
use crate::linalg;
use crate::model::ModelSpec;
use crate::noise::GenCov;

/// Joint density of generalized observations and states:
/// `𝐲 = 𝐠(𝐱) + 𝐳`, `D'𝐱 = 𝐟(𝐱) + 𝐰`, with `𝐳 ~ N(0, 𝚺^z)`, `𝐰 ~ N(0, 𝚺^w)`.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    model: ModelSpec,
    cov_w: GenCov,
    cov_z: GenCov,
    prec_w: DMatrix<f64>,
    prec_z: DMatrix<f64>,
    lambda: f64,
    mode: FlowMode,
}

impl GenerativeModel {
    /// The state order `N` is `cov_w.order()`, the observation order `M` is
    /// `cov_z.order() - 1`.
    pub fn new(model: ModelSpec, cov_w: GenCov, cov_z: GenCov, lambda: f64, mode: FlowMode) -> Result<Self> {
        let m = model.obs_dim();
        if m == 0 {
            return Err(Error::NoObservationModel);
        }
        if cov_w.dim() != model.state_dim() || cov_z.dim() != m {
            return Err(Error::Dimension(format!(
                "state/observation dimensions {}/{} do not match covariances over {}/{}",
                model.state_dim(),
                m,
                cov_w.dim(),
                cov_z.dim()
            )));
        }
        if cov_z.order() > cov_w.order() + 1 {
            return Err(Error::InvalidArgument(format!(
                "observation order {} exceeds state order {}",
                cov_z.order() - 1,
                cov_w.order()
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        let prec = |c: &GenCov| -> Result<DMatrix<f64>> {
            let ch = linalg::jittered_cholesky(c.matrix()).map_err(|_| Error::SingularCovariance)?;
            if ch.factor.diagonal().iter().any(|v| *v <= 0.0) {
                return Err(Error::SingularCovariance);
            }
            if ch.jittered() {
                log::warn!("generalized covariance needed jitter {:e}", ch.jitter);
            }
            Ok(ch.inverse())
        };
        Ok(Self {
            prec_w: prec(&cov_w)?,
            prec_z: prec(&cov_z)?,
            model,
            cov_w,
            cov_z,
            lambda,
            mode,
        })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    /// `N`: states carry orders `0..=N`.
    pub fn state_order(&self) -> usize {
        self.cov_w.order()
    }

    /// `M`: observations carry orders `0..=M`.
    pub fn obs_order(&self) -> usize {
        self.cov_z.order() - 1
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mode(&self) -> FlowMode {
        self.mode
    }

    pub fn cov_w(&self) -> &GenCov {
        &self.cov_w
    }

    pub fn cov_z(&self) -> &GenCov {
        &self.cov_z
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        self.lambda = lambda;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: FlowMode) -> Self {
        self.mode = mode;
        self
    }

    /// Number of entries in a generalized state, `(N+1)d`.
    pub fn state_len(&self) -> usize {
        (self.state_order() + 1) * self.model.state_dim()
    }

    fn check(&self, y: &GenObservation, mu: &GenPoint) -> Result<()> {
        if mu.order() != self.state_order() || mu.dim() != self.model.state_dim() {
            return Err(Error::Dimension(format!(
                "state has order {} over dimension {}, model expects order {} over {}",
                mu.order(),
                mu.dim(),
                self.state_order(),
                self.model.state_dim()
            )));
        }
        if y.y.order() != self.obs_order() || y.y.dim() != self.model.obs_dim() {
            return Err(Error::Dimension(format!(
                "observation has order {} over dimension {}, model expects order {} over {}",
                y.y.order(),
                y.y.dim(),
                self.obs_order(),
                self.model.obs_dim()
            )));
        }
        Ok(())
    }

    /// Prediction errors `(𝐲 − 𝐠(μ), D'μ − 𝐟(μ))` in the model's mode.
    pub fn errors(&self, y: &GenObservation, mu: &GenPoint) -> Result<(DVector<f64>, DVector<f64>)> {
        self.check(y, mu)?;
        let ez = y.y.as_vector() - flow::gen_likelihood(&self.model, mu, self.obs_order(), self.mode)?;
        let ew = mu.shift_drop()?.into_vector() - flow::gen_flow(&self.model, mu, self.mode)?;
        Ok((ez, ew))
    }

    /// `(∂𝐠/∂μ, D' − ∂𝐟/∂μ)`.
    pub fn error_jacobians(&self, mu: &GenPoint) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let jg = flow::gen_obs_jacobian(&self.model, mu, self.obs_order(), self.mode)?;
        let jf = flow::gen_jacobian(&self.model, mu, self.mode)?;
        Ok((jg, shift_drop_matrix(mu.order(), mu.dim()) - jf))
    }

    fn quad(&self, ez: &DVector<f64>, ew: &DVector<f64>) -> f64 {
        0.5 * ez.dot(&(&self.prec_z * ez)) + 0.5 * ew.dot(&(&self.prec_w * ew))
    }
}

/// `V = ½ e_z^T (𝚺^z)^{-1} e_z + ½ e_w^T (𝚺^w)^{-1} e_w`.
pub fn energy(gm: &GenerativeModel, y: &GenObservation, mu: &GenPoint) -> Result<f64> {
    let (ez, ew) = gm.errors(y, mu)?;
    Ok(gm.quad(&ez, &ew))
}

/// The energy with `𝐟` and `𝐠` replaced by their first-order expansions
/// about `anchor`, using the mode's generalized Jacobians.
///
/// In linear mode this is the energy whose gradient and Hessian the filter
/// uses: at `mu = anchor` its gradient equals [`energy_grad`] and its Hessian
/// equals [`energy_hessian`] exactly.
pub fn energy_linearized_at(gm: &GenerativeModel, y: &GenObservation, mu: &GenPoint, anchor: &GenPoint) -> Result<f64> {
    gm.check(y, mu)?;
    let (ez0, ew0) = gm.errors(y, anchor)?;
    let (jg, k) = gm.error_jacobians(anchor)?;
    let dx = mu.as_vector() - anchor.as_vector();
    let ez = ez0 - &jg * &dx;
    let ew = ew0 + &k * &dx;
    Ok(gm.quad(&ez, &ew))
}

/// `−(∂𝐠)^T (𝚺^z)^{-1} (𝐲 − 𝐠) + (D' − ∂𝐟)^T (𝚺^w)^{-1} (D'μ − 𝐟)`.
pub fn energy_grad(gm: &GenerativeModel, y: &GenObservation, mu: &GenPoint) -> Result<GenPoint> {
    let (ez, ew) = gm.errors(y, mu)?;
    let (jg, k) = gm.error_jacobians(mu)?;
    let g = k.transpose() * (&gm.prec_w * ew) - jg.transpose() * (&gm.prec_z * ez);
    GenPoint::from_vector(mu.dim(), mu.order(), g).map_err(|_| Error::NonFinite("energy gradient"))
}

/// Gauss–Newton form in linear mode, central differences of [`energy_grad`]
/// in exact mode. Always symmetric.
pub fn energy_hessian(gm: &GenerativeModel, y: &GenObservation, mu: &GenPoint) -> Result<DMatrix<f64>> {
    gm.check(y, mu)?;
    match gm.mode {
        FlowMode::Linear => {
            let (jg, k) = gm.error_jacobians(mu)?;
            let h = jg.transpose() * &gm.prec_z * &jg + k.transpose() * &gm.prec_w * &k;
            Ok(linalg::symmetrize(&h))
        }
        FlowMode::Exact => {
            let base = mu.as_vector();
            let n = base.len();
            let mut h = DMatrix::zeros(n, n);
            for j in 0..n {
                let step = 1e-5 * (1.0 + base[j].abs());
                let plus = perturbed(mu, j, step);
                let minus = perturbed(mu, j, -step);
                let col = (energy_grad(gm, y, &plus)?.into_vector() - energy_grad(gm, y, &minus)?.into_vector())
                    / (2.0 * step);
                h.set_column(j, &col);
            }
            Ok(linalg::symmetrize(&h))
        }
    }
}

fn perturbed(mu: &GenPoint, j: usize, step: f64) -> GenPoint {
    let mut v = mu.as_vector().clone();
    v[j] += step;
    GenPoint::from_vector(mu.dim(), mu.order(), v).expect("finite perturbation")
}

/// `𝚺* = (∇²V)^{-1}` together with the diagonal jitter that was needed.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalCov {
    pub sigma: DMatrix<f64>,
    pub jitter: f64,
}

impl OptimalCov {
    /// Whether the Hessian had to be regularized before inversion.
    pub fn jittered(&self) -> bool {
        self.jitter > 0.0
    }
}

pub fn optimal_cov(h: &DMatrix<f64>) -> Result<OptimalCov> {
    if !h.is_square() {
        return Err(Error::Dimension("Hessian must be square".into()));
    }
    let inv = linalg::symmetric_inverse(h)?;
    if inv.jitter > 0.0 {
        log::warn!("energy Hessian needed jitter {:e} before inversion", inv.jitter);
    }
    Ok(OptimalCov {
        sigma: inv.inverse,
        jitter: inv.jitter,
    })
}

/// `F_L = V + ½ log det ∇²V − ((N+1)d/2) log(2πe)`.
pub fn laplace_free_energy(gm: &GenerativeModel, y: &GenObservation, mu: &GenPoint) -> Result<f64> {
    let v = energy(gm, y, mu)?;
    let h = energy_hessian(gm, y, mu)?;
    free_energy_from_parts(v, &h)
}

pub(crate) fn free_energy_from_parts(v: f64, h: &DMatrix<f64>) -> Result<f64> {
    let logdet = linalg::log_det_positive(h)?;
    let n = h.nrows() as f64;
    Ok(v + 0.5 * logdet - 0.5 * n * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln())
}

/// `∂_i log det ∇²V = Tr((∇²V)^{-1} ∂_i ∇²V)`; identically zero in linear mode.
pub fn logdet_grad(gm: &GenerativeModel, y: &GenObservation, mu: &GenPoint) -> Result<GenPoint> {
    gm.check(y, mu)?;
    if gm.mode == FlowMode::Linear {
        return Ok(GenPoint::zeros(mu.dim(), mu.order()));
    }
    let h = energy_hessian(gm, y, mu)?;
    let hinv = linalg::symmetric_inverse(&h)?.inverse;
    let base = mu.as_vector();
    let mut out = DVector::zeros(base.len());
    for i in 0..base.len() {
        let step = 1e-4 * (1.0 + base[i].abs());
        let dh = (energy_hessian(gm, y, &perturbed(mu, i, step))? - energy_hessian(gm, y, &perturbed(mu, i, -step))?)
            / (2.0 * step);
        out[i] = hinv.component_mul(&dh.transpose()).sum();
    }
    GenPoint::from_vector(mu.dim(), mu.order(), out).map_err(|_| Error::NonFinite("log-determinant gradient"))
}

/// `∇F_L = ∇V + ½ ∇ log det ∇²V`. In linear mode this is `∇V` itself.
pub fn free_energy_grad(gm: &GenerativeModel, y: &GenObservation, mu: &GenPoint) -> Result<GenPoint> {
    let gv = energy_grad(gm, y, mu)?;
    if gm.mode == FlowMode::Linear {
        return Ok(gv);
    }
    let gl = logdet_grad(gm, y, mu)?;
    let v = gv.into_vector() + gl.into_vector() * 0.5;
    GenPoint::from_vector(mu.dim(), mu.order(), v).map_err(|_| Error::NonFinite("free-energy gradient"))
}
