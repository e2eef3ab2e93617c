//! Flow and observation-map definitions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jet::Dual;

/// Which family a model was built from.
#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    Linear {
        a: DMatrix<f64>,
    },
    LotkaVolterra {
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
    },
    Lorenz {
        sigma: f64,
        rho: f64,
        beta: f64,
    },
    Custom,
}

/// A flow `f: R^d -> R^d` and optional observation map `g: R^d -> R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    state_dim: usize,
    flow: Vec<Expr>,
    obs_map: Option<Vec<Expr>>,
    builtin: Builtin,
}

impl ModelSpec {
    /// `f(x) = A x`.
    pub fn linear(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Dimension("linear flow needs a non-empty square matrix".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow matrix"));
        }
        let flow = linear_exprs(&a);
        Ok(Self {
            state_dim: a.nrows(),
            flow,
            obs_map: None,
            builtin: Builtin::Linear { a },
        })
    }

    /// `ẋ = αx − βxy`, `ẏ = δxy − γy`.
    pub fn lotka_volterra(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        check_finite(&[alpha, beta, gamma, delta])?;
        let (x, y) = (Expr::var(0), Expr::var(1));
        let xy = Expr::mul(x.clone(), y.clone());
        let flow = vec![
            Expr::sub(Expr::scale(alpha, x), Expr::scale(beta, xy.clone())),
            Expr::sub(Expr::scale(delta, xy), Expr::scale(gamma, y)),
        ];
        Ok(Self {
            state_dim: 2,
            flow,
            obs_map: None,
            builtin: Builtin::LotkaVolterra {
                alpha,
                beta,
                gamma,
                delta,
            },
        })
    }

    /// `(σ(y − x), x(ρ − z) − y, xy − βz)`.
    pub fn lorenz(sigma: f64, rho: f64, beta: f64) -> Result<Self> {
        check_finite(&[sigma, rho, beta])?;
        let (x, y, z) = (Expr::var(0), Expr::var(1), Expr::var(2));
        let flow = vec![
            Expr::scale(sigma, Expr::sub(y.clone(), x.clone())),
            Expr::sub(
                Expr::mul(x.clone(), Expr::sub(Expr::constant(rho), z.clone())),
                y.clone(),
            ),
            Expr::sub(Expr::mul(x, y), Expr::scale(beta, z)),
        ];
        Ok(Self {
            state_dim: 3,
            flow,
            obs_map: None,
            builtin: Builtin::Lorenz { sigma, rho, beta },
        })
    }

    pub fn custom(flow: Vec<Expr>) -> Result<Self> {
        let d = flow.len();
        if d == 0 {
            return Err(Error::Dimension("a flow needs at least one component".into()));
        }
        for e in &flow {
            e.validate(d)?;
        }
        Ok(Self {
            state_dim: d,
            flow,
            obs_map: None,
            builtin: Builtin::Custom,
        })
    }

    pub fn with_obs_map(mut self, obs: Vec<Expr>) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::Dimension(
                "an observation map needs at least one component".into(),
            ));
        }
        for e in &obs {
            e.validate(self.state_dim)?;
        }
        self.obs_map = Some(obs);
        Ok(self)
    }

    pub fn with_identity_obs(self) -> Self {
        let obs = (0..self.state_dim).map(Expr::var).collect();
        self.with_obs_map(obs).expect("identity map is valid")
    }

    /// Scalar observation of the sum of all state components.
    pub fn with_sum_obs(self) -> Self {
        let obs = vec![Expr::sum((0..self.state_dim).map(Expr::var).collect())];
        self.with_obs_map(obs).expect("sum map is valid")
    }

    /// `g(x) = C x`.
    pub fn with_linear_obs(self, c: &DMatrix<f64>) -> Result<Self> {
        if c.ncols() != self.state_dim {
            return Err(Error::Dimension(format!(
                "observation matrix has {} columns, state has {}",
                c.ncols(),
                self.state_dim
            )));
        }
        self.with_obs_map(linear_exprs(c))
    }

    /// Multiplies the flow by `k`, which runs the dynamics `k` times faster.
    pub fn time_scaled(mut self, k: f64) -> Result<Self> {
        check_finite(&[k])?;
        if k != 1.0 {
            self.flow = self.flow.into_iter().map(|e| Expr::scale(k, e)).collect();
            self.builtin = match self.builtin {
                Builtin::Linear { a } => Builtin::Linear { a: a * k },
                _ => Builtin::Custom,
            };
        }
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Observation dimension, zero when there is no observation map.
    pub fn obs_dim(&self) -> usize {
        self.obs_map.as_ref().map_or(0, Vec::len)
    }

    pub fn flow(&self) -> &[Expr] {
        &self.flow
    }

    pub fn obs_map(&self) -> Result<&[Expr]> {
        self.obs_map.as_deref().ok_or(Error::NoObservationModel)
    }

    pub fn builtin(&self) -> &Builtin {
        &self.builtin
    }

    /// The system matrix, when the flow is linear by construction.
    pub fn linear_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.builtin {
            Builtin::Linear { a } => Some(a),
            _ => None,
        }
    }

    pub fn eval_flow(&self, x: &[f64]) -> DVector<f64> {
        eval_exprs(&self.flow, x)
    }

    pub fn flow_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        jacobian(&self.flow, x)
    }

    pub fn eval_obs(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(eval_exprs(self.obs_map()?, x))
    }

    pub fn obs_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(jacobian(self.obs_map()?, x))
    }
}

fn check_finite(params: &[f64]) -> Result<()> {
    if params.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("model parameter"))
    }
}

/// Row `i` becomes `Σ_j c_ij x_j`, folded left to right.
fn linear_exprs(c: &DMatrix<f64>) -> Vec<Expr> {
    (0..c.nrows())
        .map(|i| Expr::sum((0..c.ncols()).map(|j| Expr::scale(c[(i, j)], Expr::var(j))).collect()))
        .collect()
}

pub(crate) fn eval_exprs(exprs: &[Expr], x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(exprs.len(), exprs.iter().map(|e| e.eval(x)))
}

/// Forward-mode Jacobian, one column per input.
pub(crate) fn jacobian(exprs: &[Expr], x: &[f64]) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(exprs.len(), x.len());
    let mut duals: Vec<Dual> = x.iter().map(|v| Dual::constant(*v)).collect();
    for j in 0..x.len() {
        duals[j].d = 1.0;
        for (i, e) in exprs.iter().enumerate() {
            jac[(i, j)] = e.eval(&duals).d;
        }
        duals[j].d = 0.0;
    }
    jac
}
