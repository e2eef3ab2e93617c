//! The Lagrangian of a generalized state and the λ-regularized descent
//! towards the path of least action.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::{self, FlowMode};
use crate::gen::{GenNoise, GenPoint};
use crate::integrate::{zigzag_solve, Method, Trajectory, DEFAULT_BLOWUP_BOUND};
use crate::linalg::{self, JitteredCholesky};
use crate::model::ModelSpec;
use crate::noise::GenCov;

/// Default bound on `λ·dt` for the explicit Euler descent.
pub const DEFAULT_STEP_GUARD: f64 = 0.5;

/// `ℒ(x) = (D'x − 𝐟(x))^T (2𝚺)^{-1} (D'x − 𝐟(x))` for a fixed model and fluctuation covariance.
#[derive(Debug, Clone)]
pub struct LagrangianContext {
    model: ModelSpec,
    cov: GenCov,
    mode: FlowMode,
    chol: JitteredCholesky,
}

impl LagrangianContext {
    /// `cov` has `N` orders and pairs with generalized states of order `N`.
    pub fn new(model: ModelSpec, cov: GenCov, mode: FlowMode) -> Result<Self> {
        if cov.dim() != model.state_dim() {
            return Err(Error::Dimension(format!(
                "covariance over dimension {}, model has {}",
                cov.dim(),
                model.state_dim()
            )));
        }
        let chol = linalg::jittered_cholesky(cov.matrix()).map_err(|_| Error::SingularCovariance)?;
        if chol.factor.diagonal().iter().any(|v| *v <= 0.0) {
            return Err(Error::SingularCovariance);
        }
        if chol.jittered() {
            log::warn!("fluctuation covariance needed jitter {:e}", chol.jitter);
        }
        Ok(Self { model, cov, mode, chol })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn mode(&self) -> FlowMode {
        self.mode
    }

    /// `N`, the order of the states this context accepts.
    pub fn order(&self) -> usize {
        self.cov.order()
    }

    pub fn cov(&self) -> &GenCov {
        &self.cov
    }

    fn check(&self, x: &GenPoint) -> Result<()> {
        if x.order() != self.order() || x.dim() != self.model.state_dim() {
            return Err(Error::Dimension(format!(
                "state of order {} over dimension {} given, context expects order {} over {}",
                x.order(),
                x.dim(),
                self.order(),
                self.model.state_dim()
            )));
        }
        Ok(())
    }

    /// `D'x − 𝐟(x)` in the context's mode.
    pub fn residual(&self, x: &GenPoint) -> Result<DVector<f64>> {
        self.check(x)?;
        Ok(x.shift_drop()?.into_vector() - flow::gen_flow(&self.model, x, self.mode)?)
    }

    /// `𝚺^{-1} v`.
    pub fn precision_times(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    pub fn lagrangian(&self, x: &GenPoint) -> Result<f64> {
        let r = self.residual(x)?;
        Ok(0.5 * r.dot(&self.chol.solve(&r)))
    }

    /// `(D' − ∇𝐟(x))^T 𝚺^{-1} (D'x − 𝐟(x))`.
    ///
    /// In linear mode `∇𝐟` is the block form built from `∇f(x^(0))`, so this is
    /// the exact gradient of [`lagrangian_linearized_at`](Self::lagrangian_linearized_at)
    /// with the anchor at `x`.
    pub fn lagrangian_grad(&self, x: &GenPoint) -> Result<GenPoint> {
        let r = self.residual(x)?;
        let g = self.residual_jacobian(x)?.transpose() * self.chol.solve(&r);
        GenPoint::from_vector(x.dim(), x.order(), g).map_err(|_| Error::NonFinite("Lagrangian gradient"))
    }

    /// `D' − ∇𝐟(x)`.
    pub fn residual_jacobian(&self, x: &GenPoint) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let d = x.dim();
        Ok(crate::gen::shift_drop_matrix(x.order(), d) - flow::gen_jacobian(&self.model, x, self.mode)?)
    }

    /// The Lagrangian with `𝐟` replaced by its first-order expansion about
    /// `anchor`, using the mode's generalized Jacobian.
    ///
    /// In exact mode this is only a local model of [`lagrangian`](Self::lagrangian);
    /// in linear mode it is the energy whose gradient the local-linear scheme
    /// follows.
    pub fn lagrangian_linearized_at(&self, x: &GenPoint, anchor: &GenPoint) -> Result<f64> {
        self.check(x)?;
        let r0 = self.residual(anchor)?;
        let dx = x.as_vector() - anchor.as_vector();
        let r = r0 + self.residual_jacobian(anchor)? * dx;
        Ok(0.5 * r.dot(&self.chol.solve(&r)))
    }
}

pub fn lagrangian(ctx: &LagrangianContext, x: &GenPoint) -> Result<f64> {
    ctx.lagrangian(x)
}

pub fn lagrangian_grad(ctx: &LagrangianContext, x: &GenPoint) -> Result<GenPoint> {
    ctx.lagrangian_grad(x)
}

/// Settings for [`regularized_descent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub lambda: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Largest accepted `λ·dt`.
    pub step_guard: f64,
    pub blowup_bound: f64,
}

impl DescentOptions {
    pub fn new(lambda: f64, dt: f64, t_end: f64) -> Self {
        Self {
            lambda,
            dt,
            t_end,
            step_guard: DEFAULT_STEP_GUARD,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
        }
    }
}

/// Output of [`regularized_descent`]: the order-0 path and `ℒ(x_t)` at the same times.
#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub trajectory: Trajectory,
    pub lagrangian: Vec<f64>,
}

/// Euler integration of `ẋ = D x − λ ∇ℒ(x)` from the least-action state at `z`.
pub fn regularized_descent(ctx: &LagrangianContext, z: &[f64], opts: &DescentOptions) -> Result<Descent> {
    let DescentOptions {
        lambda,
        dt,
        t_end,
        step_guard,
        blowup_bound,
    } = *opts;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument("lambda must be finite and non-negative".into()));
    }
    if lambda * dt > step_guard {
        return Err(Error::StepTooLarge {
            product: lambda * dt,
            limit: step_guard,
        });
    }
    let grid = crate::integrate::uniform_grid(dt, t_end)?;
    let d = ctx.model.state_dim();
    let order = ctx.order();
    let mut x = zigzag_solve(&ctx.model, z, &GenNoise::zeros(d, order - 1), ctx.mode)?;
    let mut trajectory = Trajectory {
        times: Vec::with_capacity(grid.len()),
        states: Vec::with_capacity(grid.len()),
        method: Method::LeastAction,
        seed: 0,
        blowup_time: None,
    };
    let mut trace = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        let state = x.coord(0).to_vec();
        let l = ctx.lagrangian(&x);
        let bad = state.iter().any(|v| !v.is_finite() || v.abs() > blowup_bound);
        match l {
            Ok(l) if !bad && l.is_finite() => {
                trajectory.times.push(t);
                trajectory.states.push(state);
                trace.push(l);
            }
            _ => {
                trajectory.blowup_time = Some(t);
                break;
            }
        }
        if k + 1 == grid.len() {
            break;
        }
        let step = x.shift().into_vector() - ctx.lagrangian_grad(&x)?.into_vector() * lambda;
        let next = x.as_vector() + step * dt;
        match GenPoint::from_vector(d, order, next) {
            Ok(p) => x = p,
            Err(_) => {
                trajectory.blowup_time = Some(grid[k + 1]);
                break;
            }
        }
    }
    Ok(Descent {
        trajectory,
        lagrangian: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::noise::{build_gen_cov, Kernel};
    use proptest::prelude::*;

    fn lorenz_ctx(order: usize, mode: FlowMode) -> LagrangianContext {
        let model = ModelSpec::lorenz(10.0, 28.0, 8.0 / 3.0).unwrap();
        let cov = build_gen_cov(&Kernel::gaussian(1.0).unwrap(), order, 3).unwrap();
        LagrangianContext::new(model, cov, mode).unwrap()
    }

    #[test]
    fn zero_flow_unit_example() {
        let model = ModelSpec::custom(vec![Expr::constant(0.0)]).unwrap();
        let cov = GenCov::from_matrix(1, 1, DMatrix::from_element(1, 1, 0.5)).unwrap();
        let ctx = LagrangianContext::new(model, cov, FlowMode::Exact).unwrap();
        let x = GenPoint::new(&[vec![3.0], vec![1.5]]).unwrap();
        assert!((ctx.lagrangian(&x).unwrap() - 1.5 * 1.5).abs() < 1e-15);
    }

    #[test]
    fn least_action_state_has_zero_lagrangian_and_gradient() {
        for mode in [FlowMode::Exact, FlowMode::Linear] {
            let ctx = lorenz_ctx(5, mode);
            let x = zigzag_solve(ctx.model(), &[1.0, -2.0, 20.0], &GenNoise::zeros(3, 4), mode).unwrap();
            assert!(ctx.lagrangian(&x).unwrap() < 1e-20);
            assert!(ctx.lagrangian_grad(&x).unwrap().as_vector().amax() < 1e-8);
        }
    }

    #[test]
    fn perturbed_state_has_positive_lagrangian() {
        let ctx = lorenz_ctx(4, FlowMode::Exact);
        let mut x = zigzag_solve(ctx.model(), &[1.0, 1.0, 1.0], &GenNoise::zeros(3, 3), FlowMode::Exact).unwrap();
        x.coord_mut(2)[1] += 1e-3;
        assert!(ctx.lagrangian(&x).unwrap() > 0.0);
        assert!(ctx.residual(&x).unwrap().amax() > 1e-10);
    }

    #[test]
    fn dense_oracle_for_linear_flow() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.4, 0.3, 0.1, -0.9]);
        let model = ModelSpec::linear(a.clone()).unwrap();
        let cov = build_gen_cov(&Kernel::gaussian(0.9).unwrap(), 3, 2).unwrap();
        let ctx = LagrangianContext::new(model, cov.clone(), FlowMode::Exact).unwrap();
        let x = GenPoint::new(&[vec![1.0, 2.0], vec![-0.5, 0.3], vec![0.7, 0.1], vec![2.0, -1.0]]).unwrap();
        // Dense form: r = (D' − I_3 ⊗ [A | 0]) x with the Kronecker built explicitly.
        let mut big = DMatrix::zeros(6, 8);
        for n in 0..3 {
            big.view_mut((2 * n, 2 * n), (2, 2)).copy_from(&a);
        }
        let k = crate::gen::shift_drop_matrix(3, 2) - big;
        let r = &k * x.as_vector();
        let prec = cov.matrix().clone().try_inverse().unwrap();
        let expected = 0.5 * (r.transpose() * &prec * &r)[(0, 0)];
        assert!((ctx.lagrangian(&x).unwrap() - expected).abs() < 1e-12 * expected);
        let grad = k.transpose() * &prec * &r;
        assert!((ctx.lagrangian_grad(&x).unwrap().into_vector() - &grad).amax() < 1e-10 * grad.amax());
    }

    #[test]
    fn step_guard_is_enforced() {
        let ctx = lorenz_ctx(3, FlowMode::Linear);
        let opts = DescentOptions::new(100.0, 0.01, 1.0);
        assert!(matches!(
            regularized_descent(&ctx, &[1.0, 1.0, 1.0], &opts),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn zero_lambda_is_free_taylor_flow() {
        let model = ModelSpec::linear(DMatrix::from_row_slice(2, 2, &[-0.2, 0.1, -0.1, -0.2])).unwrap();
        let cov = build_gen_cov(&Kernel::gaussian(1.0).unwrap(), 3, 2).unwrap();
        let ctx = LagrangianContext::new(model.clone(), cov, FlowMode::Exact).unwrap();
        let opts = DescentOptions::new(0.0, 1e-4, 1.0);
        let out = regularized_descent(&ctx, &[10.0, 10.0], &opts).unwrap();
        let x0 = zigzag_solve(&model, &[10.0, 10.0], &GenNoise::zeros(2, 2), FlowMode::Exact).unwrap();
        for (t, s) in out.trajectory.times.iter().zip(&out.trajectory.states).step_by(1000) {
            let taylor = x0.taylor_value(*t);
            for (a, b) in s.iter().zip(&taylor) {
                assert!((a - b).abs() < 1e-3, "t={t}: {a} vs {b}");
            }
        }
    }

    fn arb_state(order: usize) -> impl Strategy<Value = GenPoint> {
        prop::collection::vec(-2.0f64..2.0, (order + 1) * 3)
            .prop_map(move |v| GenPoint::from_vector(3, order, DVector::from_vec(v)).unwrap())
    }

    fn fd_grad(f: impl Fn(&GenPoint) -> f64, x: &GenPoint) -> DVector<f64> {
        let base = x.as_vector();
        DVector::from_fn(base.len(), |j, _| {
            let h = 1e-6 * (1.0 + base[j].abs());
            let mut p = base.clone();
            p[j] += h;
            let mut m = base.clone();
            m[j] -= h;
            let xp = GenPoint::from_vector(x.dim(), x.order(), p).unwrap();
            let xm = GenPoint::from_vector(x.dim(), x.order(), m).unwrap();
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn exact_gradient_matches_finite_differences(x in arb_state(4)) {
            let ctx = lorenz_ctx(4, FlowMode::Exact);
            let g = ctx.lagrangian_grad(&x).unwrap().into_vector();
            let fd = fd_grad(|p| ctx.lagrangian(p).unwrap(), &x);
            prop_assert!((&g - &fd).norm() <= 1e-4 * g.norm().max(1e-8), "{} vs {}", g.norm(), (&g - &fd).norm());
        }

        #[test]
        fn linear_gradient_matches_mode_consistent_energy(x in arb_state(4)) {
            let ctx = lorenz_ctx(4, FlowMode::Linear);
            let g = ctx.lagrangian_grad(&x).unwrap().into_vector();
            let fd = fd_grad(|p| ctx.lagrangian_linearized_at(p, &x).unwrap(), &x);
            prop_assert!((&g - &fd).norm() <= 1e-4 * g.norm().max(1e-8));
        }

        #[test]
        fn lagrangian_is_non_negative(x in arb_state(3)) {
            prop_assert!(lorenz_ctx(3, FlowMode::Exact).lagrangian(&x).unwrap() >= 0.0);
            prop_assert!(lorenz_ctx(3, FlowMode::Linear).lagrangian(&x).unwrap() >= 0.0);
        }
    }
}
