//! Integrating the generalized filter over a sequence of observations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::filter::embed::{embed_series, Embedding, GenObservation};
use crate::filter::energy::{
    energy, energy_hessian, free_energy_from_parts, free_energy_grad, optimal_cov, GenerativeModel,
};
use crate::flow::FlowMode;
use crate::gen::GenPoint;
use crate::integrate::{convolved_white_noise, uniform_grid, DEFAULT_BLOWUP_BOUND};
use crate::model::ModelSpec;
use crate::noise::{build_gen_cov, Kernel, KernelFamily};
use crate::par::Execution;

/// Posterior summary at one observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub time: f64,
    pub mu: GenPoint,
    pub sigma: DMatrix<f64>,
    pub free_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub states: Vec<FilterState>,
    /// Time at which `μ^(0)` exceeded the bound or any coordinate became non-finite; the run stops there.
    pub blowup_time: Option<f64>,
    /// Largest step-doubling estimate of the relative Euler error.
    pub step_error: f64,
}

impl FilterRun {
    /// Trapezoidal integral of the free energy over the observation times.
    pub fn integrated_free_energy(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| 0.5 * (w[0].free_energy + w[1].free_energy) * (w[1].time - w[0].time))
            .sum()
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| s.mu.coord(0).to_vec()).collect()
    }
}

/// Relative step-doubling error above which a warning is logged.
const STEP_ERROR_WARN: f64 = 1e-2;

/// Integrates `μ̇ = Dμ − λ∇F_L(μ)` with Euler steps of `dt_integrate`.
///
/// Over the interval ending at an observation time that observation is held
/// fixed. The posterior covariance `(∇²V)^{-1}` and the free energy are
/// recorded at every observation time, starting with `mu0` at the first.
pub fn run_filter(
    gm: &GenerativeModel,
    observations: &[GenObservation],
    mu0: &GenPoint,
    dt_integrate: f64,
) -> Result<FilterRun> {
    run_filter_with_bound(gm, observations, mu0, dt_integrate, DEFAULT_BLOWUP_BOUND)
}

pub fn run_filter_with_bound(
    gm: &GenerativeModel,
    observations: &[GenObservation],
    mu0: &GenPoint,
    dt_integrate: f64,
    bound: f64,
) -> Result<FilterRun> {
    if !(dt_integrate > 0.0) {
        return Err(Error::InvalidArgument("dt_integrate must be positive".into()));
    }
    if observations.windows(2).any(|w| !(w[1].time > w[0].time)) {
        return Err(Error::InvalidArgument(
            "observations must be strictly time-sorted".into(),
        ));
    }
    let mut run = FilterRun {
        states: Vec::with_capacity(observations.len()),
        blowup_time: None,
        step_error: 0.0,
    };
    let Some(first) = observations.first() else {
        return Ok(run);
    };
    let mut mu = mu0.clone();
    run.states.push(posterior(gm, first, &mu)?);
    for w in observations.windows(2) {
        let (prev, obs) = (&w[0], &w[1]);
        let span = obs.time - prev.time;
        let steps = (span / dt_integrate).round();
        if steps < 1.0 || (steps * dt_integrate - span).abs() > 1e-9 * span.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "dt_integrate {dt_integrate} does not divide the observation spacing {span}"
            )));
        }
        for s in 0..steps as usize {
            let next = euler_step(gm, obs, &mu, dt_integrate)?;
            if s == 0 {
                if let Some(next) = &next {
                    let err = step_doubling_error(gm, obs, &mu, next, dt_integrate)?;
                    if err > STEP_ERROR_WARN && run.step_error <= STEP_ERROR_WARN {
                        log::warn!(
                            "filter step error estimate {err:.3e} at t = {}; consider a smaller dt_integrate",
                            prev.time
                        );
                    }
                    run.step_error = run.step_error.max(err);
                }
            }
            match next {
                Some(next) if next.coord(0).iter().all(|v| v.abs() <= bound) => mu = next,
                _ => {
                    let t = prev.time + (s + 1) as f64 * dt_integrate;
                    log::warn!("filter mean left the bounded region at t = {t}");
                    run.blowup_time = Some(t);
                    return Ok(run);
                }
            }
        }
        run.states.push(posterior(gm, obs, &mu)?);
    }
    Ok(run)
}

/// One Euler step; `None` when the result is not finite.
fn euler_step(gm: &GenerativeModel, obs: &GenObservation, mu: &GenPoint, dt: f64) -> Result<Option<GenPoint>> {
    let grad = free_energy_grad(gm, obs, mu)?;
    let v = mu.as_vector() + (mu.shift().into_vector() - grad.into_vector() * gm.lambda()) * dt;
    Ok(GenPoint::from_vector(mu.dim(), mu.order(), v).ok())
}

/// Relative gap between one full step and two half steps.
fn step_doubling_error(
    gm: &GenerativeModel,
    obs: &GenObservation,
    mu: &GenPoint,
    full: &GenPoint,
    dt: f64,
) -> Result<f64> {
    let half = euler_step(gm, obs, mu, dt / 2.0)?;
    let two = match half {
        Some(h) => euler_step(gm, obs, &h, dt / 2.0)?,
        None => None,
    };
    Ok(match two {
        Some(two) => (full.as_vector() - two.as_vector()).amax() / (1.0 + mu.as_vector().amax()),
        None => f64::INFINITY,
    })
}

fn posterior(gm: &GenerativeModel, obs: &GenObservation, mu: &GenPoint) -> Result<FilterState> {
    let h = energy_hessian(gm, obs, mu)?;
    let sigma = optimal_cov(&h)?.sigma;
    let v = energy(gm, obs, mu)?;
    Ok(FilterState {
        time: obs.time,
        mu: mu.clone(),
        free_energy: free_energy_from_parts(v, &h)?,
        sigma,
    })
}

/// Dynamics-free state estimate: `pinv(G) (y − g(0))` with `G = ∇g(0)`.
///
/// Exact inversion for affine observation maps; for the sum map this is
/// `y/d` in every component.
pub fn pseudo_inverse_estimate(model: &ModelSpec, y: &[f64]) -> Result<Vec<f64>> {
    let zero = vec![0.0; model.state_dim()];
    let g0 = model.eval_obs(&zero)?;
    let jac = model.obs_jacobian(&zero)?;
    let pinv = jac
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidArgument(format!("observation pseudo-inverse: {e}")))?;
    Ok((pinv * (DVector::from_column_slice(y) - g0)).as_slice().to_vec())
}

/// Default initial mean: the pseudo-inverse estimate of `y^(0)` at order 0, zeros above.
pub fn initial_mean(gm: &GenerativeModel, first: &GenObservation) -> Result<GenPoint> {
    let mut mu = GenPoint::zeros(gm.model().state_dim(), gm.state_order());
    let x0 = pseudo_inverse_estimate(gm.model(), first.y.coord(0))?;
    mu.coord_mut(0).copy_from_slice(&x0);
    Ok(mu)
}

/// `sqrt(mean over times and components of (estimate − truth)²)`.
pub fn rmse(estimates: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(Error::Dimension(
            "estimate and truth series must be non-empty and equally long".into(),
        ));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for (e, t) in estimates.iter().zip(truth) {
        if e.len() != t.len() {
            return Err(Error::Dimension("estimate and truth dimensions differ".into()));
        }
        acc += e.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += e.len();
    }
    Ok((acc / count as f64).sqrt())
}

/// Synthetic data from the generative process.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
}

/// Simulates `ẋ = f(x) + w`, `y = g(x) + z` with Gaussian-convolved noises.
///
/// The state is Euler-integrated on a grid of `dt_sim` and sampled every
/// `dt_obs`, which must be a multiple of `dt_sim`. Both kernels must be
/// Gaussian; their `variance_scale` sets the noise levels.
#[allow(clippy::too_many_arguments)]
pub fn synthesize(
    model: &ModelSpec,
    kernel_w: &Kernel,
    kernel_z: &Kernel,
    z0: &[f64],
    dt_sim: f64,
    dt_obs: f64,
    t_end: f64,
    seed: u64,
) -> Result<Synthetic> {
    let sigma_of = |k: &Kernel| match k.family {
        KernelFamily::Gaussian { sigma } => Ok(sigma),
        _ => Err(Error::InvalidKernel("synthetic data needs gaussian kernels".into())),
    };
    let (sw, sz) = (sigma_of(kernel_w)?, sigma_of(kernel_z)?);
    let ratio = (dt_obs / dt_sim).round();
    if ratio < 1.0 || (ratio * dt_sim - dt_obs).abs() > 1e-9 * dt_obs {
        return Err(Error::InvalidArgument("dt_obs must be a multiple of dt_sim".into()));
    }
    let stride = ratio as usize;
    let d = model.state_dim();
    let m = model.obs_dim();
    if m == 0 {
        return Err(Error::NoObservationModel);
    }
    if z0.len() != d {
        return Err(Error::Dimension(format!(
            "initial state has length {}, model has {d}",
            z0.len()
        )));
    }
    let grid = uniform_grid(dt_sim, t_end)?;
    let w = convolved_white_noise(sw, dt_sim, grid.len(), d, seed)?;
    let z = convolved_white_noise(sz, dt_sim, grid.len(), m, seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?;
    let (aw, az) = (kernel_w.variance_scale.sqrt(), kernel_z.variance_scale.sqrt());
    let mut out = Synthetic {
        times: Vec::new(),
        states: Vec::new(),
        observations: Vec::new(),
    };
    let mut x = z0.to_vec();
    for (k, &t) in grid.iter().enumerate() {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("synthetic state"));
        }
        if k % stride == 0 {
            let gx = model.eval_obs(&x)?;
            out.times.push(t);
            out.states.push(x.clone());
            out.observations.push((0..m).map(|i| gx[i] + az * z[i][k]).collect());
        }
        let f = model.eval_flow(&x);
        for i in 0..d {
            x[i] += dt_sim * (f[i] + aw * w[i][k]);
        }
    }
    Ok(out)
}

/// Everything needed to build and run a filter at a given order.
#[derive(Debug, Clone)]
pub struct FilterTemplate {
    pub model: ModelSpec,
    pub kernel_w: Kernel,
    pub kernel_z: Kernel,
    pub lambda: f64,
    pub mode: FlowMode,
    pub embedding: Embedding,
    pub dt_integrate: f64,
}

impl FilterTemplate {
    /// Generative model with state order `N` and observation order `M`.
    pub fn build(&self, n: usize, m: usize) -> Result<GenerativeModel> {
        if m > n {
            return Err(Error::InvalidArgument(format!(
                "observation order {m} exceeds state order {n}"
            )));
        }
        let cov_w = build_gen_cov(&self.kernel_w, n, self.model.state_dim())?;
        let cov_z = build_gen_cov(&self.kernel_z, m + 1, self.model.obs_dim())?;
        GenerativeModel::new(self.model.clone(), cov_w, cov_z, self.lambda, self.mode)
    }

    /// Embeds `series` (sampled every `dt`) from sample `start` and runs the
    /// filter from the default initial mean.
    pub fn run(&self, series: &[Vec<f64>], dt: f64, n: usize, m: usize, start: usize) -> Result<FilterRun> {
        let gm = self.build(n, m)?;
        let obs = embed_series(series, dt, m, start, self.embedding)?;
        let first = obs.first().ok_or(Error::SeriesTooShort {
            needed: start.max(m) + 1,
            got: series.len(),
        })?;
        let mu0 = initial_mean(&gm, first)?;
        run_filter(&gm, &obs, &mu0, self.dt_integrate)
    }
}

/// Outcome of [`select_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSelection {
    pub chosen: usize,
    /// Integrated free energy per candidate, or the error that excluded it.
    pub scores: Vec<(usize, std::result::Result<f64, Error>)>,
}

/// Runs the filter with `M = N` for every candidate and returns the `N`
/// with the smallest time-integrated free energy, preferring smaller `N` on ties.
///
/// All candidates are embedded from the same sample so their integrals
/// cover the same interval. Failed or blown-up candidates are excluded.
pub fn select_order(
    template: &FilterTemplate,
    series: &[Vec<f64>],
    dt: f64,
    candidates: &[usize],
    exec: Execution,
) -> Result<OrderSelection> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate orders".into()));
    }
    let d = template.model.state_dim();
    for &n in candidates {
        if n > 2 * d {
            log::warn!("candidate order {n} exceeds twice the state dimension ({})", 2 * d);
        }
    }
    let start = candidates.iter().copied().max().unwrap_or(0);
    let scores: Vec<(usize, std::result::Result<f64, Error>)> = exec.map_slice(candidates, |&n| {
        let score = template
            .run(series, dt, n, n, start)
            .and_then(|run| match run.blowup_time {
                Some(t) => Err(Error::InvalidArgument(format!("filter blew up at t = {t}"))),
                None => Ok(run.integrated_free_energy()),
            });
        (n, score)
    });
    let mut best: Option<(usize, f64)> = None;
    for (n, s) in &scores {
        if let Ok(f) = s {
            if !f.is_finite() {
                continue;
            }
            best = match best {
                Some((bn, bf)) if bf < *f || (bf == *f && bn <= *n) => Some((bn, bf)),
                _ => Some((*n, *f)),
            };
        }
    }
    let (chosen, _) = best.ok_or_else(|| Error::InvalidArgument("every candidate order failed".into()))?;
    Ok(OrderSelection { chosen, scores })
}
