//! Pathwise integration: the zigzag method and an Euler baseline driven by
//! Gaussian-convolved white noise.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, FlowMode};
use crate::gen::{GenNoise, GenPoint};
use crate::model::ModelSpec;
use crate::noise::{build_gen_cov, Kernel, KernelFamily, NoiseSampler};
use crate::par::Execution;

/// States whose largest absolute component exceeds this are treated as blown up.
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Zigzag,
    ZigzagLinear,
    EulerBaseline,
    LeastAction,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Zigzag => "zigzag",
            Method::ZigzagLinear => "zigzag_linear",
            Method::EulerBaseline => "euler_baseline",
            Method::LeastAction => "least_action",
        }
    }
}

/// Sampled path of the order-0 state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub method: Method,
    pub seed: u64,
    /// First grid time at which the state exceeded the blow-up bound. The
    /// trajectory stops just before it.
    pub blowup_time: Option<f64>,
}

impl Trajectory {
    fn new(method: Method, seed: u64) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            method,
            seed,
            blowup_time: None,
        }
    }

    /// Appends `state` unless it is non-finite or beyond `bound`, in which
    /// case the blow-up is recorded and `false` returned.
    fn push(&mut self, t: f64, state: Vec<f64>, bound: f64) -> bool {
        if state.iter().any(|v| !v.is_finite() || v.abs() > bound) {
            self.blowup_time = Some(t);
            return false;
        }
        self.times.push(t);
        self.states.push(state);
        true
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn is_complete(&self) -> bool {
        self.blowup_time.is_none()
    }
}

/// Solves `x^(n+1) = f^(n)(x^(:n)) + w^(n)` for `n = 0..N-1` from `x^(0) = z`,
/// where `N - 1` is the order of `w0`.
pub fn zigzag_solve(model: &ModelSpec, z: &[f64], w0: &GenNoise, mode: FlowMode) -> Result<GenPoint> {
    let d = model.state_dim();
    if z.len() != d || w0.dim() != d {
        return Err(Error::Dimension(format!(
            "state dimension {d}, initial condition {}, noise {}",
            z.len(),
            w0.dim()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial condition"));
    }
    let order = w0.order() + 1;
    let mut x = GenPoint::zeros(d, order);
    x.coord_mut(0).copy_from_slice(z);
    let jac = match mode {
        FlowMode::Linear => Some(model.flow_jacobian(z)),
        FlowMode::Exact => None,
    };
    for n in 0..order {
        let fn_ = match (&jac, n) {
            (_, 0) => model.eval_flow(z),
            (Some(j), _) => j * DVector::from_column_slice(x.coord(n)),
            (None, _) => flow::lift_exact(model.flow(), &x, n + 1).rows(n * d, d).into_owned(),
        };
        let next = x.coord_mut(n + 1);
        for ((o, f), w) in next.iter_mut().zip(fn_.iter()).zip(w0.coord(n)) {
            *o = f + w;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::ZigzagOverflow { order: n + 1 });
        }
    }
    Ok(x)
}

/// Zigzag integration settings shared by every member of an ensemble.
#[derive(Debug, Clone)]
pub struct Zigzag {
    model: ModelSpec,
    mode: FlowMode,
    sampler: NoiseSampler,
    order: usize,
    blowup_bound: f64,
}

impl Zigzag {
    /// Prepares sampling of `w^(0..order-1)` and solution up to `x^(order)`.
    pub fn new(model: ModelSpec, kernel: &Kernel, order: usize, mode: FlowMode) -> Result<Self> {
        if order == 0 {
            return Err(Error::ZeroOrder);
        }
        let cov = build_gen_cov(kernel, order, model.state_dim())?;
        Ok(Self {
            sampler: NoiseSampler::new(&cov)?,
            model,
            mode,
            order,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
        })
    }

    pub fn with_blowup_bound(mut self, bound: f64) -> Self {
        self.blowup_bound = bound;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    /// The generalized fluctuation drawn for `seed`.
    pub fn noise(&self, seed: u64) -> GenNoise {
        self.sampler.draw(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// The generalized state expanded from `z` with the noise drawn for `seed`.
    pub fn solve(&self, z: &[f64], seed: u64) -> Result<GenPoint> {
        zigzag_solve(&self.model, z, &self.noise(seed), self.mode)
    }

    pub fn trajectory(&self, z: &[f64], t_grid: &[f64], seed: u64) -> Result<Trajectory> {
        check_grid(t_grid)?;
        let x = self.solve(z, seed)?;
        let method = match self.mode {
            FlowMode::Exact => Method::Zigzag,
            FlowMode::Linear => Method::ZigzagLinear,
        };
        Ok(evaluate_expansion(&x, t_grid, method, seed, self.blowup_bound))
    }

    /// Members `i = 0..count` use seed `base_seed + i`.
    pub fn ensemble(
        &self,
        z: &[f64],
        t_grid: &[f64],
        base_seed: u64,
        count: usize,
        exec: Execution,
    ) -> Vec<Result<Trajectory>> {
        exec.map_indices(count, |i| self.trajectory(z, t_grid, base_seed.wrapping_add(i as u64)))
    }
}

/// Samples `w0`, expands with the zigzag method and evaluates the Taylor
/// polynomial of `x^(0)` on `t_grid`.
pub fn zigzag_trajectory(
    model: &ModelSpec,
    z: &[f64],
    kernel: &Kernel,
    order: usize,
    t_grid: &[f64],
    mode: FlowMode,
    seed: u64,
) -> Result<Trajectory> {
    Zigzag::new(model.clone(), kernel, order, mode)?.trajectory(z, t_grid, seed)
}

fn evaluate_expansion(x: &GenPoint, t_grid: &[f64], method: Method, seed: u64, bound: f64) -> Trajectory {
    let mut traj = Trajectory::new(method, seed);
    for &t in t_grid {
        if !traj.push(t, x.taylor_value(t), bound) {
            break;
        }
    }
    traj
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.first() != Some(&0.0) {
        return Err(Error::InvalidArgument("time grid must start at 0".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `0, dt, …, n dt` with `n = round(t_end / dt)`.
pub fn uniform_grid(dt: f64, t_end: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument("grid needs dt > 0 and a finite T >= 0".into()));
    }
    let n = (t_end / dt).round() as usize;
    Ok((0..=n).map(|k| k as f64 * dt).collect())
}

/// White noise of variance `1/dt` per cell convolved with the Gaussian
/// density of standard deviation `sigma`, sampled at `0, dt, …, (len-1) dt`.
///
/// The noise is generated on the grid extended by `6σ` on both sides so the
/// truncated convolution is complete at every output point. Each of the
/// `dim` components is an independent row.
pub fn convolved_white_noise(sigma: f64, dt: f64, len: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(sigma > 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument("sigma and dt must be positive".into()));
    }
    let pad = (6.0 * sigma / dt).ceil() as usize;
    let taps: Vec<f64> = (0..=2 * pad)
        .map(|i| {
            let s = (i as f64 - pad as f64) * dt;
            (-s * s / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma) * dt
        })
        .collect();
    let raw_len = len + 2 * pad;
    let fft_len = (raw_len + taps.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);

    let mut kernel_hat: Vec<Complex<f64>> = taps.iter().map(|v| Complex::new(*v, 0.0)).collect();
    kernel_hat.resize(fft_len, Complex::new(0.0, 0.0));
    forward.process(&mut kernel_hat);

    let normal = Normal::new(0.0, (1.0 / dt).sqrt()).expect("positive standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut buf: Vec<Complex<f64>> = (0..raw_len)
            .map(|_| Complex::new(normal.sample(&mut rng), 0.0))
            .collect();
        buf.resize(fft_len, Complex::new(0.0, 0.0));
        forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&kernel_hat) {
            *b *= k;
        }
        inverse.process(&mut buf);
        let norm = 1.0 / fft_len as f64;
        out.push((0..len).map(|k| buf[k + 2 * pad].re * norm).collect());
    }
    Ok(out)
}

/// Euler integration of `ẋ = f(x) + w_t` with Gaussian-convolved white noise.
///
/// Only the Gaussian kernel family defines this noise; its `variance_scale`
/// multiplies the noise variance.
pub fn euler_baseline(
    model: &ModelSpec,
    z: &[f64],
    kernel: &Kernel,
    dt: f64,
    t_end: f64,
    seed: u64,
) -> Result<Trajectory> {
    euler_baseline_with_bound(model, z, kernel, dt, t_end, seed, DEFAULT_BLOWUP_BOUND)
}

pub fn euler_baseline_with_bound(
    model: &ModelSpec,
    z: &[f64],
    kernel: &Kernel,
    dt: f64,
    t_end: f64,
    seed: u64,
    bound: f64,
) -> Result<Trajectory> {
    let KernelFamily::Gaussian { sigma } = kernel.family else {
        return Err(Error::InvalidKernel(
            "the Euler baseline needs a gaussian kernel".into(),
        ));
    };
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument("T must be positive".into()));
    }
    let d = model.state_dim();
    if z.len() != d {
        return Err(Error::Dimension(format!(
            "initial condition has length {}, model has {d}",
            z.len()
        )));
    }
    let grid = uniform_grid(dt, t_end)?;
    let noise = convolved_white_noise(sigma, dt, grid.len(), d, seed)?;
    let amp = kernel.variance_scale.sqrt();
    let mut traj = Trajectory::new(Method::EulerBaseline, seed);
    let mut x = z.to_vec();
    for (k, &t) in grid.iter().enumerate() {
        if !traj.push(t, x.clone(), bound) {
            break;
        }
        let f = model.eval_flow(&x);
        for i in 0..d {
            x[i] += dt * (f[i] + amp * noise[i][k]);
        }
    }
    Ok(traj)
}

/// Classical fourth-order Runge–Kutta for the noise-free flow, on `0, dt, …, T`.
pub fn rk4_path(model: &ModelSpec, z: &[f64], dt: f64, t_end: f64) -> Result<Vec<Vec<f64>>> {
    let grid = uniform_grid(dt, t_end)?;
    let mut x = DVector::from_column_slice(z);
    let mut out = Vec::with_capacity(grid.len());
    out.push(z.to_vec());
    let f = |v: &DVector<f64>| model.eval_flow(v.as_slice());
    for _ in 1..grid.len() {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (dt / 2.0)));
        let k3 = f(&(&x + &k2 * (dt / 2.0)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(x.as_slice().to_vec());
    }
    Ok(out)
}
