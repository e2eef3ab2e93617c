//! The JSON run configuration and its per-subcommand resolution.
//!
//! Every field is optional in the document except `scenario` (and the flow of
//! a custom scenario). Defaults depend on the subcommand and scenario and are
//! listed in the generated reference page.

use std::fmt;
use std::path::{Path, PathBuf};

use gencoord::filter::Embedding;
use gencoord::{Expr, FlowMode, Kernel, KernelFamily, ModelSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Linear1d,
    Linear2d,
    LotkaVolterra,
    Lorenz,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    #[default]
    Zigzag,
    ZigzagLinear,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsName {
    Identity,
    Sum,
}

/// A named observation map or one prefix expression per observed channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObsSpec {
    Named(ObsName),
    Exprs(Vec<Expr>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Drift matrix of the linear scenarios, row-major.
    pub a: Option<Vec<Vec<f64>>>,
    pub alpha: Option<f64>,
    /// Lotka–Volterra `β` or Lorenz `β`, depending on the scenario.
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    /// Custom flow, one expression per state component.
    pub flow: Option<Vec<Expr>>,
    pub observation: Option<ObsSpec>,
    pub time_scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterParams {
    pub obs_kernel: Option<Kernel>,
    pub synthetic: Option<bool>,
    pub data_path: Option<PathBuf>,
    pub truth_path: Option<PathBuf>,
    pub dt_integrate: Option<f64>,
    pub dt_sim: Option<f64>,
    pub burn_in: Option<f64>,
    pub embedding: Option<Embedding>,
    pub select_order: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub model: ModelParams,
    pub z: Option<Vec<f64>>,
    pub kernel: Option<Kernel>,
    pub order: Option<usize>,
    pub obs_order: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub ensemble: Option<usize>,
    pub method: Option<SimMethod>,
    pub mode: Option<FlowMode>,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub blowup_bound: Option<f64>,
    pub radius: Option<f64>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub filter: FilterParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.message)
    }
}

/// Every problem found while resolving a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub Vec<FieldError>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration")?;
        for e in &self.0 {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn fields(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.field.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    LeastAction,
    Filter,
    LinearAnalysis,
}

pub const LINEAR2D_A: [[f64; 2]; 2] = [[-0.2, 0.1], [-0.1, -0.2]];
pub const LORENZ_FILTER_TIME_SCALE: f64 = 1.0 / 32.0;

/// Settings shared by every subcommand once defaults are applied.
#[derive(Debug, Clone)]
pub struct Common {
    pub model: ModelSpec,
    pub z: Vec<f64>,
    pub kernel: Kernel,
    pub order: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub blowup_bound: f64,
}

#[derive(Debug, Clone)]
pub struct SimulateSettings {
    pub common: Common,
    pub ensemble: usize,
    pub method: SimMethod,
}

#[derive(Debug, Clone)]
pub struct LeastActionSettings {
    pub common: Common,
    pub lambdas: Vec<f64>,
    pub mode: FlowMode,
}

#[derive(Debug, Clone)]
pub enum FilterData {
    Synthetic { dt_sim: f64, burn_in: f64 },
    File { data: PathBuf, truth: Option<PathBuf> },
}

#[derive(Debug, Clone)]
pub struct FilterSettings {
    pub common: Common,
    pub obs_order: usize,
    pub obs_kernel: Kernel,
    pub lambda: f64,
    pub mode: FlowMode,
    pub dt_integrate: f64,
    pub embedding: Embedding,
    pub data: FilterData,
    /// The configured `dt`, if any, preferred over the spacing read from a data file.
    pub dt_hint: Option<f64>,
    pub select_order: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct LinearSettings {
    pub common: Common,
    pub a: DMatrix<f64>,
    pub radius: Option<f64>,
}

/// Collects field errors while defaults are resolved.
struct Checker(Vec<FieldError>);

impl Checker {
    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(FieldError {
            field: field.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, field: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.fail(field, format!("must be a finite number > 0, got {v}"));
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(self.0))
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            ConfigError(vec![FieldError {
                field: "<document>".into(),
                message: e.to_string(),
            }])
        })
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        Ok(Self::from_json(&text)?)
    }

    pub fn resolve_simulate(&self) -> Result<SimulateSettings, ConfigError> {
        let mut c = Checker(Vec::new());
        let common = self.common(Command::Simulate, &mut c);
        let ensemble = self.ensemble.unwrap_or(1);
        if ensemble == 0 {
            c.fail("ensemble", "must be at least 1");
        }
        let method = self.method.unwrap_or_default();
        if let Some(common) = &common {
            if method == SimMethod::Euler {
                if !matches!(common.kernel.family, KernelFamily::Gaussian { .. }) {
                    c.fail("kernel.family", "method `euler` needs a gaussian kernel");
                }
                if common.t_end <= 0.0 {
                    c.fail("t_end", "method `euler` needs T > 0");
                }
            }
        }
        c.finish()?;
        Ok(SimulateSettings {
            common: common.expect("checked"),
            ensemble,
            method,
        })
    }

    pub fn resolve_least_action(&self) -> Result<LeastActionSettings, ConfigError> {
        let mut c = Checker(Vec::new());
        let common = self.common(Command::LeastAction, &mut c);
        let lambdas = match (&self.lambdas, self.lambda) {
            (Some(l), _) => l.clone(),
            (None, Some(l)) => vec![l],
            (None, None) => vec![1.0, 10.0, 100.0],
        };
        if lambdas.is_empty() {
            c.fail("lambdas", "needs at least one value");
        }
        for (i, &l) in lambdas.iter().enumerate() {
            if !(l >= 0.0 && l.is_finite()) {
                c.fail(&format!("lambdas[{i}]"), format!("must be finite and >= 0, got {l}"));
            }
        }
        if let Some(common) = &common {
            if common.t_end <= 0.0 {
                c.fail("t_end", "must be > 0");
            }
        }
        c.finish()?;
        Ok(LeastActionSettings {
            common: common.expect("checked"),
            lambdas,
            mode: self.mode.unwrap_or(FlowMode::Exact),
        })
    }

    pub fn resolve_filter(&self) -> Result<FilterSettings, ConfigError> {
        let mut c = Checker(Vec::new());
        let common = self.common(Command::Filter, &mut c);
        let lorenz = self.scenario == Scenario::Lorenz;
        let f = &self.filter;
        let order = common.as_ref().map_or(1, |cm| cm.order);
        let obs_order = self.obs_order.unwrap_or(order);
        let obs_kernel = match &f.obs_kernel {
            Some(k) => k.clone(),
            None => {
                let sigma = if lorenz { 0.5 } else { 1.0 };
                Kernel::gaussian(sigma)
                    .and_then(|k| k.with_variance_scale(0.01))
                    .expect("valid default kernel")
            }
        };
        if let Err(e) = obs_kernel.validate() {
            c.fail("filter.obs_kernel", e.to_string());
        }
        let lambda = self.lambda.unwrap_or(1.0);
        c.positive("lambda", lambda);
        let dt_integrate = f.dt_integrate.unwrap_or(if lorenz { 2.5e-4 } else { 1e-3 });
        c.positive("filter.dt_integrate", dt_integrate);
        let synthetic = f.synthetic.unwrap_or(f.data_path.is_none());
        let data = if synthetic {
            if f.data_path.is_some() {
                c.fail("filter.data_path", "cannot be combined with `synthetic: true`");
            }
            let dt_sim = f.dt_sim.unwrap_or(if lorenz { 0.01 } else { 1e-3 });
            c.positive("filter.dt_sim", dt_sim);
            let burn_in = f.burn_in.unwrap_or(if lorenz { 64.0 } else { 0.0 });
            if !(burn_in >= 0.0 && burn_in.is_finite()) {
                c.fail("filter.burn_in", format!("must be finite and >= 0, got {burn_in}"));
            }
            if let Some(cm) = &common {
                let ratio = cm.dt / dt_sim;
                if dt_sim > 0.0 && (ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-9 * ratio) {
                    c.fail("filter.dt_sim", format!("must divide dt = {}", cm.dt));
                }
                if !matches!(cm.kernel.family, KernelFamily::Gaussian { .. }) {
                    c.fail("kernel.family", "synthetic data needs a gaussian kernel");
                }
                if cm.t_end <= 0.0 {
                    c.fail("t_end", "must be > 0");
                }
            }
            if !matches!(obs_kernel.family, KernelFamily::Gaussian { .. }) {
                c.fail("filter.obs_kernel.family", "synthetic data needs a gaussian kernel");
            }
            FilterData::Synthetic { dt_sim, burn_in }
        } else {
            match &f.data_path {
                Some(p) => FilterData::File {
                    data: p.clone(),
                    truth: f.truth_path.clone(),
                },
                None => {
                    c.fail("filter.data_path", "required when `synthetic` is false");
                    FilterData::File {
                        data: PathBuf::new(),
                        truth: None,
                    }
                }
            }
        };
        if let Some(cands) = &f.select_order {
            if cands.is_empty() {
                c.fail("filter.select_order", "needs at least one candidate");
            }
            if cands.contains(&0) {
                c.fail("filter.select_order", "candidate orders must be >= 1");
            }
        }
        if let Some(cm) = &common {
            if cm.model.obs_dim() == 0 {
                c.fail("model.observation", "the filter needs an observation map");
            }
        }
        c.finish()?;
        Ok(FilterSettings {
            common: common.expect("checked"),
            obs_order,
            obs_kernel,
            lambda,
            mode: self.mode.unwrap_or(FlowMode::Linear),
            dt_integrate,
            embedding: f.embedding.unwrap_or_default(),
            data,
            dt_hint: self.dt,
            select_order: f.select_order.clone(),
        })
    }

    pub fn resolve_linear(&self) -> Result<LinearSettings, ConfigError> {
        let mut c = Checker(Vec::new());
        let common = self.common(Command::LinearAnalysis, &mut c);
        let a = common.as_ref().and_then(|cm| cm.model.linear_matrix().cloned());
        if common.is_some() && a.is_none() {
            c.fail("scenario", "linear-analysis needs linear1d or linear2d");
        }
        if let Some(r) = self.radius {
            c.positive("radius", r);
        }
        c.finish()?;
        let common = common.expect("checked");
        let radius = self.radius.or_else(|| common.kernel.analytic_half_radius());
        Ok(LinearSettings {
            common,
            a: a.expect("checked"),
            radius,
        })
    }

    fn default_order(&self, cmd: Command) -> usize {
        match cmd {
            Command::Simulate => 10,
            Command::LeastAction => 3,
            Command::Filter => 6,
            Command::LinearAnalysis => 12,
        }
    }

    fn default_dt(&self, cmd: Command) -> f64 {
        match cmd {
            Command::Simulate | Command::LinearAnalysis => 0.01,
            Command::LeastAction => 1e-3,
            Command::Filter if self.scenario == Scenario::Lorenz => 0.5,
            Command::Filter => 0.05,
        }
    }

    fn default_t_end(&self, cmd: Command) -> f64 {
        match cmd {
            Command::Simulate | Command::LinearAnalysis => 1.0,
            Command::LeastAction => 2.0,
            Command::Filter if self.scenario == Scenario::Lorenz => 768.0,
            Command::Filter => 20.0,
        }
    }

    fn default_z(&self) -> Option<Vec<f64>> {
        match self.scenario {
            Scenario::Linear1d => Some(vec![1.0]),
            Scenario::Linear2d => Some(vec![10.0, 10.0]),
            Scenario::LotkaVolterra => Some(vec![1.0, 1.0]),
            Scenario::Lorenz => Some(vec![1.0, 1.0, 1.0]),
            Scenario::Custom => None,
        }
    }

    fn default_kernel(&self, cmd: Command) -> Kernel {
        let sigma = if cmd == Command::Filter && self.scenario == Scenario::Lorenz {
            0.5
        } else {
            1.0
        };
        Kernel::gaussian(sigma).expect("valid default kernel")
    }

    fn common(&self, cmd: Command, c: &mut Checker) -> Option<Common> {
        let model = self.model_spec(cmd, c);
        let order = self.order.unwrap_or_else(|| self.default_order(cmd));
        if order == 0 {
            c.fail("order", "N must be at least 1");
        } else if order > gencoord::MAX_ORDER {
            c.fail("order", format!("N must be at most {}", gencoord::MAX_ORDER));
        }
        if let Some(m) = self.obs_order {
            if m > order {
                c.fail("obs_order", format!("M = {m} exceeds N = {order}"));
            }
        }
        let dt = self.dt.unwrap_or_else(|| self.default_dt(cmd));
        c.positive("dt", dt);
        let t_end = self.t_end.unwrap_or_else(|| self.default_t_end(cmd));
        if !(t_end >= 0.0 && t_end.is_finite()) {
            c.fail("t_end", format!("must be finite and >= 0, got {t_end}"));
        }
        let kernel = self.kernel.clone().unwrap_or_else(|| self.default_kernel(cmd));
        if let Err(e) = kernel.validate() {
            c.fail("kernel", e.to_string());
        }
        let blowup_bound = self.blowup_bound.unwrap_or(gencoord::integrate::DEFAULT_BLOWUP_BOUND);
        c.positive("blowup_bound", blowup_bound);
        let z = match self.z.clone().or_else(|| self.default_z()) {
            Some(z) => z,
            None => {
                c.fail("z", "required for the custom scenario");
                Vec::new()
            }
        };
        if z.iter().any(|v| !v.is_finite()) {
            c.fail("z", "entries must be finite");
        }
        let model = model?;
        if !z.is_empty() && z.len() != model.state_dim() {
            c.fail(
                "z",
                format!("has {} entries, the model state has {}", z.len(), model.state_dim()),
            );
        }
        if !c.0.is_empty() {
            return None;
        }
        Some(Common {
            model,
            z,
            kernel,
            order,
            dt,
            t_end,
            seed: self.seed.unwrap_or(0),
            blowup_bound,
        })
    }

    fn model_spec(&self, cmd: Command, c: &mut Checker) -> Option<ModelSpec> {
        let p = &self.model;
        let built = match self.scenario {
            Scenario::Linear1d | Scenario::Linear2d => {
                let rows = match &p.a {
                    Some(a) => a.clone(),
                    None if self.scenario == Scenario::Linear1d => vec![vec![-1.0]],
                    None => LINEAR2D_A.iter().map(|r| r.to_vec()).collect(),
                };
                let want = if self.scenario == Scenario::Linear1d { 1 } else { 2 };
                if rows.len() != want || rows.iter().any(|r| r.len() != want) {
                    c.fail("model.a", format!("must be a {want}x{want} matrix"));
                    return None;
                }
                let flat: Vec<f64> = rows.concat();
                ModelSpec::linear(DMatrix::from_row_slice(want, want, &flat)).map_err(|e| ("model.a", e))
            }
            Scenario::LotkaVolterra => ModelSpec::lotka_volterra(
                p.alpha.unwrap_or(1.0),
                p.beta.unwrap_or(0.5),
                p.gamma.unwrap_or(1.0),
                p.delta.unwrap_or(0.5),
            )
            .map_err(|e| ("model", e)),
            Scenario::Lorenz => ModelSpec::lorenz(
                p.sigma.unwrap_or(10.0),
                p.rho.unwrap_or(28.0),
                p.beta.unwrap_or(8.0 / 3.0),
            )
            .map_err(|e| ("model", e)),
            Scenario::Custom => match &p.flow {
                Some(flow) => ModelSpec::custom(flow.clone()).map_err(|e| ("model.flow", e)),
                None => {
                    c.fail("model.flow", "required for the custom scenario");
                    return None;
                }
            },
        };
        let mut model = match built {
            Ok(m) => m,
            Err((field, e)) => {
                c.fail(field, e.to_string());
                return None;
            }
        };
        let obs = p
            .observation
            .clone()
            .unwrap_or(ObsSpec::Named(if self.scenario == Scenario::Lorenz {
                ObsName::Sum
            } else {
                ObsName::Identity
            }));
        model = match obs {
            ObsSpec::Named(ObsName::Identity) => model.with_identity_obs(),
            ObsSpec::Named(ObsName::Sum) => model.with_sum_obs(),
            ObsSpec::Exprs(exprs) => match model.with_obs_map(exprs) {
                Ok(m) => m,
                Err(e) => {
                    c.fail("model.observation", e.to_string());
                    return None;
                }
            },
        };
        let scale = p
            .time_scale
            .unwrap_or(if cmd == Command::Filter && self.scenario == Scenario::Lorenz {
                LORENZ_FILTER_TIME_SCALE
            } else {
                1.0
            });
        if scale != 1.0 {
            model = match model.time_scaled(scale) {
                Ok(m) => m,
                Err(e) => {
                    c.fail("model.time_scale", e.to_string());
                    return None;
                }
            };
        }
        Some(model)
    }
}
