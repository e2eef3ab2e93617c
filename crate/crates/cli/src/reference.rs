//! The configuration reference page, rendered from the table below.

use crate::output::SCHEMA_VERSION;

pub struct FieldDoc {
    pub name: &'static str,
    pub kind: &'static str,
    pub default: &'static str,
    pub description: &'static str,
}

pub const FIELDS: &[FieldDoc] = &[
    FieldDoc {
        name: "scenario",
        kind: "string",
        default: "required",
        description: "One of `linear1d`, `linear2d`, `lotka_volterra`, `lorenz`, `custom`.",
    },
    FieldDoc {
        name: "model.a",
        kind: "matrix (rows)",
        default: "linear1d: `[[-1]]`; linear2d: `[[-0.2, 0.1], [-0.1, -0.2]]`",
        description: "Drift matrix of `f(x) = A x`.",
    },
    FieldDoc {
        name: "model.alpha, model.beta, model.gamma, model.delta",
        kind: "number",
        default: "1, 0.5, 1, 0.5",
        description: "Lotka–Volterra rates in `ẋ = αx − βxy`, `ẏ = δxy − γy`.",
    },
    FieldDoc {
        name: "model.sigma, model.rho, model.beta",
        kind: "number",
        default: "10, 28, 8/3",
        description: "Lorenz parameters.",
    },
    FieldDoc {
        name: "model.flow",
        kind: "list of expressions",
        default: "required for `custom`",
        description: "One prefix expression per state component, e.g. `(sub (scale 2 x0) (mul x0 x1))`.",
    },
    FieldDoc {
        name: "model.observation",
        kind: "`\"identity\"`, `\"sum\"` or list of expressions",
        default: "lorenz: `sum`; otherwise `identity`",
        description: "Observation map `g`.",
    },
    FieldDoc {
        name: "model.time_scale",
        kind: "number",
        default: "filter with lorenz: 0.03125; otherwise 1",
        description: "Multiplies the flow, running the dynamics that many times faster.",
    },
    FieldDoc {
        name: "z",
        kind: "list of numbers",
        default: "linear1d: `[1]`; linear2d: `[10, 10]`; lotka_volterra: `[1, 1]`; lorenz: `[1, 1, 1]`; required for `custom`",
        description: "Initial state.",
    },
    FieldDoc {
        name: "kernel",
        kind: "kernel object",
        default: "`{\"family\": \"gaussian\", \"sigma\": 1}`; filter with lorenz: sigma 0.5",
        description: "State-noise autocovariance. Families: `gaussian` (`sigma`), `square_rational`, `custom_series` (`coefficients`, `radius`, default 0.5). Optional `variance_scale` (default 1).",
    },
    FieldDoc {
        name: "order",
        kind: "integer ≥ 1",
        default: "simulate: 10; least-action: 3; filter: 6; linear-analysis: 12",
        description: "Highest order N of the generalized state.",
    },
    FieldDoc {
        name: "obs_order",
        kind: "integer ≤ order",
        default: "order",
        description: "Highest order M of the embedded observations (filter).",
    },
    FieldDoc {
        name: "dt",
        kind: "number > 0",
        default: "simulate, linear-analysis: 0.01; least-action: 0.001; filter: 0.5 for lorenz, 0.05 otherwise",
        description: "Output grid step. For the filter this is the observation interval.",
    },
    FieldDoc {
        name: "t_end",
        kind: "number ≥ 0",
        default: "simulate, linear-analysis: 1; least-action: 2; filter: 768 for lorenz, 20 otherwise",
        description: "Final time T. Must be > 0 for least-action, the filter and the Euler method.",
    },
    FieldDoc {
        name: "seed",
        kind: "integer",
        default: "0",
        description: "Base seed. Ensemble member i uses seed + i. Overridden by `--seed`.",
    },
    FieldDoc {
        name: "ensemble",
        kind: "integer ≥ 1",
        default: "1",
        description: "Number of trajectories (simulate).",
    },
    FieldDoc {
        name: "method",
        kind: "string",
        default: "`zigzag`",
        description: "`zigzag`, `zigzag_linear` or `euler` (simulate).",
    },
    FieldDoc {
        name: "mode",
        kind: "string",
        default: "least-action: `exact`; filter: `linear`",
        description: "Generalized flow: `exact` or `linear` (local linear approximation).",
    },
    FieldDoc {
        name: "lambda",
        kind: "number",
        default: "1",
        description: "Gradient weight λ of the filter, or a single least-action weight.",
    },
    FieldDoc {
        name: "lambdas",
        kind: "list of numbers",
        default: "`[1, 10, 100]`",
        description: "Least-action sweep. Each run needs λ·dt ≤ 0.5.",
    },
    FieldDoc {
        name: "blowup_bound",
        kind: "number > 0",
        default: "1e6",
        description: "A trajectory stops when a state component exceeds this in magnitude.",
    },
    FieldDoc {
        name: "radius",
        kind: "number > 0",
        default: "half the kernel's radius of analyticity (absent for gaussian)",
        description: "R in the convergence radius R / max(1, ‖A‖∞, ‖Aᵀ‖∞) (linear-analysis).",
    },
    FieldDoc {
        name: "output",
        kind: "path",
        default: "`out`",
        description: "Output directory. Overridden by `--out`.",
    },
    FieldDoc {
        name: "filter.obs_kernel",
        kind: "kernel object",
        default: "gaussian with sigma 0.5 for lorenz and 1 otherwise, `variance_scale` 0.01",
        description: "Observation-noise autocovariance.",
    },
    FieldDoc {
        name: "filter.synthetic",
        kind: "boolean",
        default: "true unless `data_path` is set",
        description: "Simulate data from the configured model and kernels.",
    },
    FieldDoc {
        name: "filter.data_path, filter.truth_path",
        kind: "path",
        default: "none",
        description: "CSV files `t, y_1..y_m` and `t, x_1..x_d` on a uniform time grid.",
    },
    FieldDoc {
        name: "filter.dt_integrate",
        kind: "number > 0",
        default: "lorenz: 2.5e-4; otherwise 1e-3",
        description: "Euler step of the filter dynamics.",
    },
    FieldDoc {
        name: "filter.dt_sim",
        kind: "number > 0",
        default: "lorenz: 0.01; otherwise 1e-3",
        description: "Euler step of the synthetic data; must divide `dt`.",
    },
    FieldDoc {
        name: "filter.burn_in",
        kind: "number ≥ 0",
        default: "lorenz: 64; otherwise 0",
        description: "Synthetic time discarded before the first observation.",
    },
    FieldDoc {
        name: "filter.embedding",
        kind: "string",
        default: "`inverse_taylor`",
        description: "`inverse_taylor` or `finite_diff`.",
    },
    FieldDoc {
        name: "filter.select_order",
        kind: "list of integers",
        default: "none",
        description: "Candidate orders, run with M = N. The one with the smallest integrated free energy is used.",
    },
];

const OUTPUTS: &[(&str, &str, &str)] = &[
    ("simulate", "trajectories/member_NNNN.csv", "t, x_1..x_d"),
    ("simulate", "summary.csv", "t, mean_1..mean_d, var_1..var_d"),
    (
        "least-action",
        "least_action_lambda_<λ>.csv",
        "t, x_1..x_d, lagrangian, ref_1..ref_d, err",
    ),
    ("filter", "filter.csv", "t, mu0_1..mu0_d, free_energy[, rmse]"),
    (
        "filter",
        "data.csv, truth.csv",
        "t, y_1..y_m and t, x_1..x_d (synthetic runs)",
    ),
    ("filter", "order_report.csv", "order, integrated_free_energy, status"),
    (
        "linear-analysis",
        "linear_analysis.csv",
        "t, mean_1..mean_d, var_11..var_dd, var_ij (i < j)",
    ),
];

pub fn render() -> String {
    let mut s = String::new();
    s.push_str("# Run configuration reference\n\n");
    s.push_str("Generated by `gencoord config-reference`. Do not edit by hand.\n\n");
    s.push_str("Each run reads one JSON document. Only `scenario` is required; every other field falls back to the default below.\n\n");
    s.push_str("| field | type | default | description |\n|---|---|---|---|\n");
    for f in FIELDS {
        s.push_str(&format!(
            "| `{}` | {} | {} | {} |\n",
            f.name, f.kind, f.default, f.description
        ));
    }
    s.push_str(&format!("\n## Outputs (schema version {SCHEMA_VERSION})\n\n"));
    s.push_str("| subcommand | file | columns |\n|---|---|---|\n");
    for (cmd, file, cols) in OUTPUTS {
        s.push_str(&format!("| {cmd} | `{file}` | {cols} |\n"));
    }
    s.push_str(
        "\nEvery subcommand also writes `run.json` or `report.json` with the resolved settings and diagnostics.\n",
    );
    s
}
