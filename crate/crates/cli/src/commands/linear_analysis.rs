use gencoord::integrate::uniform_grid;
use gencoord::linear::radius_divisor;
use gencoord::{convergence_radius, linear_cov, linear_mean, LinearModel};
use nalgebra::DVector;
use serde::Serialize;

use super::RunOptions;
use crate::config::RunConfig;
use crate::output::{ensure_dir, numbered, write_json, Table, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize)]
pub struct LinearReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub order: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Half the radius of analyticity of the kernel, `None` for entire kernels
    /// unless configured.
    pub radius: Option<f64>,
    /// `max(1, ‖A‖∞, ‖A^T‖∞)`.
    pub divisor: f64,
    /// `R / divisor`: the time horizon within which the order-`N` statistics
    /// converge as `N` grows. `None` means unbounded.
    pub convergence_radius: Option<f64>,
    pub file: String,
}

/// Column names `var_ii` for every component, then `var_ij` for `i < j`.
pub fn covariance_columns(d: usize) -> Vec<(usize, usize)> {
    let mut cols: Vec<(usize, usize)> = (0..d).map(|i| (i, i)).collect();
    for i in 0..d {
        for j in i + 1..d {
            cols.push((i, j));
        }
    }
    cols
}

pub fn cmd_linear_analysis(config: &RunConfig, opts: &RunOptions) -> anyhow::Result<LinearReport> {
    let s = config.resolve_linear()?;
    let c = &s.common;
    let out = ensure_dir(&opts.out_dir(config))?;
    let lm = LinearModel::new(s.a.clone(), DVector::from_column_slice(&c.z), c.kernel.clone())?;
    let d = lm.dim();
    let cols = covariance_columns(d);
    let mut header = vec!["t".to_string()];
    header.extend(numbered("mean", d));
    header.extend(cols.iter().map(|(i, j)| format!("var_{}{}", i + 1, j + 1)));
    let mut table = Table::new(header);
    for t in uniform_grid(c.dt, c.t_end)? {
        let mean = linear_mean(&lm, c.order, t);
        let cov = linear_cov(&lm, c.order, t, t)?;
        let row = std::iter::once(t)
            .chain(mean.iter().copied())
            .chain(cols.iter().map(|&(i, j)| cov[(i, j)]));
        table.push_numbers(row);
    }
    let file = "linear_analysis.csv".to_string();
    table.write(&out.join(&file))?;
    let report = LinearReport {
        schema_version: SCHEMA_VERSION,
        command: "linear-analysis",
        order: c.order,
        dt: c.dt,
        t_end: c.t_end,
        radius: s.radius,
        divisor: radius_divisor(&s.a),
        convergence_radius: s.radius.map(|r| convergence_radius(&s.a, r)).transpose()?,
        file,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
