use gencoord::action::{regularized_descent, Descent, DescentOptions, LagrangianContext};
use gencoord::integrate::rk4_path;
use gencoord::{build_gen_cov, Execution, ModelSpec};
use nalgebra::DVector;
use serde::Serialize;

use super::{fail_on_incidents, Incident, RunOptions};
use crate::config::RunConfig;
use crate::output::{ensure_dir, fmt_f64, numbered, write_json, Table, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize)]
pub struct LambdaReport {
    pub lambda: f64,
    pub file: String,
    /// Largest `max_i |x_i − ref_i|` over the written rows.
    pub sup_deviation: f64,
    pub final_lagrangian: Option<f64>,
    pub blowup_time: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LeastActionReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub order: usize,
    pub dt: f64,
    pub t_end: f64,
    /// `expm` for linear flows, RK4 of the noise-free flow otherwise.
    pub reference: &'static str,
    pub runs: Vec<LambdaReport>,
}

/// The noise-free path from `z` at every grid time: `exp(At) z` for linear
/// flows and RK4 on the same grid otherwise.
pub fn reference_path(model: &ModelSpec, z: &[f64], dt: f64, times: &[f64]) -> anyhow::Result<Vec<Vec<f64>>> {
    if let Some(a) = model.linear_matrix() {
        let z = DVector::from_column_slice(z);
        return Ok(times
            .iter()
            .map(|&t| ((a * t).exp() * &z).as_slice().to_vec())
            .collect());
    }
    let t_end = times.last().copied().unwrap_or(0.0);
    let mut path = rk4_path(model, z, dt, t_end)?;
    path.truncate(times.len());
    Ok(path)
}

fn descent_table(run: &Descent, reference: &[Vec<f64>], d: usize) -> (Table, f64) {
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", d));
    header.push("lagrangian".into());
    header.extend(numbered("ref", d));
    header.push("err".into());
    let mut table = Table::new(header);
    let mut sup = 0.0f64;
    let traj = &run.trajectory;
    for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        let r = &reference[k];
        let err = x.iter().zip(r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        sup = sup.max(err);
        let row = std::iter::once(*t)
            .chain(x.iter().copied())
            .chain(std::iter::once(run.lagrangian[k]))
            .chain(r.iter().copied())
            .chain(std::iter::once(err));
        table.push_numbers(row);
    }
    (table, sup)
}

pub fn cmd_least_action(config: &RunConfig, opts: &RunOptions) -> anyhow::Result<LeastActionReport> {
    let s = config.resolve_least_action()?;
    let c = &s.common;
    let out = ensure_dir(&opts.out_dir(config))?;
    let cov = build_gen_cov(&c.kernel, c.order, c.model.state_dim())?;
    let ctx = LagrangianContext::new(c.model.clone(), cov, s.mode)?;
    let runs: Vec<gencoord::Result<Descent>> = Execution::default().map_slice(&s.lambdas, |&lambda| {
        let mut o = DescentOptions::new(lambda, c.dt, c.t_end);
        o.blowup_bound = c.blowup_bound;
        regularized_descent(&ctx, &c.z, &o)
    });

    let d = c.model.state_dim();
    let mut reports = Vec::new();
    let mut incidents = Vec::new();
    for (&lambda, run) in s.lambdas.iter().zip(runs) {
        let run = run?;
        let reference = reference_path(&c.model, &c.z, c.dt, &run.trajectory.times)?;
        let (table, sup) = descent_table(&run, &reference, d);
        let file = format!("least_action_lambda_{}.csv", fmt_f64(lambda));
        table.write(&out.join(&file))?;
        if let Some(t) = run.trajectory.blowup_time {
            incidents.push(Incident(format!("lambda = {lambda} blew up at t = {t}")));
        }
        reports.push(LambdaReport {
            lambda,
            file,
            sup_deviation: sup,
            final_lagrangian: run.lagrangian.last().copied(),
            blowup_time: run.trajectory.blowup_time,
        });
    }
    let report = LeastActionReport {
        schema_version: SCHEMA_VERSION,
        command: "least-action",
        order: c.order,
        dt: c.dt,
        t_end: c.t_end,
        reference: if c.model.linear_matrix().is_some() {
            "expm"
        } else {
            "rk4"
        },
        runs: reports,
    };
    write_json(&out.join("run.json"), &report)?;
    fail_on_incidents(&incidents, opts.allow_blowup)?;
    Ok(report)
}
