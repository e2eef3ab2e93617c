use gencoord::integrate::{euler_baseline_with_bound, uniform_grid};
use gencoord::{Execution, FlowMode, Trajectory, Zigzag};
use serde::Serialize;

use super::{fail_on_incidents, Incident, RunOptions};
use crate::config::{RunConfig, SimMethod};
use crate::output::{ensure_dir, numbered, write_json, Table, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize)]
pub struct MemberReport {
    pub index: usize,
    pub seed: u64,
    pub rows: usize,
    pub blowup_time: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub method: SimMethod,
    pub order: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub ensemble: usize,
    pub members: Vec<MemberReport>,
    pub files: Vec<String>,
}

/// Ensemble mean and variance per grid time over the members still running.
///
/// Variances use the `n - 1` divisor and are zero for a single member. Rows
/// stop at the last time any member reached.
pub fn ensemble_summary(grid: &[f64], trajectories: &[&Trajectory], d: usize) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend(numbered("mean", d));
    header.extend(numbered("var", d));
    let mut table = Table::new(header);
    for (k, &t) in grid.iter().enumerate() {
        let alive: Vec<&Vec<f64>> = trajectories.iter().filter_map(|tr| tr.states.get(k)).collect();
        if alive.is_empty() {
            break;
        }
        let n = alive.len() as f64;
        let mean: Vec<f64> = (0..d).map(|i| alive.iter().map(|s| s[i]).sum::<f64>() / n).collect();
        let var: Vec<f64> = (0..d)
            .map(|i| {
                if alive.len() < 2 {
                    0.0
                } else {
                    alive.iter().map(|s| (s[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1.0)
                }
            })
            .collect();
        table.push_numbers(std::iter::once(t).chain(mean).chain(var));
    }
    table
}

pub fn trajectory_table(traj: &Trajectory, d: usize) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", d));
    let mut table = Table::new(header);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        table.push_numbers(std::iter::once(*t).chain(s.iter().copied()));
    }
    table
}

pub fn cmd_simulate(config: &RunConfig, opts: &RunOptions) -> anyhow::Result<SimulateReport> {
    let s = config.resolve_simulate()?;
    let c = &s.common;
    let seed = opts.seed.unwrap_or(c.seed);
    let out = ensure_dir(&opts.out_dir(config))?;
    ensure_dir(&out.join("trajectories"))?;
    let grid = uniform_grid(c.dt, c.t_end)?;
    let exec = Execution::default();

    let results: Vec<gencoord::Result<Trajectory>> = match s.method {
        SimMethod::Zigzag | SimMethod::ZigzagLinear => {
            let mode = if s.method == SimMethod::Zigzag {
                FlowMode::Exact
            } else {
                FlowMode::Linear
            };
            Zigzag::new(c.model.clone(), &c.kernel, c.order, mode)?
                .with_blowup_bound(c.blowup_bound)
                .ensemble(&c.z, &grid, seed, s.ensemble, exec)
        }
        SimMethod::Euler => exec.map_indices(s.ensemble, |i| {
            euler_baseline_with_bound(
                &c.model,
                &c.z,
                &c.kernel,
                c.dt,
                c.t_end,
                seed.wrapping_add(i as u64),
                c.blowup_bound,
            )
        }),
    };

    let d = c.model.state_dim();
    let width = s.ensemble.saturating_sub(1).to_string().len().max(4);
    let mut members = Vec::with_capacity(s.ensemble);
    let mut files = Vec::new();
    let mut finished = Vec::new();
    let mut incidents = Vec::new();
    for (i, r) in results.iter().enumerate() {
        let member_seed = seed.wrapping_add(i as u64);
        match r {
            Ok(traj) => {
                let name = format!("trajectories/member_{i:0width$}.csv");
                trajectory_table(traj, d).write(&out.join(&name))?;
                files.push(name);
                if let Some(t) = traj.blowup_time {
                    incidents.push(Incident(format!("member {i} blew up at t = {t}")));
                }
                members.push(MemberReport {
                    index: i,
                    seed: member_seed,
                    rows: traj.times.len(),
                    blowup_time: traj.blowup_time,
                    error: None,
                });
                finished.push(traj);
            }
            Err(e) => {
                incidents.push(Incident(format!("member {i} failed: {e}")));
                members.push(MemberReport {
                    index: i,
                    seed: member_seed,
                    rows: 0,
                    blowup_time: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    ensemble_summary(&grid, &finished, d).write(&out.join("summary.csv"))?;
    files.push("summary.csv".into());

    let report = SimulateReport {
        schema_version: SCHEMA_VERSION,
        command: "simulate",
        method: s.method,
        order: c.order,
        dt: c.dt,
        t_end: c.t_end,
        seed,
        ensemble: s.ensemble,
        members,
        files,
    };
    write_json(&out.join("run.json"), &report)?;
    fail_on_incidents(&incidents, opts.allow_blowup)?;
    Ok(report)
}
