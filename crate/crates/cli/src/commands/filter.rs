use std::path::Path;

use gencoord::filter::{pseudo_inverse_estimate, rmse, select_order, synthesize, FilterRun, FilterTemplate};
use gencoord::{Execution, FlowMode};
use serde::Serialize;

use super::{fail_on_incidents, Incident, RunOptions};
use crate::config::{FilterData, FilterSettings, RunConfig};
use crate::output::{ensure_dir, fmt_f64, numbered, read_numeric_csv, write_json, Table, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize)]
pub struct FilterReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub order: usize,
    pub obs_order: usize,
    pub dt: f64,
    pub lambda: f64,
    pub mode: FlowMode,
    pub dt_integrate: f64,
    pub seed: u64,
    pub synthetic: bool,
    pub rows: usize,
    pub integrated_free_energy: f64,
    pub blowup_time: Option<f64>,
    pub step_error: f64,
    /// Latent-state RMSE of `μ^(0)` over the written rows.
    pub rmse: Option<f64>,
    /// RMSE of the observation pseudo-inverse applied per sample, over the same rows.
    pub baseline_rmse: Option<f64>,
    pub rmse_ratio: Option<f64>,
    pub chosen_order: Option<usize>,
    pub files: Vec<String>,
}

/// Observations sampled every `dt` from `t0`, with the latent states when known.
pub struct Series {
    pub t0: f64,
    pub dt: f64,
    pub observations: Vec<Vec<f64>>,
    pub truth: Option<Vec<Vec<f64>>>,
}

/// The sample spacing of `times`: `hint` when it fits the samples, the mean
/// spacing otherwise.
fn uniform_step(times: &[f64], hint: Option<f64>, what: &Path) -> anyhow::Result<f64> {
    if times.len() < 2 {
        anyhow::bail!("{}: needs at least two samples", what.display());
    }
    let mean = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(mean > 0.0) {
        anyhow::bail!("{}: times must increase", what.display());
    }
    for (k, &t) in times.iter().enumerate() {
        if (t - times[0] - k as f64 * mean).abs() > 1e-6 * mean {
            anyhow::bail!("{}: sample {k} is off the uniform grid of step {mean}", what.display());
        }
    }
    Ok(match hint {
        Some(dt) if (dt - mean).abs() <= 1e-6 * mean => dt,
        _ => mean,
    })
}

/// Reads `t, y_1..y_m` and optionally `t, x_1..x_d` on the same times.
pub fn read_series(
    data: &Path,
    truth: Option<&Path>,
    dt_hint: Option<f64>,
    m: usize,
    d: usize,
) -> anyhow::Result<Series> {
    let obs = read_numeric_csv(data)?;
    if obs.header.len() != m + 1 {
        anyhow::bail!(
            "{}: expected t and {m} observation columns, found {} columns",
            data.display(),
            obs.header.len()
        );
    }
    let times: Vec<f64> = obs.rows.iter().map(|r| r[0]).collect();
    let dt = uniform_step(&times, dt_hint, data)?;
    let truth = match truth {
        None => None,
        Some(p) => {
            let tr = read_numeric_csv(p)?;
            if tr.header.len() != d + 1 {
                anyhow::bail!(
                    "{}: expected t and {d} state columns, found {} columns",
                    p.display(),
                    tr.header.len()
                );
            }
            if tr.rows.len() != obs.rows.len() || tr.rows.iter().zip(&times).any(|(r, t)| (r[0] - t).abs() > 1e-6 * dt)
            {
                anyhow::bail!("{}: times differ from {}", p.display(), data.display());
            }
            Some(tr.rows.iter().map(|r| r[1..].to_vec()).collect())
        }
    };
    Ok(Series {
        t0: times[0],
        dt,
        observations: obs.rows.iter().map(|r| r[1..].to_vec()).collect(),
        truth,
    })
}

fn load_series(s: &FilterSettings, out: &Path, files: &mut Vec<String>) -> anyhow::Result<Series> {
    let c = &s.common;
    let (m, d) = (c.model.obs_dim(), c.model.state_dim());
    match &s.data {
        FilterData::File { data, truth } => read_series(data, truth.as_deref(), s.dt_hint, m, d),
        FilterData::Synthetic { dt_sim, burn_in } => {
            let syn = synthesize(
                &c.model,
                &c.kernel,
                &s.obs_kernel,
                &c.z,
                *dt_sim,
                c.dt,
                burn_in + c.t_end,
                c.seed,
            )?;
            let skip = ((burn_in / c.dt).round() as usize).min(syn.times.len());
            let observations = syn.observations[skip..].to_vec();
            let truth = syn.states[skip..].to_vec();
            let mut data_table = Table::new([vec!["t".to_string()], numbered("y", m)].concat());
            let mut truth_table = Table::new([vec!["t".to_string()], numbered("x", d)].concat());
            for (k, (y, x)) in observations.iter().zip(&truth).enumerate() {
                let t = k as f64 * c.dt;
                data_table.push_numbers(std::iter::once(t).chain(y.iter().copied()));
                truth_table.push_numbers(std::iter::once(t).chain(x.iter().copied()));
            }
            data_table.write(&out.join("data.csv"))?;
            truth_table.write(&out.join("truth.csv"))?;
            files.extend(["data.csv".to_string(), "truth.csv".to_string()]);
            Ok(Series {
                t0: 0.0,
                dt: c.dt,
                observations,
                truth: Some(truth),
            })
        }
    }
}

fn state_row_index(time: f64, dt: f64) -> usize {
    (time / dt).round() as usize
}

fn filter_table(run: &FilterRun, series: &Series, d: usize) -> anyhow::Result<Table> {
    let mut header = vec!["t".to_string()];
    header.extend(numbered("mu0", d));
    header.push("free_energy".into());
    if series.truth.is_some() {
        header.push("rmse".into());
    }
    let mut table = Table::new(header);
    for st in &run.states {
        let mu = st.mu.coord(0);
        let mut row: Vec<f64> = std::iter::once(series.t0 + st.time).chain(mu.iter().copied()).collect();
        row.push(st.free_energy);
        if let Some(truth) = &series.truth {
            let x = &truth[state_row_index(st.time, series.dt)];
            row.push(rmse(&[mu.to_vec()], std::slice::from_ref(x))?);
        }
        table.push_numbers(row);
    }
    Ok(table)
}

pub fn cmd_filter(config: &RunConfig, opts: &RunOptions) -> anyhow::Result<FilterReport> {
    let mut s = config.resolve_filter()?;
    if let Some(seed) = opts.seed {
        s.common.seed = seed;
    }
    let out = ensure_dir(&opts.out_dir(config))?;
    let mut files = Vec::new();
    let series = load_series(&s, &out, &mut files)?;
    let c = &s.common;
    let template = FilterTemplate {
        model: c.model.clone(),
        kernel_w: c.kernel.clone(),
        kernel_z: s.obs_kernel.clone(),
        lambda: s.lambda,
        mode: s.mode,
        embedding: s.embedding,
        dt_integrate: s.dt_integrate,
    };

    let (n, m, chosen) = match &s.select_order {
        None => (c.order, s.obs_order, None),
        Some(cands) => {
            let sel = select_order(&template, &series.observations, series.dt, cands, Execution::default())?;
            let mut table = Table::new(vec!["order".into(), "integrated_free_energy".into(), "status".into()]);
            for (order, score) in &sel.scores {
                let (value, status) = match score {
                    Ok(f) => (fmt_f64(*f), "ok".to_string()),
                    Err(e) => (String::new(), e.to_string()),
                };
                table.push_raw(vec![order.to_string(), value, status]);
            }
            table.write(&out.join("order_report.csv"))?;
            files.push("order_report.csv".into());
            (sel.chosen, sel.chosen, Some(sel.chosen))
        }
    };

    let run = template.run(&series.observations, series.dt, n, m, m)?;
    let d = c.model.state_dim();
    filter_table(&run, &series, d)?.write(&out.join("filter.csv"))?;
    files.push("filter.csv".into());

    let (mut filter_rmse, mut baseline_rmse) = (None, None);
    if let Some(truth) = &series.truth {
        if !run.states.is_empty() {
            let idx: Vec<usize> = run
                .states
                .iter()
                .map(|st| state_row_index(st.time, series.dt))
                .collect();
            let x: Vec<Vec<f64>> = idx.iter().map(|&i| truth[i].clone()).collect();
            let base: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| pseudo_inverse_estimate(&c.model, &series.observations[i]))
                .collect::<gencoord::Result<_>>()?;
            filter_rmse = Some(rmse(&run.means(), &x)?);
            baseline_rmse = Some(rmse(&base, &x)?);
        }
    }
    let report = FilterReport {
        schema_version: SCHEMA_VERSION,
        command: "filter",
        order: n,
        obs_order: m,
        dt: series.dt,
        lambda: s.lambda,
        mode: s.mode,
        dt_integrate: s.dt_integrate,
        seed: c.seed,
        synthetic: matches!(s.data, FilterData::Synthetic { .. }),
        rows: run.states.len(),
        integrated_free_energy: run.integrated_free_energy(),
        blowup_time: run.blowup_time,
        step_error: run.step_error,
        rmse: filter_rmse,
        baseline_rmse,
        rmse_ratio: filter_rmse.zip(baseline_rmse).map(|(a, b)| a / b),
        chosen_order: chosen,
        files,
    };
    write_json(&out.join("report.json"), &report)?;
    let incidents: Vec<Incident> = run
        .blowup_time
        .map(|t| Incident(format!("filter blew up at t = {}", series.t0 + t)))
        .into_iter()
        .collect();
    fail_on_incidents(&incidents, opts.allow_blowup)?;
    Ok(report)
}
