use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gencoord_cli::output::{read_numeric_csv, NumericCsv};
use gencoord_cli::{
    cmd_filter, cmd_least_action, cmd_linear_analysis, cmd_simulate, reference, ConfigError, RunConfig, RunOptions,
};
use tempfile::TempDir;

fn config(json: &str) -> RunConfig {
    RunConfig::from_json(json).unwrap()
}

fn opts(dir: &Path) -> RunOptions {
    RunOptions {
        out: Some(dir.to_path_buf()),
        ..Default::default()
    }
}

fn config_error(err: anyhow::Error) -> ConfigError {
    err.downcast::<ConfigError>().expect("a configuration error")
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(csv_files(&p));
        } else if p.extension().is_some_and(|e| e == "csv") {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn numbered(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}_{i}")).collect()
}

fn header(parts: &[&[String]]) -> Vec<String> {
    parts.concat()
}

fn s(v: &str) -> Vec<String> {
    vec![v.to_string()]
}

#[test]
fn linear1d_simulate_writes_one_csv_per_member_and_a_summary() {
    let dir = TempDir::new().unwrap();
    let cfg =
        config(r#"{"scenario": "linear1d", "method": "zigzag", "order": 10, "ensemble": 8, "t_end": 0.5, "seed": 3}"#);
    let report = cmd_simulate(&cfg, &opts(dir.path())).unwrap();
    let traj: Vec<PathBuf> = csv_files(&dir.path().join("trajectories"));
    assert_eq!(traj.len(), 8);
    let trajectories: Vec<NumericCsv> = traj.iter().map(|p| read_numeric_csv(p).unwrap()).collect();
    for t in &trajectories {
        assert_eq!(t.header, header(&[&s("t"), &numbered("x", 1)]));
        assert_eq!(t.rows.len(), 51);
        assert_eq!(t.rows[0], vec![0.0, 1.0]);
    }
    let summary = read_numeric_csv(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.header, vec!["t", "mean_1", "var_1"]);
    let k = 30;
    let values: Vec<f64> = trajectories.iter().map(|t| t.rows[k][1]).collect();
    let mean = values.iter().sum::<f64>() / 8.0;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0;
    assert!((summary.rows[k][1] - mean).abs() < 1e-12);
    assert!((summary.rows[k][2] - var).abs() < 1e-12);
    assert_eq!(
        report.members.iter().map(|m| m.seed).collect::<Vec<_>>(),
        (3..11).collect::<Vec<u64>>()
    );
    assert!(dir.path().join("run.json").exists());
}

#[test]
fn single_member_at_time_zero_is_the_initial_condition() {
    let dir = TempDir::new().unwrap();
    let cfg = config(r#"{"scenario": "lorenz", "z": [1.5, -2.0, 20.0], "ensemble": 1, "t_end": 0.0}"#);
    cmd_simulate(&cfg, &opts(dir.path())).unwrap();
    let t = read_numeric_csv(&dir.path().join("trajectories/member_0000.csv")).unwrap();
    assert_eq!(t.rows, vec![vec![0.0, 1.5, -2.0, 20.0]]);
    let summary = read_numeric_csv(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.rows, vec![vec![0.0, 1.5, -2.0, 20.0, 0.0, 0.0, 0.0]]);
}

#[test]
fn euler_and_zigzag_summaries_are_comparable() {
    let shared = |method: &str| {
        format!(
            r#"{{"scenario": "lorenz", "method": "{method}", "ensemble": 4, "dt": 0.001, "t_end": 0.1, "seed": 9}}"#
        )
    };
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    cmd_simulate(&config(&shared("euler")), &opts(a.path())).unwrap();
    cmd_simulate(&config(&shared("zigzag")), &opts(b.path())).unwrap();
    let sa = read_numeric_csv(&a.path().join("summary.csv")).unwrap();
    let sb = read_numeric_csv(&b.path().join("summary.csv")).unwrap();
    assert_eq!(sa.header, sb.header);
    assert_eq!(sa.column("t"), sb.column("t"));
    // Both start at (1,1,1) and should stay close over a short horizon.
    let (ea, eb) = (sa.rows.last().unwrap(), sb.rows.last().unwrap());
    for i in 1..=3 {
        assert!(
            (ea[i] - eb[i]).abs() < 0.5 * eb[i].abs().max(1.0),
            "mean_{i}: {} vs {}",
            ea[i],
            eb[i]
        );
    }
}

#[test]
fn zigzag_linear_shares_noise_with_zigzag_for_linear_models() {
    let run = |method: &str| {
        let dir = TempDir::new().unwrap();
        let cfg = config(&format!(
            r#"{{"scenario": "linear2d", "method": "{method}", "ensemble": 2, "t_end": 0.2, "seed": 4}}"#
        ));
        cmd_simulate(&cfg, &opts(dir.path())).unwrap();
        read_numeric_csv(&dir.path().join("summary.csv")).unwrap()
    };
    let (exact, linear) = (run("zigzag"), run("zigzag_linear"));
    for (a, b) in exact.rows.iter().zip(&linear.rows) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn validation_reports_every_bad_field() {
    let cfg = config(r#"{"scenario": "linear1d", "dt": -1.0, "order": 0, "ensemble": 0, "t_end": -2.0}"#);
    let err = config_error(cmd_simulate(&cfg, &RunOptions::default()).unwrap_err());
    let fields = err.fields();
    for f in ["dt", "order", "ensemble", "t_end"] {
        assert!(fields.contains(&f), "{f} missing from {fields:?}");
    }
    assert!(err.to_string().contains("field `dt`"));

    let cfg = config(r#"{"scenario": "lorenz", "order": 2, "obs_order": 3}"#);
    let err = cfg.resolve_filter().unwrap_err();
    assert_eq!(err.fields(), vec!["obs_order"]);

    let cfg = config(r#"{"scenario": "custom"}"#);
    let err = cfg.resolve_simulate().unwrap_err();
    assert!(err.fields().contains(&"model.flow") && err.fields().contains(&"z"));

    let cfg = config(r#"{"scenario": "linear2d", "z": [1.0]}"#);
    assert_eq!(cfg.resolve_simulate().unwrap_err().fields(), vec!["z"]);

    let cfg = config(r#"{"scenario": "lotka_volterra"}"#);
    assert_eq!(cfg.resolve_linear().unwrap_err().fields(), vec!["scenario"]);

    let cfg = config(r#"{"scenario": "linear1d", "method": "euler", "kernel": {"family": "square_rational"}}"#);
    assert_eq!(cfg.resolve_simulate().unwrap_err().fields(), vec!["kernel.family"]);
}

#[test]
fn unknown_fields_and_bad_expressions_are_rejected() {
    let err = RunConfig::from_json(r#"{"scenario": "linear1d", "dtt": 0.1}"#).unwrap_err();
    assert!(err.to_string().contains("dtt"));
    assert!(RunConfig::from_json(r#"{"scenario": "custom", "model": {"flow": ["(add x0"]}, "z": [0]}"#).is_err());
    let cfg = config(r#"{"scenario": "custom", "model": {"flow": ["(add x0 x3)"]}, "z": [0]}"#);
    assert_eq!(cfg.resolve_simulate().unwrap_err().fields(), vec!["model.flow"]);
}

#[test]
fn blowup_fails_the_run_unless_allowed() {
    let json = r#"{"scenario": "linear1d", "model": {"a": [[3.0]]}, "blowup_bound": 5.0, "t_end": 1.0, "ensemble": 2}"#;
    let dir = TempDir::new().unwrap();
    let err = cmd_simulate(&config(json), &opts(dir.path())).unwrap_err();
    assert!(err.to_string().contains("blew up"), "{err}");
    assert!(dir.path().join("summary.csv").exists());

    let mut o = opts(dir.path());
    o.allow_blowup = true;
    let report = cmd_simulate(&config(json), &o).unwrap();
    for m in &report.members {
        let t = m.blowup_time.expect("recorded blow-up");
        assert!(t > 0.0 && t < 1.0);
        assert_eq!(m.rows, (t / 0.01).round() as usize);
    }
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert!(run["members"][0]["blowup_time"].is_number());
}

#[test]
fn seed_flag_overrides_config() {
    let json = r#"{"scenario": "linear1d", "seed": 1, "t_end": 0.1}"#;
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mut o = opts(a.path());
    o.seed = Some(42);
    let report = cmd_simulate(&config(json), &o).unwrap();
    assert_eq!(report.seed, 42);
    cmd_simulate(
        &config(r#"{"scenario": "linear1d", "seed": 42, "t_end": 0.1}"#),
        &opts(b.path()),
    )
    .unwrap();
    let read = |d: &TempDir| fs::read(d.path().join("trajectories/member_0000.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn least_action_sweep_writes_reference_and_error_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = config(r#"{"scenario": "linear2d", "lambdas": [1.0, 10.0, 100.0], "t_end": 1.0}"#);
    let report = cmd_least_action(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(report.reference, "expm");
    assert_eq!(report.runs.len(), 3);
    let want = header(&[
        &s("t"),
        &numbered("x", 2),
        &s("lagrangian"),
        &numbered("ref", 2),
        &s("err"),
    ]);
    for run in &report.runs {
        let t = read_numeric_csv(&dir.path().join(&run.file)).unwrap();
        assert_eq!(t.header, want);
        assert_eq!(t.rows.len(), 1001);
        assert_eq!(&t.rows[0][..3], &[0.0, 10.0, 10.0]);
        for r in &t.rows {
            let err = (r[1] - r[4]).abs().max((r[2] - r[5]).abs());
            assert_eq!(r[6], err);
        }
        let sup = t.column("err").unwrap().into_iter().fold(0.0, f64::max);
        assert_eq!(sup, run.sup_deviation);
    }
    let dev: Vec<f64> = report.runs.iter().map(|r| r.sup_deviation).collect();
    assert!(dev[0] > dev[1] && dev[1] > dev[2], "{dev:?}");
}

#[test]
fn least_action_single_lambda_and_nonlinear_reference() {
    let dir = TempDir::new().unwrap();
    let cfg = config(r#"{"scenario": "lotka_volterra", "lambda": 10.0, "t_end": 0.5}"#);
    let report = cmd_least_action(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(report.reference, "rk4");
    assert_eq!(report.runs.len(), 1);
    assert_eq!(csv_files(dir.path()).len(), 1);
    assert!(report.runs[0].sup_deviation < 0.05, "{}", report.runs[0].sup_deviation);

    let cfg = config(r#"{"scenario": "linear2d", "lambdas": [1000.0]}"#);
    assert!(cmd_least_action(&cfg, &opts(dir.path())).is_err());
}

#[test]
fn linear_analysis_table_starts_at_the_initial_condition() {
    let dir = TempDir::new().unwrap();
    let cfg = config(r#"{"scenario": "linear2d", "order": 12, "t_end": 1.0, "dt": 0.1}"#);
    let report = cmd_linear_analysis(&cfg, &opts(dir.path())).unwrap();
    let t = read_numeric_csv(&dir.path().join("linear_analysis.csv")).unwrap();
    assert_eq!(t.header, vec!["t", "mean_1", "mean_2", "var_11", "var_22", "var_12"]);
    assert_eq!(t.rows[0], vec![0.0, 10.0, 10.0, 0.0, 0.0, 0.0]);
    assert_eq!(t.rows.len(), 11);
    for r in &t.rows[1..] {
        assert!(r[3] > 0.0 && r[4] > 0.0);
        assert!(r[5] * r[5] <= r[3] * r[4] * (1.0 + 1e-12));
    }
    assert_eq!(report.radius, None);
    assert_eq!(report.convergence_radius, None);
}

#[test]
fn linear_analysis_reports_radius_over_norm() {
    let dir = TempDir::new().unwrap();
    let cfg =
        config(r#"{"scenario": "linear2d", "model": {"a": [[-2.0, 1.0], [0.5, -1.0]]}, "radius": 0.6, "t_end": 0.1}"#);
    let report = cmd_linear_analysis(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(report.divisor, 3.0);
    assert!((report.convergence_radius.unwrap() - 0.2).abs() < 1e-15);

    let cfg = config(r#"{"scenario": "linear1d", "kernel": {"family": "square_rational"}, "order": 4, "t_end": 0.1}"#);
    let report = cmd_linear_analysis(&cfg, &opts(dir.path())).unwrap();
    assert_eq!(report.radius, Some(0.5));
    assert_eq!(report.convergence_radius, Some(0.5));
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) {
    let mut text = format!("{header}\n");
    for r in rows {
        text.push_str(&r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

#[test]
fn filter_from_file_has_rmse_only_with_truth() {
    let dir = TempDir::new().unwrap();
    let synth = dir.path().join("synth");
    let cfg = config(r#"{"scenario": "linear1d", "model": {"a": [[-0.5]]}, "order": 2, "t_end": 5.0, "seed": 5}"#);
    let report = cmd_filter(&cfg, &opts(&synth)).unwrap();
    assert!(report.synthetic && report.rmse.is_some());
    let data = read_numeric_csv(&synth.join("data.csv")).unwrap();
    assert_eq!(data.header, vec!["t", "y_1"]);

    // Shift the clock to check that output times follow the file.
    let shifted: Vec<Vec<f64>> = data.rows.iter().map(|r| vec![r[0] + 10.0, r[1]]).collect();
    let data_path = dir.path().join("obs.csv");
    write_csv(&data_path, "t,y_1", &shifted);
    let json = format!(
        r#"{{"scenario": "linear1d", "model": {{"a": [[-0.5]]}}, "order": 2, "dt": 0.05, "filter": {{"data_path": {:?}}}}}"#,
        data_path.display().to_string()
    );
    let out = dir.path().join("file");
    let from_file = cmd_filter(&config(&json), &opts(&out)).unwrap();
    assert!(!from_file.synthetic && from_file.rmse.is_none());
    let table = read_numeric_csv(&out.join("filter.csv")).unwrap();
    assert_eq!(table.header, vec!["t", "mu0_1", "free_energy"]);
    let original = read_numeric_csv(&synth.join("filter.csv")).unwrap();
    assert_eq!(table.rows.len(), original.rows.len());
    for (a, b) in table.rows.iter().zip(&original.rows) {
        assert!((a[0] - b[0] - 10.0).abs() < 1e-9);
        assert_eq!(a[1], b[1]);
    }

    let truth = read_numeric_csv(&synth.join("truth.csv")).unwrap();
    let truth_path = dir.path().join("truth.csv");
    let shifted: Vec<Vec<f64>> = truth.rows.iter().map(|r| vec![r[0] + 10.0, r[1]]).collect();
    write_csv(&truth_path, "t,x_1", &shifted);
    let json = format!(
        r#"{{"scenario": "linear1d", "model": {{"a": [[-0.5]]}}, "order": 2, "dt": 0.05, "filter": {{"data_path": {:?}, "truth_path": {:?}}}}}"#,
        data_path.display().to_string(),
        truth_path.display().to_string()
    );
    let out = dir.path().join("truth");
    let with_truth = cmd_filter(&config(&json), &opts(&out)).unwrap();
    assert_eq!(with_truth.rmse, report.rmse);
    let table = read_numeric_csv(&out.join("filter.csv")).unwrap();
    assert_eq!(table.header, vec!["t", "mu0_1", "free_energy", "rmse"]);
}

#[test]
fn filter_rejects_irregular_data() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    write_csv(&path, "t,y_1", &[vec![0.0, 1.0], vec![0.1, 1.0], vec![0.3, 1.0]]);
    let json = format!(
        r#"{{"scenario": "linear1d", "filter": {{"data_path": {:?}}}}}"#,
        path.display().to_string()
    );
    let err = cmd_filter(&config(&json), &opts(dir.path())).unwrap_err();
    assert!(err.to_string().contains("uniform grid"), "{err}");
}

#[test]
fn filter_order_selection_writes_report() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        r#"{"scenario": "linear1d", "model": {"a": [[-0.5]]}, "t_end": 5.0, "seed": 2,
            "filter": {"select_order": [1, 2, 3], "dt_integrate": 1e-4}}"#,
    );
    let report = cmd_filter(&cfg, &opts(dir.path())).unwrap();
    let chosen = report.chosen_order.unwrap();
    assert!([1, 2, 3].contains(&chosen));
    assert_eq!((report.order, report.obs_order), (chosen, chosen));
    let text = fs::read_to_string(dir.path().join("order_report.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("order,integrated_free_energy,status"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec!["1", "2", "3"]);
    let best = rows
        .iter()
        .filter(|r| r[2] == "ok")
        .min_by(|a, b| a[1].parse::<f64>().unwrap().total_cmp(&b[1].parse::<f64>().unwrap()))
        .unwrap();
    assert_eq!(best[0], chosen.to_string());
}

#[test]
fn every_csv_round_trips() {
    let dir = TempDir::new().unwrap();
    cmd_simulate(
        &config(r#"{"scenario": "lotka_volterra", "ensemble": 3, "t_end": 0.3}"#),
        &opts(&dir.path().join("a")),
    )
    .unwrap();
    cmd_least_action(
        &config(r#"{"scenario": "linear1d", "lambdas": [2.0], "t_end": 0.2}"#),
        &opts(&dir.path().join("b")),
    )
    .unwrap();
    cmd_linear_analysis(&config(r#"{"scenario": "linear1d"}"#), &opts(&dir.path().join("c"))).unwrap();
    cmd_filter(
        &config(r#"{"scenario": "linear2d", "t_end": 1.0, "order": 2}"#),
        &opts(&dir.path().join("d")),
    )
    .unwrap();
    let files = csv_files(dir.path());
    assert!(files.len() >= 9);
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        let parsed = read_numeric_csv(&f).unwrap();
        let mut rebuilt = parsed.header.join(",") + "\n";
        for r in &parsed.rows {
            rebuilt += &r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",");
            rebuilt += "\n";
        }
        assert_eq!(rebuilt, text, "{}", f.display());
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let cfg = config(r#"{"scenario": "lorenz", "ensemble": 6, "order": 8, "dt": 0.005, "t_end": 0.2, "seed": 11}"#);
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    cmd_simulate(&cfg, &opts(a.path())).unwrap();
    cmd_simulate(&cfg, &opts(b.path())).unwrap();
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert_eq!(fa.len(), 7);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(a.path()).unwrap(), y.strip_prefix(b.path()).unwrap());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    assert_eq!(
        fs::read(a.path().join("run.json")).unwrap(),
        fs::read(b.path().join("run.json")).unwrap()
    );
}

#[test]
fn reference_page_is_current() {
    let page = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/CONFIG.md")).unwrap();
    assert_eq!(
        page,
        reference::render(),
        "regenerate with `gencoord config-reference > docs/CONFIG.md`"
    );
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"));
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let cfg = RunConfig::load(&p).unwrap();
        let name = p.file_stem().unwrap().to_string_lossy().to_string();
        let ok = if name.contains("least_action") {
            cfg.resolve_least_action().is_ok()
        } else if name.contains("filter") {
            cfg.resolve_filter().is_ok()
        } else if name.contains("analysis") {
            cfg.resolve_linear().is_ok()
        } else {
            cfg.resolve_simulate().is_ok()
        };
        assert!(ok, "{name}");
        count += 1;
    }
    assert!(count >= 5);
}

#[test]
fn binary_reports_field_errors_with_failure_status() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, r#"{"scenario": "linear1d", "dt": 0}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gencoord"))
        .args(["simulate", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("field `dt`"), "{stderr}");

    fs::write(&path, r#"{"scenario": "linear1d", "t_end": 0.05}"#).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_gencoord"))
        .args(["simulate", "--seed", "5", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("o"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("o/summary.csv").exists());
}
