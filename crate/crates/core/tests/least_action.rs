use gencoord::action::Descent;
use gencoord::*;
use nalgebra::{DMatrix, DVector};

fn linear2d() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-0.2, 0.1, -0.1, -0.2])
}

fn sweep(a: &DMatrix<f64>, lambdas: &[f64], dt: f64, t_end: f64) -> Vec<Descent> {
    let model = ModelSpec::linear(a.clone()).unwrap();
    let cov = build_gen_cov(&Kernel::gaussian(1.0).unwrap(), 3, 2).unwrap();
    let ctx = LagrangianContext::new(model, cov, FlowMode::Exact).unwrap();
    lambdas
        .iter()
        .map(|&l| regularized_descent(&ctx, &[10.0, 10.0], &DescentOptions::new(l, dt, t_end)).unwrap())
        .collect()
}

fn sup_deviation(a: &DMatrix<f64>, run: &Descent) -> f64 {
    let z = DVector::from_column_slice(&[10.0, 10.0]);
    run.trajectory
        .times
        .iter()
        .zip(&run.trajectory.states)
        .map(|(&t, x)| (DVector::from_column_slice(x) - (a * t).exp() * &z).amax())
        .fold(0.0, f64::max)
}

#[test]
fn deviation_from_least_action_path_shrinks_with_lambda() {
    let a = linear2d();
    let runs = sweep(&a, &[1.0, 10.0, 100.0], 1e-3, 2.0);
    let dev: Vec<f64> = runs.iter().map(|r| sup_deviation(&a, r)).collect();
    assert!(runs.iter().all(|r| r.trajectory.blowup_time.is_none()));
    assert!(dev[0] > dev[1] && dev[1] > dev[2], "{dev:?}");
    assert!(dev[2] < 0.2 * dev[0], "{dev:?}");
}

#[test]
fn lagrangian_trace_ordered_by_lambda_after_burn_in() {
    let a = linear2d();
    let runs = sweep(&a, &[1.0, 10.0, 100.0], 1e-3, 2.0);
    for pair in runs.windows(2) {
        let (low, high) = (&pair[0].lagrangian, &pair[1].lagrangian);
        assert_eq!(low.len(), high.len());
        for k in 10..low.len() {
            assert!(high[k] <= low[k], "step {k}: {} > {}", high[k], low[k]);
        }
    }
}

#[test]
fn least_action_start_has_zero_lagrangian() {
    let runs = sweep(&linear2d(), &[10.0], 1e-3, 0.01);
    assert!(runs[0].lagrangian[0] < 1e-20);
    assert_eq!(runs[0].trajectory.states[0], vec![10.0, 10.0]);
}
