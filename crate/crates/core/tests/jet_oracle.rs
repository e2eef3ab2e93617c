//! The exact generalized flow against derivatives of numerically integrated
//! noise-free trajectories.
//!
//! The oracle integrates `ẋ = f(x)` with RK4 along rays into complex time and
//! reads the Taylor coefficients at `t = 0` off a Cauchy integral.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use gencoord::jet::Ring;
use gencoord::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy)]
struct C(Complex64);

impl Add for C {
    type Output = C;
    fn add(self, o: C) -> C {
        C(self.0 + o.0)
    }
}

impl Sub for C {
    type Output = C;
    fn sub(self, o: C) -> C {
        C(self.0 - o.0)
    }
}

impl Mul for C {
    type Output = C;
    fn mul(self, o: C) -> C {
        C(self.0 * o.0)
    }
}

impl Ring for C {
    fn constant_like(&self, c: f64) -> Self {
        C(Complex64::new(c, 0.0))
    }
    fn scale(&self, c: f64) -> Self {
        C(self.0 * c)
    }
}

fn flow_at(model: &ModelSpec, x: &[Complex64]) -> Vec<Complex64> {
    let vars: Vec<C> = x.iter().map(|v| C(*v)).collect();
    model.flow().iter().map(|e| e.eval(&vars).0).collect()
}

/// `x(τ)` for complex `τ`, integrating along the straight ray from 0.
fn solve_complex(model: &ModelSpec, x0: &[f64], tau: Complex64, steps: usize) -> Vec<Complex64> {
    let h = tau / steps as f64;
    let axpy = |x: &[Complex64], k: &[Complex64], s: Complex64| -> Vec<Complex64> {
        x.iter().zip(k).map(|(a, b)| a + b * s).collect()
    };
    let mut x: Vec<Complex64> = x0.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    for _ in 0..steps {
        let k1 = flow_at(model, &x);
        let k2 = flow_at(model, &axpy(&x, &k1, h * 0.5));
        let k3 = flow_at(model, &axpy(&x, &k2, h * 0.5));
        let k4 = flow_at(model, &axpy(&x, &k3, h));
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

/// Time derivatives `x^(0..=order)` of the noise-free trajectory at `t = 0`.
fn oracle_derivatives(model: &ModelSpec, x0: &[f64], order: usize, radius: f64) -> Vec<Vec<f64>> {
    let rays = 64;
    let d = x0.len();
    let mut coeffs = vec![vec![Complex64::new(0.0, 0.0); d]; order + 1];
    for q in 0..rays {
        let theta = 2.0 * PI * q as f64 / rays as f64;
        let x = solve_complex(model, x0, Complex64::from_polar(radius, theta), 400);
        for (k, row) in coeffs.iter_mut().enumerate() {
            let w = Complex64::from_polar(1.0, -(k as f64) * theta);
            for i in 0..d {
                row[i] += x[i] * w;
            }
        }
    }
    coeffs
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let fact: f64 = (1..=k).map(|v| v as f64).product();
            row.iter()
                .map(|c| c.re / rays as f64 * fact / radius.powi(k as i32))
                .collect()
        })
        .collect()
}

/// A random polynomial flow of total degree at most 3.
fn random_flow(rng: &mut ChaCha8Rng, d: usize) -> ModelSpec {
    let flow = (0..d)
        .map(|_| {
            let mut terms = vec![Expr::constant(rng.random_range(-1.0..1.0))];
            for j in 0..d {
                terms.push(Expr::scale(rng.random_range(-1.0..1.0), Expr::var(j)));
            }
            let (a, b) = (rng.random_range(0..d), rng.random_range(0..d));
            terms.push(Expr::scale(
                rng.random_range(-1.0..1.0),
                Expr::mul(Expr::var(a), Expr::var(b)),
            ));
            let c = rng.random_range(0..d);
            terms.push(Expr::scale(rng.random_range(-0.5..0.5), Expr::pow(Expr::var(c), 3)));
            let (e, f, g) = (rng.random_range(0..d), rng.random_range(0..d), rng.random_range(0..d));
            terms.push(Expr::scale(
                rng.random_range(-0.5..0.5),
                Expr::mul(Expr::mul(Expr::var(e), Expr::var(f)), Expr::var(g)),
            ));
            Expr::sum(terms)
        })
        .collect();
    ModelSpec::custom(flow).unwrap()
}

#[test]
fn exact_flow_matches_trajectory_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..30 {
        let d = 1 + case % 3;
        let n = 1 + case % 5;
        let model = random_flow(&mut rng, d);
        let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let derivs = oracle_derivatives(&model, &x0, n + 1, 0.1);
        let x = GenPoint::new(&derivs[..=n]).unwrap();
        let lifted = gen_flow_exact(&model, &x).unwrap();
        for k in 0..n {
            let got = &lifted.as_slice()[k * d..(k + 1) * d];
            let want = &derivs[k + 1];
            let err: f64 = got.iter().zip(want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = want.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(
                err <= 1e-4 * norm.max(1e-8),
                "case {case} (d={d}, N={n}) order {k}: {got:?} vs {want:?}"
            );
        }
    }
}

#[test]
fn zero_noise_zigzag_reproduces_trajectory_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let d = 3;
        let model = random_flow(&mut rng, d);
        let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let derivs = oracle_derivatives(&model, &x0, 5, 0.1);
        let w0 = GenNoise::zeros(d, 4);
        let x = zigzag_solve(&model, &x0, &w0, FlowMode::Exact).unwrap();
        for (k, want) in derivs.iter().enumerate() {
            for (a, b) in x.coord(k).iter().zip(want) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "order {k}: {a} vs {b}");
            }
        }
    }
}
