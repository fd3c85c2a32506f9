mod common;

use std::f64::consts::PI;

use common::{adaptive_trapezoid, rel_err};
use volterra::model::{KernelSpec, Spectrum};
use volterra::resolvent::*;
use volterra::special_functions::{ml_eval, MlParams};
use volterra::Error;

fn table(rho: f64, lambdas: Vec<f64>, t_end: f64, steps: usize) -> (KernelSpec, ResolventTable) {
    let k = KernelSpec::new(rho).unwrap();
    let g = TimeGrid::new(t_end, steps).unwrap();
    let t = build_resolvent_table(&Spectrum::new(lambdas, None).unwrap(), &k, &g).unwrap();
    (k, t)
}

fn ml_resolvent(rho: f64, lambda: f64) -> impl Fn(f64) -> f64 {
    let p = MlParams::one(rho).unwrap();
    move |t: f64| ml_eval(p, -lambda * t.powf(rho)).unwrap()
}

#[test]
fn zero_eigenvalue_row() {
    let (_, t) = table(1.5, vec![0.0], 1.0, 16);
    assert!(t.s(0).iter().all(|&v| v == 1.0));
    assert_eq!(t.w(0)[0], 0.0);
    assert!(t.w(0)[1..].iter().all(|&v| v == 1.0 / 16.0));
}

#[test]
fn exponential_limit() {
    let (_, t) = table(1.0, vec![2.0], 0.5, 1);
    assert!(rel_err(t.s(0)[1], 0.3678794412) < 1e-9);
    assert!(rel_err(t.w(0)[1], 0.3160602794) < 1e-9);
    assert!(rel_err(t.w(0)[1], (1.0 - (-1f64).exp()) / 2.0) < 1e-15);
}

#[test]
fn weights_match_trapezoid_quadrature() {
    let lambda = 4.0 * PI * PI;
    let (_, t) = table(1.2, vec![lambda], 1.0, 8);
    let s = ml_resolvent(1.2, lambda);
    let g = t.grid();
    for i in 1..=8 {
        assert_eq!(t.s(0)[i], s(g.t(i)));
        let q = adaptive_trapezoid(&s, g.t(i - 1), g.t(i), 1e-10 * g.dt());
        assert!(rel_err(t.w(0)[i], q) <= 1e-9, "i = {i}: {} vs {q}", t.w(0)[i]);
    }
}

#[test]
fn weights_match_quadrature_on_fine_grid() {
    for rho in [1.2, 1.75] {
        for lambda in [4.0 * PI * PI, 100.0 * PI * PI, 900.0 * PI * PI] {
            let (_, t) = table(rho, vec![lambda], 1.0, 512);
            let s = ml_resolvent(rho, lambda);
            let g = t.grid();
            for i in 1..=512 {
                let q = adaptive_trapezoid(&s, g.t(i - 1), g.t(i), 1e-13 * g.dt() * t.s(0)[i].abs().max(1e-8));
                assert!(
                    rel_err(t.w(0)[i], q) <= 1e-9,
                    "rho={rho} lambda={lambda} i={i}: {} vs {q}",
                    t.w(0)[i]
                );
            }
        }
    }
}

#[test]
fn resolvent_residuals() {
    let g = TimeGrid::new(1.0, 4096).unwrap();
    let cases = [(1.999, PI * PI), (1.5, PI * PI), (1.2, 4.0 * PI * PI), (1.75, 4.0 * PI * PI)];
    for (rho, lambda) in cases {
        let (k, t) = table(rho, vec![lambda], 1.0, 4096);
        let r = volterra_residual(&k, lambda, &g, t.s(0)).unwrap();
        assert!(r <= 1e-3, "rho={rho} lambda={lambda}: residual {r:e}");
    }
    let (k, t) = table(1.5, vec![0.0], 1.0, 4096);
    assert_eq!(volterra_residual(&k, 0.0, &g, t.s(0)).unwrap(), 0.0);
}

#[test]
fn residual_rejects_coarse_grids() {
    let (k, t) = table(1.5, vec![1.0], 1.0, 256);
    assert!(matches!(
        volterra_residual(&k, 1.0, t.grid(), t.s(0)),
        Err(Error::GridTooCoarse { .. })
    ));
}

#[test]
fn resolvent_bounded_by_one() {
    for rho in [1.2, 1.5, 1.75] {
        let (k, t) = table(rho, vec![PI * PI, 100.0 * PI * PI, 900.0 * PI * PI], 1.0, 1024);
        for m in 0..3 {
            assert!(t.s(m).iter().all(|v| v.abs() <= 1.05));
        }
        let report = check_smoothing_bounds(&t, &k, SMOOTHING_CEILING).unwrap();
        assert!(report.constant("S1", 0.0).unwrap() <= 1.05);
        let all_below = report.entries.iter().all(|e| e.constant <= SMOOTHING_CEILING);
        assert_eq!(report.passed, all_below);
    }
}

#[test]
fn derivative_bound_is_scale_free() {
    // With s = 1/rho the weighted derivative is x^{1+1/rho} |E_{rho,rho}(-x)|
    // for x = lambda t^rho, so the constant does not depend on lambda.
    for rho in [1.2, 1.5, 1.75] {
        let p = MlParams::new(rho, rho).unwrap();
        let sup = common::logspace(1e-2, 1e4, 20_000)
            .into_iter()
            .map(|x| x.powf(1.0 + 1.0 / rho) * ml_eval(p, -x).unwrap().abs())
            .fold(0.0, f64::max);
        let (k, t) = table(rho, vec![100.0 * PI * PI, 900.0 * PI * PI], 1.0, 2048);
        let c = check_smoothing_bounds(&t, &k, SMOOTHING_CEILING)
            .unwrap()
            .constant("S2", 1.0 / rho)
            .unwrap();
        assert!(c <= sup * (1.0 + 1e-6) && c >= 0.99 * sup, "rho={rho}: {c} vs {sup}");
    }
}

#[test]
fn zero_eigenvalue_smoothing() {
    let (k, t) = table(1.5, vec![0.0], 1.0, 64);
    let report = check_smoothing_bounds(&t, &k, SMOOTHING_CEILING).unwrap();
    for e in &report.entries {
        if e.s > 0.0 {
            assert_eq!(e.constant, 0.0, "{e:?}");
        }
    }
}

#[test]
fn smoothing_constant_stable_under_refinement() {
    let rho = 1.75;
    let lambdas = vec![PI * PI, 100.0 * PI * PI, 900.0 * PI * PI];
    let (k, coarse) = table(rho, lambdas.clone(), 1.0, 256);
    let (_, fine) = table(rho, lambdas, 1.0, 512);
    let a = check_smoothing_bounds(&coarse, &k, SMOOTHING_CEILING).unwrap();
    let b = check_smoothing_bounds(&fine, &k, SMOOTHING_CEILING).unwrap();
    let ratio = a.constant("S1", 1.0 / rho).unwrap() / b.constant("S1", 1.0 / rho).unwrap();
    assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn refinement_halves_largest_jump() {
    for rho in [1.2, 1.5, 1.75] {
        let jump = |steps| {
            let (_, t) = table(rho, vec![4.0 * PI * PI], 1.0, steps);
            t.s(0).windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
        };
        let mut prev = jump(64);
        for steps in [128, 256, 512] {
            let next = jump(steps);
            let ratio = prev / next;
            assert!((1.8..=2.6).contains(&ratio), "rho={rho} M={steps}: ratio {ratio}");
            prev = next;
        }
    }
}

#[test]
fn table_build_is_deterministic() {
    let sp = Spectrum::new(vec![PI * PI, 4.0 * PI * PI, 900.0 * PI * PI], None).unwrap();
    let k = KernelSpec::new(1.2).unwrap();
    let g = TimeGrid::new(1.0, 256).unwrap();
    let a = build_resolvent_table(&sp, &k, &g).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| build_resolvent_table(&sp, &k, &g).unwrap());
    for m in 0..3 {
        assert!(a.s(m).iter().zip(b.s(m)).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.w(m).iter().zip(b.w(m)).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn interpolant_matches_direct_evaluation() {
    for rho in [1.2, 1.5, 1.75] {
        for lambda in [PI * PI, 100.0 * PI * PI, 900.0 * PI * PI] {
            let k = KernelSpec::new(rho).unwrap();
            let interp = ResolventInterpolant::new(&k, lambda, 1.0).unwrap();
            let s = ml_resolvent(rho, lambda);
            for i in 0..=997 {
                let t = i as f64 / 997.0;
                let d = (interp.eval(t) - s(t)).abs();
                assert!(d <= 1e-13, "rho={rho} lambda={lambda} t={t}: {d:e}");
            }
        }
    }
}
