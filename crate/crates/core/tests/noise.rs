mod common;

use std::f64::consts::PI;

use common::rel_err;
use volterra::model::{KernelSpec, Spectrum};
use volterra::noise::*;
use volterra::resolvent::{build_resolvent_table, TimeGrid};

fn cov(rho: f64, lambda: f64, mu: f64, steps: usize) -> ConvCovariance {
    let k = KernelSpec::new(rho).unwrap();
    let g = TimeGrid::new(1.0, steps).unwrap();
    ConvCovariance::new(lambda, mu, &k, &g, DEFAULT_QUAD_TOL).unwrap()
}

#[test]
fn ornstein_uhlenbeck_reduction() {
    let c = cov(1.0, 1.0, 1.0, 8);
    let exact = |t: f64| (1.0 - (-2.0 * t).exp()) / 2.0;
    assert!((c.get(8, 8) - 0.432332358).abs() < 1e-9);
    for i in 1..=8 {
        let t = i as f64 / 8.0;
        assert!(rel_err(c.get(i, i), exact(t)) < 1e-12);
        assert!(rel_err(c.factor_variance(i), exact(t)) < 1e-9);
        for j in 1..i {
            // Cov(O(t_i), O(t_j)) = e^{-(t_i - t_j)} Var O(t_j)
            let want = (-(t - j as f64 / 8.0)).exp() * exact(j as f64 / 8.0);
            assert!(rel_err(c.get(i, j), want) < 1e-12);
        }
    }
}

#[test]
fn brownian_covariance() {
    let c = cov(1.5, 0.0, 0.7, 10);
    for i in 1..=10 {
        for j in 1..=10 {
            let want = 0.7 * (i.min(j) as f64) / 10.0;
            assert!((c.get(i, j) - want).abs() < 1e-15, "({i},{j})");
        }
    }
}

// rho = 1.75, lambda = 100 pi^2, mu = 1, T = 1, M = 8, lower triangle by rows,
// from a 10^6-point composite trapezoid rule over ml_eval.
const COV_FIXTURE: [&[f64]; 8] = [
    &[2.58220999150384767e-2],
    &[6.42810337284276546e-3, 2.74273223261259948e-2],
    &[1.54328047977950254e-3, 6.81343732277391902e-3, 2.75198789478701307e-2],
    &[3.69260338541132463e-4, 1.63527870785798923e-3, 6.83557000261896062e-3, 2.75251999515234817e-2],
    &[8.79135407228965763e-5, 3.90991092157581192e-4, 1.64053006092548868e-3, 6.83685335482057434e-3, 2.75255249580159296e-2],
    &[2.06725046825507837e-5, 9.28893242882355990e-5, 3.92210798746221116e-4, 1.64084384788679475e-3, 6.83694435755602056e-3, 2.75255586417318364e-2],
    &[4.68897491338982009e-6, 2.16955828553985227e-5, 9.31539448232332896e-5, 3.92291338218233980e-4, 1.64087591069472577e-3, 6.83696163256844371e-3, 2.75255701984417067e-2],
    &[9.40527943657765627e-7, 4.80678303872941053e-6, 2.17387476592976229e-5, 9.31779111859748499e-5, 3.92307272481857278e-4, 1.64088738888180604e-3, 6.83697030269443846e-3, 2.75255769824370757e-2],
];

#[test]
fn covariance_matches_fixture() {
    let c = cov(1.75, 100.0 * PI * PI, 1.0, 8);
    for (i, row) in COV_FIXTURE.iter().enumerate() {
        for (j, &want) in row.iter().enumerate() {
            let got = c.get(i + 1, j + 1);
            assert!((got - want).abs() <= 1e-8, "({}, {}): {got:e} vs {want:e}", i + 1, j + 1);
            assert_eq!(got, c.get(j + 1, i + 1));
        }
    }
    assert!(c.reconstruction_error() < 1e-15);
}

#[test]
fn zero_draw_gives_zero_convolution() {
    let c = cov(1.2, 4.0 * PI * PI, 1.0, 16);
    let o = sample_exact_with(&c, 0, &[0.0; 16]).unwrap();
    assert!(o.values.iter().all(|&v| v == 0.0));
}

#[test]
fn brownian_single_step_variance() {
    let c = cov(1.5, 0.0, 2.0, 1);
    let n = 100_000;
    let xs: Vec<f64> = (0..n)
        .map(|p| sample_exact(&c, PathSeed::new(3, p, 0).unwrap()).unwrap().values[1])
        .collect();
    let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
    let se = 2.0 * (2.0 / n as f64).sqrt();
    assert!((var - 2.0).abs() <= 3.0 * se, "variance {var}");
}

#[test]
fn empirical_covariance_matches() {
    let m = 16;
    let c = cov(1.2, 4.0 * PI * PI, 1.0, m);
    let n = 100_000;
    let mut acc = vec![vec![0.0; m + 1]; m + 1];
    for p in 0..n {
        let o = sample_exact(&c, PathSeed::new(11, p, 0).unwrap()).unwrap().values;
        for i in 1..=m {
            for j in 1..=i {
                acc[i][j] += o[i] * o[j];
            }
        }
    }
    for i in 1..=m {
        for j in 1..=i {
            let emp = acc[i][j] / n as f64;
            let want = c.get(i, j);
            let se = ((c.get(i, i) * c.get(j, j) + want * want) / n as f64).sqrt();
            assert!((emp - want).abs() <= 4.0 * se, "({i},{j}): {emp:e} vs {want:e}");
        }
    }
}

#[test]
fn coarse_matrix_is_restriction_of_fine() {
    let fine = cov(1.2, 100.0 * PI * PI, 1.0, 64);
    let coarse = cov(1.2, 100.0 * PI * PI, 1.0, 8);
    for i in 1..=8 {
        for j in 1..=i {
            let d = (coarse.get(i, j) - fine.get(8 * i, 8 * j)).abs();
            assert!(d <= DEFAULT_QUAD_TOL, "({i},{j}): {d:e}");
        }
    }
}

#[test]
fn sampling_is_deterministic_under_any_pool() {
    let c = cov(1.5, 4.0 * PI * PI, 1.0, 64);
    let seed = PathSeed::new(42, 7, 1).unwrap();
    let a = sample_exact(&c, seed).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let b = pool.install(|| sample_exact(&c, seed).unwrap());
    assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    let other = sample_exact(&c, PathSeed::new(42, 8, 1).unwrap()).unwrap();
    assert_ne!(a.values, other.values);

    let g = TimeGrid::new(1.0, 32).unwrap();
    let p1 = BrownianPath::generate(&g, &[1.0, 0.5], 9, 3).unwrap();
    let p2 = pool.install(|| BrownianPath::generate(&g, &[1.0, 0.5], 9, 3).unwrap());
    assert_eq!(p1, p2);
}

#[test]
fn ito_sum_examples() {
    let fine = TimeGrid::new(1.0, 64).unwrap();
    let coarse = TimeGrid::new(1.0, 8).unwrap();
    let k = KernelSpec::new(1.5).unwrap();
    let table = build_resolvent_table(&Spectrum::new(vec![0.0, PI * PI], None).unwrap(), &k, &fine).unwrap();

    let zero = BrownianPath::zeros(&fine, 2);
    assert!(sample_ito_sum(&table, &zero, 1, &coarse).unwrap().values.iter().all(|&v| v == 0.0));

    let path = BrownianPath::generate(&fine, &[1.0, 1.0], 5, 0).unwrap();
    let o = sample_ito_sum(&table, &path, 0, &coarse).unwrap();
    let w = path.cumulative(0);
    for m in 0..=8 {
        assert!((o.values[m] - w[8 * m]).abs() < 1e-14);
    }
    let bad = TimeGrid::new(1.0, 7).unwrap();
    assert!(sample_ito_sum(&table, &path, 0, &bad).is_err());
}

#[test]
fn ito_sum_variance_matches_exact() {
    let (rho, lambda) = (1.5, PI * PI);
    let fine = TimeGrid::new(1.0, 1 << 14).unwrap();
    let coarse = TimeGrid::new(1.0, 16).unwrap();
    let k = KernelSpec::new(rho).unwrap();
    let table = build_resolvent_table(&Spectrum::new(vec![lambda], None).unwrap(), &k, &fine).unwrap();
    let exact = cov(rho, lambda, 1.0, 16).get(16, 16);
    let n = 10_000;
    let s = table.s(0);
    let mut sum = 0.0;
    for p in 0..n {
        // Only O(T) is needed, so the sum is taken directly at the last time.
        let path = BrownianPath::generate(&fine, &[1.0], 21, p).unwrap();
        let dw = path.increments(0);
        let top = fine.steps();
        let o: f64 = (0..top).map(|l| s[top - l] * dw[l]).sum();
        sum += o * o;
    }
    let var = sum / n as f64;
    assert!(rel_err(var, exact) <= 0.05, "{var} vs {exact}");
    // The harness entry point gives the same value at T.
    let path = BrownianPath::generate(&fine, &[1.0], 21, 0).unwrap();
    let o = sample_ito_sum(&table, &path, 0, &coarse).unwrap();
    let top = fine.steps();
    let direct: f64 = (0..top).map(|l| s[top - l] * path.increments(0)[l]).sum();
    assert_eq!(o.values[16], direct);
}

#[test]
fn aggregation_and_restriction() {
    let fine = TimeGrid::new(2.0, 32).unwrap();
    let coarse = TimeGrid::new(2.0, 4).unwrap();
    let path = BrownianPath::generate(&fine, &[1.0], 1, 0).unwrap();
    let agg = path.aggregate(&coarse).unwrap();
    let wf = path.cumulative(0);
    let wc = agg.cumulative(0);
    for m in 0..=4 {
        assert!((wc[m] - wf[8 * m]).abs() < 1e-14);
    }
    let c = cov(1.2, 10.0, 1.0, 32);
    let o = sample_exact(&c, PathSeed::new(1, 0, 0).unwrap()).unwrap();
    let r = o.restrict(&TimeGrid::new(1.0, 4).unwrap()).unwrap();
    assert_eq!(r.values, vec![o.values[0], o.values[8], o.values[16], o.values[24], o.values[32]]);
}

#[test]
fn brownian_increment_variance() {
    let g = TimeGrid::new(1.0, 1000).unwrap();
    let path = BrownianPath::generate(&g, &[4.0], 77, 0).unwrap();
    let v = path.increments(0).iter().map(|d| d * d).sum::<f64>() / 1000.0;
    // Var = mu dt = 4e-3; the sample variance of 1000 draws has 4.5 % spread.
    assert!(rel_err(v, 4e-3) < 0.15, "{v}");
}
