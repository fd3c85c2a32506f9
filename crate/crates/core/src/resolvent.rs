//! Scalar resolvents s_k(t) = E_ρ(-λ_k t^ρ) on a uniform grid, their
//! integrated weights, and numerical certificates for both.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{KernelSpec, Spectrum};
use crate::special_functions::{ml_eval, rgamma, MlParams};

/// Uniform partition 0 = t_0 < ... < t_M = T.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon T = {t_end} must be positive")));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("grid needs at least one step".into()));
        }
        Ok(TimeGrid {
            t_end,
            steps,
            dt: t_end / steps as f64,
        })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// t_m = m·dt, with t_M = T exactly.
    #[inline]
    pub fn t(&self, m: usize) -> f64 {
        if m == self.steps {
            self.t_end
        } else {
            m as f64 * self.dt
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|m| self.t(m)).collect()
    }

    /// Number of steps of `self` per step of `coarse`, if `coarse` is a
    /// sub-grid with the same horizon.
    pub fn refinement_of(&self, coarse: &TimeGrid) -> Result<usize> {
        if self.t_end != coarse.t_end || self.steps % coarse.steps != 0 {
            return Err(Error::GridMismatch(format!(
                "grid with {} steps on [0, {}] does not refine {} steps on [0, {}]",
                self.steps, self.t_end, coarse.steps, coarse.t_end
            )));
        }
        Ok(self.steps / coarse.steps)
    }
}

/// s[k][i] = E_ρ(-λ_k t_i^ρ) and w[k][i] = ∫_{t_{i-1}}^{t_i} E_ρ(-λ_k σ^ρ) dσ.
///
/// Both rows have length M + 1; w[k][0] is 0 so that w[k][i] is the weight
/// of the i-th subinterval.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolventTable {
    grid: TimeGrid,
    rho: f64,
    lambdas: Vec<f64>,
    s: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
}

impl ResolventTable {
    /// Assemble a table from precomputed rows (used when loading a cache).
    pub fn from_parts(
        grid: TimeGrid,
        rho: f64,
        lambdas: Vec<f64>,
        s: Vec<Vec<f64>>,
        w: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = lambdas.len();
        let len = grid.steps() + 1;
        if s.len() != n || w.len() != n || s.iter().chain(&w).any(|r| r.len() != len) {
            return Err(Error::GridMismatch(format!(
                "table rows do not match {n} modes on {len} grid points"
            )));
        }
        Ok(ResolventTable {
            grid,
            rho,
            lambdas,
            s,
            w,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn s(&self, k: usize) -> &[f64] {
        &self.s[k]
    }

    pub fn w(&self, k: usize) -> &[f64] {
        &self.w[k]
    }

    /// The table restricted to one mode.
    pub fn mode(&self, k: usize) -> ResolventTable {
        ResolventTable {
            grid: self.grid,
            rho: self.rho,
            lambdas: vec![self.lambdas[k]],
            s: vec![self.s[k].clone()],
            w: vec![self.w[k].clone()],
        }
    }
}

/// Tabulates s and w for every mode; modes are computed in parallel.
pub fn build_resolvent_table(spectrum: &Spectrum, kernel: &KernelSpec, grid: &TimeGrid) -> Result<ResolventTable> {
    let rho = kernel.rho();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = spectrum
        .lambdas()
        .par_iter()
        .map(|&lambda| resolvent_row(rho, lambda, grid))
        .collect::<Result<_>>()?;
    let (s, w) = rows.into_iter().unzip();
    Ok(ResolventTable {
        grid: *grid,
        rho,
        lambdas: spectrum.lambdas().to_vec(),
        s,
        w,
    })
}

fn resolvent_row(rho: f64, lambda: f64, grid: &TimeGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grid.steps();
    let dt = grid.dt();
    let mut s = vec![1.0; n + 1];
    let mut w = vec![0.0; n + 1];
    if lambda == 0.0 {
        for i in 1..=n {
            w[i] = grid.t(i) - grid.t(i - 1);
        }
        return Ok((s, w));
    }
    if rho == 1.0 {
        for i in 1..=n {
            let (a, b) = (grid.t(i - 1), grid.t(i));
            s[i] = (-lambda * b).exp();
            w[i] = -(-lambda * a).exp() * (-lambda * (b - a)).exp_m1() / lambda;
        }
        return Ok((s, w));
    }
    let p1 = MlParams::new(rho, 1.0)?;
    let p2 = MlParams::new(rho, 2.0)?;
    let mut g_prev = 0.0;
    for i in 1..=n {
        let t = grid.t(i);
        let x = -lambda * t.powf(rho);
        s[i] = ml_eval(p1, x)?;
        let g = t * ml_eval(p2, x)?;
        w[i] = g - g_prev;
        g_prev = g;
    }
    debug_assert!(dt > 0.0);
    Ok((s, w))
}

/// Piecewise Chebyshev interpolant of t ↦ E_ρ(-λ t^ρ) on [0, t_max].
///
/// The function is entire in τ = t^ρ, so the pieces live in τ and are
/// refined by bisection until a check against direct evaluation passes.
#[derive(Clone, Debug)]
pub struct ResolventInterpolant {
    rho: f64,
    lambda: f64,
    breaks: Vec<f64>,
    coeffs: Vec<[f64; CHEB_LEN]>,
    max_error: f64,
}

const CHEB_DEGREE: usize = 20;
const CHEB_LEN: usize = CHEB_DEGREE + 1;
const CHEB_TOL: f64 = 2e-14;
const CHEB_MAX_DEPTH: u32 = 60;

impl ResolventInterpolant {
    pub fn new(kernel: &KernelSpec, lambda: f64, t_max: f64) -> Result<Self> {
        if !(t_max > 0.0 && t_max.is_finite()) || !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "interpolant needs t_max > 0 and lambda >= 0, got {t_max}, {lambda}"
            )));
        }
        let rho = kernel.rho();
        let params = MlParams::new(rho, 1.0)?;
        let g = |tau: f64| -> Result<f64> {
            if rho == 1.0 {
                Ok((-lambda * tau).exp())
            } else {
                ml_eval(params, -lambda * tau)
            }
        };
        let mut out = ResolventInterpolant {
            rho,
            lambda,
            breaks: vec![0.0],
            coeffs: Vec::new(),
            max_error: 0.0,
        };
        // Depth-first from the left keeps breaks sorted.
        let mut stack = vec![(0.0, t_max.powf(rho), 0u32)];
        while let Some((a, b, depth)) = stack.pop() {
            let (c, err) = fit_piece(&g, a, b)?;
            if err <= CHEB_TOL || depth >= CHEB_MAX_DEPTH {
                out.breaks.push(b);
                out.coeffs.push(c);
                out.max_error = out.max_error.max(err);
            } else {
                let mid = 0.5 * (a + b);
                stack.push((mid, b, depth + 1));
                stack.push((a, mid, depth + 1));
            }
        }
        Ok(out)
    }

    pub fn pieces(&self) -> usize {
        self.coeffs.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest deviation from direct evaluation seen at the check points.
    pub fn max_error(&self) -> f64 {
        self.max_error
    }

    /// E_ρ(-λ t^ρ); t is clamped to the fitted range.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let tau = t.max(0.0).powf(self.rho);
        let last = self.coeffs.len() - 1;
        let j = (self.breaks.partition_point(|&b| b <= tau).max(1) - 1).min(last);
        let (a, b) = (self.breaks[j], self.breaks[j + 1]);
        let x = ((2.0 * tau - a - b) / (b - a)).clamp(-1.0, 1.0);
        clenshaw(&self.coeffs[j], x)
    }
}

fn fit_piece<G: Fn(f64) -> Result<f64>>(g: &G, a: f64, b: f64) -> Result<([f64; CHEB_LEN], f64)> {
    let n = CHEB_DEGREE;
    let map = |x: f64| 0.5 * (a + b) + 0.5 * (b - a) * x;
    let mut vals = [0.0; CHEB_LEN];
    for (j, v) in vals.iter_mut().enumerate() {
        *v = g(map((std::f64::consts::PI * j as f64 / n as f64).cos()))?;
    }
    // Values at Chebyshev–Lobatto points to coefficients (direct DCT-I).
    let mut c = [0.0; CHEB_LEN];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &v) in vals.iter().enumerate() {
            let f = if j == 0 || j == n { 0.5 } else { 1.0 };
            acc += f * v * (std::f64::consts::PI * (j * k) as f64 / n as f64).cos();
        }
        *ck = acc * 2.0 / n as f64;
    }
    c[0] *= 0.5;
    c[n] *= 0.5;
    let mut err = 0.0f64;
    for j in 0..n {
        let x = (std::f64::consts::PI * (j as f64 + 0.5) / n as f64).cos();
        err = err.max((clenshaw(&c, x) - g(map(x))?).abs());
    }
    Ok((c, err))
}

#[inline]
fn clenshaw(c: &[f64; CHEB_LEN], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    let x2 = 2.0 * x;
    for &ck in c[1..].iter().rev() {
        let b0 = ck + x2 * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0] + x * b1 - b2
}

/// Smallest grid (points, including t = 0) accepted by `volterra_residual`.
pub const RESIDUAL_MIN_POINTS: usize = 512;

/// max_n |ṡ(t_n) + λ (J^α s)(t_n)| over the interior grid points.
///
/// ṡ comes from a five-point finite difference in τ = t^ρ (s is smooth in
/// τ), and J^α from product trapezoidal integration, which treats the
/// kernel (t - σ)^{α-1} exactly on each subinterval.
pub fn volterra_residual(kernel: &KernelSpec, lambda: f64, grid: &TimeGrid, s: &[f64]) -> Result<f64> {
    let n_pts = s.len();
    if n_pts != grid.steps() + 1 {
        return Err(Error::GridMismatch(format!(
            "{n_pts} samples on a grid of {} points",
            grid.steps() + 1
        )));
    }
    if n_pts < RESIDUAL_MIN_POINTS {
        return Err(Error::GridTooCoarse {
            points: n_pts,
            required: RESIDUAL_MIN_POINTS,
        });
    }
    let rho = kernel.rho();
    let alpha = kernel.alpha();
    let m = grid.steps();
    let dt = grid.dt();
    let tau: Vec<f64> = (0..=m).map(|i| grid.t(i).powf(rho)).collect();

    let jalpha: Vec<f64> = if alpha == 0.0 {
        s.to_vec()
    } else {
        let a1 = alpha + 1.0;
        let pw: Vec<f64> = (0..=m + 1).map(|k| (k as f64).powf(a1)).collect();
        let inner: Vec<f64> = (1..=m).map(|k| pw[k + 1] - 2.0 * pw[k] + pw[k - 1]).collect();
        let scale = dt.powf(alpha) * rgamma(alpha + 2.0);
        (0..=m)
            .map(|n| {
                if n == 0 {
                    return 0.0;
                }
                let nf = n as f64;
                let mut acc = (pw[n - 1] - (nf - alpha - 1.0) * nf.powf(alpha)) * s[0] + s[n];
                for j in 1..n {
                    acc += inner[n - j - 1] * s[j];
                }
                scale * acc
            })
            .collect()
    };

    let mut worst = 0.0f64;
    for i in 1..m {
        let lo = i.saturating_sub(2).min(m - 4);
        let c = fornberg_first_derivative(tau[i], &tau[lo..lo + 5]);
        let dg: f64 = (0..5).map(|j| c[j] * (s[lo + j] - s[i])).sum();
        let sdot = dg * rho * grid.t(i).powf(rho - 1.0);
        worst = worst.max((sdot + lambda * jalpha[i]).abs());
    }
    Ok(worst)
}

// Weights of the first derivative at x0 from values at xs (Fornberg).
fn fornberg_first_derivative(x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut d = vec![[0.0f64; 2]; n];
    d[0][0] = 1.0;
    let mut c1 = 1.0;
    for i in 1..n {
        let mut c2 = 1.0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                d[i][1] = c1 * (d[i - 1][0] - (xs[i - 1] - x0) * d[i - 1][1]) / c2;
                d[i][0] = -c1 * (xs[i - 1] - x0) * d[i - 1][0] / c2;
            }
            d[j][1] = ((xs[i] - x0) * d[j][1] - d[j][0]) / c3;
            d[j][0] = (xs[i] - x0) * d[j][0] / c3;
        }
        c1 = c2;
    }
    d.into_iter().map(|r| r[1]).collect()
}

/// One smoothing estimate: sup over modes and times of a weighted |s| or |ṡ|.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingEntry {
    /// "S1": λ^s |s(t)| t^{sρ}, "S2": λ^s |ṡ(t)| t^{sρ+1},
    /// "S3": λ^{-s} |ṡ(t)| t^{1-sρ}.
    pub bound: &'static str,
    pub s: f64,
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingReport {
    pub entries: Vec<SmoothingEntry>,
    pub ceiling: f64,
    pub passed: bool,
}

impl SmoothingReport {
    pub fn constant(&self, bound: &str, s: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.bound == bound && e.s == s)
            .map(|e| e.constant)
    }
}

pub const SMOOTHING_CEILING: f64 = 10.0;

/// Empirical constants of the smoothing estimates for every mode of `table`.
///
/// The bound on s uses the table values; the bounds on ṡ use the exact
/// derivative ṡ(t) = -λ t^{ρ-1} E_{ρ,ρ}(-λ t^ρ) on a grid four times finer.
pub fn check_smoothing_bounds(table: &ResolventTable, kernel: &KernelSpec, ceiling: f64) -> Result<SmoothingReport> {
    let rho = kernel.rho();
    let grid = table.grid();
    let s1 = [0.0, 0.5 / rho, 1.0 / rho];
    let s3 = [0.0, 0.5, 1.0];
    let fine = TimeGrid::new(grid.t_end(), grid.steps() * 4)?;

    let mut c1 = [0.0f64; 3];
    let mut c2 = [0.0f64; 3];
    let mut c3 = [0.0f64; 3];
    for (k, &lambda) in table.lambdas().iter().enumerate() {
        let row = table.s(k);
        for i in 1..row.len() {
            let t = grid.t(i);
            for (c, &e) in c1.iter_mut().zip(&s1) {
                *c = c.max(weight(lambda, e) * row[i].abs() * t.powf(e * rho));
            }
        }
        let sdot = exact_derivative(rho, lambda, &fine)?;
        for (i, &d) in sdot.iter().enumerate().skip(1) {
            if d == 0.0 {
                continue;
            }
            let t = fine.t(i);
            for (c, &e) in c2.iter_mut().zip(&s1) {
                *c = c.max(weight(lambda, e) * d.abs() * t.powf(e * rho + 1.0));
            }
            for (c, &e) in c3.iter_mut().zip(&s3) {
                *c = c.max(lambda.powf(-e) * d.abs() * t.powf(1.0 - e * rho));
            }
        }
    }
    let mut entries = Vec::with_capacity(9);
    for (bound, exps, consts) in [("S1", s1, c1), ("S2", s1, c2), ("S3", s3, c3)] {
        for (s, constant) in exps.into_iter().zip(consts) {
            entries.push(SmoothingEntry { bound, s, constant });
        }
    }
    let passed = entries.iter().all(|e| e.constant.is_finite() && e.constant <= ceiling);
    Ok(SmoothingReport {
        entries,
        ceiling,
        passed,
    })
}

// λ^s with 0^0 = 1
fn weight(lambda: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        lambda.powf(s)
    }
}

fn exact_derivative(rho: f64, lambda: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    let mut out = vec![0.0; grid.steps() + 1];
    if lambda == 0.0 {
        return Ok(out);
    }
    let params = MlParams::new(rho, rho)?;
    for (i, d) in out.iter_mut().enumerate().skip(1) {
        let t = grid.t(i);
        *d = if rho == 1.0 {
            -lambda * (-lambda * t).exp()
        } else {
            -lambda * t.powf(rho - 1.0) * ml_eval(params, -lambda * t.powf(rho))?
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn one_mode(lambda: f64) -> Spectrum {
        Spectrum::new(vec![lambda], None).unwrap()
    }

    #[test]
    fn grid_endpoints() {
        let g = TimeGrid::new(1.0, 3).unwrap();
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.t(3), 1.0);
        assert_eq!(TimeGrid::new(1.0, 12).unwrap().refinement_of(&g).unwrap(), 4);
        assert!(TimeGrid::new(1.0, 10).unwrap().refinement_of(&g).is_err());
        assert!(TimeGrid::new(0.0, 3).is_err());
    }

    #[test]
    fn zero_eigenvalue_row() {
        let g = TimeGrid::new(1.0, 8).unwrap();
        let t = build_resolvent_table(&one_mode(0.0), &KernelSpec::new(1.5).unwrap(), &g).unwrap();
        assert!(t.s(0).iter().all(|&v| v == 1.0));
        assert!(t.w(0)[1..].iter().all(|&v| v == 0.125));
    }

    #[test]
    fn memoryless_row() {
        let g = TimeGrid::new(0.5, 1).unwrap();
        let t = build_resolvent_table(&one_mode(2.0), &KernelSpec::new(1.0).unwrap(), &g).unwrap();
        assert!((t.s(0)[1] - 0.36787944117144233).abs() < 1e-15);
        assert!((t.w(0)[1] - 0.31606027941427883).abs() < 1e-15);
    }

    #[test]
    fn interpolant_matches_direct_evaluation() {
        let k = KernelSpec::new(1.75).unwrap();
        let it = ResolventInterpolant::new(&k, 100.0 * PI * PI, 1.0).unwrap();
        let p = MlParams::new(1.75, 1.0).unwrap();
        for i in 0..=997 {
            let t = i as f64 / 997.0;
            let direct = ml_eval(p, -100.0 * PI * PI * t.powf(1.75)).unwrap();
            assert!((it.eval(t) - direct).abs() < 5e-14, "t={t}");
        }
        assert!(it.max_error() <= CHEB_TOL);
    }

    #[test]
    fn fornberg_uniform_weights() {
        let c = fornberg_first_derivative(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in c.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_needs_fine_grid() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let k = KernelSpec::new(1.5).unwrap();
        assert!(matches!(
            volterra_residual(&k, 1.0, &g, &[1.0; 101]),
            Err(Error::GridTooCoarse { .. })
        ));
    }
}
