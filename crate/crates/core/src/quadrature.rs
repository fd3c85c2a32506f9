//! Quadrature rules shared by the special-function, resolvent and noise code.

use std::f64::consts::{FRAC_PI_2, PI};

/// Gauss–Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// n-point rule; nodes by Newton iteration on P_n, sorted ascending.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess, then Newton.
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos()
                * (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1e-300) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Result of an adaptive double-exponential rule.
///
/// The rules halve the step until two levels differ by at most
/// `rel_tol * l1`. The error roughly squares with every halving, so the
/// returned value is typically far more accurate than `rel_tol`.
#[derive(Clone, Copy, Debug)]
pub struct DeResult {
    pub value: f64,
    /// |I_h - I_{2h}| at the last level, a conservative error estimate.
    pub error: f64,
    /// h * sum |w f|, the scale against which cancellation is judged.
    pub l1: f64,
}

const DE_MAX_LEVEL: u32 = 9;

// Trapezoid in t with step halving, reusing previous nodes. `term(t)` returns
// w(t) f(x(t)).
fn de_refine<T: FnMut(f64) -> f64>(mut term: T, t_lo: f64, t_hi: f64, rel_tol: f64) -> DeResult {
    let h0 = 0.5;
    let k_lo = (t_lo / h0).floor() as i64;
    let k_hi = (t_hi / h0).ceil() as i64;

    let mut vals = Vec::with_capacity((k_hi - k_lo + 1) as usize);
    for k in k_lo..=k_hi {
        let v = term(k as f64 * h0);
        vals.push(if v.is_finite() { v } else { 0.0 });
    }
    let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cut = peak * 1e-20;
    // Trim the range to where the terms matter.
    let first = vals.iter().position(|v| v.abs() > cut).unwrap_or(0);
    let last = vals.iter().rposition(|v| v.abs() > cut).unwrap_or(vals.len() - 1);
    let lo = (k_lo + first as i64 - 1) as f64 * h0;
    let hi = (k_lo + last as i64 + 1) as f64 * h0;

    let mut sum: f64 = vals.iter().sum();
    let mut abs_sum: f64 = vals.iter().map(|v| v.abs()).sum();
    let mut h = h0;
    let mut value = h * sum;
    let mut error = f64::INFINITY;
    for _ in 0..DE_MAX_LEVEL {
        h *= 0.5;
        let mut t = lo + h;
        while t < hi {
            let v = term(t);
            if v.is_finite() {
                sum += v;
                abs_sum += v.abs();
            }
            t += 2.0 * h;
        }
        let next = h * sum;
        error = (next - value).abs();
        value = next;
        if error <= rel_tol * (h * abs_sum) {
            break;
        }
    }
    DeResult {
        value,
        error,
        l1: h * abs_sum,
    }
}

/// tanh-sinh rule on [a, b]. `f` receives the node and its distance to the
/// nearer endpoint, computed without cancellation.
pub fn tanh_sinh<F: FnMut(f64, f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> DeResult {
    let half = 0.5 * (b - a);
    let term = |t: f64| {
        let u = FRAC_PI_2 * t.sinh();
        let ch = u.cosh();
        let w = half * FRAC_PI_2 * t.cosh() / (ch * ch);
        // distance to the endpoint on the side of t
        let d = half * 2.0 / (1.0 + (2.0 * u.abs()).exp());
        let x = if t < 0.0 { a + d } else { b - d };
        if d <= 0.0 {
            return 0.0;
        }
        w * f(x, d)
    };
    de_refine(term, -3.5, 3.5, rel_tol)
}

/// exp-sinh rule on [a, inf) for integrands with at least exponential decay.
pub fn exp_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, rel_tol: f64) -> DeResult {
    let term = |t: f64| {
        let u = FRAC_PI_2 * t.sinh();
        let e = u.exp();
        if e == 0.0 || !e.is_finite() {
            return 0.0;
        }
        let w = e * FRAC_PI_2 * t.cosh();
        w * f(a + e)
    };
    de_refine(term, -4.5, 3.0, rel_tol)
}
