#![allow(dead_code)]

/// Fixed Mittag-Leffler test set: 500 points cycling through
/// a in {1.2, 1.5, 1.75}, b in {1, 2}, with x = 0 for the first six and
/// log-spaced over [-1e6, -1e-3] afterwards.
pub fn ml_test_set() -> Vec<(f64, f64, f64)> {
    let combos = [(1.2, 1.0), (1.2, 2.0), (1.5, 1.0), (1.5, 2.0), (1.75, 1.0), (1.75, 2.0)];
    (0..500)
        .map(|j| {
            let (a, b) = combos[j % 6];
            let x = if j < 6 {
                0.0
            } else {
                -(10f64.powf(-3.0 + 9.0 * (j - 6) as f64 / 493.0))
            };
            (a, b, x)
        })
        .collect()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// n log-spaced points on [lo, hi].
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Adaptive trapezoid rule with one Richardson step per panel (composite
/// Simpson on the finest panels). Panels are split until the corrected
/// halves agree with the corrected whole to `tol`.
pub fn adaptive_trapezoid(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn corrected(h: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        let whole = 0.5 * h * (fa + fb);
        let halves = 0.25 * h * (fa + 2.0 * fm + fb);
        halves + (halves - whole) / 3.0
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (fl, fr) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
        let left = corrected(m - a, fa, fl, fm);
        let right = corrected(b - m, fm, fr, fb);
        let diff = left + right - whole;
        if depth > 50 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, fl, fm, left, tol / 2.0, depth + 1) + rec(f, m, b, fm, fr, fb, right, tol / 2.0, depth + 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, corrected(b - a, fa, fm, fb), tol, 0)
}
