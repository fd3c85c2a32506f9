//! Extended-precision reference values for the Mittag-Leffler function
//! `E_{a,b}(x) = sum_k x^k / Gamma(a k + b)` on the non-positive real axis.
//!
//! Two certified evaluators are provided:
//!
//! * [`ml_oracle`] sums the defining series. Once the term ratio drops below
//!   1/2 the tail is bounded by twice the next term, and the working precision
//!   is raised until the rounding bound also meets the request.
//! * [`ml_oracle_asymptotic`] uses the pole contributions plus the algebraic
//!   expansion `-sum_k x^{-k} / Gamma(b - a k)`. Collapsing the Hankel contour
//!   onto the branch cut shows the remainder after `N` terms is at most
//!   `Gamma(a (N+1) - b + 1) / (pi c_a lambda^{N+1})`, with `c_a = |sin(pi a)|`
//!   when `cos(pi a) < 0` and `1` otherwise.
//!
//! [`ml_reference`] picks whichever applies. This crate shares no code with the
//! double-precision evaluator it is used to check.

pub mod elementary;
pub mod float;

use thiserror::Error;

pub use float::Float;

use elementary::{cos_sin, exp, ln, pi, rgamma};

/// Largest `|x|^{1/a}` accepted by the series oracle.
pub const SERIES_SCALE_MAX: f64 = 100.0;

const MAX_PREC: u64 = 1 << 15;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("invalid parameters a={a}, b={b}")]
    InvalidParams { a: f64, b: f64 },
    #[error("argument {x} outside the oracle's range")]
    OutOfRange { x: f64 },
    #[error("could not certify {digits} digits at x={x}")]
    PrecisionExhausted { x: f64, digits: u32 },
    #[error("asymptotic expansion diverges before reaching the target at x={x}")]
    NotConvergent { x: f64 },
}

/// A reference value together with the number of decimal digits certified.
#[derive(Clone, Debug)]
pub struct Reference {
    pub value: Float,
    pub digits: u32,
}

impl Reference {
    pub fn to_f64(&self) -> f64 {
        self.value.to_f64()
    }
}

fn digits_to_bits(digits: u32) -> u64 {
    (digits as f64 * std::f64::consts::LOG2_10).ceil() as u64
}

/// `tol * |s| / 4` compared against `bound`, in log2 terms via f64 (the
/// quantities involved are comfortably inside the f64 exponent range once the
/// arguments are restricted as here; zero sums are never certified).
fn within(bound: f64, sum: &Float, digits: u32) -> bool {
    let s = sum.abs().to_f64();
    s > 0.0 && bound <= 10f64.powi(-(digits as i32)) * s / 4.0
}

fn validate(a: f64, b: f64, x: f64) -> Result<(), OracleError> {
    if !(a > 0.0 && a <= 2.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(OracleError::InvalidParams { a, b });
    }
    if !(x <= 0.0 && x.is_finite()) {
        return Err(OracleError::OutOfRange { x });
    }
    Ok(())
}

/// Series summation with certified truncation and rounding error.
pub fn ml_oracle(a: f64, b: f64, x: f64, digits: u32) -> Result<Reference, OracleError> {
    validate(a, b, x)?;
    if (-x).powf(1.0 / a) > SERIES_SCALE_MAX {
        return Err(OracleError::OutOfRange { x });
    }

    // log2 of the largest term, to size the working precision.
    let mut peak = 0.0f64;
    if x != 0.0 {
        let lx = (-x).ln();
        let mut k = 0u32;
        loop {
            let lt = k as f64 * lx - libm::lgamma(a * k as f64 + b);
            peak = peak.max(lt / std::f64::consts::LN_2);
            if k > 10 && lt / std::f64::consts::LN_2 < peak - 200.0 {
                break;
            }
            k += 1;
        }
    }
    let mut wp = digits_to_bits(digits) + peak.max(0.0).ceil() as u64 + 96;

    let af = Float::from_f64(a);
    let bf = Float::from_f64(b);
    let xf = Float::from_f64(x);
    let tol = 10f64.powi(-(digits as i32));

    while wp <= MAX_PREC {
        let exact = wp + 128;
        let mut sum = Float::zero();
        let mut abs_sum = 0.0f64;
        let mut power = Float::one();
        let mut term = rgamma(&bf, wp);
        let mut k: i64 = 0;
        let certified = loop {
            sum = sum.add(&term, wp);
            abs_sum += term.abs().to_f64();
            power = power.mul(&xf, wp);
            let arg = af.mul_i64(k + 1, exact).add(&bf, exact);
            let next = power.mul(&rgamma(&arg, wp), wp);
            let t_abs = term.abs().to_f64();
            let n_abs = next.abs().to_f64();
            // Term ratios decrease in k (log-convexity of Gamma), so a ratio of
            // at most 1/2 bounds the tail by twice the next term.
            let ratio_ok = x == 0.0 || (t_abs > 0.0 && n_abs <= 0.5 * t_abs);
            if ratio_ok && within(2.0 * n_abs, &sum, digits + 1) {
                break true;
            }
            if k > 200_000 {
                break false;
            }
            term = next;
            k += 1;
        };
        if !certified {
            return Err(OracleError::PrecisionExhausted { x, digits });
        }
        let rounding = abs_sum * ((k as f64 + 2.0) * 4.0 + 16_777_216.0) * 2f64.powi(-(wp as i32));
        let s = sum.abs().to_f64();
        if s > 0.0 && rounding <= tol * s / 2.0 {
            return Ok(Reference { value: sum, digits });
        }
        let deficit = if s > 0.0 {
            (rounding / (tol * s / 2.0)).log2().ceil().max(8.0) as u64
        } else {
            wp
        };
        wp += deficit + 16;
    }
    Err(OracleError::PrecisionExhausted { x, digits })
}

/// Pole contributions plus the certified algebraic expansion for large `-x`.
/// Requires `a != 1`, `b < a + 1` and `x < 0`.
pub fn ml_oracle_asymptotic(a: f64, b: f64, x: f64, digits: u32) -> Result<Reference, OracleError> {
    validate(a, b, x)?;
    if a == 1.0 || b >= a + 1.0 {
        return Err(OracleError::InvalidParams { a, b });
    }
    if x == 0.0 {
        return Err(OracleError::OutOfRange { x });
    }
    let lambda = -x;
    let tol = 10f64.powi(-(digits as i32));
    let mut wp = digits_to_bits(digits) + 128;

    let cos_pa = (std::f64::consts::PI * a).cos();
    let c_a = if cos_pa < 0.0 {
        (std::f64::consts::PI * a).sin().abs() * (1.0 - 1e-9)
    } else {
        1.0
    };
    let ln_lambda_f = lambda.ln();
    let remainder_bound = |n: i64| -> f64 {
        let lg = libm::lgamma(a * (n + 1) as f64 - b + 1.0);
        // 1% slack covers the f64 evaluation of the bound itself.
        1.01 * (lg - (n + 1) as f64 * ln_lambda_f).exp() / (std::f64::consts::PI * c_a)
    };

    while wp <= MAX_PREC {
        let af = Float::from_f64(a);
        let bf = Float::from_f64(b);
        let lam = Float::from_f64(lambda);
        let exact = wp + 256;

        let mut sum = if a > 1.0 {
            let theta = pi(wp).div(&af, wp);
            let p = exp(&ln(&lam, wp).div(&af, wp), wp);
            let (c, s) = cos_sin(&theta, wp);
            let one_minus_b = Float::one().sub(&bf, wp);
            let log_mag = p.mul(&c, wp).add(&one_minus_b.mul(&ln(&p, wp), wp), wp);
            let phase = p.mul(&s, wp + 64).add(&one_minus_b.mul(&theta, wp), wp + 64);
            let (cp, _) = cos_sin(&phase, wp);
            exp(&log_mag, wp).mul(&cp, wp).mul_i64(2, wp).div(&af, wp)
        } else {
            Float::zero()
        };
        let mut abs_sum = sum.abs().to_f64();

        let inv_neg_lambda = Float::one().div(&lam.neg(), wp);
        let mut power = Float::one();
        let mut n: i64 = 0;
        let mut prev_bound = f64::INFINITY;
        let ok = loop {
            let bound = remainder_bound(n);
            if within(bound, &sum, digits + 1) {
                break true;
            }
            if bound > prev_bound || n > 100_000 {
                break false;
            }
            prev_bound = bound;
            let k = n + 1;
            power = power.mul(&inv_neg_lambda, wp);
            let arg = bf.sub(&af.mul_i64(k, exact), exact);
            let term = power.mul(&rgamma(&arg, wp), wp).neg();
            abs_sum += term.abs().to_f64();
            sum = sum.add(&term, wp);
            n += 1;
        };
        if !ok {
            return Err(OracleError::NotConvergent { x });
        }
        let rounding = abs_sum * ((n as f64 + 2.0) * 4.0 + 16_777_216.0) * 2f64.powi(-(wp as i32));
        let s = sum.abs().to_f64();
        if s > 0.0 && rounding <= tol * s / 2.0 {
            return Ok(Reference { value: sum, digits });
        }
        wp *= 2;
    }
    Err(OracleError::PrecisionExhausted { x, digits })
}

/// Reference value on the whole non-positive axis.
pub fn ml_reference(a: f64, b: f64, x: f64, digits: u32) -> Result<Reference, OracleError> {
    validate(a, b, x)?;
    if a == 1.0 && b == 1.0 {
        let wp = digits_to_bits(digits) + 64;
        return Ok(Reference {
            value: exp(&Float::from_f64(x), wp),
            digits,
        });
    }
    if (-x).powf(1.0 / a) <= SERIES_SCALE_MAX {
        ml_oracle(a, b, x, digits)
    } else {
        ml_oracle_asymptotic(a, b, x, digits)
    }
}
