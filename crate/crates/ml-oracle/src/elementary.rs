//! exp, ln, pi, cos/sin and the gamma function on [`Float`].
//!
//! Each function works internally with 64 guard bits above the requested
//! precision, which is ample for the modest argument ranges the oracle needs.

use std::cell::RefCell;
use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};

use crate::float::Float;

const GUARD: u64 = 64;

/// Number of Stirling correction terms; B_2 .. B_{2K}.
const STIRLING_TERMS: usize = 30;

thread_local! {
    static CONSTS: RefCell<HashMap<u64, (Float, Float)>> = RefCell::new(HashMap::new());
    static BERNOULLI: RefCell<Option<Vec<BigRational>>> = const { RefCell::new(None) };
}

/// atanh(z) by its Taylor series; intended for |z| <= 1/3.
fn atanh_series(z: &Float, wp: u64) -> Float {
    let z2 = z.mul(z, wp);
    let mut power = z.clone();
    let mut sum = z.clone();
    let limit = -(wp as i64) - 8;
    let mut j = 1i64;
    loop {
        power = power.mul(&z2, wp);
        let term = power.div_i64(2 * j + 1, wp);
        match term.log2_floor() {
            Some(l) if l >= limit => sum = sum.add(&term, wp),
            _ => break,
        }
        j += 1;
    }
    sum
}

/// atan(1/q) for integer q >= 2.
fn atan_inv(q: i64, wp: u64) -> Float {
    let z = Float::one().div_i64(q, wp);
    let z2 = z.mul(&z, wp);
    let mut power = z.clone();
    let mut sum = z;
    let limit = -(wp as i64) - 8;
    let mut j = 1i64;
    loop {
        power = power.mul(&z2, wp);
        let term = power.div_i64(2 * j + 1, wp);
        match term.log2_floor() {
            Some(l) if l >= limit => {
                sum = if j % 2 == 1 {
                    sum.sub(&term, wp)
                } else {
                    sum.add(&term, wp)
                };
            }
            _ => break,
        }
        j += 1;
    }
    sum
}

/// (ln 2, pi) at precision `prec`, memoised per thread.
fn constants(prec: u64) -> (Float, Float) {
    CONSTS.with(|c| {
        if let Some(v) = c.borrow().get(&prec) {
            return v.clone();
        }
        let wp = prec + GUARD;
        let third = Float::one().div_i64(3, wp);
        let ln2 = atanh_series(&third, wp).ldexp(1);
        let pi = atan_inv(5, wp)
            .mul_i64(16, wp)
            .sub(&atan_inv(239, wp).mul_i64(4, wp), wp);
        let v = (ln2, pi);
        c.borrow_mut().insert(prec, v.clone());
        v
    })
}

pub fn ln2(prec: u64) -> Float {
    constants(prec).0
}

pub fn pi(prec: u64) -> Float {
    constants(prec).1
}

pub fn exp(x: &Float, prec: u64) -> Float {
    if x.is_zero() {
        return Float::one();
    }
    let xf = x.to_f64();
    assert!(xf.abs() < 1e15, "exp argument out of range");
    let n = (xf / std::f64::consts::LN_2).round() as i64;
    let extra = 64 - (n.unsigned_abs().leading_zeros() as u64);
    let wp = prec + GUARD + extra;
    let r = x.sub(&ln2(wp).mul_i64(n, wp), wp);
    const HALVINGS: i64 = 24;
    let r = r.ldexp(-HALVINGS);
    let mut sum = Float::one();
    let mut term = Float::one();
    let limit = -(wp as i64) - 8;
    let mut k = 1i64;
    loop {
        term = term.mul(&r, wp).div_i64(k, wp);
        match term.log2_floor() {
            Some(l) if l >= limit => sum = sum.add(&term, wp),
            _ => break,
        }
        k += 1;
    }
    for _ in 0..HALVINGS {
        sum = sum.mul(&sum, wp);
    }
    sum.ldexp(n).add(&Float::zero(), prec)
}

pub fn ln(x: &Float, prec: u64) -> Float {
    assert!(!x.is_zero() && !x.is_negative(), "ln of non-positive value");
    let wp = prec + GUARD;
    let k = x.log2_floor().unwrap();
    let y = x.ldexp(-k);
    let one = Float::one();
    let z = y.sub(&one, wp).div(&y.add(&one, wp), wp);
    let ln_y = atanh_series(&z, wp).ldexp(1);
    ln_y.add(&ln2(wp + 64).mul_i64(k, wp), prec)
}

/// (cos x, sin x).
pub fn cos_sin(x: &Float, prec: u64) -> (Float, Float) {
    let mag = x.log2_floor().unwrap_or(0).max(0) as u64;
    let wp = prec + GUARD + mag;
    let half_pi = pi(wp).ldexp(-1);
    let n = (x.to_f64() / std::f64::consts::FRAC_PI_2).round() as i64;
    let r = x.sub(&half_pi.mul_i64(n, wp), wp);
    let r2 = r.mul(&r, wp);
    let limit = -(wp as i64) - 8;

    let mut c = Float::one();
    let mut term = Float::one();
    let mut k = 1i64;
    loop {
        term = term.mul(&r2, wp).div_i64((2 * k - 1) * (2 * k), wp).neg();
        match term.log2_floor() {
            Some(l) if l >= limit => c = c.add(&term, wp),
            _ => break,
        }
        k += 1;
    }
    let mut s = r.clone();
    let mut term = r;
    let mut k = 1i64;
    loop {
        term = term.mul(&r2, wp).div_i64((2 * k) * (2 * k + 1), wp).neg();
        match term.log2_floor() {
            Some(l) if l >= limit => s = s.add(&term, wp),
            _ => break,
        }
        k += 1;
    }
    let (c, s) = match n.rem_euclid(4) {
        0 => (c, s),
        1 => (s.neg(), c),
        2 => (c.neg(), s.neg()),
        _ => (s, c.neg()),
    };
    (c.add(&Float::zero(), prec), s.add(&Float::zero(), prec))
}

/// Exact Bernoulli numbers B_0 ..= B_n (Akiyama-Tanigawa, B_1 = +1/2).
fn bernoulli_table(n: usize) -> Vec<BigRational> {
    let mut a: Vec<BigRational> = Vec::with_capacity(n + 1);
    let mut out = Vec::with_capacity(n + 1);
    for m in 0..=n {
        a.push(BigRational::new(BigInt::one(), BigInt::from(m as u64 + 1)));
        for j in (1..=m).rev() {
            let diff = &a[j - 1] - &a[j];
            a[j - 1] = diff * BigRational::from_integer(BigInt::from(j as u64));
        }
        out.push(a[0].clone());
    }
    out
}

fn bernoulli_even(k: usize) -> BigRational {
    BERNOULLI.with(|b| {
        let mut b = b.borrow_mut();
        if b.is_none() {
            *b = Some(bernoulli_table(2 * STIRLING_TERMS + 2));
        }
        b.as_ref().unwrap()[2 * k].clone()
    })
}

fn rational_to_float(r: &BigRational, prec: u64) -> Float {
    Float::from_bigint(r.numer().clone()).div(&Float::from_bigint(r.denom().clone()), prec)
}

/// Whether `y` is an integer <= 0 (a pole of gamma).
pub fn is_gamma_pole(y: &Float) -> bool {
    if y.is_zero() {
        return true;
    }
    if !y.is_negative() {
        return false;
    }
    let r = y.round_to_bigint();
    y.sub(&Float::from_bigint(r), 4096).is_zero()
}

/// ln Gamma(y) for y >= 1/2 via upward shift and the Stirling series.
fn ln_gamma_positive(y: &Float, prec: u64) -> Float {
    let wp = prec + GUARD;
    // The first omitted Stirling term bounds the remainder for real z > 0.
    let b_next = bernoulli_even(STIRLING_TERMS + 1);
    let two_k = 2 * (STIRLING_TERMS + 1) as i64;
    let ln_b = {
        let f = rational_to_float(&b_next.abs(), 128).to_f64();
        f.ln() - ((two_k * (two_k - 1)) as f64).ln()
    };
    let ln_z_min = (ln_b + (wp as f64 + 8.0) * std::f64::consts::LN_2) / (two_k - 1) as f64;
    let z_min = ln_z_min.exp().ceil() + 1.0;
    let yf = y.to_f64();
    let shift = if yf < z_min {
        (z_min - yf).ceil() as i64
    } else {
        0
    };

    let mut prod = Float::one();
    let mut z = y.clone();
    for _ in 0..shift {
        prod = prod.mul(&z, wp);
        z = z.add(&Float::one(), wp + 64);
    }

    let ln_z = ln(&z, wp);
    let half = Float::one().ldexp(-1);
    let mut acc = z.sub(&half, wp).mul(&ln_z, wp).sub(&z, wp);
    let two_pi = pi(wp).ldexp(1);
    acc = acc.add(&ln(&two_pi, wp).ldexp(-1), wp);

    let z2 = z.mul(&z, wp);
    let mut zpow = z.clone();
    for k in 1..=STIRLING_TERMS {
        let b = rational_to_float(&bernoulli_even(k), wp);
        let denom = Float::from_i64((2 * k * (2 * k - 1)) as i64).mul(&zpow, wp);
        acc = acc.add(&b.div(&denom, wp), wp);
        zpow = zpow.mul(&z2, wp);
    }
    acc.sub(&ln(&prod, wp), prec)
}

/// Gamma(y); panics at poles.
pub fn gamma(y: &Float, prec: u64) -> Float {
    assert!(!is_gamma_pole(y), "gamma pole");
    let wp = prec + GUARD;
    if y.to_f64() < 0.5 {
        // Reflection: Gamma(y) = pi / (sin(pi y) Gamma(1 - y)).
        let p = pi(wp);
        let (_, s) = cos_sin(&p.mul(y, wp), wp);
        let g = gamma(&Float::one().sub(y, wp), wp);
        return p.div(&s.mul(&g, wp), prec);
    }
    let lg = ln_gamma_positive(y, wp + 32);
    exp(&lg, prec)
}

/// 1/Gamma(y), zero at the poles.
pub fn rgamma(y: &Float, prec: u64) -> Float {
    if is_gamma_pole(y) {
        return Float::zero();
    }
    Float::one().div(&gamma(y, prec + 8), prec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u64 = 256;

    fn close(a: &Float, b: f64, rel: f64) -> bool {
        (a.to_f64() - b).abs() <= rel * b.abs()
    }

    #[test]
    fn constants_have_known_digits() {
        assert_eq!(
            pi(P).to_decimal_fixed(40),
            "3.1415926535897932384626433832795028841972"
        );
        assert_eq!(
            ln2(P).to_decimal_fixed(40),
            "0.6931471805599453094172321214581765680755"
        );
    }

    #[test]
    fn exp_and_ln_are_inverse() {
        for v in [-700.5, -1.0, 0.3, 2.0, 50.25] {
            let x = Float::from_f64(v);
            let back = ln(&exp(&x, P), P);
            assert!(back.sub(&x, P).abs().log2_floor().unwrap_or(-10_000) < -200);
        }
        assert_eq!(
            exp(&Float::from_i64(-1), P).to_decimal_fixed(30),
            "0.367879441171442321595523770161"
        );
    }

    #[test]
    fn cos_sin_known_values() {
        let (c, s) = cos_sin(&Float::from_i64(1), P);
        assert_eq!(c.to_decimal_fixed(30), "0.540302305868139717400936607443");
        assert_eq!(s.to_decimal_fixed(30), "0.841470984807896506652502321630");
        let (c, _) = cos_sin(&Float::from_f64(1000.0), P);
        assert!(close(&c, 1000f64.cos(), 1e-13));
    }

    #[test]
    fn gamma_known_values() {
        assert_eq!(gamma(&Float::from_i64(5), P).to_decimal_fixed(30), "24.000000000000000000000000000000");
        let g = gamma(&Float::from_f64(0.5), P);
        let sqrt_pi = "1.772453850905516027298167483341";
        assert_eq!(g.to_decimal_fixed(30), sqrt_pi);
        // Gamma(-1/2) = -2 sqrt(pi)
        let g = gamma(&Float::from_f64(-0.5), P);
        assert_eq!(g.to_decimal_fixed(30), "-3.544907701811032054596334966682");
        assert!(rgamma(&Float::from_i64(-3), P).is_zero());
        assert!(close(&gamma(&Float::from_f64(171.5), P), libm::tgamma(171.5), 1e-13));
    }
}
