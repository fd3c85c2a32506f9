//! Minimal binary floating point on top of `BigInt`.
//!
//! A value is `mant * 2^exp`. Every operation takes the working precision
//! (in bits) explicitly and rounds the mantissa to at most that many bits,
//! half away from zero. Nothing here is fast; it only has to be right.

use std::cmp::Ordering;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, Debug)]
pub struct Float {
    mant: BigInt,
    exp: i64,
}

fn round_mant(mant: BigInt, exp: i64, prec: u64) -> Float {
    if mant.is_zero() {
        return Float::zero();
    }
    let bits = mant.bits();
    if bits <= prec {
        return Float { mant, exp };
    }
    let shift = bits - prec;
    let neg = mant.is_negative();
    let mag = mant.abs();
    let half = BigInt::one() << (shift - 1);
    let mag = (mag + half) >> shift;
    let mant = if neg { -mag } else { mag };
    Float {
        mant,
        exp: exp + shift as i64,
    }
}

impl Float {
    pub fn zero() -> Self {
        Float {
            mant: BigInt::zero(),
            exp: 0,
        }
    }

    pub fn one() -> Self {
        Float::from_i64(1)
    }

    pub fn from_i64(v: i64) -> Self {
        Float {
            mant: BigInt::from(v),
            exp: 0,
        }
    }

    pub fn from_bigint(v: BigInt) -> Self {
        Float { mant: v, exp: 0 }
    }

    /// Exact conversion; panics on non-finite input.
    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite(), "non-finite value {v}");
        if v == 0.0 {
            return Float::zero();
        }
        let bits = v.to_bits();
        let sign = if bits >> 63 == 1 { -1i64 } else { 1 };
        let biased = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if biased == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        Float {
            mant: BigInt::from(m) * sign,
            exp: e,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mant.is_negative()
    }

    pub fn neg(&self) -> Self {
        Float {
            mant: -self.mant.clone(),
            exp: self.exp,
        }
    }

    pub fn abs(&self) -> Self {
        Float {
            mant: self.mant.abs(),
            exp: self.exp,
        }
    }

    /// Multiply by `2^k` exactly.
    pub fn ldexp(&self, k: i64) -> Self {
        Float {
            mant: self.mant.clone(),
            exp: self.exp + k,
        }
    }

    /// floor(log2(|x|)); `None` for zero.
    pub fn log2_floor(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.exp + self.mant.bits() as i64 - 1)
        }
    }

    pub fn add(&self, o: &Float, prec: u64) -> Float {
        if self.is_zero() {
            return round_mant(o.mant.clone(), o.exp, prec);
        }
        if o.is_zero() {
            return round_mant(self.mant.clone(), self.exp, prec);
        }
        // Skip an operand that cannot affect the rounded result.
        let (ta, tb) = (self.log2_floor().unwrap(), o.log2_floor().unwrap());
        let margin = prec as i64 + 4;
        if ta - tb > margin {
            return round_mant(self.mant.clone(), self.exp, prec);
        }
        if tb - ta > margin {
            return round_mant(o.mant.clone(), o.exp, prec);
        }
        let e = self.exp.min(o.exp);
        let a = &self.mant << (self.exp - e) as usize;
        let b = &o.mant << (o.exp - e) as usize;
        round_mant(a + b, e, prec)
    }

    pub fn sub(&self, o: &Float, prec: u64) -> Float {
        self.add(&o.neg(), prec)
    }

    pub fn mul(&self, o: &Float, prec: u64) -> Float {
        round_mant(&self.mant * &o.mant, self.exp + o.exp, prec)
    }

    pub fn mul_i64(&self, k: i64, prec: u64) -> Float {
        round_mant(&self.mant * BigInt::from(k), self.exp, prec)
    }

    pub fn div(&self, o: &Float, prec: u64) -> Float {
        assert!(!o.is_zero(), "division by zero");
        if self.is_zero() {
            return Float::zero();
        }
        // Scale the dividend so the integer quotient carries prec + 2 bits.
        let want = prec as i64 + 2 + o.mant.bits() as i64 - self.mant.bits() as i64;
        let shift = want.max(0);
        let num = &self.mant << shift as usize;
        let q = num.div_floor(&o.mant);
        round_mant(q, self.exp - o.exp - shift, prec)
    }

    pub fn div_i64(&self, k: i64, prec: u64) -> Float {
        self.div(&Float::from_i64(k), prec)
    }

    pub fn cmp_abs(&self, o: &Float) -> Ordering {
        match (self.is_zero(), o.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let e = self.exp.min(o.exp);
        let a = self.mant.abs() << (self.exp - e) as usize;
        let b = o.mant.abs() << (o.exp - e) as usize;
        a.cmp(&b)
    }

    /// Round to the nearest integer (half away from zero).
    pub fn round_to_bigint(&self) -> BigInt {
        if self.exp >= 0 {
            return &self.mant << self.exp as usize;
        }
        let shift = (-self.exp) as u64;
        let neg = self.mant.is_negative();
        let mag = self.mant.abs();
        let half = BigInt::one() << (shift - 1);
        let r = (mag + half) >> shift;
        if neg {
            -r
        } else {
            r
        }
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.mant.bits();
        let (m, e) = if bits > 64 {
            let shift = bits - 64;
            (self.mant.abs() >> shift, self.exp + shift as i64)
        } else {
            (self.mant.abs(), self.exp)
        };
        let m = m.to_u64().expect("64-bit mantissa") as f64;
        let e = e.clamp(i32::MIN as i64, i32::MAX as i64) as i32;
        let v = libm::scalbn(m, e);
        if self.mant.sign() == Sign::Minus {
            -v
        } else {
            v
        }
    }

    /// Fixed-point decimal rendering with `frac_digits` digits after the point.
    pub fn to_decimal_fixed(&self, frac_digits: u32) -> String {
        let scale = BigInt::from(10u32).pow(frac_digits);
        let prec = self.mant.bits() + 4 * frac_digits as u64 + 64;
        let scaled = self.mul(&Float::from_bigint(scale), prec).round_to_bigint();
        let neg = scaled.is_negative();
        let digits = scaled.abs().to_string();
        let width = frac_digits as usize + 1;
        let digits = if digits.len() < width {
            format!("{}{}", "0".repeat(width - digits.len()), digits)
        } else {
            digits
        };
        let (int_part, frac_part) = digits.split_at(digits.len() - frac_digits as usize);
        format!("{}{}.{}", if neg { "-" } else { "" }, int_part, frac_part)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_roundtrip_is_exact() {
        for v in [1.0, -0.1, 1.2, 1e-300, 5e-324, 123456.789, -1e300] {
            assert_eq!(Float::from_f64(v).to_f64(), v);
        }
    }

    #[test]
    fn arithmetic_matches_f64_on_simple_values() {
        let p = 200;
        let a = Float::from_f64(1.5);
        let b = Float::from_f64(-0.25);
        assert_eq!(a.add(&b, p).to_f64(), 1.25);
        assert_eq!(a.mul(&b, p).to_f64(), -0.375);
        assert_eq!(a.div(&b, p).to_f64(), -6.0);
        let third = Float::one().div_i64(3, p);
        assert_eq!(third.to_f64(), 1.0 / 3.0);
    }

    #[test]
    fn decimal_rendering() {
        let p = 300;
        let x = Float::one().div_i64(8, p);
        assert_eq!(x.to_decimal_fixed(5), "0.12500");
        let y = Float::from_i64(-2).div_i64(3, p);
        assert_eq!(y.to_decimal_fixed(4), "-0.6667");
    }
}
