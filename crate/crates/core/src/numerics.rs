//! Arbitrary-precision real and complex numbers.
//!
//! [`BigReal`] is a thin wrapper over an MPFR float; [`BigComplex`] is a pair
//! of them carrying the same precision. Every operation that needs a
//! precision takes it explicitly: the engine runs the same pipeline at a
//! 100-bit pilot precision and at production precision, so there is no
//! global precision state anywhere in the crate.
//!
//! The text records written by [`BigReal::to_record`] are bit-exact and are
//! what worker processes exchange through row files.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use rug::float::{Constant, Round};
use rug::ops::Pow;
use rug::{Assign, Float, Integer};
use thiserror::Error;

/// Smallest precision accepted by the transcendental kernels.
pub const MIN_PRECISION: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericsError {
    #[error("exponent range exceeded: {0}")]
    Range(String),
    #[error("precision {0} is below the minimum of {MIN_PRECISION} bits")]
    PrecisionTooSmall(u32),
    #[error("malformed number record: {0}")]
    Parse(String),
}

/// Arbitrary-precision real number with its own working precision.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct BigReal(Float);

impl BigReal {
    pub fn zero(prec: u32) -> Self {
        BigReal(Float::new(prec))
    }

    pub fn one(prec: u32) -> Self {
        BigReal(Float::with_val(prec, 1))
    }

    pub fn from_i64(v: i64, prec: u32) -> Self {
        BigReal(Float::with_val(prec, v))
    }

    pub fn from_f64(v: f64, prec: u32) -> Self {
        BigReal(Float::with_val(prec, v))
    }

    pub fn from_integer(v: &Integer, prec: u32) -> Self {
        BigReal(Float::with_val(prec, v))
    }

    /// `num / den` rounded to `prec` bits.
    pub fn from_ratio(num: i64, den: i64, prec: u32) -> Self {
        let mut x = Float::with_val(prec, num);
        x /= den;
        BigReal(x)
    }

    pub fn pi(prec: u32) -> Self {
        BigReal(Float::with_val(prec, Constant::Pi))
    }

    #[cfg(test)]
    pub(crate) fn from_float(f: Float) -> Self {
        BigReal(f)
    }

    pub fn prec(&self) -> u32 {
        self.0.prec()
    }

    /// Copy rounded (or padded) to `prec` bits.
    pub fn with_prec(&self, prec: u32) -> Self {
        BigReal(Float::with_val(prec, &self.0))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    /// -1, 0 or 1.
    pub fn signum(&self) -> i32 {
        match self.0.cmp0() {
            Some(Ordering::Less) => -1,
            Some(Ordering::Greater) => 1,
            _ => 0,
        }
    }

    pub fn abs(&self) -> Self {
        BigReal(self.0.clone().abs())
    }

    pub fn sqr(&self) -> Self {
        BigReal(Float::with_val(self.prec(), self.0.square_ref()))
    }

    pub fn sqrt(&self) -> Self {
        BigReal(Float::with_val(self.prec(), self.0.sqrt_ref()))
    }

    pub fn recip(&self) -> Self {
        BigReal(Float::with_val(self.prec(), self.0.recip_ref()))
    }

    pub fn exp(&self) -> Self {
        BigReal(Float::with_val(self.prec(), self.0.exp_ref()))
    }

    pub fn ln(&self) -> Self {
        BigReal(Float::with_val(self.prec(), self.0.ln_ref()))
    }

    pub fn powi(&self, n: i32) -> Self {
        BigReal(Float::with_val(self.prec(), (&self.0).pow(n)))
    }

    pub fn mul_i64(&self, k: i64) -> Self {
        BigReal(Float::with_val(self.prec(), &self.0 * k))
    }

    pub fn div_i64(&self, k: i64) -> Self {
        BigReal(Float::with_val(self.prec(), &self.0 / k))
    }

    /// `self * 2^k`, exact.
    pub fn mul_pow2(&self, k: i32) -> Self {
        let mut x = self.0.clone();
        x <<= k;
        BigReal(x)
    }

    /// log2 |x| as a double; `-inf` for zero.
    pub fn log2_abs(&self) -> f64 {
        if self.0.is_zero() {
            return f64::NEG_INFINITY;
        }
        let (m, e) = self.0.to_f64_exp();
        e as f64 + m.abs().log2()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    /// Nearest integer and the absolute rounding residual `|x - round(x)|`.
    pub fn round_to_integer(&self) -> (Integer, BigReal) {
        let rounded = Float::with_val(self.prec().max(64), self.0.round_ref());
        let residual = Float::with_val(self.prec(), &self.0 - &rounded).abs();
        let int = rounded
            .to_integer()
            .expect("finite value rounds to an integer");
        (int, BigReal(residual))
    }

    pub fn max_abs<'a>(values: impl IntoIterator<Item = &'a BigReal>) -> Option<BigReal> {
        values
            .into_iter()
            .map(|v| v.abs())
            .max_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
    }

    /// One-line bit-exact record `R <prec> <sign> <hex-mantissa> <exp2>`.
    ///
    /// The value is `sign * mantissa * 2^exp2`; zero is `R <prec> 0 0 0`.
    pub fn to_record(&self) -> String {
        let prec = self.prec();
        match self.0.to_integer_exp() {
            Some((m, e)) if m.cmp0() != std::cmp::Ordering::Equal => {
                let sign = if m < 0 { "-1" } else { "1" };
                let mag = m.abs();
                format!("R {} {} {} {}", prec, sign, mag.to_string_radix(16), e)
            }
            _ => format!("R {} 0 0 0", prec),
        }
    }

    pub fn from_record(line: &str) -> Result<Self, NumericsError> {
        let bad = || NumericsError::Parse(line.to_string());
        let mut it = line.split_ascii_whitespace();
        if it.next() != Some("R") {
            return Err(bad());
        }
        let prec: u32 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let sign: i32 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let mant = it
            .next()
            .and_then(|s| Integer::from_str_radix(s, 16).ok())
            .ok_or_else(bad)?;
        let exp: i32 = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if it.next().is_some() || prec < rug::float::prec_min() || prec > rug::float::prec_max() {
            return Err(bad());
        }
        if sign == 0 {
            if mant.cmp0() != std::cmp::Ordering::Equal {
                return Err(bad());
            }
            return Ok(BigReal::zero(prec));
        }
        if !(sign == 1 || sign == -1) || mant.cmp0() == std::cmp::Ordering::Equal || mant.significant_bits() > prec {
            return Err(bad());
        }
        let mut x = Float::with_val(prec, &mant);
        x <<= exp;
        if sign < 0 {
            x = -x;
        }
        Ok(BigReal(x))
    }
}

impl fmt::Debug for BigReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.to_string_radix(10, Some(24)))
    }
}

impl fmt::Display for BigReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digits = f.precision().unwrap_or(20);
        write!(f, "{}", self.0.to_string_radix(10, Some(digits)))
    }
}

macro_rules! real_binop {
    ($tr:ident, $m:ident, $op:tt) => {
        impl<'a> $tr<&'a BigReal> for &'a BigReal {
            type Output = BigReal;
            fn $m(self, rhs: &'a BigReal) -> BigReal {
                let prec = self.prec().max(rhs.prec());
                BigReal(Float::with_val(prec, &self.0 $op &rhs.0))
            }
        }
        impl $tr<BigReal> for BigReal {
            type Output = BigReal;
            fn $m(self, rhs: BigReal) -> BigReal {
                (&self).$m(&rhs)
            }
        }
    };
}

real_binop!(Add, add, +);
real_binop!(Sub, sub, -);
real_binop!(Mul, mul, *);
real_binop!(Div, div, /);

impl Neg for BigReal {
    type Output = BigReal;
    fn neg(self) -> BigReal {
        BigReal(-self.0)
    }
}

impl Neg for &BigReal {
    type Output = BigReal;
    fn neg(self) -> BigReal {
        BigReal(Float::with_val(self.prec(), -&self.0))
    }
}

/// Arbitrary-precision complex number; both parts share one precision.
#[derive(Clone, PartialEq)]
pub struct BigComplex {
    re: BigReal,
    im: BigReal,
}

impl BigComplex {
    /// Builds `re + i*im` at `prec` bits.
    pub fn new(re: &BigReal, im: &BigReal, prec: u32) -> Self {
        BigComplex {
            re: re.with_prec(prec),
            im: im.with_prec(prec),
        }
    }

    pub(crate) fn from_parts(re: BigReal, im: BigReal) -> Self {
        debug_assert_eq!(re.prec(), im.prec());
        BigComplex { re, im }
    }

    pub fn zero(prec: u32) -> Self {
        BigComplex::from_parts(BigReal::zero(prec), BigReal::zero(prec))
    }

    pub fn one(prec: u32) -> Self {
        BigComplex::from_parts(BigReal::one(prec), BigReal::zero(prec))
    }

    pub fn i(prec: u32) -> Self {
        BigComplex::from_parts(BigReal::zero(prec), BigReal::one(prec))
    }

    pub fn from_real(x: &BigReal) -> Self {
        BigComplex::from_parts(x.clone(), BigReal::zero(x.prec()))
    }

    /// The purely imaginary number `i*y`.
    pub fn from_imag(y: &BigReal) -> Self {
        BigComplex::from_parts(BigReal::zero(y.prec()), y.clone())
    }

    pub fn from_f64(re: f64, im: f64, prec: u32) -> Self {
        BigComplex::from_parts(BigReal::from_f64(re, prec), BigReal::from_f64(im, prec))
    }

    pub fn from_i64(re: i64, prec: u32) -> Self {
        BigComplex::from_parts(BigReal::from_i64(re, prec), BigReal::zero(prec))
    }

    pub fn re(&self) -> &BigReal {
        &self.re
    }

    pub fn im(&self) -> &BigReal {
        &self.im
    }

    pub fn prec(&self) -> u32 {
        self.re.prec()
    }

    pub fn with_prec(&self, prec: u32) -> Self {
        BigComplex::from_parts(self.re.with_prec(prec), self.im.with_prec(prec))
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    pub fn conj(&self) -> Self {
        BigComplex::from_parts(self.re.clone(), -&self.im)
    }

    pub fn norm_sqr(&self) -> BigReal {
        let prec = self.prec();
        let mut s = Float::with_val(prec, self.re.0.square_ref());
        s += Float::with_val(prec, self.im.0.square_ref());
        BigReal(s)
    }

    pub fn abs(&self) -> BigReal {
        BigReal(Float::with_val(self.prec(), self.re.0.hypot_ref(&self.im.0)))
    }

    /// log2 |z| as a double; `-inf` for zero.
    pub fn log2_abs(&self) -> f64 {
        let a = self.re.log2_abs();
        let b = self.im.log2_abs();
        let m = a.max(b);
        if m == f64::NEG_INFINITY {
            return m;
        }
        m + 0.5 * (1.0 + 2f64.powf(2.0 * (a.min(b) - m))).log2()
    }

    pub fn scale(&self, k: &BigReal) -> Self {
        let prec = self.prec();
        BigComplex::from_parts(
            BigReal(Float::with_val(prec, &self.re.0 * &k.0)),
            BigReal(Float::with_val(prec, &self.im.0 * &k.0)),
        )
    }

    pub fn scale_i64(&self, k: i64) -> Self {
        BigComplex::from_parts(self.re.mul_i64(k), self.im.mul_i64(k))
    }

    pub fn div_i64(&self, k: i64) -> Self {
        BigComplex::from_parts(self.re.div_i64(k), self.im.div_i64(k))
    }

    /// Multiplication by `i`.
    pub fn mul_i(&self) -> Self {
        BigComplex::from_parts(-&self.im, self.re.clone())
    }

    pub fn sqr(&self) -> Self {
        let prec = self.prec();
        let (a, b) = (&self.re.0, &self.im.0);
        let mut re = Float::with_val(prec, a.square_ref());
        re -= Float::with_val(prec, b.square_ref());
        let mut im = Float::with_val(prec, a * b);
        im <<= 1;
        BigComplex::from_parts(BigReal(re), BigReal(im))
    }

    /// In-place `self *= rhs` at the precision of `self`.
    pub fn mul_assign(&mut self, rhs: &BigComplex) {
        let prec = self.prec();
        let (a, b) = (&self.re.0, &self.im.0);
        let (c, d) = (&rhs.re.0, &rhs.im.0);
        let mut re = Float::with_val(prec, a * c);
        re -= Float::with_val(prec, b * d);
        let mut im = Float::with_val(prec, a * d);
        im += Float::with_val(prec, b * c);
        self.re.0 = re;
        self.im.0 = im;
    }

    pub fn add_assign(&mut self, rhs: &BigComplex) {
        self.re.0 += &rhs.re.0;
        self.im.0 += &rhs.im.0;
    }

    pub fn sub_assign(&mut self, rhs: &BigComplex) {
        self.re.0 -= &rhs.re.0;
        self.im.0 -= &rhs.im.0;
    }

    pub fn recip(&self) -> Self {
        let n = self.norm_sqr();
        BigComplex::from_parts(&self.re / &n, -(&self.im / &n))
    }

    /// `z^n` by binary powering, `n >= 0`.
    pub fn powu(&self, mut n: u32) -> Self {
        let mut acc = BigComplex::one(self.prec());
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                acc.mul_assign(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.sqr();
            }
        }
        acc
    }

    /// Two bit-exact records, each `C ` followed by a [`BigReal`] record.
    pub fn to_records(&self) -> [String; 2] {
        [
            format!("C {}", self.re.to_record()),
            format!("C {}", self.im.to_record()),
        ]
    }

    pub fn from_records(re_line: &str, im_line: &str) -> Result<Self, NumericsError> {
        let strip = |l: &str| -> Result<BigReal, NumericsError> {
            let rest = l
                .strip_prefix("C ")
                .ok_or_else(|| NumericsError::Parse(l.to_string()))?;
            BigReal::from_record(rest)
        };
        let re = strip(re_line)?;
        let im = strip(im_line)?;
        if re.prec() != im.prec() {
            return Err(NumericsError::Parse(format!(
                "complex parts disagree on precision: {} / {}",
                re.prec(),
                im.prec()
            )));
        }
        Ok(BigComplex { re, im })
    }
}

impl fmt::Debug for BigComplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?} + {:?}i)", self.re, self.im)
    }
}

impl<'a> Add<&'a BigComplex> for &'a BigComplex {
    type Output = BigComplex;
    fn add(self, rhs: &'a BigComplex) -> BigComplex {
        BigComplex::from_parts(&self.re + &rhs.re, &self.im + &rhs.im)
    }
}

impl<'a> Sub<&'a BigComplex> for &'a BigComplex {
    type Output = BigComplex;
    fn sub(self, rhs: &'a BigComplex) -> BigComplex {
        BigComplex::from_parts(&self.re - &rhs.re, &self.im - &rhs.im)
    }
}

impl<'a> Mul<&'a BigComplex> for &'a BigComplex {
    type Output = BigComplex;
    fn mul(self, rhs: &'a BigComplex) -> BigComplex {
        let mut out = if rhs.prec() > self.prec() {
            self.with_prec(rhs.prec())
        } else {
            self.clone()
        };
        out.mul_assign(rhs);
        out
    }
}

impl<'a> Div<&'a BigComplex> for &'a BigComplex {
    type Output = BigComplex;
    fn div(self, rhs: &'a BigComplex) -> BigComplex {
        let prec = self.prec().max(rhs.prec());
        let inv = rhs.with_prec(prec).recip();
        self * &inv
    }
}

impl Neg for &BigComplex {
    type Output = BigComplex;
    fn neg(self) -> BigComplex {
        BigComplex::from_parts(-&self.re, -&self.im)
    }
}

fn check_prec(prec: u32) -> Result<(), NumericsError> {
    if prec < MIN_PRECISION {
        Err(NumericsError::PrecisionTooSmall(prec))
    } else {
        Ok(())
    }
}

/// `e^z` at `prec` bits.
pub fn exp_complex(z: &BigComplex, prec: u32) -> Result<BigComplex, NumericsError> {
    check_prec(prec)?;
    let work = prec + 8 + (z.log2_abs().max(0.0) as u32);
    let mut modulus = Float::with_val(work, &z.re.0);
    modulus.exp_round(Round::Nearest);
    if !modulus.is_finite() || (modulus.is_zero() && z.re.is_finite()) {
        return Err(NumericsError::Range(format!(
            "exp of real part {:e} overflows",
            z.re.to_f64()
        )));
    }
    let (mut s, mut c) = (Float::new(work), Float::new(work));
    let arg = Float::with_val(work, &z.im.0);
    (&mut s, &mut c).assign(arg.sin_cos_ref());
    Ok(BigComplex::from_parts(
        BigReal(Float::with_val(prec, &modulus * &c)),
        BigReal(Float::with_val(prec, &modulus * &s)),
    ))
}

/// `e^{2 pi i / n}` at `prec` bits.
pub fn root_of_unity(n: u64, prec: u32) -> BigComplex {
    root_of_unity_pow(1, n, prec)
}

/// `e^{2 pi i k / n}` at `prec` bits, with the fraction reduced exactly first.
pub fn root_of_unity_pow(k: i64, n: u64, prec: u32) -> BigComplex {
    assert!(n >= 1, "root of unity of order zero");
    let n = n as i64;
    let k = k.rem_euclid(n);
    if k == 0 {
        return BigComplex::one(prec);
    }
    // exact quarter turns
    if 4 * k % n == 0 {
        let q = 4 * k / n;
        let (re, im) = match q {
            1 => (0, 1),
            2 => (-1, 0),
            _ => (0, -1),
        };
        return BigComplex::from_parts(BigReal::from_i64(re, prec), BigReal::from_i64(im, prec));
    }
    let work = prec + 16;
    let mut angle = Float::with_val(work, Constant::Pi);
    angle *= 2 * k;
    angle /= n;
    let (mut s, mut c) = (Float::new(work), Float::new(work));
    (&mut s, &mut c).assign(angle.sin_cos_ref());
    BigComplex::from_parts(
        BigReal(Float::with_val(prec, &c)),
        BigReal(Float::with_val(prec, &s)),
    )
}

/// Principal square root: `Re(result) >= 0`, and for negative reals the
/// branch with positive imaginary part.
pub fn complex_sqrt_principal(z: &BigComplex, prec: u32) -> BigComplex {
    assert!(!z.is_zero(), "square root of zero requested");
    let work = prec + 8;
    let a = Float::with_val(work, &z.re.0);
    let b = Float::with_val(work, &z.im.0);
    let r = Float::with_val(work, a.hypot_ref(&b));
    if a.cmp0() != Some(Ordering::Less) {
        let mut u = Float::with_val(work, &r + &a);
        u >>= 1;
        u.sqrt_mut();
        let mut v = Float::with_val(work, &b / &u);
        v >>= 1;
        BigComplex::from_parts(
            BigReal(Float::with_val(prec, &u)),
            BigReal(Float::with_val(prec, &v)),
        )
    } else {
        let mut v = Float::with_val(work, &r - &a);
        v >>= 1;
        v.sqrt_mut();
        if b.is_sign_negative() && !b.is_zero() {
            v = -v;
        }
        let mut u = Float::with_val(work, &b / &v);
        u >>= 1;
        BigComplex::from_parts(
            BigReal(Float::with_val(prec, &u)),
            BigReal(Float::with_val(prec, &v)),
        )
    }
}
