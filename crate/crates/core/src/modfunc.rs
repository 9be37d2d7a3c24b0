//! Numerical evaluation of the modular functions used by the engine.
//!
//! Everything is built from Dedekind's η. Arguments are first moved into
//! the fundamental domain `|Re z| <= 1/2, |z| >= 1` with
//! `η(z + 1) = e^{iπ/12} η(z)` and `η(-1/z) = √(-iz) η(z)`; there
//! `|q| <= e^{-π√3}` and the pentagonal-number series converges quickly.

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_rational::Rational64;
use rug::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{gcd, is_prime, is_quadratic_residue};
use crate::cosets::{
    reps_gamma0_prime, reps_generalized_schlaefli, reps_schlaefli, CosetError, CosetRep,
    CosetSystem,
};
use crate::numerics::{
    complex_sqrt_principal, exp_complex, root_of_unity_pow, BigComplex, BigReal, NumericsError,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModFuncError {
    #[error("point is not in the upper half plane")]
    NotInUpperHalfPlane,
    #[error("reduction to the fundamental domain did not terminate after {0} steps")]
    ReductionDiverged(usize),
    #[error("invalid family: {0}")]
    InvalidFamily(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Cosets(#[from] CosetError),
}

/// A point `z` with `Im z > 0`.
#[derive(Clone, PartialEq)]
pub struct HalfPlanePoint(BigComplex);

impl HalfPlanePoint {
    pub fn new(z: BigComplex) -> Result<Self, ModFuncError> {
        if z.im().signum() <= 0 || !z.is_finite() {
            return Err(ModFuncError::NotInUpperHalfPlane);
        }
        Ok(HalfPlanePoint(z))
    }

    /// `i*y` for `y > 0`.
    pub fn imaginary(y: &BigReal) -> Result<Self, ModFuncError> {
        HalfPlanePoint::new(BigComplex::from_imag(y))
    }

    pub fn z(&self) -> &BigComplex {
        &self.0
    }

    pub fn into_inner(self) -> BigComplex {
        self.0
    }

    fn log2_inv_im(&self) -> u32 {
        (-self.0.im().log2_abs()).max(0.0).ceil() as u32
    }
}

impl fmt::Debug for HalfPlanePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

thread_local! {
    static ETA_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of η evaluations performed on the current thread so far.
pub fn eta_call_count() -> u64 {
    ETA_CALLS.with(|c| c.get())
}

type Zeta24Table = Arc<Vec<BigComplex>>;

fn zeta24_table(prec: u32) -> Zeta24Table {
    static CACHE: OnceLock<Mutex<HashMap<u32, Zeta24Table>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(&prec) {
        return t.clone();
    }
    let table: Zeta24Table = Arc::new((0..24).map(|k| root_of_unity_pow(k, 24, prec)).collect());
    cache.lock().unwrap().insert(prec, table.clone());
    table
}

fn guard_bits(z: &HalfPlanePoint) -> u32 {
    24 + 2 * z.log2_inv_im()
}

/// Moves `z` into the fundamental domain and returns `(z', m)` with
/// `η(z) = m · η(z')`.
///
/// The multiplier is tracked as a running product of the translation and
/// inversion factors.
pub fn reduce_to_fundamental_domain(
    z: &HalfPlanePoint,
    prec: u32,
) -> Result<(HalfPlanePoint, BigComplex), ModFuncError> {
    let mut w = z.0.with_prec(prec);
    let mut shifts = Integer::new();
    let mut factor: Option<BigComplex> = None;
    let max_steps = 64 + 8 * z.log2_inv_im() as usize;
    let one_minus = BigReal::one(prec) - BigReal::one(prec).mul_pow2(-(prec as i32 / 2));
    let mut steps = 0;
    loop {
        if steps > max_steps {
            return Err(ModFuncError::ReductionDiverged(steps));
        }
        steps += 1;
        let n = w
            .re()
            .round_to_integer()
            .0;
        if n != 0 {
            let shift = BigReal::from_integer(&n, prec);
            w = BigComplex::from_parts(w.re() - &shift, w.im().clone());
            shifts += &n;
        }
        if w.norm_sqr() < one_minus {
            // η(w) = η(-1/w) / √(-iw)
            let root = complex_sqrt_principal(&(-&w.mul_i()), prec);
            let inv = root.recip();
            factor = Some(match factor {
                None => inv,
                Some(mut f) => {
                    f.mul_assign(&inv);
                    f
                }
            });
            w = -&w.recip();
        } else {
            break;
        }
    }
    let k = shifts.mod_u(24) as usize;
    let rot = zeta24_table(prec)[k].clone();
    let mult = match factor {
        None => rot,
        Some(f) => &f * &rot,
    };
    Ok((HalfPlanePoint(w), mult))
}

/// Pentagonal-number series `q^{1/24} Σ (-1)^n q^{n(3n-1)/2}` at a reduced point.
fn eta_series_reduced(z: &BigComplex, prec: u32) -> Result<BigComplex, ModFuncError> {
    let two_pi = BigReal::pi(prec).mul_i64(2);
    // |q| = e^{-2π y}
    let log2_q = -2.0 * std::f64::consts::PI * z.im().to_f64() / std::f64::consts::LN_2;
    let target = -(prec as f64) - 8.0;
    let mut terms = 0i64;
    while ((terms + 1) * (3 * (terms + 1) - 1) / 2) as f64 * log2_q > target {
        terms += 1;
    }
    if z.re().is_zero() {
        // purely imaginary: q is real
        let q24 = (z.im() * &two_pi).div_i64(-24).exp();
        let q = q24.powi(24);
        let mut sum = BigReal::one(prec);
        let mut a = q.clone();
        let mut qn = q.clone();
        let q3 = q.powi(3);
        let mut step = &q3 * &q;
        for n in 1..=terms {
            let t = &a * &(&BigReal::one(prec) + &qn);
            sum = if n % 2 == 1 { &sum - &t } else { &sum + &t };
            a = &a * &step;
            step = &step * &q3;
            qn = &qn * &q;
        }
        return Ok(BigComplex::from_real(&(&sum * &q24)));
    }
    let arg = z.mul_i().scale(&two_pi).div_i64(24);
    let q24 = exp_complex(&arg, prec)?;
    let q8 = q24.sqr().sqr().sqr();
    let mut q = q8.sqr();
    q.mul_assign(&q8);
    let mut sum = BigComplex::one(prec);
    let mut a = q.clone();
    let mut qn = q.clone();
    let mut q3 = q.sqr();
    q3.mul_assign(&q);
    let mut step = &q3 * &q;
    let one = BigComplex::one(prec);
    for n in 1..=terms {
        let mut t = &one + &qn;
        t.mul_assign(&a);
        if n % 2 == 1 {
            sum.sub_assign(&t);
        } else {
            sum.add_assign(&t);
        }
        a.mul_assign(&step);
        step.mul_assign(&q3);
        qn.mul_assign(&q);
    }
    sum.mul_assign(&q24);
    Ok(sum)
}

/// Dedekind η at `prec` bits.
pub fn eta(z: &HalfPlanePoint, prec: u32) -> Result<BigComplex, ModFuncError> {
    ETA_CALLS.with(|c| c.set(c.get() + 1));
    let work = prec + guard_bits(z);
    let (w, mult) = reduce_to_fundamental_domain(z, work)?;
    let mut val = eta_series_reduced(&w.0, work)?;
    val.mul_assign(&mult);
    Ok(val.with_prec(prec))
}

fn eta_at(z: &BigComplex, prec: u32) -> Result<BigComplex, ModFuncError> {
    eta(&HalfPlanePoint::new(z.clone())?, prec)
}

/// `η(z/a) / η(z/b)`, the building block of every η quotient here.
fn eta_ratio(z: &BigComplex, a: i64, b: i64, prec: u32) -> Result<BigComplex, ModFuncError> {
    let num = eta_at(&z.div_i64(a), prec)?;
    let den = eta_at(&z.div_i64(b), prec)?;
    Ok(&num / &den)
}

/// `x^24`.
fn pow24(x: &BigComplex) -> BigComplex {
    let x8 = x.sqr().sqr().sqr();
    let mut x24 = x8.sqr();
    x24.mul_assign(&x8);
    x24
}

/// `j(z) = (𝔣₁(z)^24 + 16)^3 / 𝔣₁(z)^24` with `𝔣₁(z) = η(z/2)/η(z)`.
pub fn j_invariant(z: &HalfPlanePoint, prec: u32) -> Result<BigComplex, ModFuncError> {
    let work = prec + 16;
    let w = eta_ratio(z.z(), 2, 1, work)?;
    let w24 = pow24(&w);
    let t = &w24 + &BigComplex::from_i64(16, work);
    let mut num = t.sqr();
    num.mul_assign(&t);
    Ok((&num / &w24).with_prec(prec))
}

/// Weber's `𝔣(z) = ζ_48^{-1} η((z+1)/2) / η(z)`.
pub fn weber_f(z: &HalfPlanePoint, prec: u32) -> Result<BigComplex, ModFuncError> {
    let work = prec + 8;
    let zz = z.z().with_prec(work);
    let shifted = &zz + &BigComplex::one(work);
    let num = eta_at(&shifted.div_i64(2), work)?;
    let den = eta_at(&zz, work)?;
    let mut v = &num / &den;
    v.mul_assign(&root_of_unity_pow(-1, 48, work));
    Ok(v.with_prec(prec))
}

/// Double η quotient `𝔴_{p1,p2} = η(z/p1) η(z/p2) / (η(z) η(z/(p1 p2)))`.
pub fn double_eta_quotient(
    p1: u64,
    p2: u64,
    z: &HalfPlanePoint,
    prec: u32,
) -> Result<BigComplex, ModFuncError> {
    let work = prec + 8;
    let zz = z.z().with_prec(work);
    let (p1, p2) = (p1 as i64, p2 as i64);
    let a = eta_ratio(&zz, p1, 1, work)?;
    let b = eta_ratio(&zz, p2, p1 * p2, work)?;
    Ok((&a * &b).with_prec(prec))
}

/// `f_{ℓ,r}(-1/z)` where `f_{ℓ,r} = T_r(η η_ℓ) / (η η_ℓ)`, `η_ℓ(w) = η(ℓw)`
/// and `T_r F(w) = (1/r) Σ_{ν<r} F((w + 24ν)/r) + F(rw)`.
///
/// Costs exactly `2r + 4` η evaluations.
pub fn hecke_atkin_value(
    ell: u64,
    r: u64,
    z: &HalfPlanePoint,
    prec: u32,
) -> Result<BigComplex, ModFuncError> {
    let w0 = -&z.z().recip();
    let w0 = HalfPlanePoint::new(w0)?;
    let work = prec + 32 + 2 * w0.log2_inv_im() + (10.0 * w0.z().im().to_f64()).min(4096.0) as u32;
    let w = w0.z().with_prec(work);
    let (ell, r) = (ell as i64, r as i64);
    let big_f = |u: &BigComplex| -> Result<BigComplex, ModFuncError> {
        let a = eta_at(u, work)?;
        let b = eta_at(&u.scale_i64(ell), work)?;
        Ok(&a * &b)
    };
    let mut sum = BigComplex::zero(work);
    for nu in 0..r {
        let u = (&w + &BigComplex::from_i64(24 * nu, work)).div_i64(r);
        sum.add_assign(&big_f(&u)?);
    }
    let mut hecke = sum.div_i64(r);
    hecke.add_assign(&big_f(&w.scale_i64(r))?);
    let den = big_f(&w)?;
    Ok((&hecke / &den).with_prec(prec))
}

/// Smallest prime `r >= 5` with `24 | (r-1)(ℓ+1)`, `r` a square mod `ℓ` and
/// `ℓ` a square mod `r`.
pub fn select_hecke_prime(ell: u64) -> u64 {
    assert!(is_prime(ell) && ell > 3, "Hecke prime needs a prime level above 3");
    (5..)
        .filter(|&r| is_prime(r) && atkin_pair_ok(ell, r))
        .next()
        .expect("search is unbounded")
}

fn atkin_pair_ok(ell: u64, r: u64) -> bool {
    r != ell
        && ((r - 1) as u128 * (ell + 1) as u128) % 24 == 0
        && is_quadratic_residue(r, ell)
        && is_quadratic_residue(ell, r)
}

/// The function in which coefficients are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseFunction {
    J,
    WeberF,
    DoubleEta { p1: u64, p2: u64 },
}

impl BaseFunction {
    pub fn evaluate(&self, z: &HalfPlanePoint, prec: u32) -> Result<BigComplex, ModFuncError> {
        match *self {
            BaseFunction::J => j_invariant(z, prec),
            BaseFunction::WeberF => weber_f(z, prec),
            BaseFunction::DoubleEta { p1, p2 } => double_eta_quotient(p1, p2, z, prec),
        }
    }
}

/// Which modular function `f` the polynomial is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FunctionFamily {
    /// `f = j(z/ℓ)`.
    Classical { ell: u64 },
    /// `f = (η(z/ℓ)/η(z))^{2s}`, `s = 12 / gcd(12, ℓ-1)`.
    Canonical { ell: u64 },
    /// `f = f_{ℓ,r}(-1/z)`.
    Atkin { ell: u64, r: u64 },
    /// `g = 𝔣(z/ℓ)` over `ℤ[𝔣]`.
    Schlaefli { ell: u64 },
    /// `g = 𝔴_{p1,p2}(z/ℓ)` over `ℤ[𝔴_{p1,p2}]`.
    #[serde(rename = "eta2quotient")]
    EtaQuotient { ell: u64, p1: u64, p2: u64 },
}

/// Valuations and degrees known a priori for a family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyProfile {
    pub deg_x: usize,
    pub deg_j_known: Option<usize>,
    /// Order of `f` at infinity, in powers of `q`.
    pub v: Option<Rational64>,
    /// Order of `f(Sz)` at infinity.
    pub v_inf: Option<Rational64>,
    pub base: BaseFunction,
}

impl FamilyProfile {
    /// `ℓ|v| + max(0, -v_∞)`.
    pub fn degree_rule(ell: u64, v: Rational64, v_inf: Rational64) -> Rational64 {
        Rational64::from_integer(ell as i64) * abs_rational(v) + (-v_inf).max(Rational64::from_integer(0))
    }
}

fn abs_rational(v: Rational64) -> Rational64 {
    if v < Rational64::from_integer(0) {
        -v
    } else {
        v
    }
}

impl FunctionFamily {
    pub fn classical(ell: u64) -> Result<Self, ModFuncError> {
        FunctionFamily::Classical { ell }.validated()
    }

    pub fn canonical(ell: u64) -> Result<Self, ModFuncError> {
        FunctionFamily::Canonical { ell }.validated()
    }

    /// Atkin family with the smallest admissible Hecke prime unless `r` is given.
    pub fn atkin(ell: u64, r: Option<u64>) -> Result<Self, ModFuncError> {
        if !is_prime(ell) || ell <= 3 {
            return Err(ModFuncError::InvalidFamily(format!(
                "atkin level must be a prime above 3, got {ell}"
            )));
        }
        let r = r.unwrap_or_else(|| select_hecke_prime(ell));
        FunctionFamily::Atkin { ell, r }.validated()
    }

    pub fn schlaefli(ell: u64) -> Result<Self, ModFuncError> {
        FunctionFamily::Schlaefli { ell }.validated()
    }

    pub fn eta_quotient(ell: u64, p1: u64, p2: u64) -> Result<Self, ModFuncError> {
        FunctionFamily::EtaQuotient { ell, p1, p2 }.validated()
    }

    /// Checks the family invariants.
    pub fn validated(self) -> Result<Self, ModFuncError> {
        let bad = |msg: String| Err(ModFuncError::InvalidFamily(msg));
        let ell = self.ell();
        if !is_prime(ell) {
            return bad(format!("level {ell} is not prime"));
        }
        match self {
            FunctionFamily::Classical { .. } | FunctionFamily::Canonical { .. } => {}
            FunctionFamily::Atkin { r, .. } => {
                if ell <= 3 {
                    return bad(format!("atkin level must be above 3, got {ell}"));
                }
                if !is_prime(r) || r < 5 {
                    return bad(format!("Hecke index {r} must be a prime >= 5"));
                }
                if !atkin_pair_ok(ell, r) {
                    return bad(format!("(ℓ, r) = ({ell}, {r}) violates the Hecke conditions"));
                }
            }
            FunctionFamily::Schlaefli { .. } => {
                if gcd(ell, 48) != 1 {
                    return bad(format!("Schläfli level {ell} divides 48"));
                }
            }
            FunctionFamily::EtaQuotient { p1, p2, .. } => {
                if !is_prime(p1) || !is_prime(p2) || p1 == p2 {
                    return bad(format!("({p1}, {p2}) must be distinct primes"));
                }
                if ((p1 - 1) * (p2 - 1)) % 24 != 0 {
                    return bad(format!("24 does not divide ({p1}-1)({p2}-1)"));
                }
                let n = p1 * p2;
                if n != 35 && n != 39 {
                    return bad(format!(
                        "only N = 35 and N = 39 are supported, where the quotient generates the function field; got N = {n}"
                    ));
                }
                if gcd(ell, n) != 1 {
                    return bad(format!("level {ell} divides N = {n}"));
                }
            }
        }
        Ok(self)
    }

    pub fn ell(&self) -> u64 {
        match *self {
            FunctionFamily::Classical { ell }
            | FunctionFamily::Canonical { ell }
            | FunctionFamily::Atkin { ell, .. }
            | FunctionFamily::Schlaefli { ell }
            | FunctionFamily::EtaQuotient { ell, .. } => ell,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionFamily::Classical { .. } => "classical",
            FunctionFamily::Canonical { .. } => "canonical",
            FunctionFamily::Atkin { .. } => "atkin",
            FunctionFamily::Schlaefli { .. } => "schlaefli",
            FunctionFamily::EtaQuotient { .. } => "eta2quotient",
        }
    }

    /// `s = 12 / gcd(12, ℓ-1)`, used by the canonical family.
    pub fn canonical_s(&self) -> u64 {
        12 / gcd(12, self.ell() - 1)
    }

    /// Extra parameters written to output headers, in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, u64)> {
        match *self {
            FunctionFamily::Classical { .. } | FunctionFamily::Schlaefli { .. } => vec![],
            FunctionFamily::Canonical { .. } => vec![("s", self.canonical_s())],
            FunctionFamily::Atkin { r, .. } => vec![("r", r)],
            FunctionFamily::EtaQuotient { p1, p2, .. } => {
                let n = p1 * p2;
                let s = 24 / gcd(24, (p1 - 1) * (p2 - 1));
                vec![("p1", p1), ("p2", p2), ("N", n), ("s", s)]
            }
        }
    }

    pub fn base(&self) -> BaseFunction {
        match *self {
            FunctionFamily::Classical { .. }
            | FunctionFamily::Canonical { .. }
            | FunctionFamily::Atkin { .. } => BaseFunction::J,
            FunctionFamily::Schlaefli { .. } => BaseFunction::WeberF,
            FunctionFamily::EtaQuotient { p1, p2, .. } => BaseFunction::DoubleEta { p1, p2 },
        }
    }

    pub fn cosets(&self) -> Result<CosetSystem, ModFuncError> {
        let ell = self.ell();
        Ok(match *self {
            FunctionFamily::Classical { .. }
            | FunctionFamily::Canonical { .. }
            | FunctionFamily::Atkin { .. } => reps_gamma0_prime(ell)?,
            FunctionFamily::Schlaefli { .. } => reps_schlaefli(ell)?,
            FunctionFamily::EtaQuotient { p1, p2, .. } => reps_generalized_schlaefli(ell, p1 * p2)?,
        })
    }

    pub fn profile(&self) -> FamilyProfile {
        let ell = self.ell();
        let deg_x = ell as usize + 1;
        let (v, v_inf) = match self {
            FunctionFamily::Classical { .. } => (
                Some(Rational64::new(-1, ell as i64)),
                Some(Rational64::from_integer(-(ell as i64))),
            ),
            FunctionFamily::Canonical { .. } => {
                let s = self.canonical_s() as i64;
                let l = ell as i64;
                (
                    Some(Rational64::new(-s * (l - 1), 12 * l)),
                    Some(Rational64::new(s * (l - 1), 12)),
                )
            }
            _ => (None, None),
        };
        let deg_j_known = match (v, v_inf) {
            (Some(v), Some(vi)) => {
                let d = FamilyProfile::degree_rule(ell, v, vi);
                debug_assert!(d.is_integer());
                Some(d.to_integer() as usize)
            }
            _ => None,
        };
        FamilyProfile { deg_x, deg_j_known, v, v_inf, base: self.base() }
    }

    /// The function `f` itself at `z` (the conjugate for the identity).
    pub fn evaluate(&self, z: &HalfPlanePoint, prec: u32) -> Result<BigComplex, ModFuncError> {
        let ell = self.ell() as i64;
        let scaled = || HalfPlanePoint::new(z.z().div_i64(ell));
        match *self {
            FunctionFamily::Classical { .. } => j_invariant(&scaled()?, prec),
            FunctionFamily::Canonical { .. } => {
                let work = prec + 16;
                let w = eta_ratio(&z.z().with_prec(work), ell, 1, work)?;
                Ok(w.powu(2 * self.canonical_s() as u32).with_prec(prec))
            }
            FunctionFamily::Atkin { ell, r } => hecke_atkin_value(ell, r, z, prec),
            FunctionFamily::Schlaefli { .. } => weber_f(&scaled()?, prec),
            FunctionFamily::EtaQuotient { p1, p2, .. } => {
                double_eta_quotient(p1, p2, &scaled()?, prec)
            }
        }
    }

    /// The base function (`j`, `𝔣` or `𝔴`) at `z`.
    pub fn base_value(&self, z: &HalfPlanePoint, prec: u32) -> Result<BigComplex, ModFuncError> {
        self.base().evaluate(z, prec)
    }
}

impl fmt::Display for FunctionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ℓ={}", self.name(), self.ell())?;
        for (k, v) in self.params() {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// `f(M z)`, computed by transforming the argument and evaluating the
/// family's defining expression there.
pub fn evaluate_conjugate(
    fam: &FunctionFamily,
    m: &CosetRep,
    z: &HalfPlanePoint,
    prec: u32,
) -> Result<BigComplex, ModFuncError> {
    let work = prec + 8;
    let mz = HalfPlanePoint::new(m.act(&z.z().with_prec(work)))?;
    Ok(fam.evaluate(&mz, work)?.with_prec(prec))
}
