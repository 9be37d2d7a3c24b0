//! Exact modular polynomials modulo a prime from q-expansions.
//!
//! The conjugates `f(z + ν)` of a function `f = Σ a_n t^n`, `t = q^{1/ℓ}`,
//! are obtained by `t ↦ ζ_ℓ^ν t`, so their power sums only keep the
//! exponents divisible by `ℓ`. Newton's identities turn the power sums into
//! elementary symmetric functions, a final factor `X - f_∞` accounts for
//! the conjugate at `S`, and each coefficient is then written as a
//! polynomial in `j` from its principal part.

use std::collections::BTreeMap;

use rug::Integer;
use thiserror::Error;

use crate::arith::{mod_inverse, mul_mod, pow_mod};
use crate::modfunc::FunctionFamily;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("modulus {p} must be a prime above {min}")]
    ModulusTooSmall { p: u64, min: u64 },
    #[error("series known only below exponent {known}, needed {needed}")]
    Truncated { known: i64, needed: i64 },
    #[error("series with exponent denominators {0} and {1} cannot be combined")]
    DenominatorMismatch(u64, u64),
    #[error("series is not invertible (zero leading term)")]
    NotInvertible,
    #[error("principal part left after recognition at exponent {0}")]
    NonzeroRemainder(i64),
    #[error("the oracle covers classical and canonical families only, not {0}")]
    UnsupportedFamily(&'static str),
}

/// Truncated Laurent series in `q^{1/den}` with coefficients modulo `p`.
///
/// `coeffs[i]` is the coefficient of `q^{(val + i)/den}`; all exponents from
/// `val + coeffs.len()` on are unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesModP {
    pub p: u64,
    pub den: u64,
    pub val: i64,
    pub coeffs: Vec<u64>,
}

impl SeriesModP {
    /// Series from coefficients starting at exponent `val`, normalized so that
    /// the first stored coefficient is nonzero.
    pub fn new(p: u64, den: u64, val: i64, coeffs: Vec<u64>) -> Self {
        let mut s = SeriesModP { p, den, val, coeffs };
        s.normalize();
        s
    }

    /// The zero series known below exponent `prec`.
    pub fn zero(p: u64, den: u64, prec: i64) -> Self {
        SeriesModP { p, den, val: prec, coeffs: Vec::new() }
    }

    pub fn constant(p: u64, c: u64, prec: i64) -> Self {
        let mut coeffs = vec![0; prec.max(0) as usize];
        if let Some(first) = coeffs.first_mut() {
            *first = c % p;
        }
        SeriesModP::new(p, 1, 0, coeffs)
    }

    fn normalize(&mut self) {
        let lead = self.coeffs.iter().take_while(|&&c| c == 0).count();
        if lead > 0 {
            self.coeffs.drain(..lead);
            self.val += lead as i64;
        }
    }

    /// First exponent (numerator) that is not known.
    pub fn prec(&self) -> i64 {
        self.val + self.coeffs.len() as i64
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient of `q^{n/den}`; errors if that exponent is not known.
    pub fn coeff(&self, n: i64) -> Result<u64, OracleError> {
        if n >= self.prec() {
            return Err(OracleError::Truncated { known: self.prec(), needed: n + 1 });
        }
        Ok(if n < self.val { 0 } else { self.coeffs[(n - self.val) as usize] })
    }

    /// Drops every term from exponent `prec` on.
    pub fn truncate(&self, prec: i64) -> Self {
        if prec >= self.prec() {
            return self.clone();
        }
        if prec <= self.val {
            return SeriesModP::zero(self.p, self.den, prec);
        }
        SeriesModP::new(self.p, self.den, self.val, self.coeffs[..(prec - self.val) as usize].to_vec())
    }

    fn check(&self, rhs: &Self) -> Result<(), OracleError> {
        assert_eq!(self.p, rhs.p, "series over different primes");
        if self.den != rhs.den {
            return Err(OracleError::DenominatorMismatch(self.den, rhs.den));
        }
        Ok(())
    }

    pub fn add(&self, rhs: &Self) -> Result<Self, OracleError> {
        self.check(rhs)?;
        let prec = self.prec().min(rhs.prec());
        let val = self.val.min(rhs.val);
        if val >= prec {
            return Ok(SeriesModP::zero(self.p, self.den, prec));
        }
        let mut coeffs = vec![0u64; (prec - val) as usize];
        for s in [self, rhs] {
            for (i, &c) in s.coeffs.iter().enumerate() {
                let n = s.val + i as i64;
                if n < prec {
                    let slot = &mut coeffs[(n - val) as usize];
                    *slot = (*slot + c) % self.p;
                }
            }
        }
        Ok(SeriesModP::new(self.p, self.den, val, coeffs))
    }

    pub fn neg(&self) -> Self {
        let p = self.p;
        SeriesModP {
            coeffs: self.coeffs.iter().map(|&c| (p - c) % p).collect(),
            ..self.clone()
        }
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self, OracleError> {
        self.add(&rhs.neg())
    }

    pub fn scale(&self, k: u64) -> Self {
        let p = self.p;
        SeriesModP::new(p, self.den, self.val, self.coeffs.iter().map(|&c| mul_mod(c, k % p, p)).collect())
    }

    /// Product; known up to `min(val_a + prec_b, val_b + prec_a)`.
    pub fn mul(&self, rhs: &Self) -> Result<Self, OracleError> {
        self.check(rhs)?;
        let p = self.p;
        let val = self.val + rhs.val;
        let prec = (self.val + rhs.prec()).min(rhs.val + self.prec());
        if self.is_zero() || rhs.is_zero() || prec <= val {
            return Ok(SeriesModP::zero(p, self.den, prec));
        }
        let len = (prec - val) as usize;
        let mut acc = vec![0u128; len];
        for (i, &a) in self.coeffs.iter().enumerate().take(len) {
            if a == 0 {
                continue;
            }
            for (k, &b) in rhs.coeffs.iter().enumerate().take(len - i) {
                let slot = &mut acc[i + k];
                *slot += a as u128 * b as u128;
                if *slot >= 1 << 126 {
                    *slot %= p as u128;
                }
            }
        }
        let coeffs = acc.into_iter().map(|c| (c % p as u128) as u64).collect();
        Ok(SeriesModP::new(p, self.den, val, coeffs))
    }

    pub fn pow(&self, mut e: u32) -> Result<Self, OracleError> {
        let mut base = self.clone();
        let mut acc: Option<SeriesModP> = None;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(a) => a.mul(&base)?,
                });
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(acc.unwrap_or_else(|| {
            let mut one = SeriesModP::constant(self.p, 1, self.prec() - self.val);
            one.den = self.den;
            one
        }))
    }

    /// Multiplicative inverse; keeps the relative precision.
    pub fn inverse(&self) -> Result<Self, OracleError> {
        let p = self.p;
        let lead = *self.coeffs.first().ok_or(OracleError::NotInvertible)?;
        let inv0 = mod_inverse(lead, p).ok_or(OracleError::NotInvertible)?;
        let n = self.coeffs.len();
        let mut out = vec![0u64; n];
        out[0] = inv0;
        for k in 1..n {
            let mut acc = 0u128;
            for i in 1..=k {
                acc = (acc + self.coeffs[i] as u128 * out[k - i] as u128) % p as u128;
            }
            out[k] = mul_mod((p - acc as u64) % p, inv0, p);
        }
        Ok(SeriesModP::new(p, self.den, -self.val, out))
    }

    /// Multiplies by `q^{k/den}`.
    pub fn shift(&self, k: i64) -> Self {
        SeriesModP { val: self.val + k, ..self.clone() }
    }

    /// Substitutes `q ↦ q^m`.
    pub fn inflate(&self, m: u64) -> Self {
        let m_i = m as i64;
        let prec = self.prec() * m_i;
        let val = self.val * m_i;
        let mut coeffs = vec![0u64; (prec - val) as usize];
        for (i, &c) in self.coeffs.iter().enumerate() {
            coeffs[i * m as usize] = c;
        }
        SeriesModP::new(self.p, self.den, val, coeffs)
    }

    /// Keeps the exponents divisible by `m` and divides them by `m`.
    pub fn decimate(&self, m: u64) -> Self {
        let m = m as i64;
        let prec = self.prec().div_euclid(m) + i64::from(self.prec().rem_euclid(m) != 0);
        let val = self.val.div_euclid(m) + i64::from(self.val.rem_euclid(m) != 0);
        if val >= prec {
            return SeriesModP::zero(self.p, self.den, prec);
        }
        let coeffs = (val..prec).map(|k| self.coeff(k * m).unwrap_or(0)).collect();
        SeriesModP::new(self.p, self.den, val, coeffs)
    }

    /// Reinterprets as a series in `q^{1/den}` with a new denominator; the
    /// exponents must be divisible accordingly.
    fn with_den(mut self, den: u64) -> Self {
        self.den = den;
        self
    }
}

fn check_modulus(p: u64, min: u64) -> Result<(), OracleError> {
    if p <= min || !crate::arith::is_prime(p) {
        return Err(OracleError::ModulusTooSmall { p, min });
    }
    Ok(())
}

/// `∏_{n ≥ 1} (1 - q^n) = Σ (-1)^n q^{n(3n-1)/2}` with `terms` coefficients.
pub fn euler_series(terms: usize, p: u64) -> SeriesModP {
    let mut coeffs = vec![0u64; terms];
    let mut add = |e: i64, sign: i64| {
        if e >= 0 && (e as usize) < terms {
            coeffs[e as usize] = if sign > 0 { 1 } else { p - 1 };
        }
    };
    for n in 0i64.. {
        let e1 = n * (3 * n - 1) / 2;
        if e1 as usize >= terms {
            break;
        }
        let sign = if n % 2 == 0 { 1 } else { -1 };
        add(e1, sign);
        if n > 0 {
            add(n * (3 * n + 1) / 2, sign);
        }
    }
    SeriesModP::new(p, 1, 0, coeffs)
}

/// `η = q^{1/24} ∏ (1 - q^n)` as a series in `q^{1/24}`.
pub fn eta_series(terms: usize, p: u64) -> SeriesModP {
    euler_series(terms, p).inflate(24).shift(1).with_den(24)
}

/// `j = E_4^3 / Δ` known through `q^{terms - 2}`.
pub fn j_series(terms: usize, p: u64) -> Result<SeriesModP, OracleError> {
    check_modulus(p, 3)?;
    let n = terms;
    let mut e4 = vec![0u64; n];
    e4[0] = 1;
    for (k, slot) in e4.iter_mut().enumerate().skip(1) {
        let sigma3: u64 = (1..=k as u64)
            .filter(|d| k as u64 % d == 0)
            .fold(0, |acc, d| (acc + pow_mod(d, 3, p)) % p);
        *slot = mul_mod(240, sigma3, p);
    }
    let e4 = SeriesModP::new(p, 1, 0, e4);
    let e24 = euler_series(n, p).pow(24)?;
    e4.pow(3)?.mul(&e24.inverse()?).map(|s| s.shift(-1))
}

/// `s_r = ℓ · decimate_ℓ(f^r)` for `r = 1..=count`.
pub fn newton_sums(f: &SeriesModP, ell: u64, count: usize) -> Result<Vec<SeriesModP>, OracleError> {
    let mut out = Vec::with_capacity(count);
    let mut power = f.clone();
    for r in 1..=count {
        if r > 1 {
            power = power.mul(f)?;
        }
        out.push(power.decimate(ell).scale(ell));
    }
    Ok(out)
}

/// Elementary symmetric functions `e_1..e_n` from power sums by
/// `e_r = (1/r) Σ_{k=1}^{r} (-1)^{k+1} s_k e_{r-k}`, `e_0 = 1`.
///
/// The monic polynomial with these roots is `Σ (-1)^r e_r X^{n-r}`.
pub fn newton_to_elementary(sums: &[SeriesModP]) -> Result<Vec<SeriesModP>, OracleError> {
    let Some(first) = sums.first() else {
        return Ok(Vec::new());
    };
    let p = first.p;
    // e_0 = 1 is exact; give it enough terms never to limit a product
    let exact = sums.iter().map(|s| s.prec() - s.val.min(0)).max().unwrap_or(1) + 1;
    let mut e = vec![SeriesModP::constant(p, 1, exact)];
    for r in 1..=sums.len() {
        let inv_r = mod_inverse(r as u64, p).ok_or(OracleError::ModulusTooSmall { p, min: r as u64 })?;
        let mut acc: Option<SeriesModP> = None;
        for k in 1..=r {
            let term = sums[k - 1].mul(&e[r - k])?;
            let term = if k % 2 == 1 { term } else { term.neg() };
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term)?,
            });
        }
        e.push(acc.expect("r >= 1").scale(inv_r));
    }
    e.remove(0);
    Ok(e)
}

/// Writes `c` as `Σ a_k j^k` using its principal part and constant term.
///
/// `j_powers[k]` must hold `j^k`. Returns `a_0, a_1, …`. Every known
/// coefficient of `c - Σ a_k j^k`, positive exponents included, must vanish.
pub fn recognize_in_j(c: &SeriesModP, j_powers: &[SeriesModP]) -> Result<Vec<u64>, OracleError> {
    let mut rest = c.clone();
    let top = (-rest.val).max(0) as usize;
    if top >= j_powers.len() {
        return Err(OracleError::Truncated { known: j_powers.len() as i64, needed: top as i64 + 1 });
    }
    let mut out = vec![0u64; top + 1];
    for k in (0..=top).rev() {
        let a = rest.coeff(-(k as i64))?;
        if a != 0 {
            out[k] = a;
            rest = rest.sub(&j_powers[k].scale(a))?;
        }
    }
    if rest.prec() <= 0 {
        return Err(OracleError::Truncated { known: rest.prec(), needed: 1 });
    }
    if !rest.is_zero() {
        return Err(OracleError::NonzeroRemainder(rest.val));
    }
    while out.len() > 1 && out.last() == Some(&0) {
        out.pop();
    }
    Ok(out)
}

/// `Φ` modulo `p` as a map from `(X-power, j-power)` to nonzero residues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub p: u64,
    pub deg_x: usize,
    pub deg_j: usize,
    pub coeffs: BTreeMap<(usize, usize), u64>,
}

/// Runs the q-expansion algorithm for a classical or canonical family.
pub fn oracle_modular_polynomial(family: &FunctionFamily, p: u64) -> Result<OracleResult, OracleError> {
    let ell = family.ell();
    check_modulus(p, ell.max(3))?;
    let mut margin = 4usize;
    loop {
        match oracle_attempt(family, p, margin) {
            Err(OracleError::Truncated { .. }) if margin < 1 << 12 => margin *= 2,
            other => return other,
        }
    }
}

fn oracle_attempt(family: &FunctionFamily, p: u64, margin: usize) -> Result<OracleResult, OracleError> {
    let ell = family.ell();
    let l = ell as usize;
    // `f` in t = q^{1/ℓ} and `f_∞` in q
    let (f, f_inf) = match *family {
        FunctionFamily::Classical { .. } => {
            let q_terms = 2 * l + 4 + margin;
            let t_terms = l * q_terms + l + margin;
            let f = j_series(t_terms, p)?;
            let f_inf = j_series(q_terms, p)?.inflate(ell);
            (f, f_inf)
        }
        FunctionFamily::Canonical { .. } => {
            let s = family.canonical_s() as u32;
            let shift = (s as i64) * (ell as i64 - 1) / 12;
            let q_terms = 2 + shift as usize * (l + 1) + margin;
            let t_terms = l * q_terms + l * shift as usize + margin;
            let e = euler_series(t_terms, p);
            let e_l = e.inflate(ell).truncate(t_terms as i64);
            let f = e.mul(&e_l.inverse()?)?.pow(2 * s)?.shift(-shift);
            let e_q = euler_series(q_terms + l * shift as usize, p);
            let ratio = e_q.inflate(ell).truncate(e_q.prec()).mul(&e_q.inverse()?)?;
            let f_inf = ratio.pow(2 * s)?.shift(shift).scale(pow_mod(ell, s as u64, p));
            (f, f_inf)
        }
        _ => return Err(OracleError::UnsupportedFamily(family.name())),
    };
    let sums = newton_sums(&f, ell, l)?;
    let e = newton_to_elementary(&sums)?;
    // p_r = (-1)^r e_r, p_0 = 1
    let mut poly: Vec<SeriesModP> = vec![SeriesModP::constant(p, 1, f_inf.prec() - f_inf.val + 1)];
    for (r, er) in e.into_iter().enumerate() {
        poly.push(if (r + 1) % 2 == 0 { er } else { er.neg() });
    }
    // (X - f_∞) Σ p_r X^{ℓ-r}: coefficient of X^{ℓ+1-r} is p_r - f_∞ p_{r-1}
    let mut full = Vec::with_capacity(l + 2);
    for r in 0..=l + 1 {
        let mut c = if r <= l { poly[r].clone() } else { SeriesModP::zero(p, 1, i64::MAX / 4) };
        if r >= 1 {
            c = c.sub(&f_inf.mul(&poly[r - 1])?)?;
        }
        full.push(c);
    }
    let max_pole = full.iter().map(|c| (-c.val).max(0)).max().unwrap_or(0) as usize;
    let known = full.iter().map(|c| c.prec()).max().unwrap_or(1).max(1) as usize;
    let j = j_series(known + max_pole + 3, p)?;
    let mut j_powers = vec![SeriesModP::constant(p, 1, (known + max_pole + 2) as i64)];
    for k in 1..=max_pole {
        let next = j_powers[k - 1].mul(&j)?;
        j_powers.push(next);
    }
    let mut coeffs = BTreeMap::new();
    let mut deg_j = 0;
    for (r, c) in full.iter().enumerate() {
        let a = recognize_in_j(c, &j_powers)?;
        for (k, &v) in a.iter().enumerate() {
            if v != 0 {
                coeffs.insert((l + 1 - r, k), v);
                deg_j = deg_j.max(k);
            }
        }
    }
    Ok(OracleResult { p, deg_x: l + 1, deg_j, coeffs })
}

/// Symmetric CRT lift of residues `(p_i, r_i)` into `(-M/2, M/2]`.
pub fn crt_lift(residues: &[(u64, u64)]) -> Integer {
    let mut value = Integer::new();
    let mut modulus = Integer::from(1);
    for &(p, r) in residues {
        let cur = Integer::from(&value % p).to_u64().expect("residue fits") % p;
        let m_mod = Integer::from(&modulus % p).to_u64().expect("residue fits");
        let inv = mod_inverse(m_mod, p).expect("pairwise coprime moduli");
        let delta = mul_mod((r % p + p - cur) % p, inv, p);
        value += Integer::from(&modulus * delta);
        modulus *= p;
    }
    let half = Integer::from(&modulus >> 1);
    if value > half {
        value -= &modulus;
    }
    value
}
