//! Coset representatives for the congruence subgroups used by the families.
//!
//! Every system lists the translation-type representatives first, in
//! increasing order of their shift, and the inversion-type representative
//! last. The evaluation phase relies on that order to pair complex-conjugate
//! translates.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{ext_gcd, gcd, is_prime, mod_inverse, prime_factors};
use crate::numerics::BigComplex;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CosetError {
    #[error("matrix ({a} {b}; {c} {d}) has determinant {det}, expected 1")]
    NotUnimodular { a: i64, b: i64, c: i64, d: i64, det: i128 },
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("level {ell} shares a factor with {n}")]
    NotCoprime { ell: u64, n: u64 },
    #[error("level must be at least 2, got {0}")]
    LevelTooSmall(u64),
}

/// Integer matrix `(a b; c d)` of determinant 1, acting on the upper half
/// plane by Möbius transformations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CosetRep {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl CosetRep {
    pub const IDENTITY: CosetRep = CosetRep { a: 1, b: 0, c: 0, d: 1 };
    pub const S: CosetRep = CosetRep { a: 0, b: -1, c: 1, d: 0 };

    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self, CosetError> {
        let det = a as i128 * d as i128 - b as i128 * c as i128;
        if det != 1 {
            return Err(CosetError::NotUnimodular { a, b, c, d, det });
        }
        Ok(CosetRep { a, b, c, d })
    }

    pub fn translation(t: i64) -> Self {
        CosetRep { a: 1, b: t, c: 0, d: 1 }
    }

    pub fn det(&self) -> i128 {
        self.a as i128 * self.d as i128 - self.b as i128 * self.c as i128
    }

    pub fn inverse(&self) -> Self {
        CosetRep { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn compose(&self, rhs: &CosetRep) -> Self {
        CosetRep {
            a: self.a * rhs.a + self.b * rhs.c,
            b: self.a * rhs.b + self.b * rhs.d,
            c: self.c * rhs.a + self.d * rhs.c,
            d: self.c * rhs.b + self.d * rhs.d,
        }
    }

    /// The shift `t` if this is the translation `z -> z + t`.
    pub fn translation_shift(&self) -> Option<i64> {
        (self.c == 0 && self.a == 1 && self.d == 1).then_some(self.b)
    }

    /// `(a z + b) / (c z + d)` at the precision of `z`.
    pub fn act(&self, z: &BigComplex) -> BigComplex {
        if let Some(t) = self.translation_shift() {
            if t == 0 {
                return z.clone();
            }
            return z + &BigComplex::from_i64(t, z.prec());
        }
        let prec = z.prec();
        let num = &z.scale_i64(self.a) + &BigComplex::from_i64(self.b, prec);
        let den = &z.scale_i64(self.c) + &BigComplex::from_i64(self.d, prec);
        &num / &den
    }
}

impl fmt::Display for CosetRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {}; {} {})", self.a, self.b, self.c, self.d)
    }
}

/// Which pair of groups `Γ' ⊂ Γ''` a coset system enumerates `Γ' \ Γ''` for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupTag {
    /// `Γ^0(ℓ) \ Γ`, ℓ prime.
    Gamma0Prime { ell: u64 },
    /// `Γ^0(N) \ Γ`.
    Gamma0Composite { n: u64 },
    /// `(Γ(48) ∩ Γ^0(ℓ)) \ Γ(48)`.
    Schlaefli { ell: u64 },
    /// `Γ^0(ℓN) \ Γ^0(N)`.
    GeneralizedSchlaefli { ell: u64, n: u64 },
}

impl GroupTag {
    /// Membership in the smaller group, up to sign.
    pub fn contains(&self, m: &CosetRep) -> bool {
        let b = m.b as i128;
        match *self {
            GroupTag::Gamma0Prime { ell } => b.rem_euclid(ell as i128) == 0,
            GroupTag::Gamma0Composite { n } => b.rem_euclid(n as i128) == 0,
            GroupTag::Schlaefli { ell } => {
                let ident = |s: i64| {
                    (m.a - s).rem_euclid(48) == 0
                        && m.b.rem_euclid(48) == 0
                        && m.c.rem_euclid(48) == 0
                        && (m.d - s).rem_euclid(48) == 0
                };
                b.rem_euclid(ell as i128) == 0 && (ident(1) || ident(-1))
            }
            GroupTag::GeneralizedSchlaefli { ell, n } => b.rem_euclid((ell * n) as i128) == 0,
        }
    }

    /// The index `[Γ'' : Γ']`.
    pub fn index(&self) -> u64 {
        match *self {
            GroupTag::Gamma0Prime { ell }
            | GroupTag::Schlaefli { ell }
            | GroupTag::GeneralizedSchlaefli { ell, .. } => ell + 1,
            GroupTag::Gamma0Composite { n } => gamma0_index(n),
        }
    }
}

/// `N ∏_{p | N} (1 + 1/p)`.
pub fn gamma0_index(n: u64) -> u64 {
    prime_factors(n)
        .into_iter()
        .fold(n, |acc, p| acc / p * (p + 1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CosetSystem {
    pub tag: GroupTag,
    pub reps: Vec<CosetRep>,
}

impl CosetSystem {
    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    /// First pair `(i, j)` of representatives lying in the same coset.
    pub fn find_equivalent_pair(&self) -> Option<(usize, usize)> {
        for i in 0..self.reps.len() {
            for j in 0..i {
                let q = self.reps[i].compose(&self.reps[j].inverse());
                if self.tag.contains(&q) {
                    return Some((j, i));
                }
            }
        }
        None
    }
}

/// `T^0, …, T^{ℓ-1}, S` for `Γ^0(ℓ) \ Γ`.
pub fn reps_gamma0_prime(ell: u64) -> Result<CosetSystem, CosetError> {
    if !is_prime(ell) {
        return Err(CosetError::NotPrime(ell));
    }
    let mut reps: Vec<CosetRep> = (0..ell as i64).map(CosetRep::translation).collect();
    reps.push(CosetRep::S);
    Ok(CosetSystem { tag: GroupTag::Gamma0Prime { ell }, reps })
}

/// One representative per point of the projective line over `ℤ/N`.
///
/// Right cosets of `Γ^0(N)` are determined by the top row `(a : b)` modulo
/// `N` and units, so each class is lifted to a matrix with that top row.
pub fn reps_gamma0_composite(n: u64) -> Result<CosetSystem, CosetError> {
    if n < 2 {
        return Err(CosetError::LevelTooSmall(n));
    }
    let ni = n as i64;
    let units: Vec<i64> = (1..ni).filter(|&u| gcd(u as u64, n) == 1).collect();
    let mut seen = HashSet::new();
    let mut classes = Vec::new();
    for x in 0..ni {
        for y in 0..ni {
            if gcd(gcd(x as u64, y as u64), n) != 1 {
                continue;
            }
            let canon = units
                .iter()
                .map(|&u| ((u * x) % ni, (u * y) % ni))
                .min()
                .expect("at least one unit");
            if seen.insert(canon) {
                classes.push(canon);
            }
        }
    }
    // (1 : ν) first, in increasing ν; (0 : 1) last.
    classes.sort_by_key(|&(x, y)| {
        let group = match x {
            1 => 0,
            0 => 2,
            _ => 1,
        };
        (group, x, y)
    });
    let reps = classes.into_iter().map(|(x, y)| lift_top_row(x, y, ni)).collect();
    Ok(CosetSystem { tag: GroupTag::Gamma0Composite { n }, reps })
}

fn lift_top_row(x: i64, y: i64, n: i64) -> CosetRep {
    if x == 0 {
        debug_assert_eq!(y, 1);
        return CosetRep::S;
    }
    if x == 1 {
        return CosetRep::translation(y);
    }
    let y = (0..)
        .map(|t| y + t * n)
        .find(|&y| gcd(x as u64, y as u64) == 1)
        .expect("gcd(x, y, N) = 1 admits a coprime lift");
    let (g, u, v) = ext_gcd(x, y);
    debug_assert_eq!(g, 1);
    // x*u + y*v = 1
    CosetRep { a: x, b: y, c: -v, d: u }
}

/// Representatives of `(Γ(48) ∩ Γ^0(ℓ)) \ Γ(48)`: the translations by
/// multiples of 48 and one conjugate of `S` that is congruent to the
/// identity mod 48.
pub fn reps_schlaefli(ell: u64) -> Result<CosetSystem, CosetError> {
    let sys = shifted_system(ell, 48)?;
    Ok(CosetSystem { tag: GroupTag::Schlaefli { ell }, reps: sys })
}

/// Representatives of `Γ^0(ℓN) \ Γ^0(N)`, built like [`reps_schlaefli`]
/// with `N` in place of 48.
pub fn reps_generalized_schlaefli(ell: u64, n: u64) -> Result<CosetSystem, CosetError> {
    let sys = shifted_system(ell, n)?;
    Ok(CosetSystem { tag: GroupTag::GeneralizedSchlaefli { ell, n }, reps: sys })
}

fn shifted_system(ell: u64, n: u64) -> Result<Vec<CosetRep>, CosetError> {
    if !is_prime(ell) {
        return Err(CosetError::NotPrime(ell));
    }
    if gcd(ell, n) != 1 {
        return Err(CosetError::NotCoprime { ell, n });
    }
    let ni = n as i64;
    let k = mod_inverse(n % ell, ell).expect("coprime") as i64;
    let mut reps: Vec<CosetRep> = (0..ell as i64).map(|nu| CosetRep::translation(ni * nu)).collect();
    let nk = ni * k;
    reps.push(CosetRep::new(1 - nk, nk, -nk, 1 + nk)?);
    Ok(reps)
}
