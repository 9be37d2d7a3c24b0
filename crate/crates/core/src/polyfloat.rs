//! Dense univariate polynomials over big floats.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use crate::numerics::{root_of_unity_pow, BigComplex, BigReal};

/// Below this size (in the smaller operand) products are done by schoolbook.
pub const FFT_THRESHOLD: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("interpolation nodes {0} and {1} coincide to working precision")]
    DegenerateNodes(usize, usize),
    #[error("node and value lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("root {0} has no complex-conjugate partner")]
    UnpairedRoot(usize),
    #[error("empty input")]
    Empty,
}

/// Coefficient ring for [`FloatPoly`].
pub trait Scalar: Clone + Send + Sync + fmt::Debug {
    fn zero(prec: u32) -> Self;
    fn one(prec: u32) -> Self;
    fn prec(&self) -> u32;
    fn is_zero(&self) -> bool;
    fn plus(&self, rhs: &Self) -> Self;
    fn minus(&self, rhs: &Self) -> Self;
    fn times(&self, rhs: &Self) -> Self;
    fn negated(&self) -> Self;
    fn log2_abs(&self) -> f64;
    fn to_complex(&self) -> BigComplex;
    /// Projection back from the complex numbers (the real part for reals).
    fn from_complex(c: BigComplex) -> Self;
    fn with_prec(&self, prec: u32) -> Self;
}

impl Scalar for BigReal {
    fn zero(prec: u32) -> Self {
        BigReal::zero(prec)
    }
    fn one(prec: u32) -> Self {
        BigReal::one(prec)
    }
    fn prec(&self) -> u32 {
        BigReal::prec(self)
    }
    fn is_zero(&self) -> bool {
        BigReal::is_zero(self)
    }
    fn plus(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn minus(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn times(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn negated(&self) -> Self {
        -self
    }
    fn log2_abs(&self) -> f64 {
        BigReal::log2_abs(self)
    }
    fn to_complex(&self) -> BigComplex {
        BigComplex::from_real(self)
    }
    fn from_complex(c: BigComplex) -> Self {
        c.re().clone()
    }
    fn with_prec(&self, prec: u32) -> Self {
        BigReal::with_prec(self, prec)
    }
}

impl Scalar for BigComplex {
    fn zero(prec: u32) -> Self {
        BigComplex::zero(prec)
    }
    fn one(prec: u32) -> Self {
        BigComplex::one(prec)
    }
    fn prec(&self) -> u32 {
        BigComplex::prec(self)
    }
    fn is_zero(&self) -> bool {
        BigComplex::is_zero(self)
    }
    fn plus(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn minus(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn times(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn negated(&self) -> Self {
        -self
    }
    fn log2_abs(&self) -> f64 {
        BigComplex::log2_abs(self)
    }
    fn to_complex(&self) -> BigComplex {
        self.clone()
    }
    fn from_complex(c: BigComplex) -> Self {
        c
    }
    fn with_prec(&self, prec: u32) -> Self {
        BigComplex::with_prec(self, prec)
    }
}

/// Polynomial with coefficients stored low degree first.
#[derive(Clone, PartialEq)]
pub struct FloatPoly<T> {
    coeffs: Vec<T>,
    prec: u32,
}

impl<T: Scalar> FloatPoly<T> {
    /// Builds a polynomial, dropping exactly-zero leading coefficients.
    pub fn new(coeffs: Vec<T>, prec: u32) -> Self {
        let mut p = FloatPoly { coeffs, prec };
        while p.coeffs.last().is_some_and(|c| c.is_zero()) {
            p.coeffs.pop();
        }
        p
    }

    pub fn zero(prec: u32) -> Self {
        FloatPoly { coeffs: Vec::new(), prec }
    }

    pub fn constant(c: T) -> Self {
        let prec = c.prec();
        FloatPoly::new(vec![c], prec)
    }

    /// `X - root`.
    pub fn linear(root: &T) -> Self {
        let prec = root.prec();
        FloatPoly { coeffs: vec![root.negated(), T::one(prec)], prec }
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn evaluate(&self, x: &T) -> T {
        let mut acc = T::zero(self.prec);
        for c in self.coeffs.iter().rev() {
            acc = acc.times(x).plus(c);
        }
        acc
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let prec = self.prec.max(rhs.prec);
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..n)
            .map(|i| match (self.coeffs.get(i), rhs.coeffs.get(i)) {
                (Some(a), Some(b)) => a.plus(b),
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b.clone(),
                (None, None) => unreachable!(),
            })
            .collect();
        FloatPoly::new(coeffs, prec)
    }

    /// Product, using the FFT once both factors reach [`FFT_THRESHOLD`].
    pub fn mul(&self, rhs: &Self) -> Self {
        if self.coeffs.len().min(rhs.coeffs.len()) >= FFT_THRESHOLD {
            fft_multiply(self, rhs, self.prec.max(rhs.prec))
        } else {
            schoolbook_multiply(self, rhs)
        }
    }

    /// Largest `log2 |c|` over the coefficients.
    pub fn max_log2_coeff(&self) -> f64 {
        self.coeffs
            .iter()
            .filter(|c| !c.is_zero())
            .map(|c| c.log2_abs())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl<T: Scalar> fmt::Debug for FloatPoly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.coeffs).finish()
    }
}

pub fn schoolbook_multiply<T: Scalar>(a: &FloatPoly<T>, b: &FloatPoly<T>) -> FloatPoly<T> {
    let prec = a.prec.max(b.prec);
    if a.is_zero() || b.is_zero() {
        return FloatPoly::zero(prec);
    }
    FloatPoly::new(schoolbook_coeffs(&a.coeffs, &b.coeffs, prec), prec)
}

fn schoolbook_coeffs<T: Scalar>(a: &[T], b: &[T], prec: u32) -> Vec<T> {
    let mut out = vec![T::zero(prec); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j].plus(&x.times(y));
        }
    }
    out
}

type Twiddles = Arc<Vec<BigComplex>>;

/// `e^{-2πik/n}` for `k < n/2`, cached per `(n, prec)`.
fn twiddles(n: usize, prec: u32) -> Twiddles {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u32), Twiddles>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(&(n, prec)) {
        return t.clone();
    }
    let t: Twiddles = Arc::new(
        (0..n / 2)
            .map(|k| root_of_unity_pow(-(k as i64), n as u64, prec))
            .collect(),
    );
    cache.lock().unwrap().entry((n, prec)).or_insert(t).clone()
}

/// In-place iterative radix-2 transform; `inverse` conjugates the twiddles
/// but does not scale.
fn fft_in_place(a: &mut [BigComplex], inverse: bool, prec: u32) {
    let n = a.len();
    debug_assert!(n.is_power_of_two());
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            a.swap(i, j);
        }
    }
    let tw = twiddles(n, prec);
    let mut len = 2;
    while len <= n {
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = &tw[k * stride];
                let w = if inverse { w.conj() } else { w.clone() };
                let v = &a[start + k + len / 2] * &w;
                let u = a[start + k].clone();
                a[start + k] = &u + &v;
                a[start + k + len / 2] = &u - &v;
            }
        }
        len <<= 1;
    }
}

/// Product by complex FFT of size the next power of two above the result
/// length.
pub fn fft_multiply<T: Scalar>(a: &FloatPoly<T>, b: &FloatPoly<T>, prec: u32) -> FloatPoly<T> {
    if a.is_zero() || b.is_zero() {
        return FloatPoly::zero(prec);
    }
    FloatPoly::new(fft_coeffs(&a.coeffs, &b.coeffs, prec), prec)
}

fn fft_coeffs<T: Scalar>(a: &[T], b: &[T], prec: u32) -> Vec<T> {
    let len = a.len() + b.len() - 1;
    let n = len.next_power_of_two();
    let work = prec + 2 * n.trailing_zeros() + 8;
    let load = |p: &[T]| {
        let mut v: Vec<BigComplex> = p.iter().map(|c| c.to_complex().with_prec(work)).collect();
        v.resize(n, BigComplex::zero(work));
        v
    };
    let mut fa = load(a);
    let mut fb = load(b);
    fft_in_place(&mut fa, false, work);
    fft_in_place(&mut fb, false, work);
    for (x, y) in fa.iter_mut().zip(&fb) {
        x.mul_assign(y);
    }
    fft_in_place(&mut fa, true, work);
    let shift = -(n.trailing_zeros() as i32);
    fa.into_iter()
        .take(len)
        .map(|c| {
            let c = BigComplex::new(&c.re().mul_pow2(shift), &c.im().mul_pow2(shift), prec);
            T::from_complex(c)
        })
        .collect()
}

/// Product of two monic polynomials. The leading coefficient is set to
/// exactly one; next to large lower coefficients it could otherwise be lost
/// to rounding.
fn monic_product<T: Scalar>(a: &FloatPoly<T>, b: &FloatPoly<T>) -> FloatPoly<T> {
    let prec = a.prec.max(b.prec);
    let mut c = if a.coeffs.len().min(b.coeffs.len()) >= FFT_THRESHOLD {
        fft_coeffs(&a.coeffs, &b.coeffs, prec)
    } else {
        schoolbook_coeffs(&a.coeffs, &b.coeffs, prec)
    };
    *c.last_mut().expect("monic factors are nonzero") = T::one(prec);
    FloatPoly { coeffs: c, prec }
}

/// Multiplies monic factors together along a balanced binary tree.
fn product_tree<T: Scalar>(mut layer: Vec<FloatPoly<T>>, prec: u32) -> FloatPoly<T> {
    if layer.is_empty() {
        return FloatPoly::constant(T::one(prec));
    }
    while layer.len() > 1 {
        let mut next = Vec::with_capacity(layer.len().div_ceil(2));
        let mut it = layer.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => monic_product(&a, &b),
                None => a,
            });
        }
        layer = next;
    }
    layer.pop().expect("one factor left")
}

/// Monic `∏ (X - r)` over complex roots.
pub fn poly_from_roots(roots: &[BigComplex], prec: u32) -> FloatPoly<BigComplex> {
    let leaves = roots.iter().map(|r| FloatPoly::linear(&r.with_prec(prec))).collect();
    product_tree(leaves, prec)
}

/// Monic real `∏ (X - r)` where the roots are given as real roots plus one
/// representative `w` of each conjugate pair `{w, w̄}`.
pub fn real_poly_from_conjugate_pairs(
    real_roots: &[BigReal],
    pair_reps: &[BigComplex],
    prec: u32,
) -> FloatPoly<BigReal> {
    let mut leaves: Vec<FloatPoly<BigReal>> = pair_reps
        .iter()
        .map(|w| {
            let w = w.with_prec(prec);
            // X² - 2 Re(w) X + |w|²
            FloatPoly::new(vec![w.norm_sqr(), -&w.re().mul_i64(2), BigReal::one(prec)], prec)
        })
        .collect();
    leaves.extend(real_roots.iter().map(|r| FloatPoly::linear(&r.with_prec(prec))));
    product_tree(leaves, prec)
}

/// Monic real `∏ (X - r)` for a root list closed under conjugation.
///
/// Roots whose imaginary part is below `2^{-prec/2}` relative to their size
/// are taken as real; every other root must have a conjugate partner.
pub fn real_poly_from_roots(roots: &[BigComplex], prec: u32) -> Result<FloatPoly<BigReal>, PolyError> {
    let tol = -(prec as f64) / 2.0;
    let is_real = |w: &BigComplex| w.im().is_zero() || w.im().log2_abs() - w.log2_abs().max(0.0) < tol;
    let mut used = vec![false; roots.len()];
    let mut reals = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let w = &roots[i];
        if is_real(w) {
            reals.push(w.re().clone());
            continue;
        }
        let target = w.conj();
        let partner = (0..roots.len())
            .filter(|&k| !used[k])
            .min_by(|&a, &b| {
                let da = (&roots[a] - &target).log2_abs();
                let db = (&roots[b] - &target).log2_abs();
                da.total_cmp(&db)
            })
            .filter(|&k| (&roots[k] - &target).log2_abs() - w.log2_abs().max(0.0) < tol)
            .ok_or(PolyError::UnpairedRoot(i))?;
        used[partner] = true;
        pairs.push(w.clone());
    }
    Ok(real_poly_from_conjugate_pairs(&reals, &pairs, prec))
}

/// Interpolating polynomial of degree `< nodes.len()` by Newton divided
/// differences, returned in the monomial basis.
pub fn interpolate_newton(
    nodes: &[BigReal],
    values: &[BigReal],
    prec: u32,
) -> Result<FloatPoly<BigReal>, PolyError> {
    let n = nodes.len();
    if n != values.len() {
        return Err(PolyError::LengthMismatch(n, values.len()));
    }
    if n == 0 {
        return Err(PolyError::Empty);
    }
    let x: Vec<BigReal> = nodes.iter().map(|v| v.with_prec(prec)).collect();
    let tol = -(prec as f64) / 2.0;
    for i in 0..n {
        for k in 0..i {
            let scale = x[i].log2_abs().max(x[k].log2_abs()).max(0.0);
            let d = &x[i] - &x[k];
            if d.is_zero() || d.log2_abs() - scale < tol {
                return Err(PolyError::DegenerateNodes(k, i));
            }
        }
    }
    let mut c: Vec<BigReal> = values.iter().map(|v| v.with_prec(prec)).collect();
    for j in 1..n {
        for i in (j..n).rev() {
            c[i] = &(&c[i] - &c[i - 1]) / &(&x[i] - &x[i - j]);
        }
    }
    // nested form c0 + (X - x0)(c1 + (X - x1)(c2 + ...))
    let mut acc = vec![c[n - 1].clone()];
    for k in (0..n - 1).rev() {
        let mut next = vec![BigReal::zero(prec); acc.len() + 1];
        for (i, a) in acc.iter().enumerate() {
            next[i + 1] = &next[i + 1] + a;
            next[i] = &next[i] - &(a * &x[k]);
        }
        next[0] = &next[0] + &c[k];
        acc = next;
    }
    Ok(FloatPoly::new(acc, prec))
}
