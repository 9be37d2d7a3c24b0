//! Evaluation–interpolation driver.
//!
//! For each interpolation point `z_k` on the imaginary axis the engine
//! evaluates all conjugates `f(M_ν z_k)`, multiplies out `∏ (X - f(M_ν z_k))`
//! and stores its coefficients as one row. Each coefficient, seen as a
//! function of the base value `b(z_k)`, is a polynomial with integer
//! coefficients, which are recovered by interpolation and rounding.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rayon::prelude::*;
use rug::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cosets::CosetRep;
use crate::modfunc::{evaluate_conjugate, j_invariant, BaseFunction, FunctionFamily, HalfPlanePoint, ModFuncError};
use crate::numerics::{BigComplex, BigReal};
use crate::polyfloat::{interpolate_newton, real_poly_from_conjugate_pairs, PolyError};

/// Precision of the pilot run.
pub const PILOT_PRECISION: u32 = 100;
/// Guard bits added on top of the scaled pilot height.
pub const GUARD_BITS: u32 = 32;
pub const DEFAULT_SAFETY: f64 = 1.3;
/// Rounding is accepted when every coefficient is within this of an integer.
pub const ROUNDING_TOLERANCE: f64 = 0.25;
pub const MAX_PRECISION_DOUBLINGS: u32 = 4;
pub const MAX_DEGREE_DOUBLINGS: u32 = 8;
/// First guess for the base degree when no formula is available.
pub const INITIAL_DEGREE_GUESS: usize = 8;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("precision {precision} too low: {detail}")]
    PrecisionTooLow { precision: u32, detail: String },
    #[error("rounding failed at precision {precision}: coefficient of X^{x_pow} b^{base_pow} is {residual_log2:.1} bits from an integer")]
    RoundingFailed { precision: u32, x_pow: usize, base_pow: usize, residual_log2: f64 },
    #[error("holdout residual 2^{residual_log2:.1} above threshold 2^{threshold_log2:.1}")]
    HoldoutFailed { residual_log2: f64, threshold_log2: f64 },
    #[error("nonzero coefficient at X^{x_pow} b^{base_pow} where the family forces zero")]
    FamilyInconsistency { x_pow: usize, base_pow: usize },
    #[error("interpolation points degenerate: {0}")]
    DegeneratePlan(String),
    #[error("could not solve for interpolation node: {0}")]
    NodeSolve(String),
    #[error("sparse interpolation requested for a non-Schläfli family")]
    SparseUnsupported,
    #[error("row {k} does not match the plan: {detail}")]
    RowMismatch { k: usize, detail: String },
    #[error("gave up after {attempts} attempts; last error: {last}")]
    RetriesExhausted { attempts: usize, last: Box<EngineError> },
    #[error(transparent)]
    ModFunc(#[from] ModFuncError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

impl EngineError {
    /// Failures that more precision may cure.
    pub fn is_precision_related(&self) -> bool {
        matches!(
            self,
            EngineError::PrecisionTooLow { .. }
                | EngineError::RoundingFailed { .. }
                | EngineError::HoldoutFailed { .. }
                | EngineError::FamilyInconsistency { .. }
        )
    }
}

/// One interpolation point `z = i·y` and the base value there.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanPoint {
    pub y: BigReal,
    pub base: BigReal,
}

impl PlanPoint {
    pub fn z(&self) -> BigComplex {
        BigComplex::from_imag(&self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationPlan {
    pub family: FunctionFamily,
    pub deg_j: usize,
    pub points: Vec<PlanPoint>,
    pub precision: u32,
    /// Interpolate only the Schläfli-admissible exponents.
    pub sparse: bool,
}

impl InterpolationPlan {
    pub fn deg_x(&self) -> usize {
        self.family.ell() as usize + 1
    }
}

/// Coefficients `c_1..c_{deg_X}` of `∏ (X - f(M_ν z_k))` at one point;
/// `values[r-1]` multiplies `X^{deg_X - r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub k: usize,
    pub point: BigComplex,
    pub values: Vec<BigReal>,
}

/// Exact polynomial `Φ(X, b)`, monic in `X`.
///
/// `coeffs` maps `(X-power, base-power)` to nonzero integers and omits the
/// leading `X^{deg_X}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariatePolynomial {
    pub family: FunctionFamily,
    pub deg_x: usize,
    pub deg_j: usize,
    pub coeffs: BTreeMap<(usize, usize), Integer>,
    pub height: u32,
}

impl BivariatePolynomial {
    /// Builds the polynomial, dropping zeros and the leading term, and fills
    /// in the base degree and height.
    pub fn new(family: FunctionFamily, deg_x: usize, coeffs: BTreeMap<(usize, usize), Integer>) -> Self {
        let coeffs: BTreeMap<_, _> = coeffs
            .into_iter()
            .filter(|(key, v)| *v != 0 && *key != (deg_x, 0))
            .collect();
        let deg_j = coeffs.keys().map(|&(_, k)| k).max().unwrap_or(0);
        let max = coeffs.values().map(|v| v.clone().abs()).max().unwrap_or_default().max(Integer::from(1));
        let height = Integer::from(&max - 1).significant_bits();
        BivariatePolynomial { family, deg_x, deg_j, coeffs, height }
    }

    /// Coefficient of `X^i b^k`, including the implicit leading one.
    pub fn coeff(&self, i: usize, k: usize) -> Integer {
        if (i, k) == (self.deg_x, 0) {
            return Integer::from(1);
        }
        self.coeffs.get(&(i, k)).cloned().unwrap_or_default()
    }

    /// All nonzero terms including the leading one.
    pub fn terms(&self) -> impl Iterator<Item = ((usize, usize), Integer)> + '_ {
        std::iter::once(((self.deg_x, 0), Integer::from(1)))
            .chain(self.coeffs.iter().map(|(k, v)| (*k, v.clone())))
    }

    /// Whether `Φ(X, b) = Φ(b, X)`.
    pub fn is_symmetric(&self) -> bool {
        self.terms().all(|((i, k), v)| self.coeff(k, i) == v)
    }

    /// Nonzero residues of all terms modulo `p`.
    pub fn reduce_mod(&self, p: u64) -> BTreeMap<(usize, usize), u64> {
        let m = Integer::from(p);
        self.terms()
            .filter_map(|(key, c)| {
                let mut r = c % &m;
                if r < 0 {
                    r += &m;
                }
                let r = r.to_u64().expect("residue below a 64-bit modulus");
                (r != 0).then_some((key, r))
            })
            .collect()
    }

    /// `(Φ(x, b), Σ |c| |x|^i |b|^k)` at `prec` bits.
    pub fn evaluate_with_norm(&self, x: &BigComplex, b: &BigComplex, prec: u32) -> (BigComplex, BigReal) {
        let xp = powers(x, self.deg_x, prec);
        let bp = powers(b, self.deg_j, prec);
        let ax = x.abs().with_prec(prec);
        let ab = b.abs().with_prec(prec);
        let mut abp = vec![BigReal::one(prec)];
        for k in 1..=self.deg_j {
            let next = &abp[k - 1] * &ab;
            abp.push(next);
        }
        let mut value = BigComplex::zero(prec);
        let mut norm = BigReal::zero(prec);
        let mut row = BTreeMap::<usize, (BigComplex, BigReal)>::new();
        for ((i, k), c) in self.terms() {
            let c = BigReal::from_integer(&c, prec);
            let entry = row.entry(i).or_insert_with(|| (BigComplex::zero(prec), BigReal::zero(prec)));
            entry.0.add_assign(&bp[k].scale(&c));
            entry.1 = &entry.1 + &(&c.abs() * &abp[k]);
        }
        for (i, (v, n)) in row {
            value.add_assign(&(&v * &xp[i]));
            norm = &norm + &(&n * &ax.powi(i as i32));
        }
        (value, norm)
    }
}

fn powers(x: &BigComplex, n: usize, prec: u32) -> Vec<BigComplex> {
    let x = x.with_prec(prec);
    let mut out = vec![BigComplex::one(prec)];
    for i in 1..=n {
        let next = &out[i - 1] * &x;
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightEstimate {
    /// `⌈log2⌉` of the largest coefficient seen at pilot precision.
    pub pilot_height: u32,
    pub production_precision: u32,
}

/// Production precision from a pilot height.
///
/// The pilot's coefficient error is about `2^{loss - 100}` where `loss` is
/// the number of bits cancelled in the pipeline, so a large pilot height can
/// be mostly error. Besides the scaled height this therefore also covers
/// `pilot_height + 100`, which is what the pilot itself demonstrates.
pub fn production_precision(pilot_height: u32, safety: f64) -> u32 {
    let scaled = (pilot_height as f64 * safety).ceil() as u32;
    scaled.max(pilot_height + PILOT_PRECISION) + GUARD_BITS
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    pub safety: f64,
    pub precision_override: Option<u32>,
    pub deg_j_override: Option<usize>,
    /// Use the Schläfli sparsity to interpolate with fewer points.
    pub sparse: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { safety: DEFAULT_SAFETY, precision_override: None, deg_j_override: None, sparse: false }
    }
}

/// What happened during [`compute_modular_polynomial`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComputeReport {
    pub pilot_height: u32,
    pub precision: u32,
    pub precision_retries: u32,
    pub degree_guesses: Vec<usize>,
    pub holdout_log2: f64,
    pub pilot_time: Duration,
    pub evaluation_time: Duration,
    pub interpolation_time: Duration,
}

/// Exponent `i0` with `c_r(b) = b^{i0} P(b^24)` for the Schläfli coefficient
/// of `X^{x_pow}`: `ℓ i + x_pow ≡ ℓ + 1 (mod 24)` gives `i ≡ ℓ(ℓ + 1 - x_pow)`
/// since `ℓ² ≡ 1 (mod 24)`.
fn schlaefli_offset(ell: u64, x_pow: usize) -> usize {
    let l = (ell % 24) as i64;
    (l * (l + 1 - x_pow as i64)).rem_euclid(24) as usize
}

/// Predicate `(base_pow i, x_pow k) ↦ ℓ i + k ≡ ℓ + 1 (mod 24)`.
pub fn schlaefli_sparsity_filter(ell: u64) -> impl Fn(usize, usize) -> bool {
    move |i, k| (ell as u128 * i as u128 + k as u128) % 24 == ((ell + 1) % 24) as u128
}

/// Number of interpolation points for a base degree.
pub fn points_needed(deg_j: usize, sparse: bool) -> usize {
    if sparse {
        deg_j / 24 + 1
    } else {
        deg_j + 1
    }
}

fn j_on_axis(y: &BigReal, prec: u32) -> Result<BigReal, EngineError> {
    Ok(j_invariant(&HalfPlanePoint::imaginary(y)?, prec)?.re().clone())
}

/// `y >= 1` with `j(iy) = target`, for `target > 1728`.
fn solve_j_node(target: i64, prec: u32) -> Result<BigReal, EngineError> {
    let lowp = 64;
    let t_low = BigReal::from_i64(target, lowp);
    let mut lo = BigReal::one(lowp);
    let mut hi = BigReal::from_i64(2, lowp);
    let mut expand = 0;
    while j_on_axis(&hi, lowp)? < t_low {
        lo = hi.clone();
        hi = hi.mul_i64(2);
        expand += 1;
        if expand > 40 {
            return Err(EngineError::NodeSolve(format!("no bracket for j = {target}")));
        }
    }
    for _ in 0..48 {
        let mid = (&lo + &hi).div_i64(2);
        if j_on_axis(&mid, lowp)? < t_low {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut y = (&lo + &hi).div_i64(2);
    let target_prec = prec + 32;
    let mut p = lowp;
    let mut final_steps = 0;
    while final_steps < 2 {
        p = (2 * p).min(target_prec);
        if p == target_prec {
            final_steps += 1;
        }
        y = y.with_prec(p);
        let h = BigReal::one(p).mul_pow2(-(p as i32) / 4);
        let t = BigReal::from_i64(target, p);
        let f = &j_on_axis(&y, p)? - &t;
        let deriv = (&j_on_axis(&(&y + &h), p)? - &j_on_axis(&(&y - &h), p)?) / h.mul_i64(2);
        if deriv.is_zero() {
            return Err(EngineError::NodeSolve(format!("flat derivative at j = {target}")));
        }
        y = &y - &(&f / &deriv);
    }
    Ok(y.with_prec(prec))
}

fn base_on_axis(base: BaseFunction, y: &BigReal, prec: u32) -> Result<BigReal, EngineError> {
    let v = base.evaluate(&HalfPlanePoint::imaginary(y)?, prec + 16)?;
    check_real(&v, prec, "base value")?;
    Ok(v.re().with_prec(prec))
}

fn check_real(v: &BigComplex, prec: u32, what: &str) -> Result<(), EngineError> {
    if v.im().is_zero() {
        return Ok(());
    }
    let rel = v.im().log2_abs() - v.log2_abs().max(0.0);
    if rel > -(prec as f64) / 2.0 {
        return Err(EngineError::PrecisionTooLow {
            precision: prec,
            detail: format!("{what} has imaginary part 2^{rel:.1} relative to its size"),
        });
    }
    Ok(())
}

/// Picks the interpolation points on the imaginary axis.
///
/// Base `j`: `j(z_k) = 1728 + k` for `k = 1, 2, …`. Other bases: `y` on the
/// grid `1 + k/n`, shifted if two base values (or their 24th powers in
/// sparse mode) collide.
pub fn choose_points(
    family: &FunctionFamily,
    deg_j: usize,
    prec: u32,
    sparse: bool,
) -> Result<InterpolationPlan, EngineError> {
    if sparse && !matches!(family, FunctionFamily::Schlaefli { .. }) {
        return Err(EngineError::SparseUnsupported);
    }
    let n = points_needed(deg_j, sparse);
    let base = family.base();
    let points = match base {
        BaseFunction::J => (1..=n as i64)
            .into_par_iter()
            .map(|k| {
                let y = solve_j_node(1728 + k, prec)?;
                Ok(PlanPoint { y, base: BigReal::from_i64(1728 + k, prec) })
            })
            .collect::<Result<Vec<_>, EngineError>>()?,
        _ => grid_points(base, n, prec, sparse)?,
    };
    Ok(InterpolationPlan { family: *family, deg_j, points, precision: prec, sparse })
}

fn grid_points(base: BaseFunction, n: usize, prec: u32, sparse: bool) -> Result<Vec<PlanPoint>, EngineError> {
    let tol = -(prec as f64) / 2.0;
    for attempt in 0..4i64 {
        let points = (0..n as i64)
            .into_par_iter()
            .map(|k| {
                // 1 + (k + attempt/4) / n
                let y = &BigReal::one(prec) + &BigReal::from_ratio(4 * k + attempt, 4 * n as i64, prec);
                let b = base_on_axis(base, &y, prec)?;
                Ok(PlanPoint { y, base: b })
            })
            .collect::<Result<Vec<_>, EngineError>>()?;
        let nodes: Vec<BigReal> = points.iter().map(|p| node_value(&p.base, sparse)).collect();
        let collision = (0..n).any(|a| {
            (0..a).any(|c| {
                let d = &nodes[a] - &nodes[c];
                d.is_zero() || d.log2_abs() - nodes[a].log2_abs().max(0.0) < tol
            })
        });
        if !collision {
            return Ok(points);
        }
        warn!("base values collide on grid attempt {attempt}, shifting");
    }
    Err(EngineError::DegeneratePlan(format!("{n} grid points keep colliding")))
}

fn node_value(base: &BigReal, sparse: bool) -> BigReal {
    if sparse {
        base.powi(24)
    } else {
        base.clone()
    }
}

/// Reference shift between consecutive translation representatives.
fn translation_unit(reps: &[CosetRep]) -> i64 {
    reps.iter()
        .filter_map(|m| m.translation_shift())
        .filter(|&t| t > 0)
        .min()
        .unwrap_or(1)
}

/// Computes the row for point `k` of the plan.
///
/// Translation conjugates `ν` and `ℓ - ν` are complex conjugates on the
/// imaginary axis, so only one of each pair is evaluated.
pub fn evaluate_row(plan: &InterpolationPlan, k: usize) -> Result<EvalRow, EngineError> {
    let prec = plan.precision;
    let family = &plan.family;
    let ell = family.ell() as i64;
    let system = family.cosets()?;
    let unit = translation_unit(&system.reps);
    let point = &plan.points[k];
    let z = HalfPlanePoint::new(point.z().with_prec(prec))?;
    let mut reals = Vec::new();
    let mut pairs = Vec::new();
    for m in &system.reps {
        match m.translation_shift() {
            Some(t) => {
                let nu = t / unit;
                if 2 * nu > ell {
                    continue;
                }
                let v = evaluate_conjugate(family, m, &z, prec)?;
                if nu == 0 || 2 * nu == ell {
                    check_real(&v, prec, "self-conjugate value")?;
                    reals.push(v.re().clone());
                } else {
                    pairs.push(v);
                }
            }
            None => {
                let v = evaluate_conjugate(family, m, &z, prec)?;
                check_real(&v, prec, "inversion conjugate")?;
                reals.push(v.re().clone());
            }
        }
    }
    let poly = real_poly_from_conjugate_pairs(&reals, &pairs, prec);
    let deg_x = plan.deg_x();
    debug_assert_eq!(poly.degree(), Some(deg_x));
    let coeffs = poly.coeffs();
    let values = (1..=deg_x).map(|r| coeffs[deg_x - r].clone()).collect();
    Ok(EvalRow { k, point: point.z(), values })
}

/// Rows for every point, in parallel over points.
pub fn evaluation_phase(plan: &InterpolationPlan) -> Result<Vec<EvalRow>, EngineError> {
    (0..plan.points.len()).into_par_iter().map(|k| evaluate_row(plan, k)).collect()
}

/// Interpolated but unrounded coefficients per X-power: `out[i][k]` is the
/// coefficient of `X^i b^k` for `i < deg_X`.
fn interpolate_columns(plan: &InterpolationPlan, rows: &[EvalRow]) -> Result<Vec<Vec<BigReal>>, EngineError> {
    let prec = plan.precision;
    let deg_x = plan.deg_x();
    let ell = plan.family.ell();
    let n = plan.points.len();
    if rows.len() != n {
        return Err(EngineError::RowMismatch { k: rows.len(), detail: format!("expected {n} rows") });
    }
    for (k, row) in rows.iter().enumerate() {
        if row.k != k || row.values.len() != deg_x {
            return Err(EngineError::RowMismatch { k, detail: "row index or length".into() });
        }
    }
    let nodes: Vec<BigReal> = plan.points.iter().map(|p| node_value(&p.base, plan.sparse)).collect();
    (0..deg_x)
        .into_par_iter()
        .map(|x_pow| {
            let r = deg_x - x_pow;
            if !plan.sparse {
                let values: Vec<BigReal> = rows.iter().map(|row| row.values[r - 1].clone()).collect();
                let p = interpolate_newton(&nodes, &values, prec)?;
                let mut c = p.into_coeffs();
                c.resize(n, BigReal::zero(prec));
                return Ok(c);
            }
            let i0 = schlaefli_offset(ell, x_pow);
            let values: Vec<BigReal> = rows
                .iter()
                .zip(&plan.points)
                .map(|(row, pt)| &row.values[r - 1] / &pt.base.powi(i0 as i32))
                .collect();
            let p = interpolate_newton(&nodes, &values, prec)?;
            let mut c = vec![BigReal::zero(prec); i0 + 24 * (n - 1) + 1];
            for (m, v) in p.into_coeffs().into_iter().enumerate() {
                c[i0 + 24 * m] = v;
            }
            Ok(c)
        })
        .collect()
}

/// Interpolates, rounds and assembles the exact polynomial.
pub fn interpolation_phase(plan: &InterpolationPlan, rows: &[EvalRow]) -> Result<BivariatePolynomial, EngineError> {
    let cols = interpolate_columns(plan, rows)?;
    let deg_x = plan.deg_x();
    let mut coeffs = BTreeMap::new();
    let threshold = BigReal::from_f64(ROUNDING_TOLERANCE, 64);
    for (x_pow, col) in cols.iter().enumerate() {
        for (base_pow, v) in col.iter().enumerate() {
            let (int, residual) = v.round_to_integer();
            if residual > threshold {
                return Err(EngineError::RoundingFailed {
                    precision: plan.precision,
                    x_pow,
                    base_pow,
                    residual_log2: residual.log2_abs(),
                });
            }
            if int != 0 {
                coeffs.insert((x_pow, base_pow), int);
            }
        }
    }
    let poly = BivariatePolynomial::new(plan.family, deg_x, coeffs);
    if let FunctionFamily::Schlaefli { ell } = plan.family {
        let admissible = schlaefli_sparsity_filter(ell);
        if let Some(&(x_pow, base_pow)) = poly.coeffs.keys().find(|&&(i, k)| !admissible(k, i)) {
            return Err(EngineError::FamilyInconsistency { x_pow, base_pow });
        }
    }
    Ok(poly)
}

/// Runs the pipeline at [`PILOT_PRECISION`] and reports the largest
/// coefficient it produces; nothing is rounded.
pub fn pilot_run(family: &FunctionFamily, deg_j: usize, safety: f64, sparse: bool) -> Result<HeightEstimate, EngineError> {
    let plan = choose_points(family, deg_j, PILOT_PRECISION, sparse)?;
    let rows = evaluation_phase(&plan)?;
    let cols = interpolate_columns(&plan, &rows)?;
    let max = cols
        .iter()
        .flatten()
        .filter(|v| !v.is_zero())
        .map(|v| v.log2_abs())
        .fold(0.0f64, f64::max);
    let pilot_height = max.ceil().max(0.0) as u32;
    Ok(HeightEstimate { pilot_height, production_precision: production_precision(pilot_height, safety) })
}

/// `z* = i·(1 + √5)/2`, away from every interpolation node.
pub fn holdout_point(prec: u32) -> HalfPlanePoint {
    let phi = (&BigReal::one(prec) + &BigReal::from_i64(5, prec).sqrt()).div_i64(2);
    HalfPlanePoint::imaginary(&phi).expect("φ > 0")
}

/// `max_ν |Φ(f(M_ν z*), b(z*))| / Σ |c| |f|^i |b|^k` at `prec` bits.
pub fn holdout_residual(family: &FunctionFamily, poly: &BivariatePolynomial, prec: u32) -> Result<BigReal, EngineError> {
    let work = prec + 16;
    let z = holdout_point(work);
    let b = family.base_value(&z, work)?;
    let system = family.cosets()?;
    let ratios = system
        .reps
        .par_iter()
        .map(|m| {
            let f = evaluate_conjugate(family, m, &z, work)?;
            let (value, norm) = poly.evaluate_with_norm(&f, &b, work);
            Ok((value.abs() / norm).with_prec(prec))
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    Ok(BigReal::max_abs(&ratios).unwrap_or_else(|| BigReal::zero(prec)))
}

/// Holdout acceptance threshold `2^{-P/4}`.
pub fn holdout_threshold_log2(prec: u32) -> f64 {
    -(prec as f64) / 4.0
}

fn production_attempt(
    family: &FunctionFamily,
    deg_j: usize,
    prec: u32,
    sparse: bool,
    report: &mut ComputeReport,
) -> Result<BivariatePolynomial, EngineError> {
    let t = Instant::now();
    let plan = choose_points(family, deg_j, prec, sparse)?;
    let rows = evaluation_phase(&plan)?;
    report.evaluation_time += t.elapsed();
    let t = Instant::now();
    let poly = interpolation_phase(&plan, &rows)?;
    report.interpolation_time += t.elapsed();
    let residual = check_holdout(family, &poly, prec);
    match &residual {
        Ok(r) | Err(EngineError::HoldoutFailed { residual_log2: r, .. }) => report.holdout_log2 = *r,
        Err(_) => {}
    }
    residual?;
    Ok(poly)
}

/// Runs the holdout check and returns `log2` of the residual.
pub fn check_holdout(family: &FunctionFamily, poly: &BivariatePolynomial, prec: u32) -> Result<f64, EngineError> {
    let residual_log2 = holdout_residual(family, poly, prec)?.log2_abs();
    let threshold_log2 = holdout_threshold_log2(prec);
    if residual_log2 > threshold_log2 {
        return Err(EngineError::HoldoutFailed { residual_log2, threshold_log2 });
    }
    Ok(residual_log2)
}

/// Full pipeline: degree, pilot, production run with retries, holdout.
///
/// With a known base degree, failures double the precision. Otherwise the
/// degree guess starts at [`INITIAL_DEGREE_GUESS`] and doubles on failure; a
/// guess is accepted once rounding succeeds and the holdout residual is
/// small.
pub fn compute_modular_polynomial(
    family: &FunctionFamily,
    options: &EngineOptions,
) -> Result<(BivariatePolynomial, ComputeReport), EngineError> {
    let family = family.validated()?;
    if options.sparse && !matches!(family, FunctionFamily::Schlaefli { .. }) {
        return Err(EngineError::SparseUnsupported);
    }
    let known = options.deg_j_override.or(family.profile().deg_j_known);
    let guesses: Vec<usize> = match known {
        Some(d) => vec![d],
        None => (0..=MAX_DEGREE_DOUBLINGS).map(|i| INITIAL_DEGREE_GUESS << i).collect(),
    };
    let mut report = ComputeReport::default();
    let mut attempts = 0;
    let mut last: Option<EngineError> = None;
    for &deg_j in &guesses {
        report.degree_guesses.push(deg_j);
        let t = Instant::now();
        let estimate = pilot_run(&family, deg_j, options.safety, options.sparse)?;
        report.pilot_time += t.elapsed();
        report.pilot_height = estimate.pilot_height;
        let mut prec = options.precision_override.unwrap_or(estimate.production_precision);
        info!(
            "{family}: deg_j {deg_j}, pilot height {}, precision {prec}",
            estimate.pilot_height
        );
        let doublings = if known.is_some() { MAX_PRECISION_DOUBLINGS } else { 0 };
        for retry in 0..=doublings {
            attempts += 1;
            match production_attempt(&family, deg_j, prec, options.sparse, &mut report) {
                Ok(poly) => {
                    report.precision = prec;
                    report.precision_retries = retry;
                    return Ok((poly, report));
                }
                Err(e) if e.is_precision_related() => {
                    debug!("attempt at deg_j {deg_j}, precision {prec} failed: {e}");
                    last = Some(e);
                    prec *= 2;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Err(EngineError::RetriesExhausted {
        attempts,
        last: Box::new(last.expect("at least one attempt failed")),
    })
}
