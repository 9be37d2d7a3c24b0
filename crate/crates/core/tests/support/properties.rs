//! Property suites shared by the `properties` test target and the
//! acceptance runner. Each suite returns the first failure as a string.

use std::collections::HashSet;

use modpoly::arith::{gcd, is_prime};
use modpoly::cosets::{
    gamma0_index, reps_gamma0_composite, reps_gamma0_prime, reps_generalized_schlaefli, reps_schlaefli, CosetRep,
    CosetSystem,
};
use modpoly::engine::{
    compute_modular_polynomial, holdout_residual, holdout_threshold_log2, BivariatePolynomial, EngineOptions,
};
use modpoly::modfunc::{eta, j_invariant, weber_f};
use modpoly::numerics::{complex_sqrt_principal, exp_complex, root_of_unity, root_of_unity_pow};
use modpoly::oracle::{crt_lift, oracle_modular_polynomial};
use modpoly::polyfloat::{fft_multiply, interpolate_newton, poly_from_roots, schoolbook_multiply, FloatPoly};
use modpoly::{BigComplex, BigReal, FunctionFamily, HalfPlanePoint};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Integer;

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn report<T: std::fmt::Debug>(suite: &str, r: Result<(), TestError<T>>) -> Result<(), String> {
    r.map_err(|e| format!("{suite}: {e}"))
}

fn below(what: &str, log2: f64, bound: f64) -> Result<(), TestCaseError> {
    if log2 < bound {
        Ok(())
    } else {
        Err(TestCaseError::fail(format!("{what}: 2^{log2:.1} not below 2^{bound:.1}")))
    }
}

pub fn random_primes(n: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < n {
        let c = rng.gen_range(1u64 << 61..1u64 << 62) | 1;
        if is_prime(c) && !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

/// `exp(z) exp(-z) = 1`, `ζ_n^n = 1` and record round trips, each at `P`
/// and `2P` so that the defect bound is seen to scale with precision.
pub fn numerics_identities() -> Result<(), String> {
    let precs = prop::sample::select(vec![64u32, 256, 1024]);
    let point = (-7.0f64..7.0, -7.0f64..7.0);
    report(
        "exp",
        runner(96).run(&(point, precs.clone()), |((x, y), p)| {
            for prec in [p, 2 * p] {
                let z = BigComplex::from_f64(x, y, prec);
                let prod = &exp_complex(&z, prec).unwrap() * &exp_complex(&-&z, prec).unwrap();
                let defect = (&prod - &BigComplex::one(prec)).log2_abs();
                below("|exp(z)exp(-z) - 1|", defect, -(prec as f64) + 8.0)?;
            }
            Ok(())
        }),
    )?;
    report(
        "root of unity",
        runner(48).run(&(1u64..=1 << 16, precs.clone()), |(n, p)| {
            for prec in [p, 2 * p] {
                let w = root_of_unity(n, prec).powu(n as u32);
                let defect = (&w - &BigComplex::one(prec)).log2_abs();
                below("|ζ_n^n - 1|", defect, -(prec as f64) + 8.0 + (n as f64).log2())?;
            }
            Ok(())
        }),
    )?;
    report(
        "records",
        runner(128).run(&(any::<f64>(), -200i32..200, precs), |(x, e, prec)| {
            prop_assume!(x.is_finite());
            let v = BigReal::from_f64(x, prec).mul_pow2(e);
            let back = BigReal::from_record(&v.to_record()).unwrap();
            prop_assert_eq!(&back, &v);
            prop_assert_eq!(back.prec(), prec);
            Ok(())
        }),
    )
}

fn complex_poly(coeffs: &[(f64, f64)], prec: u32) -> FloatPoly<BigComplex> {
    FloatPoly::new(coeffs.iter().map(|&(a, b)| BigComplex::from_f64(a, b, prec)).collect(), prec)
}

/// FFT against schoolbook products around the crossover, interpolation
/// composed with evaluation, and products of linear factors vanishing at
/// their roots.
pub fn polyfloat_equivalence() -> Result<(), String> {
    let coeff = (-1.0f64..1.0, -1.0f64..1.0);
    let polys = (
        prop::collection::vec(coeff.clone(), 17..=64),
        prop::collection::vec(coeff.clone(), 17..=64),
        prop::sample::select(vec![128u32, 512]),
    );
    report(
        "fft vs schoolbook",
        runner(32).run(&polys, |(a, b, prec)| {
            let (pa, pb) = (complex_poly(&a, prec), complex_poly(&b, prec));
            let slow = schoolbook_multiply(&pa, &pb);
            let fast = fft_multiply(&pa, &pb, prec);
            prop_assert_eq!(slow.coeffs().len(), fast.coeffs().len());
            let n = (a.len() + b.len()) as f64;
            let bound = -(prec as f64) + 3.0 * n.log2() + 16.0;
            for (s, f) in slow.coeffs().iter().zip(fast.coeffs()) {
                below("fft coefficient error", (s - f).log2_abs(), bound)?;
            }
            Ok(())
        }),
    )?;
    let interp = (prop::collection::vec((0.0f64..0.5, -1.0f64..1.0), 1..=60), prop::sample::select(vec![1024u32, 2048]));
    report(
        "interpolate∘evaluate",
        runner(32).run(&interp, |(pts, prec)| {
            let d = pts.len() as f64;
            let nodes: Vec<BigReal> =
                pts.iter().enumerate().map(|(k, &(off, _))| BigReal::from_f64(k as f64 + off, prec)).collect();
            let values: Vec<BigReal> = pts.iter().map(|&(_, v)| BigReal::from_f64(v, prec)).collect();
            let p = interpolate_newton(&nodes, &values, prec).unwrap();
            let bound = -(prec as f64) + 2.0 * d * (d + 1.0).log2() + 16.0;
            for (x, v) in nodes.iter().zip(&values) {
                below("p(x_k) - v_k", (&p.evaluate(x) - v).log2_abs(), bound)?;
            }
            Ok(())
        }),
    )?;
    let roots = (prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..=80), prop::sample::select(vec![256u32, 1024]));
    report(
        "poly_from_roots",
        runner(24).run(&roots, |(rs, prec)| {
            let roots: Vec<BigComplex> = rs.iter().map(|&(a, b)| BigComplex::from_f64(a, b, prec)).collect();
            let p = poly_from_roots(&roots, prec);
            prop_assert_eq!(p.degree(), Some(roots.len()));
            let bound = -(prec as f64) + 2.0 * roots.len() as f64 + 16.0 + p.max_log2_coeff();
            for r in &roots {
                below("p(root)", p.evaluate(r).log2_abs(), bound)?;
            }
            Ok(())
        }),
    )?;
    // one full-size interpolation on j-style nodes 1729, 1730, …
    let prec = 4096;
    let d = 200;
    let nodes: Vec<BigReal> = (0..=d).map(|k| BigReal::from_i64(1729 + k, prec)).collect();
    let values: Vec<BigReal> = (0..=d).map(|k| BigReal::from_f64(((k * 37) % 101) as f64 - 50.0, prec)).collect();
    let p = interpolate_newton(&nodes, &values, prec).map_err(|e| e.to_string())?;
    let bound = -(prec as f64) + 2.0 * d as f64 * ((d + 1) as f64).log2() + 16.0;
    for (x, v) in nodes.iter().zip(&values) {
        let err = (&p.evaluate(x) - v).log2_abs();
        if err >= bound {
            return Err(format!("degree-200 interpolation error 2^{err:.1} at node {x:?}"));
        }
    }
    Ok(())
}

/// `|P¹(ℤ/N)|` by counting primitive pairs.
fn p1_count(n: u64) -> u64 {
    let primitive = (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).filter(|&(x, y)| gcd(gcd(x, y), n) == 1).count();
    let units = (1..=n).filter(|&u| gcd(u, n) == 1).count();
    (primitive / units) as u64
}

/// Top row of `m` as a point of `P¹(𝔽_ℓ)`: `(1 : b/a)` or `(0 : 1)`.
fn top_row_class(m: &CosetRep, ell: u64) -> u64 {
    let l = ell as i64;
    let a = m.a.rem_euclid(l) as u64;
    let b = m.b.rem_euclid(l) as u64;
    if a == 0 {
        ell
    } else {
        b * modpoly::arith::mod_inverse(a, ell).unwrap() % ell
    }
}

fn check_system(sys: &CosetSystem, expected: usize, pairwise: bool, what: &str) -> Result<(), String> {
    if sys.len() != expected {
        return Err(format!("{what}: {} representatives, expected {expected}", sys.len()));
    }
    if let Some(m) = sys.reps.iter().find(|m| m.det() != 1) {
        return Err(format!("{what}: {m} has determinant {}", m.det()));
    }
    if pairwise {
        if let Some((i, j)) = sys.find_equivalent_pair() {
            return Err(format!("{what}: representatives {i} and {j} are equivalent"));
        }
    }
    Ok(())
}

/// Coset counts against index formulas and brute-force `P¹` counts,
/// determinant one, and pairwise inequivalence.
///
/// The quadratic pairwise test runs wherever `ℓN ≤ 10^4` for the levels
/// `N ∈ {1, 35, 39, 48}` the families use (`ℓ ≤ 2000` for `N = 1`); for
/// every other `N ≤ 200` distinctness is checked through the top-row class
/// in `P¹(𝔽_ℓ)`, which determines the coset.
pub fn coset_exhaustive() -> Result<(), String> {
    for n in 2..=200u64 {
        let sys = reps_gamma0_composite(n).map_err(|e| e.to_string())?;
        let brute = p1_count(n);
        if gamma0_index(n) != brute {
            return Err(format!("index formula {} vs P¹ count {brute} at N = {n}", gamma0_index(n)));
        }
        check_system(&sys, brute as usize, true, &format!("Γ^0({n})"))?;
    }
    for ell in (2..=10_000u64).filter(|&l| is_prime(l)) {
        let sys = reps_gamma0_prime(ell).map_err(|e| e.to_string())?;
        check_system(&sys, ell as usize + 1, ell <= 2000, &format!("Γ^0({ell})"))?;
        let classes: HashSet<u64> = sys.reps.iter().map(|m| top_row_class(m, ell)).collect();
        if classes.len() != sys.len() {
            return Err(format!("Γ^0({ell}): top-row classes collide"));
        }
    }
    for ell in (5..=10_000 / 48u64).filter(|&l| is_prime(l) && gcd(l, 48) == 1) {
        let sys = reps_schlaefli(ell).map_err(|e| e.to_string())?;
        check_system(&sys, ell as usize + 1, true, &format!("Schläfli ℓ = {ell}"))?;
        let off = sys.reps.iter().find(|m| {
            let ok = |s: i64| (m.a - s) % 48 == 0 && m.b % 48 == 0 && m.c % 48 == 0 && (m.d - s) % 48 == 0;
            !(ok(1) || ok(-1))
        });
        if let Some(m) = off {
            return Err(format!("Schläfli ℓ = {ell}: {m} is not ±I mod 48"));
        }
    }
    for n in 2..=200u64 {
        for ell in (2..=10_000 / n).filter(|&l| is_prime(l) && gcd(l, n) == 1) {
            let sys = reps_generalized_schlaefli(ell, n).map_err(|e| e.to_string())?;
            let pairwise = n == 35 || n == 39;
            check_system(&sys, ell as usize + 1, pairwise, &format!("Γ^0({ell}·{n}) in Γ^0({n})"))?;
            if let Some(m) = sys.reps.iter().find(|m| m.b.rem_euclid(n as i64) != 0) {
                return Err(format!("{m} is not in Γ^0({n})"));
            }
            let classes: HashSet<u64> = sys.reps.iter().map(|m| top_row_class(m, ell)).collect();
            if classes.len() != sys.len() {
                return Err(format!("Γ^0({ell}·{n}): top-row classes collide"));
            }
        }
    }
    Ok(())
}

/// Oracle residues over several primes lift to the same integers whichever
/// four of them are used.
pub fn oracle_crt_consistency() -> Result<(), String> {
    let families =
        prop::sample::select(vec![(false, 2u64), (false, 3), (false, 5), (true, 5), (true, 7)]);
    report(
        "crt",
        runner(6).run(&(families, any::<u64>()), |((canonical, ell), seed)| {
            let fam = if canonical {
                FunctionFamily::canonical(ell).unwrap()
            } else {
                FunctionFamily::classical(ell).unwrap()
            };
            let primes = random_primes(6, seed);
            let results: Vec<_> = primes.iter().map(|&p| oracle_modular_polynomial(&fam, p).unwrap()).collect();
            let keys: HashSet<(usize, usize)> = results.iter().flat_map(|r| r.coeffs.keys().copied()).collect();
            for key in keys {
                let residues: Vec<(u64, u64)> =
                    results.iter().map(|r| (r.p, r.coeffs.get(&key).copied().unwrap_or(0))).collect();
                let full = crt_lift(&residues);
                let modulus: Integer = primes.iter().map(|&p| Integer::from(p)).product();
                prop_assert!(Integer::from(&full * 2).abs() < modulus);
                for skip in 0..6 {
                    for skip2 in skip + 1..6 {
                        let subset: Vec<(u64, u64)> = residues
                            .iter()
                            .enumerate()
                            .filter(|&(i, _)| i != skip && i != skip2)
                            .map(|(_, r)| *r)
                            .collect();
                        prop_assert_eq!(&crt_lift(&subset), &full, "{} coefficient {:?}", fam, key);
                    }
                }
            }
            Ok(())
        }),
    )
}

fn perturbed(poly: &BivariatePolynomial, key: (usize, usize), delta: i64) -> BivariatePolynomial {
    let mut coeffs = poly.coeffs.clone();
    *coeffs.entry(key).or_default() += delta;
    BivariatePolynomial::new(poly.family, poly.deg_x, coeffs)
}

/// The exact polynomial passes the holdout check; changing any single
/// coefficient inside the degree box by ±1 makes it fail.
pub fn holdout_perturbation() -> Result<(), String> {
    let prec = 1024;
    let threshold = holdout_threshold_log2(prec);
    for fam in [
        FunctionFamily::classical(2).unwrap(),
        FunctionFamily::classical(3).unwrap(),
        FunctionFamily::canonical(5).unwrap(),
        FunctionFamily::schlaefli(5).unwrap(),
    ] {
        let (poly, _) = compute_modular_polynomial(&fam, &EngineOptions::default()).map_err(|e| e.to_string())?;
        let base = holdout_residual(&fam, &poly, prec).map_err(|e| e.to_string())?.log2_abs();
        if base > threshold {
            return Err(format!("{fam}: exact polynomial has residual 2^{base:.1}"));
        }
        for i in 0..=poly.deg_x {
            for k in 0..=poly.deg_j {
                if (i, k) == (poly.deg_x, 0) {
                    continue;
                }
                for delta in [1, -1] {
                    let bad = perturbed(&poly, (i, k), delta);
                    let r = holdout_residual(&fam, &bad, prec).map_err(|e| e.to_string())?.log2_abs();
                    if r <= threshold {
                        return Err(format!(
                            "{fam}: coefficient ({i}, {k}) changed by {delta} still passes (2^{r:.1})"
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// All `SL₂(ℤ)` matrices with entries in `[-10, 10]`.
fn small_matrices() -> Vec<CosetRep> {
    let r = -10i64..=10;
    let mut out = Vec::new();
    for a in r.clone() {
        for b in r.clone() {
            for c in r.clone() {
                for d in r.clone() {
                    if a * d - b * c == 1 {
                        out.push(CosetRep::new(a, b, c, d).unwrap());
                    }
                }
            }
        }
    }
    out
}

fn point(x: f64, y: f64, prec: u32) -> HalfPlanePoint {
    HalfPlanePoint::new(BigComplex::from_f64(x, y, prec)).unwrap()
}

/// `η` transformation laws, `Γ`-invariance of `j`, and the Weber–`j`
/// identity.
pub fn modfunc_identities() -> Result<(), String> {
    let precs = prop::sample::select(vec![64u32, 256]);
    let reduced = (-0.5f64..0.5, 0.0f64..3.0, precs.clone());
    report(
        "eta",
        runner(100).run(&reduced, |(x, extra, prec)| {
            let y = (1.0 - x * x).sqrt() + extra;
            let z = point(x, y, prec);
            let e = eta(&z, prec).unwrap();
            let scale = e.log2_abs();
            let shifted = eta(&HalfPlanePoint::new(z.z() + &BigComplex::one(prec)).unwrap(), prec).unwrap();
            let twist = &root_of_unity_pow(1, 24, prec) * &e;
            below("η(z+1) - e^{iπ/12}η(z)", (&shifted - &twist).log2_abs() - scale, -(prec as f64) + 16.0)?;
            let inv = eta(&HalfPlanePoint::new(-&z.z().recip()).unwrap(), prec).unwrap();
            let root = complex_sqrt_principal(&-&z.z().mul_i(), prec);
            below("η(-1/z) - √(-iz)η(z)", (&inv - &(&root * &e)).log2_abs() - scale, -(prec as f64) + 16.0)?;
            Ok(())
        }),
    )?;
    let mats = small_matrices();
    report(
        "j invariance",
        runner(100).run(&(0..mats.len(), -1.0f64..1.0, 0.5f64..2.0, precs.clone()), |(idx, x, y, prec)| {
            let z = point(x, y, prec);
            let j = j_invariant(&z, prec).unwrap();
            let mz = HalfPlanePoint::new(mats[idx].act(z.z())).unwrap();
            let jm = j_invariant(&mz, prec).unwrap();
            below("|j(Mz) - j(z)|/|j(z)|", (&jm - &j).log2_abs() - j.log2_abs(), -(prec as f64) + 24.0)?;
            Ok(())
        }),
    )?;
    report(
        "weber",
        runner(100).run(&(-1.0f64..1.0, 0.5f64..2.0, precs), |(x, y, prec)| {
            let z = point(x, y, prec);
            let f24 = weber_f(&z, prec).unwrap().powu(24);
            let lhs = &(&f24 - &BigComplex::from_i64(16, prec)).powu(3) * &f24.recip();
            let j = j_invariant(&z, prec).unwrap();
            below("(𝔣^24 - 16)^3/𝔣^24 - j", (&lhs - &j).log2_abs() - j.log2_abs(), -(prec as f64) + 24.0)?;
            Ok(())
        }),
    )
}
