//! Published double-η-quotient polynomials for `𝔴_{3,13}`.
//!
//! Terms are `(coefficient, power of g, power of f)` with `g = 𝔴(z/ℓ)` the
//! X variable and `f = 𝔴` the base. All terms are listed, the leading
//! `g^{ℓ+1}` included.

use std::collections::BTreeMap;

use rug::Integer;

fn expand(groups: &[(i64, &[(i64, usize, usize)])]) -> BTreeMap<(usize, usize), Integer> {
    let mut out: BTreeMap<(usize, usize), Integer> = BTreeMap::new();
    for &(factor, terms) in groups {
        for &(c, g, f) in terms {
            *out.entry((g, f)).or_default() += factor * c;
        }
    }
    out.retain(|_, v| *v != 0);
    out
}

/// The listing for `ℓ ∈ {2, 5, 7}`.
pub fn expected(ell: u64) -> BTreeMap<(usize, usize), Integer> {
    match ell {
        2 => phi2(),
        5 => phi5(),
        7 => phi7(),
        _ => panic!("no published polynomial for ℓ = {ell}"),
    }
}

fn phi2() -> BTreeMap<(usize, usize), Integer> {
    // printed as "2(g²f + fg²)"; the symmetric reading 2(g²f + gf²) is what
    // the computation gives
    expand(&[(1, &[(1, 3, 0), (1, 0, 3), (-1, 2, 2), (-1, 1, 1), (2, 2, 1), (2, 1, 2)])])
}

fn phi5() -> BTreeMap<(usize, usize), Integer> {
    // the printed "- g³f² g²f³" is read as "- g³f² - g²f³"
    expand(&[
        (1, &[(1, 6, 0), (1, 0, 6), (-1, 5, 5), (-1, 1, 1), (35, 3, 3)]),
        (
            5,
            &[(1, 5, 4), (1, 4, 5), (1, 5, 1), (1, 1, 5), (-1, 4, 3), (-1, 3, 4), (-1, 3, 2), (-1, 2, 3), (1, 2, 1), (1, 1, 2)],
        ),
        (10, &[(-1, 5, 2), (-1, 2, 5), (1, 4, 4), (1, 4, 2), (1, 2, 4), (-1, 4, 1), (-1, 1, 4), (1, 2, 2)]),
    ])
}

fn phi7() -> BTreeMap<(usize, usize), Integer> {
    expand(&[
        (1, &[(1, 8, 0), (1, 0, 8), (-1, 7, 7), (-1, 1, 1), (-182, 4, 4)]),
        (7, &[(1, 7, 6), (1, 6, 7), (-1, 7, 5), (-1, 5, 7), (1, 6, 4), (1, 4, 6), (1, 6, 2), (1, 2, 6)]),
        (7, &[(1, 4, 2), (1, 2, 4), (-1, 3, 1), (-1, 1, 3), (1, 2, 1), (1, 1, 2)]),
        (14, &[(-1, 7, 1), (-1, 1, 7), (1, 5, 4), (1, 4, 5), (1, 5, 3), (1, 3, 5), (1, 4, 3), (1, 3, 4)]),
        (21, &[(-1, 7, 4), (-1, 4, 7), (1, 7, 3), (1, 3, 7), (-1, 6, 5), (-1, 5, 6), (1, 6, 3), (1, 3, 6)]),
        (21, &[(1, 5, 2), (1, 2, 5), (1, 5, 1), (1, 1, 5), (-1, 4, 1), (-1, 1, 4), (-1, 3, 2), (-1, 2, 3)]),
        (42, &[(1, 6, 6), (1, 2, 2)]),
    ])
}
