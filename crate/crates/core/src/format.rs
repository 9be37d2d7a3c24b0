//! The `MODPOLY v1` text format.
//!
//! ```text
//! MODPOLY v1
//! family classical
//! level 2
//! degX 3
//! degJ 3
//! height 53
//! coeff 3 0 1
//! coeff 2 2 -1
//! ...
//! END
//! ```
//!
//! Terms are sorted by X-power then base power, both descending. Parameters
//! (`param r=5`, `param p1=3`, ...) follow `level` when the family has any.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rug::Integer;
use thiserror::Error;

use crate::engine::BivariatePolynomial;
use crate::modfunc::{FunctionFamily, ModFuncError};

pub const MAGIC: &str = "MODPOLY v1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("inconsistent file: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Family(#[from] ModFuncError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn write_modpoly<W: Write>(poly: &BivariatePolynomial, mut out: W) -> io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "family {}", poly.family.name())?;
    writeln!(out, "level {}", poly.family.ell())?;
    for (k, v) in poly.family.params() {
        writeln!(out, "param {k}={v}")?;
    }
    writeln!(out, "degX {}", poly.deg_x)?;
    writeln!(out, "degJ {}", poly.deg_j)?;
    writeln!(out, "height {}", poly.height)?;
    let mut terms: Vec<_> = poly.terms().collect();
    terms.sort_by(|a, b| b.0.cmp(&a.0));
    for ((i, k), c) in terms {
        writeln!(out, "coeff {i} {k} {c}")?;
    }
    writeln!(out, "END")?;
    out.flush()
}

pub fn to_modpoly_string(poly: &BivariatePolynomial) -> String {
    let mut buf = Vec::new();
    write_modpoly(poly, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ASCII output")
}

struct Lines<R> {
    inner: io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<Option<String>, FormatError> {
        loop {
            match self.inner.next() {
                None => return Ok(None),
                Some(l) => {
                    self.line += 1;
                    let l = l?;
                    let t = l.trim();
                    if !t.is_empty() {
                        return Ok(Some(t.to_string()));
                    }
                }
            }
        }
    }

    fn err(&self, msg: impl Into<String>) -> FormatError {
        FormatError::Parse { line: self.line, msg: msg.into() }
    }

    fn expect_field(&mut self, key: &str) -> Result<u64, FormatError> {
        let l = self.next()?.ok_or_else(|| self.err(format!("missing `{key}`")))?;
        self.field_value(&l, key)
    }

    fn field_value(&self, l: &str, key: &str) -> Result<u64, FormatError> {
        let rest = l
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected `{key} <n>`, got `{l}`")))?;
        rest.trim().parse().map_err(|_| self.err(format!("bad number in `{l}`")))
    }
}

fn family_from_header(name: &str, ell: u64, params: &BTreeMap<String, u64>) -> Result<FunctionFamily, FormatError> {
    let get = |k: &str| {
        params
            .get(k)
            .copied()
            .ok_or_else(|| FormatError::Inconsistent(format!("family {name} needs param {k}")))
    };
    let family = match name {
        "classical" => FunctionFamily::classical(ell)?,
        "canonical" => FunctionFamily::canonical(ell)?,
        "atkin" => FunctionFamily::atkin(ell, Some(get("r")?))?,
        "schlaefli" => FunctionFamily::schlaefli(ell)?,
        "eta2quotient" => FunctionFamily::eta_quotient(ell, get("p1")?, get("p2")?)?,
        other => return Err(FormatError::Inconsistent(format!("unknown family `{other}`"))),
    };
    let expected: BTreeMap<String, u64> = family.params().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    if &expected != params {
        return Err(FormatError::Inconsistent(format!(
            "parameters {params:?} do not match {family} ({expected:?})"
        )));
    }
    Ok(family)
}

/// Parses a file and checks the header against the body.
pub fn read_modpoly<R: BufRead>(input: R) -> Result<BivariatePolynomial, FormatError> {
    let mut lines = Lines { inner: input.lines(), line: 0 };
    match lines.next()? {
        Some(l) if l == MAGIC => {}
        other => return Err(lines.err(format!("expected `{MAGIC}`, got {other:?}"))),
    }
    let l = lines.next()?.ok_or_else(|| lines.err("missing `family`"))?;
    let name = l
        .strip_prefix("family ")
        .ok_or_else(|| lines.err(format!("expected `family <name>`, got `{l}`")))?
        .trim()
        .to_string();
    let ell = lines.expect_field("level")?;
    let mut params = BTreeMap::new();
    let mut l = lines.next()?.ok_or_else(|| lines.err("missing `degX`"))?;
    while let Some(kv) = l.strip_prefix("param ") {
        let (k, v) = kv.split_once('=').ok_or_else(|| lines.err(format!("bad param `{kv}`")))?;
        let v: u64 = v.trim().parse().map_err(|_| lines.err(format!("bad param value `{kv}`")))?;
        if params.insert(k.trim().to_string(), v).is_some() {
            return Err(lines.err(format!("duplicate param `{k}`")));
        }
        l = lines.next()?.ok_or_else(|| lines.err("missing `degX`"))?;
    }
    let deg_x = lines.field_value(&l, "degX")? as usize;
    let deg_j = lines.expect_field("degJ")? as usize;
    let height = lines.expect_field("height")? as u32;
    let family = family_from_header(&name, ell, &params)?;

    let mut coeffs = BTreeMap::new();
    let mut prev: Option<(usize, usize)> = None;
    loop {
        let l = lines.next()?.ok_or_else(|| lines.err("missing `END`"))?;
        if l == "END" {
            break;
        }
        let mut it = l.split_ascii_whitespace();
        let (tag, i, k, c) = (it.next(), it.next(), it.next(), it.next());
        if tag != Some("coeff") || c.is_none() || it.next().is_some() {
            return Err(lines.err(format!("expected `coeff <i> <k> <c>`, got `{l}`")));
        }
        let i: usize = i.unwrap().parse().map_err(|_| lines.err("bad X-power"))?;
        let k: usize = k.unwrap().parse().map_err(|_| lines.err("bad base power"))?;
        let c: Integer = c.unwrap().parse().map_err(|_| lines.err("bad coefficient"))?;
        if c == 0 {
            return Err(lines.err("zero coefficient listed"));
        }
        if prev.is_some_and(|p| p <= (i, k)) {
            return Err(lines.err(format!("term ({i}, {k}) out of order")));
        }
        prev = Some((i, k));
        coeffs.insert((i, k), c);
    }
    if let Some(extra) = lines.next()? {
        return Err(lines.err(format!("trailing content after END: `{extra}`")));
    }

    if deg_x != family.ell() as usize + 1 {
        return Err(FormatError::Inconsistent(format!("degX {deg_x} but level {ell}")));
    }
    match coeffs.get(&(deg_x, 0)) {
        Some(c) if *c == 1 => {}
        _ => return Err(FormatError::Inconsistent("leading term X^degX is not 1".into())),
    }
    if let Some(&(i, k)) = coeffs.keys().find(|&&(i, k)| i > deg_x || (i == deg_x && k > 0)) {
        return Err(FormatError::Inconsistent(format!("term ({i}, {k}) breaks monicity in X")));
    }
    let poly = BivariatePolynomial::new(family, deg_x, coeffs);
    if poly.deg_j != deg_j {
        return Err(FormatError::Inconsistent(format!("header degJ {deg_j}, body {}", poly.deg_j)));
    }
    if poly.height != height {
        return Err(FormatError::Inconsistent(format!("header height {height}, body {}", poly.height)));
    }
    Ok(poly)
}

pub fn parse_modpoly(text: &str) -> Result<BivariatePolynomial, FormatError> {
    read_modpoly(text.as_bytes())
}
