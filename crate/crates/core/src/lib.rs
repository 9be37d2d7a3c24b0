//! Exact bivariate modular polynomials from floating-point evaluation.

pub mod arith;
pub mod cosets;
pub mod engine;
pub mod format;
pub mod jobs;
pub mod modfunc;
pub mod numerics;
pub mod oracle;
pub mod polyfloat;

pub use cosets::{CosetRep, CosetSystem, GroupTag};
pub use modfunc::{FunctionFamily, HalfPlanePoint};
pub use numerics::{BigComplex, BigReal};
