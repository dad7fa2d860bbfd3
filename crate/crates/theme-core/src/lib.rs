//! Exact calculus of (a,b)-modules and themes.
//!
//! Everything is computed over arbitrary-precision rationals with tracked
//! b-adic precision: truncated power series in `b` form the coefficient
//! ring, the operator algebra satisfies `a*b - b*a = b^2`, and themes are
//! monogenic modules presented by factored chains
//! `(a - l1 b) S1^{-1} (a - l2 b) ... S_{k-1}^{-1} (a - lk b)`.
//!
//! Module map:
//! - [`series`]: rationals and truncated series in `b`
//! - [`opalg`]: the operator algebra, parsing and normal forms
//! - [`xi`]: the log-expansion model, affine solver, exact elimination
//! - [`theme`]: theme modules, realization, filtration, invariants, duality
//! - [`homs`]: Hom/End/Ext spaces, stability, injections
//! - [`normalform`]: supplementary spaces, canonical presentations,
//!   isomorphism testing
//! - [`families`]: standard parameter families, grid scans, stratification
//! - [`json`]: the JSON forms used by the command-line tool

pub mod families;
pub mod homs;
pub mod json;
pub mod normalform;
pub mod opalg;
pub mod series;
pub mod theme;
pub mod xi;

/// Fallback working precision when nothing better is known.
pub const DEFAULT_PRECISION: usize = 16;
