//! Exact rationals and truncated power series in `b`.
//!
//! `BSeries` is the coefficient ring used everywhere else: a vector of
//! exact rational coefficients of `b^0 .. b^(M-1)` together with the
//! tracked precision `M`.
//!
//! Invariants:
//! - `coeffs.len() == precision`, and `precision >= 1`
//! - binary operations truncate to the minimum operand precision
//! - `derive_b` loses one order of precision
//! - zero tails beyond `precision` are unknown, never assumed

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

/// Exact rational scalar. Always stored reduced with positive denominator.
pub type Rational = num_rational::BigRational;

/// Shorthand for a small rational `n/d`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Shorthand for an integer rational.
pub fn rat_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parse a rational written as `p` or `p/q` (optional leading `-`).
pub fn parse_rational(s: &str) -> Result<Rational, SeriesError> {
    let t = s.trim();
    let mk_err = || SeriesError::BadRational(s.to_string());
    match t.split_once('/') {
        Some((num, den)) => {
            let n = BigInt::from_str(num.trim()).map_err(|_| mk_err())?;
            let d = BigInt::from_str(den.trim()).map_err(|_| mk_err())?;
            if d.is_zero() {
                return Err(mk_err());
            }
            Ok(Rational::new(n, d))
        }
        None => {
            let n = BigInt::from_str(t).map_err(|_| mk_err())?;
            Ok(Rational::from_integer(n))
        }
    }
}

/// Render a rational as `p` or `p/q`.
pub fn rational_to_string(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// True when `r` is an integer `>= 0`.
pub fn is_nonneg_integer(r: &Rational) -> bool {
    r.denom().is_one() && !r.numer().is_negative()
}

/// Errors from the series layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeriesError {
    /// `invert_unit` was called on a series with zero constant term.
    NonUnit,
    /// The operation needs more tracked precision than available.
    InsufficientPrecision,
    /// Division by `b^n` hit a nonzero low-order coefficient.
    NotDivisible,
    /// A rational literal failed to parse.
    BadRational(String),
}

impl fmt::Display for SeriesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesError::NonUnit => write!(f, "series has zero constant term, not a unit"),
            SeriesError::InsufficientPrecision => write!(f, "insufficient tracked precision"),
            SeriesError::NotDivisible => write!(f, "series is not divisible by the given power of b"),
            SeriesError::BadRational(s) => write!(f, "invalid rational literal: {s:?}"),
        }
    }
}

impl std::error::Error for SeriesError {}

/// b-adic valuation of a series, or the marker that every stored
/// coefficient vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Valuation {
    Finite(usize),
    AtLeastPrecision(usize),
}

impl Valuation {
    pub fn finite(self) -> Option<usize> {
        match self {
            Valuation::Finite(v) => Some(v),
            Valuation::AtLeastPrecision(_) => None,
        }
    }
}

/// Truncated power series in `b` with exact rational coefficients.
///
/// `coeffs[i]` is the coefficient of `b^i`; the length is the precision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BSeries {
    coeffs: Vec<Rational>,
}

impl BSeries {
    /// Build a series from coefficients; the precision is `coeffs.len()`.
    pub fn from_coeffs(coeffs: Vec<Rational>) -> Self {
        assert!(!coeffs.is_empty(), "precision must be >= 1");
        BSeries { coeffs }
    }

    /// Build from coefficients, padding with zeros or truncating to `precision`.
    pub fn from_coeffs_at(mut coeffs: Vec<Rational>, precision: usize) -> Self {
        assert!(precision >= 1, "precision must be >= 1");
        coeffs.resize(precision, Rational::zero());
        BSeries { coeffs }
    }

    pub fn zero(precision: usize) -> Self {
        Self::from_coeffs_at(Vec::new(), precision)
    }

    pub fn one(precision: usize) -> Self {
        Self::from_coeffs_at(vec![Rational::one()], precision)
    }

    /// `c * b^k` at the given precision.
    pub fn monomial(c: Rational, k: usize, precision: usize) -> Self {
        let mut s = Self::zero(precision);
        if k < precision {
            s.coeffs[k] = c;
        }
        s
    }

    pub fn precision(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficient of `b^i`, zero when `i` is at or beyond the precision.
    pub fn coeff(&self, i: usize) -> Rational {
        self.coeffs.get(i).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn set_coeff(&mut self, i: usize, c: Rational) {
        assert!(i < self.coeffs.len(), "coefficient index beyond precision");
        self.coeffs[i] = c;
    }

    /// Constant term.
    pub fn constant(&self) -> Rational {
        self.coeffs[0].clone()
    }

    /// All stored coefficients vanish.
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// Index of the first nonzero coefficient, or `AtLeastPrecision(M)`.
    pub fn valuation(&self) -> Valuation {
        for (i, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero() {
                return Valuation::Finite(i);
            }
        }
        Valuation::AtLeastPrecision(self.coeffs.len())
    }

    /// Truncate (or zero-pad) to exactly `precision` coefficients.
    ///
    /// Padding does not create information: callers only extend series
    /// that are exact polynomials.
    pub fn with_precision(&self, precision: usize) -> Self {
        Self::from_coeffs_at(self.coeffs.clone(), precision)
    }

    /// Truncate to `min(self.precision, precision)`.
    pub fn truncated(&self, precision: usize) -> Self {
        let p = self.precision().min(precision.max(1));
        Self::from_coeffs_at(self.coeffs[..p].to_vec(), p)
    }

    pub fn neg(&self) -> Self {
        BSeries {
            coeffs: self.coeffs.iter().map(|c| -c.clone()).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let p = self.precision().min(other.precision());
        let coeffs = (0..p).map(|i| self.coeff(i) + other.coeff(i)).collect();
        BSeries { coeffs }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Rational) -> Self {
        BSeries {
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
    }

    /// Cauchy product. The result is exact for every degree below
    /// `min(prec(x) + val(y), prec(y) + val(x))`: unknown tail terms of one
    /// factor only reach a degree through the valuation of the other. The
    /// stored length is capped at the larger operand length.
    pub fn mul(&self, other: &Self) -> Self {
        let (px, py) = (self.precision(), other.precision());
        let vx = match self.valuation() {
            Valuation::Finite(v) => v,
            Valuation::AtLeastPrecision(v) => v,
        };
        let vy = match other.valuation() {
            Valuation::Finite(v) => v,
            Valuation::AtLeastPrecision(v) => v,
        };
        let p = (px + vy).min(py + vx).min(px.max(py)).max(1);
        let mut coeffs = vec![Rational::zero(); p];
        for i in vx..px.min(p) {
            if self.coeffs[i].is_zero() {
                continue;
            }
            for j in vy..py.min(p.saturating_sub(i)) {
                if other.coeffs[j].is_zero() {
                    continue;
                }
                coeffs[i + j] += &self.coeffs[i] * &other.coeffs[j];
            }
        }
        BSeries { coeffs }
    }

    /// Inverse of a unit series: `self * invert_unit(self) = 1` up to precision.
    pub fn invert_unit(&self) -> Result<Self, SeriesError> {
        let c0 = &self.coeffs[0];
        if c0.is_zero() {
            return Err(SeriesError::NonUnit);
        }
        let p = self.precision();
        let inv0 = c0.recip();
        let mut out = vec![Rational::zero(); p];
        out[0] = inv0.clone();
        for n in 1..p {
            // c[n] = -1/a0 * sum_{k=1}^{n} a[k] * c[n-k]
            let mut acc = Rational::zero();
            for k in 1..=n {
                if !self.coeffs[k].is_zero() && !out[n - k].is_zero() {
                    acc += &self.coeffs[k] * &out[n - k];
                }
            }
            out[n] = -acc * &inv0;
        }
        Ok(BSeries { coeffs: out })
    }

    /// Formal derivative in `b`; precision drops by one.
    pub fn derive_b(&self) -> Result<Self, SeriesError> {
        let p = self.precision();
        if p < 2 {
            return Err(SeriesError::InsufficientPrecision);
        }
        let coeffs = (0..p - 1)
            .map(|i| &self.coeffs[i + 1] * rat_int((i + 1) as i64))
            .collect();
        Ok(BSeries { coeffs })
    }

    /// Multiply by `b^n`; the result keeps the same stored length, so the
    /// top `n` coefficients fall off the end.
    pub fn shift_up(&self, n: usize) -> Self {
        let p = self.precision();
        let mut coeffs = vec![Rational::zero(); p];
        for i in 0..p.saturating_sub(n) {
            coeffs[i + n] = self.coeffs[i].clone();
        }
        BSeries { coeffs }
    }

    /// Exact division by `b^n`. Fails when a stored coefficient below `b^n`
    /// is nonzero. Precision drops by `n`.
    pub fn div_bpow(&self, n: usize) -> Result<Self, SeriesError> {
        let p = self.precision();
        if n >= p {
            return Err(SeriesError::InsufficientPrecision);
        }
        if self.coeffs[..n].iter().any(|c| !c.is_zero()) {
            return Err(SeriesError::NotDivisible);
        }
        Ok(BSeries {
            coeffs: self.coeffs[n..].to_vec(),
        })
    }

    /// Equality of all coefficients up to the minimum of the two precisions.
    pub fn eq_to_min_prec(&self, other: &Self) -> bool {
        let p = self.precision().min(other.precision());
        (0..p).all(|i| self.coeffs[i] == other.coeffs[i])
    }

    /// Parse an exact coefficient list of rational strings.
    pub fn from_strings(strs: &[String], precision: usize) -> Result<Self, SeriesError> {
        let mut coeffs = Vec::with_capacity(strs.len());
        for s in strs {
            coeffs.push(parse_rational(s)?);
        }
        Ok(Self::from_coeffs_at(coeffs, precision))
    }
}

impl fmt::Display for BSeries {
    /// Ascending powers with exact rationals, e.g. `1 + 3/2*b - b^3`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mag = c.abs();
            let sign = c.is_negative();
            if first {
                if sign {
                    write!(f, "-")?;
                }
                first = false;
            } else if sign {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mag_is_one = mag.is_one();
            match (i, mag_is_one) {
                (0, _) => write!(f, "{}", rational_to_string(&mag))?,
                (1, true) => write!(f, "b")?,
                (1, false) => write!(f, "{}*b", rational_to_string(&mag))?,
                (_, true) => write!(f, "b^{i}")?,
                (_, false) => write!(f, "{}*b^{i}", rational_to_string(&mag))?,
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}
