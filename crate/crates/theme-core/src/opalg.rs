//! The noncommutative operator algebra generated by `a` and `b` with the
//! relation `a*b - b*a = b^2`.
//!
//! Normal forms collect every word as a finite sum `sum_nu b^nu * P_nu(a)`
//! (all `b`s moved left of all `a`s via `a*b -> b*a + b^2`), truncated at
//! `b_truncation` when inverses of series are involved.
//!
//! Presentation operators are kept factored as [`FactorChain`]s
//! `(a - l1*b) * S1^{-1} * (a - l2*b) * ... * S_{k-1}^{-1} * (a - lk*b)`
//! and act on module elements factor by factor; they are never expanded.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::series::{is_nonneg_integer, rat_int, rational_to_string, BSeries, Rational};

/// Errors from parsing and normalizing operator expressions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpError {
    /// Lex/parse failure, with the byte offset of the offending token.
    SyntaxError { pos: usize, msg: String },
    /// An `inv(...)` argument whose constant term is not exactly 1.
    NonUnitInverse { pos: usize },
    /// An `inv(...)` argument involving `a`; only series in `b` are invertible.
    NonSeriesInverse { pos: usize },
    /// Normalization of an expression with `inv` needs an explicit truncation.
    TruncationRequired,
}

impl fmt::Display for OpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpError::SyntaxError { pos, msg } => write!(f, "syntax error at offset {pos}: {msg}"),
            OpError::NonUnitInverse { pos } => {
                write!(f, "inv(...) at offset {pos}: constant term must be exactly 1")
            }
            OpError::NonSeriesInverse { pos } => {
                write!(f, "inv(...) at offset {pos}: only series in b can be inverted")
            }
            OpError::TruncationRequired => {
                write!(f, "normalizing an expression with inv(...) requires a truncation order")
            }
        }
    }
}

impl std::error::Error for OpError {}

/// Abstract left module over the operator algebra.
///
/// Implementors provide the `a` and `b` actions and the scalar-series
/// module structure; chains and normal forms act through this interface.
pub trait AbModule {
    type Elem: Clone;
    fn act_a(&self, x: &Self::Elem) -> Self::Elem;
    fn act_b(&self, x: &Self::Elem) -> Self::Elem;
    fn mul_series(&self, x: &Self::Elem, s: &BSeries) -> Self::Elem;
    fn add(&self, x: &Self::Elem, y: &Self::Elem) -> Self::Elem;
    fn scale(&self, x: &Self::Elem, c: &Rational) -> Self::Elem;
    fn zero_elem(&self) -> Self::Elem;
}

/// Polynomial in `a` with rational coefficients, ascending, no zero padding.
pub type APoly = Vec<Rational>;

fn trim_poly(p: &mut APoly) {
    while p.last().map(|c| c.is_zero()).unwrap_or(false) {
        p.pop();
    }
}

/// Normal form `sum_{nu < b_truncation} b^nu * P_nu(a)`, sparse over `nu`.
///
/// Stored polynomials are nonzero. Exact for polynomial words; truncated
/// when series inverses enter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpNormal {
    terms: BTreeMap<usize, APoly>,
    b_truncation: usize,
}

impl OpNormal {
    pub fn zero(b_truncation: usize) -> Self {
        OpNormal {
            terms: BTreeMap::new(),
            b_truncation,
        }
    }

    pub fn constant(c: Rational, b_truncation: usize) -> Self {
        let mut op = Self::zero(b_truncation);
        op.add_monomial(0, 0, c);
        op
    }

    pub fn atom_a(b_truncation: usize) -> Self {
        let mut op = Self::zero(b_truncation);
        op.add_monomial(0, 1, Rational::one());
        op
    }

    pub fn atom_b(b_truncation: usize) -> Self {
        let mut op = Self::zero(b_truncation);
        op.add_monomial(1, 0, Rational::one());
        op
    }

    /// The linear factor `a - lambda*b`.
    pub fn linear_factor(lambda: &Rational, b_truncation: usize) -> Self {
        let mut op = Self::atom_a(b_truncation);
        op.add_monomial(1, 0, -lambda.clone());
        op
    }

    pub fn from_series(s: &BSeries, b_truncation: usize) -> Self {
        let mut op = Self::zero(b_truncation);
        for (nu, c) in s.coeffs().iter().enumerate() {
            op.add_monomial(nu, 0, c.clone());
        }
        op
    }

    pub fn b_truncation(&self) -> usize {
        self.b_truncation
    }

    pub fn terms(&self) -> &BTreeMap<usize, APoly> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of `b^nu * a^i`.
    pub fn coeff(&self, nu: usize, i: usize) -> Rational {
        self.terms
            .get(&nu)
            .and_then(|p| p.get(i))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    fn add_monomial(&mut self, nu: usize, i: usize, c: Rational) {
        if c.is_zero() || nu >= self.b_truncation {
            return;
        }
        let poly = self.terms.entry(nu).or_default();
        if poly.len() <= i {
            poly.resize(i + 1, Rational::zero());
        }
        poly[i] += c;
        trim_poly(poly);
        if poly.is_empty() {
            self.terms.remove(&nu);
        }
    }

    pub fn neg(&self) -> Self {
        let mut out = Self::zero(self.b_truncation);
        for (&nu, poly) in &self.terms {
            for (i, c) in poly.iter().enumerate() {
                out.add_monomial(nu, i, -c.clone());
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let trunc = self.b_truncation.min(other.b_truncation);
        let mut out = Self::zero(trunc);
        for src in [self, other] {
            for (&nu, poly) in &src.terms {
                for (i, c) in poly.iter().enumerate() {
                    out.add_monomial(nu, i, c.clone());
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Right-multiply by `b`, using `a^i * b = sum_t i!/(i-t)! * b^(t+1) * a^(i-t)`.
    fn mul_b(&self) -> Self {
        let mut out = Self::zero(self.b_truncation);
        for (&nu, poly) in &self.terms {
            for (i, c) in poly.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                // falling factorial i!/(i-t)!
                let mut fall = Rational::one();
                for t in 0..=i {
                    out.add_monomial(nu + t + 1, i - t, c * &fall);
                    fall *= rat_int((i - t) as i64);
                }
            }
        }
        out
    }

    /// Right-multiply by `a`.
    fn mul_a(&self) -> Self {
        let mut out = Self::zero(self.b_truncation);
        for (&nu, poly) in &self.terms {
            for (i, c) in poly.iter().enumerate() {
                out.add_monomial(nu, i + 1, c.clone());
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let trunc = self.b_truncation.min(other.b_truncation);
        let mut out = Self::zero(trunc);
        // self * (b^n a^j) accumulated with cached prefixes self*b^n
        let mut by_b = self.clone();
        let mut last_n = 0usize;
        for (&nu, poly) in &other.terms {
            while last_n < nu {
                by_b = by_b.mul_b();
                last_n += 1;
            }
            let mut by_a = by_b.clone();
            for (i, c) in poly.iter().enumerate() {
                if i > 0 {
                    by_a = by_a.mul_a();
                }
                if c.is_zero() {
                    continue;
                }
                for (&m, q) in &by_a.terms {
                    for (t, d) in q.iter().enumerate() {
                        out.add_monomial(m, t, c * d);
                    }
                }
            }
        }
        out
    }

    /// Apply `sum b^nu P_nu(a)` to a module element.
    pub fn apply<M: AbModule>(&self, module: &M, x: &M::Elem) -> M::Elem {
        let mut acc = module.zero_elem();
        for (&nu, poly) in &self.terms {
            // P_nu(a) x by Horner would re-apply a; powers are cheap enough here
            let mut apow = x.clone();
            let mut part = module.zero_elem();
            for (i, c) in poly.iter().enumerate() {
                if i > 0 {
                    apow = module.act_a(&apow);
                }
                if !c.is_zero() {
                    part = module.add(&part, &module.scale(&apow, c));
                }
            }
            for _ in 0..nu {
                part = module.act_b(&part);
            }
            acc = module.add(&acc, &part);
        }
        acc
    }
}

impl fmt::Display for OpNormal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (&nu, poly) in &self.terms {
            for (i, c) in poly.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let mag = c.abs();
                if first {
                    if c.is_negative() {
                        write!(f, "-")?;
                    }
                    first = false;
                } else if c.is_negative() {
                    write!(f, " - ")?;
                } else {
                    write!(f, " + ")?;
                }
                let mut atoms: Vec<String> = Vec::new();
                if !mag.is_one() || (nu == 0 && i == 0) {
                    atoms.push(rational_to_string(&mag));
                }
                match nu {
                    0 => {}
                    1 => atoms.push("b".into()),
                    _ => atoms.push(format!("b^{nu}")),
                }
                match i {
                    0 => {}
                    1 => atoms.push("a".into()),
                    _ => atoms.push(format!("a^{i}")),
                }
                write!(f, "{}", atoms.join("*"))?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Presentation operator kept as a factor list:
/// `(a - l1 b) S1^{-1} (a - l2 b) ... S_{k-1}^{-1} (a - lk b)`.
///
/// Invariants: all `lambdas` congruent mod 1; every inner unit has
/// constant term exactly 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorChain {
    lambdas: Vec<Rational>,
    inner_units: Vec<BSeries>,
}

impl FactorChain {
    pub fn new(lambdas: Vec<Rational>, inner_units: Vec<BSeries>) -> Self {
        assert_eq!(
            inner_units.len() + 1,
            lambdas.len().max(1),
            "a chain with k factors has k-1 inner units"
        );
        for w in lambdas.windows(2) {
            debug_assert!(
                (&w[1] - &w[0]).denom().is_one(),
                "chain exponents must be congruent mod 1"
            );
        }
        for u in &inner_units {
            assert!(u.constant().is_one(), "inner units must have constant term 1");
        }
        FactorChain { lambdas, inner_units }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[Rational] {
        &self.lambdas
    }

    pub fn inner_units(&self) -> &[BSeries] {
        &self.inner_units
    }

    /// Suffix chain `P_j`: drop the first `j` linear factors (and the units
    /// that precede the remaining ones).
    pub fn suffix(&self, j: usize) -> FactorChain {
        assert!(j <= self.len());
        FactorChain {
            lambdas: self.lambdas[j..].to_vec(),
            inner_units: if j < self.len() {
                self.inner_units[j..].to_vec()
            } else {
                Vec::new()
            },
        }
    }

    /// Apply the chain to a module element, rightmost factor first.
    /// `S^{-1}` factors act as multiplication by the inverted unit.
    pub fn apply<M: AbModule>(&self, module: &M, x: &M::Elem) -> M::Elem {
        let k = self.len();
        let mut cur = x.clone();
        for i in (0..k).rev() {
            // (a - lambda_i b)
            let ax = module.act_a(&cur);
            let bx = module.act_b(&cur);
            cur = module.add(&ax, &module.scale(&bx, &-self.lambdas[i].clone()));
            if i > 0 {
                let inv = self.inner_units[i - 1]
                    .invert_unit()
                    .expect("inner units have constant term 1");
                cur = module.mul_series(&cur, &inv);
            }
        }
        cur
    }

    /// The Bernstein element (product of the linear factors, units dropped)
    /// and the Bernstein polynomial with roots `k - (lambda_j + j)`.
    pub fn bernstein(&self) -> (OpNormal, BernsteinPoly) {
        let k = self.len();
        let trunc = k + 2;
        let mut elem = OpNormal::constant(Rational::one(), trunc);
        for lam in &self.lambdas {
            elem = elem.mul(&OpNormal::linear_factor(lam, trunc));
        }
        let roots: Vec<Rational> = self
            .lambdas
            .iter()
            .enumerate()
            .map(|(idx, lam)| rat_int(k as i64) - lam - rat_int((idx + 1) as i64))
            .collect();
        (elem, BernsteinPoly::from_roots(roots))
    }
}

impl fmt::Display for FactorChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, lam) in self.lambdas.iter().enumerate() {
            if i > 0 {
                write!(f, "*inv({})*", self.inner_units[i - 1])?;
            }
            if lam.is_zero() {
                write!(f, "a")?;
            } else if lam.is_negative() {
                write!(f, "(a + {}*b)", rational_to_string(&-lam.clone()))?;
            } else {
                write!(f, "(a - {}*b)", rational_to_string(lam))?;
            }
        }
        Ok(())
    }
}

/// Monic polynomial over the rationals, kept with its ordered root list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BernsteinPoly {
    /// Coefficients ascending; leading coefficient is 1.
    pub coeffs: Vec<Rational>,
    /// Roots in chain order: `k - (lambda_j + j)` for `j = 1..=k`.
    pub roots: Vec<Rational>,
}

impl BernsteinPoly {
    pub fn from_roots(roots: Vec<Rational>) -> Self {
        let mut coeffs = vec![Rational::one()];
        for r in &roots {
            // multiply by (x - r)
            let mut next = vec![Rational::zero(); coeffs.len() + 1];
            for (i, c) in coeffs.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * r;
            }
            coeffs = next;
        }
        BernsteinPoly { coeffs, roots }
    }

    /// All roots are strictly negative rationals.
    pub fn all_roots_negative(&self) -> bool {
        self.roots.iter().all(|r| r.is_negative())
    }
}

impl fmt::Display for BernsteinPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let mag = c.abs();
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
                first = false;
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if i == 0 {
                write!(f, "{}", rational_to_string(&mag))?;
            } else {
                if !mag.is_one() {
                    write!(f, "{}*", rational_to_string(&mag))?;
                }
                if i == 1 {
                    write!(f, "x")?;
                } else {
                    write!(f, "x^{i}")?;
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Expression tree for operator text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(Rational),
    A,
    B,
    Inv(Box<Expr>, usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    A,
    B,
    Inv,
    Num(Rational),
    LParen,
    RParen,
    Star,
    Plus,
    Minus,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, OpError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            '*' => {
                toks.push((Tok::Star, i));
                i += 1;
            }
            '+' => {
                toks.push((Tok::Plus, i));
                i += 1;
            }
            '-' => {
                toks.push((Tok::Minus, i));
                i += 1;
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut lit = text[start..i].to_string();
                // optional /q part (no other use of '/' in the grammar)
                let mut j = i;
                while j < bytes.len() && (bytes[j] as char) == ' ' {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char) == '/' {
                    j += 1;
                    while j < bytes.len() && (bytes[j] as char) == ' ' {
                        j += 1;
                    }
                    let dstart = j;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    if dstart == j {
                        return Err(OpError::SyntaxError {
                            pos: j,
                            msg: "expected digits after '/'".into(),
                        });
                    }
                    lit.push('/');
                    lit.push_str(&text[dstart..j]);
                    i = j;
                }
                let r = crate::series::parse_rational(&lit).map_err(|_| OpError::SyntaxError {
                    pos: start,
                    msg: format!("bad rational literal {lit:?}"),
                })?;
                toks.push((Tok::Num(r), start));
            }
            'a' => {
                toks.push((Tok::A, i));
                i += 1;
            }
            'b' => {
                toks.push((Tok::B, i));
                i += 1;
            }
            'i' => {
                if text[i..].starts_with("inv") {
                    toks.push((Tok::Inv, i));
                    i += 3;
                } else {
                    return Err(OpError::SyntaxError {
                        pos: i,
                        msg: "unexpected character 'i'".into(),
                    });
                }
            }
            _ => {
                return Err(OpError::SyntaxError {
                    pos: i,
                    msg: format!("unexpected character {c:?}"),
                })
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    text_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(Tok, usize)> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.text_len)
    }

    fn eat(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<usize, OpError> {
        match self.eat() {
            Some((t, p)) if t == want => Ok(p),
            Some((_, p)) => Err(OpError::SyntaxError { pos: p, msg: format!("expected {what}") }),
            None => Err(OpError::SyntaxError {
                pos: self.text_len,
                msg: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn sum(&mut self) -> Result<Expr, OpError> {
        let mut acc = self.product()?;
        loop {
            match self.peek() {
                Some((Tok::Plus, _)) => {
                    self.eat();
                    let rhs = self.product()?;
                    acc = Expr::Add(Box::new(acc), Box::new(rhs));
                }
                Some((Tok::Minus, _)) => {
                    self.eat();
                    let rhs = self.product()?;
                    acc = Expr::Sub(Box::new(acc), Box::new(rhs));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, OpError> {
        let mut acc = self.unary()?;
        while let Some((Tok::Star, _)) = self.peek() {
            self.eat();
            let rhs = self.unary()?;
            acc = Expr::Mul(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, OpError> {
        if let Some((Tok::Minus, _)) = self.peek() {
            self.eat();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, OpError> {
        match self.eat() {
            Some((Tok::A, _)) => Ok(Expr::A),
            Some((Tok::B, _)) => Ok(Expr::B),
            Some((Tok::Num(r), _)) => Ok(Expr::Num(r)),
            Some((Tok::Inv, p)) => {
                self.expect(Tok::LParen, "'(' after inv")?;
                let inner = self.sum()?;
                self.expect(Tok::RParen, "')' closing inv")?;
                Ok(Expr::Inv(Box::new(inner), p))
            }
            Some((Tok::LParen, _)) => {
                let inner = self.sum()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some((t, p)) => Err(OpError::SyntaxError {
                pos: p,
                msg: format!("unexpected token {t:?}"),
            }),
            None => Err(OpError::SyntaxError {
                pos: self.text_len,
                msg: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parse operator text into an expression tree.
pub fn parse_expr(text: &str) -> Result<Expr, OpError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        text_len: text.len(),
    };
    let e = p.sum()?;
    if p.peek().is_some() {
        return Err(OpError::SyntaxError {
            pos: p.here(),
            msg: "trailing input".into(),
        });
    }
    Ok(e)
}

/// Total a/b degree bound of a polynomial expression; `None` when `inv` occurs.
fn degree_bound(e: &Expr) -> Option<usize> {
    match e {
        Expr::Num(_) => Some(0),
        Expr::A | Expr::B => Some(1),
        Expr::Inv(..) => None,
        Expr::Neg(x) => degree_bound(x),
        Expr::Add(x, y) | Expr::Sub(x, y) => Some(degree_bound(x)?.max(degree_bound(y)?)),
        Expr::Mul(x, y) => Some(degree_bound(x)? + degree_bound(y)?),
    }
}

fn contains_a(e: &Expr) -> bool {
    match e {
        Expr::A => true,
        Expr::Num(_) | Expr::B => false,
        Expr::Inv(x, _) | Expr::Neg(x) => contains_a(x),
        Expr::Add(x, y) | Expr::Sub(x, y) | Expr::Mul(x, y) => contains_a(x) || contains_a(y),
    }
}

/// Evaluate an `a`-free expression as a series in `b` at the given precision.
pub fn eval_series(e: &Expr, precision: usize) -> Result<BSeries, OpError> {
    match e {
        Expr::Num(r) => Ok(BSeries::monomial(r.clone(), 0, precision)),
        Expr::B => Ok(BSeries::monomial(Rational::one(), 1, precision)),
        Expr::A => Err(OpError::NonSeriesInverse { pos: 0 }),
        Expr::Neg(x) => Ok(eval_series(x, precision)?.neg()),
        Expr::Add(x, y) => Ok(eval_series(x, precision)?.add(&eval_series(y, precision)?)),
        Expr::Sub(x, y) => Ok(eval_series(x, precision)?.sub(&eval_series(y, precision)?)),
        Expr::Mul(x, y) => Ok(eval_series(x, precision)?.mul(&eval_series(y, precision)?)),
        Expr::Inv(x, pos) => {
            let s = eval_series(x, precision)?;
            if !s.constant().is_one() {
                return Err(OpError::NonUnitInverse { pos: *pos });
            }
            Ok(s.invert_unit().expect("constant term 1 is a unit"))
        }
    }
}

/// Normalize an expression to `sum b^nu P_nu(a)`.
///
/// `b_truncation = None` auto-bounds polynomial expressions exactly and
/// errors when `inv` occurs.
pub fn normalize(e: &Expr, b_truncation: Option<usize>) -> Result<OpNormal, OpError> {
    let trunc = match b_truncation {
        Some(t) => t.max(1),
        None => degree_bound(e).ok_or(OpError::TruncationRequired)? + 1,
    };
    normalize_at(e, trunc)
}

fn normalize_at(e: &Expr, trunc: usize) -> Result<OpNormal, OpError> {
    match e {
        Expr::Num(r) => Ok(OpNormal::constant(r.clone(), trunc)),
        Expr::A => Ok(OpNormal::atom_a(trunc)),
        Expr::B => Ok(OpNormal::atom_b(trunc)),
        Expr::Neg(x) => Ok(normalize_at(x, trunc)?.neg()),
        Expr::Add(x, y) => Ok(normalize_at(x, trunc)?.add(&normalize_at(y, trunc)?)),
        Expr::Sub(x, y) => Ok(normalize_at(x, trunc)?.sub(&normalize_at(y, trunc)?)),
        Expr::Mul(x, y) => Ok(normalize_at(x, trunc)?.mul(&normalize_at(y, trunc)?)),
        Expr::Inv(x, pos) => {
            if contains_a(x) {
                return Err(OpError::NonSeriesInverse { pos: *pos });
            }
            let s = eval_series(x, trunc)?;
            if !s.constant().is_one() {
                return Err(OpError::NonUnitInverse { pos: *pos });
            }
            Ok(OpNormal::from_series(
                &s.invert_unit().expect("unit"),
                trunc,
            ))
        }
    }
}

/// Apply a raw expression to a module element (no normalization): products
/// compose right to left, `inv` multiplies by the inverted series.
pub fn apply_expr<M: AbModule>(
    e: &Expr,
    module: &M,
    x: &M::Elem,
    precision: usize,
) -> Result<M::Elem, OpError> {
    match e {
        Expr::Num(r) => Ok(module.scale(x, r)),
        Expr::A => Ok(module.act_a(x)),
        Expr::B => Ok(module.act_b(x)),
        Expr::Neg(y) => Ok(module.scale(&apply_expr(y, module, x, precision)?, &rat_int(-1))),
        Expr::Add(p, q) => Ok(module.add(
            &apply_expr(p, module, x, precision)?,
            &apply_expr(q, module, x, precision)?,
        )),
        Expr::Sub(p, q) => {
            let rhs = apply_expr(q, module, x, precision)?;
            Ok(module.add(
                &apply_expr(p, module, x, precision)?,
                &module.scale(&rhs, &rat_int(-1)),
            ))
        }
        Expr::Mul(p, q) => {
            let inner = apply_expr(q, module, x, precision)?;
            apply_expr(p, module, &inner, precision)
        }
        Expr::Inv(y, pos) => {
            if contains_a(y) {
                return Err(OpError::NonSeriesInverse { pos: *pos });
            }
            let s = eval_series(y, precision)?;
            if !s.constant().is_one() {
                return Err(OpError::NonUnitInverse { pos: *pos });
            }
            Ok(module.mul_series(x, &s.invert_unit().expect("unit")))
        }
    }
}

/// Result of [`parse_operator`]: a recognized presentation chain, or a
/// general normal form.
#[derive(Debug, Clone)]
pub enum ParsedOperator {
    Chain(FactorChain),
    Normal(OpNormal),
}

/// Parse operator text, recognizing a chain when the expression alternates
/// linear factors `(a - l*b)` and `inv(unit)`.
///
/// `b_truncation` is used when the text does not form a chain, or for the
/// series inside `inv`; polynomial expressions auto-bound when `None`.
pub fn parse_operator(text: &str, b_truncation: Option<usize>) -> Result<ParsedOperator, OpError> {
    let expr = parse_expr(text)?;
    // Chain recognition on the flattened top-level product.
    let mut factors = Vec::new();
    flatten_product(&expr, &mut factors);
    if let Some(chain) = try_chain(&factors, b_truncation)? {
        return Ok(ParsedOperator::Chain(chain));
    }
    Ok(ParsedOperator::Normal(normalize(&expr, b_truncation)?))
}

fn flatten_product<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
    match e {
        Expr::Mul(x, y) => {
            flatten_product(x, out);
            flatten_product(y, out);
        }
        other => out.push(other),
    }
}

/// Recognize the factor pattern `linear (inv linear)*`. Returns `Ok(None)`
/// when the shape does not match (callers fall back to a normal form), but
/// surfaces `NonUnitInverse` eagerly: a bad unit is an input error.
fn try_chain(factors: &[&Expr], b_truncation: Option<usize>) -> Result<Option<FactorChain>, OpError> {
    if factors.is_empty() || factors.len() % 2 == 0 {
        return Ok(None);
    }
    let prec = b_truncation.unwrap_or(crate::DEFAULT_PRECISION);
    let mut lambdas = Vec::new();
    let mut units = Vec::new();
    for (idx, f) in factors.iter().enumerate() {
        if idx % 2 == 0 {
            match linear_lambda(f) {
                Some(lam) => lambdas.push(lam),
                None => return Ok(None),
            }
        } else {
            match f {
                Expr::Inv(inner, pos) => {
                    if contains_a(inner) {
                        return Err(OpError::NonSeriesInverse { pos: *pos });
                    }
                    let s = eval_series(inner, prec)?;
                    if !s.constant().is_one() {
                        return Err(OpError::NonUnitInverse { pos: *pos });
                    }
                    units.push(s);
                }
                _ => return Ok(None),
            }
        }
    }
    // chain exponents live in one class mod 1
    for w in lambdas.windows(2) {
        if !(&w[1] - &w[0]).denom().is_one() {
            return Ok(None);
        }
    }
    Ok(Some(FactorChain::new(lambdas, units)))
}

/// Match `a - c*b` (in any algebraically-equal polynomial spelling).
fn linear_lambda(e: &Expr) -> Option<Rational> {
    if let Expr::Inv(..) = e {
        return None;
    }
    let n = normalize(e, None).ok()?;
    // must be exactly a + (-lambda) b
    let a_part = n.coeff(0, 1);
    if !a_part.is_one() {
        return None;
    }
    let lam = -n.coeff(1, 0);
    let mut expect = OpNormal::atom_a(n.b_truncation());
    expect.add_monomial(1, 0, -lam.clone());
    if n == expect {
        Some(lam)
    } else {
        None
    }
}

/// Geometricity of a chain's invariants: `lambda_1 > k-1` and all
/// differences `lambda_{j+1} - lambda_j + 1` nonnegative integers.
pub fn chain_is_geometric(chain: &FactorChain) -> bool {
    let k = chain.len();
    if k == 0 {
        return true;
    }
    if chain.lambdas()[0] <= rat_int(k as i64 - 1) {
        return false;
    }
    chain
        .lambdas()
        .windows(2)
        .all(|w| is_nonneg_integer(&(&w[1] - &w[0] + rat_int(1))))
}
