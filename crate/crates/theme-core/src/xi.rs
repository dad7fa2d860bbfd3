//! The space of formal log-expansions and exact linear algebra over it.
//!
//! An element is stored per exponent class `lb` (a reduced rational in
//! `(0,1]`) as a grid of rational coefficients over (log-degree `j`,
//! b-power `m`) in the basis `b^m * e_{lb,j}` with
//! `e_{lb,j} = s^(lb-1) (Log s)^j / j!`.
//!
//! Actions on basis cells:
//! - `a . b^m e_{lb,j} = (lb+m) b^(m+1) e_{lb,j} + b^(m+1) e_{lb,j-1}`
//! - `b . b^m e_{lb,j} = b^(m+1) e_{lb,j}`
//!
//! Both raise the b-degree, so a grid truncated at `M` is exact in every
//! stored coefficient; stored row length is the tracked precision.
//!
//! The log-lowering map `f` sends `e_{lb,j}` to `e_{lb,j-1}` on one block
//! and is the identity elsewhere. Monodromy invariance of a submodule is
//! equivalent to invariance under `f`, which is how stability is tested
//! without leaving exact rational arithmetic.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::opalg::AbModule;
use crate::series::{rational_to_string, BSeries, Rational, Valuation};

/// Certification margin: pivots and obstructions must sit this far below
/// the working precision before a result is reported as certain.
pub const CERT_MARGIN: usize = 4;

/// Errors from the expansion-space layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum XiError {
    /// A block key outside `(0,1]` or missing where required.
    UnknownBlock(String),
    /// `solve_affine` right-hand side has a valuation-0 component.
    NotIntegrable,
    /// `solve_affine` right-hand side exceeds the stated log-degree bound.
    DegreeOverflow,
    /// An elimination or conversion could not be certified at the tracked
    /// precision.
    PrecisionUncertified,
}

impl fmt::Display for XiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XiError::UnknownBlock(b) => write!(f, "block {b} is not a reduced rational in (0,1]"),
            XiError::NotIntegrable => {
                write!(f, "right-hand side has a valuation-0 component, not in b*Xi")
            }
            XiError::DegreeOverflow => write!(f, "right-hand side exceeds the log-degree bound"),
            XiError::PrecisionUncertified => write!(f, "result not certified at tracked precision"),
        }
    }
}

impl std::error::Error for XiError {}

/// Reduce an exponent to its class base in `(0,1]` and integer offset:
/// `lambda = base + offset` with `base` in `(0,1]`.
pub fn class_base(lambda: &Rational) -> (Rational, BigInt) {
    let fl = lambda.floor();
    let frac = lambda - &fl;
    if frac.is_zero() {
        (Rational::one(), fl.to_integer() - BigInt::one())
    } else {
        (frac, fl.to_integer())
    }
}

/// True when two exponents are congruent mod 1.
pub fn same_class(x: &Rational, y: &Rational) -> bool {
    (x - y).denom().is_one()
}

/// Element of the expansion space: per block, coefficient series over `b`
/// for each log-degree row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XiElement {
    /// block base in `(0,1]` -> rows indexed by log-degree `j`
    blocks: BTreeMap<Rational, Vec<BSeries>>,
}

impl XiElement {
    pub fn zero() -> Self {
        XiElement { blocks: BTreeMap::new() }
    }

    /// Single cell `c * b^m * e_{base,j}` at the given precision.
    pub fn cell(base: Rational, j: usize, m: usize, c: Rational, precision: usize) -> Self {
        assert!(
            base > Rational::zero() && base <= Rational::one(),
            "block base must lie in (0,1]"
        );
        let mut rows = vec![BSeries::zero(precision); j + 1];
        rows[j] = BSeries::monomial(c, m, precision);
        let mut blocks = BTreeMap::new();
        blocks.insert(base, rows);
        XiElement { blocks }
    }

    pub fn from_rows(base: Rational, rows: Vec<BSeries>) -> Self {
        assert!(!rows.is_empty());
        let mut blocks = BTreeMap::new();
        blocks.insert(base, rows);
        XiElement { blocks }
    }

    pub fn blocks(&self) -> &BTreeMap<Rational, Vec<BSeries>> {
        &self.blocks
    }

    pub fn row(&self, base: &Rational, j: usize) -> Option<&BSeries> {
        self.blocks.get(base).and_then(|rows| rows.get(j))
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.values().all(|rows| rows.iter().all(|r| r.is_zero()))
    }

    /// Minimum tracked precision across all stored rows; `usize::MAX` when empty.
    pub fn precision(&self) -> usize {
        self.blocks
            .values()
            .flat_map(|rows| rows.iter().map(|r| r.precision()))
            .min()
            .unwrap_or(usize::MAX)
    }

    /// Largest `j` with a nonzero row in the given block.
    pub fn log_degree(&self, base: &Rational) -> Option<usize> {
        let rows = self.blocks.get(base)?;
        rows.iter().rposition(|r| !r.is_zero())
    }

    /// Largest log-degree over all blocks.
    pub fn max_log_degree(&self) -> Option<usize> {
        self.blocks
            .keys()
            .filter_map(|b| self.log_degree(b))
            .max()
    }

    /// Minimum b-adic valuation over all rows.
    pub fn valuation(&self) -> Valuation {
        let mut best: Option<usize> = None;
        let mut prec = usize::MAX;
        for rows in self.blocks.values() {
            for r in rows {
                prec = prec.min(r.precision());
                if let Valuation::Finite(v) = r.valuation() {
                    best = Some(best.map_or(v, |b| b.min(v)));
                }
            }
        }
        match best {
            Some(v) => Valuation::Finite(v),
            None => Valuation::AtLeastPrecision(if prec == usize::MAX { 0 } else { prec }),
        }
    }

    fn merge<F>(&self, other: &Self, f: F) -> Self
    where
        F: Fn(&BSeries, &BSeries) -> BSeries,
    {
        let mut blocks = BTreeMap::new();
        let keys: std::collections::BTreeSet<_> =
            self.blocks.keys().chain(other.blocks.keys()).cloned().collect();
        for k in keys {
            let n = self
                .blocks
                .get(&k)
                .map(|r| r.len())
                .unwrap_or(0)
                .max(other.blocks.get(&k).map(|r| r.len()).unwrap_or(0));
            let prec = self
                .blocks
                .get(&k)
                .into_iter()
                .chain(other.blocks.get(&k))
                .flat_map(|rows| rows.iter().map(|r| r.precision()))
                .min()
                .unwrap_or(1);
            let zero = BSeries::zero(prec);
            let mut rows = Vec::with_capacity(n);
            for j in 0..n {
                let x = self.row(&k, j).unwrap_or(&zero);
                let y = other.row(&k, j).unwrap_or(&zero);
                rows.push(f(x, y));
            }
            blocks.insert(k, rows);
        }
        XiElement { blocks }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.merge(other, |x, y| x.add(y))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.merge(other, |x, y| x.sub(y))
    }

    pub fn scale(&self, c: &Rational) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|(k, rows)| (k.clone(), rows.iter().map(|r| r.scale(c)).collect()))
            .collect();
        XiElement { blocks }
    }

    pub fn mul_series(&self, s: &BSeries) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|(k, rows)| (k.clone(), rows.iter().map(|r| r.mul(s)).collect()))
            .collect();
        XiElement { blocks }
    }

    /// The `a` action: `a(b^m e_{lb,j}) = (lb+m) b^(m+1) e_{lb,j} + b^(m+1) e_{lb,j-1}`.
    pub fn act_a(&self) -> Self {
        let mut blocks = BTreeMap::new();
        for (base, rows) in &self.blocks {
            let mut out = Vec::with_capacity(rows.len());
            for j in 0..rows.len() {
                let prec = rows[j].precision();
                let mut coeffs = vec![Rational::zero(); prec];
                for m in 0..prec.saturating_sub(1) {
                    let mut c = (base + crate::series::rat_int(m as i64)) * rows[j].coeff(m);
                    if j + 1 < rows.len() {
                        c += rows[j + 1].coeff(m);
                    }
                    coeffs[m + 1] = c;
                }
                out.push(BSeries::from_coeffs(coeffs));
            }
            blocks.insert(base.clone(), out);
        }
        XiElement { blocks }
    }

    /// The `b` action: shift every row up one b-power.
    pub fn act_b(&self) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|(k, rows)| (k.clone(), rows.iter().map(|r| r.shift_up(1)).collect()))
            .collect();
        XiElement { blocks }
    }

    /// Log-lowering on one block, identity on the others.
    pub fn f_shift(&self, base: &Rational) -> Result<Self, XiError> {
        if !(*base > Rational::zero() && *base <= Rational::one()) {
            return Err(XiError::UnknownBlock(rational_to_string(base)));
        }
        let mut blocks = self.blocks.clone();
        if let Some(rows) = blocks.get_mut(base) {
            let n = rows.len();
            for j in 0..n {
                rows[j] = if j + 1 < n {
                    rows[j + 1].clone()
                } else {
                    BSeries::zero(rows[j].precision())
                };
            }
        }
        Ok(XiElement { blocks })
    }

    /// Log-lowering on every block at once.
    pub fn f_shift_all(&self) -> Self {
        let mut out = self.clone();
        for base in self.blocks.keys() {
            out = out.f_shift(base).expect("stored block keys are valid");
        }
        out
    }

    /// Restriction to a single block (the coprimitive projection).
    pub fn project_block(&self, base: &Rational) -> Self {
        match self.blocks.get(base) {
            Some(rows) => XiElement::from_rows(base.clone(), rows.clone()),
            None => XiElement::zero(),
        }
    }

    pub fn truncated(&self, precision: usize) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|(k, rows)| (k.clone(), rows.iter().map(|r| r.truncated(precision)).collect()))
            .collect();
        XiElement { blocks }
    }
}

impl fmt::Display for XiElement {
    /// Rows rendered as `s^(q)*log(s)^j/j! * (series)`, top log-degree first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (base, rows) in &self.blocks {
            let q = base - Rational::one();
            for j in (0..rows.len()).rev() {
                if rows[j].is_zero() {
                    continue;
                }
                if !first {
                    write!(f, " + ")?;
                }
                first = false;
                let power = if q.is_zero() {
                    "1".to_string()
                } else {
                    format!("s^({})", rational_to_string(&q))
                };
                match j {
                    0 => write!(f, "{power} * ({})", rows[j])?,
                    1 => write!(f, "{power}*log(s) * ({})", rows[j])?,
                    _ => write!(f, "{power}*log(s)^{j}/{j}! * ({})", rows[j])?,
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Marker type giving [`XiElement`] the module interface.
pub struct XiSpace;

impl AbModule for XiSpace {
    type Elem = XiElement;

    fn act_a(&self, x: &XiElement) -> XiElement {
        x.act_a()
    }
    fn act_b(&self, x: &XiElement) -> XiElement {
        x.act_b()
    }
    fn mul_series(&self, x: &XiElement, s: &BSeries) -> XiElement {
        x.mul_series(s)
    }
    fn add(&self, x: &XiElement, y: &XiElement) -> XiElement {
        x.add(y)
    }
    fn scale(&self, x: &XiElement, c: &Rational) -> XiElement {
        x.scale(c)
    }
    fn zero_elem(&self) -> XiElement {
        XiElement::zero()
    }
}

/// Solve `(a - (base+q) b) y = z` for the unique `y` in
/// `H(j,q) + Q . b^q e_{j+1}`, where `H(j,q)` is the hyperplane of the
/// degree-`<= j` part with vanishing `b^q e_0` coefficient.
///
/// The `b^q e_{j+1}` coefficient of `y` equals the `b^(q+1) e_j`
/// coefficient of `z`. Precision drops by one.
pub fn solve_affine(z: &XiElement, base: &Rational, q: usize, j: usize) -> Result<XiElement, XiError> {
    if !(*base > Rational::zero() && *base <= Rational::one()) {
        return Err(XiError::UnknownBlock(rational_to_string(base)));
    }
    for (k, rows) in z.blocks() {
        let nonzero = rows.iter().any(|r| !r.is_zero());
        if nonzero && k != base {
            return Err(XiError::UnknownBlock(rational_to_string(k)));
        }
    }
    let zero_rows: Vec<BSeries> = Vec::new();
    let rows = z.blocks().get(base).unwrap_or(&zero_rows);
    if rows.iter().skip(j + 1).any(|r| !r.is_zero()) {
        return Err(XiError::DegreeOverflow);
    }
    if rows.iter().any(|r| !r.coeff(0).is_zero()) {
        return Err(XiError::NotIntegrable);
    }
    let prec_in = rows.iter().map(|r| r.precision()).min().unwrap_or(2);
    let prec = prec_in.saturating_sub(1).max(1);
    let zc = |h: usize, m: usize| -> Rational {
        rows.get(h).map(|r| r.coeff(m)).unwrap_or_else(Rational::zero)
    };

    let mut y = vec![vec![Rational::zero(); prec]; j + 2];
    let rho = zc(j, q + 1);
    if q < prec {
        y[j + 1][q] = rho;
    }
    for h in (0..=j).rev() {
        for m in 0..prec {
            if m == q {
                y[h][m] = if h >= 1 { zc(h - 1, q + 1) } else { Rational::zero() };
            } else {
                let num = zc(h, m + 1) - &y[h + 1][m];
                let den = crate::series::rat_int(m as i64) - crate::series::rat_int(q as i64);
                y[h][m] = num / den;
            }
        }
    }
    let out_rows = y.into_iter().map(BSeries::from_coeffs).collect();
    Ok(XiElement::from_rows(base.clone(), out_rows))
}

// ---------------------------------------------------------------------------
// Elimination over the valuation ring
// ---------------------------------------------------------------------------

/// Where a reduced element lands: inside the span, certifiably outside,
/// or undecidable at the tracked precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Yes,
    No,
    Uncertain,
}

/// Column-echelon basis of a span of coordinate vectors over the series
/// ring. Pivots are chosen by minimal valuation, ties broken by coordinate
/// order then column order.
#[derive(Debug, Clone)]
pub struct SpanBasis {
    /// Echelonized nonzero columns.
    pub cols: Vec<Vec<BSeries>>,
    /// `cols[i] = sum_g reps[i][g] * original[g]`.
    pub reps: Vec<Vec<BSeries>>,
    /// `(coordinate, valuation)` of each pivot, in elimination order.
    pub pivots: Vec<(usize, usize)>,
    /// Combinations of the original columns that vanished (mod precision).
    pub zero_reps: Vec<Vec<BSeries>>,
    pub rank: usize,
    /// Pivot valuations, ascending: the elementary-divisor exponents.
    pub divisor_valuations: Vec<usize>,
    /// All pivots sit below `precision - CERT_MARGIN`.
    pub certified: bool,
    pub precision: usize,
}

fn col_min_entry(col: &[BSeries]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (coord, s) in col.iter().enumerate() {
        if let Valuation::Finite(v) = s.valuation() {
            match best {
                Some((bv, _)) if bv <= v => {}
                _ => best = Some((v, coord)),
            }
        }
    }
    best
}

impl SpanBasis {
    /// Eliminate the given columns. `n_coords` fixes the coordinate layout.
    pub fn compute(columns: Vec<Vec<BSeries>>, n_coords: usize) -> SpanBasis {
        let precision = columns
            .iter()
            .flat_map(|c| c.iter().map(|s| s.precision()))
            .min()
            .unwrap_or(1);
        let n_cols = columns.len();
        let mut work: Vec<(Vec<BSeries>, Vec<BSeries>)> = columns
            .into_iter()
            .enumerate()
            .map(|(g, col)| {
                assert_eq!(col.len(), n_coords, "column does not match the layout");
                let mut rep = vec![BSeries::zero(precision); n_cols];
                rep[g] = BSeries::one(precision);
                (col, rep)
            })
            .collect();

        let mut cols = Vec::new();
        let mut reps = Vec::new();
        let mut pivots = Vec::new();
        let mut zero_reps = Vec::new();

        loop {
            // pick the pivot: minimal valuation, then lowest coordinate,
            // then earliest column
            let mut best: Option<(usize, usize, usize)> = None; // (val, coord, col)
            for (ci, (col, _)) in work.iter().enumerate() {
                if let Some((v, coord)) = col_min_entry(col) {
                    match best {
                        Some((bv, bc, _)) if (bv, bc) <= (v, coord) => {}
                        _ => best = Some((v, coord, ci)),
                    }
                }
            }
            let Some((v, coord, ci)) = best else { break };
            let (pcol, prep) = work.remove(ci);
            let unit = pcol[coord].div_bpow(v).expect("valuation checked");
            let unit_inv = unit.invert_unit().expect("leading coefficient nonzero");
            for (col, rep) in work.iter_mut() {
                let e = &col[coord];
                if e.is_zero() {
                    continue;
                }
                // e = b^v * q * unit with q integral since v is minimal
                let q = e
                    .div_bpow(v)
                    .expect("pivot valuation is minimal")
                    .mul(&unit_inv);
                for (x, p) in col.iter_mut().zip(pcol.iter()) {
                    *x = x.sub(&q.mul(p));
                }
                for (x, p) in rep.iter_mut().zip(prep.iter()) {
                    *x = x.sub(&q.mul(p));
                }
            }
            cols.push(pcol);
            reps.push(prep);
            pivots.push((coord, v));
        }
        for (_, rep) in work {
            zero_reps.push(rep);
        }

        let rank = cols.len();
        let mut divisor_valuations: Vec<usize> = pivots.iter().map(|p| p.1).collect();
        divisor_valuations.sort_unstable();
        let certified = pivots
            .iter()
            .all(|&(_, v)| v + CERT_MARGIN < precision);
        SpanBasis {
            cols,
            reps,
            pivots,
            zero_reps,
            rank,
            divisor_valuations,
            certified,
            precision,
        }
    }

    /// Reduce `y` by the pivots; the remainder decides membership.
    pub fn membership(&self, y: &[BSeries]) -> Membership {
        match self.reduce(y) {
            Some((rem, _)) => classify_remainder(&rem, self.precision),
            None => Membership::No,
        }
    }

    /// Reduce `y`, returning the remainder and the pivot coefficients,
    /// or `None` when a pivot coordinate carries valuation strictly below
    /// the pivot (certified non-membership).
    pub fn reduce(&self, y: &[BSeries]) -> Option<(Vec<BSeries>, Vec<BSeries>)> {
        let mut rem: Vec<BSeries> = y.to_vec();
        let mut qs = Vec::with_capacity(self.cols.len());
        for (i, &(coord, v)) in self.pivots.iter().enumerate() {
            let e = &rem[coord];
            if e.is_zero() {
                qs.push(BSeries::zero(self.precision));
                continue;
            }
            match e.valuation() {
                Valuation::Finite(ev) if ev < v => return None,
                _ => {}
            }
            let unit = self.cols[i][coord].div_bpow(v).expect("pivot");
            let q = e
                .div_bpow(v)
                .expect("valuation checked")
                .mul(&unit.invert_unit().expect("unit"));
            for (x, p) in rem.iter_mut().zip(self.cols[i].iter()) {
                *x = x.sub(&q.mul(p));
            }
            qs.push(q);
        }
        Some((rem, qs))
    }

    /// Express `y` over the ORIGINAL columns, when it lies in the span.
    pub fn coordinates(&self, y: &[BSeries]) -> Option<Vec<BSeries>> {
        let (rem, qs) = self.reduce(y)?;
        if classify_remainder(&rem, self.precision) != Membership::Yes {
            return None;
        }
        let n = self.reps.first().map(|r| r.len()).unwrap_or(0);
        let mut out = vec![BSeries::zero(self.precision); n];
        for (q, rep) in qs.iter().zip(self.reps.iter()) {
            for (o, r) in out.iter_mut().zip(rep.iter()) {
                *o = o.add(&q.mul(r));
            }
        }
        Some(out)
    }
}

fn classify_remainder(rem: &[BSeries], precision: usize) -> Membership {
    let mut uncertain = false;
    for s in rem {
        match s.valuation() {
            Valuation::Finite(v) => {
                if v + CERT_MARGIN < precision {
                    return Membership::No;
                }
                uncertain = true;
            }
            Valuation::AtLeastPrecision(_) => {}
        }
    }
    if uncertain {
        Membership::Uncertain
    } else {
        Membership::Yes
    }
}

/// Span of a family of expansion elements, remembering the row layout.
#[derive(Debug, Clone)]
pub struct XiSpan {
    /// Row layout: (block, log-degree), blocks ascending, log-degree descending.
    pub layout: Vec<(Rational, usize)>,
    pub basis: SpanBasis,
}

impl XiSpan {
    pub fn rank(&self) -> usize {
        self.basis.rank
    }

    pub fn flatten(&self, x: &XiElement) -> Vec<BSeries> {
        let prec = self.basis.precision;
        self.layout
            .iter()
            .map(|(base, j)| {
                x.row(base, *j)
                    .cloned()
                    .unwrap_or_else(|| BSeries::zero(prec))
                    .truncated(prec)
            })
            .collect()
    }

    pub fn membership(&self, x: &XiElement) -> Membership {
        // rows outside the layout are certifiably outside the span
        for (base, rows) in x.blocks() {
            for (j, r) in rows.iter().enumerate() {
                if !r.is_zero() && !self.layout.iter().any(|(b, jj)| b == base && *jj == j) {
                    return Membership::No;
                }
            }
        }
        self.basis.membership(&self.flatten(x))
    }
}

/// Layout rows present in any of the elements: blocks ascending,
/// log-degrees descending within a block.
fn union_layout(gens: &[XiElement]) -> Vec<(Rational, usize)> {
    let mut per_block: BTreeMap<Rational, usize> = BTreeMap::new();
    for g in gens {
        for (base, rows) in g.blocks() {
            let n = per_block.entry(base.clone()).or_insert(0);
            *n = (*n).max(rows.len());
        }
    }
    let mut layout = Vec::new();
    for (base, n) in per_block {
        for j in (0..n).rev() {
            layout.push((base.clone(), j));
        }
    }
    layout
}

/// Rank of the series-span of the given elements.
pub fn span_rank(gens: &[XiElement]) -> XiSpan {
    let layout = union_layout(gens);
    let prec = gens.iter().map(|g| g.precision()).min().unwrap_or(1);
    let columns: Vec<Vec<BSeries>> = gens
        .iter()
        .map(|g| {
            layout
                .iter()
                .map(|(base, j)| {
                    g.row(base, *j)
                        .cloned()
                        .unwrap_or_else(|| BSeries::zero(prec))
                        .truncated(prec)
                })
                .collect()
        })
        .collect();
    XiSpan {
        basis: SpanBasis::compute(columns, layout.len()),
        layout,
    }
}

/// Span of the orbit `{a^i x : i < cap}`; generators as series-combinations
/// of these suffice for a monogenic submodule.
pub fn orbit_span(x: &XiElement, cap: usize) -> (Vec<XiElement>, XiSpan) {
    let mut gens = Vec::with_capacity(cap);
    let mut cur = x.clone();
    for _ in 0..cap {
        gens.push(cur.clone());
        cur = cur.act_a();
    }
    let span = span_rank(&gens);
    (gens, span)
}

// ---------------------------------------------------------------------------
// Monomial conversion
// ---------------------------------------------------------------------------

/// Expansion over plain monomials `s^(base-1+i) (Log s)^j / j!`, stored as
/// (i, j) -> coefficient per block.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MonomialForm {
    pub blocks: BTreeMap<Rational, BTreeMap<(usize, usize), Rational>>,
}

impl MonomialForm {
    pub fn coeff(&self, base: &Rational, i: usize, j: usize) -> Rational {
        self.blocks
            .get(base)
            .and_then(|m| m.get(&(i, j)))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    fn put(&mut self, base: &Rational, i: usize, j: usize, c: Rational) {
        if c.is_zero() {
            return;
        }
        let m = self.blocks.entry(base.clone()).or_default();
        let e = m.entry((i, j)).or_insert_with(Rational::zero);
        *e += c;
        if e.is_zero() {
            m.remove(&(i, j));
        }
    }
}

/// `b^m e_{base+off, j}` as monomials, via integration by parts:
/// `b M_{mu,j} = (1/mu) M_{mu+1,j} - (1/mu) b M_{mu,j-1}`.
fn bpow_to_monomials(base: &Rational, off: usize, j: usize, m: usize, out: &mut Vec<((usize, usize), Rational)>, scale: Rational) {
    if scale.is_zero() {
        return;
    }
    if m == 0 {
        out.push(((off, j), scale));
        return;
    }
    let mu = base + crate::series::rat_int(off as i64);
    let inv_mu = mu.recip();
    bpow_to_monomials(base, off + 1, j, m - 1, out, &scale * &inv_mu);
    if j >= 1 {
        bpow_to_monomials(base, off, j - 1, m, out, -(&scale * &inv_mu));
    }
}

/// Exact triangular conversion to monomial form.
pub fn to_monomial(x: &XiElement) -> MonomialForm {
    let mut mf = MonomialForm::default();
    for (base, rows) in x.blocks() {
        for (j, r) in rows.iter().enumerate() {
            for (m, c) in r.coeffs().iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let mut terms = Vec::new();
                bpow_to_monomials(base, 0, j, m, &mut terms, c.clone());
                for ((i, jj), v) in terms {
                    mf.put(base, i, jj, v);
                }
            }
        }
    }
    mf
}

/// Inverse of [`to_monomial`], at the given grid precision.
///
/// The leading monomial of `b^i e_{base,j}` is `(prod_t 1/(base+t)) *
/// M_{base+i, j}`, so back-substitution descends in log-degree.
pub fn from_monomial(mf: &MonomialForm, precision: usize) -> XiElement {
    let mut out = XiElement::zero();
    for (base, terms) in &mf.blocks {
        let nmax = terms.keys().map(|&(_, j)| j).max().map(|j| j + 1).unwrap_or(0);
        if nmax == 0 {
            continue;
        }
        let mut rows = vec![BSeries::zero(precision); nmax];
        let mut residual = terms.clone();
        // log-degree descending, then offset ascending
        for j in (0..nmax).rev() {
            let offsets: Vec<usize> = residual
                .iter()
                .filter(|(&(_, jj), c)| jj == j && !c.is_zero())
                .map(|(&(i, _), _)| i)
                .collect();
            let mut offsets = offsets;
            offsets.sort_unstable();
            for i in offsets {
                let c = residual.get(&(i, j)).cloned().unwrap_or_else(Rational::zero);
                if c.is_zero() {
                    continue;
                }
                // leading coefficient of b^i e_{base,j}
                let mut lead = Rational::one();
                for t in 0..i {
                    lead *= (base + crate::series::rat_int(t as i64)).recip();
                }
                let coeff = &c / &lead;
                if i < precision {
                    let mut s = rows[j].clone();
                    s.set_coeff(i, s.coeff(i) + coeff.clone());
                    rows[j] = s;
                }
                let mut terms2 = Vec::new();
                bpow_to_monomials(base, 0, j, i, &mut terms2, coeff);
                for ((ii, jj), v) in terms2 {
                    let e = residual.entry((ii, jj)).or_insert_with(Rational::zero);
                    *e -= v;
                    if e.is_zero() {
                        residual.remove(&(ii, jj));
                    }
                }
            }
        }
        debug_assert!(residual.values().all(|c| c.is_zero()) || residual.is_empty());
        out = out.add(&XiElement::from_rows(base.clone(), rows));
    }
    out
}
