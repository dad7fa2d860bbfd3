//! Theme modules: construction from presentations, realization inside the
//! log-expansion space, the Jordan-Hoelder filtration, fundamental
//! invariants, Bernstein data, quotients and submodules, twisted duals,
//! and exponent decomposition.
//!
//! A rank-k theme is presented by exponents `l1..lk` (one class mod 1,
//! `l1 > k-1`, `p_j = l_{j+1} - l_j + 1` a nonnegative integer) and unit
//! polynomials `S_1..S_{k-1}` with constant term 1. The module carries the
//! standard basis `e_1..e_k` with `(a - l_{j+1} b) e_{j+1} = S_j e_j` and
//! `(a - l1 b) e_1 = 0`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::opalg::{AbModule, BernsteinPoly, FactorChain, OpNormal};
use crate::series::{rat_int, rational_to_string, BSeries, Rational, Valuation};
use crate::xi::{
    class_base, orbit_span, solve_affine, span_rank, Membership, SpanBasis, XiElement, XiSpan,
};

/// Errors from theme construction and structure computations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ThemeError {
    /// A presentation datum violates the invariants; the message names it.
    InvalidInvariants(String),
    /// The `b^(p_j)` coefficient of `S_j` vanishes; carries the index `j`.
    NotATheme(usize),
    /// A filtration/extraction step could not be certified.
    PrecisionUncertified,
    /// Presentation and realized filtration disagree.
    Mismatch(String),
    /// `dual_twist` needs `delta > l_k + k - 1`.
    ShiftTooSmall,
    /// An index argument is out of range.
    BadIndex(String),
}

impl fmt::Display for ThemeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThemeError::InvalidInvariants(m) => write!(f, "invalid invariants: {m}"),
            ThemeError::NotATheme(j) => {
                write!(f, "not a theme: coefficient of b^p_{j} in S_{j} vanishes")
            }
            ThemeError::PrecisionUncertified => write!(f, "not certified at tracked precision"),
            ThemeError::Mismatch(m) => write!(f, "presentation/realization mismatch: {m}"),
            ThemeError::ShiftTooSmall => write!(f, "dual shift too small: need delta > l_k + k - 1"),
            ThemeError::BadIndex(m) => write!(f, "bad index: {m}"),
        }
    }
}

impl std::error::Error for ThemeError {}

/// Fundamental invariants: the first exponent and the gap integers
/// `p_j = l_{j+1} - l_j + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FundInvariants {
    pub lambda1: Rational,
    pub p: Vec<usize>,
}

impl FundInvariants {
    pub fn rank(&self) -> usize {
        self.p.len() + 1
    }

    pub fn lambdas(&self) -> Vec<Rational> {
        let mut out = vec![self.lambda1.clone()];
        for &pj in &self.p {
            let last = out.last().unwrap().clone();
            out.push(last + rat_int(pj as i64) - rat_int(1));
        }
        out
    }

    pub fn lambda_k(&self) -> Rational {
        self.lambdas().pop().unwrap()
    }

    /// Integer distance `l_k - l1`.
    pub fn spread(&self) -> usize {
        let d = self.lambda_k() - &self.lambda1;
        d.abs().to_integer().to_usize().unwrap_or(0)
    }

    pub fn sum_p(&self) -> usize {
        self.p.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ThemeError> {
        let k = self.rank();
        if self.lambda1 <= rat_int(k as i64 - 1) {
            return Err(ThemeError::InvalidInvariants(format!(
                "lambda_1 = {} is not > k-1 = {}",
                rational_to_string(&self.lambda1),
                k - 1
            )));
        }
        Ok(())
    }

    /// Invariants from an exponent list (checks integrality of the gaps).
    pub fn from_lambdas(lambdas: &[Rational]) -> Result<FundInvariants, ThemeError> {
        assert!(!lambdas.is_empty());
        let mut p = Vec::with_capacity(lambdas.len() - 1);
        for w in lambdas.windows(2) {
            let gap = &w[1] - &w[0] + rat_int(1);
            if !gap.denom().is_one() || gap.is_negative() {
                return Err(ThemeError::InvalidInvariants(format!(
                    "p_j = {} is not a nonnegative integer (exponents {} and {})",
                    rational_to_string(&gap),
                    rational_to_string(&w[0]),
                    rational_to_string(&w[1]),
                )));
            }
            p.push(gap.to_integer().to_usize().unwrap());
        }
        let inv = FundInvariants {
            lambda1: lambdas[0].clone(),
            p,
        };
        inv.validate()?;
        Ok(inv)
    }
}

impl fmt::Display for FundInvariants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lambda_1 = {}, p = (", rational_to_string(&self.lambda1))?;
        for (i, pj) in self.p.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{pj}")?;
        }
        write!(f, ")")
    }
}

/// Presentation data: exponents and exact unit polynomials.
///
/// Units are stored as exact ascending coefficient vectors (constant 1) so
/// the module can be materialized at any working precision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThemePresentation {
    pub lambdas: Vec<Rational>,
    pub units: Vec<Vec<Rational>>,
}

impl ThemePresentation {
    pub fn new(lambdas: Vec<Rational>, units: Vec<Vec<Rational>>) -> Self {
        ThemePresentation { lambdas, units }
    }

    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    pub fn invariants(&self) -> Result<FundInvariants, ThemeError> {
        FundInvariants::from_lambdas(&self.lambdas)
    }

    pub fn validate(&self) -> Result<(), ThemeError> {
        let k = self.rank();
        if k == 0 {
            return Ok(());
        }
        if self.units.len() + 1 != k {
            return Err(ThemeError::InvalidInvariants(format!(
                "rank {k} needs {} units, got {}",
                k - 1,
                self.units.len()
            )));
        }
        self.invariants()?;
        for (i, u) in self.units.iter().enumerate() {
            if u.first().map(|c| !c.is_one()).unwrap_or(true) {
                return Err(ThemeError::InvalidInvariants(format!(
                    "S_{} must have constant term exactly 1",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn unit_series(&self, j: usize, precision: usize) -> BSeries {
        BSeries::from_coeffs_at(self.units[j].clone(), precision)
    }
}

/// Default working precision for a presentation: exponent spread plus the
/// gap total plus rank plus a stabilization margin.
pub fn default_precision(inv: &FundInvariants) -> usize {
    inv.spread() + inv.sum_p() + inv.rank() + 8
}

/// Working precision generous enough for computations mixing several
/// presentations (kernels, injections, isomorphism tests).
pub fn joint_precision(invs: &[&FundInvariants]) -> usize {
    let mut lo: Option<Rational> = None;
    let mut hi: Option<Rational> = None;
    let mut sum_p = 0usize;
    let mut kmax = 1usize;
    for inv in invs {
        let lams = inv.lambdas();
        let l0 = lams.first().unwrap().clone();
        let lk = lams.last().unwrap().clone();
        lo = Some(match lo {
            Some(v) => v.min(l0),
            None => l0,
        });
        hi = Some(match hi {
            Some(v) => v.max(lk),
            None => lk,
        });
        sum_p += inv.sum_p();
        kmax = kmax.max(inv.rank());
    }
    let span = match (lo, hi) {
        (Some(lo), Some(hi)) => (hi - lo).abs().to_integer().to_usize().unwrap_or(0),
        _ => 0,
    };
    span + sum_p + 2 * kmax + 10 + crate::xi::CERT_MARGIN
}

/// Rank-k theme with its standard basis, materialized at a working
/// precision. Elements are coefficient vectors over `e_1..e_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThemeModule {
    pres: ThemePresentation,
    precision: usize,
}

/// Element of a [`ThemeModule`]: series coefficients over the standard basis.
pub type ModElem = Vec<BSeries>;

impl ThemeModule {
    /// Build the module; theme-ness itself is certified by
    /// [`ThemeModule::realize_in_xi`].
    pub fn from_presentation(pres: ThemePresentation, precision: usize) -> Result<Self, ThemeError> {
        pres.validate()?;
        Ok(ThemeModule {
            pres,
            precision: precision.max(2),
        })
    }

    /// Build at the default precision for the invariants.
    pub fn from_presentation_default(pres: ThemePresentation) -> Result<Self, ThemeError> {
        let prec = match pres.invariants() {
            Ok(inv) => default_precision(&inv),
            Err(_) => crate::DEFAULT_PRECISION,
        };
        Self::from_presentation(pres, prec)
    }

    pub fn presentation(&self) -> &ThemePresentation {
        &self.pres
    }

    pub fn rank(&self) -> usize {
        self.pres.rank()
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    pub fn lambdas(&self) -> &[Rational] {
        &self.pres.lambdas
    }

    /// Same data at a different working precision.
    pub fn at_precision(&self, precision: usize) -> Self {
        ThemeModule {
            pres: self.pres.clone(),
            precision: precision.max(2),
        }
    }

    pub fn invariants(&self) -> FundInvariants {
        self.pres.invariants().expect("validated at construction")
    }

    /// The presentation chain `(a - l1 b) S1^{-1} ... (a - lk b)`.
    pub fn chain(&self) -> FactorChain {
        let units = (0..self.pres.units.len())
            .map(|j| self.pres.unit_series(j, self.precision))
            .collect();
        FactorChain::new(self.pres.lambdas.clone(), units)
    }

    /// Suffix chain `P_j` (first `j` factors dropped).
    pub fn suffix_chain(&self, j: usize) -> FactorChain {
        self.chain().suffix(j)
    }

    /// Standard generator `e_k`.
    pub fn generator(&self) -> ModElem {
        let k = self.rank();
        let mut e = self.zero_elem();
        if k > 0 {
            e[k - 1] = BSeries::one(self.precision);
        }
        e
    }

    /// Basis vector `e_i` (1-based).
    pub fn basis_elem(&self, i: usize) -> ModElem {
        assert!(i >= 1 && i <= self.rank());
        let mut e = self.zero_elem();
        e[i - 1] = BSeries::one(self.precision);
        e
    }

    /// Bernstein element and polynomial of the presentation.
    pub fn bernstein(&self) -> (OpNormal, BernsteinPoly) {
        self.chain().bernstein()
    }

    /// Unique normal rank-j submodule `F_j`, as a theme (prefix data).
    pub fn sub_f(&self, j: usize) -> Result<ThemeModule, ThemeError> {
        let k = self.rank();
        if j > k {
            return Err(ThemeError::BadIndex(format!("sub_F({j}) of a rank-{k} theme")));
        }
        let pres = ThemePresentation::new(
            self.pres.lambdas[..j].to_vec(),
            self.pres.units[..j.saturating_sub(1)].to_vec(),
        );
        ThemeModule::from_presentation(pres, self.precision)
    }

    /// Quotient `E / F_j`, as a theme (suffix data).
    pub fn quotient_by_f(&self, j: usize) -> Result<ThemeModule, ThemeError> {
        let k = self.rank();
        if j > k {
            return Err(ThemeError::BadIndex(format!(
                "quotient_by_F({j}) of a rank-{k} theme"
            )));
        }
        let units = if j >= k {
            Vec::new()
        } else {
            self.pres.units[j..].to_vec()
        };
        let pres = ThemePresentation::new(self.pres.lambdas[j..].to_vec(), units);
        ThemeModule::from_presentation(pres, self.precision)
    }

    /// Project an element of `E` to `E / F_j` (drop the first `j` coordinates).
    pub fn project_to_quotient(&self, x: &ModElem, j: usize) -> ModElem {
        x[j..].to_vec()
    }

    /// Lift an element of `E / F_j` back to `E` coordinates (zero-fill).
    pub fn lift_from_quotient(&self, x: &ModElem, j: usize) -> ModElem {
        let mut out = self.zero_elem();
        for (i, s) in x.iter().enumerate() {
            out[j + i] = s.clone();
        }
        out
    }

    /// Twist: replace `a` by `a + delta b`; shifts every exponent by `delta`.
    pub fn twist(&self, delta: &Rational) -> Result<ThemeModule, ThemeError> {
        let lambdas: Vec<Rational> = self.pres.lambdas.iter().map(|l| l + delta).collect();
        let pres = ThemePresentation::new(lambdas, self.pres.units.clone());
        ThemeModule::from_presentation(pres, self.precision)
    }

    /// Invariant-level twisted dual: exponents `delta - l_k, ..., delta - l1`,
    /// gaps reversed. Requires `delta > l_k + k - 1`.
    pub fn dual_twist_invariants(&self, delta: &Rational) -> Result<FundInvariants, ThemeError> {
        let k = self.rank();
        let lk = self.pres.lambdas.last().expect("rank >= 1").clone();
        if *delta <= lk + rat_int(k as i64 - 1) {
            return Err(ThemeError::ShiftTooSmall);
        }
        let lambdas: Vec<Rational> = self.pres.lambdas.iter().rev().map(|l| delta - l).collect();
        FundInvariants::from_lambdas(&lambdas)
    }

    /// The twisted dual as an explicit module with the transposed action
    /// `(a phi)_j = b^2 phi_j' + (delta - l_j) b phi_j - S_{j-1} phi_{j-1}`,
    /// together with a generator found among the dual basis covectors
    /// (first one whose orbit has full rank).
    pub fn dual_module(&self, delta: &Rational) -> Result<(DualModule, ModElem), ThemeError> {
        self.dual_twist_invariants(delta)?;
        let dual = DualModule {
            lambdas: self.pres.lambdas.clone(),
            units: (0..self.pres.units.len())
                .map(|j| self.pres.unit_series(j, self.precision))
                .collect(),
            delta: delta.clone(),
            precision: self.precision,
        };
        let k = self.rank();
        for i in 0..k {
            let mut g = AbModule::zero_elem(&dual);
            g[i] = BSeries::one(self.precision);
            let span = module_orbit_span(&dual, &g, k);
            if span.rank == k {
                return Ok((dual, g));
            }
        }
        Err(ThemeError::PrecisionUncertified)
    }

    pub fn zero_elem(&self) -> ModElem {
        vec![BSeries::zero(self.precision); self.rank()]
    }
}

impl AbModule for ThemeModule {
    type Elem = ModElem;

    fn act_a(&self, x: &ModElem) -> ModElem {
        let k = self.rank();
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let prec = x[i].precision();
            let mut coeffs = vec![Rational::zero(); prec];
            // (l_{i+1} b + b^2 d/db) x_i
            for m in 1..prec {
                coeffs[m] = (&self.pres.lambdas[i] + rat_int(m as i64 - 1)) * x[i].coeff(m - 1);
            }
            let mut s = BSeries::from_coeffs(coeffs);
            // transfer S_i x_{i+1} into the e_i coordinate
            if i + 1 < k {
                s = s.add(&self.pres.unit_series(i, prec).mul(&x[i + 1]));
            }
            out.push(s);
        }
        out
    }

    fn act_b(&self, x: &ModElem) -> ModElem {
        x.iter().map(|s| s.shift_up(1)).collect()
    }

    fn mul_series(&self, x: &ModElem, s: &BSeries) -> ModElem {
        x.iter().map(|c| c.mul(s)).collect()
    }

    fn add(&self, x: &ModElem, y: &ModElem) -> ModElem {
        x.iter().zip(y.iter()).map(|(a, b)| a.add(b)).collect()
    }

    fn scale(&self, x: &ModElem, c: &Rational) -> ModElem {
        x.iter().map(|s| s.scale(c)).collect()
    }

    fn zero_elem(&self) -> ModElem {
        self.zero_elem()
    }
}

/// Twisted dual of a theme, with the explicit `a` action on covector
/// coordinates.
#[derive(Debug, Clone)]
pub struct DualModule {
    lambdas: Vec<Rational>,
    units: Vec<BSeries>,
    delta: Rational,
    precision: usize,
}

impl DualModule {
    pub fn rank(&self) -> usize {
        self.lambdas.len()
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    /// Dual exponent of coordinate `j` (0-based): `delta - l_{j+1}`.
    pub fn dual_lambda(&self, j: usize) -> Rational {
        &self.delta - &self.lambdas[j]
    }
}

impl AbModule for DualModule {
    type Elem = ModElem;

    fn act_a(&self, x: &ModElem) -> ModElem {
        let k = self.rank();
        let mut out = Vec::with_capacity(k);
        for j in 0..k {
            let prec = x[j].precision();
            let mut coeffs = vec![Rational::zero(); prec];
            // (delta - l_j) b x_j + b^2 x_j'
            for m in 1..prec {
                coeffs[m] =
                    (&self.delta - &self.lambdas[j] + rat_int(m as i64 - 1)) * x[j].coeff(m - 1);
            }
            let mut s = BSeries::from_coeffs(coeffs);
            // - S_{j-1} x_{j-1}
            if j >= 1 {
                s = s.sub(&self.units[j - 1].mul(&x[j - 1]));
            }
            out.push(s);
        }
        out
    }

    fn act_b(&self, x: &ModElem) -> ModElem {
        x.iter().map(|s| s.shift_up(1)).collect()
    }

    fn mul_series(&self, x: &ModElem, s: &BSeries) -> ModElem {
        x.iter().map(|c| c.mul(s)).collect()
    }

    fn add(&self, x: &ModElem, y: &ModElem) -> ModElem {
        x.iter().zip(y.iter()).map(|(a, b)| a.add(b)).collect()
    }

    fn scale(&self, x: &ModElem, c: &Rational) -> ModElem {
        x.iter().map(|s| s.scale(c)).collect()
    }

    fn zero_elem(&self) -> ModElem {
        vec![BSeries::zero(self.precision); self.rank()]
    }
}

/// Column span of module elements, coordinates in basis order.
#[derive(Debug, Clone)]
pub struct ModuleSpan {
    pub basis: SpanBasis,
    pub rank: usize,
}

/// Span of `{a^i x : i < cap}` inside any module.
pub fn module_orbit_span<M: AbModule<Elem = ModElem>>(
    module: &M,
    x: &ModElem,
    cap: usize,
) -> ModuleSpan {
    let mut gens = Vec::with_capacity(cap);
    let mut cur = x.clone();
    for _ in 0..cap {
        gens.push(cur.clone());
        cur = module.act_a(&cur);
    }
    let n = x.len();
    let basis = SpanBasis::compute(gens, n);
    ModuleSpan {
        rank: basis.rank,
        basis,
    }
}

/// A certified realization inside the expansion space: images of the
/// standard basis and the span of the generator's orbit.
#[derive(Debug, Clone)]
pub struct XiRealization {
    /// Class base in `(0,1]` shared by all exponents.
    pub base: Rational,
    /// `phis[i]` is the image of `e_{i+1}`; `phis[k-1]` generates.
    pub phis: Vec<XiElement>,
    /// Span of `{a^i phi : i < k}` for the generator image.
    pub span: XiSpan,
}

impl XiRealization {
    pub fn generator(&self) -> &XiElement {
        self.phis.last().expect("rank >= 1")
    }

    /// Image of a coordinate vector under the standard-basis embedding.
    pub fn map_elem(&self, x: &ModElem) -> XiElement {
        let mut out = XiElement::zero();
        for (i, c) in x.iter().enumerate() {
            out = out.add(&self.phis[i].mul_series(c));
        }
        out
    }

    /// Rank of the submodule generated by the image of `x`: one more than
    /// the log-degree of the image (zero for the zero element).
    pub fn elem_rank(&self, x: &ModElem) -> usize {
        match self.map_elem(x).max_log_degree() {
            Some(d) => d + 1,
            None => 0,
        }
    }
}

impl ThemeModule {
    /// Build an embedding by iterated affine solves. Errors with
    /// `NotATheme(j)` when the `b^(p_j)` coefficient of `S_j` vanishes.
    pub fn realize_in_xi(&self) -> Result<XiRealization, ThemeError> {
        let k = self.rank();
        assert!(k >= 1, "cannot realize the zero module");
        let (base, off1) = class_base(&self.pres.lambdas[0]);
        let q1 = off1.to_usize().ok_or_else(|| {
            ThemeError::InvalidInvariants("first exponent below its class base".into())
        })?;
        let mut phis = Vec::with_capacity(k);
        let mut phi = XiElement::cell(base.clone(), 0, q1, Rational::one(), self.precision);
        phis.push(phi.clone());
        for j in 2..=k {
            let (b2, off) = class_base(&self.pres.lambdas[j - 1]);
            debug_assert_eq!(b2, base, "exponents share one class");
            let q = off.to_usize().expect("geometric exponents are positive");
            let s = self.pres.unit_series(j - 2, phi.precision());
            let z = phi.mul_series(&s);
            let y = solve_affine(&z, &base, q, j - 2)
                .map_err(|_| ThemeError::PrecisionUncertified)?;
            // top log coefficient is rho b^q, rho = product of the b^(p_h)
            // coefficients of S_1..S_{j-1}
            let rho = y
                .row(&base, j - 1)
                .map(|r| r.coeff(q))
                .unwrap_or_else(Rational::zero);
            if rho.is_zero() {
                return Err(ThemeError::NotATheme(j - 1));
            }
            phi = y;
            phis.push(phi.clone());
        }
        let (_, span) = orbit_span(phis.last().unwrap(), k);
        if span.rank() != k || !span.basis.certified {
            return Err(ThemeError::PrecisionUncertified);
        }
        if phis.last().unwrap().log_degree(&base) != Some(k - 1) {
            return Err(ThemeError::PrecisionUncertified);
        }
        Ok(XiRealization { base, phis, span })
    }

    /// Invariants read from the presentation.
    pub fn fundamental_invariants(&self) -> FundInvariants {
        self.invariants()
    }

    /// Invariants recomputed through the realized filtration; errors with
    /// `Mismatch` when they disagree with the presentation.
    pub fn fundamental_invariants_checked(&self) -> Result<FundInvariants, ThemeError> {
        let real = self.realize_in_xi()?;
        let jh = jordan_holder(&real)?;
        let from_jh = FundInvariants::from_lambdas(&jh.exponents)?;
        let from_pres = self.invariants();
        if from_jh != from_pres {
            return Err(ThemeError::Mismatch(format!(
                "presentation gives {from_pres}, filtration gives {from_jh}"
            )));
        }
        Ok(from_pres)
    }
}

/// The unique filtration by normal subthemes, read off a realization.
#[derive(Debug, Clone)]
pub struct JHFiltration {
    pub base: Rational,
    /// Exponents `l_1..l_k` recovered from the descent valuations.
    pub exponents: Vec<Rational>,
    /// `generators[j-1]` generates `F_j`; `generators[k-1]` is the input.
    pub generators: Vec<XiElement>,
    /// Span bases of `F_1 .. F_k`.
    pub filtration: Vec<XiSpan>,
}

/// Compute the filtration by descending through log-degrees: the exponent
/// at each level is the class base plus the valuation of the top
/// coefficient, and `(a - l_j b)` applied to the top-normalized generator
/// produces the next level down.
pub fn jordan_holder(real: &XiRealization) -> Result<JHFiltration, ThemeError> {
    let base = real.base.clone();
    let k = real.phis.len();
    let mut exponents = vec![Rational::zero(); k];
    let mut generators = vec![XiElement::zero(); k];
    let mut filtration: Vec<Option<XiSpan>> = vec![None; k];
    let mut cur = real.generator().clone();
    for j in (1..=k).rev() {
        if cur.log_degree(&base) != Some(j - 1) {
            return Err(ThemeError::PrecisionUncertified);
        }
        let top = cur.row(&base, j - 1).expect("row exists").clone();
        let v = match top.valuation() {
            Valuation::Finite(v) => v,
            Valuation::AtLeastPrecision(_) => return Err(ThemeError::PrecisionUncertified),
        };
        exponents[j - 1] = &base + rat_int(v as i64);
        generators[j - 1] = cur.clone();
        let (_, span) = orbit_span(&cur, j);
        if span.rank() != j {
            return Err(ThemeError::PrecisionUncertified);
        }
        filtration[j - 1] = Some(span);
        if j > 1 {
            let unit = top.div_bpow(v).expect("valuation v");
            let unit_inv = unit.invert_unit().expect("unit");
            let normalized = cur.mul_series(&unit_inv);
            let lam = exponents[j - 1].clone();
            cur = normalized.act_a().sub(&normalized.act_b().scale(&lam));
        }
    }
    Ok(JHFiltration {
        base,
        exponents,
        generators,
        filtration: filtration.into_iter().map(|s| s.unwrap()).collect(),
    })
}

/// Extract a standard presentation from a generator of a rank-k submodule
/// of the expansion space.
///
/// The generator is top-normalized at each level so the descent reads the
/// units directly; they are rescaled to constant term 1 at the end.
pub fn extract_presentation(phi: &XiElement, k: usize) -> Result<ThemePresentation, ThemeError> {
    let base = phi
        .blocks()
        .keys()
        .next()
        .cloned()
        .ok_or(ThemeError::PrecisionUncertified)?;
    let mut lambdas = vec![Rational::zero(); k];
    let mut units_raw: Vec<BSeries> = vec![BSeries::one(1); k];
    let mut cur = phi.clone();
    for j in (1..=k).rev() {
        if cur.log_degree(&base) != Some(j - 1) {
            return Err(ThemeError::PrecisionUncertified);
        }
        let top = cur.row(&base, j - 1).expect("row exists").clone();
        let v = match top.valuation() {
            Valuation::Finite(v) => v,
            Valuation::AtLeastPrecision(_) => return Err(ThemeError::PrecisionUncertified),
        };
        lambdas[j - 1] = &base + rat_int(v as i64);
        let unit = top.div_bpow(v).expect("valuation v");
        units_raw[j - 1] = unit.clone();
        let normalized = cur.mul_series(&unit.invert_unit().expect("unit"));
        let lam = lambdas[j - 1].clone();
        cur = normalized.act_a().sub(&normalized.act_b().scale(&lam));
    }
    // relations (a - l_j b) e_j = U_{j-1} e_{j-1}; rescale constants to 1
    let units: Vec<Vec<Rational>> = units_raw[..k.saturating_sub(1)]
        .iter()
        .map(|u| {
            let c0 = u.constant();
            u.scale(&c0.recip()).coeffs().to_vec()
        })
        .collect();
    let pres = ThemePresentation::new(lambdas, units);
    pres.validate()?;
    Ok(pres)
}

// ---------------------------------------------------------------------------
// Exponent decomposition for multi-class elements
// ---------------------------------------------------------------------------

/// Per-class structure of the module generated by a multi-block element.
#[derive(Debug, Clone)]
pub struct ClassPart {
    /// Generator of the coprimitive quotient: the block projection.
    pub coprimitive_gen: XiElement,
    pub coprimitive_rank: usize,
    /// Rank of the primitive part (intersection with the block).
    pub primitive_rank: usize,
    /// Exponent of the primitive part when it has rank 1.
    pub primitive_exponent: Option<Rational>,
}

/// Exponent decomposition of a (possibly multi-class) monogenic submodule.
#[derive(Debug, Clone)]
pub struct ExpDecomposition {
    /// Classes actually met by the module, ascending.
    pub classes: Vec<Rational>,
    pub total_rank: usize,
    pub parts: BTreeMap<Rational, ClassPart>,
    /// Ranks of the partial primitive parts for class prefixes, in order.
    pub prefix_ranks: Vec<usize>,
}

/// Decompose the module generated by `phi` by exponent classes.
pub fn exp_decompose(phi: &XiElement) -> Result<ExpDecomposition, ThemeError> {
    let cap: usize = phi.blocks().values().map(|rows| rows.len()).sum();
    if cap == 0 {
        return Err(ThemeError::PrecisionUncertified);
    }
    // orbit generators until the span rank stalls
    let mut gens = vec![phi.clone()];
    let mut span = span_rank(&gens);
    while gens.len() < cap {
        let next = gens.last().unwrap().act_a();
        let mut cand = gens.clone();
        cand.push(next);
        let s2 = span_rank(&cand);
        if s2.rank() == span.rank() {
            break;
        }
        gens = cand;
        span = s2;
    }
    if !span.basis.certified {
        return Err(ThemeError::PrecisionUncertified);
    }
    let total_rank = span.rank();
    let all_classes: Vec<Rational> = phi.blocks().keys().cloned().collect();

    let mut parts = BTreeMap::new();
    let mut classes = Vec::new();
    for c in &all_classes {
        let proj = phi.project_block(c);
        let coprim_rank = if proj.is_zero() {
            0
        } else {
            let rows = proj.blocks().values().next().unwrap().len();
            let (_, s) = orbit_span(&proj, rows);
            s.rank()
        };
        if coprim_rank > 0 {
            classes.push(c.clone());
        }
        let (primitive_rank, primitive_exponent) = primitive_part(&span, &[c.clone()])?;
        parts.insert(
            c.clone(),
            ClassPart {
                coprimitive_gen: proj,
                coprimitive_rank: coprim_rank,
                primitive_rank,
                primitive_exponent,
            },
        );
    }
    let mut prefix_ranks = Vec::new();
    for j in 1..=classes.len() {
        let (r, _) = primitive_part(&span, &classes[..j])?;
        prefix_ranks.push(r);
    }
    Ok(ExpDecomposition {
        classes,
        total_rank,
        parts,
        prefix_ranks,
    })
}

/// Rank (and exponent, when rank 1) of the largest submodule supported on
/// the given classes: combinations of the span columns vanishing outside.
fn primitive_part(
    span: &XiSpan,
    keep: &[Rational],
) -> Result<(usize, Option<Rational>), ThemeError> {
    let outside: Vec<usize> = span
        .layout
        .iter()
        .enumerate()
        .filter(|(_, (b, _))| !keep.contains(b))
        .map(|(i, _)| i)
        .collect();
    if span.basis.cols.is_empty() {
        return Ok((0, None));
    }
    let sub = if outside.is_empty() {
        // nothing to kill: the whole span is supported on the kept classes
        span.basis.clone()
    } else {
        // kernel of the outside projection over the series ring
        let projected: Vec<Vec<BSeries>> = span
            .basis
            .cols
            .iter()
            .map(|col| outside.iter().map(|&i| col[i].clone()).collect())
            .collect();
        let elim = SpanBasis::compute(projected, outside.len());
        let mut members: Vec<Vec<BSeries>> = Vec::new();
        for rep in &elim.zero_reps {
            // rebuild the full element from the combination of span columns
            let mut full = vec![BSeries::zero(span.basis.precision); span.layout.len()];
            for (c, col) in rep.iter().zip(span.basis.cols.iter()) {
                for (o, s) in full.iter_mut().zip(col.iter()) {
                    *o = o.add(&c.mul(s));
                }
            }
            members.push(full);
        }
        SpanBasis::compute(members, span.layout.len())
    };
    let rank = sub.rank;
    let exponent = if rank == 1 {
        // a rank-1 part is generated at log-degree 0 of its block
        let col = &sub.cols[0];
        let mut expo = None;
        for (i, (b, j)) in span.layout.iter().enumerate() {
            if let Valuation::Finite(v) = col[i].valuation() {
                if *j == 0 && expo.is_none() {
                    expo = Some(b + rat_int(v as i64));
                }
            }
        }
        expo
    } else {
        None
    };
    Ok((rank, exponent))
}

// ---------------------------------------------------------------------------
// Bernstein extraction from an abstract module (used by the dual checks)
// ---------------------------------------------------------------------------

/// Exponent list of a monogenic module recovered independently of any
/// presentation: find the monic relation `a^k g = sum U_i a^i g`, keep the
/// initial forms of the `U_i`, and factor the resulting scalar polynomial.
///
/// The polynomial is `prod_{t<k}(x+t) - sum_i sigma_{k-i} prod_{t<i}(x+t)`
/// with `sigma_{k-i}` the `b^(k-i)` coefficient of `U_i`; its roots are
/// `l_j + j - k`, and the ordered exponent list follows by sorting.
pub fn invariants_from_generator<M: AbModule<Elem = ModElem>>(
    module: &M,
    g: &ModElem,
    k: usize,
) -> Result<Vec<Rational>, ThemeError> {
    let mut gens = Vec::with_capacity(k);
    let mut cur = g.clone();
    for _ in 0..k {
        gens.push(cur.clone());
        cur = module.act_a(&cur);
    }
    let n = g.len();
    let basis = SpanBasis::compute(gens, n);
    if basis.rank != k {
        return Err(ThemeError::PrecisionUncertified);
    }
    let coords = basis
        .coordinates(&cur)
        .ok_or(ThemeError::PrecisionUncertified)?;
    let mut poly = rising_factorial_poly(k);
    for (i, u) in coords.iter().enumerate() {
        let sigma = u.coeff(k - i);
        if sigma.is_zero() {
            continue;
        }
        let term = rising_factorial_poly(i);
        for (d, c) in term.iter().enumerate() {
            poly[d] -= &sigma * c;
        }
    }
    let mut roots = rational_roots(&poly);
    if roots.len() != k {
        return Err(ThemeError::PrecisionUncertified);
    }
    roots.sort();
    let lambdas: Vec<Rational> = roots
        .into_iter()
        .enumerate()
        .map(|(idx, r)| r + rat_int(k as i64) - rat_int(idx as i64 + 1))
        .collect();
    Ok(lambdas)
}

/// `prod_{t=0}^{n-1} (x + t)` as ascending coefficients (degree n).
fn rising_factorial_poly(n: usize) -> Vec<Rational> {
    let mut poly = vec![Rational::one()];
    for t in 0..n {
        let mut next = vec![Rational::zero(); poly.len() + 1];
        for (d, c) in poly.iter().enumerate() {
            next[d + 1] += c;
            next[d] += c * rat_int(t as i64);
        }
        poly = next;
    }
    poly
}

/// All rational roots (with multiplicity) of a rational polynomial.
fn rational_roots(poly: &[Rational]) -> Vec<Rational> {
    let mut den = BigInt::one();
    for c in poly {
        den = num_integer::lcm(den, c.denom().clone());
    }
    let ints: Vec<BigInt> = poly
        .iter()
        .map(|c| (c * Rational::from_integer(den.clone())).to_integer())
        .collect();
    let mut work: Vec<BigInt> = ints;
    let mut roots = Vec::new();
    loop {
        while work.last().map(|c| c.is_zero()).unwrap_or(false) {
            work.pop();
        }
        if work.len() <= 1 {
            break;
        }
        if work[0].is_zero() {
            roots.push(Rational::zero());
            work.remove(0);
            continue;
        }
        let a0 = work[0].clone();
        let alead = work.last().unwrap().clone();
        let mut found = None;
        'outer: for p in divisors(&a0) {
            for q in divisors(&alead) {
                for sign in [1i64, -1] {
                    let cand = Rational::new(p.clone() * BigInt::from(sign), q.clone());
                    if eval_int_poly(&work, &cand).is_zero() {
                        found = Some(cand);
                        break 'outer;
                    }
                }
            }
        }
        match found {
            Some(r) => {
                work = synthetic_divide(&work, &r);
                roots.push(r);
            }
            None => break,
        }
    }
    roots
}

fn divisors(n: &BigInt) -> Vec<BigInt> {
    let n = n.abs();
    let mut out = Vec::new();
    let mut d = BigInt::one();
    while &d * &d <= n {
        if (&n % &d).is_zero() {
            out.push(d.clone());
            out.push(&n / &d);
        }
        d += BigInt::one();
    }
    out.sort();
    out.dedup();
    out
}

fn eval_int_poly(ints: &[BigInt], x: &Rational) -> Rational {
    let mut acc = Rational::zero();
    for c in ints.iter().rev() {
        acc = acc * x + Rational::from_integer(c.clone());
    }
    acc
}

/// Divide an integer polynomial by `(x - r)`, clearing denominators again.
fn synthetic_divide(ints: &[BigInt], r: &Rational) -> Vec<BigInt> {
    let n = ints.len();
    let mut quot = vec![Rational::zero(); n - 1];
    let mut carry = Rational::zero();
    for d in (1..n).rev() {
        let c = Rational::from_integer(ints[d].clone()) + carry;
        quot[d - 1] = c.clone();
        carry = c * r;
    }
    let mut den = BigInt::one();
    for c in &quot {
        den = num_integer::lcm(den, c.denom().clone());
    }
    quot.iter()
        .map(|c| (c * Rational::from_integer(den.clone())).to_integer())
        .collect()
}

/// Check that a realized generator is annihilated by its chain, up to the
/// precision eaten by the chain application.
pub fn chain_annihilates(module: &ThemeModule, real: &XiRealization) -> bool {
    let chain = module.chain();
    let img = chain.apply(&crate::xi::XiSpace, real.generator());
    let margin_prec = real
        .generator()
        .precision()
        .saturating_sub(module.rank() + 1);
    img.truncated(margin_prec.max(1)).is_zero()
}

/// Membership of the log-lowered generator in the module span: the exact
/// monodromy-invariance test.
pub fn f_shift_membership(real: &XiRealization) -> Membership {
    let shifted = real.generator().f_shift_all();
    real.span.membership(&shifted)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::series::rat;

    pub fn pres(lams: &[(i64, i64)], units: &[&[(i64, i64)]]) -> ThemePresentation {
        ThemePresentation::new(
            lams.iter().map(|&(n, d)| rat(n, d)).collect(),
            units
                .iter()
                .map(|u| u.iter().map(|&(n, d)| rat(n, d)).collect())
                .collect(),
        )
    }

    /// The rank-3 family with exponents 5/2 and slots
    /// `S_1 = 1 + beta b + gamma b^2`, `S_2 = 1 + alpha b`.
    pub fn rank3_module(alpha: i64, beta: i64, gamma: i64) -> ThemeModule {
        let p = pres(
            &[(5, 2), (5, 2), (5, 2)],
            &[&[(1, 1), (beta, 1), (gamma, 1)], &[(1, 1), (alpha, 1)]],
        );
        ThemeModule::from_presentation(p, 20).unwrap()
    }
}
