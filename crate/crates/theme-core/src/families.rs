//! Standard families of themes over rational parameter grids: the
//! parameter-space description derived from the supplementary exponents,
//! point evaluation, and stratification by stability and isomorphism
//! collapse.
//!
//! Slots are named `S<j>.b^<e>`: the constant slot of each unit is fixed
//! to 1, the gap slot `b^(p_j)` is constrained nonzero, the remaining
//! supplementary exponents are free. Grids may carry extra axes with
//! plain identifier names; those feed the optional parametrized
//! expansion-element scan only.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};

use crate::homs::{end_dimension, is_stable, HomError};
use crate::normalform::{
    canonical_form, full_rank_morphism, rank2_invariant, vj_basis, NormError, UStatus,
};
use crate::series::{parse_rational, rational_to_string, BSeries, Rational};
use crate::theme::{
    default_precision, FundInvariants, ThemeError, ThemeModule, ThemePresentation,
};
use crate::xi::{span_rank, XiElement};

/// Errors from family construction and scans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FamilyError {
    /// A nonzero-constrained slot was left empty or set to zero.
    ConstraintViolation(String),
    /// A point assigns a name that is not a slot of the family.
    UnknownSlot(String),
    /// A parametrized coefficient failed to parse or evaluate.
    BadExpression(String),
    /// Per-point invariants or Bernstein data failed to stay constant.
    NotConstant(String),
    Theme(ThemeError),
    Hom(HomError),
    Norm(NormError),
}

impl fmt::Display for FamilyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyError::ConstraintViolation(s) => {
                write!(f, "constraint violation: slot {s} must be nonzero")
            }
            FamilyError::UnknownSlot(s) => write!(f, "unknown slot: {s}"),
            FamilyError::BadExpression(s) => write!(f, "bad expression: {s}"),
            FamilyError::NotConstant(s) => write!(f, "family datum not constant: {s}"),
            FamilyError::Theme(e) => write!(f, "{e}"),
            FamilyError::Hom(e) => write!(f, "{e}"),
            FamilyError::Norm(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for FamilyError {}

impl From<ThemeError> for FamilyError {
    fn from(e: ThemeError) -> Self {
        FamilyError::Theme(e)
    }
}

impl From<HomError> for FamilyError {
    fn from(e: HomError) -> Self {
        FamilyError::Hom(e)
    }
}

impl From<NormError> for FamilyError {
    fn from(e: NormError) -> Self {
        FamilyError::Norm(e)
    }
}

/// Kind of a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    /// Constant term, always 1.
    FixedOne,
    /// The gap-exponent coefficient, constrained nonzero.
    NonZero,
    Free,
}

/// One coefficient slot `S<j>.b^<exponent>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSpec {
    pub j: usize,
    pub exponent: usize,
    pub kind: SlotKind,
}

impl SlotSpec {
    pub fn name(&self) -> String {
        format!("S{}.b^{}", self.j, self.exponent)
    }
}

/// The affine parameter space of canonical presentations for fixed
/// fundamental invariants.
#[derive(Debug, Clone)]
pub struct FamilySpace {
    pub invariants: FundInvariants,
    pub slots: Vec<SlotSpec>,
    /// Number of non-fixed slots.
    pub dimension: usize,
}

/// Describe the parameter box of the standard family.
pub fn family_space(inv: &FundInvariants) -> Result<FamilySpace, FamilyError> {
    inv.validate()?;
    let k = inv.rank();
    let mut slots = Vec::new();
    for j in 1..k {
        let vj = vj_basis(inv, j);
        for &e in &vj.exponents {
            let kind = if e == 0 {
                SlotKind::FixedOne
            } else if e == inv.p[j - 1] {
                SlotKind::NonZero
            } else {
                SlotKind::Free
            };
            slots.push(SlotSpec { j, exponent: e, kind });
        }
    }
    let dimension = slots
        .iter()
        .filter(|s| s.kind != SlotKind::FixedOne)
        .count();
    Ok(FamilySpace {
        invariants: inv.clone(),
        slots,
        dimension,
    })
}

/// A rational assignment to slots (and possibly free scan parameters).
pub type PointAssignment = BTreeMap<String, Rational>;

/// Evaluate a family point to its theme.
pub fn family_evaluate(
    space: &FamilySpace,
    point: &PointAssignment,
    precision: Option<usize>,
) -> Result<ThemeModule, FamilyError> {
    let inv = &space.invariants;
    let k = inv.rank();
    let mut units: Vec<Vec<Rational>> = Vec::with_capacity(k.saturating_sub(1));
    for j in 1..k {
        let max_e = space
            .slots
            .iter()
            .filter(|s| s.j == j)
            .map(|s| s.exponent)
            .max()
            .unwrap_or(0);
        let mut coeffs = vec![Rational::zero(); max_e + 1];
        for slot in space.slots.iter().filter(|s| s.j == j) {
            let name = slot.name();
            let val = point.get(&name);
            match slot.kind {
                SlotKind::FixedOne => {
                    if let Some(v) = val {
                        if !v.is_one() {
                            return Err(FamilyError::ConstraintViolation(name));
                        }
                    }
                    coeffs[slot.exponent] = Rational::one();
                }
                SlotKind::NonZero => match val {
                    Some(v) if !v.is_zero() => coeffs[slot.exponent] = v.clone(),
                    _ => return Err(FamilyError::ConstraintViolation(name)),
                },
                SlotKind::Free => {
                    coeffs[slot.exponent] = val.cloned().unwrap_or_else(Rational::zero);
                }
            }
        }
        units.push(coeffs);
    }
    let pres = ThemePresentation::new(inv.lambdas(), units);
    let prec = precision.unwrap_or_else(|| default_precision(inv));
    Ok(ThemeModule::from_presentation(pres, prec)?)
}

/// One axis of a finite rational grid.
#[derive(Debug, Clone)]
pub struct GridAxis {
    pub name: String,
    pub values: Vec<Rational>,
}

/// Finite rational grid: the cartesian product of its axes, enumerated
/// row-major in axis order.
#[derive(Debug, Clone, Default)]
pub struct Grid {
    pub axes: Vec<GridAxis>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, mut index: usize) -> PointAssignment {
        let mut out = BTreeMap::new();
        for axis in self.axes.iter().rev() {
            let n = axis.values.len();
            out.insert(axis.name.clone(), axis.values[index % n].clone());
            index /= n;
        }
        out
    }
}

/// A parametrized expansion element: per block, rows of coefficient
/// expressions in the grid parameters (index = b-power).
#[derive(Debug, Clone)]
pub struct ParamXi {
    pub blocks: Vec<(Rational, Vec<Vec<String>>)>,
}

impl ParamXi {
    pub fn evaluate(
        &self,
        env: &PointAssignment,
        precision: usize,
    ) -> Result<XiElement, FamilyError> {
        let mut out = XiElement::zero();
        for (base, rows) in &self.blocks {
            let mut series_rows = Vec::with_capacity(rows.len());
            for row in rows {
                let mut coeffs = vec![Rational::zero(); precision];
                for (m, expr) in row.iter().enumerate() {
                    if m < precision {
                        coeffs[m] = eval_expression(expr, env)?;
                    }
                }
                series_rows.push(BSeries::from_coeffs(coeffs));
            }
            if !series_rows.is_empty() {
                out = out.add(&XiElement::from_rows(base.clone(), series_rows));
            }
        }
        Ok(out)
    }
}

/// Per-point scan results.
#[derive(Debug, Clone)]
pub struct PointReport {
    pub index: usize,
    pub sigma: PointAssignment,
    pub stable: bool,
    pub end_dim: usize,
    pub canonical: ThemePresentation,
    pub canonical_status: UStatus,
    pub iso_class: usize,
    pub rank2_invariant: Option<Rational>,
    /// Pullback witness against the canonical representative, when the
    /// point collapsed onto it: coefficients of `e_2` and `e_1`.
    pub collapse_witness: Option<(BSeries, BSeries)>,
    /// Rank of the parametrized expansion element at this point.
    pub xi_rank: Option<usize>,
}

/// Scan summary.
#[derive(Debug, Clone)]
pub struct StratReport {
    pub invariants: FundInvariants,
    pub bernstein_roots: Vec<Rational>,
    pub points: Vec<PointReport>,
    /// Isomorphism classes as sorted point-index lists.
    pub classes: Vec<Vec<usize>>,
    pub stable_stratum: Vec<usize>,
    /// Rank strata of the parametrized element, when one was supplied.
    pub xi_rank_strata: Option<BTreeMap<usize, Vec<usize>>>,
}

/// Evaluate the family over the grid: stability, canonical form and
/// isomorphism class per point; invariants and Bernstein data are
/// recomputed through each realization and must stay constant.
pub fn family_scan(
    space: &FamilySpace,
    grid: &Grid,
    xi_param: Option<&ParamXi>,
    precision: Option<usize>,
) -> Result<StratReport, FamilyError> {
    let inv = &space.invariants;
    let expected_roots = {
        let probe = ThemeModule::from_presentation(
            ThemePresentation::new(
                inv.lambdas(),
                (1..inv.rank())
                    .map(|j| {
                        // any admissible probe works for the root list
                        let mut c = vec![Rational::zero(); inv.p[j - 1] + 1];
                        c[0] = Rational::one();
                        c[inv.p[j - 1]] = Rational::one();
                        c
                    })
                    .collect(),
            ),
            8,
        )?;
        probe.bernstein().1.roots
    };
    let slot_names: std::collections::BTreeSet<String> =
        space.slots.iter().map(|s| s.name()).collect();
    let n = grid.len();
    let mut points = Vec::with_capacity(n);
    let mut modules = Vec::with_capacity(n);
    for index in 0..n {
        let sigma = grid.point(index);
        let slot_part: PointAssignment = sigma
            .iter()
            .filter(|(k, _)| slot_names.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for key in sigma.keys() {
            if !slot_names.contains(key) && xi_param.is_none() {
                return Err(FamilyError::UnknownSlot(key.clone()));
            }
        }
        let module = family_evaluate(space, &slot_part, precision)?;
        // every point must be a theme with the family's invariants
        let inv_checked = module.fundamental_invariants_checked()?;
        if &inv_checked != inv {
            return Err(FamilyError::NotConstant(format!(
                "invariants at point {index}"
            )));
        }
        let roots = module.bernstein().1.roots;
        if roots != expected_roots {
            return Err(FamilyError::NotConstant(format!(
                "Bernstein roots at point {index}"
            )));
        }
        let stability = is_stable(&module)?;
        let end = end_dimension(&module)?;
        let can = canonical_form(&module)?;
        let r2 = if module.rank() >= 2 {
            Some(rank2_invariant(&module)?)
        } else {
            None
        };
        let xi_rank = match xi_param {
            Some(p) => {
                let prec = precision.unwrap_or_else(|| default_precision(inv));
                let elem = p.evaluate(&sigma, prec)?;
                Some(xi_orbit_rank(&elem))
            }
            None => None,
        };
        points.push(PointReport {
            index,
            sigma,
            stable: stability.stable,
            end_dim: end.dim,
            canonical: can.presentation.clone(),
            canonical_status: can.status,
            iso_class: usize::MAX,
            rank2_invariant: r2,
            collapse_witness: None,
            xi_rank,
        });
        modules.push((module, can));
    }

    // isomorphism classes: canonical forms collapse identical points for
    // free; pairwise morphism search settles the rest
    let mut uf: Vec<usize> = (0..n).collect();
    fn find(uf: &mut Vec<usize>, i: usize) -> usize {
        if uf[i] != i {
            let r = find(uf, uf[i]);
            uf[i] = r;
        }
        uf[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if find(&mut uf, i) == find(&mut uf, j) {
                continue;
            }
            let same_canon = modules[i].1.presentation == modules[j].1.presentation;
            let both_unique = modules[i].1.status == UStatus::Unique
                && modules[j].1.status == UStatus::Unique;
            let iso = if same_canon {
                true
            } else if both_unique {
                false
            } else {
                crate::normalform::iso_test(&modules[i].0, &modules[j].0)?.isomorphic
            };
            if iso {
                let (ri, rj) = (find(&mut uf, i), find(&mut uf, j));
                uf[rj] = ri;
            }
        }
    }
    let mut class_ids: BTreeMap<usize, usize> = BTreeMap::new();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let r = find(&mut uf, i);
        let id = *class_ids.entry(r).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        points[i].iso_class = id;
        classes[id].push(i);
    }

    // collapse witnesses: points whose canonical form differs from their
    // raw unit data were moved by the reduction; emit the morphism from
    // the canonical representative and check it
    for i in 0..n {
        let (module, can) = &modules[i];
        if can.status != UStatus::RepresentativeOnly || module.rank() < 2 {
            continue;
        }
        if &can.presentation == module.presentation() {
            continue;
        }
        let rep = ThemeModule::from_presentation(can.presentation.clone(), module.precision())?;
        let k = module.rank();
        if k < 3 {
            continue;
        }
        if let Some(w) = full_rank_morphism(&rep, module)? {
            let c = w[k - 1].constant();
            if c.is_zero() {
                return Err(FamilyError::Norm(NormError::PrecisionUncertified));
            }
            let inv_c = c.recip();
            let u = w[k - 2].scale(&inv_c);
            let v = w[k - 3].scale(&inv_c);
            points[i].collapse_witness = Some((u, v));
        }
    }

    let stable_stratum: Vec<usize> = points.iter().filter(|p| p.stable).map(|p| p.index).collect();
    let xi_rank_strata = xi_param.map(|_| {
        let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for p in &points {
            if let Some(r) = p.xi_rank {
                strata.entry(r).or_default().push(p.index);
            }
        }
        strata
    });
    Ok(StratReport {
        invariants: inv.clone(),
        bernstein_roots: expected_roots,
        points,
        classes,
        stable_stratum,
        xi_rank_strata,
    })
}

/// Rank of the module generated by an expansion element.
fn xi_orbit_rank(elem: &XiElement) -> usize {
    if elem.is_zero() {
        return 0;
    }
    let cap: usize = elem.blocks().values().map(|r| r.len()).sum();
    let mut gens = vec![elem.clone()];
    let mut rank = span_rank(&gens).rank();
    while gens.len() < cap {
        let next = gens.last().unwrap().act_a();
        gens.push(next);
        let r2 = span_rank(&gens).rank();
        if r2 == rank {
            break;
        }
        rank = r2;
    }
    rank
}

// ---------------------------------------------------------------------------
// Tiny rational-expression evaluator for parametrized coefficients
// ---------------------------------------------------------------------------

/// Evaluate an arithmetic expression over the rationals with named
/// parameters. Identifiers may contain the slot punctuation `.` and `^`.
pub fn eval_expression(text: &str, env: &PointAssignment) -> Result<Rational, FamilyError> {
    let mut p = ExprParser {
        bytes: text.as_bytes(),
        pos: 0,
        text,
        env,
    };
    let v = p.sum()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(FamilyError::BadExpression(format!(
            "trailing input in {text:?}"
        )));
    }
    Ok(v)
}

struct ExprParser<'a> {
    bytes: &'a [u8],
    pos: usize,
    text: &'a str,
    env: &'a PointAssignment,
}

impl ExprParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && (self.bytes[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.bytes.get(self.pos).map(|&b| b as char)
    }

    fn sum(&mut self) -> Result<Rational, FamilyError> {
        let mut acc = self.product()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    acc += self.product()?;
                }
                Some('-') => {
                    self.pos += 1;
                    acc -= self.product()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn product(&mut self) -> Result<Rational, FamilyError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    acc *= self.unary()?;
                }
                Some('/') => {
                    self.pos += 1;
                    let d = self.unary()?;
                    if d.is_zero() {
                        return Err(FamilyError::BadExpression(format!(
                            "division by zero in {:?}",
                            self.text
                        )));
                    }
                    acc /= d;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Rational, FamilyError> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some('(') => {
                self.pos += 1;
                let v = self.sum()?;
                if self.peek() != Some(')') {
                    return Err(FamilyError::BadExpression(format!(
                        "missing ')' in {:?}",
                        self.text
                    )));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self
                    .bytes
                    .get(self.pos)
                    .map(|&b| b.is_ascii_digit())
                    .unwrap_or(false)
                {
                    self.pos += 1;
                }
                let lit = &self.text[start..self.pos];
                parse_rational(lit)
                    .map_err(|_| FamilyError::BadExpression(format!("bad number {lit:?}")))
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.pos;
                while self
                    .bytes
                    .get(self.pos)
                    .map(|&b| {
                        let ch = b as char;
                        ch.is_ascii_alphanumeric() || ch == '_' || ch == '.' || ch == '^'
                    })
                    .unwrap_or(false)
                {
                    self.pos += 1;
                }
                let name = &self.text[start..self.pos];
                self.env.get(name).cloned().ok_or_else(|| {
                    FamilyError::BadExpression(format!("unknown parameter {name:?}"))
                })
            }
            _ => Err(FamilyError::BadExpression(format!(
                "unexpected input in {:?} at {}",
                self.text, self.pos
            ))),
        }
    }
}

/// Render a point assignment deterministically (for report keys).
pub fn sigma_to_string(sigma: &PointAssignment) -> String {
    sigma
        .iter()
        .map(|(k, v)| format!("{k}={}", rational_to_string(v)))
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{rat, rat_int};

    fn inv(l: (i64, i64), p: &[usize]) -> FundInvariants {
        FundInvariants {
            lambda1: rat(l.0, l.1),
            p: p.to_vec(),
        }
    }

    #[test]
    fn space_examples() {
        // rank 3, gaps (1,1): three parameters
        let s = family_space(&inv((5, 2), &[1, 1])).unwrap();
        assert_eq!(s.dimension, 3);
        let names: Vec<String> = s.slots.iter().map(|x| x.name()).collect();
        assert!(names.contains(&"S1.b^1".to_string()));
        assert!(names.contains(&"S1.b^2".to_string()));
        assert!(names.contains(&"S2.b^1".to_string()));
        // rank 2, gap 0: a single point
        let s0 = family_space(&inv((5, 2), &[0])).unwrap();
        assert_eq!(s0.dimension, 0);
        // rank 2, gap 1: one nonzero parameter
        let s1 = family_space(&inv((2, 1), &[1])).unwrap();
        assert_eq!(s1.dimension, 1);
        assert_eq!(s1.slots[1].kind, SlotKind::NonZero);
    }

    #[test]
    fn evaluate_points() {
        let s = family_space(&inv((2, 1), &[1])).unwrap();
        let mut pt = PointAssignment::new();
        pt.insert("S1.b^1".into(), rat_int(3));
        let m = family_evaluate(&s, &pt, None).unwrap();
        assert_eq!(m.presentation().units[0], vec![rat_int(1), rat_int(3)]);
        // missing nonzero slot
        let bad = family_evaluate(&s, &PointAssignment::new(), None);
        assert!(matches!(bad, Err(FamilyError::ConstraintViolation(ref n)) if n == "S1.b^1"));
        // rank-3 substitution
        let s3 = family_space(&inv((5, 2), &[1, 1])).unwrap();
        let mut p3 = PointAssignment::new();
        p3.insert("S1.b^1".into(), rat_int(1));
        p3.insert("S1.b^2".into(), rat_int(1));
        p3.insert("S2.b^1".into(), rat_int(2));
        let m3 = family_evaluate(&s3, &p3, None).unwrap();
        assert_eq!(
            m3.presentation().units[0],
            vec![rat_int(1), rat_int(1), rat_int(1)]
        );
        assert_eq!(m3.presentation().units[1], vec![rat_int(1), rat_int(2)]);
        // zero in a nonzero slot
        p3.insert("S1.b^1".into(), rat_int(0));
        assert!(matches!(
            family_evaluate(&s3, &p3, None),
            Err(FamilyError::ConstraintViolation(ref n)) if n == "S1.b^1"
        ));
    }

    #[test]
    fn rank2_scan_all_stable_distinct() {
        let s = family_space(&inv((2, 1), &[1])).unwrap();
        let grid = Grid {
            axes: vec![GridAxis {
                name: "S1.b^1".into(),
                values: vec![rat_int(1), rat_int(2), rat_int(3)],
            }],
        };
        let rep = family_scan(&s, &grid, None, None).unwrap();
        assert_eq!(rep.points.len(), 3);
        assert!(rep.points.iter().all(|p| p.stable));
        assert_eq!(rep.classes.len(), 3);
    }

    #[test]
    fn rank3_scan_stratification() {
        let s = family_space(&inv((5, 2), &[1, 1])).unwrap();
        let grid = Grid {
            axes: vec![
                GridAxis {
                    name: "S2.b^1".into(), // alpha
                    values: vec![rat_int(1), rat_int(2)],
                },
                GridAxis {
                    name: "S1.b^1".into(), // beta
                    values: vec![rat_int(1), rat_int(2)],
                },
                GridAxis {
                    name: "S1.b^2".into(), // gamma
                    values: vec![rat_int(0), rat_int(1)],
                },
            ],
        };
        let rep = family_scan(&s, &grid, None, None).unwrap();
        assert_eq!(rep.points.len(), 8);
        // stable exactly when alpha == beta
        for p in &rep.points {
            let alpha = &p.sigma["S2.b^1"];
            let beta = &p.sigma["S1.b^1"];
            assert_eq!(p.stable, alpha == beta, "at {}", sigma_to_string(&p.sigma));
        }
        // gamma collapses off the diagonal: 4 stable classes + 2 collapsed
        assert_eq!(rep.classes.len(), 6);
        // each unstable point carries a collapse witness or is canonical
        for p in rep.points.iter().filter(|p| !p.stable) {
            let gamma = &p.sigma["S1.b^2"];
            if !gamma.is_zero() {
                let (u, _v) = p.collapse_witness.as_ref().expect("collapsed point");
                let alpha = &p.sigma["S2.b^1"];
                let beta = &p.sigma["S1.b^1"];
                // U = (gamma - 0)/(alpha - beta)
                assert_eq!(u.coeff(0), gamma / (alpha - beta));
            }
        }
    }

    #[test]
    fn xi_rank_strata() {
        let s = family_space(&inv((5, 2), &[1])).unwrap();
        let grid = Grid {
            axes: vec![
                GridAxis {
                    name: "S1.b^1".into(),
                    values: vec![rat_int(1)],
                },
                GridAxis {
                    name: "z".into(),
                    values: vec![rat_int(0), rat_int(1), rat_int(2)],
                },
            ],
        };
        let param = ParamXi {
            blocks: vec![(
                rat(1, 2),
                vec![vec!["0".into(), "1".into()], vec!["z".into()]],
            )],
        };
        let rep = family_scan(&s, &grid, Some(&param), None).unwrap();
        let strata = rep.xi_rank_strata.unwrap();
        // z = 0: rank 1; z != 0: rank 2
        assert_eq!(strata[&1], vec![0]);
        assert_eq!(strata[&2], vec![1, 2]);
    }

    #[test]
    fn rank4_appendix_dichotomy() {
        // gaps (2,3,2) against 7/2; the eps slot flips the endomorphism
        // dimension between 3 and 4 across eps = 1 and eps = -2 (alpha = 2)
        let inv4 = inv((7, 2), &[2, 3, 2]);
        let s = family_space(&inv4).unwrap();
        let grid = Grid {
            axes: vec![
                GridAxis {
                    name: "S1.b^2".into(), // eps
                    values: vec![rat_int(1), rat_int(-2)],
                },
                GridAxis {
                    name: "S2.b^1".into(), // beta
                    values: vec![rat_int(1)],
                },
                GridAxis {
                    name: "S2.b^3".into(), // gamma
                    values: vec![rat_int(1)],
                },
                GridAxis {
                    name: "S3.b^2".into(), // alpha
                    values: vec![rat_int(2)],
                },
            ],
        };
        let rep = family_scan(&s, &grid, None, None).unwrap();
        assert_eq!(rep.points.len(), 2);
        let by_eps = |v: i64| {
            rep.points
                .iter()
                .find(|p| p.sigma["S1.b^2"] == rat_int(v))
                .unwrap()
        };
        assert_eq!(by_eps(1).end_dim, 3);
        assert!(!by_eps(1).stable);
        assert_eq!(by_eps(-2).end_dim, 4);
        assert!(by_eps(-2).stable);
        assert_eq!(rep.classes.len(), 2);
    }

    #[test]
    fn expression_evaluator() {
        let mut env = PointAssignment::new();
        env.insert("alpha".into(), rat_int(3));
        env.insert("S1.b^1".into(), rat(1, 2));
        assert_eq!(
            eval_expression("2*alpha + 1", &env).unwrap(),
            rat_int(7)
        );
        assert_eq!(
            eval_expression("S1.b^1 * 4 - 1", &env).unwrap(),
            rat_int(1)
        );
        assert_eq!(eval_expression("-(1/2)", &env).unwrap(), rat(-1, 2));
        assert!(eval_expression("missing", &env).is_err());
        assert!(eval_expression("1/0", &env).is_err());
    }
}
