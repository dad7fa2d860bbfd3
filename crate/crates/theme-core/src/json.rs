//! JSON forms of the core data types, shared by the command-line tool.
//!
//! All rationals travel as exact strings (`"3/2"`, `"-1"`); key order is
//! deterministic, so identical inputs serialize byte-identically.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{json, Map, Value};

use crate::families::{Grid, GridAxis, ParamXi, PointAssignment};
use crate::series::{parse_rational, rational_to_string, BSeries, Rational};
use crate::theme::{FundInvariants, ThemePresentation};
use crate::xi::XiElement;

/// Errors from JSON decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JsonError(pub String);

impl fmt::Display for JsonError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid input: {}", self.0)
    }
}

impl std::error::Error for JsonError {}

fn err(msg: impl Into<String>) -> JsonError {
    JsonError(msg.into())
}

fn as_obj<'v>(v: &'v Value, what: &str) -> Result<&'v Map<String, Value>, JsonError> {
    v.as_object().ok_or_else(|| err(format!("{what}: expected an object")))
}

fn as_arr<'v>(v: &'v Value, what: &str) -> Result<&'v [Value], JsonError> {
    v.as_array()
        .map(|a| a.as_slice())
        .ok_or_else(|| err(format!("{what}: expected an array")))
}

fn as_str<'v>(v: &'v Value, what: &str) -> Result<&'v str, JsonError> {
    v.as_str().ok_or_else(|| err(format!("{what}: expected a string")))
}

fn rational_field(v: &Value, what: &str) -> Result<Rational, JsonError> {
    let s = as_str(v, what)?;
    parse_rational(s).map_err(|e| err(format!("{what}: {e}")))
}

fn rationals(v: &Value, what: &str) -> Result<Vec<Rational>, JsonError> {
    as_arr(v, what)?
        .iter()
        .map(|x| rational_field(x, what))
        .collect()
}

fn rational_strings(rs: &[Rational]) -> Value {
    Value::Array(rs.iter().map(|r| Value::String(rational_to_string(r))).collect())
}

// ---------------------------------------------------------------------------
// Series
// ---------------------------------------------------------------------------

/// `{"coeffs": ["1","3/2",...], "precision": M}`
pub fn series_to_json(s: &BSeries) -> Value {
    json!({
        "coeffs": rational_strings(s.coeffs()),
        "precision": s.precision(),
    })
}

pub fn series_from_json(v: &Value) -> Result<BSeries, JsonError> {
    let obj = as_obj(v, "series")?;
    let coeffs = rationals(
        obj.get("coeffs").ok_or_else(|| err("series: missing coeffs"))?,
        "series.coeffs",
    )?;
    let precision = obj
        .get("precision")
        .and_then(|p| p.as_u64())
        .map(|p| p as usize)
        .unwrap_or(coeffs.len().max(1));
    if precision == 0 {
        return Err(err("series: precision must be >= 1"));
    }
    Ok(BSeries::from_coeffs_at(coeffs, precision))
}

// ---------------------------------------------------------------------------
// Presentations and invariants
// ---------------------------------------------------------------------------

/// `{"lambda": ["5/2",...], "S": [["1","2"],...], "precision": M}`
pub fn presentation_to_json(p: &ThemePresentation, precision: usize) -> Value {
    json!({
        "lambda": rational_strings(&p.lambdas),
        "S": Value::Array(p.units.iter().map(|u| rational_strings(u)).collect()),
        "precision": precision,
    })
}

pub fn presentation_from_json(v: &Value) -> Result<(ThemePresentation, Option<usize>), JsonError> {
    let obj = as_obj(v, "presentation")?;
    let lambdas = rationals(
        obj.get("lambda").ok_or_else(|| err("presentation: missing lambda"))?,
        "presentation.lambda",
    )?;
    let units = match obj.get("S") {
        Some(sv) => as_arr(sv, "presentation.S")?
            .iter()
            .map(|u| rationals(u, "presentation.S"))
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    let precision = obj.get("precision").and_then(|p| p.as_u64()).map(|p| p as usize);
    Ok((ThemePresentation::new(lambdas, units), precision))
}

/// `{"lambda1": "5/2", "p": [1,1]}`
pub fn invariants_to_json(inv: &FundInvariants) -> Value {
    json!({
        "lambda1": rational_to_string(&inv.lambda1),
        "p": inv.p,
    })
}

pub fn invariants_from_json(v: &Value) -> Result<FundInvariants, JsonError> {
    let obj = as_obj(v, "invariants")?;
    let lambda1 = rational_field(
        obj.get("lambda1").ok_or_else(|| err("invariants: missing lambda1"))?,
        "invariants.lambda1",
    )?;
    let p = match obj.get("p") {
        Some(pv) => as_arr(pv, "invariants.p")?
            .iter()
            .map(|x| {
                x.as_u64()
                    .map(|n| n as usize)
                    .ok_or_else(|| err("invariants.p: expected nonnegative integers"))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => Vec::new(),
    };
    Ok(FundInvariants { lambda1, p })
}

// ---------------------------------------------------------------------------
// Expansion elements
// ---------------------------------------------------------------------------

/// `{"blocks": {"1/2": {"N": 2, "M": 12, "c": [[...],[...],[...]]}}}`
/// where `c[j]` lists the coefficients of `b^m e_{base,j}`.
pub fn xi_to_json(x: &XiElement) -> Value {
    let mut blocks = Map::new();
    for (base, rows) in x.blocks() {
        let m = rows.iter().map(|r| r.precision()).min().unwrap_or(1);
        blocks.insert(
            rational_to_string(base),
            json!({
                "N": rows.len().saturating_sub(1),
                "M": m,
                "c": Value::Array(rows.iter().map(|r| rational_strings(r.coeffs())).collect()),
            }),
        );
    }
    json!({ "blocks": Value::Object(blocks) })
}

pub fn xi_from_json(v: &Value) -> Result<XiElement, JsonError> {
    let obj = as_obj(v, "xi element")?;
    let blocks = as_obj(
        obj.get("blocks").ok_or_else(|| err("xi element: missing blocks"))?,
        "xi element.blocks",
    )?;
    let mut out = XiElement::zero();
    for (key, bv) in blocks {
        let base = parse_rational(key).map_err(|e| err(format!("block key {key:?}: {e}")))?;
        let bobj = as_obj(bv, "xi block")?;
        let m = bobj
            .get("M")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| err("xi block: missing M"))? as usize;
        if m == 0 {
            return Err(err("xi block: M must be >= 1"));
        }
        let rows_v = as_arr(
            bobj.get("c").ok_or_else(|| err("xi block: missing c"))?,
            "xi block.c",
        )?;
        if let Some(n) = bobj.get("N").and_then(|x| x.as_u64()) {
            if rows_v.len() != (n as usize) + 1 {
                return Err(err(format!(
                    "xi block {key}: N = {n} but c has {} rows",
                    rows_v.len()
                )));
            }
        }
        let mut rows = Vec::with_capacity(rows_v.len());
        for row in rows_v {
            let coeffs = rationals(row, "xi block row")?;
            rows.push(BSeries::from_coeffs_at(coeffs, m));
        }
        if rows.is_empty() {
            return Err(err(format!("xi block {key}: empty row list")));
        }
        out = out.add(&XiElement::from_rows(base, rows));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Grids, points, parametrized elements
// ---------------------------------------------------------------------------

/// `{"axes": [{"name": "S1.b^1", "values": ["1","2"]}]}`
pub fn grid_from_json(v: &Value) -> Result<Grid, JsonError> {
    let obj = as_obj(v, "grid")?;
    let axes_v = as_arr(
        obj.get("axes").ok_or_else(|| err("grid: missing axes"))?,
        "grid.axes",
    )?;
    let mut axes = Vec::with_capacity(axes_v.len());
    for av in axes_v {
        let aobj = as_obj(av, "grid axis")?;
        let name = as_str(
            aobj.get("name").ok_or_else(|| err("grid axis: missing name"))?,
            "grid axis.name",
        )?
        .to_string();
        let values = rationals(
            aobj.get("values").ok_or_else(|| err("grid axis: missing values"))?,
            "grid axis.values",
        )?;
        if values.is_empty() {
            return Err(err(format!("grid axis {name}: empty value list")));
        }
        axes.push(GridAxis { name, values });
    }
    Ok(Grid { axes })
}

pub fn grid_to_json(g: &Grid) -> Value {
    json!({
        "axes": Value::Array(
            g.axes
                .iter()
                .map(|a| json!({"name": a.name, "values": rational_strings(&a.values)}))
                .collect(),
        )
    })
}

/// `{"point": {"S1.b^1": "2", ...}}` or a bare object of assignments.
pub fn point_from_json(v: &Value) -> Result<PointAssignment, JsonError> {
    let obj = as_obj(v, "point")?;
    let inner = match obj.get("point") {
        Some(p) => as_obj(p, "point.point")?,
        None => obj,
    };
    let mut out = BTreeMap::new();
    for (k, val) in inner {
        out.insert(k.clone(), rational_field(val, &format!("point.{k}"))?);
    }
    Ok(out)
}

pub fn point_to_json(p: &PointAssignment) -> Value {
    let mut m = Map::new();
    for (k, v) in p {
        m.insert(k.clone(), Value::String(rational_to_string(v)));
    }
    Value::Object(m)
}

/// `{"blocks": {"1/2": {"c": [["expr","expr"],["z"]]}}}` with one
/// expression per b-power.
pub fn param_xi_from_json(v: &Value) -> Result<ParamXi, JsonError> {
    let obj = as_obj(v, "parametrized element")?;
    let blocks_v = as_obj(
        obj.get("blocks").ok_or_else(|| err("parametrized element: missing blocks"))?,
        "parametrized element.blocks",
    )?;
    let mut blocks = Vec::new();
    for (key, bv) in blocks_v {
        let base = parse_rational(key).map_err(|e| err(format!("block key {key:?}: {e}")))?;
        let bobj = as_obj(bv, "parametrized block")?;
        let rows_v = as_arr(
            bobj.get("c").ok_or_else(|| err("parametrized block: missing c"))?,
            "parametrized block.c",
        )?;
        let mut rows = Vec::with_capacity(rows_v.len());
        for row in rows_v {
            let exprs = as_arr(row, "parametrized row")?
                .iter()
                .map(|x| as_str(x, "parametrized coefficient").map(|s| s.to_string()))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(exprs);
        }
        blocks.push((base, rows));
    }
    Ok(ParamXi { blocks })
}
