//! Command-line front end over the theme calculus: operator parsing and
//! normal forms, theme structure reports, Hom/Ext dimensions, and family
//! scans. All output is a pure function of the inputs; identical inputs
//! produce byte-identical output.

use std::fs;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use theme_core::families::{family_evaluate, family_scan, family_space};
use theme_core::homs::{ext_dims, hom_space, injection_exists, is_stable};
use theme_core::json as tjson;
use theme_core::normalform::{
    canonical_form, dual_twist_report, iso_test, property_u_status, rank2_invariant, UStatus,
};
use theme_core::opalg::{normalize, parse_expr, parse_operator, ParsedOperator};
use theme_core::series::{rational_to_string, BSeries};
use theme_core::theme::{
    default_precision, jordan_holder, FundInvariants, ModElem, ThemeModule,
};

#[derive(Parser)]
#[command(
    name = "theme-lab",
    about = "Exact calculus of themes over truncated rational power series",
    version
)]
struct Cli {
    /// Working precision override (else THEMELAB_PRECISION, else per-task default)
    #[arg(long, global = true)]
    precision: Option<usize>,

    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,

    /// Exit nonzero when any reported result is uncertified
    #[arg(long, global = true)]
    strict: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Operator expressions
    #[command(subcommand)]
    Op(OpCmd),
    /// Theme structure
    #[command(subcommand)]
    Theme(ThemeCmd),
    /// Morphism spaces
    #[command(subcommand)]
    Hom(HomCmd),
    /// Standard families over grids
    #[command(subcommand)]
    Family(FamilyCmd),
}

#[derive(Subcommand)]
enum OpCmd {
    /// Parse operator text; recognizes presentation chains
    Parse { expr: String },
    /// Normalize operator text to sum of b^nu * P_nu(a)
    Normalize {
        expr: String,
        /// b-adic truncation (required when inv(...) occurs)
        #[arg(long)]
        truncation: Option<usize>,
    },
}

#[derive(Subcommand)]
enum ThemeCmd {
    /// Invariants, Bernstein data, stability
    Info { file: String },
    /// Embed into the log-expansion space
    Realize { file: String },
    /// The filtration by normal subthemes
    Jh { file: String },
    /// Canonical presentation
    Canon { file: String },
    /// Stability (both methods)
    Stable { file: String },
    /// Twisted dual
    Dual {
        file: String,
        #[arg(long)]
        delta: String,
    },
    /// Rank-2 invariant of the top quotient
    Invariant2 { file: String },
    /// Isomorphism test
    Iso { a: String, b: String },
}

#[derive(Subcommand)]
enum HomCmd {
    /// dim Hom(A, B)
    Dim { a: String, b: String },
    /// Injection existence between equal-rank themes
    Inject { a: String, b: String },
    /// dim Hom and dim Ext^1
    Ext { a: String, b: String },
}

#[derive(Subcommand)]
enum FamilyCmd {
    /// Describe the parameter box of the standard family
    Space(FamilyArgs),
    /// Evaluate a single point
    Eval {
        #[command(flatten)]
        family: FamilyArgs,
        /// JSON file assigning slot values
        #[arg(long)]
        point: String,
    },
    /// Scan a finite rational grid
    Scan {
        #[command(flatten)]
        family: FamilyArgs,
        /// Grid JSON file
        #[arg(long)]
        grid: String,
        /// Parametrized expansion element for rank stratification
        #[arg(long)]
        xi: Option<String>,
    },
}

#[derive(Args)]
struct FamilyArgs {
    /// Invariants JSON file: {"lambda1": "5/2", "p": [1,1]}
    #[arg(long)]
    invariants: String,
}

struct Output {
    json: Value,
    text: String,
    certified: bool,
}

#[derive(Debug)]
struct AppError(String);

impl<E: std::error::Error> From<E> for AppError {
    fn from(e: E) -> Self {
        AppError(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            match cli.format {
                Format::Text => println!("{}", out.text),
                Format::Json => println!("{}", serde_json::to_string_pretty(&out.json).unwrap()),
            }
            if cli.strict && !out.certified {
                eprintln!("error: result not certified at the working precision");
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(AppError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn env_precision() -> Option<usize> {
    std::env::var("THEMELAB_PRECISION")
        .ok()
        .and_then(|s| s.parse().ok())
}

fn read_json(path: &str) -> Result<Value, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError(format!("{path}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| AppError(format!("{path}: {e}")))
}

fn load_theme(cli: &Cli, path: &str) -> Result<ThemeModule, AppError> {
    let v = read_json(path)?;
    let (pres, file_prec) = tjson::presentation_from_json(&v)?;
    let inv = pres.invariants()?;
    let prec = cli
        .precision
        .or_else(env_precision)
        .or(file_prec)
        .unwrap_or_else(|| default_precision(&inv));
    Ok(ThemeModule::from_presentation(pres, prec)?)
}

fn load_invariants(cli: &Cli, path: &str) -> Result<(FundInvariants, usize), AppError> {
    let v = read_json(path)?;
    let inv = tjson::invariants_from_json(&v)?;
    let prec = cli
        .precision
        .or_else(env_precision)
        .unwrap_or_else(|| default_precision(&inv));
    Ok((inv, prec))
}

fn elem_json(x: &ModElem) -> Value {
    Value::Array(
        x.iter()
            .map(|s| {
                Value::Array(
                    s.coeffs()
                        .iter()
                        .map(|c| Value::String(rational_to_string(c)))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn elem_text(x: &ModElem) -> String {
    x.iter()
        .enumerate()
        .filter(|(_, s)| !s.is_zero())
        .map(|(i, s)| format!("({s})*e_{}", i + 1))
        .collect::<Vec<_>>()
        .join(" + ")
}

fn ustatus_str(u: UStatus) -> &'static str {
    match u {
        UStatus::Unique => "U",
        UStatus::RepresentativeOnly => "notU",
        UStatus::Unknown => "unknown",
    }
}

fn run(cli: &Cli) -> Result<Output, AppError> {
    match &cli.command {
        Command::Op(op) => run_op(cli, op),
        Command::Theme(t) => run_theme(cli, t),
        Command::Hom(h) => run_hom(cli, h),
        Command::Family(f) => run_family(cli, f),
    }
}

fn run_op(cli: &Cli, op: &OpCmd) -> Result<Output, AppError> {
    match op {
        OpCmd::Parse { expr } => {
            let trunc = cli.precision.or_else(env_precision);
            let parsed = parse_operator(expr, trunc)?;
            match parsed {
                ParsedOperator::Chain(chain) => {
                    let (elem, poly) = chain.bernstein();
                    let json = json!({
                        "kind": "chain",
                        "lambda": chain.lambdas().iter().map(rational_to_string).collect::<Vec<_>>(),
                        "S": chain.inner_units().iter().map(|u| {
                            u.coeffs().iter().map(rational_to_string).collect::<Vec<_>>()
                        }).collect::<Vec<_>>(),
                        "bernstein_roots": poly.roots.iter().map(rational_to_string).collect::<Vec<_>>(),
                    });
                    let text = format!(
                        "chain: {chain}\nbernstein element: {elem}\nbernstein polynomial: {poly}\nroots: {}",
                        poly.roots.iter().map(rational_to_string).collect::<Vec<_>>().join(", ")
                    );
                    Ok(Output { json, text, certified: true })
                }
                ParsedOperator::Normal(n) => {
                    let json = json!({
                        "kind": "normal",
                        "terms": normal_terms_json(&n),
                        "b_truncation": n.b_truncation(),
                    });
                    let text = format!("normal form: {n}");
                    Ok(Output { json, text, certified: true })
                }
            }
        }
        OpCmd::Normalize { expr, truncation } => {
            let e = parse_expr(expr)?;
            let trunc = truncation.or(cli.precision).or_else(env_precision);
            let n = normalize(&e, trunc)?;
            let json = json!({
                "terms": normal_terms_json(&n),
                "b_truncation": n.b_truncation(),
            });
            Ok(Output {
                text: format!("{n}"),
                json,
                certified: true,
            })
        }
    }
}

fn normal_terms_json(n: &theme_core::opalg::OpNormal) -> Value {
    let mut terms = Map::new();
    for (nu, poly) in n.terms() {
        terms.insert(
            nu.to_string(),
            Value::Array(
                poly.iter()
                    .map(|c| Value::String(rational_to_string(c)))
                    .collect(),
            ),
        );
    }
    Value::Object(terms)
}

fn run_theme(cli: &Cli, cmd: &ThemeCmd) -> Result<Output, AppError> {
    match cmd {
        ThemeCmd::Info { file } => {
            let m = load_theme(cli, file)?;
            let inv = m.invariants();
            let (elem, poly) = m.bernstein();
            let stab = is_stable(&m)?;
            let ustat = property_u_status(&m)?;
            let json = json!({
                "rank": m.rank(),
                "precision": m.precision(),
                "invariants": tjson::invariants_to_json(&inv),
                "lambda": inv.lambdas().iter().map(rational_to_string).collect::<Vec<_>>(),
                "bernstein_roots": poly.roots.iter().map(rational_to_string).collect::<Vec<_>>(),
                "geometric": poly.all_roots_negative(),
                "stable": stab.stable,
                "end_dim_certified": stab.certified,
                "property_u": ustatus_str(ustat),
            });
            let text = format!(
                "rank: {}\ninvariants: {}\nbernstein element: {}\nbernstein polynomial: {}\nroots: {}\nstable: {}\nproperty U: {}",
                m.rank(),
                inv,
                elem,
                poly,
                poly.roots.iter().map(rational_to_string).collect::<Vec<_>>().join(", "),
                stab.stable,
                ustatus_str(ustat),
            );
            Ok(Output { json, text, certified: stab.certified })
        }
        ThemeCmd::Realize { file } => {
            let m = load_theme(cli, file)?;
            let real = m.realize_in_xi()?;
            let gen = real.generator();
            let json = json!({
                "span_rank": real.span.rank(),
                "certified": real.span.basis.certified,
                "divisor_valuations": real.span.basis.divisor_valuations,
                "generator": tjson::xi_to_json(gen),
            });
            let text = format!(
                "span rank: {} (certified: {})\ngenerator: {gen}",
                real.span.rank(),
                real.span.basis.certified
            );
            Ok(Output { json, text, certified: real.span.basis.certified })
        }
        ThemeCmd::Jh { file } => {
            let m = load_theme(cli, file)?;
            let real = m.realize_in_xi()?;
            let jh = jordan_holder(&real)?;
            let ranks: Vec<usize> = jh.filtration.iter().map(|f| f.rank()).collect();
            let json = json!({
                "exponents": jh.exponents.iter().map(rational_to_string).collect::<Vec<_>>(),
                "filtration_ranks": ranks,
                "generators": jh.generators.iter().map(tjson::xi_to_json).collect::<Vec<_>>(),
            });
            let text = format!(
                "exponents: {}\nfiltration ranks: {:?}",
                jh.exponents.iter().map(rational_to_string).collect::<Vec<_>>().join(", "),
                ranks
            );
            Ok(Output { json, text, certified: true })
        }
        ThemeCmd::Canon { file } => {
            let m = load_theme(cli, file)?;
            let can = canonical_form(&m)?;
            let mut json = tjson::presentation_to_json(&can.presentation, m.precision());
            if let Value::Object(ref mut map) = json {
                map.insert("canonical".into(), Value::Bool(true));
                map.insert(
                    "uniqueness".into(),
                    Value::String(ustatus_str(can.status).into()),
                );
            }
            let units: Vec<String> = can
                .presentation
                .units
                .iter()
                .enumerate()
                .map(|(j, u)| {
                    format!(
                        "S_{} = {}",
                        j + 1,
                        BSeries::from_coeffs_at(u.clone(), u.len().max(1))
                    )
                })
                .collect();
            let text = format!(
                "canonical presentation ({}):\n{}",
                ustatus_str(can.status),
                units.join("\n")
            );
            Ok(Output { json, text, certified: can.status != UStatus::Unknown })
        }
        ThemeCmd::Stable { file } => {
            let m = load_theme(cli, file)?;
            let st = is_stable(&m)?;
            let json = json!({
                "stable": st.stable,
                "methods_agree": st.methods_agree,
                "certified": st.certified,
                "witness": st.witness.as_ref().map(elem_json),
            });
            let text = match &st.witness {
                Some(w) => format!(
                    "stable: {} (methods agree: {})\nwitness: {}",
                    st.stable,
                    st.methods_agree,
                    elem_text(w)
                ),
                None => format!("stable: {} (methods agree: {})", st.stable, st.methods_agree),
            };
            Ok(Output { json, text, certified: st.certified })
        }
        ThemeCmd::Dual { file, delta } => {
            let m = load_theme(cli, file)?;
            let d = theme_core::series::parse_rational(delta)?;
            let rep = dual_twist_report(&m, &d)?;
            let json = json!({
                "invariants": tjson::invariants_to_json(&rep.invariants),
                "lambda": rep.invariants.lambdas().iter().map(rational_to_string).collect::<Vec<_>>(),
                "cross_check_lambdas_match": rep.lambdas_match,
                "rank2_invariant_formula": rep.formula_rank2_invariant.as_ref().map(rational_to_string),
                "rank2_invariant_computed": rep.computed_rank2_invariant.as_ref().map(rational_to_string),
            });
            let mut text = format!("dual invariants: {}", rep.invariants);
            if let Some(ok) = rep.lambdas_match {
                text.push_str(&format!("\nexplicit dual module agrees on exponents: {ok}"));
            }
            if let (Some(f), Some(c)) = (
                &rep.formula_rank2_invariant,
                &rep.computed_rank2_invariant,
            ) {
                text.push_str(&format!(
                    "\nrank-2 invariant: sign rule gives {}, transposed-action dual gives {}",
                    rational_to_string(f),
                    rational_to_string(c)
                ));
            }
            let certified = rep.lambdas_match.unwrap_or(true);
            Ok(Output { json, text, certified })
        }
        ThemeCmd::Invariant2 { file } => {
            let m = load_theme(cli, file)?;
            let alpha = rank2_invariant(&m)?;
            Ok(Output {
                json: json!({ "rank2_invariant": rational_to_string(&alpha) }),
                text: format!("rank-2 invariant: {}", rational_to_string(&alpha)),
                certified: true,
            })
        }
        ThemeCmd::Iso { a, b } => {
            let ma = load_theme(cli, a)?;
            let mb = load_theme(cli, b)?;
            let r = iso_test(&ma, &mb)?;
            let json = json!({
                "isomorphic": r.isomorphic,
                "witness": r.witness.as_ref().map(elem_json),
            });
            let text = match &r.witness {
                Some(w) => format!("isomorphic: {}\nwitness: {}", r.isomorphic, elem_text(w)),
                None => format!("isomorphic: {}", r.isomorphic),
            };
            Ok(Output { json, text, certified: true })
        }
    }
}

fn run_hom(cli: &Cli, cmd: &HomCmd) -> Result<Output, AppError> {
    match cmd {
        HomCmd::Dim { a, b } => {
            let ma = load_theme(cli, a)?;
            let mb = load_theme(cli, b)?;
            let h = hom_space(&ma, &mb)?;
            let json = json!({
                "dim": h.dim,
                "rank_profile": h.rank_profile,
                "certified": h.certified,
                "basis": h.basis.iter().map(elem_json).collect::<Vec<_>>(),
            });
            let text = format!(
                "dim Hom: {} (certified: {})\nrank profile: {:?}",
                h.dim, h.certified, h.rank_profile
            );
            Ok(Output { json, text, certified: h.certified })
        }
        HomCmd::Inject { a, b } => {
            let ma = load_theme(cli, a)?;
            let mb = load_theme(cli, b)?;
            let r = injection_exists(&ma, &mb)?;
            let json = json!({
                "exists": r.exists,
                "witness": r.witness.as_ref().map(elem_json),
                "obstruction": r.obstruction,
            });
            let text = match (&r.witness, &r.obstruction) {
                (Some(w), _) => format!("injection exists: true\nwitness: {}", elem_text(w)),
                (None, Some(o)) => format!("injection exists: false\nobstruction: {o}"),
                _ => format!("injection exists: {}", r.exists),
            };
            Ok(Output { json, text, certified: true })
        }
        HomCmd::Ext { a, b } => {
            let ma = load_theme(cli, a)?;
            let mb = load_theme(cli, b)?;
            let r = ext_dims(&ma, &mb)?;
            let json = json!({
                "dim_hom": r.dim_hom,
                "dim_ext1": r.dim_ext1,
                "certified": r.certified,
            });
            let text = format!(
                "dim Hom: {}\ndim Ext^1: {}\ncertified: {}",
                r.dim_hom, r.dim_ext1, r.certified
            );
            Ok(Output { json, text, certified: r.certified })
        }
    }
}

fn run_family(cli: &Cli, cmd: &FamilyCmd) -> Result<Output, AppError> {
    match cmd {
        FamilyCmd::Space(args) => {
            let (inv, _) = load_invariants(cli, &args.invariants)?;
            let space = family_space(&inv)?;
            let slots: Vec<Value> = space
                .slots
                .iter()
                .map(|s| {
                    json!({
                        "name": s.name(),
                        "kind": match s.kind {
                            theme_core::families::SlotKind::FixedOne => "fixed",
                            theme_core::families::SlotKind::NonZero => "nonzero",
                            theme_core::families::SlotKind::Free => "free",
                        },
                    })
                })
                .collect();
            let json = json!({
                "invariants": tjson::invariants_to_json(&inv),
                "dimension": space.dimension,
                "slots": slots,
            });
            let text = format!(
                "dimension: {}\nslots:\n{}",
                space.dimension,
                space
                    .slots
                    .iter()
                    .map(|s| format!(
                        "  {} ({})",
                        s.name(),
                        match s.kind {
                            theme_core::families::SlotKind::FixedOne => "fixed to 1",
                            theme_core::families::SlotKind::NonZero => "nonzero",
                            theme_core::families::SlotKind::Free => "free",
                        }
                    ))
                    .collect::<Vec<_>>()
                    .join("\n")
            );
            Ok(Output { json, text, certified: true })
        }
        FamilyCmd::Eval { family, point } => {
            let (inv, prec) = load_invariants(cli, &family.invariants)?;
            let space = family_space(&inv)?;
            let pt = tjson::point_from_json(&read_json(point)?)?;
            let m = family_evaluate(&space, &pt, Some(prec))?;
            let json = tjson::presentation_to_json(m.presentation(), m.precision());
            let text = format!(
                "theme with {} at precision {}",
                m.invariants(),
                m.precision()
            );
            Ok(Output { json, text, certified: true })
        }
        FamilyCmd::Scan { family, grid, xi } => {
            let (inv, prec) = load_invariants(cli, &family.invariants)?;
            let space = family_space(&inv)?;
            let g = tjson::grid_from_json(&read_json(grid)?)?;
            let param = match xi {
                Some(path) => Some(tjson::param_xi_from_json(&read_json(path)?)?),
                None => None,
            };
            let report = family_scan(&space, &g, param.as_ref(), Some(prec))?;
            let out = scan_report_json(&report);
            let mut lines = vec![
                format!("points: {}", report.points.len()),
                format!("iso classes: {}", report.classes.len()),
                format!(
                    "stable stratum: {:?}",
                    report.stable_stratum
                ),
            ];
            if let Some(strata) = &report.xi_rank_strata {
                lines.push(format!("rank strata: {strata:?}"));
            }
            for p in &report.points {
                lines.push(format!(
                    "  [{}] {} stable={} class={} end_dim={}",
                    p.index,
                    theme_core::families::sigma_to_string(&p.sigma),
                    p.stable,
                    p.iso_class,
                    p.end_dim
                ));
            }
            Ok(Output {
                json: out,
                text: lines.join("\n"),
                certified: true,
            })
        }
    }
}

fn scan_report_json(report: &theme_core::families::StratReport) -> Value {
    let points: Vec<Value> = report
        .points
        .iter()
        .map(|p| {
            let mut m = Map::new();
            m.insert("index".into(), json!(p.index));
            m.insert("sigma".into(), tjson::point_to_json(&p.sigma));
            m.insert("stable".into(), json!(p.stable));
            m.insert("iso_class".into(), json!(p.iso_class));
            m.insert("end_dim".into(), json!(p.end_dim));
            m.insert(
                "canonical_S".into(),
                Value::Array(
                    p.canonical
                        .units
                        .iter()
                        .map(|u| {
                            Value::Array(
                                u.iter()
                                    .map(|c| Value::String(rational_to_string(c)))
                                    .collect(),
                            )
                        })
                        .collect(),
                ),
            );
            if let Some(r2) = &p.rank2_invariant {
                m.insert("rank2_invariant".into(), Value::String(rational_to_string(r2)));
            }
            if let Some((u, v)) = &p.collapse_witness {
                m.insert(
                    "collapse_witness".into(),
                    json!({
                        "U": u.coeffs().iter().map(rational_to_string).collect::<Vec<_>>(),
                        "V": v.coeffs().iter().map(rational_to_string).collect::<Vec<_>>(),
                    }),
                );
            }
            if let Some(r) = p.xi_rank {
                m.insert("xi_rank".into(), json!(r));
            }
            Value::Object(m)
        })
        .collect();
    let mut strata = Map::new();
    strata.insert("iso_classes".into(), json!(report.classes));
    strata.insert("stable".into(), json!(report.stable_stratum));
    if let Some(ranks) = &report.xi_rank_strata {
        let mut rm = Map::new();
        for (r, pts) in ranks {
            rm.insert(r.to_string(), json!(pts));
        }
        strata.insert("xi_ranks".into(), Value::Object(rm));
    }
    json!({
        "invariants": tjson::invariants_to_json(&report.invariants),
        "bernstein_roots": report
            .bernstein_roots
            .iter()
            .map(rational_to_string)
            .collect::<Vec<_>>(),
        "points": points,
        "strata": Value::Object(strata),
    })
}
