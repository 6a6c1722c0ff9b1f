//! Dimensional analysis over model declarations.
//!
//! Units are opaque symbols with integer exponents. There is no conversion
//! between symbols, so `day` and `week` are simply different dimensions.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::model::{BinaryOp, Element, ElementKind, ElementKindTag, Expr, ModelDefinition, SourceSpan};

/// A product of unit symbols raised to nonzero integer powers. Empty means dimensionless.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct UnitExpr {
    exponents: BTreeMap<String, i32>,
}

impl UnitExpr {
    pub fn dimensionless() -> Self {
        UnitExpr::default()
    }

    pub fn symbol(name: impl Into<String>) -> Self {
        let mut exponents = BTreeMap::new();
        exponents.insert(name.into(), 1);
        UnitExpr { exponents }
    }

    pub fn is_dimensionless(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponent(&self, symbol: &str) -> i32 {
        self.exponents.get(symbol).copied().unwrap_or(0)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.exponents.keys().map(String::as_str)
    }

    /// The symbol, if this is exactly one symbol to the first power.
    pub fn as_single_symbol(&self) -> Option<&str> {
        match self.exponents.iter().next() {
            Some((sym, 1)) if self.exponents.len() == 1 => Some(sym),
            _ => None,
        }
    }

    fn add_power(&mut self, symbol: &str, power: i32) {
        let entry = self.exponents.entry(symbol.to_owned()).or_insert(0);
        *entry += power;
        if *entry == 0 {
            self.exponents.remove(symbol);
        }
    }

    pub fn mul(&self, other: &UnitExpr) -> UnitExpr {
        let mut out = self.clone();
        for (sym, &p) in &other.exponents {
            out.add_power(sym, p);
        }
        out
    }

    pub fn div(&self, other: &UnitExpr) -> UnitExpr {
        let mut out = self.clone();
        for (sym, &p) in &other.exponents {
            out.add_power(sym, -p);
        }
        out
    }

    pub fn pow(&self, power: i32) -> UnitExpr {
        let mut out = UnitExpr::default();
        for (sym, &p) in &self.exponents {
            out.add_power(sym, p * power);
        }
        out
    }

    /// Parses bracket contents such as `dollar/unit/day`, `unit^2*day^-1`, `1/day` or `dimensionless`.
    pub fn parse(text: &str) -> Result<UnitExpr, String> {
        let text = text.trim();
        if text.is_empty() {
            return Err("empty unit expression".into());
        }
        if text == "dimensionless" {
            return Ok(UnitExpr::dimensionless());
        }
        let mut out = UnitExpr::default();
        let mut sign = 1;
        let mut rest = text;
        let mut first = true;
        loop {
            let end = rest.find(['*', '/']).unwrap_or(rest.len());
            let factor = rest[..end].trim();
            if first && factor == "1" {
                // leading `1` in `1/day`
            } else {
                let (sym, power) = parse_factor(factor)?;
                out.add_power(sym, sign * power);
            }
            first = false;
            if end == rest.len() {
                break;
            }
            sign = if rest.as_bytes()[end] == b'*' { 1 } else { -1 };
            rest = &rest[end + 1..];
        }
        Ok(out)
    }
}

fn parse_factor(factor: &str) -> Result<(&str, i32), String> {
    let (sym, power) = match factor.split_once('^') {
        Some((s, p)) => {
            let p: i32 = p.trim().parse().map_err(|_| format!("bad exponent `{}`", p.trim()))?;
            (s.trim(), p)
        }
        None => (factor, 1),
    };
    if sym.is_empty() {
        return Err("missing unit symbol".into());
    }
    if sym == "dimensionless" {
        return Err("`dimensionless` cannot be combined with other units".into());
    }
    if !crate::model::is_valid_name(sym) {
        return Err(format!("bad unit symbol `{sym}`"));
    }
    if power == 0 {
        return Err(format!("zero exponent on `{sym}`"));
    }
    Ok((sym, power))
}

impl fmt::Display for UnitExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponents.is_empty() {
            return f.write_str("dimensionless");
        }
        let write_factor = |f: &mut fmt::Formatter<'_>, sym: &str, p: i32| {
            if p == 1 {
                f.write_str(sym)
            } else {
                write!(f, "{sym}^{p}")
            }
        };
        let mut wrote = false;
        for (sym, &p) in self.exponents.iter().filter(|(_, &p)| p > 0) {
            if wrote {
                f.write_str("*")?;
            }
            write_factor(f, sym, p)?;
            wrote = true;
        }
        if !wrote {
            f.write_str("1")?;
        }
        for (sym, &p) in self.exponents.iter().filter(|(_, &p)| p < 0) {
            f.write_str("/")?;
            write_factor(f, sym, -p)?;
        }
        Ok(())
    }
}

/// Where a unit disagreement was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchSite {
    /// Inferred units differ from the bracketed declaration.
    Declaration,
    /// Operands of `+` or `-` differ.
    Operands(BinaryOp),
    /// Lookup argument differs from the table's domain.
    LookupArgument,
    /// A stock's initial value differs from the stock's units.
    Initial,
}

impl fmt::Display for MismatchSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MismatchSite::Declaration => f.write_str("declared"),
            MismatchSite::Operands(op) => write!(f, "operands of `{}`", op.symbol()),
            MismatchSite::LookupArgument => f.write_str("lookup argument"),
            MismatchSite::Initial => f.write_str("initial value"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("{span}: units mismatch in `{element}` ({site}): expected {expected}, inferred {inferred}")]
    UnitMismatch {
        element: String,
        site: MismatchSite,
        expected: UnitExpr,
        inferred: UnitExpr,
        span: SourceSpan,
    },
    #[error("{span}: in `{element}`, the time argument of {builtin} has units {found}; expected {expected}")]
    NonTimeConstant {
        element: String,
        builtin: &'static str,
        found: UnitExpr,
        expected: String,
        span: SourceSpan,
    },
    #[error("stocks imply different time units: {}", fmt_candidates(.candidates))]
    AmbiguousTimeUnit { candidates: Vec<(String, String)> },
    #[error("{span}: stock `{stock}` and its net flow imply time units {implied}, which is not a single unit symbol")]
    NotATimeUnit { stock: String, implied: UnitExpr, span: SourceSpan },
    #[error("{span}: cannot infer the units of a literal step height in `{element}`")]
    Uninferable { element: String, span: SourceSpan },
    #[error("{span}: `{element}` references unknown element `{name}`")]
    UnknownReference { element: String, name: String, span: SourceSpan },
    #[error("model has no stocks, so no time unit can be derived")]
    NoStocks,
}

fn fmt_candidates(c: &[(String, String)]) -> String {
    c.iter().map(|(s, u)| format!("{s} -> {u}")).collect::<Vec<_>>().join(", ")
}

impl UnitError {
    /// Element the error is attributed to, if any.
    pub fn element(&self) -> Option<&str> {
        match self {
            UnitError::UnitMismatch { element, .. }
            | UnitError::NonTimeConstant { element, .. }
            | UnitError::Uninferable { element, .. }
            | UnitError::UnknownReference { element, .. } => Some(element),
            UnitError::NotATimeUnit { stock, .. } => Some(stock),
            UnitError::AmbiguousTimeUnit { .. } | UnitError::NoStocks => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitEntry {
    pub name: String,
    pub kind: ElementKindTag,
    pub units: UnitExpr,
    /// Table domain units.
    pub domain: Option<UnitExpr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitReport {
    pub time_unit: Option<String>,
    pub entries: Vec<UnitEntry>,
}

struct Inference<'m> {
    model: &'m ModelDefinition,
    time: Option<&'m str>,
}

struct Ctx<'a> {
    element: &'a Element,
    /// Units a literal step height takes on.
    enclosing: Option<UnitExpr>,
}

impl<'m> Inference<'m> {
    fn lookup(&self, ctx: &Ctx<'_>, name: &str) -> Result<&'m Element, UnitError> {
        self.model.element(name).ok_or_else(|| UnitError::UnknownReference {
            element: ctx.element.name.clone(),
            name: name.to_owned(),
            span: ctx.element.span,
        })
    }

    fn infer(&self, ctx: &Ctx<'_>, expr: &Expr) -> Result<UnitExpr, UnitError> {
        match expr {
            Expr::Literal(_) => Ok(UnitExpr::dimensionless()),
            Expr::Ref(name) => Ok(self.lookup(ctx, name)?.units.clone()),
            Expr::Neg(inner) => self.infer(ctx, inner),
            Expr::Binary(op, lhs, rhs) => {
                let l = self.infer(ctx, lhs)?;
                let r = self.infer(ctx, rhs)?;
                match op {
                    BinaryOp::Add | BinaryOp::Sub => {
                        if l != r {
                            return Err(UnitError::UnitMismatch {
                                element: ctx.element.name.clone(),
                                site: MismatchSite::Operands(*op),
                                expected: l,
                                inferred: r,
                                span: ctx.element.span,
                            });
                        }
                        Ok(l)
                    }
                    BinaryOp::Mul => Ok(l.mul(&r)),
                    BinaryOp::Div => Ok(l.div(&r)),
                }
            }
            Expr::Smooth { input, time } => {
                self.require_time(ctx, "SMOOTH", time)?;
                self.infer(ctx, input)
            }
            Expr::Step { height, start } => {
                self.require_time(ctx, "STEP", start)?;
                if is_bare_literal(height) {
                    ctx.enclosing.clone().ok_or_else(|| UnitError::Uninferable {
                        element: ctx.element.name.clone(),
                        span: ctx.element.span,
                    })
                } else {
                    self.infer(ctx, height)
                }
            }
            Expr::Lookup { table, arg } => {
                let table = self.lookup(ctx, table)?;
                let arg_units = self.infer(ctx, arg)?;
                let ElementKind::Table { domain, .. } = &table.kind else {
                    return Ok(table.units.clone());
                };
                if arg_units != *domain {
                    return Err(UnitError::UnitMismatch {
                        element: ctx.element.name.clone(),
                        site: MismatchSite::LookupArgument,
                        expected: domain.clone(),
                        inferred: arg_units,
                        span: ctx.element.span,
                    });
                }
                Ok(table.units.clone())
            }
        }
    }

    /// Literal time arguments are accepted as-is; anything else must carry the model's time unit.
    fn require_time(&self, ctx: &Ctx<'_>, builtin: &'static str, arg: &Expr) -> Result<(), UnitError> {
        if is_bare_literal(arg) {
            return Ok(());
        }
        let found = self.infer(ctx, arg)?;
        let ok = match self.time {
            Some(t) => found.as_single_symbol() == Some(t),
            None => found.as_single_symbol().is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(UnitError::NonTimeConstant {
                element: ctx.element.name.clone(),
                builtin,
                found,
                expected: self.time.unwrap_or("a single time unit").to_owned(),
                span: ctx.element.span,
            })
        }
    }

    fn check_element(&self, element: &Element) -> Result<UnitExpr, UnitError> {
        let mismatch = |site, expected: &UnitExpr, inferred: UnitExpr| UnitError::UnitMismatch {
            element: element.name.clone(),
            site,
            expected: expected.clone(),
            inferred,
            span: element.span,
        };
        match &element.kind {
            ElementKind::Constant(_) | ElementKind::Table { .. } => Ok(element.units.clone()),
            ElementKind::Flow(expr) | ElementKind::Auxiliary(expr) => {
                if is_bare_literal(expr) {
                    return Ok(element.units.clone());
                }
                let ctx = Ctx { element, enclosing: Some(element.units.clone()) };
                let inferred = self.infer(&ctx, expr)?;
                if inferred != element.units {
                    return Err(mismatch(MismatchSite::Declaration, &element.units, inferred));
                }
                Ok(inferred)
            }
            ElementKind::Stock { net_flow, initial } => {
                let time = self.time.map(UnitExpr::symbol).unwrap_or_default();
                let flow_units = element.units.div(&time);
                let ctx = Ctx { element, enclosing: Some(flow_units.clone()) };
                let inferred = if is_bare_literal(net_flow) {
                    element.units.clone()
                } else {
                    self.infer(&ctx, net_flow)?.mul(&time)
                };
                if inferred != element.units {
                    return Err(mismatch(MismatchSite::Declaration, &element.units, inferred));
                }
                if !is_bare_literal(initial) {
                    let ctx = Ctx { element, enclosing: Some(element.units.clone()) };
                    let init = self.infer(&ctx, initial)?;
                    if init != element.units {
                        return Err(mismatch(MismatchSite::Initial, &element.units, init));
                    }
                }
                Ok(inferred)
            }
        }
    }
}

fn is_bare_literal(expr: &Expr) -> bool {
    match expr {
        Expr::Literal(_) => true,
        Expr::Neg(inner) => is_bare_literal(inner),
        _ => false,
    }
}

/// Infers the units of `expr` as it would appear in the equation of `element`.
pub fn infer_expr_units(
    model: &ModelDefinition,
    element: &Element,
    expr: &Expr,
    time: Option<&str>,
) -> Result<UnitExpr, UnitError> {
    let inference = Inference { model, time };
    let ctx = Ctx { element, enclosing: Some(element.units.clone()) };
    inference.infer(&ctx, expr)
}

/// The single time unit implied by every stock's units divided by its net flow's units.
pub fn time_unit(model: &ModelDefinition) -> Result<String, UnitError> {
    let inference = Inference { model, time: None };
    let mut candidates: Vec<(String, String)> = Vec::new();
    for element in &model.elements {
        let ElementKind::Stock { net_flow, .. } = &element.kind else {
            continue;
        };
        if is_bare_literal(net_flow) {
            continue;
        }
        let ctx = Ctx { element, enclosing: None };
        let flow_units = inference.infer(&ctx, net_flow)?;
        let implied = element.units.div(&flow_units);
        match implied.as_single_symbol() {
            Some(sym) => candidates.push((element.name.clone(), sym.to_owned())),
            None => {
                return Err(UnitError::NotATimeUnit {
                    stock: element.name.clone(),
                    implied,
                    span: element.span,
                })
            }
        }
    }
    let Some((_, first)) = candidates.first() else {
        return Err(UnitError::NoStocks);
    };
    if candidates.iter().all(|(_, u)| u == first) {
        Ok(first.clone())
    } else {
        Err(UnitError::AmbiguousTimeUnit { candidates })
    }
}

/// Checks every element's inferred units against its declaration.
///
/// All element-level errors are collected; a time-unit failure stops the check early.
pub fn check_units(model: &ModelDefinition) -> Result<UnitReport, Vec<UnitError>> {
    let has_stocks = model.elements.iter().any(|e| e.tag() == ElementKindTag::Stock);
    let time = if has_stocks {
        match time_unit(model) {
            Ok(t) => Some(t),
            Err(UnitError::NoStocks) => None,
            Err(e) => return Err(vec![e]),
        }
    } else {
        None
    };
    let inference = Inference { model, time: time.as_deref() };
    let mut entries = Vec::with_capacity(model.elements.len());
    let mut errors = Vec::new();
    for element in &model.elements {
        match inference.check_element(element) {
            Ok(units) => entries.push(UnitEntry {
                name: element.name.clone(),
                kind: element.tag(),
                units,
                domain: match &element.kind {
                    ElementKind::Table { domain, .. } => Some(domain.clone()),
                    _ => None,
                },
            }),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(UnitReport { time_unit: time, entries })
    } else {
        Err(errors)
    }
}
