//! The line-oriented `.sdm` model format.
//!
//! One declaration per line:
//!
//! ```text
//! stock Price = integ(Price_Change, 25) [dollar/unit]
//! flow Price_Change = ((1 - Supply_Demand_Ratio) * Price) / Time_to_Adjust_Price [dollar/unit/day]
//! aux Quantity_Supplied = lookup(Supply_Schedule, Perceived_Price_for_Supply) [unit/day]
//! const Time_to_Adjust_Price = 1 [day]   # range 0.25..4
//! table Supply_Schedule bounds (0,0)-(50,100) points (0,0) (50,100) domain [dollar/unit] range [unit/day]
//! ```
//!
//! `#` starts a comment. A trailing `# range a..b` on a declaration sets its slider range.

mod lexer;
mod parser;
mod render;

use std::collections::HashSet;

use thiserror::Error;

use crate::model::{ModelDefinition, SourceSpan};

pub use render::{render_element, render_expr, render_model};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LangError {
    #[error("{span}: syntax error: expected {expected}, found {found}")]
    Syntax { span: SourceSpan, expected: String, found: String },
    #[error("{span}: duplicate element name `{name}`")]
    DuplicateName { name: String, span: SourceSpan },
    #[error("{span}: bad table: {message}")]
    BadTable { span: SourceSpan, message: String },
    #[error("{span}: bad units: {message}")]
    BadUnits { span: SourceSpan, message: String },
}

impl LangError {
    pub fn span(&self) -> SourceSpan {
        match self {
            LangError::Syntax { span, .. }
            | LangError::DuplicateName { span, .. }
            | LangError::BadTable { span, .. }
            | LangError::BadUnits { span, .. } => *span,
        }
    }
}

/// Parses `.sdm` source into a model named `""`; see [`parse_named_model`].
pub fn parse_model(source: &str) -> Result<ModelDefinition, LangError> {
    parse_named_model("", source)
}

pub fn parse_named_model(name: &str, source: &str) -> Result<ModelDefinition, LangError> {
    let mut model = ModelDefinition::new(name);
    let mut seen = HashSet::new();
    for (idx, raw_line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let (code, comment) = match raw_line.find('#') {
            Some(pos) => (&raw_line[..pos], Some(&raw_line[pos + 1..])),
            None => (raw_line, None),
        };
        let trimmed = code.trim_end();
        if trimmed.trim_start().is_empty() {
            continue;
        }
        let lead = trimmed.len() - trimmed.trim_start().len();
        let span = SourceSpan::new(
            line_no,
            trimmed[..lead].chars().count() + 1,
            trimmed[lead..].chars().count(),
        );
        let tokens = lexer::tokenize(trimmed, line_no)?;
        let mut p = parser::LineParser::new(&tokens, line_no, trimmed.chars().count());
        let mut element = p.declaration(span)?;
        if let Some(c) = comment {
            element.range = parse_range_comment(c);
        }
        if !seen.insert(element.name.clone()) {
            return Err(LangError::DuplicateName { name: element.name, span });
        }
        model.elements.push(element);
    }
    Ok(model)
}

fn parse_range_comment(comment: &str) -> Option<(f64, f64)> {
    let rest = comment.trim().strip_prefix("range")?;
    let (lo, hi) = rest.trim().split_once("..")?;
    let lo: f64 = lo.trim().parse().ok()?;
    let hi: f64 = hi.trim().parse().ok()?;
    (lo.is_finite() && hi.is_finite() && lo <= hi).then_some((lo, hi))
}
