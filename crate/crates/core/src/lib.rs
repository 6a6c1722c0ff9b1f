//! Stock-and-flow models: a small equation language with units, a fixed-step simulator,
//! and feedback-loop analysis.

pub mod analysis;
pub mod compile;
pub mod engine;
pub mod lang;
pub mod model;
pub mod units;
pub mod wire;

use std::fmt;

pub use compile::{compile, list_states, CompiledModel, CompileError};
pub use engine::{simulate, RunResult, RunSpec};
pub use lang::{parse_model, render_model, LangError};
pub use model::{Element, ElementKind, Expr, ModelDefinition, SourceSpan};
pub use units::{check_units, UnitError, UnitExpr, UnitReport};

/// Any failure on the way from source text to a checked, compiled model.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    Parse(LangError),
    Compile(CompileError),
    Units(Vec<UnitError>),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Parse(e) => e.fmt(f),
            ModelError::Compile(e) => e.fmt(f),
            ModelError::Units(errors) => match errors.first() {
                Some(first) => first.fmt(f),
                None => f.write_str("units check failed"),
            },
        }
    }
}

impl std::error::Error for ModelError {}

/// A parsed, compiled and unit-checked model.
#[derive(Debug, Clone)]
pub struct CheckedModel {
    pub compiled: CompiledModel,
    pub units: UnitReport,
}

impl CheckedModel {
    pub fn definition(&self) -> &ModelDefinition {
        self.compiled.definition()
    }
}

pub fn load_model(name: &str, source: &str) -> Result<CheckedModel, ModelError> {
    let definition = lang::parse_named_model(name, source).map_err(ModelError::Parse)?;
    check_model(&definition)
}

pub fn check_model(definition: &ModelDefinition) -> Result<CheckedModel, ModelError> {
    let compiled = compile(definition).map_err(ModelError::Compile)?;
    let units = check_units(definition).map_err(ModelError::Units)?;
    Ok(CheckedModel { compiled, units })
}
