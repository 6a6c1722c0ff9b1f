//! Parsed model definitions: elements, expressions and source locations.

use std::collections::BTreeSet;
use std::fmt;

use crate::units::UnitExpr;

/// 1-based location of a token or declaration in model source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize, length: usize) -> Self {
        SourceSpan { line, column, length }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
        }
    }
}

/// Right-hand side of an equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(f64),
    Ref(String),
    Neg(Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    /// First-order exponential smooth of `input` with time constant `time`.
    Smooth { input: Box<Expr>, time: Box<Expr> },
    /// Zero before `start`, `height` from `start` on.
    Step { height: Box<Expr>, start: Box<Expr> },
    /// Piecewise-linear table lookup.
    Lookup { table: String, arg: Box<Expr> },
}

impl Expr {
    pub fn reference(name: impl Into<String>) -> Expr {
        Expr::Ref(name.into())
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Visits every element name this expression mentions, table names included.
    pub fn for_each_name<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Literal(_) => {}
            Expr::Ref(name) => f(name),
            Expr::Neg(inner) => inner.for_each_name(f),
            Expr::Binary(_, lhs, rhs) => {
                lhs.for_each_name(f);
                rhs.for_each_name(f);
            }
            Expr::Smooth { input, time } => {
                input.for_each_name(f);
                time.for_each_name(f);
            }
            Expr::Step { height, start } => {
                height.for_each_name(f);
                start.for_each_name(f);
            }
            Expr::Lookup { table, arg } => {
                f(table);
                arg.for_each_name(f);
            }
        }
    }

    pub fn smooth_count(&self) -> usize {
        match self {
            Expr::Literal(_) | Expr::Ref(_) => 0,
            Expr::Neg(inner) => inner.smooth_count(),
            Expr::Binary(_, lhs, rhs) => lhs.smooth_count() + rhs.smooth_count(),
            Expr::Smooth { input, time } => 1 + input.smooth_count() + time.smooth_count(),
            Expr::Step { height, start } => height.smooth_count() + start.smooth_count(),
            Expr::Lookup { arg, .. } => arg.smooth_count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKindTag {
    Stock,
    Flow,
    Auxiliary,
    Constant,
    Table,
}

impl ElementKindTag {
    pub fn keyword(self) -> &'static str {
        match self {
            ElementKindTag::Stock => "stock",
            ElementKindTag::Flow => "flow",
            ElementKindTag::Auxiliary => "aux",
            ElementKindTag::Constant => "const",
            ElementKindTag::Table => "table",
        }
    }
}

impl fmt::Display for ElementKindTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableBounds {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Stock { net_flow: Expr, initial: Expr },
    Flow(Expr),
    Auxiliary(Expr),
    Constant(f64),
    /// Display `bounds` are kept for rendering only; evaluation uses `points`.
    Table {
        bounds: TableBounds,
        points: Vec<(f64, f64)>,
        domain: UnitExpr,
    },
}

#[derive(Debug, Clone)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
    /// Units of the element's value. For tables this is the range.
    pub units: UnitExpr,
    /// Slider range from a trailing `# range a..b` comment.
    pub range: Option<(f64, f64)>,
    pub span: SourceSpan,
}

/// Source spans are ignored: two elements are equal when they declare the same thing.
impl PartialEq for Element {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.kind == other.kind
            && self.units == other.units
            && self.range == other.range
    }
}

impl Element {
    pub fn tag(&self) -> ElementKindTag {
        match self.kind {
            ElementKind::Stock { .. } => ElementKindTag::Stock,
            ElementKind::Flow(_) => ElementKindTag::Flow,
            ElementKind::Auxiliary(_) => ElementKindTag::Auxiliary,
            ElementKind::Constant(_) => ElementKindTag::Constant,
            ElementKind::Table { .. } => ElementKindTag::Table,
        }
    }

    /// The equation evaluated every step: net flow for stocks, the right-hand side for flows and auxiliaries.
    pub fn equation(&self) -> Option<&Expr> {
        match &self.kind {
            ElementKind::Stock { net_flow, .. } => Some(net_flow),
            ElementKind::Flow(e) | ElementKind::Auxiliary(e) => Some(e),
            ElementKind::Constant(_) | ElementKind::Table { .. } => None,
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            ElementKind::Constant(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_table(&self) -> bool {
        matches!(self.kind, ElementKind::Table { .. })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelDefinition {
    pub name: String,
    pub elements: Vec<Element>,
}

impl ModelDefinition {
    pub fn new(name: impl Into<String>) -> Self {
        ModelDefinition { name: name.into(), elements: Vec::new() }
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    pub fn element_mut(&mut self, name: &str) -> Option<&mut Element> {
        self.elements.iter_mut().find(|e| e.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.name == name)
    }

    /// Every unit symbol appearing in a declaration.
    pub fn unit_symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for e in &self.elements {
            out.extend(e.units.symbols().map(str::to_owned));
            if let ElementKind::Table { domain, .. } = &e.kind {
                out.extend(domain.symbols().map(str::to_owned));
            }
        }
        out
    }

    pub fn constants(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| e.tag() == ElementKindTag::Constant)
    }
}

pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
