//! Lowers a [`ModelDefinition`] into a dependency-ordered, index-addressed form.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use thiserror::Error;

use crate::model::{BinaryOp, ElementKind, ElementKindTag, Expr, ModelDefinition, SourceSpan};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("{span}: `{element}` references unknown element `{name}`")]
    UnknownReference { element: String, name: String, span: SourceSpan },
    #[error("duplicate element name `{name}`")]
    DuplicateName { name: String },
    #[error("algebraic loop with no stock or smooth to break it: {}", .members.join(" -> "))]
    AlgebraicLoop { members: Vec<String> },
    #[error("initial values depend on each other in a loop: {}", .members.join(" -> "))]
    InitialLoop { members: Vec<String> },
    #[error("{span}: in `{element}`, lookup target `{name}` is not a table")]
    NotATable { element: String, name: String, span: SourceSpan },
    #[error("{span}: in `{element}`, table `{name}` can only be used through lookup()")]
    TableAsValue { element: String, name: String, span: SourceSpan },
    #[error("{span}: in `{element}`, the arguments of {builtin} must be a number or a constant")]
    NonConstantArgument { element: String, builtin: &'static str, span: SourceSpan },
    #[error("{span}: the initial value of stock `{element}` cannot contain smooth()")]
    SmoothInInitial { element: String, span: SourceSpan },
}

/// An argument that never changes during a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Operand {
    Literal(f64),
    Constant(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Literal(f64),
    /// Current value of the element at this index.
    Value(usize),
    Neg(Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
    /// Current value of the implicit state at this index.
    Smooth(usize),
    Step { height: Operand, start: Operand },
    Lookup { table: usize, arg: Box<Node> },
}

impl Node {
    /// Element indices read directly, not looking through smooth states.
    pub(crate) fn for_each_value(&self, f: &mut impl FnMut(usize)) {
        match self {
            Node::Literal(_) | Node::Smooth(_) => {}
            Node::Value(i) => f(*i),
            Node::Neg(inner) => inner.for_each_value(f),
            Node::Binary(_, l, r) => {
                l.for_each_value(f);
                r.for_each_value(f);
            }
            Node::Step { height, start } => {
                for op in [height, start] {
                    if let Operand::Constant(i) = op {
                        f(*i)
                    }
                }
            }
            Node::Lookup { arg, .. } => arg.for_each_value(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateKind {
    Stock { element: usize },
    /// Implicit state of a smooth() call site inside `owner`'s equation.
    Smooth { owner: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSlot {
    pub name: String,
    pub kind: StateKind,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StockSlot {
    pub element: usize,
    pub net_flow: Node,
    pub initial: Node,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SmoothSite {
    pub owner: usize,
    pub input: Node,
    pub time: Operand,
}

/// A model ready to simulate. Immutable; share it freely between runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledModel {
    definition: ModelDefinition,
    index: HashMap<String, usize>,
    states: Vec<StateSlot>,
    algebra: Vec<usize>,
    init_order: Vec<usize>,
    pub(crate) equations: Vec<Option<Node>>,
    pub(crate) stocks: Vec<StockSlot>,
    /// Indexed by state index minus the number of stocks.
    pub(crate) smooths: Vec<SmoothSite>,
}

impl CompiledModel {
    pub fn definition(&self) -> &ModelDefinition {
        &self.definition
    }

    pub fn states(&self) -> &[StateSlot] {
        &self.states
    }

    /// Flows and auxiliaries in evaluation order.
    pub fn algebra_order(&self) -> impl Iterator<Item = &str> {
        self.algebra.iter().map(|&i| self.definition.elements[i].name.as_str())
    }

    pub(crate) fn algebra_indices(&self) -> &[usize] {
        &self.algebra
    }

    /// Stocks and algebra elements in the order initial values are established.
    pub(crate) fn init_indices(&self) -> &[usize] {
        &self.init_order
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn element_count(&self) -> usize {
        self.definition.elements.len()
    }

    pub fn stock_count(&self) -> usize {
        self.stocks.len()
    }

    /// State indices of the smooth() sites inside `element`'s equation, in source order.
    pub(crate) fn smooth_states_of(&self, element: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.stocks.len();
        self.smooths.iter().enumerate().filter(move |(_, s)| s.owner == element).map(move |(k, _)| n + k)
    }

    pub(crate) fn stock_state_of(&self, element: usize) -> Option<usize> {
        self.stocks.iter().position(|s| s.element == element)
    }
}

/// Stock names followed by implicit smooth state names.
pub fn list_states(model: &CompiledModel) -> Vec<String> {
    model.states.iter().map(|s| s.name.clone()).collect()
}

struct Lowering<'m> {
    model: &'m ModelDefinition,
    index: &'m HashMap<String, usize>,
    smooths: Vec<SmoothSite>,
    stock_count: usize,
    owner: usize,
}

impl Lowering<'_> {
    fn owner_name(&self) -> String {
        self.model.elements[self.owner].name.clone()
    }

    fn span(&self) -> SourceSpan {
        self.model.elements[self.owner].span
    }

    fn resolve(&self, name: &str) -> Result<usize, CompileError> {
        self.index.get(name).copied().ok_or_else(|| CompileError::UnknownReference {
            element: self.owner_name(),
            name: name.to_owned(),
            span: self.span(),
        })
    }

    fn operand(&self, builtin: &'static str, expr: &Expr) -> Result<Operand, CompileError> {
        let non_constant =
            || CompileError::NonConstantArgument { element: self.owner_name(), builtin, span: self.span() };
        match expr {
            Expr::Literal(v) => Ok(Operand::Literal(*v)),
            Expr::Ref(name) => {
                let i = self.resolve(name)?;
                if self.model.elements[i].tag() == ElementKindTag::Constant {
                    Ok(Operand::Constant(i))
                } else {
                    Err(non_constant())
                }
            }
            _ => Err(non_constant()),
        }
    }

    fn lower(&mut self, expr: &Expr) -> Result<Node, CompileError> {
        Ok(match expr {
            Expr::Literal(v) => Node::Literal(*v),
            Expr::Ref(name) => {
                let i = self.resolve(name)?;
                if self.model.elements[i].is_table() {
                    return Err(CompileError::TableAsValue {
                        element: self.owner_name(),
                        name: name.clone(),
                        span: self.span(),
                    });
                }
                Node::Value(i)
            }
            Expr::Neg(inner) => Node::Neg(Box::new(self.lower(inner)?)),
            Expr::Binary(op, l, r) => Node::Binary(*op, Box::new(self.lower(l)?), Box::new(self.lower(r)?)),
            Expr::Smooth { input, time } => {
                let time = self.operand("SMOOTH", time)?;
                // Reserve the slot first so outer sites number before inner ones.
                let site = self.smooths.len();
                self.smooths.push(SmoothSite { owner: self.owner, input: Node::Literal(0.0), time });
                let input = self.lower(input)?;
                self.smooths[site].input = input;
                Node::Smooth(self.stock_count + site)
            }
            Expr::Step { height, start } => {
                Node::Step { height: self.operand("STEP", height)?, start: self.operand("STEP", start)? }
            }
            Expr::Lookup { table, arg } => {
                let t = self.resolve(table)?;
                if !self.model.elements[t].is_table() {
                    return Err(CompileError::NotATable {
                        element: self.owner_name(),
                        name: table.clone(),
                        span: self.span(),
                    });
                }
                Node::Lookup { table: t, arg: Box::new(self.lower(arg)?) }
            }
        })
    }
}

pub fn compile(model: &ModelDefinition) -> Result<CompiledModel, CompileError> {
    let mut index = HashMap::with_capacity(model.elements.len());
    for (i, e) in model.elements.iter().enumerate() {
        if index.insert(e.name.clone(), i).is_some() {
            return Err(CompileError::DuplicateName { name: e.name.clone() });
        }
    }

    let stock_elements: Vec<usize> = model
        .elements
        .iter()
        .enumerate()
        .filter(|(_, e)| e.tag() == ElementKindTag::Stock)
        .map(|(i, _)| i)
        .collect();
    let mut lowering =
        Lowering { model, index: &index, smooths: Vec::new(), stock_count: stock_elements.len(), owner: 0 };

    let mut equations = vec![None; model.elements.len()];
    let mut stocks = Vec::with_capacity(stock_elements.len());
    for (i, element) in model.elements.iter().enumerate() {
        lowering.owner = i;
        match &element.kind {
            ElementKind::Stock { net_flow, initial } => {
                if initial.smooth_count() > 0 {
                    return Err(CompileError::SmoothInInitial { element: element.name.clone(), span: element.span });
                }
                let initial = lowering.lower(initial)?;
                let net_flow = lowering.lower(net_flow)?;
                stocks.push(StockSlot { element: i, net_flow, initial });
            }
            ElementKind::Flow(expr) | ElementKind::Auxiliary(expr) => {
                equations[i] = Some(lowering.lower(expr)?);
            }
            ElementKind::Constant(_) | ElementKind::Table { .. } => {}
        }
    }
    let smooths = lowering.smooths;

    let mut states: Vec<StateSlot> = stock_elements
        .iter()
        .map(|&i| StateSlot { name: model.elements[i].name.clone(), kind: StateKind::Stock { element: i } })
        .collect();
    let mut per_owner: HashMap<usize, usize> = HashMap::new();
    for site in &smooths {
        let k = per_owner.entry(site.owner).or_insert(0);
        *k += 1;
        states.push(StateSlot {
            name: format!("{}.smooth{}", model.elements[site.owner].name, k),
            kind: StateKind::Smooth { owner: site.owner },
        });
    }

    let is_algebra = |i: usize| matches!(model.elements[i].tag(), ElementKindTag::Flow | ElementKindTag::Auxiliary);

    // Instantaneous dependencies among flows and auxiliaries.
    let algebra_nodes: Vec<usize> = (0..model.elements.len()).filter(|&i| is_algebra(i)).collect();
    let mut deps: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for &i in &algebra_nodes {
        let mut d = BTreeSet::new();
        if let Some(node) = &equations[i] {
            node.for_each_value(&mut |j| {
                if is_algebra(j) {
                    d.insert(j);
                }
            });
        }
        deps.insert(i, d);
    }
    let algebra = topo_sort(&algebra_nodes, &deps)
        .map_err(|cycle| CompileError::AlgebraicLoop { members: names(model, &cycle) })?;

    // At the start time, smooth inputs and stock initials must be known before their readers.
    let init_nodes: Vec<usize> =
        (0..model.elements.len()).filter(|&i| is_algebra(i) || stock_elements.contains(&i)).collect();
    let mut init_deps: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    let relevant = |j: usize| is_algebra(j) || stock_elements.contains(&j);
    for &i in &init_nodes {
        let mut d = BTreeSet::new();
        let mut add = |j: usize| {
            if relevant(j) && j != i {
                d.insert(j);
            }
        };
        if let Some(node) = &equations[i] {
            node.for_each_value(&mut add);
            for site in smooths.iter().filter(|s| s.owner == i) {
                site.input.for_each_value(&mut add);
            }
        }
        if let Some(stock) = stocks.iter().find(|s| s.element == i) {
            let mut self_ref = false;
            stock.initial.for_each_value(&mut |j| {
                if j == i {
                    self_ref = true;
                } else if relevant(j) {
                    d.insert(j);
                }
            });
            if self_ref {
                return Err(CompileError::InitialLoop { members: vec![model.elements[i].name.clone()] });
            }
        }
        init_deps.insert(i, d);
    }
    let init_order = topo_sort(&init_nodes, &init_deps)
        .map_err(|cycle| CompileError::InitialLoop { members: names(model, &cycle) })?;

    Ok(CompiledModel {
        definition: model.clone(),
        index,
        states,
        algebra,
        init_order,
        equations,
        stocks,
        smooths,
    })
}

fn names(model: &ModelDefinition, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| model.elements[i].name.clone()).collect()
}

/// Kahn's algorithm, always taking the ready node declared first.
/// On failure returns the nodes that sit on (or between) cycles, in declaration order.
fn topo_sort(nodes: &[usize], deps: &HashMap<usize, BTreeSet<usize>>) -> Result<Vec<usize>, Vec<usize>> {
    let mut remaining: HashMap<usize, usize> = nodes.iter().map(|&i| (i, deps[&i].len())).collect();
    let mut dependents: HashMap<usize, Vec<usize>> = HashMap::new();
    for &i in nodes {
        for &d in &deps[&i] {
            dependents.entry(d).or_default().push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        remaining.iter().filter(|(_, &n)| n == 0).map(|(&i, _)| Reverse(i)).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        remaining.remove(&i);
        for &j in dependents.get(&i).map(Vec::as_slice).unwrap_or(&[]) {
            let n = remaining.get_mut(&j).expect("dependent still pending");
            *n -= 1;
            if *n == 0 {
                ready.push(Reverse(j));
            }
        }
    }
    if remaining.is_empty() {
        return Ok(order);
    }
    // Strip nodes that only sit downstream of a cycle.
    let mut stuck: BTreeSet<usize> = remaining.keys().copied().collect();
    loop {
        let downstream: Vec<usize> = stuck
            .iter()
            .copied()
            .filter(|i| !dependents.get(i).is_some_and(|ds| ds.iter().any(|d| stuck.contains(d))))
            .collect();
        if downstream.is_empty() {
            break;
        }
        for i in downstream {
            stuck.remove(&i);
        }
    }
    Err(stuck.into_iter().collect())
}
