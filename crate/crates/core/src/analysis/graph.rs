use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::compile::{CompiledModel, Node, Operand};
use crate::engine::{eval_node, evaluate_point, operand, Fault, OperatingPoint};
use crate::model::ElementKindTag;

/// Relative finite-difference step.
pub const RELATIVE_STEP: f64 = 1e-6;
/// Smallest finite-difference step, and the magnitude below which a derivative counts as zero.
pub const ABSOLUTE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Instantaneous,
    /// Passes through a stock or a smoothed state.
    Integration,
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkKind::Instantaneous => "instantaneous",
            LinkKind::Integration => "integration",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
    Zero,
    Indeterminate,
}

impl Polarity {
    pub fn of_derivative(d: f64) -> Polarity {
        if !d.is_finite() {
            Polarity::Indeterminate
        } else if d.abs() < ABSOLUTE_FLOOR {
            Polarity::Zero
        } else if d > 0.0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Polarity::Positive => "+",
            Polarity::Negative => "-",
            Polarity::Zero => "0",
            Polarity::Indeterminate => "?",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub source: String,
    pub target: String,
    pub kind: LinkKind,
    pub polarity: Polarity,
    /// Local derivative the polarity was read from. For integration links this is the
    /// derivative of the target's rate of change.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    pub nodes: Vec<String>,
    pub links: Vec<Link>,
}

impl CausalGraph {
    /// One `source -> target [kind, polarity]` line per link.
    pub fn to_edge_list(&self) -> String {
        self.links
            .iter()
            .map(|l| format!("{} -> {} [{}, {}]\n", l.source, l.target, l.kind, l.polarity.symbol()))
            .collect()
    }

    pub fn link(&self, source: &str, target: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.source == source && l.target == target)
    }
}

/// Central difference of `f` around `x`; `None` if either side cannot be evaluated.
fn central_difference(x: f64, mut f: impl FnMut(f64) -> Option<f64>) -> f64 {
    let h = (RELATIVE_STEP * x.abs()).max(ABSOLUTE_FLOOR);
    match (f(x + h), f(x - h)) {
        (Some(up), Some(down)) => (up - down) / (2.0 * h),
        _ => f64::NAN,
    }
}

struct Probe<'a> {
    model: &'a CompiledModel,
    time: f64,
    values: Vec<f64>,
    states: Vec<f64>,
}

impl Probe<'_> {
    fn d_node_d_value(&mut self, node: &Node, source: usize) -> f64 {
        let x = self.values[source];
        let d = central_difference(x, |v| {
            self.values[source] = v;
            eval_node(self.model, node, self.time, &self.values, &self.states).ok()
        });
        self.values[source] = x;
        d
    }

    fn d_node_d_state(&mut self, node: &Node, state: usize) -> f64 {
        let x = self.states[state];
        let d = central_difference(x, |v| {
            self.states[state] = v;
            eval_node(self.model, node, self.time, &self.values, &self.states).ok()
        });
        self.states[state] = x;
        d
    }

    /// Derivative of a smooth state's rate `(input - state) / time` with respect to an element value.
    fn d_rate_d_value(&mut self, input: &Node, time: Operand, state: usize, source: usize) -> f64 {
        let x = self.values[source];
        let d = central_difference(x, |v| {
            self.values[source] = v;
            let input = eval_node(self.model, input, self.time, &self.values, &self.states).ok()?;
            let tau = operand(time, &self.values);
            (tau != 0.0).then(|| (input - self.states[state]) / tau)
        });
        self.values[source] = x;
        d
    }
}

/// Builds the signed dependency graph at an operating point.
///
/// Every reference in an equation becomes a link. References inside a stock's net flow,
/// or inside the input or time of a smooth(), become integration links into the element
/// that owns them; all others are instantaneous.
pub fn build_causal_graph(
    model: &CompiledModel,
    point: &OperatingPoint,
    overrides: &BTreeMap<String, f64>,
) -> Result<CausalGraph, Fault> {
    let values = evaluate_point(model, point, overrides)?;
    let elements = &model.definition().elements;
    let mut probe = Probe { model, time: point.time, values, states: point.states.clone() };
    let n_stocks = model.stock_count();

    let mut links = Vec::new();
    for (target, element) in elements.iter().enumerate() {
        let node = match element.tag() {
            ElementKindTag::Stock => {
                let k = model.stock_state_of(target).expect("stock has a state");
                &model.stocks[k].net_flow
            }
            ElementKindTag::Flow | ElementKindTag::Auxiliary => {
                model.equations[target].as_ref().expect("algebra element has an equation")
            }
            ElementKindTag::Constant | ElementKindTag::Table => continue,
        };
        let direct_kind =
            if element.tag() == ElementKindTag::Stock { LinkKind::Integration } else { LinkKind::Instantaneous };

        // (source, kind) -> accumulated gain, in first-seen order.
        let mut gains: Vec<((usize, LinkKind), f64)> = Vec::new();
        let mut add = |key: (usize, LinkKind), g: f64| match gains.iter_mut().find(|(k, _)| *k == key) {
            Some((_, total)) => *total += g,
            None => gains.push((key, g)),
        };

        let mut direct = Vec::new();
        node.for_each_value(&mut |j| {
            if !direct.contains(&j) {
                direct.push(j)
            }
        });
        for source in direct {
            let g = probe.d_node_d_value(node, source);
            add((source, direct_kind), g);
        }

        for state in model.smooth_states_of(target).collect::<Vec<_>>() {
            let site = &model.smooths[state - n_stocks];
            let mut sources = Vec::new();
            site.input.for_each_value(&mut |j| {
                if !sources.contains(&j) {
                    sources.push(j)
                }
            });
            if let Operand::Constant(j) = site.time {
                if !sources.contains(&j) {
                    sources.push(j);
                }
            }
            let through_state = probe.d_node_d_state(node, state);
            for source in sources {
                let rate = probe.d_rate_d_value(&site.input, site.time, state, source);
                add((source, LinkKind::Integration), through_state * rate);
            }
        }

        for ((source, kind), gain) in gains {
            links.push(Link {
                source: elements[source].name.clone(),
                target: element.name.clone(),
                kind,
                polarity: Polarity::of_derivative(gain),
                gain,
            });
        }
    }

    Ok(CausalGraph {
        nodes: elements.iter().filter(|e| !e.is_table()).map(|e| e.name.clone()).collect(),
        links,
    })
}
