use crate::compile::{CompiledModel, Node, Operand};
use crate::model::{BinaryOp, ElementKind};

use super::lookup::lookup_points;
use super::FaultKind;

#[inline]
pub(crate) fn operand(op: Operand, values: &[f64]) -> f64 {
    match op {
        Operand::Literal(v) => v,
        Operand::Constant(i) => values[i],
    }
}

pub(crate) fn eval_node(
    model: &CompiledModel,
    node: &Node,
    time: f64,
    values: &[f64],
    states: &[f64],
) -> Result<f64, FaultKind> {
    let v = match node {
        Node::Literal(v) => *v,
        Node::Value(i) => values[*i],
        Node::Smooth(s) => states[*s],
        Node::Neg(inner) => -eval_node(model, inner, time, values, states)?,
        Node::Binary(op, l, r) => {
            let a = eval_node(model, l, time, values, states)?;
            let b = eval_node(model, r, time, values, states)?;
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Div => {
                    if b == 0.0 {
                        return Err(FaultKind::DivisionByZero);
                    }
                    a / b
                }
            }
        }
        Node::Step { height, start } => {
            if time >= operand(*start, values) {
                operand(*height, values)
            } else {
                0.0
            }
        }
        Node::Lookup { table, arg } => {
            let x = eval_node(model, arg, time, values, states)?;
            if !x.is_finite() {
                return Err(FaultKind::LookupNonFinite);
            }
            let ElementKind::Table { points, .. } = &model.definition().elements[*table].kind else {
                unreachable!("lookup target checked at compile time")
            };
            lookup_points(points, x)
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(FaultKind::NonFinite)
    }
}
