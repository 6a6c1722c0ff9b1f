use std::fmt::Write;

use crate::model::{Element, ElementKind, Expr, ModelDefinition};

pub fn render_model(model: &ModelDefinition) -> String {
    let mut out = String::new();
    for element in &model.elements {
        out.push_str(&render_element(element));
        out.push('\n');
    }
    out
}

pub fn render_element(element: &Element) -> String {
    let name = &element.name;
    let units = &element.units;
    let mut line = match &element.kind {
        ElementKind::Stock { net_flow, initial } => {
            format!("stock {name} = integ({}, {}) [{units}]", render_expr(net_flow), render_expr(initial))
        }
        ElementKind::Flow(e) => format!("flow {name} = {} [{units}]", render_expr(e)),
        ElementKind::Auxiliary(e) => format!("aux {name} = {} [{units}]", render_expr(e)),
        ElementKind::Constant(v) => format!("const {name} = {} [{units}]", number(*v)),
        ElementKind::Table { bounds, points, domain } => {
            let mut s = format!(
                "table {name} bounds ({},{})-({},{}) points",
                number(bounds.min.0),
                number(bounds.min.1),
                number(bounds.max.0),
                number(bounds.max.1)
            );
            for (x, y) in points {
                let _ = write!(s, " ({},{})", number(*x), number(*y));
            }
            let _ = write!(s, " domain [{domain}] range [{units}]");
            s
        }
    };
    if let Some((lo, hi)) = element.range {
        let _ = write!(line, " # range {}..{}", number(lo), number(hi));
    }
    line
}

fn number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v}")
}

pub fn render_expr(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr);
    out
}

fn write_expr(out: &mut String, expr: &Expr) {
    match expr {
        Expr::Literal(v) => out.push_str(&number(*v)),
        Expr::Ref(name) => out.push_str(name),
        Expr::Neg(inner) => {
            out.push('-');
            let wrap = matches!(**inner, Expr::Binary(..) | Expr::Neg(_)) || is_negative_literal(inner);
            write_wrapped(out, inner, wrap);
        }
        Expr::Binary(op, lhs, rhs) => {
            let lhs_wrap = matches!(**lhs, Expr::Binary(l, ..) if l.precedence() < op.precedence());
            let rhs_wrap = matches!(**rhs, Expr::Binary(r, ..) if r.precedence() <= op.precedence());
            write_wrapped(out, lhs, lhs_wrap);
            out.push(' ');
            out.push(op.symbol());
            out.push(' ');
            write_wrapped(out, rhs, rhs_wrap);
        }
        Expr::Smooth { input, time } => call(out, "smooth", input, time),
        Expr::Step { height, start } => call(out, "step", height, start),
        Expr::Lookup { table, arg } => {
            out.push_str("lookup(");
            out.push_str(table);
            out.push_str(", ");
            write_expr(out, arg);
            out.push(')');
        }
    }
}

fn is_negative_literal(e: &Expr) -> bool {
    matches!(e, Expr::Literal(v) if v.is_sign_negative())
}

fn write_wrapped(out: &mut String, expr: &Expr, wrap: bool) {
    if wrap {
        out.push('(');
        write_expr(out, expr);
        out.push(')');
    } else {
        write_expr(out, expr);
    }
}

fn call(out: &mut String, name: &str, a: &Expr, b: &Expr) {
    out.push_str(name);
    out.push('(');
    write_expr(out, a);
    out.push_str(", ");
    write_expr(out, b);
    out.push(')');
}
