mod common;

use proptest::prelude::*;
use stockflow_core::lang::{parse_model, render_expr, render_model, LangError};
use stockflow_core::model::{BinaryOp, ElementKind, Expr};

#[test]
fn reference_corpus_round_trips() {
    for file in ["supply_demand.sdm", "appendix_equations.sdm"] {
        let src = common::source(file);
        let first = parse_model(&src).unwrap();
        let rendered = render_model(&first);
        let second = parse_model(&rendered).unwrap_or_else(|e| panic!("{file} re-parse: {e}\n{rendered}"));
        assert_eq!(first.elements, second.elements, "{file}");
        assert_eq!(render_model(&second), rendered, "{file}: render is not idempotent");
    }
}

#[test]
fn appendix_model_renders_thirteen_element_lines() {
    let def = parse_model(&common::source("appendix_equations.sdm")).unwrap();
    let rendered = render_model(&def);
    let lines: Vec<&str> = rendered.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 13, "{rendered}");
    let tables = lines.iter().filter(|l| l.starts_with("table ")).count();
    let consts = lines.iter().filter(|l| l.starts_with("const ")).count();
    assert_eq!((tables, consts), (2, 3));
}

#[test]
fn shipped_model_matches_appendix_apart_from_scenario_constants() {
    let shipped = parse_model(&common::source("supply_demand.sdm")).unwrap();
    let appendix = parse_model(&common::source("appendix_equations.sdm")).unwrap();
    let extra: Vec<&str> = shipped
        .elements
        .iter()
        .filter(|e| appendix.element(&e.name).is_none())
        .map(|e| e.name.as_str())
        .collect();
    assert_eq!(extra, ["Shift_Height", "Shift_Start"]);
    for e in &appendix.elements {
        if e.name != "Shift_in_Demand" {
            assert_eq!(Some(e), shipped.element(&e.name), "{}", e.name);
        }
    }
    assert_eq!(shipped.element("Shift_Height").unwrap().constant_value(), Some(10.0));
    assert_eq!(shipped.element("Shift_Start").unwrap().constant_value(), Some(10.0));
}

#[test]
fn table_points_are_the_curve_and_bounds_are_kept() {
    let def = parse_model(&common::source("supply_demand.sdm")).unwrap();
    match &def.element("Demand_Schedule").unwrap().kind {
        ElementKind::Table { bounds, points, .. } => {
            assert_eq!(points, &[(0.0, 100.0), (50.0, 0.0)]);
            assert_eq!((bounds.min, bounds.max), ((0.0, 0.0), (50.0, 100.0)));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn error_spans_point_inside_the_source() {
    let broken = [
        "aux X = (1 +",
        "const a = 1 [day]\nconst a = 2 [day]",
        "table t bounds (0,0)-(1,1) points (1,0) (0,1) domain [x] range [y]",
        "const a = 1 [day^]",
        "stock s = integ(1) [x]",
        "aux y = 2 * * 3 [x]",
        "flow f = smooth(1, ) [x]",
        "const = 3 [x]",
        "aux y = 1 [x",
        "\n\n   aux y = lookup(,1) [x]",
    ];
    for src in broken {
        let err: LangError = parse_model(src).expect_err(src);
        let span = err.span();
        let lines: Vec<&str> = src.split('\n').collect();
        assert!(span.line >= 1 && span.line <= lines.len(), "{src:?}: {span}");
        let width = lines[span.line - 1].chars().count().max(1);
        assert!(span.column >= 1 && span.column <= width, "{src:?}: {span} width {width}");
    }
}

fn name() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "Price", "x_1", "_tmp", "Shift_in_Demand"]).prop_map(String::from)
}

fn literal() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..1000).prop_map(f64::from),
        (0u32..100000).prop_map(|n| f64::from(n) / 64.0),
        (1e-3f64..1e6),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![literal().prop_map(Expr::Literal), name().prop_map(Expr::Ref)];
    leaf.prop_recursive(5, 48, 3, |inner| {
        let op = prop::sample::select(vec![BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div]);
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            (inner.clone(), name()).prop_map(|(i, t)| Expr::Smooth { input: Box::new(i), time: Box::new(Expr::Ref(t)) }),
            (literal(), literal()).prop_map(|(h, t)| Expr::Step {
                height: Box::new(Expr::Literal(h)),
                start: Box::new(Expr::Literal(t)),
            }),
            (name(), inner).prop_map(|(t, a)| Expr::Lookup { table: t, arg: Box::new(a) }),
        ]
    })
}

/// The parser folds `-<literal>` into a negative literal; apply the same folding.
fn fold(e: Expr) -> Expr {
    match e {
        Expr::Neg(inner) => match fold(*inner) {
            Expr::Literal(v) => Expr::Literal(-v),
            other => Expr::Neg(Box::new(other)),
        },
        Expr::Binary(op, l, r) => Expr::binary(op, fold(*l), fold(*r)),
        Expr::Smooth { input, time } => Expr::Smooth { input: Box::new(fold(*input)), time: Box::new(fold(*time)) },
        Expr::Step { height, start } => Expr::Step { height: Box::new(fold(*height)), start: Box::new(fold(*start)) },
        Expr::Lookup { table, arg } => Expr::Lookup { table, arg: Box::new(fold(*arg)) },
        leaf => leaf,
    }
}

proptest! {
    #[test]
    fn rendered_expressions_parse_back_to_the_same_tree(e in expr()) {
        let e = fold(e);
        let text = render_expr(&e);
        let src = format!("aux y = {text} [x]");
        let def = parse_model(&src).map_err(|err| TestCaseError::fail(format!("{src}: {err}")))?;
        prop_assert_eq!(def.elements[0].equation(), Some(&e), "{}", src);
    }

    #[test]
    fn parser_never_panics_and_spans_stay_inside(src in "[a-z ()=+*/,.0-9\\[\\]#\n-]{0,60}") {
        if let Err(err) = parse_model(&src) {
            let span = err.span();
            let lines: Vec<&str> = src.split('\n').collect();
            prop_assert!(span.line >= 1 && span.line <= lines.len());
            prop_assert!(span.column >= 1 && span.column <= lines[span.line - 1].chars().count().max(1));
        }
    }
}
