use proptest::prelude::*;

use super::*;

fn ns(names: &[&str]) -> Namespace {
    Namespace::new(names.iter().copied())
}

fn run(src: &str, args: Vec<Value>) -> Result<Value, EvalError> {
    let ast = parse(src, &Namespace::default()).expect("parses");
    evaluate(&ast, args, &CapabilityTable::new(), DEFAULT_STEP_BUDGET)
}

#[test]
fn identity_parses_to_single_return() {
    let ast = parse("fn id(x: int) -> int { return x }", &Namespace::default()).unwrap();
    assert_eq!(ast.name, "id");
    assert_eq!(ast.body, vec![Stmt::Return(Expr::Var("x".into()))]);
    assert_eq!(pretty_print(&ast), "fn id(x: int) -> int {\n    return x\n}\n");
}

#[test]
fn identity_on_seven() {
    assert_eq!(run("fn id(x: int) -> int { return x }", vec![Value::Int(7)]), Ok(Value::Int(7)));
}

#[test]
fn undeclared_capability_is_unresolved() {
    let err = parse("fn f() -> int { return read_speed(1) }", &ns(&["read_clock"])).unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::Unresolved);
    assert_eq!((err.line, err.col), (1, 24));
}

#[test]
fn unbound_variable_is_unresolved() {
    let err = parse("fn f() -> int {\n  return y\n}", &Namespace::default()).unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::Unresolved);
    assert_eq!(err.line, 2);
}

#[test]
fn banned_constructs() {
    for src in [
        "fn f(x: int) -> int { return f(x) }",
        "fn f(x: int) -> int { while x > 0 { x = x - 1 } return x }",
        "fn f(x: int) -> int { loop { } return x }",
    ] {
        let err = parse(src, &Namespace::default()).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Banned, "{src}");
    }
}

#[test]
fn let_is_not_visible_in_its_own_initialiser() {
    let err = parse("fn f() -> int { let a = a return 1 }", &Namespace::default()).unwrap_err();
    assert_eq!(err.kind, ParseErrorKind::Unresolved);
}

#[test]
fn for_each_over_ten_elements_fits_small_budget() {
    let src = "fn total(xs: list[int]) -> int {
        let s = 0
        for x in xs {
            s = s + x
        }
        return s
    }";
    let ast = parse(src, &Namespace::default()).unwrap();
    let xs = Value::List((1..=10).map(Value::Int).collect());
    let (r, used) = evaluate_metered(&ast, vec![xs], &CapabilityTable::new(), 1000);
    assert_eq!(r, Ok(Value::Int(55)));
    assert!(used <= 1000);
}

#[test]
fn division_by_zero_is_an_error() {
    let err = run("fn d(a: int, b: int) -> int { return a / b }", vec![3.into(), 0.into()]).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::Arithmetic);
    let err = run("fn d(a: int) -> int { return a % 0 }", vec![3.into()]).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::Arithmetic);
}

#[test]
fn integer_division_truncates_toward_zero() {
    let src = "fn d(a: int, b: int) -> int { return a / b }";
    assert_eq!(run(src, vec![(-7).into(), 2.into()]), Ok(Value::Int(-3)));
    assert_eq!(run(src, vec![7.into(), (-2).into()]), Ok(Value::Int(-3)));
}

#[test]
fn overflow_is_an_error() {
    let err = run("fn f(a: int) -> int { return a * a }", vec![i64::MAX.into()]).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::Arithmetic);
}

#[test]
fn budget_exhaustion_terminates() {
    let src = "fn spin(n: int) -> int {
        let c = 0
        for i in range(0, n) {
            for j in range(0, n) {
                c = c + 1
            }
        }
        return c
    }";
    let ast = parse(src, &Namespace::default()).unwrap();
    let (r, used) = evaluate_metered(&ast, vec![1000.into()], &CapabilityTable::new(), 5000);
    assert_eq!(r.unwrap_err().kind, EvalErrorKind::BudgetExhausted);
    assert!(used <= 5000 + 1000);
}

#[test]
fn type_errors_are_reported() {
    let err = run("fn f(a: int) -> int { return a + true }", vec![1.into()]).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::Type);
    let err = run("fn f(a: int) -> bool { return a }", vec![1.into()]).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::Type);
    let err = run("fn f(a: int) -> int { return a }", vec![true.into()]).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::Type);
    let err = run("fn f(a: int) -> int { return a }", vec![]).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::Arity);
}

#[test]
fn missing_return_is_reported() {
    let err = run("fn f(a: int) -> int { if a > 0 { return a } }", vec![0.into()]).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::MissingReturn);
}

#[test]
fn host_capabilities_and_function_calls() {
    let mut caps = CapabilityTable::new();
    caps.host("grid_width", |_| Ok(Value::Int(12)));
    caps.host("cell_ok", |args| match args {
        [Value::Coord(x, y)] if *x >= 0 && *y >= 0 && *x < 12 && *y < 12 => Ok(Value::Bool(true)),
        [Value::Coord(..)] => Err("coordinate off grid".into()),
        _ => Err("bad arguments".into()),
    });
    let helper = parse("fn double(x: int) -> int { return x * 2 }", &caps.namespace()).unwrap();
    caps.function(std::sync::Arc::new(helper));
    let main = parse(
        "fn main(c: coord) -> int { if cell_ok(c) { return double(grid_width()) } else { return 0 } }",
        &caps.namespace(),
    )
    .unwrap();
    assert_eq!(evaluate(&main, vec![Value::Coord(1, 1)], &caps, 100), Ok(Value::Int(24)));
    let err = evaluate(&main, vec![Value::Coord(20, 1)], &caps, 100).unwrap_err();
    assert_eq!(err.kind, EvalErrorKind::Capability);
}

#[test]
fn records_lists_and_builtins() {
    let src = r#"
    /// Picks the nearest cell.
    fn nearest(from: coord, cells: list[coord]) -> record {
        let keys = []
        for c in cells {
            keys = append(keys, manhattan(from, c))
        }
        let sorted = order_by(cells, keys)
        let r = {cell: at(sorted, 0), n: len(cells), tag: @near, label: "a\"b"}
        return set(r, "ok", contains(cells, (1, 1)) and not in_rect(from, (5, 5), (6, 6)))
    }"#;
    let ast = parse(src, &Namespace::default()).unwrap();
    assert_eq!(ast.doc, vec!["Picks the nearest cell.".to_string()]);
    let cells = Value::List(vec![Value::Coord(4, 4), Value::Coord(1, 1), Value::Coord(2, 0)]);
    let out = evaluate(&ast, vec![Value::Coord(0, 0), cells], &CapabilityTable::new(), 1000).unwrap();
    assert_eq!(out.field("cell"), Some(&Value::Coord(1, 1)));
    assert_eq!(out.field("n"), Some(&Value::Int(3)));
    assert_eq!(out.field("tag"), Some(&Value::Ident("near".into())));
    assert_eq!(out.field("label"), Some(&Value::Text("a\"b".into())));
    assert_eq!(out.field("ok"), Some(&Value::Bool(true)));
    let again = parse(&pretty_print(&ast), &Namespace::default()).unwrap();
    assert_eq!(again, ast);
}

#[test]
fn else_if_chain_round_trips() {
    let src = "fn sign(x: int) -> int { if x > 0 { return 1 } else if x < 0 { return -1 } else { return 0 } }";
    let ast = parse(src, &Namespace::default()).unwrap();
    let text = pretty_print(&ast);
    assert!(text.contains("} else if x < 0 {"));
    assert_eq!(parse(&text, &Namespace::default()).unwrap(), ast);
    let caps = CapabilityTable::new();
    assert_eq!(evaluate(&ast, vec![(-4).into()], &caps, 100), Ok(Value::Int(-1)));
}

#[test]
fn plain_comments_are_dropped_and_canonical_text_is_stable() {
    let a = parse("fn f(x: int)->int{ // note\n let y=x+1\n return y*2 }", &Namespace::default()).unwrap();
    let b = parse("fn f(x: int) -> int {\n    let y = x + 1\n    return y * 2\n}\n", &Namespace::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(pretty_print(&a), pretty_print(&b));
}

#[test]
fn header_record_needs_parentheses() {
    let src = "fn f(x: int) -> int { for r in [{a: 1}] { return r.a } return x }";
    let ast = parse(src, &Namespace::default()).unwrap();
    let bad = "fn f(x: int) -> int { if {a: 1}.a == 1 { return 1 } return x }";
    assert!(parse(bad, &Namespace::default()).is_err());
    let ok = "fn f(x: int) -> int { if ({a: 1}).a == 1 { return 1 } return x }";
    let t = parse(ok, &Namespace::default()).unwrap();
    assert_eq!(parse(&pretty_print(&t), &Namespace::default()).unwrap(), t);
    assert_eq!(parse(&pretty_print(&ast), &Namespace::default()).unwrap(), ast);
}

#[test]
fn literal_round_trips_values() {
    let v = Value::record([
        ("a".to_string(), Value::Int(-3)),
        ("b".to_string(), Value::Coord(-1, 2)),
        ("c".to_string(), Value::List(vec![Value::Real(-0.5), Value::Ident("x".into())])),
    ]);
    let src = format!("fn k() -> record {{ return {} }}", render_expr(&literal(&v)));
    assert_eq!(run(&src, vec![]), Ok(v));
}

/// Field and key names the lexer reads as identifiers.
fn arb_name() -> impl Strategy<Value = String> {
    "[a-z]{1,3}".prop_filter("keyword", |n| !RESERVED.contains(&n.as_str()))
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0i64..1000).prop_map(Expr::Int),
        (0u32..10000).prop_map(|n| Expr::Real(n as f64 / 8.0)),
        any::<bool>().prop_map(Expr::Bool),
        "[a-z \"\\\\]{0,6}".prop_map(Expr::Text),
        "[a-z]{1,4}".prop_map(Expr::Ident),
        Just(Expr::Var("x".into())),
    ];
    leaf.prop_recursive(5, 48, 4, |inner| {
        let ops = prop_oneof![
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div),
            Just(BinaryOp::Rem),
            Just(BinaryOp::Eq),
            Just(BinaryOp::Lt),
            Just(BinaryOp::Ge),
            Just(BinaryOp::And),
            Just(BinaryOp::Or),
        ];
        prop_oneof![
            (ops, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
            inner.clone().prop_map(|e| Expr::Unary(UnaryOp::Neg, Box::new(e))),
            inner.clone().prop_map(|e| Expr::Unary(UnaryOp::Not, Box::new(e))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Coord(Box::new(a), Box::new(b))),
            prop::collection::vec(inner.clone(), 0..3).prop_map(Expr::List),
            prop::collection::btree_map(arb_name(), inner.clone(), 0..3)
                .prop_map(|m| Expr::Record(m.into_iter().collect())),
            (inner.clone(), arb_name()).prop_map(|(e, f)| Expr::Field(Box::new(e), f)),
            prop::collection::vec(inner, 2..3).prop_map(|a| Expr::Call("min".into(), a)),
        ]
    })
}

fn wrap(e: Expr, cond: Expr) -> FunctionAst {
    FunctionAst {
        name: "f".into(),
        doc: vec!["generated".into()],
        params: vec![Param { name: "x".into(), ty: TypeExpr::Int }],
        ret: TypeExpr::Int,
        body: vec![
            Stmt::Let { name: "a".into(), value: e },
            Stmt::If {
                cond: cond.clone(),
                then: vec![Stmt::Assign { name: "a".into(), value: Expr::Var("x".into()) }],
                otherwise: None,
            },
            Stmt::For { var: "i".into(), iter: cond, body: vec![] },
            Stmt::Return(Expr::Var("x".into())),
        ],
    }
}

proptest! {
    #[test]
    fn pretty_print_round_trips(e in arb_expr(), c in arb_expr()) {
        let ast = wrap(e, c);
        let text = pretty_print(&ast);
        let back = parse(&text, &Namespace::default()).map_err(|err| {
            TestCaseError::fail(format!("{err}\n{text}"))
        })?;
        prop_assert_eq!(&back, &ast);
        prop_assert_eq!(pretty_print(&back), text);
    }

    #[test]
    fn byte_edits_never_yield_ill_formed_trees(pos in 0usize..60, byte in 32u8..127) {
        let src = "fn f(x: int) -> int {\n    let y = [x, 2]\n    return at(y, 0) + 1\n}\n";
        let mut bytes = src.as_bytes().to_vec();
        let p = pos % bytes.len();
        bytes[p] = byte;
        let edited = String::from_utf8(bytes).unwrap();
        if let Ok(ast) = parse(&edited, &Namespace::default()) {
            let again = parse(&pretty_print(&ast), &Namespace::default()).unwrap();
            prop_assert_eq!(again, ast);
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_bounded(n in 0i64..200, budget in 1u64..400) {
        let src = "fn s(n: int) -> int { let t = 0 for i in range(0, n) { t = t + i * i } return t }";
        let ast = parse(src, &Namespace::default()).unwrap();
        let caps = CapabilityTable::new();
        let a = evaluate_metered(&ast, vec![n.into()], &caps, budget);
        let b = evaluate_metered(&ast, vec![n.into()], &caps, budget);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.1 <= budget + n as u64 + 2);
    }
}
