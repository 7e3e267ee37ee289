use covkit::fieldcalc::{parse_expression, Chart, ExprError, Point, ScalarField, VectorField};
use covkit::Dd;

#[test]
fn parse_evaluate_and_differentiate() {
    let chart = Chart::new(&["x", "y"]);
    let e = chart.parse("x^2*y + sin(x)*exp(y) - 3/y").unwrap();
    let (x, y) = (0.7f64, 1.3f64);
    let want = x * x * y + x.sin() * y.exp() - 3.0 / y;
    assert!((e.evaluate(&chart, &[x, y]).unwrap() - want).abs() < 1e-14);
    let dx = e.diff("x").evaluate(&chart, &[x, y]).unwrap();
    assert!((dx - (2.0 * x * y + x.cos() * y.exp())).abs() < 1e-14);
    let dy = e.diff("y").evaluate(&chart, &[x, y]).unwrap();
    assert!((dy - (x * x + x.sin() * y.exp() + 3.0 / (y * y))).abs() < 1e-13);
    // mixed partials agree
    let a = e.diff("x").diff("y").evaluate(&chart, &[x, y]).unwrap();
    let b = e.diff("y").diff("x").evaluate(&chart, &[x, y]).unwrap();
    assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
}

#[test]
fn double_double_evaluation_is_more_accurate() {
    let chart = Chart::new(&["x"]);
    let e = chart.parse("exp(x) - 1 - x").unwrap();
    let x = 1e-5f64;
    let exact = x * x / 2.0 + x * x * x / 6.0 + x.powi(4) / 24.0;
    let dd = e.evaluate(&chart, &[Dd::new(x)]).unwrap().to_f64();
    assert!((dd - exact).abs() <= 1e-15 * exact);
}

#[test]
fn errors_are_reported() {
    assert!(matches!(
        parse_expression("x + q", &["x"]),
        Err(ExprError::UnknownIdentifier { ref name, .. }) if name == "q"
    ));
    assert!(matches!(parse_expression("x +", &["x"]), Err(ExprError::Syntax { .. })));
    let chart = Chart::new(&["x"]);
    let log = chart.parse("log(x)").unwrap();
    assert!(matches!(log.evaluate(&chart, &[-1.0]), Err(ExprError::Domain { .. })));
    let f = ScalarField::parse(&chart, "x").unwrap();
    assert!(matches!(
        f.evaluate(&Point::new(vec![1.0, 2.0])),
        Err(ExprError::DimensionMismatch { expected: 1, got: 2 })
    ));
}

#[test]
fn vector_field_acts_as_derivation() {
    let chart = Chart::new(&["x", "y"]);
    let b = VectorField::parse(&chart, &["y", "-x"]).unwrap();
    // the rotation generator annihilates x^2 + y^2
    let r2 = chart.parse("x^2 + y^2").unwrap();
    let applied = b.apply(&r2);
    for p in [[0.3, -0.4], [1.5, 2.0]] {
        assert!(applied.evaluate(&chart, &p).unwrap().abs() < 1e-14);
    }
    assert_eq!(b.evaluate(&Point::new(vec![2.0, 3.0])).unwrap(), vec![3.0, -2.0]);
}
