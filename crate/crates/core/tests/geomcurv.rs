use covkit::fieldcalc::{Chart, Point};
use covkit::geomcurv::{
    block_vs_direct_residual, curvature_direct, metric_suite, parse_metric_file, BlockSplit, CurvError, Formula,
    MetricField,
};

#[test]
fn round_spheres() {
    let chart = Chart::new(&["th", "ph"]);
    for a in [1.0f64, 2.5] {
        let m = MetricField::parse_diagonal(&chart, &[format!("{a}^2"), format!("{a}^2*sin(th)^2")]).unwrap();
        let curv = curvature_direct(&m).unwrap();
        let b = curv.at(&Point::new(vec![1.1, 0.4])).unwrap();
        assert!((b.scalar - 2.0 / (a * a)).abs() < 1e-12);
        assert!(b.symmetry_residual() < 1e-12);
        // Gaussian curvature 1/a^2: R_{th ph th ph} = a^2 sin^2(th)
        assert!((b.riemann(0, 1, 0, 1) - a * a * 1.1f64.sin().powi(2)).abs() < 1e-12);
    }
}

#[test]
fn suite_block_formulas_match_direct() {
    for entry in metric_suite() {
        let curv = curvature_direct(&entry.spec.metric).unwrap();
        let pts = entry.spec.sample_points(4);
        if let Some(split) = &entry.spec.split {
            let report = block_vs_direct_residual(&curv, split, &pts).unwrap();
            for f in Formula::ALL {
                assert!(report.max(f) < 1e-9, "{} {}", entry.name, f.label());
            }
            assert!(report.to_csv().starts_with("formula,point,residual\n"));
        }
    }
}

#[test]
fn metric_file_errors() {
    match parse_metric_file("coords = x, y\nG(x,x) = 1\nG(y,z) = 1\n") {
        Err(CurvError::File { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let spec = parse_metric_file("coords = x, y\nG(x,x) = 1\nG(x,y) = 0.5\nG(y,y) = 1\n").unwrap();
    assert!(matches!(
        BlockSplit::by_names(&spec.metric, &["x"], &["y"]),
        Err(CurvError::OffBlock { .. })
    ));
    let degenerate = parse_metric_file("coords = x, y\nG(x,x) = 1\nG(x,y) = 1\nG(y,y) = 1\n").unwrap();
    let curv = curvature_direct(&degenerate.metric).unwrap();
    assert!(matches!(curv.at(&Point::new(vec![0.0, 0.0])), Err(CurvError::Degenerate { .. })));
}
