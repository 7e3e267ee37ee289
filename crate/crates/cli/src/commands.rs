//! One function per subcommand, each turning a validated [`RunConfig`] into
//! a [`Report`].

use std::path::Path;

use covkit::accframe::{solve_frame_map, FrameGrid, FrameOptions, Trajectory};
use covkit::fieldcalc::{Chart, Point, ScalarField, VectorField};
use covkit::flowexp::{
    apply_exponential, integrate_flow_with_phase, pushforward_residual, series_oracle, SeriesLimits, Tolerance,
};
use covkit::geomcurv::{
    block_vs_direct_residual, metric_suite, parse_metric_file, Curvature, Formula, MetricSpec, MAX_EXPRESSION_SIZE,
};
use covkit::nrlimit::{
    barut_flow_identity, contraction_residual, diffusion_defect_scaling, kg_diffusion_residual, RelParams,
};
use covkit::svgen::{
    flat_propagator, halfspace_correlator, halfspace_power_factor, halfspace_preimage, map_halfspace,
    monomial_bracket, primary_transform, primary_vs_flow_residual, sv_chart, weight_form_check, EpsilonFn,
    SvParams,
};

use crate::config::RunConfig;
use crate::verify::{self, Check};
use crate::CliError;

/// A CSV table plus the human summary and the list of violated invariants.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: Vec<String>,
    pub failures: Vec<String>,
}

impl Report {
    fn new(header: &[&str]) -> Self {
        Report {
            header: header.iter().map(|h| h.to_string()).collect(),
            ..Report::default()
        }
    }

    fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }

    /// Records `value <= bound` as an asserted invariant.
    fn assert_at_most(&mut self, invariant: &str, value: f64, bound: f64) {
        if !(value <= bound) {
            self.failures.push(format!("{invariant} = {value:e} exceeds {bound:e}"));
        }
    }
}

/// Full-precision, locale-free number formatting for CSV cells.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn dispatch(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.subcommand.name {
        "flow" => flow(cfg),
        "virasoro" => virasoro(cfg),
        "primary" => primary(cfg),
        "nrlimit" => nrlimit(cfg),
        "curvature" => curvature(cfg),
        "frame" => frame(cfg),
        "correlator" => correlator(cfg),
        "verify-all" => verify_all(cfg),
        other => Err(CliError::Usage(format!("unknown subcommand '{other}'"))),
    }
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

fn tolerance(cfg: &RunConfig) -> Result<Tolerance, CliError> {
    Tolerance::new(cfg.f64("tol")?, cfg.f64("rtol")?, cfg.usize("max-steps")?).map_err(|e| invalid("tol", e.to_string()))
}

fn sv_params(cfg: &RunConfig) -> Result<SvParams, CliError> {
    SvParams::new(cfg.f64("m")?, cfg.f64("chi")?, cfg.f64("n")?).map_err(|e| invalid("n", e.to_string()))
}

fn flow(cfg: &RunConfig) -> Result<Report, CliError> {
    let names = cfg.names("coords")?;
    let chart = Chart::new(&names);
    let comps = cfg.formulas("b")?;
    if comps.len() != chart.dim() {
        return Err(invalid("b", format!("needs {} components, got {}", chart.dim(), comps.len())));
    }
    let b = VectorField::new(chart.clone(), comps).map_err(|e| invalid("b", e.to_string()))?;
    let c = ScalarField::new(chart.clone(), cfg.formula("c")?).map_err(|e| invalid("c", e.to_string()))?;
    let psi = ScalarField::new(chart.clone(), cfg.formula("psi")?).map_err(|e| invalid("psi", e.to_string()))?;
    let coords = cfg.floats("point")?;
    if coords.len() != chart.dim() {
        return Err(invalid("point", format!("needs {} coordinates, got {}", chart.dim(), coords.len())));
    }
    let order = cfg.usize("order")?;
    let max_order = SeriesLimits::default().max_order;
    if order > max_order {
        return Err(invalid("order", format!("must be at most {max_order}")));
    }
    let rho = cfg.f64("rho")?;
    let tol = tolerance(cfg)?;
    let x = Point::new(coords);

    let run = integrate_flow_with_phase(&b, &c, &x, rho, &tol).map_err(CliError::compute)?;
    let exact = apply_exponential(&b, &c, &psi, &x, rho, &tol).map_err(CliError::compute)?;
    let series = series_oracle(&b, &c, &psi, &x, rho, order).map_err(CliError::compute)?;
    let push = pushforward_residual(&b, &x, rho, &tol).map_err(CliError::compute)?;

    let mut r = Report::new(&["quantity", "value"]);
    for (name, v) in names.iter().zip(&run.endpoint.coords) {
        r.row([format!("endpoint_{name}"), num(*v)]);
    }
    r.row(["phase".to_string(), num(run.phase)]);
    r.row(["exponential".to_string(), num(exact)]);
    r.row([format!("series_order_{order}"), num(series)]);
    r.row(["series_difference".to_string(), num((exact - series).abs())]);
    r.row(["pushforward_residual".to_string(), num(push)]);
    r.row(["steps".to_string(), run.steps.to_string()]);
    r.summary.push(format!(
        "flow: exp(rho(B + C)) psi = {exact:.12e} at rho = {rho}; series (order {order}) differs by {:.3e}",
        (exact - series).abs()
    ));
    r.summary.push(format!("flow: pushforward residual {push:.3e}"));
    r.assert_at_most("pushforward_residual", push, cfg.f64("bound")?);
    Ok(r)
}

fn virasoro(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = sv_params(cfg)?;
    let max = i32::try_from(cfg.usize("max-index")?).map_err(|_| invalid("max-index", "too large"))?;
    let chart = sv_chart();
    let tests = cfg
        .formulas("tests")?
        .into_iter()
        .map(|e| ScalarField::new(chart.clone(), e))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| invalid("tests", e.to_string()))?;
    let points = verify::bracket_points(cfg.seed()?, cfg.usize("points")?);
    let bound = cfg.f64("bound")?;
    let mut r = Report::new(&["m_idx", "n_idx", "coefficient", "index", "residual"]);
    let mut worst = 0.0f64;
    for m in -max..=max {
        for n in -max..=max {
            let (coef, k) = monomial_bracket(m, n);
            if (coef, k) != (f64::from(m - n), m + n) {
                r.failures.push(format!("monomial_bracket({m}, {n}) = ({coef}, {k})"));
            }
            let res = verify::monomial_pair_residual(m, n, &p, &tests, &points).map_err(CliError::Compute)?;
            worst = worst.max(res);
            r.assert_at_most(&format!("bracket_residual({m}, {n})"), res, bound);
            r.row([m.to_string(), n.to_string(), num(coef), k.to_string(), num(res)]);
        }
    }
    r.summary.push(format!(
        "virasoro: {} pairs, {} test functions, {} points; largest residual {worst:.3e}",
        (2 * max + 1).pow(2),
        tests.len(),
        points.len()
    ));
    Ok(r)
}

fn primary(cfg: &RunConfig) -> Result<Report, CliError> {
    let raw = cfg.raw("eps").unwrap_or_default();
    let eps = EpsilonFn::parse(raw).map_err(|e| invalid("eps", e.to_string()))?;
    let p = sv_params(cfg)?;
    let pt = cfg.floats("point")?;
    let (t, r0) = (pt[0], pt[1]);
    let rho = cfg.f64("rho")?;
    let psi = ScalarField::new(sv_chart(), cfg.formula("psi")?).map_err(|e| invalid("psi", e.to_string()))?;
    let tol = tolerance(cfg)?;

    let tr = primary_transform(&eps, &p, t, r0, rho, &tol).map_err(CliError::compute)?;
    let flow_res = primary_vs_flow_residual(&eps, &p, &psi, t, r0, &tol).map_err(CliError::compute)?;
    let wf = weight_form_check(&eps, &p, t, r0, &tol).map_err(CliError::compute)?;

    let mut r = Report::new(&["quantity", "value"]);
    for (k, v) in [
        ("t_prime", tr.t_prime),
        ("r_prime", tr.r_prime),
        ("prefactor", tr.prefactor),
        ("flow_residual", flow_res),
        ("jacobian_residual", wf.jacobian_residual),
        ("form_residual", wf.form_residual),
    ] {
        r.row([k.to_string(), num(v)]);
    }
    r.summary.push(format!(
        "primary: rho = {rho}: t' = {:.12}, r' = {:.12}, prefactor = {:.12}",
        tr.t_prime, tr.r_prime, tr.prefactor
    ));
    r.summary.push(format!(
        "primary: flow comparison (rho = 1) {flow_res:.3e}; scale form {:.3e}; dt'/dt {:.3e}",
        wf.form_residual, wf.jacobian_residual
    ));
    let bound = cfg.f64("bound")?;
    r.assert_at_most("flow_residual", flow_res, bound);
    r.assert_at_most("jacobian_residual", wf.jacobian_residual, bound);
    r.assert_at_most("form_residual", wf.form_residual, bound);
    Ok(r)
}

fn nrlimit(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = RelParams::new(cfg.f64("m")?, cfg.f64("c")?, cfg.f64("h")?).map_err(|e| invalid("m", e.to_string()))?;
    let chart = Chart::new(&["t", "x"]);
    let psi = ScalarField::new(chart.clone(), cfg.formula("psi")?).map_err(|e| invalid("psi", e.to_string()))?;
    let pt = cfg.floats("point")?;
    let point = (pt[0], pt[1], pt[2]);
    let bound = cfg.f64("bound")?;
    let mut r = Report::new(&["quantity", "value"]);

    let lift = contraction_residual(&psi, &p, point.0, point.1, point.2).map_err(CliError::compute)?;
    let kg = kg_diffusion_residual(&psi, &p, point).map_err(CliError::compute)?;
    r.row(["contraction_residual".to_string(), num(lift)]);
    r.row(["identity_residual".to_string(), num(kg.identity_residual)]);
    r.row(["diffusion_term".to_string(), num(kg.diffusion_term)]);
    r.row(["relativistic_term".to_string(), num(kg.relativistic_term)]);
    r.assert_at_most("contraction_residual", lift, bound);
    r.assert_at_most("identity_residual", kg.identity_residual, bound);

    let heat = ScalarField::parse(&chart, &verify::heat_kernel(p.m, p.h)).map_err(CliError::compute)?;
    let hp = cfg.floats("heat-point")?;
    let hpoint = (hp[0], hp[1], hp[2]);
    let c_values = cfg.floats("c-values")?;
    let heat_kg = kg_diffusion_residual(&heat, &p, hpoint).map_err(CliError::compute)?;
    let slope = diffusion_defect_scaling(&heat, &p, &c_values, hpoint).map_err(|e| invalid("c-values", e.to_string()))?;
    r.row(["heat_diffusion_term".to_string(), num(heat_kg.diffusion_term)]);
    r.row(["heat_defect_slope".to_string(), num(slope)]);
    r.assert_at_most("heat_diffusion_term", heat_kg.diffusion_term, bound);
    r.assert_at_most("|heat_defect_slope + 2|", (slope + 2.0).abs(), cfg.f64("slope-tol")?);

    let tchart = Chart::new(&["t"]);
    let f = cfg.formula("f")?;
    let bpsi = ScalarField::new(tchart, cfg.formula("barut-psi")?).map_err(|e| invalid("barut-psi", e.to_string()))?;
    let tol = Tolerance::new(1e-12, 1e-12, 1 << 22).map_err(CliError::compute)?;
    let barut =
        barut_flow_identity(&f, &bpsi, &p, cfg.f64("barut-t")?, cfg.f64("rho")?, &tol).map_err(CliError::compute)?;
    r.row(["barut_t_prime".to_string(), num(barut.t_prime)]);
    r.row(["barut_phase".to_string(), num(barut.phase)]);
    // the rest-energy phase makes the values large; compare relative to the closed form
    let scale = barut.phase.exp() * bpsi.evaluate(&Point::new(vec![barut.t_prime])).map_err(CliError::compute)?.abs();
    let relative = if scale > 0.0 { barut.residual / scale } else { barut.residual };
    r.row(["barut_residual".to_string(), num(barut.residual)]);
    r.row(["barut_relative_residual".to_string(), num(relative)]);
    r.row(["barut_phase_residual".to_string(), num(barut.phase_residual)]);
    r.assert_at_most("barut_relative_residual", relative, cfg.f64("barut-bound")?);

    r.summary.push(format!(
        "nrlimit: identity {:.3e}, contraction {lift:.3e}, diffusion defect {:.3e} at c = {}",
        kg.identity_residual,
        kg.diffusion_defect(),
        p.c
    ));
    r.summary.push(format!("nrlimit: heat-kernel defect slope {slope:.4} over c = {c_values:?}"));
    r.summary.push(format!("nrlimit: Barut residual {:.3e} (relative {relative:.3e})", barut.residual));
    Ok(r)
}

fn point_label(p: &Point) -> String {
    p.coords.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
}

fn curvature(cfg: &RunConfig) -> Result<Report, CliError> {
    let metrics: Vec<(String, MetricSpec)> = match cfg.raw("metric") {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
            let spec = parse_metric_file(&text).map_err(|e| invalid("metric", e.to_string()))?;
            let name = Path::new(path).file_stem().map_or("metric".into(), |s| s.to_string_lossy().into_owned());
            vec![(name, spec)]
        }
        None => metric_suite().into_iter().map(|e| (e.name.to_string(), e.spec)).collect(),
    };
    let count = cfg.usize("points")?;
    let (bound, sym_bound) = (cfg.f64("bound")?, cfg.f64("sym-bound")?);
    let mut r = Report::new(&["metric", "quantity", "point", "value"]);
    for (name, spec) in &metrics {
        let curv = Curvature::new(&spec.metric, MAX_EXPRESSION_SIZE).map_err(CliError::compute)?;
        let points = spec.sample_points(count);
        let mut sym = 0.0f64;
        for p in &points {
            let b = curv.at(p).map_err(CliError::compute)?;
            sym = sym.max(b.symmetry_residual());
            r.row([name.clone(), "scalar".into(), point_label(p), num(b.scalar)]);
            r.row([name.clone(), "symmetry".into(), point_label(p), num(b.symmetry_residual())]);
        }
        r.assert_at_most(&format!("{name}: Riemann symmetry residual"), sym, sym_bound);
        let mut line = format!("curvature: {name}: symmetries {sym:.3e}");
        if let Some(split) = &spec.split {
            let report = block_vs_direct_residual(&curv, split, &points).map_err(CliError::compute)?;
            for row in &report.rows {
                r.row([
                    name.clone(),
                    row.formula.label().to_string(),
                    point_label(&Point::new(row.point.clone())),
                    num(row.residual),
                ]);
            }
            r.assert_at_most(&format!("{name}: riemann_block residual"), report.max(Formula::Riemann), bound);
            for f in Formula::ALL {
                line.push_str(&format!(", {} {:.3e}", f.label(), report.max(f)));
            }
        }
        r.summary.push(line);
    }
    Ok(r)
}

fn frame(cfg: &RunConfig) -> Result<Report, CliError> {
    let c = cfg.f64("c")?;
    let traj = Trajectory::new(cfg.formula("f")?, c).map_err(|e| invalid("f", e.to_string()))?;
    let (tr, xr) = (cfg.floats("t-range")?, cfg.floats("x-range")?);
    let grid = FrameGrid::new((tr[0], tr[1]), (xr[0], xr[1]), cfg.usize("nt")?, cfg.usize("nx")?)
        .map_err(|e| invalid("t-range", e.to_string()))?;
    let tol = cfg.f64("tol")?;
    let opts = FrameOptions {
        tol,
        max_iter: cfg.usize("max-iter")?,
        t_ref: cfg.f64("t-ref")?,
    };
    let map = solve_frame_map(&traj, &grid, &opts).map_err(CliError::compute)?;
    let mut r = Report::new(&["t", "x", "x_prime", "t_prime", "v"]);
    for i in 0..grid.nt {
        for j in 0..grid.nx {
            r.row([grid.t(i), grid.x(j), map.x_prime[i][j], map.t_prime[i][j], map.v[i][j]].map(num));
        }
    }
    if !map.converged {
        r.failures.push(format!(
            "fixed point not converged after {} iterations (last change {:e})",
            map.iterations, map.residual
        ));
    }
    r.assert_at_most("boundary |x'| on the worldline", map.boundary_x, tol);
    r.assert_at_most("boundary |t' - tau| on the worldline", map.boundary_t, tol);
    r.summary.push(format!(
        "frame: {}x{} grid, {} iterations, last change {:.3e}, boundary residuals {:.3e} / {:.3e}{}",
        grid.nt,
        grid.nx,
        map.iterations,
        map.residual,
        map.boundary_x,
        map.boundary_t,
        if map.jerk_free { "" } else { " (non-zero jerk: x' does not label material points)" }
    ));
    Ok(r)
}

fn correlator(cfg: &RunConfig) -> Result<Report, CliError> {
    let p = SvParams::new(cfg.f64("m")?, cfg.f64("chi")?, 1.0).map_err(|e| invalid("m", e.to_string()))?;
    let (big_t, big_tp) = (cfg.f64("T")?, cfg.f64("T-prime")?);
    let d = u32::try_from(cfg.usize("d")?).map_err(|_| invalid("d", "too large"))?;
    let (tp, rp) = (cfg.f64("t-prime")?, cfg.f64("r-prime")?);
    let bound = cfg.f64("bound")?;
    let mut r = Report::new(&[
        "sample", "t", "r", "t_prime", "r_prime", "flat", "power", "correlator", "residual",
    ]);

    let value = halfspace_correlator(tp, rp, &p, big_t, big_tp, d).map_err(CliError::compute)?;
    let power = halfspace_power_factor(tp, rp, big_t, big_tp, d).map_err(CliError::compute)?;
    let (t, rr) = halfspace_preimage(tp, rp, big_t, big_tp).map_err(CliError::compute)?;
    let flat = flat_propagator(t, rr, d).map_err(CliError::compute)?;
    r.row(
        [String::from("requested")]
            .into_iter()
            .chain([t, rr, tp, rp, flat, power, value, (power - flat).abs()].map(num)),
    );
    r.summary.push(format!("correlator: C(t' = {tp}, r' = {rp}) = {value:.15}"));

    let mut worst = 0.0f64;
    for (i, s) in verify::correlator_samples(cfg.seed()?, cfg.usize("samples")?).into_iter().enumerate() {
        let (stp, srp) = map_halfspace(s.t, s.r, s.big_t, s.big_t_prime).map_err(CliError::compute)?;
        let sflat = flat_propagator(s.t, s.r, s.d).map_err(CliError::compute)?;
        let spower = halfspace_power_factor(stp, srp, s.big_t, s.big_t_prime, s.d).map_err(CliError::compute)?;
        let scorr = halfspace_correlator(stp, srp, &p, s.big_t, s.big_t_prime, s.d).map_err(CliError::compute)?;
        let res = (spower - sflat).abs();
        worst = worst.max(res);
        r.row([i.to_string()].into_iter().chain([s.t, s.r, stp, srp, sflat, spower, scorr, res].map(num)));
    }
    r.assert_at_most("power factor vs flat propagator", worst, bound);
    r.summary.push(format!("correlator: composition check over sampled points, largest residual {worst:.3e}"));
    Ok(r)
}

/// Which criteria a `criteria` value selects.
pub fn select_criteria(raw: &str) -> Result<Vec<u32>, CliError> {
    if raw.trim() == "all" {
        return Ok(verify::CRITERIA.to_vec());
    }
    let mut out = Vec::new();
    for part in raw.split(',') {
        let n: u32 = part
            .trim()
            .parse()
            .ok()
            .filter(|n| verify::CRITERIA.contains(n))
            .ok_or_else(|| invalid("criteria", format!("'{}' is not a criterion number (1-11)", part.trim())))?;
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn check_row(c: &Check) -> Vec<String> {
    vec![
        c.criterion.to_string(),
        c.name.clone(),
        num(c.value),
        c.target.clone(),
        if c.pass { "pass" } else { "FAIL" }.to_string(),
    ]
}

/// Seeded criteria whose rows are recomputed for the determinism self-check.
const SEEDED: [u32; 2] = [3, 10];

fn verify_all(cfg: &RunConfig) -> Result<Report, CliError> {
    let selected = select_criteria(cfg.raw("criteria").unwrap_or("all"))?;
    let seed = cfg.seed()?;
    let mut r = Report::new(&["criterion", "check", "value", "target", "pass"]);
    let mut seeded_rows: Vec<Vec<String>> = Vec::new();
    for &n in &selected {
        let checks = if n == 11 {
            let rerun: Vec<Vec<String>> = SEEDED
                .iter()
                .flat_map(|&k| verify::run_criterion(k, seed))
                .map(|c| check_row(&c))
                .collect();
            let first: Vec<Vec<String>> = if seeded_rows.len() == rerun.len() {
                seeded_rows.clone()
            } else {
                SEEDED
                    .iter()
                    .flat_map(|&k| verify::run_criterion(k, seed))
                    .map(|c| check_row(&c))
                    .collect()
            };
            vec![Check {
                criterion: 11,
                name: "seeded criteria rows identical on rerun".into(),
                value: if first == rerun { 1.0 } else { 0.0 },
                target: "true".into(),
                pass: first == rerun,
            }]
        } else {
            verify::run_criterion(n, seed)
        };
        if SEEDED.contains(&n) {
            seeded_rows.extend(checks.iter().map(check_row));
        }
        let ok = verify::passed(&checks);
        r.summary.push(format!("criterion {n}: {}", if ok { "PASS" } else { "FAIL" }));
        for c in &checks {
            if !c.pass {
                r.failures.push(format!("criterion {n}: {} = {:e} (target {})", c.name, c.value, c.target));
            }
            r.rows.push(check_row(c));
        }
    }
    Ok(r)
}
