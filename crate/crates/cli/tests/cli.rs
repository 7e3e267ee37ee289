use std::path::Path;

use covkit::svgen::{primary_transform, EpsilonFn, SvParams};
use covkit::flowexp::Tolerance;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Outcome {
    let args: Vec<String> = std::iter::once("covkit").chain(args.iter().copied()).map(String::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = covkit_cli::run(&args, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

/// Data rows of a report, skipping the comment line and the header.
fn table(csv: &str) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(csv.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn quantity(csv: &str, key: &str) -> f64 {
    table(csv)
        .into_iter()
        .find(|row| row[0] == key)
        .unwrap_or_else(|| panic!("no row {key}"))[1]
        .parse()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_2() {
    let o = run(&["dance"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("dance"), "{}", o.stderr);
    assert_eq!(run(&[]).code, 2);
    assert_eq!(run(&["flow", "--no-such-flag", "1"]).code, 2);
}

#[test]
fn help_exits_0() {
    let o = run(&["--help"]);
    assert_eq!(o.code, 0);
    assert!(o.stdout.contains("virasoro") && o.stdout.contains("verify-all"));
    let o = run(&["primary", "--help"]);
    assert_eq!(o.code, 0);
    assert!(o.stdout.contains("--eps"));
}

#[test]
fn virasoro_example() {
    let o = run(&["virasoro", "--max-index", "3"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.starts_with("# schema=virasoro/1 seed=42\nm_idx,n_idx,coefficient,index,residual\n"));
    let rows = table(&o.stdout);
    assert_eq!(rows.len(), 49);
    for row in rows {
        let (m, n): (i32, i32) = (row[0].parse().unwrap(), row[1].parse().unwrap());
        assert_eq!(row[2].parse::<f64>().unwrap(), f64::from(m - n));
        assert_eq!(row[3].parse::<i32>().unwrap(), m + n);
        assert!(row[4].parse::<f64>().unwrap() <= 1e-8);
    }
    // summary goes to stderr when the CSV is on stdout
    assert!(o.stderr.contains("all checks passed"));
}

#[test]
fn primary_example() {
    let o = run(&["primary", "--eps", "1 + 0.1*t + 0.05*t^2", "--chi", "0.7", "--m", "1.3", "--point", "0.5,1.2"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let eps = EpsilonFn::polynomial(&[1.0, 0.1, 0.05]).unwrap();
    let p = SvParams::new(1.3, 0.7, 1.0).unwrap();
    let tol = Tolerance::new(1e-13, 1e-13, 1 << 22).unwrap();
    let want = primary_transform(&eps, &p, 0.5, 1.2, 1.0, &tol).unwrap();
    assert_eq!(quantity(&o.stdout, "t_prime"), want.t_prime);
    assert_eq!(quantity(&o.stdout, "r_prime"), want.r_prime);
    assert_eq!(quantity(&o.stdout, "prefactor"), want.prefactor);
    assert!(quantity(&o.stdout, "flow_residual") <= 1e-7);
}

#[test]
fn output_file_and_summary_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let o = run(&["correlator", "--output", path.to_str().unwrap()]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.contains("correlator: C(t' = "));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("# schema=correlator/1 seed=42\n"));
    assert_eq!(table(&csv).len(), 101);
}

#[test]
fn minimal_config_applies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "# only the subcommand\nsubcommand = primary\n");
    let from_file = run(&["--config", &cfg]);
    let plain = run(&["primary"]);
    assert_eq!(from_file.code, 0, "{}", from_file.stderr);
    assert_eq!(from_file.stdout, plain.stdout);
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.cfg",
        "seed = 9\n[primary]\nrho = 0.5\npoint = 0.4, 1.0\n",
    );
    let o = run(&["primary", "--config", &cfg, "--rho", "0.25"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.starts_with("# schema=primary/1 seed=9\n"));
    let eps = EpsilonFn::polynomial(&[1.0, 0.1, 0.05]).unwrap();
    let p = SvParams::new(1.3, 0.7, 1.0).unwrap();
    let tol = Tolerance::new(1e-13, 1e-13, 1 << 22).unwrap();
    let want = primary_transform(&eps, &p, 0.4, 1.0, 0.25, &tol).unwrap();
    assert_eq!(quantity(&o.stdout, "t_prime"), want.t_prime);
}

#[test]
fn negative_tolerance_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "subcommand = flow\ntol = -1e-9\n");
    let o = run(&["--config", &cfg]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("'tol'"), "{}", o.stderr);
    let o = run(&["frame", "--nt", "1"]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("'nt'"), "{}", o.stderr);
}

#[test]
fn config_parse_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "subcommand = flow\n\nthis is not a setting\n");
    let o = run(&["--config", &cfg]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("config line 3"), "{}", o.stderr);
    let o = run(&["--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.code, 2);
}

#[test]
fn failed_invariant_exits_1_and_is_named() {
    let o = run(&["flow", "--bound", "1e-30"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("FAILED: pushforward_residual"), "{}", o.stderr);
    // a superluminal worldline is a computation failure
    let o = run(&["frame", "--f", "2*t"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("reaches c"), "{}", o.stderr);
}

#[test]
fn curvature_from_metric_file() {
    let dir = tempfile::tempdir().unwrap();
    let metric = write(
        dir.path(),
        "s2.metric",
        "coords = th, ph\nparam a = 2\nsplit = th | ph\nregion = 0.5:2.5, 0:6\nG(th,th) = a^2\nG(ph,ph) = a^2*sin(th)^2\n",
    );
    let o = run(&["curvature", "--metric", &metric, "--points", "5"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let rows = table(&o.stdout);
    let scalars: Vec<f64> = rows.iter().filter(|r| r[1] == "scalar").map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(scalars.len(), 5);
    assert!(scalars.iter().all(|r| (r - 0.5).abs() < 1e-12));
    assert!(rows.iter().all(|r| r[0] == "s2"));
    assert!(rows.iter().any(|r| r[1] == "scalar_block"));
}

#[test]
fn frame_constant_velocity_is_lorentz() {
    let o = run(&["frame", "--f", "0.6*t", "--nt", "11", "--nx", "11"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    for row in table(&o.stdout) {
        let v: Vec<f64> = row.iter().map(|c| c.parse().unwrap()).collect();
        assert!((v[2] - 1.25 * (v[1] - 0.6 * v[0])).abs() < 1e-12);
        assert!((v[3] - 1.25 * (v[0] - 0.6 * v[1])).abs() < 1e-12);
    }
}

#[test]
fn nrlimit_and_flow_defaults_pass() {
    let o = run(&["nrlimit"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!((quantity(&o.stdout, "heat_defect_slope") + 2.0).abs() < 0.05);
    let o = run(&["flow", "--coords", "x", "--b", "1", "--c", "0", "--psi", "x^2", "--point", "0.5", "--rho", "0.25"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!((quantity(&o.stdout, "exponential") - 0.5625).abs() < 1e-12);
    assert!((quantity(&o.stdout, "endpoint_x") - 0.75).abs() < 1e-14);
}

#[test]
fn seeds_are_recorded_and_reproducible() {
    let a = run(&["virasoro", "--max-index", "1", "--seed", "3"]);
    let b = run(&["virasoro", "--max-index", "1", "--seed", "3"]);
    assert_eq!(a.stdout, b.stdout);
    assert!(a.stdout.starts_with("# schema=virasoro/1 seed=3\n"));
}

#[test]
fn verify_all_subset() {
    let o = run(&["verify-all", "--criteria", "2,10"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let rows = table(&o.stdout);
    assert!(rows.iter().all(|r| r[0] == "2" || r[0] == "10"));
    assert!(rows.iter().all(|r| r[4] == "pass"));
    assert_eq!(run(&["verify-all", "--criteria", "12"]).code, 2);
}
