//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Runs without the libtest harness so the per-criterion lines are always shown.

use std::time::{Duration, Instant};

use covkit_cli::verify::{self, Check};

const SEED: u64 = 42;

/// Wall-clock budgets per criterion.
fn budget(n: u32) -> Option<Duration> {
    match n {
        1 => Some(Duration::from_secs(10)),
        3 => Some(Duration::from_secs(30)),
        8 => Some(Duration::from_secs(60)),
        9 => Some(Duration::from_secs(30)),
        _ => None,
    }
}

fn describe_failures(checks: &[Check]) -> String {
    checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{} = {:e} (target {})", c.name, c.value, c.target))
        .collect::<Vec<_>>()
        .join("; ")
}

fn determinism() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let path = dir.path().join(format!("verify{run}.csv"));
        let args: Vec<String> = ["covkit", "verify-all", "--seed", "7", "--output", path.to_str().unwrap()]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = covkit_cli::run(&args, &mut out, &mut err);
        if code != 0 {
            return Err(format!("verify-all exited {code}: {}", String::from_utf8_lossy(&err)));
        }
        outputs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    if outputs[0].is_empty() {
        return Err("empty report".into());
    }
    if outputs[0] != outputs[1] {
        return Err("reports differ between runs".into());
    }
    Ok(())
}

fn main() {
    let mut failed = 0;
    for n in 1..=10 {
        let start = Instant::now();
        let checks = verify::run_criterion(n, SEED);
        let elapsed = start.elapsed();
        let mut problems = describe_failures(&checks);
        if let Some(limit) = budget(n) {
            if elapsed > limit {
                problems.push_str(&format!("; runtime {elapsed:?} exceeds {limit:?}"));
            }
        }
        if verify::passed(&checks) && problems.is_empty() {
            println!("criterion {n:>2}: PASS ({} checks, {:.2?})", checks.len(), elapsed);
        } else {
            failed += 1;
            println!("criterion {n:>2}: FAIL {}", problems.trim_start_matches("; "));
        }
    }
    match determinism() {
        Ok(()) => println!("criterion 11: PASS (verify-all reports byte-identical)"),
        Err(e) => {
            failed += 1;
            println!("criterion 11: FAIL {e}");
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
