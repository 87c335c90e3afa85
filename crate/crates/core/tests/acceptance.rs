//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use selfimaging_opo::app::{load, EXIT_OK, EXIT_REPRODUCTION};
use selfimaging_opo::reproduce::{display, reproduce, ReproductionReport, CRITERIA};

fn summary(report: &ReproductionReport, criterion: usize) -> String {
    let mut parts: Vec<String> = report
        .rows_for(criterion)
        .map(|r| {
            format!(
                "{} = {} [{}]{}",
                r.quantity,
                display(r.computed),
                r.tolerance,
                if r.pass { "" } else { " FAILED" }
            )
        })
        .collect();
    parts.extend(
        report
            .timings
            .iter()
            .filter(|t| t.criterion == criterion)
            .map(|t| format!("runtime {:.2} s [< {} s]", t.seconds, t.limit)),
    );
    parts.join("; ")
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("output directory")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("read"))
        })
        .collect()
}

/// Runs `sopo reproduce-paper` twice and compares every output byte.
fn cli_determinism() -> (bool, String) {
    let runs: Vec<(i32, BTreeMap<String, Vec<u8>>)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().expect("tempdir");
            let status = Command::new(env!("CARGO_BIN_EXE_sopo"))
                .args(["reproduce-paper", "--quiet", "--seed", "42", "--out"])
                .arg(dir.path())
                .status()
                .expect("run sopo");
            (status.code().unwrap_or(-1), read_dir(dir.path()))
        })
        .collect();
    let same = runs[0].1 == runs[1].1;
    let codes_ok = runs.iter().all(|(c, _)| *c == EXIT_OK || *c == EXIT_REPRODUCTION);
    let detail = format!(
        "two CLI runs: {} files; identical {same}; exit codes {} {}",
        runs[0].1.len(),
        runs[0].0,
        runs[1].0
    );
    (same && codes_ok && !runs[0].1.is_empty(), detail)
}

fn main() {
    let config = load(None).expect("built-in configuration").config;
    let report = reproduce(&config).expect("reproduction run");
    let mut failed = Vec::new();
    for c in 1..=CRITERIA {
        let (pass, detail) = if c == 11 {
            let (cli, detail) = cli_determinism();
            (report.criterion_passes(11) && cli, format!("{}; {detail}", summary(&report, 11)))
        } else {
            (report.criterion_passes(c), summary(&report, c))
        };
        println!("criterion {c:2}: {}  {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failed.push(c);
        }
    }
    if failed.is_empty() {
        println!("all {CRITERIA} criteria pass");
    } else {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
