//! One PASS/FAIL line per acceptance criterion. Criteria 1–7 and 9 come
//! from two `selftest --threads 1` runs of the binary, whose artifacts also
//! give the determinism check; the bubbling-rate experiment runs in process.

use qcurv::suites::{bubbling_rate_suite, Check, RateExperiment};
use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

const BUDGET_S: [(u8, f64); 9] = [(1, 10.0), (2, 60.0), (3, 1.0), (4, 120.0), (5, 600.0), (6, 300.0), (7, 60.0), (8, 1800.0), (9, 1.0)];

const TITLES: [(u8, &str); 10] = [
    (1, "operator suite"),
    (2, "Green's function suite"),
    (3, "bubble equation"),
    (4, "reduced-functional identities"),
    (5, "gradient-expansion harness"),
    (6, "quadratic form"),
    (7, "bubble fitting"),
    (8, "bubbling-rate experiment"),
    (9, "degree suite"),
    (10, "determinism"),
];

fn title(c: u8) -> &'static str {
    TITLES.iter().find(|t| t.0 == c).map(|t| t.1).unwrap_or("?")
}

fn selftest(dir: &Path) -> Result<(Vec<Check>, BTreeMap<u8, f64>), String> {
    // extra artifacts for the byte comparison
    for cmd in ["critpts", "green"] {
        Command::new(env!("CARGO_BIN_EXE_qcurv")).args([cmd, "--threads", "1", "--seed", "7", "--out"]).arg(dir).output().map_err(|e| e.to_string())?;
    }
    let out = Command::new(env!("CARGO_BIN_EXE_qcurv"))
        .args(["selftest", "--threads", "1", "--seed", "7", "--out"])
        .arg(dir)
        .env("QCURV_LOG", "info")
        .output()
        .map_err(|e| e.to_string())?;
    let mut times = BTreeMap::new();
    for line in String::from_utf8_lossy(&out.stderr).lines() {
        if let Some(rest) = line.split("suite ").nth(1) {
            let mut it = rest.trim_end_matches(" s").split(": ");
            if let (Some(c), Some(t)) = (it.next(), it.next()) {
                if let (Ok(c), Ok(t)) = (c.parse(), t.parse()) {
                    times.insert(c, t);
                }
            }
        }
    }
    let text = std::fs::read_to_string(dir.join("selftest.json")).map_err(|e| format!("selftest.json: {e} (exit {:?})", out.status.code()))?;
    let checks = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok((checks, times))
}

fn report(c: u8, checks: &[Check], seconds: f64) {
    let budget = BUDGET_S.iter().find(|b| b.0 == c).map(|b| b.1).unwrap_or(f64::INFINITY);
    let mine: Vec<&Check> = checks.iter().filter(|x| x.criterion == c).collect();
    let ok = !mine.is_empty() && mine.iter().all(|x| x.pass) && seconds < budget;
    println!("{} {c}: {} ({seconds:.1} s, budget {budget} s)", if ok { "PASS" } else { "FAIL" }, title(c));
    for x in mine {
        let tag = if x.name.starts_with("info: ") { "info" } else if x.pass { "ok" } else { "failed" };
        println!("    [{tag}] {}: {}", x.name.trim_start_matches("info: "), x.detail);
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok()).map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap_or_default())).collect())
        .unwrap_or_default()
}

fn main() {
    let (d1, d2) = (tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir"));
    let first = selftest(d1.path());
    let second = selftest(d2.path());
    let t0 = Instant::now();
    let rate = bubbling_rate_suite(&RateExperiment::default()).unwrap_or_else(|e| vec![Check {
        criterion: 8,
        name: "experiment ran".into(),
        pass: false,
        detail: e.to_string(),
    }]);
    let rate_s = t0.elapsed().as_secs_f64();
    for c in 1..=9u8 {
        if c == 8 {
            report(8, &rate, rate_s);
            continue;
        }
        match &first {
            Ok((checks, times)) => report(c, checks, times.get(&c).copied().unwrap_or(f64::NAN)),
            Err(e) => println!("FAIL {c}: {} (selftest did not run: {e})", title(c)),
        }
    }

    let same = match (&first, &second) {
        (Ok(_), Ok(_)) => {
            let (a, b) = (files(d1.path()), files(d2.path()));
            (!a.is_empty() && a == b, format!("{} artifacts compared", a.len()))
        }
        _ => (false, "selftest did not complete twice".into()),
    };
    println!("{} 10: {} ({})", if same.0 { "PASS" } else { "FAIL" }, title(10), same.1);
}
