//! Acceptance criteria, one `ID PASS|FAIL: detail` line per criterion.
//!
//! The property suite (AC6) and the truth check (AC7) run on every
//! `cargo test`. The replication studies (AC1 to AC5) and the application
//! run (AC8) take hours and run only when asked for:
//!
//! ```text
//! cargo test --release -p edpcausal-core --test acceptance -- --ignored
//! cargo test --release -p edpcausal-core --test acceptance -- --include-ignored AC3
//! ```
//!
//! Positional arguments select criteria by substring. Heavy criteria are
//! gated on the property suite, which runs first whenever one is selected.
//! A criterion listed in `EXPECTED_FAILURES` still prints FAIL; it only
//! does not fail the process. If it starts passing the run fails, so the
//! list is kept honest.

mod properties;
mod replication;
mod support;
mod truth;

use std::panic::{catch_unwind, AssertUnwindSafe};

use support::{report, Verdict};

struct Criterion {
    ids: &'static [&'static str],
    heavy: bool,
    run: fn() -> Vec<Verdict>,
}

const CRITERIA: &[Criterion] = &[
    Criterion { ids: &["AC6"], heavy: false, run: properties::run },
    Criterion { ids: &["AC7"], heavy: false, run: truth::run },
    Criterion { ids: &["AC1", "AC2"], heavy: true, run: replication::scenario1 },
    Criterion { ids: &["AC3"], heavy: true, run: replication::scenario2 },
    Criterion { ids: &["AC4"], heavy: true, run: replication::scenario3 },
    Criterion { ids: &["AC5"], heavy: true, run: replication::scenario4 },
    Criterion { ids: &["AC8"], heavy: true, run: application::run },
];

/// Checks known to be unattainable, with the reason.
const EXPECTED_FAILURES: &[(&str, &str)] = &[(
    "AC7(s1-rr)",
    "the printed scenario 1 relative risk (1.5) is not implied by the printed generating model, whose \
     relative risk is 1.544 by both the 10^7-draw oracle and quadrature; benchmarks score against 1.544",
)];

struct Args {
    ignored_only: bool,
    include_ignored: bool,
    list: bool,
    filters: Vec<String>,
    skips: Vec<String>,
}

fn parse_args() -> Args {
    let mut a = Args { ignored_only: false, include_ignored: false, list: false, filters: Vec::new(), skips: Vec::new() };
    let mut it = std::env::args().skip(1);
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--ignored" => a.ignored_only = true,
            "--include-ignored" => a.include_ignored = true,
            "--list" => a.list = true,
            "--skip" => a.skips.extend(it.next()),
            // libtest options that take a value; the value is not a filter.
            "--test-threads" | "--format" | "--logfile" | "--color" | "-Z" | "--shuffle-seed" => {
                it.next();
            }
            s if s.starts_with('-') => {}
            s => a.filters.push(s.to_string()),
        }
    }
    a
}

fn expected(id: &str) -> Option<&'static str> {
    EXPECTED_FAILURES.iter().find(|e| e.0 == id).map(|e| e.1)
}

fn main() {
    let args = parse_args();
    if args.list {
        for c in CRITERIA {
            for id in c.ids {
                println!("{id}: test");
            }
        }
        return;
    }
    let selected = |c: &Criterion| {
        let hit = |f: &String| c.ids.iter().any(|id| id.contains(f.as_str()));
        (args.filters.is_empty() || args.filters.iter().any(hit)) && !args.skips.iter().any(hit)
    };
    let run_light = !args.ignored_only;
    let run_heavy = args.ignored_only || args.include_ignored;
    let heavy_wanted = run_heavy && CRITERIA.iter().any(|c| c.heavy && selected(c));

    let mut verdicts: Vec<Verdict> = Vec::new();
    let mut skipped = 0;
    let mut properties_pass = true;
    for c in CRITERIA {
        let is_properties = c.ids == ["AC6"];
        let gate = is_properties && heavy_wanted;
        let wanted = selected(c) && if c.heavy { run_heavy } else { run_light };
        if !(wanted || gate) {
            if selected(c) && c.heavy {
                for id in c.ids {
                    println!("{id} SKIP: replication-scale run; use `-- --ignored` or `-- --include-ignored` (release build)");
                }
                skipped += c.ids.len();
            }
            continue;
        }
        if c.heavy && !properties_pass {
            for id in c.ids {
                verdicts.push(report(*id, false, "not run: the property suite (AC6) failed"));
            }
            continue;
        }
        let out = match catch_unwind(AssertUnwindSafe(c.run)) {
            Ok(v) => v,
            Err(_) => c.ids.iter().map(|id| report(*id, false, "panicked")).collect(),
        };
        if is_properties {
            properties_pass = out.iter().all(|v| v.pass);
        }
        verdicts.extend(out);
    }

    // An aggregate line (no parenthesis) is an expected failure when every
    // failing check beneath it is.
    let mut unexpected = Vec::new();
    let mut expected_fail = 0;
    for v in &verdicts {
        let known = match v.id.split_once('(') {
            Some(_) => expected(&v.id).is_some(),
            None => {
                let subs: Vec<&Verdict> =
                    verdicts.iter().filter(|s| s.id.starts_with(&format!("{}(", v.id)) && !s.pass).collect();
                !subs.is_empty() && subs.iter().all(|s| expected(&s.id).is_some())
            }
        };
        match (v.pass, known) {
            (false, true) => {
                expected_fail += 1;
                if let Some(reason) = expected(&v.id) {
                    println!("    {} is a known failure: {reason}", v.id);
                }
            }
            (false, false) => unexpected.push(v.id.clone()),
            (true, _) => {
                if expected(&v.id).is_some() {
                    println!("{} XPASS: listed as a known failure but passed; update EXPECTED_FAILURES", v.id);
                    unexpected.push(v.id.clone());
                }
            }
        }
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!(
        "\nacceptance: {passed} passed, {} failed ({expected_fail} known), {skipped} skipped",
        verdicts.len() - passed
    );
    if !unexpected.is_empty() {
        println!("unexpected: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
