//! Runs every acceptance criterion and prints one line per criterion.
//! Set `KZM_LONG=1` to also run the ungated κ₂/κ₃ variant of criterion 3.
//!
//! Built without the libtest harness so the report lines are never captured.

use std::process::ExitCode;

use kzm::acceptance;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    // honour `cargo test <filter>` the way libtest would
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return ExitCode::SUCCESS;
    }
    let long = std::env::var("KZM_LONG").is_ok_and(|v| v == "1");
    let reports = acceptance::run_all(long);
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        reports.len() - failed.len(),
        reports.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed criteria: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
