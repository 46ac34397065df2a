//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#[path = "../common/mod.rs"]
mod common;

mod artifacts;
mod geometry;
mod ordering;
mod recovery;
mod statistics;

use std::panic;
use std::process::ExitCode;
use std::time::Instant;

/// Success carries a short summary of what was checked.
pub type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}
pub(crate) use check;

fn main() -> ExitCode {
    if let Ok(request) = std::env::var(ordering::CHILD_ENV) {
        ordering::child(&request);
        return ExitCode::SUCCESS;
    }

    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("geometry oracle", geometry::oracle),
        ("wheel invariants", geometry::invariants),
        ("ordering determinism and uniformity", ordering::criterion),
        ("circular statistics", statistics::circular),
        ("grid partition", statistics::grid),
        ("csv byte stability", artifacts::csv),
        ("crash recovery", recovery::crash),
        ("end-to-end protocol", recovery::end_to_end),
    ];

    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".to_string());
            Err(msg)
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.2}s]");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
