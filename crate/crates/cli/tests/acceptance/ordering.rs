use std::collections::HashMap;
use std::process::Command;

use emomap_core::ordering::participant_permutation;

use crate::{check, Outcome};

/// Set in a re-executed copy of this binary that only prints permutations.
pub const CHILD_ENV: &str = "EMOMAP_ACCEPTANCE_PERMUTATIONS";

const PICTURES: [&str; 6] = ["pic-a", "pic-b", "pic-c", "pic-d", "pic-e", "pic-f"];

fn lines(experiment: &str, participants: usize) -> String {
    (0..participants)
        .map(|i| {
            let pid = format!("participant-{i}");
            format!("{pid} {}\n", participant_permutation(experiment, &pid, &PICTURES).join(","))
        })
        .collect()
}

/// Child side: `experiment:count` in, one permutation per line out.
pub fn child(request: &str) {
    let (experiment, count) = request.rsplit_once(':').expect("experiment:count");
    print!("{}", lines(experiment, count.parse().expect("count")));
}

fn from_fresh_process(experiment: &str, participants: usize) -> Result<String, String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let out = Command::new(exe)
        .env(CHILD_ENV, format!("{experiment}:{participants}"))
        .output()
        .map_err(|e| e.to_string())?;
    check!(out.status.success(), "child exited with {:?}", out.status.code());
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

pub fn criterion() -> Outcome {
    const N: usize = 10_000;

    let first = from_fresh_process("exp-ordering", 500)?;
    let second = from_fresh_process("exp-ordering", 500)?;
    check!(first == second, "two processes disagree");
    check!(first == lines("exp-ordering", 500), "child and parent disagree");
    let other = from_fresh_process("exp-other", 500)?;
    check!(other != first, "experiment id does not influence the order");

    let mut counts: HashMap<Vec<&str>, u64> = HashMap::new();
    let mut at_position = [[0u64; 6]; 6];
    for i in 0..N {
        let perm = participant_permutation("exp-uniformity", &format!("participant-{i}"), &PICTURES);
        for (pos, pic) in perm.iter().enumerate() {
            let k = PICTURES.iter().position(|p| p == pic).unwrap();
            at_position[pos][k] += 1;
        }
        *counts.entry(perm).or_default() += 1;
    }

    // all 720 orders, chi-squared with 719 degrees of freedom
    let cells = 720.0;
    let expected = N as f64 / cells;
    let observed: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let missing = cells as usize - counts.len();
    let chi2 = observed + missing as f64 * expected;
    let dof = cells - 1.0;
    let bound = dof + 5.0 * (2.0 * dof).sqrt();
    check!(chi2 < bound, "chi-squared {chi2:.1} over 720 orders exceeds {bound:.1}");

    // each picture in each position
    let p = 1.0 / 6.0;
    let sd = (N as f64 * p * (1.0 - p)).sqrt();
    for (pos, row) in at_position.iter().enumerate() {
        for (k, &c) in row.iter().enumerate() {
            let z = (c as f64 - N as f64 * p) / sd;
            check!(z.abs() < 5.0, "picture {k} at position {pos}: z = {z:.2}");
        }
    }
    Ok(format!(
        "stable across 3 processes; chi-squared {chi2:.1} < {bound:.1} over {} orders seen",
        counts.len()
    ))
}
