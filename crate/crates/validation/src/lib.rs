//! Timed PASS/FAIL reporting for the acceptance criteria.

use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} [{}] {} ({:.1} s of {:.0} s): {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.budget.as_secs_f64(),
            self.detail
        )
    }
}

/// Runs `check`, which returns whether its numeric conditions hold and a
/// description of the measured values. Exceeding `budget` is a failure.
pub fn criterion(
    id: u32,
    name: &'static str,
    budget: Duration,
    check: impl FnOnce() -> (bool, String),
) -> Outcome {
    let start = Instant::now();
    let (ok, mut detail) = check();
    let elapsed = start.elapsed();
    if elapsed > budget {
        detail.push_str("; over the runtime budget");
    }
    let out = Outcome {
        id,
        name,
        pass: ok && elapsed <= budget,
        detail,
        elapsed,
        budget,
    };
    println!("{}", out.line());
    out
}

/// Identifier, name, runtime budget and check of one criterion.
pub type SharedCriterion<'a, T> = (
    u32,
    &'static str,
    Duration,
    Box<dyn FnOnce(&T) -> (bool, String) + 'a>,
);

/// Runs several criteria that share one expensive computation, timing the
/// shared part into each of them.
pub fn shared<T>(setup: impl FnOnce() -> T, criteria: Vec<SharedCriterion<'_, T>>) -> Vec<Outcome> {
    let start = Instant::now();
    let value = setup();
    let setup_time = start.elapsed();
    criteria
        .into_iter()
        .map(|(id, name, budget, check)| {
            let start = Instant::now();
            let (ok, mut detail) = check(&value);
            let elapsed = setup_time + start.elapsed();
            if elapsed > budget {
                detail.push_str("; over the runtime budget");
            }
            let out = Outcome {
                id,
                name,
                pass: ok && elapsed <= budget,
                detail,
                elapsed,
                budget,
            };
            println!("{}", out.line());
            out
        })
        .collect()
}

/// Prints the tally and returns whether everything passed.
pub fn summarize(outcomes: &[Outcome]) -> bool {
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("{passed}/{} criteria passed", outcomes.len());
    passed == outcomes.len()
}
