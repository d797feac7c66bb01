//! Cost of simulating a locked ring of N oscillators versus its scalar group
//! model, at equal absolute error budgets.

use ppvgroup::fixtures::{injection, ring_n};
use ppvgroup::floquet::{analyze, FloquetOptions};
use ppvgroup::hierppv::{build_group_model, validate_reduction};
use ppvgroup::lock::{find_lock, LockGuess, LockOptions};
use ppvgroup::{Result, ValidationReport};

pub fn ring_report(n: usize, periods: f64) -> Result<ValidationReport> {
    let cps = ring_n(n, 0.005, 0.1);
    let sol = find_lock(&cps, &LockGuess::from_system(&cps), &LockOptions::default())?;
    let fd = analyze(&cps, &sol, &FloquetOptions::default())?;
    let gm = build_group_model(&cps, &sol, &fd)?;
    let inputs = [(0, injection(1e-4, gm.f_star(), 0.0, 0))]
        .into_iter()
        .collect();
    validate_reduction(
        &cps,
        &gm,
        &inputs,
        0.0,
        periods * gm.t_star(),
        &Default::default(),
    )
}

pub fn run_example() -> Result<Vec<ValidationReport>> {
    [4, 8, 16]
        .into_iter()
        .map(|n| ring_report(n, 30.0))
        .collect()
}

#[allow(dead_code)]
fn main() -> Result<()> {
    println!(
        "{:>4} {:>14} {:>14} {:>8} {:>12}",
        "N", "full/period", "group/period", "ratio", "sup dphi"
    );
    for r in run_example()? {
        println!(
            "{:>4} {:>14.1} {:>14.1} {:>8.4} {:>12.3e}",
            r.oscillators,
            r.full_evals_per_period,
            r.reduced_evals_per_period,
            r.eval_ratio(),
            r.sup_dphi
        );
    }
    Ok(())
}
