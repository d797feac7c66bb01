// Lock range of a coupled pair under injection into one member: predicted
// from the group model, measured by brute-force simulation of the pair.

use std::collections::BTreeMap;

use ppvgroup::fixtures::{identical_pair, rotating_injection};
use ppvgroup::floquet::{analyze, FloquetOptions};
use ppvgroup::hierppv::build_group_model;
use ppvgroup::lock::{find_lock, LockGuess, LockOptions};
use ppvgroup::ode::uniform_times;
use ppvgroup::SolverOptions;

const EPS: f64 = 0.01;

fn beat(detuning: f64) -> f64 {
    let cps = identical_pair(0.1)
        .with_inputs(&BTreeMap::from([(
            0,
            rotating_injection(EPS, 1.0 + detuning),
        )]))
        .unwrap();
    let t1 = 60.0 / EPS;
    let tr = cps
        .simulate_cps(
            &[0.0, 0.0],
            0.0,
            t1,
            &uniform_times(0.0, t1, 2),
            &SolverOptions::with_tol(1e-9, 1e-9),
        )
        .unwrap();
    (tr.y[2][0] - tr.y[1][0]) / (0.5 * t1) - (1.0 + detuning)
}

fn measured_range() -> f64 {
    let (mut lo, mut hi) = (0.0, 2.0 * EPS);
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        if beat(mid).abs() < 1e-3 * EPS {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn group_model_predicts_pair_lock_range() {
    let cps = identical_pair(0.1);
    let sol = find_lock(&cps, &LockGuess::from_system(&cps), &LockOptions::default()).unwrap();
    let fd = analyze(&cps, &sol, &FloquetOptions::default()).unwrap();
    let gm = build_group_model(&cps, &sol, &fd).unwrap();
    // rotating drive projects onto the group channel as eps * max|q_0| * sin(...)
    let predicted = gm.f_star() * EPS * gm.channel(0).max_abs();
    assert!((predicted - 0.5 * EPS).abs() < 1e-9);
    let measured = measured_range();
    assert!(
        (measured - predicted).abs() < 0.1 * predicted,
        "measured {measured}, predicted {predicted}"
    );
}

#[test]
fn outside_the_range_the_pair_slips() {
    assert!(beat(0.3 * EPS).abs() < 1e-6);
    assert!(beat(0.8 * EPS).abs() > 1e-4);
}
