//! From circuit equations to a group model: extract the PPV of a Van der Pol
//! oscillator, couple two slightly detuned copies through their voltage
//! waveforms, and reduce the locked pair to one phase equation.

use std::collections::BTreeMap;

use ppvgroup::floquet::{analyze, FloquetOptions};
use ppvgroup::hierppv::{build_group_model, validate_reduction, ValidationOptions};
use ppvgroup::lock::{find_lock, LockGuess, LockOptions};
use ppvgroup::prc::{phase_model, CycleOptions};
use ppvgroup::{
    CoupledPhaseSystem, Coupling, Error, InputSignal, OscillatorPhaseModel, Result, Sinusoid,
    StateSpaceOscillator, ValidationReport,
};

pub struct PrcNetworkReport {
    pub f_free: [f64; 2],
    pub f_star: f64,
    pub validation: ValidationReport,
}

pub fn run_example() -> Result<PrcNetworkReport> {
    let (_, base) = phase_model(
        &StateSpaceOscillator::vanderpol(1.0),
        &CycleOptions::default(),
    )?;
    let x = base
        .steady_state()
        .ok_or_else(|| Error::InvalidModel("extracted model has no steady state".into()))?
        .component(0);
    // a second copy running 0.2% faster
    let fast = OscillatorPhaseModel::new("fast", base.frequency() * 1.002, base.ppv().clone())?;
    let slow = OscillatorPhaseModel::new("slow", base.frequency(), base.ppv().clone())?;
    // with this output/PPV pairing the in-phase lock needs negative gain
    let k = -0.05;
    let link = x.scaled(k);
    let cps = CoupledPhaseSystem::new(
        vec![slow, fast],
        vec![Coupling::new(0, 1, link.clone()), Coupling::new(1, 0, link)],
    )?;

    let sol = find_lock(&cps, &LockGuess::from_system(&cps), &LockOptions::default())?;
    let fd = analyze(&cps, &sol, &FloquetOptions::default())?;
    let gm = build_group_model(&cps, &sol, &fd)?;
    let drive = InputSignal::sinusoid(
        1,
        Sinusoid {
            amplitude: 1e-3,
            frequency: gm.f_star(),
            phase: 0.0,
            component: 0,
        },
    )?;
    let inputs = BTreeMap::from([(0, drive)]);
    let validation = validate_reduction(
        &cps,
        &gm,
        &inputs,
        0.0,
        40.0 * gm.t_star(),
        &ValidationOptions::default(),
    )?;
    let f = cps.frequencies();
    Ok(PrcNetworkReport {
        f_free: [f[0], f[1]],
        f_star: gm.f_star(),
        validation,
    })
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let r = run_example()?;
    println!(
        "free-running frequencies {:.7} {:.7}",
        r.f_free[0], r.f_free[1]
    );
    println!("locked frequency         {:.7}", r.f_star);
    println!("{}", r.validation.summary());
    Ok(())
}
