//! PPV extraction from a state-space oscillator, checked against direct
//! impulse experiments: kick the steady state at phase theta, wait until the
//! transient dies out, and read off the time advance.

use ppvgroup::ode::{integrate, uniform_times};
use ppvgroup::prc::{phase_model, CycleOptions, LimitCycle};
use ppvgroup::{OscillatorPhaseModel, Result, SolverOptions, StateSpaceOscillator};

/// Time advance per unit kick along input channel `channel` at phase `theta`.
pub fn impulse_advance(
    o: &StateSpaceOscillator,
    cycle: &LimitCycle,
    theta: f64,
    channel: usize,
    eps: f64,
) -> Result<f64> {
    let x0 = cycle.x_p.eval(theta);
    let mut kicked = x0.clone();
    for (k, v) in kicked.iter_mut().enumerate() {
        *v += eps * o.input_matrix()[(k, channel)];
    }
    let t1 = 20.0 * cycle.period;
    let opts = SolverOptions::with_tol(1e-12, 1e-14);
    let end = |x: &[f64]| -> Result<Vec<f64>> {
        let tr = integrate(
            |_, y, dy| o.eval_rhs(y, dy),
            0.0,
            x,
            t1,
            &uniform_times(0.0, t1, 1),
            &opts,
        )?;
        Ok(tr.final_y)
    };
    let (a, b) = (end(&x0)?, end(&kicked)?);
    let mut v = vec![0.0; a.len()];
    o.eval_rhs(&a, &mut v);
    // both states sit on the cycle; project the gap onto the flow
    let num: f64 = a
        .iter()
        .zip(&b)
        .zip(&v)
        .map(|((a, b), v)| (b - a) * v)
        .sum();
    let den: f64 = v.iter().map(|v| v * v).sum();
    Ok(num / den / eps)
}

pub struct PrcReport {
    pub period: f64,
    pub model: OscillatorPhaseModel,
    /// `(theta, ppv, impulse)` triples.
    pub checks: Vec<(f64, f64, f64)>,
}

impl PrcReport {
    /// Largest mismatch relative to `max |p|`.
    pub fn worst_relative(&self) -> f64 {
        let pmax = self.model.ppv().max_abs();
        self.checks
            .iter()
            .map(|(_, p, m)| (p - m).abs() / pmax)
            .fold(0.0, f64::max)
    }
}

pub fn vanderpol_report(phases: usize) -> Result<PrcReport> {
    let o = StateSpaceOscillator::vanderpol(1.0);
    let (cycle, model) = phase_model(&o, &CycleOptions::default())?;
    let mut checks = Vec::new();
    for k in 0..phases {
        let theta = k as f64 / phases as f64;
        let p = model.ppv().eval_component(theta, 0);
        checks.push((theta, p, impulse_advance(&o, &cycle, theta, 0, 1e-5)?));
    }
    Ok(PrcReport {
        period: cycle.period,
        model,
        checks,
    })
}

pub fn run_example() -> Result<PrcReport> {
    vanderpol_report(8)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let r = run_example()?;
    println!("Van der Pol, mu = 1: period {:.10}", r.period);
    println!("{:>6} {:>12} {:>12}", "theta", "ppv", "impulse");
    for (t, p, m) in &r.checks {
        println!("{t:>6.3} {p:>12.6} {m:>12.6}");
    }
    println!(
        "worst mismatch {:.3}% of max |p|",
        100.0 * r.worst_relative()
    );
    for o in [
        StateSpaceOscillator::fhn(0.7, 0.8, 0.08, 0.5),
        StateSpaceOscillator::ring3(3.0),
    ] {
        let (c, m) = phase_model(&o, &CycleOptions::default())?;
        println!(
            "{}: period {:.6}, max |p| {:.4}",
            o.name(),
            c.period,
            m.ppv().max_abs()
        );
    }
    Ok(())
}
