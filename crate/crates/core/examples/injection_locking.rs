//! A single oscillator under resonant injection. With the quadrature PPV the
//! phase equation reduces to Adler's equation
//! `d psi/dt = (f - f_d) - f eps sin 2 pi psi`, so the oscillator locks while
//! the detuning stays below `f eps`.
//! The lock range is measured by brute-force simulation.

use ppvgroup::fixtures::{rotating_injection, sinusoidal_oscillator};
use ppvgroup::ode::uniform_times;
use ppvgroup::{Result, SolverOptions};

/// Mean phase rate over the last half of a long run, minus the drive frequency.
pub fn beat_rate(eps: f64, f_drive: f64) -> Result<f64> {
    let osc = sinusoidal_oscillator("osc", 1.0);
    let input = rotating_injection(eps, f_drive);
    let t1 = 40.0 / eps;
    let tr = osc.simulate_phase(
        &input,
        0.0,
        0.0,
        t1,
        &uniform_times(0.0, t1, 2),
        &SolverOptions::with_tol(1e-10, 1e-10),
    )?;
    let half = tr.y[1][0];
    let end = tr.y[2][0];
    Ok((end - half) / (0.5 * t1) - f_drive)
}

/// Bisection on the detuning at which the beat rate becomes nonzero.
pub fn measured_lock_range(eps: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 2.0 * eps);
    for _ in 0..14 {
        let mid = 0.5 * (lo + hi);
        if beat_rate(eps, 1.0 + mid)?.abs() < 1e-3 * eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub struct LockRangeReport {
    pub eps: f64,
    pub predicted: f64,
    pub measured: f64,
}

pub fn run_example() -> Result<LockRangeReport> {
    let eps = 0.02;
    Ok(LockRangeReport {
        eps,
        predicted: eps,
        measured: measured_lock_range(eps)?,
    })
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let r = run_example()?;
    println!("injection amplitude {}", r.eps);
    println!("predicted one-sided lock range {:.6}", r.predicted);
    println!("measured  one-sided lock range {:.6}", r.measured);
    for df in [0.5, 0.9, 1.1, 1.5] {
        let d = df * r.predicted;
        println!(
            "  detuning {d:.4}: beat rate {:.3e}",
            beat_rate(r.eps, 1.0 + d)?
        );
    }
    Ok(())
}
