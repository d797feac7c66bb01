//! Periodic waveforms: sampling, interpolation between grid points,
//! spectral derivative and phase shifts.

use std::f64::consts::PI;

use ppvgroup::{PeriodicWaveform, Result};

pub struct WaveformReport {
    pub interp_error: f64,
    pub derivative_error: f64,
    pub shift_error: f64,
    pub mean: f64,
}

pub fn run_example() -> Result<WaveformReport> {
    let f = |t: f64| 0.3 + (2.0 * PI * t).sin() + 0.25 * (6.0 * PI * t).cos();
    let df = |t: f64| 2.0 * PI * (2.0 * PI * t).cos() - 1.5 * PI * (6.0 * PI * t).sin();
    let w = PeriodicWaveform::from_scalar_fn(32, f)?;
    let d = w.derivative();
    let s = w.shifted(0.125);

    let probes: Vec<f64> = (0..200).map(|k| -1.0 + 0.0173 * k as f64).collect();
    let worst = |g: &dyn Fn(f64) -> f64| probes.iter().map(|&t| g(t).abs()).fold(0.0, f64::max);
    Ok(WaveformReport {
        interp_error: worst(&|t| w.eval_component(t, 0) - f(t)),
        derivative_error: worst(&|t| d.eval_component(t, 0) - df(t)),
        shift_error: worst(&|t| s.eval_component(t, 0) - f(t + 0.125)),
        mean: w.mean()[0],
    })
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let r = run_example()?;
    println!("32 samples of 0.3 + sin 2pi t + 0.25 cos 6pi t");
    println!("  mean                {:.15}", r.mean);
    println!("  interpolation error {:.2e}", r.interp_error);
    println!("  derivative error    {:.2e}", r.derivative_error);
    println!("  shift error         {:.2e}", r.shift_error);
    Ok(())
}
