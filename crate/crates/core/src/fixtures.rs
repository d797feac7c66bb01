//! Canonical sinusoidal networks used by the examples, the CLI and the tests.
//!
//! The basic building block has the quadrature PPV `p(t) = [-sin 2 pi t, cos 2 pi t]`
//! and emits `K [cos 2 pi phi, sin 2 pi phi]`, so that a link from `j` to `i`
//! contributes `f_i K sin(2 pi (phi_j - phi_i))` to `dphi_i/dt` (Adler form).

use std::f64::consts::PI;

use crate::network::{CoupledPhaseSystem, Coupling};
use crate::oscillator::{InputSignal, OscillatorPhaseModel, Sinusoid};
use crate::periodic::{PeriodicWaveform, DEFAULT_SAMPLES};

/// `[-sin 2 pi t, cos 2 pi t]`.
pub fn quadrature_ppv(num_samples: usize) -> PeriodicWaveform {
    PeriodicWaveform::from_fn(num_samples, 2, |t, out| {
        out[0] = -(2.0 * PI * t).sin();
        out[1] = (2.0 * PI * t).cos();
    })
    .expect("valid sample count")
}

/// `gain * [cos 2 pi t, sin 2 pi t]`.
pub fn adler_coupling(num_samples: usize, gain: f64) -> PeriodicWaveform {
    PeriodicWaveform::from_fn(num_samples, 2, |t, out| {
        out[0] = gain * (2.0 * PI * t).cos();
        out[1] = gain * (2.0 * PI * t).sin();
    })
    .expect("valid sample count")
}

pub fn sinusoidal_oscillator(label: &str, f: f64) -> OscillatorPhaseModel {
    let x_p = PeriodicWaveform::from_scalar_fn(DEFAULT_SAMPLES, |t| (2.0 * PI * t).cos())
        .expect("valid sample count");
    OscillatorPhaseModel::new(label, f, quadrature_ppv(DEFAULT_SAMPLES))
        .expect("positive frequency")
        .with_steady_state(x_p)
}

/// Sinusoidal oscillators with the given frequencies, linked by the given
/// `(src, dst)` pairs with gain `k`.
pub fn sinusoidal_network(freqs: &[f64], links: &[(usize, usize)], k: f64) -> CoupledPhaseSystem {
    let oscs = freqs
        .iter()
        .enumerate()
        .map(|(i, &f)| sinusoidal_oscillator(&format!("osc{i}"), f))
        .collect();
    let w = adler_coupling(DEFAULT_SAMPLES, k);
    let couplings = links
        .iter()
        .map(|&(s, d)| Coupling::new(s, d, w.clone()))
        .collect();
    CoupledPhaseSystem::new(oscs, couplings).expect("well-formed fixture")
}

/// Identical pair, `f = 1`, mutual coupling `k`.
pub fn identical_pair(k: f64) -> CoupledPhaseSystem {
    sinusoidal_network(&[1.0, 1.0], &[(0, 1), (1, 0)], k)
}

/// Detuned pair, `f = 1 -+ delta`, mutual coupling `k`.
pub fn detuned_pair(delta: f64, k: f64) -> CoupledPhaseSystem {
    sinusoidal_network(&[1.0 - delta, 1.0 + delta], &[(0, 1), (1, 0)], k)
}

/// Bidirectional nearest-neighbour ring.
pub fn ring(freqs: &[f64], k: f64) -> CoupledPhaseSystem {
    let n = freqs.len();
    let mut links = Vec::new();
    for i in 0..n {
        for j in [(i + 1) % n, (i + n - 1) % n] {
            if j != i && !links.contains(&(j, i)) {
                links.push((j, i));
            }
        }
    }
    sinusoidal_network(freqs, &links, k)
}

/// Three-oscillator ring with a small frequency spread.
pub fn ring3() -> CoupledPhaseSystem {
    ring(&[0.99, 1.0, 1.01], 0.1)
}

/// `n`-oscillator ring with a gentle sinusoidal frequency profile.
pub fn ring_n(n: usize, spread: f64, k: f64) -> CoupledPhaseSystem {
    let freqs: Vec<f64> = (0..n)
        .map(|i| 1.0 + spread * (2.0 * PI * i as f64 / n as f64).sin())
        .collect();
    ring(&freqs, k)
}

/// Resonant injection `eps sin(2 pi (f t + phase))` on one channel of a
/// quadrature-PPV oscillator.
pub fn injection(eps: f64, f: f64, phase: f64, channel: usize) -> InputSignal {
    InputSignal::sinusoid(
        2,
        Sinusoid {
            amplitude: eps,
            frequency: f,
            phase,
            component: channel,
        },
    )
    .expect("channel within quadrature input")
}

/// Rotating injection `eps [cos 2 pi f t, sin 2 pi f t]`, which enters a
/// quadrature-PPV oscillator as `eps sin(2 pi (f t - phi))`.
pub fn rotating_injection(eps: f64, f: f64) -> InputSignal {
    InputSignal::new(
        2,
        vec![
            Sinusoid {
                amplitude: eps,
                frequency: f,
                phase: 0.25,
                component: 0,
            },
            Sinusoid {
                amplitude: eps,
                frequency: f,
                phase: 0.0,
                component: 1,
            },
        ],
        None,
    )
    .expect("valid rotating injection")
}
