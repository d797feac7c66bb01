//! Vector-valued 1-periodic functions stored as uniform samples.
//!
//! A [`PeriodicWaveform`] holds `num_samples` rows on the grid `k / num_samples`
//! and is evaluated between grid points by trigonometric interpolation. PPVs,
//! coupling waveforms, locked-phase deviations and Floquet vectors all live in
//! this representation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Default number of samples per period.
pub const DEFAULT_SAMPLES: usize = 128;

/// Immutable, exactly 1-periodic vector function of a phase in cycles.
#[derive(Clone, Debug)]
pub struct PeriodicWaveform {
    dim: usize,
    num_samples: usize,
    /// Row-major `num_samples x dim`.
    samples: Vec<f64>,
    /// Interpolant coefficients, `coeffs[k * dim + d]` for harmonics
    /// `k = 0..=num_samples / 2`. Interior harmonics carry the factor 2 of the
    /// real-valued series so that `value = Re(sum_k c_k e^{2 pi i k theta})`.
    coeffs: Vec<Complex64>,
}

impl PartialEq for PeriodicWaveform {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.num_samples == other.num_samples
            && self.samples == other.samples
    }
}

impl PeriodicWaveform {
    /// Builds a waveform from rows of samples taken at `k / rows.len()`.
    pub fn from_samples(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidWaveform("ragged sample rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_flat(rows.len(), dim, flat)
    }

    /// Builds a waveform from a row-major `num_samples x dim` buffer.
    pub fn from_flat(num_samples: usize, dim: usize, samples: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidWaveform(
                "dimension must be at least 1".into(),
            ));
        }
        if num_samples < 8 || !num_samples.is_multiple_of(2) {
            return Err(Error::InvalidWaveform(format!(
                "sample count must be even and >= 8, got {num_samples}"
            )));
        }
        if samples.len() != num_samples * dim {
            return Err(Error::InvalidWaveform(format!(
                "expected {} values, got {}",
                num_samples * dim,
                samples.len()
            )));
        }
        if let Some(pos) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidWaveform(format!(
                "non-finite sample at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        let coeffs = interpolant_coeffs(num_samples, dim, &samples);
        Ok(Self {
            dim,
            num_samples,
            samples,
            coeffs,
        })
    }

    /// Samples `f(theta)` on the uniform grid.
    pub fn from_fn<F>(num_samples: usize, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64, &mut [f64]),
    {
        let mut flat = vec![0.0; num_samples * dim];
        for (k, row) in flat.chunks_mut(dim.max(1)).enumerate() {
            f(k as f64 / num_samples as f64, row);
        }
        Self::from_flat(num_samples, dim, flat)
    }

    /// Scalar convenience wrapper around [`PeriodicWaveform::from_fn`].
    pub fn from_scalar_fn<F>(num_samples: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64,
    {
        Self::from_fn(num_samples, 1, |theta, out| out[0] = f(theta))
    }

    pub fn constant(num_samples: usize, value: &[f64]) -> Result<Self> {
        Self::from_fn(num_samples, value.len(), |_, out| {
            out.copy_from_slice(value)
        })
    }

    pub fn zeros(num_samples: usize, dim: usize) -> Result<Self> {
        Self::from_flat(num_samples, dim, vec![0.0; num_samples * dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    /// Grid phase of sample `k`.
    pub fn grid_phase(&self, k: usize) -> f64 {
        k as f64 / self.num_samples as f64
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k * self.dim..(k + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks(self.dim)
    }

    pub fn flat_samples(&self) -> &[f64] {
        &self.samples
    }

    /// Evaluates the interpolant at `theta` (cycles, any real value).
    pub fn eval(&self, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(theta, &mut out);
        out
    }

    /// Evaluates into a caller-provided buffer of length `dim`.
    /// Grid points are returned as stored rather than resynthesized.
    fn grid_index(&self, theta: f64) -> Option<usize> {
        let x = theta * self.num_samples as f64;
        (x.fract() == 0.0).then_some(x as usize % self.num_samples)
    }

    pub fn eval_into(&self, theta: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let dim = self.dim;
        let half = self.num_samples / 2;
        let theta = wrap(theta);
        if let Some(k) = self.grid_index(theta) {
            out.copy_from_slice(self.sample(k));
            return;
        }
        for (o, c) in out.iter_mut().zip(&self.coeffs[..dim]) {
            *o = c.re;
        }
        let step = Complex64::from_polar(1.0, 2.0 * PI * theta);
        let mut w = Complex64::new(1.0, 0.0);
        for k in 1..=half {
            // refresh periodically to keep the recurrence error at round-off
            w = if k % 16 == 0 {
                Complex64::from_polar(1.0, 2.0 * PI * theta * k as f64)
            } else {
                w * step
            };
            let row = &self.coeffs[k * dim..(k + 1) * dim];
            for (o, c) in out.iter_mut().zip(row) {
                *o += c.re * w.re - c.im * w.im;
            }
        }
    }

    /// Evaluates a single component.
    pub fn eval_component(&self, theta: f64, d: usize) -> f64 {
        let dim = self.dim;
        let half = self.num_samples / 2;
        let theta = wrap(theta);
        if let Some(k) = self.grid_index(theta) {
            return self.sample(k)[d];
        }
        let mut acc = self.coeffs[d].re;
        let step = Complex64::from_polar(1.0, 2.0 * PI * theta);
        let mut w = Complex64::new(1.0, 0.0);
        for k in 1..=half {
            w = if k % 16 == 0 {
                Complex64::from_polar(1.0, 2.0 * PI * theta * k as f64)
            } else {
                w * step
            };
            let c = self.coeffs[k * dim + d];
            acc += c.re * w.re - c.im * w.im;
        }
        acc
    }

    /// Spectral derivative with respect to the phase. The Nyquist harmonic,
    /// whose derivative vanishes on the grid, is dropped.
    pub fn derivative(&self) -> Self {
        let n = self.num_samples;
        let dim = self.dim;
        let half = n / 2;
        let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
        let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
        let mut flat = vec![0.0; n * dim];
        for d in 0..dim {
            for s in spectrum.iter_mut() {
                *s = Complex64::new(0.0, 0.0);
            }
            for k in 1..half {
                // coeffs hold 2 X_k / n; the full spectrum wants X_k / n on +k and its conjugate on -k
                let c = self.coeffs[k * dim + d] * 0.5 * Complex64::new(0.0, 2.0 * PI * k as f64);
                spectrum[k] = c;
                spectrum[n - k] = c.conj();
            }
            ifft.process(&mut spectrum);
            for (row, s) in spectrum.iter().enumerate() {
                flat[row * dim + d] = s.re;
            }
        }
        Self::from_flat(n, dim, flat).expect("derivative of a valid waveform is valid")
    }

    /// Returns `theta -> self(theta + delta)` resampled on the same grid.
    pub fn shifted(&self, delta: f64) -> Self {
        Self::from_fn(self.num_samples, self.dim, |theta, out| {
            self.eval_into(theta + delta, out)
        })
        .expect("shift of a valid waveform is valid")
    }

    /// Resamples onto a grid of `num_samples` points through the interpolant.
    pub fn resampled(&self, num_samples: usize) -> Result<Self> {
        Self::from_fn(num_samples, self.dim, |theta, out| {
            self.eval_into(theta, out)
        })
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let flat = self.samples.iter().map(|v| v * factor).collect();
        Self::from_flat(self.num_samples, self.dim, flat).expect("scaled samples stay finite")
    }

    /// Extracts one component as a scalar waveform.
    pub fn component(&self, d: usize) -> Self {
        let flat = self.samples().map(|row| row[d]).collect();
        Self::from_flat(self.num_samples, 1, flat).expect("component of a valid waveform")
    }

    /// Stacks waveforms sharing one grid into a single higher-dimensional one.
    pub fn concat(parts: &[&PeriodicWaveform]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidWaveform("nothing to concatenate".into()))?;
        let n = first.num_samples;
        if parts.iter().any(|p| p.num_samples != n) {
            return Err(Error::InvalidWaveform(
                "concatenated waveforms must share a sample count".into(),
            ));
        }
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut flat = Vec::with_capacity(n * dim);
        for k in 0..n {
            for p in parts {
                flat.extend_from_slice(p.sample(k));
            }
        }
        Self::from_flat(n, dim, flat)
    }

    /// Per-component mean over one period (the DC harmonic).
    pub fn mean(&self) -> Vec<f64> {
        self.coeffs[..self.dim].iter().map(|c| c.re).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Maps a phase in cycles onto `[0, 1)`.
pub fn wrap(theta: f64) -> f64 {
    let w = theta - theta.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

fn interpolant_coeffs(n: usize, dim: usize, samples: &[f64]) -> Vec<Complex64> {
    let half = n / 2;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); (half + 1) * dim];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let inv_n = 1.0 / n as f64;
    for d in 0..dim {
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(samples[k * dim + d], 0.0);
        }
        fft.process(&mut buf);
        coeffs[d] = Complex64::new(buf[0].re * inv_n, 0.0);
        for k in 1..half {
            coeffs[k * dim + d] = buf[k] * (2.0 * inv_n);
        }
        coeffs[half * dim + d] = Complex64::new(buf[half].re * inv_n, 0.0);
    }
    coeffs
}
