//! Single-oscillator PPV phase macromodel.
//!
//! The phase `phi` (in cycles, kept unwrapped) obeys
//! `dphi/dt = f + f * p(phi) . b(t)`, where `p` is the 1-periodic PPV and
//! `b` the perturbation entering the oscillator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate, SolverOptions, Trajectory};
use crate::periodic::PeriodicWaveform;

/// Free-running frequency plus 1-periodic PPV (and optionally the 1-periodic
/// steady-state waveform used for reconstruction).
#[derive(Clone, Debug, PartialEq)]
pub struct OscillatorPhaseModel {
    pub label: String,
    f: f64,
    p: PeriodicWaveform,
    x_p: Option<PeriodicWaveform>,
}

impl OscillatorPhaseModel {
    pub fn new(label: impl Into<String>, f: f64, p: PeriodicWaveform) -> Result<Self> {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::InvalidModel(format!(
                "frequency must be positive, got {f}"
            )));
        }
        Ok(Self {
            label: label.into(),
            f,
            p,
            x_p: None,
        })
    }

    pub fn with_steady_state(mut self, x_p: PeriodicWaveform) -> Self {
        self.x_p = Some(x_p);
        self
    }

    pub fn frequency(&self) -> f64 {
        self.f
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f
    }

    pub fn ppv(&self) -> &PeriodicWaveform {
        &self.p
    }

    pub fn steady_state(&self) -> Option<&PeriodicWaveform> {
        self.x_p.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.p.dim()
    }

    /// `f + f * p(phi) . b`.
    pub fn ppv_rhs(&self, phi: f64, b: &[f64]) -> Result<f64> {
        if b.len() != self.p.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.p.dim(),
                got: b.len(),
                context: "oscillator input",
            });
        }
        let mut pv = vec![0.0; self.p.dim()];
        self.p.eval_into(phi, &mut pv);
        Ok(phase_velocity(self.f, &pv, b))
    }

    /// Integrates the phase equation under `input` from `phi0` at `t0` to
    /// `t1`, reporting the phase at `times`.
    pub fn simulate_phase(
        &self,
        input: &InputSignal,
        phi0: f64,
        t0: f64,
        t1: f64,
        times: &[f64],
        opts: &SolverOptions,
    ) -> Result<Trajectory> {
        check_span(t0, t1, opts)?;
        if input.dim() != self.p.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.p.dim(),
                got: input.dim(),
                context: "oscillator input signal",
            });
        }
        let mut b = vec![0.0; self.p.dim()];
        let mut pv = vec![0.0; self.p.dim()];
        integrate(
            |t, y, dy| {
                b.iter_mut().for_each(|v| *v = 0.0);
                input.accumulate(t, &mut b);
                self.p.eval_into(y[0], &mut pv);
                dy[0] = phase_velocity(self.f, &pv, &b);
            },
            t0,
            &[phi0],
            t1,
            times,
            opts,
        )
    }

    /// `x(t) ~= x_p(phi(t))` for each phase sample.
    pub fn reconstruct_waveform(&self, phases: &[f64]) -> Result<Vec<Vec<f64>>> {
        let x_p = self
            .x_p
            .as_ref()
            .ok_or_else(|| Error::MissingSteadyState(self.label.clone()))?;
        Ok(phases.iter().map(|&phi| x_p.eval(phi)).collect())
    }
}

// negated comparisons also reject NaN
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub(crate) fn check_span(t0: f64, t1: f64, opts: &SolverOptions) -> Result<()> {
    if !(t1 > t0) {
        return Err(Error::InvalidModel(format!(
            "need t1 > t0, got [{t0}, {t1}]"
        )));
    }
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(Error::InvalidModel("tolerances must be positive".into()));
    }
    Ok(())
}

/// `f + f * (p . b)`; shared by the single-oscillator and network right-hand
/// sides so that both evaluate identically.
#[inline]
pub(crate) fn phase_velocity(f: f64, p: &[f64], b: &[f64]) -> f64 {
    let s: f64 = p.iter().zip(b).map(|(x, y)| x * y).sum();
    f + f * s
}

/// One sinusoidal term `amplitude * sin(2 pi (frequency * t + phase))` on
/// a single input component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
    pub component: usize,
}

impl Sinusoid {
    pub fn value(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * std::f64::consts::PI * (self.frequency * t + self.phase)).sin()
    }
}

/// External input as a finite sum of sinusoids plus a constant offset vector.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSignal {
    dim: usize,
    terms: Vec<Sinusoid>,
    offset: Vec<f64>,
}

impl InputSignal {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
            offset: vec![0.0; dim],
        }
    }

    pub fn new(dim: usize, terms: Vec<Sinusoid>, offset: Option<Vec<f64>>) -> Result<Self> {
        let offset = offset.unwrap_or_else(|| vec![0.0; dim]);
        if offset.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: offset.len(),
                context: "input offset",
            });
        }
        if offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite input offset".into()));
        }
        for s in &terms {
            if s.component >= dim {
                return Err(Error::InvalidModel(format!(
                    "sinusoid component {} out of range for input dim {dim}",
                    s.component
                )));
            }
            if !(s.amplitude.is_finite() && s.frequency.is_finite() && s.phase.is_finite()) {
                return Err(Error::InvalidModel("non-finite sinusoid parameter".into()));
            }
        }
        Ok(Self { dim, terms, offset })
    }

    /// Constant `value` on one component.
    pub fn constant(dim: usize, component: usize, value: f64) -> Result<Self> {
        let mut offset = vec![0.0; dim];
        if component >= dim {
            return Err(Error::InvalidModel(format!(
                "component {component} out of range for input dim {dim}"
            )));
        }
        offset[component] = value;
        Self::new(dim, Vec::new(), Some(offset))
    }

    /// Single sinusoid on one component.
    pub fn sinusoid(dim: usize, term: Sinusoid) -> Result<Self> {
        Self::new(dim, vec![term], None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[Sinusoid] {
        &self.terms
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn is_zero(&self) -> bool {
        self.offset.iter().all(|&v| v == 0.0) && self.terms.iter().all(|s| s.amplitude == 0.0)
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.accumulate(t, &mut out);
        out
    }

    /// Adds the input value at `t` into `out`.
    pub fn accumulate(&self, t: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.offset) {
            *o += c;
        }
        for s in &self.terms {
            out[s.component] += s.value(t);
        }
    }

    /// Largest possible component magnitude.
    pub fn peak(&self) -> f64 {
        let mut bound = self.offset.iter().map(|v| v.abs()).collect::<Vec<_>>();
        for s in &self.terms {
            bound[s.component] += s.amplitude.abs();
        }
        bound.into_iter().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|s| Sinusoid {
                    amplitude: s.amplitude * factor,
                    ..s.clone()
                })
                .collect(),
            offset: self.offset.iter().map(|v| v * factor).collect(),
        }
    }

    /// Stacks per-block inputs into one signal; `None` blocks are zero.
    pub fn concat(blocks: &[(Option<&InputSignal>, usize)]) -> Result<Self> {
        let dim = blocks.iter().map(|(_, d)| d).sum();
        let mut terms = Vec::new();
        let mut offset = Vec::with_capacity(dim);
        let mut base = 0;
        for (sig, d) in blocks {
            match sig {
                Some(s) => {
                    if s.dim != *d {
                        return Err(Error::DimensionMismatch {
                            expected: *d,
                            got: s.dim,
                            context: "concatenated input block",
                        });
                    }
                    offset.extend_from_slice(&s.offset);
                    terms.extend(s.terms.iter().map(|t| Sinusoid {
                        component: t.component + base,
                        ..t.clone()
                    }));
                }
                None => offset.extend(std::iter::repeat_n(0.0, *d)),
            }
            base += d;
        }
        Self::new(dim, terms, Some(offset))
    }
}
