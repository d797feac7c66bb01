//! TOML network description.
//!
//! ```toml
//! [[oscillator]]
//! kind = "sinusoidal"      # quadrature PPV [-sin, cos]
//! frequency = 1.0
//!
//! [[oscillator]]
//! kind = "builtin"         # PPV extracted from a state-space model
//! name = "vanderpol"
//! params = { mu = 1.0 }
//!
//! [[oscillator]]
//! kind = "table"           # PPV samples from a `theta,v0,...` CSV file
//! frequency = 0.5
//! ppv = "ppv.csv"
//!
//! [[coupling]]
//! src = 0
//! dst = 1
//! gain = 0.1
//! shape = "adler"          # gain [cos 2 pi phi, sin 2 pi phi]
//! # shape = "harmonic", channel = 0, phase = 0.25
//! # shape = "table", waveform = "b.csv"
//!
//! [[input]]
//! dst = 0
//! channel = 0
//! amplitude = 1e-3
//! frequency = 1.0          # defaults to the lock frequency
//! phase = 0.0
//!
//! [solver]
//! horizon = 50.0           # lock periods
//!
//! [blowup]
//! eps = 1e-3
//!
//! [sweep]
//! input_scale = [0.5, 1.0, 2.0]
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fixtures;
use crate::hierppv::ShiftEstimator;
use crate::io::read_waveform;
use crate::network::{CoupledPhaseSystem, Coupling};
use crate::oscillator::{InputSignal, OscillatorPhaseModel, Sinusoid};
use crate::periodic::{PeriodicWaveform, DEFAULT_SAMPLES};
use crate::prc::{phase_model, CycleOptions, StateSpaceOscillator};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(rename = "oscillator")]
    pub oscillators: Vec<OscillatorSpec>,
    #[serde(rename = "coupling", default)]
    pub couplings: Vec<CouplingSpec>,
    #[serde(rename = "input", default)]
    pub inputs: Vec<InputSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub blowup: BlowupSpec,
    pub sweep: Option<SweepSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OscillatorSpec {
    Sinusoidal {
        label: Option<String>,
        frequency: f64,
    },
    Builtin {
        label: Option<String>,
        name: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Table {
        label: Option<String>,
        frequency: f64,
        ppv: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Adler,
    Harmonic,
    Table,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub src: usize,
    pub dst: usize,
    #[serde(default = "one")]
    pub gain: f64,
    #[serde(default)]
    pub shape: Shape,
    pub channel: Option<usize>,
    #[serde(default)]
    pub phase: f64,
    pub waveform: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub dst: usize,
    #[serde(default)]
    pub channel: usize,
    pub amplitude: f64,
    pub frequency: Option<f64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    /// Tolerances for lock, Floquet and blow-up integrations.
    pub rtol: f64,
    pub atol: f64,
    /// Absolute tolerance for full and reduced simulations.
    pub sim_tol: f64,
    pub lock_tol: f64,
    pub max_iterations: usize,
    pub samples: usize,
    /// Simulation horizon in lock periods.
    pub horizon: f64,
    pub samples_per_period: usize,
    pub seed_shift: f64,
    pub guess_frequency: Option<f64>,
    pub guess_offsets: Option<Vec<f64>>,
    pub estimator: EstimatorSpec,
    /// Step budget for full and reduced simulations.
    pub max_steps: Option<usize>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-13,
            sim_tol: 1e-9,
            lock_tol: 1e-9,
            max_iterations: 25,
            samples: DEFAULT_SAMPLES,
            horizon: 50.0,
            samples_per_period: 20,
            seed_shift: 0.0,
            guess_frequency: None,
            guess_offsets: None,
            max_steps: None,
            estimator: EstimatorSpec::LeastSquares,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorSpec {
    #[default]
    LeastSquares,
    AdjointProjection,
}

impl From<EstimatorSpec> for ShiftEstimator {
    fn from(e: EstimatorSpec) -> Self {
        match e {
            EstimatorSpec::LeastSquares => ShiftEstimator::LeastSquares,
            EstimatorSpec::AdjointProjection => ShiftEstimator::AdjointProjection,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupSpec {
    pub eps: f64,
}

impl Default for BlowupSpec {
    fn default() -> Self {
        Self { eps: 1e-3 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Factors applied to every input amplitude, one compare run each.
    pub input_scale: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl NetworkConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::parse(&text)?, base))
    }

    fn check(&self) -> Result<()> {
        let n = self.oscillators.len();
        if n == 0 {
            return Err(bad("at least one oscillator is required"));
        }
        for c in &self.couplings {
            if c.src >= n || c.dst >= n {
                return Err(bad(format!(
                    "coupling {} -> {} references a missing oscillator",
                    c.src, c.dst
                )));
            }
        }
        for i in &self.inputs {
            if i.dst >= n {
                return Err(bad(format!("input targets missing oscillator {}", i.dst)));
            }
        }
        let s = &self.solver;
        for (name, v) in [
            ("rtol", s.rtol),
            ("atol", s.atol),
            ("sim_tol", s.sim_tol),
            ("lock_tol", s.lock_tol),
            ("horizon", s.horizon),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(format!("solver.{name} must be positive")));
            }
        }
        if !s.seed_shift.is_finite() {
            return Err(bad("solver.seed_shift must be finite"));
        }
        if s.samples_per_period == 0 {
            return Err(bad("solver.samples_per_period must be positive"));
        }
        if let Some(sw) = &self.sweep {
            if sw.input_scale.is_empty() || sw.input_scale.iter().any(|v| !v.is_finite()) {
                return Err(bad("sweep.input_scale must be a non-empty list of numbers"));
            }
        }
        Ok(())
    }

    /// Builds the autonomous network. Builtin oscillators are reduced to
    /// phase models here.
    pub fn network(&self, base: &Path) -> Result<CoupledPhaseSystem> {
        let mut oscs = Vec::with_capacity(self.oscillators.len());
        for (i, spec) in self.oscillators.iter().enumerate() {
            oscs.push(self.oscillator(i, spec, base)?);
        }
        let mut couplings = Vec::with_capacity(self.couplings.len());
        for c in &self.couplings {
            let dim = oscs[c.dst].input_dim();
            let w = match c.shape {
                Shape::Adler => {
                    if dim != 2 {
                        return Err(bad(format!(
                            "adler coupling needs a two-channel destination, oscillator {} has {dim}",
                            c.dst
                        )));
                    }
                    fixtures::adler_coupling(DEFAULT_SAMPLES, c.gain)
                }
                Shape::Harmonic => {
                    let ch = c.channel.unwrap_or(0);
                    if ch >= dim {
                        return Err(bad(format!(
                            "oscillator {} has no input channel {ch}",
                            c.dst
                        )));
                    }
                    let (gain, phase) = (c.gain, c.phase);
                    PeriodicWaveform::from_fn(DEFAULT_SAMPLES, dim, |t, out| {
                        out.iter_mut().for_each(|v| *v = 0.0);
                        out[ch] = gain * (2.0 * PI * (t + phase)).cos();
                    })?
                }
                Shape::Table => {
                    let path = c
                        .waveform
                        .as_ref()
                        .ok_or_else(|| bad("table coupling needs `waveform`"))?;
                    read_table(base, path)?.scaled(c.gain)
                }
            };
            couplings.push(Coupling::new(c.src, c.dst, w));
        }
        CoupledPhaseSystem::new(oscs, couplings)
    }

    fn oscillator(
        &self,
        i: usize,
        spec: &OscillatorSpec,
        base: &Path,
    ) -> Result<OscillatorPhaseModel> {
        let name = |label: &Option<String>| label.clone().unwrap_or_else(|| format!("osc{i}"));
        match spec {
            OscillatorSpec::Sinusoidal { label, frequency } => {
                if !(frequency.is_finite() && *frequency > 0.0) {
                    return Err(bad(format!("oscillator {i}: frequency must be positive")));
                }
                Ok(fixtures::sinusoidal_oscillator(&name(label), *frequency))
            }
            OscillatorSpec::Builtin {
                label,
                name: which,
                params,
            } => {
                let params: Vec<(String, f64)> =
                    params.iter().map(|(k, v)| (k.clone(), *v)).collect();
                let o = StateSpaceOscillator::builtin(which, &params)?;
                let (_, mut m) = phase_model(&o, &CycleOptions::default())?;
                m.label = name(label);
                Ok(m)
            }
            OscillatorSpec::Table {
                label,
                frequency,
                ppv,
            } => OscillatorPhaseModel::new(name(label), *frequency, read_table(base, ppv)?),
        }
    }

    /// External inputs grouped per oscillator, scaled by `scale`; inputs
    /// without a frequency run at `f_default`.
    pub fn external_inputs(
        &self,
        cps: &CoupledPhaseSystem,
        f_default: f64,
        scale: f64,
    ) -> Result<BTreeMap<usize, InputSignal>> {
        let mut terms: BTreeMap<usize, Vec<Sinusoid>> = BTreeMap::new();
        for inp in &self.inputs {
            let dim = cps.oscillator(inp.dst).input_dim();
            if inp.channel >= dim {
                return Err(bad(format!(
                    "oscillator {} has no input channel {}",
                    inp.dst, inp.channel
                )));
            }
            terms.entry(inp.dst).or_default().push(Sinusoid {
                amplitude: inp.amplitude * scale,
                frequency: inp.frequency.unwrap_or(f_default),
                phase: inp.phase,
                component: inp.channel,
            });
        }
        terms
            .into_iter()
            .map(|(i, t)| Ok((i, InputSignal::new(cps.oscillator(i).input_dim(), t, None)?)))
            .collect()
    }
}

fn read_table(base: &Path, rel: &Path) -> Result<PeriodicWaveform> {
    let path = base.join(rel);
    let file = std::fs::File::open(&path)
        .map_err(|e| bad(format!("cannot open {}: {e}", path.display())))?;
    read_waveform(file).map_err(|e| bad(format!("{}: {e}", path.display())))
}
