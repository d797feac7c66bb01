//! Coupled phase system (CPS): `N` PPV macromodels driving each other through
//! phase-dependent coupling waveforms, plus optional external inputs.
//!
//! Oscillator `i` sees the input `b_i(t) = a_i(t) + sum_j b_ij(phi_j)` and the
//! system evolves as `dphi/dt = g_phi(phi) + b_phi(phi, t)`, where `g_phi`
//! collects the internal couplings and `b_phi` the external inputs.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ode::{integrate, SolverOptions, Trajectory};
use crate::oscillator::{check_span, phase_velocity, InputSignal, OscillatorPhaseModel};
use crate::periodic::PeriodicWaveform;

/// Influence of oscillator `src` on oscillator `dst`, as a 1-periodic
/// function of the source phase.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub src: usize,
    pub dst: usize,
    pub waveform: PeriodicWaveform,
}

impl Coupling {
    pub fn new(src: usize, dst: usize, waveform: PeriodicWaveform) -> Self {
        Self { src, dst, waveform }
    }
}

#[derive(Clone, Debug)]
struct Link {
    src: usize,
    waveform: PeriodicWaveform,
    slope: PeriodicWaveform,
}

/// Immutable coupled phase system.
#[derive(Clone, Debug)]
pub struct CoupledPhaseSystem {
    oscillators: Vec<OscillatorPhaseModel>,
    couplings: Vec<Coupling>,
    external: BTreeMap<usize, InputSignal>,
    /// Incoming links grouped by destination, sorted by source.
    incoming: Vec<Vec<Link>>,
    ppv_slopes: Vec<PeriodicWaveform>,
    max_dim: usize,
}

impl CoupledPhaseSystem {
    pub fn new(oscillators: Vec<OscillatorPhaseModel>, couplings: Vec<Coupling>) -> Result<Self> {
        let n = oscillators.len();
        if n == 0 {
            return Err(Error::InvalidModel(
                "a coupled system needs at least one oscillator".into(),
            ));
        }
        let mut incoming: Vec<Vec<Link>> = vec![Vec::new(); n];
        for c in &couplings {
            if c.src >= n || c.dst >= n {
                return Err(Error::InvalidModel(format!(
                    "coupling {} -> {} references a missing oscillator (N = {n})",
                    c.src, c.dst
                )));
            }
            if c.src == c.dst {
                return Err(Error::InvalidModel(format!(
                    "self-coupling on oscillator {}",
                    c.src
                )));
            }
            let want = oscillators[c.dst].input_dim();
            if c.waveform.dim() != want {
                return Err(Error::DimensionMismatch {
                    expected: want,
                    got: c.waveform.dim(),
                    context: "coupling waveform",
                });
            }
            if incoming[c.dst].iter().any(|l| l.src == c.src) {
                return Err(Error::InvalidModel(format!(
                    "duplicate coupling {} -> {}; sum the waveforms first",
                    c.src, c.dst
                )));
            }
            incoming[c.dst].push(Link {
                src: c.src,
                waveform: c.waveform.clone(),
                slope: c.waveform.derivative(),
            });
        }
        for links in &mut incoming {
            links.sort_by_key(|l| l.src);
        }
        let mut couplings = couplings;
        couplings.sort_by_key(|c| (c.dst, c.src));
        let ppv_slopes = oscillators.iter().map(|o| o.ppv().derivative()).collect();
        let max_dim = oscillators.iter().map(|o| o.input_dim()).max().unwrap_or(1);
        Ok(Self {
            oscillators,
            couplings,
            external: BTreeMap::new(),
            incoming,
            ppv_slopes,
            max_dim,
        })
    }

    /// Attaches (or replaces) the external input of oscillator `i`.
    pub fn with_input(mut self, i: usize, input: InputSignal) -> Result<Self> {
        let osc = self
            .oscillators
            .get(i)
            .ok_or_else(|| Error::InvalidModel(format!("input targets missing oscillator {i}")))?;
        if input.dim() != osc.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: osc.input_dim(),
                got: input.dim(),
                context: "external input",
            });
        }
        self.external.insert(i, input);
        Ok(self)
    }

    pub fn with_inputs(mut self, inputs: &BTreeMap<usize, InputSignal>) -> Result<Self> {
        for (&i, sig) in inputs {
            self = self.with_input(i, sig.clone())?;
        }
        Ok(self)
    }

    /// Same system with all external inputs removed.
    pub fn autonomous(&self) -> Self {
        let mut s = self.clone();
        s.external.clear();
        s
    }

    pub fn len(&self) -> usize {
        self.oscillators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.oscillators.is_empty()
    }

    pub fn oscillators(&self) -> &[OscillatorPhaseModel] {
        &self.oscillators
    }

    pub fn oscillator(&self, i: usize) -> &OscillatorPhaseModel {
        &self.oscillators[i]
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn external_inputs(&self) -> &BTreeMap<usize, InputSignal> {
        &self.external
    }

    pub fn has_external_inputs(&self) -> bool {
        self.external.values().any(|s| !s.is_zero())
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.oscillators.iter().map(|o| o.frequency()).collect()
    }

    fn coupling_sum(&self, i: usize, phi: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        for link in &self.incoming[i] {
            let tmp = &mut tmp[..out.len()];
            link.waveform.eval_into(phi[link.src], tmp);
            for (o, v) in out.iter_mut().zip(tmp.iter()) {
                *o += v;
            }
        }
    }

    /// Total input `b_i(t) = a_i(t) + sum_j b_ij(phi_j)` of oscillator `i`.
    pub fn assemble_input(&self, i: usize, phi: &[f64], t: f64) -> Vec<f64> {
        let dim = self.oscillators[i].input_dim();
        let mut b = vec![0.0; dim];
        let mut tmp = vec![0.0; dim];
        if let Some(a) = self.external.get(&i) {
            a.accumulate(t, &mut b);
        }
        self.coupling_sum(i, phi, &mut b, &mut tmp);
        b
    }

    /// Autonomous part `g_phi`: component `i` is
    /// `f_i + f_i p_i(phi_i) . sum_j b_ij(phi_j)`.
    pub fn g_phi(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut scratch = Scratch::new(self.max_dim);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.velocity(i, phi, None, &mut scratch);
        }
        out
    }

    /// External part `b_phi`: component `i` is `f_i p_i(phi_i) . a_i(t)`.
    pub fn b_phi(&self, phi: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut p = vec![0.0; self.max_dim];
        for (i, o) in out.iter_mut().enumerate() {
            if let Some(a) = self.external.get(&i) {
                let osc = &self.oscillators[i];
                let dim = osc.input_dim();
                let av = a.value(t);
                osc.ppv().eval_into(phi[i], &mut p[..dim]);
                let s: f64 = p[..dim].iter().zip(&av).map(|(x, y)| x * y).sum();
                *o = osc.frequency() * s;
            }
        }
        out
    }

    fn velocity(&self, i: usize, phi: &[f64], t: Option<f64>, s: &mut Scratch) -> f64 {
        let osc = &self.oscillators[i];
        let dim = osc.input_dim();
        let b = &mut s.b[..dim];
        b.iter_mut().for_each(|v| *v = 0.0);
        if let (Some(t), Some(a)) = (t, self.external.get(&i)) {
            a.accumulate(t, b);
        }
        self.coupling_sum(i, phi, b, &mut s.tmp);
        let p = &mut s.p[..dim];
        osc.ppv().eval_into(phi[i], p);
        phase_velocity(osc.frequency(), p, b)
    }

    /// Full right-hand side `g_phi(phi) + b_phi(phi, t)` evaluated as
    /// `f_i + f_i p_i . b_i(t)`.
    pub fn rhs(&self, t: f64, phi: &[f64], out: &mut [f64], scratch: &mut Scratch) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.velocity(i, phi, Some(t), scratch);
        }
    }

    /// Jacobian of `g_phi` at `phi`.
    pub fn jacobian(&self, phi: &[f64]) -> DMatrix<f64> {
        let n = self.len();
        let mut jac = DMatrix::zeros(n, n);
        let mut buf = vec![0.0; self.max_dim];
        let mut bsum = vec![0.0; self.max_dim];
        let mut p = vec![0.0; self.max_dim];
        let mut dp = vec![0.0; self.max_dim];
        for i in 0..n {
            let osc = &self.oscillators[i];
            let dim = osc.input_dim();
            let f = osc.frequency();
            osc.ppv().eval_into(phi[i], &mut p[..dim]);
            self.ppv_slopes[i].eval_into(phi[i], &mut dp[..dim]);
            let bsum = &mut bsum[..dim];
            bsum.iter_mut().for_each(|v| *v = 0.0);
            for link in &self.incoming[i] {
                link.waveform.eval_into(phi[link.src], &mut buf[..dim]);
                for (s, v) in bsum.iter_mut().zip(&buf[..dim]) {
                    *s += v;
                }
                link.slope.eval_into(phi[link.src], &mut buf[..dim]);
                let off: f64 = p[..dim].iter().zip(&buf[..dim]).map(|(x, y)| x * y).sum();
                jac[(i, link.src)] = f * off;
            }
            let diag: f64 = dp[..dim].iter().zip(bsum.iter()).map(|(x, y)| x * y).sum();
            jac[(i, i)] = f * diag;
        }
        jac
    }

    /// Integrates the CPS from `phi0` at `t0` to `t1`.
    pub fn simulate_cps(
        &self,
        phi0: &[f64],
        t0: f64,
        t1: f64,
        times: &[f64],
        opts: &SolverOptions,
    ) -> Result<Trajectory> {
        check_span(t0, t1, opts)?;
        self.check_state(phi0)?;
        let mut scratch = Scratch::new(self.max_dim);
        integrate(
            |t, y, dy| self.rhs(t, y, dy, &mut scratch),
            t0,
            phi0,
            t1,
            times,
            opts,
        )
    }

    pub(crate) fn check_state(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: phi.len(),
                context: "phase vector",
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite phase".into()));
        }
        Ok(())
    }
}

/// Reusable buffers for right-hand-side evaluation.
#[derive(Clone, Debug)]
pub struct Scratch {
    b: Vec<f64>,
    p: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Self {
            b: vec![0.0; dim],
            p: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}
