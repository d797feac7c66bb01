//! Group phase model of a locked network.
//!
//! To first order a weak input only moves a locked group along its orbit:
//! `phi(t) ~ phi*(t + alpha(t))` with
//!
//! ```text
//! d alpha/dt = v1(t + alpha) . b_phi(phi*(t + alpha), t).
//! ```
//!
//! Writing the group phase as `Phi = f* (t + alpha)` turns this into an
//! ordinary phase model, `dPhi/dt = f* + f* sum_i q_i(Phi) . a_i(t)`, with
//! channel PPVs `q_i(theta) = v1_i(theta) f_i p_i(theta + dphi*_i(theta))`.
//! The group can therefore be nested as one oscillator inside a larger network.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::floquet::{dot, FloquetData};
use crate::lock::LockedSolution;
use crate::network::CoupledPhaseSystem;
use crate::ode::{integrate, uniform_times, SolverOptions, Trajectory};
use crate::oscillator::{InputSignal, OscillatorPhaseModel};
use crate::periodic::PeriodicWaveform;

/// Effective phase model of a locked group.
#[derive(Clone, Debug)]
pub struct GroupPPVModel {
    lock: LockedSolution,
    v1: PeriodicWaveform,
    channels: Vec<PeriodicWaveform>,
    freqs: Vec<f64>,
    coupling_scale: f64,
}

impl GroupPPVModel {
    pub fn f_star(&self) -> f64 {
        self.lock.f_star()
    }

    pub fn t_star(&self) -> f64 {
        self.lock.t_star()
    }

    pub fn lock(&self) -> &LockedSolution {
        &self.lock
    }

    pub fn v1(&self) -> &PeriodicWaveform {
        &self.v1
    }

    /// Channel PPV `q_i` of member `i` over group phase.
    pub fn channel(&self, i: usize) -> &PeriodicWaveform {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[PeriodicWaveform] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Free-running frequencies of the members.
    pub fn member_frequencies(&self) -> &[f64] {
        &self.freqs
    }

    /// Largest coupling waveform magnitude in the source network.
    pub fn coupling_scale(&self) -> f64 {
        self.coupling_scale
    }

    /// Member phases `theta + dphi*_i(theta)` at group phase `theta`.
    pub fn member_phases(&self, group_phase: f64) -> Vec<f64> {
        let mut out = self.lock.delta_phi_star().eval(group_phase);
        for o in out.iter_mut() {
            *o += group_phase;
        }
        out
    }

    /// `d alpha/dt` from the channel form `sum_i q_i(f*(t + alpha)) . a_i(t)`.
    pub fn channel_rhs(&self, inputs: &BTreeMap<usize, InputSignal>, t: f64, alpha: f64) -> f64 {
        let theta = self.f_star() * (t + alpha);
        let mut acc = 0.0;
        for (&i, a) in inputs {
            let q = self.channels[i].eval(theta);
            acc += dot(&q, &a.value(t));
        }
        acc
    }

    /// `d alpha/dt` evaluated directly as `v1(t + alpha) . b_phi(phi*(t + alpha), t)`
    /// on a network that carries the inputs.
    pub fn direct_rhs(&self, cps: &CoupledPhaseSystem, t: f64, alpha: f64) -> f64 {
        let ts = t + alpha;
        let v = self.v1.eval(ts / self.t_star());
        dot(&v, &cps.b_phi(&self.lock.phi_star(ts), t))
    }
}

/// Builds the group model from a lock and its Floquet data.
pub fn build_group_model(
    cps: &CoupledPhaseSystem,
    sol: &LockedSolution,
    fd: &FloquetData,
) -> Result<GroupPPVModel> {
    if !fd.stability.all_ok() {
        return Err(Error::StabilityRefused(format!(
            "unity multiplier ok: {}, contraction ok: {} (largest remaining |rho| = {})",
            fd.stability.unity_multiplier_ok,
            fd.stability.contraction_ok,
            fd.contraction()
        )));
    }
    if fd.v1.dim() != cps.len() || sol.len() != cps.len() {
        return Err(Error::DimensionMismatch {
            expected: cps.len(),
            got: fd.v1.dim(),
            context: "Floquet data",
        });
    }
    let ns = fd.v1.num_samples();
    let v1 = fd.v1.clone();
    let dphi = sol.delta_phi_star().resampled(ns)?;
    let mut channels = Vec::with_capacity(cps.len());
    for (i, osc) in cps.oscillators().iter().enumerate() {
        let dim = osc.input_dim();
        let f = osc.frequency();
        let mut p = vec![0.0; dim];
        let mut flat = Vec::with_capacity(ns * dim);
        for k in 0..ns {
            let theta = k as f64 / ns as f64;
            osc.ppv().eval_into(theta + dphi.sample(k)[i], &mut p);
            let w = v1.sample(k)[i] * f;
            flat.extend(p.iter().map(|x| w * x));
        }
        channels.push(PeriodicWaveform::from_flat(ns, dim, flat)?);
    }
    let coupling_scale = cps
        .couplings()
        .iter()
        .map(|c| c.waveform.max_abs())
        .fold(0.0, f64::max);
    Ok(GroupPPVModel {
        lock: sol.clone(),
        v1,
        channels,
        freqs: cps.frequencies(),
        coupling_scale,
    })
}

/// Settings for [`simulate_group`].
#[derive(Clone, Debug)]
pub struct GroupOptions {
    pub solver: SolverOptions,
    /// Inputs with peak above this fraction of the coupling scale raise a
    /// warning.
    pub amplitude_guard: f64,
}

impl Default for GroupOptions {
    fn default() -> Self {
        Self {
            // phases and time shifts share one absolute error budget
            solver: SolverOptions::with_tol(1e-12, 1e-9),
            amplitude_guard: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroupTrajectory {
    pub t: Vec<f64>,
    /// Time shift `alpha(t)` along the lock, in time units.
    pub alpha: Vec<f64>,
    /// Group phase `f* (t + alpha)` in cycles.
    pub phase: Vec<f64>,
    pub rhs_evals: usize,
    pub warnings: Vec<String>,
}

fn check_inputs(gm: &GroupPPVModel, inputs: &BTreeMap<usize, InputSignal>) -> Result<()> {
    for (&i, a) in inputs {
        let q = gm.channels.get(i).ok_or_else(|| {
            Error::InvalidModel(format!(
                "input targets member {i} of a group of {}",
                gm.len()
            ))
        })?;
        if q.dim() != a.dim() {
            return Err(Error::DimensionMismatch {
                expected: q.dim(),
                got: a.dim(),
                context: "group member input",
            });
        }
    }
    Ok(())
}

/// Integrates the scalar group equation with `alpha(t0) = 0`.
pub fn simulate_group(
    gm: &GroupPPVModel,
    inputs: &BTreeMap<usize, InputSignal>,
    t0: f64,
    t1: f64,
    times: &[f64],
    opts: &GroupOptions,
) -> Result<GroupTrajectory> {
    check_inputs(gm, inputs)?;
    let mut warnings = Vec::new();
    let peak = inputs.values().map(|a| a.peak()).fold(0.0, f64::max);
    if gm.coupling_scale > 0.0 && peak > opts.amplitude_guard * gm.coupling_scale {
        warnings.push(format!(
            "input peak {peak} exceeds {} of the coupling scale {}; the group model assumes weak inputs",
            opts.amplitude_guard, gm.coupling_scale
        ));
    }
    let f_star = gm.f_star();
    let active: Vec<(&PeriodicWaveform, &InputSignal)> =
        inputs.iter().map(|(&i, a)| (&gm.channels[i], a)).collect();
    let max_dim = active.iter().map(|(q, _)| q.dim()).max().unwrap_or(0);
    let mut q = vec![0.0; max_dim];
    let mut a = vec![0.0; max_dim];
    let tr = integrate(
        |t, y, dy| {
            let theta = f_star * (t + y[0]);
            let mut acc = 0.0;
            for (qi, ai) in &active {
                let d = qi.dim();
                qi.eval_into(theta, &mut q[..d]);
                a[..d].iter_mut().for_each(|v| *v = 0.0);
                ai.accumulate(t, &mut a[..d]);
                acc += dot(&q[..d], &a[..d]);
            }
            dy[0] = acc;
        },
        t0,
        &[0.0],
        t1,
        times,
        &opts.solver,
    )?;
    let alpha = tr.component(0);
    let phase =
        tr.t.iter()
            .zip(&alpha)
            .map(|(t, al)| f_star * (t + al))
            .collect();
    Ok(GroupTrajectory {
        t: tr.t,
        alpha,
        phase,
        rhs_evals: tr.stats.rhs_evals,
        warnings,
    })
}

/// Member phases `phi*(t + alpha(t))` along a group trajectory.
pub fn reconstruct_phases(gm: &GroupPPVModel, traj: &GroupTrajectory) -> Vec<Vec<f64>> {
    traj.t
        .iter()
        .zip(&traj.alpha)
        .map(|(t, a)| gm.lock.phi_star(t + a))
        .collect()
}

/// How the time shift of a full trajectory is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ShiftEstimator {
    /// `argmin_alpha |phi(t) - phi*(t + alpha)|_2`.
    #[default]
    LeastSquares,
    /// Root of `v1(t + alpha) . (phi(t) - phi*(t + alpha))`.
    AdjointProjection,
}

#[derive(Clone, Debug)]
pub struct ValidationOptions {
    pub group: GroupOptions,
    /// Solver for the full network; defaults to the group solver.
    pub full_solver: Option<SolverOptions>,
    pub samples_per_period: usize,
    pub estimator: ShiftEstimator,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            group: GroupOptions::default(),
            full_solver: None,
            samples_per_period: 20,
            estimator: ShiftEstimator::LeastSquares,
        }
    }
}

/// Sampled series behind a [`ValidationReport`].
#[derive(Clone, Debug, Default)]
pub struct ValidationSeries {
    pub t: Vec<f64>,
    pub full: Vec<Vec<f64>>,
    pub reduced: Vec<Vec<f64>>,
    pub alpha_h: Vec<f64>,
    pub alpha_hat: Vec<f64>,
    /// `|phi_full - phi*(t + alpha_hat)|_inf`.
    pub deviation: Vec<f64>,
}

/// Comparison of a full network simulation with its group model.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub oscillators: usize,
    pub horizon_periods: f64,
    /// `sup_t |phi_full(t) - phi*(t + alpha_hat(t))|_inf`, cycles.
    pub sup_dphi: f64,
    /// `sup_t |alpha_h(t) - alpha_hat(t)|`, in cycles of the lock.
    pub sup_alpha_mismatch: f64,
    /// `sup_t |phi_full(t) - lift(alpha_h(t))|_inf`, cycles.
    pub sup_reconstruction: f64,
    /// Full right-hand-side component evaluations (calls times N).
    pub full_evals: usize,
    /// Scalar group right-hand-side evaluations.
    pub reduced_evals: usize,
    pub full_evals_per_period: f64,
    pub reduced_evals_per_period: f64,
    /// `max |d(dphi)/dt| / |dphi|` over samples with a resolvable deviation.
    pub max_deviation_rate_ratio: f64,
    /// `max |d alpha_h/dt|`; the shifted time is monotone while this is below 1.
    pub max_alpha_rate: f64,
    pub shift_monotone: bool,
    /// An adjacent pair of `alpha_hat` samples differs by more than half a period.
    pub lock_slip: bool,
    pub warnings: Vec<String>,
    pub series: ValidationSeries,
}

impl ValidationReport {
    pub const COLUMNS: [&'static str; 14] = [
        "oscillators",
        "horizon_periods",
        "sup_dphi",
        "sup_alpha_mismatch",
        "sup_reconstruction",
        "full_evals",
        "reduced_evals",
        "full_evals_per_period",
        "reduced_evals_per_period",
        "eval_ratio",
        "max_deviation_rate_ratio",
        "max_alpha_rate",
        "shift_monotone",
        "lock_slip",
    ];

    /// Reduced over full evaluations per simulated period.
    pub fn eval_ratio(&self) -> f64 {
        self.reduced_evals_per_period / self.full_evals_per_period
    }

    pub fn row(&self) -> Vec<String> {
        use crate::io::fmt_f64;
        vec![
            self.oscillators.to_string(),
            fmt_f64(self.horizon_periods),
            fmt_f64(self.sup_dphi),
            fmt_f64(self.sup_alpha_mismatch),
            fmt_f64(self.sup_reconstruction),
            self.full_evals.to_string(),
            self.reduced_evals.to_string(),
            fmt_f64(self.full_evals_per_period),
            fmt_f64(self.reduced_evals_per_period),
            fmt_f64(self.eval_ratio()),
            fmt_f64(self.max_deviation_rate_ratio),
            fmt_f64(self.max_alpha_rate),
            self.shift_monotone.to_string(),
            self.lock_slip.to_string(),
        ]
    }

    pub fn summary(&self) -> String {
        format!(
            "N = {}, horizon {:.1} periods\n  sup |dphi|_inf       {:.3e} cycles\n  sup |alpha_h - alpha_hat| {:.3e} cycles\n  sup reconstruction   {:.3e} cycles\n  evals/period full {:.1}, reduced {:.1} (ratio {:.4})\n  lock slip: {}, shifted time monotone: {}",
            self.oscillators,
            self.horizon_periods,
            self.sup_dphi,
            self.sup_alpha_mismatch,
            self.sup_reconstruction,
            self.full_evals_per_period,
            self.reduced_evals_per_period,
            self.eval_ratio(),
            self.lock_slip,
            self.shift_monotone
        )
    }
}

/// A full network paired with a reduced group model of it.
pub struct ReductionCase<'a> {
    /// Full network including its external inputs.
    pub full: &'a CoupledPhaseSystem,
    /// Lock of the full network, used to measure `alpha_hat`.
    pub orbit: &'a LockedSolution,
    /// Adjoint of `orbit`, needed by [`ShiftEstimator::AdjointProjection`].
    pub orbit_v1: Option<&'a PeriodicWaveform>,
    pub reduced: &'a GroupPPVModel,
    pub reduced_inputs: &'a BTreeMap<usize, InputSignal>,
    /// Maps `(t, alpha_h)` to full-network phases.
    pub lift: &'a (dyn Fn(f64, f64) -> Vec<f64> + Sync),
}

/// Runs the full network and the group model side by side on `[t0, t1]`.
pub fn validate_reduction(
    cps: &CoupledPhaseSystem,
    gm: &GroupPPVModel,
    inputs: &BTreeMap<usize, InputSignal>,
    t0: f64,
    t1: f64,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    let full = cps.autonomous().with_inputs(inputs)?;
    let lift = |t: f64, a: f64| gm.lock.phi_star(t + a);
    validate_reduction_with(
        &ReductionCase {
            full: &full,
            orbit: &gm.lock,
            orbit_v1: Some(&gm.v1),
            reduced: gm,
            reduced_inputs: inputs,
            lift: &lift,
        },
        t0,
        t1,
        opts,
    )
}

pub fn validate_reduction_with(
    case: &ReductionCase<'_>,
    t0: f64,
    t1: f64,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    if opts.estimator == ShiftEstimator::AdjointProjection && case.orbit_v1.is_none() {
        return Err(Error::InvalidModel(
            "adjoint projection needs the orbit's v1".into(),
        ));
    }
    let t_star = case.orbit.t_star();
    let periods = (t1 - t0) / t_star;
    let samples = ((periods * opts.samples_per_period as f64).ceil() as usize).max(1);
    let times = uniform_times(t0, t1, samples);
    let phi0 = (case.lift)(t0, 0.0);
    let full_solver = opts
        .full_solver
        .clone()
        .unwrap_or_else(|| opts.group.solver.clone());

    let (full, reduced) = std::thread::scope(|s| {
        let h = s.spawn(|| case.full.simulate_cps(&phi0, t0, t1, &times, &full_solver));
        let r = simulate_group(
            case.reduced,
            case.reduced_inputs,
            t0,
            t1,
            &times,
            &opts.group,
        );
        (h.join().expect("full simulation thread"), r)
    });
    let full: Trajectory = full?;
    let reduced = reduced?;

    let n = case.full.len();
    let mut alpha_hat = Vec::with_capacity(full.len());
    let mut deviation = Vec::with_capacity(full.len());
    let mut lifted = Vec::with_capacity(full.len());
    let mut seed = 0.0;
    let mut lock_slip = false;
    let mut sup_dphi = 0.0_f64;
    let mut sup_mismatch = 0.0_f64;
    let mut sup_recon = 0.0_f64;
    for (k, (&t, phi)) in full.t.iter().zip(&full.y).enumerate() {
        let a = estimate_shift(case, opts.estimator, t, phi, seed);
        if k > 0 && (a - seed).abs() > 0.5 * t_star {
            lock_slip = true;
        }
        seed = a;
        let star = case.orbit.phi_star(t + a);
        let dev = max_abs_diff(phi, &star);
        let lift = (case.lift)(t, reduced.alpha[k]);
        sup_dphi = sup_dphi.max(dev);
        sup_mismatch = sup_mismatch.max((reduced.alpha[k] - a).abs() / t_star);
        sup_recon = sup_recon.max(max_abs_diff(phi, &lift));
        alpha_hat.push(a);
        deviation.push(dev);
        lifted.push(lift);
    }

    let mut max_ratio = 0.0_f64;
    for k in 1..full.len() {
        let dt = full.t[k] - full.t[k - 1];
        let d0: Vec<f64> = dphi_vec(case, full.t[k - 1], &full.y[k - 1], alpha_hat[k - 1]);
        let d1: Vec<f64> = dphi_vec(case, full.t[k], &full.y[k], alpha_hat[k]);
        let norm = d1.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if norm > 1e-9 {
            let rate = max_abs_diff(&d1, &d0) / dt;
            max_ratio = max_ratio.max(rate / norm);
        }
    }
    let max_alpha_rate = full
        .t
        .iter()
        .zip(&reduced.alpha)
        .map(|(&t, &a)| case.reduced.channel_rhs(case.reduced_inputs, t, a).abs())
        .fold(0.0, f64::max);

    let full_evals = full.stats.rhs_evals * n;
    Ok(ValidationReport {
        oscillators: n,
        horizon_periods: periods,
        sup_dphi,
        sup_alpha_mismatch: sup_mismatch,
        sup_reconstruction: sup_recon,
        full_evals,
        reduced_evals: reduced.rhs_evals,
        full_evals_per_period: full_evals as f64 / periods,
        reduced_evals_per_period: reduced.rhs_evals as f64 / periods,
        max_deviation_rate_ratio: max_ratio,
        max_alpha_rate,
        shift_monotone: max_alpha_rate < 1.0,
        lock_slip,
        warnings: reduced.warnings.clone(),
        series: ValidationSeries {
            t: full.t.clone(),
            full: full.y,
            reduced: lifted,
            alpha_h: reduced.alpha,
            alpha_hat,
            deviation,
        },
    })
}

fn dphi_vec(case: &ReductionCase<'_>, t: f64, phi: &[f64], a: f64) -> Vec<f64> {
    let star = case.orbit.phi_star(t + a);
    phi.iter().zip(&star).map(|(x, y)| x - y).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Newton iteration for the time shift, seeded at `seed`.
fn estimate_shift(
    case: &ReductionCase<'_>,
    est: ShiftEstimator,
    t: f64,
    phi: &[f64],
    seed: f64,
) -> f64 {
    let orbit = case.orbit;
    let mut a = seed;
    for _ in 0..50 {
        let star = orbit.phi_star(t + a);
        let r: Vec<f64> = phi.iter().zip(&star).map(|(x, y)| x - y).collect();
        let u = orbit.phi_star_rate(t + a);
        let step = match est {
            ShiftEstimator::LeastSquares => dot(&u, &r) / dot(&u, &u),
            ShiftEstimator::AdjointProjection => {
                let v = case
                    .orbit_v1
                    .expect("checked")
                    .eval((t + a) / orbit.t_star());
                dot(&v, &r) / dot(&v, &u)
            }
        };
        a += step;
        if step.abs() < 1e-15 * (1.0 + a.abs()) {
            break;
        }
    }
    a
}

/// One nested input port: a member and the channels it exposes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Port {
    pub member: usize,
    pub channels: Vec<usize>,
}

impl Port {
    /// All channels of `member`.
    pub fn all(gm: &GroupPPVModel, member: usize) -> Self {
        Self {
            member,
            channels: (0..gm.channels[member].dim()).collect(),
        }
    }
}

/// Every channel of every member, in member order.
pub fn all_ports(gm: &GroupPPVModel) -> Vec<Port> {
    (0..gm.len()).map(|i| Port::all(gm, i)).collect()
}

/// The group as a single phase model with `f = f*` whose PPV stacks the
/// selected channel PPVs.
pub fn nest_as_oscillator(
    gm: &GroupPPVModel,
    ports: &[Port],
    label: &str,
) -> Result<OscillatorPhaseModel> {
    if ports.is_empty() || ports.iter().all(|p| p.channels.is_empty()) {
        return Err(Error::InvalidModel("empty port selection".into()));
    }
    let mut parts = Vec::new();
    for port in ports {
        let q = gm.channels.get(port.member).ok_or_else(|| {
            Error::InvalidModel(format!(
                "port member {} outside group of {}",
                port.member,
                gm.len()
            ))
        })?;
        for &c in &port.channels {
            if c >= q.dim() {
                return Err(Error::InvalidModel(format!(
                    "member {} has no channel {c}",
                    port.member
                )));
            }
            parts.push(q.component(c));
        }
    }
    let refs: Vec<&PeriodicWaveform> = parts.iter().collect();
    OscillatorPhaseModel::new(label, gm.f_star(), PeriodicWaveform::concat(&refs)?)
}

/// Output `b(phi_j)` of member `j` expressed over group phase,
/// `theta -> b(theta + dphi*_j(theta))`.
pub fn member_output(gm: &GroupPPVModel, member: usize, b: &PeriodicWaveform) -> PeriodicWaveform {
    let dphi = gm.lock.delta_phi_star();
    PeriodicWaveform::from_fn(
        b.num_samples().max(dphi.num_samples()),
        b.dim(),
        |theta, out| b.eval_into(theta + dphi.eval_component(theta, member), out),
    )
    .expect("composition of valid waveforms")
}

/// Places the member-level input `a` of `member` into the stacked input of
/// a nested group.
pub fn port_input(ports: &[Port], member: usize, a: &InputSignal) -> Result<InputSignal> {
    let width: usize = ports.iter().map(|p| p.channels.len()).sum();
    let mut terms = Vec::new();
    let mut offset = vec![0.0; width];
    let mut slot = 0;
    let mut found = false;
    for port in ports {
        for &c in &port.channels {
            if port.member == member {
                found = true;
                offset[slot] = a.offset().get(c).copied().unwrap_or(0.0);
                terms.extend(a.terms().iter().filter(|s| s.component == c).map(|s| {
                    let mut s = s.clone();
                    s.component = slot;
                    s
                }));
            }
            slot += 1;
        }
    }
    if !found {
        return Err(Error::InvalidModel(format!(
            "member {member} is not exposed by any port"
        )));
    }
    InputSignal::new(width, terms, Some(offset))
}

/// One member-to-member link between nested groups: member `src` of the
/// source group drives member `dst` of the destination group through output `b`.
#[derive(Clone, Debug)]
pub struct MemberLink {
    pub src: usize,
    pub dst: usize,
    pub b: PeriodicWaveform,
}

/// Coupling waveform, over the source group's phase, feeding the stacked
/// input of a group nested with `dst_ports`. Summing the links reproduces
/// the member-level couplings as seen at the group level.
pub fn group_link(
    src: &GroupPPVModel,
    dst_ports: &[Port],
    links: &[MemberLink],
) -> Result<PeriodicWaveform> {
    let width: usize = dst_ports.iter().map(|p| p.channels.len()).sum();
    let mut n = src.lock.delta_phi_star().num_samples();
    let mut routed = Vec::with_capacity(links.len());
    for l in links {
        if l.src >= src.len() {
            return Err(Error::InvalidModel(format!(
                "link source {} outside group of {}",
                l.src,
                src.len()
            )));
        }
        let mut slots = Vec::new();
        let mut slot = 0;
        for port in dst_ports {
            for &c in &port.channels {
                if port.member == l.dst {
                    if c >= l.b.dim() {
                        return Err(Error::InvalidModel(format!(
                            "link output has {} channels, port needs channel {c}",
                            l.b.dim()
                        )));
                    }
                    slots.push((slot, c));
                }
                slot += 1;
            }
        }
        if slots.is_empty() {
            return Err(Error::InvalidModel(format!(
                "member {} is not exposed by any port",
                l.dst
            )));
        }
        n = n.max(l.b.num_samples());
        routed.push((member_output(src, l.src, &l.b), slots));
    }
    PeriodicWaveform::from_fn(n, width, |theta, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (w, slots) in &routed {
            for &(slot, c) in slots {
                out[slot] += w.eval_component(theta, c);
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::floquet::{analyze, FloquetOptions};
    use crate::lock::{find_lock, LockGuess, LockOptions};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn group(cps: &CoupledPhaseSystem) -> GroupPPVModel {
        let sol = find_lock(cps, &LockGuess::from_system(cps), &LockOptions::default()).unwrap();
        let fd = analyze(cps, &sol, &FloquetOptions::default()).unwrap();
        build_group_model(cps, &sol, &fd).unwrap()
    }

    fn one(i: usize, a: InputSignal) -> BTreeMap<usize, InputSignal> {
        BTreeMap::from([(i, a)])
    }

    #[test]
    fn identical_pair_channels_are_half_ppv() {
        let gm = group(&fixtures::identical_pair(0.1));
        let p = fixtures::quadrature_ppv(128);
        for i in 0..2 {
            assert_eq!(gm.channel(i).dim(), 2);
            for (q, pp) in gm.channel(i).flat_samples().iter().zip(p.flat_samples()) {
                assert_abs_diff_eq!(*q, 0.5 * pp, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn single_oscillator_group_is_the_oscillator() {
        let cps = fixtures::sinusoidal_network(&[1.3], &[], 0.0);
        let gm = group(&cps);
        assert_abs_diff_eq!(gm.f_star(), 1.3, epsilon = 1e-12);
        for (q, p) in gm
            .channel(0)
            .flat_samples()
            .iter()
            .zip(cps.oscillator(0).ppv().flat_samples())
        {
            assert_abs_diff_eq!(q, p, epsilon = 1e-8);
        }
    }

    #[test]
    fn refuses_without_stability() {
        let cps = fixtures::identical_pair(0.1);
        let sol = find_lock(&cps, &LockGuess::from_system(&cps), &LockOptions::default()).unwrap();
        let mut fd = analyze(&cps, &sol, &FloquetOptions::default()).unwrap();
        fd.stability.contraction_ok = false;
        assert!(matches!(
            build_group_model(&cps, &sol, &fd),
            Err(Error::StabilityRefused(_))
        ));
    }

    #[test]
    fn zero_input_keeps_alpha_zero() {
        let gm = group(&fixtures::ring3());
        let times = uniform_times(0.0, 10.0, 20);
        let tr = simulate_group(
            &gm,
            &BTreeMap::new(),
            0.0,
            10.0,
            &times,
            &GroupOptions::default(),
        )
        .unwrap();
        assert!(tr.alpha.iter().all(|&a| a == 0.0));
        let phases = reconstruct_phases(&gm, &tr);
        for (t, ph) in tr.t.iter().zip(&phases) {
            assert_eq!(ph, &gm.lock().phi_star(*t));
        }
    }

    #[test]
    fn constant_cos_channel_input_is_bounded() {
        let gm = group(&fixtures::identical_pair(0.1));
        let eps = 1e-3;
        let a = InputSignal::constant(2, 1, eps).unwrap();
        let inputs = BTreeMap::from([(0, a.clone()), (1, a)]);
        let times = uniform_times(0.0, 50.0, 2000);
        let tr = simulate_group(&gm, &inputs, 0.0, 50.0, &times, &GroupOptions::default()).unwrap();
        // exact mean rate of t + alpha is sqrt(1 - eps^2); the rest oscillates
        // with amplitude eps / (2 pi) to first order
        let drift = 1.0 - (1.0 - eps * eps).sqrt();
        let sup =
            tr.t.iter()
                .zip(&tr.alpha)
                .fold(0.0_f64, |m, (t, a)| m.max((a + drift * t).abs()));
        assert!(sup <= eps / (2.0 * PI) * 1.01, "sup alpha {sup}");
        // d alpha/dt = eps cos(2 pi (t + alpha))
        for (t, a) in tr.t.iter().zip(&tr.alpha) {
            let rhs = gm.channel_rhs(&inputs, *t, *a);
            assert_abs_diff_eq!(rhs, eps * (2.0 * PI * (t + a)).cos(), epsilon = 1e-9);
        }
    }

    #[test]
    fn constant_shift_reconstructs_to_shifted_lock() {
        let gm = group(&fixtures::identical_pair(0.1));
        let tr = GroupTrajectory {
            t: vec![0.0, 1.5, 3.25],
            alpha: vec![0.1; 3],
            phase: vec![],
            rhs_evals: 0,
            warnings: vec![],
        };
        for (t, ph) in tr.t.iter().zip(reconstruct_phases(&gm, &tr)) {
            assert_abs_diff_eq!(ph[0], t + 0.1, epsilon = 1e-7);
            assert_abs_diff_eq!(ph[1], t + 0.1, epsilon = 1e-7);
        }
    }

    #[test]
    fn zero_input_validation_is_exact() {
        let cps = fixtures::detuned_pair(0.02, 0.1);
        let gm = group(&cps);
        let rep = validate_reduction(
            &cps,
            &gm,
            &BTreeMap::new(),
            0.0,
            20.0 * gm.t_star(),
            &ValidationOptions::default(),
        )
        .unwrap();
        assert!(rep.sup_dphi < 1e-7, "{}", rep.summary());
        assert!(rep.sup_alpha_mismatch < 1e-7);
        assert!(!rep.lock_slip);
    }

    #[test]
    fn detuned_pair_alpha_tracks_projection() {
        let cps = fixtures::detuned_pair(0.02, 0.1);
        let gm = group(&cps);
        let inputs = one(0, fixtures::injection(1e-3, gm.f_star(), 0.0, 0));
        for est in [
            ShiftEstimator::LeastSquares,
            ShiftEstimator::AdjointProjection,
        ] {
            let opts = ValidationOptions {
                estimator: est,
                ..Default::default()
            };
            let rep =
                validate_reduction(&cps, &gm, &inputs, 0.0, 50.0 * gm.t_star(), &opts).unwrap();
            assert!(rep.sup_alpha_mismatch < 5e-3, "{}", rep.summary());
            assert!(rep.reduced_evals < rep.full_evals, "{}", rep.summary());
            assert!(rep.shift_monotone && !rep.lock_slip);
        }
    }

    #[test]
    fn amplitude_guard_warns() {
        let gm = group(&fixtures::identical_pair(0.1));
        let times = [0.0, 1.0];
        let loud = one(0, fixtures::injection(0.05, 1.0, 0.0, 0));
        let quiet = one(0, fixtures::injection(1e-3, 1.0, 0.0, 0));
        let opts = GroupOptions::default();
        assert_eq!(
            simulate_group(&gm, &loud, 0.0, 1.0, &times, &opts)
                .unwrap()
                .warnings
                .len(),
            1
        );
        assert!(simulate_group(&gm, &quiet, 0.0, 1.0, &times, &opts)
            .unwrap()
            .warnings
            .is_empty());
    }

    #[test]
    fn nesting_stacks_channels() {
        let gm = group(&fixtures::identical_pair(0.1));
        let ports = [
            Port {
                member: 1,
                channels: vec![1],
            },
            Port::all(&gm, 0),
        ];
        let nested = nest_as_oscillator(&gm, &ports, "pair").unwrap();
        assert_eq!(nested.input_dim(), 3);
        assert_eq!(nested.frequency(), gm.f_star());
        assert_eq!(nested.ppv().component(0), gm.channel(1).component(1));
        assert!(nest_as_oscillator(&gm, &[], "x").is_err());
        assert!(nest_as_oscillator(
            &gm,
            &[Port {
                member: 5,
                channels: vec![0]
            }],
            "x"
        )
        .is_err());

        let a = fixtures::injection(1e-3, 1.0, 0.2, 1);
        let stacked = port_input(&ports, 0, &a).unwrap();
        let t = 0.37;
        let v = stacked.value(t);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1..], a.value(t)[..]);
    }

    #[test]
    fn nested_single_oscillator_matches_original() {
        let cps = fixtures::sinusoidal_network(&[0.8], &[], 0.0);
        let gm = group(&cps);
        let nested = nest_as_oscillator(&gm, &all_ports(&gm), "solo").unwrap();
        let orig = cps.oscillator(0);
        assert_abs_diff_eq!(nested.frequency(), orig.frequency(), epsilon = 1e-12);
        for (a, b) in nested
            .ppv()
            .flat_samples()
            .iter()
            .zip(orig.ppv().flat_samples())
        {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn group_link_routes_member_outputs() {
        let gm = group(&fixtures::detuned_pair(0.002, 0.1));
        let ports = all_ports(&gm);
        let b = fixtures::adler_coupling(64, 0.01);
        let links = [MemberLink {
            src: 1,
            dst: 0,
            b: b.clone(),
        }];
        let w = group_link(&gm, &ports, &links).unwrap();
        assert_eq!(w.dim(), 4);
        let direct = member_output(&gm, 1, &b);
        for theta in [0.0, 0.13, 0.71] {
            let v = w.eval(theta);
            assert_abs_diff_eq!(v[0], direct.eval_component(theta, 0), epsilon = 1e-12);
            assert_abs_diff_eq!(v[1], direct.eval_component(theta, 1), epsilon = 1e-12);
            assert_eq!(v[2..], [0.0, 0.0]);
        }
        assert!(group_link(
            &gm,
            &ports,
            &[MemberLink {
                src: 4,
                dst: 0,
                b: b.clone()
            }]
        )
        .is_err());
        assert!(group_link(
            &gm,
            &[Port {
                member: 1,
                channels: vec![0]
            }],
            &links
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn channel_form_equals_direct_form(pts in proptest::collection::vec((-50.0f64..50.0, -1.0f64..1.0), 125)) {
            let cps = fixtures::ring3();
            let gm = group(&cps);
            let inputs = BTreeMap::from([
                (0, fixtures::injection(1e-2, 1.1, 0.3, 0)),
                (2, fixtures::rotating_injection(5e-3, 0.9)),
            ]);
            let full = cps.with_inputs(&inputs).unwrap();
            for (t, a) in pts {
                let lhs = gm.channel_rhs(&inputs, t, a);
                let rhs = gm.direct_rhs(&full, t, a);
                prop_assert!((lhs - rhs).abs() < 1e-9, "t {} a {}: {} vs {}", t, a, lhs, rhs);
            }
        }
    }
}
