//! Mutual injection lock of an externally unperturbed coupled phase system.
//!
//! A locked solution is derivo-periodic: `phi*(t) = f* t + dphi*(t)` with
//! `dphi*` periodic in `T* = 1/f*`, so `phi*(t + T*) = phi*(t) + 1`. It is
//! found by shooting over one period with the unknowns
//! `(f*, dphi*_2(0), ..., dphi*_N(0))`; the first oscillator is anchored at
//! `dphi*_1(0) = 0` to remove the time-shift family of solutions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::CoupledPhaseSystem;
use crate::ode::{integrate, SolverOptions, Trajectory};
use crate::periodic::{PeriodicWaveform, DEFAULT_SAMPLES};

/// Converged lock, with the periodic deviation stored over scaled time
/// `s = t / T*` in one period.
#[derive(Clone, Debug, PartialEq)]
pub struct LockedSolution {
    f_star: f64,
    delta_phi_star: PeriodicWaveform,
    delta_phi_rate: PeriodicWaveform,
    /// Time shift applied relative to the anchored solution.
    pub anchor_shift: f64,
    /// Final shooting residual (infinity norm).
    pub residual_norm: f64,
    pub iterations: usize,
    /// Set when the shooting monodromy has a non-unity multiplier outside the
    /// unit circle. The stability verdict proper belongs to Floquet analysis.
    pub unstable_hint: bool,
    pub used_fallback: bool,
}

impl LockedSolution {
    /// Assembles a solution from its stored pieces (e.g. when loading from
    /// disk).
    pub fn from_parts(f_star: f64, delta_phi_star: PeriodicWaveform) -> Result<Self> {
        if !(f_star.is_finite() && f_star > 0.0) {
            return Err(Error::NonPositiveFrequency(f_star));
        }
        let delta_phi_rate = delta_phi_star.derivative();
        Ok(Self {
            f_star,
            delta_phi_star,
            delta_phi_rate,
            anchor_shift: 0.0,
            residual_norm: 0.0,
            iterations: 0,
            unstable_hint: false,
            used_fallback: false,
        })
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn t_star(&self) -> f64 {
        1.0 / self.f_star
    }

    pub fn len(&self) -> usize {
        self.delta_phi_star.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn delta_phi_star(&self) -> &PeriodicWaveform {
        &self.delta_phi_star
    }

    /// `phi*(t) = f* t + dphi*(t / T*)`.
    pub fn phi_star(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.phi_star_into(t, &mut out);
        out
    }

    pub fn phi_star_into(&self, t: f64, out: &mut [f64]) {
        let s = t * self.f_star;
        self.delta_phi_star.eval_into(s, out);
        for o in out.iter_mut() {
            *o += s;
        }
    }

    /// `dphi*/dt`, the tangent to the locked orbit.
    pub fn phi_star_rate(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.phi_star_rate_into(t, &mut out);
        out
    }

    pub fn phi_star_rate_into(&self, t: f64, out: &mut [f64]) {
        self.delta_phi_rate.eval_into(t * self.f_star, out);
        for o in out.iter_mut() {
            *o = self.f_star + self.f_star * *o;
        }
    }

    /// The solution `phi*(t - tau)`, shifted by the whole number of cycles
    /// nearest to `f* tau` so that full-period shifts leave the stored
    /// samples unchanged.
    pub fn shift(&self, tau: f64) -> Self {
        let ds = tau * self.f_star;
        let offset = ds - ds.round();
        let n = self.delta_phi_star.num_samples();
        let dim = self.len();
        let steps = ds * n as f64;
        if steps.fract() == 0.0 {
            // grid-aligned shift: rotate the samples exactly
            let r = (steps as i64).rem_euclid(n as i64) as usize;
            let flat: Vec<f64> = (0..n)
                .flat_map(|k| {
                    self.delta_phi_star
                        .sample((k + n - r) % n)
                        .iter()
                        .map(|v| v - offset)
                })
                .collect();
            let shifted =
                PeriodicWaveform::from_flat(n, dim, flat).expect("rotation of a valid waveform");
            return self.with_waveform(shifted, tau);
        }
        let shifted = PeriodicWaveform::from_fn(n, dim, |s, out| {
            self.delta_phi_star.eval_into(s - ds, out);
            for o in out.iter_mut() {
                *o -= offset;
            }
        })
        .expect("shift of a valid waveform");
        self.with_waveform(shifted, tau)
    }

    fn with_waveform(&self, shifted: PeriodicWaveform, tau: f64) -> Self {
        let mut out = Self::from_parts(self.f_star, shifted).expect("positive f*");
        out.anchor_shift = self.anchor_shift + tau;
        out.residual_norm = self.residual_norm;
        out.iterations = self.iterations;
        out.unstable_hint = self.unstable_hint;
        out.used_fallback = self.used_fallback;
        out
    }

    /// Mean of `d(dphi*)/ds` per component; zero for a consistent lock.
    pub fn rate_mean(&self) -> Vec<f64> {
        self.delta_phi_rate.mean()
    }
}

/// Shooting-solver settings.
#[derive(Clone, Debug)]
pub struct LockOptions {
    pub solver: SolverOptions,
    /// Residual infinity-norm target.
    pub tol: f64,
    pub max_iterations: usize,
    pub num_samples: usize,
    /// Transient horizon (in guessed periods) used to re-seed Newton when the
    /// first attempt fails; zero disables the fallback.
    pub settle_periods: f64,
}

impl Default for LockOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::with_tol(1e-11, 1e-13),
            tol: 1e-9,
            max_iterations: 25,
            num_samples: DEFAULT_SAMPLES,
            settle_periods: 300.0,
        }
    }
}

/// Initial guess for [`find_lock`]. The first entry of `dphi` is ignored
/// (anchored at zero).
#[derive(Clone, Debug)]
pub struct LockGuess {
    pub f: f64,
    pub dphi: Vec<f64>,
}

impl LockGuess {
    pub fn new(f: f64, dphi: Vec<f64>) -> Self {
        Self { f, dphi }
    }

    /// Mean free-running frequency, all deviations zero.
    pub fn from_system(cps: &CoupledPhaseSystem) -> Self {
        let fs = cps.frequencies();
        let f = fs.iter().sum::<f64>() / fs.len() as f64;
        Self {
            f,
            dphi: vec![0.0; fs.len()],
        }
    }
}

/// Integrates `phi` together with its sensitivity `d phi(t) / d phi(0)` over
/// one period.
fn shoot(
    cps: &CoupledPhaseSystem,
    phi0: &[f64],
    period: f64,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = cps.len();
    let mut y0 = phi0.to_vec();
    let eye = DMatrix::<f64>::identity(n, n);
    y0.extend(eye.iter());
    let tr = integrate(
        |_, y, dy| {
            let (phi, sens) = y.split_at(n);
            let g = cps.g_phi(phi);
            dy[..n].copy_from_slice(&g);
            let jac = cps.jacobian(phi);
            let m = DMatrix::from_column_slice(n, n, sens);
            let prod = jac * m;
            dy[n..].copy_from_slice(prod.as_slice());
        },
        0.0,
        &y0,
        period,
        &[],
        opts,
    )?;
    let phi_t = tr.final_y[..n].to_vec();
    let sens = DMatrix::from_column_slice(n, n, &tr.final_y[n..]);
    Ok((phi_t, sens))
}

fn residual(phi0: &[f64], phi_t: &[f64]) -> DVector<f64> {
    DVector::from_iterator(phi0.len(), phi0.iter().zip(phi_t).map(|(a, b)| b - a - 1.0))
}

struct NewtonOutcome {
    f: f64,
    phi0: Vec<f64>,
    residual: f64,
    iterations: usize,
    monodromy: DMatrix<f64>,
}

fn newton(
    cps: &CoupledPhaseSystem,
    guess: &LockGuess,
    opts: &LockOptions,
) -> Result<NewtonOutcome> {
    let n = cps.len();
    let mut f = guess.f;
    let mut phi0 = vec![0.0; n];
    phi0[1..].copy_from_slice(&guess.dphi[1..]);

    let mut last_norm = f64::INFINITY;
    for it in 0..=opts.max_iterations {
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::NonPositiveFrequency(f));
        }
        let (phi_t, sens) = shoot(cps, &phi0, 1.0 / f, &opts.solver)?;
        let r = residual(&phi0, &phi_t);
        let norm = r.amax();
        last_norm = norm;
        if norm < opts.tol {
            return Ok(NewtonOutcome {
                f,
                phi0,
                residual: norm,
                iterations: it,
                monodromy: sens,
            });
        }
        if it == opts.max_iterations {
            break;
        }
        // columns: d r / d f*, then d r / d dphi_k(0) for k >= 1
        let g_end = cps.g_phi(&phi_t);
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            jac[(i, 0)] = -g_end[i] / (f * f);
        }
        for k in 1..n {
            for i in 0..n {
                jac[(i, k)] = sens[(i, k)] - if i == k { 1.0 } else { 0.0 };
            }
        }
        let step = jac
            .clone()
            .lu()
            .solve(&(-&r))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::DegenerateJacobian("shooting Jacobian is singular".into()))?;

        // backtracking on the residual norm
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let f_try = f + lambda * step[0];
            if f_try > 0.0 {
                let mut p_try = phi0.clone();
                for k in 1..n {
                    p_try[k] += lambda * step[k];
                }
                if let Ok((pt, _)) = shoot(cps, &p_try, 1.0 / f_try, &opts.solver) {
                    if residual(&p_try, &pt).amax() < norm {
                        f = f_try;
                        phi0 = p_try;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            f += step[0];
            for k in 1..n {
                phi0[k] += step[k];
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: last_norm,
    })
}

/// Re-seeds the shooting from a settled transient.
fn settle(cps: &CoupledPhaseSystem, guess: &LockGuess, opts: &LockOptions) -> Result<LockGuess> {
    let n = cps.len();
    let horizon = opts.settle_periods / guess.f;
    let window = (20.0 / guess.f).min(0.5 * horizon);
    let mut phi0 = vec![0.0; n];
    phi0[1..].copy_from_slice(&guess.dphi[1..]);
    let times = [horizon - window, horizon];
    let tr: Trajectory = cps.autonomous().simulate_cps(
        &phi0,
        0.0,
        horizon,
        &times,
        &SolverOptions::with_tol(1e-9, 1e-11),
    )?;
    let (a, b) = (&tr.y[0], &tr.y[1]);
    let f = (b[0] - a[0]) / window;
    let dphi = b
        .iter()
        .map(|v| {
            let d = v - b[0];
            d - d.round()
        })
        .collect();
    Ok(LockGuess { f, dphi })
}

/// Solves for the externally unperturbed lock of `cps`.
pub fn find_lock(
    cps: &CoupledPhaseSystem,
    guess: &LockGuess,
    opts: &LockOptions,
) -> Result<LockedSolution> {
    if cps.has_external_inputs() {
        return Err(Error::InvalidModel(
            "lock search requires a system without external inputs".into(),
        ));
    }
    if guess.dphi.len() != cps.len() {
        return Err(Error::DimensionMismatch {
            expected: cps.len(),
            got: guess.dphi.len(),
            context: "lock guess",
        });
    }
    if !(guess.f.is_finite() && guess.f > 0.0) {
        return Err(Error::NonPositiveFrequency(guess.f));
    }

    let (outcome, used_fallback) = match newton(cps, guess, opts) {
        Ok(o) => (o, false),
        Err(first) if opts.settle_periods > 0.0 => {
            let reseed = settle(cps, guess, opts).map_err(|_| first)?;
            (newton(cps, &reseed, opts)?, true)
        }
        Err(e) => return Err(e),
    };

    let period = 1.0 / outcome.f;
    let ns = opts.num_samples;
    let times: Vec<f64> = (0..ns).map(|k| k as f64 / ns as f64 * period).collect();
    let tr = cps.simulate_cps(&outcome.phi0, 0.0, period, &times, &opts.solver)?;
    let mut flat = Vec::with_capacity(ns * cps.len());
    for (k, row) in tr.y.iter().enumerate() {
        let s = k as f64 / ns as f64;
        flat.extend(row.iter().map(|v| v - s));
    }
    let dphi = PeriodicWaveform::from_flat(ns, cps.len(), flat)?;
    let mut sol = LockedSolution::from_parts(outcome.f, dphi)?;
    sol.residual_norm = outcome.residual;
    sol.iterations = outcome.iterations;
    sol.used_fallback = used_fallback;
    sol.unstable_hint = has_expanding_mode(&outcome.monodromy);
    Ok(sol)
}

fn has_expanding_mode(m: &DMatrix<f64>) -> bool {
    let eig = m.complex_eigenvalues();
    let closest = eig
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
        .map(|(i, _)| i);
    eig.iter()
        .enumerate()
        .any(|(i, z)| Some(i) != closest && z.norm() > 1.0 + 1e-6)
}

/// Numerical consistency checks of a stored lock.
#[derive(Clone, Debug, PartialEq)]
pub struct LockReport {
    /// `max_i |phi_i(T*) - phi_i(0) - 1|` after re-integrating one period.
    pub periodicity_residual: f64,
    /// Largest `|d phi*/dt - g_phi(phi*)|` of the stored interpolant.
    pub max_defect: f64,
    /// Largest deviation of the per-period phase gain from 1 over 20 periods.
    pub gain_drift: f64,
}

impl LockReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.periodicity_residual < tol && self.max_defect < tol && self.gain_drift < tol
    }
}

/// Re-integrates and checks a lock against the autonomous system.
pub fn verify_lock(
    cps: &CoupledPhaseSystem,
    sol: &LockedSolution,
    opts: &SolverOptions,
) -> Result<LockReport> {
    let cps = cps.autonomous();
    let period = sol.t_star();
    let phi0 = sol.phi_star(0.0);
    let tr = cps.simulate_cps(&phi0, 0.0, 20.0 * period, &[period, 20.0 * period], opts)?;
    let periodicity_residual = phi0
        .iter()
        .zip(&tr.y[0])
        .map(|(a, b)| (b - a - 1.0).abs())
        .fold(0.0, f64::max);
    let gain_drift = phi0
        .iter()
        .zip(&tr.y[1])
        .map(|(a, b)| ((b - a) / 20.0 - 1.0).abs())
        .fold(0.0, f64::max);

    let grid = 4 * sol.delta_phi_star.num_samples();
    let mut max_defect: f64 = 0.0;
    for k in 0..grid {
        let t = k as f64 / grid as f64 * period;
        let rate = sol.phi_star_rate(t);
        let g = cps.g_phi(&sol.phi_star(t));
        for (a, b) in rate.iter().zip(&g) {
            max_defect = max_defect.max((a - b).abs());
        }
    }
    Ok(LockReport {
        periodicity_residual,
        max_defect,
        gain_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    fn lock(cps: &CoupledPhaseSystem) -> LockedSolution {
        find_lock(cps, &LockGuess::from_system(cps), &LockOptions::default()).unwrap()
    }

    #[test]
    fn identical_pair_locks_in_phase() {
        let sol = lock(&fixtures::identical_pair(0.1));
        assert_abs_diff_eq!(sol.f_star(), 1.0, epsilon = 1e-10);
        assert!(sol.delta_phi_star().max_abs() < 1e-10);
        assert!(sol.residual_norm < 1e-10);
        assert!(!sol.unstable_hint);
    }

    #[test]
    fn detuned_pair_matches_adler_balance() {
        let sol = lock(&fixtures::detuned_pair(0.02, 0.1));
        assert_abs_diff_eq!(sol.f_star(), 0.9996, epsilon = 1e-6);
        let offset = (0.2_f64).asin() / (2.0 * std::f64::consts::PI);
        for k in [0, 17, 64] {
            let row = sol.delta_phi_star().sample(k);
            assert_abs_diff_eq!(row[1] - row[0], offset, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_oscillator_lock() {
        let sys = fixtures::sinusoidal_network(&[1.3], &[], 0.1);
        let sol = lock(&sys);
        assert_abs_diff_eq!(sol.f_star(), 1.3, epsilon = 1e-12);
        assert!(sol.delta_phi_star().max_abs() < 1e-12);
        let rep = verify_lock(&sys, &sol, &SolverOptions::default()).unwrap();
        assert!(rep.passes(1e-9), "{rep:?}");
    }

    #[test]
    fn phi_star_examples() {
        let sol = lock(&fixtures::identical_pair(0.1));
        let p = sol.phi_star(2.7);
        assert_abs_diff_eq!(p[0], 2.7, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 2.7, epsilon = 1e-9);

        let c = lock(&fixtures::detuned_pair(0.02, 0.1));
        assert_eq!(c.phi_star(0.0)[0], 0.0);
        for t in [0.0, 0.37, 5.2] {
            let a = c.phi_star(t);
            let b = c.phi_star(t + c.t_star());
            for (x, y) in a.iter().zip(&b) {
                assert_abs_diff_eq!(y - x, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn shift_examples() {
        let cps = fixtures::ring3();
        let sol = lock(&cps);
        assert_eq!(sol.shift(0.0).delta_phi_star(), sol.delta_phi_star());
        let full = sol.shift(sol.t_star());
        for (a, b) in full
            .delta_phi_star()
            .flat_samples()
            .iter()
            .zip(sol.delta_phi_star().flat_samples())
        {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        let base = verify_lock(&cps, &sol, &SolverOptions::with_tol(1e-11, 1e-13)).unwrap();
        for tau in [0.13, 0.5, 2.71] {
            let shifted = sol.shift(tau);
            assert_eq!(shifted.anchor_shift, tau);
            let rep = verify_lock(&cps, &shifted, &SolverOptions::with_tol(1e-11, 1e-13)).unwrap();
            assert!(
                rep.periodicity_residual < 10.0 * base.periodicity_residual.max(1e-12),
                "{rep:?} vs {base:?}"
            );
            // phi_shifted(t) = phi*(t - tau) modulo whole cycles
            let t = 0.77;
            let (a, b) = (shifted.phi_star(t), sol.phi_star(t - tau));
            let d = a[0] - b[0];
            assert_abs_diff_eq!(d, d.round(), epsilon = 1e-10);
        }
    }

    #[test]
    fn verify_flags_perturbed_samples() {
        let cps = fixtures::identical_pair(0.1);
        let sol = lock(&cps);
        let rep = verify_lock(&cps, &sol, &SolverOptions::with_tol(1e-11, 1e-13)).unwrap();
        assert!(rep.passes(1e-8), "{rep:?}");

        let mut flat = sol.delta_phi_star().flat_samples().to_vec();
        flat[2 * 10 + 1] += 0.01;
        let bent =
            PeriodicWaveform::from_flat(sol.delta_phi_star().num_samples(), 2, flat).unwrap();
        let bad = LockedSolution::from_parts(sol.f_star(), bent).unwrap();
        let rep = verify_lock(&cps, &bad, &SolverOptions::default()).unwrap();
        assert!(rep.max_defect > 1e-4, "{rep:?}");
        assert!(!rep.passes(1e-4));
    }

    #[test]
    fn rejects_external_inputs_and_bad_guesses() {
        let forced = fixtures::identical_pair(0.1)
            .with_input(
                0,
                crate::oscillator::InputSignal::constant(2, 0, 1e-3).unwrap(),
            )
            .unwrap();
        assert!(matches!(
            find_lock(
                &forced,
                &LockGuess::new(1.0, vec![0.0, 0.0]),
                &LockOptions::default()
            ),
            Err(Error::InvalidModel(_))
        ));
        let cps = fixtures::identical_pair(0.1);
        assert!(find_lock(
            &cps,
            &LockGuess::new(-1.0, vec![0.0, 0.0]),
            &LockOptions::default()
        )
        .is_err());
        assert!(find_lock(
            &cps,
            &LockGuess::new(1.0, vec![0.0]),
            &LockOptions::default()
        )
        .is_err());
    }

    #[test]
    fn anchor_makes_solution_unique() {
        let cps = fixtures::ring3();
        let a = find_lock(
            &cps,
            &LockGuess::new(1.0, vec![0.0, 0.0, 0.0]),
            &LockOptions::default(),
        )
        .unwrap();
        let b = find_lock(
            &cps,
            &LockGuess::new(1.01, vec![0.3, 0.01, -0.02]),
            &LockOptions::default(),
        )
        .unwrap();
        for (x, y) in a
            .delta_phi_star()
            .flat_samples()
            .iter()
            .zip(b.delta_phi_star().flat_samples())
        {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }
        for m in a.rate_mean() {
            assert!(m.abs() < 1e-10);
        }
    }

    #[test]
    fn anti_coupled_pair_is_flagged_unstable() {
        let sol = lock(&fixtures::identical_pair(-0.1));
        assert!(sol.unstable_hint);
    }

    #[test]
    fn fallback_recovers_from_poor_guess() {
        let cps = fixtures::detuned_pair(0.02, 0.1);
        let opts = LockOptions {
            max_iterations: 2,
            ..LockOptions::default()
        };
        let sol = find_lock(&cps, &LockGuess::new(1.3, vec![0.0, 0.45]), &opts);
        // either Newton or the settled re-seed must land on the stable lock
        let sol = sol.unwrap();
        assert_abs_diff_eq!(sol.f_star(), 0.9996, epsilon = 1e-6);
    }
}
