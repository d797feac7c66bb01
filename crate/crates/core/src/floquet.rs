//! Floquet analysis of the coupled phase system linearized about its lock.
//!
//! Around `phi*(t)` the deviation obeys the LPTV system
//! `d(dphi)/dt = J*(t) dphi + b_ext(t)` with `J*` periodic in `T*`. The
//! monodromy matrix has one multiplier at 1 for a stable lock; its right
//! Floquet vector is the tangent `u1 = dphi*/dt` and its left vector, carried
//! around the period by the adjoint system, is `v1` with `v1 . u1 = 1`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lock::LockedSolution;
use crate::network::CoupledPhaseSystem;
use crate::ode::{integrate, uniform_times, SolverOptions};
use crate::periodic::PeriodicWaveform;

/// `J*(t)`, the Jacobian of the autonomous CPS along the lock.
pub fn jacobian_at(cps: &CoupledPhaseSystem, sol: &LockedSolution, t: f64) -> DMatrix<f64> {
    cps.jacobian(&sol.phi_star(t))
}

/// State-transition matrix of the linearized CPS over one lock period.
pub fn monodromy(
    cps: &CoupledPhaseSystem,
    sol: &LockedSolution,
    opts: &SolverOptions,
) -> Result<DMatrix<f64>> {
    let n = cps.len();
    let y0: Vec<f64> = DMatrix::<f64>::identity(n, n).as_slice().to_vec();
    let tr = integrate(
        |t, y, dy| {
            let m = DMatrix::from_column_slice(n, n, y);
            let prod = jacobian_at(cps, sol, t) * m;
            dy.copy_from_slice(prod.as_slice());
        },
        0.0,
        &y0,
        sol.t_star(),
        &[],
        opts,
    )?;
    Ok(DMatrix::from_column_slice(n, n, &tr.final_y))
}

/// Settings for [`floquet_decompose`].
#[derive(Clone, Debug)]
pub struct FloquetOptions {
    /// `|rho_1 - 1|` bound for the unity multiplier.
    pub tol_unity: f64,
    /// Required gap `1 - |rho_i|` for the remaining multipliers.
    pub margin: f64,
    /// Gap below which a warning flag is raised.
    pub near_marginal: f64,
    pub solver: SolverOptions,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        Self {
            tol_unity: 1e-6,
            margin: 1e-9,
            near_marginal: 1e-3,
            solver: SolverOptions::with_tol(1e-11, 1e-13),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StabilityFlags {
    pub unity_multiplier_ok: bool,
    pub contraction_ok: bool,
    /// Some non-unity multiplier lies within `near_marginal` of the unit
    /// circle. Report-only.
    pub near_marginal: bool,
}

impl StabilityFlags {
    pub fn all_ok(&self) -> bool {
        self.unity_multiplier_ok && self.contraction_ok
    }
}

/// Mode-1 Floquet data of a lock.
#[derive(Clone, Debug)]
pub struct FloquetData {
    pub monodromy: DMatrix<f64>,
    /// `rho_1` first, the rest by decreasing modulus.
    pub multipliers: Vec<Complex64>,
    /// `mu_i = ln(rho_i) / T*`.
    pub exponents: Vec<Complex64>,
    /// Tangent vector over scaled time `s = t / T*`.
    pub u1: PeriodicWaveform,
    /// Adjoint vector over scaled time.
    pub v1: PeriodicWaveform,
    pub stability: StabilityFlags,
    /// `|M u1(0) - u1(0)|_inf`.
    pub u1_residual: f64,
    /// `|v1(T*) - v1(0)|_inf / |v1(0)|_inf` before sampling.
    pub v1_periodicity_error: f64,
    /// `max_s |v1(s) . u1(s) - 1|`.
    pub biorthogonality_error: f64,
    pub t_star: f64,
}

impl FloquetData {
    pub fn v1_at(&self, t: f64) -> Vec<f64> {
        self.v1.eval(t / self.t_star)
    }

    pub fn u1_at(&self, t: f64) -> Vec<f64> {
        self.u1.eval(t / self.t_star)
    }

    /// Largest modulus among the non-unity multipliers.
    pub fn contraction(&self) -> f64 {
        self.multipliers[1..]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Eigen-analysis of the monodromy plus extraction of `u1` and `v1`.
pub fn floquet_decompose(
    cps: &CoupledPhaseSystem,
    sol: &LockedSolution,
    monodromy: &DMatrix<f64>,
    opts: &FloquetOptions,
) -> Result<FloquetData> {
    let n = cps.len();
    let eig: Vec<Complex64> = monodromy.complex_eigenvalues().iter().copied().collect();
    let (i1, rho1) = eig
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
        .expect("non-empty spectrum");
    if (rho1 - 1.0).norm() >= opts.tol_unity {
        return Err(Error::MissingUnityMultiplier {
            tol: opts.tol_unity,
            closest: format!("{rho1}"),
        });
    }
    let near_one = eig
        .iter()
        .filter(|z| (*z - 1.0).norm() < opts.tol_unity)
        .count();
    if near_one > 1 {
        return Err(Error::RepeatedUnityMultiplier {
            count: near_one,
            tol: opts.tol_unity,
        });
    }
    let mut rest: Vec<Complex64> = eig
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != i1)
        .map(|(_, z)| *z)
        .collect();
    rest.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    if let Some(worst) = rest.first() {
        if worst.norm() > 1.0 + opts.tol_unity {
            return Err(Error::UnstableLock {
                modulus: worst.norm(),
            });
        }
    }
    let contraction_ok = rest.iter().all(|z| z.norm() <= 1.0 - opts.margin);
    let near_marginal = rest.iter().any(|z| 1.0 - z.norm() < opts.near_marginal);

    let mut multipliers = vec![rho1];
    multipliers.extend(rest);
    let t_star = sol.t_star();
    let exponents = multipliers.iter().map(|z| z.ln() / t_star).collect();

    let ns = sol.delta_phi_star().num_samples();
    let u1 = PeriodicWaveform::from_fn(ns, n, |s, out| sol.phi_star_rate_into(s * t_star, out))?;
    let u0 = nalgebra::DVector::from_column_slice(u1.sample(0));
    let u1_residual = (monodromy * &u0 - &u0).amax();

    // left eigenvector for rho_1: null vector of (M^T - rho_1 I)
    let shifted = monodromy.transpose() - DMatrix::identity(n, n) * rho1.re;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (kmin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let w_end: Vec<f64> = v_t.row(kmin).iter().copied().collect();

    // backward adjoint integration dw/dt = -J*(t)^T w from T* to 0
    let mut times: Vec<f64> = (0..ns)
        .rev()
        .map(|k| k as f64 / ns as f64 * t_star)
        .collect();
    times.insert(0, t_star);
    let tr = integrate(
        |t, y, dy| {
            let jac = jacobian_at(cps, sol, t);
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += jac[(j, i)] * y[j];
                }
                dy[i] = -acc;
            }
        },
        t_star,
        &w_end,
        0.0,
        &times,
        &opts.solver,
    )?;
    let v_zero = &tr.y[ns];
    let scale = 1.0 / dot(v_zero, u1.sample(0));
    let v_inf = v_zero.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let v1_periodicity_error = w_end
        .iter()
        .zip(v_zero)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / v_inf;

    let mut flat = vec![0.0; ns * n];
    for (row, y) in tr.y[1..].iter().enumerate() {
        let k = ns - 1 - row;
        for i in 0..n {
            flat[k * n + i] = y[i] * scale;
        }
    }
    let v1 = PeriodicWaveform::from_flat(ns, n, flat)?;
    let biorthogonality_error = (0..ns)
        .map(|k| (dot(v1.sample(k), u1.sample(k)) - 1.0).abs())
        .fold(0.0, f64::max);

    Ok(FloquetData {
        monodromy: monodromy.clone(),
        multipliers,
        exponents,
        u1,
        v1,
        stability: StabilityFlags {
            unity_multiplier_ok: true,
            contraction_ok,
            near_marginal,
        },
        u1_residual,
        v1_periodicity_error,
        biorthogonality_error,
        t_star,
    })
}

/// Monodromy plus decomposition in one call.
pub fn analyze(
    cps: &CoupledPhaseSystem,
    sol: &LockedSolution,
    opts: &FloquetOptions,
) -> Result<FloquetData> {
    let cps = cps.autonomous();
    let m = monodromy(&cps, sol, &opts.solver)?;
    floquet_decompose(&cps, sol, &m, opts)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forcing applied in [`lptv_blowup_demo`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlowupForcing {
    /// `b_ext(t) = eps u1(t)`.
    Tangent,
    /// `b_ext(t) = eps e_1` with its `u1` component removed pointwise through
    /// the `v1` projector, so that `v1 . b_ext = 0`.
    Transverse,
}

#[derive(Clone, Debug)]
pub struct BlowupResult {
    pub t: Vec<f64>,
    /// `c1(t) = int_0^t v1 . b_ext`.
    pub c1: Vec<f64>,
    /// `|dphi(t)|_inf` of the linearized response.
    pub deviation: Vec<f64>,
    /// Least-squares slope of `c1` against `t`.
    pub slope: f64,
}

impl BlowupResult {
    pub fn sup_c1(&self) -> f64 {
        self.c1.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Drives the linearized CPS with a small forcing and records the mode-1
/// coefficient `c1(t)`, which grows linearly for tangent forcing.
pub fn lptv_blowup_demo(
    cps: &CoupledPhaseSystem,
    sol: &LockedSolution,
    fd: &FloquetData,
    eps: f64,
    horizon: f64,
    forcing: BlowupForcing,
    opts: &SolverOptions,
) -> Result<BlowupResult> {
    if eps.abs() > 1e-2 {
        return Err(Error::InvalidModel(format!(
            "forcing amplitude {eps} is not small"
        )));
    }
    if horizon < 10.0 * sol.t_star() * (1.0 - 1e-12) {
        return Err(Error::InvalidModel(
            "horizon must cover at least 10 lock periods".into(),
        ));
    }
    let cps = cps.autonomous();
    let n = cps.len();
    let forcing_at = |t: f64, b: &mut [f64]| {
        let u = fd.u1_at(t);
        match forcing {
            BlowupForcing::Tangent => {
                for (bi, ui) in b.iter_mut().zip(&u) {
                    *bi = eps * ui;
                }
            }
            BlowupForcing::Transverse => {
                let v = fd.v1_at(t);
                // eps e_1 - (v1 . eps e_1) u1
                let along = eps * v[0];
                for (i, bi) in b.iter_mut().enumerate() {
                    *bi = if i == 0 { eps } else { 0.0 } - along * u[i];
                }
            }
        }
    };
    let samples = (horizon / sol.t_star() * 20.0).ceil() as usize;
    let times = uniform_times(0.0, horizon, samples);
    let mut b = vec![0.0; n];
    let tr = integrate(
        |t, y, dy| {
            let jac = jacobian_at(&cps, sol, t);
            forcing_at(t, &mut b);
            for i in 0..n {
                let mut acc = b[i];
                for j in 0..n {
                    acc += jac[(i, j)] * y[j];
                }
                dy[i] = acc;
            }
            dy[n] = dot(&fd.v1_at(t), &b);
        },
        0.0,
        &vec![0.0; n + 1],
        horizon,
        &times,
        opts,
    )?;
    let c1 = tr.component(n);
    let deviation =
        tr.y.iter()
            .map(|row| row[..n].iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .collect();
    let slope = least_squares_slope(&tr.t, &c1);
    Ok(BlowupResult {
        t: tr.t,
        c1,
        deviation,
        slope,
    })
}

pub(crate) fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
