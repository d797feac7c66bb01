//! Adaptive explicit Runge-Kutta integration (Dormand-Prince 5(4)) with
//! continuous output and right-hand-side call counting.
//!
//! The right-hand side is any `FnMut(t, y, dy)`. Integration may run forward
//! or backward in time; requested output times must be ordered along the
//! direction of integration.

use crate::error::{Error, Result};

/// Tolerances and step limits for [`integrate`].
#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    /// Largest allowed step magnitude.
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: None,
            h_max: None,
            max_steps: 5_000_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

/// Work counters of one integration run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    /// Calls of the (vector) right-hand side.
    pub rhs_evals: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Solution sampled at the requested output times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub final_t: f64,
    pub final_y: Vec<f64>,
    pub stats: SolveStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// One state component over all output times.
    pub fn component(&self, d: usize) -> Vec<f64> {
        self.y.iter().map(|row| row[d]).collect()
    }
}

/// `n + 1` equally spaced times from `t0` to `t1` inclusive.
pub fn uniform_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n)
        .map(|k| {
            if k == n {
                t1
            } else {
                t0 + (t1 - t0) * k as f64 / n as f64
            }
        })
        .collect()
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
    err: Vec<f64>,
    rcont: [Vec<f64>; 5],
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            err: vec![0.0; n],
            rcont: std::array::from_fn(|_| vec![0.0; n]),
        }
    }
}

fn rms_norm(v: &[f64], y0: &[f64], y1: &[f64], opts: &SolverOptions) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let s: f64 = v
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opts.atol + opts.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / v.len() as f64).sqrt()
}

/// Integrates `dy/dt = rhs(t, y)` from `(t0, y0)` to `t1`, reporting the
/// state at each of `out_times`.
pub fn integrate<F>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    out_times: &[f64],
    opts: &SolverOptions,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    if !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Integration {
            t: t0,
            reason: "non-finite time bounds".into(),
        });
    }
    for w in out_times.windows(2) {
        if (w[1] - w[0]) * dir < 0.0 {
            return Err(Error::Integration {
                t: w[0],
                reason: "output times must be ordered along the integration direction".into(),
            });
        }
    }
    let tol_t = 1e-12 * (1.0 + t0.abs().max(t1.abs()));
    if let Some(bad) = out_times
        .iter()
        .find(|&&t| (t - t0) * dir < -tol_t || (t - t1) * dir > tol_t)
    {
        return Err(Error::Integration {
            t: *bad,
            reason: "output time outside the integration interval".into(),
        });
    }

    let mut stats = SolveStats::default();
    let mut traj_t = Vec::with_capacity(out_times.len());
    let mut traj_y = Vec::with_capacity(out_times.len());
    let mut next_out = 0;

    let mut t = t0;
    let mut y = y0.to_vec();

    // outputs at the start point
    while next_out < out_times.len() && (out_times[next_out] - t0) * dir <= 0.0 {
        traj_t.push(out_times[next_out]);
        traj_y.push(y.clone());
        next_out += 1;
    }

    if span == 0.0 || n == 0 {
        while next_out < out_times.len() {
            traj_t.push(out_times[next_out]);
            traj_y.push(y.clone());
            next_out += 1;
        }
        return Ok(Trajectory {
            t: traj_t,
            y: traj_y,
            final_t: t1,
            final_y: y,
            stats,
        });
    }

    let mut st = Stages::new(n);
    rhs(t, &y, &mut st.k[0]);
    stats.rhs_evals += 1;

    let h_max = opts.h_max.unwrap_or(span).min(span);
    let mut h = match opts.h_init {
        Some(h) => h.abs().min(h_max),
        None => initial_step(&mut rhs, t, &y, dir, h_max, opts, &mut st, &mut stats),
    };
    let mut fac_old: f64 = 1e-4;

    loop {
        if stats.accepted_steps + stats.rejected_steps >= opts.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        let h_min = 1e-14 * t.abs().max(1.0);
        let remaining = (t1 - t).abs();
        let mut last = false;
        if h >= remaining * (1.0 - 1e-12) {
            h = remaining;
            last = true;
        }
        if h < h_min && !last {
            return Err(Error::Integration {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }
        let hs = h * dir;

        step(&mut rhs, t, &y, hs, &mut st);
        stats.rhs_evals += 6;

        for i in 0..n {
            st.err[i] = hs
                * (E1 * st.k[0][i]
                    + E3 * st.k[2][i]
                    + E4 * st.k[3][i]
                    + E5 * st.k[4][i]
                    + E6 * st.k[5][i]
                    + E7 * st.k[6][i]);
        }
        let err = rms_norm(&st.err, &y, &st.y_new, opts);
        if !err.is_finite() || st.y_new.iter().any(|v| !v.is_finite()) {
            stats.rejected_steps += 1;
            h *= 0.1;
            if h < h_min {
                return Err(Error::Integration {
                    t,
                    reason: "non-finite state".into(),
                });
            }
            continue;
        }

        // Lund-stabilized step-size control
        let expo1 = 0.2 - 0.04 * 0.75;
        let fac11 = err.powf(expo1);
        let mut fac = fac11 / fac_old.powf(0.04);
        fac = (fac / 0.9).clamp(1.0 / 10.0, 1.0 / 0.2);
        let h_new = h / fac;

        if err <= 1.0 {
            fac_old = err.max(1e-4);
            stats.accepted_steps += 1;
            let t_new = if last { t1 } else { t + hs };

            if next_out < out_times.len() && (out_times[next_out] - t_new) * dir <= 0.0 {
                build_dense(&y, hs, &mut st);
                while next_out < out_times.len() && (out_times[next_out] - t_new) * dir <= 0.0 {
                    let to = out_times[next_out];
                    let row = if last && (to - t1).abs() <= tol_t {
                        st.y_new.clone()
                    } else {
                        dense_eval(&st, (to - t) / hs)
                    };
                    traj_t.push(to);
                    traj_y.push(row);
                    next_out += 1;
                }
            }

            // FSAL
            let (head, tail) = st.k.split_at_mut(6);
            head[0].copy_from_slice(&tail[0]);
            std::mem::swap(&mut y, &mut st.y_new);
            t = t_new;
            if last {
                break;
            }
            h = h_new.min(h_max);
        } else {
            stats.rejected_steps += 1;
            h /= (fac11 / 0.9).min(1.0 / 0.2);
        }
    }

    while next_out < out_times.len() {
        traj_t.push(out_times[next_out]);
        traj_y.push(y.clone());
        next_out += 1;
    }

    Ok(Trajectory {
        t: traj_t,
        y: traj_y,
        final_t: t,
        final_y: y,
        stats,
    })
}

fn step<F>(rhs: &mut F, t: f64, y: &[f64], h: f64, st: &mut Stages)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let Stages { k, tmp, y_new, .. } = st;
    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k[0][i];
    }
    rhs(t + C2 * h, tmp, &mut k[1]);
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
    }
    rhs(t + C3 * h, tmp, &mut k[2]);
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
    }
    rhs(t + C4 * h, tmp, &mut k[3]);
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
    }
    rhs(t + C5 * h, tmp, &mut k[4]);
    for i in 0..n {
        tmp[i] = y[i]
            + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
    }
    rhs(t + h, tmp, &mut k[5]);
    for i in 0..n {
        y_new[i] = y[i]
            + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
    }
    rhs(t + h, y_new, &mut k[6]);
}

fn build_dense(y: &[f64], h: f64, st: &mut Stages) {
    let Stages {
        k, y_new, rcont, ..
    } = st;
    for i in 0..y.len() {
        let ydiff = y_new[i] - y[i];
        let bspl = h * k[0][i] - ydiff;
        rcont[0][i] = y[i];
        rcont[1][i] = ydiff;
        rcont[2][i] = bspl;
        rcont[3][i] = ydiff - h * k[6][i] - bspl;
        rcont[4][i] = h
            * (D1 * k[0][i]
                + D3 * k[2][i]
                + D4 * k[3][i]
                + D5 * k[4][i]
                + D6 * k[5][i]
                + D7 * k[6][i]);
    }
}

fn dense_eval(st: &Stages, s: f64) -> Vec<f64> {
    let s1 = 1.0 - s;
    let r = &st.rcont;
    (0..r[0].len())
        .map(|i| r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i]))))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    rhs: &mut F,
    t: f64,
    y: &[f64],
    dir: f64,
    h_max: f64,
    opts: &SolverOptions,
    st: &mut Stages,
    stats: &mut SolveStats,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len() as f64;
    let sc = |v: f64| opts.atol + opts.rtol * v.abs();
    let dnf: f64 = st.k[0]
        .iter()
        .zip(y)
        .map(|(f, y)| (f / sc(*y)).powi(2))
        .sum::<f64>()
        / n;
    let dny: f64 = y.iter().map(|y| (y / sc(*y)).powi(2)).sum::<f64>() / n;
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(h_max);
    for ((tmp, y), k) in st.tmp.iter_mut().zip(y).zip(&st.k[0]) {
        *tmp = y + dir * h * k;
    }
    rhs(t + dir * h, &st.tmp, &mut st.k[1]);
    stats.rhs_evals += 1;
    let der2 = (st.k[1]
        .iter()
        .zip(&st.k[0])
        .zip(y)
        .map(|((a, b), y)| ((a - b) / sc(*y)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    h1.min(100.0 * h).min(h_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let times = uniform_times(0.0, 5.0, 50);
        let tr = integrate(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            &[1.0],
            5.0,
            &times,
            &SolverOptions::with_tol(1e-10, 1e-12),
        )
        .unwrap();
        for (t, y) in tr.t.iter().zip(&tr.y) {
            assert_abs_diff_eq!(y[0], (-t).exp(), epsilon = 1e-9);
        }
        assert_eq!(tr.final_t, 5.0);
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let times: Vec<f64> = (0..=37).map(|k| k as f64 * 0.27).collect();
        let tr = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            10.0,
            &times,
            &SolverOptions::with_tol(1e-11, 1e-13),
        )
        .unwrap();
        for (t, y) in tr.t.iter().zip(&tr.y) {
            assert_abs_diff_eq!(y[0], t.cos(), epsilon = 1e-8);
            assert_abs_diff_eq!(y[1], -t.sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn backward_integration() {
        let times = vec![2.0, 1.5, 0.5, 0.0];
        let tr = integrate(
            |_, y, dy| dy[0] = y[0],
            2.0,
            &[2.0_f64.exp()],
            0.0,
            &times,
            &SolverOptions::with_tol(1e-10, 1e-12),
        )
        .unwrap();
        for (t, y) in tr.t.iter().zip(&tr.y) {
            assert_abs_diff_eq!(y[0], t.exp(), epsilon = 1e-8);
        }
    }

    #[test]
    fn constant_rhs_is_integrated_exactly() {
        let tr = integrate(
            |_, _, dy| dy[0] = 1.0,
            0.0,
            &[0.0],
            5.0,
            &[],
            &SolverOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(tr.final_y[0], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_out_of_range_output_times() {
        let r = integrate(
            |_, _, dy| dy[0] = 1.0,
            0.0,
            &[0.0],
            1.0,
            &[2.0],
            &SolverOptions::default(),
        );
        assert!(matches!(r, Err(Error::Integration { .. })));
    }

    #[test]
    fn blow_up_reports_failure_time() {
        // y' = y^2 from y(0)=1 blows up at t=1
        let r = integrate(
            |_, y, dy| dy[0] = y[0] * y[0],
            0.0,
            &[1.0],
            2.0,
            &[],
            &SolverOptions::default(),
        );
        match r {
            Err(Error::Integration { t, .. }) => assert!(t > 0.9 && t < 1.0 + 1e-6, "t = {t}"),
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
