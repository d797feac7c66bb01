//! Linearized response of a lock to small constant forcing. Forcing along
//! the tangent u1 accumulates phase linearly (c1 grows like eps t), while
//! forcing with no v1 component stays bounded.

use ppvgroup::fixtures::identical_pair;
use ppvgroup::floquet::{analyze, lptv_blowup_demo, BlowupForcing, BlowupResult, FloquetOptions};
use ppvgroup::lock::{find_lock, LockGuess, LockOptions};
use ppvgroup::{Result, SolverOptions};

pub struct BlowupReport {
    pub eps: f64,
    pub t_star: f64,
    pub tangent: BlowupResult,
    pub transverse: BlowupResult,
}

pub fn run_example() -> Result<BlowupReport> {
    let cps = identical_pair(0.1);
    let sol = find_lock(&cps, &LockGuess::from_system(&cps), &LockOptions::default())?;
    let fd = analyze(&cps, &sol, &FloquetOptions::default())?;
    let eps = 1e-3;
    let horizon = 50.0 * sol.t_star();
    let opts = SolverOptions::with_tol(1e-11, 1e-13);
    Ok(BlowupReport {
        eps,
        t_star: sol.t_star(),
        tangent: lptv_blowup_demo(&cps, &sol, &fd, eps, horizon, BlowupForcing::Tangent, &opts)?,
        transverse: lptv_blowup_demo(
            &cps,
            &sol,
            &fd,
            eps,
            horizon,
            BlowupForcing::Transverse,
            &opts,
        )?,
    })
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let r = run_example()?;
    println!("eps = {:e}, horizon 50 T*", r.eps);
    println!("tangent forcing:    c1 slope {:.6e}", r.tangent.slope);
    println!(
        "transverse forcing: sup |c1| {:.3e} (bound 10 eps T* = {:.1e})",
        r.transverse.sup_c1(),
        10.0 * r.eps * r.t_star
    );
    Ok(())
}
