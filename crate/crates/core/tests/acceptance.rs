// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Runs without the libtest harness so the report always prints.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ppvgroup::fixtures::{detuned_pair, identical_pair, injection, ring3, sinusoidal_network};
use ppvgroup::floquet::{analyze, FloquetOptions};
use ppvgroup::hierppv::{
    build_group_model, reconstruct_phases, simulate_group, validate_reduction, GroupOptions,
    ValidationOptions,
};
use ppvgroup::lock::{find_lock, LockGuess, LockOptions};
use ppvgroup::ode::uniform_times;
use ppvgroup::{CoupledPhaseSystem, FloquetData, GroupPPVModel, LockedSolution, SolverOptions};

#[path = "../examples/blowup.rs"]
#[allow(dead_code)]
mod blowup;
#[path = "../examples/extract_prc.rs"]
#[allow(dead_code)]
mod extract_prc;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn pipeline(
    cps: &CoupledPhaseSystem,
) -> ppvgroup::Result<(LockedSolution, FloquetData, GroupPPVModel)> {
    let sol = find_lock(cps, &LockGuess::from_system(cps), &LockOptions::default())?;
    let fd = analyze(cps, &sol, &FloquetOptions::default())?;
    let gm = build_group_model(cps, &sol, &fd)?;
    Ok((sol, fd, gm))
}

fn lock_identical_pair() -> Outcome {
    let start = Instant::now();
    let (sol, fd, _) = pipeline(&identical_pair(0.1)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let df = (sol.f_star() - 1.0).abs();
    let dphi = sol.delta_phi_star().max_abs();
    let rho = (-4.0 * std::f64::consts::PI * 0.1f64).exp();
    let m0 = (fd.multipliers[0].re - 1.0).abs() + fd.multipliers[0].im.abs();
    let m1 = (fd.multipliers[1].re - 0.2846).abs() + fd.multipliers[1].im.abs();
    let v1 = fd
        .v1
        .flat_samples()
        .iter()
        .map(|v| (v - 0.5).abs())
        .fold(0.0, f64::max);
    let ok = df < 1e-6 && dphi < 1e-7 && m0 < 1e-6 && m1 < 1e-4 && v1 < 1e-6 && secs < 5.0;
    Ok((
        ok,
        format!(
            "|f*-1| {df:.1e}, max|dphi*| {dphi:.1e}, rho = {:.8} / {:.8} (exp(-4 pi K) = {rho:.8}), max|v1-0.5| {v1:.1e}, {secs:.2} s",
            fd.multipliers[0].re, fd.multipliers[1].re
        ),
    ))
}

fn lock_detuned_pair() -> Outcome {
    let start = Instant::now();
    let sol = find_lock(
        &detuned_pair(0.02, 0.1),
        &LockGuess::from_system(&detuned_pair(0.02, 0.1)),
        &LockOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let d = sol.delta_phi_star().eval(0.0);
    let offset = d[1] - d[0];
    let ok =
        (sol.f_star() - 0.9996).abs() < 1e-5 && (offset - 0.0320523).abs() < 1e-5 && secs < 5.0;
    Ok((
        ok,
        format!(
            "f* {:.9}, offset {offset:.7} (target 0.0320523 +- 1e-5; Adler balance asin(0.2)/2pi = {:.7}), {secs:.2} s",
            sol.f_star(),
            0.2f64.asin() / (2.0 * std::f64::consts::PI)
        ),
    ))
}

fn biorthogonality() -> Outcome {
    let nested = hierarchy::build(&[1.0; 4], &hierarchy::CROSS_LINKS).map_err(|e| e.to_string())?;
    let cases = [
        ("pair", identical_pair(0.1)),
        ("detuned pair", detuned_pair(0.02, 0.1)),
        ("ring3", ring3()),
        ("group of pairs", nested.top),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, cps) in cases {
        let (_, fd, _) = pipeline(&cps).map_err(|e| format!("{name}: {e}"))?;
        ok &= fd.biorthogonality_error < 1e-7;
        parts.push(format!("{name} {:.1e}", fd.biorthogonality_error));
    }
    Ok((ok, format!("max |v1.u1 - 1|: {}", parts.join(", "))))
}

fn blowup_demo() -> Outcome {
    let r = blowup::run_example().map_err(|e| e.to_string())?;
    let rel = (r.tangent.slope - r.eps).abs() / r.eps;
    let sup = r.transverse.sup_c1();
    let bound = 10.0 * r.eps * r.t_star;
    Ok((
        rel < 0.01 && sup < bound,
        format!("tangent slope rel. error {rel:.1e}, transverse sup|c1| {sup:.1e} < {bound:.1e}"),
    ))
}

fn bounded_deviation() -> Outcome {
    let cps = identical_pair(0.1);
    let (_, _, gm) = pipeline(&cps).map_err(|e| e.to_string())?;
    let eps = [1e-4, 2e-4, 4e-4];
    let mut sup = Vec::new();
    let mut mismatch: f64 = 0.0;
    for &e in &eps {
        let inputs = BTreeMap::from([(0, injection(e, gm.f_star(), 0.0, 0))]);
        let r = validate_reduction(
            &cps,
            &gm,
            &inputs,
            0.0,
            50.0 * gm.t_star(),
            &ValidationOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        if !r.sup_dphi.is_finite() || r.lock_slip {
            return Ok((false, format!("eps {e}: deviation not bounded")));
        }
        sup.push(r.sup_dphi);
        mismatch = mismatch.max(r.sup_alpha_mismatch);
    }
    let monotone = sup.windows(2).all(|w| w[1] > w[0]);
    let prop = (1..3)
        .map(|k| (sup[k] / sup[0]) / (eps[k] / eps[0]) - 1.0)
        .map(f64::abs)
        .fold(0.0, f64::max);
    Ok((
        monotone && prop < 0.25 && mismatch < 5e-3,
        format!(
            "sup|dphi| {:.3e} {:.3e} {:.3e}, proportionality error {:.1}%, sup|alpha_h - alpha_hat| {mismatch:.1e} cycles",
            sup[0],
            sup[1],
            sup[2],
            100.0 * prop
        ),
    ))
}

fn trivial_group() -> Outcome {
    let cps = sinusoidal_network(&[0.8], &[], 0.0);
    let (_, _, gm) = pipeline(&cps).map_err(|e| e.to_string())?;
    let p = cps.oscillator(0).ppv();
    let dq = gm
        .channel(0)
        .flat_samples()
        .iter()
        .zip(p.flat_samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let a = injection(1e-3, 0.81, 0.1, 0);
    let t1 = 20.0 / 0.8;
    let times = uniform_times(0.0, t1, 400);
    let tight = SolverOptions::with_tol(1e-13, 1e-14);
    let osc = cps
        .oscillator(0)
        .simulate_phase(&a, 0.0, 0.0, t1, &times, &tight)
        .map_err(|e| e.to_string())?;
    let opts = GroupOptions {
        solver: tight,
        ..GroupOptions::default()
    };
    let inputs = BTreeMap::from([(0, a)]);
    let gt = simulate_group(&gm, &inputs, 0.0, t1, &times, &opts).map_err(|e| e.to_string())?;
    let rec = reconstruct_phases(&gm, &gt);
    let dtraj = osc
        .y
        .iter()
        .zip(&rec)
        .map(|(x, y)| (x[0] - y[0]).abs())
        .fold(0.0, f64::max);
    Ok((
        dq < 1e-8 && dtraj < 1e-9,
        format!("max|q - p| {dq:.1e}, max phase difference over 20 periods {dtraj:.1e}"),
    ))
}

fn hierarchy_consistency() -> Outcome {
    let r = hierarchy::compare(&[1.0; 4], &hierarchy::CROSS_LINKS, 1e-3, 50.0)
        .map_err(|e| e.to_string())?;
    let df = (r.f_flat - r.f_top).abs();
    Ok((
        df < 1e-4 && r.sup_dphi < 0.05 && r.seconds < 60.0,
        format!(
            "|f*_flat - f*_nested| {df:.1e}, sup|dphi| {:.2e} cycles, {:.2} s",
            r.sup_dphi, r.seconds
        ),
    ))
}

fn cost_property() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/ring16.toml");
    let args = [
        "ppvgroup",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "compare",
    ];
    let code = ppvgroup::cli::run(args, &mut std::io::sink(), &mut std::io::sink());
    if code != 0 {
        return Err(format!("compare exited with {code}"));
    }
    let mut rdr =
        csv::Reader::from_path(dir.path().join("compare.csv")).map_err(|e| e.to_string())?;
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    let row = rdr
        .records()
        .next()
        .ok_or("empty compare.csv")?
        .map_err(|e| e.to_string())?;
    let get = |name: &str| -> Result<f64, String> {
        let i = header
            .iter()
            .position(|h| h == name)
            .ok_or(format!("no column {name}"))?;
        row[i].parse::<f64>().map_err(|e| e.to_string())
    };
    let (full, reduced) = (
        get("full_evals_per_period")?,
        get("reduced_evals_per_period")?,
    );
    let ratio = reduced / full;
    Ok((
        ratio < 0.125,
        format!("N = 16 ring: full {full:.1}, reduced {reduced:.1} evaluations per period, ratio {ratio:.4}"),
    ))
}

fn prc_cross_check() -> Outcome {
    let r = extract_prc::vanderpol_report(8).map_err(|e| e.to_string())?;
    let worst = r.worst_relative();
    Ok((
        worst < 0.02,
        format!(
            "8 phases, worst mismatch {:.4}% of max|p| (period {:.8})",
            100.0 * worst,
            r.period
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("identical pair lock and Floquet data", lock_identical_pair),
        ("detuned pair lock", lock_detuned_pair),
        ("bi-orthogonality of u1 and v1", biorthogonality),
        ("linearization breakdown", blowup_demo),
        ("bounded orbital deviation", bounded_deviation),
        ("single-oscillator group", trivial_group),
        ("hierarchy consistency", hierarchy_consistency),
        ("cost of the group model", cost_property),
        ("PRC extraction vs impulses", prc_cross_check),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} [{}] {name}: {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
