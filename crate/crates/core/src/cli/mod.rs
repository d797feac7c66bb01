//! Command-line front end.
//!
//! Every command reads a TOML network description (see [`config`]), runs the
//! pipeline up to the requested stage and writes CSV artifacts into `--out`.
//! Outputs are buffered and only written once a command has succeeded, so a
//! failed run never leaves partial files behind.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | bad arguments, unreadable or invalid configuration, I/O failure |
//! | 2 | lock solver failed or the lock is unstable |
//! | 3 | Floquet stability checks failed; the group model is refused |
//! | 4 | integration failure |
//!
//! Flags may also be given through `PPVGROUP_CONFIG`, `PPVGROUP_OUT`,
//! `PPVGROUP_TOL`, `PPVGROUP_HORIZON` and `PPVGROUP_SEED_SHIFT`.

pub mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::error::Error;
use crate::floquet::{analyze, lptv_blowup_demo, BlowupForcing, FloquetData, FloquetOptions};
use crate::hierppv::{
    build_group_model, reconstruct_phases, simulate_group, validate_reduction, GroupOptions,
    GroupPPVModel, ValidationOptions, ValidationReport,
};
use crate::io::{fmt_f64, lock_meta, write_meta, write_series, write_table, write_waveform};
use crate::lock::{find_lock, LockGuess, LockOptions, LockedSolution};
use crate::network::CoupledPhaseSystem;
use crate::ode::{uniform_times, SolverOptions};
use crate::oscillator::InputSignal;
use crate::periodic::PeriodicWaveform;
use config::NetworkConfig;

#[derive(Debug, Parser)]
#[command(
    name = "ppvgroup",
    version,
    about = "Group phase macromodels of locked oscillator networks"
)]
pub struct Cli {
    /// Network description (TOML).
    #[arg(long, env = "PPVGROUP_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "PPVGROUP_OUT", global = true, default_value = ".")]
    pub out: PathBuf,
    /// Absolute tolerance of full and reduced simulations.
    #[arg(long, env = "PPVGROUP_TOL", global = true)]
    pub tol: Option<f64>,
    /// Simulation horizon in lock periods.
    #[arg(long, env = "PPVGROUP_HORIZON", global = true)]
    pub horizon: Option<f64>,
    /// Time shift applied to the converged lock.
    #[arg(
        long = "seed-shift",
        env = "PPVGROUP_SEED_SHIFT",
        global = true,
        allow_hyphen_values = true
    )]
    pub seed_shift: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the locked solution: lock.csv, lock.meta.
    Lock,
    /// Floquet analysis of the lock: floquet.csv, floquet.meta, u1.csv, v1.csv.
    Floquet,
    /// Group channel PPVs: group_ppv.csv, group.meta.
    Extract,
    /// Simulate the full network or the group model: traj_full.csv or traj_reduced.csv.
    Simulate {
        #[arg(long, value_enum, default_value_t = Which::Full)]
        which: Which,
    },
    /// Validate the group model against the full network: compare.csv, alpha.csv.
    Compare,
    /// Linearized response to tangent and transverse forcing: blowup.csv, blowup.meta.
    DemoBlowup,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Full,
    Reduced,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy)]
enum Stage {
    Setup,
    Lock,
    Floquet,
    Simulation,
}

fn fail(stage: Stage) -> impl Fn(Error) -> Failure {
    move |e| {
        let code = match (&e, stage) {
            (Error::Integration { .. }, _) => 4,
            (Error::Config(_) | Error::Csv(_) | Error::Io(_), _) => 1,
            (_, Stage::Setup) => 1,
            (_, Stage::Lock) => 2,
            (_, Stage::Floquet) => 3,
            (_, Stage::Simulation) => 4,
        };
        Failure::new(code, e.to_string())
    }
}

/// Finished command: files to write plus a report for stdout.
struct Output {
    files: Vec<(String, Vec<u8>)>,
    notes: Vec<String>,
    code: i32,
}

impl Output {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            notes: Vec::new(),
            code: 0,
        }
    }

    fn file(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>,
    ) -> Result<(), Failure> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(fail(Stage::Setup))?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }
}

struct Session {
    cfg: NetworkConfig,
    cps: CoupledPhaseSystem,
    horizon: f64,
    sim_tol: f64,
    seed_shift: f64,
}

impl Session {
    fn open(cli: &Cli) -> Result<Self, Failure> {
        let path = cli
            .config
            .as_deref()
            .ok_or_else(|| Failure::new(1, "missing --config (or PPVGROUP_CONFIG)"))?;
        let (cfg, base) = NetworkConfig::load(path).map_err(fail(Stage::Setup))?;
        let cps = cfg.network(&base).map_err(fail(Stage::Setup))?;
        let horizon = cli.horizon.unwrap_or(cfg.solver.horizon);
        let sim_tol = cli.tol.unwrap_or(cfg.solver.sim_tol);
        let seed_shift = cli.seed_shift.unwrap_or(cfg.solver.seed_shift);
        for (name, v) in [("--horizon", horizon), ("--tol", sim_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Failure::new(1, format!("{name} must be positive")));
            }
        }
        if !seed_shift.is_finite() {
            return Err(Failure::new(1, "--seed-shift must be finite"));
        }
        Ok(Self {
            cfg,
            cps,
            horizon,
            sim_tol,
            seed_shift,
        })
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions::with_tol(self.cfg.solver.rtol, self.cfg.solver.atol)
    }

    fn lock(&self) -> Result<LockedSolution, Failure> {
        let s = &self.cfg.solver;
        let mut guess = LockGuess::from_system(&self.cps);
        if let Some(f) = s.guess_frequency {
            guess.f = f;
        }
        if let Some(d) = &s.guess_offsets {
            if d.len() != self.cps.len() {
                return Err(Failure::new(
                    1,
                    "solver.guess_offsets needs one entry per oscillator",
                ));
            }
            guess.dphi = d.clone();
        }
        let opts = LockOptions {
            solver: self.solver(),
            tol: s.lock_tol,
            max_iterations: s.max_iterations,
            num_samples: s.samples,
            ..LockOptions::default()
        };
        let sol = find_lock(&self.cps, &guess, &opts).map_err(fail(Stage::Lock))?;
        if sol.unstable_hint {
            return Err(Failure::new(
                2,
                format!(
                    "lock at f* = {} is unstable (a monodromy multiplier exceeds 1)",
                    sol.f_star()
                ),
            ));
        }
        Ok(if self.seed_shift != 0.0 {
            sol.shift(self.seed_shift)
        } else {
            sol
        })
    }

    fn floquet(&self, sol: &LockedSolution) -> Result<FloquetData, Failure> {
        let opts = FloquetOptions {
            solver: self.solver(),
            ..FloquetOptions::default()
        };
        analyze(&self.cps, sol, &opts).map_err(fail(Stage::Floquet))
    }

    fn group(&self) -> Result<(LockedSolution, FloquetData, GroupPPVModel), Failure> {
        let sol = self.lock()?;
        let fd = self.floquet(&sol)?;
        let gm = build_group_model(&self.cps, &sol, &fd).map_err(fail(Stage::Floquet))?;
        Ok((sol, fd, gm))
    }

    fn inputs(&self, f_star: f64, scale: f64) -> Result<BTreeMap<usize, InputSignal>, Failure> {
        self.cfg
            .external_inputs(&self.cps, f_star, scale)
            .map_err(fail(Stage::Setup))
    }

    fn sim_solver(&self) -> SolverOptions {
        let mut o = SolverOptions::with_tol(self.sim_tol * 1e-3, self.sim_tol);
        if let Some(n) = self.cfg.solver.max_steps {
            o.max_steps = n;
        }
        o
    }

    fn validation_options(&self) -> ValidationOptions {
        ValidationOptions {
            group: GroupOptions {
                solver: self.sim_solver(),
                ..GroupOptions::default()
            },
            full_solver: None,
            samples_per_period: self.cfg.solver.samples_per_period,
            estimator: self.cfg.solver.estimator.into(),
        }
    }

    fn times(&self, sol: &LockedSolution) -> (f64, Vec<f64>) {
        let t1 = self.horizon * sol.t_star();
        let n = ((self.horizon * self.cfg.solver.samples_per_period as f64).ceil() as usize).max(1);
        (t1, uniform_times(0.0, t1, n))
    }
}

fn phase_columns(prefix: &str, first: &[&str], n: usize) -> Vec<String> {
    let mut cols: Vec<String> = first.iter().map(|s| s.to_string()).collect();
    cols.extend((0..n).map(|i| format!("{prefix}{i}")));
    cols
}

fn cmd_lock(s: &Session) -> Result<Output, Failure> {
    let sol = s.lock()?;
    let mut out = Output::new();
    out.file("lock.csv", |b| write_waveform(sol.delta_phi_star(), b))?;
    out.file("lock.meta", |b| write_meta(&lock_meta(&sol), b))?;
    out.notes.push(format!(
        "locked: f* = {:.9}, residual {:.2e}, {} Newton iterations",
        sol.f_star(),
        sol.residual_norm,
        sol.iterations
    ));
    Ok(out)
}

fn cmd_floquet(s: &Session) -> Result<Output, Failure> {
    let sol = s.lock()?;
    let fd = s.floquet(&sol)?;
    let mut out = Output::new();
    let rows: Vec<Vec<String>> = fd
        .multipliers
        .iter()
        .zip(&fd.exponents)
        .enumerate()
        .map(|(i, (r, e))| {
            vec![
                i.to_string(),
                fmt_f64(r.re),
                fmt_f64(r.im),
                fmt_f64(r.norm()),
                fmt_f64(e.re),
                fmt_f64(e.im),
            ]
        })
        .collect();
    out.file("floquet.csv", |b| {
        write_table(
            &["index", "re", "im", "modulus", "exponent_re", "exponent_im"],
            &rows,
            b,
        )
    })?;
    let flags = fd.stability;
    out.file("floquet.meta", |b| {
        write_meta(
            &[
                ("t_star", fmt_f64(fd.t_star)),
                ("unity_multiplier_ok", flags.unity_multiplier_ok.to_string()),
                ("contraction_ok", flags.contraction_ok.to_string()),
                ("near_marginal", flags.near_marginal.to_string()),
                ("u1_residual", fmt_f64(fd.u1_residual)),
                ("v1_periodicity_error", fmt_f64(fd.v1_periodicity_error)),
                ("biorthogonality_error", fmt_f64(fd.biorthogonality_error)),
            ],
            b,
        )
    })?;
    out.file("u1.csv", |b| write_waveform(&fd.u1, b))?;
    out.file("v1.csv", |b| write_waveform(&fd.v1, b))?;
    out.notes.push(format!(
        "rho_1 = {:.9}, largest remaining |rho| = {:.6}, max |v1.u1 - 1| = {:.2e}",
        fd.multipliers[0].re,
        fd.contraction(),
        fd.biorthogonality_error
    ));
    if flags.near_marginal {
        out.notes
            .push("warning: a non-unity multiplier is close to the unit circle".into());
    }
    if !flags.all_ok() {
        out.code = 3;
        out.notes.push("stability checks failed".into());
    }
    Ok(out)
}

fn cmd_extract(s: &Session) -> Result<Output, Failure> {
    let (_, _, gm) = s.group()?;
    let mut out = Output::new();
    let parts: Vec<&PeriodicWaveform> = gm.channels().iter().collect();
    let stacked = PeriodicWaveform::concat(&parts).map_err(fail(Stage::Setup))?;
    let mut cols = vec!["theta".to_string()];
    for (i, q) in gm.channels().iter().enumerate() {
        cols.extend((0..q.dim()).map(|c| format!("q{i}_{c}")));
    }
    let theta: Vec<f64> = (0..stacked.num_samples())
        .map(|k| stacked.grid_phase(k))
        .collect();
    let rows: Vec<Vec<f64>> = stacked.samples().map(<[f64]>::to_vec).collect();
    out.file("group_ppv.csv", |b| write_series(&cols, &theta, &rows, b))?;
    let dims: Vec<String> = gm.channels().iter().map(|q| q.dim().to_string()).collect();
    out.file("group.meta", |b| {
        write_meta(
            &[
                ("f_star", fmt_f64(gm.f_star())),
                ("members", gm.len().to_string()),
                ("channel_dims", dims.join(" ")),
                ("coupling_scale", fmt_f64(gm.coupling_scale())),
            ],
            b,
        )
    })?;
    out.notes.push(format!(
        "group model: f* = {:.9}, {} members",
        gm.f_star(),
        gm.len()
    ));
    Ok(out)
}

fn cmd_simulate(s: &Session, which: Which) -> Result<Output, Failure> {
    let mut out = Output::new();
    match which {
        Which::Full => {
            let sol = s.lock()?;
            let inputs = s.inputs(sol.f_star(), 1.0)?;
            let full = s
                .cps
                .clone()
                .with_inputs(&inputs)
                .map_err(fail(Stage::Setup))?;
            let (t1, times) = s.times(&sol);
            let opts = s.sim_solver();
            let tr = full
                .simulate_cps(&sol.phi_star(0.0), 0.0, t1, &times, &opts)
                .map_err(fail(Stage::Simulation))?;
            let cols = phase_columns("phi", &["t"], s.cps.len());
            out.file("traj_full.csv", |b| write_series(&cols, &tr.t, &tr.y, b))?;
            out.notes.push(format!(
                "full simulation: {} right-hand-side calls",
                tr.stats.rhs_evals
            ));
        }
        Which::Reduced => {
            let (sol, _, gm) = s.group()?;
            let inputs = s.inputs(sol.f_star(), 1.0)?;
            let (t1, times) = s.times(&sol);
            let tr = simulate_group(&gm, &inputs, 0.0, t1, &times, &s.validation_options().group)
                .map_err(fail(Stage::Simulation))?;
            let phases = reconstruct_phases(&gm, &tr);
            let rows: Vec<Vec<f64>> = tr
                .alpha
                .iter()
                .zip(&tr.phase)
                .zip(&phases)
                .map(|((a, g), ph)| {
                    let mut r = vec![*a, *g];
                    r.extend(ph);
                    r
                })
                .collect();
            let cols = phase_columns("phi", &["t", "alpha", "group_phase"], s.cps.len());
            out.file("traj_reduced.csv", |b| write_series(&cols, &tr.t, &rows, b))?;
            out.notes
                .extend(tr.warnings.iter().map(|w| format!("warning: {w}")));
            out.notes.push(format!(
                "group simulation: {} right-hand-side calls",
                tr.rhs_evals
            ));
        }
    }
    Ok(out)
}

fn compare_once(s: &Session, gm: &GroupPPVModel, scale: f64) -> Result<ValidationReport, Failure> {
    let inputs = s.inputs(gm.f_star(), scale)?;
    let t1 = s.horizon * gm.t_star();
    validate_reduction(&s.cps, gm, &inputs, 0.0, t1, &s.validation_options())
        .map_err(fail(Stage::Simulation))
}

fn cmd_compare(s: &Session) -> Result<Output, Failure> {
    let (_, _, gm) = s.group()?;
    let rep = compare_once(s, &gm, 1.0)?;
    let mut out = Output::new();
    out.file("compare.csv", |b| {
        write_table(&ValidationReport::COLUMNS, &[rep.row()], b)
    })?;
    let ser = &rep.series;
    let rows: Vec<Vec<f64>> = (0..ser.t.len())
        .map(|k| vec![ser.alpha_h[k], ser.alpha_hat[k], ser.deviation[k]])
        .collect();
    let cols: Vec<String> = ["t", "alpha_h", "alpha_hat", "dphi"]
        .iter()
        .map(|c| c.to_string())
        .collect();
    out.file("alpha.csv", |b| write_series(&cols, &ser.t, &rows, b))?;
    if let Some(sweep) = &s.cfg.sweep {
        let reports: Vec<Result<ValidationReport, Failure>> = sweep
            .input_scale
            .par_iter()
            .map(|&k| compare_once(s, &gm, k))
            .collect();
        let mut rows = Vec::with_capacity(reports.len());
        for (k, r) in sweep.input_scale.iter().zip(reports) {
            let mut row = vec![fmt_f64(*k)];
            row.extend(r?.row());
            rows.push(row);
        }
        let mut cols = vec!["input_scale"];
        cols.extend(ValidationReport::COLUMNS);
        out.file("compare_sweep.csv", |b| write_table(&cols, &rows, b))?;
    }
    out.notes.push(rep.summary());
    out.notes
        .extend(rep.warnings.iter().map(|w| format!("warning: {w}")));
    if rep.lock_slip {
        out.notes
            .push("warning: lock slip detected in the full simulation".into());
    }
    Ok(out)
}

fn cmd_demo_blowup(s: &Session) -> Result<Output, Failure> {
    let sol = s.lock()?;
    let fd = s.floquet(&sol)?;
    let eps = s.cfg.blowup.eps;
    let t1 = s.horizon * sol.t_star();
    let run = |f| {
        lptv_blowup_demo(&s.cps, &sol, &fd, eps, t1, f, &s.solver())
            .map_err(fail(Stage::Simulation))
    };
    let tan = run(BlowupForcing::Tangent)?;
    let tr = run(BlowupForcing::Transverse)?;
    let mut out = Output::new();
    let rows: Vec<Vec<f64>> = (0..tan.t.len())
        .map(|k| vec![tan.c1[k], tan.deviation[k], tr.c1[k], tr.deviation[k]])
        .collect();
    let cols: Vec<String> = [
        "t",
        "c1_tangent",
        "deviation_tangent",
        "c1_transverse",
        "deviation_transverse",
    ]
    .iter()
    .map(|c| c.to_string())
    .collect();
    out.file("blowup.csv", |b| write_series(&cols, &tan.t, &rows, b))?;
    out.file("blowup.meta", |b| {
        write_meta(
            &[
                ("eps", fmt_f64(eps)),
                ("t_star", fmt_f64(sol.t_star())),
                ("slope_tangent", fmt_f64(tan.slope)),
                ("slope_transverse", fmt_f64(tr.slope)),
                ("sup_c1_transverse", fmt_f64(tr.sup_c1())),
            ],
            b,
        )
    })?;
    out.notes.push(format!(
        "c1 slope: tangent {:.6e} (eps {eps:e}), transverse {:.3e}",
        tan.slope, tr.slope
    ));
    Ok(out)
}

fn write_outputs(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::new(1, format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| Failure::new(1, format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Executes a parsed command line; returns the process exit code.
pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = Session::open(cli).and_then(|s| match &cli.command {
        Command::Lock => cmd_lock(&s),
        Command::Floquet => cmd_floquet(&s),
        Command::Extract => cmd_extract(&s),
        Command::Simulate { which } => cmd_simulate(&s, *which),
        Command::Compare => cmd_compare(&s),
        Command::DemoBlowup => cmd_demo_blowup(&s),
    });
    let result = result.and_then(|o| write_outputs(&cli.out, &o.files).map(|_| o));
    match result {
        Ok(o) => {
            for n in &o.notes {
                let _ = writeln!(stdout, "{n}");
            }
            o.code
        }
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

/// Parses `args` (program name first) and executes them.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli, stdout, stderr),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            code
        }
    }
}
