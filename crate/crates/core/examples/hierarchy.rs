//! Two weakly coupled pairs, modelled flat and as a network of two group
//! oscillators. Each pair is reduced to a scalar group phase, nested as a
//! single oscillator, and the two nested oscillators are coupled through
//! `group_link`. Lock frequency and transient phases are compared.

use std::time::Instant;

use ppvgroup::fixtures::{adler_coupling, injection, sinusoidal_oscillator};
use ppvgroup::floquet::{analyze, FloquetOptions};
use ppvgroup::hierppv::{
    all_ports, build_group_model, group_link, nest_as_oscillator, port_input, MemberLink, Port,
};
use ppvgroup::lock::{find_lock, LockGuess, LockOptions};
use ppvgroup::ode::uniform_times;
use ppvgroup::periodic::DEFAULT_SAMPLES;
use ppvgroup::{
    CoupledPhaseSystem, Coupling, GroupPPVModel, LockedSolution, Result, SolverOptions,
};

/// Free-running frequencies; 0,1 form pair A and 2,3 pair B.
pub const DETUNED: [f64; 4] = [0.999, 1.001, 1.0005, 1.0015];
pub const INNER: f64 = 0.1;
pub const CROSS: f64 = 0.01;
/// Cross links `(src, dst)` in flat numbering.
/// This mirror-symmetric set is reproduced exactly by the two-level model.
pub const CROSS_LINKS: [(usize, usize); 4] = [(2, 0), (3, 1), (0, 2), (1, 3)];
/// Asymmetric variant where the reduction error is visible.
pub const CROSS_LINKS_SKEW: [(usize, usize); 4] = [(2, 0), (3, 1), (0, 2), (0, 3)];

pub struct Hierarchy {
    pub flat: CoupledPhaseSystem,
    pub groups: [GroupPPVModel; 2],
    pub ports: [Vec<Port>; 2],
    pub top: CoupledPhaseSystem,
}

fn pair(freqs: [f64; 2], tag: &str) -> Result<CoupledPhaseSystem> {
    let oscs = freqs
        .iter()
        .enumerate()
        .map(|(i, &f)| sinusoidal_oscillator(&format!("{tag}{i}"), f))
        .collect();
    let w = adler_coupling(DEFAULT_SAMPLES, INNER);
    CoupledPhaseSystem::new(
        oscs,
        vec![Coupling::new(0, 1, w.clone()), Coupling::new(1, 0, w)],
    )
}

fn reduce(cps: &CoupledPhaseSystem) -> Result<GroupPPVModel> {
    let sol = find_lock(cps, &LockGuess::from_system(cps), &LockOptions::default())?;
    let fd = analyze(cps, &sol, &FloquetOptions::default())?;
    build_group_model(cps, &sol, &fd)
}

pub fn build(freqs: &[f64; 4], cross_links: &[(usize, usize)]) -> Result<Hierarchy> {
    let a = pair([freqs[0], freqs[1]], "a")?;
    let b = pair([freqs[2], freqs[3]], "b")?;

    let mut oscs = a.oscillators().to_vec();
    oscs.extend(b.oscillators().iter().cloned());
    let inner = adler_coupling(DEFAULT_SAMPLES, INNER);
    let cross = adler_coupling(DEFAULT_SAMPLES, CROSS);
    let mut couplings: Vec<Coupling> = [(0, 1), (1, 0), (2, 3), (3, 2)]
        .iter()
        .map(|&(s, d)| Coupling::new(s, d, inner.clone()))
        .collect();
    couplings.extend(
        cross_links
            .iter()
            .map(|&(s, d)| Coupling::new(s, d, cross.clone())),
    );
    let flat = CoupledPhaseSystem::new(oscs, couplings)?;

    let groups = [reduce(&a)?, reduce(&b)?];
    let ports = [all_ports(&groups[0]), all_ports(&groups[1])];
    let nested = vec![
        nest_as_oscillator(&groups[0], &ports[0], "A")?,
        nest_as_oscillator(&groups[1], &ports[1], "B")?,
    ];
    let mut top_links = Vec::new();
    for (src, dst) in [(1usize, 0usize), (0, 1)] {
        let links: Vec<MemberLink> = cross_links
            .iter()
            .filter(|(s, d)| s / 2 == src && d / 2 == dst)
            .map(|&(s, d)| MemberLink {
                src: s % 2,
                dst: d % 2,
                b: cross.clone(),
            })
            .collect();
        top_links.push(Coupling::new(
            src,
            dst,
            group_link(&groups[src], &ports[dst], &links)?,
        ));
    }
    let top = CoupledPhaseSystem::new(nested, top_links)?;
    Ok(Hierarchy {
        flat,
        groups,
        ports,
        top,
    })
}

impl Hierarchy {
    /// Member phases of all four oscillators from the two group phases.
    pub fn lift(&self, group_phases: &[f64]) -> Vec<f64> {
        let mut out = self.groups[0].member_phases(group_phases[0]);
        out.extend(self.groups[1].member_phases(group_phases[1]));
        out
    }

    pub fn top_lock(&self) -> Result<LockedSolution> {
        find_lock(
            &self.top,
            &LockGuess::from_system(&self.top),
            &LockOptions::default(),
        )
    }

    pub fn flat_lock(&self) -> Result<LockedSolution> {
        find_lock(
            &self.flat,
            &LockGuess::from_system(&self.flat),
            &LockOptions::default(),
        )
    }
}

#[derive(Debug)]
pub struct HierarchyReport {
    pub f_flat: f64,
    pub f_top: f64,
    /// Largest member phase error of the two-level model, in cycles.
    pub sup_dphi: f64,
    pub seconds: f64,
}

/// Locks both descriptions, then drives oscillator 0 with amplitude `eps`
/// for `periods` lock periods and compares member phases.
pub fn compare(
    freqs: &[f64; 4],
    cross_links: &[(usize, usize)],
    eps: f64,
    periods: f64,
) -> Result<HierarchyReport> {
    let start = Instant::now();
    let h = build(freqs, cross_links)?;
    let flat_lock = h.flat_lock()?;
    let top_lock = h.top_lock()?;

    let a = injection(eps, flat_lock.f_star(), 0.0, 0);
    let flat = h.flat.clone().with_input(0, a.clone())?;
    let top = h
        .top
        .clone()
        .with_input(0, port_input(&h.ports[0], 0, &a)?)?;

    let t1 = periods * top_lock.t_star();
    let times = uniform_times(0.0, t1, (periods * 20.0) as usize);
    let opts = SolverOptions::with_tol(1e-12, 1e-10);
    let g0 = top_lock.phi_star(0.0);
    let full = flat.simulate_cps(&h.lift(&g0), 0.0, t1, &times, &opts)?;
    let nested = top.simulate_cps(&g0, 0.0, t1, &times, &opts)?;
    let sup_dphi = full
        .y
        .iter()
        .zip(&nested.y)
        .flat_map(|(f, g)| {
            h.lift(g)
                .into_iter()
                .zip(f.clone())
                .map(|(x, y)| (x - y).abs())
        })
        .fold(0.0, f64::max);

    Ok(HierarchyReport {
        f_flat: flat_lock.f_star(),
        f_top: top_lock.f_star(),
        sup_dphi,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_example() -> Result<HierarchyReport> {
    compare(&DETUNED, &CROSS_LINKS, 1e-3, 50.0)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let r = run_example()?;
    println!("flat lock        f* = {:.9}", r.f_flat);
    println!("two-level lock   f* = {:.9}", r.f_top);
    println!("|df*|               = {:.3e}", (r.f_flat - r.f_top).abs());
    println!(
        "sup member phase error under injection: {:.3e} cycles",
        r.sup_dphi
    );
    println!("elapsed {:.2} s", r.seconds);
    Ok(())
}
