//! Floquet analysis of locked pairs and of a three-oscillator ring:
//! multipliers, the tangent vector u1 and the adjoint vector v1.

use ppvgroup::fixtures::{detuned_pair, identical_pair, ring3};
use ppvgroup::floquet::{analyze, FloquetOptions};
use ppvgroup::lock::{find_lock, LockGuess, LockOptions};
use ppvgroup::{CoupledPhaseSystem, FloquetData, Result};

pub fn floquet_of(cps: &CoupledPhaseSystem) -> Result<FloquetData> {
    let sol = find_lock(cps, &LockGuess::from_system(cps), &LockOptions::default())?;
    analyze(cps, &sol, &FloquetOptions::default())
}

pub fn run_example() -> Result<Vec<(&'static str, FloquetData)>> {
    Ok(vec![
        ("identical pair", floquet_of(&identical_pair(0.1))?),
        ("detuned pair", floquet_of(&detuned_pair(0.02, 0.1))?),
        ("ring of three", floquet_of(&ring3())?),
    ])
}

#[allow(dead_code)]
fn main() -> Result<()> {
    for (name, fd) in run_example()? {
        let mods: Vec<String> = fd
            .multipliers
            .iter()
            .map(|r| format!("{:.6}", r.norm()))
            .collect();
        println!("{name}: T* = {:.6}", fd.t_star);
        println!("  |rho| = [{}]", mods.join(", "));
        println!("  v1(0) = {:?}", fd.v1_at(0.0));
        println!(
            "  max |v1.u1 - 1| = {:.2e}, flags ok: {}",
            fd.biorthogonality_error,
            fd.stability.all_ok()
        );
    }
    Ok(())
}
