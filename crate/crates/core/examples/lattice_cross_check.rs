//! Binomial lattice against the finite-difference solver as the tree is refined.

use taxstop::lattice::{solve_lattice, LatticeConfig};
use taxstop::model::ProblemSpec;
use taxstop::pde::{solve_pde, GridConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ProblemSpec::reference();
    let pde = solve_pde(&spec, &GridConfig::default())?.value_at(0.0, spec.x0)?;
    println!("pde      V(0, x0) = {pde:.6}");
    for n in [250, 500, 1000, 2000, 4000] {
        let lattice = solve_lattice(&spec, LatticeConfig { n_steps: n })?;
        let rel = (lattice.value_root - pde) / pde;
        println!("n = {n:5}  V(0, x0) = {:.6}  rel diff {rel:+.2e}", lattice.value_root);
    }
    Ok(())
}
