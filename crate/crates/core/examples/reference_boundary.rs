//! Exercise boundary for the reference problem (T = 3, alpha = 0.3, mu = 0.026,
//! r = 0.03, sigma = 0.25, p0 = 100, x0 = 180).
//!
//! Usage: `cargo run --release --example reference_boundary [out.csv]`

use taxstop::analysis::{solve, SolveOptions};
use taxstop::cli::boundary_csv;
use taxstop::model::{threshold_f, ProblemSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ProblemSpec::reference();
    let solution = solve(&spec, &SolveOptions::default())?;
    let b = &solution.boundary;

    println!("regime {}, V(0, x0) = {:.6}", solution.regime, solution.v0);
    println!("threshold f = {:.6}", threshold_f(&spec));
    for i in (0..b.len()).step_by(60).chain([b.len() - 1]) {
        println!("  t = {:5.3}  b = {:.4}", b.times[i], b.levels[i]);
    }
    println!("nondecreasing: {}", b.is_nondecreasing());

    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, boundary_csv(b))?;
        println!("wrote {path}");
    }
    Ok(())
}
