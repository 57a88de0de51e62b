//! Simulated terminal wealth of three selling rules: sell now, hold to the
//! horizon, and sell at the solved boundary.
//!
//! Usage: `cargo run --release --example monte_carlo_policy [n_paths]`

use taxstop::analysis::{solve, SolveOptions};
use taxstop::model::ProblemSpec;
use taxstop::montecarlo::{evaluate_policy, simulate_paths, Execution, StoppingPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_paths = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200_000);
    let spec = ProblemSpec::reference();
    let solution = solve(&spec, &SolveOptions::default())?;
    let batch = simulate_paths(&spec, n_paths, 600, 2024)?;

    println!("PDE V(0, x0) = {:.4}", solution.v0);
    let policies = [
        ("sell now", StoppingPolicy::StopAt(0.0)),
        ("hold to T", StoppingPolicy::StopAt(spec.horizon_t)),
        ("boundary", StoppingPolicy::Boundary(solution.boundary.clone())),
    ];
    for (name, policy) in &policies {
        let est = evaluate_policy(&batch, policy, &spec, Execution::Parallel);
        println!("{name:>10}: {:.4} +- {:.4}", est.mean, est.std_error);
    }
    Ok(())
}
