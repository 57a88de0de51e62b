//! Checks that `E[G(t, X_t)] - G(0, x0) = E[int_0^t F(u, X_u) du]` along
//! simulated paths.

use taxstop::model::ProblemSpec;
use taxstop::montecarlo::{dynkin_check, simulate_paths, Execution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ProblemSpec::reference();
    let batch = simulate_paths(&spec, 100_000, 600, 7)?;
    for t in [0.0, 0.5, 1.5, 3.0] {
        let r = dynkin_check(&spec, t, &batch, Execution::Parallel)?;
        println!("t* = {t}: residual {:+.3e} +- {:.3e}  (z = {:+.2})", r.mean, r.std_error, r.studentized);
    }
    Ok(())
}
