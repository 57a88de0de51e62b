//! The three shapes of the stopping region and how `solve` handles each.

use taxstop::analysis::{solve, SolveOptions};
use taxstop::model::ProblemSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = ProblemSpec::reference();
    for (label, spec) in [
        ("mu <= (1 - alpha) r", base.with_mu(0.02)),
        ("no tax, mu > r", base.with_alpha(0.0).with_mu(0.036).with_x0(100.0)),
        ("taxed, mu > (1 - alpha) r", base),
        ("taxed, sigma = 0", base.with_sigma(0.0)),
    ] {
        let s = solve(&spec, &SolveOptions::default())?;
        println!(
            "{label:>26}: {:<17} via {:<14} V(0, x0) = {:.6}  b(0) = {}",
            s.regime.as_str(),
            format!("{:?}", s.method),
            s.v0,
            s.boundary.levels[0]
        );
    }
    Ok(())
}
