//! Value of choosing when to realize the gain, against paying the tax at once.

use taxstop::analysis::{solve, timing_option_value, SolveOptions};
use taxstop::lattice::{solve_lattice, LatticeConfig};
use taxstop::model::ProblemSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (label, spec) in [
        ("reference", ProblemSpec::reference()),
        ("no tax, mu < r", ProblemSpec::reference().with_alpha(0.0)),
        ("deterministic, x0 = 150", ProblemSpec::reference().with_sigma(0.0).with_x0(150.0)),
        ("deterministic, x0 = 180", ProblemSpec::reference().with_sigma(0.0)),
    ] {
        let solution = solve(&spec, &SolveOptions::default())?;
        let report = timing_option_value(&spec, &solution.estimate())?;
        println!(
            "{label:>24}: v0 {:.6}  benchmark {:.6}  option {:.6} ({:?})",
            report.v0, report.benchmark, report.option_value, report.method
        );
    }
    let spec = ProblemSpec::reference();
    let lattice = solve_lattice(&spec, LatticeConfig::default())?;
    println!("lattice option value {:.6}", timing_option_value(&spec, &lattice.estimate())?.option_value);
    Ok(())
}
