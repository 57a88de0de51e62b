//! Value, boundary and timing option across volatilities.

use taxstop::analysis::{sigma_sweep, SolveOptions};
use taxstop::model::ProblemSpec;
use taxstop::montecarlo::Execution;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ProblemSpec::reference();
    let report = sigma_sweep(&spec, &[0.0, 0.1, 0.25, 0.4], &SolveOptions::default(), Execution::Parallel)?;
    println!("{:>6} {:>12} {:>10} {:>12}", "sigma", "V(0, x0)", "b(0)", "option");
    for p in &report.points {
        match (&p.v0, &p.boundary, &p.option_value) {
            (Some(v), Some(b), Some(o)) => println!("{:6.2} {v:12.6} {:10.4} {o:12.6}", p.sigma, b.levels[0]),
            _ => println!("{:6.2} failed: {}", p.sigma, p.error.as_deref().unwrap_or("?")),
        }
    }
    println!("{:#?}", report.verdicts);
    Ok(())
}
