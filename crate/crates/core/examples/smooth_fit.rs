//! Slope of the value function against the payoff slope at the boundary,
//! under spatial refinement.

use taxstop::model::ProblemSpec;
use taxstop::pde::{extract_boundary, smooth_fit_residual, solve_pde, GridConfig, SmoothFitSummary, DEFAULT_EPS_STOP};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ProblemSpec::reference();
    let mut grid = GridConfig::default();
    for _ in 0..3 {
        let surface = solve_pde(&spec, &grid)?;
        let boundary = extract_boundary(&surface, DEFAULT_EPS_STOP);
        let points = smooth_fit_residual(&surface, &boundary)?;
        let summary = SmoothFitSummary::from_points(&points);
        print!("n_x = {:5}:", grid.n_x);
        for t in [0.5, 1.5, 2.5] {
            let p = points.iter().find(|p| (p.t - t).abs() < 1e-9).unwrap();
            print!("  t={t} {:.2e}", p.residual);
        }
        println!("  mean {:.2e}  max {:.2e}", summary.mean_residual, summary.max_residual);
        grid = grid.refined_x();
    }
    Ok(())
}
