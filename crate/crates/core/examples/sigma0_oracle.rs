//! Closed-form boundary and value when the stock is deterministic.

use taxstop::model::{threshold_f, ProblemSpec};
use taxstop::sigma0::{boundary_sigma0, value_sigma0, Sigma0Solution};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ProblemSpec::reference().with_sigma(0.0);
    println!("f = {:.6}", threshold_f(&spec));
    for t in [0.0, 1.0, 2.0, 2.9, 2.999] {
        println!("b({t}) = {:.6}", boundary_sigma0(t, &spec)?);
    }
    for x in [100.0, 150.0, 180.0, 200.0] {
        let decision = Sigma0Solution::new(spec).decide(0.0, x);
        println!("V(0, {x}) = {:.6}  ({decision:?})", value_sigma0(0.0, x, &spec)?);
    }
    Ok(())
}
