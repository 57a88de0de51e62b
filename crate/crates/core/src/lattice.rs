//! Recombining binomial lattice for `V(0, x0) = sup_tau E[G(tau, X_tau)]`.
//!
//! Up and down factors come from the volatility alone (`u = e^{sigma sqrt(dt)}`,
//! `d = 1/u`) and the drift enters through `p = (e^{mu dt} - d) / (u - d)`, so
//! the one-step mean of the price is exactly `x e^{mu dt}`. There is no
//! discounting in the recursion: `G` already compounds the proceeds to `T`.

use serde::{Deserialize, Serialize};

use crate::boundary::Boundary;
use crate::error::{Error, Result};
use crate::model::{classify_regime, ProblemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub n_steps: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { n_steps: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct LatticeSolution {
    pub spec: ProblemSpec,
    pub n_steps: usize,
    /// Estimate of `V(0, x0)`.
    pub value_root: f64,
    pub boundary: Boundary,
    /// `exercise_flags[k][j]` is true when selling is chosen at step `k`,
    /// node `j` (price `x0 u^{2j - k}`); ties stop.
    pub exercise_flags: Vec<Vec<bool>>,
    /// Log of the up factor.
    pub log_up: f64,
    pub up_probability: f64,
}

impl LatticeSolution {
    pub fn dt(&self) -> f64 {
        self.spec.horizon_t / self.n_steps as f64
    }

    pub fn node_price(&self, step: usize, node: usize) -> f64 {
        node_price(self.spec.x0, self.log_up, step, node)
    }

    pub fn is_stop(&self, step: usize, node: usize) -> bool {
        self.exercise_flags[step][node]
    }
}

#[inline]
fn node_price(x0: f64, log_up: f64, step: usize, node: usize) -> f64 {
    x0 * ((2.0 * node as f64 - step as f64) * log_up).exp()
}

fn up_probability(mu: f64, sigma: f64, dt: f64) -> f64 {
    let log_up = sigma * dt.sqrt();
    // (e^{mu dt} - e^{-s}) / (e^{s} - e^{-s}), written with expm1 for small steps
    ((mu * dt).exp_m1() - (-log_up).exp_m1()) / (log_up.exp_m1() - (-log_up).exp_m1())
}

/// Smallest step count with `p` strictly inside `(0, 1)`.
fn min_valid_steps(spec: &ProblemSpec) -> usize {
    let (mu, sigma, horizon) = (spec.market.mu, spec.market.sigma, spec.horizon_t);
    let mut n = ((horizon * mu * mu / (sigma * sigma)).floor() as usize).max(1);
    loop {
        let p = up_probability(mu, sigma, horizon / n as f64);
        if p > 0.0 && p < 1.0 {
            return n;
        }
        n += 1;
    }
}

pub fn solve_lattice(spec: &ProblemSpec, config: LatticeConfig) -> Result<LatticeSolution> {
    spec.validate()?;
    if config.n_steps == 0 {
        return Err(Error::InvalidParameter {
            field: "lattice.n_steps",
            reason: "must be at least 1".into(),
        });
    }
    let sigma = spec.market.sigma;
    if sigma <= 0.0 {
        return Err(Error::VolatilityTooSmall {
            sigma,
            reason: "the lattice needs sigma > 0; use the sigma = 0 closed form",
        });
    }
    let n = config.n_steps;
    let dt = spec.horizon_t / n as f64;
    let p = up_probability(spec.market.mu, sigma, dt);
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ProbabilityOutOfRange {
            p,
            min_steps: min_valid_steps(spec),
        });
    }
    let log_up = sigma * dt.sqrt();
    let x0 = spec.x0;
    let time = |k: usize| if k == n { spec.horizon_t } else { k as f64 * dt };

    let mut values: Vec<f64> = (0..=n).map(|j| spec.payoff(spec.horizon_t, node_price(x0, log_up, n, j))).collect();
    let mut flags = Vec::with_capacity(n + 1);
    flags.push(vec![true; n + 1]);
    for k in (0..n).rev() {
        let t = time(k);
        let mut level_flags = Vec::with_capacity(k + 1);
        for j in 0..=k {
            let hold = p * values[j + 1] + (1.0 - p) * values[j];
            let stop = spec.payoff(t, node_price(x0, log_up, k, j));
            let sell = stop >= hold;
            values[j] = if sell { stop } else { hold };
            level_flags.push(sell);
        }
        flags.push(level_flags);
    }
    flags.reverse();

    let mut solution = LatticeSolution {
        spec: *spec,
        n_steps: n,
        value_root: values[0],
        boundary: Boundary::constant(Vec::new(), 0.0, classify_regime(spec)),
        exercise_flags: flags,
        log_up,
        up_probability: p,
    };
    solution.boundary = extract_boundary_lattice(&solution);
    Ok(solution)
}

/// Per step `k < n`, the geometric midpoint between the highest selling node
/// and the node above it. Steps without a selling node record `0`; steps where
/// every node sells record `+inf`.
pub fn extract_boundary_lattice(solution: &LatticeSolution) -> Boundary {
    let n = solution.n_steps;
    let dt = solution.dt();
    let mut times = Vec::with_capacity(n);
    let mut levels = Vec::with_capacity(n);
    for k in 0..n {
        times.push(k as f64 * dt);
        let flags = &solution.exercise_flags[k];
        let level = match flags.iter().rposition(|&s| s) {
            None => 0.0,
            Some(j) if j == k => f64::INFINITY,
            Some(j) => (solution.node_price(k, j) * solution.node_price(k, j + 1)).sqrt(),
        };
        levels.push(level);
    }
    // adjacent steps' node sets are offset by one factor u
    let spacing = (2.0 * solution.log_up).exp();
    Boundary::with_tolerance(times, levels, classify_regime(&solution.spec), |b| b * (spacing - 1.0))
}

/// Whether every lattice level is a single contiguous stop set at the bottom.
pub fn stop_sets_are_lower_intervals(solution: &LatticeSolution) -> bool {
    solution
        .exercise_flags
        .iter()
        .all(|flags| flags.windows(2).all(|w| w[0] || !w[1]))
}
