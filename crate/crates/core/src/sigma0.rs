//! Closed-form solution of the selling problem for a deterministic stock (`sigma = 0`).
//!
//! With no noise the price path is `x e^{mu u}`, so the only candidate
//! stopping times are "now" and "at the horizon"; comparing the two payoffs
//! yields the boundary. The solver ignores `spec.market.sigma`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{classify_regime, threshold_f, ProblemSpec, Regime};

/// Below this time-to-horizon the boundary formula is replaced by its limit `f`.
pub const TERMINAL_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopDecision {
    StopNow,
    HoldToT,
}

/// `b(t)` for `sigma = 0`:
///
/// ```text
/// b(t) = alpha p0 (e^{a s} - 1) / [(1 - alpha) (e^{mu s} - e^{a s})],  s = T - t,  a = r (1 - alpha)
/// ```
///
/// Requires the free-boundary regime and `0 <= t < T`.
pub fn boundary_sigma0(t: f64, spec: &ProblemSpec) -> Result<f64> {
    let regime = classify_regime(spec);
    if regime != Regime::FreeBoundary {
        return Err(Error::Regime {
            required: "free_boundary",
            actual: regime,
        });
    }
    if !(0.0..spec.horizon_t).contains(&t) {
        return Err(Error::Domain {
            t,
            x: 0.0,
            horizon: spec.horizon_t,
        });
    }
    Ok(boundary_unchecked(t, spec))
}

fn boundary_unchecked(t: f64, spec: &ProblemSpec) -> f64 {
    let remaining = spec.horizon_t - t;
    if remaining < TERMINAL_CUTOFF {
        return threshold_f(spec);
    }
    let alpha = spec.tax.alpha;
    let a = spec.after_tax_rate();
    // e^{mu s} - e^{a s} = e^{a s} (e^{(mu - a) s} - 1), both factors via expm1
    let numerator = alpha * spec.tax.p0 * (a * remaining).exp_m1();
    let denominator = (1.0 - alpha) * (a * remaining).exp() * ((spec.market.mu - a) * remaining).exp_m1();
    numerator / denominator
}

/// `V(t, x) = max(G(t, x), G(T, x e^{mu (T - t)}))` for `sigma = 0`.
pub fn value_sigma0(t: f64, x: f64, spec: &ProblemSpec) -> Result<f64> {
    check(t, x, spec)?;
    Ok(value_unchecked(t, x, spec))
}

fn value_unchecked(t: f64, x: f64, spec: &ProblemSpec) -> f64 {
    let stop = spec.payoff(t, x);
    let hold = spec.payoff(spec.horizon_t, x * (spec.market.mu * (spec.horizon_t - t)).exp());
    stop.max(hold)
}

/// Optimal time offset from `t`: `0` when `x <= b(t)` (ties stop), else `T - t`.
pub fn stop_time_sigma0(t: f64, x: f64, spec: &ProblemSpec) -> Result<f64> {
    check(t, x, spec)?;
    Ok(match Sigma0Solution::new(*spec).decide(t, x) {
        StopDecision::StopNow => 0.0,
        StopDecision::HoldToT => spec.horizon_t - t,
    })
}

fn check(t: f64, x: f64, spec: &ProblemSpec) -> Result<()> {
    if (0.0..=spec.horizon_t).contains(&t) && x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            t,
            x,
            horizon: spec.horizon_t,
        })
    }
}

/// The complete `sigma = 0` solution for one problem, valid in every regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigma0Solution {
    spec: ProblemSpec,
    regime: Regime,
}

impl Sigma0Solution {
    pub fn new(spec: ProblemSpec) -> Self {
        Self {
            regime: classify_regime(&spec),
            spec,
        }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Boundary on `[0, T]`; `+inf` when selling immediately is optimal, `0` without tax.
    ///
    /// At `t = T` the terminal limit is returned.
    pub fn boundary_at(&self, t: f64) -> f64 {
        match self.regime {
            Regime::SellImmediately => f64::INFINITY,
            Regime::HoldToMaturity => 0.0,
            Regime::FreeBoundary => boundary_unchecked(t.min(self.spec.horizon_t), &self.spec),
        }
    }

    pub fn value_at(&self, t: f64, x: f64) -> f64 {
        value_unchecked(t, x, &self.spec)
    }

    pub fn decide(&self, t: f64, x: f64) -> StopDecision {
        if t >= self.spec.horizon_t || x <= self.boundary_at(t) {
            StopDecision::StopNow
        } else {
            StopDecision::HoldToT
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> ProblemSpec {
        ProblemSpec::reference().with_sigma(0.0)
    }

    #[test]
    fn boundary_at_time_zero() {
        // direct evaluation in 30-digit arithmetic
        assert_relative_eq!(boundary_sigma0(0.0, &reference()).unwrap(), 173.142_134_768_887_35, max_relative = 1e-12);
    }

    #[test]
    fn boundary_tends_to_threshold() {
        let spec = reference();
        let near = boundary_sigma0(3.0 - 1e-6, &spec).unwrap();
        assert_relative_eq!(near, threshold_f(&spec), max_relative = 1e-6);
        assert_eq!(boundary_sigma0(3.0 - 1e-9, &spec).unwrap(), threshold_f(&spec));
    }

    #[test]
    fn boundary_vanishes_with_tax_rate() {
        let spec = reference().with_mu(0.04);
        let b1 = boundary_sigma0(0.0, &spec.with_alpha(1e-3)).unwrap();
        let b2 = boundary_sigma0(0.0, &spec.with_alpha(1e-6)).unwrap();
        assert!(b2 < b1 && b2 < 1e-2);
    }

    #[test]
    fn boundary_rejects_degenerate_regimes_and_horizon() {
        let spec = reference();
        assert!(matches!(boundary_sigma0(0.0, &spec.with_mu(0.02)), Err(Error::Regime { .. })));
        assert!(matches!(boundary_sigma0(0.0, &spec.with_alpha(0.0)), Err(Error::Regime { .. })));
        assert!(boundary_sigma0(3.0, &spec).is_err());
        assert!(boundary_sigma0(-1.0, &spec).is_err());
    }

    #[test]
    fn value_examples() {
        let spec = reference();
        assert_relative_eq!(value_sigma0(0.0, 100.0, &spec).unwrap(), 106.502_683_923_130_55, max_relative = 1e-13);
        assert_relative_eq!(value_sigma0(0.0, 200.0, &spec).unwrap(), 181.357_172_213_811_64, max_relative = 1e-13);
        assert_eq!(value_sigma0(3.0, 77.0, &spec).unwrap(), spec.payoff(3.0, 77.0));
    }

    #[test]
    fn stop_time_examples() {
        let spec = reference();
        assert_eq!(stop_time_sigma0(0.0, 100.0, &spec).unwrap(), 0.0);
        assert_eq!(stop_time_sigma0(0.0, 200.0, &spec).unwrap(), 3.0);
        let b = boundary_sigma0(0.0, &spec).unwrap();
        assert_eq!(stop_time_sigma0(0.0, b, &spec).unwrap(), 0.0);
        assert_eq!(stop_time_sigma0(1.0, 1e9, &spec.with_mu(0.01)).unwrap(), 0.0);
    }

    #[test]
    fn indifference_identity_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 100 {
            let r = rng.random_range(0.005..0.08);
            let alpha = rng.random_range(0.01..0.6);
            let mu = (1.0 - alpha) * r + rng.random_range(0.001..0.05);
            let horizon = rng.random_range(0.5..10.0);
            let spec = ProblemSpec::reference().with_sigma(0.0).with_mu(mu).with_alpha(alpha);
            let spec = ProblemSpec {
                horizon_t: horizon,
                market: crate::model::MarketParams { r, ..spec.market },
                ..spec
            };
            let t = rng.random_range(0.0..horizon * 0.999);
            let b = boundary_sigma0(t, &spec).unwrap();
            let stop = spec.payoff(t, b);
            let hold = spec.payoff(horizon, b * (mu * (horizon - t)).exp());
            assert_relative_eq!(stop, hold, max_relative = 1e-12);
            checked += 1;
        }
    }

    #[test]
    fn boundary_increasing_and_below_threshold() {
        let spec = reference();
        let f = threshold_f(&spec);
        let levels: Vec<f64> = (0..1000).map(|i| boundary_sigma0(3.0 * i as f64 / 1000.0, &spec).unwrap()).collect();
        assert!(levels.windows(2).all(|w| w[1] > w[0]));
        assert!(levels.iter().all(|&b| b < f));
    }

    #[test]
    fn value_dominates_payoff_and_equals_it_below_boundary() {
        let sol = Sigma0Solution::new(reference());
        for i in 0..30 {
            let t = 0.1 * i as f64;
            let b = sol.boundary_at(t);
            for k in 1..60 {
                let x = 5.0 * k as f64;
                let v = sol.value_at(t, x);
                let g = reference().payoff(t, x);
                assert!(v >= g);
                if x <= b {
                    assert_eq!(v, g);
                    assert_eq!(sol.decide(t, x), StopDecision::StopNow);
                } else {
                    assert!(v > g);
                    assert_eq!(sol.decide(t, x), StopDecision::HoldToT);
                }
            }
        }
    }

    #[test]
    fn degenerate_regime_sentinels() {
        assert_eq!(Sigma0Solution::new(reference().with_alpha(0.0).with_mu(0.036)).boundary_at(1.0), 0.0);
        assert_eq!(Sigma0Solution::new(reference().with_mu(0.02)).boundary_at(1.0), f64::INFINITY);
    }
}
