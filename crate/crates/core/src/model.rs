//! Problem parameters, the terminal-wealth payoff `G`, its running payoff `F`
//! and the regime classification of the selling problem.
//!
//! The investor holds one share bought at `p0`. Selling at time `t` at price
//! `x` costs the tax `alpha * (x - p0)` (a credit when negative) and the
//! proceeds earn the after-tax rate `(1 - alpha) r` until the horizon `T`:
//!
//! ```text
//! G(t, x) = [(1 - alpha) x + alpha p0] * exp(r (1 - alpha) (T - t))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stock and bank-account dynamics. Rates are annualized and continuously compounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Drift of the stock.
    pub mu: f64,
    /// Volatility of the stock.
    pub sigma: f64,
    /// Riskless rate.
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxParams {
    /// Linear tax rate on realized gains, in `[0, 1)`.
    pub alpha: f64,
    /// Purchase price (tax basis).
    pub p0: f64,
}

/// Full parameterization of one stopping problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub market: MarketParams,
    pub tax: TaxParams,
    /// Investment horizon `T` in years.
    pub horizon_t: f64,
    /// Stock price at time zero.
    pub x0: f64,
}

/// Shape of the stopping region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `mu <= (1 - alpha) r`: selling at once is optimal everywhere.
    SellImmediately,
    /// `mu > (1 - alpha) r` and `alpha = 0`: never sell before the horizon.
    HoldToMaturity,
    /// `mu > (1 - alpha) r` and `alpha > 0`: sell the first time `X_t <= b(t)`.
    FreeBoundary,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::SellImmediately => "sell_immediately",
            Regime::HoldToMaturity => "hold_to_maturity",
            Regime::FreeBoundary => "free_boundary",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check(ok: bool, field: &'static str, reason: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            field,
            reason: reason.into(),
        })
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<()> {
        check(self.mu.is_finite(), "market.mu", "must be finite")?;
        check(
            self.sigma.is_finite() && self.sigma >= 0.0,
            "market.sigma",
            format!("must be a finite value >= 0, got {}", self.sigma),
        )?;
        check(
            self.r.is_finite() && self.r >= 0.0,
            "market.r",
            format!("must be a finite value >= 0, got {}", self.r),
        )
    }
}

impl TaxParams {
    pub fn validate(&self) -> Result<()> {
        check(
            (0.0..1.0).contains(&self.alpha),
            "tax.alpha",
            format!("must lie in [0, 1), got {}", self.alpha),
        )?;
        check(
            self.p0.is_finite() && self.p0 > 0.0,
            "tax.p0",
            format!("must be positive, got {}", self.p0),
        )
    }
}

impl ProblemSpec {
    /// Builds and validates a problem.
    pub fn new(market: MarketParams, tax: TaxParams, horizon_t: f64, x0: f64) -> Result<Self> {
        let spec = Self {
            market,
            tax,
            horizon_t,
            x0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The reference problem used by the examples and tests:
    /// `T = 3`, `alpha = 0.3`, `mu = 0.026`, `r = 0.03`, `sigma = 0.25`, `p0 = 100`, `x0 = 180`.
    pub fn reference() -> Self {
        Self {
            market: MarketParams {
                mu: 0.026,
                sigma: 0.25,
                r: 0.03,
            },
            tax: TaxParams {
                alpha: 0.3,
                p0: 100.0,
            },
            horizon_t: 3.0,
            x0: 180.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.tax.validate()?;
        check(
            self.horizon_t.is_finite() && self.horizon_t > 0.0,
            "horizon_t",
            format!("must be positive, got {}", self.horizon_t),
        )?;
        check(
            self.x0.is_finite() && self.x0 > 0.0,
            "x0",
            format!("must be positive, got {}", self.x0),
        )
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.market.sigma = sigma;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.market.mu = mu;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.tax.alpha = alpha;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    /// After-tax interest rate `(1 - alpha) r`.
    #[inline]
    pub fn after_tax_rate(&self) -> f64 {
        (1.0 - self.tax.alpha) * self.market.r
    }

    /// Bank-account growth `exp(r (1 - alpha) (T - t))` from `t` to the horizon.
    #[inline]
    pub fn growth(&self, t: f64) -> f64 {
        (self.market.r * (1.0 - self.tax.alpha) * (self.horizon_t - t)).exp()
    }

    /// `G(t, x)` without domain checks.
    #[inline]
    pub fn payoff(&self, t: f64, x: f64) -> f64 {
        let TaxParams { alpha, p0 } = self.tax;
        ((1.0 - alpha) * x + alpha * p0) * self.growth(t)
    }

    /// `dG/dx (t, x)`, independent of `x`.
    #[inline]
    pub fn payoff_slope(&self, t: f64) -> f64 {
        (1.0 - self.tax.alpha) * self.growth(t)
    }

    /// `F(t, x)` without domain checks.
    #[inline]
    pub fn running_payoff(&self, t: f64, x: f64) -> f64 {
        let TaxParams { alpha, p0 } = self.tax;
        let r = self.market.r;
        self.growth(t) * (1.0 - alpha) * (-r * alpha * p0 + x * (self.market.mu - r * (1.0 - alpha)))
    }

    fn check_point(&self, t: f64, x: f64) -> Result<()> {
        if (0.0..=self.horizon_t).contains(&t) && x >= 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain {
                t,
                x,
                horizon: self.horizon_t,
            })
        }
    }
}

/// Terminal wealth when selling at `(t, x)`.
pub fn payoff_g(t: f64, x: f64, spec: &ProblemSpec) -> Result<f64> {
    spec.check_point(t, x)?;
    Ok(spec.payoff(t, x))
}

/// Drift rate of the payoff process `G(t, X_t)`, i.e. `(d/dt + mu x d/dx + sigma^2 x^2 / 2 d^2/dx^2) G`.
///
/// Its sign does not depend on `t`: it is negative below [`threshold_f`] and positive above.
pub fn running_payoff_f(t: f64, x: f64, spec: &ProblemSpec) -> Result<f64> {
    spec.check_point(t, x)?;
    Ok(spec.running_payoff(t, x))
}

/// Root `f = r alpha p0 / (mu - r (1 - alpha))` of the running payoff.
///
/// Returns `f64::INFINITY` when `mu <= (1 - alpha) r`, where `F < 0` for every `x`.
pub fn threshold_f(spec: &ProblemSpec) -> f64 {
    let excess = spec.market.mu - spec.after_tax_rate();
    if excess <= 0.0 {
        f64::INFINITY
    } else {
        spec.market.r * spec.tax.alpha * spec.tax.p0 / excess
    }
}

pub fn classify_regime(spec: &ProblemSpec) -> Regime {
    if spec.market.mu <= spec.after_tax_rate() {
        Regime::SellImmediately
    } else if spec.tax.alpha == 0.0 {
        Regime::HoldToMaturity
    } else {
        Regime::FreeBoundary
    }
}
