//! Regime-aware dispatch, the timing-option value and volatility sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::Boundary;
use crate::error::{Error, Result};
use crate::lattice::LatticeSolution;
use crate::model::{classify_regime, MarketParams, ProblemSpec, Regime};
use crate::montecarlo::Execution;
use crate::pde::{
    extract_boundary, log_price_grid, resolve_domain, solve_pde, time_grid, GridConfig, ValueSurface,
    DEFAULT_EPS_STOP, MIN_SIGMA,
};
use crate::sigma0::Sigma0Solution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `V = G` or `V = x e^{mu (T - t)}`.
    ClosedForm,
    Sigma0Oracle,
    Pde,
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub grid: GridConfig,
    pub eps_stop: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            eps_stop: DEFAULT_EPS_STOP,
        }
    }
}

/// Output of [`solve`]: the value on the configured grid, the boundary on its
/// time nodes before the horizon, and `V(0, x0)`.
#[derive(Debug, Clone)]
pub struct Solution {
    pub regime: Regime,
    pub method: Method,
    pub v0: f64,
    pub surface: ValueSurface,
    pub boundary: Boundary,
}

impl Solution {
    pub fn estimate(&self) -> ValueEstimate {
        ValueEstimate {
            spec: self.surface.spec,
            method: self.method,
            v0: self.v0,
        }
    }
}

/// `V(0, x0)` together with the problem and method that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub spec: ProblemSpec,
    pub method: Method,
    pub v0: f64,
}

impl LatticeSolution {
    pub fn estimate(&self) -> ValueEstimate {
        ValueEstimate {
            spec: self.spec,
            method: Method::Lattice,
            v0: self.value_root,
        }
    }
}

/// Solves one problem with the cheapest exact method for its regime.
///
/// * sell immediately: `V = G`, boundary `+inf`
/// * hold to maturity: `V = x e^{mu (T - t)}`, boundary `0`
/// * free boundary, `sigma >= 1e-4`: finite differences
/// * free boundary, smaller `sigma`: the `sigma = 0` closed form
pub fn solve(spec: &ProblemSpec, options: &SolveOptions) -> Result<Solution> {
    spec.validate()?;
    options.grid.validate()?;
    let regime = classify_regime(spec);
    let grid = &options.grid;
    let closed_form = |method: Method, level: &dyn Fn(f64) -> f64, value: &dyn Fn(f64, f64) -> f64| -> Result<Solution> {
        let (lo, hi) = resolve_domain(spec, grid)?;
        let times = time_grid(spec.horizon_t, grid.n_t);
        let levels = times[..grid.n_t].iter().map(|&t| level(t)).collect();
        let boundary = Boundary::with_tolerance(times[..grid.n_t].to_vec(), levels, regime, |_| 0.0);
        let surface = ValueSurface::from_fn(spec, times, log_price_grid(lo, hi, grid.n_x), value);
        Ok(Solution {
            regime,
            method,
            v0: value(0.0, spec.x0),
            surface,
            boundary,
        })
    };
    match regime {
        Regime::SellImmediately => closed_form(Method::ClosedForm, &|_| f64::INFINITY, &|t, x| spec.payoff(t, x)),
        Regime::HoldToMaturity => {
            let mu = spec.market.mu;
            closed_form(Method::ClosedForm, &|_| 0.0, &|t, x| x * (mu * (spec.horizon_t - t)).exp())
        }
        Regime::FreeBoundary if spec.market.sigma < MIN_SIGMA => {
            let oracle = Sigma0Solution::new(*spec);
            closed_form(Method::Sigma0Oracle, &|t| oracle.boundary_at(t), &|t, x| oracle.value_at(t, x))
        }
        Regime::FreeBoundary => {
            let surface = solve_pde(spec, grid)?;
            let boundary = extract_boundary(&surface, options.eps_stop);
            let v0 = surface.value_at(0.0, spec.x0)?;
            Ok(Solution {
                regime,
                method: Method::Pde,
                v0,
                surface,
                boundary,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingOptionReport {
    pub v0: f64,
    /// Expected wealth when gains are taxed continuously from time zero:
    /// `[(1 - alpha) x0 + alpha p0] e^{(1 - alpha) max(mu, r) T}`.
    pub benchmark: f64,
    /// `e^{-r (1 - alpha) T} (v0 - benchmark)`.
    pub option_value: f64,
    pub method: Method,
}

/// Value at time zero of the right to choose when the gain is taxed.
///
/// Under immediate taxation the position is worth `(1 - alpha) x0 + alpha p0`
/// and grows at `(1 - alpha) mu` in the stock, or at `(1 - alpha) r` in the
/// bank when `mu <= r`.
pub fn timing_option_value(spec: &ProblemSpec, estimate: &ValueEstimate) -> Result<TimingOptionReport> {
    if estimate.spec != *spec {
        return Err(Error::MismatchedSpec);
    }
    // the benchmark is G(0, x0) with r replaced by max(mu, r), evaluated the same way,
    // so it cancels v0 = G(0, x0) exactly in the degenerate cases
    let best = ProblemSpec {
        market: MarketParams {
            r: spec.market.mu.max(spec.market.r),
            ..spec.market
        },
        ..*spec
    };
    let benchmark = best.payoff(0.0, spec.x0);
    let option_value = (estimate.v0 - benchmark) / spec.growth(0.0);
    Ok(TimingOptionReport {
        v0: estimate.v0,
        benchmark,
        option_value,
        method: estimate.method,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub method: Option<Method>,
    pub v0: Option<f64>,
    pub option_value: Option<f64>,
    pub boundary: Option<Boundary>,
    /// Solver error message when this point failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepVerdicts {
    /// `V(0, x0)` nondecreasing between consecutive solved points.
    pub value_nondecreasing: bool,
    /// Every consecutive increase of `V(0, x0)` exceeds `1e-6 V`.
    pub value_strictly_increasing: bool,
    /// Largest `V(sigma_k) - V(sigma_{k+1})`, 0 if none.
    pub value_worst_violation: f64,
    /// `b` pointwise nonincreasing in sigma within one node spacing.
    pub boundary_nonincreasing: bool,
    /// Largest `b_{sigma_{k+1}}(t) - b_{sigma_k}(t)` over the shared time grid, 0 if none.
    pub boundary_worst_violation: f64,
    pub option_value_strictly_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub points: Vec<SweepPoint>,
    pub verdicts: SweepVerdicts,
    /// Truncated price domain shared by every point.
    pub s_lo: f64,
    pub s_hi: f64,
}

/// Solves the problem for each volatility on one shared grid and checks that
/// the value increases and the boundary decreases with `sigma`.
///
/// The domain is sized for the largest volatility. Points whose solver fails
/// are reported with their error and left out of the verdicts.
pub fn sigma_sweep(
    spec: &ProblemSpec,
    sigmas: &[f64],
    options: &SolveOptions,
    exec: Execution,
) -> Result<SweepReport> {
    if sigmas.is_empty() {
        return Err(Error::InvalidParameter {
            field: "sweep.sigmas",
            reason: "need at least one volatility".into(),
        });
    }
    if let Some(&s) = sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter {
            field: "sweep.sigmas",
            reason: format!("volatilities must be finite and nonnegative, got {s}"),
        });
    }
    if sigmas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            field: "sweep.sigmas",
            reason: "volatilities must be strictly ascending".into(),
        });
    }
    let widest = spec.with_sigma(sigmas[sigmas.len() - 1]);
    widest.validate()?;
    let (s_lo, s_hi) = resolve_domain(&widest, &options.grid)?;
    let shared = SolveOptions {
        grid: GridConfig {
            s_lo: Some(s_lo),
            s_hi: Some(s_hi),
            ..options.grid
        },
        ..*options
    };

    let point = |&sigma: &f64| {
        let problem = spec.with_sigma(sigma);
        match solve(&problem, &shared).and_then(|sol| Ok((timing_option_value(&problem, &sol.estimate())?, sol))) {
            Ok((report, sol)) => SweepPoint {
                sigma,
                method: Some(sol.method),
                v0: Some(sol.v0),
                option_value: Some(report.option_value),
                boundary: Some(sol.boundary),
                error: None,
            },
            Err(e) => SweepPoint {
                sigma,
                method: None,
                v0: None,
                option_value: None,
                boundary: None,
                error: Some(e.to_string()),
            },
        }
    };
    let points: Vec<SweepPoint> = match exec {
        Execution::Serial => sigmas.iter().map(point).collect(),
        Execution::Parallel => sigmas.par_iter().map(point).collect(),
    };
    let dy = (s_hi.ln() - s_lo.ln()) / (options.grid.n_x - 1) as f64;
    let verdicts = verdicts(&points, dy.exp() - 1.0);
    Ok(SweepReport {
        axis: "sigma".into(),
        points,
        verdicts,
        s_lo,
        s_hi,
    })
}

fn verdicts(points: &[SweepPoint], spacing: f64) -> SweepVerdicts {
    let solved: Vec<&SweepPoint> = points.iter().filter(|p| p.error.is_none()).collect();
    let mut v = SweepVerdicts {
        value_nondecreasing: true,
        value_strictly_increasing: true,
        value_worst_violation: 0.0,
        boundary_nonincreasing: true,
        boundary_worst_violation: 0.0,
        option_value_strictly_increasing: true,
    };
    for pair in solved.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (a.v0.unwrap(), b.v0.unwrap());
        v.value_worst_violation = v.value_worst_violation.max(va - vb);
        v.value_nondecreasing &= vb >= va;
        v.value_strictly_increasing &= vb - va > 1e-6 * va.abs();
        v.option_value_strictly_increasing &= b.option_value.unwrap() > a.option_value.unwrap();
        let (ba, bb) = (a.boundary.as_ref().unwrap(), b.boundary.as_ref().unwrap());
        for (&low_sigma, &high_sigma) in ba.levels.iter().zip(&bb.levels) {
            if high_sigma <= low_sigma {
                continue;
            }
            // a finite level above an infinite one cannot happen; the reverse is a violation
            let excess = high_sigma - low_sigma;
            v.boundary_worst_violation = v.boundary_worst_violation.max(excess);
            if excess.is_nan() || excess > low_sigma * spacing {
                v.boundary_nonincreasing = false;
            }
        }
    }
    v
}
