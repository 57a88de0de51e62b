//! Finite-difference solver for the obstacle problem
//!
//! ```text
//! max(dV/dt + mu x dV/dx + sigma^2 x^2 / 2 d2V/dx2, G - V) = 0,   V(T, .) = G(T, .)
//! ```
//!
//! on a uniform grid in `y = ln x`. Each backward time step applies a
//! theta-scheme (Crank-Nicolson by default, with a few fully implicit start-up
//! steps) and enforces `V >= G` with projected SOR. The lower edge sits deep in
//! the stopping region (`V = G`); the upper edge uses `d2V/dx2 = 0`, since `V`
//! is asymptotically affine above the threshold where `G` is affine.

use serde::{Deserialize, Serialize};

use crate::boundary::Boundary;
use crate::error::{Error, Result};
use crate::model::{classify_regime, threshold_f, ProblemSpec, Regime};

/// Volatilities below this are rejected in favour of the closed-form `sigma = 0` solver.
pub const MIN_SIGMA: f64 = 1e-4;

/// Default relative tolerance for classifying a node as "stop" when extracting the boundary.
pub const DEFAULT_EPS_STOP: f64 = 1e-7;

/// Width of the truncated domain around the anchors, in standard deviations of `ln X_T`.
const DOMAIN_STDDEVS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Number of log-price nodes.
    pub n_x: usize,
    /// Number of time steps.
    pub n_t: usize,
    /// Lower price truncation; derived from the problem when absent.
    pub s_lo: Option<f64>,
    /// Upper price truncation; derived from the problem when absent.
    pub s_hi: Option<f64>,
    /// Time weighting: 0 explicit, 0.5 Crank-Nicolson, 1 implicit.
    pub theta: f64,
    pub psor_tol: f64,
    pub psor_omega: f64,
    pub psor_max_iter: usize,
    /// Number of initial (near-maturity) steps taken fully implicitly.
    pub rannacher_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_x: 801,
            n_t: 600,
            s_lo: None,
            s_hi: None,
            theta: 0.5,
            psor_tol: 1e-10,
            psor_omega: 1.2,
            psor_max_iter: 20_000,
            rannacher_steps: 4,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::InvalidParameter { field, reason });
        if self.n_x < 3 {
            return bad("grid.n_x", format!("need at least 3 nodes, got {}", self.n_x));
        }
        if self.n_t < 1 {
            return bad("grid.n_t", "need at least 1 time step".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("grid.theta", format!("must lie in [0, 1], got {}", self.theta));
        }
        if !(self.psor_tol > 0.0 && self.psor_tol.is_finite()) {
            return bad("grid.psor_tol", format!("must be positive, got {}", self.psor_tol));
        }
        if !(self.psor_omega > 0.0 && self.psor_omega < 2.0) {
            return bad("grid.psor_omega", format!("must lie in (0, 2), got {}", self.psor_omega));
        }
        if self.psor_max_iter == 0 {
            return bad("grid.psor_max_iter", "must be at least 1".into());
        }
        if let Some(lo) = self.s_lo {
            if !(lo > 0.0 && lo.is_finite()) {
                return bad("grid.s_lo", format!("must be positive, got {lo}"));
            }
        }
        if let Some(hi) = self.s_hi {
            if !(hi > 0.0 && hi.is_finite()) {
                return bad("grid.s_hi", format!("must be positive, got {hi}"));
            }
        }
        Ok(())
    }

    /// Same grid with the spatial resolution doubled (`2 n_x - 1` nodes keeps the old nodes).
    pub fn refined_x(mut self) -> Self {
        self.n_x = 2 * self.n_x - 1;
        self
    }
}

/// Truncated price domain `[s_lo, s_hi]` for `spec` when the config leaves it open.
///
/// The anchors are the threshold `f`, the purchase price and `x0`; each side is
/// widened by six standard deviations of `ln X_T` plus the drift.
pub fn default_domain(spec: &ProblemSpec) -> (f64, f64) {
    let (lo, hi) = domain_anchors(spec);
    let spread = DOMAIN_STDDEVS * spec.market.sigma * spec.horizon_t.sqrt() + spec.market.mu.abs() * spec.horizon_t;
    (lo * (-spread).exp(), hi * spread.exp())
}

/// Prices the truncated domain must strictly contain.
fn domain_anchors(spec: &ProblemSpec) -> (f64, f64) {
    let f = threshold_f(spec);
    let mut lo = spec.tax.p0.min(spec.x0);
    let mut hi = spec.x0;
    if f.is_finite() && f > 0.0 {
        lo = lo.min(f);
        hi = hi.max(f);
    }
    (lo, hi)
}

/// Domain actually used by the solver: config overrides, else [`default_domain`].
pub fn resolve_domain(spec: &ProblemSpec, grid: &GridConfig) -> Result<(f64, f64)> {
    let (auto_lo, auto_hi) = default_domain(spec);
    let (anchor_lo, anchor_hi) = domain_anchors(spec);
    let lo = grid.s_lo.unwrap_or(auto_lo);
    let hi = grid.s_hi.unwrap_or(auto_hi);
    if lo >= anchor_lo {
        return Err(Error::Grid(format!(
            "s_lo = {lo} must lie below min(f, p0, x0) = {anchor_lo}"
        )));
    }
    if hi <= anchor_hi {
        return Err(Error::Grid(format!("s_hi = {hi} must lie above max(f, x0) = {anchor_hi}")));
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub psor_iterations_total: usize,
    pub psor_iterations_max: usize,
    /// Time steps where PSOR stalled with the configured relaxation and was
    /// restarted as plain projected Gauss-Seidel.
    pub omega_fallbacks: usize,
    /// Cell Peclet number `|mu - sigma^2/2| dy / (sigma^2/2)`.
    pub peclet: f64,
    /// Whether the drift term was discretized with one-sided differences.
    pub upwinded: bool,
}

/// `V(t, x)` on the time by log-price grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub spec: ProblemSpec,
    pub regime: Regime,
    /// `t_0 = 0 < ... < t_{n_t} = T`.
    pub times: Vec<f64>,
    /// Uniform grid in `ln x`.
    pub log_prices: Vec<f64>,
    /// `values[i][j] = V(times[i], exp(log_prices[j]))`.
    pub values: Vec<Vec<f64>>,
    pub diagnostics: SolverDiagnostics,
}

impl ValueSurface {
    pub fn n_t(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_x(&self) -> usize {
        self.log_prices.len()
    }

    pub fn dy(&self) -> f64 {
        (self.log_prices[self.n_x() - 1] - self.log_prices[0]) / (self.n_x() - 1) as f64
    }

    pub fn price(&self, j: usize) -> f64 {
        self.log_prices[j].exp()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.log_prices.iter().map(|y| y.exp()).collect()
    }

    /// `V - G` at node `(i, j)`.
    pub fn excess(&self, i: usize, j: usize) -> f64 {
        self.values[i][j] - self.spec.payoff(self.times[i], self.price(j))
    }

    /// Builds a surface by evaluating `value(t, x)` at every node.
    pub fn from_fn(
        spec: &ProblemSpec,
        times: Vec<f64>,
        log_prices: Vec<f64>,
        value: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let values = times
            .iter()
            .map(|&t| log_prices.iter().map(|&y| value(t, y.exp())).collect())
            .collect();
        Self {
            spec: *spec,
            regime: classify_regime(spec),
            times,
            log_prices,
            values,
            diagnostics: SolverDiagnostics::default(),
        }
    }

    /// Bilinear interpolation in `(t, ln x)`; exact at nodes.
    pub fn value_at(&self, t: f64, x: f64) -> Result<f64> {
        value_at(self, t, x)
    }
}

/// Uniform time grid with the last node exactly at the horizon.
pub fn time_grid(horizon: f64, n_t: usize) -> Vec<f64> {
    let dt = horizon / n_t as f64;
    (0..=n_t).map(|i| if i == n_t { horizon } else { i as f64 * dt }).collect()
}

/// Uniform grid of `n_x` nodes on `[ln lo, ln hi]`.
pub fn log_price_grid(lo: f64, hi: f64, n_x: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let dy = (b - a) / (n_x - 1) as f64;
    (0..n_x).map(|j| if j == n_x - 1 { b } else { a + j as f64 * dy }).collect()
}

/// Constant three-point stencil of the generator `nu d/dy + D d2/dy2` in log space.
#[derive(Debug, Clone, Copy)]
struct Stencil {
    lower: f64,
    diag: f64,
    upper: f64,
}

impl Stencil {
    fn new(mu: f64, sigma: f64, dy: f64) -> (Self, f64, bool) {
        let diffusion = 0.5 * sigma * sigma;
        let drift = mu - diffusion;
        let peclet = drift.abs() * dy / diffusion;
        let d = diffusion / (dy * dy);
        if peclet <= 2.0 {
            let c = drift / (2.0 * dy);
            (Self { lower: d - c, diag: -2.0 * d, upper: d + c }, peclet, false)
        } else if drift > 0.0 {
            let c = drift / dy;
            (Self { lower: d, diag: -2.0 * d - c, upper: d + c }, peclet, true)
        } else {
            let c = -drift / dy;
            (Self { lower: d + c, diag: -2.0 * d - c, upper: d }, peclet, true)
        }
    }

    #[inline]
    fn apply(&self, v: &[f64], j: usize) -> f64 {
        self.lower * v[j - 1] + self.diag * v[j] + self.upper * v[j + 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LowerEdge {
    /// `V = G`: the edge lies in the stopping region.
    Payoff,
    /// `d2V/dx2 = 0`: the edge lies in the continuation region.
    Affine,
}

/// Solves the obstacle problem on the grid described by `grid`.
///
/// The sell-immediately regime is answered without linear algebra (`V = G`).
pub fn solve_pde(spec: &ProblemSpec, grid: &GridConfig) -> Result<ValueSurface> {
    spec.validate()?;
    grid.validate()?;
    let sigma = spec.market.sigma;
    if sigma < MIN_SIGMA {
        return Err(Error::VolatilityTooSmall {
            sigma,
            reason: "use the sigma = 0 closed form below 1e-4",
        });
    }
    let regime = classify_regime(spec);
    let (lo, hi) = resolve_domain(spec, grid)?;
    let times = time_grid(spec.horizon_t, grid.n_t);
    let log_prices = log_price_grid(lo, hi, grid.n_x);

    if regime == Regime::SellImmediately {
        return Ok(ValueSurface::from_fn(spec, times, log_prices, |t, x| spec.payoff(t, x)));
    }

    let n_x = grid.n_x;
    let dy = (log_prices[n_x - 1] - log_prices[0]) / (n_x - 1) as f64;
    let dt = spec.horizon_t / grid.n_t as f64;
    let prices: Vec<f64> = log_prices.iter().map(|y| y.exp()).collect();
    let (stencil, peclet, upwinded) = Stencil::new(spec.market.mu, sigma, dy);
    let lower_edge = match regime {
        Regime::FreeBoundary => LowerEdge::Payoff,
        _ => LowerEdge::Affine,
    };
    // affine extrapolation in x on a log grid: (x_{j+1} - x_j) / (x_j - x_{j-1}) = e^{dy}
    let ratio = dy.exp();

    let mut values = vec![Vec::new(); grid.n_t + 1];
    values[grid.n_t] = prices.iter().map(|&x| spec.payoff(spec.horizon_t, x)).collect();
    let mut diagnostics = SolverDiagnostics {
        peclet,
        upwinded,
        ..SolverDiagnostics::default()
    };

    let mut rhs = vec![0.0; n_x];
    let mut obstacle = vec![0.0; n_x];
    for i in (0..grid.n_t).rev() {
        let step_from_maturity = grid.n_t - 1 - i;
        let theta = if step_from_maturity < grid.rannacher_steps { 1.0 } else { grid.theta };
        let later = &values[i + 1];
        let t = times[i];

        let a_lower = -theta * dt * stencil.lower;
        let a_diag = 1.0 - theta * dt * stencil.diag;
        let a_upper = -theta * dt * stencil.upper;
        if !(a_diag > 0.0 && a_lower <= 0.0 && a_upper <= 0.0 && a_diag > -(a_lower + a_upper)) {
            return Err(Error::Grid(format!(
                "step matrix is not an M-matrix (lower {a_lower}, diag {a_diag}, upper {a_upper})"
            )));
        }
        for j in 1..n_x - 1 {
            rhs[j] = later[j] + (1.0 - theta) * dt * stencil.apply(later, j);
        }
        for (g, &x) in obstacle.iter_mut().zip(&prices) {
            *g = spec.payoff(t, x);
        }

        let system = StepSystem {
            lower: a_lower,
            diag: a_diag,
            upper: a_upper,
            rhs: &rhs,
            obstacle: &obstacle,
            lower_edge,
            ratio,
        };
        let scale = 1.0 + later.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut current: Vec<f64> = later.iter().zip(&obstacle).map(|(v, g)| v.max(*g)).collect();
        let (iterations, fell_back) = system
            .solve(&mut current, grid.psor_omega, grid.psor_tol * scale, grid.psor_max_iter)
            .map_err(|(iterations, residual)| Error::PsorNotConverged {
                step: i,
                iterations,
                residual,
            })?;
        diagnostics.psor_iterations_total += iterations;
        diagnostics.psor_iterations_max = diagnostics.psor_iterations_max.max(iterations);
        diagnostics.omega_fallbacks += fell_back as usize;
        values[i] = current;
    }

    Ok(ValueSurface {
        spec: *spec,
        regime,
        times,
        log_prices,
        values,
        diagnostics,
    })
}

/// One linear complementarity problem `A v >= rhs, v >= g, (A v - rhs)(v - g) = 0`.
struct StepSystem<'a> {
    lower: f64,
    diag: f64,
    upper: f64,
    rhs: &'a [f64],
    obstacle: &'a [f64],
    lower_edge: LowerEdge,
    ratio: f64,
}

impl StepSystem<'_> {
    /// One projected SOR sweep; returns the largest change.
    fn sweep(&self, v: &mut [f64], omega: f64) -> f64 {
        let n = v.len();
        let g = self.obstacle;
        let mut change: f64 = 0.0;

        let edge = match self.lower_edge {
            LowerEdge::Payoff => g[0],
            LowerEdge::Affine => (v[1] - (v[2] - v[1]) / self.ratio).max(g[0]),
        };
        change = change.max((edge - v[0]).abs());
        v[0] = edge;

        for j in 1..n - 1 {
            let gauss_seidel = (self.rhs[j] - self.lower * v[j - 1] - self.upper * v[j + 1]) / self.diag;
            let updated = (v[j] + omega * (gauss_seidel - v[j])).max(g[j]);
            change = change.max((updated - v[j]).abs());
            v[j] = updated;
        }

        let top = (v[n - 2] + (v[n - 2] - v[n - 3]) * self.ratio).max(g[n - 1]);
        change = change.max((top - v[n - 1]).abs());
        v[n - 1] = top;
        change
    }

    /// Iterates sweeps until the largest change drops below `tol`.
    ///
    /// If over-relaxation has not converged within a quarter of the budget, or
    /// produces a non-finite iterate, the step restarts from the initial guess
    /// with `omega = 1`. Returns `(iterations, fell_back)` or `(iterations, last change)`.
    fn solve(&self, v: &mut [f64], omega: f64, tol: f64, max_iter: usize) -> std::result::Result<(usize, bool), (usize, f64)> {
        let start = v.to_vec();
        let guarded_budget = if omega == 1.0 { max_iter } else { (max_iter / 4).max(1) };
        let mut last = f64::INFINITY;
        for it in 1..=guarded_budget {
            last = self.sweep(v, omega);
            if !last.is_finite() {
                break;
            }
            if last <= tol {
                return Ok((it, false));
            }
        }
        if omega == 1.0 {
            return Err((max_iter, last));
        }
        v.copy_from_slice(&start);
        let used = guarded_budget;
        for it in 1..=max_iter.saturating_sub(used) {
            last = self.sweep(v, 1.0);
            if last <= tol {
                return Ok((used + it, true));
            }
        }
        Err((max_iter, last))
    }
}

/// Bilinear interpolation of the surface in `(t, ln x)`.
pub fn value_at(surface: &ValueSurface, t: f64, x: f64) -> Result<f64> {
    let times = &surface.times;
    let ys = &surface.log_prices;
    let horizon = *times.last().unwrap();
    let slack = 1e-12 * (1.0 + horizon);
    if x.is_nan() || x <= 0.0 || t < -slack || t > horizon + slack {
        return Err(Error::OutOfHull { t, x });
    }
    let y = x.ln();
    let (y_lo, y_hi) = (ys[0], ys[ys.len() - 1]);
    let yslack = 1e-12 * (1.0 + y_lo.abs().max(y_hi.abs()));
    if y < y_lo - yslack || y > y_hi + yslack {
        return Err(Error::OutOfHull { t, x });
    }
    let (i, wt) = bracket(times, t.clamp(0.0, horizon));
    let (j, wy) = bracket(ys, y.clamp(y_lo, y_hi));
    let v = &surface.values;
    let row = |r: &Vec<f64>| r[j] + wy * (r[j + 1] - r[j]);
    let (a, b) = (row(&v[i]), row(&v[i + 1]));
    Ok(a + wt * (b - a))
}

/// Index `k` and weight `w` with `z = grid[k] + w (grid[k+1] - grid[k])`, `w` in `[0, 1]`.
fn bracket(grid: &[f64], z: f64) -> (usize, f64) {
    let k = grid.partition_point(|&g| g <= z).clamp(1, grid.len() - 1) - 1;
    let w = (z - grid[k]) / (grid[k + 1] - grid[k]);
    (k, w.clamp(0.0, 1.0))
}

/// Exercise boundary on every time node before the horizon.
///
/// A node stops when `V - G <= eps_stop (1 + |G|)`. On each slice the level
/// is the point between the highest stopping node and the node above it where
/// the linear interpolant of `V - G` reaches that tolerance. Decreases larger
/// than one node spacing are recorded in [`Boundary::monotonicity_violations`].
pub fn extract_boundary(surface: &ValueSurface, eps_stop: f64) -> Boundary {
    let n_t = surface.n_t();
    let n_x = surface.n_x();
    let prices = surface.prices();
    let mut levels = Vec::with_capacity(n_t);
    for i in 0..n_t {
        let t = surface.times[i];
        let excess = |j: usize| {
            let g = surface.spec.payoff(t, prices[j]);
            (surface.values[i][j] - g, eps_stop * (1.0 + g.abs()))
        };
        let first_hold = (0..n_x).find(|&j| {
            let (e, tol) = excess(j);
            e > tol
        });
        let level = match first_hold {
            None => f64::INFINITY,
            Some(0) => 0.0,
            Some(k) => {
                // (V - G) - tol crosses zero between the last stopping node and node k
                let (e_below, tol_below) = excess(k - 1);
                let (e_above, tol_above) = excess(k);
                let (d_below, d_above) = (e_below - tol_below, e_above - tol_above);
                let w = (-d_below / (d_above - d_below)).clamp(0.0, 1.0);
                prices[k - 1] + w * (prices[k] - prices[k - 1])
            }
        };
        levels.push(level);
    }
    let spacing = surface.dy().exp() - 1.0;
    Boundary::with_tolerance(
        surface.times[..n_t].to_vec(),
        levels,
        surface.regime,
        |b| b * spacing,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothFitPoint {
    pub t: f64,
    pub boundary: f64,
    /// One-sided estimate of `dV/dx` at the boundary from the continuation side.
    pub value_slope: f64,
    /// `dG/dx = (1 - alpha) e^{r (1 - alpha) (T - t)}`.
    pub payoff_slope: f64,
    /// `|value_slope / payoff_slope - 1|`.
    pub residual: f64,
}

/// Mean and max smooth-fit residual over the interior time nodes `0 < t < T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothFitSummary {
    pub n_points: usize,
    pub mean_residual: f64,
    pub max_residual: f64,
}

impl SmoothFitSummary {
    pub fn from_points(points: &[SmoothFitPoint]) -> Self {
        let interior: Vec<f64> = points.iter().filter(|p| p.t > 0.0).map(|p| p.residual).collect();
        let n = interior.len();
        Self {
            n_points: n,
            mean_residual: if n == 0 { 0.0 } else { interior.iter().sum::<f64>() / n as f64 },
            max_residual: interior.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Smooth-pasting diagnostic at every boundary time.
///
/// `dV/dx` at `b(t)` is the second-order one-sided difference taken from the
/// highest contact node (`V = G`) at or below `b(t)` into the continuation region.
pub fn smooth_fit_residual(surface: &ValueSurface, boundary: &Boundary) -> Result<Vec<SmoothFitPoint>> {
    if surface.regime != Regime::FreeBoundary {
        return Err(Error::Regime {
            required: "free_boundary",
            actual: surface.regime,
        });
    }
    if boundary.len() != surface.n_t() {
        return Err(Error::Invalid(format!(
            "boundary has {} times, surface has {} steps",
            boundary.len(),
            surface.n_t()
        )));
    }
    let prices = surface.prices();
    let n_x = prices.len();
    let dy = surface.dy();
    boundary
        .times
        .iter()
        .zip(&boundary.levels)
        .enumerate()
        .map(|(i, (&t, &b))| {
            // node at or below b, with a little slack for round-off in the level
            let above = prices.partition_point(|&x| x <= b * (1.0 + 1e-12));
            if !b.is_finite() || above == 0 || above + 1 >= n_x {
                return Err(Error::BoundaryOutsideGrid { t, level: b });
            }
            // step down to the last node where the obstacle is active (V = G exactly)
            let mut s = above - 1;
            while s > 0 && surface.excess(i, s) > 0.0 {
                s -= 1;
            }
            let v = &surface.values[i];
            let value_slope = (-3.0 * v[s] + 4.0 * v[s + 1] - v[s + 2]) / (2.0 * dy) / prices[s];
            let payoff_slope = surface.spec.payoff_slope(t);
            Ok(SmoothFitPoint {
                t,
                boundary: b,
                value_slope,
                payoff_slope,
                residual: (value_slope / payoff_slope - 1.0).abs(),
            })
        })
        .collect()
}
