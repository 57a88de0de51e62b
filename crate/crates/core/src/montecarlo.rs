//! Monte Carlo validation: exact log-normal path simulation, evaluation of
//! stopping policies and a check of the running-payoff decomposition
//! `E[G(t, X_t)] = G(0, x0) + E[int_0^t F(u, X_u) du]`.
//!
//! Every path group (an antithetic pair, or a single path) draws its normals
//! from its own ChaCha stream, indexed by the group number. Results therefore
//! do not depend on how the groups are split across threads, and chunk
//! statistics are merged in a fixed order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::Boundary;
use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::pde::time_grid;

/// Groups per work unit; fixed so that the reduction order never changes.
const CHUNK_GROUPS: usize = 2048;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Path `2k + 1` uses the negated normals of path `2k`.
    Antithetic,
    /// Independent paths.
    Plain,
}

impl Sampling {
    fn group_size(self) -> usize {
        match self {
            Sampling::Antithetic => 2,
            Sampling::Plain => 1,
        }
    }
}

/// A reproducible batch of GBM paths on a uniform time grid.
///
/// Paths are regenerated from `(seed, group index)` on demand rather than
/// stored, so million-path batches cost no memory; [`PathBatch::prices`]
/// materializes the matrix for small batches.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub spec: ProblemSpec,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub sampling: Sampling,
    /// `n_steps + 1` times from 0 to `T`.
    pub times: Vec<f64>,
    drift: f64,
    vol: f64,
}

/// Antithetic batch; `n_paths` must be even.
pub fn simulate_paths(spec: &ProblemSpec, n_paths: usize, n_steps: usize, seed: u64) -> Result<PathBatch> {
    PathBatch::new(spec, n_paths, n_steps, seed, Sampling::Antithetic)
}

impl PathBatch {
    pub fn new(spec: &ProblemSpec, n_paths: usize, n_steps: usize, seed: u64, sampling: Sampling) -> Result<Self> {
        spec.validate()?;
        if n_paths == 0 || !n_paths.is_multiple_of(sampling.group_size()) {
            return Err(Error::InvalidParameter {
                field: "mc.n_paths",
                reason: format!("must be a positive multiple of {}, got {n_paths}", sampling.group_size()),
            });
        }
        if n_steps == 0 {
            return Err(Error::InvalidParameter {
                field: "mc.n_steps",
                reason: "must be at least 1".into(),
            });
        }
        let dt = spec.horizon_t / n_steps as f64;
        let sigma = spec.market.sigma;
        Ok(Self {
            spec: *spec,
            n_paths,
            n_steps,
            seed,
            sampling,
            times: time_grid(spec.horizon_t, n_steps),
            drift: (spec.market.mu - 0.5 * sigma * sigma) * dt,
            vol: sigma * dt.sqrt(),
        })
    }

    fn n_groups(&self) -> usize {
        self.n_paths / self.sampling.group_size()
    }

    fn walker(&self, group: usize) -> GroupWalker {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(group as u64);
        let size = self.sampling.group_size();
        GroupWalker {
            rng,
            prices: [self.spec.x0; 2],
            size,
            drift: self.drift,
            vol: self.vol,
        }
    }

    /// Prices of path `k` at every grid time.
    pub fn path(&self, k: usize) -> Vec<f64> {
        assert!(k < self.n_paths, "path {k} out of range");
        let size = self.sampling.group_size();
        let mut walker = self.walker(k / size);
        let member = k % size;
        let mut out = Vec::with_capacity(self.n_steps + 1);
        out.push(self.spec.x0);
        for _ in 0..self.n_steps {
            walker.advance();
            out.push(walker.prices[member]);
        }
        out
    }

    /// The full `n_paths x (n_steps + 1)` price matrix.
    pub fn prices(&self) -> Vec<Vec<f64>> {
        (0..self.n_paths).map(|k| self.path(k)).collect()
    }

    /// Mean and standard error of a per-path statistic, with antithetic
    /// pairs averaged before the variance is taken.
    ///
    /// `per_group` receives a walker positioned at time zero and must fill
    /// one value per path of the group.
    fn estimate<F>(&self, exec: Execution, per_group: F) -> RunningStats
    where
        F: Fn(&mut GroupWalker, &mut [f64]) + Sync,
    {
        let n_groups = self.n_groups();
        let n_chunks = n_groups.div_ceil(CHUNK_GROUPS);
        let chunk = |c: usize| {
            let mut stats = RunningStats::default();
            let mut values = [0.0; 2];
            let size = self.sampling.group_size();
            for g in c * CHUNK_GROUPS..((c + 1) * CHUNK_GROUPS).min(n_groups) {
                let mut walker = self.walker(g);
                per_group(&mut walker, &mut values[..size]);
                let mean = values[..size].iter().sum::<f64>() / size as f64;
                stats.push(mean);
            }
            stats
        };
        let parts: Vec<RunningStats> = match exec {
            Execution::Serial => (0..n_chunks).map(chunk).collect(),
            Execution::Parallel => (0..n_chunks).into_par_iter().map(chunk).collect(),
        };
        parts.into_iter().fold(RunningStats::default(), |acc, s| acc.merge(&s))
    }
}

/// Steps one path group forward with shared normals.
struct GroupWalker {
    rng: ChaCha8Rng,
    prices: [f64; 2],
    size: usize,
    drift: f64,
    vol: f64,
}

impl GroupWalker {
    #[inline]
    fn advance(&mut self) {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.prices[0] *= (self.drift + self.vol * z).exp();
        if self.size == 2 {
            self.prices[1] *= (self.drift - self.vol * z).exp();
        }
    }
}

/// Welford accumulator, merged with Chan's formula.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: &Self) -> Self {
        if other.n == 0 {
            return self;
        }
        if self.n == 0 {
            return *other;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64);
        Self { n, mean, m2 }
    }

    fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StoppingPolicy {
    /// Sell at the first grid time at or after `t`.
    StopAt(f64),
    /// Sell at the first grid time with `X_t <= b(t)`, otherwise at `T`.
    Boundary(Boundary),
}

/// Expected terminal wealth `E[G(tau, X_tau)]` of `policy` over the batch.
///
/// A boundary given on a different time grid is resampled by step interpolation.
pub fn evaluate_policy(
    batch: &PathBatch,
    policy: &StoppingPolicy,
    spec: &ProblemSpec,
    exec: Execution,
) -> McEstimate {
    let n = batch.n_steps;
    let stats = match policy {
        StoppingPolicy::StopAt(t) => {
            let stop = batch
                .times
                .iter()
                .position(|&s| s >= t - 1e-12 * (1.0 + t.abs()))
                .unwrap_or(n);
            let t_stop = batch.times[stop];
            batch.estimate(exec, |walker, out| {
                for _ in 0..stop {
                    walker.advance();
                }
                for (o, &x) in out.iter_mut().zip(&walker.prices) {
                    *o = spec.payoff(t_stop, x);
                }
            })
        }
        StoppingPolicy::Boundary(boundary) => {
            let levels: Vec<f64> = batch.times[..n].iter().map(|&t| boundary.level_at(t)).collect();
            batch.estimate(exec, |walker, out| {
                let size = out.len();
                let mut alive = [true, size == 2];
                let mut remaining = size;
                for (i, &level) in levels.iter().enumerate() {
                    if i > 0 {
                        walker.advance();
                    }
                    for m in 0..size {
                        if alive[m] && walker.prices[m] <= level {
                            out[m] = spec.payoff(batch.times[i], walker.prices[m]);
                            alive[m] = false;
                            remaining -= 1;
                        }
                    }
                    if remaining == 0 {
                        return;
                    }
                }
                walker.advance();
                for m in 0..size {
                    if alive[m] {
                        out[m] = spec.payoff(batch.times[n], walker.prices[m]);
                    }
                }
            })
        }
    };
    McEstimate {
        mean: stats.mean,
        std_error: stats.std_error(),
        n_paths: batch.n_paths,
        n_steps: batch.n_steps,
        seed: batch.seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynkinResidual {
    /// Sample mean of `G(t*, X_t*) - G(0, x0) - int_0^t* F(u, X_u) du`.
    pub mean: f64,
    pub std_error: f64,
    /// `mean / std_error`; `0` when both vanish.
    pub studentized: f64,
    /// `mean / G(0, x0)`.
    pub relative: f64,
}

/// Checks that `G(t, X_t) - G(0, x0) - int_0^t F du` has zero mean along the
/// batch, with the time integral taken by the trapezoidal rule on the grid.
pub fn dynkin_check(spec: &ProblemSpec, t_star: f64, batch: &PathBatch, exec: Execution) -> Result<DynkinResidual> {
    let dt = batch.spec.horizon_t / batch.n_steps as f64;
    let index = (t_star / dt).round();
    if !(0.0..=batch.n_steps as f64).contains(&index) || (index * dt - t_star).abs() > 1e-9 * (1.0 + t_star.abs()) {
        return Err(Error::Invalid(format!("t* = {t_star} is not on the batch time grid")));
    }
    let end = index as usize;
    let times = &batch.times;
    let start = spec.payoff(0.0, spec.x0);
    let stats = batch.estimate(exec, |walker, out| {
        let size = out.len();
        let mut integral = [0.0; 2];
        let mut previous = [spec.running_payoff(0.0, spec.x0); 2];
        for &t in &times[1..=end] {
            walker.advance();
            for m in 0..size {
                let current = spec.running_payoff(t, walker.prices[m]);
                integral[m] += 0.5 * (previous[m] + current) * dt;
                previous[m] = current;
            }
        }
        for m in 0..size {
            out[m] = spec.payoff(times[end], walker.prices[m]) - start - integral[m];
        }
    });
    let std_error = stats.std_error();
    let studentized = if std_error > 0.0 {
        stats.mean / std_error
    } else if stats.mean == 0.0 {
        0.0
    } else {
        stats.mean.signum() * f64::INFINITY
    };
    Ok(DynkinResidual {
        mean: stats.mean,
        std_error,
        studentized,
        relative: stats.mean / start,
    })
}
