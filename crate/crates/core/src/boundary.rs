use serde::{Deserialize, Serialize};

use crate::model::Regime;

/// Time-indexed exercise curve `b(t)`: sell as soon as `X_t <= b(t)`.
///
/// Sentinels: `0` means the stopping region is empty at that time (only the
/// absorbing price zero stops), `+inf` means every price stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub times: Vec<f64>,
    /// Infinite levels are written as the string `"inf"` in serialized form.
    #[serde(with = "levels_serde")]
    pub levels: Vec<f64>,
    pub regime: Regime,
    /// Indices `i` where `levels[i + 1]` falls below `levels[i]` by more than
    /// the tolerance the producer considered resolvable (one node spacing).
    #[serde(default)]
    pub monotonicity_violations: Vec<usize>,
}

impl Boundary {
    /// Builds a boundary and records where it decreases by more than
    /// `tolerance(level)`.
    pub fn with_tolerance(
        times: Vec<f64>,
        levels: Vec<f64>,
        regime: Regime,
        tolerance: impl Fn(f64) -> f64,
    ) -> Self {
        assert_eq!(times.len(), levels.len(), "times and levels differ in length");
        let monotonicity_violations = levels
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].is_finite() && w[0] - w[1] > tolerance(w[0]))
            .map(|(i, _)| i)
            .collect();
        Self {
            times,
            levels,
            regime,
            monotonicity_violations,
        }
    }

    /// A boundary held constant at `level` on `times`.
    pub fn constant(times: Vec<f64>, level: f64, regime: Regime) -> Self {
        let levels = vec![level; times.len()];
        Self::with_tolerance(times, levels, regime, |_| 0.0)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest decrease `levels[i] - levels[i + 1]` over consecutive finite levels (0 if nondecreasing).
    pub fn max_decrease(&self) -> f64 {
        self.levels
            .windows(2)
            .filter(|w| w[0].is_finite() && w[1].is_finite())
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1] >= w[0])
    }

    /// Step interpolation: the level of the last grid time `<= t`.
    ///
    /// Times before the first node use the first level.
    pub fn level_at(&self, t: f64) -> f64 {
        if self.times.is_empty() {
            return 0.0;
        }
        let idx = self.times.partition_point(|&s| s <= t + 1e-12 * (1.0 + t.abs()));
        self.levels[idx.saturating_sub(1)]
    }

    /// Level at the last node before the horizon.
    pub fn last_level(&self) -> Option<f64> {
        self.levels.last().copied()
    }
}

mod levels_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Level {
        Finite(f64),
        Sentinel(String),
    }

    pub fn serialize<S: Serializer>(levels: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(levels.iter().map(|&l| {
            if l.is_finite() {
                Level::Finite(l)
            } else {
                Level::Sentinel(if l > 0.0 { "inf" } else { "-inf" }.into())
            }
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Level>::deserialize(d)?
            .into_iter()
            .map(|l| match l {
                Level::Finite(x) => Ok(x),
                Level::Sentinel(s) if s == "inf" => Ok(f64::INFINITY),
                Level::Sentinel(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
                Level::Sentinel(s) => Err(serde::de::Error::custom(format!("invalid boundary level {s:?}"))),
            })
            .collect()
    }
}
