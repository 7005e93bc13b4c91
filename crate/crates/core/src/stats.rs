//! Ensemble aggregation and the tests used to compare it with predictions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_ur;
use thiserror::Error;

use crate::engine::{EnsembleMode, TrialRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("observed and expected have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("category {0} has zero expected probability")]
    ZeroExpected(usize),
    #[error("expected probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("observed counts sum to {observed}, but trials = {trials}")]
    CountMismatch { observed: u64, trials: u64 },
    #[error("need at least two categories")]
    TooFewCategories,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalStateCount {
    pub state: Vec<u64>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub mode: EnsembleMode,
    pub trials: u64,
    /// Trials ending in each pure eigenstate.
    pub winner_counts: Vec<u64>,
    /// Absorption mode: trials that hit the step guard. Partial mode: trials
    /// still mixed after `k` steps.
    pub unfinished: u64,
    /// Step moments over absorbed trials (absorption mode) or all trials (partial mode).
    pub step_mean: f64,
    pub step_variance: f64,
    pub nontrivial_mean: f64,
    pub nontrivial_variance: f64,
    /// Pooled fraction of null steps, `Σ nulls / Σ steps`, with its ratio-estimator standard error.
    pub null_fraction: f64,
    pub null_fraction_se: f64,
    /// Partial mode: mean final intensity per component and its standard error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_mean_se: Option<Vec<f64>>,
    /// Partial mode: empirical distribution of final states, lexicographically descending.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_states: Option<Vec<FinalStateCount>>,
}

impl EnsembleSummary {
    /// Trials that contributed to the step moments.
    pub fn counted(&self) -> u64 {
        match self.mode {
            EnsembleMode::ToAbsorption => self.trials - self.unfinished,
            EnsembleMode::Partial { .. } => self.trials,
        }
    }

    pub fn step_se(&self) -> f64 {
        (self.step_variance / self.counted() as f64).sqrt()
    }

    pub fn nontrivial_se(&self) -> f64 {
        (self.nontrivial_variance / self.counted() as f64).sqrt()
    }
}

/// Exact integer moment sums. Merging is associative and commutative, so any
/// split of the trials yields the same summary.
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    mode: EnsembleMode,
    trials: u64,
    winner_counts: Vec<u64>,
    unfinished: u64,
    counted: u64,
    sum_t: u128,
    sum_t2: u128,
    sum_k: u128,
    sum_k2: u128,
    sum_null2: u128,
    sum_null_t: u128,
    sum_final: Vec<u128>,
    sum_final2: Vec<u128>,
    histogram: BTreeMap<Vec<u64>, u64>,
}

impl EnsembleAccumulator {
    pub fn new(m: usize, mode: EnsembleMode) -> Self {
        let partial = matches!(mode, EnsembleMode::Partial { .. });
        Self {
            mode,
            trials: 0,
            winner_counts: vec![0; m],
            unfinished: 0,
            counted: 0,
            sum_t: 0,
            sum_t2: 0,
            sum_k: 0,
            sum_k2: 0,
            sum_null2: 0,
            sum_null_t: 0,
            sum_final: if partial { vec![0; m] } else { Vec::new() },
            sum_final2: if partial { vec![0; m] } else { Vec::new() },
            histogram: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, r: &TrialRecord) {
        self.trials += 1;
        match r.winner {
            Some(w) => self.winner_counts[w] += 1,
            None => self.unfinished += 1,
        }
        let partial = matches!(self.mode, EnsembleMode::Partial { .. });
        if partial || r.winner.is_some() {
            let t = u128::from(r.total_steps);
            let k = u128::from(r.nontrivial_steps);
            let null = t - k;
            self.counted += 1;
            self.sum_t += t;
            self.sum_t2 += t * t;
            self.sum_k += k;
            self.sum_k2 += k * k;
            self.sum_null2 += null * null;
            self.sum_null_t += null * t;
        }
        if let (true, Some(fs)) = (partial, &r.final_state) {
            for (i, &x) in fs.iter().enumerate() {
                self.sum_final[i] += u128::from(x);
                self.sum_final2[i] += u128::from(x) * u128::from(x);
            }
            *self.histogram.entry(fs.clone()).or_insert(0) += 1;
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.trials += other.trials;
        self.unfinished += other.unfinished;
        self.counted += other.counted;
        for (a, b) in self.winner_counts.iter_mut().zip(&other.winner_counts) {
            *a += b;
        }
        self.sum_t += other.sum_t;
        self.sum_t2 += other.sum_t2;
        self.sum_k += other.sum_k;
        self.sum_k2 += other.sum_k2;
        self.sum_null2 += other.sum_null2;
        self.sum_null_t += other.sum_null_t;
        for (a, b) in self.sum_final.iter_mut().zip(&other.sum_final) {
            *a += b;
        }
        for (a, b) in self.sum_final2.iter_mut().zip(&other.sum_final2) {
            *a += b;
        }
        for (s, c) in other.histogram {
            *self.histogram.entry(s).or_insert(0) += c;
        }
        self
    }

    pub fn finish(self) -> EnsembleSummary {
        let n = self.counted;
        let (step_mean, step_variance) = moments(n, self.sum_t, self.sum_t2);
        let (nontrivial_mean, nontrivial_variance) = moments(n, self.sum_k, self.sum_k2);

        let sum_null = self.sum_t - self.sum_k;
        let (null_fraction, null_fraction_se) = if self.sum_t == 0 {
            (0.0, 0.0)
        } else {
            let r = sum_null as f64 / self.sum_t as f64;
            let se = if n > 1 {
                // Σ (null_i − r t_i)², the ratio-estimator residual sum.
                let resid = self.sum_null2 as f64 - 2.0 * r * self.sum_null_t as f64
                    + r * r * self.sum_t2 as f64;
                let mean_t = self.sum_t as f64 / n as f64;
                (resid.max(0.0) / (n as f64 * (n as f64 - 1.0))).sqrt() / mean_t
            } else {
                0.0
            };
            (r, se)
        };

        let partial = matches!(self.mode, EnsembleMode::Partial { .. });
        let (final_mean, final_mean_se, final_states) = if partial {
            let (means, ses): (Vec<f64>, Vec<f64>) = self
                .sum_final
                .iter()
                .zip(&self.sum_final2)
                .map(|(&s, &s2)| {
                    let (m, v) = moments(n, s, s2);
                    (m, (v / n as f64).sqrt())
                })
                .unzip();
            let hist = self
                .histogram
                .into_iter()
                .rev()
                .map(|(state, count)| FinalStateCount { state, count })
                .collect();
            (Some(means), Some(ses), Some(hist))
        } else {
            (None, None, None)
        };

        EnsembleSummary {
            mode: self.mode,
            trials: self.trials,
            winner_counts: self.winner_counts,
            unfinished: self.unfinished,
            step_mean,
            step_variance,
            nontrivial_mean,
            nontrivial_variance,
            null_fraction,
            null_fraction_se,
            final_mean,
            final_mean_se,
            final_states,
        }
    }
}

/// Sample mean and unbiased variance from exact power sums.
fn moments(n: u64, sum: u128, sum2: u128) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum as f64 / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let n128 = u128::from(n);
    // n Σx² − (Σx)² is exact and nonnegative.
    let num = n128 * sum2 - sum * sum;
    (mean, num as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// Two-sided standard normal quantile for a central `level` interval.
pub fn z_for_level(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// Wilson score interval for a binomial proportion.
pub fn proportion_interval(successes: u64, trials: u64, level: f64) -> (f64, f64) {
    assert!(trials >= 1 && successes <= trials, "need 0 <= successes <= trials, trials >= 1");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = z_for_level(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    // Rounding can push an endpoint past p̂ at extreme counts.
    (lo.min(p), hi.max(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
    /// Smallest expected cell count; below 5 the chi-square approximation is poor.
    pub min_expected_count: f64,
}

impl GoodnessOfFit {
    pub fn low_counts(&self) -> bool {
        self.min_expected_count < 5.0
    }
}

/// Upper tail of the chi-square distribution, `Q(dof/2, x/2)`.
pub fn chi_square_sf(statistic: f64, dof: u64) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0)
}

/// Pearson goodness-of-fit test of `observed` counts against `expected` probabilities.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], trials: u64) -> Result<GoodnessOfFit, StatsError> {
    if observed.len() != expected.len() {
        return Err(StatsError::LengthMismatch(observed.len(), expected.len()));
    }
    if observed.len() < 2 {
        return Err(StatsError::TooFewCategories);
    }
    let total: u64 = observed.iter().sum();
    if total != trials {
        return Err(StatsError::CountMismatch { observed: total, trials });
    }
    if let Some(i) = expected.iter().position(|&p| p.is_nan() || p <= 0.0) {
        return Err(StatsError::ZeroExpected(i));
    }
    let sum: f64 = expected.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(StatsError::NotNormalized(sum));
    }
    let n = trials as f64;
    let mut statistic = 0.0;
    let mut min_expected_count = f64::INFINITY;
    for (&o, &p) in observed.iter().zip(expected) {
        let e = p * n;
        min_expected_count = min_expected_count.min(e);
        let d = o as f64 - e;
        statistic += d * d / e;
    }
    let dof = observed.len() as u64 - 1;
    Ok(GoodnessOfFit {
        statistic,
        dof,
        p_value: chi_square_sf(statistic, dof),
        min_expected_count,
    })
}

/// `z = (mean − target) / (sd / √n)`.
pub fn mean_z_test(sample_mean: f64, sample_sd: f64, n: u64, target: f64) -> f64 {
    (sample_mean - target) / (sample_sd / (n as f64).sqrt())
}
