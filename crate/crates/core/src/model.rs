//! Transition models: the rule that picks donor and recipient components.
//!
//! Every model is a per-component weight `w(a)` normalized over the current
//! configuration, `p_i = w(a_i) / Σ_j w(a_j)`. Admissibility requires
//! `w(0) = 0` and `w(a) > 0` for `a > 0`, which makes the selection
//! probabilities a distribution that vanishes exactly on empty components.
//!
//! - [`TransitionModel::Uniform`]: `w(a) = 1` for `a > 0`, equal weight on occupied components.
//! - [`TransitionModel::Linear`]: `w(a) = a`, so `p_i = a_i / N` in every configuration.
//! - [`TransitionModel::Custom`]: an explicit table `w(0..=N_max)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compositions::{self, EnumerationError};
use crate::state::IntensityState;

/// Absolute tolerance for the normalization check in [`validate_model`].
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("weight rule must vanish at zero intensity, got w(0) = {0}")]
    NonzeroAtZero(f64),
    #[error("weight rule must be positive and finite for a > 0, got w({a}) = {w}")]
    NotPositive { a: u64, w: f64 },
    #[error("weight table is empty")]
    EmptyTable,
    #[error("weight table covers intensities up to {covered}, state needs {needed}")]
    TableTooShort { covered: u64, needed: u64 },
    #[error("weights sum to {0} in a valid state")]
    DegenerateWeights(f64),
    #[error("invalid weight document: {0}")]
    Document(String),
    #[error("weight document is missing intensities {0:?}")]
    MissingWeights(Vec<u64>),
    #[error(transparent)]
    Enumeration(#[from] EnumerationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Uniform,
    Linear,
    Custom,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Uniform => "uniform",
            ModelKind::Linear => "linear",
            ModelKind::Custom => "custom",
        })
    }
}

/// Weight table `w(a)` for `a = 0..=max_intensity()`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable(Arc<[f64]>);

impl WeightTable {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_intensity(&self) -> u64 {
        (self.0.len() as u64).saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionModel {
    Uniform,
    Linear,
    Custom(WeightTable),
}

impl TransitionModel {
    pub fn uniform() -> Self {
        TransitionModel::Uniform
    }

    pub fn linear() -> Self {
        TransitionModel::Linear
    }

    /// Custom model from an explicit table `w(0), w(1), …`, checked for admissibility.
    pub fn custom(weights: Vec<f64>) -> Result<Self, ModelError> {
        check_weights(&weights)?;
        Ok(Self::custom_unchecked(weights))
    }

    /// Custom model sampled from `rule` on `0..=max_intensity`.
    pub fn custom_fn(max_intensity: u64, rule: impl Fn(u64) -> f64) -> Result<Self, ModelError> {
        Self::custom((0..=max_intensity).map(rule).collect())
    }

    /// Custom model without the admissibility check, for use with [`validate_model`].
    pub fn custom_unchecked(weights: Vec<f64>) -> Self {
        TransitionModel::Custom(WeightTable(weights.into()))
    }

    /// Custom model from a JSON object mapping stringified intensities to weights,
    /// e.g. `{"0": 0, "1": 1, "2": 4}`. Every key in `0..=max_intensity` must be present.
    pub fn custom_from_json(document: &str, max_intensity: u64) -> Result<Self, ModelError> {
        Self::custom(parse_weight_document(document, max_intensity)?)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            TransitionModel::Uniform => ModelKind::Uniform,
            TransitionModel::Linear => ModelKind::Linear,
            TransitionModel::Custom(_) => ModelKind::Custom,
        }
    }

    /// Unnormalized weight `w(a)`. Panics for a custom table that does not cover `a`;
    /// use [`TransitionModel::supports`] first.
    #[inline]
    pub fn weight(&self, a: u64) -> f64 {
        match self {
            TransitionModel::Uniform => {
                if a > 0 {
                    1.0
                } else {
                    0.0
                }
            }
            TransitionModel::Linear => a as f64,
            TransitionModel::Custom(t) => t.0[a as usize],
        }
    }

    /// Whether the model defines `w(a)` for every `a ≤ n`.
    pub fn supports(&self, n: u64) -> Result<(), ModelError> {
        match self {
            TransitionModel::Custom(t) if t.0.is_empty() => Err(ModelError::EmptyTable),
            TransitionModel::Custom(t) if t.max_intensity() < n => Err(ModelError::TableTooShort {
                covered: t.max_intensity(),
                needed: n,
            }),
            _ => Ok(()),
        }
    }

    /// Selection probabilities `p_i = w(a_i) / Σ_j w(a_j)` for `state`.
    pub fn probabilities(&self, state: &IntensityState) -> Result<Vec<f64>, ModelError> {
        self.supports(state.total())?;
        let w: Vec<f64> = state.components().iter().map(|&a| self.weight(a)).collect();
        let total: f64 = w.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(ModelError::DegenerateWeights(total));
        }
        Ok(w.into_iter().map(|x| x / total).collect())
    }

    /// Two-component selection probability of a component holding `a` out of `n`,
    /// competing against the pooled remainder `n - a`.
    pub fn pooled_probability(&self, a: u64, n: u64) -> f64 {
        let wa = self.weight(a);
        wa / (wa + self.weight(n - a))
    }

    /// The resolved weight table for embedding in reports.
    pub fn weight_table(&self) -> Option<&[f64]> {
        match self {
            TransitionModel::Custom(t) => Some(t.as_slice()),
            _ => None,
        }
    }
}

/// Build a model from its kind, with a weight table required for [`ModelKind::Custom`].
pub fn make_model(kind: ModelKind, weights: Option<Vec<f64>>) -> Result<TransitionModel, ModelError> {
    match kind {
        ModelKind::Uniform => Ok(TransitionModel::Uniform),
        ModelKind::Linear => Ok(TransitionModel::Linear),
        ModelKind::Custom => TransitionModel::custom(weights.ok_or(ModelError::EmptyTable)?),
    }
}

fn check_weights(weights: &[f64]) -> Result<(), ModelError> {
    let Some(&w0) = weights.first() else {
        return Err(ModelError::EmptyTable);
    };
    if w0 != 0.0 {
        return Err(ModelError::NonzeroAtZero(w0));
    }
    for (a, &w) in weights.iter().enumerate().skip(1) {
        if !(w.is_finite() && w > 0.0) {
            return Err(ModelError::NotPositive { a: a as u64, w });
        }
    }
    Ok(())
}

/// Parse a weight document without checking admissibility.
pub fn parse_weight_document(document: &str, max_intensity: u64) -> Result<Vec<f64>, ModelError> {
    let raw: BTreeMap<String, f64> =
        serde_json::from_str(document).map_err(|e| ModelError::Document(e.to_string()))?;
    let mut by_intensity = BTreeMap::new();
    for (key, w) in raw {
        let a: u64 = key
            .parse()
            .map_err(|_| ModelError::Document(format!("key {key:?} is not a nonnegative integer")))?;
        by_intensity.insert(a, w);
    }
    let top = by_intensity
        .keys()
        .next_back()
        .copied()
        .unwrap_or(0)
        .max(max_intensity);
    let missing: Vec<u64> = (0..=top).filter(|a| !by_intensity.contains_key(a)).collect();
    if !missing.is_empty() {
        return Err(ModelError::MissingWeights(missing));
    }
    Ok(by_intensity.into_values().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Probabilities must sum to one.
    Normalization,
    /// An empty component must never be selected.
    ZeroAtEmpty,
    /// An occupied component must have positive selection probability.
    PositiveWhenOccupied,
    /// The model has no weight for some intensity in the configuration.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub configuration: Vec<u64>,
    pub constraint: Constraint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

/// Exhaustively check the model over every composition of `n` into `m` parts.
pub fn validate_model(model: &TransitionModel, m: usize, n: u64) -> Result<ModelReport, ModelError> {
    let states = compositions::enumerate(m, n)?;
    let mut violations = Vec::new();
    let covered = model.supports(n).is_ok();
    for configuration in states {
        let mut push = |constraint| {
            violations.push(Violation {
                configuration: configuration.clone(),
                constraint,
            })
        };
        if !covered {
            push(Constraint::Undefined);
            continue;
        }
        let w: Vec<f64> = configuration.iter().map(|&a| model.weight(a)).collect();
        let total: f64 = w.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            push(Constraint::Normalization);
            continue;
        }
        let p: Vec<f64> = w.iter().map(|x| x / total).collect();
        if (p.iter().sum::<f64>() - 1.0).abs() > PROBABILITY_TOLERANCE
            || p.iter().any(|x| !x.is_finite() || *x < 0.0)
        {
            push(Constraint::Normalization);
        }
        if configuration.iter().zip(&p).any(|(&a, &pi)| a == 0 && pi != 0.0) {
            push(Constraint::ZeroAtEmpty);
        }
        if configuration.iter().zip(&p).any(|(&a, &pi)| a > 0 && (pi.is_nan() || pi <= 0.0)) {
            push(Constraint::PositiveWhenOccupied);
        }
    }
    Ok(ModelReport {
        valid: violations.is_empty(),
        violations,
    })
}
