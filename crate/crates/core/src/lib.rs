//! Serial ε-exchange model of quantum measurement.
//!
//! A system of `M` eigenstate intensities `(a_1, …, a_M)`, integers summing to
//! `N`, evolves by repeated binary exchanges: a donor component gives up one
//! unit and a recipient component (drawn independently from the same
//! distribution) takes it. Components that reach zero never return, so every
//! run ends in a pure state. The crate provides
//!
//! - [`model`]: the admissible transition models (uniform, linear, custom weights),
//! - [`engine`]: the Monte Carlo simulator, single trials and ensembles,
//! - [`analytic`]: closed-form Born probabilities and mean step counts,
//! - [`oracle`]: exact enumeration of the finite chain with linear solves,
//! - [`stats`]: interval estimates and goodness-of-fit tests,
//! - [`cli`]: the JSON-config-driven batch front end used by the `bornchain` binary.
//!
//! Ensembles run in parallel with rayon when the `parallel` feature (on by
//! default) is enabled; results are bit-identical to the sequential path.

pub mod analytic;
pub mod cli;
pub mod compositions;
pub mod engine;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod state;
pub mod stats;

pub use analytic::StepPrediction;
pub use engine::{EnsembleMode, EvolutionResult, Termination, TransactionOutcome};
pub use model::{ModelError, ModelKind, ModelReport, TransitionModel};
pub use oracle::{Chain, ChainSolution, StateSpace};
pub use rng::SeedSpec;
pub use state::{IntensityState, StateError};
pub use stats::{EnsembleSummary, GoodnessOfFit};
