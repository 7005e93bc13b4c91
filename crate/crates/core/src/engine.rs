//! Monte Carlo simulation of the exchange process.
//!
//! One step draws a donor and a recipient independently from the model's
//! selection probabilities, both evaluated at the pre-step configuration. If
//! they coincide the step is null; otherwise one unit moves from donor to
//! recipient.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{self, AnalyticError};
use crate::model::{ModelError, TransitionModel};
use crate::rng::SeedSpec;
use crate::state::IntensityState;
use crate::stats::{EnsembleAccumulator, EnsembleSummary};

/// Lower bound on the default step guard.
pub const MIN_STEP_GUARD: u64 = 1_000_000;
/// Default step guard as a multiple of the predicted mean total steps.
pub const STEP_GUARD_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("max_steps must be positive")]
    ZeroStepGuard,
    #[error("an ensemble needs at least one trial")]
    NoTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionOutcome {
    pub donor: usize,
    pub recipient: usize,
}

impl TransactionOutcome {
    #[inline]
    pub fn is_null(&self) -> bool {
        self.donor == self.recipient
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Absorbed { winner: usize },
    /// The step guard was hit; carries the state at that point.
    Unfinished { state: IntensityState },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub termination: Termination,
    pub total_steps: u64,
    pub nontrivial_steps: u64,
    /// Per component, the number of steps that changed it.
    pub change_counts: Vec<u64>,
}

impl EvolutionResult {
    pub fn winner(&self) -> Option<usize> {
        match self.termination {
            Termination::Absorbed { winner } => Some(winner),
            Termination::Unfinished { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EnsembleMode {
    ToAbsorption,
    /// Exactly `k` steps per trial, null steps included.
    Partial { k: u64 },
}

/// Draw one component index from the model's selection probabilities.
#[inline]
fn draw<R: Rng + ?Sized>(model: &TransitionModel, a: &[u64], n: u64, occupied: usize, rng: &mut R) -> usize {
    match model {
        TransitionModel::Linear => {
            let mut u = rng.gen_range(0..n);
            for (i, &x) in a.iter().enumerate() {
                if u < x {
                    return i;
                }
                u -= x;
            }
            unreachable!("components sum to n")
        }
        TransitionModel::Uniform => {
            let mut r = rng.gen_range(0..occupied);
            for (i, &x) in a.iter().enumerate() {
                if x > 0 {
                    if r == 0 {
                        return i;
                    }
                    r -= 1;
                }
            }
            unreachable!("occupied count matches state")
        }
        TransitionModel::Custom(_) => {
            let total: f64 = a.iter().map(|&x| model.weight(x)).sum();
            let mut u = rng.gen::<f64>() * total;
            let mut last = 0;
            for (i, &x) in a.iter().enumerate() {
                if x == 0 {
                    continue;
                }
                let w = model.weight(x);
                if u < w {
                    return i;
                }
                u -= w;
                last = i;
            }
            // Rounding left u at or past the final edge.
            last
        }
    }
}

/// A running trial: the state plus the occupied-component count.
struct Walker<'a> {
    model: &'a TransitionModel,
    state: IntensityState,
    occupied: usize,
}

impl<'a> Walker<'a> {
    fn new(model: &'a TransitionModel, state: IntensityState) -> Result<Self, ModelError> {
        model.supports(state.total())?;
        let occupied = state.occupied();
        Ok(Self {
            model,
            state,
            occupied,
        })
    }

    #[inline]
    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> TransactionOutcome {
        let n = self.state.total();
        let a = self.state.components();
        let donor = draw(self.model, a, n, self.occupied, rng);
        let recipient = draw(self.model, a, n, self.occupied, rng);
        if donor != recipient {
            self.state.transfer(donor, recipient);
            if self.state.components()[donor] == 0 {
                self.occupied -= 1;
            }
        }
        TransactionOutcome { donor, recipient }
    }

    fn absorbed(&self) -> bool {
        self.occupied == 1
    }
}

/// Apply one exchange to `state` in place.
pub fn step<R: Rng + ?Sized>(
    state: &mut IntensityState,
    model: &TransitionModel,
    rng: &mut R,
) -> Result<TransactionOutcome, EngineError> {
    let mut walker = Walker::new(model, state.clone())?;
    let outcome = walker.step(rng);
    *state = walker.state;
    Ok(outcome)
}

/// Default step guard: 100× the predicted mean total steps, at least 10⁶.
pub fn default_step_guard(state: &IntensityState, model: &TransitionModel) -> Result<u64, EngineError> {
    let predicted = analytic::mean_total_steps(state, model)?.total;
    let scaled = (STEP_GUARD_FACTOR * predicted).ceil();
    Ok(if scaled.is_finite() && scaled < u64::MAX as f64 {
        (scaled as u64).max(MIN_STEP_GUARD)
    } else {
        u64::MAX
    })
}

/// Run one trial until a single component holds all intensity, or until
/// `max_steps` steps (default: [`default_step_guard`]).
pub fn evolve(
    state: &IntensityState,
    model: &TransitionModel,
    seed: SeedSpec,
    max_steps: Option<u64>,
) -> Result<EvolutionResult, EngineError> {
    let guard = match max_steps {
        Some(0) => return Err(EngineError::ZeroStepGuard),
        Some(g) => g,
        None => default_step_guard(state, model)?,
    };
    Ok(evolve_guarded(state, model, seed, guard)?)
}

fn evolve_guarded(
    state: &IntensityState,
    model: &TransitionModel,
    seed: SeedSpec,
    guard: u64,
) -> Result<EvolutionResult, ModelError> {
    let mut walker = Walker::new(model, state.clone())?;
    let mut change_counts = vec![0u64; state.len()];
    let mut total_steps = 0u64;
    let mut nontrivial_steps = 0u64;
    let mut rng = seed.rng();
    while !walker.absorbed() && total_steps < guard {
        let t = walker.step(&mut rng);
        total_steps += 1;
        if !t.is_null() {
            nontrivial_steps += 1;
            change_counts[t.donor] += 1;
            change_counts[t.recipient] += 1;
        }
    }
    let termination = match walker.state.pure_component() {
        Some(winner) => Termination::Absorbed { winner },
        None => Termination::Unfinished {
            state: walker.state,
        },
    };
    Ok(EvolutionResult {
        termination,
        total_steps,
        nontrivial_steps,
        change_counts,
    })
}

/// Apply exactly `k` steps and return the resulting, generally mixed, state.
pub fn evolve_partial(
    state: &IntensityState,
    model: &TransitionModel,
    seed: SeedSpec,
    k: u64,
) -> Result<IntensityState, EngineError> {
    Ok(partial_run(state, model, seed, k)?.0)
}

/// Returns the final state and the number of nontrivial steps among the `k`.
fn partial_run(
    state: &IntensityState,
    model: &TransitionModel,
    seed: SeedSpec,
    k: u64,
) -> Result<(IntensityState, u64), ModelError> {
    let mut walker = Walker::new(model, state.clone())?;
    let mut rng = seed.rng();
    let mut nontrivial = 0u64;
    for _ in 0..k {
        // Pure states only ever take null steps.
        if walker.absorbed() {
            break;
        }
        if !walker.step(&mut rng).is_null() {
            nontrivial += 1;
        }
    }
    Ok((walker.state, nontrivial))
}

/// Outcome of one ensemble trial, as written to the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    /// The pure eigenstate reached, if any.
    pub winner: Option<usize>,
    pub total_steps: u64,
    pub nontrivial_steps: u64,
    /// Final configuration; kept in partial mode only.
    pub final_state: Option<Vec<u64>>,
}

impl TrialRecord {
    pub fn null_steps(&self) -> u64 {
        self.total_steps - self.nontrivial_steps
    }
}

/// A fully specified ensemble experiment.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub state: IntensityState,
    pub model: TransitionModel,
    pub trials: u64,
    pub master_seed: u64,
    pub mode: EnsembleMode,
    /// Step guard for absorption mode; `None` selects [`default_step_guard`].
    pub max_steps: Option<u64>,
}

impl Ensemble {
    pub fn new(state: IntensityState, model: TransitionModel, trials: u64, master_seed: u64) -> Self {
        Self {
            state,
            model,
            trials,
            master_seed,
            mode: EnsembleMode::ToAbsorption,
            max_steps: None,
        }
    }

    pub fn mode(mut self, mode: EnsembleMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn max_steps(mut self, max_steps: Option<u64>) -> Self {
        self.max_steps = max_steps;
        self
    }

    fn prepare(&self) -> Result<u64, EngineError> {
        if self.trials == 0 {
            return Err(EngineError::NoTrials);
        }
        self.model.supports(self.state.total())?;
        match (self.mode, self.max_steps) {
            (_, Some(0)) => Err(EngineError::ZeroStepGuard),
            (EnsembleMode::Partial { k }, _) => Ok(k),
            (EnsembleMode::ToAbsorption, Some(g)) => Ok(g),
            (EnsembleMode::ToAbsorption, None) => default_step_guard(&self.state, &self.model),
        }
    }

    /// Trial `index` under this ensemble's master seed.
    pub fn trial(&self, index: u64) -> Result<TrialRecord, EngineError> {
        let limit = self.prepare()?;
        Ok(self.trial_with(index, limit))
    }

    fn trial_with(&self, index: u64, limit: u64) -> TrialRecord {
        let seed = SeedSpec::new(self.master_seed, index);
        // Model coverage was checked in prepare().
        match self.mode {
            EnsembleMode::ToAbsorption => {
                let r = evolve_guarded(&self.state, &self.model, seed, limit).expect("model checked");
                TrialRecord {
                    trial: index,
                    winner: r.winner(),
                    total_steps: r.total_steps,
                    nontrivial_steps: r.nontrivial_steps,
                    final_state: None,
                }
            }
            EnsembleMode::Partial { k } => {
                let (s, nontrivial) = partial_run(&self.state, &self.model, seed, k).expect("model checked");
                TrialRecord {
                    trial: index,
                    winner: s.pure_component(),
                    total_steps: k,
                    nontrivial_steps: nontrivial,
                    final_state: Some(s.into_inner()),
                }
            }
        }
    }

    fn accumulator(&self) -> EnsembleAccumulator {
        EnsembleAccumulator::new(self.state.len(), self.mode)
    }

    /// Per-trial records in trial order.
    pub fn records(&self) -> Result<Vec<TrialRecord>, EngineError> {
        let limit = self.prepare()?;
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            Ok((0..self.trials)
                .into_par_iter()
                .map(|i| self.trial_with(i, limit))
                .collect())
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok((0..self.trials).map(|i| self.trial_with(i, limit)).collect())
        }
    }

    /// Summary from precomputed records.
    pub fn summarize(&self, records: &[TrialRecord]) -> EnsembleSummary {
        let mut acc = self.accumulator();
        for r in records {
            acc.push(r);
        }
        acc.finish()
    }

    /// Run the ensemble on the configured backend.
    pub fn run(&self) -> Result<EnsembleSummary, EngineError> {
        #[cfg(feature = "parallel")]
        {
            self.run_parallel()
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.run_sequential()
        }
    }

    pub fn run_sequential(&self) -> Result<EnsembleSummary, EngineError> {
        let limit = self.prepare()?;
        let mut acc = self.accumulator();
        for i in 0..self.trials {
            acc.push(&self.trial_with(i, limit));
        }
        Ok(acc.finish())
    }

    /// Rayon fold/reduce over trials. The accumulator is exact integer
    /// arithmetic, so the result does not depend on how work is split.
    #[cfg(feature = "parallel")]
    pub fn run_parallel(&self) -> Result<EnsembleSummary, EngineError> {
        use rayon::prelude::*;
        let limit = self.prepare()?;
        let acc = (0..self.trials)
            .into_par_iter()
            .fold(
                || self.accumulator(),
                |mut acc, i| {
                    acc.push(&self.trial_with(i, limit));
                    acc
                },
            )
            .reduce(|| self.accumulator(), EnsembleAccumulator::merge);
        Ok(acc.finish())
    }
}

/// Convenience wrapper over [`Ensemble::run`].
pub fn run_ensemble(
    state: &IntensityState,
    model: &TransitionModel,
    trials: u64,
    master_seed: u64,
    mode: EnsembleMode,
) -> Result<EnsembleSummary, EngineError> {
    Ensemble::new(state.clone(), model.clone(), trials, master_seed)
        .mode(mode)
        .run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn st(a: &[u64]) -> IntensityState {
        IntensityState::new(a.to_vec()).unwrap()
    }

    fn square(n: u64) -> TransitionModel {
        TransitionModel::custom_fn(n, |a| (a * a) as f64).unwrap()
    }

    #[test]
    fn absorbed_state_only_takes_null_steps() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        for model in [TransitionModel::uniform(), TransitionModel::linear(), square(10)] {
            let mut s = st(&[0, 10]);
            for _ in 0..20 {
                let t = step(&mut s, &model, &mut rng).unwrap();
                assert_eq!((t.donor, t.recipient), (1, 1));
                assert!(t.is_null());
                assert_eq!(s.components(), &[0, 10]);
            }
        }
    }

    #[test]
    fn uniform_one_one_outcome_frequencies() {
        // Four equally likely (donor, recipient) pairs: two null, one each way.
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(99);
        let n = 200_000;
        let (mut null, mut left, mut right) = (0u32, 0u32, 0u32);
        for _ in 0..n {
            let mut s = st(&[1, 1]);
            let t = step(&mut s, &TransitionModel::uniform(), &mut rng).unwrap();
            match s.components() {
                [1, 1] => {
                    assert!(t.is_null());
                    null += 1
                }
                [2, 0] => left += 1,
                [0, 2] => right += 1,
                other => panic!("impossible state {other:?}"),
            }
        }
        let f = |c: u32| c as f64 / n as f64;
        // 4-sigma bands for Bernoulli(1/2) and Bernoulli(1/4).
        assert!((f(null) - 0.5).abs() < 4.0 * (0.25f64 / n as f64).sqrt());
        assert!((f(left) - 0.25).abs() < 4.0 * (0.1875f64 / n as f64).sqrt());
        assert!((f(right) - 0.25).abs() < 4.0 * (0.1875f64 / n as f64).sqrt());
    }

    #[test]
    fn pure_start_finishes_immediately() {
        let r = evolve(&st(&[10, 0]), &TransitionModel::linear(), SeedSpec::new(1, 0), None).unwrap();
        assert_eq!(r.winner(), Some(0));
        assert_eq!(r.total_steps, 0);
        assert_eq!(r.nontrivial_steps, 0);
    }

    #[test]
    fn guard_yields_unfinished_with_partial_state() {
        let r = evolve(&st(&[50, 50]), &TransitionModel::uniform(), SeedSpec::new(3, 0), Some(10)).unwrap();
        assert_eq!(r.total_steps, 10);
        match r.termination {
            Termination::Unfinished { state } => assert_eq!(state.total(), 100),
            other => panic!("expected unfinished, got {other:?}"),
        }
        assert_eq!(
            evolve(&st(&[1, 1]), &TransitionModel::uniform(), SeedSpec::new(3, 0), Some(0)),
            Err(EngineError::ZeroStepGuard)
        );
    }

    #[test]
    fn partial_identities() {
        let s = st(&[4, 6]);
        let seed = SeedSpec::new(5, 2);
        assert_eq!(evolve_partial(&s, &TransitionModel::linear(), seed, 0).unwrap(), s);
        let pure = st(&[0, 10]);
        assert_eq!(evolve_partial(&pure, &TransitionModel::uniform(), seed, 1000).unwrap(), pure);
    }

    #[test]
    fn uncovered_custom_model_is_rejected() {
        let short = TransitionModel::custom_fn(3, |a| a as f64).unwrap();
        assert!(matches!(
            evolve(&st(&[2, 2]), &short, SeedSpec::new(0, 0), Some(10)),
            Err(EngineError::Model(ModelError::TableTooShort { .. }))
        ));
    }

    #[test]
    fn one_step_expectation_is_a_martingale() {
        // Enumerate (donor, recipient) pairs: E[a_i after] = a_i, and the up and
        // down probabilities of a_i both equal p_i (1 - p_i).
        for model in [TransitionModel::uniform(), TransitionModel::linear(), square(9)] {
            for a in crate::compositions::enumerate(3, 9).unwrap() {
                let s = st(&a);
                let p = model.probabilities(&s).unwrap();
                for i in 0..3 {
                    let (mut up, mut down, mut mean) = (0.0, 0.0, 0.0);
                    for d in 0..3 {
                        for r in 0..3 {
                            let w = p[d] * p[r];
                            let mut x = a[i] as f64;
                            if d != r && d == i {
                                x -= 1.0;
                                down += w;
                            }
                            if d != r && r == i {
                                x += 1.0;
                                up += w;
                            }
                            mean += w * x;
                        }
                    }
                    assert!((mean - a[i] as f64).abs() < 1e-12);
                    assert!((up - p[i] * (1.0 - p[i])).abs() < 1e-15);
                    assert!((down - p[i] * (1.0 - p[i])).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let e = Ensemble::new(st(&[3, 4, 5]), square(12), 500, 11);
        let seq = e.run_sequential().unwrap();
        assert_eq!(seq, e.run().unwrap());
        assert_eq!(seq, e.summarize(&e.records().unwrap()));
        let p = e.clone().mode(EnsembleMode::Partial { k: 7 });
        assert_eq!(p.run_sequential().unwrap(), p.run().unwrap());
    }

    #[test]
    fn ensemble_errors() {
        let e = Ensemble::new(st(&[1, 1]), TransitionModel::linear(), 0, 1);
        assert_eq!(e.run(), Err(EngineError::NoTrials));
        let e = Ensemble::new(st(&[1, 1]), TransitionModel::linear(), 5, 1).max_steps(Some(0));
        assert_eq!(e.run(), Err(EngineError::ZeroStepGuard));
    }

    #[test]
    fn guard_hits_are_counted_not_dropped() {
        let e = Ensemble::new(st(&[20, 20]), TransitionModel::uniform(), 50, 4).max_steps(Some(5));
        let s = e.run().unwrap();
        assert_eq!(s.unfinished, 50);
        assert_eq!(s.winner_counts.iter().sum::<u64>() + s.unfinished, 50);
    }

    fn model_and_state() -> impl Strategy<Value = (TransitionModel, IntensityState)> {
        (proptest::collection::vec(0u64..8, 2..5), 0usize..3)
            .prop_filter("positive total", |(a, _)| a.iter().sum::<u64>() > 0)
            .prop_map(|(a, which)| {
                let n = a.iter().sum();
                let model = match which {
                    0 => TransitionModel::uniform(),
                    1 => TransitionModel::linear(),
                    _ => square(n),
                };
                (model, IntensityState::new(a).unwrap())
            })
    }

    proptest! {
        #[test]
        fn steps_conserve_and_zeros_stay_zero((model, state) in model_and_state(), seed in any::<u64>()) {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
            let mut s = state.clone();
            let mut dead: Vec<bool> = s.components().iter().map(|&x| x == 0).collect();
            for _ in 0..200 {
                step(&mut s, &model, &mut rng).unwrap();
                prop_assert_eq!(s.components().iter().sum::<u64>(), state.total());
                for (i, &x) in s.components().iter().enumerate() {
                    if dead[i] { prop_assert_eq!(x, 0); }
                    if x == 0 { dead[i] = true; }
                }
            }
        }

        #[test]
        fn change_count_bookkeeping((model, state) in model_and_state(), seed in any::<u64>()) {
            let r = evolve(&state, &model, SeedSpec::new(seed, 0), None).unwrap();
            prop_assert!(r.nontrivial_steps <= r.total_steps);
            prop_assert_eq!(r.change_counts.iter().sum::<u64>(), 2 * r.nontrivial_steps);
            prop_assert!(r.winner().is_some());
        }
    }
}
