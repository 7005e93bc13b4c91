//! Exact ground truth by enumeration of the finite chain.
//!
//! The state space is every composition of `N` into `M` parts. Each row of the
//! one-step transition matrix sums the probability of all (donor, recipient)
//! pairs, with the null mass `Σ p_i²` on the diagonal. Absorption
//! probabilities and expected step counts come from the standard
//! absorbing-chain systems on the transient block `Q`:
//!
//! ```text
//! (I − Q) B = R            absorption into each pure state
//! (I − Q) t = 1            expected steps, nulls included
//! (I − Q) k = 1 − diag(Q)  expected intensity-changing steps
//! ```

pub mod solver;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{self, AnalyticError};
use crate::compositions::{self, EnumerationError};
use crate::model::{ModelError, TransitionModel};
use crate::state::IntensityState;

pub use solver::{SolveError, SolverKind, SolverUsed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Enumeration(#[from] EnumerationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("internal inconsistency in the transient system: {0}")]
    Solve(#[from] SolveError),
    #[error("chain has {chain} rows but the state space has {space} states")]
    Mismatch { chain: usize, space: usize },
    #[error("operation needs M = 2, state space has M = {0}")]
    NotTwoComponent(usize),
}

/// All compositions of `N` into `M` parts, lexicographically descending.
#[derive(Debug, Clone)]
pub struct StateSpace {
    m: usize,
    n: u64,
    states: Vec<Vec<u64>>,
    index: HashMap<Vec<u64>, usize>,
}

impl StateSpace {
    pub fn enumerate(m: usize, n: u64) -> Result<Self, OracleError> {
        let states = compositions::enumerate(m, n)?;
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self { m, n, states, index })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<u64>] {
        &self.states
    }

    pub fn index_of(&self, state: &[u64]) -> Option<usize> {
        self.index.get(state).copied()
    }

    /// Component holding everything, if state `i` is pure.
    pub fn pure_component(&self, i: usize) -> Option<usize> {
        let s = &self.states[i];
        s.iter().position(|&x| x == self.n)
    }
}

/// Enumerate the state space; refuses above [`compositions::ENUMERATION_LIMIT`].
pub fn enumerate_states(m: usize, n: u64) -> Result<StateSpace, OracleError> {
    StateSpace::enumerate(m, n)
}

/// Sparse row-stochastic one-step transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Per state, `(target, probability)` with targets ascending.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Chain {
    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|e| e.1).sum()
    }

    /// Probability of staying put, i.e. the null-step mass.
    pub fn self_loop(&self, i: usize) -> f64 {
        self.rows[i]
            .iter()
            .find(|e| e.0 == i)
            .map_or(0.0, |e| e.1)
    }
}

/// Build the transition matrix of `model` on `space`.
pub fn build_chain(model: &TransitionModel, space: &StateSpace) -> Result<Chain, OracleError> {
    model.supports(space.n())?;
    let row = |s: &Vec<u64>| -> Result<Vec<(usize, f64)>, OracleError> {
        let i = space.index_of(s).expect("state from this space");
        let p = model.probabilities(&IntensityState::new(s.clone()).expect("valid composition"))?;
        let null: f64 = p.iter().map(|x| x * x).sum();
        let mut entries = vec![(i, null)];
        let mut target = s.clone();
        for (d, &pd) in p.iter().enumerate() {
            if pd == 0.0 {
                continue;
            }
            for (r, &pr) in p.iter().enumerate() {
                if r == d || pr == 0.0 {
                    continue;
                }
                target[d] -= 1;
                target[r] += 1;
                entries.push((space.index_of(&target).expect("move stays in space"), pd * pr));
                target[d] += 1;
                target[r] -= 1;
            }
        }
        entries.sort_by_key(|e| e.0);
        Ok(entries)
    };
    #[cfg(feature = "parallel")]
    let rows = {
        use rayon::prelude::*;
        space.states().par_iter().map(row).collect::<Result<Vec<_>, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let rows = space.states().iter().map(row).collect::<Result<Vec<_>, _>>()?;
    Ok(Chain { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSolution {
    /// `absorb[s][j]`: probability that state `s` ends in eigenstate `j`.
    pub absorb: Vec<Vec<f64>>,
    /// Expected steps to absorption, null steps included.
    pub expected_total: Vec<f64>,
    /// Expected intensity-changing steps to absorption.
    pub expected_nontrivial: Vec<f64>,
    pub solver: Option<SolverUsed>,
    /// Scaled residual of the transient solve (0 when nothing was transient).
    pub residual: f64,
}

/// Solve for absorption probabilities and both step expectations at once.
pub fn solve_chain(chain: &Chain, space: &StateSpace, kind: SolverKind) -> Result<ChainSolution, OracleError> {
    if chain.rows.len() != space.len() {
        return Err(OracleError::Mismatch {
            chain: chain.rows.len(),
            space: space.len(),
        });
    }
    let m = space.m();
    let total = space.len();
    let pure: Vec<Option<usize>> = (0..total).map(|i| space.pure_component(i)).collect();
    let transient: Vec<usize> = (0..total).filter(|&i| pure[i].is_none()).collect();
    let mut position = vec![usize::MAX; total];
    for (t, &i) in transient.iter().enumerate() {
        position[i] = t;
    }

    let nt = transient.len();
    // Right-hand sides, column-major: m absorption columns, then steps, then non-null steps.
    let k = m + 2;
    let mut rhs = vec![0.0; nt * k];
    let mut rows = Vec::with_capacity(nt);
    for (t, &i) in transient.iter().enumerate() {
        let mut row = Vec::with_capacity(chain.rows[i].len());
        let mut moving = 0.0;
        for &(j, p) in &chain.rows[i] {
            if j != i {
                moving += p;
            }
            match pure[j] {
                Some(c) => rhs[c * nt + t] += p,
                None => {
                    let u = position[j];
                    let v = if u == t { 1.0 - p } else { -p };
                    row.push((u, v));
                }
            }
        }
        rhs[m * nt + t] = 1.0;
        rhs[(m + 1) * nt + t] = moving;
        row.sort_by_key(|e| e.0);
        rows.push(row);
    }

    let (x, solver, residual) = if nt == 0 {
        (Vec::new(), None, 0.0)
    } else {
        let s = solver::solve(&solver::SparseRows { rows }, &rhs, k, kind)?;
        (s.x, Some(s.solver), s.residual)
    };

    let mut absorb = vec![vec![0.0; m]; total];
    let mut expected_total = vec![0.0; total];
    let mut expected_nontrivial = vec![0.0; total];
    for i in 0..total {
        match pure[i] {
            Some(c) => absorb[i][c] = 1.0,
            None => {
                let t = position[i];
                for c in 0..m {
                    absorb[i][c] = x[c * nt + t];
                }
                expected_total[i] = x[m * nt + t];
                expected_nontrivial[i] = x[(m + 1) * nt + t];
            }
        }
    }
    Ok(ChainSolution {
        absorb,
        expected_total,
        expected_nontrivial,
        solver,
        residual,
    })
}

/// Absorption probabilities `[state][eigenstate]`.
pub fn absorption_probabilities(chain: &Chain, space: &StateSpace) -> Result<Vec<Vec<f64>>, OracleError> {
    Ok(solve_chain(chain, space, SolverKind::Auto)?.absorb)
}

/// Expected steps to absorption; `count_nulls = false` counts only intensity-changing steps.
pub fn expected_steps(chain: &Chain, space: &StateSpace, count_nulls: bool) -> Result<Vec<f64>, OracleError> {
    let s = solve_chain(chain, space, SolverKind::Auto)?;
    Ok(if count_nulls {
        s.expected_total
    } else {
        s.expected_nontrivial
    })
}

/// `max |P(a+1) − 2P(a) + P(a−1)|` over `0 < a < N`, with `P(a)` the probability
/// that `(a, N − a)` ends in the first eigenstate.
pub fn second_difference_check(solution: &ChainSolution, space: &StateSpace) -> Result<f64, OracleError> {
    if space.m() != 2 {
        return Err(OracleError::NotTwoComponent(space.m()));
    }
    let n = space.n();
    let p = |a: u64| solution.absorb[space.index_of(&[a, n - a]).expect("in space")][0];
    Ok((1..n)
        .map(|a| (p(a + 1) - 2.0 * p(a) + p(a - 1)).abs())
        .fold(0.0, f64::max))
}

/// Largest deviation of the oracle from the analytic predictions over all states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulaCheck {
    /// `max |absorb[s][i] − a_i/N|`.
    pub born_abs: f64,
    /// `max |expected_nontrivial − Σ_{i<j} a_i a_j|`.
    pub nontrivial_abs: f64,
    /// `max |expected_total − ½ Σ v_{a_i}| / max(1, expected_total)`.
    pub total_rel: f64,
}

pub fn compare_with_formulas(
    solution: &ChainSolution,
    space: &StateSpace,
    model: &TransitionModel,
) -> Result<FormulaCheck, OracleError> {
    let mut check = FormulaCheck {
        born_abs: 0.0,
        nontrivial_abs: 0.0,
        total_rel: 0.0,
    };
    for (i, s) in space.states().iter().enumerate() {
        let state = IntensityState::new(s.clone()).expect("valid composition");
        let born = analytic::born_probabilities(&state);
        for (x, y) in solution.absorb[i].iter().zip(&born) {
            check.born_abs = check.born_abs.max((x - y).abs());
        }
        let pred = analytic::mean_total_steps(&state, model)?;
        check.nontrivial_abs = check
            .nontrivial_abs
            .max((solution.expected_nontrivial[i] - pred.nontrivial).abs());
        let t = solution.expected_total[i];
        check.total_rel = check.total_rel.max((t - pred.total).abs() / t.abs().max(1.0));
    }
    Ok(check)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: u64) -> TransitionModel {
        TransitionModel::custom_fn(n, |a| (a * a) as f64).unwrap()
    }

    #[test]
    fn enumeration_examples() {
        let s = enumerate_states(2, 2).unwrap();
        assert_eq!(s.states(), &[vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(enumerate_states(3, 2).unwrap().len(), 6);
        assert_eq!(enumerate_states(1, 5).unwrap().len(), 1);
        for (i, st) in s.states().iter().enumerate() {
            assert_eq!(s.index_of(st), Some(i));
        }
        assert!(matches!(
            enumerate_states(8, 200),
            Err(OracleError::Enumeration(EnumerationError::TooLarge { .. }))
        ));
    }

    #[test]
    fn uniform_one_one_row() {
        let s = enumerate_states(2, 2).unwrap();
        let c = build_chain(&TransitionModel::uniform(), &s).unwrap();
        assert_eq!(c.rows[1], vec![(0, 0.25), (1, 0.5), (2, 0.25)]);
        assert_eq!(c.rows[0], vec![(0, 1.0)]);
    }

    #[test]
    fn rows_are_stochastic_and_pure_states_absorb() {
        for model in [TransitionModel::uniform(), TransitionModel::linear(), square(10)] {
            for m in 1..=4 {
                let s = enumerate_states(m, 10 - 2 * (m as u64 - 1).min(3)).unwrap();
                let c = build_chain(&model, &s).unwrap();
                for i in 0..s.len() {
                    assert!((c.row_sum(i) - 1.0).abs() < 1e-12);
                    if s.pure_component(i).is_some() {
                        assert_eq!(c.rows[i], vec![(i, 1.0)]);
                    }
                }
            }
        }
        let s = enumerate_states(2, 10).unwrap();
        let c = build_chain(&TransitionModel::linear(), &s).unwrap();
        assert_eq!(c.self_loop(s.index_of(&[0, 10]).unwrap()), 1.0);
    }

    #[test]
    fn linear_three_component_born() {
        let s = enumerate_states(3, 6).unwrap();
        let c = build_chain(&TransitionModel::linear(), &s).unwrap();
        let b = absorption_probabilities(&c, &s).unwrap();
        let row = &b[s.index_of(&[1, 2, 3]).unwrap()];
        for (x, y) in row.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(b[s.index_of(&[0, 6, 0]).unwrap()], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_component_steps() {
        let s = enumerate_states(2, 10).unwrap();
        let c = build_chain(&TransitionModel::uniform(), &s).unwrap();
        let i = s.index_of(&[3, 7]).unwrap();
        assert!((expected_steps(&c, &s, true).unwrap()[i] - 42.0).abs() < 1e-10);
        assert!((expected_steps(&c, &s, false).unwrap()[i] - 21.0).abs() < 1e-10);

        let s = enumerate_states(2, 4).unwrap();
        let c = build_chain(&TransitionModel::linear(), &s).unwrap();
        let t = expected_steps(&c, &s, true).unwrap();
        assert!((t[s.index_of(&[2, 2]).unwrap()] - 28.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn solvers_agree() {
        let s = enumerate_states(3, 9).unwrap();
        let c = build_chain(&square(9), &s).unwrap();
        let d = solve_chain(&c, &s, SolverKind::Direct).unwrap();
        let g = solve_chain(&c, &s, SolverKind::Iterative).unwrap();
        assert_eq!(d.solver, Some(SolverUsed::Direct));
        assert_eq!(g.solver, Some(SolverUsed::Iterative));
        for i in 0..s.len() {
            assert!((d.expected_total[i] - g.expected_total[i]).abs() < 1e-8 * d.expected_total[i].max(1.0));
            for j in 0..3 {
                assert!((d.absorb[i][j] - g.absorb[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn second_differences_vanish() {
        for model in [TransitionModel::uniform(), TransitionModel::linear()] {
            let s = enumerate_states(2, 10).unwrap();
            let sol = solve_chain(&build_chain(&model, &s).unwrap(), &s, SolverKind::Auto).unwrap();
            assert!(second_difference_check(&sol, &s).unwrap() <= 1e-10);
        }
        let s = enumerate_states(2, 2).unwrap();
        let sol = solve_chain(&build_chain(&TransitionModel::linear(), &s).unwrap(), &s, SolverKind::Auto).unwrap();
        assert!(second_difference_check(&sol, &s).unwrap() < 1e-15);
        let s3 = enumerate_states(3, 2).unwrap();
        let sol3 = solve_chain(&build_chain(&TransitionModel::linear(), &s3).unwrap(), &s3, SolverKind::Auto).unwrap();
        assert_eq!(second_difference_check(&sol3, &s3), Err(OracleError::NotTwoComponent(3)));
    }

    #[test]
    fn single_component_space() {
        let s = enumerate_states(1, 5).unwrap();
        let sol = solve_chain(&build_chain(&TransitionModel::linear(), &s).unwrap(), &s, SolverKind::Auto).unwrap();
        assert_eq!(sol.absorb, vec![vec![1.0]]);
        assert_eq!(sol.solver, None);
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let s = enumerate_states(2, 3).unwrap();
        let c = build_chain(&TransitionModel::linear(), &enumerate_states(2, 2).unwrap()).unwrap();
        assert!(matches!(solve_chain(&c, &s, SolverKind::Auto), Err(OracleError::Mismatch { .. })));
    }
}
