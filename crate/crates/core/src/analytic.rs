//! Closed-form predictions.
//!
//! With `M = 2` a component holding `a` units moves up or down by one with
//! equal probability `p(a)(1 − p(a))` per step, where `p(a) = w(a) / (w(a) + w(N − a))`.
//! Its mean absorption time `v_a` therefore solves
//! `v_{a+1} = 2 v_a − v_{a−1} − q_a` with `q_a = 1 / (p(a)(1 − p(a)))`,
//! `v_0 = v_N = 0`, giving
//!
//! ```text
//! v_a = (a/N) Σ_{i=1}^{N−1} (N−i) q_i − Σ_{i=1}^{a−1} (a−i) q_i
//! ```
//!
//! For `M > 2` each component is set against the pooled remainder `N − a_i`;
//! total-step predictions built that way are labelled heuristic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, TransitionModel};
use crate::state::IntensityState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("q is undefined at the boundary intensity a = {a} (N = {n})")]
    Boundary { a: u64, n: u64 },
    #[error("intensity {a} exceeds total {n}")]
    OutOfRange { a: u64, n: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPrediction {
    /// Mean steps until each component reaches 0 or N.
    pub v: Vec<f64>,
    /// Mean total steps, null steps included: `½ Σ v_{a_i}`.
    pub total: f64,
    /// Mean intensity-changing steps: `Σ_{i<j} a_i a_j`.
    pub nontrivial: f64,
    /// True when more than two components are occupied and `total` rests on the pooling reduction.
    pub heuristic: bool,
}

/// Born probabilities `a_i / N`.
pub fn born_probabilities(state: &IntensityState) -> Vec<f64> {
    let n = state.total() as f64;
    state.components().iter().map(|&a| a as f64 / n).collect()
}

/// `q_a = 1 / (p(a)(1 − p(a)))` for `0 < a < N`.
pub fn q_value(model: &TransitionModel, a: u64, n: u64) -> Result<f64, AnalyticError> {
    if a == 0 || a >= n {
        return Err(AnalyticError::Boundary { a, n });
    }
    model.supports(n)?;
    Ok(q_unchecked(model, a, n))
}

#[inline]
fn q_unchecked(model: &TransitionModel, a: u64, n: u64) -> f64 {
    let p = model.pooled_probability(a, n);
    1.0 / (p * (1.0 - p))
}

/// Mean steps for a component starting at `a` to reach 0 or `n`.
pub fn mean_steps_single(model: &TransitionModel, a: u64, n: u64) -> Result<f64, AnalyticError> {
    if a > n {
        return Err(AnalyticError::OutOfRange { a, n });
    }
    model.supports(n)?;
    if a == 0 || a == n {
        return Ok(0.0);
    }
    let q: Vec<f64> = (1..n).map(|i| q_unchecked(model, i, n)).collect();
    let full: Vec<f64> = q.iter().enumerate().map(|(k, &qi)| (n - 1 - k as u64) as f64 * qi).collect();
    let v1 = pairwise_sum(&full) / n as f64;
    if a == 1 {
        return Ok(v1);
    }
    let head: Vec<f64> = q[..(a - 1) as usize]
        .iter()
        .enumerate()
        .map(|(k, &qi)| (a - 1 - k as u64) as f64 * qi)
        .collect();
    Ok(a as f64 * v1 - pairwise_sum(&head))
}

/// `v_a` for every `a = 0..=n`.
pub fn mean_steps_profile(model: &TransitionModel, n: u64) -> Result<Vec<f64>, AnalyticError> {
    (0..=n).map(|a| mean_steps_single(model, a, n)).collect()
}

/// Mean total steps `½ Σ_i v_{a_i}`, together with the per-component `v` and the nontrivial count.
pub fn mean_total_steps(state: &IntensityState, model: &TransitionModel) -> Result<StepPrediction, AnalyticError> {
    let n = state.total();
    let v = state
        .components()
        .iter()
        .map(|&a| mean_steps_single(model, a, n))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StepPrediction {
        total: 0.5 * pairwise_sum(&v),
        nontrivial: mean_nontrivial_steps(state),
        heuristic: state.occupied() > 2,
        v,
    })
}

/// `Σ_{i<j} a_i a_j`, model independent.
pub fn mean_nontrivial_steps(state: &IntensityState) -> f64 {
    let n = u128::from(state.total());
    let twice: u128 = state
        .components()
        .iter()
        .map(|&a| u128::from(a) * (n - u128::from(a)))
        .sum();
    (twice / 2) as f64
}

/// `(M − 1) N² / (2M)`, the largest nontrivial-step mean, reached at `a_i = N/M`.
pub fn max_nontrivial(m: usize, n: u64) -> f64 {
    let (m, n) = (m as f64, n as f64);
    (m - 1.0) * n * n / (2.0 * m)
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let (l, r) = xs.split_at(xs.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(a: &[u64]) -> IntensityState {
        IntensityState::new(a.to_vec()).unwrap()
    }

    fn square(n: u64) -> TransitionModel {
        TransitionModel::custom_fn(n, |a| (a * a) as f64).unwrap()
    }

    #[test]
    fn born() {
        assert_eq!(born_probabilities(&st(&[3, 7])), vec![0.3, 0.7]);
        assert_eq!(born_probabilities(&st(&[10, 0])), vec![1.0, 0.0]);
        let p = born_probabilities(&st(&[2, 2, 2]));
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-16));
    }

    #[test]
    fn q_values() {
        for a in 1..10 {
            assert_eq!(q_value(&TransitionModel::uniform(), a, 10).unwrap(), 4.0);
        }
        assert!((q_value(&TransitionModel::linear(), 1, 4).unwrap() - 16.0 / 3.0).abs() < 1e-14);
        assert_eq!(q_value(&TransitionModel::linear(), 2, 4).unwrap(), 4.0);
        assert_eq!(
            q_value(&TransitionModel::linear(), 0, 4),
            Err(AnalyticError::Boundary { a: 0, n: 4 })
        );
        assert_eq!(
            q_value(&TransitionModel::linear(), 4, 4),
            Err(AnalyticError::Boundary { a: 4, n: 4 })
        );
    }

    #[test]
    fn mean_steps_values() {
        assert_eq!(mean_steps_single(&TransitionModel::uniform(), 3, 10).unwrap(), 42.0);
        assert_eq!(mean_steps_single(&TransitionModel::linear(), 0, 10).unwrap(), 0.0);
        assert_eq!(mean_steps_single(&TransitionModel::linear(), 10, 10).unwrap(), 0.0);
        // q = (16/3, 4, 16/3): v_2 = ½(3·16/3 + 2·4 + 16/3) − 16/3 = 28/3
        let v2 = mean_steps_single(&TransitionModel::linear(), 2, 4).unwrap();
        assert!((v2 - 28.0 / 3.0).abs() < 1e-13);
        assert!(matches!(
            mean_steps_single(&TransitionModel::linear(), 5, 4),
            Err(AnalyticError::OutOfRange { .. })
        ));
    }

    #[test]
    fn totals() {
        let p = mean_total_steps(&st(&[3, 7]), &TransitionModel::uniform()).unwrap();
        assert_eq!(p.total, 42.0);
        assert_eq!(p.nontrivial, 21.0);
        assert!(!p.heuristic);
        let p = mean_total_steps(&st(&[2, 2]), &TransitionModel::linear()).unwrap();
        assert!((p.total - 28.0 / 3.0).abs() < 1e-13);
        let p = mean_total_steps(&st(&[7, 0, 0]), &square(7)).unwrap();
        assert_eq!((p.total, p.nontrivial), (0.0, 0.0));
        assert!(mean_total_steps(&st(&[1, 2, 3]), &TransitionModel::linear()).unwrap().heuristic);
        assert!(!mean_total_steps(&st(&[1, 0, 3]), &TransitionModel::linear()).unwrap().heuristic);
    }

    #[test]
    fn nontrivial_counts() {
        assert_eq!(mean_nontrivial_steps(&st(&[3, 7])), 21.0);
        assert_eq!(mean_nontrivial_steps(&st(&[3, 3, 3])), 27.0);
        assert_eq!(mean_nontrivial_steps(&st(&[9, 0, 0])), 0.0);
        assert_eq!(max_nontrivial(2, 10), 25.0);
        assert_eq!(max_nontrivial(3, 9), 27.0);
        assert_eq!(max_nontrivial(1, 17), 0.0);
    }

    #[test]
    fn uniform_closed_form() {
        for n in 1..60u64 {
            for a in 0..=n {
                let v = mean_steps_single(&TransitionModel::uniform(), a, n).unwrap();
                assert_eq!(v, (2 * a * (n - a)) as f64);
            }
        }
    }

    #[test]
    fn recurrence_holds() {
        for model in [TransitionModel::uniform(), TransitionModel::linear(), square(40)] {
            for n in 2..=40u64 {
                let v = mean_steps_profile(&model, n).unwrap();
                for a in 1..n {
                    let q = q_value(&model, a, n).unwrap();
                    let lhs = v[a as usize + 1];
                    let rhs = 2.0 * v[a as usize] - v[a as usize - 1] - q;
                    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
                    assert!((lhs - rhs).abs() <= 1e-9 * scale, "n={n} a={a}");
                }
            }
        }
    }

    #[test]
    fn profile_is_symmetric_at_two_components() {
        let model = square(25);
        let v = mean_steps_profile(&model, 25).unwrap();
        for a in 0..=25usize {
            assert!((v[a] - v[25 - a]).abs() <= 1e-10 * v[a].max(1.0));
        }
    }

    proptest! {
        #[test]
        fn nontrivial_is_permutation_invariant(mut a in proptest::collection::vec(0u64..30, 1..6), rot in 0usize..6) {
            prop_assume!(a.iter().sum::<u64>() > 0);
            let x = mean_nontrivial_steps(&IntensityState::new(a.clone()).unwrap());
            let k = rot % a.len();
            a.rotate_left(k);
            let y = mean_nontrivial_steps(&IntensityState::new(a.clone()).unwrap());
            prop_assert_eq!(x, y);
            // agrees with the pairwise-product form
            let mut pairs = 0u64;
            for i in 0..a.len() { for j in i + 1..a.len() { pairs += a[i] * a[j]; } }
            prop_assert_eq!(x, pairs as f64);
        }

        #[test]
        fn born_sums_to_one(a in proptest::collection::vec(0u64..1000, 1..8)) {
            prop_assume!(a.iter().sum::<u64>() > 0);
            let p = born_probabilities(&IntensityState::new(a).unwrap());
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
