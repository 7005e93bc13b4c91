use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest admissible total intensity `N`.
pub const MAX_TOTAL: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("intensity vector is empty")]
    Empty,
    #[error("total intensity is zero")]
    ZeroTotal,
    #[error("total intensity {0} exceeds the limit of 2^31")]
    TooLarge(u128),
}

/// Integer intensity vector `(a_1, …, a_M)` with `Σ a_i = N`, in units of `ε = 1/N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct IntensityState {
    a: Vec<u64>,
    n: u64,
}

impl IntensityState {
    pub fn new(a: Vec<u64>) -> Result<Self, StateError> {
        if a.is_empty() {
            return Err(StateError::Empty);
        }
        let total: u128 = a.iter().map(|&x| u128::from(x)).sum();
        if total == 0 {
            return Err(StateError::ZeroTotal);
        }
        if total > u128::from(MAX_TOTAL) {
            return Err(StateError::TooLarge(total));
        }
        Ok(Self { a, n: total as u64 })
    }

    /// The pure state with all intensity on `component`.
    pub fn pure(m: usize, n: u64, component: usize) -> Result<Self, StateError> {
        let mut a = vec![0; m];
        if let Some(slot) = a.get_mut(component) {
            *slot = n;
        }
        Self::new(a)
    }

    #[inline]
    pub fn components(&self) -> &[u64] {
        &self.a
    }

    /// Total intensity `N`.
    #[inline]
    pub fn total(&self) -> u64 {
        self.n
    }

    /// Number of components `M`.
    #[inline]
    pub fn len(&self) -> usize {
        self.a.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn occupied(&self) -> usize {
        self.a.iter().filter(|&&x| x > 0).count()
    }

    /// Index of the surviving component if the state is pure.
    pub fn pure_component(&self) -> Option<usize> {
        self.a.iter().position(|&x| x == self.n)
    }

    /// Move one unit from `donor` to `recipient`. Caller guarantees `a[donor] > 0`.
    #[inline]
    pub(crate) fn transfer(&mut self, donor: usize, recipient: usize) {
        debug_assert!(self.a[donor] > 0);
        self.a[donor] -= 1;
        self.a[recipient] += 1;
    }

    pub fn into_inner(self) -> Vec<u64> {
        self.a
    }
}

impl TryFrom<Vec<u64>> for IntensityState {
    type Error = StateError;

    fn try_from(a: Vec<u64>) -> Result<Self, Self::Error> {
        Self::new(a)
    }
}

impl From<IntensityState> for Vec<u64> {
    fn from(s: IntensityState) -> Self {
        s.a
    }
}

impl fmt::Display for IntensityState {
    /// Space-separated components, e.g. `3 7`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.a.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derives_total() {
        let s = IntensityState::new(vec![3, 7]).unwrap();
        assert_eq!(s.total(), 10);
        assert_eq!(s.len(), 2);
        assert_eq!(s.occupied(), 2);
        assert_eq!(s.pure_component(), None);
        assert_eq!(s.to_string(), "3 7");
    }

    #[test]
    fn rejects_bad_vectors() {
        assert_eq!(IntensityState::new(vec![]), Err(StateError::Empty));
        assert_eq!(IntensityState::new(vec![0, 0]), Err(StateError::ZeroTotal));
        assert!(matches!(
            IntensityState::new(vec![MAX_TOTAL, 1]),
            Err(StateError::TooLarge(_))
        ));
        assert!(IntensityState::new(vec![MAX_TOTAL]).is_ok());
    }

    #[test]
    fn pure_states() {
        let s = IntensityState::pure(3, 5, 1).unwrap();
        assert_eq!(s.components(), &[0, 5, 0]);
        assert_eq!(s.pure_component(), Some(1));
    }
}
