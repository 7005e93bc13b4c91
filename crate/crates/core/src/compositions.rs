//! Weak compositions of `N` into `M` parts, the state space of the exchange process.

use thiserror::Error;

/// Largest state space the exhaustive routines will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnumerationError {
    #[error("state space has {count} states, above the enumeration limit of {limit}")]
    TooLarge { count: u128, limit: u128 },
    #[error("need at least one component and positive total (got M={m}, N={n})")]
    Degenerate { m: usize, n: u64 },
}

/// `C(N+M-1, M-1)`, saturating at `u128::MAX`.
pub fn count(m: usize, n: u64) -> u128 {
    if m == 0 {
        return 0;
    }
    let k = (m - 1) as u128;
    let top = u128::from(n) + k;
    // C(top, k) built up incrementally; each partial product is itself a binomial.
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = match acc.checked_mul(top - k + i) {
            Some(x) => x / i,
            None => return u128::MAX,
        };
    }
    acc
}

pub fn check_guard(m: usize, n: u64) -> Result<u128, EnumerationError> {
    if m == 0 || n == 0 {
        return Err(EnumerationError::Degenerate { m, n });
    }
    let c = count(m, n);
    if c > ENUMERATION_LIMIT {
        return Err(EnumerationError::TooLarge {
            count: c,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(c)
}

/// All compositions in lexicographically descending order, `(N,0,…)` first.
pub fn enumerate(m: usize, n: u64) -> Result<Vec<Vec<u64>>, EnumerationError> {
    let c = check_guard(m, n)?;
    let mut out = Vec::with_capacity(c as usize);
    let mut cur = vec![0u64; m];
    fill(&mut cur, 0, n, &mut out);
    debug_assert_eq!(out.len() as u128, c);
    Ok(out)
}

fn fill(cur: &mut [u64], pos: usize, remaining: u64, out: &mut Vec<Vec<u64>>) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining;
        out.push(cur.to_vec());
        return;
    }
    for x in (0..=remaining).rev() {
        cur[pos] = x;
        fill(cur, pos + 1, remaining - x, out);
    }
    cur[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_binomials() {
        assert_eq!(count(2, 2), 3);
        assert_eq!(count(3, 2), 6);
        assert_eq!(count(1, 5), 1);
        assert_eq!(count(3, 10), 66);
    }

    #[test]
    fn enumeration_is_ordered_and_complete() {
        let s = enumerate(2, 2).unwrap();
        assert_eq!(s, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);

        let s = enumerate(3, 4).unwrap();
        assert_eq!(s.len(), 15);
        assert!(s.windows(2).all(|w| w[0] > w[1]));
        assert!(s.iter().all(|c| c.iter().sum::<u64>() == 4));
    }

    #[test]
    fn brute_force_count_agrees() {
        // Count compositions of n into 3 parts by nested loops.
        for n in 1..12u64 {
            let mut brute = 0u128;
            for x in 0..=n {
                for _y in 0..=(n - x) {
                    brute += 1;
                }
            }
            assert_eq!(count(3, n), brute);
        }
    }

    #[test]
    fn guard_refuses_with_count() {
        let err = enumerate(10, 100).unwrap_err();
        match err {
            EnumerationError::TooLarge { count: c, .. } => assert_eq!(c, count(10, 100)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
