//! Linear solvers for `(I − Q) X = B` on the transient block of an absorbing chain.
//!
//! `I − Q` is a nonsingular M-matrix whenever every transient state can reach
//! absorption, so Gaussian elimination needs no pivoting. The direct solver
//! is a profile (envelope) LU: row `i` of `L` and column `i` of `U` are stored
//! densely from the first structurally nonzero index `first[i]` up to the
//! diagonal. The iterative solver is Gauss–Seidel.
//!
//! Both use plain scalar arithmetic in a fixed order, so results are
//! reproducible bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Residual target, relative to `max(1, ‖x‖∞)` per right-hand side.
pub const SOLVER_TOLERANCE: f64 = 1e-12;
/// Largest transient block factorized directly.
pub const DIRECT_LIMIT: usize = 20_000;
/// Largest profile (entries of `L` plus `U`) factorized directly.
pub const PROFILE_LIMIT: usize = 25_000_000;
pub const DEFAULT_MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("zero or non-finite pivot at row {row}: transient block is singular")]
    Singular { row: usize },
    #[error("Gauss-Seidel stopped after {sweeps} sweeps with residual {residual:e}")]
    NotConverged { sweeps: usize, residual: f64 },
    #[error("residual {residual:e} after direct solve exceeds tolerance")]
    Inaccurate { residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Direct when the block and its profile fit the limits, iterative otherwise.
    #[default]
    Auto,
    Direct,
    Iterative,
}

/// Square sparse matrix in row-major `(column, value)` lists, columns ascending.
#[derive(Debug, Clone)]
pub struct SparseRows {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// `first[i] = min { j ≤ i : A[i][j] ≠ 0 or A[j][i] ≠ 0 }`.
    fn profile(&self) -> Vec<usize> {
        let n = self.dim();
        let mut first: Vec<usize> = (0..n).collect();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, _) in row {
                if j < i {
                    first[i] = first[i].min(j);
                } else if j > i {
                    first[j] = first[j].min(i);
                }
            }
        }
        first
    }

    pub fn profile_size(&self) -> usize {
        self.profile()
            .iter()
            .enumerate()
            .map(|(i, &f)| 2 * (i - f) + 1)
            .sum()
    }

    /// `R = B − A X` for column-major `x` and `b` with `k` columns.
    fn residual(&self, x: &[f64], b: &[f64], k: usize) -> Vec<f64> {
        let n = self.dim();
        let mut r = b.to_vec();
        for c in 0..k {
            for (i, row) in self.rows.iter().enumerate() {
                let mut s = 0.0;
                for &(j, v) in row {
                    s += v * x[c * n + j];
                }
                r[c * n + i] -= s;
            }
        }
        r
    }

    /// Largest residual over columns, each scaled by `max(1, ‖x_c‖∞)`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64], k: usize) -> f64 {
        let n = self.dim();
        let r = self.residual(x, b, k);
        (0..k)
            .map(|c| {
                let xs = &x[c * n..(c + 1) * n];
                let rs = &r[c * n..(c + 1) * n];
                let scale = xs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                rs.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverUsed {
    Direct,
    Iterative,
}

#[derive(Debug, Clone)]
pub struct Solved {
    /// Column-major solution, `k` columns of length `n`.
    pub x: Vec<f64>,
    pub solver: SolverUsed,
    pub residual: f64,
}

pub fn solve(a: &SparseRows, b: &[f64], k: usize, kind: SolverKind) -> Result<Solved, SolveError> {
    let direct = match kind {
        SolverKind::Direct => true,
        SolverKind::Iterative => false,
        SolverKind::Auto => a.dim() <= DIRECT_LIMIT && a.profile_size() <= PROFILE_LIMIT,
    };
    if direct {
        let lu = ProfileLu::factor(a)?;
        let mut x = lu.solve(b, k);
        // One step of iterative refinement.
        let r = a.residual(&x, b, k);
        let dx = lu.solve(&r, k);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        let residual = a.relative_residual(&x, b, k);
        if residual.is_nan() || residual > SOLVER_TOLERANCE {
            return Err(SolveError::Inaccurate { residual });
        }
        Ok(Solved {
            x,
            solver: SolverUsed::Direct,
            residual,
        })
    } else {
        let (x, residual) = gauss_seidel(a, b, k, DEFAULT_MAX_SWEEPS)?;
        Ok(Solved {
            x,
            solver: SolverUsed::Iterative,
            residual,
        })
    }
}

/// Envelope LU factors, `A = L U` with unit-diagonal `L`.
pub struct ProfileLu {
    first: Vec<usize>,
    /// Row `i` of `L` over columns `first[i]..i`, at `offset[i]`.
    lower: Vec<f64>,
    /// Column `i` of `U` over rows `first[i]..=i`, at `offset_u[i]`.
    upper: Vec<f64>,
    offset: Vec<usize>,
    offset_u: Vec<usize>,
}

impl ProfileLu {
    pub fn factor(a: &SparseRows) -> Result<Self, SolveError> {
        let n = a.dim();
        let first = a.profile();
        let mut offset = Vec::with_capacity(n + 1);
        let mut offset_u = Vec::with_capacity(n + 1);
        let (mut lo, mut up) = (0usize, 0usize);
        for (i, &fi) in first.iter().enumerate() {
            offset.push(lo);
            offset_u.push(up);
            lo += i - fi;
            up += i - fi + 1;
        }
        offset.push(lo);
        offset_u.push(up);
        let mut lower = vec![0.0; lo];
        let mut upper = vec![0.0; up];

        // Scatter A: lower triangle into L rows, upper triangle (with diagonal) into U columns.
        for (i, row) in a.rows.iter().enumerate() {
            for &(j, v) in row {
                if j < i {
                    lower[offset[i] + (j - first[i])] = v;
                } else {
                    upper[offset_u[j] + (i - first[j])] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                // L[i][j] = (A[i][j] − Σ_p L[i][p] U[p][j]) / U[j][j]
                let mut s = lower[offset[i] + (j - fi)];
                for p in start..j {
                    s -= lower[offset[i] + (p - fi)] * upper[offset_u[j] + (p - fj)];
                }
                let ujj = upper[offset_u[j] + (j - fj)];
                lower[offset[i] + (j - fi)] = s / ujj;
                // U[j][i] = A[j][i] − Σ_p L[j][p] U[p][i]
                let mut s = upper[offset_u[i] + (j - fi)];
                for p in start..j {
                    s -= lower[offset[j] + (p - fj)] * upper[offset_u[i] + (p - fi)];
                }
                upper[offset_u[i] + (j - fi)] = s;
            }
            let mut d = upper[offset_u[i] + (i - fi)];
            for p in fi..i {
                d -= lower[offset[i] + (p - fi)] * upper[offset_u[i] + (p - fi)];
            }
            if !(d.is_finite() && d != 0.0) {
                return Err(SolveError::Singular { row: i });
            }
            upper[offset_u[i] + (i - fi)] = d;
        }
        Ok(Self {
            first,
            lower,
            upper,
            offset,
            offset_u,
        })
    }

    /// Solve for `k` column-major right-hand sides.
    pub fn solve(&self, b: &[f64], k: usize) -> Vec<f64> {
        let n = self.first.len();
        let mut x = b.to_vec();
        for c in 0..k {
            let y = &mut x[c * n..(c + 1) * n];
            for i in 0..n {
                let fi = self.first[i];
                let row = &self.lower[self.offset[i]..self.offset[i] + (i - fi)];
                let s: f64 = row.iter().zip(&y[fi..i]).map(|(l, yp)| l * yp).sum();
                y[i] -= s;
            }
            for j in (0..n).rev() {
                let fj = self.first[j];
                let col = &self.upper[self.offset_u[j]..self.offset_u[j + 1]];
                y[j] /= col[j - fj];
                let xj = y[j];
                for p in fj..j {
                    y[p] -= col[p - fj] * xj;
                }
            }
        }
        x
    }
}

/// Gauss–Seidel sweeps until the scaled residual reaches [`SOLVER_TOLERANCE`].
pub fn gauss_seidel(a: &SparseRows, b: &[f64], k: usize, max_sweeps: usize) -> Result<(Vec<f64>, f64), SolveError> {
    let n = a.dim();
    let mut diag = vec![0.0; n];
    for (i, row) in a.rows.iter().enumerate() {
        for &(j, v) in row {
            if j == i {
                diag[i] = v;
            }
        }
        if !(diag[i].is_finite() && diag[i] != 0.0) {
            return Err(SolveError::Singular { row: i });
        }
    }
    let mut x = vec![0.0; n * k];
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        for c in 0..k {
            let xs = &mut x[c * n..(c + 1) * n];
            for (i, row) in a.rows.iter().enumerate() {
                let mut s = b[c * n + i];
                for &(j, v) in row {
                    if j != i {
                        s -= v * xs[j];
                    }
                }
                xs[i] = s / diag[i];
            }
        }
        // The residual costs one extra product; check it periodically.
        if sweep % 16 == 0 || sweep == max_sweeps {
            residual = a.relative_residual(&x, b, k);
            if residual <= SOLVER_TOLERANCE {
                return Ok((x, residual));
            }
        }
    }
    Err(SolveError::NotConverged {
        sweeps: max_sweeps,
        residual,
    })
}
