//! Maximum-weight perfect matching on a square matrix (Hungarian algorithm).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `n x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn filled(n: usize, value: f64) -> Self {
        Self {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("matrix is not square".into()));
        }
        Ok(Self { n, data: rows.concat() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n..(row + 1) * self.n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `perm[k]` is the column matched to row `k`.
    pub perm: Vec<usize>,
    /// Sum of the matched entries of the original matrix.
    pub value: f64,
}

fn check(c: &SquareMatrix) -> Result<()> {
    if c.n == 0 {
        return Err(Error::InvalidInput("empty assignment matrix".into()));
    }
    if c.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("assignment matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Finds a permutation maximizing `sum_k c[k][perm[k]]` in `O(n^3)`.
pub fn solve_max_assignment(c: &SquareMatrix) -> Result<Assignment> {
    AssignmentSolver::default().solve(c)
}

/// Hungarian method that keeps its dual potentials between calls.
///
/// When consecutive matrices differ only slightly, most of the previous
/// matching stays tight under re-fitted row potentials and only the rows that
/// lost their edge are re-augmented. Every call still returns an optimal
/// assignment of its own matrix.
#[derive(Debug, Clone, Default)]
pub struct AssignmentSolver {
    n: usize,
    /// Row and column potentials; indices are 1-based, 0 is a virtual column.
    u: Vec<f64>,
    v: Vec<f64>,
    /// `matched_row[j]`: row assigned to column `j`, 0 when free.
    matched_row: Vec<usize>,
    way: Vec<usize>,
    minv: Vec<f64>,
    used: Vec<bool>,
}

impl AssignmentSolver {
    pub fn solve(&mut self, c: &SquareMatrix) -> Result<Assignment> {
        check(c)?;
        let n = c.n;
        // maximize c by minimizing -c
        let cost: Vec<f64> = c.data.iter().map(|&x| -x).collect();
        if self.n == n {
            self.refit(&cost);
        } else {
            self.reset(n);
        }
        self.augment_free_rows(&cost);

        let mut perm = vec![0usize; n];
        for j in 1..=n {
            perm[self.matched_row[j] - 1] = j - 1;
        }
        let value = perm.iter().enumerate().map(|(k, &l)| c.get(k, l)).sum();
        Ok(Assignment { perm, value })
    }

    fn reset(&mut self, n: usize) {
        self.n = n;
        self.u = vec![0.0; n + 1];
        self.v = vec![0.0; n + 1];
        self.matched_row = vec![0; n + 1];
        self.way = vec![0; n + 1];
        self.minv = vec![0.0; n + 1];
        self.used = vec![false; n + 1];
    }

    /// Keeps the column potentials, sets each row potential to the largest
    /// feasible value, and drops matched edges that are no longer tight.
    fn refit(&mut self, cost: &[f64]) {
        let n = self.n;
        for i in 1..=n {
            let row = &cost[(i - 1) * n..i * n];
            self.u[i] = (1..=n).map(|j| row[j - 1] - self.v[j]).fold(f64::INFINITY, f64::min);
        }
        for j in 1..=n {
            let i = self.matched_row[j];
            if i == 0 {
                continue;
            }
            let a = cost[(i - 1) * n + j - 1];
            let slack = a - self.u[i] - self.v[j];
            if slack > 1e-12 * (a.abs() + self.v[j].abs() + 1.0) {
                self.matched_row[j] = 0;
            }
        }
    }

    /// Shortest-augmenting-path phase for every unmatched row.
    fn augment_free_rows(&mut self, cost: &[f64]) {
        let n = self.n;
        let mut row_matched = vec![false; n + 1];
        for j in 1..=n {
            row_matched[self.matched_row[j]] = true;
        }
        let Self {
            u,
            v,
            matched_row,
            way,
            minv,
            used,
            ..
        } = self;

        for i in (1..=n).filter(|&i| !row_matched[i]) {
            matched_row[0] = i;
            let mut j0 = 0usize;
            minv.iter_mut().for_each(|m| *m = f64::INFINITY);
            used.iter_mut().for_each(|f| *f = false);

            loop {
                used[j0] = true;
                let i0 = matched_row[j0];
                let row = &cost[(i0 - 1) * n..i0 * n];
                let ui0 = u[i0];
                let mut delta = f64::INFINITY;
                let mut j1 = 0usize;
                for j in 1..=n {
                    if used[j] {
                        continue;
                    }
                    let cur = row[j - 1] - ui0 - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
                for j in 0..=n {
                    if used[j] {
                        u[matched_row[j]] += delta;
                        v[j] -= delta;
                    } else {
                        minv[j] -= delta;
                    }
                }
                j0 = j1;
                if matched_row[j0] == 0 {
                    break;
                }
            }

            loop {
                let j1 = way[j0];
                matched_row[j0] = matched_row[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }
        matched_row[0] = 0;
    }
}
