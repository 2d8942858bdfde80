//! Dense two-phase simplex for `min c.x  s.t.  A x = b, x >= 0`, with
//! Bland's rule so degenerate transportation problems cannot cycle.

use alloc::vec;
use alloc::vec::Vec;

const PIVOT_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `rows x (cols + 1)`; the last column is the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.t[r][col];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[col] = 0.0;
            }
        }
        self.basis[r] = col;
    }

    fn reduced_cost(&self, cost: &[f64], col: usize) -> f64 {
        let mut r = cost[col];
        for (row, &b) in self.t.iter().zip(&self.basis) {
            r -= cost[b] * row[col];
        }
        r
    }

    /// Runs simplex iterations with columns `< allowed` eligible to enter.
    /// Returns false when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        loop {
            let entering = (0..allowed)
                .filter(|c| !self.basis.contains(c))
                .find(|&c| self.reduced_cost(cost, c) < -PIVOT_TOL);
            let Some(col) = entering else { return true };
            let rhs = self.cols;
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[col] > PIVOT_TOL {
                    let ratio = row[rhs] / row[col];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-15
                                || (ratio <= best + 1e-15 && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, col);
        }
    }
}

pub(crate) fn solve_lp(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> LpOutcome {
    let n = c.len();
    let m = a.len();
    let cols = n + m;
    let mut t = Vec::with_capacity(m);
    for (row, &bi) in a.iter().zip(b) {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut r = vec![0.0; cols + 1];
        for (v, &aij) in r.iter_mut().zip(row) {
            *v = sign * aij;
        }
        r[cols] = sign * bi;
        t.push(r);
    }
    for (i, row) in t.iter_mut().enumerate() {
        row[n + i] = 1.0;
    }
    let mut tab = Tableau {
        t,
        basis: (n..cols).collect(),
        cols,
    };

    let mut phase1 = vec![0.0; cols];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    tab.optimize(&phase1, cols);
    let infeasibility: f64 = tab
        .t
        .iter()
        .zip(&tab.basis)
        .filter(|(_, &bv)| bv >= n)
        .map(|(row, _)| row[cols])
        .sum();
    if infeasibility > FEAS_TOL {
        return LpOutcome::Infeasible;
    }

    // Drive artificials out of the basis; rows where that is impossible
    // are redundant.
    let mut i = 0;
    while i < tab.t.len() {
        if tab.basis[i] >= n {
            match (0..n).find(|&col| tab.t[i][col].abs() > PIVOT_TOL) {
                Some(col) => {
                    tab.pivot(i, col);
                    i += 1;
                }
                None => {
                    tab.t.remove(i);
                    tab.basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }

    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(c);
    if !tab.optimize(&phase2, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (row, &bv) in tab.t.iter().zip(&tab.basis) {
        x[bv] = row[cols].max(0.0);
    }
    let value = x.iter().zip(c).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_transportation_problem() {
        // 2x2 couplings of (0.3, 0.7) and (0.6, 0.4), cost favouring the diagonal.
        let a = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
        ];
        let b = [0.3, 0.7, 0.6, 0.4];
        let LpOutcome::Optimal { x, value } = solve_lp(&a, &b, &[0.0, 1.0, 1.0, 0.0]) else {
            panic!("expected an optimum");
        };
        assert_abs_diff_eq!(value, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(x[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(x[3], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(solve_lp(&a, &[1.0, 2.0], &[0.0, 0.0]), LpOutcome::Infeasible);
        let a = vec![vec![1.0, -1.0]];
        assert_eq!(solve_lp(&a, &[1.0], &[0.0, -1.0]), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_right_hand_side() {
        // x0 - x1 = -2, minimize x1: x = (0, 2).
        let LpOutcome::Optimal { x, value } = solve_lp(&[vec![1.0, -1.0]], &[-2.0], &[0.0, 1.0]) else {
            panic!("expected an optimum");
        };
        assert_abs_diff_eq!(value, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 2.0, epsilon = 1e-12);
    }
}
