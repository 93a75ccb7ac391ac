//! Dense two-phase primal simplex with a Bland's-rule fallback against cycling.
//!
//! Solves `min c·x` subject to `A x (<= | =) b`, `x >= 0`.

use crate::error::{Error, Result};

pub const FEAS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const RATIO_TOL: f64 = 1e-12;
const DEGENERATE_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    /// Sparse coefficients `(column, value)`.
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rows(&self) -> usize {
        self.basis.len()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Pivots on columns `< allowed` until optimal; `Ok(false)` means unbounded.
    ///
    /// Pricing is most-negative reduced cost with the largest pivot among
    /// ratio ties. After a run of degenerate pivots it switches to Bland's
    /// rule, which cannot cycle, until the objective moves again.
    fn optimize(&mut self, allowed: usize, budget: &mut usize) -> Result<bool> {
        let m = self.rows();
        let rhs = self.cols;
        let mut degenerate_run = 0usize;
        loop {
            let bland = degenerate_run >= DEGENERATE_LIMIT;
            let obj = &self.t[m];
            let enter = if bland {
                (0..allowed).find(|&j| obj[j] < -FEAS_TOL)
            } else {
                (0..allowed)
                    .filter(|&j| obj[j] < -FEAS_TOL)
                    .min_by(|&a, &b| obj[a].total_cmp(&obj[b]))
            };
            let Some(enter) = enter else {
                return Ok(true);
            };
            let ratio_of = |i: usize| self.t[i][rhs].max(0.0) / self.t[i][enter];
            let eligible: Vec<usize> = (0..m).filter(|&i| self.t[i][enter] > PIVOT_TOL).collect();
            let Some(best) = eligible.iter().map(|&i| ratio_of(i)).min_by(f64::total_cmp) else {
                return Ok(false);
            };
            let ties = eligible.into_iter().filter(|&i| ratio_of(i) <= best + RATIO_TOL);
            let r = if bland {
                ties.min_by_key(|&i| self.basis[i])
            } else {
                ties.max_by(|&a, &b| self.t[a][enter].total_cmp(&self.t[b][enter]))
            }
            .expect("the minimizing row is a tie with itself");
            if *budget == 0 {
                return Err(Error::NumericalFailure("simplex iteration cap reached".into()));
            }
            *budget -= 1;
            degenerate_run = if best <= RATIO_TOL { degenerate_run + 1 } else { 0 };
            self.pivot(r, enter);
            for i in 0..m {
                if self.t[i][rhs] < 0.0 && self.t[i][rhs] > -FEAS_TOL {
                    self.t[i][rhs] = 0.0;
                }
            }
        }
    }
}

pub fn solve(n: usize, cost: &[f64], constraints: &[Constraint]) -> Result<Outcome> {
    solve_with_cap(n, cost, constraints, 1000 + 50 * (n + constraints.len()))
}

pub fn solve_with_cap(n: usize, cost: &[f64], constraints: &[Constraint], cap: usize) -> Result<Outcome> {
    let m = constraints.len();
    let slacks = constraints.iter().filter(|c| c.sense == Sense::Le).count();
    let structural = n + slacks;
    let cols = structural + m;
    let mut t = vec![vec![0.0; cols + 1]; m + 1];
    let mut slack = n;
    for (i, c) in constraints.iter().enumerate() {
        let row = &mut t[i];
        for &(j, v) in &c.terms {
            row[j] += v;
        }
        row[cols] = c.rhs;
        // equilibrate so that badly scaled rows share one tolerance
        let scale = row[..n].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale > 0.0 {
            row.iter_mut().for_each(|v| *v /= scale);
        }
        if c.sense == Sense::Le {
            row[slack] = 1.0;
            slack += 1;
        }
        if row[cols] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        row[structural + i] = 1.0;
    }
    // phase 1 objective: sum of artificials, expressed in nonbasic terms
    for i in 0..m {
        for j in 0..=cols {
            if !(structural..cols).contains(&j) {
                t[m][j] -= t[i][j];
            }
        }
    }
    let mut tab = Tableau {
        t,
        basis: (structural..cols).collect(),
        cols,
    };
    let mut budget = cap;
    tab.optimize(cols, &mut budget)?;
    if -tab.t[m][cols] > FEAS_TOL {
        return Ok(Outcome::Infeasible);
    }

    // drive artificials out of the basis; rows where that fails are redundant
    let mut i = 0;
    while i < tab.rows() {
        if tab.basis[i] >= structural {
            match (0..structural).find(|&j| tab.t[i][j].abs() > 1e-9) {
                Some(j) => tab.pivot(i, j),
                None => {
                    tab.t.remove(i);
                    tab.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    let m = tab.rows();
    let mut obj = vec![0.0; cols + 1];
    obj[..n].copy_from_slice(cost);
    for (i, &b) in tab.basis.iter().enumerate() {
        let f = obj[b];
        if f != 0.0 {
            for (o, v) in obj.iter_mut().zip(&tab.t[i]) {
                *o -= f * v;
            }
        }
    }
    tab.t[m] = obj;
    if !tab.optimize(structural, &mut budget)? {
        return Ok(Outcome::Unbounded);
    }
    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.t[i][cols].max(0.0);
        }
    }
    let objective = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(Outcome::Optimal { x, objective })
}
