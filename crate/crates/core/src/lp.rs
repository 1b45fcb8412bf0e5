//! Dense two-phase primal simplex for small bounded linear programs.
//!
//! Solves `min c·x  s.t.  A x {<=,>=,=} b,  0 <= x <= u` with a full tableau.
//! Upper bounds are handled implicitly (nonbasic variables sit at either
//! bound), so they cost no rows. Pivoting is Dantzig's largest reduced cost
//! with lowest-index ties, falling back to Bland's rule after a run of
//! degenerate pivots; the same input always takes the same pivot path.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("is infeasible")]
    Infeasible,
    #[error("is unbounded")]
    Unbounded,
    #[error("hit the iteration limit ({0})")]
    IterationLimit(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
struct Row {
    coeffs: Vec<f64>,
    relation: Relation,
    rhs: f64,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    objective: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
}

const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;
const DEGENERATE_RUN: usize = 50;

impl LinearProgram {
    /// `upper[j]` may be `f64::INFINITY`.
    pub fn new(objective: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(objective.len(), upper.len());
        Self { objective, upper, rows: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        assert_eq!(coeffs.len(), self.n_vars());
        self.rows.push(Row { coeffs, relation, rhs });
    }

    pub fn solve(&self) -> Result<Solution, LpError> {
        Tableau::build(self).solve(self)
    }
}

struct Tableau {
    m: usize,
    width: usize,
    n_struct: usize,
    first_artificial: usize,
    t: Vec<f64>,
    x_basic: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n = lp.n_vars();
        let n_slack = lp.rows.iter().filter(|r| r.relation != Relation::Eq).count();

        // decide which rows need an artificial
        let mut needs_art = Vec::with_capacity(m);
        for r in &lp.rows {
            let flipped = r.rhs < 0.0;
            needs_art.push(!(r.relation == Relation::Le && !flipped || r.relation == Relation::Ge && flipped));
        }
        let n_art = needs_art.iter().filter(|&&a| a).count();
        let width = n + n_slack + n_art;
        let first_artificial = n + n_slack;

        let mut t = vec![0.0; m * width];
        let mut x_basic = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut upper = lp.upper.clone();
        upper.resize(width, f64::INFINITY);

        let (mut slack, mut art) = (n, first_artificial);
        for (i, r) in lp.rows.iter().enumerate() {
            let sign = if r.rhs < 0.0 { -1.0 } else { 1.0 };
            let row = &mut t[i * width..(i + 1) * width];
            for (j, &a) in r.coeffs.iter().enumerate() {
                row[j] = sign * a;
            }
            x_basic[i] = sign * r.rhs;
            let mut slack_col = None;
            match r.relation {
                Relation::Le => {
                    row[slack] = sign;
                    slack_col = Some(slack);
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -sign;
                    slack_col = Some(slack);
                    slack += 1;
                }
                Relation::Eq => {}
            }
            if needs_art[i] {
                row[art] = 1.0;
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = slack_col.expect("slack-based row");
            }
        }
        let mut is_basic = vec![false; width];
        for &b in &basis {
            is_basic[b] = true;
        }
        Tableau {
            m,
            width,
            n_struct: n,
            first_artificial,
            t,
            x_basic,
            basis,
            is_basic,
            at_upper: vec![false; width],
            upper,
            cost: vec![0.0; width],
            reduced: vec![0.0; width],
        }
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.reduced.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.width..(i + 1) * self.width];
                for (d, &a) in self.reduced.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.width {
            if self.is_basic[j] {
                continue;
            }
            let d = self.reduced[j];
            let improving = if self.at_upper[j] {
                d > COST_TOL
            } else {
                d < -COST_TOL && self.upper[j] > 0.0
            };
            if !improving {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, s)| d.abs() > s) {
                best = Some((j, d.abs()));
            }
        }
        best.map(|(j, _)| j)
    }

    fn run(&mut self, limit: usize) -> Result<(), LpError> {
        let mut degenerate = 0;
        for _ in 0..limit {
            let Some(q) = self.entering(degenerate > DEGENERATE_RUN) else {
                return Ok(());
            };
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };

            let mut best: Option<(usize, f64, bool)> = None;
            for i in 0..self.m {
                let alpha = self.t[i * self.width + q] * dir;
                let b = self.basis[i];
                let (ratio, to_upper) = if alpha > PIVOT_TOL {
                    ((self.x_basic[i] / alpha).max(0.0), false)
                } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                    (((self.upper[b] - self.x_basic[i]) / -alpha).max(0.0), true)
                } else {
                    continue;
                };
                let take = match best {
                    None => true,
                    Some((r, s, _)) => {
                        ratio < s - TIE_TOL || (ratio <= s + TIE_TOL && b < self.basis[r])
                    }
                };
                if take {
                    best = Some((i, ratio, to_upper));
                }
            }
            let (step, leave) = match best {
                Some((r, s, up)) if s <= self.upper[q] => (s, Some((r, up))),
                _ => (self.upper[q], None),
            };
            if !step.is_finite() {
                return Err(LpError::Unbounded);
            }
            if step < PIVOT_TOL {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            for i in 0..self.m {
                let alpha = self.t[i * self.width + q] * dir;
                if alpha != 0.0 {
                    self.x_basic[i] -= alpha * step;
                }
            }

            let Some((r, to_upper)) = leave else {
                // bound flip, no basis change
                self.at_upper[q] = !self.at_upper[q];
                continue;
            };

            let entering_value = if dir > 0.0 { step } else { self.upper[q] - step };
            let p = self.basis[r];
            self.is_basic[p] = false;
            self.at_upper[p] = to_upper;
            self.basis[r] = q;
            self.is_basic[q] = true;
            self.at_upper[q] = false;
            self.x_basic[r] = entering_value;
            self.pivot(r, q);
        }
        Err(LpError::IterationLimit(limit))
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let piv = self.t[r * w + q];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= piv;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[q];
            if f != 0.0 {
                for (a, &p) in row.iter_mut().zip(pivot_row.iter()) {
                    *a -= f * p;
                }
                row[q] = 0.0;
            }
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for (d, &p) in self.reduced.iter_mut().zip(pivot_row.iter()) {
                *d -= f * p;
            }
            self.reduced[q] = 0.0;
        }
    }

    fn value(&self, j: usize) -> f64 {
        if self.is_basic[j] {
            let i = self.basis.iter().position(|&b| b == j).expect("basic");
            self.x_basic[i]
        } else if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    fn solve(mut self, lp: &LinearProgram) -> Result<Solution, LpError> {
        let limit = 50 * (self.m + self.width) + 1000;
        if self.first_artificial < self.width {
            let mut c1 = vec![0.0; self.width];
            for c in &mut c1[self.first_artificial..] {
                *c = 1.0;
            }
            self.set_cost(c1);
            self.run(limit)?;
            let infeas: f64 = (self.first_artificial..self.width).map(|j| self.value(j)).sum();
            let scale = 1.0 + lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
            if infeas > 1e-7 * scale {
                return Err(LpError::Infeasible);
            }
            for j in self.first_artificial..self.width {
                self.upper[j] = 0.0;
                self.at_upper[j] = false;
            }
        }
        let mut c2 = vec![0.0; self.width];
        c2[..self.n_struct].copy_from_slice(&lp.objective);
        self.set_cost(c2);
        self.run(limit)?;

        let x: Vec<f64> = (0..self.n_struct)
            .map(|j| self.value(j).clamp(0.0, self.upper[j]))
            .collect();
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        Ok(Solution { x, objective })
    }
}
