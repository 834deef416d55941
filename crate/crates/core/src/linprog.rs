//! Dense linear programming for the deterministic LP and the hindsight LP.
//!
//! Problems are `max c.x  s.t.  G x <= h,  lo <= x <= hi` with finite lower
//! bounds. The solver is a two-phase primal simplex on a dense tableau with
//! Bland's rule for both the entering and leaving choice, so degenerate
//! problems terminate and repeated solves pick the same basis.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Instance;

const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    /// `p x k`, one row per `<=` constraint.
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    /// `f64::INFINITY` for an unbounded variable.
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Duals of the `G x <= h` rows; bound multipliers are not reported.
    pub theta: Vec<f64>,
    pub objective: f64,
}

impl LpSolution {
    fn failed(status: LpStatus, k: usize, p: usize) -> Self {
        LpSolution {
            status,
            x: vec![f64::NAN; k],
            theta: vec![f64::NAN; p],
            objective: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LinearProgram {
    pub fn new(
        objective: Vec<f64>,
        constraints: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let k = objective.len();
        if constraints.len() != rhs.len() {
            return Err(Error::Dimension(format!(
                "{} constraint rows but {} rhs entries",
                constraints.len(),
                rhs.len()
            )));
        }
        if constraints.iter().any(|row| row.len() != k) {
            return Err(Error::Dimension(format!("constraint rows must have {k} columns")));
        }
        if lower.len() != k || upper.len() != k {
            return Err(Error::Dimension(format!("bounds must have {k} entries")));
        }
        if lower.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("lower bounds must be finite"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::invalid("lower bound exceeds upper bound"));
        }
        Ok(LinearProgram { objective, constraints, rhs, lower, upper })
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .zip(&self.rhs)
            .map(|(g, h)| dot(g, x) - h);
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .flat_map(|(v, (l, u))| [l - v, v - u]);
        rows.chain(bounds).fold(0.0, f64::max)
    }

    /// Dual objective of row multipliers `theta`, completing the bound
    /// multipliers from the reduced costs. Infinite when an unbounded
    /// variable keeps a positive reduced cost.
    pub fn dual_objective(&self, theta: &[f64]) -> f64 {
        let mut total = dot(&self.rhs, theta);
        for k in 0..self.n_vars() {
            let col: f64 = self.constraints.iter().zip(theta).map(|(g, t)| g[k] * t).sum();
            let reduced = self.objective[k] - col;
            if reduced > 0.0 {
                total += reduced * self.upper[k];
            } else {
                total += reduced * self.lower[k];
            }
        }
        total
    }
}

impl fmt::Display for LinearProgram {
    /// Plain-text dump, one constraint per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn terms(coeffs: &[f64]) -> String {
            let parts: Vec<String> = coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(k, c)| format!("{c} x{k}"))
                .collect();
            if parts.is_empty() {
                "0".to_string()
            } else {
                parts.join(" + ")
            }
        }
        writeln!(f, "max: {}", terms(&self.objective))?;
        for (r, (g, h)) in self.constraints.iter().zip(&self.rhs).enumerate() {
            writeln!(f, "c{r}: {} <= {h}", terms(g))?;
        }
        for k in 0..self.n_vars() {
            writeln!(f, "b{k}: {} <= x{k} <= {}", self.lower[k], self.upper[k])?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced costs `c_j - c_B B^-1 a_j`, with the negated objective value last.
    cost: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        let f = self.cost[c];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn set_objective(&mut self, c: &[f64]) {
        self.cost = vec![0.0; self.width + 1];
        self.cost[..c.len()].copy_from_slice(c);
        for r in 0..self.rows.len() {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                for j in 0..=self.width {
                    self.cost[j] -= cb * self.rows[r][j];
                }
            }
        }
    }

    /// Runs simplex iterations on the current objective over columns
    /// `allowed`. Returns `false` on unboundedness.
    fn optimize(&mut self, allowed: &[bool]) -> Option<bool> {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.width).find(|&j| allowed[j] && self.cost[j] > PIVOT_EPS);
            let Some(c) = entering else {
                return Some(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_EPS {
                    let ratio = row[self.width] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - PIVOT_EPS
                                || (ratio <= lratio + PIVOT_EPS && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Some(false),
                Some((r, _)) => self.pivot(r, c),
            }
        }
        None
    }
}

/// Solves `lp` to optimality, or reports infeasible/unbounded in the status.
pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    let k = lp.n_vars();
    let p = lp.n_rows();

    // Shift x = lo + x' so every structural column is >= 0.
    let mut rows: Vec<(Vec<f64>, f64)> = lp
        .constraints
        .iter()
        .zip(&lp.rhs)
        .map(|(g, h)| (g.clone(), h - dot(g, &lp.lower)))
        .collect();
    for j in 0..k {
        if lp.upper[j].is_finite() {
            let mut g = vec![0.0; k];
            g[j] = 1.0;
            rows.push((g, lp.upper[j] - lp.lower[j]));
        }
    }
    let m = rows.len();
    let flipped: Vec<bool> = rows.iter().map(|(_, h)| *h < 0.0).collect();
    let n_art = flipped.iter().filter(|f| **f).count();
    let width = k + m + n_art;

    let mut tab = Tableau {
        rows: Vec::with_capacity(m),
        cost: Vec::new(),
        basis: vec![0; m],
        width,
    };
    let mut art = k + m;
    let mut artificial = vec![false; width];
    for (r, (g, h)) in rows.iter().enumerate() {
        let mut row = vec![0.0; width + 1];
        let sign = if flipped[r] { -1.0 } else { 1.0 };
        for j in 0..k {
            row[j] = sign * g[j];
        }
        row[k + r] = sign;
        row[width] = sign * h;
        if flipped[r] {
            row[art] = 1.0;
            artificial[art] = true;
            tab.basis[r] = art;
            art += 1;
        } else {
            tab.basis[r] = k + r;
        }
        tab.rows.push(row);
    }

    let all: Vec<bool> = vec![true; width];
    if n_art > 0 {
        let mut phase1 = vec![0.0; width];
        for (j, a) in artificial.iter().enumerate() {
            if *a {
                phase1[j] = -1.0;
            }
        }
        tab.set_objective(&phase1);
        match tab.optimize(&all) {
            None => return LpSolution::failed(LpStatus::IterationLimit, k, p),
            Some(_) => {}
        }
        let infeasibility: f64 = tab
            .rows
            .iter()
            .zip(&tab.basis)
            .filter(|(_, b)| artificial[**b])
            .map(|(row, _)| row[width])
            .sum();
        if infeasibility > FEAS_EPS {
            return LpSolution::failed(LpStatus::Infeasible, k, p);
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if artificial[tab.basis[r]] {
                if let Some(c) = (0..k + m).find(|&j| tab.rows[r][j].abs() > 1e-9) {
                    tab.pivot(r, c);
                }
            }
        }
    }

    let allowed: Vec<bool> = artificial.iter().map(|a| !a).collect();
    tab.set_objective(&lp.objective);
    match tab.optimize(&allowed) {
        None => return LpSolution::failed(LpStatus::IterationLimit, k, p),
        Some(false) => return LpSolution::failed(LpStatus::Unbounded, k, p),
        Some(true) => {}
    }

    let mut x = lp.lower.clone();
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < k {
            x[b] += tab.rows[r][width];
        }
    }
    let theta: Vec<f64> = (0..p).map(|r| clean(-tab.cost[k + r]).max(0.0)).collect();
    LpSolution {
        status: LpStatus::Optimal,
        objective: lp.value(&x),
        x,
        theta,
    }
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-13 {
        0.0
    } else {
        v
    }
}

/// Deterministic LP over the remaining horizon: per-round acceptance rates
/// `0 <= x_i <= lambda_i` with `sum_i A_ij x_i <= remaining_j / rounds` and
/// objective `rounds * sum_i r_i x_i`.
pub fn build_dlp(inst: &Instance, remaining: &[f64], rounds: usize) -> Result<LinearProgram> {
    if rounds == 0 {
        return Err(Error::invalid("remaining rounds must be at least 1"));
    }
    if remaining.len() != inst.n_resources() {
        return Err(Error::Dimension("remaining capacity must have L entries".into()));
    }
    if remaining.iter().any(|m| *m < 0.0) {
        return Err(Error::invalid("negative remaining capacity"));
    }
    let t = rounds as f64;
    let n = inst.n_types();
    let objective = inst.rewards.iter().map(|r| t * r).collect();
    let constraints = (0..inst.n_resources())
        .map(|j| (0..n).map(|i| inst.demand[i][j]).collect())
        .collect();
    let rhs = remaining.iter().map(|m| m / t).collect();
    LinearProgram::new(objective, constraints, rhs, vec![0.0; n], inst.type_rates().to_vec())
}

/// Continuous hindsight program for realized per-type arrival counts.
pub fn build_hindsight(inst: &Instance, counts: &[u64]) -> Result<LinearProgram> {
    let n = inst.n_types();
    if counts.len() != n {
        return Err(Error::Dimension(format!("counts has {} entries, expected {n}", counts.len())));
    }
    let constraints = (0..inst.n_resources())
        .map(|j| (0..n).map(|i| inst.demand[i][j]).collect())
        .collect();
    LinearProgram::new(
        inst.rewards.clone(),
        constraints,
        inst.capacity.clone(),
        vec![0.0; n],
        counts.iter().map(|c| *c as f64).collect(),
    )
}

/// Primal rates and per-unit bid prices from one DLP solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DlpPlan {
    pub x: Vec<f64>,
    /// Resource-row duals divided by the remaining rounds, i.e. prices per
    /// unit of capacity on the same scale as the rewards.
    pub bid_prices: Vec<f64>,
    pub objective: f64,
}

pub fn solve_dlp(inst: &Instance, remaining: &[f64], rounds: usize) -> Result<DlpPlan> {
    let lp = build_dlp(inst, remaining, rounds)?;
    let sol = solve_lp(&lp);
    if !sol.is_optimal() {
        return Err(Error::Lp(sol.status));
    }
    let t = rounds as f64;
    let x = sol
        .x
        .iter()
        .zip(inst.type_rates())
        .map(|(v, l)| v.clamp(0.0, *l))
        .collect();
    Ok(DlpPlan {
        x,
        bid_prices: sol.theta.iter().map(|th| th / t).collect(),
        objective: sol.objective,
    })
}
