//! Dense bounded-variable primal simplex.
//!
//! Each row `a_i^T x (>=|<=|=) b_i` gets an activity variable `s_i` with
//! `a_i^T x - s_i = 0`, so row senses become bounds on `s_i`. Structural
//! variables start nonbasic at a bound (free ones at their start hint, or 0).
//! Rows whose activity already lies within the row bounds start with `s_i`
//! basic; the others get an artificial variable and a phase-one objective.
//! Pricing is Dantzig's rule until too many consecutive degenerate pivots,
//! after which Bland's rule is used for the rest of the solve.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Ge,
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub kind: RowKind,
    pub rhs: f64,
}

/// `min c^T x` subject to dense rows and variable bounds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<LpRow>,
    /// Starting values; honored exactly for free variables, snapped to the
    /// nearest finite bound otherwise.
    pub start: Option<Vec<f64>>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        for r in &mut self.rows {
            r.coeffs.push(0.0);
        }
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, kind: RowKind, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars(), "row length must match variable count");
        self.rows.push(LpRow { coeffs, kind, rhs });
    }

    /// Largest violation of rows and bounds by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for r in &self.rows {
            let act = crate::model::dot(&r.coeffs, x);
            let v = match r.kind {
                RowKind::Ge => r.rhs - act,
                RowKind::Le => act - r.rhs,
                RowKind::Eq => (act - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        crate::model::dot(&self.cost, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_threshold: usize,
    pub pivot_tol: f64,
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            degenerate_threshold: 50,
            pivot_tol: 1e-11,
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub bland_engaged: bool,
    /// Structural variables in the final basis.
    pub basic_structurals: Vec<usize>,
    pub diagnostics: Option<String>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve(lp: &LinearProgram) -> LpSolution {
    solve_with(lp, &SimplexOptions::default())
}

pub fn solve_with(lp: &LinearProgram, opts: &SimplexOptions) -> LpSolution {
    let mut t = Tableau::setup(lp, opts);
    t.run()
}

struct Tableau<'a> {
    lp: &'a LinearProgram,
    opts: &'a SimplexOptions,
    m: usize,
    n: usize,
    cols: usize,
    /// Original constraint matrix `[A | -I | artificials]`, row-major.
    a_full: Vec<f64>,
    /// Current `B^-1 a_full`, row-major.
    t: Vec<f64>,
    d: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Value of each nonbasic column.
    value: Vec<f64>,
    basis: Vec<usize>,
    basic_row: Vec<Option<usize>>,
    beta: Vec<f64>,
    num_artificial: usize,
    iterations: usize,
    bland: bool,
    degenerate_run: usize,
    pivots_since_refactor: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Continue,
}

impl<'a> Tableau<'a> {
    fn setup(lp: &'a LinearProgram, opts: &'a SimplexOptions) -> Self {
        let m = lp.num_rows();
        let n = lp.num_vars();
        let mut x = vec![0.0; n];
        for j in 0..n {
            let (lo, up) = (lp.lower[j], lp.upper[j]);
            let hint = lp.start.as_ref().map(|s| s[j]);
            x[j] = match (lo.is_finite(), up.is_finite()) {
                (false, false) => hint.unwrap_or(0.0),
                (true, false) => lo,
                (false, true) => up,
                (true, true) => match hint {
                    Some(h) if (h - up).abs() < (h - lo).abs() => up,
                    _ => lo,
                },
            };
        }

        // decide which rows need an artificial
        let mut row_info = Vec::with_capacity(m);
        let mut num_artificial = 0;
        for row in &lp.rows {
            let act = crate::model::dot(&row.coeffs, &x);
            let (slo, sup) = row_bounds(row);
            let tol = opts.feasibility_tol * (1.0 + row.rhs.abs());
            if act >= slo - tol && act <= sup + tol {
                row_info.push((act, None));
            } else {
                let v = if act < slo { slo } else { sup };
                row_info.push((act, Some(v)));
                num_artificial += 1;
            }
        }

        let cols = n + m + num_artificial;
        let mut a_full = vec![0.0; m * cols];
        let mut t = vec![0.0; m * cols];
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut value = x.clone();
        let mut basis = vec![0; m];
        let mut beta = vec![0.0; m];
        let mut cost = vec![0.0; cols];
        lower.resize(cols, 0.0);
        upper.resize(cols, 0.0);
        value.resize(cols, 0.0);

        let mut art = n + m;
        for (i, row) in lp.rows.iter().enumerate() {
            let (slo, sup) = row_bounds(row);
            lower[n + i] = slo;
            upper[n + i] = sup;
            let a = &mut a_full[i * cols..(i + 1) * cols];
            a[..n].copy_from_slice(&row.coeffs);
            a[n + i] = -1.0;
            let (act, violated) = row_info[i];
            let trow = &mut t[i * cols..(i + 1) * cols];
            match violated {
                None => {
                    // -a x + s = 0 with s basic
                    for j in 0..cols {
                        trow[j] = -a[j];
                    }
                    basis[i] = n + i;
                    beta[i] = act;
                }
                Some(v) => {
                    let sigma = if v - act > 0.0 { 1.0 } else { -1.0 };
                    a[art] = sigma;
                    for j in 0..cols {
                        trow[j] = a[j] / sigma;
                    }
                    value[n + i] = v;
                    lower[art] = 0.0;
                    upper[art] = f64::INFINITY;
                    cost[art] = 1.0;
                    basis[i] = art;
                    beta[i] = (v - act).abs();
                    art += 1;
                }
            }
        }
        let mut basic_row = vec![None; cols];
        for (i, &b) in basis.iter().enumerate() {
            basic_row[b] = Some(i);
        }
        let mut tab = Self {
            lp,
            opts,
            m,
            n,
            cols,
            a_full,
            t,
            d: vec![0.0; cols],
            cost,
            lower,
            upper,
            value,
            basis,
            basic_row,
            beta,
            num_artificial,
            iterations: 0,
            bland: false,
            degenerate_run: 0,
            pivots_since_refactor: 0,
        };
        tab.recompute_reduced_costs();
        tab
    }

    fn recompute_reduced_costs(&mut self) {
        let cols = self.cols;
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * cols..(i + 1) * cols];
                for (dj, tij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for &b in &self.basis {
            self.d[b] = 0.0;
        }
    }

    fn run(&mut self) -> LpSolution {
        if self.num_artificial > 0 {
            match self.phase() {
                Err(status) => return self.finish(status, None),
                Ok(Step::Unbounded) => {
                    return self.finish(LpStatus::NumericalFailure, Some("phase one reported unbounded".into()))
                }
                Ok(_) => {}
            }
            let infeas: f64 = (0..self.m)
                .filter(|&i| self.basis[i] >= self.n + self.m)
                .map(|i| self.beta[i].abs())
                .sum();
            let scale = 1.0 + self.lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
            if infeas > self.opts.feasibility_tol * scale * 10.0 {
                return self.finish(LpStatus::Infeasible, Some(format!("phase one infeasibility {infeas:.3e}")));
            }
            for j in self.n + self.m..self.cols {
                self.upper[j] = 0.0;
                self.lower[j] = 0.0;
                self.cost[j] = 0.0;
                if self.basic_row[j].is_none() {
                    self.value[j] = 0.0;
                }
            }
        }
        for j in 0..self.n {
            self.cost[j] = self.lp.cost[j];
        }
        self.recompute_reduced_costs();

        for attempt in 0..3 {
            match self.phase() {
                Err(status) => return self.finish(status, None),
                Ok(Step::Unbounded) => return self.finish(LpStatus::Unbounded, None),
                Ok(_) => {}
            }
            let x = self.structural_values();
            let viol = self.lp.max_violation(&x);
            let scale = 1.0 + self.lp.rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
            if viol <= 1e-7 * scale {
                return self.finish(LpStatus::Optimal, None);
            }
            if attempt == 2 || !self.refactor() {
                return self.finish(
                    LpStatus::NumericalFailure,
                    Some(format!("final primal violation {viol:.3e} after refactorization")),
                );
            }
        }
        unreachable!()
    }

    /// Iterates the current phase to optimality.
    fn phase(&mut self) -> Result<Step, LpStatus> {
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(LpStatus::IterationLimit);
            }
            if self.pivots_since_refactor >= 200.max(2 * self.m) && !self.refactor() {
                return Err(LpStatus::NumericalFailure);
            }
            match self.iterate() {
                Step::Continue => {}
                other => return Ok(other),
            }
        }
    }

    fn iterate(&mut self) -> Step {
        let tol = self.opts.optimality_tol;
        let mut entering: Option<(usize, f64)> = None;
        let mut best = 0.0;
        for j in 0..self.cols {
            if self.basic_row[j].is_some() {
                continue;
            }
            let (lo, up) = (self.lower[j], self.upper[j]);
            if lo == up {
                continue;
            }
            let dj = self.d[j];
            let v = self.value[j];
            let dir = if !lo.is_finite() && !up.is_finite() {
                if dj.abs() > tol {
                    -dj.signum()
                } else {
                    continue;
                }
            } else if v <= lo && dj < -tol {
                1.0
            } else if v >= up && dj > tol {
                -1.0
            } else {
                continue;
            };
            if self.bland {
                entering = Some((j, dir));
                break;
            }
            if dj.abs() > best {
                best = dj.abs();
                entering = Some((j, dir));
            }
        }
        let Some((q, dir)) = entering else {
            return Step::Optimal;
        };

        // ratio test
        let cols = self.cols;
        let mut theta = if self.lower[q].is_finite() && self.upper[q].is_finite() {
            self.upper[q] - self.lower[q]
        } else {
            f64::INFINITY
        };
        let mut leave: Option<(usize, f64, f64)> = None; // (row, |alpha|, bound value)
        for i in 0..self.m {
            let alpha = dir * self.t[i * cols + q];
            if alpha.abs() <= self.opts.pivot_tol {
                continue;
            }
            let b = self.basis[i];
            let (ratio, bound) = if alpha > 0.0 {
                if !self.lower[b].is_finite() {
                    continue;
                }
                ((self.beta[i] - self.lower[b]) / alpha, self.lower[b])
            } else {
                if !self.upper[b].is_finite() {
                    continue;
                }
                ((self.upper[b] - self.beta[i]) / -alpha, self.upper[b])
            };
            let ratio = ratio.max(0.0);
            let eps = 1e-12 * theta.abs().clamp(1.0, 1e12);
            let better = if !theta.is_finite() || ratio < theta - eps {
                true
            } else if ratio <= theta + eps {
                match leave {
                    None => false, // bound flip wins ties
                    Some((r, a, _)) => {
                        if self.bland {
                            b < self.basis[r]
                        } else {
                            alpha.abs() > a
                        }
                    }
                }
            } else {
                false
            };
            if better {
                theta = ratio;
                leave = Some((i, alpha.abs(), bound));
            }
        }
        if !theta.is_finite() {
            return Step::Unbounded;
        }

        self.iterations += 1;
        if theta <= 1e-12 {
            self.degenerate_run += 1;
            if self.degenerate_run > self.opts.degenerate_threshold {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
        }

        let step = theta * dir;
        if step != 0.0 {
            for i in 0..self.m {
                let tiq = self.t[i * cols + q];
                if tiq != 0.0 {
                    self.beta[i] -= step * tiq;
                }
            }
        }
        match leave {
            None => {
                // bound flip
                self.value[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            }
            Some((r, _, bound)) => {
                let leaving = self.basis[r];
                let entering_value = self.value[q] + step;
                self.value[leaving] = bound;
                self.basic_row[leaving] = None;
                self.pivot(r, q);
                self.basis[r] = q;
                self.basic_row[q] = Some(r);
                self.beta[r] = entering_value;
            }
        }
        Step::Continue
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let piv = self.t[r * cols + q];
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for row in before.chunks_mut(cols).chain(after.chunks_mut(cols)) {
            let f = row[q];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[q] = 0.0;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
            self.d[q] = 0.0;
        }
        self.pivots_since_refactor += 1;
    }

    /// Rebuilds `B^-1 a_full`, basic values and reduced costs from the original data.
    fn refactor(&mut self) -> bool {
        let (m, cols) = (self.m, self.cols);
        if m == 0 {
            return true;
        }
        let width = m + cols;
        let mut aug = vec![0.0; m * width];
        for i in 0..m {
            for (k, &b) in self.basis.iter().enumerate() {
                aug[i * width + k] = self.a_full[i * cols + b];
            }
            aug[i * width + m..(i + 1) * width].copy_from_slice(&self.a_full[i * cols..(i + 1) * cols]);
        }
        // Gauss-Jordan with partial pivoting on the basis block
        for k in 0..m {
            let p = (k..m)
                .max_by(|&x, &y| aug[x * width + k].abs().total_cmp(&aug[y * width + k].abs()))
                .unwrap();
            if aug[p * width + k].abs() < 1e-12 {
                return false;
            }
            if p != k {
                for j in 0..width {
                    aug.swap(p * width + j, k * width + j);
                }
            }
            let piv = aug[k * width + k];
            for j in 0..width {
                aug[k * width + j] /= piv;
            }
            for i in 0..m {
                if i == k {
                    continue;
                }
                let f = aug[i * width + k];
                if f != 0.0 {
                    for j in 0..width {
                        aug[i * width + j] -= f * aug[k * width + j];
                    }
                }
            }
        }
        // row k of the result now belongs to basis position k
        for k in 0..m {
            self.t[k * cols..(k + 1) * cols].copy_from_slice(&aug[k * width + m..(k + 1) * width]);
        }
        for k in 0..m {
            let row = &self.t[k * cols..(k + 1) * cols];
            let mut v = 0.0;
            for j in 0..cols {
                if self.basic_row[j].is_none() && self.value[j] != 0.0 {
                    v -= row[j] * self.value[j];
                }
            }
            self.beta[k] = v;
        }
        self.recompute_reduced_costs();
        self.pivots_since_refactor = 0;
        true
    }

    fn structural_values(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| match self.basic_row[j] {
                Some(i) => self.beta[i],
                None => self.value[j],
            })
            .collect()
    }

    fn finish(&self, status: LpStatus, diagnostics: Option<String>) -> LpSolution {
        let x = self.structural_values();
        let objective = self.lp.objective(&x);
        let mut basic_structurals: Vec<usize> = self.basis.iter().copied().filter(|&b| b < self.n).collect();
        basic_structurals.sort_unstable();
        LpSolution {
            status,
            x,
            objective,
            iterations: self.iterations,
            bland_engaged: self.bland,
            basic_structurals,
            diagnostics,
        }
    }
}

fn row_bounds(row: &LpRow) -> (f64, f64) {
    match row.kind {
        RowKind::Ge => (row.rhs, f64::INFINITY),
        RowKind::Le => (f64::NEG_INFINITY, row.rhs),
        RowKind::Eq => (row.rhs, row.rhs),
    }
}
