//! Dense strictly convex QP:
//!
//! ```text
//!     minimize    ½ xᵀ H x + Fᵀ x
//!     subject to  A x ≥ lo
//!                 x_min ≤ x ≤ x_max      (optional)
//! ```
//!
//! Solved with a dual active-set method. It starts from the unconstrained
//! minimizer `-H⁻¹F` (or from a dual-feasible warm-start working set), and
//! repeatedly adds the most violated row, dropping rows whose multipliers would
//! turn negative on the way. Every iterate is dual feasible, so a feasible
//! unconstrained minimizer is returned untouched, and a row that cannot be
//! reached by any dual step proves the problem infeasible.
//!
//! Rows are normalized internally, which makes the result independent of
//! positive row scaling. Box bounds are appended as unit rows: row `N + k` is
//! `x_k ≥ x_min[k]` and row `N + q + k` is `-x_k ≥ -x_max[k]`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::Error;

/// Stationarity, feasibility, and complementarity tolerance for reporting.
pub const KKT_TOLERANCE: f64 = 1e-9;

/// Relative slack below which a row counts as violated.
const FEASIBILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a: DMatrix<f64>,
    pub lo: DVector<f64>,
    pub bounds: Option<(DVector<f64>, DVector<f64>)>,
}

impl QpProblem {
    pub fn new(h: DMatrix<f64>, f: DVector<f64>, a: DMatrix<f64>, lo: DVector<f64>) -> Result<Self, Error> {
        let n = f.len();
        if h.shape() != (n, n) {
            return Err(Error::Dimension { what: "QP Hessian", expected: n, actual: h.nrows() });
        }
        if a.ncols() != n && a.nrows() > 0 {
            return Err(Error::Dimension { what: "QP constraint columns", expected: n, actual: a.ncols() });
        }
        if a.nrows() != lo.len() {
            return Err(Error::Dimension { what: "QP lower bounds", expected: a.nrows(), actual: lo.len() });
        }
        if h.iter().chain(f.iter()).chain(a.iter()).chain(lo.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("QP data"));
        }
        let scale = h.amax().max(1.0);
        if (&h - h.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter("QP Hessian must be symmetric".into()));
        }
        if Cholesky::new(h.clone()).is_none() {
            return Err(Error::InvalidParameter("QP Hessian must be positive definite".into()));
        }
        // keep an empty constraint block shaped 0 × n
        let a = if a.nrows() == 0 { DMatrix::zeros(0, n) } else { a };
        Ok(Self { h, f, a, lo, bounds: None })
    }

    /// `min ½‖x - target‖²  s.t.  A x ≥ lo`, i.e. `H = I`, `F = -target`.
    pub fn projection(target: &DVector<f64>, a: DMatrix<f64>, lo: DVector<f64>) -> Result<Self, Error> {
        let n = target.len();
        Self::new(DMatrix::identity(n, n), -target, a, lo)
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, Error> {
        let n = self.f.len();
        if lower.len() != n || upper.len() != n {
            return Err(Error::Dimension { what: "QP box bounds", expected: n, actual: lower.len().min(upper.len()) });
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
            return Err(Error::InvalidParameter("box bounds need lower <= upper".into()));
        }
        self.bounds = Some((lower, upper));
        Ok(self)
    }

    pub fn n_vars(&self) -> usize {
        self.f.len()
    }

    /// Number of general inequality rows (box rows excluded).
    pub fn n_rows(&self) -> usize {
        self.lo.len()
    }

    /// Rows including box rows; see the module docs for the index layout.
    pub fn n_total_rows(&self) -> usize {
        self.n_rows() + if self.bounds.is_some() { 2 * self.n_vars() } else { 0 }
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    /// All rows stacked, box rows included. Infinite bounds become rows with
    /// an infinite lower bound that can never be violated.
    pub fn stacked_rows(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_vars();
        let Some((lower, upper)) = &self.bounds else {
            return (self.a.clone(), self.lo.clone());
        };
        let m = self.n_rows();
        let mut a = DMatrix::zeros(m + 2 * n, n);
        let mut lo = DVector::zeros(m + 2 * n);
        a.rows_mut(0, m).copy_from(&self.a);
        lo.rows_mut(0, m).copy_from(&self.lo);
        for k in 0..n {
            a[(m + k, k)] = 1.0;
            lo[m + k] = lower[k];
            a[(m + n + k, k)] = -1.0;
            lo[m + n + k] = -upper[k];
        }
        (a, lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub status: QpStatus,
    /// Largest of the stationarity, primal feasibility, dual feasibility and
    /// complementarity residuals, in the problem's own units.
    pub kkt_residual: f64,
    /// Active row indices in ascending order.
    pub active_set: Vec<usize>,
    /// One multiplier per stacked row (zero for inactive rows).
    pub multipliers: DVector<f64>,
    pub iterations: usize,
    /// Per-row slack used by [`solve_qp_relaxed`]; `None` for exact solves.
    pub slack: Option<DVector<f64>>,
}

/// Dual active-set solver that remembers its last optimal working set.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    warm_start: Vec<usize>,
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, problem: &QpProblem) -> QpSolution {
        let sol = solve_from(problem, &self.warm_start);
        self.warm_start = if sol.status == QpStatus::Optimal {
            sol.active_set.clone()
        } else {
            Vec::new()
        };
        sol
    }

    pub fn reset(&mut self) {
        self.warm_start.clear();
    }
}

/// Cold-start solve.
pub fn solve_qp(problem: &QpProblem) -> QpSolution {
    solve_from(problem, &[])
}

/// Solves the problem with per-row slacks `s ≥ 0`, `A x + s ≥ lo`, adding
/// `penalty·‖s‖²` to the objective. Always feasible when the box (if any) is.
pub fn solve_qp_relaxed(problem: &QpProblem, penalty: f64) -> Result<QpSolution, Error> {
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(Error::InvalidParameter(format!("relaxation penalty must be > 0, got {penalty}")));
    }
    let n = problem.n_vars();
    let m = problem.n_rows();
    let mut h = DMatrix::zeros(n + m, n + m);
    h.view_mut((0, 0), (n, n)).copy_from(&problem.h);
    for k in 0..m {
        h[(n + k, n + k)] = 2.0 * penalty;
    }
    let mut f = DVector::zeros(n + m);
    f.rows_mut(0, n).copy_from(&problem.f);
    let mut a = DMatrix::zeros(2 * m, n + m);
    a.view_mut((0, 0), (m, n)).copy_from(&problem.a);
    let mut lo = DVector::zeros(2 * m);
    lo.rows_mut(0, m).copy_from(&problem.lo);
    for k in 0..m {
        a[(k, n + k)] = 1.0;
        a[(m + k, n + k)] = 1.0;
    }
    let mut relaxed = QpProblem::new(h, f, a, lo)?;
    if let Some((lower, upper)) = &problem.bounds {
        let mut l = DVector::from_element(n + m, f64::NEG_INFINITY);
        let mut u = DVector::from_element(n + m, f64::INFINITY);
        l.rows_mut(0, n).copy_from(lower);
        u.rows_mut(0, n).copy_from(upper);
        relaxed = relaxed.with_bounds(l, u)?;
    }
    let sol = solve_qp(&relaxed);

    // map back to the original row layout
    let mut multipliers = DVector::zeros(problem.n_total_rows());
    multipliers.rows_mut(0, m).copy_from(&sol.multipliers.rows(0, m));
    if problem.bounds.is_some() {
        for k in 0..n {
            multipliers[m + k] = sol.multipliers[2 * m + k];
            multipliers[m + n + k] = sol.multipliers[2 * m + (n + m) + k];
        }
    }
    let active_set = (0..problem.n_total_rows()).filter(|&i| multipliers[i] > 0.0).collect();
    Ok(QpSolution {
        x: sol.x.rows(0, n).into_owned(),
        status: sol.status,
        kkt_residual: sol.kkt_residual,
        active_set,
        multipliers,
        iterations: sol.iterations,
        slack: Some(sol.x.rows(n, m).into_owned()),
    })
}

/// Normalized problem data shared by the iterations.
struct Workspace<'a> {
    h: Cholesky<f64, Dyn>,
    f: &'a DVector<f64>,
    rows: DMatrix<f64>,
    lo: DVector<f64>,
    norms: Vec<f64>,
    /// `H⁻¹ n_iᵀ` for every normalized row, as columns.
    h_inv_rows: DMatrix<f64>,
}

impl Workspace<'_> {
    fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }

    /// Solves `H x - A_Wᵀ λ = rhs_x`, `A_W x = rhs_c` by the range-space
    /// method with one step of iterative refinement. `None` when the working
    /// rows are linearly dependent.
    fn kkt(&self, w: &[usize], rhs_x: &DVector<f64>, rhs_c: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        if w.is_empty() {
            return Some((self.h.solve(rhs_x), DVector::zeros(0)));
        }
        let k = w.len();
        let n = rhs_x.len();
        let mut z = DMatrix::zeros(n, k);
        let mut aw = DMatrix::zeros(k, n);
        for (c, &i) in w.iter().enumerate() {
            z.set_column(c, &self.h_inv_rows.column(i));
            aw.set_row(c, &self.rows.row(i));
        }
        let s = &aw * &z;
        let s_diag = s.diagonal();
        let chol = Cholesky::new(s)?;
        // a pivot that lost almost all of its row's weight means dependence
        let l = chol.l_dirty();
        if (0..k).any(|c| l[(c, c)] * l[(c, c)] < 1e-12 * s_diag[c]) {
            return None;
        }
        let solve = |rx: &DVector<f64>, rc: &DVector<f64>| {
            let h_inv_rx = self.h.solve(rx);
            let lambda = chol.solve(&(rc - &aw * &h_inv_rx));
            let x = h_inv_rx + &z * &lambda;
            (x, lambda)
        };
        let (mut x, mut lambda) = solve(rhs_x, rhs_c);
        let hm = self.h.l() * self.h.l().transpose();
        let res_x = rhs_x - (&hm * &x - aw.transpose() * &lambda);
        let res_c = rhs_c - &aw * &x;
        let (dx, dl) = solve(&res_x, &res_c);
        x += dx;
        lambda += dl;
        Some((x, lambda))
    }

    fn rhs_c(&self, w: &[usize]) -> DVector<f64> {
        DVector::from_iterator(w.len(), w.iter().map(|&i| self.lo[i]))
    }

    fn slack(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.rows.row(i).dot(&x.transpose()) - self.lo[i]
    }

    fn tolerance(&self, i: usize, x: &DVector<f64>) -> f64 {
        FEASIBILITY_TOLERANCE * (1.0 + self.lo[i].abs() + x.amax())
    }
}

fn solve_from(problem: &QpProblem, warm: &[usize]) -> QpSolution {
    let n = problem.n_vars();
    let (raw_rows, raw_lo) = problem.stacked_rows();
    let total = raw_rows.nrows();
    let cap = 100 * (n + total).max(1);

    let norms: Vec<f64> = (0..total).map(|i| raw_rows.row(i).norm()).collect();
    let mut rows = raw_rows.clone();
    let mut lo = raw_lo.clone();
    let mut usable = vec![true; total];
    let mut trivially_infeasible = false;
    for i in 0..total {
        if norms[i] <= f64::MIN_POSITIVE || raw_lo[i] == f64::NEG_INFINITY {
            usable[i] = false;
            if raw_lo[i] > KKT_TOLERANCE {
                trivially_infeasible = true;
            }
            continue;
        }
        rows.row_mut(i).scale_mut(1.0 / norms[i]);
        lo[i] /= norms[i];
    }
    let h = Cholesky::new(problem.h.clone()).expect("QpProblem guarantees an SPD Hessian");
    let h_inv_rows = h.solve(&rows.transpose());
    let ws = Workspace { h, f: &problem.f, rows, lo, norms, h_inv_rows };

    let neg_f = -ws.f;
    let mut iterations = 0;

    // Warm start: keep a linearly independent, dual-feasible subset.
    let mut w: Vec<usize> = Vec::new();
    for &i in warm {
        if i < total && usable[i] && !w.contains(&i) {
            w.push(i);
        }
    }
    let (mut x, mut lambda) = loop {
        match ws.kkt(&w, &neg_f, &ws.rhs_c(&w)) {
            None => {
                w.pop();
            }
            Some((x, lambda)) => {
                let worst = lambda
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| **l < 0.0)
                    .min_by(|a, b| a.1.total_cmp(b.1).then(w[a.0].cmp(&w[b.0])));
                match worst {
                    Some((pos, _)) => {
                        w.remove(pos);
                    }
                    None => break (x, lambda),
                }
            }
        }
    };

    let status = if trivially_infeasible {
        QpStatus::Infeasible
    } else {
        'outer: loop {
            if iterations >= cap {
                break QpStatus::MaxIter;
            }
            // most violated row, lowest index on ties
            let mut target = None;
            let mut worst = 0.0;
            for i in 0..total {
                if !usable[i] || w.contains(&i) {
                    continue;
                }
                let slack = ws.slack(i, &x);
                if slack < -ws.tolerance(i, &x) && (target.is_none() || slack < worst) {
                    target = Some(i);
                    worst = slack;
                }
            }
            let Some(s) = target else {
                break QpStatus::Optimal;
            };
            let ns = ws.row(s);
            let h_inv_ns = ws.h_inv_rows.column(s).into_owned();
            let unconstrained_gain = ns.dot(&h_inv_ns);
            let mut u = 0.0;
            loop {
                iterations += 1;
                if iterations >= cap {
                    break 'outer QpStatus::MaxIter;
                }
                let rhs_c = ws.rhs_c(&w);
                let Some((x0, l0)) = ws.kkt(&w, &(&neg_f + &ns * u), &rhs_c) else {
                    break 'outer QpStatus::Infeasible;
                };
                let Some((z, r)) = ws.kkt(&w, &ns, &DVector::zeros(w.len())) else {
                    break 'outer QpStatus::Infeasible;
                };
                let slack = ns.dot(&x0) - ws.lo[s];
                let gain = ns.dot(&z);
                let full = if gain > 1e-12 * unconstrained_gain {
                    (-slack / gain).max(0.0)
                } else {
                    f64::INFINITY
                };
                let r_scale = r.amax().max(1.0);
                let mut partial = f64::INFINITY;
                let mut blocking = None;
                for (pos, (&lk, &rk)) in l0.iter().zip(r.iter()).enumerate() {
                    if rk < -1e-12 * r_scale {
                        let t = (-lk / rk).max(0.0);
                        if t < partial || (t == partial && blocking.is_some_and(|b: usize| w[pos] < w[b])) {
                            partial = t;
                            blocking = Some(pos);
                        }
                    }
                }
                if full.is_infinite() && partial.is_infinite() {
                    x = x0;
                    lambda = l0;
                    break 'outer QpStatus::Infeasible;
                }
                if partial < full {
                    u += partial;
                    w.remove(blocking.expect("finite partial step has a blocking row"));
                    continue;
                }
                w.push(s);
                match ws.kkt(&w, &neg_f, &ws.rhs_c(&w)) {
                    Some((xn, ln)) => {
                        x = xn;
                        lambda = ln;
                    }
                    None => {
                        // numerically dependent after all: keep the partial iterate
                        w.pop();
                        x = x0 + z * full;
                        lambda = l0 + r * full;
                        break 'outer QpStatus::Infeasible;
                    }
                }
                break;
            }
        }
    };

    let mut multipliers = DVector::zeros(total);
    for (pos, &i) in w.iter().enumerate() {
        if pos < lambda.len() {
            multipliers[i] = lambda[pos] / ws.norms[i];
        }
    }
    let mut active_set = w.clone();
    active_set.sort_unstable();
    let kkt_residual = kkt_residual(problem, &raw_rows, &raw_lo, &x, &multipliers);
    QpSolution {
        x,
        status,
        kkt_residual,
        active_set,
        multipliers,
        iterations,
        slack: None,
    }
}

fn kkt_residual(
    problem: &QpProblem,
    rows: &DMatrix<f64>,
    lo: &DVector<f64>,
    x: &DVector<f64>,
    multipliers: &DVector<f64>,
) -> f64 {
    let stationarity = (&problem.h * x + &problem.f - rows.transpose() * multipliers).amax();
    let mut worst = stationarity;
    for i in 0..rows.nrows() {
        if lo[i] == f64::NEG_INFINITY {
            continue;
        }
        let slack = rows.row(i).dot(&x.transpose()) - lo[i];
        worst = worst
            .max(-slack)
            .max(-multipliers[i])
            .max((multipliers[i] * slack).abs());
    }
    worst
}
