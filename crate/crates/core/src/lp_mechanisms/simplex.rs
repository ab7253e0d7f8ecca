//! Dense two-phase tableau simplex.
//!
//! Columns get a few passes of geometric scaling, then rows are
//! equilibrated to unit max-norm before pivoting. Pricing is
//! Dantzig's rule, falling back to Bland's rule after a run of degenerate
//! pivots. The final basis is re-solved against the unpivoted rows with one
//! step of iterative refinement.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 64;
const MAX_PIVOTS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefs: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
    pub label: &'static str,
}

/// `maximize objective · x` subject to `constraints`, `0 <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl Problem {
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
            upper: vec![f64::INFINITY; n_vars],
        }
    }

    pub fn add(&mut self, coefs: Vec<(usize, f64)>, cmp: Cmp, rhs: f64, label: &'static str) {
        self.constraints.push(Constraint {
            coefs,
            cmp,
            rhs,
            label,
        });
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.coefs.iter().map(|&(j, a)| a * x[j]).sum();
            let v = match c.cmp {
                Cmp::Le => lhs - c.rhs,
                Cmp::Ge => c.rhs - lhs,
                Cmp::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(-xj).max(xj - self.upper[j]);
        }
        worst
    }
}

/// A row of the standardized system `a · y = b` with `b >= 0`.
struct Row {
    coefs: Vec<(usize, f64)>,
    slack: Option<(usize, f64)>,
    artificial: Option<usize>,
    rhs: f64,
    label: &'static str,
}

struct Tableau {
    width: usize,
    rows: usize,
    data: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.data[r * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let piv = self.data[r * w + c];
        let (before, rest) = self.data.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        prow[c] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        eliminate(&mut self.obj);
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Sets the reduced-cost row for cost vector `cost` given the current basis.
    fn price(&mut self, cost: &[f64]) {
        let w = self.width;
        let mut obj = vec![0.0; w];
        obj[..cost.len()].copy_from_slice(cost);
        for r in 0..self.rows {
            let cb = cost.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(&self.data[r * w..(r + 1) * w]) {
                    *o -= cb * v;
                }
            }
        }
        for r in 0..self.rows {
            obj[self.basis[r]] = 0.0;
        }
        self.obj = obj;
    }

    /// Runs simplex iterations over columns in `0..allowed`.
    fn optimize(&mut self, allowed: usize, scale: f64) -> Result<()> {
        let tol = OPT_TOL * scale.max(1e-300);
        let mut bland = false;
        let mut stalled = 0;
        let mut last = f64::NEG_INFINITY;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Infeasible("pivot limit reached".into()));
            }
            let entering = if bland {
                (0..allowed).find(|&j| self.obj[j] > tol)
            } else {
                let mut best = None;
                let mut best_v = tol;
                for j in 0..allowed {
                    if self.obj[j] > best_v {
                        best_v = self.obj[j];
                        best = Some(j);
                    }
                }
                best
            };
            let Some(c) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, c);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                let better = match leave {
                    None => true,
                    Some((lr, lratio, la)) => {
                        let slack = 1e-12 * (1.0 + lratio.abs());
                        if ratio < lratio - slack {
                            true
                        } else if ratio <= lratio + slack {
                            if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                a > la
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    leave = Some((r, ratio, a));
                }
            }
            let Some((r, ratio, _)) = leave else {
                return Err(Error::Unbounded);
            };
            self.pivot(r, c);
            let value = -self.obj[self.width - 1];
            if ratio <= 1e-14 || value <= last + 1e-14 * last.abs().max(1.0) {
                stalled += 1;
                if stalled >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                stalled = 0;
                bland = false;
            }
            last = last.max(value);
        }
    }
}

/// Column factors from alternating geometric row and column scaling of the
/// constraint matrix; bound rows are left out.
fn column_scales(problem: &Problem) -> Vec<f64> {
    let n = problem.n_vars;
    let mut col = vec![1.0; n];
    let mut row = vec![1.0; problem.constraints.len()];
    let geo = |lo: f64, hi: f64| {
        if hi > 0.0 {
            1.0 / (lo * hi).sqrt()
        } else {
            1.0
        }
    };
    for _ in 0..4 {
        for (r, c) in problem.constraints.iter().enumerate() {
            let (lo, hi) = c.coefs.iter().filter(|e| e.1 != 0.0).fold(
                (f64::INFINITY, 0.0f64),
                |(lo, hi), &(j, a)| {
                    let v = (a * col[j]).abs();
                    (lo.min(v), hi.max(v))
                },
            );
            row[r] = geo(lo, hi);
        }
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![0.0f64; n];
        for (r, c) in problem.constraints.iter().enumerate() {
            for &(j, a) in c.coefs.iter().filter(|e| e.1 != 0.0) {
                let v = (a * row[r]).abs();
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        for j in 0..n {
            col[j] = geo(lo[j], hi[j]);
        }
    }
    col
}

pub fn solve(problem: &Problem) -> Result<Solution> {
    let n = problem.n_vars;
    let col = column_scales(problem);
    let mut rows: Vec<Row> = Vec::new();
    let mut push =
        |coefs: Vec<(usize, f64)>, cmp: Cmp, rhs: f64, label: &'static str| -> Result<()> {
            let scale = coefs.iter().map(|c| c.1.abs()).fold(0.0, f64::max);
            if scale == 0.0 {
                let ok = match cmp {
                    Cmp::Le => rhs >= -FEAS_TOL,
                    Cmp::Ge => rhs <= FEAS_TOL,
                    Cmp::Eq => rhs.abs() <= FEAS_TOL,
                };
                return if ok {
                    Ok(())
                } else {
                    Err(Error::Infeasible(label.into()))
                };
            }
            let mut sign = 1.0 / scale;
            let mut cmp = cmp;
            if rhs < 0.0 {
                sign = -sign;
                cmp = match cmp {
                    Cmp::Le => Cmp::Ge,
                    Cmp::Ge => Cmp::Le,
                    Cmp::Eq => Cmp::Eq,
                };
            }
            let coefs = coefs
                .into_iter()
                .filter(|c| c.1 != 0.0)
                .map(|(j, a)| (j, a * sign))
                .collect();
            let slack = match cmp {
                Cmp::Le => Some((0, 1.0)),
                Cmp::Ge => Some((0, -1.0)),
                Cmp::Eq => None,
            };
            let artificial = (cmp != Cmp::Le).then_some(0);
            rows.push(Row {
                coefs,
                slack,
                artificial,
                rhs: rhs * sign,
                label,
            });
            Ok(())
        };
    for c in &problem.constraints {
        push(
            c.coefs.iter().map(|&(j, a)| (j, a * col[j])).collect(),
            c.cmp,
            c.rhs,
            c.label,
        )?;
    }
    for (j, &u) in problem.upper.iter().enumerate() {
        if u.is_finite() {
            push(vec![(j, col[j])], Cmp::Le, u, "upper bound")?;
        }
    }

    let mut next = n;
    for row in rows.iter_mut() {
        if let Some(s) = row.slack.as_mut() {
            s.0 = next;
            next += 1;
        }
    }
    let n_struct = next;
    for row in rows.iter_mut() {
        if let Some(a) = row.artificial.as_mut() {
            *a = next;
            next += 1;
        }
    }
    let n_cols = next;
    let width = n_cols + 1;
    let m = rows.len();
    let mut t = Tableau {
        width,
        rows: m,
        data: vec![0.0; m * width],
        obj: vec![0.0; width],
        basis: vec![0; m],
        pivots: 0,
    };
    for (r, row) in rows.iter().enumerate() {
        let base = r * width;
        for &(j, a) in &row.coefs {
            t.data[base + j] += a;
        }
        if let Some((s, a)) = row.slack {
            t.data[base + s] = a;
        }
        if let Some(a) = row.artificial {
            t.data[base + a] = 1.0;
            t.basis[r] = a;
        } else {
            t.basis[r] = row.slack.unwrap().0;
        }
        t.data[base + width - 1] = row.rhs;
    }

    if n_cols > n_struct {
        let mut cost = vec![0.0; n_cols];
        cost[n_struct..].iter_mut().for_each(|c| *c = -1.0);
        t.price(&cost);
        t.optimize(n_struct, 1.0)?;
        let infeas: f64 = (0..m)
            .filter(|&r| t.basis[r] >= n_struct)
            .map(|r| t.rhs(r))
            .sum();
        if infeas > FEAS_TOL {
            let worst = (0..m)
                .filter(|&r| t.basis[r] >= n_struct)
                .max_by(|&a, &b| t.rhs(a).total_cmp(&t.rhs(b)))
                .unwrap();
            let label = rows
                .iter()
                .find(|row| row.artificial == Some(t.basis[worst]))
                .map_or("constraint", |row| row.label);
            return Err(Error::Infeasible(format!(
                "{label} (phase-one residual {infeas:.3e})"
            )));
        }
        let mut dead = Vec::new();
        for r in 0..m {
            if t.basis[r] < n_struct {
                continue;
            }
            let col = (0..n_struct)
                .filter(|&j| t.at(r, j).abs() > PIVOT_TOL)
                .max_by(|&a, &b| t.at(r, a).abs().total_cmp(&t.at(r, b).abs()));
            match col {
                Some(c) => t.pivot(r, c),
                None => dead.push(r),
            }
        }
        if !dead.is_empty() {
            let keep: Vec<usize> = (0..m).filter(|r| !dead.contains(r)).collect();
            let mut data = Vec::with_capacity(keep.len() * width);
            for &r in &keep {
                data.extend_from_slice(&t.data[r * width..(r + 1) * width]);
            }
            t.basis = keep.iter().map(|&r| t.basis[r]).collect();
            t.data = data;
            t.rows = keep.len();
            rows = keep
                .into_iter()
                .map(|r| {
                    std::mem::replace(
                        &mut rows[r],
                        Row {
                            coefs: vec![],
                            slack: None,
                            artificial: None,
                            rhs: 0.0,
                            label: "",
                        },
                    )
                })
                .collect();
        }
    }

    let cscale = problem
        .objective
        .iter()
        .zip(&col)
        .map(|(c, s)| (c * s).abs())
        .fold(0.0, f64::max);
    let mut cost = vec![0.0; n_cols];
    if cscale > 0.0 {
        for (j, &c) in problem.objective.iter().enumerate() {
            cost[j] = c * col[j] / cscale;
        }
    }
    t.price(&cost);
    t.optimize(n_struct, 1.0)?;

    let mut y = vec![0.0; n_cols];
    for r in 0..t.rows {
        y[t.basis[r]] = t.rhs(r);
    }
    refine(&rows, &t.basis, &mut y);
    let mut x: Vec<f64> = y[..n].iter().zip(&col).map(|(v, s)| v * s).collect();
    for (j, xj) in x.iter_mut().enumerate() {
        *xj = xj.max(0.0).min(problem.upper[j]);
    }
    let objective = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(Solution {
        x,
        objective,
        pivots: t.pivots,
    })
}

/// Re-solves `B y_B = b` on the standardized rows and keeps the result when
/// it has a smaller residual than the tableau values.
fn refine(rows: &[Row], basis: &[usize], y: &mut [f64]) {
    let m = rows.len();
    if m == 0 || m > 2000 {
        return;
    }
    let pos: std::collections::HashMap<usize, usize> =
        basis.iter().enumerate().map(|(k, &j)| (j, k)).collect();
    let mut b_mat = vec![0.0; m * m];
    for (r, row) in rows.iter().enumerate() {
        for &(j, a) in &row.coefs {
            if let Some(&k) = pos.get(&j) {
                b_mat[r * m + k] += a;
            }
        }
        if let Some((s, a)) = row.slack {
            if let Some(&k) = pos.get(&s) {
                b_mat[r * m + k] += a;
            }
        }
        if let Some(a) = row.artificial {
            if let Some(&k) = pos.get(&a) {
                b_mat[r * m + k] += 1.0;
            }
        }
    }
    let rhs: Vec<f64> = rows.iter().map(|r| r.rhs).collect();
    let Some(lu) = Lu::factor(b_mat.clone(), m) else {
        return;
    };
    let residual = |yb: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|r| rhs[r] - (0..m).map(|k| b_mat[r * m + k] * yb[k]).sum::<f64>())
            .collect()
    };
    let current: Vec<f64> = basis.iter().map(|&j| y[j]).collect();
    let mut yb = lu.solve(&rhs);
    let r1 = residual(&yb);
    let dy = lu.solve(&r1);
    yb.iter_mut().zip(&dy).for_each(|(a, d)| *a += d);
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let neg = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(-x));
    let old_err = norm(&residual(&current)).max(neg(&current));
    let new_err = norm(&residual(&yb)).max(neg(&yb));
    if new_err <= old_err {
        for (k, &j) in basis.iter().enumerate() {
            y[j] = yb[k];
        }
    }
}

/// Dense LU with partial pivoting.
struct Lu {
    a: Vec<f64>,
    perm: Vec<usize>,
    n: usize,
}

impl Lu {
    fn factor(mut a: Vec<f64>, n: usize) -> Option<Self> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))?;
            if a[p * n + k].abs() < 1e-300 {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let piv = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / piv;
                if f != 0.0 {
                    a[i * n + k] = f;
                    for c in k + 1..n {
                        a[i * n + c] -= f * a[k * n + c];
                    }
                } else {
                    a[i * n + k] = 0.0;
                }
            }
        }
        Some(Self { a, perm, n })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.a[i * n + k] * x[k]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.a[i * n + k] * x[k]).sum();
            x[i] = (x[i] - s) / self.a[i * n + i];
        }
        x
    }
}
