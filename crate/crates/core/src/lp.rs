//! Dense linear programming.
//!
//! [`solve`] runs a two-phase revised simplex with an explicit basis inverse.
//! Problems with more rows than variables are solved through their dual, so
//! the basis never grows beyond `min(rows, vars)`; the reported primal and
//! dual vectors are the same either way.
//!
//! Dual values follow the sensitivity convention: `duals[i]` is the rate of
//! change of the optimal objective with respect to `rhs[i]`, whatever the
//! optimization sense.

#![allow(clippy::needless_range_loop)]

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{PoaError, Result};

pub const PIVOT_TOL: f64 = 1e-10;
pub const FEAS_TOL: f64 = 1e-8;
pub const GAP_TOL: f64 = 1e-7;
const OPT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarBound {
    NonNegative,
    NonPositive,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `optimize c^T x` subject to `A x (<=|=|>=) b` and per-variable sign bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    sense: OptSense,
    objective: Vec<f64>,
    bounds: Vec<VarBound>,
    coeffs: Vec<f64>,
    row_senses: Vec<RowSense>,
    rhs: Vec<f64>,
}

impl LpProblem {
    /// All variables start nonnegative.
    pub fn new(sense: OptSense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            sense,
            objective,
            bounds: vec![VarBound::NonNegative; n],
            coeffs: Vec::new(),
            row_senses: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn with_capacity(sense: OptSense, objective: Vec<f64>, rows: usize) -> Self {
        let mut p = Self::new(sense, objective);
        p.coeffs.reserve(rows * p.num_vars());
        p.row_senses.reserve(rows);
        p.rhs.reserve(rows);
        p
    }

    pub fn set_bound(&mut self, var: usize, bound: VarBound) {
        self.bounds[var] = bound;
    }

    pub fn add_row(&mut self, coeffs: &[f64], sense: RowSense, rhs: f64) -> Result<usize> {
        if coeffs.len() != self.num_vars() {
            return Err(PoaError::validation(format!(
                "row has {} coefficients, problem has {} variables",
                coeffs.len(),
                self.num_vars()
            )));
        }
        self.coeffs.extend_from_slice(coeffs);
        self.row_senses.push(sense);
        self.rhs.push(rhs);
        Ok(self.rhs.len() - 1)
    }

    pub fn sense(&self) -> OptSense {
        self.sense
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn bounds(&self) -> &[VarBound] {
        &self.bounds
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.num_vars();
        &self.coeffs[i * n..(i + 1) * n]
    }

    pub fn row_sense(&self, i: usize) -> RowSense {
        self.row_senses[i]
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.coeffs.len() != n * self.num_rows() || self.row_senses.len() != self.rhs.len() {
            return Err(PoaError::validation("inconsistent LP dimensions"));
        }
        if self.bounds.len() != n {
            return Err(PoaError::validation("bound vector length differs from variable count"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) || !finite(&self.coeffs) || !finite(&self.rhs) {
            return Err(PoaError::validation("LP data contains non-finite coefficients"));
        }
        Ok(())
    }

    /// The Lagrangian dual, one variable per row and one row per variable.
    /// Its optimal primal is this problem's dual vector and vice versa.
    pub fn dual(&self) -> LpProblem {
        let (m, n) = (self.num_rows(), self.num_vars());
        let max = self.sense == OptSense::Maximize;
        let mut d = LpProblem::with_capacity(
            if max { OptSense::Minimize } else { OptSense::Maximize },
            self.rhs.clone(),
            n,
        );
        for i in 0..m {
            let bound = match (self.row_senses[i], max) {
                (RowSense::Eq, _) => VarBound::Free,
                (RowSense::Le, true) | (RowSense::Ge, false) => VarBound::NonNegative,
                (RowSense::Ge, true) | (RowSense::Le, false) => VarBound::NonPositive,
            };
            d.set_bound(i, bound);
        }
        let mut col = vec![0.0; m];
        for j in 0..n {
            for (i, c) in col.iter_mut().enumerate() {
                *c = self.coeffs[i * n + j];
            }
            let sense = match (self.bounds[j], max) {
                (VarBound::Free, _) => RowSense::Eq,
                (VarBound::NonNegative, true) | (VarBound::NonPositive, false) => RowSense::Ge,
                (VarBound::NonNegative, false) | (VarBound::NonPositive, true) => RowSense::Le,
            };
            d.coeffs.extend_from_slice(&col);
            d.row_senses.push(sense);
            d.rhs.push(self.objective[j]);
        }
        d
    }

    /// Sectioned text dump (NAME/SENSE/ROWS/COLUMNS/RHS/BOUNDS/ENDATA) with
    /// fixed-point numbers, for cross-checking with external solvers.
    pub fn to_text(&self, name: &str) -> String {
        let mut s = String::new();
        let (m, n) = (self.num_rows(), self.num_vars());
        let _ = writeln!(s, "NAME {name}");
        let _ = writeln!(
            s,
            "SENSE {}",
            if self.sense == OptSense::Maximize { "MAX" } else { "MIN" }
        );
        let _ = writeln!(s, "ROWS");
        let _ = writeln!(s, " N obj");
        for i in 0..m {
            let tag = match self.row_senses[i] {
                RowSense::Le => "L",
                RowSense::Eq => "E",
                RowSense::Ge => "G",
            };
            let _ = writeln!(s, " {tag} r{}", i + 1);
        }
        let _ = writeln!(s, "COLUMNS");
        for j in 0..n {
            if self.objective[j] != 0.0 {
                let _ = writeln!(s, " x{} obj {:.12}", j + 1, self.objective[j]);
            }
            for i in 0..m {
                let v = self.coeffs[i * n + j];
                if v != 0.0 {
                    let _ = writeln!(s, " x{} r{} {:.12}", j + 1, i + 1, v);
                }
            }
        }
        let _ = writeln!(s, "RHS");
        for i in 0..m {
            if self.rhs[i] != 0.0 {
                let _ = writeln!(s, " rhs r{} {:.12}", i + 1, self.rhs[i]);
            }
        }
        let _ = writeln!(s, "BOUNDS");
        for j in 0..n {
            match self.bounds[j] {
                VarBound::NonNegative => {}
                VarBound::Free => {
                    let _ = writeln!(s, " FR bnd x{}", j + 1);
                }
                VarBound::NonPositive => {
                    let _ = writeln!(s, " MI bnd x{}", j + 1);
                    let _ = writeln!(s, " UP bnd x{} 0", j + 1);
                }
            }
        }
        let _ = writeln!(s, "ENDATA");
        s
    }

    /// Optimality residuals of a candidate primal/dual pair.
    pub fn residuals(&self, x: &[f64], y: &[f64]) -> Residuals {
        let (m, n) = (self.num_rows(), self.num_vars());
        let max = self.sense == OptSense::Maximize;
        let mut primal = 0.0f64;
        let mut dual = 0.0f64;
        let mut comp = 0.0f64;
        for (j, &xj) in x.iter().enumerate() {
            let v = match self.bounds[j] {
                VarBound::NonNegative => (-xj).max(0.0),
                VarBound::NonPositive => xj.max(0.0),
                VarBound::Free => 0.0,
            };
            primal = primal.max(v);
        }
        for i in 0..m {
            let ax: f64 = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
            let slack = self.rhs[i] - ax;
            let v = match self.row_senses[i] {
                RowSense::Le => (-slack).max(0.0),
                RowSense::Ge => slack.max(0.0),
                RowSense::Eq => slack.abs(),
            };
            primal = primal.max(v);
            // Dual sign feasibility.
            let dv = match (self.row_senses[i], max) {
                (RowSense::Eq, _) => 0.0,
                (RowSense::Le, true) | (RowSense::Ge, false) => (-y[i]).max(0.0),
                _ => y[i].max(0.0),
            };
            dual = dual.max(dv);
            comp = comp.max((y[i] * slack).abs());
        }
        for j in 0..n {
            let aty: f64 = (0..m).map(|i| self.coeffs[i * n + j] * y[i]).sum();
            let reduced = self.objective[j] - aty;
            // Reduced costs must have the sign that makes x_j's bound binding.
            let dv = match (self.bounds[j], max) {
                (VarBound::Free, _) => reduced.abs(),
                (VarBound::NonNegative, false) | (VarBound::NonPositive, true) => (-reduced).max(0.0),
                (VarBound::NonNegative, true) | (VarBound::NonPositive, false) => reduced.max(0.0),
            };
            dual = dual.max(dv);
            comp = comp.max((reduced * x[j]).abs());
        }
        let cx: f64 = self.objective.iter().zip(x).map(|(a, b)| a * b).sum();
        let by: f64 = self.rhs.iter().zip(y).map(|(a, b)| a * b).sum();
        Residuals {
            primal_infeasibility: primal,
            dual_infeasibility: dual,
            complementarity: comp,
            gap: (cx - by).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub complementarity: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// NaN unless optimal.
    pub objective_value: f64,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
}

impl LpSolution {
    fn non_optimal(status: LpStatus) -> Self {
        LpSolution {
            status,
            objective_value: f64::NAN,
            primal: Vec::new(),
            duals: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

pub fn solve(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let sol = if p.num_rows() > p.num_vars() {
        solve_via_dual(p)?
    } else {
        solve_direct(p)?
    };
    if sol.is_optimal() {
        check_solution(p, &sol)?;
    }
    Ok(sol)
}

fn check_solution(p: &LpProblem, sol: &LpSolution) -> Result<()> {
    let r = p.residuals(&sol.primal, &sol.duals);
    let rhs_scale = 1.0 + p.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let obj_scale = 1.0 + p.objective.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let x_scale = 1.0 + sol.primal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let y_scale = 1.0 + sol.duals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap_scale = 1.0 + sol.objective_value.abs();
    if r.primal_infeasibility > FEAS_TOL * rhs_scale * x_scale
        || r.dual_infeasibility > FEAS_TOL * obj_scale * y_scale
        || r.complementarity > FEAS_TOL * rhs_scale * obj_scale * x_scale * y_scale
        || r.gap > GAP_TOL * gap_scale
    {
        return Err(PoaError::Solver(format!(
            "solution failed optimality checks: {r:?}"
        )));
    }
    Ok(())
}

fn solve_via_dual(p: &LpProblem) -> Result<LpSolution> {
    let d = p.dual();
    let ds = solve_direct(&d)?;
    match ds.status {
        LpStatus::Optimal => {
            let x = ds.duals;
            let objective_value = p.objective.iter().zip(&x).map(|(a, b)| a * b).sum();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective_value,
                primal: x,
                duals: ds.primal,
            })
        }
        LpStatus::Unbounded => Ok(LpSolution::non_optimal(LpStatus::Infeasible)),
        LpStatus::Infeasible => {
            // The dual has no feasible point, so the primal is either infeasible or
            // unbounded. The primal is infeasible exactly when the homogeneous dual
            // has an improving ray.
            let mut hom = d.clone();
            hom.rhs.iter_mut().for_each(|v| *v = 0.0);
            let hs = solve_direct(&hom)?;
            Ok(LpSolution::non_optimal(if hs.status == LpStatus::Unbounded {
                LpStatus::Infeasible
            } else {
                LpStatus::Unbounded
            }))
        }
    }
}

/// Standard form `min c^T z, M z = b, z >= 0` with `b >= 0`, stored column-major.
struct StandardForm {
    m: usize,
    ncols: usize,
    cols: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// A column equal to the unit vector of each row, when one exists.
    unit_col: Vec<Option<usize>>,
}

impl StandardForm {
    fn col(&self, q: usize) -> &[f64] {
        &self.cols[q * self.m..(q + 1) * self.m]
    }
}

/// How each original variable maps onto standard-form columns.
enum ColMap {
    Plus(usize),
    Minus(usize),
    Split(usize, usize),
}

fn solve_direct(p: &LpProblem) -> Result<LpSolution> {
    let (m, n) = (p.num_rows(), p.num_vars());
    let obj_sign = if p.sense == OptSense::Maximize { -1.0 } else { 1.0 };
    let row_sign: Vec<f64> = p.rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();

    let mut cols = Vec::new();
    let mut c = Vec::new();
    let mut maps = Vec::with_capacity(n);
    let push_col = |sign: f64, j: usize, cols: &mut Vec<f64>, c: &mut Vec<f64>| -> usize {
        for i in 0..m {
            cols.push(sign * row_sign[i] * p.coeffs[i * n + j]);
        }
        c.push(sign * obj_sign * p.objective[j]);
        c.len() - 1
    };
    for j in 0..n {
        let map = match p.bounds[j] {
            VarBound::NonNegative => ColMap::Plus(push_col(1.0, j, &mut cols, &mut c)),
            VarBound::NonPositive => ColMap::Minus(push_col(-1.0, j, &mut cols, &mut c)),
            VarBound::Free => {
                let a = push_col(1.0, j, &mut cols, &mut c);
                let b = push_col(-1.0, j, &mut cols, &mut c);
                ColMap::Split(a, b)
            }
        };
        maps.push(map);
    }
    let mut unit_col = vec![None; m];
    for i in 0..m {
        let s = match p.row_senses[i] {
            RowSense::Le => 1.0,
            RowSense::Ge => -1.0,
            RowSense::Eq => continue,
        } * row_sign[i];
        let start = cols.len();
        cols.resize(start + m, 0.0);
        cols[start + i] = s;
        c.push(0.0);
        if s > 0.0 {
            unit_col[i] = Some(c.len() - 1);
        }
    }
    let sf = StandardForm {
        m,
        ncols: c.len(),
        b: p.rhs.iter().zip(&row_sign).map(|(b, s)| b * s).collect(),
        cols,
        c,
        unit_col,
    };
    let out = RevisedSimplex::new(&sf).run()?;
    match out {
        StdOutcome::Infeasible => Ok(LpSolution::non_optimal(LpStatus::Infeasible)),
        StdOutcome::Unbounded => Ok(LpSolution::non_optimal(LpStatus::Unbounded)),
        StdOutcome::Optimal { z, y } => {
            let primal: Vec<f64> = maps
                .iter()
                .map(|map| match *map {
                    ColMap::Plus(a) => z[a],
                    ColMap::Minus(a) => -z[a],
                    ColMap::Split(a, b) => z[a] - z[b],
                })
                .collect();
            let duals = (0..m).map(|i| obj_sign * row_sign[i] * y[i]).collect();
            let objective_value = p.objective.iter().zip(&primal).map(|(a, b)| a * b).sum();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective_value,
                primal,
                duals,
            })
        }
    }
}

enum StdOutcome {
    Optimal { z: Vec<f64>, y: Vec<f64> },
    Infeasible,
    Unbounded,
}

enum Phase {
    One,
    Two,
}

/// Revised simplex over a [`StandardForm`]; artificial columns are numbered
/// `ncols..ncols + m` with column `ncols + i` equal to the unit vector `e_i`.
struct RevisedSimplex<'a> {
    sf: &'a StandardForm,
    basis: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    is_basic: Vec<bool>,
    bland: bool,
    degenerate_streak: usize,
    since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

impl<'a> RevisedSimplex<'a> {
    fn new(sf: &'a StandardForm) -> Self {
        let m = sf.m;
        let basis: Vec<usize> = (0..m).map(|i| sf.unit_col[i].unwrap_or(sf.ncols + i)).collect();
        let mut is_basic = vec![false; sf.ncols + m];
        for &q in &basis {
            is_basic[q] = true;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        RevisedSimplex {
            sf,
            basis,
            binv,
            xb: sf.b.clone(),
            is_basic,
            bland: false,
            degenerate_streak: 0,
            since_refactor: 0,
            iterations: 0,
            max_iterations: 200 * (sf.m + sf.ncols) + 10_000,
        }
    }

    fn column(&self, q: usize) -> std::borrow::Cow<'a, [f64]> {
        if q < self.sf.ncols {
            std::borrow::Cow::Borrowed(self.sf.col(q))
        } else {
            let mut e = vec![0.0; self.sf.m];
            e[q - self.sf.ncols] = 1.0;
            std::borrow::Cow::Owned(e)
        }
    }

    fn cost(&self, phase: &Phase, q: usize) -> f64 {
        match phase {
            Phase::One => {
                if q >= self.sf.ncols {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => {
                if q >= self.sf.ncols {
                    0.0
                } else {
                    self.sf.c[q]
                }
            }
        }
    }

    fn run(mut self) -> Result<StdOutcome> {
        let m = self.sf.m;
        if m == 0 {
            // No rows: optimal at zero unless some cost is negative.
            if self.sf.c.iter().any(|&c| c < -OPT_TOL) {
                return Ok(StdOutcome::Unbounded);
            }
            return Ok(StdOutcome::Optimal {
                z: vec![0.0; self.sf.ncols],
                y: Vec::new(),
            });
        }
        let needs_phase_one = self.basis.iter().any(|&q| q >= self.sf.ncols);
        if needs_phase_one {
            self.iterate(&Phase::One)?;
            let infeas: f64 = self
                .basis
                .iter()
                .zip(&self.xb)
                .filter(|(&q, _)| q >= self.sf.ncols)
                .map(|(_, &v)| v)
                .sum();
            let b_scale = 1.0 + self.sf.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if infeas > FEAS_TOL * b_scale {
                return Ok(StdOutcome::Infeasible);
            }
            self.drive_out_artificials();
        }
        if !self.iterate(&Phase::Two)? {
            return Ok(StdOutcome::Unbounded);
        }
        self.refactor()?;
        let mut z = vec![0.0; self.sf.ncols];
        for (r, &q) in self.basis.iter().enumerate() {
            if q < self.sf.ncols {
                z[q] = self.xb[r].max(0.0);
            }
        }
        let y = self.simplex_multipliers(&Phase::Two);
        Ok(StdOutcome::Optimal { z, y })
    }

    fn simplex_multipliers(&self, phase: &Phase) -> Vec<f64> {
        let m = self.sf.m;
        let mut y = vec![0.0; m];
        for (r, &q) in self.basis.iter().enumerate() {
            let cb = self.cost(phase, q);
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yi, bi) in y.iter_mut().zip(row) {
                    *yi += cb * bi;
                }
            }
        }
        y
    }

    /// Returns false when the problem is unbounded.
    fn iterate(&mut self, phase: &Phase) -> Result<bool> {
        let m = self.sf.m;
        let allow_artificial = matches!(phase, Phase::One);
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(PoaError::Solver(format!(
                    "simplex exceeded {} iterations",
                    self.max_iterations
                )));
            }
            let y = self.simplex_multipliers(phase);
            let entering = self.price(phase, &y, allow_artificial);
            let Some(q) = entering else {
                return Ok(true);
            };
            let col = self.column(q);
            let mut alpha = vec![0.0; m];
            for (r, a) in alpha.iter_mut().enumerate() {
                let row = &self.binv[r * m..(r + 1) * m];
                *a = row.iter().zip(col.iter()).map(|(x, y)| x * y).sum();
            }
            let Some(leave) = self.ratio_test(&alpha) else {
                return Ok(false);
            };
            self.pivot(leave, q, &alpha)?;
        }
    }

    fn price(&self, phase: &Phase, y: &[f64], allow_artificial: bool) -> Option<usize> {
        let total = if allow_artificial {
            self.sf.ncols + self.sf.m
        } else {
            self.sf.ncols
        };
        let mut best: Option<(usize, f64)> = None;
        for q in 0..total {
            if self.is_basic[q] {
                continue;
            }
            let d = if q < self.sf.ncols {
                self.cost(phase, q) - self.sf.col(q).iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
            } else {
                self.cost(phase, q) - y[q - self.sf.ncols]
            };
            if d < -OPT_TOL {
                if self.bland {
                    return Some(q);
                }
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((q, d));
                }
            }
        }
        best.map(|(q, _)| q)
    }

    fn ratio_test(&self, alpha: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (r, &a) in alpha.iter().enumerate() {
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.xb[r].max(0.0) / a;
            best = match best {
                None => Some((r, ratio)),
                Some((br, bratio)) => {
                    if ratio < bratio - 1e-12 {
                        Some((r, ratio))
                    } else if ratio <= bratio + 1e-12 {
                        let better = if self.bland {
                            self.basis[r] < self.basis[br]
                        } else {
                            a > alpha[br]
                        };
                        if better {
                            Some((r, ratio))
                        } else {
                            Some((br, bratio))
                        }
                    } else {
                        Some((br, bratio))
                    }
                }
            };
        }
        best.map(|(r, _)| r)
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) -> Result<()> {
        let m = self.sf.m;
        let pivot = alpha[r];
        let theta = self.xb[r].max(0.0) / pivot;
        if theta <= 1e-12 {
            self.degenerate_streak += 1;
            if self.degenerate_streak > DEGENERATE_STREAK {
                self.bland = true;
            }
        } else {
            self.degenerate_streak = 0;
        }
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * alpha[i];
            }
        }
        self.xb[r] = theta;
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= pivot;
        }
        for (i, row) in before.chunks_exact_mut(m).chain(after.chunks_exact_mut(m)).enumerate() {
            let i = if i < r { i } else { i + 1 };
            let f = alpha[i];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
            }
        }
        self.is_basic[self.basis[r]] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    /// Recomputes the basis inverse and basic values from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.sf.m;
        let mut a = vec![0.0; m * m];
        for (c, &q) in self.basis.iter().enumerate() {
            let col = self.column(q);
            for r in 0..m {
                a[r * m + c] = col[r];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (p, pv) = (c..m)
                .map(|r| (r, a[r * m + c].abs()))
                .fold((c, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pv < 1e-13 {
                return Err(PoaError::Solver("basis matrix became singular".into()));
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.xb[r] = row.iter().zip(&self.sf.b).map(|(x, y)| x * y).sum();
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn drive_out_artificials(&mut self) {
        let m = self.sf.m;
        for r in 0..m {
            if self.basis[r] < self.sf.ncols {
                continue;
            }
            let row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for q in 0..self.sf.ncols {
                if self.is_basic[q] {
                    continue;
                }
                let v: f64 = row.iter().zip(self.sf.col(q)).map(|(a, b)| a * b).sum();
                if v.abs() > 1e-9 && best.is_none_or(|(_, bv)| v.abs() > bv) {
                    best = Some((q, v.abs()));
                }
            }
            if let Some((q, _)) = best {
                let col = self.sf.col(q);
                let alpha: Vec<f64> = (0..m)
                    .map(|i| {
                        self.binv[i * m..(i + 1) * m]
                            .iter()
                            .zip(col)
                            .map(|(a, b)| a * b)
                            .sum()
                    })
                    .collect();
                // The artificial sits at zero, so a pivot of either sign keeps feasibility.
                let theta = self.xb[r] / alpha[r];
                for i in 0..m {
                    if i != r {
                        self.xb[i] -= theta * alpha[i];
                    }
                }
                self.xb[r] = theta;
                let pivot = alpha[r];
                let prow: Vec<f64> = self.binv[r * m..(r + 1) * m].iter().map(|v| v / pivot).collect();
                for i in 0..m {
                    if i == r {
                        continue;
                    }
                    let f = alpha[i];
                    if f != 0.0 {
                        for k in 0..m {
                            self.binv[i * m + k] -= f * prow[k];
                        }
                    }
                }
                self.binv[r * m..(r + 1) * m].copy_from_slice(&prow);
                self.is_basic[self.basis[r]] = false;
                self.is_basic[q] = true;
                self.basis[r] = q;
            }
            // Otherwise the row is redundant and the artificial stays basic at zero.
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn bounded_max() {
        let mut p = LpProblem::new(OptSense::Maximize, vec![1.0]);
        p.add_row(&[1.0], RowSense::Le, 3.0).unwrap();
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(approx(s.objective_value, 3.0));
        assert!(approx(s.duals[0], 1.0));
    }

    #[test]
    fn unbounded_max() {
        let p = LpProblem::new(OptSense::Maximize, vec![1.0]);
        assert_eq!(solve(&p).unwrap().status, LpStatus::Unbounded);
        let mut p = LpProblem::new(OptSense::Maximize, vec![1.0]);
        p.add_row(&[1.0], RowSense::Ge, 0.0).unwrap();
        assert_eq!(solve(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn infeasible() {
        let mut p = LpProblem::new(OptSense::Maximize, vec![0.0]);
        p.add_row(&[1.0], RowSense::Le, -1.0).unwrap();
        assert_eq!(solve(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn tall_problem_goes_through_dual() {
        // Many rows, two variables: min x + y with x + k y >= k for k = 1..40.
        let mut p = LpProblem::new(OptSense::Minimize, vec![1.0, 1.0]);
        for k in 1..=40 {
            let k = k as f64;
            p.add_row(&[1.0, k], RowSense::Ge, k).unwrap();
        }
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // y = 1, x = 0 satisfies every row with cost 1; any cheaper point violates k = 1.
        assert!(approx(s.objective_value, 1.0), "{}", s.objective_value);
    }

    #[test]
    fn tall_infeasible_and_unbounded() {
        let mut p = LpProblem::new(OptSense::Minimize, vec![1.0]);
        p.add_row(&[1.0], RowSense::Ge, 2.0).unwrap();
        p.add_row(&[1.0], RowSense::Le, 1.0).unwrap();
        assert_eq!(solve(&p).unwrap().status, LpStatus::Infeasible);

        let mut p = LpProblem::new(OptSense::Minimize, vec![-1.0]);
        p.add_row(&[1.0], RowSense::Ge, 2.0).unwrap();
        p.add_row(&[2.0], RowSense::Ge, 1.0).unwrap();
        assert_eq!(solve(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_nonpositive_variables() {
        // min x s.t. x >= -5, x free.
        let mut p = LpProblem::new(OptSense::Minimize, vec![1.0]);
        p.set_bound(0, VarBound::Free);
        p.add_row(&[1.0], RowSense::Ge, -5.0).unwrap();
        let s = solve(&p).unwrap();
        assert!(approx(s.primal[0], -5.0));
        assert!(approx(s.duals[0], 1.0));

        // max x s.t. x <= -2 with x <= 0.
        let mut p = LpProblem::new(OptSense::Maximize, vec![1.0]);
        p.set_bound(0, VarBound::NonPositive);
        p.add_row(&[1.0], RowSense::Le, -2.0).unwrap();
        let s = solve(&p).unwrap();
        assert!(approx(s.objective_value, -2.0));
    }

    #[test]
    fn equality_with_redundant_row() {
        let mut p = LpProblem::new(OptSense::Minimize, vec![1.0, 2.0]);
        p.add_row(&[1.0, 1.0], RowSense::Eq, 2.0).unwrap();
        p.add_row(&[2.0, 2.0], RowSense::Eq, 4.0).unwrap();
        let s = solve(&p).unwrap();
        assert!(approx(s.objective_value, 2.0));
        assert!(approx(s.primal[0], 2.0));
    }

    #[test]
    fn dimension_and_finite_errors() {
        let mut p = LpProblem::new(OptSense::Minimize, vec![1.0, 2.0]);
        assert!(p.add_row(&[1.0], RowSense::Le, 1.0).is_err());
        p.add_row(&[1.0, f64::NAN], RowSense::Le, 1.0).unwrap();
        assert!(solve(&p).is_err());
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under textbook Dantzig pricing without safeguards.
        let mut p = LpProblem::new(OptSense::Minimize, vec![-0.75, 150.0, -0.02, 6.0]);
        p.add_row(&[0.25, -60.0, -0.04, 9.0], RowSense::Le, 0.0).unwrap();
        p.add_row(&[0.5, -90.0, -0.02, 3.0], RowSense::Le, 0.0).unwrap();
        p.add_row(&[0.0, 0.0, 1.0, 0.0], RowSense::Le, 1.0).unwrap();
        let s = solve(&p).unwrap();
        assert!(approx(s.objective_value, -0.05), "{}", s.objective_value);
    }

    #[test]
    fn text_dump_sections() {
        let mut p = LpProblem::new(OptSense::Maximize, vec![1.0, 0.0]);
        p.set_bound(1, VarBound::Free);
        p.add_row(&[1.0, 1.0], RowSense::Le, 3.0).unwrap();
        let t = p.to_text("demo");
        for section in ["NAME demo", "SENSE MAX", "ROWS", " L r1", "COLUMNS", " x1 obj 1.000000000000", "RHS", " rhs r1 3.000000000000", "BOUNDS", " FR bnd x2", "ENDATA"] {
            assert!(t.contains(section), "missing {section:?} in\n{t}");
        }
    }
}
