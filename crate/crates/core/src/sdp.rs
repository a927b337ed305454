//! Affine matrix expressions, semidefinite programs over them, and a conic
//! solver backend.

use std::collections::BTreeMap;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// `coeffs . x + constant >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub name: String,
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl LinearConstraint {
    pub fn new(name: impl Into<String>, coeffs: Vec<f64>, constant: f64) -> Self {
        Self {
            name: name.into(),
            coeffs,
            constant,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Re-indexes the coefficients onto a larger variable set.
    pub fn embed(&self, offset: usize, total: usize) -> Self {
        let mut coeffs = vec![0.0; total];
        coeffs[offset..offset + self.coeffs.len()].copy_from_slice(&self.coeffs);
        Self::new(self.name.clone(), coeffs, self.constant)
    }
}

/// `constant + sum_i x_i * terms[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    constant: Mat,
    terms: BTreeMap<usize, Mat>,
}

impl AffineMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(linalg::zeros(rows, cols))
    }

    pub fn constant(m: Mat) -> Self {
        Self {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn term(var: usize, coeff: Mat) -> Self {
        let mut out = Self::zeros(coeff.nrows(), coeff.ncols());
        out.terms.insert(var, coeff);
        out
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn constant_part(&self) -> &Mat {
        &self.constant
    }

    pub fn terms(&self) -> &BTreeMap<usize, Mat> {
        &self.terms
    }

    /// True when no variable has a nonzero coefficient.
    pub fn is_constant(&self) -> bool {
        self.terms.values().all(|m| m.iter().all(|&v| v == 0.0))
    }

    fn map(&self, f: impl Fn(&Mat) -> Mat) -> Self {
        Self {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(&k, m)| (k, f(m))).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(
            (self.nrows(), self.ncols()),
            (other.nrows(), other.ncols()),
            "affine matrix shapes differ"
        );
        let mut out = self.clone();
        out.constant += &other.constant;
        for (&k, m) in &other.terms {
            out.terms
                .entry(k)
                .and_modify(|t| *t += m)
                .or_insert_with(|| m.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn add_constant(&self, m: &Mat) -> Self {
        let mut out = self.clone();
        out.constant += m;
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    /// `left * self`.
    pub fn left_mul(&self, left: &Mat) -> Self {
        self.map(|m| left * m)
    }

    /// `self * right`.
    pub fn right_mul(&self, right: &Mat) -> Self {
        self.map(|m| m * right)
    }

    /// `t' self t`.
    pub fn congruence(&self, t: &Mat) -> Self {
        let tt = t.transpose();
        self.map(|m| &tt * m * t)
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    /// `(self + self') / 2`.
    pub fn sym(&self) -> Self {
        self.map(linalg::sym)
    }

    /// `self' * k * other + other' * k' * self` for constant `k`, linear when
    /// at most one side carries variables.
    pub fn cross(&self, k: &Mat, other: &Self) -> Result<Self> {
        if !self.is_constant() && !other.is_constant() {
            return Err(Error::Unsupported("product of two variable expressions".into()));
        }
        let prod = if self.is_constant() {
            other.left_mul(&(self.constant.transpose() * k))
        } else {
            self.transpose().right_mul(&(k * &other.constant))
        };
        Ok(prod.add(&prod.transpose()))
    }

    /// Submatrix view as a new expression.
    pub fn view(&self, start: (usize, usize), shape: (usize, usize)) -> Self {
        self.map(|m| m.view(start, shape).into_owned())
    }

    pub fn eval(&self, x: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (&k, m) in &self.terms {
            out += m * x[k];
        }
        out
    }

    pub fn block(grid: &[Vec<AffineMatrix>]) -> Self {
        let rows: Vec<usize> = grid.iter().map(|r| r[0].nrows()).collect();
        let cols: Vec<usize> = grid[0].iter().map(|b| b.ncols()).collect();
        let (nr, nc) = (rows.iter().sum(), cols.iter().sum());
        let mut out = Self::zeros(nr, nc);
        let mut r0 = 0;
        for (i, row) in grid.iter().enumerate() {
            let mut c0 = 0;
            for (j, b) in row.iter().enumerate() {
                assert_eq!((b.nrows(), b.ncols()), (rows[i], cols[j]), "ragged affine block");
                out.constant.view_mut((r0, c0), (rows[i], cols[j])).copy_from(&b.constant);
                for (&k, m) in &b.terms {
                    out.terms
                        .entry(k)
                        .or_insert_with(|| linalg::zeros(nr, nc))
                        .view_mut((r0, c0), (rows[i], cols[j]))
                        .copy_from(m);
                }
                c0 += cols[j];
            }
            r0 += rows[i];
        }
        out
    }

    /// Scalar `1 x 1` expression turned into a linear constraint `expr >= 0`.
    pub fn to_linear(&self, name: &str, num_vars: usize) -> Result<LinearConstraint> {
        if self.nrows() != 1 || self.ncols() != 1 {
            return Err(Error::dim("scalar expression", "1x1", format!("{}x{}", self.nrows(), self.ncols())));
        }
        let mut coeffs = vec![0.0; num_vars];
        for (&k, m) in &self.terms {
            coeffs[k] = m[(0, 0)];
        }
        Ok(LinearConstraint::new(name, coeffs, self.constant[(0, 0)]))
    }

    pub fn trace(&self) -> Self {
        self.map(|m| Mat::from_element(1, 1, m.trace()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariableSet {
    names: Vec<String>,
}

impl VariableSet {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn scalar(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.names.len() - 1
    }

    /// Unconstrained `rows x cols` matrix variable, row-major; returns the
    /// expression and the first variable index.
    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> (AffineMatrix, usize) {
        let first = self.len();
        let mut out = AffineMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let k = self.scalar(format!("{name}[{i},{j}]"));
                let mut e = linalg::zeros(rows, cols);
                e[(i, j)] = 1.0;
                out.terms.insert(k, e);
            }
        }
        (out, first)
    }

    /// Symmetric `n x n` variable over its upper triangle (row-major).
    pub fn symmetric(&mut self, name: &str, n: usize) -> (AffineMatrix, usize) {
        let first = self.len();
        let mut out = AffineMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let k = self.scalar(format!("{name}[{i},{j}]"));
                let mut e = linalg::zeros(n, n);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                out.terms.insert(k, e);
            }
        }
        (out, first)
    }
}

/// Reads a symmetric matrix back from the variables created by
/// [`VariableSet::symmetric`].
pub fn unpack_symmetric(x: &[f64], first: usize, n: usize) -> Mat {
    let mut out = linalg::zeros(n, n);
    let mut k = first;
    for i in 0..n {
        for j in i..n {
            out[(i, j)] = x[k];
            out[(j, i)] = x[k];
            k += 1;
        }
    }
    out
}

/// `expr >= margin * I` in the semidefinite order.
#[derive(Debug, Clone)]
pub struct Lmi {
    pub name: String,
    pub expr: AffineMatrix,
    pub margin: f64,
}

impl Lmi {
    pub fn size(&self) -> usize {
        self.expr.nrows()
    }

    /// Smallest eigenvalue of the (symmetrized) block at `x`.
    pub fn attained(&self, x: &[f64]) -> f64 {
        linalg::eig_extremes(&linalg::sym(&self.expr.eval(x))).0
    }
}

/// Minimize `objective . x` subject to LMIs and affine inequalities.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    pub vars: VariableSet,
    pub objective: Vec<f64>,
    pub lmis: Vec<Lmi>,
    pub linear: Vec<LinearConstraint>,
}

impl SdpProblem {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn require_psd(&mut self, name: &str, expr: AffineMatrix, margin: f64) {
        assert_eq!(expr.nrows(), expr.ncols(), "LMI block must be square");
        self.lmis.push(Lmi {
            name: name.into(),
            expr: expr.sym(),
            margin,
        });
    }

    /// `expr <= -margin * I`.
    pub fn require_nsd(&mut self, name: &str, expr: AffineMatrix, margin: f64) {
        self.require_psd(name, expr.scale(-1.0), margin);
    }

    pub fn require_nonneg(&mut self, c: LinearConstraint) {
        self.linear.push(c);
    }

    /// Worst value of the affine inequalities at `x`.
    pub fn worst_linear(&self, x: &[f64]) -> f64 {
        self.linear.iter().map(|c| c.eval(x)).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Solved,
    AlmostSolved,
    Infeasible,
    AlmostInfeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
    NumericalError,
}

impl SolveStatus {
    pub fn is_solved(self) -> bool {
        matches!(self, Self::Solved | Self::AlmostSolved)
    }

    pub fn is_infeasible(self) -> bool {
        matches!(self, Self::Infeasible | Self::AlmostInfeasible)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).map_err(|_| std::fmt::Error)?;
        f.write_str(s.as_str().unwrap_or("unknown"))
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub seconds: f64,
}

/// Backend contract: variables, affine PSD blocks, affine inequalities and a
/// linear objective in; values and status out.
pub trait SdpSolver: Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iter: u32,
    /// Seconds; zero or negative disables the limit.
    pub time_limit: f64,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            time_limit: 0.0,
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
            tol_feas: 1e-9,
            verbose: false,
        }
    }
}

impl SolverOptions {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Interior-point backend built on Clarabel.
#[derive(Debug, Clone, Default)]
pub struct ClarabelSolver {
    pub options: SolverOptions,
}

impl ClarabelSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self { options }
    }
}

fn svec_index(i: usize, j: usize) -> usize {
    let (r, c) = if i <= j { (i, j) } else { (j, i) };
    c * (c + 1) / 2 + r
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved => SolveStatus::Solved,
        SolverStatus::AlmostSolved => SolveStatus::AlmostSolved,
        SolverStatus::PrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::AlmostPrimalInfeasible => SolveStatus::AlmostInfeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations => SolveStatus::IterationLimit,
        SolverStatus::MaxTime => SolveStatus::TimeLimit,
        _ => SolveStatus::NumericalError,
    }
}

impl SdpSolver for ClarabelSolver {
    fn name(&self) -> &str {
        "clarabel"
    }

    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution> {
        let n = problem.num_vars();
        if problem.objective.len() != n {
            return Err(Error::dim("objective", n, problem.objective.len()));
        }
        let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::new();
        let mut cones = Vec::new();

        // Clarabel form: A x + s = b, s in K.
        if !problem.linear.is_empty() {
            for c in &problem.linear {
                if c.coeffs.len() != n {
                    return Err(Error::dim("constraint coefficients", n, format!("{} ({})", c.coeffs.len(), c.name)));
                }
                let row = b.len();
                for (k, &v) in c.coeffs.iter().enumerate() {
                    if v != 0.0 {
                        ri.push(row);
                        ci.push(k);
                        vals.push(-v);
                    }
                }
                b.push(c.constant);
            }
            cones.push(SupportedConeT::NonnegativeConeT(problem.linear.len()));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        for lmi in &problem.lmis {
            let m = lmi.size();
            let base = b.len();
            let shifted = lmi.expr.constant_part() - linalg::eye(m) * lmi.margin;
            for j in 0..m {
                for i in 0..=j {
                    let scale = if i == j { 1.0 } else { sqrt2 };
                    b.push(scale * shifted[(i, j)]);
                }
            }
            for (&k, coeff) in lmi.expr.terms() {
                for j in 0..m {
                    for i in 0..=j {
                        let v = coeff[(i, j)];
                        if v != 0.0 {
                            let scale = if i == j { 1.0 } else { sqrt2 };
                            ri.push(base + svec_index(i, j));
                            ci.push(k);
                            vals.push(-scale * v);
                        }
                    }
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(m));
        }

        let a = CscMatrix::new_from_triplets(b.len(), n, ri, ci, vals);
        let p = CscMatrix::zeros((n, n));
        let o = &self.options;
        let mut builder = DefaultSettingsBuilder::default();
        builder
            .verbose(o.verbose)
            .max_iter(o.max_iter)
            .tol_gap_abs(o.tol_gap_abs)
            .tol_gap_rel(o.tol_gap_rel)
            .tol_feas(o.tol_feas);
        if o.time_limit > 0.0 {
            builder.time_limit(o.time_limit);
        }
        let settings = builder.build().map_err(|e| Error::Solver(e.to_string()))?;
        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &problem.objective, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        Ok(SdpSolution {
            status: map_status(sol.status),
            x: sol.x.clone(),
            objective: sol.obj_val,
            iterations: sol.iterations,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn affine_algebra_matches_evaluation() {
        let mut vars = VariableSet::default();
        let (x, _) = vars.symmetric("X", 2);
        let t = vars.scalar("t");
        let k = Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let expr = x
            .congruence(&k)
            .add(&AffineMatrix::term(t, linalg::eye(2)))
            .add_constant(&linalg::eye(2));
        let vals = [1.0, 0.5, 2.0, 3.0];
        let xm = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let expect = k.transpose() * xm * &k + linalg::eye(2) * 4.0;
        assert!((expr.eval(&vals) - expect).amax() < 1e-14);
        assert_eq!(unpack_symmetric(&vals, 0, 2), Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]));

        let blk = AffineMatrix::block(&[
            vec![expr.clone(), AffineMatrix::zeros(2, 1)],
            vec![AffineMatrix::zeros(1, 2), AffineMatrix::term(t, linalg::eye(1))],
        ]);
        let e = blk.eval(&vals);
        assert_eq!(e.nrows(), 3);
        assert_eq!(e[(2, 2)], 3.0);
        assert_eq!(blk.view((0, 0), (2, 2)).eval(&vals), expr.eval(&vals));
        assert_eq!(expr.trace().eval(&vals)[(0, 0)], expr.eval(&vals).trace());
    }

    #[test]
    fn svec_layout() {
        assert_eq!(svec_index(0, 0), 0);
        assert_eq!(svec_index(0, 1), 1);
        assert_eq!(svec_index(1, 1), 2);
        assert_eq!(svec_index(2, 0), 3);
        assert_eq!(svec_index(2, 2), 5);
    }

    #[test]
    fn solves_small_sdp() {
        // min t s.t. [[t, 1], [1, 1]] >= 0 has optimum t = 1.
        let mut p = SdpProblem::default();
        let t = p.vars.scalar("t");
        let mut e = linalg::zeros(2, 2);
        e[(0, 0)] = 1.0;
        let expr = AffineMatrix::term(t, e).add_constant(&Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]));
        p.require_psd("block", expr, 0.0);
        p.objective = vec![1.0];
        let sol = ClarabelSolver::default().solve(&p).unwrap();
        assert!(sol.status.is_solved());
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn margin_and_linear_constraints() {
        // min x s.t. [[x]] >= 0.5 I and x - 2 >= 0
        let mut p = SdpProblem::default();
        let x = p.vars.scalar("x");
        p.require_psd("x", AffineMatrix::term(x, linalg::eye(1)), 0.5);
        p.require_nonneg(LinearConstraint::new("x>=2", vec![1.0], -2.0));
        p.objective = vec![1.0];
        let sol = ClarabelSolver::default().solve(&p).unwrap();
        assert_abs_diff_eq!(sol.x[0], 2.0, epsilon = 1e-6);
        assert!(p.lmis[0].attained(&sol.x) >= 0.5);
    }

    #[test]
    fn reports_infeasibility() {
        // x >= 1 and -x >= 0 cannot both hold
        let mut p = SdpProblem::default();
        let x = p.vars.scalar("x");
        p.require_psd("x", AffineMatrix::term(x, linalg::eye(2)).add_constant(&(linalg::eye(2) * -1.0)), 0.0);
        p.require_nsd("negx", AffineMatrix::term(x, linalg::eye(1)), 0.0);
        p.objective = vec![0.0];
        let sol = ClarabelSolver::default().solve(&p).unwrap();
        assert!(sol.status.is_infeasible(), "{:?}", sol.status);
    }

    #[test]
    fn cross_rejects_bilinear_terms() {
        let mut vars = VariableSet::default();
        let (x, _) = vars.matrix("x", 1, 1);
        assert!(x.cross(&linalg::eye(1), &x).is_err());
        let c = AffineMatrix::constant(Mat::from_element(1, 1, 2.0));
        assert_eq!(c.cross(&linalg::eye(1), &x).unwrap().eval(&[3.0])[(0, 0)], 12.0);
    }

    #[test]
    fn options_parse() {
        let o = SolverOptions::from_json(r#"{"max_iter": 50}"#).unwrap();
        assert_eq!(o.max_iter, 50);
        assert_eq!(o.tol_feas, SolverOptions::default().tol_feas);
        assert!(SolverOptions::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
