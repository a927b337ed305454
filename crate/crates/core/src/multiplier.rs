//! FIR O'Shea-Zames-Falb multipliers with terminal cost.
//!
//! Coefficients are stored as `(lambda_{nu1}, ..., lambda_1 | lambda_0 |
//! lambda_{-1}, ..., lambda_{-nu2})`. The filter output is ordered
//! `v = (y1, u1, y2, u2)` where `u1 = L z - w`, `u2 = -m z + w`,
//! `y1 = psi_1 u1` with `psi_1(z) = lambda_0 + sum_k lambda_k z^{-k}` and
//! `y2 = psi_2 u2` with `psi_2(z) = sum_k lambda_{-k} z^{-k}`. The running
//! cost `P` and terminal cost `Z(E)` both depend on this ordering.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{sector_transform_matrix, MultiplierShape, SlopeBand};
use crate::sdp::LinearConstraint;

#[derive(Debug, Clone, PartialEq)]
pub struct FirMultiplier {
    shape: MultiplierShape,
    lambda: Vec<f64>,
    e: Mat,
}

impl FirMultiplier {
    pub fn new(shape: MultiplierShape, lambda: Vec<f64>, e: Mat) -> Result<Self> {
        if lambda.len() != shape.len() {
            return Err(Error::dim("lambda", shape.len(), lambda.len()));
        }
        if e.nrows() != shape.nu2 || e.ncols() != shape.nu1 {
            return Err(Error::dim(
                "E",
                format!("{}x{}", shape.nu2, shape.nu1),
                format!("{}x{}", e.nrows(), e.ncols()),
            ));
        }
        Ok(Self { shape, lambda, e })
    }

    /// `lambda_0 = 1`, everything else zero: the static sector multiplier.
    pub fn identity(shape: MultiplierShape) -> Self {
        let mut lambda = vec![0.0; shape.len()];
        lambda[shape.nu1] = 1.0;
        Self {
            shape,
            lambda,
            e: linalg::zeros(shape.nu2, shape.nu1),
        }
    }

    pub fn zero(shape: MultiplierShape) -> Self {
        Self {
            shape,
            lambda: vec![0.0; shape.len()],
            e: linalg::zeros(shape.nu2, shape.nu1),
        }
    }

    pub fn shape(&self) -> MultiplierShape {
        self.shape
    }
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
    pub fn e(&self) -> &Mat {
        &self.e
    }

    /// `lambda_k` for `-nu2 <= k <= nu1`, zero outside.
    pub fn coef(&self, k: isize) -> f64 {
        coef_of(&self.lambda, self.shape, k)
    }

    /// Extends to a longer shape with zero coefficients and zero-padded `E`.
    pub fn padded(&self, shape: MultiplierShape) -> Result<Self> {
        if shape.nu1 < self.shape.nu1 || shape.nu2 < self.shape.nu2 {
            return Err(Error::param("shape", "can only pad to a longer multiplier"));
        }
        let mut lambda = vec![0.0; shape.len()];
        for k in -(self.shape.nu2 as isize)..=(self.shape.nu1 as isize) {
            lambda[(shape.nu1 as isize - k) as usize] = self.coef(k);
        }
        // The most recent samples sit at the end of each filter chain.
        let mut e = linalg::zeros(shape.nu2, shape.nu1);
        let (r0, c0) = (shape.nu2 - self.shape.nu2, shape.nu1 - self.shape.nu1);
        e.view_mut((r0, c0), (self.shape.nu2, self.shape.nu1)).copy_from(&self.e);
        Self::new(shape, lambda, e)
    }

    /// Makes `(lambda, E)` satisfy the d.h.d. system exactly: clips the
    /// off-center coefficients and the off-diagonal `E` entries to their
    /// admissible side, then raises `lambda_0` just enough. Returns the
    /// largest change applied to any coefficient.
    pub fn repair(&mut self, rho: f64) -> f64 {
        let shape = self.shape;
        let mut change = 0.0f64;
        for (i, l) in self.lambda.iter_mut().enumerate() {
            if i != shape.nu1 && *l > 0.0 {
                change = change.max(*l);
                *l = 0.0;
            }
        }
        for i in 0..shape.nu2 {
            for j in 0..shape.nu1 {
                let (r, c) = (shape.nu1 + 1 + i, shape.nu2 + 1 + j);
                if r != c {
                    let t = self.coef(r as isize - c as isize);
                    if self.e[(i, j)] < t {
                        change = change.max(t - self.e[(i, j)]);
                        self.e[(i, j)] = t;
                    }
                }
            }
        }
        let system = DhdConstraintSystem::new(shape, rho);
        let idx0 = shape.nu1;
        let mut x = system.pack(self);
        x[idx0] = 0.0;
        let mut needed = f64::NEG_INFINITY;
        for c in &system.constraints {
            let slope = c.coeffs[idx0];
            if slope > 0.0 {
                needed = needed.max(-c.eval(&x) / slope);
            }
        }
        let current = self.lambda[idx0];
        if needed > current - 1e-14 * (1.0 + needed.abs()) {
            let target = needed + 1e-14 * (1.0 + needed.abs());
            change = change.max(target - current);
            self.lambda[idx0] = target;
        }
        change
    }
}

fn coef_of(lambda: &[f64], shape: MultiplierShape, k: isize) -> f64 {
    if k > shape.nu1 as isize || k < -(shape.nu2 as isize) {
        0.0
    } else {
        lambda[(shape.nu1 as isize - k) as usize]
    }
}

/// `T^h(lambda)` with entry `(i, j) = lambda_{i-j}`.
pub fn toeplitz_t(lambda: &[f64], shape: MultiplierShape, h: usize) -> Result<Mat> {
    if lambda.len() != shape.len() {
        return Err(Error::dim("lambda", shape.len(), lambda.len()));
    }
    if h == 0 {
        return Err(Error::param("h", "must be at least 1"));
    }
    Ok(Mat::from_fn(h, h, |i, j| coef_of(lambda, shape, i as isize - j as isize)))
}

/// Partition of `T^{h0}(lambda)`, `h0 = nu1 + 1 + nu2`, into rows
/// `(nu1 + 1) + nu2` and columns `(nu2 + 1) + nu1`:
/// `[[T12, T11], [T22, T21]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzBlocks {
    pub t11: Mat,
    pub t12: Mat,
    pub t21: Mat,
    pub t22: Mat,
}

impl ToeplitzBlocks {
    pub fn assemble(&self) -> Mat {
        linalg::block(&[vec![&self.t12, &self.t11], vec![&self.t22, &self.t21]])
    }
}

pub fn toeplitz_blocks(lambda: &[f64], shape: MultiplierShape) -> Result<ToeplitzBlocks> {
    let t = toeplitz_t(lambda, shape, shape.len())?;
    let (r, c) = (shape.nu1 + 1, shape.nu2 + 1);
    Ok(ToeplitzBlocks {
        t12: t.view((0, 0), (r, c)).into_owned(),
        t11: t.view((0, c), (r, shape.nu1)).into_owned(),
        t22: t.view((r, 0), (shape.nu2, c)).into_owned(),
        t21: t.view((r, c), (shape.nu2, shape.nu1)).into_owned(),
    })
}

/// `F^h_{1/rho} = diag(1, rho^-1, ..., rho^-(h-1))`.
pub fn weight_f(rho: f64, h: usize) -> Result<Mat> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", format!("must be positive, got {rho}")));
    }
    Ok(Mat::from_diagonal(&Vector::from_fn(h, |k, _| rho.powi(-(k as i32)))))
}

/// State-space realization of the multiplier filter driven by `(z, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRealization {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub shape: MultiplierShape,
    pub dim: usize,
}

/// The realization written as `C(lambda) = C0 + sum_i lambda_i C_i`, same for `D`.
#[derive(Debug, Clone)]
pub struct FilterBasis {
    pub a: Mat,
    pub b: Mat,
    pub c0: Mat,
    pub d0: Mat,
    pub c_coef: Vec<Mat>,
    pub d_coef: Vec<Mat>,
    pub shape: MultiplierShape,
    pub dim: usize,
}

impl FilterBasis {
    pub fn new(shape: MultiplierShape, band: SlopeBand, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("d", "must be at least 1"));
        }
        let s = sector_transform_matrix(band)?;
        let id = linalg::eye(dim);
        let (n1, n2) = (shape.nu1, shape.nu2);
        let npsi = n1 + n2;

        let a = linalg::kron(
            &linalg::block_diag(&[&linalg::jordan_nilpotent(n1), &linalg::jordan_nilpotent(n2)]),
            &id,
        );
        let mut e_last = linalg::zeros(npsi, 2);
        if n1 > 0 {
            e_last[(n1 - 1, 0)] = 1.0;
        }
        if n2 > 0 {
            e_last[(npsi - 1, 1)] = 1.0;
        }
        let b = linalg::kron(&(e_last * &s), &id);

        // Output rows (block units): 0 = y1, 1 = u1, 2 = y2, 3 = u2.
        let mut d0_small = linalg::zeros(4, 2);
        d0_small[(1, 0)] = 1.0;
        d0_small[(3, 1)] = 1.0;
        let c0 = linalg::zeros(4 * dim, npsi * dim);
        let d0 = linalg::kron(&(d0_small * &s), &id);

        let mut c_coef = Vec::with_capacity(shape.len());
        let mut d_coef = Vec::with_capacity(shape.len());
        for idx in 0..shape.len() {
            let k = n1 as isize - idx as isize;
            let mut cs = linalg::zeros(4, npsi);
            let mut ds = linalg::zeros(4, 2);
            if k > 0 {
                // y1 += lambda_k u1(t-k); the chain holds u1(t-nu1), ..., u1(t-1)
                cs[(0, n1 - k as usize)] = 1.0;
            } else if k == 0 {
                ds[(0, 0)] = 1.0;
            } else {
                // y2 += lambda_{-j} u2(t-j)
                let j = (-k) as usize;
                cs[(2, n1 + n2 - j)] = 1.0;
            }
            c_coef.push(linalg::kron(&cs, &id));
            d_coef.push(linalg::kron(&(ds * &s), &id));
        }
        Ok(Self {
            a,
            b,
            c0,
            d0,
            c_coef,
            d_coef,
            shape,
            dim,
        })
    }

    pub fn evaluate(&self, lambda: &[f64]) -> Result<FilterRealization> {
        if lambda.len() != self.shape.len() {
            return Err(Error::dim("lambda", self.shape.len(), lambda.len()));
        }
        let mut c = self.c0.clone();
        let mut d = self.d0.clone();
        for (i, &l) in lambda.iter().enumerate() {
            c += &self.c_coef[i] * l;
            d += &self.d_coef[i] * l;
        }
        Ok(FilterRealization {
            a: self.a.clone(),
            b: self.b.clone(),
            c,
            d,
            shape: self.shape,
            dim: self.dim,
        })
    }
}

pub fn filter_realization(mult: &FirMultiplier, band: SlopeBand, dim: usize) -> Result<FilterRealization> {
    FilterBasis::new(mult.shape, band, dim)?.evaluate(&mult.lambda)
}

/// Filter response to a finite input sequence; `xi` has one more entry than `v`.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub v: Vec<Vector>,
    pub xi: Vec<Vector>,
}

impl FilterRealization {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Drives the filter from `xi_0 = 0` with the stacked inputs `(z_t, w_t)`.
    pub fn drive(&self, z: &[Vector], w: &[Vector]) -> Result<FilterRun> {
        if z.len() != w.len() {
            return Err(Error::dim("filter inputs", z.len(), w.len()));
        }
        let mut xi = Vector::zeros(self.state_dim());
        let mut run = FilterRun {
            v: Vec::with_capacity(z.len()),
            xi: Vec::with_capacity(z.len() + 1),
        };
        for (zt, wt) in z.iter().zip(w) {
            let input = Vector::from_iterator(2 * self.dim, zt.iter().chain(wt.iter()).copied());
            run.v.push(&self.c * &xi + &self.d * &input);
            let next = &self.a * &xi + &self.b * &input;
            run.xi.push(xi);
            xi = next;
        }
        run.xi.push(xi);
        Ok(run)
    }
}

/// Running cost with `v'Pv = 2 (y1'u2 + u1'y2)` for `v = (y1, u1, y2, u2)`.
pub fn running_cost_p(dim: usize) -> Mat {
    let swap = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let off = linalg::kron(&swap, &linalg::eye(dim));
    let z = linalg::zeros(2 * dim, 2 * dim);
    linalg::block(&[vec![&z, &off], vec![&off, &z]])
}

/// Terminal cost `Z(E) = [[0, E'(x)I], [E(x)I, 0]]` on `xi = (xi1, xi2)`.
pub fn terminal_cost_z(e: &Mat, shape: MultiplierShape, dim: usize) -> Result<Mat> {
    if e.nrows() != shape.nu2 || e.ncols() != shape.nu1 {
        return Err(Error::dim(
            "E",
            format!("{}x{}", shape.nu2, shape.nu1),
            format!("{}x{}", e.nrows(), e.ncols()),
        ));
    }
    let id = linalg::eye(dim);
    let ek = linalg::kron(e, &id);
    let ekt = ek.transpose();
    let z1 = linalg::zeros(shape.nu1 * dim, shape.nu1 * dim);
    let z2 = linalg::zeros(shape.nu2 * dim, shape.nu2 * dim);
    Ok(linalg::block(&[vec![&z1, &ekt], vec![&ek, &z2]]))
}

/// Outcome of a doubly-hyperdominance test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhdReport {
    pub is_dhd: bool,
    /// Largest off-diagonal entry (must be `<= 0`).
    pub max_offdiag: f64,
    pub min_row_sum: f64,
    pub min_col_sum: f64,
}

impl DhdReport {
    /// Signed margin: nonnegative iff the matrix is d.h.d. (tolerance aside).
    pub fn margin(&self) -> f64 {
        (-self.max_offdiag).min(self.min_row_sum).min(self.min_col_sum)
    }
}

pub fn dhd_check(m: &Mat, tol: f64) -> Result<DhdReport> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim("d.h.d. check", "square", format!("{}x{}", m.nrows(), m.ncols())));
    }
    let n = m.nrows();
    let mut max_offdiag = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_offdiag = max_offdiag.max(m[(i, j)]);
            }
        }
    }
    let min_row_sum = (0..n).map(|i| m.row(i).sum()).fold(f64::INFINITY, f64::min);
    let min_col_sum = (0..n).map(|j| m.column(j).sum()).fold(f64::INFINITY, f64::min);
    let max_offdiag = if n < 2 { 0.0 } else { max_offdiag };
    Ok(DhdReport {
        is_dhd: max_offdiag <= tol && min_row_sum >= -tol && min_col_sum >= -tol,
        max_offdiag,
        min_row_sum,
        min_col_sum,
    })
}

/// The affine inequalities in `(lambda, vec(E))` that make the weighted
/// bracket `F [[T12, T11], [T22, T21 - E]] F` doubly hyperdominant, together
/// with the two weighted coefficient sums. Variables are ordered as
/// `lambda` followed by `E` row-major.
#[derive(Debug, Clone)]
pub struct DhdConstraintSystem {
    pub shape: MultiplierShape,
    pub rho: f64,
    pub constraints: Vec<LinearConstraint>,
}

impl DhdConstraintSystem {
    pub fn new(shape: MultiplierShape, rho: f64) -> Self {
        let h0 = shape.len();
        let nvar = h0 + shape.nu1 * shape.nu2;
        let w: Vec<f64> = (0..h0).map(|k| rho.powi(-(k as i32))).collect();

        // entry(i, j) of the weighted bracket as an affine form
        let entry = |i: usize, j: usize| -> Vec<f64> {
            let mut coeffs = vec![0.0; nvar];
            let k = i as isize - j as isize;
            if k <= shape.nu1 as isize && k >= -(shape.nu2 as isize) {
                coeffs[(shape.nu1 as isize - k) as usize] += w[i] * w[j];
            }
            if i > shape.nu1 && j > shape.nu2 {
                let (ei, ej) = (i - shape.nu1 - 1, j - shape.nu2 - 1);
                coeffs[h0 + ei * shape.nu1 + ej] -= w[i] * w[j];
            }
            coeffs
        };

        let mut constraints = Vec::new();
        for i in 0..h0 {
            for j in 0..h0 {
                if i != j {
                    let coeffs = entry(i, j).into_iter().map(|c| -c).collect();
                    constraints.push(LinearConstraint::new(format!("offdiag[{i},{j}]"), coeffs, 0.0));
                }
            }
        }
        for i in 0..h0 {
            let mut coeffs = vec![0.0; nvar];
            for j in 0..h0 {
                for (c, e) in coeffs.iter_mut().zip(entry(i, j)) {
                    *c += e;
                }
            }
            constraints.push(LinearConstraint::new(format!("row_sum[{i}]"), coeffs, 0.0));
        }
        for j in 0..h0 {
            let mut coeffs = vec![0.0; nvar];
            for i in 0..h0 {
                for (c, e) in coeffs.iter_mut().zip(entry(i, j)) {
                    *c += e;
                }
            }
            constraints.push(LinearConstraint::new(format!("col_sum[{j}]"), coeffs, 0.0));
        }
        for (name, sign) in [("weighted_sum_rho", 1), ("weighted_sum_rho_inv", -1)] {
            let mut coeffs = vec![0.0; nvar];
            for (idx, c) in coeffs.iter_mut().enumerate().take(h0) {
                let k = shape.nu1 as i32 - idx as i32;
                *c = rho.powi(sign * k);
            }
            constraints.push(LinearConstraint::new(name.to_string(), coeffs, 0.0));
        }
        Self { shape, rho, constraints }
    }

    pub fn num_variables(&self) -> usize {
        self.shape.len() + self.shape.nu1 * self.shape.nu2
    }

    pub fn pack(&self, mult: &FirMultiplier) -> Vec<f64> {
        let mut x = mult.lambda.clone();
        for i in 0..self.shape.nu2 {
            for j in 0..self.shape.nu1 {
                x.push(mult.e[(i, j)]);
            }
        }
        x
    }

    pub fn unpack(&self, x: &[f64]) -> Result<FirMultiplier> {
        let h0 = self.shape.len();
        let e = Mat::from_row_slice(self.shape.nu2, self.shape.nu1, &x[h0..]);
        FirMultiplier::new(self.shape, x[..h0].to_vec(), e)
    }

    /// Values of all constraints (each must be `>= 0`).
    pub fn evaluate(&self, mult: &FirMultiplier) -> Vec<f64> {
        let x = self.pack(mult);
        self.constraints.iter().map(|c| c.eval(&x)).collect()
    }

    pub fn worst(&self, mult: &FirMultiplier) -> f64 {
        self.evaluate(mult).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn is_satisfied(&self, mult: &FirMultiplier, tol: f64) -> bool {
        self.worst(mult) >= -tol
    }
}

/// `(J^{h-1} e, ..., J e, e)` for the chain of length `nu`.
pub fn chain_input_map(nu: usize, h: usize) -> Mat {
    let mut out = linalg::zeros(nu, h);
    for col in 0..h {
        let power = h - 1 - col;
        if power < nu {
            out[(nu - 1 - power, col)] = 1.0;
        }
    }
    out
}

/// `M^h = F^h [T^h(lambda) - (B2^h)' E B1^h] F^h`.
pub fn lifted_multiplier_matrix(mult: &FirMultiplier, rho: f64, h: usize) -> Result<Mat> {
    let t = toeplitz_t(&mult.lambda, mult.shape, h)?;
    let b1 = chain_input_map(mult.shape.nu1, h);
    let b2 = chain_input_map(mult.shape.nu2, h);
    let f = weight_f(rho, h)?;
    Ok(&f * (t - b2.transpose() * &mult.e * b1) * &f)
}

/// Both sides of the lifted identities for one pair of filter input blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftedForm {
    /// `1/2 sum_{t<h} v_t' P v_t` from simulating the realization.
    pub simulated_running: f64,
    /// `1/2 xi_h' Z(E) xi_h` from the same simulation.
    pub simulated_terminal: f64,
    /// `u2' (T^h(lambda) (x) I) u1`.
    pub running_product: f64,
    /// `u2' ((B2^h' E B1^h) (x) I) u1`.
    pub terminal_product: f64,
}

impl LiftedForm {
    pub fn scale(&self) -> f64 {
        1.0 + self.simulated_running.abs() + self.running_product.abs() + self.simulated_terminal.abs()
    }

    pub fn running_defect(&self) -> f64 {
        (self.simulated_running - self.running_product).abs()
    }

    pub fn terminal_defect(&self) -> f64 {
        (self.simulated_terminal - self.terminal_product).abs()
    }
}

pub fn lifted_form_oracle(
    mult: &FirMultiplier,
    band: SlopeBand,
    dim: usize,
    u1: &[Vector],
    u2: &[Vector],
) -> Result<LiftedForm> {
    if u1.len() != u2.len() || u1.is_empty() {
        return Err(Error::dim("lifted blocks", u1.len(), u2.len()));
    }
    let h = u1.len();
    let real = filter_realization(mult, band, dim)?;
    // (z, w) = S^{-1} (u1, u2) reproduces the requested filter inputs.
    let s_inv = sector_transform_matrix(band)?
        .try_inverse()
        .ok_or_else(|| Error::param("band", "S_{m,L} is singular"))?;
    let mut z = Vec::with_capacity(h);
    let mut w = Vec::with_capacity(h);
    for (a, b) in u1.iter().zip(u2) {
        if a.len() != dim || b.len() != dim {
            return Err(Error::dim("lifted block entry", dim, a.len().max(b.len())));
        }
        z.push(a * s_inv[(0, 0)] + b * s_inv[(0, 1)]);
        w.push(a * s_inv[(1, 0)] + b * s_inv[(1, 1)]);
    }
    let run = real.drive(&z, &w)?;
    let p = running_cost_p(dim);
    let simulated_running = 0.5 * run.v.iter().map(|v| v.dot(&(&p * v))).sum::<f64>();
    let zt = terminal_cost_z(&mult.e, mult.shape, dim)?;
    let xi_h = &run.xi[h];
    let simulated_terminal = 0.5 * xi_h.dot(&(&zt * xi_h));

    let stack = |blocks: &[Vector]| Vector::from_iterator(h * dim, blocks.iter().flat_map(|b| b.iter().copied()));
    let (s1, s2) = (stack(u1), stack(u2));
    let id = linalg::eye(dim);
    let t = linalg::kron(&toeplitz_t(&mult.lambda, mult.shape, h)?, &id);
    let b1 = chain_input_map(mult.shape.nu1, h);
    let b2 = chain_input_map(mult.shape.nu2, h);
    let corr = linalg::kron(&(b2.transpose() * &mult.e * b1), &id);
    Ok(LiftedForm {
        simulated_running,
        simulated_terminal,
        running_product: s2.dot(&(t * &s1)),
        terminal_product: s2.dot(&(corr * &s1)),
    })
}

/// Draws a multiplier that satisfies the d.h.d. system exactly.
///
/// Off-center coefficients are nonpositive, off-diagonal `E` entries sit on
/// their admissible side, and `lambda_0` is the smallest admissible value plus
/// a random slack (zero slack with probability 1/4, to exercise the boundary).
pub fn sample_feasible<R: Rng>(shape: MultiplierShape, rho: f64, rng: &mut R) -> FirMultiplier {
    let mut lambda: Vec<f64> = (0..shape.len())
        .map(|i| {
            if i == shape.nu1 || rng.random_bool(0.2) {
                0.0
            } else {
                -rng.random_range(0.0..1.0)
            }
        })
        .collect();
    lambda[shape.nu1] = 0.0;
    let mut mult = FirMultiplier::zero(shape);
    mult.lambda = lambda;
    for i in 0..shape.nu2 {
        for j in 0..shape.nu1 {
            let (r, c) = (shape.nu1 + 1 + i, shape.nu2 + 1 + j);
            mult.e[(i, j)] = if r == c {
                rng.random_range(-1.0..1.0)
            } else {
                mult.coef(r as isize - c as isize) + rng.random_range(0.0..1.0)
            };
        }
    }
    mult.lambda[shape.nu1] = f64::NEG_INFINITY;
    mult.repair(rho);
    if !rng.random_bool(0.25) {
        mult.lambda[shape.nu1] += rng.random_range(0.0..1.0);
    }
    mult
}
