//! Certificates: solved programs turned into checkable, serializable data.

use serde::de::Deserializer;
use serde::ser::{Error as _, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{MultiplierShape, SlopeBand};
use crate::multiplier::{terminal_cost_z, DhdConstraintSystem, FirMultiplier};
use crate::sdp::{SdpSolver, SolveStatus};

use super::program::{CertProgram, ProgramValues, Variant};

/// Attained margins at the certified point. `lmi1` is the smallest
/// eigenvalue of the negated first block, so every entry is positive for a
/// valid certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margins {
    pub eps: f64,
    pub lmi1: f64,
    pub lmi2: f64,
    pub lmi3: Option<f64>,
    pub dhd: Option<f64>,
}

impl Margins {
    pub fn all_positive(&self) -> bool {
        self.lmi1 > 0.0 && self.lmi2 > 0.0 && self.lmi3.is_none_or(|m| m > 0.0) && self.dhd.is_none_or(|m| m >= 0.0)
    }

    /// Smallest of the semidefinite margins.
    pub fn worst_lmi(&self) -> f64 {
        self.lmi1.min(self.lmi2).min(self.lmi3.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub name: String,
    pub status: SolveStatus,
    pub iterations: u32,
    pub margins: Margins,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub cal_x: Mat,
    pub lambda: Vec<f64>,
    pub e: Mat,
    pub mu: f64,
    pub h: Option<Mat>,
    pub gamma: f64,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub band: SlopeBand,
    pub shape: MultiplierShape,
    pub variant: Variant,
    pub problem_sha: String,
    pub solver: SolverReport,
}

impl Certificate {
    pub fn multiplier(&self) -> Result<FirMultiplier> {
        FirMultiplier::new(self.shape, self.lambda.clone(), self.e.clone())
    }

    /// Ellipsoid size `1 / gamma`.
    pub fn size(&self) -> f64 {
        1.0 / self.gamma
    }

    /// Plant-state block `X` of `calX` for a plant of order `n`.
    pub fn x_block(&self, n: usize) -> Result<Mat> {
        let k = self.cal_x.nrows();
        if n > k {
            return Err(Error::dim("plant order", format!("<= {k}"), n));
        }
        Ok(self.cal_x.view((k - n, k - n), (n, n)).into_owned())
    }

    /// `calX + Zcal(E)` for a plant of order `n` and channel width `d`.
    pub fn storage_matrix(&self, n: usize, d: usize) -> Result<Mat> {
        let n_psi = self.shape.filter_order() * d;
        if n_psi + n != self.cal_x.nrows() {
            return Err(Error::dim("calX", n_psi + n, self.cal_x.nrows()));
        }
        let mut out = self.cal_x.clone();
        let z = terminal_cost_z(&self.e, self.shape, d)?;
        let mut top = out.view_mut((0, 0), (n_psi, n_psi));
        top += z;
        Ok(out)
    }

    /// `K` with `|x_t| <= K rho^t |x_0|` for every loop the certificate covers
    /// globally: `sqrt(lmax(X) / lmin(S))`, where `S` is the Schur complement
    /// of the filter block in `calX + Zcal(E)`.
    pub fn decay_constant(&self, n: usize, d: usize) -> Result<f64> {
        let (_, xmax) = linalg::eig_extremes(&self.x_block(n)?);
        let m = self.storage_matrix(n, d)?;
        let np = m.nrows() - n;
        let not_pd = || Error::param("calX", "storage matrix is not positive definite");
        let mut s = m.view((np, np), (n, n)).into_owned();
        if np > 0 {
            let chol = m.view((0, 0), (np, np)).into_owned().cholesky().ok_or_else(not_pd)?;
            let cross = m.view((0, np), (np, n)).into_owned();
            s -= cross.transpose() * chol.solve(&cross);
        }
        let (smin, _) = linalg::eig_extremes(&s);
        if smin <= 0.0 {
            return Err(not_pd());
        }
        Ok((xmax / smin).sqrt())
    }

    /// `c` with `sum_t rho^{-2t} |x_t|^2 <= c^2 |x_0|^2`, from the first
    /// block's margin: `c^2 = lmax(X) / margin`.
    pub fn energy_constant(&self, n: usize) -> Result<f64> {
        let (_, xmax) = linalg::eig_extremes(&self.x_block(n)?);
        let delta = self.solver.margins.lmi1;
        if delta <= 0.0 {
            return Err(Error::param("margins", "first block has no strict margin"));
        }
        Ok((xmax / delta).sqrt())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CertificateFile::from_cert(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CertificateFile = serde_json::from_str(text)?;
        file.into_cert()
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

/// A program the solver reported as infeasible (or that yields no certificate).
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasible {
    pub status: SolveStatus,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Certified(Box<Certificate>),
    Infeasible(Infeasible),
}

/// Metadata copied into a certificate.
#[derive(Debug, Clone)]
pub struct CertificateContext {
    pub band: SlopeBand,
    pub alpha: f64,
    pub beta: f64,
    pub variant: Variant,
    pub problem_sha: String,
}

/// Solves an assembled program. Infeasibility reported by the solver is an
/// `Ok(Infeasible)`; breakdowns and points without strict margins are errors.
pub fn solve(program: &CertProgram, ctx: &CertificateContext, solver: &dyn SdpSolver) -> Result<SolveOutcome> {
    let sol = solver.solve(&program.sdp)?;
    if sol.status.is_infeasible() {
        return Ok(SolveOutcome::Infeasible(Infeasible {
            status: sol.status,
            mu: program.mu,
        }));
    }
    if !sol.status.is_solved() {
        return Err(Error::Solver(format!("{} stopped with status {}", solver.name(), sol.status)));
    }
    let mut values = program.values(&sol.x)?;
    if program.ozf {
        values.multiplier.repair(program.rho);
    }
    let n = program.layout.n;
    let n_psi = program.interconnection.n_psi;
    let trace = values.cal_x.view((n_psi, n_psi), (n, n)).trace();
    values.t = values.t.max(trace);
    let x = program.pack(&values);
    let margins = evaluate_margins(program, &values, &x);
    if !margins.all_positive() {
        return Err(Error::Solver(format!(
            "{} returned a point without strict margins (worst {:.3e})",
            solver.name(),
            margins.worst_lmi()
        )));
    }
    let mut gamma = values.t.sqrt();
    while gamma * gamma < trace {
        gamma = gamma.next_up();
    }
    let ProgramValues { cal_x, multiplier, h, .. } = values;
    Ok(SolveOutcome::Certified(Box::new(Certificate {
        cal_x,
        lambda: multiplier.lambda().to_vec(),
        e: multiplier.e().clone(),
        mu: program.mu.unwrap_or(0.0),
        h,
        gamma,
        rho: program.rho,
        alpha: ctx.alpha,
        beta: ctx.beta,
        band: ctx.band,
        shape: program.shape,
        variant: ctx.variant,
        problem_sha: ctx.problem_sha.clone(),
        solver: SolverReport {
            name: solver.name().to_string(),
            status: sol.status,
            iterations: sol.iterations,
            margins,
        },
    })))
}

pub(crate) fn evaluate_margins(program: &CertProgram, values: &ProgramValues, x: &[f64]) -> Margins {
    let find = |name: &str| program.sdp.lmis.iter().find(|l| l.name == name).map(|l| l.attained(x));
    let dhd = program.ozf.then(|| DhdConstraintSystem::new(program.shape, program.rho).worst(&values.multiplier));
    Margins {
        eps: program.eps,
        lmi1: find("lmi1").unwrap_or(f64::INFINITY),
        lmi2: find("lmi2").unwrap_or(f64::INFINITY),
        lmi3: find("lmi3"),
        dhd,
    }
}

/// Decimal float written with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Real(f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("non-finite number {}", self.0)));
        }
        RawValue::from_string(format!("{:.16e}", self.0))
            .map_err(S::Error::custom)?
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Real)
    }
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<Real>,
}

impl MatrixFile {
    fn from_mat(m: &Mat) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| Real(m[(i, j)]))).collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn into_mat(self, name: &'static str) -> Result<Mat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::dim(name, self.rows * self.cols, self.data.len()));
        }
        let data: Vec<f64> = self.data.into_iter().map(|r| r.0).collect();
        Ok(Mat::from_row_slice(self.rows, self.cols, &data))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BandFile {
    m: Real,
    #[serde(rename = "L")]
    l: Real,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarginsFile {
    eps: Real,
    lmi1: Real,
    lmi2: Real,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lmi3: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dhd: Option<Real>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverFile {
    name: String,
    status: SolveStatus,
    iterations: u32,
    margins: MarginsFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateFile {
    #[serde(rename = "calX")]
    cal_x: MatrixFile,
    lambda: Vec<Real>,
    #[serde(rename = "E")]
    e: MatrixFile,
    mu: Real,
    #[serde(rename = "H")]
    h: Option<MatrixFile>,
    gamma: Real,
    rho: Real,
    alpha: Real,
    beta: Real,
    band: BandFile,
    shape: MultiplierShape,
    variant: Variant,
    problem_sha: String,
    solver: SolverFile,
}

impl CertificateFile {
    fn from_cert(c: &Certificate) -> Self {
        let m = &c.solver.margins;
        Self {
            cal_x: MatrixFile::from_mat(&c.cal_x),
            lambda: reals(&c.lambda),
            e: MatrixFile::from_mat(&c.e),
            mu: Real(c.mu),
            h: c.h.as_ref().map(MatrixFile::from_mat),
            gamma: Real(c.gamma),
            rho: Real(c.rho),
            alpha: Real(c.alpha),
            beta: Real(c.beta),
            band: BandFile {
                m: Real(c.band.m),
                l: Real(c.band.l),
            },
            shape: c.shape,
            variant: c.variant,
            problem_sha: c.problem_sha.clone(),
            solver: SolverFile {
                name: c.solver.name.clone(),
                status: c.solver.status,
                iterations: c.solver.iterations,
                margins: MarginsFile {
                    eps: Real(m.eps),
                    lmi1: Real(m.lmi1),
                    lmi2: Real(m.lmi2),
                    lmi3: m.lmi3.map(Real),
                    dhd: m.dhd.map(Real),
                },
            },
        }
    }

    fn into_cert(self) -> Result<Certificate> {
        let cal_x = self.cal_x.into_mat("calX")?;
        if cal_x.nrows() != cal_x.ncols() {
            return Err(Error::Format("calX must be square".into()));
        }
        let band = SlopeBand::new(self.band.m.0, self.band.l.0)?;
        let lambda: Vec<f64> = self.lambda.into_iter().map(|r| r.0).collect();
        let e = self.e.into_mat("E")?;
        FirMultiplier::new(self.shape, lambda.clone(), e.clone())?;
        let m = self.solver.margins;
        Ok(Certificate {
            cal_x,
            lambda,
            e,
            mu: self.mu.0,
            h: self.h.map(|h| h.into_mat("H")).transpose()?,
            gamma: self.gamma.0,
            rho: self.rho.0,
            alpha: self.alpha.0,
            beta: self.beta.0,
            band,
            shape: self.shape,
            variant: self.variant,
            problem_sha: self.problem_sha,
            solver: SolverReport {
                name: self.solver.name,
                status: self.solver.status,
                iterations: self.solver.iterations,
                margins: Margins {
                    eps: m.eps.0,
                    lmi1: m.lmi1.0,
                    lmi2: m.lmi2.0,
                    lmi3: m.lmi3.map(|r| r.0),
                    dhd: m.dhd.map(|r| r.0),
                },
            },
        })
    }
}
