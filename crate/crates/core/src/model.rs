//! Plant and loop data: the LTI system, the slope band, analysis problems,
//! exponential weighting, deadzone/saturation and closed-loop simulation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Discrete-time plant `x+ = A x + B w`, `z = C x + D w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Mat,
    b: Mat,
    c: Mat,
    d: Mat,
}

impl LtiSystem {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::dim("A", "non-empty square", format!("{}x{}", a.nrows(), a.ncols())));
        }
        let dd = b.ncols();
        if dd == 0 || b.nrows() != n {
            return Err(Error::dim("B", format!("{n}xd with d >= 1"), format!("{}x{}", b.nrows(), b.ncols())));
        }
        if c.nrows() != dd || c.ncols() != n {
            return Err(Error::dim("C", format!("{dd}x{n}"), format!("{}x{}", c.nrows(), c.ncols())));
        }
        if d.nrows() != dd || d.ncols() != dd {
            return Err(Error::dim("D", format!("{dd}x{dd}"), format!("{}x{}", d.nrows(), d.ncols())));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("system", format!("{name} has non-finite entries")));
            }
        }
        Ok(Self { a, b, c, d })
    }

    /// Plant with `D = 0`.
    pub fn strictly_proper(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let d = linalg::zeros(b.ncols(), b.ncols());
        Self::new(a, b, c, d)
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn d(&self) -> &Mat {
        &self.d
    }
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn d_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn has_zero_feedthrough(&self) -> bool {
        self.d.iter().all(|&v| v == 0.0)
    }

    pub(crate) fn require_zero_feedthrough(&self) -> Result<()> {
        if self.has_zero_feedthrough() {
            Ok(())
        } else {
            Err(Error::Unsupported(
                "the feedthrough matrix D must be exactly zero".into(),
            ))
        }
    }
}

/// Slope interval `[m, L]` with `m < L`, both finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeBand {
    pub m: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl SlopeBand {
    pub fn new(m: f64, l: f64) -> Result<Self> {
        let band = Self { m, l };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m.is_finite() && self.l.is_finite() && self.m < self.l {
            Ok(())
        } else {
            Err(Error::InvalidBand { m: self.m, l: self.l })
        }
    }

    pub fn width(&self) -> f64 {
        self.l - self.m
    }
}

/// `S_{m,L} = [[L, -1], [-m, 1]]`, mapping `(z, w)` to `(L z - w, -m z + w)`.
pub fn sector_transform_matrix(band: SlopeBand) -> Result<Mat> {
    band.validate()?;
    Ok(Mat::from_row_slice(2, 2, &[band.l, -1.0, -band.m, 1.0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorSpec {
    pub l: f64,
    pub enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiplierShape {
    pub nu1: usize,
    pub nu2: usize,
}

impl MultiplierShape {
    pub const STATIC: MultiplierShape = MultiplierShape { nu1: 0, nu2: 0 };

    pub fn new(nu1: usize, nu2: usize) -> Self {
        Self { nu1, nu2 }
    }

    /// Length `nu1 + 1 + nu2` of the coefficient vector.
    pub fn len(&self) -> usize {
        self.nu1 + 1 + self.nu2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn filter_order(&self) -> usize {
        self.nu1 + self.nu2
    }
}

/// Which nonlinearity closes the loop described by a problem file.
///
/// `Gradient` means any `w = grad f(z)` with `f` in the slope class of the
/// band. `Saturation` means `w = sat_{l,L}(z)` on the given plant, analyzed
/// through [`loop_transform_saturation`]; it requires the band `(0, L)`.
/// A problem file without the field gets `Deadzone` when the sector
/// condition is enabled and `Gradient` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    #[default]
    Gradient,
    Deadzone,
    Saturation,
}

/// A complete analysis problem as read from a problem file.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisProblem {
    pub system: LtiSystem,
    pub band: SlopeBand,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sector: Option<SectorSpec>,
    pub multiplier: MultiplierShape,
    pub loop_kind: LoopKind,
}

impl AnalysisProblem {
    pub fn validate(&self) -> Result<()> {
        self.band.validate()?;
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::param("rho", format!("must lie in (0, 1], got {}", self.rho)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be finite and >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("must be finite and >= 0, got {}", self.beta)));
        }
        if let Some(sector) = self.sector {
            if sector.enabled && !(sector.l > 0.0 && sector.l.is_finite()) {
                return Err(Error::param("sector.l", format!("must be positive, got {}", sector.l)));
            }
        }
        match self.loop_kind {
            LoopKind::Gradient => {}
            LoopKind::Deadzone | LoopKind::Saturation => {
                if self.system.d_dim() != 1 {
                    return Err(Error::Unsupported(
                        "deadzone/saturation loops are scalar-channel (d = 1)".into(),
                    ));
                }
                if self.band.m != 0.0 || self.band.l <= 0.0 {
                    return Err(Error::param(
                        "band",
                        "deadzone/saturation loops use the band (0, L) with L > 0",
                    ));
                }
                if self.sector_l().is_none() {
                    return Err(Error::param(
                        "sector",
                        "deadzone/saturation loops need the width `sector.l`",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Width `l` if the generalized sector condition is switched on.
    pub fn sector_l(&self) -> Option<f64> {
        self.sector.filter(|s| s.enabled).map(|s| s.l)
    }

    /// Plant seen by the analysis: the deadzone form for saturation loops,
    /// otherwise the plant itself.
    pub fn analysis_system(&self) -> Result<LtiSystem> {
        match self.loop_kind {
            LoopKind::Saturation => Ok(loop_transform_saturation(&self.system, self.band.l)?),
            _ => Ok(self.system.clone()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        let problem = file.into_problem()?;
        problem.validate()?;
        Ok(problem)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProblemFile::from_problem(self))?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 over the canonical (compact) serialization of the problem.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(&ProblemFile::from_problem(self))
            .expect("problem serialization is infallible");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    system: SystemFile,
    band: SlopeBand,
    rho: f64,
    alpha: f64,
    beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sector: Option<SectorSpec>,
    multiplier: MultiplierShape,
    #[serde(rename = "loop", default, skip_serializing_if = "Option::is_none")]
    loop_kind: Option<LoopKind>,
}

fn rows_to_mat(name: &'static str, rows: &[Vec<f64>]) -> Result<Mat> {
    if let Some(first) = rows.first() {
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != first.len()) {
            return Err(Error::Format(format!(
                "system.{name}: row {i} has {} entries, row 0 has {}",
                rows[i].len(),
                first.len()
            )));
        }
    }
    Ok(linalg::from_rows(rows))
}

impl ProblemFile {
    fn into_problem(self) -> Result<AnalysisProblem> {
        let a = rows_to_mat("A", &self.system.a)?;
        let b = rows_to_mat("B", &self.system.b)?;
        let c = rows_to_mat("C", &self.system.c)?;
        let d = match &self.system.d {
            Some(rows) => rows_to_mat("D", rows)?,
            None => linalg::zeros(b.ncols(), b.ncols()),
        };
        Ok(AnalysisProblem {
            system: LtiSystem::new(a, b, c, d)?,
            band: self.band,
            rho: self.rho,
            alpha: self.alpha,
            beta: self.beta,
            sector: self.sector,
            multiplier: self.multiplier,
            loop_kind: self.loop_kind.unwrap_or(match self.sector {
                Some(s) if s.enabled => LoopKind::Deadzone,
                _ => LoopKind::Gradient,
            }),
        })
    }

    fn from_problem(p: &AnalysisProblem) -> Self {
        ProblemFile {
            system: SystemFile {
                a: linalg::to_rows(p.system.a()),
                b: linalg::to_rows(p.system.b()),
                c: linalg::to_rows(p.system.c()),
                d: Some(linalg::to_rows(p.system.d())),
            },
            band: p.band,
            rho: p.rho,
            alpha: p.alpha,
            beta: p.beta,
            sector: p.sector,
            multiplier: p.multiplier,
            loop_kind: Some(p.loop_kind),
        }
    }
}

/// Exponential weighting `(T_rho s)_t = rho^t s_t`.
pub fn exp_weight(signal: &[Vector], rho: f64) -> Result<Vec<Vector>> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", format!("must be positive, got {rho}")));
    }
    let mut scale = 1.0;
    Ok(signal
        .iter()
        .map(|s| {
            let out = s * scale;
            scale *= rho;
            out
        })
        .collect())
}

fn check_dz_params(l: f64, gain: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::param("l", format!("must be positive, got {l}")));
    }
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::param("L", format!("must be positive, got {gain}")));
    }
    Ok(())
}

/// Deadzone `dzn_{l,L}`: zero on `[-l, l]`, slope `L` outside.
pub fn deadzone_eval(x: f64, l: f64, gain: f64) -> Result<f64> {
    check_dz_params(l, gain)?;
    Ok(deadzone(x, l, gain))
}

/// Saturation `sat_{l,L}(x) = L x - dzn_{l,L}(x)`.
pub fn saturation_eval(x: f64, l: f64, gain: f64) -> Result<f64> {
    check_dz_params(l, gain)?;
    Ok(gain * x - deadzone(x, l, gain))
}

pub(crate) fn deadzone(x: f64, l: f64, gain: f64) -> f64 {
    if x > l {
        gain * (x - l)
    } else if x < -l {
        gain * (x + l)
    } else {
        0.0
    }
}

/// Rewrites `x+ = A x + B sat(C x)` as `x+ = (A + L B C) x - B dzn(C x)`.
pub fn loop_transform_saturation(system: &LtiSystem, gain: f64) -> Result<LtiSystem> {
    system.require_zero_feedthrough()?;
    if !gain.is_finite() {
        return Err(Error::param("L", "must be finite"));
    }
    let a = system.a() + system.b() * system.c() * gain;
    LtiSystem::new(a, -system.b(), system.c().clone(), system.d().clone())
}

/// Memoryless map `z -> w` closing the loop.
pub trait LoopNonlinearity: Sync {
    fn eval(&self, z: &Vector) -> Vector;
}

impl<F> LoopNonlinearity for F
where
    F: Fn(&Vector) -> Vector + Sync,
{
    fn eval(&self, z: &Vector) -> Vector {
        self(z)
    }
}

/// Componentwise deadzone.
#[derive(Debug, Clone, Copy)]
pub struct Deadzone {
    pub l: f64,
    pub gain: f64,
}

impl Deadzone {
    pub fn new(l: f64, gain: f64) -> Result<Self> {
        check_dz_params(l, gain)?;
        Ok(Self { l, gain })
    }
}

impl LoopNonlinearity for Deadzone {
    fn eval(&self, z: &Vector) -> Vector {
        z.map(|v| deadzone(v, self.l, self.gain))
    }
}

/// Componentwise saturation.
#[derive(Debug, Clone, Copy)]
pub struct Saturation {
    pub l: f64,
    pub gain: f64,
}

impl Saturation {
    pub fn new(l: f64, gain: f64) -> Result<Self> {
        // L = 0 is allowed for simulation: the loop is then open.
        if !(l > 0.0 && l.is_finite()) || !(gain >= 0.0 && gain.is_finite()) {
            return Err(Error::param("saturation", format!("need l > 0, L >= 0; got l = {l}, L = {gain}")));
        }
        Ok(Self { l, gain })
    }
}

impl LoopNonlinearity for Saturation {
    fn eval(&self, z: &Vector) -> Vector {
        z.map(|v| self.gain * v.clamp(-self.l, self.l))
    }
}

/// Linear gain `w = k z`.
#[derive(Debug, Clone, Copy)]
pub struct LinearGain(pub f64);

impl LoopNonlinearity for LinearGain {
    fn eval(&self, z: &Vector) -> Vector {
        z * self.0
    }
}

/// Closed-loop trajectory on `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<Vector>,
    pub z: Vec<Vector>,
    pub w: Vec<Vector>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.x.len() - 1
    }
}

/// Simulates `x+ = A x + B w`, `z = C x`, `w = phi(z)` for `horizon` steps.
pub fn simulate_loop(
    system: &LtiSystem,
    nonlin: &dyn LoopNonlinearity,
    x0: &Vector,
    horizon: usize,
) -> Result<Trajectory> {
    system.require_zero_feedthrough()?;
    if x0.len() != system.n() {
        return Err(Error::dim("x0", system.n(), x0.len()));
    }
    let mut traj = Trajectory {
        x: Vec::with_capacity(horizon + 1),
        z: Vec::with_capacity(horizon + 1),
        w: Vec::with_capacity(horizon + 1),
    };
    let mut x = x0.clone();
    for t in 0..=horizon {
        let z = system.c() * &x;
        let w = nonlin.eval(&z);
        if w.len() != system.d_dim() {
            return Err(Error::dim("nonlinearity output", system.d_dim(), w.len()));
        }
        if x.iter().chain(z.iter()).chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: t });
        }
        let next = system.a() * &x + system.b() * &w;
        traj.x.push(x);
        traj.z.push(z);
        traj.w.push(w);
        x = next;
    }
    Ok(traj)
}
