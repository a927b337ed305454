//! Line-search over the sector multiplier, single-problem certification and
//! gain sweeps.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnalysisProblem, SlopeBand};
use crate::sdp::{SdpSolver, SolveStatus};

use super::certificate::{solve, Certificate, CertificateContext, SolveOutcome};
use super::program::{assemble_regional, assemble_global, Variant};

/// `{0}` together with 24 log-spaced points on `[1e-3, 1e3]`.
pub fn default_mu_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((0..24).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 23.0)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyOptions {
    /// Margin `eps` of the strict inequalities.
    pub eps: f64,
    pub mu_grid: Vec<f64>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            eps: 1e-7,
            mu_grid: default_mu_grid(),
        }
    }
}

/// Result of one program solve inside a search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PointStatus {
    Certified { gamma: f64 },
    Infeasible { status: SolveStatus },
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuPoint {
    pub mu: f64,
    #[serde(flatten)]
    pub status: PointStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertifyOutcome {
    Certified {
        certificate: Box<Certificate>,
        profile: Vec<MuPoint>,
    },
    Infeasible {
        profile: Vec<MuPoint>,
    },
}

impl CertifyOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            CertifyOutcome::Certified { certificate, .. } => Some(certificate),
            CertifyOutcome::Infeasible { .. } => None,
        }
    }

    pub fn profile(&self) -> &[MuPoint] {
        match self {
            CertifyOutcome::Certified { profile, .. } | CertifyOutcome::Infeasible { profile } => profile,
        }
    }
}

fn context(problem: &AnalysisProblem, variant: Variant) -> CertificateContext {
    CertificateContext {
        band: problem.band,
        alpha: problem.alpha,
        beta: problem.beta,
        variant,
        problem_sha: problem.fingerprint(),
    }
}

fn point(mu: f64, r: Result<SolveOutcome>) -> (MuPoint, Option<Certificate>) {
    match r {
        Ok(SolveOutcome::Certified(c)) => (
            MuPoint {
                mu,
                status: PointStatus::Certified { gamma: c.gamma },
            },
            Some(*c),
        ),
        Ok(SolveOutcome::Infeasible(inf)) => (
            MuPoint {
                mu,
                status: PointStatus::Infeasible { status: inf.status },
            },
            None,
        ),
        Err(e) => (
            MuPoint {
                mu,
                status: PointStatus::Failed { message: e.to_string() },
            },
            None,
        ),
    }
}

/// Solves the sector program for every grid value of `mu` and keeps the
/// smallest `gamma` (earliest grid index on ties).
pub fn mu_linesearch(
    problem: &AnalysisProblem,
    variant: Variant,
    options: &CertifyOptions,
    solver: &dyn SdpSolver,
) -> Result<CertifyOutcome> {
    if options.mu_grid.is_empty() {
        return Err(Error::param("mu_grid", "must not be empty"));
    }
    if let Some(bad) = options.mu_grid.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
        return Err(Error::param("mu_grid", format!("entries must be finite and >= 0, got {bad}")));
    }
    let ctx = context(problem, variant);
    let results: Vec<(MuPoint, Option<Certificate>)> = options
        .mu_grid
        .par_iter()
        .map(|&mu| {
            let r = assemble_regional(problem, variant, mu, options.eps).and_then(|p| solve(&p, &ctx, solver));
            point(mu, r)
        })
        .collect();
    finish(results)
}

fn finish(results: Vec<(MuPoint, Option<Certificate>)>) -> Result<CertifyOutcome> {
    let mut best: Option<Certificate> = None;
    let mut profile = Vec::with_capacity(results.len());
    for (p, cert) in results {
        if let Some(c) = cert {
            if best.as_ref().is_none_or(|b| c.gamma < b.gamma) {
                best = Some(c);
            }
        }
        profile.push(p);
    }
    if let Some(c) = best {
        return Ok(CertifyOutcome::Certified {
            certificate: Box::new(c),
            profile,
        });
    }
    if profile.iter().all(|p| matches!(p.status, PointStatus::Failed { .. })) {
        let msgs: Vec<String> = profile
            .iter()
            .map(|p| match &p.status {
                PointStatus::Failed { message } => format!("mu = {}: {message}", p.mu),
                _ => unreachable!(),
            })
            .collect();
        return Err(Error::Solver(msgs.join("; ")));
    }
    Ok(CertifyOutcome::Infeasible { profile })
}

/// Certifies a problem: line-search over `mu` when the sector condition is
/// enabled, a single solve otherwise.
pub fn certify(
    problem: &AnalysisProblem,
    variant: Variant,
    options: &CertifyOptions,
    solver: &dyn SdpSolver,
) -> Result<CertifyOutcome> {
    problem.validate()?;
    if problem.sector_l().is_some() {
        return mu_linesearch(problem, variant, options, solver);
    }
    let ctx = context(problem, variant);
    let program = assemble_global(problem, variant, options.eps)?;
    let (p, cert) = point(0.0, solve(&program, &ctx, solver));
    if let PointStatus::Failed { message } = &p.status {
        return Err(Error::Solver(message.clone()));
    }
    finish(vec![(p, cert)])
}

/// `a, a + step, ...` up to `b` (inclusive up to rounding), values rounded
/// to 12 decimals so that e.g. `0.1:1.3:0.1` yields 0.3 rather than
/// 0.30000000000000004.
pub fn gain_grid(a: f64, b: f64, step: f64) -> Result<Vec<f64>> {
    if !(a.is_finite() && b.is_finite() && step > 0.0 && step.is_finite()) || b < a {
        return Err(Error::param("grid", format!("need a <= b and step > 0, got {a}:{b}:{step}")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12).collect())
}

impl std::str::FromStr for GainGrid {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::param("grid", format!("bad number `{t}` in `{s}`")));
        let values = match parts.as_slice() {
            [single] => vec![parse(single)?],
            [a, b, step] => gain_grid(parse(a)?, parse(b)?, parse(step)?)?,
            _ => return Err(Error::param("grid", format!("expected `a:b:step` or a single value, got `{s}`"))),
        };
        Ok(GainGrid(values))
    }
}

/// Gain values parsed from `a:b:step`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainGrid(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gain: f64,
    pub variant: Variant,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub seconds: f64,
    /// Set when the cell failed for a reason other than infeasibility.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn feasible(&self) -> bool {
        self.gamma.is_some()
    }

    pub fn size(&self) -> Option<f64> {
        self.gamma.map(|g| 1.0 / g)
    }
}

/// Copy of `template` with the band's upper slope (the loop gain) replaced.
pub fn with_gain(template: &AnalysisProblem, gain: f64) -> Result<AnalysisProblem> {
    let mut p = template.clone();
    p.band = SlopeBand::new(template.band.m, gain)?;
    p.validate()?;
    Ok(p)
}

/// Certifies every `(gain, variant)` cell; rows are ordered by gain, then by
/// the order of `variants`. Cell failures are recorded, not propagated.
pub fn sweep_gain_grid(
    template: &AnalysisProblem,
    gains: &[f64],
    variants: &[Variant],
    options: &CertifyOptions,
    solver: &dyn SdpSolver,
) -> Vec<SweepRow> {
    let cells: Vec<(f64, Variant)> = gains.iter().flat_map(|&g| variants.iter().map(move |&v| (g, v))).collect();
    cells
        .par_iter()
        .map(|&(gain, variant)| {
            let start = Instant::now();
            let outcome = with_gain(template, gain).and_then(|p| certify(&p, variant, options, solver));
            let seconds = start.elapsed().as_secs_f64();
            let (gamma, mu, error) = match outcome {
                Ok(CertifyOutcome::Certified { certificate, .. }) => {
                    (Some(certificate.gamma), Some(certificate.mu), None)
                }
                Ok(CertifyOutcome::Infeasible { .. }) => (None, None, None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            SweepRow {
                gain,
                variant,
                gamma,
                mu,
                seconds,
                error,
            }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    #[serde(rename = "L")]
    gain: f64,
    variant: String,
    gamma: Option<f64>,
    size: Option<f64>,
    mu: Option<f64>,
    feasible: bool,
    seconds: f64,
}

/// Writes the sweep table with header `L,variant,gamma,size,mu,feasible,seconds`.
/// With `omit_timing` the `seconds` column is written as 0 so that reruns
/// are byte-identical.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W, omit_timing: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["L", "variant", "gamma", "size", "mu", "feasible", "seconds"])?;
    for r in rows {
        w.serialize(CsvRow {
            gain: r.gain,
            variant: r.variant.label().to_string(),
            gamma: r.gamma,
            size: r.size(),
            mu: r.mu,
            feasible: r.feasible(),
            seconds: if omit_timing { 0.0 } else { r.seconds },
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rd.deserialize::<CsvRow>() {
        let r = rec?;
        rows.push(SweepRow {
            gain: r.gain,
            variant: r.variant.parse()?,
            gamma: r.gamma,
            mu: r.mu,
            seconds: r.seconds,
            error: None,
        });
    }
    Ok(rows)
}
