//! Independent re-checking of a certificate: blocks re-evaluated with
//! eigenvalues, the d.h.d. system checked exactly, and closed-loop
//! simulations compared against the certified bounds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{simulate_loop, AnalysisProblem, Deadzone, LoopKind, LoopNonlinearity, LtiSystem, Saturation};
use crate::multiplier::DhdConstraintSystem;
use crate::nonlin::random_function;

use super::certificate::Certificate;
use super::program::{assemble, ProgramSpec, ProgramValues, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub n_initial: usize,
    pub horizon: usize,
    /// Random slope-restricted functions used for gradient loops.
    pub n_functions: usize,
    pub seed: u64,
    /// Allowed excess in the performance and output bounds.
    pub tol_bound: f64,
    /// Allowed excess of `|H x|` over `l`.
    pub tol_sector: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_initial: 100,
            horizon: 200,
            n_functions: 20,
            seed: 0,
            tol_bound: 1e-6,
            tol_sector: 1e-8,
        }
    }
}

/// One itemized check; `pass` is decided by comparing `value` with `bound`
/// in the direction given by the check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckItem {
    fn at_least(name: &str, value: f64, bound: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value >= bound,
            detail: detail.into(),
        }
    }

    fn positive(name: &str, value: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            bound: 0.0,
            pass: value > 0.0,
            detail: detail.into(),
        }
    }

    fn at_most(name: &str, value: f64, bound: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
            detail: detail.into(),
        }
    }

    fn flag(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value: if pass { 0.0 } else { 1.0 },
            bound: 0.0,
            pass,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for CheckItem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<16} value={:+.6e} bound={:+.6e} {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.bound,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub items: Vec<CheckItem>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckItem> {
        self.items.iter().filter(|i| !i.pass)
    }

    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

impl std::fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in &self.items {
            writeln!(f, "{i}")?;
        }
        Ok(())
    }
}

/// Worst observed values over all simulated trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationBounds {
    pub trajectories: usize,
    /// `min over x0, T` of `level - (alpha sum_{t<T} rho^{-2t}|z_t|^2 + beta rho^{-2T}|z_T|^2)`.
    pub per_slack: f64,
    /// `max` of `sqrt(beta) rho^{-t} |z_t| / sqrt(level)`.
    pub output: f64,
    /// `max` of `rho^{-t} |H x_t| - l` (sector case only).
    pub sector_excess: Option<f64>,
    /// `max` of `|x_t| / (rho^t |x_0|)`.
    pub decay_ratio: f64,
}

/// Labelled loop nonlinearity.
pub type NamedNonlinearity = (String, Box<dyn LoopNonlinearity>);

/// Nonlinearities the certificate claims to cover, each with a label.
pub fn covered_nonlinearities(
    problem: &AnalysisProblem,
    n_functions: usize,
    seed: u64,
) -> Result<(LtiSystem, Vec<NamedNonlinearity>)> {
    let band = problem.band;
    let d = problem.system.d_dim();
    let mut out: Vec<NamedNonlinearity> = Vec::new();
    let system = match problem.loop_kind {
        LoopKind::Saturation => {
            let l = problem.sector_l().ok_or_else(|| Error::param("sector", "saturation needs `sector.l`"))?;
            out.push(("saturation".into(), Box::new(Saturation::new(l, band.l)?)));
            problem.system.clone()
        }
        LoopKind::Deadzone => {
            let l = problem.sector_l().ok_or_else(|| Error::param("sector", "deadzone needs `sector.l`"))?;
            out.push(("deadzone".into(), Box::new(Deadzone::new(l, band.l)?)));
            problem.system.clone()
        }
        LoopKind::Gradient => {
            if band.m <= 0.0 && band.l > 0.0 {
                out.push(("deadzone".into(), Box::new(Deadzone::new(1.0, band.l)?)));
            }
            for i in 0..n_functions {
                let f = random_function(band, d, seed.wrapping_add(i as u64))?;
                out.push((format!("random[{i}]"), Box::new(f)));
            }
            problem.system.clone()
        }
    };
    Ok((system, out))
}

/// Samples `x0` with `x0' X x0 = level`.
pub fn boundary_initial_states(x: &Mat, count: usize, level: f64, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let v = Vector::from_fn(x.nrows(), |_, _| StandardNormal.sample(&mut rng));
            let q = v.dot(&(x * &v));
            if q > 0.0 {
                v * (level / q).sqrt()
            } else {
                Vector::zeros(x.nrows())
            }
        })
        .collect()
}

/// Simulates every covered loop from every initial state and records the
/// worst values of the certified bounds.
pub fn simulate_bounds(
    cert: &Certificate,
    problem: &AnalysisProblem,
    initial: &[Vector],
    level: f64,
    horizon: usize,
    n_functions: usize,
    seed: u64,
) -> Result<SimulationBounds> {
    let n = problem.system.n();
    let (system, loops) = covered_nonlinearities(problem, n_functions, seed)?;
    let sector_l = problem.sector_l();
    let rho = cert.rho;
    let h = cert.h.clone();
    let jobs: Vec<(usize, usize)> = (0..loops.len()).flat_map(|a| (0..initial.len()).map(move |b| (a, b))).collect();
    let results: Vec<Result<SimulationBounds>> = jobs
        .par_iter()
        .map(|&(li, xi)| {
            let x0 = &initial[xi];
            let traj = simulate_loop(&system, loops[li].1.as_ref(), x0, horizon)?;
            let mut acc = 0.0;
            let mut per_slack = f64::INFINITY;
            let mut output = 0.0f64;
            let mut sector = f64::NEG_INFINITY;
            let mut decay = 0.0f64;
            let x0n = x0.norm();
            for t in 0..=horizon {
                let w = rho.powi(-(t as i32));
                let zn = traj.z[t].norm() * w;
                per_slack = per_slack.min(level - (acc + cert.beta * zn * zn));
                acc += cert.alpha * zn * zn;
                output = output.max(cert.beta.sqrt() * zn / level.sqrt());
                if let Some(h) = &h {
                    sector = sector.max((h * &traj.x[t])[(0, 0)].abs() * w - sector_l.unwrap_or(0.0));
                }
                if x0n > 0.0 {
                    decay = decay.max(traj.x[t].norm() * w / x0n);
                }
            }
            debug_assert_eq!(traj.x[0].len(), n);
            Ok(SimulationBounds {
                trajectories: 1,
                per_slack,
                output,
                sector_excess: h.as_ref().map(|_| sector),
                decay_ratio: decay,
            })
        })
        .collect();
    let mut total = SimulationBounds {
        trajectories: 0,
        per_slack: f64::INFINITY,
        output: 0.0,
        sector_excess: h.as_ref().map(|_| f64::NEG_INFINITY),
        decay_ratio: 0.0,
    };
    for r in results {
        let r = r?;
        total.trajectories += 1;
        total.per_slack = total.per_slack.min(r.per_slack);
        total.output = total.output.max(r.output);
        total.decay_ratio = total.decay_ratio.max(r.decay_ratio);
        if let (Some(a), Some(b)) = (total.sector_excess.as_mut(), r.sector_excess) {
            *a = a.max(b);
        }
    }
    Ok(total)
}

/// Re-evaluates every condition behind a certificate for the given problem.
pub fn verify_certificate(cert: &Certificate, problem: &AnalysisProblem, options: &VerifyOptions) -> Result<VerificationReport> {
    let sha = problem.fingerprint();
    if cert.problem_sha != sha {
        return Err(Error::FingerprintMismatch {
            certificate: cert.problem_sha.clone(),
            problem: sha,
        });
    }
    problem.validate()?;
    let mut items = Vec::new();
    let params_ok = cert.rho == problem.rho
        && cert.alpha == problem.alpha
        && cert.beta == problem.beta
        && cert.band == problem.band;
    items.push(CheckItem::flag("parameters", params_ok, "rho, alpha, beta and band match the problem"));

    let ozf = cert.variant == Variant::SectorOzf;
    let shape_ok = if ozf {
        cert.shape.nu1 <= problem.multiplier.nu1 && cert.shape.nu2 <= problem.multiplier.nu2
    } else {
        cert.shape == crate::model::MultiplierShape::STATIC
            && cert.lambda.iter().all(|&l| l == 0.0)
    };
    items.push(CheckItem::flag("shape", shape_ok, format!("{:?} for {:?}", cert.shape, cert.variant)));

    let n = problem.system.n();
    let d = problem.system.d_dim();
    let system = problem.analysis_system()?;
    let sector = problem.sector_l().map(|l| (l, cert.mu));
    let spec = ProgramSpec {
        system: &system,
        band: problem.band,
        rho: problem.rho,
        alpha: problem.alpha,
        beta: problem.beta,
        shape: cert.shape,
        ozf,
        sector,
        eps: cert.solver.margins.eps.max(f64::MIN_POSITIVE),
    };
    let program = assemble(&spec)?;
    if program.layout.eta_dim != cert.cal_x.nrows() || cert.cal_x.nrows() != cert.cal_x.ncols() {
        return Err(Error::dim("calX", program.layout.eta_dim, format!("{}x{}", cert.cal_x.nrows(), cert.cal_x.ncols())));
    }
    if sector.is_some() && cert.h.as_ref().is_none_or(|h| h.shape() != (1, n)) {
        return Err(Error::Format("sector certificates carry a 1 x n matrix H".into()));
    }
    let symmetric = (&cert.cal_x - cert.cal_x.transpose()).amax() == 0.0;
    items.push(CheckItem::flag("calX_symmetric", symmetric, "calX equals its transpose"));

    let values = ProgramValues {
        cal_x: cert.cal_x.clone(),
        multiplier: cert.multiplier()?,
        h: cert.h.clone(),
        t: cert.gamma * cert.gamma,
    };
    let x = program.pack(&values);
    for lmi in &program.sdp.lmis {
        let what = match lmi.name.as_str() {
            "lmi1" => "smallest eigenvalue of minus the dissipation block",
            "lmi2" => "smallest eigenvalue of calX + Z(E) - beta Cp'Cp",
            _ => "smallest eigenvalue of the ellipsoid-in-sector block",
        };
        items.push(CheckItem::positive(&lmi.name, lmi.attained(&x), what));
    }
    if ozf {
        let worst = DhdConstraintSystem::new(cert.shape, cert.rho).worst(&values.multiplier);
        items.push(CheckItem::at_least("dhd", worst, 0.0, "worst d.h.d. inequality, exact"));
    }
    let x_block = cert.x_block(n)?;
    items.push(CheckItem::at_most(
        "trace",
        x_block.trace(),
        cert.gamma * cert.gamma,
        "trace(X) against gamma^2",
    ));

    if options.n_initial > 0 && options.horizon > 0 {
        let initial = boundary_initial_states(&x_block, options.n_initial, 1.0, options.seed);
        match simulate_bounds(cert, problem, &initial, 1.0, options.horizon, options.n_functions, options.seed) {
            Ok(b) => {
                let runs = format!("{} trajectories, {} steps", b.trajectories, options.horizon);
                items.push(CheckItem::at_least("performance", b.per_slack, -options.tol_bound, runs.clone()));
                if cert.beta > 0.0 {
                    items.push(CheckItem::at_most("output_bound", b.output, 1.0 + options.tol_bound, runs.clone()));
                }
                if let Some(ex) = b.sector_excess {
                    items.push(CheckItem::at_most("sector_region", ex, options.tol_sector, runs.clone()));
                }
                if sector.is_none() {
                    let k = cert.decay_constant(n, d)?;
                    items.push(CheckItem::at_most("decay", b.decay_ratio, k * (1.0 + 1e-9), runs));
                }
            }
            Err(Error::Divergence { step }) => {
                items.push(CheckItem::flag("simulation", false, format!("trajectory diverged at step {step}")));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(VerificationReport { items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{contractive_certificate, contractive_problem, saturated_certificate, saturated_problem};

    #[test]
    fn fresh_certificates_verify() {
        let report = verify_certificate(saturated_certificate(), &saturated_problem(1.0), &VerifyOptions::default()).unwrap();
        assert!(report.passed(), "{report}");
        for name in ["lmi1", "lmi2", "lmi3", "dhd", "performance", "output_bound", "sector_region"] {
            assert!(report.item(name).is_some(), "missing {name}");
        }
        let report = verify_certificate(contractive_certificate(), &contractive_problem(), &VerifyOptions::default()).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.item("decay").is_some());
    }

    #[test]
    fn perturbed_calx_fails_a_block_check() {
        let mut cert = saturated_certificate().clone();
        cert.cal_x[(0, 1)] += 0.1;
        cert.cal_x[(1, 0)] += 0.1;
        let report = verify_certificate(&cert, &saturated_problem(1.0), &VerifyOptions::default()).unwrap();
        assert!(!report.passed());
        assert!(report.failures().any(|f| f.name.starts_with("lmi")), "{report}");

        let mut cert = saturated_certificate().clone();
        cert.cal_x[(0, 1)] += 0.1;
        let report = verify_certificate(&cert, &saturated_problem(1.0), &VerifyOptions::default()).unwrap();
        assert!(!report.item("calX_symmetric").unwrap().pass);
    }

    #[test]
    fn fingerprint_mismatch_is_an_error() {
        let err = verify_certificate(saturated_certificate(), &saturated_problem(0.9), &VerifyOptions::default()).unwrap_err();
        assert!(matches!(err, Error::FingerprintMismatch { .. }));
    }

    #[test]
    fn zero_initial_state_is_trivial() {
        let cert = saturated_certificate();
        let b = simulate_bounds(cert, &saturated_problem(1.0), &[Vector::zeros(2)], 1.0, 50, 0, 0).unwrap();
        assert_eq!(b.per_slack, 1.0);
        assert_eq!(b.output, 0.0);
        assert_eq!(b.sector_excess, Some(-0.1));
    }

    #[test]
    fn performance_bound_is_homogeneous() {
        let cert = contractive_certificate();
        let problem = contractive_problem();
        let x = cert.x_block(2).unwrap();
        let initial = boundary_initial_states(&x, 50, 4.0, 3);
        for x0 in &initial {
            assert!((x0.dot(&(&x * x0)) - 4.0).abs() < 1e-12);
        }
        let b = simulate_bounds(cert, &problem, &initial, 4.0, 200, 5, 3).unwrap();
        assert!(b.per_slack >= -1e-6);
        assert!(b.output <= 1.0 + 1e-6);
        assert!(b.decay_ratio <= cert.decay_constant(2, 1).unwrap());
    }

    #[test]
    fn report_lines() {
        let item = CheckItem::at_most("trace", 2.0, 1.0, "x");
        assert!(!item.pass);
        assert!(item.to_string().starts_with("FAIL trace"));
        assert!(CheckItem::positive("lmi", 1e-9, "").pass);
        assert!(!CheckItem::positive("lmi", 0.0, "").pass);
    }
}
