//! Executable oracles for the analysis chain: dissipation, static and
//! dynamic quadratic constraints, closed-loop bounds and gradient checks.
//!
//! Every check is deterministic given its seed. Sampling is split into
//! fixed chunks, each with its own ChaCha stream, and reduced with `max`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::{boundary_initial_states, simulate_bounds, Certificate};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{AnalysisProblem, MultiplierShape, SlopeBand};
use crate::multiplier::{
    dhd_check, filter_realization, running_cost_p, terminal_cost_z, DhdConstraintSystem, FirMultiplier,
};
use crate::nonlin::{delta_rho_apply, lift, ScalarProfile, SlopeRestricted, SlopeRestrictedFunction};
use crate::sdp::{LinearConstraint, SdpProblem, SdpSolver};

/// Outcome of one sampled check. `worst` is the largest normalized violation
/// (negative means slack), and `pass` holds iff `worst <= tol`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub samples: usize,
    pub worst: f64,
    pub tol: f64,
    pub pass: bool,
    pub seed: u64,
    /// Sample attaining `worst`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckReport {
    fn new(name: &str, samples: usize, (worst, witness): (f64, Vec<f64>), tol: f64, seed: u64) -> Self {
        Self {
            name: name.into(),
            samples,
            worst,
            tol,
            pass: worst <= tol,
            seed,
            witness: (!witness.is_empty()).then_some(witness),
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Single-line summary for CI logs.
    pub fn summary(&self) -> String {
        format!(
            "[{}] {} samples={} worst={:+.3e} tol={:.1e} seed={}{}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.samples,
            self.worst,
            self.tol,
            self.seed,
            self.note.as_ref().map(|n| format!(" ({n})")).unwrap_or_default()
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.summary())
    }
}

const CHUNK: usize = 512;

/// Max of `sample` over `n` draws, with the sample that attains it.
fn par_worst<F>(n: usize, seed: u64, sample: F) -> (f64, Vec<f64>)
where
    F: Fn(&mut ChaCha8Rng) -> (f64, Vec<f64>) + Sync,
{
    let pick = |a: (f64, Vec<f64>), b: (f64, Vec<f64>)| if b.0 > a.0 { b } else { a };
    (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let k = CHUNK.min(n - c * CHUNK);
            (0..k).map(|_| sample(&mut rng)).fold((f64::NEG_INFINITY, Vec::new()), pick)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((f64::NEG_INFINITY, Vec::new()), pick)
}

/// Uniform sample from the Euclidean ball of the given radius.
pub fn sample_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vector {
    let v = Vector::from_fn(dim, |_, _| Distribution::<f64>::sample(&StandardNormal, rng));
    let n = v.norm();
    if n == 0.0 {
        return v;
    }
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    v * (r / n)
}

/// Samples `V(u) - V(y) - S(u, y)` over pairs in the ball.
pub fn check_dissipation<F: SlopeRestricted + Sync>(f: &F, n_samples: usize, radius: f64, tol: f64, seed: u64) -> CheckReport {
    let d = f.dim();
    let worst = par_worst(n_samples, seed, |rng| {
        let u = sample_ball(rng, d, radius);
        let y = sample_ball(rng, d, radius);
        let (vu, vy, s) = (f.storage_v(&u), f.storage_v(&y), f.supply_s(&u, &y));
        let value = (vu - vy - s) / (1.0 + vu.abs() + vy.abs() + s.abs());
        (value, u.iter().chain(y.iter()).copied().collect())
    });
    CheckReport::new("dissipation", n_samples, worst, tol, seed)
}

/// Samples `-grad f_m(u)' (M (x) I) grad f^L(u)` on the `h`-fold lift, cycling
/// through `functions`. Violations are expected when `M` is not d.h.d.; the
/// report notes this instead of treating it as an error.
pub fn check_static_qc<F: SlopeRestricted + Sync>(
    functions: &[F],
    m: &Mat,
    n_samples: usize,
    radius: f64,
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::dim("M", "nonempty square", format!("{}x{}", m.nrows(), m.ncols())));
    }
    if functions.is_empty() {
        return Err(Error::param("functions", "need at least one function"));
    }
    let d = functions[0].dim();
    if functions.iter().any(|f| f.dim() != d) {
        return Err(Error::param("functions", "all functions must share the dimension"));
    }
    let h = m.nrows();
    let mk = linalg::kron(m, &linalg::eye(d));
    let lifted: Vec<_> = functions.iter().map(|f| lift(f, h)).collect::<Result<_>>()?;
    let worst = par_worst(n_samples, seed, |rng| {
        let f = &lifted[rng.random_range(0..lifted.len())];
        let u = Vector::from_fn(h * d, |_, _| rng.random_range(-radius..radius));
        let (gm, gl) = f.split_gradients(&u);
        let right = &mk * &gl;
        let form = gm.dot(&right);
        (-form / (1.0 + gm.norm() * right.norm()), u.iter().copied().collect())
    });
    let dhd = dhd_check(m, 0.0)?.is_dhd;
    let report = CheckReport::new("static_qc", n_samples, worst, tol, seed);
    Ok(if dhd {
        report
    } else {
        report.with_note("M is not doubly hyperdominant; violations are expected")
    })
}

/// Monotone 1-Lipschitz profiles whose mixtures expose non-d.h.d. matrices:
/// ramps, clipping, deadzones and random 0/1-slope staircases.
pub fn falsification_family(band: SlopeBand, seed: u64) -> Result<Vec<SlopeRestrictedFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut profiles = vec![
        ScalarProfile::PiecewiseLinear { breakpoints: vec![0.0], slopes: vec![0.0, 1.0] },
        ScalarProfile::PiecewiseLinear { breakpoints: vec![0.0], slopes: vec![1.0, 0.0] },
        ScalarProfile::Saturating { width: 1.0 },
        ScalarProfile::Deadzone { width: 1.0 },
    ];
    for _ in 0..12 {
        let count = rng.random_range(1..=4);
        let mut breakpoints: Vec<f64> = (0..count).map(|_| rng.random_range(-3.0..3.0)).collect();
        breakpoints.sort_by(f64::total_cmp);
        breakpoints.dedup();
        let slopes = (0..=breakpoints.len()).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        profiles.push(ScalarProfile::PiecewiseLinear { breakpoints, slopes });
    }
    profiles
        .into_iter()
        .map(|p| SlopeRestrictedFunction::separable(band, p, 1))
        .collect()
}

/// Integral quadratic constraint along random weighted signals: for every
/// `T <= t_max`, `sum_{t<T} v_t' P v_t - xi_T' Z(E) xi_T >= -tol`.
#[allow(clippy::too_many_arguments)]
pub fn check_iqc<F: SlopeRestricted + Sync>(
    f: &F,
    mult: &FirMultiplier,
    rho: f64,
    n_signals: usize,
    t_max: usize,
    amplitude: f64,
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    let shape = mult.shape();
    let worst_dhd = DhdConstraintSystem::new(shape, rho).worst(mult);
    if worst_dhd < 0.0 {
        return Err(Error::param(
            "multiplier",
            format!("(lambda, E) violates the d.h.d. system by {worst_dhd:.3e}"),
        ));
    }
    let band = f.band();
    let d = f.dim();
    let real = filter_realization(mult, band, d)?;
    let p = running_cost_p(d);
    let z = terminal_cost_z(mult.e(), shape, d)?;
    let worst = par_worst(n_signals, seed, |rng| {
        let scale = amplitude * rng.random_range(0.05..1.0);
        let zbar: Vec<Vector> = (0..t_max)
            .map(|_| Vector::from_fn(d, |_, _| scale * Distribution::<f64>::sample(&StandardNormal, rng)))
            .collect();
        let wbar = delta_rho_apply(f, rho, &zbar).expect("rho validated by the constraint system");
        let run = real.drive(&zbar, &wbar).expect("matching signal lengths");
        let mut acc = 0.0;
        let mut mag = 0.0;
        let mut worst = f64::NEG_INFINITY;
        for t in 0..t_max {
            let q = run.v[t].dot(&(&p * &run.v[t]));
            acc += q;
            mag += q.abs();
            let xi = &run.xi[t + 1];
            let term = xi.dot(&(&z * xi));
            worst = worst.max(-(acc - term) / (1.0 + mag + term.abs()));
        }
        (worst, zbar.iter().flat_map(|v| v.iter().copied()).collect())
    });
    Ok(CheckReport::new("iqc", n_signals, worst, tol, seed))
}

/// Closed-loop simulations from `x0' X x0 = level` compared with the
/// certified performance, output and sector-region bounds.
pub fn check_closed_loop_performance(
    cert: &Certificate,
    problem: &AnalysisProblem,
    n_initial: usize,
    horizon: usize,
    level: f64,
    tol: f64,
    seed: u64,
) -> Result<CheckReport> {
    let x = cert.x_block(problem.system.n())?;
    let initial = boundary_initial_states(&x, n_initial, level, seed);
    let b = simulate_bounds(cert, problem, &initial, level, horizon, 20, seed)?;
    let mut worst = -b.per_slack / level.max(1.0);
    if cert.beta > 0.0 {
        worst = worst.max(b.output - 1.0);
    }
    if let Some(ex) = b.sector_excess {
        worst = worst.max(ex);
    }
    Ok(CheckReport::new("closed_loop", b.trajectories, (worst, Vec::new()), tol, seed)
        .with_note(format!("per slack {:.3e}, output {:.6}", b.per_slack, b.output)))
}

/// Central differences of `f` against its gradient along random directions.
/// Where a kink lies inside the stencil, the gradient only has to satisfy
/// the quadratic bounds of the slope band against both one-sided quotients.
pub fn finite_diff_check<F: SlopeRestricted + Sync>(
    f: &F,
    n_points: usize,
    step: f64,
    radius: f64,
    tol: f64,
    seed: u64,
) -> CheckReport {
    let d = f.dim();
    let band = f.band();
    let worst = par_worst(n_points, seed, |rng| {
        let x = sample_ball(rng, d, radius);
        let v = sample_ball(rng, d, 1.0).normalize();
        let h = step * (1.0 + x.norm());
        let (f0, g) = f.evaluate(&x);
        let (fp, fm) = (f.value(&(&x + &v * h)), f.value(&(&x - &v * h)));
        let gv = g.dot(&v);
        let central = (fp - fm) / (2.0 * h);
        let denom = 1.0 + gv.abs();
        let rel = (central - gv).abs() / denom;
        // rounding in the difference quotient
        let noise = 4.0 * f64::EPSILON * (1.0 + f0.abs() + fp.abs() + fm.abs()) / h / denom;
        let value = if rel <= tol + noise {
            rel - noise
        } else {
            let fwd = (fp - f0) / h;
            let bwd = (f0 - fm) / h;
            let lo = (fwd - band.l * h / 2.0).max(bwd + band.m * h / 2.0);
            let hi = (fwd - band.m * h / 2.0).min(bwd + band.l * h / 2.0);
            let outside = (lo - gv).max(gv - hi).max(0.0) / denom;
            outside - noise
        };
        (value, x.iter().copied().collect())
    });
    CheckReport::new("finite_diff", n_points, worst, tol, seed)
}

/// Feasible `(lambda, E)` from a linear program over the d.h.d. system:
/// `lambda_0 = 1`, entries bounded by 10, and a random objective that pushes
/// the solution away from the trivial multiplier. The result is repaired to
/// satisfy the system exactly.
pub fn lp_feasible_multiplier(shape: MultiplierShape, rho: f64, solver: &dyn SdpSolver, seed: u64) -> Result<FirMultiplier> {
    let system = DhdConstraintSystem::new(shape, rho);
    let nv = system.num_variables();
    let mut sdp = SdpProblem::default();
    for i in 0..nv {
        sdp.vars.scalar(format!("v{i}"));
    }
    for c in &system.constraints {
        sdp.require_nonneg(c.clone());
    }
    let unit = |i: usize, s: f64| {
        let mut c = vec![0.0; nv];
        c[i] = s;
        c
    };
    let idx0 = shape.nu1;
    sdp.require_nonneg(LinearConstraint::new("lambda0>=1", unit(idx0, 1.0), -1.0));
    sdp.require_nonneg(LinearConstraint::new("lambda0<=1", unit(idx0, -1.0), 1.0));
    for i in 0..nv {
        sdp.require_nonneg(LinearConstraint::new("upper", unit(i, -1.0), 10.0));
        sdp.require_nonneg(LinearConstraint::new("lower", unit(i, 1.0), 10.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sdp.objective = (0..nv).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sol = solver.solve(&sdp)?;
    if !sol.status.is_solved() {
        return Err(Error::Solver(format!("multiplier LP ended with status {}", sol.status)));
    }
    let mut mult = system.unpack(&sol.x)?;
    mult.repair(rho);
    Ok(mult)
}

/// Random doubly hyperdominant matrix: nonpositive off-diagonal entries and
/// a diagonal that covers both row and column sums.
pub fn random_dhd<R: Rng>(h: usize, rng: &mut R) -> Mat {
    let mut m = Mat::from_fn(h, h, |i, j| if i == j { 0.0 } else { -rng.random_range(0.0..1.0) });
    for i in 0..h {
        let need = -(m.row(i).sum()).min(m.column(i).sum());
        let slack = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) };
        m[(i, i)] = need + slack;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlin::random_function;
    use crate::sdp::ClarabelSolver;

    fn band(m: f64, l: f64) -> SlopeBand {
        SlopeBand::new(m, l).unwrap()
    }

    fn quadratic(b: SlopeBand) -> SlopeRestrictedFunction {
        // f = q with band (0, 2): profile slope 1/2 in unit-band coordinates
        SlopeRestrictedFunction::separable(
            b,
            ScalarProfile::PiecewiseLinear { breakpoints: vec![], slopes: vec![0.5] },
            1,
        )
        .unwrap()
    }

    #[test]
    fn dissipation_of_quadratic_is_minus_half_square() {
        let f = quadratic(band(0.0, 2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u = sample_ball(&mut rng, 1, 5.0);
            let y = sample_ball(&mut rng, 1, 5.0);
            let gap = f.storage_v(&u) - f.storage_v(&y) - f.supply_s(&u, &y);
            let expect = -0.5 * (u[0] - y[0]).powi(2);
            assert!((gap - expect).abs() < 1e-12 * (1.0 + expect.abs()));
            assert_eq!(f.storage_v(&u) - f.storage_v(&u) - f.supply_s(&u, &u), 0.0);
        }
        let r = check_dissipation(&f, 2000, 10.0, 1e-8, 3);
        assert!(r.pass && r.worst <= 0.0);
    }

    #[test]
    fn dissipation_on_random_pwl() {
        let f = crate::nonlin::make_profile(crate::nonlin::ProfileKind::RandomPiecewiseLinear, band(-1.0, 2.0), 3, 9)
            .unwrap();
        let r = check_dissipation(&f, 10_000, 10.0, 1e-8, 4);
        assert!(r.pass, "{}", r.summary());
    }

    #[test]
    fn reports_are_deterministic() {
        let f = random_function(band(0.0, 1.0), 2, 5).unwrap();
        let a = check_dissipation(&f, 3000, 10.0, 1e-8, 77);
        let b = check_dissipation(&f, 3000, 10.0, 1e-8, 77);
        assert_eq!(a, b);
        assert!(a.to_json().unwrap().contains("\"seed\":77"));
    }

    #[test]
    fn static_qc_examples() {
        let fam = falsification_family(band(0.0, 1.0), 1).unwrap();
        let id = check_static_qc(&fam, &linalg::eye(3), 5000, 10.0, 1e-10, 2).unwrap();
        assert!(id.pass);
        // I - P for a cyclic permutation
        let p = Mat::from_fn(3, 3, |i, j| if j == (i + 1) % 3 { 1.0 } else { 0.0 });
        let r = check_static_qc(&fam, &(linalg::eye(3) - p), 5000, 10.0, 1e-10, 2).unwrap();
        assert!(r.pass, "{}", r.summary());
        let bad = Mat::from_row_slice(2, 2, &[1.0, -2.0, 0.0, 1.0]);
        let r = check_static_qc(&fam, &bad, 100_000, 3.0, 1e-10, 2).unwrap();
        assert!(!r.pass);
        assert!(r.note.is_some());
        assert_eq!(r.witness.as_ref().unwrap().len(), 2);
    }

    #[test]
    fn random_dhd_is_dhd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for h in 1..9 {
            assert!(dhd_check(&random_dhd(h, &mut rng), 1e-12).unwrap().is_dhd);
        }
    }

    #[test]
    fn iqc_with_static_multiplier_and_zero_signals() {
        let f = random_function(band(0.0, 1.0), 2, 3).unwrap();
        let id = FirMultiplier::identity(MultiplierShape::new(1, 1));
        let r = check_iqc(&f, &id, 0.9, 50, 30, 5.0, 1e-8, 1).unwrap();
        assert!(r.pass, "{}", r.summary());
        let r = check_iqc(&f, &id, 0.9, 10, 10, 0.0, 1e-8, 1).unwrap();
        assert_eq!(r.worst, 0.0);
        let bad = FirMultiplier::new(MultiplierShape::new(1, 1), vec![0.1, 1.0, 0.0], linalg::zeros(1, 1)).unwrap();
        assert!(check_iqc(&f, &bad, 1.0, 1, 1, 1.0, 1e-8, 1).is_err());
    }

    #[test]
    fn iqc_with_lp_multiplier() {
        let solver = ClarabelSolver::default();
        let shape = MultiplierShape::new(2, 2);
        let mult = lp_feasible_multiplier(shape, 0.9, &solver, 6).unwrap();
        assert!(DhdConstraintSystem::new(shape, 0.9).worst(&mult) >= 0.0);
        assert!(mult.lambda().iter().enumerate().any(|(i, &l)| i != 2 && l != 0.0));
        let f = random_function(band(-0.5, 1.5), 1, 8).unwrap();
        let r = check_iqc(&f, &mult, 0.9, 50, 50, 5.0, 1e-8, 2).unwrap();
        assert!(r.pass, "{}", r.summary());
    }

    #[test]
    fn finite_differences() {
        let q = quadratic(band(0.0, 2.0));
        assert!(finite_diff_check(&q, 500, 1e-5, 10.0, 1e-6, 1).pass);
        for seed in 0..8 {
            let f = random_function(band(-1.0, 2.0), 3, seed).unwrap();
            let r = finite_diff_check(&f, 2000, 1e-5, 10.0, 1e-6, seed);
            assert!(r.pass, "{} {}", seed, r.summary());
        }
    }
}
