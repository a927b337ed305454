//! LMI programs for the multiplier-based performance test and its
//! regional sector extension.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::{AnalysisProblem, LtiSystem, MultiplierShape, SlopeBand};
use crate::multiplier::{running_cost_p, terminal_cost_z, DhdConstraintSystem, FirMultiplier};
use crate::sdp::{unpack_symmetric, AffineMatrix, SdpProblem};

use super::interconnection::{build_interconnection, InterconnectionMatrices};

/// Whether the dynamic multiplier takes part in the program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Generalized sector condition only: no filter, `lambda = 0`, `E = 0`.
    SectorOnly,
    /// Sector condition combined with the FIR multiplier of the problem's shape.
    SectorOzf,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::SectorOnly => "sector",
            Variant::SectorOzf => "ozf",
        }
    }

    pub fn shape(self, problem: &AnalysisProblem) -> MultiplierShape {
        match self {
            Variant::SectorOnly => MultiplierShape::STATIC,
            Variant::SectorOzf => problem.multiplier,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sector" | "sector-only" => Ok(Variant::SectorOnly),
            "ozf" | "sector-ozf" => Ok(Variant::SectorOzf),
            other => Err(Error::param("variant", format!("unknown variant `{other}`"))),
        }
    }
}

/// Where each block of unknowns lives in the variable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub x_first: usize,
    pub eta_dim: usize,
    pub n: usize,
    pub lambda_first: Option<usize>,
    pub e_first: Option<usize>,
    pub h_first: Option<usize>,
    pub t_index: usize,
}

/// Unknowns read back from a solution vector (or from a certificate).
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramValues {
    pub cal_x: Mat,
    pub multiplier: FirMultiplier,
    pub h: Option<Mat>,
    pub t: f64,
}

/// An assembled program plus everything needed to interpret its solution.
#[derive(Debug, Clone)]
pub struct CertProgram {
    pub sdp: SdpProblem,
    pub layout: Layout,
    pub interconnection: InterconnectionMatrices,
    pub shape: MultiplierShape,
    pub ozf: bool,
    pub mu: Option<f64>,
    pub rho: f64,
    pub eps: f64,
}

/// Data that fixes the program independently of a problem file.
#[derive(Debug, Clone)]
pub struct ProgramSpec<'a> {
    pub system: &'a LtiSystem,
    pub band: SlopeBand,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub shape: MultiplierShape,
    pub ozf: bool,
    /// `(l, mu)` for the regional sector extension.
    pub sector: Option<(f64, f64)>,
    pub eps: f64,
}

impl<'a> ProgramSpec<'a> {
    pub fn new(problem: &AnalysisProblem, system: &'a LtiSystem, variant: Variant, mu: Option<f64>, eps: f64) -> Self {
        Self {
            system,
            band: problem.band,
            rho: problem.rho,
            alpha: problem.alpha,
            beta: problem.beta,
            shape: variant.shape(problem),
            ozf: variant == Variant::SectorOzf,
            sector: problem.sector_l().zip(mu),
            eps,
        }
    }
}

impl CertProgram {
    pub fn values(&self, x: &[f64]) -> Result<ProgramValues> {
        let l = &self.layout;
        let cal_x = unpack_symmetric(x, l.x_first, l.eta_dim);
        let shape = self.shape;
        let multiplier = match (l.lambda_first, l.e_first) {
            (Some(lf), Some(ef)) => FirMultiplier::new(
                shape,
                x[lf..lf + shape.len()].to_vec(),
                Mat::from_row_slice(shape.nu2, shape.nu1, &x[ef..ef + shape.nu1 * shape.nu2]),
            )?,
            _ => FirMultiplier::zero(shape),
        };
        let h = l.h_first.map(|hf| Mat::from_row_slice(1, l.n, &x[hf..hf + l.n]));
        Ok(ProgramValues {
            cal_x,
            multiplier,
            h,
            t: x[l.t_index],
        })
    }

    /// Variable vector reproducing the given values.
    pub fn pack(&self, v: &ProgramValues) -> Vec<f64> {
        let l = &self.layout;
        let mut x = vec![0.0; self.sdp.num_vars()];
        let mut k = l.x_first;
        for i in 0..l.eta_dim {
            for j in i..l.eta_dim {
                x[k] = v.cal_x[(i, j)];
                k += 1;
            }
        }
        if let (Some(lf), Some(ef)) = (l.lambda_first, l.e_first) {
            x[lf..lf + self.shape.len()].copy_from_slice(v.multiplier.lambda());
            let e = v.multiplier.e();
            for i in 0..e.nrows() {
                for j in 0..e.ncols() {
                    x[ef + i * e.ncols() + j] = e[(i, j)];
                }
            }
        }
        if let (Some(hf), Some(h)) = (l.h_first, &v.h) {
            for j in 0..l.n {
                x[hf + j] = h[(0, j)];
            }
        }
        x[l.t_index] = v.t;
        x
    }
}

pub fn assemble(spec: &ProgramSpec) -> Result<CertProgram> {
    spec.system.require_zero_feedthrough()?;
    if !(spec.eps > 0.0 && spec.eps.is_finite()) {
        return Err(Error::param("eps", format!("must be positive, got {}", spec.eps)));
    }
    let shape = if spec.ozf { spec.shape } else { MultiplierShape::STATIC };
    let ic = build_interconnection(spec.system, spec.band, spec.rho, shape)?;
    let (n, d, n_psi) = (ic.n, ic.d, ic.n_psi);
    let eta_dim = ic.state_dim();
    if let Some((l, mu)) = spec.sector {
        if d != 1 {
            return Err(Error::Unsupported("the sector extension needs a scalar channel (d = 1)".into()));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::param("mu", format!("must be finite and >= 0, got {mu}")));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::param("sector.l", format!("must be positive, got {l}")));
        }
    }

    let mut sdp = SdpProblem::default();
    let (cal_x, x_first) = sdp.vars.symmetric("calX", eta_dim);
    let (lambda_first, e_first, lambda_expr, e_expr) = if spec.ozf {
        let lf = sdp.vars.len();
        for k in 0..shape.len() {
            sdp.vars.scalar(format!("lambda[{}]", shape.nu1 as isize - k as isize));
        }
        let (e, ef) = sdp.vars.matrix("E", shape.nu2, shape.nu1);
        (Some(lf), Some(ef), Some(lf), e)
    } else {
        (None, None, None, AffineMatrix::zeros(shape.nu2, shape.nu1))
    };
    let (h_expr, h_first) = match spec.sector {
        Some(_) => {
            let (h, hf) = sdp.vars.matrix("H", 1, n);
            (Some(h), Some(hf))
        }
        None => (None, None),
    };
    let t_index = sdp.vars.scalar("t");

    let nv = d; // width of the wbar channel
    let total = eta_dim + nv;
    let k_mat = linalg::hstack(&[&ic.cal_a, &ic.cal_b]);

    // [A B]' calX [A B] - diag(calX, 0)
    let mut lmi1 = cal_x.congruence(&k_mat);
    let pad_x = AffineMatrix::block(&[
        vec![cal_x.clone(), AffineMatrix::zeros(eta_dim, nv)],
        vec![AffineMatrix::zeros(nv, eta_dim), AffineMatrix::zeros(nv, nv)],
    ]);
    lmi1 = lmi1.sub(&pad_x);

    // running cost: rows of [calC calD] are (y1, u1, y2, u2); P pairs y with u
    let g = AffineMatrix::block(&[vec![ic.cal_c.to_affine(lambda_expr), ic.cal_d.to_affine(lambda_expr)]]);
    let rows = |k: usize| g.view((k * d, 0), (d, total));
    let id = linalg::eye(d);
    let u1 = rows(1).constant_part().clone();
    let u2 = rows(3).constant_part().clone();
    debug_assert!(rows(1).is_constant() && rows(3).is_constant());
    let iqc = rows(0)
        .cross(&id, &AffineMatrix::constant(u2))?
        .add(&AffineMatrix::constant(u1).cross(&id, &rows(2))?);
    lmi1 = lmi1.add(&iqc);
    debug_assert_eq!(running_cost_p(d).nrows(), 4 * d);

    let cp_ext = linalg::hstack(&[&ic.cal_cp, &linalg::zeros(d, nv)]);
    if spec.alpha > 0.0 {
        lmi1 = lmi1.add_constant(&(cp_ext.transpose() * &cp_ext * spec.alpha));
    }

    if let (Some((_, mu)), Some(h)) = (spec.sector, &h_expr) {
        if mu > 0.0 {
            // r1 = [0, C - H, 0] (eta, wbar), r2 = [0, 0, 1]
            let mut r1_const = linalg::zeros(1, total);
            r1_const.view_mut((0, n_psi), (1, n)).copy_from(spec.system.c());
            let r1 = AffineMatrix::block(&[vec![
                AffineMatrix::zeros(1, n_psi),
                h.scale(-1.0),
                AffineMatrix::zeros(1, nv),
            ]])
            .add_constant(&r1_const);
            let mut r2 = linalg::zeros(1, total);
            r2[(0, total - 1)] = 1.0;
            let cross = r1.cross(&linalg::eye(1), &AffineMatrix::constant(r2.clone()))?;
            let sector = cross
                .scale(spec.band.l)
                .add_constant(&(r2.transpose() * &r2 * -2.0))
                .scale(mu);
            lmi1 = lmi1.add(&sector);
        }
    }
    sdp.require_nsd("lmi1", lmi1, spec.eps);

    // calX + Zcal(E) - beta calCp' calCp
    let z_cal = if spec.ozf && shape.nu1 > 0 && shape.nu2 > 0 {
        let zt = terminal_z_affine(&e_expr, shape, d)?;
        AffineMatrix::block(&[
            vec![zt, AffineMatrix::zeros(n_psi, n)],
            vec![AffineMatrix::zeros(n, n_psi), AffineMatrix::zeros(n, n)],
        ])
    } else {
        AffineMatrix::zeros(eta_dim, eta_dim)
    };
    let xz = cal_x.add(&z_cal);
    sdp.require_psd(
        "lmi2",
        xz.add_constant(&(ic.cal_cp.transpose() * &ic.cal_cp * -spec.beta)),
        spec.eps,
    );

    if let (Some((l, _)), Some(h)) = (spec.sector, &h_expr) {
        let h_row = AffineMatrix::block(&[vec![AffineMatrix::zeros(1, n_psi), h.clone()]]);
        let big = AffineMatrix::block(&[
            vec![xz.scale(l * l), h_row.transpose()],
            vec![h_row, AffineMatrix::constant(linalg::eye(1))],
        ]);
        sdp.require_psd("lmi3", big, spec.eps);
    }

    if let Some(lf) = lambda_first {
        let system = DhdConstraintSystem::new(shape, spec.rho);
        for c in &system.constraints {
            sdp.require_nonneg(c.embed(lf, sdp.vars.len()));
        }
    }

    // t >= trace(X), X the plant block of calX
    let trace = cal_x.view((n_psi, n_psi), (n, n)).trace();
    let epigraph = AffineMatrix::term(t_index, linalg::eye(1)).sub(&trace);
    sdp.require_nonneg(epigraph.to_linear("epigraph", sdp.vars.len())?);
    let mut objective = vec![0.0; sdp.vars.len()];
    objective[t_index] = 1.0;
    sdp.objective = objective;

    Ok(CertProgram {
        sdp,
        layout: Layout {
            x_first,
            eta_dim,
            n,
            lambda_first,
            e_first,
            h_first,
            t_index,
        },
        interconnection: ic,
        shape,
        ozf: spec.ozf,
        mu: spec.sector.map(|(_, mu)| mu),
        rho: spec.rho,
        eps: spec.eps,
    })
}

fn terminal_z_affine(e: &AffineMatrix, shape: MultiplierShape, d: usize) -> Result<AffineMatrix> {
    // Z(E) is linear in E: assemble it entrywise from unit matrices.
    let mut out = AffineMatrix::constant(terminal_cost_z(&linalg::zeros(shape.nu2, shape.nu1), shape, d)?);
    for (&var, coeff) in e.terms() {
        out = out.add(&AffineMatrix::term(var, terminal_cost_z(coeff, shape, d)?));
    }
    Ok(out)
}

/// Program without the sector extension.
pub fn assemble_global(problem: &AnalysisProblem, variant: Variant, eps: f64) -> Result<CertProgram> {
    let system = problem.analysis_system()?;
    let mut spec = ProgramSpec::new(problem, &system, variant, None, eps);
    spec.sector = None;
    assemble(&spec)
}

/// Program with the regional sector condition at a fixed `mu`.
pub fn assemble_regional(problem: &AnalysisProblem, variant: Variant, mu: f64, eps: f64) -> Result<CertProgram> {
    let l = problem
        .sector_l()
        .ok_or_else(|| Error::param("sector", "the sector condition is not enabled"))?;
    if problem.system.d_dim() != 1 {
        return Err(Error::Unsupported("the sector extension needs a scalar channel (d = 1)".into()));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::param("mu", format!("must be finite and >= 0, got {mu}")));
    }
    let system = problem.analysis_system()?;
    let mut spec = ProgramSpec::new(problem, &system, variant, Some(mu), eps);
    spec.sector = Some((l, mu));
    assemble(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use crate::test_support::{contractive_problem, saturated_problem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_x(p: &CertProgram, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..p.sdp.num_vars()).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn random_vec(k: usize, rng: &mut ChaCha8Rng) -> Vector {
        Vector::from_fn(k, |_, _| rng.random_range(-1.0..1.0))
    }

    fn quad(m: &Mat, v: &Vector) -> f64 {
        v.dot(&(m * v))
    }

    /// Dissipation expression of the first block, term by term.
    fn lmi1_oracle(p: &CertProgram, problem: &AnalysisProblem, x: &[f64], eta: &Vector, w: &Vector) -> f64 {
        let vals = p.values(x).unwrap();
        let ic = &p.interconnection;
        let lambda = vals.multiplier.lambda();
        let (next, v) = ic.step(lambda, eta, w);
        let mut form = quad(&vals.cal_x, &next) - quad(&vals.cal_x, eta) + quad(&running_cost_p(ic.d), &v);
        form += problem.alpha * (&ic.cal_cp * eta).norm_squared();
        if let (Some(mu), Some(h)) = (p.mu, &vals.h) {
            let c = problem.analysis_system().unwrap().c().clone();
            let xbar = eta.rows(ic.n_psi, ic.n).into_owned();
            let r1 = ((c - h) * xbar)[0];
            let r2 = w[0];
            form += mu * (2.0 * problem.band.l * r1 * r2 - 2.0 * r2 * r2);
        }
        form
    }

    #[test]
    fn global_program_counts() {
        let p = assemble_global(&contractive_problem(), Variant::SectorOzf, 1e-7).unwrap();
        assert_eq!(p.sdp.num_vars(), 15);
        let sizes: Vec<_> = p.sdp.lmis.iter().map(|l| l.size()).collect();
        assert_eq!(sizes, vec![5, 4]);
        // 14 d.h.d. constraints plus the epigraph
        assert_eq!(p.sdp.linear.len(), 15);
    }

    #[test]
    fn regional_counts_and_sector_only() {
        let problem = saturated_problem(1.0);
        let p = assemble_regional(&problem, Variant::SectorOzf, 0.5, 1e-7).unwrap();
        assert_eq!(p.sdp.num_vars(), 17);
        let sizes: Vec<_> = p.sdp.lmis.iter().map(|l| l.size()).collect();
        assert_eq!(sizes, vec![5, 4, 5]);
        let s = assemble_regional(&problem, Variant::SectorOnly, 0.5, 1e-7).unwrap();
        // calX 2x2, H, t
        assert_eq!(s.sdp.num_vars(), 3 + 2 + 1);
        assert_eq!(s.interconnection.n_psi, 0);
        let sizes: Vec<_> = s.sdp.lmis.iter().map(|l| l.size()).collect();
        assert_eq!(sizes, vec![3, 2, 3]);
    }

    #[test]
    fn regional_rejections() {
        let problem = saturated_problem(1.0);
        assert!(assemble_regional(&problem, Variant::SectorOzf, -1.0, 1e-7).is_err());
        assert!(assemble_regional(&problem, Variant::SectorOzf, f64::NAN, 1e-7).is_err());
        assert!(assemble_regional(&contractive_problem(), Variant::SectorOzf, 1.0, 1e-7).is_err());
        assert!(assemble_global(&problem, Variant::SectorOzf, 0.0).is_err());
    }

    #[test]
    fn lmi1_matches_dissipation_expression() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cases = [
            (contractive_problem(), None),
            (saturated_problem(1.0), Some(0.0)),
            (saturated_problem(0.7), Some(2.5)),
        ];
        for (problem, mu) in cases {
            for variant in [Variant::SectorOnly, Variant::SectorOzf] {
                let p = match mu {
                    Some(mu) => assemble_regional(&problem, variant, mu, 1e-7).unwrap(),
                    None => assemble_global(&problem, variant, 1e-7).unwrap(),
                };
                let k = p.interconnection.state_dim();
                for _ in 0..20 {
                    let x = random_x(&p, &mut rng);
                    let eta = random_vec(k, &mut rng);
                    let w = random_vec(1, &mut rng);
                    let ew = Vector::from_iterator(k + 1, eta.iter().chain(w.iter()).copied());
                    // stored negated: the block is required to be negative definite
                    let block = -p.sdp.lmis[0].expr.eval(&x);
                    let oracle = lmi1_oracle(&p, &problem, &x, &eta, &w);
                    assert!((quad(&block, &ew) - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()));
                }
            }
        }
    }

    #[test]
    fn sector_form_example_value() {
        // (z - y, w) = (0.25, 0.2) at L = 1: 2 * 0.25 * 0.2 - 2 * 0.04 = 0.02
        let problem = saturated_problem(1.0);
        let with = assemble_regional(&problem, Variant::SectorOnly, 1.0, 1e-7).unwrap();
        let without = assemble_regional(&problem, Variant::SectorOnly, 0.0, 1e-7).unwrap();
        let c = problem.analysis_system().unwrap().c().transpose();
        let xbar = &c * (0.25 / c.norm_squared());
        let ew = Vector::from_vec(vec![xbar[0], xbar[1], 0.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = random_x(&with, &mut rng);
        let hf = with.layout.h_first.unwrap();
        x[hf] = 0.0;
        x[hf + 1] = 0.0;
        let diff = quad(&-with.sdp.lmis[0].expr.eval(&x), &ew) - quad(&-without.sdp.lmis[0].expr.eval(&x), &ew);
        assert!((diff - 0.02).abs() < 1e-14);
    }

    #[test]
    fn beta_and_alpha_zero_reduce_second_block() {
        let mut problem = contractive_problem();
        problem.alpha = 0.0;
        problem.beta = 0.0;
        let p = assemble_global(&problem, Variant::SectorOzf, 1e-7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_x(&p, &mut rng);
        let vals = p.values(&x).unwrap();
        let mut expect = vals.cal_x.clone();
        let z = terminal_cost_z(vals.multiplier.e(), p.shape, 1).unwrap();
        let np = p.interconnection.n_psi;
        let mut top = expect.view_mut((0, 0), (np, np));
        top += &z;
        assert!((p.sdp.lmis[1].expr.eval(&x) - expect).amax() < 1e-14);
    }

    #[test]
    fn lmi3_is_schur_complement() {
        let problem = saturated_problem(1.0);
        let p = assemble_regional(&problem, Variant::SectorOzf, 1.0, 1e-7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = p.interconnection.state_dim();
        let mut agree = 0;
        for _ in 0..400 {
            let mut x = random_x(&p, &mut rng);
            let g = Mat::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            let mut vals = p.values(&x).unwrap();
            vals.cal_x = &g * g.transpose() + linalg::eye(k) * 0.05;
            let scale = rng.random_range(0.0..0.3);
            vals.h = Some(vals.h.unwrap() * scale);
            x = p.pack(&vals);
            let vals = p.values(&x).unwrap();
            let big = p.sdp.lmis[2].expr.eval(&x);
            let mut xz = vals.cal_x.clone();
            let z = terminal_cost_z(vals.multiplier.e(), p.shape, 1).unwrap();
            let mut top = xz.view_mut((0, 0), (2, 2));
            top += &z;
            let mut hrow = linalg::zeros(1, k);
            hrow.view_mut((0, 2), (1, 2)).copy_from(vals.h.as_ref().unwrap());
            let schur = xz * 0.01 - hrow.transpose() * &hrow;
            let a = linalg::eig_extremes(&big).0;
            let b = linalg::eig_extremes(&schur).0;
            if a.abs() > 1e-9 && b.abs() > 1e-9 {
                assert_eq!(a > 0.0, b > 0.0);
                agree += 1;
            }
        }
        assert!(agree > 300);
    }

    #[test]
    fn values_pack_round_trip() {
        let p = assemble_regional(&saturated_problem(0.5), Variant::SectorOzf, 1.0, 1e-7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = random_x(&p, &mut rng);
        // calX entries are stored once; the rest of the vector is free
        let v = p.values(&x).unwrap();
        assert_eq!(p.pack(&v), x);
        x[p.layout.t_index] = 4.0;
        assert_eq!(p.values(&x).unwrap().t, 4.0);
    }
}
