//! Multiplier filter in series with the exponentially weighted plant.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{LtiSystem, MultiplierShape, SlopeBand};
use crate::multiplier::FilterBasis;
use crate::sdp::AffineMatrix;

/// `constant + sum_k lambda_k coef[k]`.
#[derive(Debug, Clone)]
pub struct LambdaAffine {
    pub constant: Mat,
    pub coef: Vec<Mat>,
}

impl LambdaAffine {
    pub fn eval(&self, lambda: &[f64]) -> Mat {
        let mut out = self.constant.clone();
        for (c, &l) in self.coef.iter().zip(lambda) {
            out += c * l;
        }
        out
    }

    /// Expression over decision variables `first_var..first_var + len`;
    /// with `None` the coefficients are frozen at zero.
    pub fn to_affine(&self, first_var: Option<usize>) -> AffineMatrix {
        let mut out = AffineMatrix::constant(self.constant.clone());
        if let Some(first) = first_var {
            for (k, c) in self.coef.iter().enumerate() {
                out = out.add(&AffineMatrix::term(first + k, c.clone()));
            }
        }
        out
    }
}

/// State `eta = (xi, xbar)` of the filter driven by the weighted plant.
#[derive(Debug, Clone)]
pub struct InterconnectionMatrices {
    pub cal_a: Mat,
    pub cal_b: Mat,
    pub cal_c: LambdaAffine,
    pub cal_d: LambdaAffine,
    pub cal_cp: Mat,
    pub shape: MultiplierShape,
    pub n_psi: usize,
    pub n: usize,
    pub d: usize,
}

impl InterconnectionMatrices {
    pub fn state_dim(&self) -> usize {
        self.n_psi + self.n
    }

    /// Steps the interconnection: returns `(eta+, v)` for input `wbar`.
    pub fn step(&self, lambda: &[f64], eta: &Vector, wbar: &Vector) -> (Vector, Vector) {
        let next = &self.cal_a * eta + &self.cal_b * wbar;
        let v = self.cal_c.eval(lambda) * eta + self.cal_d.eval(lambda) * wbar;
        (next, v)
    }
}

pub fn build_interconnection(
    system: &LtiSystem,
    band: SlopeBand,
    rho: f64,
    shape: MultiplierShape,
) -> Result<InterconnectionMatrices> {
    system.require_zero_feedthrough()?;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param("rho", format!("must lie in (0, 1], got {rho}")));
    }
    let (n, d) = (system.n(), system.d_dim());
    let basis = FilterBasis::new(shape, band, d)?;
    let n_psi = shape.filter_order() * d;

    let c_pad = linalg::vstack(&[system.c(), &linalg::zeros(d, n)]);
    let w_in = linalg::vstack(&[&linalg::zeros(d, d), &linalg::eye(d)]);
    let a_rho = system.a() / rho;
    let b_rho = system.b() / rho;

    let top = linalg::hstack(&[&basis.a, &(&basis.b * &c_pad)]);
    let bottom = linalg::hstack(&[&linalg::zeros(n, n_psi), &a_rho]);
    let cal_a = linalg::vstack(&[&top, &bottom]);
    let cal_b = linalg::vstack(&[&(&basis.b * &w_in), &b_rho]);

    let out_c = |c: &Mat, dd: &Mat| linalg::hstack(&[c, &(dd * &c_pad)]);
    let cal_c = LambdaAffine {
        constant: out_c(&basis.c0, &basis.d0),
        coef: basis.c_coef.iter().zip(&basis.d_coef).map(|(c, dd)| out_c(c, dd)).collect(),
    };
    let cal_d = LambdaAffine {
        constant: &basis.d0 * &w_in,
        coef: basis.d_coef.iter().map(|dd| dd * &w_in).collect(),
    };
    let cal_cp = linalg::hstack(&[&linalg::zeros(d, n_psi), system.c()]);
    Ok(InterconnectionMatrices {
        cal_a,
        cal_b,
        cal_c,
        cal_d,
        cal_cp,
        shape,
        n_psi,
        n,
        d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiplier::{filter_realization, FirMultiplier};
    use crate::test_support::unstable_plant;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unstable_plant_structure() {
        let band = SlopeBand::new(0.0, 1.0).unwrap();
        let ic = build_interconnection(&unstable_plant(), band, 0.9, MultiplierShape::new(1, 1)).unwrap();
        assert_eq!(ic.cal_a.shape(), (4, 4));
        let lower = ic.cal_a.view((2, 2), (2, 2)).into_owned();
        assert!((lower - unstable_plant().a() / 0.9).amax() < 1e-15);
        assert_eq!(ic.cal_a.view((2, 0), (2, 2)).into_owned(), linalg::zeros(2, 2));
        assert_eq!(ic.cal_cp, Mat::from_row_slice(1, 4, &[0.0, 0.0, 0.3, -1.8]));

        let stat = build_interconnection(&unstable_plant(), band, 0.5, MultiplierShape::STATIC).unwrap();
        assert_eq!(stat.n_psi, 0);
        assert!((stat.cal_a.clone() - unstable_plant().a() * 2.0).amax() < 1e-15);
    }

    #[test]
    fn composition_matches_filter_on_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let band = SlopeBand::new(-0.5, 1.5).unwrap();
        let sys = LtiSystem::strictly_proper(
            Mat::from_fn(3, 3, |_, _| rng.random_range(-0.5..0.5)),
            Mat::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0)),
            Mat::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let shape = MultiplierShape::new(2, 1);
        let rho = 0.85;
        let lambda: Vec<f64> = (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mult = FirMultiplier::new(shape, lambda.clone(), linalg::zeros(1, 2)).unwrap();
        let ic = build_interconnection(&sys, band, rho, shape).unwrap();

        let horizon = 30;
        let wbar: Vec<Vector> = (0..horizon).map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0))).collect();
        let x0 = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));

        // path 1: weighted plant, then the filter on (zbar, wbar)
        let mut x = x0.clone();
        let mut zs = Vec::new();
        for w in &wbar {
            zs.push(sys.c() * &x);
            x = (sys.a() * &x + sys.b() * w) / rho;
        }
        let run = filter_realization(&mult, band, 2).unwrap().drive(&zs, &wbar).unwrap();

        // path 2: the series interconnection
        let mut eta = Vector::zeros(ic.state_dim());
        eta.rows_mut(ic.n_psi, 3).copy_from(&x0);
        for (t, w) in wbar.iter().enumerate() {
            let (next, v) = ic.step(&lambda, &eta, w);
            assert!((v - &run.v[t]).amax() <= 1e-10);
            assert!((&ic.cal_cp * &eta - &zs[t]).amax() <= 1e-10);
            eta = next;
        }
    }
}
