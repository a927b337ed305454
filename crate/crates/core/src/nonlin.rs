//! Constructive members of the slope class `S^0_{m,L}`.
//!
//! Every function is built as
//!
//! ```text
//! f(x) = m q(x) + (L - m) sum_i S_i((Q x)_i),     q(x) = |x|^2 / 2
//! grad f(x) = Q^T (m y + (L - m) s(y)),           y = Q x
//! ```
//!
//! where each scalar profile `s_i` is monotone, 1-Lipschitz, `s_i(0) = 0`,
//! with antiderivative `S_i`, and `Q` is orthogonal. Such an `f` is
//! `m`-convex and `L`-concave, `grad f(0) = 0` and `f(0) = 0`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{LoopNonlinearity, SlopeBand};

/// Monotone, 1-Lipschitz scalar map with `s(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum ScalarProfile {
    Zero,
    Linear,
    /// `clamp(y, -width, width)`
    Saturating { width: f64 },
    /// `y - clamp(y, -width, width)`
    Deadzone { width: f64 },
    /// `scale * tanh(y / scale)`
    SmoothSigmoid { scale: f64 },
    /// Continuous piecewise-linear map through the origin; `slopes[k]` applies
    /// on the k-th interval of the sorted `breakpoints` (one more slope than
    /// breakpoints).
    PiecewiseLinear { breakpoints: Vec<f64>, slopes: Vec<f64> },
}

impl ScalarProfile {
    /// Returns `(s(y), S(y))` with `S(y) = integral_0^y s`.
    pub fn eval(&self, y: f64) -> (f64, f64) {
        match self {
            ScalarProfile::Zero => (0.0, 0.0),
            ScalarProfile::Linear => (y, 0.5 * y * y),
            ScalarProfile::Saturating { width } => {
                let c = *width;
                if y.abs() <= c {
                    (y, 0.5 * y * y)
                } else {
                    (c * y.signum(), c * y.abs() - 0.5 * c * c)
                }
            }
            ScalarProfile::Deadzone { width } => {
                let c = *width;
                if y.abs() <= c {
                    (0.0, 0.0)
                } else {
                    let e = y.abs() - c;
                    (e * y.signum(), 0.5 * e * e)
                }
            }
            ScalarProfile::SmoothSigmoid { scale } => {
                let a = *scale;
                let u = y / a;
                // ln cosh(u) = |u| + ln(1 + e^{-2|u|}) - ln 2
                let lncosh = u.abs() + (-2.0 * u.abs()).exp().ln_1p() - std::f64::consts::LN_2;
                (a * u.tanh(), a * a * lncosh)
            }
            ScalarProfile::PiecewiseLinear { breakpoints, slopes } => pwl_eval(breakpoints, slopes, y),
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        self.eval(y).0
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            ScalarProfile::Zero | ScalarProfile::Linear => true,
            ScalarProfile::Saturating { width } | ScalarProfile::Deadzone { width } => *width > 0.0 && width.is_finite(),
            ScalarProfile::SmoothSigmoid { scale } => *scale > 0.0 && scale.is_finite(),
            ScalarProfile::PiecewiseLinear { breakpoints, slopes } => {
                slopes.len() == breakpoints.len() + 1
                    && breakpoints.windows(2).all(|w| w[0] < w[1])
                    && breakpoints.iter().all(|b| b.is_finite())
                    && slopes.iter().all(|s| (0.0..=1.0).contains(s))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("profile", format!("{self:?} is not monotone 1-Lipschitz")))
        }
    }
}

fn pwl_eval(breakpoints: &[f64], slopes: &[f64], y: f64) -> (f64, f64) {
    // Index of the interval containing t (intervals split at breakpoints).
    let segment = |t: f64| breakpoints.partition_point(|&b| b <= t);
    let (mut pos, mut s, mut big_s) = (0.0f64, 0.0f64, 0.0f64);
    // Walk from 0 towards y across breakpoints, integrating exactly.
    let mut stops: Vec<f64> = if y >= 0.0 {
        breakpoints.iter().copied().filter(|&b| b > 0.0 && b < y).collect()
    } else {
        let mut v: Vec<f64> = breakpoints.iter().copied().filter(|&b| b < 0.0 && b > y).collect();
        v.reverse();
        v
    };
    stops.push(y);
    for stop in stops {
        let mid = 0.5 * (pos + stop);
        let slope = slopes[segment(mid)];
        let dt = stop - pos;
        big_s += s * dt + 0.5 * slope * dt * dt;
        s += slope * dt;
        pos = stop;
    }
    (s, big_s)
}

/// Generator families for [`make_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Saturating,
    Deadzone,
    SmoothSigmoid,
    RandomPiecewiseLinear,
    Linear,
    Zero,
}

impl ProfileKind {
    pub const NONLINEAR: [ProfileKind; 4] = [
        ProfileKind::Saturating,
        ProfileKind::Deadzone,
        ProfileKind::SmoothSigmoid,
        ProfileKind::RandomPiecewiseLinear,
    ];
}

impl FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "saturating" => ProfileKind::Saturating,
            "deadzone" => ProfileKind::Deadzone,
            "smooth-sigmoid" => ProfileKind::SmoothSigmoid,
            "random-piecewise-linear" => ProfileKind::RandomPiecewiseLinear,
            "linear" => ProfileKind::Linear,
            "zero" => ProfileKind::Zero,
            other => return Err(Error::param("kind", format!("unknown profile kind `{other}`"))),
        })
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProfileKind::Saturating => "saturating",
            ProfileKind::Deadzone => "deadzone",
            ProfileKind::SmoothSigmoid => "smooth-sigmoid",
            ProfileKind::RandomPiecewiseLinear => "random-piecewise-linear",
            ProfileKind::Linear => "linear",
            ProfileKind::Zero => "zero",
        };
        f.write_str(s)
    }
}

/// Calculus shared by all members of `S^0_{m,L}`.
pub trait SlopeRestricted {
    fn band(&self) -> SlopeBand;
    fn dim(&self) -> usize;

    /// `(f(x), grad f(x))`.
    fn evaluate(&self, x: &Vector) -> (f64, Vector);

    /// `f_m(x) = f(x) - m q(x)`.
    fn value_fm(&self, x: &Vector) -> f64 {
        self.evaluate(x).0 - 0.5 * self.band().m * x.norm_squared()
    }

    fn value(&self, x: &Vector) -> f64 {
        self.evaluate(x).0
    }

    fn gradient(&self, x: &Vector) -> Vector {
        self.evaluate(x).1
    }

    /// `(grad f_m(x), grad f^L(x)) = (grad f(x) - m x, L x - grad f(x))`.
    fn split_gradients(&self, x: &Vector) -> (Vector, Vector) {
        let band = self.band();
        let g = self.gradient(x);
        (&g - x * band.m, x * band.l - &g)
    }

    /// `V(x) = (L - m) f_m(x) - q(grad f_m(x))`.
    fn storage_v(&self, x: &Vector) -> f64 {
        let (gm, _) = self.split_gradients(x);
        self.band().width() * self.value_fm(x) - 0.5 * gm.norm_squared()
    }

    /// `S(u, y) = grad f_m(u)^T [grad f^L(u) - grad f^L(y)]`.
    fn supply_s(&self, u: &Vector, y: &Vector) -> f64 {
        let (gm_u, gl_u) = self.split_gradients(u);
        let (_, gl_y) = self.split_gradients(y);
        gm_u.dot(&(gl_u - gl_y))
    }
}

/// Sampled member of `S^0_{m,L}` on `R^d`; serializable so that failures replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRestrictedFunction {
    pub band: SlopeBand,
    pub profiles: Vec<ScalarProfile>,
    /// Orthogonal mixing `Q` (row-major rows); identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ProfileKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip)]
    mixing_cache: Option<Mat>,
}

impl SlopeRestrictedFunction {
    pub fn new(band: SlopeBand, profiles: Vec<ScalarProfile>, mixing: Option<Mat>) -> Result<Self> {
        band.validate()?;
        if profiles.is_empty() {
            return Err(Error::param("profiles", "need at least one component"));
        }
        for p in &profiles {
            p.validate()?;
        }
        if let Some(q) = &mixing {
            let d = profiles.len();
            if q.nrows() != d || q.ncols() != d {
                return Err(Error::dim("mixing", format!("{d}x{d}"), format!("{}x{}", q.nrows(), q.ncols())));
            }
            let defect = (q.transpose() * q - linalg::eye(d)).amax();
            if defect > 1e-10 {
                return Err(Error::param("mixing", format!("not orthogonal (defect {defect:.3e})")));
            }
        }
        Ok(Self {
            band,
            profiles,
            mixing: mixing.as_ref().map(linalg::to_rows),
            kind: None,
            seed: None,
            mixing_cache: mixing,
        })
    }

    /// Same profile in every coordinate, no mixing.
    pub fn separable(band: SlopeBand, profile: ScalarProfile, d: usize) -> Result<Self> {
        Self::new(band, vec![profile; d], None)
    }

    /// Restores the cached mixing matrix after deserialization.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SlopeRestrictedFunction = serde_json::from_str(text)?;
        let q = raw.mixing.as_ref().map(|rows| linalg::from_rows(rows));
        let mut f = Self::new(raw.band, raw.profiles, q)?;
        f.kind = raw.kind;
        f.seed = raw.seed;
        Ok(f)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    fn unmix(&self, x: &Vector) -> Vector {
        match &self.mixing_cache {
            Some(q) => q * x,
            None => x.clone(),
        }
    }

    fn mix_back(&self, y: Vector) -> Vector {
        match &self.mixing_cache {
            Some(q) => q.tr_mul(&y),
            None => y,
        }
    }

    /// Coordinates `y = Q x` in which the gradient acts componentwise.
    pub fn to_profile_coordinates(&self, x: &Vector) -> Vector {
        self.unmix(x)
    }
}

impl SlopeRestricted for SlopeRestrictedFunction {
    fn band(&self) -> SlopeBand {
        self.band
    }

    fn dim(&self) -> usize {
        self.profiles.len()
    }

    fn evaluate(&self, x: &Vector) -> (f64, Vector) {
        let (m, width) = (self.band.m, self.band.width());
        let y = self.unmix(x);
        let mut sum_big = 0.0;
        let mut g = Vector::zeros(y.len());
        for (i, p) in self.profiles.iter().enumerate() {
            let (s, big) = p.eval(y[i]);
            sum_big += big;
            g[i] = m * y[i] + width * s;
        }
        let value = 0.5 * m * y.norm_squared() + width * sum_big;
        (value, self.mix_back(g))
    }

    fn value_fm(&self, x: &Vector) -> f64 {
        let y = self.unmix(x);
        let sum_big: f64 = self.profiles.iter().enumerate().map(|(i, p)| p.eval(y[i]).1).sum();
        self.band.width() * sum_big
    }
}

impl LoopNonlinearity for SlopeRestrictedFunction {
    fn eval(&self, z: &Vector) -> Vector {
        self.gradient(z)
    }
}

/// Draws a member of `S^0_{m,L}` on `R^d` from the given family.
pub fn make_profile(kind: ProfileKind, band: SlopeBand, d: usize, seed: u64) -> Result<SlopeRestrictedFunction> {
    band.validate()?;
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profiles: Vec<ScalarProfile> = (0..d)
        .map(|_| match kind {
            ProfileKind::Zero => ScalarProfile::Zero,
            ProfileKind::Linear => ScalarProfile::Linear,
            ProfileKind::Saturating => ScalarProfile::Saturating {
                width: rng.random_range(0.1..3.0),
            },
            ProfileKind::Deadzone => ScalarProfile::Deadzone {
                width: rng.random_range(0.1..3.0),
            },
            ProfileKind::SmoothSigmoid => ScalarProfile::SmoothSigmoid {
                scale: rng.random_range(0.2..3.0),
            },
            ProfileKind::RandomPiecewiseLinear => random_pwl(&mut rng),
        })
        .collect();
    let mixing = match kind {
        ProfileKind::Zero | ProfileKind::Linear => None,
        _ if d == 1 => None,
        _ => Some(random_orthogonal(d, &mut rng)),
    };
    let mut f = SlopeRestrictedFunction::new(band, profiles, mixing)?;
    f.kind = Some(kind);
    f.seed = Some(seed);
    Ok(f)
}

/// Draws from one of the nonlinear families, chosen by the seed.
pub fn random_function(band: SlopeBand, d: usize, seed: u64) -> Result<SlopeRestrictedFunction> {
    let kind = ProfileKind::NONLINEAR[(seed % ProfileKind::NONLINEAR.len() as u64) as usize];
    make_profile(kind, band, d, seed)
}

fn random_pwl(rng: &mut ChaCha8Rng) -> ScalarProfile {
    let count = rng.random_range(1..=8);
    let mut breakpoints: Vec<f64> = (0..count).map(|_| rng.random_range(-5.0..5.0)).collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let slopes = (0..=breakpoints.len())
        .map(|_| match rng.random_range(0..4) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.0..=1.0),
        })
        .collect();
    ScalarProfile::PiecewiseLinear { breakpoints, slopes }
}

pub(crate) fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Mat {
    let g = Mat::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    // Fix column signs so the draw is Haar-distributed and deterministic.
    let signs = Mat::from_diagonal(&Vector::from_fn(d, |i, _| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

/// `h`-fold lift `x = (x_1, ..., x_h) -> f(x_1) + ... + f(x_h)` on `(R^d)^h`.
#[derive(Debug, Clone, Copy)]
pub struct Lifted<'a, F: SlopeRestricted> {
    base: &'a F,
    h: usize,
}

pub fn lift<F: SlopeRestricted>(f: &F, h: usize) -> Result<Lifted<'_, F>> {
    if h == 0 {
        return Err(Error::param("h", "the lift length must be at least 1"));
    }
    Ok(Lifted { base: f, h })
}

impl<F: SlopeRestricted> Lifted<'_, F> {
    pub fn blocks(&self) -> usize {
        self.h
    }

    fn block(&self, x: &Vector, i: usize) -> Vector {
        let d = self.base.dim();
        x.rows(i * d, d).into_owned()
    }
}

impl<F: SlopeRestricted> SlopeRestricted for Lifted<'_, F> {
    fn band(&self) -> SlopeBand {
        self.base.band()
    }

    fn dim(&self) -> usize {
        self.h * self.base.dim()
    }

    fn evaluate(&self, x: &Vector) -> (f64, Vector) {
        let d = self.base.dim();
        let mut value = 0.0;
        let mut grad = Vector::zeros(self.dim());
        for i in 0..self.h {
            let (v, g) = self.base.evaluate(&self.block(x, i));
            value += v;
            grad.rows_mut(i * d, d).copy_from(&g);
        }
        (value, grad)
    }

    fn value_fm(&self, x: &Vector) -> f64 {
        (0..self.h).map(|i| self.base.value_fm(&self.block(x, i))).sum()
    }
}

/// `(Delta_rho^f zbar)_t = rho^{-t} grad f(rho^t zbar_t)`.
pub fn delta_rho_apply<F: SlopeRestricted>(f: &F, rho: f64, zbar: &[Vector]) -> Result<Vec<Vector>> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::param("rho", format!("must be positive, got {rho}")));
    }
    let mut scale = 1.0;
    Ok(zbar
        .iter()
        .map(|z| {
            let out = f.gradient(&(z * scale)) / scale;
            scale *= rho;
            out
        })
        .collect())
}

/// Worst normalized violations of the quadratic bounds
/// `f(x) + g'h + m q(h) <= f(x+h) <= f(x) + g'h + L q(h)` with `g = grad f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubgradientReport {
    pub samples: usize,
    pub worst_lower: f64,
    pub worst_upper: f64,
}

impl SubgradientReport {
    pub fn worst(&self) -> f64 {
        self.worst_lower.max(self.worst_upper)
    }
}

pub fn check_subgradient_bounds<F: SlopeRestricted>(f: &F, x: &Vector, samples: &[Vector]) -> SubgradientReport {
    let band = f.band();
    let (fx, g) = f.evaluate(x);
    let mut report = SubgradientReport {
        samples: samples.len(),
        worst_lower: f64::NEG_INFINITY,
        worst_upper: f64::NEG_INFINITY,
    };
    for h in samples {
        let fxh = f.value(&(x + h));
        let lin = fx + g.dot(h);
        let qh = 0.5 * h.norm_squared();
        let scale = 1.0 + fxh.abs() + fx.abs();
        report.worst_lower = report.worst_lower.max((lin + band.m * qh - fxh) / scale);
        report.worst_upper = report.worst_upper.max((fxh - lin - band.l * qh) / scale);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn band(m: f64, l: f64) -> SlopeBand {
        SlopeBand::new(m, l).unwrap()
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    /// `f = q` realized with band (0, 2) and profile s(y) = y/2.
    fn half_q() -> SlopeRestrictedFunction {
        let s = ScalarProfile::PiecewiseLinear {
            breakpoints: vec![],
            slopes: vec![0.5],
        };
        SlopeRestrictedFunction::separable(band(0.0, 2.0), s, 1).unwrap()
    }

    #[test]
    fn linear_and_zero_extremes() {
        let b = band(-0.5, 2.0);
        let lin = make_profile(ProfileKind::Linear, b, 3, 0).unwrap();
        let zero = make_profile(ProfileKind::Zero, b, 3, 0).unwrap();
        let x = v(&[1.0, -2.0, 0.5]);
        assert!((lin.gradient(&x) - &x * 2.0).amax() < 1e-15);
        assert!((zero.gradient(&x) - &x * -0.5).amax() < 1e-15);
        assert!("bogus".parse::<ProfileKind>().is_err());
        assert_eq!("smooth-sigmoid".parse::<ProfileKind>().unwrap(), ProfileKind::SmoothSigmoid);
    }

    #[test]
    fn evaluate_examples() {
        let f = make_profile(ProfileKind::Linear, band(0.0, 2.0), 1, 0).unwrap();
        let (val, grad) = f.evaluate(&v(&[1.0]));
        assert_abs_diff_eq!(val, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(grad[0], 2.0, epsilon = 1e-15);
        for seed in 0..20 {
            let f = random_function(band(-1.0, 2.0), 3, seed).unwrap();
            let (val, grad) = f.evaluate(&Vector::zeros(3));
            assert_eq!(val, 0.0);
            assert_eq!(grad.amax(), 0.0);
        }
    }

    #[test]
    fn split_gradient_examples() {
        let f = make_profile(ProfileKind::Linear, band(0.0, 2.0), 1, 0).unwrap();
        let (gm, gl) = f.split_gradients(&v(&[1.0]));
        assert_eq!((gm[0], gl[0]), (2.0, 0.0));
        let (gm, gl) = f.split_gradients(&v(&[0.0]));
        assert_eq!((gm[0], gl[0]), (0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = band(-1.0, 2.0);
        let g = random_function(b, 2, 9).unwrap();
        for _ in 0..1000 {
            let x = Vector::from_fn(2, |_, _| rng.random_range(-10.0..10.0));
            let (gm, gl) = g.split_gradients(&x);
            let defect = (gm + gl - &x * b.width()).amax();
            assert!(defect <= 1e-12 * (1.0 + x.amax()), "{defect}");
        }
    }

    #[test]
    fn storage_and_supply_examples() {
        let f = half_q();
        assert_abs_diff_eq!(f.value(&v(&[2.0])), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.storage_v(&v(&[2.0])), 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.supply_s(&v(&[1.0]), &v(&[0.0])), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.storage_v(&v(&[1.0])) - f.storage_v(&v(&[0.0])), 0.5, epsilon = 1e-15);

        // f = m q: f_m vanishes identically, so does V
        let zero = make_profile(ProfileKind::Zero, band(0.7, 2.0), 2, 0).unwrap();
        assert_eq!(zero.storage_v(&v(&[3.0, -1.0])), 0.0);
        let g = random_function(band(-1.0, 2.0), 2, 4).unwrap();
        assert_eq!(g.storage_v(&Vector::zeros(2)), 0.0);
        let u = v(&[0.3, -7.0]);
        assert_eq!(g.supply_s(&u, &u), 0.0);
    }

    #[test]
    fn piecewise_linear_profile_is_exact() {
        let p = ScalarProfile::PiecewiseLinear {
            breakpoints: vec![-1.0, 0.5, 2.0],
            slopes: vec![0.2, 1.0, 0.0, 0.5],
        };
        // s on [0, 0.5] slope 1, [0.5, 2] slope 0, beyond slope 0.5
        assert_abs_diff_eq!(p.value(0.5), 0.5);
        assert_abs_diff_eq!(p.value(3.0), 0.5 + 0.5);
        assert_abs_diff_eq!(p.eval(3.0).1, 0.125 + 0.5 * 1.5 + 0.5 * 1.0 + 0.25, epsilon = 1e-15);
        // negative side: slope 1 on [-1, 0], slope 0.2 below
        assert_abs_diff_eq!(p.value(-2.0), -1.0 - 0.2);
        assert_abs_diff_eq!(p.eval(-2.0).1, 0.5 + 1.0 + 0.1, epsilon = 1e-15);
        // antiderivative against trapezoid quadrature
        let n = 200_000;
        let y = -3.7;
        let h = y / n as f64;
        let quad: f64 = (0..n).map(|k| 0.5 * h * (p.value(k as f64 * h) + p.value((k + 1) as f64 * h))).sum();
        assert_abs_diff_eq!(p.eval(y).1, quad, epsilon = 1e-8);
    }

    #[test]
    fn random_pwl_slopes_stay_in_band() {
        let b = band(-0.5, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for seed in 0..10 {
            let f = make_profile(ProfileKind::RandomPiecewiseLinear, b, 3, seed).unwrap();
            for _ in 0..500 {
                let x = Vector::from_fn(3, |_, _| rng.random_range(-6.0..6.0));
                let dir = rng.random_range(0..3);
                let step = rng.random_range(1e-4..2.0);
                // divided difference of grad f along an unmixed coordinate
                let y = f.to_profile_coordinates(&x);
                let mut y2 = y.clone();
                y2[dir] += step;
                let q = f.mixing_cache.clone().unwrap();
                let x2 = q.tr_mul(&y2);
                let gy = &q * f.gradient(&x);
                let gy2 = &q * f.gradient(&x2);
                let slope = (gy2[dir] - gy[dir]) / step;
                assert!(slope >= b.m - 1e-9 && slope <= b.l + 1e-9, "slope {slope}");
            }
        }
    }

    #[test]
    fn lift_examples() {
        let f = half_q();
        let l1 = lift(&f, 1).unwrap();
        assert_eq!(l1.evaluate(&v(&[1.3])), f.evaluate(&v(&[1.3])));
        let l2 = lift(&f, 2).unwrap();
        assert_abs_diff_eq!(l2.value(&v(&[1.0, 2.0])), 2.5, epsilon = 1e-15);
        assert!(lift(&f, 0).is_err());

        let g = random_function(band(-1.0, 2.0), 2, 5).unwrap();
        let lg = lift(&g, 3).unwrap();
        let x = v(&[0.1, 2.0, -3.0, 0.4, 5.0, -0.2]);
        let u = v(&[1.0, -2.0, 0.3, 0.0, 2.0, 0.7]);
        let blocks = |z: &Vector, i: usize| z.rows(2 * i, 2).into_owned();
        let grad = lg.gradient(&x);
        let (mut vsum, mut ssum) = (0.0, 0.0);
        for i in 0..3 {
            assert_eq!(blocks(&grad, i), g.gradient(&blocks(&x, i)));
            vsum += g.storage_v(&blocks(&x, i));
            ssum += g.supply_s(&blocks(&x, i), &blocks(&u, i));
        }
        assert_abs_diff_eq!(lg.storage_v(&x), vsum, epsilon = 1e-12);
        assert_abs_diff_eq!(lg.supply_s(&x, &u), ssum, epsilon = 1e-12);
    }

    #[test]
    fn delta_rho_examples() {
        let dz = SlopeRestrictedFunction::separable(band(0.0, 1.0), ScalarProfile::Deadzone { width: 0.1 }, 1).unwrap();
        let zbar = vec![v(&[0.0]), v(&[0.6])];
        let out = delta_rho_apply(&dz, 0.5, &zbar).unwrap();
        assert_abs_diff_eq!(out[1][0], 0.4, epsilon = 1e-15);

        let lin = make_profile(ProfileKind::Linear, band(0.0, 1.5), 1, 0).unwrap();
        let zbar: Vec<Vector> = (0..5).map(|t| v(&[t as f64 - 2.0])).collect();
        let out = delta_rho_apply(&lin, 0.7, &zbar).unwrap();
        for (o, z) in out.iter().zip(&zbar) {
            assert_abs_diff_eq!(o[0], 1.5 * z[0], epsilon = 1e-12);
        }
        let same = delta_rho_apply(&dz, 1.0, &zbar).unwrap();
        for (o, z) in same.iter().zip(&zbar) {
            assert_eq!(o, &dz.gradient(z));
        }
        assert!(delta_rho_apply(&dz, 0.0, &zbar).is_err());
    }

    #[test]
    fn subgradient_bounds() {
        let f = half_q();
        let x = v(&[1.0]);
        let hs: Vec<Vector> = [-3.0, -0.5, 0.25, 2.0].iter().map(|&h| v(&[h])).collect();
        let r = check_subgradient_bounds(&f, &x, &hs);
        assert!(r.worst_lower <= 0.0 && r.worst_upper <= 0.0);
        let r0 = check_subgradient_bounds(&f, &x, &[v(&[0.0])]);
        assert_eq!(r0.worst(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..8 {
            let g = random_function(band(-1.0, 2.0), 2, seed).unwrap();
            let x = Vector::from_fn(2, |_, _| rng.random_range(-10.0..10.0));
            let hs: Vec<Vector> = (0..1250).map(|_| Vector::from_fn(2, |_, _| rng.random_range(-10.0..10.0))).collect();
            assert!(check_subgradient_bounds(&g, &x, &hs).worst() <= 1e-9);
        }
    }

    #[test]
    fn fixtures_replay() {
        let f = make_profile(ProfileKind::RandomPiecewiseLinear, band(-1.0, 2.0), 3, 42).unwrap();
        let back = SlopeRestrictedFunction::from_json(&f.to_json().unwrap()).unwrap();
        let x = v(&[0.3, -1.2, 4.0]);
        assert_eq!(back.evaluate(&x), f.evaluate(&x));
        assert_eq!(back.seed, Some(42));
    }
}
