//! Randomized invariants of the analysis chain.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zfcert::linalg::{self, Mat, Vector};
use zfcert::model::{deadzone_eval, exp_weight, saturation_eval, MultiplierShape, SlopeBand};
use zfcert::multiplier::{
    dhd_check, lifted_form_oracle, lifted_multiplier_matrix, sample_feasible, toeplitz_t,
    DhdConstraintSystem,
};
use zfcert::nonlin::{lift, random_function, SlopeRestricted};
use zfcert::validate::{check_static_qc, random_dhd};

fn band_strategy() -> impl Strategy<Value = SlopeBand> {
    (-2.0..2.0f64, 0.05..4.0f64).prop_map(|(m, w)| SlopeBand::new(m, m + w).unwrap())
}

fn shape_strategy() -> impl Strategy<Value = MultiplierShape> {
    (0usize..3, 0usize..3).prop_map(|(a, b)| MultiplierShape::new(a, b))
}

fn vec_strategy(d: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-10.0..10.0f64, d).prop_map(Vector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_weight_round_trip(data in prop::collection::vec(-1e3..1e3f64, 1..100), rho_i in 0usize..3) {
        let rho = [0.5, 0.9, 1.0][rho_i];
        let s: Vec<Vector> = data.iter().map(|&v| Vector::from_element(1, v)).collect();
        let back = exp_weight(&exp_weight(&s, rho).unwrap(), 1.0 / rho).unwrap();
        for (a, b) in s.iter().zip(&back) {
            prop_assert!((a[0] - b[0]).abs() <= 1e-13 * (1.0 + a[0].abs()));
        }
    }

    #[test]
    fn deadzone_and_saturation_slopes(x in -5.0..5.0f64, dx in 1e-6..5.0f64, l in 0.01..2.0f64, gain in 0.01..3.0f64) {
        let y = x + dx;
        let sd = (deadzone_eval(y, l, gain).unwrap() - deadzone_eval(x, l, gain).unwrap()) / dx;
        let ss = (saturation_eval(y, l, gain).unwrap() - saturation_eval(x, l, gain).unwrap()) / dx;
        let tol = 1e-12 * (1.0 + 10.0 / dx);
        prop_assert!(sd >= -tol && sd <= gain + tol);
        prop_assert!(ss >= -tol && ss <= gain + tol);
    }

    #[test]
    fn gradient_monotonicity_within_band(band in band_strategy(), seed in any::<u64>(), d in 1usize..4,
                                         xs in vec_strategy(3), ys in vec_strategy(3)) {
        let f = random_function(band, d, seed).unwrap();
        let x = xs.rows(0, d).into_owned();
        let y = ys.rows(0, d).into_owned();
        let dx = &x - &y;
        let s = (f.gradient(&x) - f.gradient(&y)).dot(&dx);
        let n2 = dx.norm_squared();
        let tol = 1e-10 * (1.0 + n2);
        prop_assert!(s >= band.m * n2 - tol && s <= band.l * n2 + tol);
    }

    #[test]
    fn dissipation_inequality(band in band_strategy(), seed in any::<u64>(), d in 1usize..4,
                              us in vec_strategy(3), ys in vec_strategy(3)) {
        let f = random_function(band, d, seed).unwrap();
        let u = us.rows(0, d).into_owned();
        let y = ys.rows(0, d).into_owned();
        let (vu, vy) = (f.storage_v(&u), f.storage_v(&y));
        prop_assert!(vu - vy - f.supply_s(&u, &y) <= 1e-8 * (1.0 + vu.abs() + vy.abs()));
    }

    #[test]
    fn lift_is_blockwise_sum(band in band_strategy(), seed in any::<u64>(), h in 1usize..5,
                             data in prop::collection::vec(-10.0..10.0f64, 16)) {
        let d = 2;
        let f = random_function(band, d, seed).unwrap();
        let lf = lift(&f, h).unwrap();
        let u = Vector::from_column_slice(&data[..h * d]);
        let y = Vector::from_column_slice(&data[8..8 + h * d]);
        let (mut v, mut s) = (0.0, 0.0);
        for i in 0..h {
            let ui = u.rows(i * d, d).into_owned();
            let yi = y.rows(i * d, d).into_owned();
            v += f.storage_v(&ui);
            s += f.supply_s(&ui, &yi);
        }
        prop_assert!((lf.storage_v(&u) - v).abs() <= 1e-12 * (1.0 + v.abs()));
        prop_assert!((lf.supply_s(&u, &y) - s).abs() <= 1e-12 * (1.0 + s.abs()));
    }

    #[test]
    fn toeplitz_split(shape in shape_strategy(), h in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mult = sample_feasible(shape, 1.0, &mut rng);
        let t = toeplitz_t(mult.lambda(), shape, h).unwrap();
        // (D2^h)' + D1^h = T^h(lambda)
        let band_of = |lo: isize, hi: isize, sign: isize| Mat::from_fn(h, h, |i, j| {
            let k = i as isize - j as isize;
            if (lo..=hi).contains(&k) { mult.coef(sign * k) } else { 0.0 }
        });
        let d1 = band_of(0, shape.nu1 as isize, 1);
        let d2 = band_of(1, shape.nu2 as isize, -1);
        prop_assert_eq!(d2.transpose() + d1, t);
    }

    #[test]
    fn feasible_multipliers_lift_to_dhd(shape in shape_strategy(), rho_i in 0usize..2, seed in any::<u64>()) {
        let rho = [0.8, 1.0][rho_i];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mult = sample_feasible(shape, rho, &mut rng);
        prop_assert!(DhdConstraintSystem::new(shape, rho).worst(&mult) >= 0.0);
        for h in 1..=20 {
            let m = lifted_multiplier_matrix(&mult, rho, h).unwrap();
            prop_assert!(dhd_check(&m, 1e-12).unwrap().is_dhd, "h = {}", h);
        }
    }

    #[test]
    fn lifted_form_identity(shape in shape_strategy(), band in band_strategy(), seed in any::<u64>(), h in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mult = sample_feasible(shape, 1.0, &mut rng);
        let d = 2;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<Vector> {
            (0..h).map(|_| zfcert::validate::sample_ball(rng, d, 5.0)).collect()
        };
        let u1 = draw(&mut rng);
        let u2 = draw(&mut rng);
        let form = lifted_form_oracle(&mult, band, d, &u1, &u2).unwrap();
        prop_assert!(form.running_defect() <= 1e-10 * form.scale());
        prop_assert!(form.terminal_defect() <= 1e-10 * form.scale());
    }
}

#[test]
fn static_qc_holds_for_random_dhd_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for h in 1..=8 {
        let m: Mat = random_dhd(h, &mut rng);
        for (k, band) in [SlopeBand::new(0.0, 1.0).unwrap(), SlopeBand::new(-1.0, 2.0).unwrap()].into_iter().enumerate() {
            let f = random_function(band, 2, h as u64 * 10 + k as u64).unwrap();
            let r = check_static_qc(&[f], &m, 10_000, 10.0, 1e-8, h as u64).unwrap();
            assert!(r.pass, "h = {h}: {}", r.summary());
        }
    }
    assert!(dhd_check(&linalg::eye(3), 0.0).unwrap().is_dhd);
}
