//! Oracle checks from the validate module on solver-produced multipliers.

use zfcert::model::{MultiplierShape, SlopeBand};
use zfcert::nonlin::random_function;
use zfcert::sdp::ClarabelSolver;
use zfcert::validate::{check_dissipation, check_iqc, lp_feasible_multiplier};

#[test]
fn iqc_holds_for_lp_multipliers() {
    let solver = ClarabelSolver::default();
    let band = SlopeBand::new(-0.5, 2.0).unwrap();
    for nu1 in 0..3 {
        for nu2 in 0..3 {
            for rho in [0.8, 0.9, 1.0] {
                let shape = MultiplierShape::new(nu1, nu2);
                let seed = (nu1 * 10 + nu2) as u64;
                let mult = lp_feasible_multiplier(shape, rho, &solver, seed).unwrap();
                for k in 0..3 {
                    let f = random_function(band, 2, seed * 7 + k).unwrap();
                    let r = check_iqc(&f, &mult, rho, 20, 50, 10.0, 1e-8, k).unwrap();
                    assert!(r.pass, "{shape:?} rho {rho}: {}", r.summary());
                }
            }
        }
    }
}

#[test]
fn reports_replay_from_their_seed() {
    let f = random_function(SlopeBand::new(0.0, 1.0).unwrap(), 3, 4).unwrap();
    let a = check_dissipation(&f, 5000, 1e3, 1e-8, 99);
    let b = check_dissipation(&f, 5000, 1e3, 1e-8, 99);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert!(a.pass, "{}", a.summary());
}
