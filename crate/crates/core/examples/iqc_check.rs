//! Integral quadratic constraint with terminal cost, checked along random
//! exponentially weighted signals for a multiplier found by linear programming.
//!
//! cargo run --example iqc_check

use zfcert::model::{MultiplierShape, SlopeBand};
use zfcert::nonlin::random_function;
use zfcert::sdp::ClarabelSolver;
use zfcert::validate::{check_iqc, lp_feasible_multiplier};

fn main() -> zfcert::Result<()> {
    let solver = ClarabelSolver::default();
    let band = SlopeBand::new(0.0, 1.5)?;
    for rho in [0.8, 0.9, 1.0] {
        let mult = lp_feasible_multiplier(MultiplierShape::new(2, 2), rho, &solver, 1)?;
        let f = random_function(band, 2, 5)?;
        let report = check_iqc(&f, &mult, rho, 50, 50, 10.0, 1e-8, 2)?;
        println!("rho = {rho}: lambda = {:?}", mult.lambda());
        println!("  {report}");
    }
    Ok(())
}
