//! FIR multipliers: the doubly hyperdominant constraint system, exact
//! sampling of feasible `(lambda, E)` and the lifted Toeplitz matrices.
//!
//! cargo run --example multiplier_constraints

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zfcert::model::MultiplierShape;
use zfcert::multiplier::{dhd_check, lifted_multiplier_matrix, sample_feasible, DhdConstraintSystem};

fn main() -> zfcert::Result<()> {
    let shape = MultiplierShape::new(2, 1);
    let rho = 0.9;
    let system = DhdConstraintSystem::new(shape, rho);
    println!("{} inequalities in {} unknowns", system.constraints.len(), system.num_variables());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mult = sample_feasible(shape, rho, &mut rng);
    println!("lambda (k = nu1 .. -nu2) = {:?}", mult.lambda());
    println!("E = {}", mult.e());
    println!("worst inequality = {:.3e}", system.worst(&mult));

    for h in [1, 4, 12] {
        let m = lifted_multiplier_matrix(&mult, rho, h)?;
        let r = dhd_check(&m, 1e-12)?;
        println!(
            "h = {h:>2}: d.h.d. {} (max off-diagonal {:+.3e}, min row sum {:+.3e}, min column sum {:+.3e})",
            r.is_dhd, r.max_offdiag, r.min_row_sum, r.min_col_sum
        );
    }
    Ok(())
}
