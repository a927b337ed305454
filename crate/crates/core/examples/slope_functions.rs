//! Slope-restricted test functions: evaluation, the storage/supply pair and
//! the sampled dissipation inequality.
//!
//! cargo run --example slope_functions

use zfcert::linalg::Vector;
use zfcert::model::SlopeBand;
use zfcert::nonlin::{make_profile, random_function, ProfileKind, SlopeRestricted};
use zfcert::validate::{check_dissipation, finite_diff_check};

fn main() -> zfcert::Result<()> {
    let band = SlopeBand::new(-1.0, 2.0)?;
    let f = random_function(band, 3, 42)?;
    let x = Vector::from_vec(vec![0.5, -1.0, 2.0]);
    let (value, grad) = f.evaluate(&x);
    println!("f(x) = {value:.6}, grad f(x) = {:?}", grad.as_slice());

    let y = Vector::from_vec(vec![-0.3, 0.4, 1.0]);
    println!(
        "V(x) - V(y) = {:.6} <= S(x, y) = {:.6}",
        f.storage_v(&x) - f.storage_v(&y),
        f.supply_s(&x, &y)
    );

    for kind in ProfileKind::NONLINEAR {
        let g = make_profile(kind, band, 2, 7)?;
        println!("{kind:?}");
        println!("  {}", check_dissipation(&g, 10_000, 10.0, 1e-8, 1));
        println!("  {}", finite_diff_check(&g, 1_000, 1e-5, 10.0, 1e-6, 1));
    }
    Ok(())
}
