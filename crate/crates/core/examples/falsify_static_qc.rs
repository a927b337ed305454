//! Static quadratic constraints on lifted gradients: they hold for doubly
//! hyperdominant matrices and are falsified by sampling otherwise.
//!
//! cargo run --release --example falsify_static_qc

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zfcert::linalg::Mat;
use zfcert::model::SlopeBand;
use zfcert::validate::{check_static_qc, falsification_family, random_dhd};

fn main() -> zfcert::Result<()> {
    let family = falsification_family(SlopeBand::new(0.0, 1.0)?, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases = [
        ("random d.h.d. 4x4", random_dhd(4, &mut rng)),
        ("negative row sum", Mat::from_row_slice(2, 2, &[1.0, -2.0, 0.0, 1.0])),
        ("positive off-diagonal", Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])),
    ];
    for (name, m) in cases {
        let r = check_static_qc(&family, &m, 100_000, 3.0, 1e-10, 5)?;
        println!("{name}: {r}");
        if let Some(u) = &r.witness {
            if !r.pass {
                println!("  violating point u = {u:?}");
            }
        }
    }
    Ok(())
}
