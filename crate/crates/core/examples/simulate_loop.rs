//! Closed-loop simulation of a saturated loop and of its deadzone form.
//!
//! cargo run --example simulate_loop

use zfcert::linalg::Vector;
use zfcert::model::{loop_transform_saturation, simulate_loop, AnalysisProblem, Deadzone, Saturation};

fn main() -> zfcert::Result<()> {
    let problem = AnalysisProblem::load(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/saturated_plant.json"))?;
    let l = problem.sector_l().unwrap_or(0.1);
    let gain = problem.band.l;
    let x0 = Vector::from_vec(vec![0.1, 0.0]);

    let sat = simulate_loop(&problem.system, &Saturation::new(l, gain)?, &x0, 50)?;
    let transformed = loop_transform_saturation(&problem.system, gain)?;
    let dz = simulate_loop(&transformed, &Deadzone::new(l, gain)?, &x0, 50)?;

    println!("{:>3} {:>12} {:>12} {:>10} {:>12}", "t", "x1", "x2", "w", "|x - x_dz|");
    for t in (0..=50).step_by(5) {
        println!(
            "{t:>3} {:>12.6} {:>12.6} {:>10.6} {:>12.3e}",
            sat.x[t][0],
            sat.x[t][1],
            sat.w[t][0],
            (&sat.x[t] - &dz.x[t]).norm()
        );
    }
    Ok(())
}
