//! Global exponential stability with a prescribed rate: certify at
//! `rho = 0.95`, then compare simulated decay with the certified constant.
//!
//! cargo run --release --example exponential_decay

use zfcert::certify::{boundary_initial_states, certify, simulate_bounds, CertifyOptions, Variant};
use zfcert::model::AnalysisProblem;
use zfcert::sdp::ClarabelSolver;

fn main() -> zfcert::Result<()> {
    let problem = AnalysisProblem::load(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/contractive_plant.json"))?;
    let out = certify(&problem, Variant::SectorOzf, &CertifyOptions::default(), &ClarabelSolver::default())?;
    let Some(cert) = out.certificate() else {
        println!("no certificate at rho = {}", problem.rho);
        return Ok(());
    };
    let (n, d) = (problem.system.n(), problem.system.d_dim());
    let k = cert.decay_constant(n, d)?;
    println!("gamma = {:.6}, |x_t| <= {k:.4} * {}^t |x_0|", cert.gamma, cert.rho);

    let x = cert.x_block(n)?;
    let initial = boundary_initial_states(&x, 100, 1.0, 0);
    let b = simulate_bounds(cert, &problem, &initial, 1.0, 200, 20, 0)?;
    println!("{} trajectories over 200 steps:", b.trajectories);
    println!("  performance slack   {:+.3e}", b.per_slack);
    println!("  worst decay ratio   {:.4}", b.decay_ratio);
    println!("  worst output        {:.4}", b.output);
    Ok(())
}
