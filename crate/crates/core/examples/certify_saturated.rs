//! Invariant ellipsoid for an open-loop unstable plant under input
//! saturation, with and without the dynamic multiplier.
//!
//! cargo run --release --example certify_saturated [problem.json]

use zfcert::certify::{certify, CertifyOptions, PointStatus, Variant};
use zfcert::model::AnalysisProblem;
use zfcert::sdp::ClarabelSolver;

fn main() -> zfcert::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/saturated_plant.json").into());
    let problem = AnalysisProblem::load(&path)?;
    let solver = ClarabelSolver::default();
    for variant in [Variant::SectorOnly, Variant::SectorOzf] {
        let out = certify(&problem, variant, &CertifyOptions::default(), &solver)?;
        let feasible = out
            .profile()
            .iter()
            .filter(|p| matches!(p.status, PointStatus::Certified { .. }))
            .count();
        match out.certificate() {
            Some(c) => println!(
                "{:>6}: gamma = {:.6}, size = {:.6}, mu = {:.4}, {feasible}/{} grid points feasible",
                variant.label(),
                c.gamma,
                c.size(),
                c.mu,
                out.profile().len()
            ),
            None => println!("{:>6}: infeasible on the whole grid", variant.label()),
        }
        if let (Variant::SectorOzf, Some(c)) = (variant, out.certificate()) {
            println!("lambda = {:?}, E = {}", c.lambda, c.e[(0, 0)]);
            println!("X = {}", c.x_block(problem.system.n())?);
        }
    }
    Ok(())
}
