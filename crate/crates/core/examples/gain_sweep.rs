//! Ellipsoid size against the saturation gain for both programs, written
//! as CSV to stdout.
//!
//! cargo run --release --example gain_sweep > sweep.csv

use zfcert::certify::{gain_grid, sweep_gain_grid, write_sweep_csv, CertifyOptions, Variant};
use zfcert::model::AnalysisProblem;
use zfcert::sdp::ClarabelSolver;

fn main() -> zfcert::Result<()> {
    let problem = AnalysisProblem::load(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/saturated_plant.json"))?;
    let rows = sweep_gain_grid(
        &problem,
        &gain_grid(0.1, 1.3, 0.1)?,
        &[Variant::SectorOnly, Variant::SectorOzf],
        &CertifyOptions::default(),
        &ClarabelSolver::default(),
    );
    write_sweep_csv(&rows, std::io::stdout().lock(), false)?;
    Ok(())
}
