//! Certificate files: write, read back and re-check independently of the
//! solver, then show that a tampered certificate is rejected.
//!
//! cargo run --release --example verify_certificate

use zfcert::certify::{certify, verify_certificate, Certificate, CertifyOptions, Variant, VerifyOptions};
use zfcert::model::AnalysisProblem;
use zfcert::sdp::ClarabelSolver;

fn main() -> zfcert::Result<()> {
    let problem = AnalysisProblem::load(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data/saturated_plant.json"))?;
    let out = certify(&problem, Variant::SectorOzf, &CertifyOptions::default(), &ClarabelSolver::default())?;
    let Some(cert) = out.certificate() else {
        println!("infeasible");
        return Ok(());
    };
    let path = std::env::temp_dir().join("zfcert_certificate.json");
    cert.save(&path)?;
    let loaded = Certificate::load(&path)?;
    assert_eq!(&loaded, cert);
    println!("certificate written to {}", path.display());

    let report = verify_certificate(&loaded, &problem, &VerifyOptions::default())?;
    print!("{report}");

    let mut tampered = loaded.clone();
    tampered.cal_x[(2, 3)] += 0.1;
    tampered.cal_x[(3, 2)] += 0.1;
    let report = verify_certificate(&tampered, &problem, &VerifyOptions::default())?;
    let failed: Vec<_> = report.failures().map(|f| f.name.as_str()).collect();
    println!("tampered certificate: failing checks {failed:?}");
    Ok(())
}
