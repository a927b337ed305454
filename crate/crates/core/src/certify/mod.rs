//! Certification: interconnection assembly, LMI programs, solving,
//! line-search, sweeps and a-posteriori verification.

mod certificate;
mod interconnection;
mod program;
mod search;
mod verify;

pub use certificate::{
    solve, Certificate, CertificateContext, Infeasible, Margins, SolveOutcome, SolverReport,
};
pub use interconnection::{build_interconnection, InterconnectionMatrices, LambdaAffine};
pub use program::{
    assemble, assemble_regional, assemble_global, CertProgram, Layout, ProgramSpec, ProgramValues, Variant,
};
pub use search::{
    certify, default_mu_grid, gain_grid, mu_linesearch, read_sweep_csv, sweep_gain_grid, with_gain,
    write_sweep_csv, CertifyOptions, CertifyOutcome, GainGrid, MuPoint, PointStatus, SweepRow,
};
pub use verify::{
    boundary_initial_states, covered_nonlinearities, simulate_bounds, verify_certificate, CheckItem,
    SimulationBounds, VerificationReport, VerifyOptions,
};
