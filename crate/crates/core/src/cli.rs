//! Command-line front end: `certify`, `sweep`, `simulate` and `validate`.
//!
//! Exit codes: 0 success, 1 error, 2 certified infeasible, 3 validation failed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::certify::{
    certify, sweep_gain_grid, verify_certificate, write_sweep_csv, Certificate, CertifyOptions, CertifyOutcome,
    GainGrid, Variant, VerifyOptions,
};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::{
    simulate_loop, AnalysisProblem, Deadzone, LinearGain, LoopKind, LoopNonlinearity, Saturation, SlopeBand,
    Trajectory,
};
use crate::nonlin::{make_profile, random_function, ProfileKind};
use crate::sdp::{ClarabelSolver, SolverOptions};
use crate::validate::{check_iqc, CheckReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VALIDATION_FAILED: i32 = 3;

pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const PROFILE_FILE: &str = "mu_profile.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "validation.txt";

#[derive(Debug, Parser)]
#[command(name = "zfcert", version, about = "Multiplier-based stability and invariance certificates for Lur'e loops")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify one problem file and write the certificate.
    Certify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = VariantArg::Ozf)]
        variant: VariantArg,
    },
    /// Certify a grid of loop gains and write a CSV table.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Gain grid `a:b:step` or a single value.
        #[arg(long = "grid-L", default_value = "0.1:1.3:0.1")]
        grid_l: GainGrid,
        #[arg(long, value_enum, default_value_t = VariantsArg::Both)]
        variant: VariantsArg,
        /// Write 0 in the `seconds` column so reruns are byte-identical.
        #[arg(long)]
        omit_timing: bool,
    },
    /// Simulate the closed loop and write the trajectory as CSV.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Initial state, comma separated; zero when omitted.
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<String>,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        /// `loop`, `saturation`, `deadzone`, `linear`, `zero`, or a profile
        /// kind (`saturating`, `smooth-sigmoid`, `random-piecewise-linear`, `random`).
        #[arg(long, default_value = "loop")]
        nonlinearity: String,
        /// Loop gain replacing the band's upper slope.
        #[arg(long)]
        gain: Option<f64>,
    },
    /// Re-check a certificate against its problem.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Certificate file; defaults to `<out>/certificate.json`.
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        #[arg(long, default_value_t = 100)]
        n_initial: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Problem file (JSON).
    #[arg(long)]
    pub problem: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Margin of the strict matrix inequalities.
    #[arg(long, default_value_t = 1e-7)]
    pub eps: f64,
    /// Comma-separated sector multipliers; `default` is {0} and 24 log-spaced points on [1e-3, 1e3].
    #[arg(long, default_value = "default")]
    pub mu_grid: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Solver time limit in seconds (0: none).
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Solver options file (JSON).
    #[arg(long, env = "ZFCERT_SOLVER_OPTIONS")]
    pub solver_options: Option<PathBuf>,
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Sector,
    Ozf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantsArg {
    Sector,
    Ozf,
    Both,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Sector => Variant::SectorOnly,
            VariantArg::Ozf => Variant::SectorOzf,
        }
    }
}

impl VariantsArg {
    fn variants(self) -> Vec<Variant> {
        match self {
            VariantsArg::Sector => vec![Variant::SectorOnly],
            VariantsArg::Ozf => vec![Variant::SectorOzf],
            VariantsArg::Both => vec![Variant::SectorOnly, Variant::SectorOzf],
        }
    }
}

/// Settings shared by every command, after validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: PathBuf,
    pub out: PathBuf,
    pub eps: f64,
    pub mu_grid: Vec<f64>,
    pub solver: SolverOptions,
    pub seed: u64,
    pub verbosity: u8,
}

impl RunConfig {
    pub fn from_args(args: &CommonArgs) -> Result<Self> {
        if !(args.eps > 0.0 && args.eps.is_finite()) {
            return Err(Error::param("--eps", format!("must be positive, got {}", args.eps)));
        }
        let mu_grid = parse_mu_grid(&args.mu_grid)?;
        let mut solver = match &args.solver_options {
            Some(path) => SolverOptions::load(path).map_err(|e| at_path(path, e))?,
            None => SolverOptions::default(),
        };
        if let Some(t) = args.time_limit {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::param("--time-limit", format!("must be >= 0, got {t}")));
            }
            solver.time_limit = t;
        }
        Ok(Self {
            problem: args.problem.clone(),
            out: args.out.clone(),
            eps: args.eps,
            mu_grid,
            solver,
            seed: args.seed,
            verbosity: args.verbose,
        })
    }

    pub fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            eps: self.eps,
            mu_grid: self.mu_grid.clone(),
        }
    }

    pub fn load_problem(&self) -> Result<AnalysisProblem> {
        AnalysisProblem::load(&self.problem).map_err(|e| at_path(&self.problem, e))
    }

    fn solver(&self) -> ClarabelSolver {
        ClarabelSolver::new(self.solver.clone())
    }

    fn output(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).map_err(|e| at_path(&self.out, e.into()))?;
        Ok(self.out.join(name))
    }
}

fn at_path(path: &Path, e: Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

/// `default`, or comma-separated nonnegative values.
pub fn parse_mu_grid(text: &str) -> Result<Vec<f64>> {
    if text.trim() == "default" {
        return Ok(crate::certify::default_mu_grid());
    }
    let grid = text
        .split(',')
        .map(|t| {
            let v: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::param("--mu-grid", format!("bad number `{t}`")))?;
            if v >= 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::param("--mu-grid", format!("entries must be finite and >= 0, got {v}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(Error::param("--mu-grid", "must not be empty"));
    }
    Ok(grid)
}

/// Comma-separated vector.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::param("--x0", format!("bad number `{t}` in `{text}`"))))
        .collect()
}

fn summary(cert: &Certificate) -> String {
    let m = &cert.solver.margins;
    let mut s = format!(
        "certified ({}): gamma = {:.9}, size = {:.9}, mu = {:.6e}\nmargins: lmi1 {:.3e}, lmi2 {:.3e}",
        cert.variant.label(),
        cert.gamma,
        cert.size(),
        cert.mu,
        m.lmi1,
        m.lmi2
    );
    if let Some(v) = m.lmi3 {
        s += &format!(", lmi3 {v:.3e}");
    }
    if let Some(v) = m.dhd {
        s += &format!(", dhd {v:.3e}");
    }
    s
}

pub fn run_certify(cfg: &RunConfig, variant: Variant) -> Result<i32> {
    let problem = cfg.load_problem()?;
    let outcome = certify(&problem, variant, &cfg.certify_options(), &cfg.solver())?;
    if problem.sector_l().is_some() {
        fs::write(cfg.output(PROFILE_FILE)?, serde_json::to_string_pretty(outcome.profile())?)?;
    }
    if cfg.verbosity > 0 {
        for p in outcome.profile() {
            println!("mu = {:.6e}: {:?}", p.mu, p.status);
        }
    }
    match outcome {
        CertifyOutcome::Certified { certificate, .. } => {
            let path = cfg.output(CERTIFICATE_FILE)?;
            certificate.save(&path)?;
            println!("{}", summary(&certificate));
            println!("certificate written to {}", path.display());
            Ok(EXIT_OK)
        }
        CertifyOutcome::Infeasible { profile } => {
            println!("infeasible: no certificate at any of {} grid points", profile.len());
            Ok(EXIT_INFEASIBLE)
        }
    }
}

pub fn run_sweep(cfg: &RunConfig, gains: &[f64], variants: &[Variant], omit_timing: bool) -> Result<i32> {
    let template = cfg.load_problem()?;
    let rows = sweep_gain_grid(&template, gains, variants, &cfg.certify_options(), &cfg.solver());
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("L = {} ({}): {}", r.gain, r.variant.label(), r.error.as_deref().unwrap_or_default());
    }
    let path = cfg.output(SWEEP_FILE)?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf, omit_timing)?;
    fs::write(&path, buf)?;
    let feasible = rows.iter().filter(|r| r.feasible()).count();
    println!("{} cells, {} feasible; table written to {}", rows.len(), feasible, path.display());
    Ok(EXIT_OK)
}

/// Nonlinearity for `simulate`, see [`Command::Simulate`].
pub fn simulation_nonlinearity(
    problem: &AnalysisProblem,
    spec: &str,
    gain: Option<f64>,
    seed: u64,
) -> Result<Box<dyn LoopNonlinearity>> {
    let k = gain.unwrap_or(problem.band.l);
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::param("--gain", format!("must be finite and >= 0, got {k}")));
    }
    let level = || {
        problem
            .sector.map(|s| s.l)
            .ok_or_else(|| Error::param("sector.l", format!("`{spec}` needs the problem's `sector.l`")))
    };
    let spec = match (spec, problem.loop_kind) {
        ("loop", LoopKind::Saturation) => "saturation",
        ("loop", LoopKind::Deadzone) => "deadzone",
        ("loop", LoopKind::Gradient) => "linear",
        (s, _) => s,
    };
    Ok(match spec {
        "saturation" => Box::new(Saturation::new(level()?, k)?),
        "deadzone" if k == 0.0 => Box::new(LinearGain(0.0)),
        "deadzone" => Box::new(Deadzone::new(level()?, k)?),
        "linear" => Box::new(LinearGain(k)),
        "zero" => Box::new(LinearGain(0.0)),
        other => {
            let band = SlopeBand::new(problem.band.m, k)?;
            let d = problem.system.d_dim();
            if other == "random" {
                Box::new(random_function(band, d, seed)?)
            } else {
                let kind: ProfileKind = other.parse()?;
                Box::new(make_profile(kind, band, d, seed)?)
            }
        }
    })
}

fn trajectory_header(n: usize, d: usize) -> Vec<String> {
    let named = |p: &str, k: usize| -> Vec<String> {
        if k == 1 && p != "x" {
            vec![p.to_string()]
        } else {
            (1..=k).map(|i| format!("{p}{i}")).collect()
        }
    };
    std::iter::once("t".to_string())
        .chain(named("x", n))
        .chain(named("z", d))
        .chain(named("w", d))
        .collect()
}

/// CSV with columns `t, x1..xn, z, w` (`z1..zd`, `w1..wd` when `d > 1`).
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let n = traj.x.first().map_or(0, |v| v.len());
    let d = traj.z.first().map_or(0, |v| v.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(n, d))?;
    for t in 0..traj.x.len() {
        let row = std::iter::once(t.to_string())
            .chain(traj.x[t].iter().chain(traj.z[t].iter()).chain(traj.w[t].iter()).map(|v| v.to_string()));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory written by [`write_trajectory_csv`] for a plant of
/// order `n`.
pub fn read_trajectory_csv<R: std::io::Read>(input: R, n: usize) -> Result<Trajectory> {
    let mut rd = csv::Reader::from_reader(input);
    let width = rd.headers()?.len();
    if width < 1 + n || !(width - 1 - n).is_multiple_of(2) {
        return Err(Error::Format(format!("trajectory header has {width} columns, plant order {n}")));
    }
    let d = (width - 1 - n) / 2;
    let mut traj = Trajectory {
        x: Vec::new(),
        z: Vec::new(),
        w: Vec::new(),
    };
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| s.parse().map_err(|_| Error::Format(format!("row {}: bad number `{s}`", i + 1))))
            .collect::<Result<_>>()?;
        traj.x.push(Vector::from_column_slice(&vals[..n]));
        traj.z.push(Vector::from_column_slice(&vals[n..n + d]));
        traj.w.push(Vector::from_column_slice(&vals[n + d..]));
    }
    Ok(traj)
}

pub fn run_simulate(cfg: &RunConfig, x0: Option<&[f64]>, horizon: usize, nonlinearity: &str, gain: Option<f64>) -> Result<i32> {
    let problem = cfg.load_problem()?;
    let n = problem.system.n();
    let x0 = match x0 {
        Some(v) if v.len() != n => return Err(Error::dim("--x0", n, v.len())),
        Some(v) => Vector::from_column_slice(v),
        None => Vector::zeros(n),
    };
    let f = simulation_nonlinearity(&problem, nonlinearity, gain, cfg.seed)?;
    let traj = simulate_loop(&problem.system, f.as_ref(), &x0, horizon)?;
    let path = cfg.output(TRAJECTORY_FILE)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf)?;
    fs::write(&path, buf)?;
    println!("{} steps written to {}", horizon, path.display());
    Ok(EXIT_OK)
}

/// IQC checks of the certified multiplier against random functions.
pub fn multiplier_checks(cert: &Certificate, problem: &AnalysisProblem, seed: u64) -> Result<Vec<CheckReport>> {
    if cert.variant != Variant::SectorOzf {
        return Ok(Vec::new());
    }
    let mult = cert.multiplier()?;
    (0..5)
        .map(|i| {
            let f = random_function(problem.band, problem.system.d_dim(), seed.wrapping_add(i))?;
            let mut r = check_iqc(&f, &mult, cert.rho, 20, 50, 10.0, 1e-8, seed.wrapping_add(i))?;
            r.name = format!("iqc[random {i}]");
            Ok(r)
        })
        .collect()
}

pub fn run_validate(cfg: &RunConfig, certificate: Option<&Path>, options: &VerifyOptions) -> Result<i32> {
    let problem = cfg.load_problem()?;
    let path = certificate.map_or_else(|| cfg.out.join(CERTIFICATE_FILE), Path::to_path_buf);
    let cert = Certificate::load(&path).map_err(|e| at_path(&path, e))?;
    let report = verify_certificate(&cert, &problem, options)?;
    let iqc = multiplier_checks(&cert, &problem, options.seed)?;
    let mut text = report.to_string();
    for r in &iqc {
        text += &format!("{}\n", r.summary());
    }
    let passed = report.passed() && iqc.iter().all(|r| r.pass);
    print!("{text}");
    fs::write(cfg.output(REPORT_FILE)?, &text)?;
    if passed {
        println!("certificate valid");
        Ok(EXIT_OK)
    } else {
        let names: Vec<&str> = report
            .failures()
            .map(|f| f.name.as_str())
            .chain(iqc.iter().filter(|r| !r.pass).map(|r| r.name.as_str()))
            .collect();
        println!("validation failed: {}", names.join(", "));
        Ok(EXIT_VALIDATION_FAILED)
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(command: &Command) -> Result<i32> {
    match command {
        Command::Certify { common, variant } => run_certify(&RunConfig::from_args(common)?, (*variant).into()),
        Command::Sweep {
            common,
            grid_l,
            variant,
            omit_timing,
        } => run_sweep(&RunConfig::from_args(common)?, &grid_l.0, &variant.variants(), *omit_timing),
        Command::Simulate {
            common,
            x0,
            horizon,
            nonlinearity,
            gain,
        } => {
            let x0 = x0.as_deref().map(parse_vector).transpose()?;
            run_simulate(&RunConfig::from_args(common)?, x0.as_deref(), *horizon, nonlinearity, *gain)
        }
        Command::Validate {
            common,
            certificate,
            horizon,
            n_initial,
        } => {
            let cfg = RunConfig::from_args(common)?;
            let options = VerifyOptions {
                horizon: *horizon,
                n_initial: *n_initial,
                seed: cfg.seed,
                ..Default::default()
            };
            run_validate(&cfg, certificate.as_deref(), &options)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::saturated_problem;

    #[test]
    fn mu_grid_parsing() {
        assert_eq!(parse_mu_grid("default").unwrap().len(), 25);
        assert_eq!(parse_mu_grid("0, 0.5,2").unwrap(), vec![0.0, 0.5, 2.0]);
        assert!(parse_mu_grid("").is_err());
        assert!(parse_mu_grid("1,-2").is_err());
        assert!(parse_mu_grid("1,x").is_err());
    }

    #[test]
    fn argument_parsing() {
        let cli = Cli::try_parse_from([
            "zfcert", "sweep", "--problem", "p.json", "--grid-L", "0.1:0.3:0.1", "--variant", "both", "--omit-timing",
        ])
        .unwrap();
        match cli.command {
            Command::Sweep { grid_l, variant, omit_timing, .. } => {
                assert_eq!(grid_l.0, vec![0.1, 0.2, 0.3]);
                assert_eq!(variant.variants().len(), 2);
                assert!(omit_timing);
            }
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["zfcert", "simulate", "--problem", "p.json", "--x0", "-0.1,0"]).unwrap();
        match cli.command {
            Command::Simulate { x0, .. } => assert_eq!(parse_vector(&x0.unwrap()).unwrap(), vec![-0.1, 0.0]),
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["zfcert", "certify"]).is_err());
        assert!(Cli::try_parse_from(["zfcert", "certify", "--problem", "p", "--variant", "both"]).is_err());
    }

    #[test]
    fn nonlinearity_specs() {
        let p = saturated_problem(1.0);
        let z = Vector::from_element(1, 0.5);
        assert_eq!(simulation_nonlinearity(&p, "loop", None, 0).unwrap().eval(&z)[0], 0.1);
        assert_eq!(simulation_nonlinearity(&p, "loop", Some(0.0), 0).unwrap().eval(&z)[0], 0.0);
        assert!((simulation_nonlinearity(&p, "deadzone", Some(2.0), 0).unwrap().eval(&z)[0] - 0.8).abs() < 1e-15);
        assert_eq!(simulation_nonlinearity(&p, "linear", Some(2.0), 0).unwrap().eval(&z)[0], 1.0);
        assert!(simulation_nonlinearity(&p, "random", None, 3).is_ok());
        assert!(simulation_nonlinearity(&p, "smooth-sigmoid", None, 3).is_ok());
        assert!(simulation_nonlinearity(&p, "bogus", None, 3).is_err());
        assert!(simulation_nonlinearity(&p, "linear", Some(-1.0), 3).is_err());
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let p = saturated_problem(1.0);
        let f = simulation_nonlinearity(&p, "loop", None, 0).unwrap();
        let traj = simulate_loop(&p.system, f.as_ref(), &Vector::from_vec(vec![0.1, 0.0]), 50).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,x1,x2,z,w\n"));
        assert_eq!(read_trajectory_csv(buf.as_slice(), 2).unwrap(), traj);
        assert!(read_trajectory_csv(buf.as_slice(), 3).is_err());
    }
}
