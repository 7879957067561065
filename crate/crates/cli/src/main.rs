use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spde_core::config::Config;
use spde_core::experiments::{representative_trajectory, ExperimentKind, ExperimentReport};
use spde_core::output;
use spde_core::par;
use spde_core::profiles::Profile;

/// Monte Carlo laboratory for quasilinear parabolic SPDEs on an interval.
#[derive(Parser)]
#[command(name = "spde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// L1 contraction of the positive part between two solutions.
    Contract(RunArgs),
    /// Comparison principle for ordered initial data.
    Compare(RunArgs),
    /// Lp energy sweep over initial norms.
    Energy(RunArgs),
    /// Coupling of two solutions under additive noise.
    Ergodic(RunArgs),
    /// Time-averaged functionals from two initial data.
    Invariant(RunArgs),
    /// Small-ball reachability against the stochastic convolution.
    Irreducible(RunArgs),
    /// Repeated entry into a ball of measured radius.
    BallEntry(RunArgs),
    /// Kinetic measure tallies.
    Kinetic(RunArgs),
    /// Sampled hypotheses and Yosida properties.
    Validate(RunArgs),
    /// Per-mode moments against the exact linear recursion.
    Oracle(RunArgs),
    /// Boundary-layer cutoffs against the closed form.
    BoundaryLayer(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        use Command::*;
        match self {
            Contract(a) => (ExperimentKind::Contraction, a),
            Compare(a) => (ExperimentKind::Comparison, a),
            Energy(a) => (ExperimentKind::Energy, a),
            Ergodic(a) => (ExperimentKind::Ergodic, a),
            Invariant(a) => (ExperimentKind::Invariant, a),
            Irreducible(a) => (ExperimentKind::Irreducibility, a),
            BallEntry(a) => (ExperimentKind::BallEntry, a),
            Kinetic(a) => (ExperimentKind::Kinetic, a),
            Validate(a) => (ExperimentKind::Validate, a),
            Oracle(a) => (ExperimentKind::LinearOracle, a),
            BoundaryLayer(a) => (ExperimentKind::BoundaryLayer, a),
        }
    }
}

fn print_summary(report: &ExperimentReport) {
    for c in &report.criteria {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        let gate = if c.gating { "" } else { " (informational)" };
        let se = c.stderr.map(|s| format!(" se={s:.6e}")).unwrap_or_default();
        println!("{verdict} {}: {:.6e} vs {:.6e}{se}{gate}", c.name, c.estimate, c.threshold);
    }
    println!("{} {}", report.kind.name(), if report.pass { "PASS" } else { "FAIL" });
}

fn run(kind: ExperimentKind, args: &RunArgs) -> spde_core::Result<bool> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| spde_core::Error::Io(format!("{}: {e}", args.config.display())))?;
    let mut cfg = Config::parse_for(&text, Some(kind))?;
    cfg.apply_overrides(args.seed, args.paths)?;
    let dir = output::create_dir(&args.out)?;
    output::log_line(&dir, &format!("start {} hash {} threads {}", kind.name(), cfg.hash()?, args.threads))?;
    let report = par::with_threads(args.threads, || cfg.run())??;
    let mut bundle = output::emit_report(&report)?;
    if cfg.output.snapshots || cfg.output.diagnostics {
        let setup = cfg.setup()?;
        let u0 = Profile::bump(1.0).sample(&setup.grid)?;
        let traj = representative_trajectory(&setup, &u0)?;
        output::emit_trajectory(&mut bundle, &traj, cfg.output.snapshots, cfg.output.diagnostics)?;
    }
    let (bundle, _) = output::finish(bundle, &report, Some(&cfg))?;
    bundle.write_to(Path::new(&dir))?;
    output::log_line(&dir, &format!("done pass={}", report.pass))?;
    print_summary(&report);
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match run(kind, &args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
