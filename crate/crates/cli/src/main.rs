use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use nssteer_cli::{
    builtin_demo, default_out_dir, lattice_is_generator, lattice_ladder, lattice_member,
    load_spec, run_spec, RunStatus,
};
use std::path::PathBuf;

/// Desk-scale steering experiments for the 3D Navier-Stokes system on the
/// torus: saturating-space computation, certificate verification, spectral
/// Galerkin simulation, Lagrangian flow maps, and control synthesis.
#[derive(Parser)]
#[command(name = "nssteer", version, about)]
struct Cli {
    /// Experiment spec (TOML). Used by spec-driven subcommands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts (default: out-<kind>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed override for randomized sweeps.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for seed-parallel flow integration.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integer-lattice queries on Z^3.
    Lattice {
        #[command(subcommand)]
        op: LatticeOp,
    },
    /// Saturation ladder of a control space (CSV of reached planes per depth).
    Saturate,
    /// Replay a saturation certificate through the bilinear term.
    VerifyCertificate {
        /// Built-in certificate name: e12, lavt, or lsdfavt.
        #[arg(long)]
        builtin: Option<String>,
    },
    /// Advance the controlled system and export the trajectory.
    Simulate,
    /// Integrate a Lagrangian flow map for an isotopy target.
    Flow,
    /// Run the control-synthesis staircase.
    Steer {
        /// Built-in demo: steer-e12, steer-lavt8, or steer-lsdfavt6.
        #[arg(long)]
        demo: Option<String>,
    },
    /// Stability or Lipschitz probes (kind chosen by the spec file).
    Probe,
}

#[derive(Subcommand)]
enum LatticeOp {
    /// Test whether a set generates Z^3 (gcd of determinants).
    IsGenerator {
        /// JSON array of integer triples, e.g. [[1,0,0],[0,1,0],[0,0,1]].
        set: String,
    },
    /// Grow the mode-set ladder K_j.
    Ladder {
        set: String,
        #[arg(long)]
        depth: usize,
    },
    /// Integer-span membership of a vector.
    Member {
        set: String,
        #[arg(long)]
        vector: String,
    },
}

fn main() {
    match run() {
        Ok(status) => std::process::exit(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn run() -> Result<RunStatus> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Lattice { op } => {
            let out = match op {
                LatticeOp::IsGenerator { set } => lattice_is_generator(set)?,
                LatticeOp::Ladder { set, depth } => lattice_ladder(set, *depth)?,
                LatticeOp::Member { set, vector } => lattice_member(set, vector)?,
            };
            println!("{out}");
            Ok(RunStatus::Ok)
        }
        Command::Steer { demo: Some(name) } => {
            let Some(text) = builtin_demo(name) else {
                bail!("unknown demo {name:?}; available: steer-e12, steer-lavt8, steer-lsdfavt6");
            };
            let spec = toml::from_str(text)?;
            let out_dir = cli.out.unwrap_or_else(|| default_out_dir(name));
            run_spec(&spec, &out_dir, text, cli.seed, cli.threads)
        }
        Command::VerifyCertificate { builtin: Some(name) } if cli.config.is_none() => {
            let spec = nssteer_cli::spec::ExperimentSpec::VerifyCertificate(
                nssteer_cli::spec::VerifyCertificateSpec {
                    seed: 0,
                    builtin: Some(name.clone()),
                    path: None,
                },
            );
            let out_dir = cli
                .out
                .unwrap_or_else(|| default_out_dir(&format!("verify-{name}")));
            run_spec(&spec, &out_dir, name, cli.seed, cli.threads)
        }
        command => {
            let Some(config) = &cli.config else {
                bail!("this subcommand needs --config <spec.toml>");
            };
            let (spec, text) = load_spec(config)?;
            let expected = match command {
                Command::Saturate => "saturate",
                Command::VerifyCertificate { .. } => "verify-certificate",
                Command::Simulate => "simulate",
                Command::Flow => "flow",
                Command::Steer { .. } => "steer",
                Command::Probe => match spec.kind_name() {
                    k @ ("stability-probe" | "lipschitz-probe") => k,
                    other => {
                        bail!("probe spec must be stability-probe or lipschitz-probe, got {other}")
                    }
                },
                Command::Lattice { .. } => unreachable!(),
            };
            if spec.kind_name() != expected {
                bail!(
                    "spec kind {:?} does not match the {expected:?} subcommand",
                    spec.kind_name()
                );
            }
            let out_dir = cli.out.unwrap_or_else(|| default_out_dir(spec.kind_name()));
            run_spec(&spec, &out_dir, &text, cli.seed, cli.threads)
        }
    }
}
