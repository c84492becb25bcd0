use clap::{Args, Parser, Subcommand};
use misfit_forge::cli::{self, RunConfig, SolverConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "misfit-forge", version, about = "Biphase lattice construction, bond topology, and misfit transition energies")]
struct Cli {
    /// Emit failures as a JSON object on stdout.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SolverArgs {
    /// Gradient infinity-norm stopping tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol_grad: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Number of multistart replicas.
    #[arg(long, default_value_t = 4)]
    multistart: u32,
    /// Sublattice-1 next-to-nearest weight (dc/honeycomb).
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    /// Sublattice-2 next-to-nearest weight (dc/honeycomb).
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol_grad: self.tol_grad,
            max_iter: self.max_iter,
            multistart: self.multistart,
            c1: self.c1,
            c2: self.c2,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the biphase lattice restricted to the wire slab.
    Generate {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        k: u32,
        #[arg(long = "M")]
        m: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also export an XYZ snapshot.
        #[arg(long)]
        xyz: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Derive the bond graph and rigid cells for a generated atoms file.
    Bonds {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cells: Option<PathBuf>,
    },
    /// Evaluate the interaction energy of a deformation.
    Energy {
        #[arg(long)]
        atoms: PathBuf,
        #[arg(long)]
        bonds: PathBuf,
        #[arg(long)]
        deformation: PathBuf,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Fit and validate the discrete rigidity constants.
    VerifyRigidity {
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 1_000)]
        octa_samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
    /// Minimize the transition energy for one (rho, lambda, k).
    Gamma {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        k: u32,
        /// Comma-separated increasing clamp half-lengths, e.g. `4,6,8`.
        #[arg(long = "M")]
        m_schedule: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Export the final deformation as XYZ.
        #[arg(long)]
        xyz_out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Sweep gamma over thicknesses and reference ratios.
    Scaling {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        lambda: f64,
        /// Comma-separated reference ratios, e.g. `1,0.8`.
        #[arg(long)]
        rho: String,
        /// Thickness list `1,2,3` or range `2:8`.
        #[arg(long)]
        k: String,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON mirror with fits and crossover.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Execute a JSON run configuration.
    Run { config: PathBuf },
}

fn to_config(cmd: Command) -> misfit_forge::Result<(RunConfig, Vec<String>)> {
    let cfg = match cmd {
        Command::Generate { kind, rho, lambda, k, m, out, xyz, seed } => RunConfig::Generate {
            kind: kind.parse()?,
            rho,
            lambda,
            k,
            m,
            out,
            xyz,
            seed,
        },
        Command::Bonds { input, out, cells } => RunConfig::Bonds { input, out, cells, seed: 0 },
        Command::Energy { atoms, bonds, deformation, out, solver } => RunConfig::Energy {
            atoms,
            bonds,
            deformation,
            out,
            solver: solver.config(),
            seed: 0,
        },
        Command::VerifyRigidity { samples, octa_samples, seed, report } => {
            RunConfig::VerifyRigidity { samples, octa_samples, seed, report }
        }
        Command::Gamma { kind, rho, lambda, k, m_schedule, seed, out, xyz_out, solver } => {
            RunConfig::Gamma {
                kind: kind.parse()?,
                rho,
                lambda,
                k,
                m_schedule: m_schedule.map(|t| cli::parse_f64_list(&t)).transpose()?,
                seed,
                out,
                xyz_out,
                solver: solver.config(),
            }
        }
        Command::Scaling { kind, lambda, rho, k, out, json, seed, solver } => {
            RunConfig::Scaling {
                kind: kind.parse()?,
                lambda,
                rho_list: cli::parse_f64_list(&rho)?,
                k_list: cli::parse_k_list(&k)?,
                out,
                json,
                seed,
                solver: solver.config(),
            }
        }
        Command::Run { .. } => unreachable!("handled by caller"),
    };
    cfg.validate()?;
    Ok((cfg, Vec::new()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_errors = cli.json_errors;
    let result = (|| -> misfit_forge::Result<cli::RunStatus> {
        let (config, defaults) = match cli.command {
            Command::Run { config } => {
                let text = std::fs::read_to_string(&config)?;
                cli::parse_config(&text)?
            }
            other => to_config(other)?,
        };
        cli::run(&config, defaults)
    })();
    match result {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            if json_errors {
                println!(
                    "{}",
                    serde_json::json!({ "error": e.to_string() })
                );
            }
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
