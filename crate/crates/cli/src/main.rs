use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quasilin_cli::config::{read_file, CsvFields};
use quasilin_cli::{execute, parse_config, Command, ExecError, Overrides};

#[derive(Parser)]
#[command(
    name = "quasilin",
    version,
    about = "Finite-difference experiments for div((sigma + q u) grad u) = F"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML file with default values; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Nodes per side (at least 9).
    #[arg(long, global = true)]
    grid_n: Option<i64>,
    /// Finite-difference step for DN linearizations, in [1e-5, 1e-1].
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Relative residual target of the solvers.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Frequency magnitudes for cgo-probe and recon, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    /// Seed of the random test fields.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// constant, affine, manufactured or linear.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// CSV field (x, y, re, im) replacing the preset sigma.
    #[arg(long, global = true)]
    sigma_csv: Option<PathBuf>,
    #[arg(long, global = true)]
    q_csv: Option<PathBuf>,
    #[arg(long, global = true)]
    source_csv: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the quasilinear problem and check the background conditions.
    Forward,
    /// Sample the Dirichlet-to-Neumann map on the boundary basis.
    Dn,
    /// Compare finite-difference DN derivatives with the linearized solves.
    Linearize,
    /// Adjoint, gauge-conjugation and magnetic-form identities.
    Verify,
    /// Additive source gauge: linear counterexample or nonlinear breaking.
    GaugeDemo {
        #[arg(long)]
        linear: bool,
    },
    /// CGO probe of (qZ + grad q) . zeta over the tau list.
    CgoProbe,
    /// Boundary-to-interior recovery checks and the coupled system residual.
    Recon,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, linear) = match cli.command {
        Cmd::Forward => (Command::Forward, false),
        Cmd::Dn => (Command::Dn, false),
        Cmd::Linearize => (Command::Linearize, false),
        Cmd::Verify => (Command::Verify, false),
        Cmd::GaugeDemo { linear } => (Command::GaugeDemo, linear),
        Cmd::CgoProbe => (Command::CgoProbe, false),
        Cmd::Recon => (Command::Recon, false),
    };
    let c = cli.common;
    let flags = Overrides {
        grid_n: c.grid_n,
        eps: c.eps,
        tol: c.tol,
        tau: c.tau,
        seed: c.seed,
        preset: c.preset,
        output_dir: c.output_dir,
        fields: CsvFields {
            sigma: c.sigma_csv,
            q: c.q_csv,
            source: c.source_csv,
        },
    };
    let file = match c.config.as_deref().map(read_file).transpose() {
        Ok(f) => f,
        Err(e) => return usage(&e.to_string()),
    };
    let cfg = match parse_config(command, linear, file, flags) {
        Ok(cfg) => cfg,
        Err(e) => return usage(&e.to_string()),
    };
    match execute(&cfg) {
        Ok(report) => {
            for v in &report.verdicts {
                println!("{} {} ; {}", v.status.label(), v.name, v.detail);
            }
            println!(
                "report written to {}",
                cfg.output_dir.join("report.txt").display()
            );
            if report.failed() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(ExecError::Config(e)) => usage(&e.to_string()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("usage error: {msg}");
    ExitCode::from(2)
}
