mod commands;
mod config;
mod format;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use stripwet::{Boundary, IncrementLaw};

/// Strip wetting model: kernels, free energy, renewal checks and exact path sampling.
#[derive(Debug, Parser)]
#[command(name = "stripwet", version)]
struct Cli {
    /// key=value file mirroring the flags; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct LawArgs {
    /// Increment law: pq:p=0.3, gauss:sigma=1.0 or unif:hw=1.0.
    #[arg(long, default_value = "pq:p=0.3")]
    law: IncrementLaw,

    /// Strip width a (a positive integer for the pq walk).
    #[arg(long, default_value_t = 1.0)]
    a: f64,
}

#[derive(Debug, Args)]
struct KernelArgs {
    /// Tabulated return times (default 8192 for pq, 512 otherwise).
    #[arg(long)]
    nmax: Option<usize>,

    /// Strip quadrature nodes for continuous laws.
    #[arg(long, default_value_t = 32)]
    nodes: usize,

    /// Panel width of the excursion grid (default σ).
    #[arg(long)]
    panel_width: Option<f64>,
}

#[derive(Debug, Args)]
struct BetaArgs {
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,

    /// Read --beta as an offset from the critical point.
    #[arg(long)]
    relative: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Free,
    Constrained,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Free => Boundary::Free,
            BoundaryArg::Constrained => Boundary::Constrained,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegimeArg {
    Sub,
    Super,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Localized,
    DelocConstrained,
    DelocFree,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a return kernel and write it to a binary cache file.
    Kernel {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        out: PathBuf,
    },

    /// Ladder-height tables.
    ///
    /// CSV columns: x,U,V,asc_tail,desc_tail,U_se,V_se,asc_se,desc_se
    Ladder {
        #[command(flatten)]
        law: LawArgs,
        /// Ladder heights simulated per direction (ignored for pq, which is exact).
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        x_max: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Free energy on a β grid.
    ///
    /// CSV columns: beta,F,delta_residual
    FreeEnergy {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        /// lo:hi:n
        #[arg(long, allow_hyphen_values = true)]
        beta_grid: String,
        /// Grid is β − β_c.
        #[arg(long)]
        relative: bool,
        /// Geometric spacing between lo and hi.
        #[arg(long)]
        log: bool,
        /// Also fit log F against log(β − β_c) and print exponent and amplitude.
        #[arg(long)]
        fit: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Critical point as JSON {beta_c, nodes, refinement_delta}.
    CriticalPoint {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Sample paths of the polymer measure.
    ///
    /// CSV columns: path,contacts,max_contact,L_A,R_A,final_height,max_height
    Simulate {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        beta: BetaArgs,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, value_enum, default_value = "free")]
        boundary: BoundaryArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write every path to this binary file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },

    /// KS of rescaled marginals against the meander/excursion reference (sub), or
    /// decay of the sup (super). Emits JSON.
    ScalingTest {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        beta: BetaArgs,
        /// One N (sub) or a comma list (super).
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, value_enum, default_value = "free")]
        boundary: BoundaryArg,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1.0")]
        t: Vec<f64>,
        /// Length of the reference walk.
        #[arg(long, default_value_t = 4096)]
        nref: usize,
        #[arg(long, value_enum, default_value = "sub")]
        regime: RegimeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Empirical tails of max A, L(A) and N − R(A).
    ///
    /// CSV columns: N,L,p_max_contact,p_left,p_right
    ContactStats {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        beta: BetaArgs,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long = "L", value_delimiter = ',', default_value = "50")]
        l: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[arg(long, value_enum, default_value = "free")]
        boundary: BoundaryArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Forward recurrence chain against its stationary law.
    ///
    /// CSV columns: j,tv
    RenewalCheck {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Required unless --two-state.
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<f64>,
        #[arg(long)]
        relative: bool,
        /// Use the built-in two-state kernel instead of the tilted return kernel.
        #[arg(long)]
        two_state: bool,
        #[arg(long, value_delimiter = ',', default_value = "10000")]
        j: Vec<usize>,
        #[arg(long, default_value_t = 1_000_000)]
        chains: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Normalised partition functions along N.
    ///
    /// CSV columns: N,log_z,normalized,tv (tv: Green function vs its limit, localized only)
    Asymptotics {
        #[command(flatten)]
        law: LawArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        beta: BetaArgs,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Closed-form constants of the (p,q) walk as JSON.
    PqExact {
        #[arg(long)]
        p: f64,
        /// Accepted for compatibility; output is always JSON.
        #[arg(long)]
        json: bool,
    },

    /// log Z_N of the (p,q) walk by transfer matrix.
    PqZ {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        a: usize,
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, value_enum, default_value = "free")]
        boundary: BoundaryArg,
    },
}

fn command() -> clap::Command {
    let mut cmd = Cli::command().args_override_self(true);
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        cmd = cmd.mut_subcommand(name, |s| s.args_override_self(true));
    }
    cmd
}

fn parse(args: Vec<OsString>) -> Result<Cli, clap::Error> {
    let (rest, config) = config::take_config(&args);
    let Some(path) = config else {
        return Cli::from_arg_matches(&command().try_get_matches_from(&args)?);
    };
    let entries = config::read(Path::new(&path)).map_err(|e| command().error(clap::error::ErrorKind::Io, format!("{e:#}")))?;
    let names: Vec<String> = command().get_subcommands().map(|s| s.get_name().to_string()).collect();
    let merged = match rest.iter().skip(1).find(|a| names.iter().any(|n| n.as_str() == a.to_string_lossy())) {
        Some(sub) => config::splice(&rest, &sub.to_string_lossy(), &entries),
        None => rest,
    };
    let mut cli = Cli::from_arg_matches(&command().try_get_matches_from(merged)?)?;
    cli.config = Some(path.into());
    Ok(cli)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match parse(std::env::args_os().collect()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
