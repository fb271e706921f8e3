//! `fractgv` command-line tool: signal synthesis, TGV^r denoising, seminorm
//! evaluation, limit checks, and bilevel grid-search training.
//!
//! Exit codes are a stable contract for scripts: 0 success, 2 usage errors,
//! 1 I/O failures, 3 numeric failures, 4 training failures, 5 check
//! failures.

mod cmds;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fractgv::Error;

#[derive(Parser)]
#[command(name = "fractgv", version, about = "1D signal denoising with fractional-order TGV regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalKind {
    Step,
    Corner,
    Flat,
    Affine,
    Sine,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    Bbm,
    Ms,
    Tgv,
}

/// Solver options shared by the compute commands; flags override config-file
/// values, which override the defaults.
#[derive(Args, Clone)]
pub struct SolverFlags {
    /// Plain-text key=value config file (max_iter, tol_rel, window, safety).
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    /// Iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relative stopping tolerance.
    #[arg(long)]
    pub tol_rel: Option<f64>,
    /// Energy-stagnation window (iterations).
    #[arg(long)]
    pub window: Option<usize>,
    /// Safety factor on the operator-norm estimate.
    #[arg(long)]
    pub safety: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a clean test signal and a noisy copy.
    Generate {
        /// Signal shape.
        #[arg(long, value_enum)]
        kind: SignalKind,
        /// Sample count.
        #[arg(long, default_value_t = 256)]
        n: usize,
        /// Gaussian noise standard deviation.
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        /// Noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Shift the noise so its discrete mean is exactly zero.
        #[arg(long)]
        zero_mean: bool,
        /// Output path for the clean signal.
        #[arg(long)]
        out_clean: std::path::PathBuf,
        /// Output path for the noisy signal.
        #[arg(long)]
        out_noisy: std::path::PathBuf,
    },
    /// Denoise a signal at fixed weights and order.
    Denoise {
        /// Input (noisy) signal CSV.
        #[arg(long = "in")]
        input: std::path::PathBuf,
        /// Optional clean reference; enables the cost line.
        #[arg(long)]
        clean: Option<std::path::PathBuf>,
        /// Weights: one value (broadcast) or floor(r)+1 values.
        #[arg(long, num_args = 1.., required = true)]
        alpha: Vec<f64>,
        /// Derivative order r >= 1.
        #[arg(long)]
        r: f64,
        /// Output path for the reconstruction.
        #[arg(long)]
        out: std::path::PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Grid-search training over (alpha, r) under the box constraint.
    Train {
        /// Noisy input signal CSV.
        #[arg(long)]
        noisy: std::path::PathBuf,
        /// Clean reference signal CSV.
        #[arg(long)]
        clean: std::path::PathBuf,
        /// Box parameter P in (0, 1).
        #[arg(long, default_value_t = 0.005)]
        p: f64,
        /// Weight grid as min:step:max.
        #[arg(long)]
        alpha_grid: String,
        /// Order grid as min:step:max.
        #[arg(long)]
        r_grid: String,
        /// Landscape CSV output path.
        #[arg(long)]
        out_landscape: std::path::PathBuf,
        /// Optimal reconstruction output path.
        #[arg(long)]
        out_signal: std::path::PathBuf,
        /// Worker threads for cell evaluation.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Enumerate full weight vectors instead of tying them to a scalar.
        #[arg(long)]
        vector_alpha: bool,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Numerical checks of the asymptotic limit behavior.
    Limits {
        /// Which limit to check.
        #[arg(long, value_enum)]
        check: CheckKind,
        /// Fractional orders: comma list or min:step:max.
        #[arg(long)]
        s_grid: Option<String>,
        /// Sample count of the test signal.
        #[arg(long)]
        n: Option<usize>,
        /// Truncation half-width for the line seminorm.
        #[arg(long, default_value_t = 50.0)]
        l: f64,
        /// Samples per unit length for the line seminorm.
        #[arg(long, default_value_t = 256)]
        m: usize,
        /// Weights for the tgv check (broadcast or two values).
        #[arg(long, num_args = 1..)]
        alpha: Vec<f64>,
        /// Test-signal shape for the tgv check.
        #[arg(long, value_enum, default_value_t = SignalKind::Corner)]
        kind: SignalKind,
        /// Sweep CSV output path.
        #[arg(long)]
        out: std::path::PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Evaluate a Gagliardo or TGV^r seminorm of a signal.
    Seminorm {
        /// Input signal CSV.
        #[arg(long = "in")]
        input: std::path::PathBuf,
        /// Fractional order s in (0, 1).
        #[arg(long)]
        s: Option<f64>,
        /// Integrability exponent; defaults to 1 + s(1-s).
        #[arg(long)]
        p: Option<f64>,
        /// Evaluate the TGV^r seminorm instead of the Gagliardo seminorm.
        #[arg(long)]
        tgv: bool,
        /// Weights for the TGV mode.
        #[arg(long, num_args = 1..)]
        alpha: Vec<f64>,
        /// Order for the TGV mode.
        #[arg(long)]
        r: Option<f64>,
        #[command(flatten)]
        solver: SolverFlags,
    },
}

/// Command outcomes that are not library errors.
pub enum AppError {
    Lib(Error),
    CheckFailed,
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        AppError::Lib(e)
    }
}

impl AppError {
    fn exit_code(&self) -> i32 {
        match self {
            AppError::Lib(Error::InvalidArgument(_)) => 2,
            AppError::Lib(Error::Io { .. }) | AppError::Lib(Error::Format { .. }) => 1,
            AppError::Lib(Error::Numeric { .. }) => 3,
            AppError::Lib(Error::Training(_)) => 4,
            AppError::CheckFailed => 5,
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate {
            kind,
            n,
            sigma,
            seed,
            zero_mean,
            out_clean,
            out_noisy,
        } => cmds::generate(kind, n, sigma, seed, zero_mean, &out_clean, &out_noisy),
        Command::Denoise {
            input,
            clean,
            alpha,
            r,
            out,
            solver,
        } => cmds::denoise(&input, clean.as_deref(), &alpha, r, &out, &solver),
        Command::Train {
            noisy,
            clean,
            p,
            alpha_grid,
            r_grid,
            out_landscape,
            out_signal,
            jobs,
            vector_alpha,
            solver,
        } => cmds::train(
            &noisy,
            &clean,
            p,
            &alpha_grid,
            &r_grid,
            &out_landscape,
            &out_signal,
            jobs,
            vector_alpha,
            &solver,
        ),
        Command::Limits {
            check,
            s_grid,
            n,
            l,
            m,
            alpha,
            kind,
            out,
            solver,
        } => cmds::limits(check, s_grid.as_deref(), n, l, m, &alpha, kind, &out, &solver),
        Command::Seminorm {
            input,
            s,
            p,
            tgv,
            alpha,
            r,
            solver,
        } => cmds::seminorm(&input, s, p, tgv, &alpha, r, &solver),
    };
    if let Err(err) = outcome {
        if let AppError::Lib(e) = &err {
            eprintln!("error: {e}");
        }
        std::process::exit(err.exit_code());
    }
}
