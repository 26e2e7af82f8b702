use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use felasso::estimators::{BicPath, StandardizeTarget};
use felasso_cli::commands::{self, DiagnoseArgs, FitArgs, SimulateArgs};
use felasso_cli::CliError;

/// Two-penalty Lasso and adaptive Lasso for fixed-effects panel data:
/// fit estimators on CSV panels, run simulation presets, and print
/// finite-sample theory diagnostics.
#[derive(Parser)]
#[command(name = "felasso", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for replication-parallel runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Directory for output files and the run manifest.
    #[arg(long, global = true, default_value = "felasso-out")]
    out_dir: PathBuf,

    /// Number of points on the BIC tuning grid [default: 100].
    #[arg(long, global = true)]
    bic_grid_size: Option<usize>,

    /// Smallest grid level as a fraction of the data-driven maximum
    /// [default: 1e-3].
    #[arg(long, global = true)]
    bic_grid_ratio: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormTarget {
    /// Column norm sqrt(N*T): squared norm equals the sample size.
    SqrtNt,
    /// Column norm N*T.
    Nt,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the BIC-tuned Lasso and adaptive Lasso on a long-format CSV panel.
    Fit(FitCmd),
    /// Run a simulation experiment and write metrics, logs and a manifest.
    Simulate(SimulateCmd),
    /// Print theoretical penalty levels, error bounds and simulated
    /// diagnostic frequencies for an experiment design.
    Diagnose(DiagnoseCmd),
}

#[derive(Args)]
struct FitCmd {
    /// Path to the CSV file.
    path: PathBuf,

    /// Column holding the individual identifier.
    #[arg(long, default_value = "id")]
    id_col: String,

    /// Column holding the time key.
    #[arg(long, default_value = "time")]
    time_col: String,

    /// Column holding the response.
    #[arg(long, default_value = "y")]
    y_col: String,

    /// Rescale covariate columns to a common norm before fitting.
    #[arg(long, value_enum, default_value = "on")]
    standardize: Switch,

    /// Norm the covariates are standardized to.
    #[arg(long, value_enum, default_value = "sqrt-nt")]
    norm_target: NormTarget,

    /// Comma-separated fractions of the BIC-selected level to refit at,
    /// e.g. 1,0.75,0.5,0.25,0.1.
    #[arg(long, value_delimiter = ',')]
    lambda_fractions: Vec<f64>,

    /// Comma-separated covariate columns fitted without penalty.
    #[arg(long, value_delimiter = ',')]
    no_penalty_cols: Vec<String>,
}

#[derive(Args)]
struct SimulateCmd {
    /// Preset experiment name (A through I).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,

    /// JSON experiment configuration (unknown keys are rejected).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the number of replications.
    #[arg(long)]
    reps: Option<usize>,

    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Comma-separated estimator subset (lasso, adaptive, ols_oracle, ols_all).
    #[arg(long)]
    estimators: Option<String>,
}

#[derive(Args)]
struct DiagnoseCmd {
    /// Preset experiment name (A through I).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,

    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Replications used for the simulated frequencies.
    #[arg(long)]
    reps: Option<usize>,

    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Moment order r for the moment-regime formulas.
    #[arg(long, default_value_t = 2.0)]
    moment_order: f64,

    /// Tuning sequence value a; defaults to the number of individuals.
    #[arg(long)]
    a_seq: Option<f64>,

    /// Population restricted eigenvalue; estimated from the design when absent.
    #[arg(long)]
    kappa_sq: Option<f64>,

    /// Largest error-term L_r norm entering the moment-regime levels.
    #[arg(long, default_value_t = 1.0)]
    max_eps: f64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::input(e.to_string()))?;
    }
    let grid = BicPath {
        n_points: cli.bic_grid_size.unwrap_or(100),
        ratio: cli.bic_grid_ratio.unwrap_or(1e-3),
    };
    match cli.command {
        Command::Fit(cmd) => commands::cmd_fit(&FitArgs {
            path: cmd.path,
            id_col: cmd.id_col,
            time_col: cmd.time_col,
            y_col: cmd.y_col,
            standardize: matches!(cmd.standardize, Switch::On),
            target: match cmd.norm_target {
                NormTarget::SqrtNt => StandardizeTarget::SqrtSampleSize,
                NormTarget::Nt => StandardizeTarget::SampleSize,
            },
            lambda_fractions: cmd.lambda_fractions,
            no_penalty_cols: cmd.no_penalty_cols,
            grid,
            out_dir: cli.out_dir,
        }),
        Command::Simulate(cmd) => commands::cmd_simulate(&SimulateArgs {
            preset: cmd.preset,
            config_path: cmd.config,
            replications: cmd.reps,
            seed: cmd.seed,
            estimators: cmd.estimators,
            grid_size: cli.bic_grid_size,
            grid_ratio: cli.bic_grid_ratio,
            out_dir: cli.out_dir,
        }),
        Command::Diagnose(cmd) => commands::cmd_diagnose(&DiagnoseArgs {
            preset: cmd.preset,
            config_path: cmd.config,
            replications: cmd.reps,
            seed: cmd.seed,
            moment_order: cmd.moment_order,
            a_seq: cmd.a_seq,
            kappa_sq: cmd.kappa_sq,
            max_eps_lr: cmd.max_eps,
            out_dir: cli.out_dir,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
