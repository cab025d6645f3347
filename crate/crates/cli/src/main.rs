//! `forestarea` command-line tool.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use forestarea::Error;

/// Exit code for malformed or inconsistent input.
const EXIT_INPUT: u8 = 2;
/// Exit code for numeric failures and degenerate models.
const EXIT_NUMERIC: u8 = 3;
/// Exit code when `smallarea --strict` finds an inapplicable estimator.
const EXIT_GATE: u8 = 4;

const FORMATS: &str = "\
FILE FORMATS
  Plot CSV      plot_id, x, y, stratum_id, observed, predicted, predicted_exact_mask
                (optional), weight_km2, in_model_set, then one column per feature.
                Labels: spruce, pine, deciduous, non-forest, unstocked.
  Strata CSV    stratum_id, area_km2, optional weight_km2, optional
                mapped_<label>_km2 columns (mapped class areas inside the stratum).
  Sub-pop CSV   subpop_id, stratum_id, area_km2, mapped_<label>_km2 ...
  Membership    plot_id, subpop_id
  Observations  x, y, response (kriging input)
  Grids         ESRI ASCII (.asc) or the binary twin (.bin/.fgrid, magic
                FORESTAREA-GRID-1); class maps use codes 0 non-forest,
                1 spruce, 2 pine, 3 deciduous, 4 unstocked, 255 nodata.
  Band manifest one 'name = path' line per band, paths relative to the manifest.
  Forest        JSON, format tag FORESTAREA-RF-1.
  Sim config    flat 'key = value' lines (see `simulate --help`).
All CSVs have a header row, are UTF-8 and use '.' as decimal separator.
Outputs are written atomically.

EXIT CODES
  0 success, 2 input error, 3 numeric or degenerate-model error,
  4 estimator inapplicable (smallarea --strict).";

#[derive(Parser, Debug)]
#[command(name = "forestarea", version, about = "Forest species area mapping and design-based area estimation", after_long_help = FORMATS)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "FORESTAREA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-pixel medoid composite of several image epochs.
    Composite(commands::CompositeArgs),
    /// Area-weighted band means under each plot circle.
    Extract(commands::ExtractArgs),
    /// Train a random forest on plot predictors.
    Train(commands::TrainArgs),
    /// Forward/backward predictor selection by cross-validated accuracy.
    SelectVars(commands::SelectArgs),
    /// Cross-validated accuracy over an ntrees × mtry grid.
    Tune(commands::TuneArgs),
    /// Classify every forest-mask cell of a band stack.
    Predict(commands::PredictArgs),
    /// Sampling-weighted confusion matrix with OA, UA and PA.
    Accuracy(commands::AccuracyArgs),
    /// Direct, model-assisted and poststratified area estimates.
    Estimate(commands::EstimateArgs),
    /// Area estimates for sub-populations with minimum-plot gates.
    Smallarea(commands::SmallareaArgs),
    /// Kriged two-stratum map from point observations and elevation.
    KrigeStrata(commands::KrigeArgs),
    /// Monte Carlo check of the estimators on a synthetic landscape.
    Simulate(commands::SimulateArgs),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Input(_) | Error::Format { .. } | Error::Io { .. } => EXIT_INPUT,
        Error::Numeric(_) | Error::Degenerate(_) | Error::VarianceUndefined(_) | Error::EmptyGroup { .. } => EXIT_NUMERIC,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_INPUT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let result = match cli.command {
        Command::Composite(a) => commands::composite(a),
        Command::Extract(a) => commands::extract(a),
        Command::Train(a) => commands::train(a),
        Command::SelectVars(a) => commands::select_vars(a),
        Command::Tune(a) => commands::tune(a),
        Command::Predict(a) => commands::predict(a),
        Command::Accuracy(a) => commands::accuracy(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Smallarea(a) => commands::smallarea(a),
        Command::KrigeStrata(a) => commands::krige_strata(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match result {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::GateFailed) => ExitCode::from(EXIT_GATE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
