use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bornchain::cli::{self, CliError, Destination, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

/// Serial-exchange measurement model: simulate, predict and solve exactly.
#[derive(Parser)]
#[command(name = "bornchain", version)]
struct Opts {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo ensemble; writes summary.json and trials.csv.
    Run(Common),
    /// Closed-form predictions; writes predict.json.
    Predict(Common),
    /// Exact chain solution over all states; writes oracle.csv and oracle.json.
    Oracle(Common),
    /// Check a model against the admissibility constraints; writes model_report.json.
    ValidateModel(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; without it the main result goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for ensembles and chain construction. Never changes results.
    #[arg(long)]
    threads: Option<usize>,
    /// Apply acceptance thresholds; exit 4 if any fails.
    #[arg(long)]
    check: bool,
}

const EXIT_CHECK_FAILED: u8 = 4;

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn execute(command: Command) -> Result<bool, CliError> {
    let (common, kind) = match command {
        Command::Run(c) => (c, 0),
        Command::Predict(c) => (c, 1),
        Command::Oracle(c) => (c, 2),
        Command::ValidateModel(c) => (c, 3),
    };
    let config: ExperimentConfig = cli::load_config(&common.config, std::env::var(cli::SEED_ENV).ok())?;
    let base = base_dir(&common.config);
    let dest = Destination::resolve(common.out.clone(), &config);

    let work = || -> Result<bool, CliError> {
        match kind {
            0 => {
                let model = config.load_model(&base)?;
                let out = cli::cmd_run(&config, &model, common.check)?;
                dest.emit(&[("summary.json", &out.summary_json), ("trials.csv", &out.trials_csv)])?;
                Ok(out.passed)
            }
            1 => {
                let model = config.load_model(&base)?;
                dest.emit(&[("predict.json", &cli::cmd_predict(&config, &model)?)])?;
                Ok(true)
            }
            2 => {
                let model = config.load_model(&base)?;
                let out = cli::cmd_oracle(&config, &model, common.check)?;
                dest.emit(&[("oracle.csv", &out.csv), ("oracle.json", &out.json)])?;
                Ok(out.passed)
            }
            _ => {
                let model = config.load_model_unchecked(&base)?;
                let (json, valid) = cli::cmd_validate_model(&config, &model)?;
                dest.emit(&[("model_report.json", &json)])?;
                if !valid {
                    return Err(CliError::Model(bornchain::ModelError::Document(
                        "model violates the admissibility constraints".into(),
                    )));
                }
                Ok(true)
            }
        }
    };

    #[cfg(feature = "parallel")]
    if let Some(n) = common.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool");
        return pool.install(work);
    }
    work()
}

fn main() -> ExitCode {
    let opts = Opts::parse();
    match execute(opts.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("bornchain: acceptance check failed");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
        Err(e) => {
            eprintln!("bornchain: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
