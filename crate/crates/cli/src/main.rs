mod commands;
mod config;
mod error;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;
use manifest::{Input, Manifest};

#[derive(Parser)]
#[command(name = "lasso-hmm", version, about = "LASSO-penalized hidden Markov models for binary panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replicated simulation study.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the regularization path and all schemes to a penalty CSV.
    Fit {
        /// Penalty records (CSV).
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score held-out records with a fitted model.
    Score {
        /// Output directory of a previous `fit`.
        #[arg(long)]
        fit_dir: PathBuf,
        /// Test records (CSV).
        #[arg(long)]
        test: PathBuf,
        /// Scheme whose model is used (default relaxed-BIC).
        #[arg(long)]
        scheme: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Re-execute a run from its manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available cores). Never changes results.
    #[arg(long)]
    workers: Option<usize>,
    /// Use the full-size simulation design and grid as defaults.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_min: Option<f64>,
    #[arg(long)]
    grid_len: Option<usize>,
    /// Number of hidden states of the fitted model.
    #[arg(long)]
    states: Option<usize>,
    #[arg(long, value_parser = ["smooth", "literal"])]
    penalty_mode: Option<String>,
    /// Print the materialized configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

impl Common {
    fn materialize(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::defaults(self.paper_scale);
        if let Some(path) = &self.config {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            cfg.merge_toml(&text)?;
        }
        if let Some(v) = self.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = self.grid_max {
            cfg.grid.max = v;
        }
        if let Some(v) = self.grid_min {
            cfg.grid.min = v;
        }
        if let Some(v) = self.grid_len {
            cfg.grid.len = v;
        }
        if self.grid_max.is_some() || self.grid_min.is_some() || self.grid_len.is_some() {
            cfg.grid.lambda.clear();
        }
        if let Some(v) = self.states {
            cfg.model.states = v;
        }
        if let Some(v) = &self.penalty_mode {
            cfg.penalty.mode = v.clone();
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Validation("--out is required".into()))
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn with_workers<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> Result<T, CliError> + Send,
) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::Validation("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
    pool.install(f)
}

/// Run a command described by `m` into `out` and write its manifest.
fn execute(m: &Manifest, out: &Path, workers: Option<usize>) -> Result<(), CliError> {
    prepare_out(out)?;
    for input in &m.inputs {
        input.verify()?;
    }
    let cfg = &m.config;
    let start = Instant::now();
    with_workers(workers, || match m.manifest.command.as_str() {
        "simulate" => commands::simulate(cfg, out),
        "fit" => commands::fit(cfg, &m.input("data")?.path, out),
        "score" => commands::score(cfg, &m.input("model")?.path, &m.input("test")?.path, out),
        other => Err(CliError::Validation(format!("unknown command {other:?} in manifest"))),
    })?;
    let mut done = m.clone();
    done.manifest.wall_time_seconds = start.elapsed().as_secs_f64();
    done.manifest.tool_version = env!("CARGO_PKG_VERSION").into();
    done.write(out)
}

fn new_manifest(command: &str, cfg: RunConfig, inputs: Vec<Input>) -> Manifest {
    Manifest {
        manifest: manifest::Header {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.run.seed,
            wall_time_seconds: 0.0,
        },
        inputs,
        config: cfg,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = common.materialize()?;
            cfg.scenario()?;
            if common.dry_run {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            execute(&new_manifest("simulate", cfg, vec![]), common.out_dir()?, common.workers)
        }
        Command::Fit { data, common } => {
            let cfg = common.materialize()?;
            cfg.validate_for_fit()?;
            if common.dry_run {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let inputs = vec![Input::new("data", &data)?];
            execute(&new_manifest("fit", cfg, inputs), common.out_dir()?, common.workers)
        }
        Command::Score {
            fit_dir,
            test,
            scheme,
            common,
        } => {
            let mut cfg = common.materialize()?;
            if let Some(s) = scheme {
                cfg.data.score_scheme = s;
            }
            cfg.validate_for_fit()?;
            if common.dry_run {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let inputs = vec![
                Input::new("model", &fit_dir.join(commands::MODEL_FILE))?,
                Input::new("test", &test)?,
            ];
            execute(&new_manifest("score", cfg, inputs), common.out_dir()?, common.workers)
        }
        Command::Rerun { manifest, out, workers } => {
            let m = Manifest::read(&manifest)?;
            execute(&m, &out, workers)
        }
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
