use std::path::PathBuf;
use std::process::ExitCode;

use amrsim::config::{apply_overrides, load_umbrella, scaffold_defaults, umbrella_path, ExperimentConfig, OverrideDirective};
use amrsim::experiment::{evaluate, train, tune, TrainOptions, TuningSpec, RESULTS_DIR_ENV};
use amrsim::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "amrsim", version, about = "Antibiotic prescribing simulator: train, evaluate, tune and serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Umbrella config file.
    #[arg(long)]
    config: PathBuf,
    /// Replace a whole section: `slot=path`, e.g. `environment=configs/environment/three.yaml`.
    #[arg(long = "s", value_name = "SLOT=PATH")]
    subconfigs: Vec<String>,
    /// Override one parameter: `dot.path=value`.
    #[arg(long = "p", value_name = "PATH=VALUE")]
    params: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> amrsim::Result<ExperimentConfig> {
        let base = load_umbrella(&self.config)?.config;
        let mut directives = Vec::new();
        for s in &self.subconfigs {
            directives.push(OverrideDirective::subconfig(s)?);
        }
        for p in &self.params {
            directives.push(OverrideDirective::parameter(p)?);
        }
        apply_overrides(&base, &directives)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Worker threads for eval episodes and tuning trials.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Fixed run folder name instead of `<run_name>_<timestamp>`.
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long, env = RESULTS_DIR_ENV, default_value = "results")]
    results_dir: PathBuf,
}

impl RunArgs {
    fn options(&self) -> TrainOptions {
        TrainOptions {
            results_root: self.results_dir.clone(),
            run_id: self.run_id.clone(),
            parallel: self.parallel.max(1),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured agent and write a run folder.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a saved policy greedily on the config's eval seeds.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        policy: PathBuf,
        /// Defaults to training.num_eval_episodes.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Seeded random search over the parameters in a tuning spec.
    Tune {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        tuning_spec: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write a runnable default config tree under DIR/configs.
    Scaffold {
        dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Serve the session API (and optional static UI).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Base directory for `config_path` in session requests.
        #[arg(long, default_value = ".")]
        config_root: PathBuf,
        #[arg(long, env = RESULTS_DIR_ENV, default_value = "results")]
        results_dir: PathBuf,
    },
}

fn run(cli: Cli) -> amrsim::Result<()> {
    match cli.command {
        Command::Train { config, run } => {
            let cfg = config.resolve()?;
            let record = train(&cfg, &run.options())?;
            println!("run {} written to {}", record.run_id, record.run_dir.display());
            println!(
                "final eval: mean return {:.6} (sd {:.6}, n = {})",
                record.final_eval.mean,
                record.final_eval.sd,
                record.final_eval.returns.len()
            );
        }
        Command::Evaluate {
            config,
            policy,
            episodes,
            parallel,
        } => {
            let cfg = config.resolve()?;
            let n = episodes.unwrap_or(cfg.training.num_eval_episodes);
            let summary = evaluate(&cfg, &policy, n, parallel)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
        }
        Command::Tune {
            config,
            tuning_spec,
            run,
        } => {
            let cfg = config.resolve()?;
            let spec = TuningSpec::load(&tuning_spec)?;
            let record = tune(&cfg, &spec, &run.options())?;
            println!("tuning results written to {}", record.tune_dir.display());
            for t in record.leaderboard.iter().take(5) {
                let values: Vec<String> = t.values.iter().map(|(p, v)| format!("{p}={v}")).collect();
                println!("trial {:>3}  objective {:.6}  {}", t.trial, t.objective, values.join(" "));
            }
        }
        Command::Scaffold { dir, force } => {
            let created = scaffold_defaults(&dir, force)?;
            for path in &created {
                println!("{}", path.display());
            }
            println!("umbrella: {}", umbrella_path(&dir).display());
        }
        Command::Serve {
            bind,
            static_dir,
            config_root,
            results_dir,
        } => {
            let config = amrsim_service::ServiceConfig {
                results_root: results_dir,
                config_root,
                static_dir,
                ..amrsim_service::ServiceConfig::default()
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Contract(format!("runtime: {e}")))?;
            eprintln!("listening on http://{bind}");
            rt.block_on(amrsim_service::serve(&bind, config))
                .map_err(|e| Error::Contract(format!("serve {bind}: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
