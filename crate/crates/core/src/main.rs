use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hawkes_cascade::pipeline::{
    cmd_evaluate, cmd_fit, cmd_ingest, cmd_report, cmd_simulate, print, Overrides, PipelineConfig, PipelineError,
    PolicySelection, BASE_URL_ENV,
};

#[derive(Parser)]
#[command(name = "hawkes-cascade", version, about = "Hawkes-scheduled text cascades with drift diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON pipeline config; relative paths in it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// hawkes, last_k, random_k or all.
    #[arg(long, global = true)]
    policy: Option<PolicySelection>,

    /// Memory size.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Master seed; per-run seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    mock_generator: bool,

    #[arg(long, global = true)]
    mock_embedder: bool,

    /// Fit on the training prefix and simulate over the test window.
    #[arg(long, global = true)]
    post_split: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse, filter, deduplicate and split article records into event streams.
    Ingest,
    /// Fit the Hawkes model over the decay grid.
    Fit,
    /// Generate cascade runs from the fitted model.
    Simulate,
    /// Compute per-event diagnostics and run summaries.
    Evaluate,
    /// Tabulate evaluation summaries across policies.
    Report,
}

fn load_config(cli: &Cli) -> Result<(PipelineConfig, PolicySelection), PipelineError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let mut config = PipelineConfig::default();
            if let Ok(url) = std::env::var(BASE_URL_ENV) {
                config.apply_base_url(&url);
            }
            config
        }
    };
    let selection = config.apply(&Overrides {
        policy: cli.policy,
        k: cli.k,
        seed: cli.seed,
        mock_generator: cli.mock_generator,
        mock_embedder: cli.mock_embedder,
        post_split: cli.post_split,
    });
    config.validate()?;
    Ok((config, selection))
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let (config, selection) = load_config(cli)?;
    match cli.command {
        Command::Ingest => {
            let report = cmd_ingest(&config)?;
            print(&format!(
                "ingested {} events ({} records, {} after dedup); train {} / test {}",
                report.event_count, report.raw_count, report.deduped_count, report.train_count, report.test_count
            ));
        }
        Command::Fit => {
            let fit = cmd_fit(&config)?;
            print(&format!(
                "beta={} loglik={:.3} aic={:.3} bic={:.3} rho={:.4}",
                fit.params.beta, fit.log_likelihood, fit.aic, fit.bic, fit.spectral_radius
            ));
        }
        Command::Simulate => {
            for m in cmd_simulate(&config, selection)? {
                print(&format!("{}: {} runs, seeds {:?}", m.policy.as_str(), m.run_seeds.len(), m.run_seeds));
            }
        }
        Command::Evaluate => {
            for s in cmd_evaluate(&config, selection)? {
                let mean = s.aggregate.mean_s.map_or("n/a".to_string(), |m| format!("{:.3}", m.mean));
                print(&format!("{}: mean S_t {mean}, matched {}", s.policy, s.aggregate.matched_count));
            }
        }
        Command::Report => {
            let report = cmd_report(&config)?;
            print(report.to_text().trim_end());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
