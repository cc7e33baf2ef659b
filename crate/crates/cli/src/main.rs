use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dephasing_id_cli::campaign::{find_traces, load_traces, verdict_report};
use dephasing_id_cli::{run_estimate, run_reproduce, run_simulate, CampaignConfig, CliError, IDS};

/// Exit status when a fit is requested for a design that cannot identify anything.
const EXIT_NOT_IDENTIFIABLE: u8 = 3;

#[derive(Parser)]
#[command(name = "dqid", version, about = "Identify drive frequency and dephasing rate of a qubit from measurement records")]
struct Cli {
    /// Output directory
    #[arg(long, global = true, env = "DQID_OUT", default_value = "dqid-out")]
    out: PathBuf,
    /// Master seed; overrides the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate noiseless and noisy traces and write a manifest
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the configured estimators on trace files
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// Trace CSVs; defaults to trace_*.csv in the output directory
        traces: Vec<PathBuf>,
    },
    /// Run a canned campaign (or `all`)
    Reproduce {
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Report the identifiability verdict of a configured design
    Classify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<CampaignConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let mut cfg = CampaignConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Simulate { config } => {
            let cfg = load_config(&config, cli.seed)?;
            let out = run_simulate(&cfg, &cli.out)?;
            println!("wrote {} trace(s) and {}", out.traces.len(), out.manifest.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate { config, traces } => {
            let cfg = load_config(&config, cli.seed)?;
            let paths = if traces.is_empty() { find_traces(&cli.out)? } else { traces };
            if paths.is_empty() {
                return Err(CliError::NoTraces(cli.out));
            }
            let traces = load_traces(&paths)?;
            let res = run_estimate(&cfg, &traces, &cli.out)?;
            print!("{}", res.report.to_text());
            Ok(if res.any_failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Reproduce { ids } => {
            let ids: Vec<String> =
                if ids.iter().any(|i| i == "all") { IDS.iter().map(|s| s.to_string()).collect() } else { ids };
            let seed = cli.seed.unwrap_or(0);
            let mut ok = true;
            for id in &ids {
                let summary = run_reproduce(id, &cli.out, seed)?;
                println!("[{id}]");
                print!("{}", summary.to_text());
                ok &= summary.passed();
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Classify { config } => {
            let cfg = load_config(&config, cli.seed)?;
            print!("{}", verdict_report(&cfg).1.to_text());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(code) => code,
        Err(e @ CliError::NotIdentifiable { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_NOT_IDENTIFIABLE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
