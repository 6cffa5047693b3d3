use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ssp_cli::{describe_method, list_methods, reproduce_table, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ssp", version, about = "Monotone time-integrator benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a key=value config file.
    Run {
        /// Path to the config file.
        config: PathBuf,
    },
    /// Reproduce a canonical TV table and check it against the published pins.
    Table {
        /// One of: tv_advection, tv_adr, tv_burgers, tv_buckley_leverett.
        name: String,
        /// Directory for the CSV outputs.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Reference-trajectory cache directory.
        #[arg(long, default_value = ".ref_cache")]
        cache_dir: PathBuf,
    },
    /// List the available method identifiers.
    Methods,
    /// Print tableau, monotonicity radius and stiff-limit behaviour of a method.
    Describe {
        /// Method identifier, e.g. trbdf2.
        id: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let cfg = match ExperimentConfig::from_text(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run_experiment(&cfg) {
                Ok(table) => {
                    for metric in &table.metrics {
                        print!("{}", table.metric_csv(metric));
                    }
                    if cfg.output.is_none() {
                        eprintln!("note: no [experiment] output set; CSVs not written");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Table {
            name,
            out_dir,
            cache_dir,
        } => {
            let stem = out_dir.join(&name);
            match reproduce_table(&name, cache_dir, Some(&stem)) {
                Ok(report) => {
                    print!("{}", report.artifact.metric_csv("tv_linf_time"));
                    print!("{}", report.annotations());
                    let checks_path = out_dir.join(format!("{name}_checks.txt"));
                    if let Err(e) = std::fs::write(&checks_path, report.annotations()) {
                        eprintln!("error writing {}: {e}", checks_path.display());
                        return ExitCode::from(2);
                    }
                    if report.all_pass() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(3)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Methods => {
            print!("{}", list_methods());
            ExitCode::SUCCESS
        }
        Command::Describe { id } => match describe_method(&id) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
