use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use prefbatch::harness::{cmd_report, cmd_run};
use prefbatch::session::{http, SessionStore};

#[derive(Parser)]
#[command(name = "prefbatch", version, about = "Preferential batch Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute every run in an experiment manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate a summary CSV into mean curves and ranks.
    Report {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve interactive sessions over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        /// Directory for session event logs; in-memory when absent.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res: Result<(), String> = match cli.cmd {
        Cmd::Run { config, workers, out } => cmd_run(&config, workers, out.as_deref())
            .map(|o| {
                println!("{} runs, summary at {}", o.trace_paths.len(), o.summary_path.display());
            })
            .map_err(|e| e.to_string()),
        Cmd::Report { summary, out } => cmd_report(&summary, &out)
            .map(|r| {
                println!("{} curve points, {} rank points written to {}", r.curves.len(), r.ranks.len(), out.display());
            })
            .map_err(|e| e.to_string()),
        Cmd::Serve { addr, data_dir } => serve(addr, data_dir),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve(addr: std::net::SocketAddr, data_dir: Option<PathBuf>) -> Result<(), String> {
    let store = match data_dir {
        Some(d) => SessionStore::open(d).map_err(|e| e.to_string())?,
        None => SessionStore::in_memory(),
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    eprintln!("listening on http://{addr}");
    rt.block_on(http::serve(Arc::new(store), addr)).map_err(|e| e.to_string())
}
