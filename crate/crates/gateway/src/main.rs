use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use llmchain_core::ledger::encode_log;
use llmchain_core::scenario::{leaderboard, start_session, RunReport, Scenario};
use llmchain_gateway::commands::{self, AnalyticsSettings, ScoreSource};
use llmchain_gateway::http;

#[derive(Parser)]
#[command(name = "llmchain", version, about = "Ledger-backed reputation simulation for shared language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving the output files.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a scenario and write trajectories, leaderboard and logs.
    Run(Common),
    /// Reputation trajectories under repeated perfect and worst answers.
    Fig2(Common),
    /// Pairwise winners, win rates, accuracy and Kendall's tau.
    Analytics {
        #[command(flatten)]
        common: Common,
        /// Score file (CSV or JSON lines); repeatable.
        #[arg(long)]
        scores: Vec<PathBuf>,
        /// Human-winner labels.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Interaction traces, for a lexical metric and question contexts.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Fixed-rate throughput and latency benchmark of the ledger calls.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated send rates in TPS.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// Seconds per round.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Serve the HTTP API over a scenario's backends.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn print_report(report: &RunReport) {
    println!("rank  model             R        R^a      R^h");
    for r in &report.leaderboard {
        println!(
            "{:>4}  {:<16}  {:.4}   {:.4}   {:.4}",
            r.rank, r.model, r.r_weighted, r.r_auto, r.r_human
        );
    }
}

fn serve(config: &Path, out_dir: &Path, seed: Option<u64>, port: u16) -> Result<()> {
    let mut scenario = Scenario::load(config)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let traces = scenario.load_traces()?;
    let (session, _) = start_session(&scenario, traces)?;
    let shared = Arc::new(Mutex::new(session));
    let app = http::router(shared.clone());
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    tokio::runtime::Runtime::new()?.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        log::info!("listening on http://{addr}");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    let session = shared.lock().unwrap_or_else(|p| p.into_inner());
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("ledger.log"), encode_log(session.ledger().log()))?;
    let rows = leaderboard(session.ledger(), &session.model_names());
    std::fs::write(out_dir.join("leaderboard.json"), serde_json::to_string_pretty(&rows)?)?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(c) => {
            let config = c.config.context("run needs --config")?;
            let outcome = commands::run(&config, &c.out_dir, c.seed)?;
            print_report(&outcome.report);
            println!(
                "{} events, {} records, {} skipped; audit {} (max error {:.2e})",
                outcome.report.events().len(),
                outcome.report.record_cids.len(),
                outcome.report.skipped,
                if outcome.audit.is_clean() { "clean" } else { "FAILED" },
                outcome.audit.max_abs_error
            );
            if !outcome.audit.is_clean() {
                anyhow::bail!("audit found {} mismatches", outcome.audit.mismatches.len());
            }
        }
        Command::Fig2(c) => {
            let points = commands::fig2(c.config.as_deref(), &c.out_dir)?;
            println!("{} points written to {}", points.len(), c.out_dir.join("fig2.csv").display());
        }
        Command::Analytics {
            common,
            scores,
            truth,
            dataset,
        } => {
            let mut settings = match &common.config {
                Some(p) => AnalyticsSettings::load(p)?,
                None => AnalyticsSettings::default(),
            };
            settings.scores.extend(scores.into_iter().map(|path| ScoreSource {
                metric: None,
                path,
                reference: None,
            }));
            if truth.is_some() {
                settings.truth = truth;
            }
            if dataset.is_some() {
                settings.dataset = dataset;
            }
            let out = commands::analytics(&settings, &common.out_dir)?;
            print!("{}", out.summary_csv());
        }
        Command::Bench {
            common,
            rates,
            duration,
        } => {
            let rows = commands::bench(common.config.as_deref(), &common.out_dir, |cfg| {
                if let Some(r) = rates {
                    cfg.rates = r;
                }
                if let Some(d) = duration {
                    cfg.duration_s = d;
                }
            })?;
            print!("{}", llmchain_core::bench::to_csv(&rows));
        }
        Command::Serve { common, port } => {
            let config = common.config.context("serve needs --config")?;
            serve(&config, &common.out_dir, common.seed, port)?;
        }
    }
    Ok(())
}
