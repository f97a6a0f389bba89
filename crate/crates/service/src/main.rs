use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use aui_core::env::{generate_clips, write_corpus, ClipPolicy};
use aui_core::persona::{preset, PRESET_NAMES};
use aui_core::ui::Domain;
use aui_service::config::ServiceConfig;
use aui_service::service::Service;
use aui_service::sim::{simulate_participant, SimOptions};
use aui_service::store::write_atomic;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aui", about = "Adaptive UI preference collection and training service")]
struct Cli {
    /// Data directory holding the corpus, users, models and jobs.
    #[arg(long, global = true, default_value = "aui-data")]
    data: PathBuf,
    /// Config file; defaults to <data>/aui.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the clip corpus.
    GenClips {
        #[arg(long, default_value_t = 32)]
        per_domain: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "corpus.jsonl")]
        out: PathBuf,
        /// uniform_random_action or scripted_sweep
        #[arg(long, default_value = "uniform_random_action")]
        policy: String,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Drive one simulated participant through the whole loop.
    SimulateParticipant {
        /// One of the preset persona names.
        #[arg(long)]
        persona: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        user: Option<String>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train a user's reward model from their rank session.
    TrainReward {
        #[arg(long)]
        user: String,
        #[arg(long)]
        domain: Domain,
    },
    /// Train a user's agent on the combined reward.
    TrainAgent {
        #[arg(long)]
        user: String,
        #[arg(long)]
        domain: Domain,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Greedy evaluation of a stored agent.
    Eval {
        #[arg(long)]
        user: String,
        #[arg(long)]
        domain: Domain,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write per-episode rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the study results table.
    Export {
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn open(cli: &Cli) -> anyhow::Result<Service> {
    let cfg = ServiceConfig::load(&cli.data, cli.config.as_deref())?;
    Service::open(&cli.data, cfg)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::GenClips { per_domain, seed, out, policy } => {
            let policy: ClipPolicy = serde_json::from_value(serde_json::Value::String(policy.clone()))
                .map_err(|_| anyhow!("unknown clip policy '{policy}'"))?;
            if *per_domain < 2 {
                anyhow::bail!("--per-domain must be at least 2");
            }
            let clips = generate_clips(*per_domain, policy, *seed);
            let mut buf = Vec::new();
            write_corpus(&mut buf, &clips)?;
            write_atomic(out, &buf).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} clips to {}", clips.len(), out.display());
        }
        Cmd::Serve { port, host } => {
            let service = open(&cli)?;
            let port = port.unwrap_or(service.config().port);
            let addr: SocketAddr = format!("{host}:{port}").parse()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(aui_service::http::serve(service.clone(), addr))?;
            service.join_jobs();
        }
        Cmd::SimulateParticipant { persona, seed, user, beta, steps } => {
            let p = preset(persona)
                .ok_or_else(|| anyhow!("unknown persona '{persona}'; choose one of {}", PRESET_NAMES.join(", ")))?;
            let service = open(&cli)?;
            let opts = SimOptions {
                beta: beta.unwrap_or(service.config().agent.beta),
                steps: steps.unwrap_or(service.config().agent.steps),
                seed: *seed,
                ..SimOptions::default()
            };
            let user = user.clone().unwrap_or_else(|| format!("sim-{persona}-{seed}"));
            let report = simulate_participant(&service, &user, p, &opts)?;
            print_json(&report)?;
            eprintln!(
                "adaptive engagement {:.3} vs non-adaptive {:.3}",
                report.adaptive_engagement, report.na_engagement
            );
        }
        Cmd::TrainReward { user, domain } => {
            let service = open(&cli)?;
            let summary = service.train_reward(user, *domain, &mut |_| {})?;
            print_json(&summary)?;
        }
        Cmd::TrainAgent { user, domain, beta, steps } => {
            let service = open(&cli)?;
            let beta = beta.unwrap_or(service.config().agent.beta);
            let steps = steps.unwrap_or(service.config().agent.steps);
            let meta = service.train_agent(user, *domain, beta, steps, &mut |_| {})?;
            print_json(&meta)?;
        }
        Cmd::Eval { user, domain, episodes, seed, csv } => {
            let service = open(&cli)?;
            let report = service.evaluate_agent(user, *domain, *episodes, *seed)?;
            if let Some(path) = csv {
                write_atomic(path, report.metrics.to_csv().as_bytes())?;
            }
            let m = &report.metrics;
            print_json(&serde_json::json!({
                "user_id": report.user_id,
                "domain": report.domain,
                "beta": report.beta,
                "target": report.target,
                "mean_return": m.mean_return,
                "mean_steps_to_optimal": m.mean_steps_to_optimal,
                "final_config_match_rate": m.final_config_match_rate,
            }))?;
        }
        Cmd::Export { out } => {
            let service = open(&cli)?;
            let csv = service.export_csv()?;
            write_atomic(out, csv.as_bytes()).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} rows to {}", csv.lines().count().saturating_sub(1), out.display());
        }
    }
    Ok(())
}
