use std::fs::File;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rwsre::config::{Scenario, ScenarioConfig};
use rwsre::limits::{self, Law};
use rwsre::output::emit;
use rwsre::runner::Runner;
use rwsre::scenarios::run_scenario;

#[derive(Parser)]
#[command(name = "rwsre", version, about = "Random walks in sparse random environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV and JSON files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        scenario: Option<Scenario>,
        #[arg(long)]
        replicas: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and report the regime of its model.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Draw from a limit law.
    Limits {
        #[arg(long, value_enum)]
        law: Law,
        /// Comma separated `key=value` pairs.
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            scenario,
            replicas,
            seed,
            threads,
            out,
        } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(s) = scenario {
                cfg.scenario = s;
            }
            if let Some(r) = replicas {
                cfg.replicas = r;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            let runner = Runner::new(cfg.threads);
            let res = run_scenario(&cfg, &runner)?;
            let files = emit(&res, &cfg.out_dir)
                .with_context(|| format!("writing under {}", cfg.out_dir.display()))?;
            for c in &res.verdict.checks {
                println!("{} {} = {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value);
            }
            println!(
                "{}: {} ({} files)",
                res.verdict.scenario,
                if res.verdict.pass { "pass" } else { "fail" },
                files.len()
            );
            Ok(if res.verdict.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Validate { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            match cfg.validate()? {
                Some(info) => println!(
                    "{}: ok, regime {}",
                    cfg.scenario.tag(),
                    serde_json::to_string(&info)?
                ),
                None => println!("{}: ok", cfg.scenario.tag()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Limits {
            law,
            params,
            count,
            seed,
            threads,
            out,
        } => {
            let params = limits::parse_params(&params)?;
            let values = limits::draw(law, &params, count, seed, &Runner::new(threads))?;
            match out {
                Some(path) => limits::write_csv(law, &values, File::create(&path)?)?,
                None => limits::write_csv(law, &values, io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
