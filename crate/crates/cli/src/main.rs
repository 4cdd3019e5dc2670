use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use localcast_cli::config::{parse_seed_list, read_graph, ExperimentConfig, Generator, NetworkSpec, Transform};
use localcast_cli::experiment::run_experiment;
use localcast_cli::report::render;
use localcast_cli::search::schedule_search;
use localcast_cli::sweep::{run_sweep, write_cells_csv, SweepConfig, SweepReport};

#[derive(Parser)]
#[command(
    name = "localcast",
    version,
    about = "Local broadcast experiments on classical and dual graph radio networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformArg {
    None,
    Dual,
    DualSingleReliable,
    SingleReliable,
}

impl From<TransformArg> for Transform {
    fn from(t: TransformArg) -> Self {
        match t {
            TransformArg::None => Transform::None,
            TransformArg::Dual => Transform::Dual,
            TransformArg::DualSingleReliable => Transform::DualSingleReliable,
            TransformArg::SingleReliable => Transform::SingleReliable,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a network file, e.g. `generate spread n=8 --out spread8.json`.
    Generate {
        generator: String,
        /// Generator parameters as key=value.
        params: Vec<String>,
        #[arg(long, value_enum, default_value = "none")]
        transform: TransformArg,
        /// Seed for random generators without an explicit `seed=`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every seed of an experiment config.
    Run {
        config: PathBuf,
        /// Overrides the config seeds: `1,2,10..20`.
        #[arg(long)]
        seed_list: Option<String>,
    },
    /// Run a cartesian sweep and fit the per-cell medians.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        seed_list: Option<String>,
        /// Full report as JSON.
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// One CSV row per cell.
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Find a shortest covering schedule of a bipartite classical network.
    ScheduleSearch {
        graph: PathBuf,
        #[arg(long, default_value_t = 12)]
        max_len: usize,
    },
    /// Print a table and fit summary for a sweep report.
    Report { report: PathBuf },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { generator, params, transform, seed, out } => {
            let spec =
                NetworkSpec { generator: Generator::from_args(&generator, &params)?, transform: transform.into() };
            let g = spec.build(seed)?;
            let json = g.to_json();
            match out {
                Some(path) => fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{json}"),
            }
            let stats = g.stats();
            eprintln!(
                "n={} |E|={} |E'|={} max receiver degree G={} G'={} components={}",
                g.n(),
                g.reliable_edge_count(),
                g.potential_edge_count(),
                stats.max_receiver_degree_g,
                stats.max_receiver_degree_g_prime,
                stats.component_count
            );
        }
        Command::Run { config, seed_list } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(s) = seed_list {
                cfg.seeds = parse_seed_list(&s)?;
            }
            let summary = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if summary.warnings > 0 {
                eprintln!(
                    "warning: {} truncated runs, {} unacknowledged messages",
                    summary.truncated_runs, summary.unmatched_bcasts
                );
            }
        }
        Command::Sweep { config, seed_list, out_json, out_csv } => {
            let mut cfg = SweepConfig::from_path(&config)?;
            if let Some(s) = seed_list {
                cfg.seeds = parse_seed_list(&s)?;
            }
            let report = run_sweep(&cfg)?;
            if let Some(path) = out_json {
                let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                serde_json::to_writer_pretty(BufWriter::new(file), &report)?;
            }
            if let Some(path) = out_csv {
                let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_cells_csv(&report, BufWriter::new(file))?;
            }
            print!("{}", render(&report));
        }
        Command::ScheduleSearch { graph, max_len } => {
            let g = read_graph(&graph)?;
            let report = schedule_search(&g, max_len)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            eprintln!("{}", report.summary_line());
        }
        Command::Report { report } => {
            let text = fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            let parsed: SweepReport =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", report.display()))?;
            print!("{}", render(&parsed));
        }
    }
    Ok(())
}
