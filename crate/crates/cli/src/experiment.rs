//! Seeded batch execution of a single experiment configuration.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use localcast::engine::{run_execution, EnvMode, ExecutionTrace, RunOptions, TraceLevel};
use localcast::metrics::{average_progress, delay_report, AverageProgress, DelayReport, MetricsCsv, SampleContext};
use localcast::protocols::ProtocolSpec;

use crate::config::ExperimentConfig;

/// Environment variable holding the worker thread count.
pub const WORKERS_ENV: &str = "LOCALCAST_WORKERS";

/// Thread pool sized from [`WORKERS_ENV`], or rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?;
        builder = builder.num_threads(n.max(1));
    }
    Ok(builder.build()?)
}

pub struct SeedOutcome {
    pub seed: u64,
    pub network: String,
    pub trace: ExecutionTrace,
    pub report: DelayReport,
    pub average: Option<AverageProgress>,
}

/// Runs one seed of `cfg`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, trace_level: TraceLevel) -> Result<SeedOutcome> {
    let g = cfg.network.build(seed).with_context(|| format!("seed {seed}: building network"))?;
    let decay = cfg.decay.resolve(&g)?;
    let protocol = ProtocolSpec::new(cfg.protocol, decay)?;
    let adversary = cfg.adversary.build(&g, seed)?;
    let env = cfg.environment.build(&g)?;
    let opts =
        RunOptions { max_rounds: cfg.max_rounds, seed, collision_detection: cfg.collision_detection, trace_level };
    let trace = run_execution(&g, &protocol, adversary.as_ref(), &env, opts).with_context(|| format!("seed {seed}"))?;
    let report = delay_report(&trace, &g)?;
    let average = match env.mode {
        EnvMode::OneShot => average_progress(&trace, &g, &env.senders()).ok(),
        EnvMode::Online => None,
    };
    let network = if cfg.network.generator.is_seeded() {
        format!("{} seed={seed}", cfg.network.label())
    } else {
        cfg.network.label()
    };
    Ok(SeedOutcome { seed, network, trace, report, average })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: usize,
    pub truncated_runs: usize,
    pub unmatched_bcasts: usize,
    pub progress_violations: usize,
    pub receive_failures: usize,
    pub ack_samples: usize,
    pub progress_samples: usize,
    pub receive_samples: usize,
    /// Truncated runs plus unmatched messages.
    pub warnings: usize,
}

/// Runs every seed in parallel and writes the configured outputs. Results
/// are written in seed-list order, so output files are reproducible.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let level = if cfg.outputs.traces_dir.is_some() { TraceLevel::Full } else { TraceLevel::Events };
    let pool = worker_pool()?;
    let outcomes: Vec<SeedOutcome> =
        pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s, level)).collect::<Result<_>>())?;

    if let Some(dir) = &cfg.outputs.traces_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for o in &outcomes {
            let path = dir.join(format!("trace-seed-{}.jsonl", o.seed));
            let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            o.trace.write_jsonl(BufWriter::new(file))?;
        }
    }
    if let Some(path) = &cfg.outputs.metrics_csv {
        write_metrics_csv(path, cfg, &outcomes)?;
    }
    Ok(summarize(&outcomes))
}

pub fn summarize(outcomes: &[SeedOutcome]) -> RunSummary {
    let mut s = RunSummary { runs: outcomes.len(), ..RunSummary::default() };
    for o in outcomes {
        s.truncated_runs += o.trace.truncated as usize;
        s.unmatched_bcasts += o.report.unmatched_bcasts;
        s.progress_violations += o.report.progress_violations();
        s.receive_failures += o.report.receive_failures();
        s.ack_samples += o.report.ack.len();
        s.progress_samples += o.report.progress.len();
        s.receive_samples += o.report.receive.len();
    }
    s.warnings = s.truncated_runs + s.unmatched_bcasts;
    s
}

fn write_metrics_csv(path: &Path, cfg: &ExperimentConfig, outcomes: &[SeedOutcome]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut csv = MetricsCsv::new(BufWriter::new(file));
    for o in outcomes {
        let ctx = SampleContext {
            network: o.network.clone(),
            protocol: cfg.protocol.to_string(),
            adversary: cfg.adversary.to_string(),
            seed: o.seed,
        };
        csv.write_report(&ctx, &o.report)?;
        if let Some(avg) = &o.average {
            csv.write_average(&ctx, avg)?;
        }
    }
    csv.finish()?;
    Ok(())
}
