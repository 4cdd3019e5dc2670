//! Cartesian parameter sweeps with per-cell aggregation and scaling fits.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use localcast::adversaries::AdversaryKind;
use localcast::dualgraph::{dual_transform, DualGraph, Role};
use localcast::engine::{run_execution, EnvironmentScript, Round, RunOptions};
use localcast::metrics::{average_progress, delay_report, median, quantile};
use localcast::protocols::{DecayConfig, ProtocolKind, ProtocolSpec};

use crate::experiment::worker_pool;
use crate::fit::{fit_log_space, fit_through_origin, loglog_fit, Fit, LineFit};

/// Network family swept over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Classical bipartite: `n/2` senders, `n/2` receivers, edge
    /// probability `Δ/n`, receiver degrees capped at `Δ`.
    ClassicalRandom,
    /// Dual transform of a random bipartite network with `Δ` senders.
    DualRandom,
    /// Dual transform of the complete bipartite network `K_{Δ,receivers}`.
    DualComplete,
    /// Spread network of size `n`.
    Spread,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Ack,
    Progress,
    Receive,
    AverageProgress,
}

/// Predicted scaling form of the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predictor {
    /// `Δ · ln n`
    DeltaLogN,
    /// `log₂ Δ · ln n`
    LogDeltaLogN,
    /// `k · ln k · ln n`, with `k` capped at `Δ`
    KLogKLogN,
    /// `Δ`
    DeltaPrime,
    None,
}

/// How the fitted constant is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    #[default]
    LeastSquares,
    LogSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub family: Family,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub delta: Vec<u64>,
    /// Active sender counts; all senders when empty.
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default = "default_receivers")]
    pub receivers: usize,
    #[serde(default = "default_edge_prob")]
    pub edge_prob: f64,
    /// Keep one reliable edge per component after building the network.
    #[serde(default)]
    pub single_reliable: bool,
    pub protocols: Vec<ProtocolKind>,
    #[serde(default = "default_adversaries")]
    pub adversaries: Vec<AdversaryKind>,
    pub metric: Metric,
    #[serde(default = "default_predictor")]
    pub predictor: Predictor,
    #[serde(default)]
    pub fit: FitMethod,
    #[serde(default = "default_round_constant")]
    pub round_constant: u64,
    pub max_rounds: Round,
    pub seeds: Vec<u64>,
    /// Upper bound on `cells × seeds`.
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub collision_detection: bool,
}

fn default_receivers() -> usize {
    8
}
fn default_edge_prob() -> f64 {
    0.5
}
fn default_adversaries() -> Vec<AdversaryKind> {
    vec![AdversaryKind::Full]
}
fn default_predictor() -> Predictor {
    Predictor::None
}
fn default_round_constant() -> u64 {
    DecayConfig::DEFAULT_ROUND_CONSTANT
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub n: Option<usize>,
    pub delta: Option<u64>,
    pub k: Option<usize>,
    pub protocol: ProtocolKind,
    #[serde(with = "adversary_str")]
    pub adversary: AdversaryKind,
}

mod adversary_str {
    use super::AdversaryKind;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &AdversaryKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&k.to_string())
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<AdversaryKind, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-seed measurements of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunValues {
    pub seed: u64,
    pub network_n: usize,
    pub values: Vec<f64>,
    pub violations: usize,
    pub truncated: bool,
    /// Every sender's `G`-neighbors received its message before its ack.
    pub all_received_before_ack: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub id: usize,
    pub params: CellParams,
    pub runs: usize,
    pub samples: usize,
    pub median: Option<f64>,
    pub p95: Option<f64>,
    pub max: Option<f64>,
    pub violations: usize,
    pub truncated_runs: usize,
    pub receive_success_runs: usize,
    pub mean_ln_n: f64,
    /// For progress sweeps, violations count as infinite latencies in
    /// `median`; `None` if the median itself is a violation.
    pub violations_in_median: bool,
    /// Value of the predicted form for this cell.
    pub predictor: Option<f64>,
    /// Median of the per-run medians.
    pub median_of_runs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFit {
    pub protocol: ProtocolKind,
    #[serde(with = "adversary_str")]
    pub adversary: AdversaryKind,
    pub fit: Option<Fit>,
    pub loglog: Option<LineFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
    pub fits: Vec<GroupFit>,
}

impl SweepConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn cells(&self) -> Result<Vec<CellParams>> {
        let opt = |v: &[usize]| -> Vec<Option<usize>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        };
        let ns = opt(&self.n);
        let ks = opt(&self.k);
        let deltas: Vec<Option<u64>> =
            if self.delta.is_empty() { vec![None] } else { self.delta.iter().copied().map(Some).collect() };
        match self.family {
            Family::ClassicalRandom if self.n.is_empty() || self.delta.is_empty() => {
                bail!("classical-random sweeps need `n` and `delta`")
            }
            Family::DualRandom | Family::DualComplete if self.delta.is_empty() => bail!("dual sweeps need `delta`"),
            Family::Spread if self.n.is_empty() => bail!("spread sweeps need `n`"),
            _ => {}
        }
        if self.protocols.is_empty() || self.adversaries.is_empty() || self.seeds.is_empty() {
            bail!("protocols, adversaries and seeds must be non-empty");
        }
        let mut out = Vec::new();
        for &n in &ns {
            for &delta in &deltas {
                for &k in &ks {
                    for &protocol in &self.protocols {
                        for &adversary in &self.adversaries {
                            out.push(CellParams { n, delta, k, protocol, adversary });
                        }
                    }
                }
            }
        }
        if let Some(budget) = self.budget {
            let total = out.len() * self.seeds.len();
            if total > budget {
                bail!("sweep needs {total} runs, over the budget of {budget}");
            }
        }
        Ok(out)
    }

    /// The network of `cell` for `seed`, and the contention bound handed to
    /// the protocol.
    pub fn network(&self, cell: &CellParams, seed: u64) -> Result<(DualGraph, u64)> {
        let (g, dp) = match self.family {
            Family::ClassicalRandom => {
                let n = cell.n.unwrap_or(0);
                let delta = cell.delta.unwrap_or(1);
                let half = n / 2;
                let p = (delta as f64 / (2.0 * half as f64)).min(1.0);
                (capped_random_bipartite(half, half, p, delta as usize, seed)?, delta)
            }
            Family::DualRandom => {
                let delta = cell.delta.unwrap_or(1);
                let h = DualGraph::random_bipartite(delta as usize, self.receivers, self.edge_prob, seed)?;
                (dual_transform(&h)?.graph, delta)
            }
            Family::DualComplete => {
                let delta = cell.delta.unwrap_or(1);
                let h = DualGraph::complete_bipartite(delta as usize, self.receivers)?;
                (dual_transform(&h)?.graph, delta)
            }
            Family::Spread => {
                let n = cell.n.unwrap_or(0);
                (DualGraph::spread(n)?, n.saturating_sub(1) as u64)
            }
        };
        let g = if self.single_reliable { g.downgrade_to_single_reliable() } else { g };
        Ok((g, dp.max(1)))
    }

    pub fn environment(&self, cell: &CellParams, g: &DualGraph) -> EnvironmentScript {
        let senders = if g.is_tagged() { g.senders() } else { g.nodes().collect() };
        match cell.k {
            Some(k) => EnvironmentScript::one_shot(senders.into_iter().take(k)),
            None => EnvironmentScript::one_shot(senders),
        }
    }

    pub fn run_cell_seed(&self, cell: &CellParams, seed: u64) -> Result<RunValues> {
        let (g, dp) = self.network(cell, seed)?;
        let protocol = ProtocolSpec::new(cell.protocol, DecayConfig::new(dp, self.round_constant, g.n())?)?;
        let adversary = cell.adversary.build(&g, seed)?;
        let env = self.environment(cell, &g);
        let opts = RunOptions::new(self.max_rounds, seed).with_collision_detection(self.collision_detection);
        let trace = run_execution(&g, &protocol, adversary.as_ref(), &env, opts)
            .with_context(|| format!("cell {cell:?}, seed {seed}"))?;
        let report = delay_report(&trace, &g)?;
        let all_received_before_ack = report.receive_failures() == 0;
        let (values, violations) = match self.metric {
            Metric::Ack => (report.ack.iter().map(|s| s.latency as f64).collect(), report.unmatched_bcasts),
            Metric::Progress => (
                report.progress.iter().filter_map(|s| s.latency).map(|l| l as f64).collect(),
                report.progress_violations(),
            ),
            Metric::Receive => {
                (report.receive.iter().filter_map(|s| s.latency).map(|l| l as f64).collect(), report.receive_failures())
            }
            Metric::AverageProgress => {
                let avg = average_progress(&trace, &g, &env.senders())?;
                (vec![avg.value], avg.unlabeled.len())
            }
        };
        Ok(RunValues {
            seed,
            network_n: g.n(),
            values,
            violations,
            truncated: trace.truncated,
            all_received_before_ack,
        })
    }

    fn predictor_value(&self, cell: &CellParams, mean_ln_n: f64) -> Option<f64> {
        let delta = cell.delta.map(|d| d as f64).or(cell.n.map(|n| n.saturating_sub(1) as f64));
        match self.predictor {
            Predictor::None => None,
            Predictor::DeltaLogN => delta.map(|d| d * mean_ln_n),
            Predictor::LogDeltaLogN => delta.map(|d| d.log2() * mean_ln_n),
            Predictor::DeltaPrime => delta,
            Predictor::KLogKLogN => {
                let k = cell.k? as f64;
                let k = delta.map_or(k, |d| k.min(d));
                Some(k * k.ln() * mean_ln_n)
            }
        }
    }
}

/// Random bipartite network whose receivers keep at most `cap` sender
/// neighbors (the lowest-numbered ones).
pub fn capped_random_bipartite(eta: usize, m: usize, p: f64, cap: usize, seed: u64) -> Result<DualGraph> {
    let g = DualGraph::random_bipartite(eta, m, p, seed)?;
    let mut edges = Vec::new();
    for r in g.receivers() {
        for s in g.g_neighbors(r).take(cap) {
            edges.push((s.0, r.0));
        }
    }
    let roles: Vec<Role> = g.roles().map(<[Role]>::to_vec).unwrap_or_default();
    Ok(DualGraph::new(g.n(), edges.clone(), edges, Some(roles))?)
}

pub fn aggregate(cfg: &SweepConfig, id: usize, params: CellParams, runs: &[RunValues]) -> CellResult {
    let mut pooled: Vec<f64> = runs.iter().flat_map(|r| r.values.iter().copied()).collect();
    let violations: usize = runs.iter().map(|r| r.violations).sum();
    let violations_in_median = cfg.metric == Metric::Progress;
    let mut with_failures = pooled.clone();
    if violations_in_median {
        with_failures.extend(std::iter::repeat_n(f64::INFINITY, violations));
    }
    let center = median(&mut with_failures).filter(|m| m.is_finite());
    let mut run_medians: Vec<f64> = runs.iter().filter_map(|r| median(&mut r.values.clone())).collect();
    let mean_ln_n = runs.iter().map(|r| (r.network_n as f64).ln()).sum::<f64>() / runs.len().max(1) as f64;
    CellResult {
        id,
        params,
        runs: runs.len(),
        samples: pooled.len(),
        median: center,
        p95: quantile(&mut pooled, 0.95),
        max: pooled.last().copied(),
        violations,
        violations_in_median,
        truncated_runs: runs.iter().filter(|r| r.truncated).count(),
        receive_success_runs: runs.iter().filter(|r| r.all_received_before_ack).count(),
        mean_ln_n,
        predictor: cfg.predictor_value(&params, mean_ln_n),
        median_of_runs: median(&mut run_medians),
    }
}

type FitGroup = (ProtocolKind, AdversaryKind, Vec<(f64, f64)>);

/// Fits each `(protocol, adversary)` group of cells.
pub fn fit_groups(cfg: &SweepConfig, cells: &[CellResult]) -> Vec<GroupFit> {
    let mut groups: BTreeMap<(String, String), FitGroup> = BTreeMap::new();
    for c in cells {
        let key = (c.params.protocol.to_string(), c.params.adversary.to_string());
        let entry = groups.entry(key).or_insert((c.params.protocol, c.params.adversary, Vec::new()));
        if let (Some(x), Some(y)) = (c.predictor, c.median) {
            entry.2.push((x, y));
        }
    }
    groups
        .into_values()
        .map(|(protocol, adversary, pts)| GroupFit {
            protocol,
            adversary,
            fit: match cfg.fit {
                FitMethod::LeastSquares => fit_through_origin(&pts),
                FitMethod::LogSpace => fit_log_space(&pts),
            },
            loglog: loglog_fit(&pts),
        })
        .collect()
}

/// Runs every `(cell, seed)` pair in parallel and reduces in cell order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    let cells = cfg.cells()?;
    let tasks: Vec<(usize, u64)> = (0..cells.len()).flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    let pool = worker_pool()?;
    let results: Vec<RunValues> =
        pool.install(|| tasks.par_iter().map(|&(c, s)| cfg.run_cell_seed(&cells[c], s)).collect::<Result<_>>())?;
    let per = cfg.seeds.len();
    let cell_results: Vec<CellResult> = cells
        .iter()
        .enumerate()
        .map(|(i, &params)| aggregate(cfg, i, params, &results[i * per..(i + 1) * per]))
        .collect();
    let fits = fit_groups(cfg, &cell_results);
    Ok(SweepReport { config: cfg.clone(), cells: cell_results, fits })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// One row per cell.
pub fn write_cells_csv<W: Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "cell",
        "n",
        "delta",
        "k",
        "protocol",
        "adversary",
        "runs",
        "samples",
        "median",
        "p95",
        "max",
        "violations",
        "truncated_runs",
        "receive_success_runs",
        "mean_ln_n",
        "predictor",
    ])?;
    for c in &report.cells {
        let p = &c.params;
        w.write_record([
            c.id.to_string(),
            p.n.map(|v| v.to_string()).unwrap_or_default(),
            p.delta.map(|v| v.to_string()).unwrap_or_default(),
            p.k.map(|v| v.to_string()).unwrap_or_default(),
            p.protocol.to_string(),
            p.adversary.to_string(),
            c.runs.to_string(),
            c.samples.to_string(),
            fmt_opt(c.median),
            fmt_opt(c.p95),
            fmt_opt(c.max),
            c.violations.to_string(),
            c.truncated_runs.to_string(),
            c.receive_success_runs.to_string(),
            format!("{}", c.mean_ln_n),
            fmt_opt(c.predictor),
        ])?;
    }
    w.flush()?;
    Ok(())
}
