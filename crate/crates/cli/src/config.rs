//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use localcast::adversaries::AdversaryKind;
use localcast::dualgraph::{dual_transform, DualGraph, ProcessId};
use localcast::engine::{EnvironmentScript, Injection, Round};
use localcast::protocols::{DecayConfig, ProtocolKind};

/// A dualgraph generator and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Generator {
    RandomBipartite {
        eta: usize,
        m: usize,
        p: f64,
        /// Defaults to the run seed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    CompleteBipartite {
        eta: usize,
        m: usize,
    },
    /// `d` senders around one receiver.
    Star {
        d: usize,
    },
    Classical {
        n: usize,
        edges: Vec<(u32, u32)>,
    },
    Lollipop {
        n: usize,
    },
    Spread {
        n: usize,
    },
    File {
        path: PathBuf,
    },
}

pub const GENERATOR_NAMES: [&str; 7] =
    ["random-bipartite", "complete-bipartite", "star", "classical", "lollipop", "spread", "file"];

impl Generator {
    /// Builds a generator from a name and `key=value` pairs, e.g.
    /// `spread n=8`. Values that parse as JSON keep their JSON type.
    pub fn from_args(name: &str, params: &[String]) -> Result<Self> {
        if !GENERATOR_NAMES.contains(&name) {
            bail!("unknown generator `{name}` (expected one of {})", GENERATOR_NAMES.join(", "));
        }
        let mut map = Map::new();
        map.insert("generator".into(), Value::String(name.into()));
        for kv in params {
            let (k, v) = kv.split_once('=').with_context(|| format!("expected key=value, got `{kv}`"))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            map.insert(k.to_string(), value);
        }
        serde_json::from_value(Value::Object(map)).with_context(|| format!("bad parameters for generator `{name}`"))
    }

    pub fn build(&self, seed: u64) -> Result<DualGraph> {
        Ok(match self {
            Generator::RandomBipartite { eta, m, p, seed: s } => {
                DualGraph::random_bipartite(*eta, *m, *p, s.unwrap_or(seed))?
            }
            Generator::CompleteBipartite { eta, m } => DualGraph::complete_bipartite(*eta, *m)?,
            Generator::Star { d } => DualGraph::complete_bipartite(*d, 1)?,
            Generator::Classical { n, edges } => DualGraph::classical(*n, edges)?,
            Generator::Lollipop { n } => DualGraph::lollipop(*n)?,
            Generator::Spread { n } => DualGraph::spread(*n)?,
            Generator::File { path } => read_graph(path)?,
        })
    }

    /// Whether the network depends on the run seed.
    pub fn is_seeded(&self) -> bool {
        matches!(self, Generator::RandomBipartite { seed: None, .. })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    #[default]
    None,
    /// Replace every receiver by one proxy per sender neighbor.
    Dual,
    /// Dual transform, then keep a single reliable edge per component.
    DualSingleReliable,
    /// Keep a single reliable edge per component.
    SingleReliable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(flatten)]
    pub generator: Generator,
    #[serde(default)]
    pub transform: Transform,
}

impl NetworkSpec {
    pub fn build(&self, seed: u64) -> Result<DualGraph> {
        let g = self.generator.build(seed)?;
        Ok(match self.transform {
            Transform::None => g,
            Transform::Dual => dual_transform(&g)?.graph,
            Transform::DualSingleReliable => dual_transform(&g)?.graph.downgrade_to_single_reliable(),
            Transform::SingleReliable => g.downgrade_to_single_reliable(),
        })
    }

    /// Short label for CSV rows.
    pub fn label(&self) -> String {
        let v = serde_json::to_value(&self.generator).unwrap_or(Value::Null);
        let mut parts = Vec::new();
        if let Value::Object(map) = v {
            for (k, val) in map {
                match (k.as_str(), val) {
                    ("generator", Value::String(s)) => parts.insert(0, s),
                    ("edges", _) => {}
                    (_, Value::String(s)) => parts.push(format!("{k}={s}")),
                    (_, other) => parts.push(format!("{k}={other}")),
                }
            }
        }
        match self.transform {
            Transform::None => {}
            t => parts.push(format!(
                "transform={}",
                serde_json::to_value(t).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
            )),
        }
        parts.join(" ")
    }
}

pub fn read_graph(path: &Path) -> Result<DualGraph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    DualGraph::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Protocol parameters. `delta_prime` defaults to the network's maximum
/// receiver degree in `G'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayParams {
    #[serde(default)]
    pub delta_prime: Option<u64>,
    /// Multiplier applied to the contention bound handed to processes.
    #[serde(default = "one")]
    pub delta_prime_factor: f64,
    #[serde(default = "default_round_constant")]
    pub round_constant: u64,
}

fn one() -> f64 {
    1.0
}

fn default_round_constant() -> u64 {
    DecayConfig::DEFAULT_ROUND_CONSTANT
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams { delta_prime: None, delta_prime_factor: 1.0, round_constant: default_round_constant() }
    }
}

impl DecayParams {
    pub fn resolve(&self, g: &DualGraph) -> Result<DecayConfig> {
        if !(self.delta_prime_factor.is_finite() && self.delta_prime_factor > 0.0) {
            bail!("delta_prime_factor must be positive, got {}", self.delta_prime_factor);
        }
        let base = self.delta_prime.unwrap_or(g.stats().max_receiver_degree_g_prime as u64).max(1);
        let dp = ((base as f64) * self.delta_prime_factor).ceil().max(1.0) as u64;
        Ok(DecayConfig::new(dp, self.round_constant, g.n())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// Every listed process (default: every tagged sender, or every
    /// process on untagged networks) gets a message in round 1.
    OneShot {
        #[serde(default)]
        senders: Option<Vec<u32>>,
    },
    /// The first `k` tagged senders get a message in round 1.
    FirstSenders {
        k: usize,
    },
    Online {
        injections: Vec<(Round, u32)>,
    },
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        EnvironmentSpec::OneShot { senders: None }
    }
}

impl EnvironmentSpec {
    pub fn build(&self, g: &DualGraph) -> Result<EnvironmentScript> {
        let default_senders = || if g.is_tagged() { g.senders() } else { g.nodes().collect() };
        let env = match self {
            EnvironmentSpec::OneShot { senders: Some(ids) } => {
                EnvironmentScript::one_shot(ids.iter().map(|&i| ProcessId(i)))
            }
            EnvironmentSpec::OneShot { senders: None } => EnvironmentScript::one_shot(default_senders()),
            EnvironmentSpec::FirstSenders { k } => EnvironmentScript::one_shot(default_senders().into_iter().take(*k)),
            EnvironmentSpec::Online { injections } => EnvironmentScript::online(
                injections.iter().map(|&(round, p)| Injection { round, process: ProcessId(p) }),
            ),
        };
        env.validate(g)?;
        Ok(env)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub metrics_csv: Option<PathBuf>,
    /// One JSONL trace per seed is written here when set.
    #[serde(default)]
    pub traces_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    pub protocol: ProtocolKind,
    #[serde(default)]
    pub decay: DecayParams,
    #[serde(default = "default_adversary")]
    pub adversary: AdversaryKind,
    #[serde(default)]
    pub environment: EnvironmentSpec,
    pub seeds: Vec<u64>,
    pub max_rounds: Round,
    #[serde(default)]
    pub collision_detection: bool,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn default_adversary() -> AdversaryKind {
    AdversaryKind::Full
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        if self.max_rounds == 0 {
            bail!("max_rounds must be at least 1");
        }
        Ok(())
    }
}

/// Parses `--seed-list` values: comma-separated seeds and `a..b` ranges
/// (end exclusive).
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (a.parse()?, b.parse()?);
            out.extend(a..b);
        } else {
            out.push(part.parse().with_context(|| format!("bad seed `{part}`"))?);
        }
    }
    if out.is_empty() {
        bail!("seed list is empty");
    }
    Ok(out)
}
