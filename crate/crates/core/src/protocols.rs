//! Local broadcast protocols.
//!
//! SAP, SPP and APP all transmit with probability `2^-i` at their `i`-th
//! phase or round index; they differ in how rounds are grouped into epochs
//! and when a process becomes ready. Every `Θ(x)` round count is
//! instantiated as `⌈c · x⌉` with the natural log for the `log n` factor.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dualgraph::{DualGraph, ProcessId};
use crate::engine::{LocalBroadcast, MessageId, ProtocolFactory, Round};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),
    #[error("interleaved sub-protocols must share one configuration")]
    MismatchedConfigs,
    #[error("protocol does not support this topology: {0}")]
    Topology(String),
    #[error("unknown protocol kind `{0}`")]
    UnknownKind(String),
}

/// `⌈log₂ x⌉` for `x ≥ 1`.
pub fn ceil_log2(x: u64) -> u32 {
    debug_assert!(x >= 1);
    64 - (x - 1).leading_zeros()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    /// Contention bound handed to the processes (`Δ'`, or `Δ` when classical).
    pub delta_prime: u64,
    /// Constant `c` behind every `Θ(·)` round count.
    pub round_constant: u64,
    /// The `log n` factor (natural log of the network size).
    pub log_n: f64,
}

impl DecayConfig {
    pub const DEFAULT_ROUND_CONSTANT: u64 = 8;

    pub fn new(delta_prime: u64, round_constant: u64, n: usize) -> Result<Self, ProtocolError> {
        DecayConfig::with_log_n(delta_prime, round_constant, (n.max(1) as f64).ln())
    }

    pub fn with_log_n(delta_prime: u64, round_constant: u64, log_n: f64) -> Result<Self, ProtocolError> {
        let cfg = DecayConfig { delta_prime, round_constant, log_n };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.delta_prime == 0 {
            return Err(ProtocolError::InvalidConfig("delta_prime must be >= 1".into()));
        }
        if self.round_constant == 0 {
            return Err(ProtocolError::InvalidConfig("round_constant must be >= 1".into()));
        }
        if !self.log_n.is_finite() || self.log_n < 0.0 {
            return Err(ProtocolError::InvalidConfig(format!("log_n must be finite and >= 0, got {}", self.log_n)));
        }
        Ok(())
    }

    /// `L = max(1, ⌈log₂ Δ'⌉)`.
    pub fn phase_count(&self) -> u32 {
        ceil_log2(self.delta_prime).max(1)
    }

    /// APP phase count `L + max(1, ⌈log₂ L⌉)`.
    pub fn app_phase_count(&self) -> u32 {
        let l = self.phase_count();
        l + ceil_log2(l as u64).max(1)
    }

    /// `⌈c · 2^i · ln n⌉`, at least one round.
    pub fn phase_rounds(&self, i: u32) -> u64 {
        let x = self.round_constant as f64 * (1u64 << i) as f64 * self.log_n;
        (x.ceil() as u64).max(1)
    }

    /// Ready epochs an SPP process spends on a message: `⌈c · Δ' · ln n⌉`.
    pub fn spp_ack_epochs(&self) -> u64 {
        let x = self.round_constant as f64 * self.delta_prime as f64 * self.log_n;
        (x.ceil() as u64).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub index: u32,
    pub rounds: u64,
    pub probability: f64,
}

/// Probability `2^-i`.
pub fn decay_probability(i: u32) -> f64 {
    0.5f64.powi(i as i32)
}

/// An epoch laid out as consecutive phases.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    phases: Vec<Phase>,
    ends: Vec<u64>,
}

impl EpochPlan {
    fn from_phases(phases: Vec<Phase>) -> Self {
        let ends = phases
            .iter()
            .scan(0u64, |acc, p| {
                *acc += p.rounds;
                Some(*acc)
            })
            .collect();
        EpochPlan { phases, ends }
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn len(&self) -> u64 {
        self.ends.last().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Transmit probability at a 0-based offset into the epoch.
    pub fn probability_at(&self, offset: u64) -> f64 {
        let k = self.ends.partition_point(|&end| end <= offset);
        self.phases.get(k).map_or(0.0, |p| p.probability)
    }

    /// 1-based phase index at an offset, if inside the epoch.
    pub fn phase_at(&self, offset: u64) -> Option<u32> {
        let k = self.ends.partition_point(|&end| end <= offset);
        self.phases.get(k).map(|p| p.index)
    }
}

fn plan_with(cfg: &DecayConfig, phases: u32) -> EpochPlan {
    EpochPlan::from_phases(
        (1..=phases)
            .map(|i| Phase { index: i, rounds: cfg.phase_rounds(i), probability: decay_probability(i) })
            .collect(),
    )
}

/// One SAP epoch: phases `1..=L`.
pub fn sap_epoch_plan(cfg: &DecayConfig) -> EpochPlan {
    plan_with(cfg, cfg.phase_count())
}

/// One APP epoch: SAP's phases extended by `max(1, ⌈log₂ L⌉)` more.
pub fn app_epoch_plan(cfg: &DecayConfig) -> EpochPlan {
    plan_with(cfg, cfg.app_phase_count())
}

/// First epoch boundary at or after `round`, for epochs of `len` rounds
/// aligned to round 1.
pub fn next_epoch_start(round: Round, len: u64) -> Round {
    let into = (round - 1) % len;
    if into == 0 {
        round
    } else {
        round + (len - into)
    }
}

/// Synchronous acknowledgment protocol.
#[derive(Debug, Clone)]
pub struct Sap {
    plan: Arc<EpochPlan>,
    message: Option<MessageId>,
    ready_start: Round,
}

impl Sap {
    pub fn new(plan: Arc<EpochPlan>) -> Self {
        Sap { plan, message: None, ready_start: 0 }
    }

    /// First round of the epoch in which the current message is ready.
    pub fn ready_start(&self) -> Option<Round> {
        self.message.map(|_| self.ready_start)
    }

    pub fn ack_round(&self) -> Option<Round> {
        self.message.map(|_| self.ready_start + self.plan.len() - 1)
    }
}

impl LocalBroadcast for Sap {
    fn on_bcast(&mut self, message: MessageId, round: Round) {
        self.message = Some(message);
        self.ready_start = next_epoch_start(round, self.plan.len());
    }

    fn transmit_probability(&self, round: Round) -> f64 {
        match self.message {
            Some(_) if round >= self.ready_start && round - self.ready_start < self.plan.len() => {
                self.plan.probability_at(round - self.ready_start)
            }
            _ => 0.0,
        }
    }

    fn current_message(&self) -> Option<MessageId> {
        self.message
    }

    fn end_round(&mut self, round: Round) -> Option<MessageId> {
        if self.ack_round() == Some(round) {
            self.message.take()
        } else {
            None
        }
    }
}

/// Synchronous progress protocol (the Decay procedure): epochs of `L`
/// rounds, round `i` of each epoch at probability `2^-i`.
#[derive(Debug, Clone)]
pub struct Spp {
    epoch_len: u64,
    ack_epochs: u64,
    message: Option<MessageId>,
    ready_start: Round,
}

impl Spp {
    pub fn new(cfg: &DecayConfig) -> Self {
        Spp { epoch_len: cfg.phase_count() as u64, ack_epochs: cfg.spp_ack_epochs(), message: None, ready_start: 0 }
    }

    pub fn ack_round(&self) -> Option<Round> {
        self.message.map(|_| self.ready_start + self.ack_epochs * self.epoch_len - 1)
    }
}

impl LocalBroadcast for Spp {
    fn on_bcast(&mut self, message: MessageId, round: Round) {
        self.message = Some(message);
        self.ready_start = next_epoch_start(round, self.epoch_len);
    }

    fn transmit_probability(&self, round: Round) -> f64 {
        match self.ack_round() {
            Some(ack) if round >= self.ready_start && round <= ack => {
                decay_probability(((round - self.ready_start) % self.epoch_len) as u32 + 1)
            }
            _ => 0.0,
        }
    }

    fn current_message(&self) -> Option<MessageId> {
        self.message
    }

    fn end_round(&mut self, round: Round) -> Option<MessageId> {
        if self.ack_round() == Some(round) {
            self.message.take()
        } else {
            None
        }
    }
}

/// Asynchronous progress protocol: an epoch starts the moment the message
/// arrives.
#[derive(Debug, Clone)]
pub struct App {
    plan: Arc<EpochPlan>,
    message: Option<MessageId>,
    start: Round,
}

impl App {
    pub fn new(plan: Arc<EpochPlan>) -> Self {
        App { plan, message: None, start: 0 }
    }

    pub fn ack_round(&self) -> Option<Round> {
        self.message.map(|_| self.start + self.plan.len() - 1)
    }
}

impl LocalBroadcast for App {
    fn on_bcast(&mut self, message: MessageId, round: Round) {
        self.message = Some(message);
        self.start = round;
    }

    fn transmit_probability(&self, round: Round) -> f64 {
        match self.message {
            Some(_) if round >= self.start => self.plan.probability_at(round - self.start),
            _ => 0.0,
        }
    }

    fn current_message(&self) -> Option<MessageId> {
        self.message
    }

    fn end_round(&mut self, round: Round) -> Option<MessageId> {
        if self.ack_round() == Some(round) {
            self.message.take()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
pub enum ProgressProtocol {
    Spp(Spp),
    App(App),
}

impl ProgressProtocol {
    fn inner(&self) -> &dyn LocalBroadcast {
        match self {
            ProgressProtocol::Spp(p) => p,
            ProgressProtocol::App(p) => p,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn LocalBroadcast {
        match self {
            ProgressProtocol::Spp(p) => p,
            ProgressProtocol::App(p) => p,
        }
    }

    fn halt(&mut self) {
        match self {
            ProgressProtocol::Spp(p) => p.message = None,
            ProgressProtocol::App(p) => p.message = None,
        }
    }
}

/// SAP on odd global rounds, a progress protocol on even ones. Each part
/// sees only its own rounds, numbered from 1. The message is acknowledged
/// when SAP acknowledges it, and the progress part drops it then.
#[derive(Debug, Clone)]
pub struct Interleaved {
    sap: Sap,
    progress: ProgressProtocol,
}

/// Internal round of the odd-round part that a global round maps to, or the
/// next one if the global round is even.
fn odd_clock(round: Round) -> Round {
    round / 2 + 1
}

fn even_clock(round: Round) -> Round {
    round.div_ceil(2)
}

impl Interleaved {
    pub fn new(
        sap_cfg: &DecayConfig,
        progress: ProgressKind,
        progress_cfg: &DecayConfig,
    ) -> Result<Self, ProtocolError> {
        if sap_cfg != progress_cfg {
            return Err(ProtocolError::MismatchedConfigs);
        }
        let progress = match progress {
            ProgressKind::Spp => ProgressProtocol::Spp(Spp::new(progress_cfg)),
            ProgressKind::App => ProgressProtocol::App(App::new(Arc::new(app_epoch_plan(progress_cfg)))),
        };
        Ok(Interleaved { sap: Sap::new(Arc::new(sap_epoch_plan(sap_cfg))), progress })
    }

    fn from_parts(sap: Sap, progress: ProgressProtocol) -> Self {
        Interleaved { sap, progress }
    }

    pub fn sap(&self) -> &Sap {
        &self.sap
    }

    pub fn progress(&self) -> &ProgressProtocol {
        &self.progress
    }
}

impl LocalBroadcast for Interleaved {
    fn on_bcast(&mut self, message: MessageId, round: Round) {
        self.sap.on_bcast(message, odd_clock(round));
        self.progress.inner_mut().on_bcast(message, even_clock(round));
    }

    fn transmit_probability(&self, round: Round) -> f64 {
        if round % 2 == 1 {
            self.sap.transmit_probability(round.div_ceil(2))
        } else {
            self.progress.inner().transmit_probability(round / 2)
        }
    }

    fn current_message(&self) -> Option<MessageId> {
        self.sap.current_message()
    }

    fn end_round(&mut self, round: Round) -> Option<MessageId> {
        if round % 2 == 1 {
            let acked = self.sap.end_round(round.div_ceil(2));
            if acked.is_some() {
                self.progress.halt();
            }
            acked
        } else {
            // The progress part may finish its own epoch first; the message
            // stays active until SAP acknowledges it.
            let _ = self.progress.inner_mut().end_round(round / 2);
            None
        }
    }
}

/// Centralized baseline for networks with one reliable edge per component:
/// rounds are paired, the smaller endpoint of the component's reliable edge
/// transmits in the first round of a pair and the larger one in the second.
/// Every process acknowledges after one full pair in which it was active.
#[derive(Debug, Clone)]
pub struct CentralizedPair {
    /// 1 for the first endpoint, 2 for the second, `None` off the edge.
    slot: Option<u8>,
    message: Option<MessageId>,
    ack_round: Round,
}

impl LocalBroadcast for CentralizedPair {
    fn on_bcast(&mut self, message: MessageId, round: Round) {
        self.message = Some(message);
        self.ack_round = if round % 2 == 1 { round + 1 } else { round + 2 };
    }

    fn transmit_probability(&self, round: Round) -> f64 {
        let turn = if round % 2 == 1 { 1 } else { 2 };
        match (self.message, self.slot) {
            (Some(_), Some(slot)) if slot == turn => 1.0,
            _ => 0.0,
        }
    }

    fn current_message(&self) -> Option<MessageId> {
        self.message
    }

    fn end_round(&mut self, round: Round) -> Option<MessageId> {
        if self.message.is_some() && round == self.ack_round {
            self.message.take()
        } else {
            None
        }
    }
}

/// Round-robin schedule over process ids: process `p` owns the rounds
/// `r ≡ p (mod n)`, transmits in its next owned round and acknowledges
/// right after it. On a spread network `b_1` therefore transmits alone in
/// round 1.
#[derive(Debug, Clone)]
pub struct RoundRobin {
    slot: u64,
    period: u64,
    message: Option<MessageId>,
    turn: Round,
}

impl LocalBroadcast for RoundRobin {
    fn on_bcast(&mut self, message: MessageId, round: Round) {
        self.message = Some(message);
        let phase = (round - 1) % self.period + 1;
        self.turn =
            if phase <= self.slot { round + (self.slot - phase) } else { round + self.period - (phase - self.slot) };
    }

    fn transmit_probability(&self, round: Round) -> f64 {
        if self.message.is_some() && round == self.turn {
            1.0
        } else {
            0.0
        }
    }

    fn current_message(&self) -> Option<MessageId> {
        self.message
    }

    fn end_round(&mut self, round: Round) -> Option<MessageId> {
        if round == self.turn {
            self.message.take()
        } else {
            None
        }
    }
}

/// Deterministic protocol driven by a fixed set of transmit rounds;
/// acknowledges after the last scripted round.
#[derive(Debug, Clone)]
pub struct Scripted {
    rounds: Arc<BTreeSet<Round>>,
    last: Round,
    message: Option<MessageId>,
    ack_round: Round,
}

impl LocalBroadcast for Scripted {
    fn on_bcast(&mut self, message: MessageId, round: Round) {
        self.message = Some(message);
        self.ack_round = round.max(self.last);
    }

    fn transmit_probability(&self, round: Round) -> f64 {
        if self.message.is_some() && self.rounds.contains(&round) {
            1.0
        } else {
            0.0
        }
    }

    fn current_message(&self) -> Option<MessageId> {
        self.message
    }

    fn end_round(&mut self, round: Round) -> Option<MessageId> {
        if self.message.is_some() && round == self.ack_round {
            self.message.take()
        } else {
            None
        }
    }
}

/// Factory for [`Scripted`] processes.
#[derive(Debug, Clone, Default)]
pub struct ScriptedFactory {
    rounds: BTreeMap<ProcessId, Arc<BTreeSet<Round>>>,
    length: Round,
}

impl ScriptedFactory {
    /// `rounds[r - 1]` lists the processes transmitting in round `r`.
    pub fn from_rounds<'a>(rounds: impl IntoIterator<Item = &'a BTreeSet<ProcessId>>) -> Self {
        let mut per: BTreeMap<ProcessId, BTreeSet<Round>> = BTreeMap::new();
        let mut length = 0;
        for (i, set) in rounds.into_iter().enumerate() {
            length = i as Round + 1;
            for &p in set {
                per.entry(p).or_default().insert(length);
            }
        }
        ScriptedFactory { rounds: per.into_iter().map(|(p, r)| (p, Arc::new(r))).collect(), length }
    }

    pub fn length(&self) -> Round {
        self.length
    }
}

impl ProtocolFactory for ScriptedFactory {
    fn label(&self) -> String {
        "scripted".into()
    }

    fn build(&self, _g: &DualGraph, process: ProcessId) -> Result<Box<dyn LocalBroadcast>, ProtocolError> {
        let rounds = self.rounds.get(&process).cloned().unwrap_or_default();
        Ok(Box::new(Scripted { rounds, last: self.length, message: None, ack_round: 0 }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProgressKind {
    Spp,
    App,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProtocolKind {
    Sap,
    Spp,
    App,
    SapSpp,
    SapApp,
    CentralizedPair,
    CentralizedSpread,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 7] = [
        ProtocolKind::Sap,
        ProtocolKind::Spp,
        ProtocolKind::App,
        ProtocolKind::SapSpp,
        ProtocolKind::SapApp,
        ProtocolKind::CentralizedPair,
        ProtocolKind::CentralizedSpread,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Sap => "sap",
            ProtocolKind::Spp => "spp",
            ProtocolKind::App => "app",
            ProtocolKind::SapSpp => "sap+spp",
            ProtocolKind::SapApp => "sap+app",
            ProtocolKind::CentralizedPair => "centralized-pair",
            ProtocolKind::CentralizedSpread => "centralized-spread",
        }
    }

    /// Protocols whose transmit decisions use randomness.
    pub fn is_randomized(self) -> bool {
        !matches!(self, ProtocolKind::CentralizedPair | ProtocolKind::CentralizedSpread)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| ProtocolError::UnknownKind(s.to_string()))
    }
}

impl TryFrom<String> for ProtocolKind {
    type Error = ProtocolError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ProtocolKind> for String {
    fn from(k: ProtocolKind) -> String {
        k.as_str().to_string()
    }
}

/// A protocol kind plus its configuration; builds per-process instances.
#[derive(Debug, Clone)]
pub struct ProtocolSpec {
    kind: ProtocolKind,
    cfg: DecayConfig,
    sap_plan: Arc<EpochPlan>,
    app_plan: Arc<EpochPlan>,
}

impl ProtocolSpec {
    pub fn new(kind: ProtocolKind, cfg: DecayConfig) -> Result<Self, ProtocolError> {
        cfg.validate()?;
        Ok(ProtocolSpec {
            kind,
            cfg,
            sap_plan: Arc::new(sap_epoch_plan(&cfg)),
            app_plan: Arc::new(app_epoch_plan(&cfg)),
        })
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn config(&self) -> &DecayConfig {
        &self.cfg
    }
}

impl ProtocolFactory for ProtocolSpec {
    fn label(&self) -> String {
        self.kind.as_str().to_string()
    }

    fn build(&self, g: &DualGraph, process: ProcessId) -> Result<Box<dyn LocalBroadcast>, ProtocolError> {
        Ok(match self.kind {
            ProtocolKind::Sap => Box::new(Sap::new(self.sap_plan.clone())),
            ProtocolKind::Spp => Box::new(Spp::new(&self.cfg)),
            ProtocolKind::App => Box::new(App::new(self.app_plan.clone())),
            ProtocolKind::SapSpp => Box::new(Interleaved::from_parts(
                Sap::new(self.sap_plan.clone()),
                ProgressProtocol::Spp(Spp::new(&self.cfg)),
            )),
            ProtocolKind::SapApp => Box::new(Interleaved::from_parts(
                Sap::new(self.sap_plan.clone()),
                ProgressProtocol::App(App::new(self.app_plan.clone())),
            )),
            ProtocolKind::CentralizedPair => {
                let edges = g.single_reliable_edges().map_err(|e| ProtocolError::Topology(e.to_string()))?;
                let slot = edges.iter().find_map(|e| {
                    let (a, b) = e.endpoints();
                    if a == process {
                        Some(1)
                    } else if b == process {
                        Some(2)
                    } else {
                        None
                    }
                });
                Box::new(CentralizedPair { slot, message: None, ack_round: 0 })
            }
            ProtocolKind::CentralizedSpread => {
                let expected = DualGraph::spread(g.n()).map_err(|e| ProtocolError::Topology(e.to_string()))?;
                if expected.to_file() != g.to_file() {
                    return Err(ProtocolError::Topology("network is not a spread network".into()));
                }
                Box::new(RoundRobin { slot: process.0 as u64, period: g.n() as u64, message: None, turn: 0 })
            }
        })
    }
}
