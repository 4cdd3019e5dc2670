//! Synchronous round loop for the dual graph model.
//!
//! Each round: environment inputs are delivered, every process decides
//! whether to transmit, the adversary picks a reach set `E ⊆ R ⊆ E'` after
//! seeing the transmitter set, receptions are resolved and acknowledgments
//! are collected. Process randomness is a pure function of
//! `(seed, process, round)`, so executions replay bit-identically.

use std::collections::HashSet;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dualgraph::{DualGraph, Edge, ProcessId};
use crate::protocols::ProtocolError;

pub type Round = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageId(pub u64);

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("max_rounds must be at least 1")]
    NoRounds,
    #[error("environment is not well-formed: {0}")]
    Environment(String),
    #[error("bcast injected at process {process} in round {round} while it still holds an unacknowledged message")]
    WellFormedness { process: ProcessId, round: Round },
    #[error("process {process} acknowledged {message:?} in round {round} without holding it")]
    UnexpectedAck { process: ProcessId, message: MessageId, round: Round },
    #[error("adversary returned a reach set of {got} flags for {expected} potential edges")]
    ReachSetShape { got: usize, expected: usize },
    #[error("adversary dropped reliable edge {0:?} in round {1}")]
    ReachSetMissingReliable(Edge, Round),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// What a process hears in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reception {
    Silence,
    Message {
        message: MessageId,
        origin: ProcessId,
    },
    /// Only produced when collision detection is enabled.
    Collision,
    Own {
        message: MessageId,
    },
}

/// The local broadcast module of a single process.
///
/// The engine asks for a transmit probability every round and flips the coin
/// itself, which keeps process randomness keyed by `(seed, process, round)`
/// and makes the probability schedule directly observable.
pub trait LocalBroadcast: Send {
    fn on_bcast(&mut self, message: MessageId, round: Round);

    /// Probability of transmitting the current message in `round`; zero when
    /// there is nothing to send.
    fn transmit_probability(&self, round: Round) -> f64;

    fn current_message(&self) -> Option<MessageId>;

    fn on_receive(&mut self, _round: Round, _reception: &Reception) {}

    /// Called after receptions; returns the message acknowledged this round.
    fn end_round(&mut self, round: Round) -> Option<MessageId>;
}

pub trait ProtocolFactory: Sync {
    fn label(&self) -> String;
    fn build(&self, g: &DualGraph, process: ProcessId) -> Result<Box<dyn LocalBroadcast>, ProtocolError>;
}

/// Reach set for one round. `Explicit` holds one flag per potential edge in
/// [`DualGraph::potential_edges`] order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReachSet {
    Reliable,
    Potential,
    Explicit(Vec<bool>),
}

impl ReachSet {
    pub fn contains(&self, g: &DualGraph, edge: usize) -> bool {
        match self {
            ReachSet::Reliable => g.is_reliable_edge(edge),
            ReachSet::Potential => true,
            ReachSet::Explicit(flags) => flags[edge],
        }
    }

    /// Unreliable edges switched on in this reach set.
    pub fn activated_unreliable(&self, g: &DualGraph) -> Vec<Edge> {
        g.potential_edges()
            .iter()
            .enumerate()
            .filter(|&(i, _)| !g.is_reliable_edge(i) && self.contains(g, i))
            .map(|(_, e)| *e)
            .collect()
    }
}

pub trait Adversary: Sync {
    fn label(&self) -> String;
    /// `transmitting[i]` is true when process `i + 1` transmits this round.
    fn reach_set(&self, round: Round, transmitting: &[bool], g: &DualGraph) -> ReachSet;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvMode {
    OneShot,
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Injection {
    pub round: Round,
    pub process: ProcessId,
}

/// Scripted `bcast` inputs. Messages are numbered from 1 in
/// `(round, process)` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvironmentScript {
    pub mode: EnvMode,
    pub injections: Vec<Injection>,
}

impl EnvironmentScript {
    pub fn one_shot(senders: impl IntoIterator<Item = ProcessId>) -> Self {
        let mut injections: Vec<_> = senders.into_iter().map(|process| Injection { round: 1, process }).collect();
        injections.sort();
        EnvironmentScript { mode: EnvMode::OneShot, injections }
    }

    pub fn online(injections: impl IntoIterator<Item = Injection>) -> Self {
        let mut injections: Vec<_> = injections.into_iter().collect();
        injections.sort();
        EnvironmentScript { mode: EnvMode::Online, injections }
    }

    pub fn validate(&self, g: &DualGraph) -> Result<(), EngineError> {
        let mut seen = HashSet::new();
        for inj in &self.injections {
            if inj.process.0 == 0 || inj.process.index() >= g.n() {
                return Err(EngineError::Environment(format!("process {} out of range", inj.process)));
            }
            if inj.round == 0 {
                return Err(EngineError::Environment("rounds start at 1".into()));
            }
            if self.mode == EnvMode::OneShot && inj.round != 1 {
                return Err(EngineError::Environment(format!(
                    "one-shot injection at round {} for process {}",
                    inj.round, inj.process
                )));
            }
            if !seen.insert((inj.round, inj.process)) {
                return Err(EngineError::Environment(format!(
                    "two injections at process {} in round {}",
                    inj.process, inj.round
                )));
            }
        }
        Ok(())
    }

    pub fn senders(&self) -> Vec<ProcessId> {
        let mut s: Vec<_> = self.injections.iter().map(|i| i.process).collect();
        s.sort();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceLevel {
    /// Interface events only.
    Events,
    /// Events plus per-round transmitters, reach sets and receptions.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_rounds: Round,
    pub seed: u64,
    pub collision_detection: bool,
    pub trace_level: TraceLevel,
}

impl RunOptions {
    pub fn new(max_rounds: Round, seed: u64) -> Self {
        RunOptions { max_rounds, seed, collision_detection: false, trace_level: TraceLevel::Events }
    }

    pub fn full_trace(mut self) -> Self {
        self.trace_level = TraceLevel::Full;
        self
    }

    pub fn with_collision_detection(mut self, on: bool) -> Self {
        self.collision_detection = on;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Bcast,
    Ack,
    Rcv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub round: Round,
    pub kind: EventKind,
    pub process: ProcessId,
    pub message: MessageId,
    /// Transmitting process, for `rcv` events.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub origin: Option<ProcessId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: Round,
    pub transmitters: Vec<(ProcessId, MessageId)>,
    /// The reach set is `E` plus these edges.
    pub activated_unreliable: Vec<[u32; 2]>,
    /// Non-silent receptions, ascending by process.
    pub receptions: Vec<(ProcessId, Reception)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub n: usize,
    pub seed: u64,
    pub protocol: String,
    pub adversary: String,
    pub collision_detection: bool,
    pub max_rounds: Round,
    pub rounds_executed: Round,
    /// The run hit `max_rounds` with work outstanding.
    pub truncated: bool,
    pub rounds: Vec<RoundRecord>,
    pub events: Vec<Event>,
}

impl ExecutionTrace {
    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// JSON-Lines export: one record per round, then a summary line with
    /// every interface event.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for rec in &self.rounds {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        let summary = TraceSummary {
            n: self.n,
            seed: self.seed,
            protocol: &self.protocol,
            adversary: &self.adversary,
            collision_detection: self.collision_detection,
            max_rounds: self.max_rounds,
            rounds_executed: self.rounds_executed,
            truncated: self.truncated,
            events: &self.events,
        };
        serde_json::to_writer(&mut out, &serde_json::json!({ "summary": summary }))?;
        out.write_all(b"\n")
    }
}

#[derive(Serialize)]
struct TraceSummary<'a> {
    n: usize,
    seed: u64,
    protocol: &'a str,
    adversary: &'a str,
    collision_detection: bool,
    max_rounds: Round,
    rounds_executed: Round,
    truncated: bool,
    events: &'a [Event],
}

/// Splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw in `[0, 1)` keyed by `(seed, a, b)`.
pub fn keyed_unit(seed: u64, a: u64, b: u64) -> f64 {
    let h = mix64(mix64(mix64(seed) ^ a) ^ b);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Transmit coin of `process` in `round`.
pub fn process_coin(seed: u64, process: ProcessId, round: Round) -> f64 {
    keyed_unit(seed, process.0 as u64, round)
}

pub fn run_execution(
    g: &DualGraph,
    protocol: &dyn ProtocolFactory,
    adversary: &dyn Adversary,
    env: &EnvironmentScript,
    opts: RunOptions,
) -> Result<ExecutionTrace, EngineError> {
    if opts.max_rounds == 0 {
        return Err(EngineError::NoRounds);
    }
    env.validate(g)?;
    let n = g.n();
    let mut procs: Vec<Box<dyn LocalBroadcast>> = g.nodes().map(|p| protocol.build(g, p)).collect::<Result<_, _>>()?;
    let mut outstanding: Vec<Option<MessageId>> = vec![None; n];
    let mut delivered: HashSet<(ProcessId, MessageId)> = HashSet::new();
    let mut events = Vec::new();
    let mut rounds = Vec::new();
    let full = opts.trace_level == TraceLevel::Full;

    let mut next_injection = 0usize;
    let mut next_message = 1u64;
    let mut transmitting = vec![false; n];
    let mut sent: Vec<Option<MessageId>> = vec![None; n];
    let mut hits = vec![0u32; n];
    let mut last_hit: Vec<Option<ProcessId>> = vec![None; n];
    let mut active_count = 0usize;
    let mut round: Round = 0;

    loop {
        let pending_inputs = next_injection < env.injections.len();
        if !pending_inputs && active_count == 0 {
            break;
        }
        if round == opts.max_rounds {
            break;
        }
        round += 1;

        // (1) environment inputs
        while next_injection < env.injections.len() && env.injections[next_injection].round == round {
            let p = env.injections[next_injection].process;
            if outstanding[p.index()].is_some() {
                return Err(EngineError::WellFormedness { process: p, round });
            }
            let m = MessageId(next_message);
            next_message += 1;
            outstanding[p.index()] = Some(m);
            active_count += 1;
            procs[p.index()].on_bcast(m, round);
            events.push(Event { round, kind: EventKind::Bcast, process: p, message: m, origin: None });
            next_injection += 1;
        }

        // (2) transmit decisions
        let mut transmitters = Vec::new();
        for (i, proc_) in procs.iter().enumerate() {
            let pid = ProcessId::from_index(i);
            let prob = proc_.transmit_probability(round);
            let fire = match proc_.current_message() {
                Some(_) if prob >= 1.0 => true,
                Some(_) if prob > 0.0 => process_coin(opts.seed, pid, round) < prob,
                _ => false,
            };
            transmitting[i] = fire;
            sent[i] = if fire { proc_.current_message() } else { None };
            if fire {
                transmitters.push(pid);
            }
        }

        // (3) adversary
        let reach = adversary.reach_set(round, &transmitting, g);
        if let ReachSet::Explicit(flags) = &reach {
            if flags.len() != g.potential_edge_count() {
                return Err(EngineError::ReachSetShape { got: flags.len(), expected: g.potential_edge_count() });
            }
            if let Some(i) = (0..flags.len()).find(|&i| g.is_reliable_edge(i) && !flags[i]) {
                return Err(EngineError::ReachSetMissingReliable(g.potential_edges()[i], round));
            }
        }

        // (4) receptions
        for &u in &transmitters {
            for a in g.adjacency(u) {
                if reach.contains(g, a.edge) {
                    let v = a.neighbor.index();
                    hits[v] += 1;
                    last_hit[v] = Some(u);
                }
            }
        }
        let mut record_receptions = Vec::new();
        for i in 0..n {
            let pid = ProcessId::from_index(i);
            let reception = if let Some(m) = sent[i] {
                Reception::Own { message: m }
            } else {
                match hits[i] {
                    0 => Reception::Silence,
                    1 => {
                        let origin = last_hit[i].expect("hit recorded");
                        let message = sent[origin.index()].expect("origin transmitted");
                        Reception::Message { message, origin }
                    }
                    _ if opts.collision_detection => Reception::Collision,
                    _ => Reception::Silence,
                }
            };
            hits[i] = 0;
            last_hit[i] = None;
            if reception == Reception::Silence {
                continue;
            }
            procs[i].on_receive(round, &reception);
            if let Reception::Message { message, origin } = reception {
                if delivered.insert((pid, message)) {
                    events.push(Event { round, kind: EventKind::Rcv, process: pid, message, origin: Some(origin) });
                }
            }
            if full {
                record_receptions.push((pid, reception));
            }
        }

        // (5) acknowledgments
        for (i, proc_) in procs.iter_mut().enumerate() {
            if let Some(m) = proc_.end_round(round) {
                let pid = ProcessId::from_index(i);
                if outstanding[i] != Some(m) {
                    return Err(EngineError::UnexpectedAck { process: pid, message: m, round });
                }
                outstanding[i] = None;
                active_count -= 1;
                events.push(Event { round, kind: EventKind::Ack, process: pid, message: m, origin: None });
            }
        }

        if full {
            rounds.push(RoundRecord {
                round,
                transmitters: transmitters.iter().map(|&p| (p, sent[p.index()].expect("sent"))).collect(),
                activated_unreliable: reach.activated_unreliable(g).into_iter().map(Edge::as_pair).collect(),
                receptions: record_receptions,
            });
        }
    }

    let truncated = next_injection < env.injections.len() || active_count > 0;
    Ok(ExecutionTrace {
        n,
        seed: opts.seed,
        protocol: protocol.label(),
        adversary: adversary.label(),
        collision_detection: opts.collision_detection,
        max_rounds: opts.max_rounds,
        rounds_executed: round,
        truncated,
        rounds,
        events,
    })
}

/// Re-runs the execution described by `trace` and reports whether the
/// result is identical.
pub fn replay_matches(
    trace: &ExecutionTrace,
    g: &DualGraph,
    protocol: &dyn ProtocolFactory,
    adversary: &dyn Adversary,
    env: &EnvironmentScript,
) -> Result<bool, EngineError> {
    let level =
        if trace.rounds.is_empty() && trace.rounds_executed > 0 { TraceLevel::Events } else { TraceLevel::Full };
    let opts = RunOptions {
        max_rounds: trace.max_rounds,
        seed: trace.seed,
        collision_detection: trace.collision_detection,
        trace_level: level,
    };
    Ok(run_execution(g, protocol, adversary, env, opts)? == *trace)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("trace has no per-round records")]
    NotFull,
    #[error("round {round}: unreliable edge {edge:?} is not in E' - E")]
    Containment { round: Round, edge: [u32; 2] },
    #[error("round {round}: reception at {process} disagrees with the reach set")]
    Reception { round: Round, process: ProcessId },
    #[error("round {round}: transmitter {process} recorded an incoming message")]
    SendReceive { round: Round, process: ProcessId },
    #[error("process {process} has two rcv events for {message:?}")]
    DuplicateRcv { process: ProcessId, message: MessageId },
    #[error("process {process} breaks bcast/ack alternation in round {round}")]
    Alternation { process: ProcessId, round: Round },
    #[error("rcv of {message:?} at {process} in round {round} has no matching reception")]
    UnbackedRcv { process: ProcessId, message: MessageId, round: Round },
}

/// Post-hoc check of the model rules on a full trace.
pub fn audit_trace(trace: &ExecutionTrace, g: &DualGraph) -> Result<(), AuditError> {
    if trace.rounds.len() as Round != trace.rounds_executed {
        return Err(AuditError::NotFull);
    }
    let mut rcv_seen = HashSet::new();
    let mut holding: Vec<Option<MessageId>> = vec![None; g.n()];
    for e in &trace.events {
        match e.kind {
            EventKind::Rcv => {
                if !rcv_seen.insert((e.process, e.message)) {
                    return Err(AuditError::DuplicateRcv { process: e.process, message: e.message });
                }
                let rec = &trace.rounds[(e.round - 1) as usize];
                let backed = rec.receptions.iter().any(|(p, r)| {
                    *p == e.process
                        && matches!(r, Reception::Message { message, origin } if *message == e.message && Some(*origin) == e.origin)
                });
                if !backed {
                    return Err(AuditError::UnbackedRcv { process: e.process, message: e.message, round: e.round });
                }
            }
            EventKind::Bcast => {
                let slot = &mut holding[e.process.index()];
                if slot.is_some() {
                    return Err(AuditError::Alternation { process: e.process, round: e.round });
                }
                *slot = Some(e.message);
            }
            EventKind::Ack => {
                let slot = &mut holding[e.process.index()];
                if *slot != Some(e.message) {
                    return Err(AuditError::Alternation { process: e.process, round: e.round });
                }
                *slot = None;
            }
        }
    }

    for rec in &trace.rounds {
        let mut in_reach = vec![false; g.potential_edge_count()];
        for (i, flag) in in_reach.iter_mut().enumerate() {
            *flag = g.is_reliable_edge(i);
        }
        for &[a, b] in &rec.activated_unreliable {
            match g.edge_index(Edge::from_ids(a, b)) {
                Some(i) if !g.is_reliable_edge(i) => in_reach[i] = true,
                _ => return Err(AuditError::Containment { round: rec.round, edge: [a, b] }),
            }
        }
        let mut sending = vec![None; g.n()];
        for &(p, m) in &rec.transmitters {
            sending[p.index()] = Some(m);
        }
        let mut heard = vec![Reception::Silence; g.n()];
        for &(p, r) in &rec.receptions {
            heard[p.index()] = r;
        }
        for v in g.nodes() {
            let got = heard[v.index()];
            if let Some(m) = sending[v.index()] {
                if got != (Reception::Own { message: m }) {
                    return Err(AuditError::SendReceive { round: rec.round, process: v });
                }
                continue;
            }
            let senders: Vec<ProcessId> = g
                .adjacency(v)
                .iter()
                .filter(|a| in_reach[a.edge] && sending[a.neighbor.index()].is_some())
                .map(|a| a.neighbor)
                .collect();
            let expected = match senders.len() {
                0 => Reception::Silence,
                1 => Reception::Message { message: sending[senders[0].index()].unwrap(), origin: senders[0] },
                _ if trace.collision_detection => Reception::Collision,
                _ => Reception::Silence,
            };
            if got != expected {
                return Err(AuditError::Reception { round: rec.round, process: v });
            }
        }
    }
    Ok(())
}
