//! Contention and delay measurements over execution traces.
//!
//! A process is active from the round of its `bcast` through the round of
//! the matching `ack`, inclusive. Messages still outstanding when a trace
//! ends are treated as active through the last executed round.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dualgraph::{DualGraph, ProcessId};
use crate::engine::{EventKind, ExecutionTrace, MessageId, Round};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace has {trace} processes but the network has {network}")]
    SizeMismatch { trace: usize, network: usize },
    #[error("no receiver neighbors the sender set")]
    EmptyReceiverSet,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One `bcast`-to-`ack` activity window of a process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityWindow {
    pub process: ProcessId,
    pub message: MessageId,
    pub start: Round,
    /// Last active round (the ack round, or the trace end).
    pub end: Round,
    pub acked: bool,
}

/// Per-process activity windows and the derived contention quantities.
#[derive(Debug, Clone)]
pub struct ContentionProfile {
    windows: Vec<Vec<ActivityWindow>>,
    g_prime: Vec<Vec<ProcessId>>,
    g: Vec<Vec<ProcessId>>,
    rounds: Round,
    /// The trace was truncated, so open windows were closed at its end.
    pub partial: bool,
}

fn check_size(trace: &ExecutionTrace, g: &DualGraph) -> Result<(), MetricsError> {
    if trace.n != g.n() {
        return Err(MetricsError::SizeMismatch { trace: trace.n, network: g.n() });
    }
    Ok(())
}

/// Activity windows in `bcast` order.
pub fn activity_windows(trace: &ExecutionTrace) -> Vec<ActivityWindow> {
    let mut open: HashMap<ProcessId, (MessageId, Round)> = HashMap::new();
    let mut out = Vec::new();
    let mut index: HashMap<MessageId, usize> = HashMap::new();
    for e in &trace.events {
        match e.kind {
            EventKind::Bcast => {
                open.insert(e.process, (e.message, e.round));
                index.insert(e.message, out.len());
                out.push(ActivityWindow {
                    process: e.process,
                    message: e.message,
                    start: e.round,
                    end: trace.rounds_executed,
                    acked: false,
                });
            }
            EventKind::Ack => {
                if let Some((m, _)) = open.remove(&e.process) {
                    if let Some(&i) = index.get(&m) {
                        out[i].end = e.round;
                        out[i].acked = true;
                    }
                }
            }
            EventKind::Rcv => {}
        }
    }
    out
}

impl ContentionProfile {
    pub fn new(trace: &ExecutionTrace, g: &DualGraph) -> Result<Self, MetricsError> {
        check_size(trace, g)?;
        let mut windows = vec![Vec::new(); g.n()];
        let mut partial = false;
        for w in activity_windows(trace) {
            partial |= !w.acked;
            windows[w.process.index()].push(w);
        }
        Ok(ContentionProfile {
            windows,
            g_prime: g.nodes().map(|p| g.g_prime_neighbors(p).collect()).collect(),
            g: g.nodes().map(|p| g.g_neighbors(p).collect()).collect(),
            rounds: trace.rounds_executed,
            partial: partial || trace.truncated,
        })
    }

    pub fn rounds(&self) -> Round {
        self.rounds
    }

    pub fn windows(&self, p: ProcessId) -> &[ActivityWindow] {
        &self.windows[p.index()]
    }

    pub fn is_active(&self, p: ProcessId, r: Round) -> bool {
        self.windows[p.index()].iter().any(|w| w.start <= r && r <= w.end)
    }

    /// `c(u, r)`: active `G'`-neighbors of `u` in round `r`.
    pub fn c(&self, u: ProcessId, r: Round) -> usize {
        self.g_prime[u.index()].iter().filter(|&&v| self.is_active(v, r)).count()
    }

    /// `c(u, r, r')`: maximum of `c(u, ·)` over `[r, r']`.
    pub fn c_max(&self, u: ProcessId, r: Round, r2: Round) -> usize {
        let mut deltas: Vec<(Round, i64)> = Vec::new();
        for &v in &self.g_prime[u.index()] {
            for w in &self.windows[v.index()] {
                let (a, b) = (w.start.max(r), w.end.min(r2));
                if a <= b {
                    deltas.push((a, 1));
                    deltas.push((b + 1, -1));
                }
            }
        }
        // ends before starts at equal rounds
        deltas.sort_unstable();
        let mut cur = 0i64;
        let mut best = 0i64;
        for (_, d) in deltas {
            cur += d;
            best = best.max(cur);
        }
        best as usize
    }

    /// `c'(v, r, r')`: maximum of `c(u, r, r')` over `u ∈ N_G(v)`.
    pub fn c_prime(&self, v: ProcessId, r: Round, r2: Round) -> usize {
        self.g[v.index()].iter().map(|&u| self.c_max(u, r, r2)).max().unwrap_or(0)
    }

    /// Maximal intervals during which at least one `G`-neighbor of `u` is
    /// active.
    pub fn neighbor_activity(&self, u: ProcessId) -> Vec<(Round, Round)> {
        let mut spans: Vec<(Round, Round)> =
            self.g[u.index()].iter().flat_map(|&v| self.windows[v.index()].iter().map(|w| (w.start, w.end))).collect();
        spans.sort_unstable();
        let mut merged: Vec<(Round, Round)> = Vec::new();
        for (a, b) in spans {
            match merged.last_mut() {
                Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckSample {
    pub process: ProcessId,
    pub message: MessageId,
    pub bcast_round: Round,
    pub ack_round: Round,
    /// `ack_round - bcast_round`.
    pub latency: Round,
    /// `c'(v, bcast_round, ack_round)`.
    pub contention: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressSample {
    pub receiver: ProcessId,
    pub start: Round,
    pub end: Round,
    /// `r'' - start + 1` for the first qualifying rcv round `r''`, or
    /// `None` when nothing qualifying arrived inside the interval.
    pub latency: Option<Round>,
    /// `c(u, start, end)`.
    pub contention: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiveSample {
    pub sender: ProcessId,
    pub receiver: ProcessId,
    pub message: MessageId,
    /// rcv round minus bcast round, `None` if never delivered.
    pub latency: Option<Round>,
    /// Delivered no later than the sender's ack round.
    pub before_ack: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub ack: Vec<AckSample>,
    /// Messages that were never acknowledged (excluded from `ack`).
    pub unmatched_bcasts: usize,
    pub progress: Vec<ProgressSample>,
    pub receive: Vec<ReceiveSample>,
}

impl DelayReport {
    pub fn progress_violations(&self) -> usize {
        self.progress.iter().filter(|s| s.latency.is_none()).count()
    }

    pub fn receive_failures(&self) -> usize {
        self.receive.iter().filter(|s| !s.before_ack).count()
    }
}

pub fn ack_latencies(trace: &ExecutionTrace, profile: &ContentionProfile) -> (Vec<AckSample>, usize) {
    let mut out = Vec::new();
    let mut unmatched = 0;
    for w in activity_windows(trace) {
        if !w.acked {
            unmatched += 1;
            continue;
        }
        out.push(AckSample {
            process: w.process,
            message: w.message,
            bcast_round: w.start,
            ack_round: w.end,
            latency: w.end - w.start,
            contention: profile.c_prime(w.process, w.start, w.end),
        });
    }
    (out, unmatched)
}

/// One sample per receiver and maximal interval of `G`-neighbor activity.
pub fn progress_latencies(trace: &ExecutionTrace, g: &DualGraph, profile: &ContentionProfile) -> Vec<ProgressSample> {
    let windows = activity_windows(trace);
    let span: HashMap<MessageId, (Round, Round)> = windows.iter().map(|w| (w.message, (w.start, w.end))).collect();
    let mut rcvs: Vec<Vec<(Round, MessageId)>> = vec![Vec::new(); g.n()];
    for e in trace.events_of(EventKind::Rcv) {
        rcvs[e.process.index()].push((e.round, e.message));
    }
    let mut out = Vec::new();
    for u in g.receiver_like() {
        for (start, end) in profile.neighbor_activity(u) {
            let hit = rcvs[u.index()]
                .iter()
                .find(|&&(r, m)| start <= r && r <= end && span.get(&m).is_some_and(|&(a, b)| a <= end && start <= b));
            out.push(ProgressSample {
                receiver: u,
                start,
                end,
                latency: hit.map(|&(r, _)| r - start + 1),
                contention: profile.c_max(u, start, end),
            });
        }
    }
    out
}

/// One sample per message and `G`-neighbor of its sender.
pub fn receive_latencies(trace: &ExecutionTrace, g: &DualGraph) -> Vec<ReceiveSample> {
    let mut first: HashMap<(ProcessId, MessageId), Round> = HashMap::new();
    for e in trace.events_of(EventKind::Rcv) {
        first.entry((e.process, e.message)).or_insert(e.round);
    }
    let mut out = Vec::new();
    for w in activity_windows(trace) {
        for v in g.g_neighbors(w.process) {
            let got = first.get(&(v, w.message)).copied();
            out.push(ReceiveSample {
                sender: w.process,
                receiver: v,
                message: w.message,
                latency: got.map(|r| r - w.start),
                before_ack: got.is_some_and(|r| !w.acked || r <= w.end),
            });
        }
    }
    out
}

pub fn delay_report(trace: &ExecutionTrace, g: &DualGraph) -> Result<DelayReport, MetricsError> {
    let profile = ContentionProfile::new(trace, g)?;
    let (ack, unmatched_bcasts) = ack_latencies(trace, &profile);
    Ok(DelayReport {
        ack,
        unmatched_bcasts,
        progress: progress_latencies(trace, g, &profile),
        receive: receive_latencies(trace, g),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageProgress {
    pub value: f64,
    /// `(receiver, label round)` in receiver order.
    pub labels: Vec<(ProcessId, Round)>,
    /// Receivers that never received; labeled with the last executed round.
    pub unlabeled: Vec<ProcessId>,
}

/// Labels every `G`-neighbor of `senders` (outside the set) with the first
/// round it receives from a sender that is its `G`-neighbor, and averages
/// the labels.
pub fn average_progress(
    trace: &ExecutionTrace,
    g: &DualGraph,
    senders: &[ProcessId],
) -> Result<AverageProgress, MetricsError> {
    check_size(trace, g)?;
    let mut is_sender = vec![false; g.n()];
    for s in senders {
        is_sender[s.index()] = true;
    }
    let mut targets: BTreeMap<ProcessId, Option<Round>> = BTreeMap::new();
    for &s in senders {
        for v in g.g_neighbors(s) {
            if !is_sender[v.index()] {
                targets.insert(v, None);
            }
        }
    }
    if targets.is_empty() {
        return Err(MetricsError::EmptyReceiverSet);
    }
    for e in trace.events_of(EventKind::Rcv) {
        let Some(origin) = e.origin else { continue };
        if let Some(slot @ None) = targets.get_mut(&e.process) {
            if is_sender[origin.index()] && g.g_neighbors(e.process).any(|x| x == origin) {
                *slot = Some(e.round);
            }
        }
    }
    let mut labels = Vec::with_capacity(targets.len());
    let mut unlabeled = Vec::new();
    for (v, label) in targets {
        let r = label.unwrap_or_else(|| {
            unlabeled.push(v);
            trace.rounds_executed
        });
        labels.push((v, r));
    }
    let value = labels.iter().map(|&(_, r)| r as f64).sum::<f64>() / labels.len() as f64;
    Ok(AverageProgress { value, labels, unlabeled })
}

/// Context written alongside every CSV sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleContext {
    pub network: String,
    pub protocol: String,
    pub adversary: String,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    network: &'a str,
    protocol: &'a str,
    adversary: &'a str,
    seed: u64,
    metric: &'static str,
    process: u32,
    peer: Option<u32>,
    latency: Option<Round>,
    contention: Option<usize>,
}

/// Streams delay samples as CSV rows.
pub struct MetricsCsv<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsCsv<W> {
    pub fn new(out: W) -> Self {
        MetricsCsv { inner: csv::Writer::from_writer(out) }
    }

    pub fn write_report(&mut self, ctx: &SampleContext, report: &DelayReport) -> Result<(), MetricsError> {
        let row = |metric, process: ProcessId, peer: Option<ProcessId>, latency, contention| CsvRow {
            network: &ctx.network,
            protocol: &ctx.protocol,
            adversary: &ctx.adversary,
            seed: ctx.seed,
            metric,
            process: process.0,
            peer: peer.map(|p| p.0),
            latency,
            contention,
        };
        for s in &report.ack {
            self.inner.serialize(row("ack", s.process, None, Some(s.latency), Some(s.contention)))?;
        }
        for s in &report.progress {
            self.inner.serialize(row("progress", s.receiver, None, s.latency, Some(s.contention)))?;
        }
        for s in &report.receive {
            self.inner.serialize(row("receive", s.sender, Some(s.receiver), s.latency, None))?;
        }
        Ok(())
    }

    pub fn write_average(&mut self, ctx: &SampleContext, avg: &AverageProgress) -> Result<(), MetricsError> {
        #[derive(Serialize)]
        struct AvgRow<'a> {
            network: &'a str,
            protocol: &'a str,
            adversary: &'a str,
            seed: u64,
            metric: &'static str,
            process: u32,
            peer: Option<u32>,
            latency: f64,
            contention: Option<usize>,
        }
        self.inner.serialize(AvgRow {
            network: &ctx.network,
            protocol: &ctx.protocol,
            adversary: &ctx.adversary,
            seed: ctx.seed,
            metric: "average-progress",
            process: 0,
            peer: None,
            latency: avg.value,
            contention: None,
        })?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, MetricsError> {
        self.inner.flush().map_err(csv::Error::from)?;
        self.inner.into_inner().map_err(|e| MetricsError::Csv(csv::Error::from(e.into_error())))
    }
}

/// Median of a sample (mean of the middle pair for even sizes).
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 })
}

/// Nearest-rank quantile, `q` in `[0, 1]`.
pub fn quantile(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    Some(values[rank - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversaries::FullActivation;
    use crate::engine::{run_execution, EnvironmentScript, Event, Injection, RunOptions};
    use crate::protocols::{DecayConfig, ProtocolKind, ProtocolSpec};
    use proptest::prelude::*;

    fn synthetic(n: usize, rounds: Round, events: Vec<Event>) -> ExecutionTrace {
        ExecutionTrace {
            n,
            seed: 0,
            protocol: "test".into(),
            adversary: "test".into(),
            collision_detection: false,
            max_rounds: rounds,
            rounds_executed: rounds,
            truncated: false,
            rounds: Vec::new(),
            events,
        }
    }

    fn ev(round: Round, kind: EventKind, p: u32, m: u64) -> Event {
        Event { round, kind, process: ProcessId(p), message: MessageId(m), origin: None }
    }

    fn rcv(round: Round, p: u32, m: u64, origin: u32) -> Event {
        Event {
            round,
            kind: EventKind::Rcv,
            process: ProcessId(p),
            message: MessageId(m),
            origin: Some(ProcessId(origin)),
        }
    }

    #[test]
    fn contention_counts_active_neighbors() {
        // three senders, one receiver
        let g = DualGraph::complete_bipartite(3, 1).unwrap();
        let t = synthetic(
            4,
            10,
            vec![
                ev(1, EventKind::Bcast, 1, 1),
                ev(1, EventKind::Bcast, 2, 2),
                ev(1, EventKind::Bcast, 3, 3),
                ev(4, EventKind::Ack, 1, 1),
                ev(6, EventKind::Ack, 2, 2),
                ev(8, EventKind::Ack, 3, 3),
            ],
        );
        let p = ContentionProfile::new(&t, &g).unwrap();
        let u = ProcessId(4);
        assert_eq!(p.c(u, 1), 3);
        assert_eq!(p.c(u, 5), 2);
        assert_eq!(p.c(u, 9), 0);
        assert_eq!(p.c_max(u, 5, 10), 2);
        assert_eq!(p.c_max(u, 9, 10), 0);
        assert!(!p.partial);
        assert_eq!(p.c_prime(ProcessId(1), 1, 4), 3);
    }

    #[test]
    fn sap_ack_latency_is_epoch_length_minus_one() {
        let g = DualGraph::complete_bipartite(1, 1).unwrap();
        let cfg = DecayConfig::with_log_n(8, 1, 1.0).unwrap();
        let spec = ProtocolSpec::new(ProtocolKind::Sap, cfg).unwrap();
        let env = EnvironmentScript::one_shot([ProcessId(1)]);
        let t = run_execution(&g, &spec, &FullActivation, &env, RunOptions::new(100, 5)).unwrap();
        let r = delay_report(&t, &g).unwrap();
        assert_eq!(r.ack.len(), 1);
        assert_eq!(r.ack[0].latency, 13);
        assert_eq!(r.unmatched_bcasts, 0);
    }

    #[test]
    fn centralized_pair_ack_within_two() {
        let g = DualGraph::classical(2, &[(1, 2)]).unwrap();
        let spec =
            ProtocolSpec::new(ProtocolKind::CentralizedPair, DecayConfig::with_log_n(1, 1, 1.0).unwrap()).unwrap();
        let env = EnvironmentScript::online([
            Injection { round: 1, process: ProcessId(1) },
            Injection { round: 2, process: ProcessId(2) },
        ]);
        let t = run_execution(&g, &spec, &FullActivation, &env, RunOptions::new(20, 0)).unwrap();
        let r = delay_report(&t, &g).unwrap();
        assert_eq!(r.ack.len(), 2);
        assert!(r.ack.iter().all(|s| s.latency <= 2));
    }

    #[test]
    fn empty_trace_has_empty_report() {
        let g = DualGraph::complete_bipartite(2, 2).unwrap();
        let r = delay_report(&synthetic(4, 3, Vec::new()), &g).unwrap();
        assert_eq!(r, DelayReport::default());
    }

    #[test]
    fn progress_samples() {
        let g = DualGraph::complete_bipartite(2, 2).unwrap();
        let t = synthetic(
            4,
            20,
            vec![
                ev(1, EventKind::Bcast, 1, 1),
                rcv(3, 3, 1, 1),
                ev(5, EventKind::Ack, 1, 1),
                ev(10, EventKind::Bcast, 2, 2),
                rcv(12, 4, 2, 2),
                ev(14, EventKind::Ack, 2, 2),
            ],
        );
        let p = ContentionProfile::new(&t, &g).unwrap();
        let s = progress_latencies(&t, &g, &p);
        let by: Vec<_> = s.iter().map(|s| (s.receiver.0, s.start, s.end, s.latency)).collect();
        assert_eq!(by, vec![(3, 1, 5, Some(3)), (3, 10, 14, None), (4, 1, 5, None), (4, 10, 14, Some(3))]);

        // a receiver with no active neighbor yields nothing
        let lonely = DualGraph::complete_bipartite(1, 1).unwrap();
        let t = synthetic(2, 5, Vec::new());
        let p = ContentionProfile::new(&t, &lonely).unwrap();
        assert!(progress_latencies(&t, &lonely, &p).is_empty());
    }

    #[test]
    fn receive_samples() {
        let g = DualGraph::complete_bipartite(1, 2).unwrap();
        let t = synthetic(
            3,
            10,
            vec![ev(2, EventKind::Bcast, 1, 1), rcv(4, 2, 1, 1), ev(6, EventKind::Ack, 1, 1), rcv(7, 3, 1, 1)],
        );
        let s = receive_latencies(&t, &g);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].latency, s[0].before_ack), (Some(2), true));
        assert_eq!((s[1].latency, s[1].before_ack), (Some(5), false));
    }

    #[test]
    fn average_progress_labels() {
        let g = DualGraph::complete_bipartite(1, 1).unwrap();
        let t = synthetic(2, 9, vec![ev(1, EventKind::Bcast, 1, 1), rcv(5, 2, 1, 1)]);
        let avg = average_progress(&t, &g, &[ProcessId(1)]).unwrap();
        assert_eq!(avg.value, 5.0);
        assert!(avg.unlabeled.is_empty());

        let t = synthetic(2, 9, vec![ev(1, EventKind::Bcast, 1, 1)]);
        let avg = average_progress(&t, &g, &[ProcessId(1)]).unwrap();
        assert_eq!(avg.value, 9.0);
        assert_eq!(avg.unlabeled, vec![ProcessId(2)]);

        let g = DualGraph::classical(2, &[]).unwrap();
        assert!(matches!(
            average_progress(&synthetic(2, 1, Vec::new()), &g, &[ProcessId(1)]),
            Err(MetricsError::EmptyReceiverSet)
        ));
    }

    #[test]
    fn spread_baseline_has_unit_average() {
        let g = DualGraph::spread(8).unwrap();
        let senders = g.senders();
        let spec =
            ProtocolSpec::new(ProtocolKind::CentralizedSpread, DecayConfig::with_log_n(7, 1, 1.0).unwrap()).unwrap();
        let t = run_execution(
            &g,
            &spec,
            &FullActivation,
            &EnvironmentScript::one_shot(senders.clone()),
            RunOptions::new(100, 1),
        )
        .unwrap();
        assert_eq!(average_progress(&t, &g, &senders).unwrap().value, 1.0);
        let r = delay_report(&t, &g).unwrap();
        assert!(!r.progress.is_empty());
        assert!(r.progress.iter().all(|s| s.latency == Some(1)));
    }

    #[test]
    fn quantiles() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
        assert_eq!(quantile(&mut [1.0, 2.0, 3.0, 4.0], 0.95), Some(4.0));
        assert_eq!(quantile(&mut [1.0, 2.0, 3.0, 4.0], 0.5), Some(2.0));
    }

    #[test]
    fn csv_rows() {
        let g = DualGraph::complete_bipartite(1, 1).unwrap();
        let t = synthetic(2, 9, vec![ev(1, EventKind::Bcast, 1, 1), rcv(2, 2, 1, 1), ev(3, EventKind::Ack, 1, 1)]);
        let r = delay_report(&t, &g).unwrap();
        let ctx = SampleContext { network: "k11".into(), protocol: "sap".into(), adversary: "full".into(), seed: 7 };
        let mut w = MetricsCsv::new(Vec::new());
        w.write_report(&ctx, &r).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "network,protocol,adversary,seed,metric,process,peer,latency,contention");
        assert_eq!(lines[1], "k11,sap,full,7,ack,1,,2,1");
        assert_eq!(lines.len(), 4);
    }

    proptest! {
        #[test]
        fn contention_properties(seed in 0u64..300, eta in 1usize..5, m in 1usize..5, kind in 0usize..3) {
            let g = DualGraph::random_bipartite(eta, m, 0.7, seed).unwrap();
            let proto = [ProtocolKind::Sap, ProtocolKind::Spp, ProtocolKind::App][kind];
            let cfg = DecayConfig::new(4, 1, g.n()).unwrap();
            let spec = ProtocolSpec::new(proto, cfg).unwrap();
            let env = EnvironmentScript::one_shot(g.senders());
            let t = run_execution(&g, &spec, &FullActivation, &env, RunOptions::new(400, seed)).unwrap();
            let p = ContentionProfile::new(&t, &g).unwrap();
            let last = t.rounds_executed.max(1);
            for v in g.nodes() {
                // one-shot: contention never grows
                prop_assert!(p.c_max(v, 1, last) <= p.c(v, 1));
                for u in g.g_neighbors(v) {
                    prop_assert!(p.c_prime(v, 1, last) >= p.c_max(u, 1, last));
                }
            }
            let a = delay_report(&t, &g).unwrap();
            let b = delay_report(&t, &g).unwrap();
            prop_assert_eq!(&a, &b);
            for s in &a.ack {
                prop_assert!(s.bcast_round <= s.ack_round);
            }
        }
    }
}
