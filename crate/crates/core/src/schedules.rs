//! Fixed transmission schedules on bipartite classical networks.
//!
//! A schedule covers a network when every receiver `u` and every sender
//! neighbor `v` of `u` share a round in which `v` is the only neighbor of
//! `u` that transmits.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversaries::ReliableOnly;
use crate::dualgraph::{DualGraph, ProcessId, Role};
use crate::engine::{run_execution, EngineError, EnvironmentScript, EventKind, RunOptions};
use crate::protocols::ScriptedFactory;

pub const MAX_SEARCH_SENDERS: usize = 12;
pub const MAX_SEARCH_LENGTH: usize = 12;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("network must be bipartite with tagged roles")]
    NotBipartite,
    #[error("network must be classical")]
    NotClassical,
    #[error("round {round} lists process {process}, which is not a sender")]
    NotASender { round: usize, process: ProcessId },
    #[error("search limited to {max_senders} senders and length {max_len}, got {senders} senders and length {len}")]
    LimitExceeded { senders: usize, len: usize, max_senders: usize, max_len: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Sender subsets `σ_1, ..., σ_L`. Serialized as an array of arrays of ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransmissionSchedule {
    pub rounds: Vec<BTreeSet<ProcessId>>,
}

impl TransmissionSchedule {
    pub fn new(rounds: Vec<BTreeSet<ProcessId>>) -> Self {
        TransmissionSchedule { rounds }
    }

    pub fn from_ids(rounds: &[&[u32]]) -> Self {
        TransmissionSchedule { rounds: rounds.iter().map(|r| r.iter().map(|&i| ProcessId(i)).collect()).collect() }
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn validate(&self, g: &DualGraph) -> Result<(), ScheduleError> {
        for (i, round) in self.rounds.iter().enumerate() {
            for &p in round {
                if p.0 == 0 || p.index() >= g.n() || g.role(p) != Role::Sender {
                    return Err(ScheduleError::NotASender { round: i + 1, process: p });
                }
            }
        }
        Ok(())
    }
}

fn require_bipartite_classical(g: &DualGraph) -> Result<(), ScheduleError> {
    if !g.is_bipartite() {
        return Err(ScheduleError::NotBipartite);
    }
    if !g.is_classical() {
        return Err(ScheduleError::NotClassical);
    }
    Ok(())
}

pub fn covers(sigma: &TransmissionSchedule, g: &DualGraph) -> Result<bool, ScheduleError> {
    require_bipartite_classical(g)?;
    sigma.validate(g)?;
    for u in g.receivers() {
        for v in g.g_neighbors(u) {
            let isolated = sigma
                .rounds
                .iter()
                .any(|round| round.contains(&v) && g.g_neighbors(u).filter(|s| round.contains(s)).count() == 1);
            if !isolated {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Origins each receiver heard from when the senders follow `sigma`.
pub type ReceptionTable = BTreeMap<ProcessId, BTreeSet<ProcessId>>;

/// Runs `sigma` through the engine with a scripted protocol and collects,
/// per receiver, the set of origins it received from.
pub fn simulate_schedule(sigma: &TransmissionSchedule, g: &DualGraph) -> Result<ReceptionTable, ScheduleError> {
    sigma.validate(g)?;
    let factory = ScriptedFactory::from_rounds(&sigma.rounds);
    let env = EnvironmentScript::one_shot(g.senders());
    let max_rounds = sigma.len().max(1) as u64;
    let trace = run_execution(g, &factory, &ReliableOnly, &env, RunOptions::new(max_rounds, 0))?;
    let mut table: ReceptionTable = g.receivers().into_iter().map(|r| (r, BTreeSet::new())).collect();
    for e in trace.events_of(EventKind::Rcv) {
        if let (Some(set), Some(origin)) = (table.get_mut(&e.process), e.origin) {
            set.insert(origin);
        }
    }
    Ok(table)
}

/// True when every receiver heard exactly its `G`-neighbors.
pub fn full_delivery(table: &ReceptionTable, g: &DualGraph) -> bool {
    table.iter().all(|(&u, heard)| *heard == g.g_neighbors(u).collect::<BTreeSet<_>>())
}

type Bits = Vec<u64>;

fn set_bit(bits: &mut Bits, i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

fn has_bit(bits: &Bits, i: usize) -> bool {
    bits[i / 64] >> (i % 64) & 1 == 1
}

struct Search {
    /// `(receiver slot, sender bit)` per pair.
    pairs: Vec<(usize, usize)>,
    receivers: usize,
    /// Distinct per-round cover masks with one witness subset each.
    moves: Vec<(Bits, u32)>,
    /// For each pair, the moves that cover it.
    covering: Vec<Vec<usize>>,
    failed: HashMap<Bits, usize>,
}

impl Search {
    fn lower_bound(&self, uncovered: &Bits) -> usize {
        let mut per = vec![0usize; self.receivers];
        for (i, &(r, _)) in self.pairs.iter().enumerate() {
            if has_bit(uncovered, i) {
                per[r] += 1;
            }
        }
        per.into_iter().max().unwrap_or(0)
    }

    fn solve(&mut self, uncovered: &Bits, depth: usize, path: &mut Vec<u32>) -> bool {
        let Some(first) = (0..self.pairs.len()).find(|&i| has_bit(uncovered, i)) else {
            return true;
        };
        if depth == 0 || self.lower_bound(uncovered) > depth {
            return false;
        }
        if self.failed.get(uncovered).is_some_and(|&d| d >= depth) {
            return false;
        }
        // Some round has to isolate the first uncovered pair; order of
        // rounds is irrelevant.
        for k in 0..self.covering[first].len() {
            let m = self.covering[first][k];
            let next: Bits = uncovered.iter().zip(&self.moves[m].0).map(|(a, b)| a & !b).collect();
            path.push(self.moves[m].1);
            if self.solve(&next, depth - 1, path) {
                return true;
            }
            path.pop();
        }
        let entry = self.failed.entry(uncovered.clone()).or_insert(0);
        *entry = (*entry).max(depth);
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoveringResult {
    pub length: usize,
    pub witness: TransmissionSchedule,
}

/// Shortest covering schedule of length at most `max_len`, if any.
/// Exhaustive: iterative deepening over round multisets, with failed
/// uncovered-pair sets memoized per remaining depth.
pub fn min_covering_length(g: &DualGraph, max_len: usize) -> Result<Option<CoveringResult>, ScheduleError> {
    require_bipartite_classical(g)?;
    let senders = g.senders();
    if senders.len() > MAX_SEARCH_SENDERS || max_len > MAX_SEARCH_LENGTH {
        return Err(ScheduleError::LimitExceeded {
            senders: senders.len(),
            len: max_len,
            max_senders: MAX_SEARCH_SENDERS,
            max_len: MAX_SEARCH_LENGTH,
        });
    }
    let bit_of: HashMap<ProcessId, usize> = senders.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let receivers = g.receivers();
    let mut pairs = Vec::new();
    let mut neighbor_mask = Vec::new();
    for (slot, &u) in receivers.iter().enumerate() {
        let mut mask = 0u32;
        for v in g.g_neighbors(u) {
            let b = bit_of[&v];
            mask |= 1 << b;
            pairs.push((slot, b));
        }
        neighbor_mask.push(mask);
    }
    let words = pairs.len().div_ceil(64).max(1);

    let mut seen: HashMap<Bits, usize> = HashMap::new();
    let mut moves: Vec<(Bits, u32)> = Vec::new();
    for subset in 1u32..(1 << senders.len()) {
        let mut bits = vec![0u64; words];
        for (i, &(slot, b)) in pairs.iter().enumerate() {
            let hit = subset & neighbor_mask[slot];
            if hit == 1 << b {
                set_bit(&mut bits, i);
            }
        }
        if bits.iter().any(|&w| w != 0) && !seen.contains_key(&bits) {
            seen.insert(bits.clone(), moves.len());
            moves.push((bits, subset));
        }
    }
    let covering = (0..pairs.len()).map(|i| (0..moves.len()).filter(|&m| has_bit(&moves[m].0, i)).collect()).collect();

    let mut all = vec![0u64; words];
    for i in 0..pairs.len() {
        set_bit(&mut all, i);
    }
    let mut search = Search { pairs, receivers: receivers.len(), moves, covering, failed: HashMap::new() };
    for depth in 0..=max_len {
        let mut path = Vec::new();
        if search.solve(&all, depth, &mut path) {
            let rounds = path
                .into_iter()
                .map(|subset| {
                    senders.iter().enumerate().filter(|&(i, _)| subset >> i & 1 == 1).map(|(_, &s)| s).collect()
                })
                .collect();
            return Ok(Some(CoveringResult { length: depth, witness: TransmissionSchedule::new(rounds) }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolatorRoundStats {
    /// `N(t)`: number of transmitters in each round.
    pub transmitters_per_round: Vec<usize>,
    /// Rounds with exactly one transmitter.
    pub isolator_rounds: usize,
    pub transmissions: BTreeMap<ProcessId, usize>,
    /// Senders that transmit alone in some round.
    pub lost: BTreeSet<ProcessId>,
    /// `Φ(s) = Σ 1/N(t)` over the rounds `s` transmits in, for senders
    /// that are not lost.
    pub potential: BTreeMap<ProcessId, f64>,
}

impl IsolatorRoundStats {
    pub fn total_potential(&self) -> f64 {
        self.potential.values().sum()
    }
}

pub fn isolator_round_stats(sigma: &TransmissionSchedule) -> IsolatorRoundStats {
    let counts: Vec<usize> = sigma.rounds.iter().map(BTreeSet::len).collect();
    let mut transmissions = BTreeMap::new();
    let mut lost = BTreeSet::new();
    for round in &sigma.rounds {
        for &s in round {
            *transmissions.entry(s).or_insert(0) += 1;
        }
        if round.len() == 1 {
            lost.extend(round.iter().copied());
        }
    }
    let mut potential: BTreeMap<ProcessId, f64> =
        transmissions.keys().filter(|s| !lost.contains(s)).map(|&s| (s, 0.0)).collect();
    for round in &sigma.rounds {
        for s in round {
            if let Some(phi) = potential.get_mut(s) {
                *phi += 1.0 / round.len() as f64;
            }
        }
    }
    IsolatorRoundStats {
        isolator_rounds: counts.iter().filter(|&&c| c == 1).count(),
        transmitters_per_round: counts,
        transmissions,
        lost,
        potential,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn star(d: usize) -> DualGraph {
        DualGraph::complete_bipartite(d, 1).unwrap()
    }

    fn bipartite(eta: usize, m: usize, edges: &[(u32, u32)]) -> DualGraph {
        use crate::dualgraph::Role;
        let roles = (0..eta).map(|_| Role::Sender).chain((0..m).map(|_| Role::Receiver)).collect();
        let e: Vec<(u32, u32)> = edges.iter().map(|&(s, r)| (s, eta as u32 + r)).collect();
        DualGraph::new(eta + m, e.clone(), e, Some(roles)).unwrap()
    }

    #[test]
    fn covers_examples() {
        let k11 = star(1);
        assert!(covers(&TransmissionSchedule::from_ids(&[&[1]]), &k11).unwrap());
        let pair = star(2);
        assert!(!covers(&TransmissionSchedule::from_ids(&[&[1, 2]]), &pair).unwrap());
        assert!(covers(&TransmissionSchedule::from_ids(&[&[1], &[2]]), &pair).unwrap());
        assert!(matches!(
            covers(&TransmissionSchedule::from_ids(&[&[3]]), &pair),
            Err(ScheduleError::NotASender { round: 1, .. })
        ));
        assert!(matches!(
            covers(&TransmissionSchedule::default(), &DualGraph::lollipop(4).unwrap()),
            Err(ScheduleError::NotBipartite)
        ));
    }

    #[test]
    fn simulation_examples() {
        let pair = star(2);
        let table = simulate_schedule(&TransmissionSchedule::from_ids(&[&[1, 2]]), &pair).unwrap();
        assert!(table[&ProcessId(3)].is_empty());
        let table = simulate_schedule(&TransmissionSchedule::from_ids(&[&[1], &[2]]), &pair).unwrap();
        assert!(full_delivery(&table, &pair));
    }

    #[test]
    fn minimal_lengths() {
        assert_eq!(min_covering_length(&star(1), 12).unwrap().unwrap().length, 1);
        for d in 1..=6 {
            let res = min_covering_length(&star(d), 12).unwrap().unwrap();
            assert_eq!(res.length, d);
            assert!(covers(&res.witness, &star(d)).unwrap());
        }
        let k33 = DualGraph::complete_bipartite(3, 3).unwrap();
        let res = min_covering_length(&k33, 12).unwrap().unwrap();
        assert_eq!(res.length, 3);
        assert!(covers(&res.witness, &k33).unwrap());
        assert_eq!(min_covering_length(&star(4), 3).unwrap(), None);
        assert!(matches!(min_covering_length(&star(13), 12), Err(ScheduleError::LimitExceeded { .. })));
        assert!(matches!(min_covering_length(&star(2), 13), Err(ScheduleError::LimitExceeded { .. })));
        // no receivers with neighbors: the empty schedule covers
        assert_eq!(min_covering_length(&bipartite(2, 1, &[]), 3).unwrap().unwrap().length, 0);
    }

    #[test]
    fn path_needs_two_rounds() {
        // s1 - r1 - s2 - r2: r1 sees both senders
        let g = bipartite(2, 2, &[(1, 1), (2, 1), (2, 2)]);
        assert_eq!(min_covering_length(&g, 5).unwrap().unwrap().length, 2);
    }

    #[test]
    fn isolator_stats_examples() {
        let s = isolator_round_stats(&TransmissionSchedule::from_ids(&[&[1]]));
        assert_eq!(s.isolator_rounds, 1);
        assert!(s.lost.contains(&ProcessId(1)));
        assert!(s.potential.is_empty());

        let s = isolator_round_stats(&TransmissionSchedule::from_ids(&[&[1, 2], &[1, 2]]));
        assert_eq!(s.potential[&ProcessId(1)], 1.0);
        assert_eq!(s.potential[&ProcessId(2)], 1.0);
        assert_eq!(s.isolator_rounds, 0);
    }

    #[test]
    fn schedule_json_shape() {
        let s = TransmissionSchedule::from_ids(&[&[2, 1], &[3]]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[[1,2],[3]]");
        let back: TransmissionSchedule = serde_json::from_str("[[1,2],[3]]").unwrap();
        assert_eq!(back, s);
    }

    fn schedule_strategy(eta: usize, max_len: usize) -> impl Strategy<Value = TransmissionSchedule> {
        prop::collection::vec(0u32..(1 << eta), 0..=max_len).prop_map(move |masks| {
            TransmissionSchedule::new(
                masks
                    .into_iter()
                    .map(|m| (0..eta as u32).filter(|i| m >> i & 1 == 1).map(|i| ProcessId(i + 1)).collect())
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn covers_matches_simulation(seed in 0u64..10_000, eta in 1usize..=4, m in 1usize..=4, sigma in schedule_strategy(4, 4)) {
            let g = DualGraph::random_bipartite(eta, m, 0.5, seed).unwrap();
            let sigma = TransmissionSchedule::new(
                sigma.rounds.into_iter().map(|r| r.into_iter().filter(|p| p.index() < eta).collect()).collect(),
            );
            let table = simulate_schedule(&sigma, &g).unwrap();
            prop_assert_eq!(covers(&sigma, &g).unwrap(), full_delivery(&table, &g));
        }

        #[test]
        fn potential_is_conserved(sigma in schedule_strategy(8, 12)) {
            let s = isolator_round_stats(&sigma);
            prop_assert!(s.total_potential() <= sigma.len() as f64 + 1e-9);
        }

        #[test]
        fn adding_edges_never_shortens(seed in 0u64..10_000, eta in 1usize..=4, m in 1usize..=3) {
            let g = DualGraph::random_bipartite(eta, m, 0.5, seed).unwrap();
            let denser = DualGraph::random_bipartite(eta, m, 1.0, 0).unwrap();
            let mut edges: Vec<(u32, u32)> = g.reliable_edges().map(|e| { let [a, b] = e.as_pair(); (a, b) }).collect();
            // add one missing edge if any
            if let Some(extra) = denser.reliable_edges().find(|e| g.edge_index(*e).is_none()) {
                let [a, b] = extra.as_pair();
                edges.push((a, b));
            }
            let bigger = DualGraph::new(g.n(), edges.clone(), edges, g.roles().map(<[_]>::to_vec)).unwrap();
            let a = min_covering_length(&g, 8).unwrap().map(|r| r.length);
            let b = min_covering_length(&bigger, 8).unwrap().map(|r| r.length);
            prop_assert!(a.is_some() && b.is_some());
            prop_assert!(a <= b);
        }
    }
}
