//! Alignment planning: for each receiver 1..=k_IAC, choose which interference
//! vectors form the basis of the aligned subspace and pair every other
//! interference vector with one basis vector, such that the resulting IAC
//! graph is a pseudoforest.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use itertools::Itertools;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{IacError, Result};
use crate::feasibility::check_theorem1;
use crate::graph::PseudoforestState;
use crate::model::SystemConfig;
use crate::rng::{substream, Purpose};

/// Stream ℓ of user j in MAC k, all 1-based. Serialized as `[k, j, l]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct StreamId {
    pub mac: usize,
    pub user: usize,
    pub stream: usize,
}

impl StreamId {
    pub fn new(mac: usize, user: usize, stream: usize) -> Self {
        Self { mac, user, stream }
    }

    /// All streams of `config` in lexicographic (mac, user, stream) order.
    pub fn all(config: &SystemConfig) -> impl Iterator<Item = StreamId> + '_ {
        config
            .users()
            .flat_map(|(mac, user, d)| (1..=d).map(move |stream| StreamId { mac, user, stream }))
    }

    fn owner(self) -> (usize, usize) {
        (self.mac, self.user)
    }
}

impl From<[usize; 3]> for StreamId {
    fn from([mac, user, stream]: [usize; 3]) -> Self {
        Self { mac, user, stream }
    }
}

impl From<StreamId> for [usize; 3] {
    fn from(s: StreamId) -> Self {
        [s.mac, s.user, s.stream]
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.mac, self.user, self.stream)
    }
}

/// The interference vector `H_receiver v_source` seen at `receiver`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InterferenceVectorId {
    pub receiver: usize,
    pub source: StreamId,
}

/// Interference at one receiver, split by how the receiver handles it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterferenceSets {
    pub receiver: usize,
    /// Streams of MACs after the receiver: aligned and zero-forced.
    pub aligned: Vec<StreamId>,
    /// Streams of MACs before the receiver: removed by successive cancellation.
    pub cancelled: Vec<StreamId>,
}

pub fn enumerate_interference_sets(config: &SystemConfig) -> Vec<InterferenceSets> {
    (1..=config.num_macs())
        .map(|k| InterferenceSets {
            receiver: k,
            aligned: StreamId::all(config).filter(|s| s.mac > k).collect(),
            cancelled: StreamId::all(config).filter(|s| s.mac < k).collect(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub aligned: StreamId,
    pub onto: StreamId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceiverPlan {
    pub receiver: usize,
    pub basis: Vec<StreamId>,
    pub pairings: Vec<Pairing>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentPlan {
    pub k_iac: usize,
    pub receivers: Vec<ReceiverPlan>,
}

/// One alignment equation `H_k v_aligned ∥ H_k v_onto`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentEquation {
    pub aligned: InterferenceVectorId,
    pub onto: InterferenceVectorId,
}

pub fn plan_to_equations(plan: &AlignmentPlan) -> Vec<AlignmentEquation> {
    plan.receivers
        .iter()
        .flat_map(|rx| {
            rx.pairings.iter().map(move |p| AlignmentEquation {
                aligned: InterferenceVectorId {
                    receiver: rx.receiver,
                    source: p.aligned,
                },
                onto: InterferenceVectorId {
                    receiver: rx.receiver,
                    source: p.onto,
                },
            })
        })
        .collect()
}

impl AlignmentPlan {
    /// Checks the structural rules a plan must satisfy for `config`:
    /// receivers 1..=k_IAC in order, basis size `min(|A|, M - D_k)`, every
    /// interference vector covered exactly once, partners from different
    /// users, no user twice on one aligned line, and a pseudoforest graph.
    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        let bad = |msg: String| Err(IacError::InvalidPlan(msg));
        let sets = enumerate_interference_sets(config);
        if self.receivers.len() != self.k_iac {
            return bad(format!(
                "{} receiver entries for k_IAC = {}",
                self.receivers.len(),
                self.k_iac
            ));
        }
        let vertices: Vec<StreamId> = StreamId::all(config).filter(|s| s.mac >= 2).collect();
        let mut forest = PseudoforestState::new(&vertices);
        for (i, rx) in self.receivers.iter().enumerate() {
            let k = i + 1;
            if rx.receiver != k {
                return bad(format!("entry {i} is for receiver {}", rx.receiver));
            }
            let a: BTreeSet<StreamId> = sets[k - 1].aligned.iter().copied().collect();
            let z = a.len().min(config.antennas() - config.mac_streams(k));
            if rx.basis.len() != z {
                return bad(format!("receiver {k}: basis size {} != {z}", rx.basis.len()));
            }
            let basis: BTreeSet<StreamId> = rx.basis.iter().copied().collect();
            if basis.len() != z || !basis.is_subset(&a) {
                return bad(format!("receiver {k}: basis is not a subset of A_{k}"));
            }
            let paired: BTreeSet<StreamId> = rx.pairings.iter().map(|p| p.aligned).collect();
            let expected: BTreeSet<StreamId> = a.difference(&basis).copied().collect();
            if paired != expected || rx.pairings.len() != expected.len() {
                return bad(format!("receiver {k}: pairings do not cover A_{k} minus basis once"));
            }
            let mut lines: Vec<BTreeSet<(usize, usize)>> =
                rx.basis.iter().map(|b| BTreeSet::from([b.owner()])).collect();
            for p in &rx.pairings {
                let Some(slot) = rx.basis.iter().position(|&b| b == p.onto) else {
                    return bad(format!("receiver {k}: {} is not a basis vector", p.onto));
                };
                if p.aligned.owner() == p.onto.owner() {
                    return bad(format!("receiver {k}: {} paired with its own user", p.aligned));
                }
                if !lines[slot].insert(p.aligned.owner()) {
                    return bad(format!(
                        "receiver {k}: user of {} already on line {}",
                        p.aligned, p.onto
                    ));
                }
                if !forest.try_add_edge(p.aligned, p.onto, k)? {
                    return bad(format!(
                        "receiver {k}: edge {} -- {} breaks the pseudoforest",
                        p.aligned, p.onto
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Ordering of candidates during the plan search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    #[default]
    Lexicographic,
    /// Interference vectors are shuffled per receiver with this seed first.
    Shuffled(u64),
}

/// Basis candidate lists up to this size are sorted by diversity; beyond it,
/// one diverse candidate is tried before plain lexicographic enumeration.
const SORTED_BASIS_CAP: usize = 20_000;

/// Searches for an alignment plan. Requires the closed-form conditions to hold.
pub fn build_alignment_plan(config: &SystemConfig, tie_break: TieBreak) -> Result<AlignmentPlan> {
    let report = check_theorem1(config)?;
    if !report.closed_form_feasible {
        return Err(IacError::Infeasible {
            failing: report.failing(),
        });
    }
    let k_iac = report.k_iac.value();
    let sets: Vec<Vec<StreamId>> = enumerate_interference_sets(config)
        .into_iter()
        .take(k_iac)
        .map(|s| {
            let mut a = s.aligned;
            if let TieBreak::Shuffled(seed) = tie_break {
                a.shuffle(&mut substream(seed, Purpose::PlanShuffle, s.receiver as u64));
            }
            a
        })
        .collect();
    let vertices: Vec<StreamId> = StreamId::all(config).filter(|s| s.mac >= 2).collect();
    let search = Search { config, sets: &sets };
    let mut out = Vec::with_capacity(k_iac);
    if search.receiver(1, &PseudoforestState::new(&vertices), &mut out) {
        Ok(AlignmentPlan { k_iac, receivers: out })
    } else {
        Err(IacError::PlanNotFound)
    }
}

struct Search<'a> {
    config: &'a SystemConfig,
    sets: &'a [Vec<StreamId>],
}

impl Search<'_> {
    fn receiver(&self, k: usize, forest: &PseudoforestState, out: &mut Vec<ReceiverPlan>) -> bool {
        if k > self.sets.len() {
            return true;
        }
        let a = &self.sets[k - 1];
        let z = a.len().min(self.config.antennas() - self.config.mac_streams(k));
        for pick in basis_candidates(a, z) {
            let basis: Vec<StreamId> = pick.iter().map(|&i| a[i]).collect();
            let rest: Vec<StreamId> = a.iter().filter(|s| !basis.contains(s)).copied().collect();
            let mut lines: Vec<Vec<(usize, usize)>> = basis.iter().map(|b| vec![b.owner()]).collect();
            let mut pairings = Vec::with_capacity(rest.len());
            let mut frame = Frame {
                k,
                basis: &basis,
                rest: &rest,
                lines: &mut lines,
                pairings: &mut pairings,
            };
            if self.assign(&mut frame, 0, forest, out) {
                return true;
            }
        }
        false
    }

    fn assign(&self, frame: &mut Frame<'_>, i: usize, forest: &PseudoforestState, out: &mut Vec<ReceiverPlan>) -> bool {
        if i == frame.rest.len() {
            out.push(ReceiverPlan {
                receiver: frame.k,
                basis: frame.basis.to_vec(),
                pairings: frame.pairings.clone(),
            });
            if self.receiver(frame.k + 1, forest, out) {
                return true;
            }
            out.pop();
            return false;
        }
        let s = frame.rest[i];
        let (own_root, own_flag) = forest.component_of(s).expect("stream is a vertex");
        let mut options: Vec<(bool, bool, usize)> = Vec::new();
        for (slot, &b) in frame.basis.iter().enumerate() {
            if b.owner() == s.owner() || frame.lines[slot].contains(&s.owner()) {
                continue;
            }
            let (root, flag) = forest.component_of(b).expect("stream is a vertex");
            let same = root == own_root;
            let accept = if same {
                !flag && !self.closes_periodic_loop(s, b, frame, out)
            } else {
                !(flag && own_flag)
            };
            if accept {
                // prefer edges that leave the component loop-free, then merges
                let closes = same || flag || own_flag;
                options.push((closes, same, slot));
            }
        }
        options.sort_by_key(|&(closes, same, _)| (closes, same));
        for (_, _, slot) in options {
            let b = frame.basis[slot];
            let mut next = forest.clone();
            if !next.try_add_edge(s, b, frame.k).expect("stream is a vertex") {
                continue;
            }
            frame.lines[slot].push(s.owner());
            frame.pairings.push(Pairing { aligned: s, onto: b });
            if self.assign(frame, i + 1, &next, out) {
                return true;
            }
            frame.pairings.pop();
            frame.lines[slot].pop();
        }
        false
    }
}

impl Search<'_> {
    /// Whether the edge `s`-`b` at receiver `frame.k` closes a loop whose
    /// reduced step labels repeat a shorter word. The loop matrix is then a power of
    /// a shorter product, so the seed and its image one period on are
    /// eigenvectors of the same matrix and two streams of one user coincide.
    fn closes_periodic_loop(&self, s: StreamId, b: StreamId, frame: &Frame<'_>, out: &[ReceiverPlan]) -> bool {
        let edges: Vec<(StreamId, StreamId, usize)> = out
            .iter()
            .flat_map(|rx| rx.pairings.iter().map(move |p| (p.aligned, p.onto, rx.receiver)))
            .chain(frame.pairings.iter().map(|p| (p.aligned, p.onto, frame.k)))
            .collect();
        let Some(path) = tree_path(&edges, b, s) else {
            return false;
        };
        let mut word: Vec<Step> = path.iter().map(|&(x, y, r)| (r, x.owner(), y.owner())).collect();
        word.push((frame.k, s.owner(), b.owner()));
        is_periodic(&reduce_loop(word))
    }
}

/// Steps (from, to, receiver) of the unique path from `start` to `goal` in an
/// acyclic edge set.
fn tree_path(
    edges: &[(StreamId, StreamId, usize)],
    start: StreamId,
    goal: StreamId,
) -> Option<Vec<(StreamId, StreamId, usize)>> {
    let mut prev: BTreeMap<StreamId, (StreamId, usize)> = BTreeMap::new();
    let mut queue = VecDeque::from([start]);
    let mut seen = BTreeSet::from([start]);
    while let Some(x) = queue.pop_front() {
        if x == goal {
            let mut path = Vec::new();
            let mut cur = goal;
            while cur != start {
                let (p, r) = prev[&cur];
                path.push((p, cur, r));
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for &(a, c, r) in edges {
            let y = if a == x {
                c
            } else if c == x {
                a
            } else {
                continue;
            };
            if seen.insert(y) {
                prev.insert(y, (x, r));
                queue.push_back(y);
            }
        }
    }
    None
}

type Step = (usize, (usize, usize), (usize, usize));

/// Merges consecutive steps at one receiver, cyclically: (H_r^c)^{-1} H_r^b
/// after (H_r^b)^{-1} H_r^a is (H_r^c)^{-1} H_r^a, and the identity drops out.
fn reduce_loop(word: Vec<Step>) -> Vec<Step> {
    let mut out: Vec<Step> = Vec::with_capacity(word.len());
    for step in word {
        match out.last().copied() {
            Some((r, a, _)) if r == step.0 => {
                out.pop();
                if a != step.2 {
                    out.push((r, a, step.2));
                }
            }
            _ => out.push(step),
        }
    }
    while out.len() >= 2 && out[0].0 == out[out.len() - 1].0 {
        let last = out.pop().expect("two steps");
        let first = out.remove(0);
        if last.1 != first.2 {
            out.insert(0, (first.0, last.1, first.2));
        }
    }
    out
}

/// True iff the cyclic word equals itself rotated by a proper divisor of its length.
fn is_periodic<T: PartialEq>(word: &[T]) -> bool {
    let n = word.len();
    (1..n)
        .filter(|&p| n.is_multiple_of(p))
        .any(|p| (0..n).all(|i| word[i] == word[(i + p) % n]))
}

struct Frame<'a> {
    k: usize,
    basis: &'a [StreamId],
    rest: &'a [StreamId],
    lines: &'a mut Vec<Vec<(usize, usize)>>,
    pairings: &'a mut Vec<Pairing>,
}

/// Index sets of size `z` into `a`, most diverse (distinct users, then
/// distinct MACs) first.
fn basis_candidates(a: &[StreamId], z: usize) -> Box<dyn Iterator<Item = Vec<usize>> + '_> {
    let diversity = move |pick: &[usize]| {
        let users: BTreeSet<(usize, usize)> = pick.iter().map(|&i| a[i].owner()).collect();
        let macs: BTreeSet<usize> = pick.iter().map(|&i| a[i].mac).collect();
        (std::cmp::Reverse(users.len()), std::cmp::Reverse(macs.len()))
    };
    if binomial(a.len(), z) <= SORTED_BASIS_CAP {
        let mut all: Vec<Vec<usize>> = (0..a.len()).combinations(z).collect();
        all.sort_by_cached_key(|p| diversity(p));
        return Box::new(all.into_iter());
    }
    // round-robin over users in order of first appearance
    let mut by_user: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for (i, s) in a.iter().enumerate() {
        match by_user.iter_mut().find(|(o, _)| *o == s.owner()) {
            Some((_, v)) => v.push(i),
            None => by_user.push((s.owner(), vec![i])),
        }
    }
    let mut diverse = Vec::with_capacity(z);
    let mut round = 0;
    while diverse.len() < z {
        for (_, idx) in &by_user {
            if diverse.len() < z && round < idx.len() {
                diverse.push(idx[round]);
            }
        }
        round += 1;
    }
    diverse.sort_unstable();
    let first = diverse.clone();
    Box::new(std::iter::once(first).chain((0..a.len()).combinations(z).filter(move |p| *p != diverse)))
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return usize::MAX,
        };
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::make_max_dof_config;
    use crate::model::make_config;

    #[test]
    fn stream_id_json_is_a_triple() {
        let s = StreamId::new(3, 1, 2);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[3,1,2]");
        assert_eq!(serde_json::from_str::<StreamId>("[3,1,2]").unwrap(), s);
        assert_eq!(s.to_string(), "3.1.2");
    }

    fn c8() -> SystemConfig {
        make_config(3, 4, &[1, 1, 2], vec![vec![2], vec![2], vec![2, 2]]).unwrap()
    }

    fn c4() -> SystemConfig {
        make_config(3, 2, &[1, 1, 2], vec![vec![1], vec![1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn interference_sets_c8() {
        let sets = enumerate_interference_sets(&c8());
        assert_eq!((sets[0].aligned.len(), sets[0].cancelled.len()), (6, 0));
        assert_eq!((sets[1].aligned.len(), sets[1].cancelled.len()), (4, 2));
        assert_eq!((sets[2].aligned.len(), sets[2].cancelled.len()), (0, 4));
    }

    #[test]
    fn plan_for_c8_is_valid() {
        let c = c8();
        let plan = build_alignment_plan(&c, TieBreak::Lexicographic).unwrap();
        plan.validate(&c).unwrap();
        assert_eq!(plan.k_iac, 2);
        assert_eq!(plan.receivers[0].pairings.len(), 4);
        assert_eq!(plan.receivers[1].pairings.len(), 2);
        assert_eq!(plan_to_equations(&plan).len(), 6);
    }

    #[test]
    fn plan_for_c4_is_valid() {
        let c = c4();
        let plan = build_alignment_plan(&c, TieBreak::Lexicographic).unwrap();
        plan.validate(&c).unwrap();
        assert_eq!(plan.receivers[0].pairings.len(), 2);
        assert_eq!(plan.receivers[1].pairings.len(), 1);
        let eqs = plan_to_equations(&plan);
        assert_eq!(eqs.len(), 3);
        assert!(eqs.iter().all(|e| e.aligned.receiver == e.onto.receiver));
    }

    #[test]
    fn plan_json_round_trips() {
        let c = make_max_dof_config(4, 4).unwrap();
        let plan = build_alignment_plan(&c, TieBreak::Lexicographic).unwrap();
        let text = serde_json::to_string(&plan).unwrap();
        assert_eq!(serde_json::from_str::<AlignmentPlan>(&text).unwrap(), plan);
    }

    #[test]
    fn shuffled_plans_are_valid_and_reproducible() {
        let c = make_max_dof_config(5, 6).unwrap();
        for seed in 0..10 {
            let p = build_alignment_plan(&c, TieBreak::Shuffled(seed)).unwrap();
            p.validate(&c).unwrap();
            assert_eq!(p, build_alignment_plan(&c, TieBreak::Shuffled(seed)).unwrap());
        }
    }

    #[test]
    fn infeasible_config_is_rejected() {
        // D_1 + max tail user = 3 + 2 > 4
        let c = make_config(3, 4, &[1, 1, 1], vec![vec![3], vec![2], vec![1]]).unwrap();
        assert!(matches!(
            build_alignment_plan(&c, TieBreak::Lexicographic),
            Err(IacError::Infeasible { .. })
        ));
    }

    #[test]
    fn validate_catches_same_user_pairing() {
        let c = c8();
        let mut plan = build_alignment_plan(&c, TieBreak::Lexicographic).unwrap();
        let p = plan.receivers[0].pairings[0];
        let same_user = plan.receivers[0]
            .basis
            .iter()
            .copied()
            .find(|b| b.owner() == p.aligned.owner());
        if let Some(b) = same_user {
            plan.receivers[0].pairings[0].onto = b;
            assert!(plan.validate(&c).is_err());
        }
        let mut plan2 = build_alignment_plan(&c, TieBreak::Lexicographic).unwrap();
        plan2.receivers[0].pairings.pop();
        assert!(plan2.validate(&c).is_err());
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(12, 4), 495);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn periodic_words() {
        assert!(is_periodic(&[1, 2, 1, 2]));
        assert!(is_periodic(&[3, 3, 3]));
        assert!(!is_periodic(&[1, 2, 1, 3]));
        assert!(!is_periodic(&[1, 2]));
        assert!(!is_periodic(&[1]));
    }

    #[test]
    fn loop_reduction_merges_same_receiver_steps() {
        let (a, b, c) = ((2, 1), (3, 1), (3, 2));
        let word = vec![(1, a, b), (2, b, c), (1, c, b), (2, b, c), (1, c, a)];
        // the steps at receiver 1 through `a` wrap around and merge
        let reduced = reduce_loop(word);
        assert_eq!(reduced, vec![(1, c, b), (2, b, c), (1, c, b), (2, b, c)]);
        assert!(is_periodic(&reduced));
        assert!(reduce_loop(vec![(1, a, b), (1, b, a)]).is_empty());
    }
}
