//! Indistinguishability of call sequences.
//!
//! [`approx`] decides the rule-generated relation ≈ for one agent and call
//! type. [`build_equivalence_index`] closes it into per-agent partitions of
//! a bounded [`Universe`]; the closure only follows paths through members of
//! the universe.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gossip::{
    initial_situation, AgentId, Call, CallSequence, CallType, Observance, Privacy, SecretSet,
};
use crate::universe::{Situations, Universe};

/// Default cap on `|members|²` for an index build.
pub const DEFAULT_PAIR_BUDGET: u128 = 10_000_000_000;

#[derive(Debug, Clone, Copy)]
pub struct IndexConfig {
    pub pair_budget: u128,
    /// Restrict pair tests to members that agree on the invariants every
    /// related pair shares (the agent's own calls, and its final secrets).
    pub bucketed: bool,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig { pair_budget: DEFAULT_PAIR_BUDGET, bucketed: true }
    }
}

/// A call sequence together with the situation after each of its prefixes.
/// `sets[i * n..(i + 1) * n]` holds the situation after `calls[..i]`.
pub(crate) struct Trace<'a> {
    pub calls: &'a [Call],
    pub sets: &'a [SecretSet],
}

impl Trace<'_> {
    fn set(&self, i: usize, a: AgentId, n: usize) -> SecretSet {
        self.sets[i * n + a.index()]
    }
}

/// Decides `c ≈ d` by dynamic programming over prefix pairs. `table` is
/// scratch space, reused across calls.
pub(crate) fn approx_trace(
    c: &Trace,
    d: &Trace,
    a: AgentId,
    t: CallType,
    n: usize,
    table: &mut Vec<bool>,
) -> bool {
    let (lc, ld) = (c.calls.len(), d.calls.len());
    if t.privacy != Privacy::P3 && lc != ld {
        return false;
    }
    let w = ld + 1;
    table.clear();
    table.resize((lc + 1) * w, false);
    table[0] = true;
    for i in 0..=lc {
        for j in 0..=ld {
            if i == 0 && j == 0 {
                continue;
            }
            let mut v = false;
            if t.privacy == Privacy::P3 {
                v = (i > 0 && !c.calls[i - 1].involves(a) && table[(i - 1) * w + j])
                    || (j > 0 && !d.calls[j - 1].involves(a) && table[i * w + j - 1]);
            }
            if !v && i > 0 && j > 0 && table[(i - 1) * w + j - 1] {
                let (x, y) = (c.calls[i - 1], d.calls[j - 1]);
                v = if !x.involves(a) {
                    match t.privacy {
                        Privacy::P1 => x == y,
                        Privacy::P2 => !y.involves(a),
                        Privacy::P3 => false,
                    }
                } else if x != y {
                    false
                } else if !x.affects(a, t.direction) {
                    true
                } else {
                    match t.observance {
                        Observance::After => c.set(i, a, n) == d.set(j, a, n),
                        Observance::Before => {
                            let b = x.partner(a).expect("a is involved");
                            c.set(i - 1, b, n) == d.set(j - 1, b, n)
                        }
                    }
                };
            }
            table[i * w + j] = v;
        }
    }
    table[lc * w + ld]
}

fn prefix_sets(seq: &CallSequence, t: CallType, n: usize) -> Vec<SecretSet> {
    let mut s = initial_situation(n).expect("agent count is valid");
    let mut out = Vec::with_capacity((seq.len() + 1) * n);
    out.extend_from_slice(s.sets());
    for &call in seq.calls() {
        s.apply(call, t.direction);
        out.extend_from_slice(s.sets());
    }
    out
}

/// Whether `c ≈ d` holds for agent `a` under call type `t` with `n` agents.
pub fn approx(c: &CallSequence, d: &CallSequence, a: AgentId, t: CallType, n: usize) -> bool {
    let n = n.max(c.agent_span()).max(d.agent_span()).max(a.index() + 1).max(3);
    let (sc, sd) = (prefix_sets(c, t, n), prefix_sets(d, t, n));
    let mut table = Vec::new();
    approx_trace(
        &Trace { calls: c.calls(), sets: &sc },
        &Trace { calls: d.calls(), sets: &sd },
        a,
        t,
        n,
        &mut table,
    )
}

/// A partition of universe members with canonical class ids: classes are
/// numbered by their smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    class_of: Vec<u32>,
    classes: Vec<Vec<u32>>,
}

impl Partition {
    /// Builds from arbitrary labels; members with equal labels share a class.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut renumber: HashMap<usize, u32> = HashMap::new();
        let mut class_of = Vec::with_capacity(labels.len());
        let mut classes: Vec<Vec<u32>> = Vec::new();
        for (idx, &l) in labels.iter().enumerate() {
            let id = *renumber.entry(l).or_insert_with(|| {
                classes.push(Vec::new());
                (classes.len() - 1) as u32
            });
            class_of.push(id);
            classes[id as usize].push(idx as u32);
        }
        Partition { class_of, classes }
    }

    pub fn class_id(&self, idx: usize) -> usize {
        self.class_of[idx] as usize
    }

    pub fn members(&self, class: usize) -> &[u32] {
        &self.classes[class]
    }

    pub fn class_of_member(&self, idx: usize) -> &[u32] {
        &self.classes[self.class_of[idx] as usize]
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    pub fn same(&self, i: usize, j: usize) -> bool {
        self.class_of[i] == self.class_of[j]
    }

    pub fn classes(&self) -> impl Iterator<Item = &[u32]> {
        self.classes.iter().map(|c| c.as_slice())
    }

    /// Some pair related here but not in `coarser`, if any.
    pub fn find_unrefined_pair(&self, coarser: &Partition) -> Option<(usize, usize)> {
        for class in &self.classes {
            let first = class[0] as usize;
            for &m in &class[1..] {
                if !coarser.same(first, m as usize) {
                    return Some((first, m as usize));
                }
            }
        }
        None
    }

    /// Every class here lies inside a class of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.find_unrefined_pair(coarser).is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassRecord {
    pub agent: String,
    pub class_id: usize,
    pub bound: usize,
    pub members: Vec<String>,
}

/// Per-agent partitions of a universe under one call type.
#[derive(Debug, Clone)]
pub struct EquivalenceIndex {
    universe: Arc<Universe>,
    calltype: CallType,
    partitions: Vec<Partition>,
}

impl EquivalenceIndex {
    pub fn universe(&self) -> &Arc<Universe> {
        &self.universe
    }

    pub fn calltype(&self) -> CallType {
        self.calltype
    }

    pub fn bound(&self) -> usize {
        self.universe.bound()
    }

    pub fn partition(&self, a: AgentId) -> &Partition {
        &self.partitions[a.index()]
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn from_partitions(universe: Arc<Universe>, calltype: CallType, partitions: Vec<Partition>) -> Self {
        assert_eq!(partitions.len(), universe.n_agents());
        EquivalenceIndex { universe, calltype, partitions }
    }

    pub fn class_records(&self, a: AgentId) -> Vec<ClassRecord> {
        let d = self.calltype.direction;
        self.partition(a)
            .classes()
            .enumerate()
            .map(|(class_id, members)| ClassRecord {
                agent: a.to_string(),
                class_id,
                bound: self.bound(),
                members: members
                    .iter()
                    .map(|&m| self.universe.sequence(m as usize).display(d))
                    .collect(),
            })
            .collect()
    }
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, x: usize, y: usize) {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx != ry {
            self.parent[rx.max(ry)] = rx.min(ry);
        }
    }
}

fn bucket_key(u: &Universe, sits: &Situations, idx: usize, a: AgentId, privacy: Privacy) -> Vec<u32> {
    let n = u.n_agents();
    let mut key = vec![sits.get(idx, a).bits()];
    let same_length = privacy != Privacy::P3;
    if same_length {
        key.push(u.seq_len(idx) as u32);
    }
    let chain = u.prefix_chain(idx);
    for (pos, &p) in chain.iter().enumerate().skip(1) {
        let c = u.last_call(p as usize).expect("non-empty prefix");
        if c.involves(a) {
            if same_length {
                key.push(pos as u32);
            }
            key.push(c.index(n) as u32);
        }
    }
    key
}

/// Closes one bucket; returns the representative (a bucket member) of each member.
fn close_bucket(
    u: &Universe,
    sits: &Situations,
    bucket: &[u32],
    a: AgentId,
    t: CallType,
) -> Vec<u32> {
    let n = u.n_agents();
    let owned: Vec<(Vec<Call>, Vec<SecretSet>)> = bucket
        .iter()
        .map(|&m| {
            let chain = u.prefix_chain(m as usize);
            let calls = chain[1..].iter().map(|&p| u.last_call(p as usize).unwrap()).collect();
            let sets = chain.iter().flat_map(|&p| sits.row(p as usize).iter().copied()).collect();
            (calls, sets)
        })
        .collect();
    let traces: Vec<Trace> = owned.iter().map(|(c, s)| Trace { calls: c, sets: s }).collect();
    let mut dsu = Dsu::new(bucket.len());
    let mut table = Vec::new();
    for i in 0..bucket.len() {
        for j in i + 1..bucket.len() {
            if dsu.find(i) != dsu.find(j) && approx_trace(&traces[i], &traces[j], a, t, n, &mut table) {
                dsu.union(i, j);
            }
        }
    }
    (0..bucket.len()).map(|i| bucket[dsu.find(i)]).collect()
}

fn agent_partition(u: &Universe, sits: &Situations, a: AgentId, t: CallType, cfg: &IndexConfig) -> Partition {
    let buckets: Vec<Vec<u32>> = if cfg.bucketed {
        let mut map: HashMap<Vec<u32>, Vec<u32>> = HashMap::new();
        for idx in 0..u.len() {
            map.entry(bucket_key(u, sits, idx, a, t.privacy)).or_default().push(idx as u32);
        }
        map.into_values().collect()
    } else {
        vec![(0..u.len() as u32).collect()]
    };
    let mut labels = vec![0usize; u.len()];
    let reps: Vec<(Vec<u32>, Vec<u32>)> = buckets
        .into_par_iter()
        .map(|b| {
            let r = close_bucket(u, sits, &b, a, t);
            (b, r)
        })
        .collect();
    for (bucket, rep) in reps {
        for (m, r) in bucket.into_iter().zip(rep) {
            labels[m as usize] = r as usize;
        }
    }
    Partition::from_labels(&labels)
}

/// Partitions `u` into ~ classes for every agent under `t`.
pub fn build_equivalence_index(u: Arc<Universe>, t: CallType, cfg: &IndexConfig) -> Result<EquivalenceIndex> {
    let pairs = (u.len() as u128) * (u.len() as u128);
    if pairs > cfg.pair_budget {
        return Err(Error::BudgetExceeded { pairs, budget: cfg.pair_budget });
    }
    let sits = u.situations(t.direction);
    let partitions = AgentId::all(u.n_agents())
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|a| agent_partition(&u, &sits, a, t, cfg))
        .collect();
    Ok(EquivalenceIndex { universe: u, calltype: t, partitions })
}

/// Whether `c` and `d` fall in the same class for `a`.
pub fn indistinguishable(c: &CallSequence, d: &CallSequence, a: AgentId, idx: &EquivalenceIndex) -> Result<bool> {
    let dir = idx.calltype.direction;
    let i = idx.universe.require(c, dir)?;
    let j = idx.universe.require(d, dir)?;
    check_agent(a, &idx.universe)?;
    Ok(idx.partition(a).same(i, j))
}

/// The full class of `c` for `a` within the universe.
pub fn class_of(c: &CallSequence, a: AgentId, idx: &EquivalenceIndex) -> Result<Vec<CallSequence>> {
    let i = idx.universe.require(c, idx.calltype.direction)?;
    check_agent(a, &idx.universe)?;
    Ok(idx
        .partition(a)
        .class_of_member(i)
        .iter()
        .map(|&m| idx.universe.sequence(m as usize))
        .collect())
}

fn check_agent(a: AgentId, u: &Universe) -> Result<()> {
    if a.index() >= u.n_agents() {
        return Err(Error::AgentOutOfRange { agent: a.to_string(), n: u.n_agents() });
    }
    Ok(())
}
