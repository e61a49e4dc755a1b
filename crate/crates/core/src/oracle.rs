//! Deliberately naive reference implementations.
//!
//! Nothing here shares code with the optimised engine beyond the universe
//! enumeration and call parsing: the rule table is applied forwards as a
//! least fixpoint, closure is repeated composition, and evaluation recurses
//! directly over the whole universe without caching.

use fixedbitset::FixedBitSet;

use crate::gossip::{apply_sequence, initial_situation, AgentId, Call, CallType, Direction, Observance, Privacy};
use crate::indist::Partition;
use crate::logic::Formula;
use crate::universe::Universe;

/// Square boolean table over universe member indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairTable {
    rows: Vec<FixedBitSet>,
}

impl PairTable {
    pub fn empty(size: usize) -> Self {
        PairTable { rows: vec![FixedBitSet::with_capacity(size); size] }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].contains(j)
    }

    /// Sets `(i, j)`; returns whether it was new.
    pub fn insert(&mut self, i: usize, j: usize) -> bool {
        !self.rows[i].put(j)
    }

    pub fn row(&self, i: usize) -> &FixedBitSet {
        &self.rows[i]
    }

    pub fn pair_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones(..)).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size()).all(|i| self.rows[i].ones().all(|j| self.get(j, i)))
    }

    /// Keeps only pairs with both ends in `x`.
    pub fn restrict(&self, x: &FixedBitSet) -> PairTable {
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if x.contains(i) {
                    let mut r = r.clone();
                    r.intersect_with(x);
                    r
                } else {
                    FixedBitSet::with_capacity(r.len())
                }
            })
            .collect();
        PairTable { rows }
    }

    /// Labels each member by the smallest member it is related to; only
    /// meaningful for an equivalence.
    pub fn to_partition(&self) -> Partition {
        let labels: Vec<usize> = self.rows.iter().map(|r| r.ones().next().unwrap_or(usize::MAX)).collect();
        Partition::from_labels(&labels)
    }
}

fn involves(c: Call, a: AgentId) -> bool {
    c.caller() == a || c.callee() == a
}

fn changes(c: Call, a: AgentId, d: Direction) -> bool {
    match d {
        Direction::PushPull => involves(c, a),
        Direction::Push => c.callee() == a,
        Direction::Pull => c.caller() == a,
    }
}

/// All `≈` pairs within `u` for agent `a`: starts from `(ε, ε)` and applies
/// every rule forwards until nothing new appears.
pub fn oracle_approx_table(u: &Universe, t: CallType, a: AgentId) -> PairTable {
    let n = u.n_agents();
    let init = initial_situation(n).expect("universe has a valid agent count");
    let sets: Vec<_> = (0..u.len()).map(|i| apply_sequence(&init, &u.sequence(i), t.direction)).collect();
    let calls = Call::all(n);
    let mut table = PairTable::empty(u.len());
    table.insert(0, 0);
    loop {
        let mut changed = false;
        for i in 0..u.len() {
            let js: Vec<usize> = table.row(i).ones().collect();
            for j in js {
                for &x in &calls {
                    let (ci, cj) = (u.child(i, x), u.child(j, x));
                    if !involves(x, a) {
                        match t.privacy {
                            Privacy::P1 => {
                                if let (Some(p), Some(q)) = (ci, cj) {
                                    changed |= table.insert(p, q);
                                }
                            }
                            Privacy::P2 => {
                                for &y in calls.iter().filter(|y| !involves(**y, a)) {
                                    if let (Some(p), Some(q)) = (ci, u.child(j, y)) {
                                        changed |= table.insert(p, q);
                                    }
                                }
                            }
                            Privacy::P3 => {
                                if let Some(p) = ci {
                                    changed |= table.insert(p, j);
                                }
                                if let Some(q) = cj {
                                    changed |= table.insert(i, q);
                                }
                            }
                        }
                        continue;
                    }
                    let (Some(p), Some(q)) = (ci, cj) else { continue };
                    let ok = if !changes(x, a, t.direction) {
                        true
                    } else {
                        match t.observance {
                            Observance::After => sets[p].secrets_of(a) == sets[q].secrets_of(a),
                            Observance::Before => {
                                let b = if x.caller() == a { x.callee() } else { x.caller() };
                                sets[i].secrets_of(b) == sets[j].secrets_of(b)
                            }
                        }
                    };
                    if ok {
                        changed |= table.insert(p, q);
                    }
                }
            }
        }
        if !changed {
            return table;
        }
    }
}

/// Reflexive-transitive closure by repeated composition.
pub fn oracle_closure(t: &PairTable) -> PairTable {
    let mut cur = t.clone();
    for i in 0..cur.size() {
        cur.insert(i, i);
    }
    loop {
        let mut next = cur.clone();
        for i in 0..cur.size() {
            for k in cur.row(i).ones() {
                next.rows[i].union_with(cur.row(k));
            }
        }
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Closed tables for every agent.
pub fn oracle_tables(u: &Universe, t: CallType) -> Vec<PairTable> {
    AgentId::all(u.n_agents()).map(|a| oracle_closure(&oracle_approx_table(u, t, a))).collect()
}

/// Truth of `f` at member `idx`, with knowledge read off `tables[a]`.
pub fn oracle_eval(f: &Formula, idx: usize, u: &Universe, d: Direction, tables: &[PairTable]) -> bool {
    match f {
        Formula::Familiar(a, s) => {
            let init = initial_situation(u.n_agents()).expect("valid agent count");
            apply_sequence(&init, &u.sequence(idx), d).secrets_of(*a).contains(*s)
        }
        Formula::Not(g) => !oracle_eval(g, idx, u, d, tables),
        Formula::And(l, r) => oracle_eval(l, idx, u, d, tables) && oracle_eval(r, idx, u, d, tables),
        Formula::Or(l, r) => oracle_eval(l, idx, u, d, tables) || oracle_eval(r, idx, u, d, tables),
        Formula::Know(a, g) => (0..u.len())
            .filter(|&j| tables[a.index()].get(idx, j))
            .all(|j| oracle_eval(g, j, u, d, tables)),
    }
}
