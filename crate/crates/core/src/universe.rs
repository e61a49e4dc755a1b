//! The bounded set of call sequences that every model quantifies over.
//!
//! Members are all sequences of length at most `bound` over `n` agents,
//! indexed canonically: by length first, then lexicographically by call
//! index. The set is prefix-closed and a member's parent always has a
//! smaller index than the member itself.

use crate::error::{Error, Result};
use crate::gossip::{check_agent_count, initial_situation, AgentId, Call, CallSequence, Direction, SecretSet};

/// Upper limit on materialised members.
pub const MAX_MEMBERS: usize = 20_000_000;

const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct Universe {
    n: usize,
    bound: usize,
    calls: Vec<Call>,
    offsets: Vec<usize>,
    parent: Vec<u32>,
    last: Vec<u16>,
    length: Vec<u8>,
}

impl Universe {
    pub fn new(n: usize, bound: usize) -> Result<Self> {
        check_agent_count(n)?;
        let m = n * (n - 1);
        let mut offsets = vec![0usize];
        let mut level = 1usize;
        let mut total = 0usize;
        for _ in 0..=bound {
            total = total
                .checked_add(level)
                .filter(|t| *t <= MAX_MEMBERS)
                .ok_or_else(|| {
                    Error::Precondition(format!(
                        "universe for {n} agents and bound {bound} exceeds {MAX_MEMBERS} members"
                    ))
                })?;
            offsets.push(total);
            level = level.saturating_mul(m);
        }
        let mut parent = Vec::with_capacity(total);
        let mut last = Vec::with_capacity(total);
        let mut length = Vec::with_capacity(total);
        parent.push(NO_PARENT);
        last.push(0);
        length.push(0);
        for k in 1..=bound {
            let prev_start = offsets[k - 1];
            for rel in 0..(offsets[k + 1] - offsets[k]) {
                parent.push((prev_start + rel / m) as u32);
                last.push((rel % m) as u16);
                length.push(k as u8);
            }
        }
        Ok(Universe { n, bound, calls: Call::all(n), offsets, parent, last, length })
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of distinct calls, `n(n-1)`.
    pub fn call_count(&self) -> usize {
        self.calls.len()
    }

    /// `Σ_{k=0..N} m^k`.
    pub fn expected_size(n: usize, bound: usize) -> usize {
        let m = n * (n - 1);
        (0..=bound).map(|k| m.pow(k as u32)).sum()
    }

    pub fn seq_len(&self, idx: usize) -> usize {
        self.length[idx] as usize
    }

    pub fn parent(&self, idx: usize) -> Option<usize> {
        match self.parent[idx] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    pub fn last_call(&self, idx: usize) -> Option<Call> {
        (idx != 0).then(|| self.calls[self.last[idx] as usize])
    }

    /// Index of `idx` extended by `c`, if within the bound.
    pub fn child(&self, idx: usize, c: Call) -> Option<usize> {
        let k = self.seq_len(idx);
        if k >= self.bound {
            return None;
        }
        let rel = idx - self.offsets[k];
        Some(self.offsets[k + 1] + rel * self.calls.len() + c.index(self.n))
    }

    pub fn index_of(&self, seq: &CallSequence) -> Option<usize> {
        if seq.len() > self.bound || seq.agent_span() > self.n {
            return None;
        }
        let mut idx = 0;
        for &c in seq.calls() {
            idx = self.child(idx, c)?;
        }
        Some(idx)
    }

    /// Like [`Universe::index_of`] but reports the sequence when absent.
    pub fn require(&self, seq: &CallSequence, d: Direction) -> Result<usize> {
        self.index_of(seq).ok_or_else(|| Error::NotInUniverse(seq.display(d)))
    }

    pub fn contains(&self, seq: &CallSequence) -> bool {
        self.index_of(seq).is_some()
    }

    pub fn sequence(&self, idx: usize) -> CallSequence {
        let mut calls = Vec::with_capacity(self.seq_len(idx));
        let mut cur = idx;
        while let Some(c) = self.last_call(cur) {
            calls.push(c);
            cur = self.parent[cur] as usize;
        }
        calls.reverse();
        CallSequence::new(calls)
    }

    /// Indices of all prefixes of `idx`, from ε up to `idx` itself.
    pub fn prefix_chain(&self, idx: usize) -> Vec<u32> {
        let mut chain = Vec::with_capacity(self.seq_len(idx) + 1);
        let mut cur = idx;
        loop {
            chain.push(cur as u32);
            match self.parent(cur) {
                Some(p) => cur = p,
                None => break,
            }
        }
        chain.reverse();
        chain
    }

    /// Members of length exactly `k`.
    pub fn level(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    /// Situation reached by every member from the initial situation.
    pub fn situations(&self, d: Direction) -> Situations {
        let n = self.n;
        let init = initial_situation(n).expect("agent count checked at construction");
        let mut sets = Vec::with_capacity(self.len() * n);
        sets.extend_from_slice(init.sets());
        for idx in 1..self.len() {
            let p = self.parent[idx] as usize;
            let c = self.calls[self.last[idx] as usize];
            let base = sets.len();
            sets.extend_from_within(p * n..p * n + n);
            let (x, y) = (base + c.caller().index(), base + c.callee().index());
            let merged = sets[x].union(sets[y]);
            match d {
                Direction::PushPull => {
                    sets[x] = merged;
                    sets[y] = merged;
                }
                Direction::Push => sets[y] = merged,
                Direction::Pull => sets[x] = merged,
            }
        }
        Situations { n, direction: d, sets }
    }
}

/// Secret sets of every agent at every member of a universe.
#[derive(Debug, Clone)]
pub struct Situations {
    n: usize,
    direction: Direction,
    sets: Vec<SecretSet>,
}

impl Situations {
    pub fn get(&self, idx: usize, a: AgentId) -> SecretSet {
        self.sets[idx * self.n + a.index()]
    }

    pub fn row(&self, idx: usize) -> &[SecretSet] {
        &self.sets[idx * self.n..(idx + 1) * self.n]
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn all_experts(&self, idx: usize) -> bool {
        self.row(idx).iter().all(|s| s.len() == self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gossip::apply_sequence;

    #[test]
    fn sizes_match_the_closed_form() {
        for (n, bound) in [(3, 0), (3, 2), (3, 4), (4, 3), (5, 2)] {
            let u = Universe::new(n, bound).unwrap();
            assert_eq!(u.len(), Universe::expected_size(n, bound));
        }
        assert_eq!(Universe::new(3, 4).unwrap().len(), 1555);
        assert_eq!(Universe::new(4, 3).unwrap().len(), 1885);
    }

    #[test]
    fn indices_round_trip_and_parents_precede() {
        let u = Universe::new(3, 3).unwrap();
        for idx in 0..u.len() {
            let seq = u.sequence(idx);
            assert_eq!(u.index_of(&seq), Some(idx));
            assert_eq!(seq.len(), u.seq_len(idx));
            if let Some(p) = u.parent(idx) {
                assert!(p < idx);
                assert_eq!(u.sequence(p), seq.prefix(seq.len() - 1));
            }
            let chain = u.prefix_chain(idx);
            assert_eq!(chain.len(), seq.len() + 1);
            assert_eq!(chain[0], 0);
        }
        assert_eq!(u.sequence(0), CallSequence::empty());
    }

    #[test]
    fn out_of_bound_sequences_are_absent() {
        let u = Universe::new(3, 1).unwrap();
        let seq = CallSequence::parse("a<>b;b<>c", 3, Direction::PushPull).unwrap();
        assert!(!u.contains(&seq));
        let four = CallSequence::parse_any("a<>d", 4).unwrap().0;
        assert!(!u.contains(&four));
    }

    #[test]
    fn situations_agree_with_direct_application() {
        let u = Universe::new(3, 3).unwrap();
        let init = initial_situation(3).unwrap();
        for d in Direction::ALL {
            let sits = u.situations(d);
            for idx in 0..u.len() {
                let direct = apply_sequence(&init, &u.sequence(idx), d);
                assert_eq!(sits.row(idx), direct.sets());
            }
        }
    }
}
