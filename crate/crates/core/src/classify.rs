//! Bounded verification of how the 18 indistinguishability relations
//! include one another, and of truth preservation between call types.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gossip::{AgentId, CallSequence, CallType, Direction, Observance, Privacy};
use crate::indist::{build_equivalence_index, EquivalenceIndex, IndexConfig};
use crate::logic::{Formula, GossipModel};
use crate::universe::Universe;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Verdict {
    Equal,
    LeftStrictSubset,
    RightStrictSubset,
    Incomparable,
}

impl Verdict {
    pub fn swapped(self) -> Verdict {
        match self {
            Verdict::LeftStrictSubset => Verdict::RightStrictSubset,
            Verdict::RightStrictSubset => Verdict::LeftStrictSubset,
            v => v,
        }
    }

    fn from_inclusions(left_in_right: bool, right_in_left: bool) -> Verdict {
        match (left_in_right, right_in_left) {
            (true, true) => Verdict::Equal,
            (true, false) => Verdict::LeftStrictSubset,
            (false, true) => Verdict::RightStrictSubset,
            (false, false) => Verdict::Incomparable,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Equal => "equal",
            Verdict::LeftStrictSubset => "left strictly included in right",
            Verdict::RightStrictSubset => "right strictly included in left",
            Verdict::Incomparable => "incomparable",
        })
    }
}

/// A pair related under one type and not under the other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub agent: String,
    #[serde(rename = "seqA")]
    pub seq_a: String,
    #[serde(rename = "seqB")]
    pub seq_b: String,
    /// `"left-not-right"` or `"right-not-left"`.
    pub direction_of_failure: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComparisonResult {
    pub pair: [String; 2],
    pub verdict: Verdict,
    pub bound: usize,
    pub witnesses: Vec<Witness>,
}

fn find_witness(sub: &EquivalenceIndex, sup: &EquivalenceIndex, label: &str) -> Option<Witness> {
    let u = sub.universe();
    AgentId::all(u.n_agents()).find_map(|a| {
        let (i, j) = sub.partition(a).find_unrefined_pair(sup.partition(a))?;
        // Seqs print in the left type's notation.
        let d = sub.calltype().direction;
        Some(Witness {
            agent: a.to_string(),
            seq_a: u.sequence(i).display(d),
            seq_b: u.sequence(j).display(d),
            direction_of_failure: label.into(),
        })
    })
}

/// Compares two indices over the same universe.
pub fn compare_indices(left: &EquivalenceIndex, right: &EquivalenceIndex) -> ComparisonResult {
    assert!(Arc::ptr_eq(left.universe(), right.universe()) || left.universe().len() == right.universe().len());
    let lr = find_witness(left, right, "left-not-right");
    let rl = find_witness(right, left, "right-not-left");
    let verdict = Verdict::from_inclusions(lr.is_none(), rl.is_none());
    ComparisonResult {
        pair: [left.calltype().to_string(), right.calltype().to_string()],
        verdict,
        bound: left.bound(),
        witnesses: lr.into_iter().chain(rl).collect(),
    }
}

pub fn compare_types(t1: CallType, t2: CallType, n: usize, bound: usize, cfg: &IndexConfig) -> Result<ComparisonResult> {
    let u = Arc::new(Universe::new(n, bound)?);
    let (a, b) = rayon::join(
        || build_equivalence_index(u.clone(), t1, cfg),
        || build_equivalence_index(u.clone(), t2, cfg),
    );
    Ok(compare_indices(&a?, &b?))
}

/// The inclusion preorder between call types, as drawn for three agents and
/// for more than three.
#[derive(Debug, Clone)]
pub struct ExpectedPreorder {
    n: usize,
    le: HashSet<(CallType, CallType)>,
}

fn ct(p: Privacy, d: Direction, o: Observance) -> CallType {
    CallType::new(p, d, o)
}

impl ExpectedPreorder {
    pub fn for_agents(n: usize) -> Self {
        use Observance::{After as A, Before as B};
        use Privacy::{P1, P2, P3};
        let mut arrows: Vec<(CallType, CallType)> = Vec::new();
        let p1: Vec<CallType> = CallType::all().into_iter().filter(|t| t.privacy == P1).collect();
        for &x in &p1 {
            for &y in &p1 {
                arrows.push((x, y));
            }
        }
        let to_all = |arrows: &mut Vec<_>, from: &[CallType], to: CallType| {
            for &f in from {
                arrows.push((f, to));
            }
        };
        for d in Direction::ALL {
            if n == 3 && d == Direction::PushPull {
                let (p2a, p2b) = (ct(P2, d, A), ct(P2, d, B));
                arrows.extend([(p2a, p2b), (p2b, p2a)]);
                to_all(&mut arrows, &p1, p2b);
                arrows.push((p2b, ct(P3, d, B)));
                arrows.push((ct(P3, d, B), ct(P3, d, A)));
                continue;
            }
            to_all(&mut arrows, &p1, ct(P2, d, B));
            arrows.extend([
                (ct(P2, d, B), ct(P3, d, B)),
                (ct(P2, d, B), ct(P2, d, A)),
                (ct(P3, d, B), ct(P3, d, A)),
                (ct(P2, d, A), ct(P3, d, A)),
            ]);
            if n == 3 {
                let p2d = ct(P2, Direction::PushPull, B);
                arrows.extend([(ct(P2, d, B), p2d), (ct(P2, d, A), p2d)]);
            }
        }
        let types = CallType::all();
        let mut le: HashSet<(CallType, CallType)> = types.iter().map(|&t| (t, t)).collect();
        le.extend(arrows);
        loop {
            let extra: Vec<_> = le
                .iter()
                .flat_map(|&(x, y)| le.iter().filter(move |&&(y2, _)| y2 == y).map(move |&(_, z)| (x, z)))
                .filter(|p| !le.contains(p))
                .collect();
            if extra.is_empty() {
                break;
            }
            le.extend(extra);
        }
        ExpectedPreorder { n, le }
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    /// `~^t1 ⊆ ~^t2` for every agent.
    pub fn included(&self, t1: CallType, t2: CallType) -> bool {
        self.le.contains(&(t1, t2))
    }

    pub fn verdict(&self, t1: CallType, t2: CallType) -> Verdict {
        Verdict::from_inclusions(self.included(t1, t2), self.included(t2, t1))
    }
}

/// An indistinguishability claim from the classification proofs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WitnessFixture {
    pub label: &'static str,
    pub n: usize,
    pub calltype: CallType,
    pub agent: char,
    pub seq_a: String,
    pub seq_b: String,
    pub expected: bool,
}

impl WitnessFixture {
    pub fn bound(&self) -> usize {
        self.seq_a.split(';').filter(|s| !s.is_empty()).count().max(self.seq_b.split(';').filter(|s| !s.is_empty()).count())
    }
}

/// Rewrites a sequence written with `◇` markers (`<>`) into direction `d`.
fn in_direction(seq: &str, d: Direction) -> String {
    seq.replace("<>", d.marker())
}

pub fn witness_fixtures() -> Vec<WitnessFixture> {
    use Direction::{Pull, Push, PushPull};
    use Observance::{After as A, Before as B};
    use Privacy::{P1, P2, P3};
    let mut out = Vec::new();
    let mut add = |label, n, t: CallType, agent, a: &str, b: &str, expected| {
        out.push(WitnessFixture {
            label,
            n,
            calltype: t,
            agent,
            seq_a: in_direction(a, t.direction),
            seq_b: in_direction(b, t.direction),
            expected,
        });
    };
    for d in Direction::ALL {
        for o in Observance::ALL {
            add("outside order hidden", 3, ct(P2, d, o), 'a', "b<>c", "c<>b", true);
            add("outside order hidden", 3, ct(P1, d, o), 'a', "b<>c", "c<>b", false);
            add("outside call hidden", 3, ct(P3, d, o), 'a', "b<>c", "", true);
            add("outside call hidden", 3, ct(P2, d, o), 'a', "b<>c", "", false);
        }
    }
    // Observing only the merged result hides what the partner brought.
    add("after hides partner", 4, ct(P2, PushPull, A), 'a', "a<>b;a<>c;b<>c;a<>b", "a<>b;a<>c;c<>d;a<>b", true);
    add("after hides partner", 4, ct(P2, PushPull, B), 'a', "a<>b;a<>c;b<>c;a<>b", "a<>b;a<>c;c<>d;a<>b", false);
    add("after hides partner", 4, ct(P2, PushPull, A), 'a', "a<>c;b<>c;a<>b", "a<>c;c<>d;a<>b", true);
    add("after hides partner", 4, ct(P2, PushPull, B), 'a', "a<>c;b<>c;a<>b", "a<>c;c<>d;a<>b", false);
    add("after hides partner", 3, ct(P2, Push, A), 'a', "c>a;b>c;b>a", "c>a;c>b;b>a", true);
    add("after hides partner", 3, ct(P2, Push, B), 'a', "c>a;b>c;b>a", "c>a;c>b;b>a", false);
    add("after hides partner", 3, ct(P2, Pull, A), 'a', "a<c;c<b;a<b", "a<c;b<c;a<b", true);
    add("after hides partner", 3, ct(P2, Pull, B), 'a', "a<c;c<b;a<b", "a<c;b<c;a<b", false);
    for o in Observance::ALL {
        add("exchange hides direction", 3, ct(P2, PushPull, o), 'a', "c<>b;c<>a", "b<>c;c<>a", true);
        add("exchange hides direction", 3, ct(P2, Push, o), 'a', "c>b;c>a", "b>c;c>a", false);
        add("exchange hides direction", 3, ct(P2, PushPull, o), 'a', "b<>c;a<>c", "c<>b;a<>c", true);
        add("exchange hides direction", 3, ct(P2, Pull, o), 'a', "b<c;a<c", "c<b;a<c", false);
    }
    add("after hides outside calls", 3, ct(P3, PushPull, A), 'a', "a<>c;a<>b", "a<>c;b<>c;a<>b", true);
    add("after hides outside calls", 3, ct(P3, PushPull, B), 'a', "a<>c;a<>b", "a<>c;b<>c;a<>b", false);
    add("after hides outside calls", 3, ct(P3, Push, A), 'a', "c>a;b>a", "c>a;c>b;b>a", true);
    add("after hides outside calls", 3, ct(P3, Push, B), 'a', "c>a;b>a", "c>a;c>b;b>a", false);
    add("after hides outside calls", 3, ct(P3, Pull, A), 'a', "a<c;a<b", "a<c;b<c;a<b", true);
    add("after hides outside calls", 3, ct(P3, Pull, B), 'a', "a<c;a<b", "a<c;b<c;a<b", false);

    // Directions are pairwise incomparable with more than three agents.
    for p in [P2, P3] {
        for o in Observance::ALL {
            add("directions incomparable", 4, ct(p, Pull, o), 'a', "b<c;c<a", "b<d;c<a", true);
            add("directions incomparable", 4, ct(p, PushPull, o), 'a', "b<>c;c<>a", "b<>d;c<>a", false);
            add("directions incomparable", 4, ct(p, PushPull, o), 'a', "b<>c;a<>c", "c<>b;a<>c", true);
            add("directions incomparable", 4, ct(p, Pull, o), 'a', "b<c;a<c", "c<b;a<c", false);
            add("directions incomparable", 4, ct(p, Push, o), 'a', "c>b;a>c", "d>b;a>c", true);
            add("directions incomparable", 4, ct(p, PushPull, o), 'a', "c<>b;a<>c", "d<>b;a<>c", false);
            add("directions incomparable", 4, ct(p, PushPull, o), 'a', "c<>b;c<>a", "b<>c;c<>a", true);
            add("directions incomparable", 4, ct(p, Push, o), 'a', "c>b;c>a", "b>c;c>a", false);
            add("directions incomparable", 4, ct(p, Push, o), 'a', "b>c;a>c", "c>b;a>c", true);
            add("directions incomparable", 4, ct(p, Pull, o), 'a', "b<c;a<c", "c<b;a<c", false);
            add("directions incomparable", 4, ct(p, Pull, o), 'a', "c<b;c<a", "b<c;c<a", true);
            add("directions incomparable", 4, ct(p, Push, o), 'a', "c>b;c>a", "b>c;c>a", false);
        }
    }
    for o in Observance::ALL {
        add("directions incomparable", 4, ct(P3, Pull, o), 'a', "b<c;c<a", "c<a", true);
        add("directions incomparable", 4, ct(P3, PushPull, o), 'a', "b<>c;c<>a", "c<>a", false);
        add("directions incomparable", 4, ct(P3, Push, o), 'a', "c>b;a>c", "a>c", true);
        add("directions incomparable", 4, ct(P3, PushPull, o), 'a', "c<>b;a<>c", "a<>c", false);
    }

    // Three agents: exchange with after-observance against the one-way p3 types.
    add("p2 exchange vs p3 one-way", 3, ct(P2, PushPull, A), 'a', "c<>b;c<>a", "b<>c;c<>a", true);
    add("p2 exchange vs p3 one-way", 3, ct(P3, Push, A), 'a', "c>b;c>a", "b>c;c>a", false);
    add("p2 exchange vs p3 one-way", 3, ct(P2, PushPull, A), 'a', "b<>c;a<>c", "c<>b;a<>c", true);
    add("p2 exchange vs p3 one-way", 3, ct(P3, Pull, A), 'a', "b<c;a<c", "c<b;a<c", false);
    for d in Direction::ALL {
        add("p2 exchange vs p3 one-way", 3, ct(P3, d, A), 'a', "b<>c", "", true);
    }
    add("p2 exchange vs p3 one-way", 3, ct(P2, PushPull, A), 'a', "b<>c", "", false);

    // p2 before-observance against p3 after-observance, more than three agents.
    add("p2 before vs p3 after", 4, ct(P2, Push, B), 'a', "c>b;a>b", "b>c;a>b", true);
    add("p2 before vs p3 after", 4, ct(P3, Pull, A), 'a', "c<b;a<b", "b<c;a<b", false);
    add("p2 before vs p3 after", 4, ct(P2, Push, B), 'a', "c>b;a>c", "d>b;a>c", true);
    add("p2 before vs p3 after", 4, ct(P3, PushPull, A), 'a', "c<>b;a<>c", "d<>b;a<>c", false);
    add("p2 before vs p3 after", 4, ct(P2, Pull, B), 'a', "b<c;b<a", "c<b;b<a", true);
    add("p2 before vs p3 after", 4, ct(P3, Push, A), 'a', "b>c;b>a", "c>b;b>a", false);
    add("p2 before vs p3 after", 4, ct(P2, Pull, B), 'a', "b<c;c<a", "b<d;c<a", true);
    add("p2 before vs p3 after", 4, ct(P3, PushPull, A), 'a', "b<>c;c<>a", "b<>d;c<>a", false);
    add("p2 before vs p3 after", 4, ct(P2, PushPull, B), 'a', "c<>b;c<>a", "b<>c;c<>a", true);
    add("p2 before vs p3 after", 4, ct(P3, Push, A), 'a', "c>b;c>a", "b>c;c>a", false);
    add("p2 before vs p3 after", 4, ct(P2, PushPull, B), 'a', "b<>c;a<>c", "c<>b;a<>c", true);
    add("p2 before vs p3 after", 4, ct(P3, Pull, A), 'a', "b<c;a<c", "c<b;a<c", false);
    for d in Direction::ALL {
        add("p2 before vs p3 after", 4, ct(P3, d, A), 'a', "b<>c", "", true);
        add("p2 before vs p3 after", 4, ct(P2, d, B), 'a', "b<>c", "", false);
    }

    // p2 after-observance against p3 before-observance, more than three agents.
    add("p2 after vs p3 before", 4, ct(P2, PushPull, A), 'a', "c<>b;c<>a", "b<>c;c<>a", true);
    add("p2 after vs p3 before", 4, ct(P3, Push, B), 'a', "c>b;c>a", "b>c;c>a", false);
    add("p2 after vs p3 before", 4, ct(P2, PushPull, A), 'a', "b<>c;a<>c", "c<>b;a<>c", true);
    add("p2 after vs p3 before", 4, ct(P3, Pull, B), 'a', "b<c;a<c", "c<b;a<c", false);
    for d in Direction::ALL {
        add("p2 after vs p3 before", 4, ct(P3, d, B), 'a', "b<>c", "", true);
        add("p2 after vs p3 before", 4, ct(P2, d, A), 'a', "b<>c", "", false);
    }

    // Worked examples on four agents.
    for o in Observance::ALL {
        add("four-agent exchange", 4, ct(P1, PushPull, o), 'a', "a<>b;b<>c", "a<>b;c<>d", false);
        add("four-agent exchange", 4, ct(P2, PushPull, o), 'a', "a<>b;b<>c", "a<>b;c<>d", true);
        add("four-agent exchange", 4, ct(P3, PushPull, o), 'a', "a<>b;b<>c", "a<>b;c<>d", true);
        add("four-agent exchange", 4, ct(P2, PushPull, o), 'a', "a<>b;b<>c", "a<>b;c<>d;b<>c", false);
        add("four-agent exchange", 4, ct(P3, PushPull, o), 'a', "a<>b;b<>c", "a<>b;c<>d;b<>c", true);
        add("four-agent push", 4, ct(P2, Push, o), 'b', "d>c;b>c", "c>d;b>c", true);
        add("four-agent push", 4, ct(P2, Push, o), 'c', "d>c;b>c", "c>d;b>c", false);
    }
    add("pull observance", 3, ct(P2, Pull, A), 'a', "a<c;b<c;a<b", "a<c;c<b;a<b", true);
    add("pull observance", 3, ct(P2, Pull, B), 'a', "a<c;b<c;a<b", "a<c;c<b;a<b", false);
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct FixtureOutcome {
    pub fixture: WitnessFixture,
    pub bound: usize,
    pub observed: bool,
}

impl FixtureOutcome {
    pub fn passed(&self) -> bool {
        self.observed == self.fixture.expected
    }
}

fn fixture_observed(f: &WitnessFixture, idx: &EquivalenceIndex) -> Result<bool> {
    let n = f.n;
    let (a, _) = CallSequence::parse_any(&f.seq_a, n)?;
    let (b, _) = CallSequence::parse_any(&f.seq_b, n)?;
    let agent = AgentId::from_letter(f.agent, n)?;
    crate::indist::indistinguishable(&a, &b, agent, idx)
}

/// Evaluates every fixture at the bound of its longer sequence.
pub fn check_fixtures(fixtures: &[WitnessFixture], cfg: &IndexConfig) -> Result<Vec<FixtureOutcome>> {
    let mut keys: Vec<(usize, usize, CallType)> = fixtures.iter().map(|f| (f.n, f.bound(), f.calltype)).collect();
    keys.sort_by_key(|&(n, b, t)| (n, b, t.flag()));
    keys.dedup();
    let universes: HashMap<(usize, usize), Arc<Universe>> = keys
        .iter()
        .map(|&(n, b, _)| (n, b))
        .collect::<HashSet<_>>()
        .into_iter()
        .map(|(n, b)| Ok(((n, b), Arc::new(Universe::new(n, b)?))))
        .collect::<Result<_>>()?;
    let indices: HashMap<(usize, usize, CallType), EquivalenceIndex> = keys
        .par_iter()
        .map(|&(n, b, t)| Ok(((n, b, t), build_equivalence_index(universes[&(n, b)].clone(), t, cfg)?)))
        .collect::<Result<_>>()?;
    fixtures
        .iter()
        .map(|f| {
            let idx = &indices[&(f.n, f.bound(), f.calltype)];
            Ok(FixtureOutcome { fixture: f.clone(), bound: f.bound(), observed: fixture_observed(f, idx)? })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub comparison: ComparisonResult,
    pub expected: Verdict,
    /// Equal at this bound where a strict relation is expected; a larger
    /// bound may separate them.
    pub bound_artifact: bool,
}

impl PairReport {
    pub fn matches(&self) -> bool {
        self.comparison.verdict == self.expected
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PreorderReport {
    pub agents: usize,
    pub bound: usize,
    pub pairs: Vec<PairReport>,
    pub fixtures: Vec<FixtureOutcome>,
    /// Fixtures whose agent count differs or whose sequences exceed the bound.
    pub fixtures_skipped: usize,
}

impl PreorderReport {
    pub fn deviations(&self) -> impl Iterator<Item = &PairReport> {
        self.pairs.iter().filter(|p| !p.matches())
    }

    pub fn failed_fixtures(&self) -> impl Iterator<Item = &FixtureOutcome> {
        self.fixtures.iter().filter(|f| !f.passed())
    }

    pub fn ok(&self) -> bool {
        self.deviations().next().is_none() && self.failed_fixtures().next().is_none()
    }
}

/// Builds all 18 indices, compares every unordered pair of distinct types,
/// and checks the applicable fixtures against the same indices.
pub fn verify_preorder(n: usize, bound: usize, cfg: &IndexConfig) -> Result<PreorderReport> {
    let u = Arc::new(Universe::new(n, bound)?);
    let types = CallType::all();
    let indices: Vec<EquivalenceIndex> = types
        .par_iter()
        .map(|&t| build_equivalence_index(u.clone(), t, cfg))
        .collect::<Result<_>>()?;
    let expected = ExpectedPreorder::for_agents(n);
    let pairs: Vec<(usize, usize)> =
        (0..types.len()).flat_map(|i| (i + 1..types.len()).map(move |j| (i, j))).collect();
    let reports = pairs
        .par_iter()
        .map(|&(i, j)| {
            let comparison = compare_indices(&indices[i], &indices[j]);
            let exp = expected.verdict(types[i], types[j]);
            let bound_artifact = comparison.verdict == Verdict::Equal && exp != Verdict::Equal;
            PairReport { comparison, expected: exp, bound_artifact }
        })
        .collect();
    let all = witness_fixtures();
    let applicable: Vec<&WitnessFixture> = all.iter().filter(|f| f.n == n && f.bound() <= bound).collect();
    let fixtures = applicable
        .iter()
        .map(|f| {
            let idx = &indices[types.iter().position(|&t| t == f.calltype).expect("one of the 18")];
            Ok(FixtureOutcome { fixture: (*f).clone(), bound, observed: fixture_observed(f, idx)? })
        })
        .collect::<Result<_>>()?;
    Ok(PreorderReport {
        agents: n,
        bound,
        pairs: reports,
        fixtures,
        fixtures_skipped: all.len() - applicable.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fragment {
    L1Plus,
    L2Plus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub formula: String,
    pub sequence: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PreservationReport {
    pub left: String,
    pub right: String,
    pub fragment: Fragment,
    pub bound: usize,
    /// Distinct pairs of truth sets reached by the enumeration.
    pub exhaustive_classes: usize,
    pub random_samples: usize,
    pub violations: Vec<Violation>,
}

/// A formula with its truth sets in the two models.
#[derive(Clone)]
struct Judged {
    formula: Formula,
    left: FixedBitSet,
    right: FixedBitSet,
}

/// Sequences where `f` holds in `right` but not in `left`.
fn violations_of(j: &Judged, u: &Universe, d: Direction) -> Option<Violation> {
    let mut bad = j.right.clone();
    bad.difference_with(&j.left);
    bad.ones().next().map(|i| Violation { formula: j.formula.to_string(), sequence: u.sequence(i).display(d) })
}

/// Checks "true on the right implies true on the left" for each formula at
/// every member. Both models must share a universe.
pub fn preservation_violations(left: &GossipModel, right: &GossipModel, formulas: &[Formula]) -> Result<Vec<Violation>> {
    let d = right.calltype().direction;
    formulas
        .iter()
        .map(|f| {
            let j = Judged { formula: f.clone(), left: left.truth_set(f)?, right: right.truth_set(f)? };
            Ok(violations_of(&j, right.universe(), d))
        })
        .filter_map(|r| r.transpose())
        .collect()
}

const LAYER_CAP: usize = 4096;

/// All fragment formulas up to depth 2, keeping one representative per pair
/// of truth sets. Truth sets are compositional, so the dedup loses nothing.
fn enumerate_fragment(left: &GossipModel, right: &GossipModel, fragment: Fragment) -> Vec<Judged> {
    let n = left.n_agents();
    let mut seen: HashSet<(FixedBitSet, FixedBitSet)> = HashSet::new();
    let mut pool: Vec<Judged> = Vec::new();
    let mut push = |j: Judged, pool: &mut Vec<Judged>| {
        if seen.insert((j.left.clone(), j.right.clone())) {
            pool.push(j);
        }
    };
    for a in AgentId::all(n) {
        for b in AgentId::all(n) {
            let f = Formula::familiar(a, b);
            let (l, r) = (left.truth_set(&f).unwrap(), right.truth_set(&f).unwrap());
            if fragment == Fragment::L1Plus {
                let (mut nl, mut nr) = (l.clone(), r.clone());
                nl.toggle_range(..);
                nr.toggle_range(..);
                push(Judged { formula: Formula::not(f.clone()), left: nl, right: nr }, &mut pool);
            }
            push(Judged { formula: f, left: l, right: r }, &mut pool);
        }
    }
    for _depth in 0..2 {
        let base = pool.clone();
        let cap = base.len().min(LAYER_CAP);
        for x in &base {
            for a in AgentId::all(n) {
                let f = Formula::know(a, x.formula.clone());
                push(Judged { left: left.truth_set(&f).unwrap(), right: right.truth_set(&f).unwrap(), formula: f }, &mut pool);
            }
        }
        for (i, x) in base[..cap].iter().enumerate() {
            for y in &base[i + 1..cap] {
                let (mut l, mut r) = (x.left.clone(), x.right.clone());
                l.intersect_with(&y.left);
                r.intersect_with(&y.right);
                push(Judged { formula: Formula::and(x.formula.clone(), y.formula.clone()), left: l, right: r }, &mut pool);
                let (mut l, mut r) = (x.left.clone(), x.right.clone());
                l.union_with(&y.left);
                r.union_with(&y.right);
                push(Judged { formula: Formula::or(x.formula.clone(), y.formula.clone()), left: l, right: r }, &mut pool);
            }
        }
    }
    pool
}

fn random_formula(rng: &mut StdRng, n: usize, depth: usize, fragment: Fragment) -> Formula {
    let agent = |rng: &mut StdRng| AgentId::new(rng.gen_range(0..n)).expect("in range");
    if depth == 0 || rng.gen_bool(0.2) {
        let f = Formula::familiar(agent(rng), agent(rng));
        return if fragment == Fragment::L1Plus && rng.gen_bool(0.5) { Formula::not(f) } else { f };
    }
    match rng.gen_range(0..3) {
        0 => Formula::know(agent(rng), random_formula(rng, n, depth - 1, fragment)),
        1 => Formula::and(random_formula(rng, n, depth - 1, fragment), random_formula(rng, n, depth - 1, fragment)),
        _ => Formula::or(random_formula(rng, n, depth - 1, fragment), random_formula(rng, n, depth - 1, fragment)),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PreservationQuery {
    pub left: CallType,
    pub right: CallType,
    pub fragment: Fragment,
    pub n: usize,
    pub bound: usize,
    /// Random formulas of depth 3 to 5, on top of the exhaustive layers.
    pub samples: usize,
    pub seed: u64,
}

/// Checks that fragment formulas true under `right` stay true under `left`,
/// for `left ⊆ right`, at every member of the bounded universe.
pub fn check_preservation(q: &PreservationQuery, cfg: &IndexConfig) -> Result<PreservationReport> {
    let PreservationQuery { left: t1, right: t2, fragment, n, bound, samples, seed } = *q;
    if !ExpectedPreorder::for_agents(n).included(t1, t2) {
        return Err(Error::Precondition(format!("{t1} is not included in {t2}")));
    }
    match fragment {
        Fragment::L1Plus if t1.direction != t2.direction => {
            return Err(Error::Precondition("positive-literal preservation needs equal directions".into()))
        }
        Fragment::L2Plus if t1.direction != Direction::PushPull => {
            return Err(Error::Precondition("atomic preservation needs a push-pull left type".into()))
        }
        _ => {}
    }
    let u = Arc::new(Universe::new(n, bound)?);
    let (l, r) = rayon::join(
        || build_equivalence_index(u.clone(), t1, cfg),
        || build_equivalence_index(u.clone(), t2, cfg),
    );
    let (left, right) = (GossipModel::from_index(l?), GossipModel::from_index(r?));
    let pool = enumerate_fragment(&left, &right, fragment);
    let mut violations: Vec<Violation> =
        pool.iter().filter_map(|j| violations_of(j, &u, t2.direction)).collect();
    let mut rng = StdRng::seed_from_u64(seed);
    let random: Vec<Formula> = (0..samples)
        .map(|_| {
            let depth = rng.gen_range(3..=5);
            random_formula(&mut rng, n, depth, fragment)
        })
        .collect();
    violations.extend(preservation_violations(&left, &right, &random)?);
    Ok(PreservationReport {
        left: t1.to_string(),
        right: t2.to_string(),
        fragment,
        bound,
        exhaustive_classes: pool.len(),
        random_samples: samples,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_formula;

    fn t(s: &str) -> CallType {
        s.parse().unwrap()
    }

    #[test]
    fn expected_preorder_shape() {
        let three = ExpectedPreorder::for_agents(3);
        let four = ExpectedPreorder::for_agents(4);
        for x in CallType::all().into_iter().filter(|t| t.privacy == Privacy::P1) {
            for y in CallType::all().into_iter().filter(|t| t.privacy == Privacy::P1) {
                assert_eq!(three.verdict(x, y), Verdict::Equal);
                assert_eq!(four.verdict(x, y), Verdict::Equal);
            }
        }
        assert_eq!(three.verdict(t("p2,pushpull,before"), t("p2,pushpull,after")), Verdict::Equal);
        assert_eq!(four.verdict(t("p2,pushpull,before"), t("p2,pushpull,after")), Verdict::LeftStrictSubset);
        assert_eq!(three.verdict(t("p2,push,before"), t("p2,pull,before")), Verdict::Incomparable);
        assert_eq!(three.verdict(t("p2,push,after"), t("p3,pushpull,after")), Verdict::LeftStrictSubset);
        assert_eq!(four.verdict(t("p2,push,after"), t("p3,pushpull,after")), Verdict::Incomparable);
        assert_eq!(four.verdict(t("p1,pull,after"), t("p3,push,after")), Verdict::LeftStrictSubset);
    }

    #[test]
    fn comparisons_on_three_agents() {
        let cfg = IndexConfig::default();
        let r = compare_types(t("p1,pushpull,after"), t("p2,pushpull,after"), 3, 2, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::LeftStrictSubset);
        assert_eq!(r.witnesses.len(), 1);
        assert_eq!(r.witnesses[0].direction_of_failure, "right-not-left");
        let r = compare_types(t("p2,push,before"), t("p2,pull,before"), 3, 3, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Incomparable);
        assert_eq!(r.witnesses.len(), 2);
        let r = compare_types(t("p2,pushpull,before"), t("p2,pushpull,after"), 3, 3, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Equal);
        assert!(r.witnesses.is_empty());
        let r = compare_types(t("p2,pushpull,before"), t("p2,pushpull,after"), 4, 3, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::LeftStrictSubset);
    }

    #[test]
    fn swapping_swaps_verdicts() {
        let cfg = IndexConfig::default();
        for (x, y) in [("p1,push,after", "p3,push,after"), ("p2,push,before", "p3,pull,after"), ("p3,pull,before", "p2,pull,after")] {
            let a = compare_types(t(x), t(y), 3, 3, &cfg).unwrap();
            let b = compare_types(t(y), t(x), 3, 3, &cfg).unwrap();
            assert_eq!(a.verdict.swapped(), b.verdict);
        }
    }

    #[test]
    fn fixtures_are_well_formed() {
        let all = witness_fixtures();
        for f in &all {
            let (a, da) = CallSequence::parse_any(&f.seq_a, f.n).unwrap();
            let (b, db) = CallSequence::parse_any(&f.seq_b, f.n).unwrap();
            for d in [da, db].into_iter().flatten() {
                assert_eq!(d, f.calltype.direction, "{f:?}");
            }
            assert_eq!(f.bound(), a.len().max(b.len()));
        }
    }

    #[test]
    fn preservation_preconditions_and_negative_control() {
        let cfg = IndexConfig::default();
        let err = check_preservation(&PreservationQuery { left: t("p3,pushpull,after"), right: t("p1,pushpull,after"), fragment: Fragment::L1Plus, n: 3, bound: 2, samples: 0, seed: 1 }, &cfg);
        assert!(matches!(err, Err(Error::Precondition(_))));
        let err = check_preservation(&PreservationQuery { left: t("p1,pushpull,before"), right: t("p3,push,after"), fragment: Fragment::L1Plus, n: 3, bound: 2, samples: 0, seed: 1 }, &cfg);
        assert!(matches!(err, Err(Error::Precondition(_))));
        let err = check_preservation(&PreservationQuery { left: t("p1,push,before"), right: t("p3,push,after"), fragment: Fragment::L2Plus, n: 3, bound: 2, samples: 0, seed: 1 }, &cfg);
        assert!(matches!(err, Err(Error::Precondition(_))));

        let left = GossipModel::build(3, 1, t("p1,pushpull,after"), &cfg).unwrap();
        let right = GossipModel::build(3, 1, t("p1,push,after"), &cfg).unwrap();
        let v = preservation_violations(&left, &right, &[parse_formula("!F[a,b]", 3).unwrap()]).unwrap();
        assert_eq!(v, [Violation { formula: "!F[a,b]".into(), sequence: "a>b".into() }]);
    }

    #[test]
    fn small_preservation_runs_are_clean() {
        let cfg = IndexConfig::default();
        let r = check_preservation(&PreservationQuery { left: t("p1,pushpull,before"), right: t("p3,pushpull,after"), fragment: Fragment::L1Plus, n: 3, bound: 2, samples: 50, seed: 7 }, &cfg).unwrap();
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert!(r.exhaustive_classes > 18);
        let r = check_preservation(&PreservationQuery { left: t("p1,pushpull,before"), right: t("p3,push,after"), fragment: Fragment::L2Plus, n: 3, bound: 2, samples: 50, seed: 7 }, &cfg).unwrap();
        assert!(r.violations.is_empty(), "{:?}", r.violations);
    }
}
