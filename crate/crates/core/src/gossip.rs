//! Agents, secrets, calls and the informational effect of call sequences.
//!
//! A secret is identified with the agent that owns it, so a set of secrets
//! is a bit set indexed by owner. Calls are ordered pairs even for
//! push-pull: `a<>b` and `b<>a` are distinct sequence elements although
//! they act identically on situations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported agent count (one lowercase letter per agent).
pub const MAX_AGENTS: usize = 26;

pub(crate) fn check_agent_count(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::TooFewAgents(n));
    }
    if n > MAX_AGENTS {
        return Err(Error::TooManyAgents { got: n, max: MAX_AGENTS });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(u8);

impl AgentId {
    pub fn new(index: usize) -> Result<Self> {
        if index >= MAX_AGENTS {
            return Err(Error::TooManyAgents { got: index + 1, max: MAX_AGENTS });
        }
        Ok(AgentId(index as u8))
    }

    /// Panics if `index >= MAX_AGENTS`.
    pub(crate) fn from_index(index: usize) -> Self {
        assert!(index < MAX_AGENTS);
        AgentId(index as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn letter(self) -> char {
        (b'a' + self.0) as char
    }

    /// Parses a lowercase agent letter and checks it against `n`.
    pub fn from_letter(c: char, n: usize) -> Result<Self> {
        if !c.is_ascii_lowercase() {
            return Err(Error::AgentOutOfRange { agent: c.to_string(), n });
        }
        let index = (c as u8 - b'a') as usize;
        if index >= n {
            return Err(Error::AgentOutOfRange { agent: c.to_string(), n });
        }
        Ok(AgentId(index as u8))
    }

    /// All agents `0..n`.
    pub fn all(n: usize) -> impl Iterator<Item = AgentId> + Clone {
        (0..n).map(AgentId::from_index)
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// The secret owned by an agent, shown as the owner's uppercase letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Secret(pub AgentId);

impl Secret {
    pub fn owner(self) -> AgentId {
        self.0
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.letter().to_ascii_uppercase())
    }
}

/// A set of secrets as a bit set over owners.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SecretSet(u32);

impl SecretSet {
    pub const EMPTY: SecretSet = SecretSet(0);

    pub fn singleton(s: Secret) -> Self {
        SecretSet(1 << s.owner().index())
    }

    pub fn contains(self, s: Secret) -> bool {
        self.0 & (1 << s.owner().index()) != 0
    }

    pub fn union(self, other: SecretSet) -> SecretSet {
        SecretSet(self.0 | other.0)
    }

    pub fn is_superset(self, other: SecretSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn secrets(self) -> impl Iterator<Item = Secret> {
        (0..MAX_AGENTS)
            .filter(move |i| self.0 & (1 << i) != 0)
            .map(|i| Secret(AgentId::from_index(i)))
    }

    pub fn bits(self) -> u32 {
        self.0
    }
}

impl fmt::Display for SecretSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.secrets() {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Privacy {
    P1,
    P2,
    P3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    PushPull,
    Push,
    Pull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Observance {
    After,
    Before,
}

impl Privacy {
    pub const ALL: [Privacy; 3] = [Privacy::P1, Privacy::P2, Privacy::P3];

    pub fn name(self) -> &'static str {
        match self {
            Privacy::P1 => "p1",
            Privacy::P2 => "p2",
            Privacy::P3 => "p3",
        }
    }
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::PushPull, Direction::Push, Direction::Pull];

    pub fn name(self) -> &'static str {
        match self {
            Direction::PushPull => "pushpull",
            Direction::Push => "push",
            Direction::Pull => "pull",
        }
    }

    /// Textual call marker: `<>`, `>` or `<`.
    pub fn marker(self) -> &'static str {
        match self {
            Direction::PushPull => "<>",
            Direction::Push => ">",
            Direction::Pull => "<",
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Direction::PushPull => '◇',
            Direction::Push => '▷',
            Direction::Pull => '◁',
        }
    }
}

impl Observance {
    pub const ALL: [Observance; 2] = [Observance::After, Observance::Before];

    pub fn name(self) -> &'static str {
        match self {
            Observance::After => "after",
            Observance::Before => "before",
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Observance::After => 'α',
            Observance::Before => 'β',
        }
    }
}

impl FromStr for Privacy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "p1" | "1" => Ok(Privacy::P1),
            "p2" | "2" => Ok(Privacy::P2),
            "p3" | "3" => Ok(Privacy::P3),
            other => Err(Error::Syntax { pos: 0, msg: format!("unknown privacy `{other}`") }),
        }
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pushpull" | "<>" | "◇" => Ok(Direction::PushPull),
            "push" | ">" | "▷" => Ok(Direction::Push),
            "pull" | "<" | "◁" => Ok(Direction::Pull),
            other => Err(Error::Syntax { pos: 0, msg: format!("unknown direction `{other}`") }),
        }
    }
}

impl FromStr for Observance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "after" | "alpha" | "α" => Ok(Observance::After),
            "before" | "beta" | "β" => Ok(Observance::Before),
            other => Err(Error::Syntax { pos: 0, msg: format!("unknown observance `{other}`") }),
        }
    }
}

/// A (privacy, direction, observance) triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallType {
    pub privacy: Privacy,
    pub direction: Direction,
    pub observance: Observance,
}

impl CallType {
    pub const fn new(privacy: Privacy, direction: Direction, observance: Observance) -> Self {
        CallType { privacy, direction, observance }
    }

    /// The 18 call types, privacy-major.
    pub fn all() -> Vec<CallType> {
        let mut out = Vec::with_capacity(18);
        for p in Privacy::ALL {
            for d in Direction::ALL {
                for o in Observance::ALL {
                    out.push(CallType::new(p, d, o));
                }
            }
        }
        out
    }

    /// Flag form, e.g. `p2,pushpull,after`.
    pub fn flag(self) -> String {
        format!("{},{},{}", self.privacy.name(), self.direction.name(), self.observance.name())
    }
}

impl fmt::Display for CallType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            self.privacy.name(),
            self.direction.symbol(),
            self.observance.symbol()
        )
    }
}

/// Accepts `p1,pushpull,after` as well as whitespace separated parts and
/// the symbolic `(p1,◇,α)` form.
impl FromStr for CallType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parts: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .collect();
        if parts.len() != 3 {
            return Err(Error::Syntax {
                pos: 0,
                msg: format!("call type `{s}` must have three parts: privacy, direction, observance"),
            });
        }
        Ok(CallType::new(parts[0].parse()?, parts[1].parse()?, parts[2].parse()?))
    }
}

/// A call from `caller` to `callee`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Call {
    caller: AgentId,
    callee: AgentId,
}

impl Call {
    pub fn new(caller: AgentId, callee: AgentId) -> Result<Self> {
        if caller == callee {
            return Err(Error::SelfCall(caller.to_string()));
        }
        Ok(Call { caller, callee })
    }

    pub fn caller(self) -> AgentId {
        self.caller
    }

    pub fn callee(self) -> AgentId {
        self.callee
    }

    pub fn involves(self, a: AgentId) -> bool {
        self.caller == a || self.callee == a
    }

    /// The other participant, if `a` takes part.
    pub fn partner(self, a: AgentId) -> Option<AgentId> {
        if self.caller == a {
            Some(self.callee)
        } else if self.callee == a {
            Some(self.caller)
        } else {
            None
        }
    }

    /// Whether the call can change `a`'s secrets under direction `d`.
    pub fn affects(self, a: AgentId, d: Direction) -> bool {
        match d {
            Direction::PushPull => self.involves(a),
            Direction::Push => self.callee == a,
            Direction::Pull => self.caller == a,
        }
    }

    pub fn display(self, d: Direction) -> String {
        format!("{}{}{}", self.caller, d.marker(), self.callee)
    }

    /// All `n(n-1)` calls in canonical order.
    pub fn all(n: usize) -> Vec<Call> {
        let mut out = Vec::with_capacity(n * (n - 1));
        for x in AgentId::all(n) {
            for y in AgentId::all(n) {
                if x != y {
                    out.push(Call { caller: x, callee: y });
                }
            }
        }
        out
    }

    /// Position of this call in [`Call::all`].
    pub fn index(self, n: usize) -> usize {
        let (x, y) = (self.caller.index(), self.callee.index());
        x * (n - 1) + if y > x { y - 1 } else { y }
    }

    pub fn from_index(i: usize, n: usize) -> Call {
        let x = i / (n - 1);
        let mut y = i % (n - 1);
        if y >= x {
            y += 1;
        }
        Call { caller: AgentId::from_index(x), callee: AgentId::from_index(y) }
    }
}

/// `a` takes part in `c`.
pub fn involved(a: AgentId, c: Call) -> bool {
    c.involves(a)
}

/// `c` can change `a`'s secrets under direction `d`.
pub fn affected(a: AgentId, c: Call, d: Direction) -> bool {
    c.affects(a, d)
}

/// A finite sequence of calls; the empty sequence is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CallSequence(Vec<Call>);

impl CallSequence {
    pub fn empty() -> Self {
        CallSequence(Vec::new())
    }

    pub fn new(calls: Vec<Call>) -> Self {
        CallSequence(calls)
    }

    pub fn calls(&self) -> &[Call] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> Option<Call> {
        self.0.last().copied()
    }

    pub fn push(&mut self, c: Call) {
        self.0.push(c);
    }

    pub fn extended(&self, c: Call) -> CallSequence {
        let mut v = self.0.clone();
        v.push(c);
        CallSequence(v)
    }

    pub fn prefix(&self, len: usize) -> CallSequence {
        CallSequence(self.0[..len].to_vec())
    }

    /// Highest agent index mentioned plus one.
    pub fn agent_span(&self) -> usize {
        self.0
            .iter()
            .map(|c| c.caller.index().max(c.callee.index()) + 1)
            .max()
            .unwrap_or(0)
    }

    /// Calls involving `a`, with their positions.
    pub fn projection(&self, a: AgentId) -> Vec<(usize, Call)> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, c)| c.involves(a))
            .map(|(i, c)| (i, *c))
            .collect()
    }

    /// Renders as `a<>b;b<>c`, or `ε` when empty.
    pub fn display(&self, d: Direction) -> String {
        if self.0.is_empty() {
            return "ε".to_string();
        }
        self.0.iter().map(|c| c.display(d)).collect::<Vec<_>>().join(";")
    }

    /// Parses `;`-separated calls, requiring every marker to match `d`.
    pub fn parse(text: &str, n: usize, d: Direction) -> Result<Self> {
        let (seq, dir) = Self::parse_any(text, n)?;
        if let Some(found) = dir {
            if found != d {
                return Err(Error::DirectionMismatch {
                    call: text.trim().to_string(),
                    expected: d.name().to_string(),
                });
            }
        }
        Ok(seq)
    }

    /// Parses a sequence and reports the direction its markers use. Mixed
    /// markers are rejected.
    pub fn parse_any(text: &str, n: usize) -> Result<(Self, Option<Direction>)> {
        let chars: Vec<(usize, char)> =
            text.char_indices().filter(|(_, c)| !c.is_whitespace()).collect();
        let body: String = chars.iter().map(|(_, c)| *c).collect();
        if body.is_empty() || body == "ε" || body == "eps" {
            return Ok((CallSequence::empty(), None));
        }
        let mut calls = Vec::new();
        let mut dir: Option<Direction> = None;
        let mut i = 0;
        let pos = |i: usize| chars.get(i).map(|(p, _)| *p).unwrap_or(text.len());
        while i < chars.len() {
            let caller_c = chars[i].1;
            let caller = AgentId::from_letter(caller_c, n).map_err(|e| match e {
                Error::AgentOutOfRange { .. } if !caller_c.is_ascii_lowercase() => Error::Syntax {
                    pos: pos(i),
                    msg: format!("expected agent letter, found `{caller_c}`"),
                },
                other => other,
            })?;
            i += 1;
            let (d, width) = match (chars.get(i).map(|x| x.1), chars.get(i + 1).map(|x| x.1)) {
                (Some('<'), Some('>')) => (Direction::PushPull, 2),
                (Some('>'), _) => (Direction::Push, 1),
                (Some('<'), _) => (Direction::Pull, 1),
                _ => {
                    return Err(Error::Syntax {
                        pos: pos(i),
                        msg: "expected `<>`, `>` or `<`".to_string(),
                    })
                }
            };
            i += width;
            let callee_c = chars.get(i).map(|x| x.1).ok_or(Error::Syntax {
                pos: pos(i),
                msg: "expected callee".to_string(),
            })?;
            if !callee_c.is_ascii_lowercase() {
                return Err(Error::Syntax {
                    pos: pos(i),
                    msg: format!("expected agent letter, found `{callee_c}`"),
                });
            }
            let callee = AgentId::from_letter(callee_c, n)?;
            i += 1;
            match dir {
                None => dir = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::Syntax {
                        pos: pos(i - 1),
                        msg: "mixed call directions in one sequence".to_string(),
                    })
                }
                _ => {}
            }
            calls.push(Call::new(caller, callee)?);
            if i < chars.len() {
                if chars[i].1 != ';' {
                    return Err(Error::Syntax {
                        pos: pos(i),
                        msg: format!("expected `;`, found `{}`", chars[i].1),
                    });
                }
                i += 1;
                if i == chars.len() {
                    return Err(Error::Syntax { pos: pos(i), msg: "trailing `;`".to_string() });
                }
            }
        }
        Ok((CallSequence(calls), dir))
    }
}

/// Per-agent secret sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GossipSituation {
    sets: Vec<SecretSet>,
}

impl GossipSituation {
    pub fn from_sets(sets: Vec<SecretSet>) -> Self {
        GossipSituation { sets }
    }

    pub fn agents(&self) -> usize {
        self.sets.len()
    }

    pub fn secrets_of(&self, a: AgentId) -> SecretSet {
        self.sets[a.index()]
    }

    pub fn sets(&self) -> &[SecretSet] {
        &self.sets
    }

    pub fn is_expert(&self, a: AgentId) -> bool {
        self.sets[a.index()].len() == self.sets.len()
    }

    pub fn all_experts(&self) -> bool {
        AgentId::all(self.sets.len()).all(|a| self.is_expert(a))
    }

    /// In-place form of [`apply_call`].
    pub fn apply(&mut self, c: Call, d: Direction) {
        let (x, y) = (c.caller.index(), c.callee.index());
        let merged = self.sets[x].union(self.sets[y]);
        match d {
            Direction::PushPull => {
                self.sets[x] = merged;
                self.sets[y] = merged;
            }
            Direction::Push => self.sets[y] = merged,
            Direction::Pull => self.sets[x] = merged,
        }
    }
}

/// Dotted notation, e.g. `AB.AB.C`.
impl fmt::Display for GossipSituation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.sets.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Every agent knows only its own secret.
pub fn initial_situation(n: usize) -> Result<GossipSituation> {
    check_agent_count(n)?;
    Ok(GossipSituation {
        sets: AgentId::all(n).map(|a| SecretSet::singleton(Secret(a))).collect(),
    })
}

pub fn apply_call(s: &GossipSituation, c: Call, d: Direction) -> GossipSituation {
    let mut out = s.clone();
    out.apply(c, d);
    out
}

/// Left fold of [`apply_call`]; privacy and observance play no role.
pub fn apply_sequence(s: &GossipSituation, seq: &CallSequence, d: Direction) -> GossipSituation {
    let mut out = s.clone();
    for &c in seq.calls() {
        out.apply(c, d);
    }
    out
}
