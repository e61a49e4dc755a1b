//! Guarded epistemic protocols, computation trees and the common-knowledge
//! fixpoint.

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gossip::{check_agent_count, AgentId, Call, CallSequence, CallType, Direction};
use crate::logic::{parse_formula_with, to_lhat, Formula, GossipModel};

/// A guard template over two agent variables, `guard -> X<>Y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionSchema {
    vars: (char, char),
    guard: String,
    caller: char,
    callee: char,
    direction: Direction,
}

impl InstructionSchema {
    /// Parses `guard -> call` over the variables `X` and `Y`.
    pub fn parse(text: &str) -> Result<Self> {
        InstructionSchema::parse_with_vars(text, ('X', 'Y'))
    }

    pub fn parse_with_vars(text: &str, vars: (char, char)) -> Result<Self> {
        if vars.0 == vars.1 {
            return Err(Error::InvalidGuard { guard: text.into(), reason: "variables must be distinct".into() });
        }
        let Some(arrow) = text.rfind("->") else {
            return Err(Error::Syntax { pos: text.len(), msg: "expected `-> call` after the guard".into() });
        };
        let (guard, call) = (text[..arrow].trim(), text[arrow + 2..].trim());
        let bad_call = || Error::Syntax {
            pos: arrow + 2,
            msg: format!("call template `{call}` must be one of X<>Y, X>Y, X<Y over the variables"),
        };
        let (l, d, r) = if let Some((l, r)) = call.split_once("<>") {
            (l, Direction::PushPull, r)
        } else if let Some((l, r)) = call.split_once('>') {
            (l, Direction::Push, r)
        } else if let Some((l, r)) = call.split_once('<') {
            (l, Direction::Pull, r)
        } else {
            return Err(bad_call());
        };
        let var = |s: &str| {
            let mut it = s.trim().chars();
            match (it.next(), it.next()) {
                (Some(c), None) if c == vars.0 || c == vars.1 => Some(c),
                _ => None,
            }
        };
        let (Some(caller), Some(callee)) = (var(l), var(r)) else { return Err(bad_call()) };
        if caller == callee {
            return Err(bad_call());
        }
        let schema = InstructionSchema { vars, guard: guard.into(), caller, callee, direction: d };
        // Catch template errors once rather than per pair.
        schema.ground(AgentId::new(0)?, AgentId::new(1)?, 3)?;
        Ok(schema)
    }

    pub fn guard_text(&self) -> &str {
        &self.guard
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    fn ground(&self, x: AgentId, y: AgentId, n: usize) -> Result<Instruction> {
        let pick = |v: char| if v == self.vars.0 { x } else { y };
        let resolve = |c: char| match c {
            c if c == self.vars.0 => Some(x),
            c if c == self.vars.1 => Some(y),
            _ => None,
        };
        let guard = parse_formula_with(&self.guard, n, &resolve)?;
        let call = Call::new(pick(self.caller), pick(self.callee))?;
        if !caller_guard(&guard, call.caller()) {
            return Err(Error::InvalidGuard {
                guard: self.guard.clone(),
                reason: format!(
                    "must be a Boolean combination of K[{}] formulas, the caller's knowledge",
                    self.caller
                ),
            });
        }
        Ok(Instruction { guard, call })
    }
}

/// Boolean combinations of `K[caller]..` formulas.
fn caller_guard(f: &Formula, caller: AgentId) -> bool {
    match f {
        Formula::Know(a, _) => *a == caller,
        Formula::Not(g) => caller_guard(g, caller),
        Formula::And(l, r) | Formula::Or(l, r) => caller_guard(l, caller) && caller_guard(r, caller),
        Formula::Familiar(..) => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub guard: Formula,
    pub call: Call,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protocol {
    n: usize,
    direction: Direction,
    instructions: Vec<Instruction>,
}

impl Protocol {
    /// The protocol with no instructions.
    pub fn empty(n: usize, direction: Direction) -> Result<Self> {
        check_agent_count(n)?;
        Ok(Protocol { n, direction, instructions: Vec::new() })
    }

    /// Grounds every schema over all ordered pairs of distinct agents.
    pub fn from_schemas(schemas: &[InstructionSchema], n: usize) -> Result<Self> {
        check_agent_count(n)?;
        let direction = schemas.first().map_or(Direction::PushPull, |s| s.direction);
        let mut instructions = Vec::new();
        for s in schemas {
            if s.direction != direction {
                return Err(Error::DirectionMismatch {
                    call: s.guard.clone(),
                    expected: direction.name().into(),
                });
            }
            for x in AgentId::all(n) {
                for y in AgentId::all(n).filter(|&y| y != x) {
                    instructions.push(s.ground(x, y, n)?);
                }
            }
        }
        Ok(Protocol { n, direction, instructions })
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Fails unless every guard has an equivalent in L-hat.
    pub fn require_existential(&self) -> Result<()> {
        match self.instructions.iter().find(|i| to_lhat(&i.guard).is_none()) {
            Some(i) => Err(Error::NotExistential(i.guard.to_string())),
            None => Ok(()),
        }
    }

    fn check_model(&self, m: &GossipModel) -> Result<()> {
        if m.n_agents() != self.n {
            return Err(Error::Precondition(format!(
                "protocol is for {} agents, model has {}",
                self.n,
                m.n_agents()
            )));
        }
        if !self.is_empty() && m.calltype().direction != self.direction {
            return Err(Error::DirectionMismatch {
                call: self.instructions[0].call.display(self.direction),
                expected: m.calltype().direction.name().into(),
            });
        }
        Ok(())
    }
}

pub fn instantiate(schema: &InstructionSchema, n: usize) -> Result<Protocol> {
    Protocol::from_schemas(std::slice::from_ref(schema), n)
}

/// Each agent calls anyone who might not yet know her secret.
pub fn hear_my_secret(n: usize) -> Result<Protocol> {
    // ¬K_X F_Y X spelled as K̂_X ¬F_Y X so the guard is syntactically existential.
    instantiate(&InstructionSchema::parse("!K[X]!!F[Y,X] -> X<>Y")?, n)
}

/// Compliant members of a bounded universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationTree {
    /// Prefix-closed; always contains ε.
    pub members: FixedBitSet,
    /// Members where no guard holds.
    pub terminal: FixedBitSet,
    /// Members at the bound where some guard still holds.
    pub bound_limited: FixedBitSet,
}

impl ComputationTree {
    pub fn contains(&self, idx: usize) -> bool {
        self.members.contains(idx)
    }

    pub fn size(&self) -> usize {
        self.members.count_ones(..)
    }
}

/// The `(P, X)`-compliant sequences: ε, plus `c.x` whenever `c` is compliant,
/// lies in `x`, and the guard of some instruction for `x` holds at `c` in
/// the model restricted to `x`.
pub fn relativised_tree(p: &Protocol, x: &FixedBitSet, m: &GossipModel) -> Result<ComputationTree> {
    p.check_model(m)?;
    let u = m.universe();
    let guards: Vec<FixedBitSet> = p
        .instructions
        .par_iter()
        .map(|i| m.truth_set_in(&i.guard, x))
        .collect::<Result<_>>()?;
    let len = u.len();
    let mut tree = ComputationTree {
        members: FixedBitSet::with_capacity(len),
        terminal: FixedBitSet::with_capacity(len),
        bound_limited: FixedBitSet::with_capacity(len),
    };
    tree.members.insert(0);
    // Children always have larger indices, so one ascending sweep suffices.
    for i in 0..len {
        if !tree.members.contains(i) || !x.contains(i) {
            continue;
        }
        let mut enabled = false;
        for (inst, g) in p.instructions.iter().zip(&guards) {
            if !g.contains(i) {
                continue;
            }
            enabled = true;
            match u.child(i, inst.call) {
                Some(c) => tree.members.insert(c),
                None => tree.bound_limited.insert(i),
            }
        }
        if !enabled {
            tree.terminal.insert(i);
        }
    }
    Ok(tree)
}

/// The computation tree with guards read in the full bounded model.
pub fn computation_tree(p: &Protocol, m: &GossipModel) -> Result<ComputationTree> {
    relativised_tree(p, &m.full_set(), m)
}

/// `X ∩ C(P, X)`.
pub fn rho(p: &Protocol, x: &FixedBitSet, m: &GossipModel) -> Result<FixedBitSet> {
    let mut out = relativised_tree(p, x, m)?.members;
    out.intersect_with(x);
    Ok(out)
}

/// Greatest fixpoint of `rho`, iterating down from the whole universe.
pub fn greatest_fixpoint(p: &Protocol, m: &GossipModel) -> Result<FixedBitSet> {
    p.require_existential()?;
    let mut x = m.full_set();
    loop {
        let next = rho(p, &x, m)?;
        if next == x {
            return Ok(x);
        }
        x = next;
    }
}

/// Protocol 1: `a` calls `e, f, ..`, then `ab, cd, ac, bd`, then `e, f, ..`
/// again; `2n - 4` calls in total.
pub fn schedule_2n_minus_4(n: usize) -> Result<CallSequence> {
    check_agent_count(n)?;
    if n < 4 {
        return Err(Error::Precondition(format!("the schedule needs at least 4 agents, got {n}")));
    }
    let ag = |i: usize| AgentId::new(i).expect("checked above");
    let call = |x: usize, y: usize| Call::new(ag(x), ag(y)).expect("distinct agents");
    let outer: Vec<Call> = (4..n).map(|i| call(0, i)).collect();
    let mut calls = outer.clone();
    calls.extend([call(0, 1), call(2, 3), call(0, 2), call(1, 3)]);
    calls.extend(outer);
    Ok(CallSequence::new(calls))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Semantics {
    Naive,
    Fixpoint,
}

impl Semantics {
    pub fn name(self) -> &'static str {
        match self {
            Semantics::Naive => "naive",
            Semantics::Fixpoint => "fixpoint",
        }
    }
}

impl std::str::FromStr for Semantics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Semantics::Naive),
            "fixpoint" => Ok(Semantics::Fixpoint),
            _ => Err(Error::Syntax { pos: 0, msg: format!("unknown semantics `{s}`, expected naive or fixpoint") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProtocolReport {
    pub semantics: Semantics,
    pub bound: usize,
    pub size: usize,
    pub terminal_count: usize,
    /// Every terminal member makes all agents experts.
    pub all_expert: bool,
    /// Some member still has a compliant call beyond the bound.
    pub bound_limited: bool,
}

/// The compliant set under the chosen semantics: the computation tree, or
/// the greatest fixpoint with flags read in its own model.
pub fn compliant_tree(p: &Protocol, m: &GossipModel, semantics: Semantics) -> Result<ComputationTree> {
    match semantics {
        Semantics::Naive => computation_tree(p, m),
        Semantics::Fixpoint => {
            let x = greatest_fixpoint(p, m)?;
            let mut tree = relativised_tree(p, &x, m)?;
            tree.members.intersect_with(&x);
            Ok(tree)
        }
    }
}

pub fn analyze(p: &Protocol, m: &GossipModel, semantics: Semantics) -> Result<ProtocolReport> {
    let tree = compliant_tree(p, m, semantics)?;
    let sits = m.situations();
    Ok(ProtocolReport {
        semantics,
        bound: m.bound(),
        size: tree.size(),
        terminal_count: tree.terminal.count_ones(..),
        all_expert: tree.terminal.ones().all(|i| sits.all_experts(i)),
        bound_limited: !tree.bound_limited.is_clear(),
    })
}

/// A parsed protocol file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolFile {
    pub agents: usize,
    pub calltype: CallType,
    pub bound: Option<usize>,
    pub schemas: Vec<InstructionSchema>,
}

impl ProtocolFile {
    pub fn protocol(&self) -> Result<Protocol> {
        let p = Protocol::from_schemas(&self.schemas, self.agents)?;
        if !p.is_empty() && p.direction() != self.calltype.direction {
            return Err(Error::DirectionMismatch {
                call: p.instructions()[0].call.display(p.direction()),
                expected: self.calltype.direction.name().into(),
            });
        }
        Ok(p)
    }
}

/// Parses the `key: value` stanza format; `#` starts a comment.
pub fn parse_protocol_file(text: &str) -> Result<ProtocolFile> {
    let (mut agents, mut calltype, mut bound, mut schemas) = (None, None, None, Vec::new());
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| Error::ProtocolFile { line: line_no, msg };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.strip_prefix("rule") {
            Some(rest) => {
                let (head, body) = rest.split_once(':').ok_or_else(|| err("expected `rule (X,Y): ...`".into()))?;
                ("rule", (head.trim(), body.trim()))
            }
            None => {
                let (k, v) = line.split_once(':').ok_or_else(|| err(format!("expected `key: value`, got `{line}`")))?;
                (k.trim(), ("", v.trim()))
            }
        };
        match key {
            "agents" => {
                let n = value.1.parse().map_err(|_| err(format!("bad agent count `{}`", value.1)))?;
                check_agent_count(n).map_err(|e| err(e.to_string()))?;
                agents = Some(n);
            }
            "calltype" => calltype = Some(value.1.parse::<CallType>().map_err(|e| err(e.to_string()))?),
            "bound" => bound = Some(value.1.parse().map_err(|_| err(format!("bad bound `{}`", value.1)))?),
            "rule" => {
                let vars = parse_vars(value.0).ok_or_else(|| err(format!("bad variable list `{}`", value.0)))?;
                schemas.push(InstructionSchema::parse_with_vars(value.1, vars).map_err(|e| err(e.to_string()))?);
            }
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::ProtocolFile { line: 0, msg: format!("missing `{k}:` line") };
    Ok(ProtocolFile {
        agents: agents.ok_or_else(|| missing("agents"))?,
        calltype: calltype.ok_or_else(|| missing("calltype"))?,
        bound,
        schemas,
    })
}

fn parse_vars(head: &str) -> Option<(char, char)> {
    if head.is_empty() {
        return Some(('X', 'Y'));
    }
    let inner = head.strip_prefix('(')?.strip_suffix(')')?;
    let (x, y) = inner.split_once(',')?;
    let one = |s: &str| {
        let mut it = s.trim().chars();
        match (it.next(), it.next()) {
            (Some(c), None) if c.is_ascii_uppercase() => Some(c),
            _ => None,
        }
    };
    Some((one(x)?, one(y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gossip::{apply_sequence, initial_situation};
    use crate::indist::IndexConfig;
    use crate::logic::fragment_of;

    fn model(n: usize, bound: usize, t: &str) -> GossipModel {
        GossipModel::build(n, bound, t.parse().unwrap(), &IndexConfig::default()).unwrap()
    }

    fn idx(m: &GossipModel, s: &str) -> usize {
        let seq = CallSequence::parse_any(s, m.n_agents()).unwrap().0;
        m.universe().index_of(&seq).unwrap()
    }

    #[test]
    fn instantiation() {
        let s = InstructionSchema::parse("!K[X]F[Y,X] -> X<>Y").unwrap();
        assert_eq!(instantiate(&s, 3).unwrap().len(), 6);
        let s = InstructionSchema::parse("!K[X]F[Y,X] & K[X]F[X,Y] -> X>Y").unwrap();
        let p = instantiate(&s, 3).unwrap();
        assert_eq!((p.len(), p.direction()), (6, Direction::Push));
        assert!(matches!(InstructionSchema::parse("F[Y,X] -> X<>Y"), Err(Error::InvalidGuard { .. })));
        assert!(matches!(InstructionSchema::parse("K[Y]F[Y,X] -> X<>Y"), Err(Error::InvalidGuard { .. })));
        assert!(matches!(InstructionSchema::parse("!K[X]F[Y,X] -> X<>X"), Err(Error::Syntax { .. })));
        assert!(matches!(InstructionSchema::parse("!K[X]F[Z,X] -> X<>Y"), Err(Error::Syntax { .. })));
        assert!(InstructionSchema::parse("K[Y]F[X,Y] -> Y<X").is_ok());
    }

    #[test]
    fn hear_my_secret_shape() {
        let p = hear_my_secret(3).unwrap();
        assert_eq!(p.len(), 6);
        assert!(p.instructions().iter().all(|i| fragment_of(&i.guard).in_lhat));
        let m = model(3, 1, "p2,pushpull,after");
        for i in p.instructions() {
            assert!(m.holds_at(&i.guard, 0).unwrap());
        }
    }

    #[test]
    fn empty_protocol() {
        let p = Protocol::empty(3, Direction::PushPull).unwrap();
        let m = model(3, 2, "p3,pushpull,after");
        let tree = computation_tree(&p, &m).unwrap();
        assert_eq!(tree.members.ones().collect::<Vec<_>>(), vec![0]);
        assert_eq!(greatest_fixpoint(&p, &m).unwrap().ones().collect::<Vec<_>>(), vec![0]);
        let r = analyze(&p, &m, Semantics::Naive).unwrap();
        assert_eq!((r.size, r.terminal_count, r.all_expert, r.bound_limited), (1, 1, false, false));
    }

    #[test]
    fn rho_basics() {
        let p = hear_my_secret(3).unwrap();
        let m = model(3, 3, "p2,pushpull,after");
        let mut eps = FixedBitSet::with_capacity(m.universe().len());
        eps.insert(0);
        assert_eq!(rho(&p, &eps, &m).unwrap(), eps);
        let small = relativised_tree(&p, &eps, &m).unwrap();
        assert_eq!(small.size(), 7);
        let tree = computation_tree(&p, &m).unwrap();
        assert_eq!(rho(&p, &m.full_set(), &m).unwrap(), tree.members);
    }

    #[test]
    fn trees_are_prefix_closed() {
        let p = hear_my_secret(3).unwrap();
        for t in ["p1,pushpull,before", "p2,pushpull,after", "p3,pushpull,after"] {
            let m = model(3, 3, t);
            let tree = computation_tree(&p, &m).unwrap();
            assert!(tree.contains(0));
            for i in tree.members.ones() {
                if let Some(parent) = m.universe().parent(i) {
                    assert!(tree.contains(parent));
                }
            }
        }
    }

    #[test]
    fn p1_worked_example() {
        let p = hear_my_secret(4).unwrap();
        let m = model(4, 4, "p1,pushpull,after");
        let tree = computation_tree(&p, &m).unwrap();
        assert!(tree.contains(idx(&m, "a<>b;b<>c;b<>d")));
        assert!(!tree.contains(idx(&m, "a<>b;b<>c;b<>d;c<>d")));
        assert_eq!(greatest_fixpoint(&p, &m).unwrap(), tree.members);
    }

    #[test]
    fn guards_must_be_existential_for_the_fixpoint() {
        let s = InstructionSchema::parse("K[X]!F[Y,X] -> X<>Y").unwrap();
        let p = instantiate(&s, 3).unwrap();
        let m = model(3, 1, "p1,pushpull,after");
        assert!(matches!(greatest_fixpoint(&p, &m), Err(Error::NotExistential(_))));
        let plain = instantiate(&InstructionSchema::parse("!K[X]F[Y,X] -> X<>Y").unwrap(), 3).unwrap();
        assert!(greatest_fixpoint(&plain, &m).is_ok());
    }

    #[test]
    fn direction_must_match_model() {
        let p = hear_my_secret(3).unwrap();
        let m = model(3, 1, "p1,push,after");
        assert!(matches!(computation_tree(&p, &m), Err(Error::DirectionMismatch { .. })));
    }

    #[test]
    fn schedule() {
        let d = Direction::PushPull;
        assert_eq!(
            schedule_2n_minus_4(6).unwrap().display(d),
            "a<>e;a<>f;a<>b;c<>d;a<>c;b<>d;a<>e;a<>f"
        );
        assert_eq!(schedule_2n_minus_4(4).unwrap().display(d), "a<>b;c<>d;a<>c;b<>d");
        assert_eq!(schedule_2n_minus_4(5).unwrap().len(), 6);
        assert!(schedule_2n_minus_4(3).is_err());
        for n in 4..=10 {
            let s = schedule_2n_minus_4(n).unwrap();
            assert_eq!(s.len(), 2 * n - 4);
            assert!(apply_sequence(&initial_situation(n).unwrap(), &s, d).all_experts());
        }
    }

    #[test]
    fn protocol_files() {
        let text = "# hear my secret\nagents: 4\ncalltype: p2 pushpull after\nbound: 4\n\
                    rule (X,Y): !K[X]F[Y,X] -> X<>Y  # one rule\n";
        let f = parse_protocol_file(text).unwrap();
        assert_eq!((f.agents, f.bound, f.schemas.len()), (4, Some(4), 1));
        assert_eq!(f.calltype, "p2,pushpull,after".parse().unwrap());
        assert_eq!(f.protocol().unwrap().len(), 12);
        let renamed = parse_protocol_file("agents: 3\ncalltype: p1 push after\nrule (A,B): K[A]F[B,A] -> A>B\n").unwrap();
        assert_eq!(renamed.protocol().unwrap().len(), 6);
        assert!(matches!(
            parse_protocol_file("agents: 3\ncalltype: p1 push after\nrule (X,Y): F[Y,X] -> X>Y\n"),
            Err(Error::ProtocolFile { line: 3, .. })
        ));
        assert!(matches!(parse_protocol_file("agents: 3\n"), Err(Error::ProtocolFile { line: 0, .. })));
        assert!(matches!(parse_protocol_file("agents: 3\nspeed: 4\n"), Err(Error::ProtocolFile { line: 2, .. })));
        let mismatch = parse_protocol_file("agents: 3\ncalltype: p1 push after\nrule: K[X]F[X,Y] -> X<>Y\n").unwrap();
        assert!(matches!(mismatch.protocol(), Err(Error::DirectionMismatch { .. })));
    }
}
