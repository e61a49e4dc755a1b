//! The epistemic language: formulas, parsing, fragments and evaluation.
//!
//! Grammar, with `!` and `K[x]` binding tightest, then `&`, then `|`
//! (both binary operators associate to the right):
//!
//! ```text
//! phi := F[x,y] | K[x] phi | Exp[x] | !phi | phi & phi | phi | phi | (phi)
//! ```

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};
use crate::gossip::{AgentId, CallSequence, CallType, Secret};
use crate::indist::{build_equivalence_index, EquivalenceIndex, IndexConfig};
use crate::universe::{Situations, Universe};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    /// `F[a,b]`: agent `a` is familiar with the secret of `b`.
    Familiar(AgentId, Secret),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Know(AgentId, Box<Formula>),
}

impl Formula {
    pub fn familiar(a: AgentId, owner: AgentId) -> Self {
        Formula::Familiar(a, Secret(owner))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn know(a: AgentId, f: Formula) -> Self {
        Formula::Know(a, Box::new(f))
    }

    /// `K̂_a f`, written `¬K_a¬f`.
    pub fn possible(a: AgentId, f: Formula) -> Self {
        Formula::not(Formula::know(a, Formula::not(f)))
    }

    /// Right-nested conjunction; `None` when empty.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Option<Formula> {
        let mut parts: Vec<Formula> = parts.into_iter().collect();
        let mut acc = parts.pop()?;
        while let Some(p) = parts.pop() {
            acc = Formula::and(p, acc);
        }
        Some(acc)
    }

    /// One past the largest agent index mentioned.
    pub fn agent_span(&self) -> usize {
        match self {
            Formula::Familiar(a, s) => a.index().max(s.owner().index()) + 1,
            Formula::Not(f) => f.agent_span(),
            Formula::And(l, r) | Formula::Or(l, r) => l.agent_span().max(r.agent_span()),
            Formula::Know(a, f) => (a.index() + 1).max(f.agent_span()),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Familiar(..) => 0,
            Formula::Not(f) | Formula::Know(_, f) => 1 + f.depth(),
            Formula::And(l, r) | Formula::Or(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    fn is_literal(&self) -> bool {
        match self {
            Formula::Familiar(..) => true,
            Formula::Not(f) => matches!(**f, Formula::Familiar(..)),
            _ => false,
        }
    }
}

/// `Exp[a]`: `a` is familiar with every secret.
pub fn expert_formula(a: AgentId, n: usize) -> Formula {
    Formula::conjunction(AgentId::all(n).map(|b| Formula::familiar(a, b))).expect("n >= 1")
}

const OR: u8 = 0;
const AND: u8 = 1;
const UNARY: u8 = 2;

fn write_at(f: &Formula, ctx: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let own = match f {
        Formula::Or(..) => OR,
        Formula::And(..) => AND,
        _ => UNARY,
    };
    let paren = own < ctx;
    if paren {
        out.write_str("(")?;
    }
    match f {
        Formula::Familiar(a, s) => write!(out, "F[{},{}]", a, s.owner())?,
        Formula::Not(g) => {
            out.write_str("!")?;
            write_at(g, UNARY, out)?;
        }
        Formula::Know(a, g) => {
            write!(out, "K[{a}]")?;
            write_at(g, UNARY, out)?;
        }
        Formula::And(l, r) => {
            write_at(l, AND + 1, out)?;
            out.write_str("&")?;
            write_at(r, AND, out)?;
        }
        Formula::Or(l, r) => {
            write_at(l, OR + 1, out)?;
            out.write_str("|")?;
            write_at(r, OR, out)?;
        }
    }
    if paren {
        out.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_at(self, OR, f)
    }
}

pub fn format_formula(f: &Formula) -> String {
    f.to_string()
}

struct Parser<'a, R> {
    chars: Vec<(usize, char)>,
    pos: usize,
    end: usize,
    resolve: &'a R,
    n: usize,
}

impl<R: Fn(char) -> Option<AgentId>> Parser<'_, R> {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.end, |&(o, _)| o)
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { pos: self.offset(), msg: msg.into() })
    }

    fn expect(&mut self, want: char) -> Result<()> {
        match self.peek() {
            Some(c) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => self.err(format!("expected `{want}`, found `{c}`")),
            None => self.err(format!("expected `{want}`, found end of input")),
        }
    }

    fn agent(&mut self) -> Result<AgentId> {
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => match (self.resolve)(c) {
                Some(a) => {
                    self.pos += 1;
                    Ok(a)
                }
                None => self.err(format!("unknown agent `{c}` for {} agents", self.n)),
            },
            Some(c) => self.err(format!("expected an agent, found `{c}`")),
            None => self.err("expected an agent, found end of input"),
        }
    }

    fn keyword(&mut self, word: &str) -> bool {
        self.skip_ws();
        let rest = &self.chars[self.pos..];
        let hit = rest.len() >= word.len() && rest.iter().zip(word.chars()).all(|(&(_, c), w)| c == w);
        if hit {
            self.pos += word.len();
        }
        hit
    }

    fn or(&mut self) -> Result<Formula> {
        let left = self.and()?;
        if self.peek() == Some('|') {
            self.pos += 1;
            return Ok(Formula::or(left, self.or()?));
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Formula> {
        let left = self.unary()?;
        if self.peek() == Some('&') {
            self.pos += 1;
            return Ok(Formula::and(left, self.and()?));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula> {
        match self.peek() {
            Some('!') => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some('(') => {
                self.pos += 1;
                let f = self.or()?;
                self.expect(')')?;
                Ok(f)
            }
            _ if self.keyword("K[") => {
                let a = self.agent()?;
                self.expect(']')?;
                Ok(Formula::know(a, self.unary()?))
            }
            _ if self.keyword("F[") => {
                let a = self.agent()?;
                self.expect(',')?;
                let b = self.agent()?;
                self.expect(']')?;
                Ok(Formula::familiar(a, b))
            }
            _ if self.keyword("Exp[") => {
                let a = self.agent()?;
                self.expect(']')?;
                Ok(expert_formula(a, self.n))
            }
            Some(c) => self.err(format!("expected a formula, found `{c}`")),
            None => self.err("expected a formula, found end of input"),
        }
    }
}

/// Parses with a custom agent resolver; `n` sizes `Exp[..]` expansions.
pub fn parse_formula_with(text: &str, n: usize, resolve: &impl Fn(char) -> Option<AgentId>) -> Result<Formula> {
    let mut p = Parser { chars: text.char_indices().collect(), pos: 0, end: text.len(), resolve, n };
    let f = p.or()?;
    if let Some(c) = p.peek() {
        return p.err(format!("unexpected `{c}` after formula"));
    }
    Ok(f)
}

/// Parses a formula over agents `a`, `b`, ... for `n` agents.
pub fn parse_formula(text: &str, n: usize) -> Result<Formula> {
    parse_formula_with(text, n, &|c| AgentId::from_letter(c, n).ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct FragmentFlags {
    /// Literals closed under `&`, `|` and `K`.
    pub in_l1plus: bool,
    /// Atoms closed under `&`, `|` and `K`.
    pub in_l2plus: bool,
    /// Literals closed under `&`, `|` and `K̂`.
    pub in_lhat: bool,
}

fn in_plus(f: &Formula, literals: bool) -> bool {
    match f {
        Formula::Familiar(..) => true,
        Formula::Not(g) => literals && matches!(**g, Formula::Familiar(..)),
        Formula::And(l, r) | Formula::Or(l, r) => in_plus(l, literals) && in_plus(r, literals),
        Formula::Know(_, g) => in_plus(g, literals),
    }
}

fn in_lhat(f: &Formula) -> bool {
    if f.is_literal() {
        return true;
    }
    match f {
        Formula::And(l, r) | Formula::Or(l, r) => in_lhat(l) && in_lhat(r),
        Formula::Not(g) => match &**g {
            Formula::Know(_, h) => matches!(&**h, Formula::Not(psi) if in_lhat(psi)),
            _ => false,
        },
        _ => false,
    }
}

pub fn fragment_of(f: &Formula) -> FragmentFlags {
    FragmentFlags { in_l1plus: in_plus(f, true), in_l2plus: in_plus(f, false), in_lhat: in_lhat(f) }
}

fn lhat_polar(f: &Formula, positive: bool) -> Option<Formula> {
    Some(match (f, positive) {
        (Formula::Familiar(..), true) => f.clone(),
        (Formula::Familiar(..), false) => Formula::not(f.clone()),
        (Formula::Not(g), _) => lhat_polar(g, !positive)?,
        (Formula::And(l, r), true) => Formula::and(lhat_polar(l, true)?, lhat_polar(r, true)?),
        (Formula::And(l, r), false) => Formula::or(lhat_polar(l, false)?, lhat_polar(r, false)?),
        (Formula::Or(l, r), true) => Formula::or(lhat_polar(l, true)?, lhat_polar(r, true)?),
        (Formula::Or(l, r), false) => Formula::and(lhat_polar(l, false)?, lhat_polar(r, false)?),
        (Formula::Know(..), true) => return None,
        (Formula::Know(a, g), false) => Formula::possible(*a, lhat_polar(g, false)?),
    })
}

/// An equivalent formula that is syntactically in L-hat, if negations can be
/// pushed inward so that every `K` sits under an odd number of them.
pub fn to_lhat(f: &Formula) -> Option<Formula> {
    lhat_polar(f, true)
}

/// A bounded gossip model: a universe with its indistinguishability index.
#[derive(Debug, Clone)]
pub struct GossipModel {
    index: Arc<EquivalenceIndex>,
    situations: Arc<Situations>,
}

impl GossipModel {
    pub fn build(n: usize, bound: usize, t: CallType, cfg: &IndexConfig) -> Result<Self> {
        let u = Arc::new(Universe::new(n, bound)?);
        Ok(GossipModel::from_index(build_equivalence_index(u, t, cfg)?))
    }

    pub fn from_index(index: EquivalenceIndex) -> Self {
        let situations = Arc::new(index.universe().situations(index.calltype().direction));
        GossipModel { index: Arc::new(index), situations }
    }

    pub fn universe(&self) -> &Universe {
        self.index.universe()
    }

    pub fn index(&self) -> &EquivalenceIndex {
        &self.index
    }

    pub fn situations(&self) -> &Situations {
        &self.situations
    }

    pub fn calltype(&self) -> CallType {
        self.index.calltype()
    }

    pub fn bound(&self) -> usize {
        self.index.bound()
    }

    pub fn n_agents(&self) -> usize {
        self.universe().n_agents()
    }

    /// Every member, as a set.
    pub fn full_set(&self) -> FixedBitSet {
        let mut all = FixedBitSet::with_capacity(self.universe().len());
        all.insert_range(..);
        all
    }

    fn check(&self, f: &Formula) -> Result<()> {
        let n = self.n_agents();
        if f.agent_span() > n {
            let a = AgentId::new(f.agent_span() - 1)?;
            return Err(Error::AgentOutOfRange { agent: a.to_string(), n });
        }
        Ok(())
    }

    /// Members where `f` holds.
    pub fn truth_set(&self, f: &Formula) -> Result<FixedBitSet> {
        self.truth_set_in(f, &self.full_set())
    }

    /// Truth of `f` at every member in the model restricted to `x`: knowledge
    /// quantifies over classes intersected with `x`. Members outside `x` get
    /// values too, read as "as seen from inside `x`".
    pub fn truth_set_in(&self, f: &Formula, x: &FixedBitSet) -> Result<FixedBitSet> {
        self.check(f)?;
        let mut memo = HashMap::new();
        Ok(self.truth(f, x, &mut memo))
    }

    fn truth<'f>(&self, f: &'f Formula, x: &FixedBitSet, memo: &mut HashMap<&'f Formula, FixedBitSet>) -> FixedBitSet {
        if let Some(s) = memo.get(f) {
            return s.clone();
        }
        let len = self.universe().len();
        let out = match f {
            Formula::Familiar(a, s) => {
                let mut out = FixedBitSet::with_capacity(len);
                for idx in 0..len {
                    out.set(idx, self.situations.get(idx, *a).contains(*s));
                }
                out
            }
            Formula::Not(g) => {
                let mut out = self.truth(g, x, memo);
                out.toggle_range(..);
                out
            }
            Formula::And(l, r) => {
                let mut out = self.truth(l, x, memo);
                out.intersect_with(&self.truth(r, x, memo));
                out
            }
            Formula::Or(l, r) => {
                let mut out = self.truth(l, x, memo);
                out.union_with(&self.truth(r, x, memo));
                out
            }
            Formula::Know(a, g) => {
                let inner = self.truth(g, x, memo);
                let mut out = FixedBitSet::with_capacity(len);
                for class in self.index.partition(*a).classes() {
                    let holds = class.iter().all(|&m| !x.contains(m as usize) || inner.contains(m as usize));
                    if holds {
                        for &m in class {
                            out.insert(m as usize);
                        }
                    }
                }
                out
            }
        };
        memo.insert(f, out.clone());
        out
    }

    /// Truth of `f` at member `idx`.
    pub fn holds_at(&self, f: &Formula, idx: usize) -> Result<bool> {
        Ok(self.truth_set(f)?.contains(idx))
    }
}

/// Whether `f` holds at `c` in `m`.
pub fn eval(f: &Formula, c: &CallSequence, m: &GossipModel) -> Result<bool> {
    let idx = m.universe().require(c, m.calltype().direction)?;
    m.holds_at(f, idx)
}
