//! A small first-order equational tactic calculus.
//!
//! Terms use de Bruijn indices for variables bound by `Forall`, and
//! [`Term::Local`] for constants introduced into a proof state's context.
//! Hypotheses are addressed by position only.

mod matching;
pub mod syntax;
mod tactic;
mod term;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use matching::{instantiate_formula, instantiate_term, match_formula, match_term, Substitution};
pub use tactic::{apply_tactic, check_proof, replay, TacticError};

/// Dense identifier of a global definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DefId(pub u32);

impl DefId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for DefId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PackageId(pub u32);

impl fmt::Display for PackageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    /// Variable bound by an enclosing `Forall` (0 = innermost).
    Bound(u32),
    /// Context constant: refers to position `i` of the proof state's context.
    Local(u32),
    Const(DefId),
    App(DefId, Vec<Term>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Eq(Term, Term),
    Implies(Box<Formula>, Box<Formula>),
    Forall(Box<Formula>),
}

impl Formula {
    pub fn eq(lhs: Term, rhs: Term) -> Self {
        Formula::Eq(lhs, rhs)
    }

    pub fn implies(premise: Formula, conclusion: Formula) -> Self {
        Formula::Implies(Box::new(premise), Box::new(conclusion))
    }

    pub fn forall(body: Formula) -> Self {
        Formula::Forall(Box::new(body))
    }

    /// Wraps `n` universal quantifiers around `body`.
    pub fn forall_n(n: u32, body: Formula) -> Self {
        (0..n).fold(body, |f, _| Formula::forall(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DefKind {
    FunctionSymbol { arity: u32 },
    DefiningEquation,
    Theorem,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Definition {
    pub id: DefId,
    pub kind: DefKind,
    /// Absent for function symbols.
    pub statement: Option<Formula>,
    pub package: PackageId,
    pub name: String,
    /// Symbol this equation defines (defining equations only). Groups the
    /// symbol and its equations into one definition cluster.
    pub defines: Option<DefId>,
    pub proof: Option<ProofScript>,
}

impl Definition {
    pub fn is_theorem(&self) -> bool {
        self.kind == DefKind::Theorem
    }

    pub fn arity(&self) -> Option<u32> {
        match self.kind {
            DefKind::FunctionSymbol { arity } => Some(arity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    /// A context constant introduced from a `Forall` binder.
    Var,
    Prop(Formula),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProofState {
    pub context: Vec<Hypothesis>,
    pub goal: Formula,
}

impl ProofState {
    pub fn new(goal: Formula) -> Self {
        ProofState { context: Vec::new(), goal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseTactic {
    Intro,
    Reflexivity,
    Symmetry,
    Exact,
    Apply,
    Rewrite,
    RewriteIn,
}

impl BaseTactic {
    pub const ALL: [BaseTactic; 7] = [
        BaseTactic::Intro,
        BaseTactic::Reflexivity,
        BaseTactic::Symmetry,
        BaseTactic::Exact,
        BaseTactic::Apply,
        BaseTactic::Rewrite,
        BaseTactic::RewriteIn,
    ];

    pub const COUNT: usize = 7;

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    /// Number of argument slots.
    pub fn slots(self) -> usize {
        match self {
            BaseTactic::Intro | BaseTactic::Reflexivity | BaseTactic::Symmetry => 0,
            BaseTactic::Exact | BaseTactic::Apply | BaseTactic::Rewrite => 1,
            BaseTactic::RewriteIn => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseTactic::Intro => "intro",
            BaseTactic::Reflexivity => "reflexivity",
            BaseTactic::Symmetry => "symmetry",
            BaseTactic::Exact => "exact",
            BaseTactic::Apply => "apply",
            BaseTactic::Rewrite => "rewrite",
            BaseTactic::RewriteIn => "rewrite-in",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Argument {
    Local(u32),
    Global(DefId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TacticInvocation {
    pub base: BaseTactic,
    pub args: Vec<Argument>,
}

impl TacticInvocation {
    pub fn new(base: BaseTactic, args: Vec<Argument>) -> Self {
        TacticInvocation { base, args }
    }

    pub fn nullary(base: BaseTactic) -> Self {
        TacticInvocation { base, args: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ProofScript(pub Vec<TacticInvocation>);

/// The global context: every definition, indexed by `DefId`.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    defs: Vec<Definition>,
    by_name: HashMap<String, DefId>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("definition id {0} is not the next dense id")]
    NonDenseId(DefId),
    #[error("duplicate definition name `{0}`")]
    DuplicateName(String),
    #[error("unknown definition {0}")]
    Unknown(DefId),
    #[error("`{name}` applied to {got} arguments, arity is {arity}")]
    Arity { name: String, arity: u32, got: usize },
    #[error("{0} is not a function symbol")]
    NotASymbol(DefId),
    #[error("dangling de Bruijn index in `{0}`")]
    OpenStatement(String),
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn next_id(&self) -> DefId {
        DefId(self.defs.len() as u32)
    }

    pub fn get(&self, id: DefId) -> Option<&Definition> {
        self.defs.get(id.index())
    }

    pub fn def(&self, id: DefId) -> &Definition {
        &self.defs[id.index()]
    }

    pub fn lookup(&self, name: &str) -> Option<DefId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Definition> {
        self.defs.iter()
    }

    /// Adds a definition, checking id density, name uniqueness, arities and
    /// that the statement is closed.
    pub fn add(&mut self, def: Definition) -> Result<DefId, EnvError> {
        if def.id != self.next_id() {
            return Err(EnvError::NonDenseId(def.id));
        }
        if self.by_name.contains_key(&def.name) {
            return Err(EnvError::DuplicateName(def.name));
        }
        if let Some(stmt) = &def.statement {
            self.check_formula(stmt)?;
            if !stmt.is_closed() {
                return Err(EnvError::OpenStatement(def.name));
            }
        }
        if let Some(sym) = def.defines {
            match self.get(sym) {
                Some(d) if d.arity().is_some() => {}
                Some(_) => return Err(EnvError::NotASymbol(sym)),
                None => return Err(EnvError::Unknown(sym)),
            }
        }
        let id = def.id;
        self.by_name.insert(def.name.clone(), id);
        self.defs.push(def);
        Ok(id)
    }

    /// Replaces the stored proof of a theorem.
    pub fn set_proof(&mut self, id: DefId, proof: ProofScript) {
        self.defs[id.index()].proof = Some(proof);
    }

    pub fn check_formula(&self, f: &Formula) -> Result<(), EnvError> {
        match f {
            Formula::Eq(l, r) => {
                self.check_term(l)?;
                self.check_term(r)
            }
            Formula::Implies(p, c) => {
                self.check_formula(p)?;
                self.check_formula(c)
            }
            Formula::Forall(b) => self.check_formula(b),
        }
    }

    pub fn check_term(&self, t: &Term) -> Result<(), EnvError> {
        match t {
            Term::Bound(_) | Term::Local(_) => Ok(()),
            Term::Const(d) => self.check_symbol(*d, 0),
            Term::App(d, args) => {
                self.check_symbol(*d, args.len())?;
                args.iter().try_for_each(|a| self.check_term(a))
            }
        }
    }

    fn check_symbol(&self, id: DefId, got: usize) -> Result<(), EnvError> {
        let def = self.get(id).ok_or(EnvError::Unknown(id))?;
        match def.arity() {
            Some(arity) if arity as usize == got => Ok(()),
            Some(arity) => Err(EnvError::Arity { name: def.name.clone(), arity, got }),
            None => Err(EnvError::NotASymbol(id)),
        }
    }

    /// Definitions directly referenced by `id`: symbols in its statement, and
    /// for a theorem the global arguments of its proof when `with_proof`.
    pub fn direct_references(&self, id: DefId, with_proof: bool) -> Vec<DefId> {
        let def = self.def(id);
        let mut out = Vec::new();
        if let Some(stmt) = &def.statement {
            stmt.collect_defs(&mut out);
        }
        if let Some(sym) = def.defines {
            out.push(sym);
        }
        if with_proof {
            if let Some(proof) = &def.proof {
                for inv in &proof.0 {
                    for arg in &inv.args {
                        if let Argument::Global(d) = arg {
                            out.push(*d);
                        }
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}
