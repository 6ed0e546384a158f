//! Stable structural digests over de Bruijn trees.
//!
//! Digests are built from xxh3 over a fixed byte encoding, so they are stable
//! across processes and platforms.

use xxhash_rust::xxh3::{xxh3_128, xxh3_64};

use crate::kernel::{DefId, Formula, Hypothesis, ProofState, Term};

pub type Digest = u128;

pub(crate) mod tag {
    pub const BOUND: u8 = 1;
    pub const LOCAL: u8 = 2;
    pub const DEF: u8 = 3;
    pub const APP: u8 = 4;
    pub const EQ: u8 = 5;
    pub const IMPLIES: u8 = 6;
    pub const FORALL: u8 = 7;
    pub const STATE: u8 = 8;
    pub const HYP_VAR: u8 = 9;
    pub const HYP_PROP: u8 = 10;
    pub const SELF_ROOT: u8 = 11;
    pub const DEF_ROOT: u8 = 12;
    pub const CLUSTER: u8 = 13;
}

pub(crate) fn combine(tag: u8, ints: &[u64], children: &[Digest]) -> Digest {
    let mut buf = Vec::with_capacity(1 + ints.len() * 8 + children.len() * 16);
    buf.push(tag);
    for i in ints {
        buf.extend_from_slice(&i.to_le_bytes());
    }
    for c in children {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    xxh3_128(&buf)
}

pub(crate) fn fold64(d: Digest) -> u64 {
    xxh3_64(&d.to_le_bytes())
}

pub(crate) fn def_leaf(d: DefId) -> Digest {
    combine(tag::DEF, &[d.0 as u64], &[])
}

/// Digest of a term; applications are curried, matching the graph encoding.
pub fn term_digest(t: &Term) -> Digest {
    match t {
        Term::Bound(i) => combine(tag::BOUND, &[*i as u64], &[]),
        Term::Local(i) => combine(tag::LOCAL, &[*i as u64], &[]),
        Term::Const(d) => def_leaf(*d),
        Term::App(f, args) => args
            .iter()
            .fold(def_leaf(*f), |acc, a| combine(tag::APP, &[], &[acc, term_digest(a)])),
    }
}

pub fn formula_digest(f: &Formula) -> Digest {
    match f {
        Formula::Eq(l, r) => combine(tag::EQ, &[], &[term_digest(l), term_digest(r)]),
        Formula::Implies(p, c) => combine(tag::IMPLIES, &[], &[formula_digest(p), formula_digest(c)]),
        Formula::Forall(b) => combine(tag::FORALL, &[], &[formula_digest(b)]),
    }
}

pub fn state_digest(s: &ProofState) -> Digest {
    let mut children: Vec<Digest> = s
        .context
        .iter()
        .map(|h| match h {
            Hypothesis::Var => combine(tag::HYP_VAR, &[], &[]),
            Hypothesis::Prop(f) => combine(tag::HYP_PROP, &[], &[formula_digest(f)]),
        })
        .collect();
    children.push(formula_digest(&s.goal));
    combine(tag::STATE, &[s.context.len() as u64], &children)
}

/// 64-bit identity of a proof state, as used for duplicate detection.
pub fn state_hash(s: &ProofState) -> u64 {
    fold64(state_digest(s))
}
