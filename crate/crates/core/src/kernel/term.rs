use super::{DefId, Formula, Term};

impl Term {
    /// Adds `by` to every bound index `>= cutoff`.
    pub fn shift(&self, cutoff: u32, by: i64) -> Term {
        match self {
            Term::Bound(i) if *i >= cutoff => Term::Bound((*i as i64 + by) as u32),
            Term::App(f, args) => Term::App(*f, args.iter().map(|a| a.shift(cutoff, by)).collect()),
            other => other.clone(),
        }
    }

    /// Smallest bound index occurring in the term, if any.
    pub fn min_bound(&self) -> Option<u32> {
        match self {
            Term::Bound(i) => Some(*i),
            Term::App(_, args) => args.iter().filter_map(Term::min_bound).min(),
            _ => None,
        }
    }

    /// One past the largest bound index, 0 if none.
    pub fn bound_extent(&self) -> u32 {
        match self {
            Term::Bound(i) => i + 1,
            Term::App(_, args) => args.iter().map(Term::bound_extent).max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Term::App(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
            _ => 1,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::App(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
            _ => 1,
        }
    }

    pub fn collect_defs(&self, out: &mut Vec<DefId>) {
        match self {
            Term::Const(d) => out.push(*d),
            Term::App(f, args) => {
                out.push(*f);
                args.iter().for_each(|a| a.collect_defs(out));
            }
            _ => {}
        }
    }

    pub fn mentions_local(&self, n: u32) -> bool {
        match self {
            Term::Local(i) => *i == n,
            Term::App(_, args) => args.iter().any(|a| a.mentions_local(n)),
            _ => false,
        }
    }

    /// Replaces `Bound(level)` (relative to `binders` enclosing binders) by `value`.
    pub(crate) fn open_at(&self, binders: u32, value: &Term) -> Term {
        match self {
            Term::Bound(i) if *i == binders => value.shift(0, binders as i64),
            Term::Bound(i) if *i > binders => Term::Bound(i - 1),
            Term::App(f, args) => {
                Term::App(*f, args.iter().map(|a| a.open_at(binders, value)).collect())
            }
            other => other.clone(),
        }
    }

    /// Replaces `Local(n)` by `Bound(binders)`.
    pub(crate) fn abstract_local(&self, n: u32, binders: u32) -> Term {
        match self {
            Term::Local(i) if *i == n => Term::Bound(binders),
            Term::App(f, args) => {
                Term::App(*f, args.iter().map(|a| a.abstract_local(n, binders)).collect())
            }
            other => other.clone(),
        }
    }

    /// Subterms in pre-order (leftmost-outermost first).
    pub fn preorder(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            out.push(t);
            if let Term::App(_, args) = t {
                stack.extend(args.iter().rev());
            }
        }
        out
    }
}

impl Formula {
    /// True when no bound index escapes the formula.
    pub fn is_closed(&self) -> bool {
        fn go(f: &Formula, binders: u32) -> bool {
            match f {
                Formula::Eq(l, r) => l.bound_extent() <= binders && r.bound_extent() <= binders,
                Formula::Implies(p, c) => go(p, binders) && go(c, binders),
                Formula::Forall(b) => go(b, binders + 1),
            }
        }
        go(self, 0)
    }

    pub fn collect_defs(&self, out: &mut Vec<DefId>) {
        match self {
            Formula::Eq(l, r) => {
                l.collect_defs(out);
                r.collect_defs(out);
            }
            Formula::Implies(p, c) => {
                p.collect_defs(out);
                c.collect_defs(out);
            }
            Formula::Forall(b) => b.collect_defs(out),
        }
    }

    /// Instantiates the outermost binder of a `Forall` body with `value`.
    pub fn open(&self, value: &Term) -> Formula {
        fn go(f: &Formula, binders: u32, value: &Term) -> Formula {
            match f {
                Formula::Eq(l, r) => Formula::Eq(l.open_at(binders, value), r.open_at(binders, value)),
                Formula::Implies(p, c) => Formula::implies(go(p, binders, value), go(c, binders, value)),
                Formula::Forall(b) => Formula::forall(go(b, binders + 1, value)),
            }
        }
        go(self, 0, value)
    }

    /// Turns `Local(n)` into the variable of a new outermost binder. The
    /// caller wraps the result in `Forall`.
    pub fn abstract_local(&self, n: u32) -> Formula {
        fn go(f: &Formula, binders: u32, n: u32) -> Formula {
            match f {
                Formula::Eq(l, r) => Formula::Eq(
                    l.shift(binders, 1).abstract_local(n, binders),
                    r.shift(binders, 1).abstract_local(n, binders),
                ),
                Formula::Implies(p, c) => Formula::implies(go(p, binders, n), go(c, binders, n)),
                Formula::Forall(b) => Formula::forall(go(b, binders + 1, n)),
            }
        }
        go(self, 0, n)
    }

    pub fn mentions_local(&self, n: u32) -> bool {
        match self {
            Formula::Eq(l, r) => l.mentions_local(n) || r.mentions_local(n),
            Formula::Implies(p, c) => p.mentions_local(n) || c.mentions_local(n),
            Formula::Forall(b) => b.mentions_local(n),
        }
    }

    /// Strips leading `Forall`s, returning their count and the body.
    pub fn strip_foralls(&self) -> (u32, &Formula) {
        let mut f = self;
        let mut n = 0;
        while let Formula::Forall(b) = f {
            f = b;
            n += 1;
        }
        (n, f)
    }

    /// Splits `p1 -> p2 -> ... -> c` into premises and conclusion.
    pub fn split_implications(&self) -> (Vec<&Formula>, &Formula) {
        let mut f = self;
        let mut premises = Vec::new();
        while let Formula::Implies(p, c) = f {
            premises.push(p.as_ref());
            f = c;
        }
        (premises, f)
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::Eq(l, r) => 1 + l.size() + r.size(),
            Formula::Implies(p, c) => 1 + p.size() + c.size(),
            Formula::Forall(b) => 1 + b.size(),
        }
    }
}
