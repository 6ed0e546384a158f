//! One-sided first-order matching.
//!
//! Pattern variables are the bound indices `0..depth` of a pattern whose
//! leading quantifiers were stripped. Target variables are rigid.

use super::{Formula, Term};

/// `sigma[i]` is the value of pattern variable `i`.
pub type Substitution = Vec<Option<Term>>;

/// Matches `pattern` (with `depth` matchable variables) against `target`.
pub fn match_term(pattern: &Term, depth: u32, target: &Term) -> Option<Substitution> {
    let mut sigma = vec![None; depth as usize];
    match_term_into(pattern, depth, 0, target, &mut sigma).then_some(sigma)
}

/// Matches a formula pattern; inner binders of the pattern must line up with
/// binders of the target.
pub fn match_formula(pattern: &Formula, depth: u32, target: &Formula) -> Option<Substitution> {
    let mut sigma = vec![None; depth as usize];
    match_formula_into(pattern, depth, 0, target, &mut sigma).then_some(sigma)
}

pub(crate) fn match_term_into(
    pattern: &Term,
    depth: u32,
    binders: u32,
    target: &Term,
    sigma: &mut Substitution,
) -> bool {
    match (pattern, target) {
        (Term::Bound(i), _) if *i < binders => target == pattern,
        (Term::Bound(i), _) => {
            let var = (i - binders) as usize;
            if var >= depth as usize {
                return false;
            }
            // The value may not capture a binder local to the pattern.
            if target.min_bound().is_some_and(|m| m < binders) {
                return false;
            }
            let value = target.shift(binders, -(binders as i64));
            match &sigma[var] {
                Some(existing) => *existing == value,
                None => {
                    sigma[var] = Some(value);
                    true
                }
            }
        }
        (Term::App(f, ps), Term::App(g, ts)) => {
            f == g
                && ps.len() == ts.len()
                && ps.iter().zip(ts).all(|(p, t)| match_term_into(p, depth, binders, t, sigma))
        }
        (Term::App(..), _) => false,
        (p, t) => p == t,
    }
}

fn match_formula_into(
    pattern: &Formula,
    depth: u32,
    binders: u32,
    target: &Formula,
    sigma: &mut Substitution,
) -> bool {
    match (pattern, target) {
        (Formula::Eq(pl, pr), Formula::Eq(tl, tr)) => {
            match_term_into(pl, depth, binders, tl, sigma) && match_term_into(pr, depth, binders, tr, sigma)
        }
        (Formula::Implies(pp, pc), Formula::Implies(tp, tc)) => {
            match_formula_into(pp, depth, binders, tp, sigma) && match_formula_into(pc, depth, binders, tc, sigma)
        }
        (Formula::Forall(pb), Formula::Forall(tb)) => match_formula_into(pb, depth, binders + 1, tb, sigma),
        _ => false,
    }
}

/// Replaces pattern variables by their values. Returns `None` when a variable
/// occurring in `t` is unassigned.
pub fn instantiate_term(t: &Term, sigma: &Substitution) -> Option<Term> {
    inst_term(t, sigma, 0)
}

pub fn instantiate_formula(f: &Formula, sigma: &Substitution) -> Option<Formula> {
    inst_formula(f, sigma, 0)
}

fn inst_term(t: &Term, sigma: &Substitution, binders: u32) -> Option<Term> {
    Some(match t {
        Term::Bound(i) if *i < binders => t.clone(),
        Term::Bound(i) => {
            let var = (i - binders) as usize;
            if var < sigma.len() {
                sigma[var].as_ref()?.shift(0, binders as i64)
            } else {
                Term::Bound(i - sigma.len() as u32)
            }
        }
        Term::App(f, args) => {
            Term::App(*f, args.iter().map(|a| inst_term(a, sigma, binders)).collect::<Option<_>>()?)
        }
        other => other.clone(),
    })
}

fn inst_formula(f: &Formula, sigma: &Substitution, binders: u32) -> Option<Formula> {
    Some(match f {
        Formula::Eq(l, r) => Formula::Eq(inst_term(l, sigma, binders)?, inst_term(r, sigma, binders)?),
        Formula::Implies(p, c) => {
            Formula::implies(inst_formula(p, sigma, binders)?, inst_formula(c, sigma, binders)?)
        }
        Formula::Forall(b) => Formula::forall(inst_formula(b, sigma, binders + 1)?),
    })
}

#[cfg(test)]
mod tests {
    use super::super::DefId;
    use super::*;

    fn app(f: u32, args: Vec<Term>) -> Term {
        Term::App(DefId(f), args)
    }
    fn c(i: u32) -> Term {
        Term::Const(DefId(i))
    }

    const G: u32 = 10;
    const H: u32 = 11;
    const K: u32 = 12;

    #[test]
    fn matches_unary_pattern() {
        let sigma = match_term(&app(G, vec![Term::Bound(0)]), 1, &app(G, vec![c(1)])).unwrap();
        assert_eq!(sigma, vec![Some(c(1))]);
    }

    #[test]
    fn head_mismatch_fails() {
        assert!(match_term(&app(G, vec![Term::Bound(0)]), 1, &app(H, vec![c(1)])).is_none());
    }

    /// Every candidate substitution drawn from the constants of the target,
    /// checked by instantiating and comparing.
    fn brute_force(pattern: &Term, depth: u32, target: &Term) -> Vec<Substitution> {
        let mut consts: Vec<Term> = target.preorder().into_iter().cloned().collect();
        consts.sort();
        consts.dedup();
        let mut found = Vec::new();
        let n = depth as usize;
        let total = consts.len().pow(n as u32);
        for code in 0..total {
            let mut sigma = Vec::with_capacity(n);
            let mut rest = code;
            for _ in 0..n {
                sigma.push(Some(consts[rest % consts.len()].clone()));
                rest /= consts.len();
            }
            if instantiate_term(pattern, &sigma).as_ref() == Some(target) {
                found.push(sigma);
            }
        }
        found
    }

    #[test]
    fn nonlinear_mismatch_fails_like_brute_force() {
        let pattern = app(K, vec![Term::Bound(0), Term::Bound(0)]);
        let target = app(K, vec![c(1), c(2)]);
        assert!(brute_force(&pattern, 1, &target).is_empty());
        assert!(match_term(&pattern, 1, &target).is_none());

        let same = app(K, vec![c(1), c(1)]);
        assert_eq!(brute_force(&pattern, 1, &same).len(), 1);
        assert_eq!(match_term(&pattern, 1, &same), Some(vec![Some(c(1))]));
    }

    #[test]
    fn matching_agrees_with_brute_force_on_small_terms() {
        let pats = [
            app(K, vec![Term::Bound(0), Term::Bound(1)]),
            app(K, vec![Term::Bound(1), app(G, vec![Term::Bound(0)])]),
            app(G, vec![app(G, vec![Term::Bound(0)])]),
        ];
        let targets = [
            app(K, vec![c(1), app(G, vec![c(2)])]),
            app(K, vec![app(G, vec![c(1)]), app(G, vec![c(1)])]),
            app(G, vec![app(G, vec![c(3)])]),
        ];
        for p in &pats {
            for t in &targets {
                let oracle = brute_force(p, 2, t);
                let got = match_term(p, 2, t);
                // Unused variables stay unassigned in the matcher, so compare
                // through instantiation-equivalence on assigned slots.
                match got {
                    None => assert!(oracle.is_empty(), "{p:?} vs {t:?}"),
                    Some(sigma) => {
                        assert!(!oracle.is_empty(), "{p:?} vs {t:?}");
                        assert!(oracle.iter().any(|o| o
                            .iter()
                            .zip(&sigma)
                            .all(|(a, b)| b.is_none() || a == b)));
                    }
                }
            }
        }
    }

    #[test]
    fn formula_binders_are_not_captured() {
        // pattern: forall y. x0 = y  vs target: forall y. y = y
        let pattern = Formula::forall(Formula::eq(Term::Bound(1), Term::Bound(0)));
        let target = Formula::forall(Formula::eq(Term::Bound(0), Term::Bound(0)));
        assert!(match_formula(&pattern, 1, &target).is_none());
        let target = Formula::forall(Formula::eq(c(4), Term::Bound(0)));
        assert_eq!(match_formula(&pattern, 1, &target), Some(vec![Some(c(4))]));
    }
}
