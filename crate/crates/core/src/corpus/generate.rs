//! Synthetic multi-package developments over free algebraic signatures.
//!
//! Package 0 declares primitive symbols. Every later package imports a few
//! earlier packages and introduces fresh symbols, each with its defining
//! equations (unfoldings, abbreviations, units and homomorphisms over
//! imported operations). Theorems are built forward: a random term is
//! rewritten by a random chain of equations, and the chain becomes the
//! ground-truth script. Every script is replay-checked before emission.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, CorpusError, CorpusSpec, Package};
use crate::kernel::{
    apply_tactic, check_proof, Argument, BaseTactic, DefId, DefKind, Definition, Environment, Formula, Hypothesis,
    PackageId, ProofScript, ProofState, TacticInvocation, Term,
};

const PRIMITIVES: [(&str, u32); 7] = [("e", 0), ("a", 0), ("b", 0), ("s", 1), ("inv", 1), ("op", 2), ("mul", 2)];
const MAX_TERM_SIZE: usize = 40;
const RETRIES: usize = 200;

/// Closes a body over `Local(0..k)` with `k` binders (`Local(0)` outermost).
pub(crate) fn close(body: Formula, k: u32) -> Formula {
    (0..k).rev().fold(body, |f, j| Formula::forall(f.abstract_local(j)))
}

/// Opens the leading binders of `f` with `values`, outermost first.
fn instantiate(f: &Formula, values: &[Term]) -> Formula {
    let mut out = f.clone();
    for v in values {
        out = match out {
            Formula::Forall(b) => b.open(v),
            other => panic!("not enough binders in {other:?}"),
        };
    }
    out
}

fn locals(k: u32) -> Vec<Hypothesis> {
    vec![Hypothesis::Var; k as usize]
}

fn nullary(t: BaseTactic) -> TacticInvocation {
    TacticInvocation::nullary(t)
}

fn intros(k: u32) -> Vec<TacticInvocation> {
    vec![nullary(BaseTactic::Intro); k as usize]
}

struct Scope {
    symbols: Vec<(DefId, u32)>,
    /// `symbols[..imported]` come from imported packages.
    imported: usize,
    equations: Vec<DefId>,
    /// Equations of the current package (a subset of `equations`).
    local_equations: HashSet<DefId>,
}

struct Gen<'e> {
    env: &'e mut Environment,
    rng: ChaCha8Rng,
    pkg: PackageId,
    prefix: String,
}

impl Gen<'_> {
    fn add(&mut self, name: String, kind: DefKind, defines: Option<DefId>, statement: Option<Formula>) -> DefId {
        let def = Definition {
            id: self.env.next_id(),
            kind,
            statement,
            package: self.pkg,
            name,
            defines,
            proof: None,
        };
        self.env.add(def).expect("generated definitions are well formed")
    }

    /// A random term over `Local(0..vars)`; with probability `p_redex` a
    /// subterm is an instance of an equation's left-hand side.
    /// Symbols of the current package are drawn preferentially when `local`
    /// is set and never otherwise.
    fn term(&mut self, depth: u32, vars: u32, scope: &Scope, eqs: &[DefId], p_redex: f64, local: bool) -> Term {
        let pool = self.symbol_pool(scope, local);
        let leaf = depth == 0 || self.rng.gen_bool(0.25);
        if leaf {
            let mut consts: Vec<DefId> = pool.iter().filter(|(_, a)| *a == 0).map(|(d, _)| *d).collect();
            if consts.is_empty() {
                consts = scope.symbols[..scope.imported].iter().filter(|(_, a)| *a == 0).map(|(d, _)| *d).collect();
            }
            if vars > 0 && (consts.is_empty() || self.rng.gen_bool(0.6)) {
                return Term::Local(self.rng.gen_range(0..vars));
            }
            return Term::Const(*consts.choose(&mut self.rng).expect("package 0 declares constants"));
        }
        if !eqs.is_empty() && self.rng.gen_bool(p_redex) {
            let eq = *eqs.choose(&mut self.rng).unwrap();
            let stmt = self.env.def(eq).statement.clone().unwrap();
            let (n, _) = stmt.strip_foralls();
            let args: Vec<Term> =
                (0..n).map(|_| self.term(depth - 1, vars, scope, eqs, p_redex * 0.5, local)).collect();
            if let Formula::Eq(lhs, _) = instantiate(&stmt, &args) {
                return lhs;
            }
        }
        let funs: Vec<(DefId, u32)> = pool.iter().filter(|(_, a)| *a > 0).copied().collect();
        let (f, arity) = *funs.choose(&mut self.rng).expect("package 0 declares functions");
        Term::App(f, (0..arity).map(|_| self.term(depth - 1, vars, scope, eqs, p_redex, local)).collect())
    }

    fn symbol_pool<'s>(&mut self, scope: &'s Scope, local: bool) -> &'s [(DefId, u32)] {
        let own = &scope.symbols[scope.imported..];
        if !local {
            &scope.symbols[..scope.imported]
        } else if !own.is_empty() && self.rng.gen_bool(0.4) && own.iter().any(|(_, a)| *a > 0) {
            own
        } else {
            &scope.symbols
        }
    }

    /// Rewrites `t` (the left side of a goal) with `eq` if it matches.
    fn rewrite_left(&self, t: &Term, eq: DefId, vars: u32) -> Option<Term> {
        let st = ProofState { context: locals(vars), goal: Formula::Eq(t.clone(), t.clone()) };
        let inv = TacticInvocation::new(BaseTactic::Rewrite, vec![Argument::Global(eq)]);
        match apply_tactic(&st, &inv, self.env).ok()?.pop()?.goal {
            Formula::Eq(l, _) if l != *t => Some(l),
            _ => None,
        }
    }

    /// A rewrite chain from a random term; returns (start, end, steps).
    fn chain(&mut self, vars: u32, scope: &Scope, eqs: &[DefId], need_local: bool, max: usize) -> Option<(Term, Term, Vec<DefId>)> {
        let start = self.term(3, vars, scope, eqs, 0.5, need_local);
        if start.size() > MAX_TERM_SIZE {
            return None;
        }
        let target = self.rng.gen_range(1..=max);
        let mut cur = start.clone();
        let mut steps = Vec::new();
        for _ in 0..target {
            let cands: Vec<(DefId, Term)> =
                eqs.iter().filter_map(|e| self.rewrite_left(&cur, *e, vars).map(|t| (*e, t))).collect();
            let Some((e, next)) = cands.choose(&mut self.rng).cloned() else { break };
            if next.size() > MAX_TERM_SIZE {
                break;
            }
            steps.push(e);
            cur = next;
        }
        let uses_local = steps.iter().any(|e| scope.local_equations.contains(e));
        if steps.is_empty() || cur == start || (need_local && !uses_local) {
            return None;
        }
        Some((start, cur, steps))
    }

    fn rewrites(steps: &[DefId], hyp: Option<u32>) -> Vec<TacticInvocation> {
        steps
            .iter()
            .map(|e| match hyp {
                None => TacticInvocation::new(BaseTactic::Rewrite, vec![Argument::Global(*e)]),
                Some(h) => TacticInvocation::new(BaseTactic::RewriteIn, vec![Argument::Global(*e), Argument::Local(h)]),
            })
            .collect()
    }

    /// One candidate theorem (statement, script) of a random family.
    fn theorem(&mut self, scope: &Scope, lemmas: &[DefId], local: bool, max: usize) -> Option<(Formula, ProofScript)> {
        let eqs: Vec<DefId> = if local {
            scope.equations.clone()
        } else {
            scope.equations.iter().copied().filter(|e| !scope.local_equations.contains(e)).collect()
        };
        let vars = self.rng.gen_range(0..=2u32);
        let family = self.rng.gen_range(0..100);
        let eq_lemmas: Vec<DefId> =
            lemmas.iter().copied().filter(|t| matches!(self.env.def(*t).statement, Some(ref f) if !is_conditional(f))).collect();
        let hyp_lemmas: Vec<DefId> =
            lemmas.iter().copied().filter(|t| matches!(self.env.def(*t).statement, Some(ref f) if is_conditional(f))).collect();
        let mut script = intros(vars);
        let body = match family {
            0..=19 if !eq_lemmas.is_empty() => {
                let t = *eq_lemmas.choose(&mut self.rng).unwrap();
                let inst = self.lemma_instance(t, vars, scope, local)?;
                script.push(TacticInvocation::new(BaseTactic::Apply, vec![Argument::Global(t)]));
                inst
            }
            20..=29 if !hyp_lemmas.is_empty() => {
                let t = *hyp_lemmas.choose(&mut self.rng).unwrap();
                let inst = self.lemma_instance(t, vars, scope, local)?;
                script.push(nullary(BaseTactic::Intro));
                script.push(TacticInvocation::new(BaseTactic::Apply, vec![Argument::Global(t)]));
                script.push(TacticInvocation::new(BaseTactic::Exact, vec![Argument::Local(vars)]));
                inst
            }
            30..=54 => {
                let (l, r, steps) = self.chain(vars, scope, &eqs, local, max)?;
                let c = self.term(1, vars, scope, &[], 0.0, local);
                script.push(nullary(BaseTactic::Intro));
                script.extend(Self::rewrites(&steps, Some(vars)));
                script.push(TacticInvocation::new(BaseTactic::Exact, vec![Argument::Local(vars)]));
                Formula::implies(Formula::Eq(l, c.clone()), Formula::Eq(r, c))
            }
            55..=69 => {
                let (l, r, steps) = self.chain(vars, scope, &eqs, local, max)?;
                script.push(nullary(BaseTactic::Symmetry));
                script.extend(Self::rewrites(&steps, None));
                script.push(nullary(BaseTactic::Reflexivity));
                Formula::Eq(r, l)
            }
            _ => {
                let (l, r, steps) = self.chain(vars, scope, &eqs, local, max)?;
                script.extend(Self::rewrites(&steps, None));
                script.push(nullary(BaseTactic::Reflexivity));
                Formula::Eq(l, r)
            }
        };
        Some((close(body, vars), ProofScript(script)))
    }

    /// The lemma's statement with its binders replaced by small random terms
    /// over `Local(0..vars)`.
    fn lemma_instance(&mut self, lemma: DefId, vars: u32, scope: &Scope, local: bool) -> Option<Formula> {
        let stmt = self.env.def(lemma).statement.clone()?;
        let (n, _) = stmt.strip_foralls();
        let values: Vec<Term> = (0..n).map(|_| self.term(1, vars, scope, &[], 0.0, local)).collect();
        Some(instantiate(&stmt, &values))
    }
}

fn is_conditional(f: &Formula) -> bool {
    matches!(f.strip_foralls().1, Formula::Implies(..))
}

/// Transitive closure of package imports (excluding `p`).
pub(crate) fn import_closure(packages: &[Package], imports: &[PackageId]) -> BTreeSet<PackageId> {
    let mut out = BTreeSet::new();
    let mut todo: Vec<PackageId> = imports.to_vec();
    while let Some(q) = todo.pop() {
        if out.insert(q) {
            todo.extend(packages[q.0 as usize].imports.iter().copied());
        }
    }
    out
}

fn base_package(env: &mut Environment) -> Package {
    let mut g = Gen { env, rng: ChaCha8Rng::seed_from_u64(0), pkg: PackageId(0), prefix: "P0".into() };
    let defs = PRIMITIVES
        .iter()
        .map(|(n, a)| {
            let name = format!("{}.{n}", g.prefix);
            g.add(name, DefKind::FunctionSymbol { arity: *a }, None, None)
        })
        .collect();
    Package { id: PackageId(0), name: "P0".into(), imports: Vec::new(), defs }
}

/// Generates the whole corpus; a pure function of `spec`.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, CorpusError> {
    let mut env = Environment::new();
    let mut packages = vec![base_package(&mut env)];
    for i in 1..=spec.packages {
        let pkg = generate_package(spec, &mut env, &packages, i)?;
        packages.push(pkg);
    }
    Ok(Corpus { spec: spec.clone(), env, packages })
}

fn generate_package(
    spec: &CorpusSpec,
    env: &mut Environment,
    packages: &[Package],
    i: usize,
) -> Result<Package, CorpusError> {
    let pkg = PackageId(i as u32);
    let prefix = format!("P{i}");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut imports = vec![PackageId(0)];
    if i > 1 {
        let mut earlier: Vec<u32> = (1..i as u32).collect();
        earlier.shuffle(&mut rng);
        let n = rng.gen_range(1..=spec.max_imports.max(1)).min(earlier.len());
        imports.extend(earlier[..n].iter().map(|p| PackageId(*p)));
        imports.sort();
    }
    let closure = import_closure(packages, &imports);
    let mut scope = Scope { symbols: Vec::new(), imported: 0, equations: Vec::new(), local_equations: HashSet::new() };
    let mut imported_lemmas = Vec::new();
    for q in &closure {
        for d in &packages[q.0 as usize].defs {
            let def = env.def(*d);
            match def.kind {
                DefKind::FunctionSymbol { arity } => scope.symbols.push((*d, arity)),
                DefKind::DefiningEquation => scope.equations.push(*d),
                DefKind::Theorem => imported_lemmas.push(*d),
            }
        }
    }
    scope.imported = scope.symbols.len();
    let mut g = Gen { env, rng, pkg, prefix };
    let mut defs = Vec::new();
    for k in 0..spec.symbols_per_package {
        defs.extend(new_symbol(&mut g, &mut scope, k));
    }
    let mut local_lemmas: Vec<DefId> = Vec::new();
    let mut seen: HashSet<Formula> = HashSet::new();
    for t in 0..spec.theorems_per_package {
        let mut done = false;
        let imported_eqs = scope.equations.len() - scope.local_equations.len();
        let local = g.rng.gen_bool(spec.local_fraction) || (imported_eqs == 0 && imported_lemmas.is_empty());
        for _ in 0..RETRIES {
            let lemmas = if local { local_lemmas.clone() } else { imported_lemmas.clone() };
            let Some((stmt, script)) = g.theorem(&scope, &lemmas, local, spec.max_rewrites) else { continue };
            if seen.contains(&stmt) {
                continue;
            }
            let candidate = Definition {
                id: g.env.next_id(),
                kind: DefKind::Theorem,
                statement: Some(stmt.clone()),
                package: pkg,
                name: format!("{}.t{t}", g.prefix),
                defines: None,
                proof: Some(script.clone()),
            };
            if g.env.check_formula(&stmt).is_err() || !stmt.is_closed() || !check_proof(&candidate, &script, g.env) {
                continue;
            }
            let id = g.env.add(candidate).expect("checked above");
            seen.insert(stmt);
            defs.push(id);
            local_lemmas.push(id);
            done = true;
            break;
        }
        if !done {
            return Err(CorpusError::GenerationRetryExhausted { package: i, theorem: t });
        }
    }
    Ok(Package { id: pkg, name: format!("P{i}"), imports, defs })
}

/// Adds one fresh symbol with its defining equations.
fn new_symbol(g: &mut Gen<'_>, scope: &mut Scope, k: usize) -> Vec<DefId> {
    let binary: Vec<DefId> = scope.symbols.iter().filter(|(_, a)| *a == 2).map(|(d, _)| *d).collect();
    let mut out = Vec::new();
    let name = format!("{}.f{k}", g.prefix);
    let roll = g.rng.gen_range(0..100);
    let mut eqs: Vec<(String, Formula)> = Vec::new();
    let sym;
    match roll {
        0..=14 => {
            // Unit of an imported binary operation.
            let op = *binary.choose(&mut g.rng).unwrap();
            sym = g.add(name.clone(), DefKind::FunctionSymbol { arity: 0 }, None, None);
            let x = Term::Local(0);
            eqs.push((
                format!("{name}.unit_r"),
                close(Formula::Eq(Term::App(op, vec![x.clone(), Term::Const(sym)]), x.clone()), 1),
            ));
            eqs.push((format!("{name}.unit_l"), close(Formula::Eq(Term::App(op, vec![Term::Const(sym), x.clone()]), x), 1)));
        }
        15..=34 => {
            // Homomorphism between two binary operations.
            let o1 = *binary.choose(&mut g.rng).unwrap();
            let o2 = *binary.choose(&mut g.rng).unwrap();
            sym = g.add(name.clone(), DefKind::FunctionSymbol { arity: 1 }, None, None);
            let (x, y) = (Term::Local(0), Term::Local(1));
            let lhs = Term::App(sym, vec![Term::App(o1, vec![x.clone(), y.clone()])]);
            let rhs = Term::App(o2, vec![Term::App(sym, vec![x]), Term::App(sym, vec![y])]);
            eqs.push((format!("{name}.hom"), close(Formula::Eq(lhs, rhs), 2)));
        }
        35..=49 => {
            // Abbreviation for a closed term.
            let rhs = g.term(2, 0, scope, &[], 0.0, true);
            sym = g.add(name.clone(), DefKind::FunctionSymbol { arity: 0 }, None, None);
            eqs.push((format!("{name}.def"), Formula::Eq(Term::Const(sym), rhs)));
        }
        _ => {
            // Unfolding definition.
            let arity = g.rng.gen_range(1..=2u32);
            let rhs = g.term(2, arity, scope, &[], 0.0, true);
            sym = g.add(name.clone(), DefKind::FunctionSymbol { arity }, None, None);
            let lhs = Term::App(sym, (0..arity).map(Term::Local).collect());
            eqs.push((format!("{name}.def"), close(Formula::Eq(lhs, rhs), arity)));
        }
    }
    out.push(sym);
    scope.symbols.push((sym, g.env.def(sym).arity().unwrap()));
    for (n, f) in eqs {
        let e = g.add(n, DefKind::DefiningEquation, Some(sym), Some(f));
        scope.equations.push(e);
        scope.local_equations.insert(e);
        out.push(e);
    }
    out
}
