use super::matching::{instantiate_formula, instantiate_term, match_formula, match_term};
use super::{
    Argument, BaseTactic, DefKind, Definition, Environment, Formula, Hypothesis, ProofScript, ProofState,
    TacticInvocation, Term,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TacticError {
    #[error("pattern does not match")]
    NoMatch,
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("tactic not applicable: {0}")]
    NotApplicable(&'static str),
}

/// Runs one tactic on one goal and returns the replacement subgoals.
pub fn apply_tactic(
    state: &ProofState,
    inv: &TacticInvocation,
    env: &Environment,
) -> Result<Vec<ProofState>, TacticError> {
    if inv.args.len() != inv.base.slots() {
        return Err(TacticError::BadArgument(format!(
            "{} takes {} arguments, got {}",
            inv.base.name(),
            inv.base.slots(),
            inv.args.len()
        )));
    }
    match inv.base {
        BaseTactic::Intro => intro(state),
        BaseTactic::Reflexivity => match &state.goal {
            Formula::Eq(l, r) if l == r => Ok(vec![]),
            Formula::Eq(..) => Err(TacticError::NoMatch),
            _ => Err(TacticError::NotApplicable("reflexivity needs an equation")),
        },
        BaseTactic::Symmetry => match &state.goal {
            Formula::Eq(l, r) => Ok(vec![ProofState {
                context: state.context.clone(),
                goal: Formula::Eq(r.clone(), l.clone()),
            }]),
            _ => Err(TacticError::NotApplicable("symmetry needs an equation")),
        },
        BaseTactic::Exact => {
            let fact = resolve(state, inv.args[0], env)?;
            if *fact == state.goal {
                Ok(vec![])
            } else {
                Err(TacticError::NoMatch)
            }
        }
        BaseTactic::Apply => apply(state, resolve(state, inv.args[0], env)?),
        BaseTactic::Rewrite => {
            let fact = resolve(state, inv.args[0], env)?;
            let goal = rewrite_formula(fact, &state.goal)?;
            Ok(vec![ProofState { context: state.context.clone(), goal }])
        }
        BaseTactic::RewriteIn => {
            let fact = resolve(state, inv.args[0], env)?;
            let Argument::Local(h) = inv.args[1] else {
                return Err(TacticError::BadArgument("rewrite target must be a hypothesis".into()));
            };
            let target = match state.context.get(h as usize) {
                Some(Hypothesis::Prop(f)) => f,
                Some(Hypothesis::Var) => {
                    return Err(TacticError::BadArgument(format!("h{h} is not a proposition")))
                }
                None => return Err(TacticError::BadArgument(format!("no hypothesis h{h}"))),
            };
            let rewritten = rewrite_formula(fact, target)?;
            let mut context = state.context.clone();
            context[h as usize] = Hypothesis::Prop(rewritten);
            Ok(vec![ProofState { context, goal: state.goal.clone() }])
        }
    }
}

fn intro(state: &ProofState) -> Result<Vec<ProofState>, TacticError> {
    let mut context = state.context.clone();
    let goal = match &state.goal {
        Formula::Forall(body) => {
            let n = context.len() as u32;
            context.push(Hypothesis::Var);
            body.open(&Term::Local(n))
        }
        Formula::Implies(p, c) => {
            context.push(Hypothesis::Prop((**p).clone()));
            (**c).clone()
        }
        Formula::Eq(..) => return Err(TacticError::NotApplicable("nothing to introduce")),
    };
    Ok(vec![ProofState { context, goal }])
}

fn resolve<'a>(state: &'a ProofState, arg: Argument, env: &'a Environment) -> Result<&'a Formula, TacticError> {
    match arg {
        Argument::Local(h) => match state.context.get(h as usize) {
            Some(Hypothesis::Prop(f)) => Ok(f),
            Some(Hypothesis::Var) => Err(TacticError::BadArgument(format!("h{h} is not a proposition"))),
            None => Err(TacticError::BadArgument(format!("no hypothesis h{h}"))),
        },
        Argument::Global(d) => match env.get(d) {
            Some(Definition { kind: DefKind::DefiningEquation | DefKind::Theorem, statement: Some(f), .. }) => Ok(f),
            Some(def) => Err(TacticError::BadArgument(format!("{} has no statement", def.name))),
            None => Err(TacticError::BadArgument(format!("unknown definition {d}"))),
        },
    }
}

fn apply(state: &ProofState, fact: &Formula) -> Result<Vec<ProofState>, TacticError> {
    let (depth, body) = fact.strip_foralls();
    let (premises, conclusion) = body.split_implications();
    let sigma = match_formula(conclusion, depth, &state.goal).ok_or(TacticError::NoMatch)?;
    if sigma.iter().any(Option::is_none) {
        return Err(TacticError::NoMatch);
    }
    premises
        .into_iter()
        .map(|p| {
            let goal = instantiate_formula(p, &sigma).ok_or(TacticError::NoMatch)?;
            Ok(ProofState { context: state.context.clone(), goal })
        })
        .collect()
}

/// Rewrites the leftmost-outermost instance of the fact's left-hand side.
fn rewrite_formula(fact: &Formula, target: &Formula) -> Result<Formula, TacticError> {
    let (depth, body) = fact.strip_foralls();
    let Formula::Eq(lhs, rhs) = body else {
        return Err(TacticError::NotApplicable("rewrite needs an unconditional equation"));
    };
    let mut done = false;
    let out = rewrite_in_formula(target, lhs, rhs, depth, &mut done);
    if done {
        Ok(out)
    } else {
        Err(TacticError::NoMatch)
    }
}

fn rewrite_in_formula(f: &Formula, lhs: &Term, rhs: &Term, depth: u32, done: &mut bool) -> Formula {
    if *done {
        return f.clone();
    }
    match f {
        Formula::Eq(l, r) => {
            let l = rewrite_in_term(l, lhs, rhs, depth, done);
            let r = rewrite_in_term(r, lhs, rhs, depth, done);
            Formula::Eq(l, r)
        }
        Formula::Implies(p, c) => {
            let p = rewrite_in_formula(p, lhs, rhs, depth, done);
            let c = rewrite_in_formula(c, lhs, rhs, depth, done);
            Formula::implies(p, c)
        }
        Formula::Forall(b) => Formula::forall(rewrite_in_formula(b, lhs, rhs, depth, done)),
    }
}

fn rewrite_in_term(t: &Term, lhs: &Term, rhs: &Term, depth: u32, done: &mut bool) -> Term {
    if *done {
        return t.clone();
    }
    if let Some(sigma) = match_term(lhs, depth, t) {
        if let Some(replacement) = instantiate_term(rhs, &sigma) {
            *done = true;
            return replacement;
        }
    }
    match t {
        Term::App(f, args) => {
            Term::App(*f, args.iter().map(|a| rewrite_in_term(a, lhs, rhs, depth, done)).collect())
        }
        other => other.clone(),
    }
}

/// Replays `script` against a single initial goal. Returns the remaining goal
/// stack (front first), or the index of the first rejected step.
pub fn replay(
    initial: ProofState,
    script: &ProofScript,
    env: &Environment,
) -> Result<Vec<ProofState>, (usize, TacticError)> {
    // Stored back-to-front so the current goal is the last element.
    let mut stack = vec![initial];
    for (i, inv) in script.0.iter().enumerate() {
        let Some(goal) = stack.pop() else {
            return Err((i, TacticError::NotApplicable("no goals left")));
        };
        let subgoals = apply_tactic(&goal, inv, env).map_err(|e| (i, e))?;
        stack.extend(subgoals.into_iter().rev());
    }
    stack.reverse();
    Ok(stack)
}

/// True iff `script` closes the theorem's statement.
pub fn check_proof(theorem: &Definition, script: &ProofScript, env: &Environment) -> bool {
    if theorem.kind != DefKind::Theorem {
        return false;
    }
    let Some(stmt) = &theorem.statement else {
        return false;
    };
    matches!(replay(ProofState::new(stmt.clone()), script, env), Ok(rest) if rest.is_empty())
}
