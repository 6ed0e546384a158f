//! S-expression surface syntax.
//!
//! ```text
//! term     ::= NAME | (NAME term+)            ; bound variable, h<i>, or definition
//! formula  ::= (= term term) | (-> formula formula) | (forall (NAME+) formula)
//! tactic   ::= (intro) | (reflexivity) | (symmetry)
//!            | (exact ARG) | (apply ARG) | (rewrite ARG) | (rewrite-in ARG h<i>)
//! ARG      ::= h<i> | NAME                    ; hypothesis position or definition
//! ```
//!
//! Bound variables print as `x<level>`, where level counts binders from the
//! outside. Context constants and hypotheses print as `h<i>`.

use std::fmt::Write;

use lexpr::Value;

use super::{
    Argument, BaseTactic, Environment, Formula, Hypothesis, ProofScript, ProofState, TacticInvocation, Term,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error: {0}")]
pub struct SyntaxError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, SyntaxError> {
    Err(SyntaxError(msg.into()))
}

/// Parses every top-level s-expression in `src`.
pub fn read_all(src: &str) -> Result<Vec<Value>, SyntaxError> {
    let mut parser = lexpr::Parser::from_str(src);
    let mut out = Vec::new();
    while let Some(v) = parser.next_value().map_err(|e| SyntaxError(e.to_string()))? {
        out.push(v);
    }
    Ok(out)
}

pub fn read_one(src: &str) -> Result<Value, SyntaxError> {
    lexpr::from_str(src).map_err(|e| SyntaxError(e.to_string()))
}

/// `h<digits>`, the hypothesis / context-constant spelling.
pub fn local_index(name: &str) -> Option<u32> {
    let digits = name.strip_prefix('h')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn list(v: &Value) -> Result<Vec<&Value>, SyntaxError> {
    match v.list_iter() {
        Some(it) => Ok(it.collect()),
        None => err(format!("expected a list, found `{v}`")),
    }
}

pub fn symbol(v: &Value) -> Result<&str, SyntaxError> {
    v.as_symbol().ok_or_else(|| SyntaxError(format!("expected a symbol, found `{v}`")))
}

pub fn term_from_value(v: &Value, env: &Environment, bound: &[String]) -> Result<Term, SyntaxError> {
    if let Some(name) = v.as_symbol() {
        if let Some(pos) = bound.iter().rposition(|b| b == name) {
            return Ok(Term::Bound((bound.len() - 1 - pos) as u32));
        }
        if let Some(i) = local_index(name) {
            return Ok(Term::Local(i));
        }
        let id = env.lookup(name).ok_or_else(|| SyntaxError(format!("unknown name `{name}`")))?;
        return Ok(Term::Const(id));
    }
    let items = list(v)?;
    let (head, args) = items.split_first().ok_or_else(|| SyntaxError("empty application".into()))?;
    let name = symbol(head)?;
    let id = env.lookup(name).ok_or_else(|| SyntaxError(format!("unknown function `{name}`")))?;
    let args = args.iter().map(|a| term_from_value(a, env, bound)).collect::<Result<_, _>>()?;
    Ok(Term::App(id, args))
}

pub fn formula_from_value(v: &Value, env: &Environment, bound: &mut Vec<String>) -> Result<Formula, SyntaxError> {
    let items = list(v)?;
    let Some((head, rest)) = items.split_first() else {
        return err("empty formula");
    };
    match (symbol(head)?, rest) {
        ("=", [l, r]) => Ok(Formula::Eq(term_from_value(l, env, bound)?, term_from_value(r, env, bound)?)),
        ("->", [p, c]) => Ok(Formula::implies(formula_from_value(p, env, bound)?, formula_from_value(c, env, bound)?)),
        ("forall", [vars, body]) => {
            let vars = list(vars)?;
            if vars.is_empty() {
                return err("forall without variables");
            }
            let before = bound.len();
            for var in &vars {
                bound.push(symbol(var)?.to_string());
            }
            let body = formula_from_value(body, env, bound);
            bound.truncate(before);
            Ok(Formula::forall_n(vars.len() as u32, body?))
        }
        (other, _) => err(format!("malformed formula `({other} ...)`")),
    }
}

/// Parses and arity-checks a closed formula.
pub fn parse_formula(src: &str, env: &Environment) -> Result<Formula, SyntaxError> {
    let f = formula_from_value(&read_one(src)?, env, &mut Vec::new())?;
    env.check_formula(&f).map_err(|e| SyntaxError(e.to_string()))?;
    Ok(f)
}

fn argument_from_value(v: &Value, env: &Environment) -> Result<Argument, SyntaxError> {
    let name = symbol(v)?;
    if let Some(i) = local_index(name) {
        return Ok(Argument::Local(i));
    }
    env.lookup(name)
        .map(Argument::Global)
        .ok_or_else(|| SyntaxError(format!("unknown argument `{name}`")))
}

pub fn tactic_from_value(v: &Value, env: &Environment) -> Result<TacticInvocation, SyntaxError> {
    let items = list(v)?;
    let Some((head, rest)) = items.split_first() else {
        return err("empty tactic");
    };
    let name = symbol(head)?;
    let base = BaseTactic::from_name(name).ok_or_else(|| SyntaxError(format!("unknown tactic `{name}`")))?;
    if rest.len() != base.slots() {
        return err(format!("`{name}` takes {} arguments", base.slots()));
    }
    let args = rest.iter().map(|a| argument_from_value(a, env)).collect::<Result<_, _>>()?;
    Ok(TacticInvocation { base, args })
}

/// Parses a whitespace-separated sequence of tactics.
pub fn parse_script(src: &str, env: &Environment) -> Result<ProofScript, SyntaxError> {
    read_all(src)?.iter().map(|v| tactic_from_value(v, env)).collect::<Result<_, _>>().map(ProofScript)
}

fn def_name(env: &Environment, id: super::DefId) -> String {
    env.get(id).map(|d| d.name.clone()).unwrap_or_else(|| format!("?{}", id.0))
}

pub fn print_term(t: &Term, env: &Environment, binders: u32) -> String {
    let mut out = String::new();
    write_term(&mut out, t, env, binders);
    out
}

fn write_term(out: &mut String, t: &Term, env: &Environment, binders: u32) {
    match t {
        Term::Bound(i) if *i < binders => write!(out, "x{}", binders - 1 - i).unwrap(),
        Term::Bound(i) => write!(out, "?free{i}").unwrap(),
        Term::Local(i) => write!(out, "h{i}").unwrap(),
        Term::Const(d) => out.push_str(&def_name(env, *d)),
        Term::App(f, args) => {
            out.push('(');
            out.push_str(&def_name(env, *f));
            for a in args {
                out.push(' ');
                write_term(out, a, env, binders);
            }
            out.push(')');
        }
    }
}

pub fn print_formula(f: &Formula, env: &Environment) -> String {
    let mut out = String::new();
    write_formula(&mut out, f, env, 0);
    out
}

fn write_formula(out: &mut String, f: &Formula, env: &Environment, binders: u32) {
    match f {
        Formula::Eq(l, r) => {
            out.push_str("(= ");
            write_term(out, l, env, binders);
            out.push(' ');
            write_term(out, r, env, binders);
            out.push(')');
        }
        Formula::Implies(p, c) => {
            out.push_str("(-> ");
            write_formula(out, p, env, binders);
            out.push(' ');
            write_formula(out, c, env, binders);
            out.push(')');
        }
        Formula::Forall(_) => {
            let (n, body) = f.strip_foralls();
            out.push_str("(forall (");
            for k in 0..n {
                if k > 0 {
                    out.push(' ');
                }
                write!(out, "x{}", binders + k).unwrap();
            }
            out.push_str(") ");
            write_formula(out, body, env, binders + n);
            out.push(')');
        }
    }
}

pub fn print_tactic(inv: &TacticInvocation, env: &Environment) -> String {
    let mut out = format!("({}", inv.base.name());
    for arg in &inv.args {
        out.push(' ');
        match arg {
            Argument::Local(i) => write!(out, "h{i}").unwrap(),
            Argument::Global(d) => out.push_str(&def_name(env, *d)),
        }
    }
    out.push(')');
    out
}

pub fn print_script(script: &ProofScript, env: &Environment) -> String {
    script.0.iter().map(|t| print_tactic(t, env)).collect::<Vec<_>>().join(" ")
}

/// Human-readable rendering of a proof state, one hypothesis per line.
pub fn print_state(state: &ProofState, env: &Environment) -> String {
    let mut out = String::new();
    for (i, h) in state.context.iter().enumerate() {
        match h {
            Hypothesis::Var => writeln!(out, "h{i} : term").unwrap(),
            Hypothesis::Prop(f) => writeln!(out, "h{i} : {}", print_formula(f, env)).unwrap(),
        }
    }
    write!(out, "|- {}", print_formula(&state.goal, env)).unwrap();
    out
}
