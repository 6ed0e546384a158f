//! Iterative-deepening Dijkstra over the tree of tactic applications.
//!
//! Each iteration is a depth-first search bounded by a cumulative-cost
//! threshold `D`. Suggestions are explored cheapest first. Goals produced by
//! one tactic are independent, so each goal is solved on its own (the
//! cheapest proof within the bound, by branch and bound) and committed
//! before its siblings are attempted; the search never backtracks into a
//! solved subgoal. The total cost of the first proof found therefore equals
//! the Dijkstra optimum. Memory is one frame per tactic on the current path.

use std::collections::HashMap;
use std::fmt::Debug;
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::graph::digest::state_hash;
use crate::kernel::{apply_tactic, Definition, Environment, ProofScript, ProofState, TacticInvocation};

/// A proof-search problem: goals, the suggestions of a model for a goal,
/// and the execution of a suggested action.
pub trait SearchSpace {
    type Goal: Clone;
    type Action: Clone + Debug;

    /// One model call: suggested actions with non-negative step costs.
    fn suggest(&mut self, goal: &Self::Goal) -> Result<Vec<(Self::Action, f64)>, String>;

    /// One tactic execution: the replacement subgoals (empty when the goal
    /// is closed), or `None` when the action is rejected.
    fn apply(&mut self, goal: &Self::Goal, action: &Self::Action) -> Option<Vec<Self::Goal>>;

    /// Identity of a goal for cycle pruning.
    fn key(&self, goal: &Self::Goal) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub wall_time_s: f64,
    pub model_calls: u64,
    pub tactic_executions: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { wall_time_s: 60.0, model_calls: 512, tactic_executions: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Limit {
    WallTime,
    ModelCalls,
    TacticExecutions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Proved,
    /// A budget limit tripped.
    BudgetExhausted(Limit),
    /// An iteration pruned nothing and found no proof.
    SearchExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats<A> {
    pub model_calls: u64,
    pub tactic_executions: u64,
    pub wall_time: f64,
    pub iterations: u32,
    pub solved: bool,
    pub proof: Option<Vec<A>>,
    /// Sum of step costs of the proof.
    pub cost: Option<f64>,
    pub outcome: Outcome,
    /// Suggestion-source errors (treated as empty suggestion lists).
    pub model_failures: u64,
    /// Threshold of every iteration, in order.
    pub thresholds: Vec<f64>,
    /// Peak number of live search frames in the last iteration.
    pub peak_stack: usize,
    /// Longest partial proof (in tactics) explored in the last iteration.
    pub max_path_len: usize,
}

/// Threshold of the next iteration: `D + 1 + D_extra`.
pub fn next_threshold(d_max: f64, d_extra: f64) -> f64 {
    d_max + 1.0 + d_extra
}

type Found<A> = Option<(f64, Vec<A>)>;

struct Run<'s, S: SearchSpace> {
    space: &'s mut S,
    budget: SearchBudget,
    start: Instant,
    calls: u64,
    execs: u64,
    failures: u64,
    cache: HashMap<u64, Rc<Vec<(S::Action, f64)>>>,
    path: Vec<u64>,
    threshold: f64,
    first_excess: Option<f64>,
    frames: usize,
    peak: usize,
    max_len: usize,
}

impl<S: SearchSpace> Run<'_, S> {
    fn check_time(&self) -> Result<(), Limit> {
        if self.start.elapsed() >= Duration::from_secs_f64(self.budget.wall_time_s.max(0.0)) {
            return Err(Limit::WallTime);
        }
        Ok(())
    }

    fn suggestions(&mut self, goal: &S::Goal, key: u64) -> Result<Rc<Vec<(S::Action, f64)>>, Limit> {
        if let Some(s) = self.cache.get(&key) {
            return Ok(s.clone());
        }
        if self.calls >= self.budget.model_calls {
            return Err(Limit::ModelCalls);
        }
        self.check_time()?;
        self.calls += 1;
        let mut list = match self.space.suggest(goal) {
            Ok(l) => l,
            Err(e) => {
                tracing::warn!(error = %e, "suggestion source failed; treating as no suggestions");
                self.failures += 1;
                Vec::new()
            }
        };
        for (_, c) in &mut list {
            *c = if c.is_nan() { f64::INFINITY } else { c.max(0.0) };
        }
        list.sort_by(|a, b| a.1.total_cmp(&b.1));
        let list = Rc::new(list);
        self.cache.insert(key, list.clone());
        Ok(list)
    }

    /// Cheapest proof of `goal` with cumulative cost at most `bound`,
    /// starting from cumulative cost `g` after `len` tactics.
    fn solve_goal(&mut self, goal: &S::Goal, g: f64, mut bound: f64, len: usize) -> Result<Found<S::Action>, Limit> {
        let key = self.space.key(goal);
        if self.path.contains(&key) {
            return Ok(None);
        }
        let suggestions = self.suggestions(goal, key)?;
        self.path.push(key);
        self.frames += 1;
        self.peak = self.peak.max(self.frames);
        let result = self.expand(goal, &suggestions, g, &mut bound, len);
        self.frames -= 1;
        self.path.pop();
        result
    }

    fn expand(
        &mut self,
        goal: &S::Goal,
        suggestions: &[(S::Action, f64)],
        g: f64,
        bound: &mut f64,
        len: usize,
    ) -> Result<Found<S::Action>, Limit> {
        let mut best: Found<S::Action> = None;
        for (action, c) in suggestions {
            let cost = g + c;
            if cost > self.threshold {
                if self.first_excess.is_none() {
                    self.first_excess = Some(cost - self.threshold);
                }
                break;
            }
            if cost > *bound {
                break;
            }
            if self.execs >= self.budget.tactic_executions {
                return Err(Limit::TacticExecutions);
            }
            self.check_time()?;
            self.execs += 1;
            let Some(subgoals) = self.space.apply(goal, action) else { continue };
            self.max_len = self.max_len.max(len + 1);
            if let Some((total, steps)) = self.solve_stack(&subgoals, cost, *bound, len + 1)? {
                if best.as_ref().is_none_or(|(b, _)| total < *b) {
                    let mut proof = Vec::with_capacity(steps.len() + 1);
                    proof.push(action.clone());
                    proof.extend(steps);
                    *bound = total;
                    best = Some((total, proof));
                }
            }
        }
        Ok(best)
    }

    /// Solves independent goals left to right, committing each one.
    fn solve_stack(&mut self, goals: &[S::Goal], g: f64, bound: f64, len: usize) -> Result<Found<S::Action>, Limit> {
        let (mut cur, mut steps) = (g, Vec::new());
        for goal in goals {
            match self.solve_goal(goal, cur, bound, len + steps.len())? {
                Some((c, s)) => {
                    cur = c;
                    steps.extend(s);
                }
                None => return Ok(None),
            }
        }
        Ok(Some((cur, steps)))
    }
}

/// Runs iterative deepening from `root`. The first threshold is the cost of
/// the cheapest suggestion at the root.
pub fn solve<S: SearchSpace>(space: &mut S, root: &S::Goal, budget: SearchBudget) -> SearchStats<S::Action> {
    let mut run = Run {
        space,
        budget,
        start: Instant::now(),
        calls: 0,
        execs: 0,
        failures: 0,
        cache: HashMap::new(),
        path: Vec::new(),
        threshold: 0.0,
        first_excess: None,
        frames: 0,
        peak: 0,
        max_len: 0,
    };
    let mut stats = SearchStats {
        model_calls: 0,
        tactic_executions: 0,
        wall_time: 0.0,
        iterations: 0,
        solved: false,
        proof: None,
        cost: None,
        outcome: Outcome::SearchExhausted,
        model_failures: 0,
        thresholds: Vec::new(),
        peak_stack: 0,
        max_path_len: 0,
    };
    let key = run.space.key(root);
    let outcome = match run.suggestions(root, key) {
        Err(limit) => Outcome::BudgetExhausted(limit),
        Ok(s) if s.is_empty() => Outcome::SearchExhausted,
        Ok(s) => {
            run.threshold = s[0].1;
            loop {
                stats.iterations += 1;
                stats.thresholds.push(run.threshold);
                run.first_excess = None;
                run.peak = 0;
                run.max_len = 0;
                let res = run.solve_goal(root, 0.0, run.threshold, 0);
                stats.peak_stack = run.peak;
                stats.max_path_len = run.max_len;
                match res {
                    Err(limit) => break Outcome::BudgetExhausted(limit),
                    Ok(Some((cost, proof))) => {
                        stats.cost = Some(cost);
                        stats.proof = Some(proof);
                        break Outcome::Proved;
                    }
                    Ok(None) => match run.first_excess {
                        None => break Outcome::SearchExhausted,
                        Some(extra) => {
                            run.threshold = next_threshold(run.threshold, extra);
                            run.cache.clear();
                        }
                    },
                }
            }
        }
    };
    stats.outcome = outcome;
    stats.solved = outcome == Outcome::Proved;
    stats.model_calls = run.calls;
    stats.tactic_executions = run.execs;
    stats.model_failures = run.failures;
    stats.wall_time = run.start.elapsed().as_secs_f64();
    stats
}

/// A tactic-suggestion model for kernel proof states.
pub trait TacticSuggester {
    /// Suggested invocations with step costs (`-log p`).
    fn suggest(&mut self, state: &ProofState) -> Result<Vec<(TacticInvocation, f64)>, String>;
}

impl<F> TacticSuggester for F
where
    F: FnMut(&ProofState) -> Result<Vec<(TacticInvocation, f64)>, String>,
{
    fn suggest(&mut self, state: &ProofState) -> Result<Vec<(TacticInvocation, f64)>, String> {
        self(state)
    }
}

/// The kernel calculus as a search space.
pub struct KernelSpace<'e, M> {
    pub env: &'e Environment,
    pub model: M,
}

impl<M: TacticSuggester> SearchSpace for KernelSpace<'_, M> {
    type Goal = ProofState;
    type Action = TacticInvocation;

    fn suggest(&mut self, goal: &ProofState) -> Result<Vec<(TacticInvocation, f64)>, String> {
        self.model.suggest(goal)
    }

    fn apply(&mut self, goal: &ProofState, action: &TacticInvocation) -> Option<Vec<ProofState>> {
        apply_tactic(goal, action, self.env).ok()
    }

    fn key(&self, goal: &ProofState) -> u64 {
        state_hash(goal)
    }
}

/// Searches for a proof of `theorem`'s statement.
pub fn solve_theorem<M: TacticSuggester>(
    theorem: &Definition,
    env: &Environment,
    model: M,
    budget: SearchBudget,
) -> SearchStats<TacticInvocation> {
    let stmt = theorem.statement.clone().expect("theorems have statements");
    let mut space = KernelSpace { env, model };
    solve(&mut space, &ProofState::new(stmt), budget)
}

impl SearchStats<TacticInvocation> {
    pub fn script(&self) -> Option<ProofScript> {
        self.proof.clone().map(ProofScript)
    }
}
