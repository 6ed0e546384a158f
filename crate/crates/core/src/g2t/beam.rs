use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::heads::StateInput;
use super::{Model, ModelError};
use crate::autodiff::{ParamStore, Tape};
use crate::kernel::{Argument, BaseTactic, DefId, TacticInvocation};

/// Argument candidates in the order the model scores them: locals first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Candidates {
    pub locals: Vec<u32>,
    pub globals: Vec<DefId>,
}

impl Candidates {
    pub fn len(&self) -> usize {
        self.locals.len() + self.globals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn argument(&self, i: usize) -> Argument {
        if i < self.locals.len() {
            Argument::Local(self.locals[i])
        } else {
            Argument::Global(self.globals[i - self.locals.len()])
        }
    }

    pub fn index_of(&self, a: Argument) -> Option<usize> {
        match a {
            Argument::Local(p) => self.locals.iter().position(|x| *x == p),
            Argument::Global(d) => self.globals.iter().position(|x| *x == d).map(|i| i + self.locals.len()),
        }
    }
}

/// Per-slot argument log-probabilities of one base tactic (`None`: the slot
/// has no candidates).
#[derive(Debug, Clone, PartialEq)]
pub struct ArgumentDistribution {
    pub slots: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub tactic: TacticInvocation,
    pub log_prob: f64,
}

#[derive(Debug, Clone)]
struct Entry {
    log_prob: f64,
    tactic: BaseTactic,
    args: Vec<usize>,
}

fn order(a: &Entry, b: &Entry) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then(a.tactic.id().cmp(&b.tactic.id()))
        .then_with(|| a.args.cmp(&b.args))
}

struct Merge {
    entry: Entry,
    parent: usize,
    rank: usize,
}

impl PartialEq for Merge {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Merge {}

impl PartialOrd for Merge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Merge {
    /// The better entry is the greater one (max-heap pops it first).
    fn cmp(&self, other: &Self) -> Ordering {
        order(&other.entry, &self.entry)
    }
}

/// Beam search over the base tactic and then each argument slot. Entries
/// are ordered by total log-probability, ties by lower tactic id and then by
/// lexicographically smaller argument indices. Tactics with a slot that has
/// no candidates can never be completed and are dropped before the first
/// truncation, so a width of at least the number of complete invocations
/// returns all of them.
pub fn beam_search(
    tactics: &[(BaseTactic, f64)],
    args: &dyn Fn(BaseTactic) -> ArgumentDistribution,
    cands: &Candidates,
    width: usize,
) -> Vec<Prediction> {
    // Per tactic: each slot's candidate indices, best first (ties by index).
    let mut ranked: Vec<(BaseTactic, ArgumentDistribution, Vec<Vec<usize>>)> = Vec::new();
    let mut beam: Vec<Entry> = Vec::new();
    for &(tactic, lp) in tactics {
        if tactic.slots() > 0 {
            let d = args(tactic);
            let r: Option<Vec<Vec<usize>>> = (0..tactic.slots())
                .map(|slot| {
                    let lp = d.slots.get(slot)?.as_ref()?;
                    let mut idx: Vec<usize> = (0..lp.len()).collect();
                    idx.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
                    (!idx.is_empty()).then_some(idx)
                })
                .collect();
            let Some(r) = r else { continue };
            ranked.push((tactic, d, r));
        }
        beam.push(Entry { log_prob: lp, tactic, args: Vec::new() });
    }
    beam.sort_by(order);
    beam.truncate(width);
    let max_slots = beam.iter().map(|e| e.tactic.slots()).max().unwrap_or(0);
    for slot in 0..max_slots {
        // Each parent's children come out in beam order, so a k-way merge
        // of the parents yields the global order without expanding them all.
        let child = |e: &Entry, rank: usize| -> Option<Entry> {
            if e.tactic.slots() <= slot {
                return (rank == 0).then(|| e.clone());
            }
            let (_, d, r) = ranked.iter().find(|(t, _, _)| *t == e.tactic).expect("ranked above");
            let lp = d.slots[slot].as_ref().expect("completable");
            let j = *r[slot].get(rank)?;
            let mut a = e.args.clone();
            a.push(j);
            Some(Entry { log_prob: e.log_prob + lp[j], tactic: e.tactic, args: a })
        };
        let mut heap = BinaryHeap::new();
        for (parent, e) in beam.iter().enumerate() {
            if let Some(c) = child(e, 0) {
                heap.push(Merge { entry: c, parent, rank: 0 });
            }
        }
        let mut next = Vec::with_capacity(width);
        while next.len() < width {
            let Some(Merge { entry, parent, rank }) = heap.pop() else { break };
            if let Some(c) = child(&beam[parent], rank + 1) {
                heap.push(Merge { entry: c, parent, rank: rank + 1 });
            }
            next.push(entry);
        }
        beam = next;
    }
    beam.into_iter()
        .map(|e| Prediction {
            tactic: TacticInvocation::new(e.tactic, e.args.iter().map(|&i| cands.argument(i)).collect()),
            log_prob: e.log_prob,
        })
        .collect()
}

impl Model {
    pub fn candidates(input: &StateInput) -> Candidates {
        Candidates { locals: input.local_positions.clone(), globals: input.global_defs.clone() }
    }

    /// Tactic and argument distributions of one state, evaluated without
    /// dropout.
    pub fn distributions(
        &self,
        input: &StateInput,
    ) -> Result<(Vec<(BaseTactic, f64)>, Vec<(BaseTactic, ArgumentDistribution)>), ModelError> {
        let params: &ParamStore = &self.params;
        let mut tape = Tape::new(params);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.state_forward(&mut tape, input, false, &mut rng)?;
        let tlp = tape.value(out.tactic_log_probs).data.clone();
        let tactics: Vec<(BaseTactic, f64)> = out.tactics.iter().copied().zip(tlp).collect();
        let mut dists = Vec::new();
        for &(t, _) in &tactics {
            let slots = self
                .argument_log_probs(&mut tape, &out, input, t)
                .into_iter()
                .map(|v| v.map(|v| tape.value(v).data.clone()))
                .collect();
            dists.push((t, ArgumentDistribution { slots }));
        }
        Ok((tactics, dists))
    }

    /// Beam of tactic invocations for one state, best first.
    pub fn predict(&self, input: &StateInput, width: usize) -> Result<Vec<Prediction>, ModelError> {
        let (tactics, dists) = self.distributions(input)?;
        let lookup = |t: BaseTactic| {
            dists.iter().find(|(x, _)| *x == t).map(|(_, d)| d.clone()).expect("distribution for every tactic")
        };
        Ok(beam_search(&tactics, &lookup, &Self::candidates(input), width))
    }
}
