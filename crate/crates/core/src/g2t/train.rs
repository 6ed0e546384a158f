use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::heads::{definition_task, DefinitionInput, StateInput};
use super::{Model, ModelError, RowState};
use crate::autodiff::{Adam, Gradients, Tape, Var};
use crate::kernel::{BaseTactic, DefId, TacticInvocation};

/// A training definition cluster; every root must own a table row.
#[derive(Debug, Clone)]
pub struct DefSample {
    pub input: DefinitionInput,
}

/// A proof state with its ground-truth invocation, already mapped to
/// positions in the model's tactic and candidate lists.
#[derive(Debug, Clone)]
pub struct StateSample {
    pub input: StateInput,
    pub target: TacticInvocation,
    arg_indices: Vec<usize>,
}

impl StateSample {
    /// `None` when the target cannot be expressed: a masked base tactic or an
    /// argument outside the candidates (e.g. a pruned hypothesis).
    pub fn new(input: StateInput, target: TacticInvocation, model: &Model) -> Option<Self> {
        if !model.tactic_mask[target.base.id()] {
            return None;
        }
        let cands = Model::candidates(&input);
        let arg_indices = target.args.iter().map(|a| cands.index_of(*a)).collect::<Option<Vec<_>>>()?;
        Some(StateSample { input, target, arg_indices })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_def: f64,
    pub l_tactic: f64,
    pub total: f64,
}

/// `-log P(base) - sum_i log P(arg_i | base)` for one sample.
pub fn tactic_loss(
    tape: &mut Tape,
    model: &Model,
    sample: &StateSample,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Var, ModelError> {
    let out = model.state_forward(tape, &sample.input, training, rng)?;
    let ti = out.tactics.iter().position(|t| *t == sample.target.base).ok_or(ModelError::NoAvailableTactics)?;
    let lp = tape.pick(out.tactic_log_probs, 0, ti);
    let mut total = tape.scale(lp, -1.0);
    let dists = model.argument_log_probs(tape, &out, &sample.input, sample.target.base);
    for (slot, &j) in sample.arg_indices.iter().enumerate() {
        let d = dists[slot].expect("a candidate exists for every target argument");
        let p = tape.pick(d, 0, j);
        let neg = tape.scale(p, -1.0);
        total = tape.add(total, neg);
    }
    Ok(total)
}

/// Sum over roots of `1 - cos(DefTask, DefEmb)`, divided by sqrt(#roots).
pub fn definition_loss(
    tape: &mut Tape,
    model: &Model,
    sample: &DefSample,
    training: bool,
    rng: &mut impl Rng,
) -> Result<Var, ModelError> {
    let outs = definition_task(tape, model, &sample.input, training, rng)?;
    let mut sum: Option<Var> = None;
    for (o, (_, d)) in outs.iter().zip(&sample.input.roots) {
        let row = model.table.row(*d).ok_or(ModelError::UnsetDefinitionRow(*d))?;
        let target = tape.gather_param(model.ids.def_emb, &[row]);
        let l = tape.cosine_loss(*o, target);
        sum = Some(match sum {
            None => l,
            Some(s) => tape.add(s, l),
        });
    }
    let sum = sum.expect("clusters have at least one root");
    Ok(tape.scale(sum, 1.0 / (outs.len() as f64).sqrt()))
}

pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    rng: ChaCha8Rng,
    pub steps: u64,
}

impl Model {
    /// Allocates learned rows (random unit vectors) for training definitions.
    pub fn init_training_rows(&mut self, defs: &[DefId]) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x726f7773);
        for &d in defs {
            let row = self.allocate_row(d);
            let v = super::unit_rows(&mut rng, 1, self.h()).data;
            self.set_row(row, &v, RowState::Learned);
        }
    }

    /// Masks base tactics seen fewer than `min_tactic_count` times.
    pub fn set_tactic_mask_from_counts(&mut self, counts: &[usize; BaseTactic::COUNT]) {
        for t in BaseTactic::ALL {
            self.tactic_mask[t.id()] = counts[t.id()] >= self.config.min_tactic_count;
        }
    }
}

impl Trainer {
    pub fn new(model: Model) -> Self {
        let adam = Adam::new(model.config.adam, &model.params);
        let rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x747261696e);
        Trainer { model, adam, rng, steps: 0 }
    }

    /// Losses of a batch without updating anything (dropout off).
    pub fn evaluate(&self, defs: &[&DefSample], states: &[&StateSample]) -> Result<LossBreakdown, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.losses(defs, states, false, &mut rng, None)
    }

    fn losses(
        &self,
        defs: &[&DefSample],
        states: &[&StateSample],
        training: bool,
        rng: &mut ChaCha8Rng,
        mut grads: Option<&mut Gradients>,
    ) -> Result<LossBreakdown, ModelError> {
        let m = &self.model;
        let weight = m.config.def_loss_weight;
        let mut l_def = 0.0;
        if m.config.definition_task && !defs.is_empty() {
            let c = defs.len() as f64;
            for s in defs {
                let mut tape = Tape::new(&m.params);
                let l = definition_loss(&mut tape, m, s, training, rng)?;
                l_def += tape.value(l).item() / c;
                if let Some(g) = grads.as_deref_mut() {
                    tape.backward_into(l, weight / c, g);
                }
            }
        }
        let mut l_tactic = 0.0;
        if !states.is_empty() {
            let n = states.len() as f64;
            for s in states {
                let mut tape = Tape::new(&m.params);
                let l = tactic_loss(&mut tape, m, s, training, rng)?;
                l_tactic += tape.value(l).item() / n;
                if let Some(g) = grads.as_deref_mut() {
                    tape.backward_into(l, 1.0 / n, g);
                }
            }
        }
        let total = if m.config.definition_task { weight * l_def + l_tactic } else { l_tactic };
        Ok(LossBreakdown { l_def, l_tactic, total })
    }

    /// One optimizer step on a batch of definitions and proof states;
    /// returns the losses before the step.
    pub fn train_step(&mut self, defs: &[&DefSample], states: &[&StateSample]) -> Result<LossBreakdown, ModelError> {
        let mut grads = Gradients::zeros_like(&self.model.params);
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng.gen());
        let out = self.losses(defs, states, true, &mut rng, Some(&mut grads))?;
        self.adam.sync_shapes(&self.model.params);
        self.adam
            .step(&mut self.model.params, &grads)
            .map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
        self.model.renormalize();
        self.steps += 1;
        Ok(out)
    }

    /// One pass over shuffled data in batches of the configured sizes.
    pub fn epoch(&mut self, defs: &[DefSample], states: &[StateSample]) -> Result<Vec<LossBreakdown>, ModelError> {
        let mut di: Vec<usize> = (0..defs.len()).collect();
        let mut si: Vec<usize> = (0..states.len()).collect();
        di.shuffle(&mut self.rng);
        si.shuffle(&mut self.rng);
        let bd = self.model.config.batch_defs.max(1);
        let bs = self.model.config.batch_states.max(1);
        let steps = di.len().div_ceil(bd).max(si.len().div_ceil(bs));
        let mut out = Vec::with_capacity(steps);
        for k in 0..steps {
            let d: Vec<&DefSample> = di.iter().skip(k * bd).take(bd).map(|&i| &defs[i]).collect();
            let s: Vec<&StateSample> = si.iter().skip(k * bs).take(bs).map(|&i| &states[i]).collect();
            out.push(self.train_step(&d, &s)?);
        }
        Ok(out)
    }
}
