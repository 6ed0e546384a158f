use std::cmp::Ordering;
use std::collections::BinaryHeap;

use g2t_core::search::{solve, SearchBudget, SearchSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Check;

/// A lazily generated finite suggestion tree: suggestions and outcomes are
/// pure functions of the seed, the goal id and the action index.
struct Tree {
    seed: u64,
    max_depth: u32,
}

type Goal = (u64, u32);

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Tree {
    fn suggestions(&self, g: &Goal) -> Vec<(usize, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, g.0));
        let k = rng.gen_range(1..=4);
        (0..k).map(|j| (j, rng.gen_range(0..12) as f64 * 0.25)).collect()
    }

    fn outcome(&self, g: &Goal, j: usize) -> Option<Vec<Goal>> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(self.seed, g.0), j as u64 + 1));
        let r: f64 = rng.gen();
        if g.1 >= self.max_depth {
            return (r < 0.5).then(Vec::new);
        }
        if r < 0.2 {
            return None;
        }
        if r < 0.4 {
            return Some(Vec::new());
        }
        let n = rng.gen_range(1..=2);
        Some((0..n).map(|i| (mix(g.0, (j * 8 + i) as u64 + 77), g.1 + 1)).collect())
    }
}

impl SearchSpace for Tree {
    type Goal = Goal;
    type Action = usize;

    fn suggest(&mut self, g: &Goal) -> Result<Vec<(usize, f64)>, String> {
        Ok(self.suggestions(g))
    }

    fn apply(&mut self, g: &Goal, a: &usize) -> Option<Vec<Goal>> {
        self.outcome(g, *a)
    }

    fn key(&self, g: &Goal) -> u64 {
        g.0
    }
}

struct Item(f64, Vec<Goal>);

impl PartialEq for Item {
    fn eq(&self, o: &Self) -> bool {
        self.0 == o.0
    }
}
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0)
    }
}

/// Queue-based Dijkstra over goal stacks: the cost of the cheapest proof.
fn dijkstra(t: &Tree, root: Goal) -> Option<f64> {
    let mut heap = BinaryHeap::new();
    heap.push(Item(0.0, vec![root]));
    while let Some(Item(cost, stack)) = heap.pop() {
        let Some(first) = stack.first() else { return Some(cost) };
        for (j, c) in t.suggestions(first) {
            if let Some(mut next) = t.outcome(first, j) {
                next.extend_from_slice(&stack[1..]);
                heap.push(Item(cost + c, next));
            }
        }
    }
    None
}

/// Replays a proof on the tree and returns its cost.
fn replay(t: &Tree, root: Goal, proof: &[usize]) -> Option<f64> {
    let mut stack = vec![root];
    let mut cost = 0.0;
    for &a in proof {
        let g = stack.remove(0);
        cost += t.suggestions(&g).iter().find(|(j, _)| *j == a)?.1;
        let mut next = t.outcome(&g, a)?;
        next.extend(stack);
        stack = next;
    }
    stack.is_empty().then_some(cost)
}

pub fn search_parity() -> Vec<Check> {
    let budget = SearchBudget { wall_time_s: 600.0, model_calls: u64::MAX, tactic_executions: u64::MAX };
    let (mut proved, mut cost_mismatch, mut stack_violations, mut longer_than_proof) = (0, 0, 0, 0);
    for seed in 0..100 {
        let mut t = Tree { seed: seed + 1000, max_depth: 4 };
        let root = (seed, 0);
        let want = dijkstra(&t, root);
        let st = solve(&mut t, &root, budget);
        match (want, st.solved) {
            (Some(c), true) => {
                proved += 1;
                let proof = st.proof.as_ref().unwrap();
                let replayed = replay(&t, root, proof);
                let got = st.cost.unwrap();
                if (got - c).abs() > 1e-9 || replayed.is_none_or(|r| (r - got).abs() > 1e-9) {
                    cost_mismatch += 1;
                }
                // Depth is bounded by the longest proof path explored in the
                // final iteration; cheaper but longer partial paths may be
                // explored before the returned proof.
                if st.peak_stack > st.max_path_len + 1 {
                    stack_violations += 1;
                }
                if st.peak_stack > proof.len() + 1 {
                    longer_than_proof += 1;
                }
            }
            (None, false) => {}
            _ => cost_mismatch += 1,
        }
    }
    vec![
        Check::new(
            "search parity (Dijkstra oracle)",
            cost_mismatch == 0 && proved >= 30,
            format!("100 trees, {proved} provable, {cost_mismatch} cost/solvability mismatches"),
        ),
        Check::new(
            "search peak stack <= path len + 1",
            stack_violations == 0,
            format!(
                "{stack_violations} violations of peak <= longest explored proof path + 1; \
                 {longer_than_proof}/{proved} searches went deeper than the returned proof"
            ),
        ),
    ]
}
