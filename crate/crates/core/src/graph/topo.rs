use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::{DefinitionCluster, GraphError};
use crate::kernel::DefId;

/// Orders clusters so that each follows every cluster it depends on. Ties go
/// to the smallest minimum `DefId`. Dependencies outside the given clusters
/// are treated as already satisfied.
pub fn topo_order(clusters: &[DefinitionCluster]) -> Result<Vec<DefinitionCluster>, GraphError> {
    let mut owner: HashMap<DefId, usize> = HashMap::new();
    for (i, c) in clusters.iter().enumerate() {
        for r in &c.roots {
            owner.insert(*r, i);
        }
    }
    let mut indegree = vec![0usize; clusters.len()];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); clusters.len()];
    for (i, c) in clusters.iter().enumerate() {
        let mut deps: Vec<usize> = c
            .dependencies
            .iter()
            .filter_map(|d| owner.get(d).copied())
            .filter(|&j| j != i)
            .collect();
        deps.sort_unstable();
        deps.dedup();
        indegree[i] = deps.len();
        for j in deps {
            dependents[j].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<(DefId, usize)>> = indegree
        .iter()
        .enumerate()
        .filter(|(_, d)| **d == 0)
        .map(|(i, _)| Reverse((clusters[i].min_id(), i)))
        .collect();
    let mut out = Vec::with_capacity(clusters.len());
    while let Some(Reverse((_, i))) = ready.pop() {
        out.push(clusters[i].clone());
        for &k in &dependents[i] {
            indegree[k] -= 1;
            if indegree[k] == 0 {
                ready.push(Reverse((clusters[k].min_id(), k)));
            }
        }
    }
    if out.len() < clusters.len() {
        let stuck = (0..clusters.len()).find(|&i| indegree[i] > 0).expect("some cluster is blocked");
        return Err(GraphError::CycleDetected(clusters[stuck].min_id()));
    }
    Ok(out)
}
