//! Synthetic formal developments: generation, on-disk format, the
//! package-level train/test split and dependency analysis.

mod generate;
mod io;
mod split;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use generate::generate_corpus;
pub use io::{load_corpus, package_source, write_corpus, CorpusManifest, PackageEntry, MANIFEST_FILE};
pub use split::{split_train_test, SplitManifest};

use crate::graph::DefinitionCluster;
use crate::kernel::{
    check_proof, BaseTactic, DefId, DefKind, Environment, PackageId, ProofState, TacticInvocation,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    /// Number of generated packages; the primitive package `P0` comes on top.
    pub packages: usize,
    pub symbols_per_package: usize,
    pub theorems_per_package: usize,
    /// Rewrite chains have 1..=max_rewrites steps (uniform).
    pub max_rewrites: usize,
    /// Earlier non-primitive packages imported by each package (1..=max).
    pub max_imports: usize,
    /// Fraction of theorems whose proof needs an equation or lemma of their
    /// own package.
    pub local_fraction: f64,
    pub seed: u64,
    /// Base tactics seen fewer times than this in training are masked.
    pub min_tactic_count: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            packages: 40,
            symbols_per_package: 6,
            theorems_per_package: 75,
            max_rewrites: 4,
            max_imports: 3,
            local_fraction: 0.7,
            seed: 0,
            min_tactic_count: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Package {
    pub id: PackageId,
    pub name: String,
    /// Direct imports (sorted).
    pub imports: Vec<PackageId>,
    /// Definitions in file order.
    pub defs: Vec<DefId>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("package {package}: no valid theorem {theorem} after bounded retries")]
    GenerationRetryExhausted { package: usize, theorem: usize },
    #[error("package dependency cycle through {0}")]
    CycleDetected(PackageId),
    #[error("{file}: {message}")]
    Parse { file: String, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub env: Environment,
    pub packages: Vec<Package>,
}

impl Corpus {
    pub fn package(&self, p: PackageId) -> &Package {
        &self.packages[p.0 as usize]
    }

    pub fn theorems(&self, p: PackageId) -> impl Iterator<Item = DefId> + '_ {
        self.package(p).defs.iter().copied().filter(|d| self.env.def(*d).is_theorem())
    }

    pub fn theorem_count(&self) -> usize {
        self.packages.iter().map(|p| self.theorems(p.id).count()).sum()
    }

    /// Number of tactic applications in the package's ground-truth scripts.
    pub fn proof_state_count(&self, p: PackageId) -> usize {
        self.theorems(p).map(|t| self.env.def(t).proof.as_ref().map_or(0, |s| s.0.len())).sum()
    }

    /// Transitive imports of `p` (excluding `p`).
    pub fn dependency_closure(&self, p: PackageId) -> BTreeSet<PackageId> {
        generate::import_closure(&self.packages, &self.package(p).imports)
    }

    /// Theorems whose recorded script fails to replay.
    pub fn replay_failures(&self) -> Vec<DefId> {
        self.env
            .iter()
            .filter(|d| d.is_theorem())
            .filter(|d| !d.proof.as_ref().is_some_and(|s| check_proof(d, s, &self.env)))
            .map(|d| d.id)
            .collect()
    }

    /// Every (proof state, invocation) pair met while replaying the
    /// theorem's ground-truth script.
    pub fn harvest(&self, theorem: DefId) -> Vec<(ProofState, TacticInvocation)> {
        let def = self.env.def(theorem);
        let (Some(stmt), Some(script)) = (&def.statement, &def.proof) else { return Vec::new() };
        let mut stack = vec![ProofState::new(stmt.clone())];
        let mut out = Vec::with_capacity(script.0.len());
        for inv in &script.0 {
            let Some(goal) = stack.pop() else { break };
            let Ok(subgoals) = crate::kernel::apply_tactic(&goal, inv, &self.env) else { break };
            out.push((goal, inv.clone()));
            stack.extend(subgoals.into_iter().rev());
        }
        out
    }

    /// Base-tactic frequencies over the ground-truth scripts of `packages`.
    pub fn tactic_counts(&self, packages: &[PackageId]) -> [usize; BaseTactic::COUNT] {
        let mut counts = [0; BaseTactic::COUNT];
        for p in packages {
            for t in self.theorems(*p) {
                for inv in self.env.def(t).proof.iter().flat_map(|s| &s.0) {
                    counts[inv.base.id()] += 1;
                }
            }
        }
        counts
    }

    /// Definition clusters of a package in file order: each function
    /// symbol with its defining equations, and each theorem on its own.
    /// Dependencies are statement references outside the cluster.
    pub fn clusters(&self, p: PackageId) -> Vec<DefinitionCluster> {
        let mut out: Vec<DefinitionCluster> = Vec::new();
        let mut by_symbol: HashMap<DefId, usize> = HashMap::new();
        for &d in &self.package(p).defs {
            let def = self.env.def(d);
            match (def.kind, def.defines) {
                (DefKind::DefiningEquation, Some(sym)) if by_symbol.contains_key(&sym) => {
                    out[by_symbol[&sym]].roots.push(d);
                }
                (kind, _) => {
                    if matches!(kind, DefKind::FunctionSymbol { .. }) {
                        by_symbol.insert(d, out.len());
                    }
                    out.push(DefinitionCluster { roots: vec![d], dependencies: Vec::new(), package: p });
                }
            }
        }
        for c in &mut out {
            let mut deps: Vec<DefId> = c
                .roots
                .iter()
                .flat_map(|r| self.env.direct_references(*r, false))
                .filter(|r| !c.roots.contains(r))
                .collect();
            deps.sort();
            deps.dedup();
            c.dependencies = deps;
        }
        out
    }

    /// Definitions a proof inside `theorem` may cite: everything in the
    /// imported packages plus the earlier definitions of its own package.
    pub fn available_globals(&self, theorem: DefId) -> Vec<DefId> {
        let p = self.env.def(theorem).package;
        let mut out: Vec<DefId> = self
            .dependency_closure(p)
            .into_iter()
            .flat_map(|q| self.package(q).defs.iter().copied())
            .chain(self.package(p).defs.iter().copied().take_while(|d| *d != theorem))
            .filter(|d| self.env.def(*d).statement.is_some())
            .collect();
        out.sort();
        out
    }

    /// Definitions reachable from the theorem (statement, defining
    /// equations of every reached symbol, and ground-truth proof arguments,
    /// transitively) that are not in `train_defs`. The theorem itself is not
    /// counted.
    pub fn count_new_dependencies(&self, theorem: DefId, train_defs: &BTreeSet<DefId>) -> usize {
        self.reachable(theorem).iter().filter(|d| !train_defs.contains(d)).count()
    }

    /// Transitive dependencies of a definition (excluding itself).
    pub fn reachable(&self, root: DefId) -> BTreeSet<DefId> {
        let equations = self.equations_by_symbol();
        let mut seen = BTreeSet::new();
        let mut todo = vec![root];
        while let Some(d) = todo.pop() {
            let mut next = self.env.direct_references(d, true);
            if let Some(eqs) = equations.get(&d) {
                next.extend(eqs);
            }
            for n in next {
                if n != root && seen.insert(n) {
                    todo.push(n);
                }
            }
        }
        seen
    }

    fn equations_by_symbol(&self) -> HashMap<DefId, Vec<DefId>> {
        let mut out: HashMap<DefId, Vec<DefId>> = HashMap::new();
        for d in self.env.iter() {
            if let (DefKind::DefiningEquation, Some(sym)) = (d.kind, d.defines) {
                out.entry(sym).or_default().push(d.id);
            }
        }
        out
    }

    /// All definitions of the given packages.
    pub fn defs_of(&self, packages: &[PackageId]) -> BTreeSet<DefId> {
        packages.iter().flat_map(|p| self.package(*p).defs.iter().copied()).collect()
    }
}
