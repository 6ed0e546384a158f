use std::collections::{HashMap, HashSet};

use g2t_core::kernel::{Argument, BaseTactic, DefId, TacticInvocation};
use g2t_core::knn::{ExampleDb, FeatureSet, KnnConfig, Origin, Scope, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Check;

fn rw(i: u32) -> TacticInvocation {
    TacticInvocation::new(BaseTactic::Rewrite, vec![Argument::Global(DefId(i))])
}

/// `n` stored sets and `queries` query sets drawn around 50 prototypes,
/// each feature resampled with probability 0.2.
fn clustered_sets(rng: &mut ChaCha8Rng, n: usize, queries: usize) -> (Vec<FeatureSet>, Vec<FeatureSet>) {
    let protos: Vec<Vec<u64>> = (0..50).map(|_| (0..30).map(|_| rng.gen_range(0..2000)).collect()).collect();
    let mut all: Vec<FeatureSet> = (0..n + queries)
        .map(|_| {
            let p = &protos[rng.gen_range(0..protos.len())];
            FeatureSet::from_hashes(p.iter().map(|&f| if rng.gen_bool(0.2) { rng.gen_range(0..2000) } else { f }).collect())
        })
        .collect();
    let q = all.split_off(n);
    (all, q)
}

/// Exhaustive IDF-weighted Jaccard ranking over the visible examples,
/// newest first among equal scores, duplicate tactics collapsed.
fn brute_force(stored: &[(FeatureSet, TacticInvocation, Origin)], scope: Scope, q: &FeatureSet, k: usize) -> Vec<(TacticInvocation, f64)> {
    let visible: Vec<(usize, &(FeatureSet, TacticInvocation, Origin))> =
        stored.iter().enumerate().filter(|(_, e)| scope.sees(e.2)).collect();
    let mut df: HashMap<u64, usize> = HashMap::new();
    for (_, e) in &visible {
        for f in e.0.as_slice() {
            *df.entry(*f).or_default() += 1;
        }
    }
    let n = visible.len() as f64;
    let idf = |f: &u64| ((1.0 + n) / (1.0 + *df.get(f).unwrap_or(&0) as f64)).ln() + 1.0;
    let a: HashSet<u64> = q.as_slice().iter().copied().collect();
    let mut scored: Vec<(f64, usize, TacticInvocation)> = visible
        .iter()
        .map(|(i, e)| {
            let b: HashSet<u64> = e.0.as_slice().iter().copied().collect();
            let inter: f64 = a.intersection(&b).map(idf).sum();
            let union: f64 = a.union(&b).map(idf).sum();
            (inter / union, *i, e.1.clone())
        })
        .collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(y.1.cmp(&x.1)));
    let mut seen = HashSet::new();
    scored.into_iter().filter(|x| seen.insert(x.2.clone())).take(k).map(|x| (x.2, x.0)).collect()
}

pub fn exactness_and_recall() -> Vec<Check> {
    // Exactness: the recent variant with a window covering the database.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (sets, queries) = clustered_sets(&mut rng, 1000, 30);
    let origins = [Origin::TrainImport, Origin::OtherFile, Origin::CurrentFile];
    let stored: Vec<_> = sets.into_iter().map(|s| (s, rw(rng.gen_range(0..300)), origins[rng.gen_range(0..3)])).collect();
    let mut db = ExampleDb::new();
    for (s, t, o) in &stored {
        db.insert(s, t.clone(), *o);
    }
    let (mut compared, mut mismatches) = (0, 0);
    for scope in [Scope::Online, Scope::AllButFile, Scope::Offline] {
        let cfg = KnnConfig { window: 1000, k: 10, ..KnnConfig::new(Variant::Recent, scope) };
        for q in &queries {
            let got = db.suggest(&cfg, q);
            let want = brute_force(&stored, scope, q, 10);
            compared += 1;
            let same = got.len() == want.len() && got.iter().zip(&want).all(|(g, w)| g.0 == w.0 && (g.1 - w.1).abs() < 1e-12);
            mismatches += (!same) as usize;
        }
    }

    // Recall of the LSH forest against the exhaustive top 10.
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (sets, queries) = clustered_sets(&mut rng, 1000, 100);
    let stored: Vec<_> = sets.into_iter().enumerate().map(|(i, s)| (s, rw(i as u32), Origin::TrainImport)).collect();
    let mut db = ExampleDb::new();
    for (s, t, o) in &stored {
        db.insert(s, t.clone(), *o);
    }
    let approx = KnnConfig { k: 10, ..KnnConfig::new(Variant::Lshf, Scope::Online) };
    let mut hit = 0;
    for q in &queries {
        let want: HashSet<TacticInvocation> = brute_force(&stored, Scope::Online, q, 10).into_iter().map(|x| x.0).collect();
        hit += db.suggest(&approx, q).into_iter().filter(|x| want.contains(&x.0)).count();
    }
    let recall = hit as f64 / (10 * queries.len()) as f64;
    vec![
        Check::new(
            "knn exactness (recent, full window)",
            mismatches == 0,
            format!("{compared} queries x 1000 examples over 3 scopes, {mismatches} mismatches"),
        ),
        Check::new("knn LSHF top-10 recall", recall >= 0.9, format!("recall {recall:.3} on 1000 examples, 100 queries (>= 0.9)")),
    ]
}
