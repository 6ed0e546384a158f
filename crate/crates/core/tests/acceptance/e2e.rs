use std::sync::Mutex;
use std::time::Instant;

use g2t_core::bench::pipeline::{intern_corpus, train_model, TrainConfig};
use g2t_core::bench::{aggregate_solvers, run_benchmark, write_records_csv, BenchContext, BenchRecord, Models, SolverId};
use g2t_core::corpus::{generate_corpus, Corpus, CorpusSpec};
use g2t_core::g2t::ModelConfig;
use g2t_core::kernel::syntax::parse_script;
use g2t_core::kernel::{check_proof, DefId};
use g2t_core::search::SearchBudget;

use crate::Check;

const ONLINE: &str = "knn-recent-online";
const OFFLINE: &str = "knn-lshf-offline";
const UPDATE: &str = "g2t-anon-update";
const FROZEN: &str = "g2t-anon-frozen";
const NODEF: &str = "g2t-nodef-frozen";
const SOLVERS: [&str; 5] = [ONLINE, OFFLINE, UPDATE, FROZEN, NODEF];

/// The end-to-end bound is stated for eight cores.
const WALL_LIMIT_S: f64 = 45.0 * 60.0;

/// Records of the end-to-end run, re-checked by the replay criterion.
static E2E_RECORDS: Mutex<Option<(Corpus, Vec<BenchRecord>)>> = Mutex::new(None);

/// Desk-scale training recipe. With h = 16 the default definition-loss
/// weight of 1000 collapses the definition rows onto a common direction and
/// the argument head cannot separate them; a weight of 10 keeps them apart.
fn e2e_train_config(definition_task: bool) -> TrainConfig {
    let mut model = ModelConfig { definition_task, batch_defs: 32, batch_states: 64, def_loss_weight: 10.0, ..ModelConfig::default() };
    model.adam.lr = 1e-3;
    TrainConfig {
        model,
        steps: 16000,
        max_states: None,
    }
}

fn rate(records: &[BenchRecord], solver: &str, keep: impl Fn(&BenchRecord) -> bool) -> (usize, usize, f64) {
    let rows: Vec<&BenchRecord> = records.iter().filter(|r| r.solver == solver && keep(r)).collect();
    let solved = rows.iter().filter(|r| r.solved).count();
    (solved, rows.len(), if rows.is_empty() { 0.0 } else { solved as f64 / rows.len() as f64 })
}

pub fn end_to_end() -> Vec<Check> {
    if std::env::var("G2T_E2E").as_deref() != Ok("1") {
        return vec![Check::skip(
            "end-to-end (a)-(d)",
            "set G2T_E2E=1 to run (default corpus, 5 solvers, 60 s / 512 calls; about an hour on one core)",
        )];
    }
    let started = Instant::now();
    let corpus = generate_corpus(&CorpusSpec::default()).unwrap();
    let split = corpus.split(0.9, 0).unwrap();
    let graph = intern_corpus(&corpus).unwrap();
    let (anon, anon_report) = train_model(&corpus, &graph, &split, &e2e_train_config(true), |_, _| {}).unwrap();
    let (nodef, nodef_report) = train_model(&corpus, &graph, &split, &e2e_train_config(false), |_, _| {}).unwrap();
    println!(
        "# trained anon in {:.0}s (top-1 {:.3}), nodef in {:.0}s (top-1 {:.3})",
        anon_report.seconds, anon_report.train_top1, nodef_report.seconds, nodef_report.train_top1
    );
    let models = Models { anon: Some(anon), named: None, nodef: Some(nodef) };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let ctx = BenchContext { corpus: &corpus, split: &split, graph: &graph, models: &models, max_theorems_per_package: None, workers };
    let budget = SearchBudget { wall_time_s: 60.0, model_calls: 512, ..SearchBudget::default() };
    let solvers: Vec<SolverId> = SOLVERS.iter().map(|s| s.parse().unwrap()).collect();
    let records = run_benchmark(&ctx, &solvers, budget, 0).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let out = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("e2e_results.csv");
    write_records_csv(&records, std::fs::File::create(&out).unwrap()).unwrap();
    println!("# {} records written to {}", records.len(), out.display());
    for s in SOLVERS {
        let all = rate(&records, s, |_| true);
        let buckets: Vec<String> = [(0, 0), (1, 9), (10, 99), (100, usize::MAX)]
            .iter()
            .map(|&(lo, hi)| {
                let (k, n, _) = rate(&records, s, |r| r.new_deps >= lo && r.new_deps <= hi);
                format!("{k}/{n}")
            })
            .collect();
        println!("# {s:<20} {}/{} solved; by new deps 0 | 1-9 | 10-99 | >=100: {}", all.0, all.1, buckets.join(" | "));
    }

    let mut checks = Vec::new();
    let on = rate(&records, ONLINE, |_| true);
    let off = rate(&records, OFFLINE, |_| true);
    checks.push(Check::new(
        "e2e (a) knn online vs offline",
        on.2 - off.2 >= 0.05,
        format!("{ONLINE} {:.1}% vs {OFFLINE} {:.1}% (gap >= 5 points)", 100.0 * on.2, 100.0 * off.2),
    ));

    let new = |r: &BenchRecord| r.new_deps >= 1;
    let up = rate(&records, UPDATE, new);
    let nd = rate(&records, NODEF, new);
    checks.push(Check::new(
        "e2e (b) update vs nodef-frozen",
        up.2 - nd.2 >= 0.05,
        format!(
            "on {} theorems with >= 1 new dependency: {UPDATE} {:.1}% vs {NODEF} {:.1}% (gap >= 5 points)",
            up.1,
            100.0 * up.2,
            100.0 * nd.2
        ),
    ));

    let a_winner = if on.2 >= off.2 { ONLINE } else { OFFLINE };
    let b_winner = if up.2 >= nd.2 { UPDATE } else { NODEF };
    let components: Vec<SolverId> = [a_winner, b_winner].iter().map(|s| s.parse().unwrap()).collect();
    let agg = aggregate_solvers(&records, &components, &budget).unwrap();
    let agg_solved = agg.iter().filter(|r| r.solved).count();
    let (sa, sb) = (rate(&records, a_winner, |_| true).0, rate(&records, b_winner, |_| true).0);
    checks.push(Check::new(
        "e2e (c) t/n aggregate",
        agg_solved > sa.max(sb),
        format!("agg({a_winner}+{b_winner}) solves {agg_solved} vs {sa} and {sb}"),
    ));

    let gap = |keep: &dyn Fn(&BenchRecord) -> bool| rate(&records, UPDATE, keep).2 - rate(&records, FROZEN, keep).2;
    let (g0, g10) = (gap(&|r| r.new_deps == 0), gap(&|r| r.new_deps >= 10));
    checks.push(Check::new(
        "e2e (d) update-frozen gap by deps",
        g0 < g10,
        format!("{UPDATE} - {FROZEN}: {:+.1} points at 0 new deps, {:+.1} at >= 10", 100.0 * g0, 100.0 * g10),
    ));

    let cores = workers as f64;
    let limit = WALL_LIMIT_S * 8.0 / cores.min(8.0);
    checks.push(Check::new(
        "e2e wall-clock",
        elapsed < limit,
        format!("{elapsed:.0}s on {workers} core(s); limit {limit:.0}s (45 min on 8 cores, scaled)"),
    ));
    *E2E_RECORDS.lock().unwrap() = Some((corpus, records));
    checks
}

/// Solved proofs that fail to replay, out of all solved proofs.
fn replay_failures(corpus: &Corpus, records: &[BenchRecord]) -> (usize, usize) {
    let solved: Vec<&BenchRecord> = records.iter().filter(|r| r.solved).collect();
    let bad = solved
        .iter()
        .filter(|r| {
            let t = corpus.env.def(DefId(r.theorem));
            !parse_script(&r.proof, &corpus.env).is_ok_and(|s| check_proof(t, &s, &corpus.env))
        })
        .count();
    (bad, solved.len())
}

pub fn replay_soundness() -> Vec<Check> {
    // A small corpus with briefly trained models, every solver.
    let spec = CorpusSpec { packages: 8, symbols_per_package: 4, theorems_per_package: 10, seed: 13, ..CorpusSpec::default() };
    let corpus = generate_corpus(&spec).unwrap();
    let split = corpus.split(0.7, 2).unwrap();
    let graph = intern_corpus(&corpus).unwrap();
    let cfg = |definition_task| TrainConfig {
        model: ModelConfig { h: 8, hops: 2, max_nodes: 256, batch_defs: 16, batch_states: 32, min_tactic_count: 1, definition_task, ..ModelConfig::default() },
        steps: 60,
        max_states: None,
    };
    let (anon, _) = train_model(&corpus, &graph, &split, &cfg(true), |_, _| {}).unwrap();
    let (nodef, _) = train_model(&corpus, &graph, &split, &cfg(false), |_, _| {}).unwrap();
    let models = Models { anon: Some(anon), named: None, nodef: Some(nodef) };
    let ctx = BenchContext { corpus: &corpus, split: &split, graph: &graph, models: &models, max_theorems_per_package: None, workers: 1 };
    let budget = SearchBudget { wall_time_s: 10.0, model_calls: 64, ..SearchBudget::default() };
    let solvers: Vec<SolverId> = SOLVERS.iter().map(|s| s.parse().unwrap()).collect();
    let records = run_benchmark(&ctx, &solvers, budget, 0).unwrap();
    let (mut bad, mut solved) = replay_failures(&corpus, &records);
    let mut scope = format!("small corpus, {} records", records.len());
    if let Some((corpus, records)) = E2E_RECORDS.lock().unwrap().as_ref() {
        let (b, s) = replay_failures(corpus, records);
        bad += b;
        solved += s;
        scope.push_str(&format!(" + end-to-end, {} records", records.len()));
    }
    vec![Check::new(
        "replay soundness",
        bad == 0 && solved > 0,
        format!("{} of {solved} solved proofs replay ({scope})", solved - bad),
    )]
}
