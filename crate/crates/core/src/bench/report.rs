//! Results CSV, the t/n aggregate solvers, and the summary tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BenchError, BenchRecord, SolverId};
use crate::search::SearchBudget;

/// Header line of the results CSV (one [`BenchRecord`] per row).
pub const CSV_HEADER: &str =
    "solver,theorem,theorem_name,package,solved,wall_time,model_calls,tactic_executions,new_deps,seed,proof";

/// New-dependency buckets: `0`, `1-9`, `10-99`, `>=100`.
pub const BUCKETS: [&str; 4] = ["0", "1-9", "10-99", ">=100"];

pub fn dependency_bucket(new_deps: usize) -> &'static str {
    match new_deps {
        0 => BUCKETS[0],
        1..=9 => BUCKETS[1],
        10..=99 => BUCKETS[2],
        _ => BUCKETS[3],
    }
}

pub fn write_records_csv(records: &[BenchRecord], w: impl Write) -> Result<(), BenchError> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(CSV_HEADER.split(',')).map_err(|e| BenchError::Csv(e.to_string()))?;
    for r in records {
        wr.serialize(r).map_err(|e| BenchError::Csv(e.to_string()))?;
    }
    wr.flush().map_err(|e| BenchError::Csv(e.to_string()))
}

pub fn read_records_csv(r: impl Read) -> Result<Vec<BenchRecord>, BenchError> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> =
        rd.headers().map_err(|e| BenchError::Csv(e.to_string()))?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(BenchError::Csv(format!("unexpected header {:?}", header.join(","))));
    }
    rd.deserialize().collect::<Result<Vec<BenchRecord>, _>>().map_err(|e| BenchError::Csv(e.to_string()))
}

/// The t/n combination of `components`: a theorem counts as solved at time
/// `t` iff some component solved it within `t/k`. Times, model calls and
/// tactic executions are `k` times those of the fastest solving component
/// (per quantity); a theorem stays solved only if both scaled time and
/// scaled calls fit in `budget`. Unsolved rows carry the summed component
/// costs. With `k = 1` the component's records are returned unchanged.
pub fn aggregate_solvers(
    records: &[BenchRecord],
    components: &[SolverId],
    budget: &SearchBudget,
) -> Result<Vec<BenchRecord>, BenchError> {
    let names: Vec<String> = components.iter().map(|c| c.to_string()).collect();
    let per: Vec<BTreeMap<u32, &BenchRecord>> = names
        .iter()
        .map(|n| records.iter().filter(|r| r.solver == *n).map(|r| (r.theorem, r)).collect())
        .collect();
    let Some(first) = per.first() else { return Ok(Vec::new()) };
    let theorems: BTreeSet<u32> = first.keys().copied().collect();
    if per.iter().any(|m| m.keys().copied().collect::<BTreeSet<_>>() != theorems) {
        return Err(BenchError::MismatchedTheoremSets);
    }
    if components.len() == 1 {
        return Ok(first.values().map(|r| (*r).clone()).collect());
    }
    let k = components.len() as f64;
    let solver = SolverId::Aggregate(components.to_vec()).to_string();
    let mut out = Vec::with_capacity(theorems.len());
    for t in theorems {
        let rows: Vec<&BenchRecord> = per.iter().map(|m| m[&t]).collect();
        let solved: Vec<&&BenchRecord> = rows.iter().filter(|r| r.solved).collect();
        let base = rows[0];
        let mut rec = BenchRecord {
            solver: solver.clone(),
            solved: false,
            proof: String::new(),
            wall_time: rows.iter().map(|r| r.wall_time).sum(),
            model_calls: rows.iter().map(|r| r.model_calls).sum(),
            tactic_executions: rows.iter().map(|r| r.tactic_executions).sum(),
            ..base.clone()
        };
        if !solved.is_empty() {
            let fastest = solved.iter().min_by(|a, b| a.wall_time.total_cmp(&b.wall_time)).expect("nonempty");
            let wall = k * fastest.wall_time;
            let calls = (k as u64) * solved.iter().map(|r| r.model_calls).min().expect("nonempty");
            let execs = (k as u64) * solved.iter().map(|r| r.tactic_executions).min().expect("nonempty");
            if wall <= budget.wall_time_s && calls <= budget.model_calls {
                rec.solved = true;
                rec.proof = fastest.proof.clone();
                rec.wall_time = wall;
                rec.model_calls = calls;
                rec.tactic_executions = execs;
            }
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub solver: String,
    /// Seconds or model calls.
    pub x: f64,
    pub solved: usize,
    pub pass_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VennRow {
    /// `region`: solved by exactly these solvers; `intersection`: solved by
    /// at least these solvers.
    pub kind: String,
    /// Member solvers joined by `&`.
    pub solvers: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub solver: String,
    pub bucket: String,
    pub theorems: usize,
    pub solved: usize,
    pub pass_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub time_curves: Vec<CurvePoint>,
    pub call_curves: Vec<CurvePoint>,
    pub venn: Vec<VennRow>,
    pub buckets: Vec<BucketRow>,
}

fn solver_order(records: &[BenchRecord]) -> Vec<String> {
    let mut seen = Vec::new();
    for r in records {
        if !seen.contains(&r.solver) {
            seen.push(r.solver.clone());
        }
    }
    seen
}

fn curve(solver: &str, rows: &[&BenchRecord], x: impl Fn(&BenchRecord) -> f64) -> Vec<CurvePoint> {
    let n = rows.len().max(1) as f64;
    let mut xs: Vec<f64> = rows.iter().filter(|r| r.solved).map(|r| x(r)).collect();
    xs.sort_by(f64::total_cmp);
    let mut out: Vec<CurvePoint> = Vec::new();
    for (i, v) in xs.iter().enumerate() {
        let solved = i + 1;
        match out.last_mut() {
            Some(p) if p.x == *v => {
                p.solved = solved;
                p.pass_rate = solved as f64 / n;
            }
            _ => out.push(CurvePoint { solver: solver.into(), x: *v, solved, pass_rate: solved as f64 / n }),
        }
    }
    out
}

/// Per-solver cumulative pass-rate curves (over seconds and over model
/// calls), Venn regions and pairwise / all-solver intersections, and pass
/// rates by new-dependency bucket.
pub fn summarize(records: &[BenchRecord]) -> Report {
    let solvers = solver_order(records);
    let mut report = Report::default();
    let mut solved_by: BTreeMap<u32, u64> = BTreeMap::new();
    for (i, s) in solvers.iter().enumerate() {
        let rows: Vec<&BenchRecord> = records.iter().filter(|r| r.solver == *s).collect();
        report.time_curves.extend(curve(s, &rows, |r| r.wall_time));
        report.call_curves.extend(curve(s, &rows, |r| r.model_calls as f64));
        for b in BUCKETS {
            let in_bucket: Vec<&&BenchRecord> = rows.iter().filter(|r| dependency_bucket(r.new_deps) == b).collect();
            let solved = in_bucket.iter().filter(|r| r.solved).count();
            let theorems = in_bucket.len();
            let pass_rate = if theorems == 0 { 0.0 } else { solved as f64 / theorems as f64 };
            report.buckets.push(BucketRow { solver: s.clone(), bucket: b.into(), theorems, solved, pass_rate });
        }
        for r in rows.iter().filter(|r| r.solved) {
            *solved_by.entry(r.theorem).or_default() |= 1 << i;
        }
    }
    let members = |mask: u64| -> String {
        solvers.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, s)| s.as_str()).collect::<Vec<_>>().join("&")
    };
    let mut regions: BTreeMap<u64, usize> = BTreeMap::new();
    for mask in solved_by.values() {
        *regions.entry(*mask).or_default() += 1;
    }
    for (mask, count) in regions {
        report.venn.push(VennRow { kind: "region".into(), solvers: members(mask), count });
    }
    let mut sets: Vec<u64> = Vec::new();
    for i in 0..solvers.len() {
        for j in i + 1..solvers.len() {
            sets.push((1 << i) | (1 << j));
        }
    }
    if solvers.len() > 2 {
        sets.push((1u64 << solvers.len()) - 1);
    }
    for set in sets {
        let count = solved_by.values().filter(|m| *m & set == set).count();
        report.venn.push(VennRow { kind: "intersection".into(), solvers: members(set), count });
    }
    report
}

fn rows_to_csv<T: Serialize>(rows: &[T], header: &str) -> String {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        wr.serialize(r).expect("in-memory csv");
    }
    let body = String::from_utf8(wr.into_inner().expect("in-memory csv")).expect("utf-8");
    let mut out = String::new();
    writeln!(out, "{header}").unwrap();
    out.push_str(&body);
    out
}

impl Report {
    pub const FILES: [&'static str; 4] = ["curve_time.csv", "curve_calls.csv", "venn.csv", "dep_buckets.csv"];

    /// The four CSV files, in the order of [`Report::FILES`].
    pub fn to_csv(&self) -> [String; 4] {
        [
            rows_to_csv(&self.time_curves, "solver,seconds,solved,pass_rate"),
            rows_to_csv(&self.call_curves, "solver,model_calls,solved,pass_rate"),
            rows_to_csv(&self.venn, "kind,solvers,count"),
            rows_to_csv(&self.buckets, "solver,bucket,theorems,solved,pass_rate"),
        ]
    }

    pub fn write_to_dir(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in Self::FILES.iter().zip(self.to_csv()) {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }

    /// Final pass rate of `solver` (last point of its time curve).
    pub fn pass_rate(&self, solver: &str) -> f64 {
        self.time_curves.iter().filter(|p| p.solver == solver).map(|p| p.pass_rate).last().unwrap_or(0.0)
    }
}
