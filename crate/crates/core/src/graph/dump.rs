//! Line-oriented text dump of an input graph.
//!
//! ```text
//! g2t-graph 1
//! node <id> <Label> [<definition name>]
//! edge <src> <EdgeLabel> <dst>
//! root <id>
//! state <id>
//! context <id> <hypothesis index>
//! ```

use std::fmt::Write;

use super::{EdgeLabel, GraphError, InputGraph, NodeLabel};
use crate::kernel::Environment;

pub const HEADER: &str = "g2t-graph 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DumpLine {
    Node { id: u32, label: String, def: Option<String> },
    Edge { src: u32, label: EdgeLabel, dst: u32 },
    Root(u32),
    State(u32),
    Context { id: u32, position: u32 },
}

pub fn dump_input_graph(ig: &InputGraph, env: &Environment) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    for (i, l) in ig.labels.iter().enumerate() {
        match l {
            NodeLabel::DefNode(d) => {
                let name = env.get(*d).map(|x| x.name.as_str()).unwrap_or("?");
                writeln!(out, "node {i} Def {name}").unwrap()
            }
            other => writeln!(out, "node {i} {}", other.name()).unwrap(),
        }
    }
    for (s, l, d) in &ig.edges {
        writeln!(out, "edge {s} {l} {d}").unwrap();
    }
    for r in &ig.roots {
        writeln!(out, "root {r}").unwrap();
    }
    if let Some(s) = ig.state_root {
        writeln!(out, "state {s}").unwrap();
    }
    for (c, p) in ig.context_nodes.iter().zip(&ig.context_positions) {
        writeln!(out, "context {c} {p}").unwrap();
    }
    out
}

pub fn parse_dump(text: &str) -> Result<Vec<DumpLine>, GraphError> {
    let bad = |line: &str| GraphError::BadDump(line.to_string());
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(GraphError::BadDump("missing header".into()));
    }
    let num = |s: Option<&str>, line: &str| -> Result<u32, GraphError> {
        s.and_then(|x| x.parse().ok()).ok_or_else(|| bad(line))
    };
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let mut parts = line.split_whitespace();
            Ok(match parts.next() {
                Some("node") => DumpLine::Node {
                    id: num(parts.next(), line)?,
                    label: parts.next().ok_or_else(|| bad(line))?.to_string(),
                    def: parts.next().map(str::to_string),
                },
                Some("edge") => DumpLine::Edge {
                    src: num(parts.next(), line)?,
                    label: parts.next().and_then(EdgeLabel::from_name).ok_or_else(|| bad(line))?,
                    dst: num(parts.next(), line)?,
                },
                Some("root") => DumpLine::Root(num(parts.next(), line)?),
                Some("state") => DumpLine::State(num(parts.next(), line)?),
                Some("context") => DumpLine::Context { id: num(parts.next(), line)?, position: num(parts.next(), line)? },
                _ => return Err(bad(line)),
            })
        })
        .collect()
}
