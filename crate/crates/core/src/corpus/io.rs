//! On-disk corpus: one s-expression file per package plus a JSON manifest.
//!
//! ```text
//! (package P3 (imports P0 P1))
//! (symbol P3.f0 2)
//! (equation P3.f0.def P3.f0 (forall (x0 x1) (= (P3.f0 x0 x1) ...)))
//! (theorem P3.t0 (forall (x0) (= ... ...)) ((intro) (rewrite P3.f0.def) (reflexivity)))
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, CorpusSpec, Package, SplitManifest};
use crate::kernel::syntax::{formula_from_value, list, print_formula, print_script, read_all, symbol, tactic_from_value};
use crate::kernel::{DefKind, Definition, Environment, PackageId, ProofScript};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "g2t-corpus/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageEntry {
    pub id: u32,
    pub name: String,
    pub file: String,
    pub imports: Vec<u32>,
    pub symbols: usize,
    pub equations: usize,
    pub theorems: usize,
    pub proof_states: usize,
    /// xxh3-64 of the file contents, hex.
    pub xxh3: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub packages: usize,
    pub definitions: usize,
    pub theorems: usize,
    pub proof_states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: String,
    pub spec: CorpusSpec,
    pub packages: Vec<PackageEntry>,
    pub split: Option<SplitManifest>,
    pub totals: Totals,
}

/// The package's file contents.
pub fn package_source(corpus: &Corpus, p: PackageId) -> String {
    let env = &corpus.env;
    let pkg = corpus.package(p);
    let mut out = format!("(package {} (imports", pkg.name);
    for q in &pkg.imports {
        write!(out, " {}", corpus.package(*q).name).unwrap();
    }
    out.push_str("))\n");
    for &d in &pkg.defs {
        let def = env.def(d);
        match def.kind {
            DefKind::FunctionSymbol { arity } => writeln!(out, "(symbol {} {arity})", def.name).unwrap(),
            DefKind::DefiningEquation => {
                let sym = def.defines.map(|s| env.def(s).name.clone()).unwrap_or_default();
                let stmt = print_formula(def.statement.as_ref().expect("equations have statements"), env);
                writeln!(out, "(equation {} {sym} {stmt})", def.name).unwrap();
            }
            DefKind::Theorem => {
                let stmt = print_formula(def.statement.as_ref().expect("theorems have statements"), env);
                let script = def.proof.as_ref().map(|s| print_script(s, env)).unwrap_or_default();
                writeln!(out, "(theorem {} {stmt} ({script}))", def.name).unwrap();
            }
        }
    }
    out
}

fn hash_hex(s: &str) -> String {
    format!("{:016x}", xxhash_rust::xxh3::xxh3_64(s.as_bytes()))
}

impl Corpus {
    pub fn manifest(&self, split: Option<&SplitManifest>) -> CorpusManifest {
        let mut entries = Vec::new();
        for pkg in &self.packages {
            let kinds = pkg.defs.iter().map(|d| self.env.def(*d).kind);
            let count = |f: fn(&DefKind) -> bool| kinds.clone().filter(|k| f(k)).count();
            entries.push(PackageEntry {
                id: pkg.id.0,
                name: pkg.name.clone(),
                file: format!("{}.sexp", pkg.name),
                imports: pkg.imports.iter().map(|q| q.0).collect(),
                symbols: count(|k| matches!(k, DefKind::FunctionSymbol { .. })),
                equations: count(|k| *k == DefKind::DefiningEquation),
                theorems: count(|k| *k == DefKind::Theorem),
                proof_states: self.proof_state_count(pkg.id),
                xxh3: hash_hex(&package_source(self, pkg.id)),
            });
        }
        let totals = Totals {
            packages: self.packages.len(),
            definitions: self.env.len(),
            theorems: entries.iter().map(|e| e.theorems).sum(),
            proof_states: entries.iter().map(|e| e.proof_states).sum(),
        };
        CorpusManifest { format: FORMAT.into(), spec: self.spec.clone(), packages: entries, split: split.cloned(), totals }
    }
}

/// Writes every package file and the manifest into `dir`.
pub fn write_corpus(corpus: &Corpus, split: Option<&SplitManifest>, dir: &Path) -> Result<CorpusManifest, CorpusError> {
    fs::create_dir_all(dir)?;
    let manifest = corpus.manifest(split);
    for (pkg, entry) in corpus.packages.iter().zip(&manifest.packages) {
        fs::write(dir.join(&entry.file), package_source(corpus, pkg.id))?;
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(manifest)
}

/// Loads a corpus written by [`write_corpus`], checking file hashes.
pub fn load_corpus(dir: &Path) -> Result<(Corpus, CorpusManifest), CorpusError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: CorpusManifest = serde_json::from_str(&text).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(CorpusError::Manifest(format!("unsupported format {:?}", manifest.format)));
    }
    let mut env = Environment::new();
    let mut packages = Vec::new();
    for (i, entry) in manifest.packages.iter().enumerate() {
        if entry.id as usize != i {
            return Err(CorpusError::Manifest(format!("package ids must be dense, found {}", entry.id)));
        }
        let src = fs::read_to_string(dir.join(&entry.file))?;
        if hash_hex(&src) != entry.xxh3 {
            return Err(CorpusError::Manifest(format!("{}: content hash mismatch", entry.file)));
        }
        let pkg = parse_package(&src, PackageId(entry.id), &mut env, &packages)
            .map_err(|message| CorpusError::Parse { file: entry.file.clone(), message })?;
        packages.push(pkg);
    }
    let corpus = Corpus { spec: manifest.spec.clone(), env, packages };
    Ok((corpus, manifest))
}

fn parse_package(src: &str, id: PackageId, env: &mut Environment, earlier: &[Package]) -> Result<Package, String> {
    let forms = read_all(src).map_err(|e| e.to_string())?;
    let (header, body) = forms.split_first().ok_or("empty package file")?;
    let h = list(header).map_err(|e| e.to_string())?;
    let (name, imports) = match h.as_slice() {
        [kw, name, imports] if symbol(kw).ok() == Some("package") => (symbol(name).map_err(|e| e.to_string())?, imports),
        _ => return Err("expected (package NAME (imports ...))".into()),
    };
    let imports = list(imports).map_err(|e| e.to_string())?;
    let mut import_ids = Vec::new();
    for v in imports.iter().skip(1) {
        let n = symbol(v).map_err(|e| e.to_string())?;
        let q = earlier.iter().find(|p| p.name == n).ok_or(format!("unknown import {n}"))?;
        import_ids.push(q.id);
    }
    let mut defs = Vec::new();
    for form in body {
        let items = list(form).map_err(|e| e.to_string())?;
        let sym = |i: usize| items.get(i).and_then(|v| v.as_symbol()).ok_or(format!("malformed `{form}`"));
        let kw = sym(0)?;
        let name = sym(1)?.to_string();
        let (kind, defines, statement, proof) = match kw {
            "symbol" => {
                let arity = items.get(2).and_then(|v| v.as_u64()).ok_or(format!("bad arity in `{form}`"))?;
                (DefKind::FunctionSymbol { arity: arity as u32 }, None, None, None)
            }
            "equation" => {
                let target = sym(2)?;
                let s = env.lookup(target).ok_or(format!("unknown symbol {target}"))?;
                let f = items.get(3).ok_or("missing statement")?;
                let f = formula_from_value(f, env, &mut Vec::new()).map_err(|e| e.to_string())?;
                (DefKind::DefiningEquation, Some(s), Some(f), None)
            }
            "theorem" => {
                let f = items.get(2).ok_or("missing statement")?;
                let f = formula_from_value(f, env, &mut Vec::new()).map_err(|e| e.to_string())?;
                let script = list(items.get(3).ok_or("missing script")?).map_err(|e| e.to_string())?;
                let script = script
                    .iter()
                    .map(|t| tactic_from_value(t, env))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| e.to_string())?;
                (DefKind::Theorem, None, Some(f), Some(ProofScript(script)))
            }
            other => return Err(format!("unknown form `{other}`")),
        };
        let def = Definition { id: env.next_id(), kind, statement, package: id, name, defines, proof };
        defs.push(env.add(def).map_err(|e| e.to_string())?);
    }
    Ok(Package { id, name: name.to_string(), imports: import_ids, defs })
}
