//! Per-document graphs: construction from dependency parses or co-occurrence
//! windows, validation, and the JSON interchange format.
//!
//! A [`DocumentGraph`] has one vertex per token occurrence (repeated words are
//! distinct vertices) and undirected, unweighted edges. Dependency graphs
//! additionally chain the root words of consecutive sentences so that a
//! multi-sentence document forms a single component.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window used by [`build_cooccurrence_graph`] when none is given.
pub const DEFAULT_WINDOW: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Token {
    pub id: usize,
    pub text: String,
    #[serde(rename = "sentence")]
    pub sentence_index: usize,
}

impl Token {
    pub fn new(id: usize, text: impl Into<String>, sentence_index: usize) -> Self {
        Token {
            id,
            text: text.into(),
            sentence_index,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyRecord {
    pub head: usize,
    pub dependent: usize,
    #[serde(default)]
    pub relation: String,
}

impl DependencyRecord {
    pub fn new(head: usize, dependent: usize, relation: impl Into<String>) -> Self {
        DependencyRecord {
            head,
            dependent,
            relation: relation.into(),
        }
    }
}

/// Undirected simple graph over the token occurrences of one document.
///
/// Construct with [`DocumentGraph::new`], [`build_dependency_graph`],
/// [`build_cooccurrence_graph`] or [`parse_graph`]; all of them validate.
/// Edges are stored as `(small, large)` pairs in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocumentGraph {
    doc_id: String,
    label: usize,
    tokens: Vec<Token>,
    edges: Vec<(usize, usize)>,
    sentence_roots: Vec<usize>,
}

impl DocumentGraph {
    /// Builds a graph from raw parts. Edge pairs are normalized to
    /// `(small, large)` and sorted; duplicates and self-loops are rejected.
    pub fn new(
        doc_id: impl Into<String>,
        label: usize,
        tokens: Vec<Token>,
        edges: Vec<(usize, usize)>,
        sentence_roots: Vec<usize>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        let mut normalized: Vec<(usize, usize)> = edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        normalized.sort_unstable();
        let graph = DocumentGraph {
            doc_id,
            label,
            tokens,
            edges: normalized,
            sentence_roots,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn sentence_roots(&self) -> &[usize] {
        &self.sentence_roots
    }

    pub fn num_nodes(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_sentences(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.sentence_index + 1)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.tokens.len()];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.tokens.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_nodes();
        if n == 0 {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
        count == n
    }

    /// Checks every graph invariant.
    pub fn validate(&self) -> Result<()> {
        let id = self.doc_id.as_str();
        validate_tokens(id, &self.tokens)?;
        let n = self.tokens.len();
        let mut prev: Option<(usize, usize)> = None;
        for &(a, b) in &self.edges {
            if a >= n || b >= n {
                return Err(Error::validation(
                    id,
                    format!("edge ({a}, {b}) references token id {} but the document has {n} tokens", a.max(b)),
                ));
            }
            if a == b {
                return Err(Error::validation(id, format!("self-loop on token {a}")));
            }
            if a > b {
                return Err(Error::validation(id, format!("edge ({a}, {b}) is not normalized")));
            }
            if let Some(p) = prev {
                if p == (a, b) {
                    return Err(Error::validation(id, format!("duplicate edge ({a}, {b})")));
                }
                if p > (a, b) {
                    return Err(Error::validation(id, "edges are not sorted"));
                }
            }
            prev = Some((a, b));
        }
        if self.sentence_roots.is_empty() {
            return Ok(());
        }
        validate_roots(id, &self.tokens, &self.sentence_roots)?;
        for pair in self.sentence_roots.windows(2) {
            let key = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if self.edges.binary_search(&key).is_err() {
                return Err(Error::validation(
                    id,
                    format!("missing root chain edge ({}, {})", key.0, key.1),
                ));
            }
        }
        Ok(())
    }
}

fn validate_tokens(doc_id: &str, tokens: &[Token]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::validation(doc_id, "empty document"));
    }
    let mut expected_sentence = 0;
    for (i, tok) in tokens.iter().enumerate() {
        if tok.id != i {
            return Err(Error::validation(
                doc_id,
                format!("token at position {i} has id {} (ids must be 0..l-1 in order)", tok.id),
            ));
        }
        if i == 0 && tok.sentence_index != 0 {
            return Err(Error::validation(doc_id, "first token must belong to sentence 0"));
        }
        if tok.sentence_index != expected_sentence {
            if tok.sentence_index != expected_sentence + 1 {
                return Err(Error::validation(
                    doc_id,
                    format!(
                        "token {i} has sentence {} after sentence {expected_sentence}",
                        tok.sentence_index
                    ),
                ));
            }
            expected_sentence += 1;
        }
    }
    Ok(())
}

fn validate_roots(doc_id: &str, tokens: &[Token], roots: &[usize]) -> Result<()> {
    let sentences = tokens.last().map_or(0, |t| t.sentence_index + 1);
    if roots.len() != sentences {
        return Err(Error::validation(
            doc_id,
            format!("{} sentence roots given for {sentences} sentences", roots.len()),
        ));
    }
    for (k, &root) in roots.iter().enumerate() {
        let tok = tokens.get(root).ok_or_else(|| {
            Error::validation(doc_id, format!("root token id {root} out of range"))
        })?;
        if tok.sentence_index != k {
            return Err(Error::validation(
                doc_id,
                format!("root {root} of sentence {k} lies in sentence {}", tok.sentence_index),
            ));
        }
    }
    Ok(())
}

/// Builds the dependency graph: one edge per head/dependent pair plus an edge
/// between the roots of each pair of adjacent sentences.
///
/// Dependencies that cross sentence boundaries, reference unknown tokens, or a
/// root list that does not give exactly one root per sentence are rejected.
pub fn build_dependency_graph(
    tokens: Vec<Token>,
    deps: &[DependencyRecord],
    roots: &[usize],
    doc_id: &str,
    label: usize,
) -> Result<DocumentGraph> {
    validate_tokens(doc_id, &tokens)?;
    validate_roots(doc_id, &tokens, roots)?;
    let n = tokens.len();
    let mut edges = BTreeSet::new();
    for dep in deps {
        for id in [dep.head, dep.dependent] {
            if id >= n {
                return Err(Error::validation(
                    doc_id,
                    format!("dependency references token id {id} but the document has {n} tokens"),
                ));
            }
        }
        if dep.head == dep.dependent {
            continue;
        }
        let (hs, ds) = (tokens[dep.head].sentence_index, tokens[dep.dependent].sentence_index);
        if hs != ds {
            return Err(Error::validation(
                doc_id,
                format!(
                    "dependency {} -> {} crosses sentences {hs} and {ds}",
                    dep.head, dep.dependent
                ),
            ));
        }
        edges.insert((dep.head.min(dep.dependent), dep.head.max(dep.dependent)));
    }
    for pair in roots.windows(2) {
        edges.insert((pair[0].min(pair[1]), pair[0].max(pair[1])));
    }
    DocumentGraph::new(doc_id, label, tokens, edges.into_iter().collect(), roots.to_vec())
}

/// Connects every pair of tokens whose positions differ by less than `window`.
pub fn build_cooccurrence_graph(
    tokens: Vec<Token>,
    window: usize,
    doc_id: &str,
    label: usize,
) -> Result<DocumentGraph> {
    if window < 2 {
        return Err(Error::Config(format!("co-occurrence window must be at least 2, got {window}")));
    }
    validate_tokens(doc_id, &tokens)?;
    let n = tokens.len();
    let edges = (0..n)
        .flat_map(|i| (i + 1..n.min(i + window)).map(move |j| (i, j)))
        .collect();
    DocumentGraph::new(doc_id, label, tokens, edges, Vec::new())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    doc_id: String,
    label: usize,
    tokens: Vec<Token>,
    edges: Vec<[usize; 2]>,
    sentence_roots: Vec<usize>,
}

/// Encodes a graph as a single-line JSON object (suitable for JSON-lines).
pub fn serialize_graph(g: &DocumentGraph) -> Vec<u8> {
    let file = GraphFile {
        doc_id: g.doc_id.clone(),
        label: g.label,
        tokens: g.tokens.clone(),
        edges: g.edges.iter().map(|&(a, b)| [a, b]).collect(),
        sentence_roots: g.sentence_roots.clone(),
    };
    serde_json::to_vec(&file).expect("graph serialization is infallible")
}

pub fn parse_graph(bytes: &[u8]) -> Result<DocumentGraph> {
    let file: GraphFile = serde_json::from_slice(bytes).map_err(Error::from_json)?;
    DocumentGraph::new(
        file.doc_id,
        file.label,
        file.tokens,
        file.edges.into_iter().map(|[a, b]| (a, b)).collect(),
        file.sentence_roots,
    )
}

/// Parses a JSON-lines buffer of graphs, one per non-empty line. Errors carry
/// the 1-based line number.
pub fn parse_graphs_jsonl(bytes: &[u8]) -> Result<Vec<DocumentGraph>> {
    let mut out = Vec::new();
    for (lineno, line) in bytes.split(|&b| b == b'\n').enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        out.push(parse_graph(line).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("line {} ({location})", lineno + 1),
                message,
            },
            other => other,
        })?);
    }
    Ok(out)
}

pub fn read_graph(path: &Path) -> Result<DocumentGraph> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_graph(&bytes)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(b"\n").map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Output of the preprocessing stage for one document. Dependency fields are
/// absent for plain token files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParsedDocument {
    pub doc_id: String,
    pub label: usize,
    pub tokens: Vec<Token>,
    #[serde(default)]
    pub dependencies: Vec<DependencyRecord>,
    #[serde(default)]
    pub sentence_roots: Vec<usize>,
}

impl ParsedDocument {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
            message: e.to_string(),
        })
    }

    pub fn to_dependency_graph(&self) -> Result<DocumentGraph> {
        build_dependency_graph(
            self.tokens.clone(),
            &self.dependencies,
            &self.sentence_roots,
            &self.doc_id,
            self.label,
        )
    }

    pub fn to_cooccurrence_graph(&self, window: usize) -> Result<DocumentGraph> {
        build_cooccurrence_graph(self.tokens.clone(), window, &self.doc_id, self.label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub split: Split,
    pub path: PathBuf,
}

/// Reads a JSON-lines manifest. Relative paths are resolved against the
/// manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
            location: format!("{}:{}:{}", path.display(), lineno + 1, e.column()),
            message: e.to_string(),
        })?;
        if entry.path.is_relative() {
            entry.path = base.join(&entry.path);
        }
        out.push(entry);
    }
    Ok(out)
}

/// Writes a manifest with paths relative to `dir` where possible.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut buf = Vec::new();
    for e in entries {
        let rel: PathBuf = e.path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| e.path.clone());
        let entry = ManifestEntry {
            path: rel,
            ..e.clone()
        };
        serde_json::to_writer(&mut buf, &entry).expect("manifest serialization is infallible");
        buf.push(b'\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
