//! Ingestion of external knowledge into immutable in-memory stores: CSV
//! tables, JSONL graphs, JSONL text corpora, and JSONL question files.

use crate::types::{DatasetClass, Difficulty, Question};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("MalformedCsv: line {line}: {detail}")]
    MalformedCsv { line: u64, detail: String },
    #[error("EmptyFile: {path}")]
    EmptyFile { path: String },
    #[error("malformed JSON on line {line}: {detail}")]
    MalformedJson { line: usize, detail: String },
    #[error("DuplicateNode: {id}")]
    DuplicateNode { id: String },
    #[error("DuplicateEdge: {a} -- {b}")]
    DuplicateEdge { a: String, b: String },
    #[error("DanglingEdge: {src} -- {dst} references an unknown node")]
    DanglingEdge { src: String, dst: String },
    #[error("DuplicateDocId: {id}")]
    DuplicateDocId { id: String },
    #[error("MissingField: line {line}: {field}")]
    MissingField { line: usize, field: &'static str },
    #[error("question file name {name:?} does not end in -easy.jsonl or -hard.jsonl")]
    BadQuestionFilename { name: String },
}

fn read_file(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Text,
    Integer,
    Real,
    Date,
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ColumnType::Text => "text",
            ColumnType::Integer => "integer",
            ColumnType::Real => "real",
            ColumnType::Date => "date",
        };
        f.write_str(name)
    }
}

/// An immutable table of string cells with a per-column inferred type.
/// Empty cells are nulls.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    name: String,
    columns: Vec<String>,
    types: Vec<ColumnType>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column_types(&self) -> &[ColumnType] {
        &self.types
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column_type(&self, index: usize) -> ColumnType {
        self.types[index]
    }
}

/// Accept `YYYY-MM-DD` (and `YYYY/MM/DD`, normalized to dashes) with sane
/// month and day ranges.
pub fn normalize_date(cell: &str) -> Option<String> {
    let bytes = cell.as_bytes();
    if bytes.len() != 10 {
        return None;
    }
    let sep = bytes[4];
    if (sep != b'-' && sep != b'/') || bytes[7] != sep {
        return None;
    }
    let digits_ok = bytes
        .iter()
        .enumerate()
        .all(|(i, b)| if i == 4 || i == 7 { true } else { b.is_ascii_digit() });
    if !digits_ok {
        return None;
    }
    let month: u32 = cell[5..7].parse().ok()?;
    let day: u32 = cell[8..10].parse().ok()?;
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return None;
    }
    Some(format!("{}-{}-{}", &cell[0..4], &cell[5..7], &cell[8..10]))
}

fn infer_type<'a>(cells: impl Iterator<Item = &'a str> + Clone) -> ColumnType {
    let non_empty = || cells.clone().filter(|c| !c.is_empty());
    if non_empty().next().is_none() {
        return ColumnType::Text;
    }
    if non_empty().all(|c| c.parse::<i64>().is_ok()) {
        return ColumnType::Integer;
    }
    if non_empty().all(|c| c.parse::<f64>().is_ok()) {
        return ColumnType::Real;
    }
    if non_empty().all(|c| normalize_date(c).is_some()) {
        return ColumnType::Date;
    }
    ColumnType::Text
}

/// Load a CSV table: header row, UTF-8, comma-delimited, double-quote
/// escaping. Column types are inferred; date cells are normalized at load.
pub fn load_table(path: &Path) -> Result<Table, DataError> {
    let text = read_file(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_table(&name, &text, &path.display().to_string())
}

/// Parse CSV text into a [`Table`]; exposed for fixtures and tests.
pub fn parse_table(name: &str, text: &str, origin: &str) -> Result<Table, DataError> {
    if text.trim().is_empty() {
        return Err(DataError::EmptyFile {
            path: origin.to_string(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let columns: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        rows.push(record.iter().map(|c| c.to_string()).collect::<Vec<_>>());
    }
    let types: Vec<ColumnType> = (0..columns.len())
        .map(|i| infer_type(rows.iter().map(move |r| r[i].as_str())))
        .collect();
    for (i, ty) in types.iter().enumerate() {
        if *ty == ColumnType::Date {
            for row in &mut rows {
                if !row[i].is_empty() {
                    if let Some(normalized) = normalize_date(&row[i]) {
                        row[i] = normalized;
                    }
                }
            }
        }
    }
    Ok(Table {
        name: name.to_string(),
        columns,
        types,
        rows,
    })
}

fn csv_error(err: csv::Error) -> DataError {
    let line = err
        .position()
        .map(|p| p.line())
        .or_else(|| match err.kind() {
            csv::ErrorKind::UnequalLengths { pos, .. } => pos.as_ref().map(|p| p.line()),
            _ => None,
        })
        .unwrap_or(0);
    DataError::MalformedCsv {
        line,
        detail: err.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Graphs
// ---------------------------------------------------------------------------

pub type AttrMap = BTreeMap<String, Value>;

/// An undirected attributed graph. Edge keys are stored with endpoints in
/// sorted order; adjacency lists are sorted by neighbor id.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    name: String,
    nodes: BTreeMap<String, AttrMap>,
    edges: BTreeMap<(String, String), AttrMap>,
    adjacency: BTreeMap<String, Vec<String>>,
}

impl Graph {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: &str) -> Option<&AttrMap> {
        self.nodes.get(id)
    }

    pub fn neighbors(&self, id: &str) -> Option<&[String]> {
        if !self.nodes.contains_key(id) {
            return None;
        }
        Some(
            self.adjacency
                .get(id)
                .map(|v| v.as_slice())
                .unwrap_or(&[]),
        )
    }

    pub fn edge(&self, a: &str, b: &str) -> Option<&AttrMap> {
        self.edges.get(&edge_key(a, b))
    }

    pub fn contains_node(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }
}

fn edge_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Load a JSONL graph of `{"type":"node","id",...,"attrs":{...}}` and
/// `{"type":"edge","src","dst","attrs":{...}}` records.
pub fn load_graph(path: &Path) -> Result<Graph, DataError> {
    let text = read_file(path)?;
    let name = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_graph(&name, &text)
}

pub fn parse_graph(name: &str, text: &str) -> Result<Graph, DataError> {
    let mut nodes: BTreeMap<String, AttrMap> = BTreeMap::new();
    let mut pending_edges: Vec<(String, String, AttrMap)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| DataError::MalformedJson {
            line: lineno + 1,
            detail: e.to_string(),
        })?;
        let kind = value
            .get("type")
            .and_then(|v| v.as_str())
            .ok_or(DataError::MissingField {
                line: lineno + 1,
                field: "type",
            })?;
        let attrs: AttrMap = value
            .get("attrs")
            .and_then(|v| v.as_object())
            .map(|m| m.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .unwrap_or_default();
        match kind {
            "node" => {
                let id = string_field(&value, "id", lineno + 1)?;
                if nodes.insert(id.clone(), attrs).is_some() {
                    return Err(DataError::DuplicateNode { id });
                }
            }
            "edge" => {
                let src = string_field(&value, "src", lineno + 1)?;
                let dst = string_field(&value, "dst", lineno + 1)?;
                pending_edges.push((src, dst, attrs));
            }
            other => {
                return Err(DataError::MalformedJson {
                    line: lineno + 1,
                    detail: format!("unknown record type {other:?}"),
                })
            }
        }
    }
    let mut edges: BTreeMap<(String, String), AttrMap> = BTreeMap::new();
    let mut adjacency: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (src, dst, attrs) in pending_edges {
        if !nodes.contains_key(&src) || !nodes.contains_key(&dst) {
            return Err(DataError::DanglingEdge { src, dst });
        }
        let key = edge_key(&src, &dst);
        if edges.insert(key.clone(), attrs).is_some() {
            return Err(DataError::DuplicateEdge { a: key.0, b: key.1 });
        }
        adjacency.entry(src.clone()).or_default().push(dst.clone());
        if src != dst {
            adjacency.entry(dst).or_default().push(src);
        }
    }
    for neighbors in adjacency.values_mut() {
        neighbors.sort();
    }
    Ok(Graph {
        name: name.to_string(),
        nodes,
        edges,
        adjacency,
    })
}

fn string_field(value: &Value, field: &'static str, line: usize) -> Result<String, DataError> {
    value
        .get(field)
        .and_then(|v| v.as_str())
        .map(String::from)
        .ok_or(DataError::MissingField { line, field })
}

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

/// A text corpus with a tf-idf index over lowercase alphanumeric tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    documents: Vec<(String, String)>,
    /// term -> (document index, tf-idf weight)
    postings: BTreeMap<String, Vec<(usize, f64)>>,
    /// per-document vector norms
    norms: Vec<f64>,
    doc_count: usize,
    doc_freq: BTreeMap<String, usize>,
}

/// Lowercase alphanumeric token runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

impl Corpus {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[(String, String)] {
        &self.documents
    }

    fn idf(&self, term: &str) -> f64 {
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (((1 + self.doc_count) as f64) / (1.0 + df)).ln() + 1.0
    }

    /// Documents by descending cosine similarity to the query, ties broken
    /// by ascending doc id. Zero-similarity documents are never returned.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<(&str, &str, f64)> {
        let tokens = tokenize(query);
        if tokens.is_empty() {
            return Vec::new();
        }
        let mut query_tf: BTreeMap<String, f64> = BTreeMap::new();
        for token in tokens {
            *query_tf.entry(token).or_insert(0.0) += 1.0;
        }
        let mut query_norm_sq = 0.0;
        // ordered maps keep the accumulation order, and therefore the
        // floating-point sums and tie behavior, identical across runs
        let mut dot: BTreeMap<usize, f64> = BTreeMap::new();
        for (term, tf) in &query_tf {
            let weight = tf * self.idf(term);
            query_norm_sq += weight * weight;
            if let Some(postings) = self.postings.get(term) {
                for (doc, doc_weight) in postings {
                    *dot.entry(*doc).or_insert(0.0) += weight * doc_weight;
                }
            }
        }
        let query_norm = query_norm_sq.sqrt();
        if query_norm == 0.0 {
            return Vec::new();
        }
        let mut scored: Vec<(usize, f64)> = dot
            .into_iter()
            .filter(|(doc, dot)| *dot > 0.0 && self.norms[*doc] > 0.0)
            .map(|(doc, dot)| (doc, dot / (query_norm * self.norms[doc])))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.documents[a.0].0.cmp(&self.documents[b.0].0))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(doc, sim)| {
                let (id, text) = &self.documents[doc];
                (id.as_str(), text.as_str(), sim)
            })
            .collect()
    }
}

/// Load a JSONL corpus of `{"id": "...", "text": "..."}` documents.
pub fn load_corpus(path: &Path) -> Result<Corpus, DataError> {
    let text = read_file(path)?;
    let name = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_corpus(&name, &text)
}

pub fn parse_corpus(name: &str, text: &str) -> Result<Corpus, DataError> {
    let mut documents: Vec<(String, String)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| DataError::MalformedJson {
            line: lineno + 1,
            detail: e.to_string(),
        })?;
        let id = string_field(&value, "id", lineno + 1)?;
        let doc_text = string_field(&value, "text", lineno + 1)?;
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateDocId { id });
        }
        documents.push((id, doc_text));
    }
    Ok(build_corpus(name, documents))
}

pub fn build_corpus(name: &str, documents: Vec<(String, String)>) -> Corpus {
    let doc_count = documents.len();
    let mut doc_freq: BTreeMap<String, usize> = BTreeMap::new();
    let mut term_counts: Vec<BTreeMap<String, f64>> = Vec::with_capacity(doc_count);
    for (_, text) in &documents {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for token in tokenize(text) {
            *counts.entry(token).or_insert(0.0) += 1.0;
        }
        for term in counts.keys() {
            *doc_freq.entry(term.clone()).or_insert(0) += 1;
        }
        term_counts.push(counts);
    }
    let idf = |term: &str| -> f64 {
        let df = doc_freq.get(term).copied().unwrap_or(0) as f64;
        (((1 + doc_count) as f64) / (1.0 + df)).ln() + 1.0
    };
    let mut postings: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    let mut norms = vec![0.0f64; doc_count];
    for (doc, counts) in term_counts.iter().enumerate() {
        let mut norm_sq = 0.0;
        for (term, tf) in counts {
            let weight = tf * idf(term);
            norm_sq += weight * weight;
            postings.entry(term.clone()).or_default().push((doc, weight));
        }
        norms[doc] = norm_sq.sqrt();
    }
    Corpus {
        name: name.to_string(),
        documents,
        postings,
        norms,
        doc_count,
        doc_freq,
    }
}

// ---------------------------------------------------------------------------
// Questions
// ---------------------------------------------------------------------------

/// Whether missing gold answers are an error (scoring) or allowed (ad hoc).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuestionMode {
    Scoring,
    Open,
}

/// Load a JSONL question file of `{"qid","question","answer"}` records.
/// Difficulty and the dataset ground truth come from the file name
/// convention `<dataset>-easy.jsonl` / `<dataset>-hard.jsonl`; blank lines
/// are skipped.
pub fn load_questions(path: &Path, mode: QuestionMode) -> Result<Vec<Question>, DataError> {
    let text = read_file(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (dataset, difficulty) = parse_question_stem(&stem)?;
    let mut questions = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| DataError::MalformedJson {
            line: lineno + 1,
            detail: e.to_string(),
        })?;
        let qid = string_field(&value, "qid", lineno + 1)?;
        let question_text = string_field(&value, "question", lineno + 1)?;
        let answer = value.get("answer").and_then(|v| v.as_str()).map(String::from);
        if mode == QuestionMode::Scoring && answer.is_none() {
            return Err(DataError::MissingField {
                line: lineno + 1,
                field: "answer",
            });
        }
        let question = Question::new(qid, question_text, difficulty, answer, dataset)
            .map_err(|e| DataError::MalformedJson {
                line: lineno + 1,
                detail: e.to_string(),
            })?;
        questions.push(question);
    }
    Ok(questions)
}

fn parse_question_stem(stem: &str) -> Result<(Option<DatasetClass>, Difficulty), DataError> {
    let (prefix, suffix) = stem.rsplit_once('-').ok_or(DataError::BadQuestionFilename {
        name: stem.to_string(),
    })?;
    let difficulty = match suffix {
        "easy" => Difficulty::Easy,
        "hard" => Difficulty::Hard,
        _ => {
            return Err(DataError::BadQuestionFilename {
                name: stem.to_string(),
            })
        }
    };
    Ok((DatasetClass::parse(prefix).ok(), difficulty))
}

// ---------------------------------------------------------------------------
// Store registry
// ---------------------------------------------------------------------------

/// All loaded stores, shared read-only by every episode.
#[derive(Debug, Default)]
pub struct DataStores {
    tables: BTreeMap<String, Table>,
    graphs: BTreeMap<String, Graph>,
    corpora: BTreeMap<String, Corpus>,
}

impl DataStores {
    pub fn new() -> DataStores {
        DataStores::default()
    }

    /// Walk `data_dir`: every subdirectory other than `questions` is a store
    /// directory that may contain `table.csv`, `graph.jsonl`, or
    /// `corpus.jsonl`; the directory name becomes the store name.
    pub fn load_dir(data_dir: &Path) -> Result<DataStores, DataError> {
        let mut stores = DataStores::new();
        let entries = std::fs::read_dir(data_dir).map_err(|source| DataError::Io {
            path: data_dir.display().to_string(),
            source,
        })?;
        let mut dirs: Vec<_> = entries
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.path())
            .collect();
        dirs.sort();
        for dir in dirs {
            let name = dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            if name == "questions" {
                continue;
            }
            let table_path = dir.join("table.csv");
            if table_path.is_file() {
                let text = read_file(&table_path)?;
                stores.tables.insert(
                    name.clone(),
                    parse_table(&name, &text, &table_path.display().to_string())?,
                );
            }
            let graph_path = dir.join("graph.jsonl");
            if graph_path.is_file() {
                let text = read_file(&graph_path)?;
                stores.graphs.insert(name.clone(), parse_graph(&name, &text)?);
            }
            let corpus_path = dir.join("corpus.jsonl");
            if corpus_path.is_file() {
                let text = read_file(&corpus_path)?;
                stores.corpora.insert(name.clone(), parse_corpus(&name, &text)?);
            }
        }
        Ok(stores)
    }

    pub fn insert_table(&mut self, table: Table) {
        self.tables.insert(table.name().to_string(), table);
    }

    pub fn insert_graph(&mut self, graph: Graph) {
        self.graphs.insert(graph.name().to_string(), graph);
    }

    pub fn insert_corpus(&mut self, corpus: Corpus) {
        self.corpora.insert(corpus.name().to_string(), corpus);
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(name)
    }

    pub fn graph(&self, name: &str) -> Option<&Graph> {
        self.graphs.get(name)
    }

    pub fn corpus(&self, name: &str) -> Option<&Corpus> {
        self.corpora.get(name)
    }

    pub fn tables(&self) -> &BTreeMap<String, Table> {
        &self.tables
    }

    pub fn graphs(&self) -> &BTreeMap<String, Graph> {
        &self.graphs
    }

    pub fn corpora(&self) -> &BTreeMap<String, Corpus> {
        &self.corpora
    }
}
