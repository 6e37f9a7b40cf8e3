//! Prompt templates, few-shot exemplars, and hint texts, loaded from plain
//! text files under a prompt directory:
//!
//! ```text
//! prompts/
//!   recognizer/classify.txt     + recognizer/examples.txt
//!   decomposer/decompose.txt    + decomposer/examples.txt
//!   handlers/direct/<tool>.txt
//!   handlers/parallel/<tool>.<stage>.txt   (categorize, fragment, repair)
//!   handlers/serial/<tool>.<stage>.txt
//!   hints/<dataset>.<flavor>.txt
//! ```
//!
//! Exemplar files hold blocks separated by `---` lines. A checksum over the
//! whole file set is recorded in every run report so results can be traced
//! to the exact prompt version.

use crate::decomposer::format_history_truncated;
use crate::types::{DatasetClass, Hint, HintFlavor, Question, Step, ToolName};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// Tool results longer than this are cut in decomposer history prompts.
pub const RESULT_TRUNCATION_LIMIT: usize = 2000;

/// Placeholder names the renderer knows about. Brace text outside this set
/// is left verbatim, so prompt prose may contain literal braces.
const KNOWN_PLACEHOLDERS: [&str; 13] = [
    "question",
    "hint",
    "examples",
    "history",
    "next_index",
    "tool",
    "subtask",
    "category",
    "categorization",
    "candidate",
    "schema",
    "context",
    "categories",
];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("missing template {name}")]
    MissingTemplate { name: String },
    #[error("UnregisteredPair: no handler template {file} for tool {tool}")]
    UnregisteredPair { tool: ToolName, file: String },
    #[error("InvalidStage: stage {stage} is not valid for the {structure} structure")]
    InvalidStage {
        structure: &'static str,
        stage: String,
    },
    #[error("template {template} rendered with unbound placeholder {{{placeholder}}}")]
    UnboundPlaceholder {
        template: String,
        placeholder: String,
    },
    #[error("exemplar file {name} is empty")]
    NoExemplars { name: String },
    #[error("missing standard hint for dataset {dataset}")]
    MissingHint { dataset: DatasetClass },
    #[error("missing preference hint for tabular dataset {dataset}")]
    MissingPreferenceHint { dataset: DatasetClass },
    #[error("bad hint file {path}: {detail}")]
    BadHint { path: String, detail: String },
}

/// The three handler shapes a tool can be bound to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StructureKind {
    Direct,
    Parallel,
    Serial,
}

impl StructureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StructureKind::Direct => "direct",
            StructureKind::Parallel => "parallel",
            StructureKind::Serial => "serial",
        }
    }
}

/// Stage selector for handler prompts, carrying the stage-specific context.
#[derive(Debug, Clone, Copy)]
pub enum HandlerStage<'a> {
    Direct,
    Categorize {
        categories: &'a [String],
    },
    Fragment {
        category: &'a str,
        categorization: &'a str,
    },
    Repair {
        candidate: &'a str,
    },
    Serial {
        stage: &'a str,
        context: &'a str,
        schema: &'a str,
    },
}

impl HandlerStage<'_> {
    fn structure(&self) -> StructureKind {
        match self {
            HandlerStage::Direct => StructureKind::Direct,
            HandlerStage::Categorize { .. }
            | HandlerStage::Fragment { .. }
            | HandlerStage::Repair { .. } => StructureKind::Parallel,
            HandlerStage::Serial { .. } => StructureKind::Serial,
        }
    }

    fn file(&self, tool: ToolName) -> String {
        let stem = tool.file_stem();
        match self {
            HandlerStage::Direct => format!("handlers/direct/{stem}"),
            HandlerStage::Categorize { .. } => format!("handlers/parallel/{stem}.categorize"),
            HandlerStage::Fragment { .. } => format!("handlers/parallel/{stem}.fragment"),
            HandlerStage::Repair { .. } => format!("handlers/parallel/{stem}.repair"),
            HandlerStage::Serial { stage, .. } => format!("handlers/serial/{stem}.{stage}"),
        }
    }
}

/// A named template body with `{placeholder}` markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> PromptTemplate {
        PromptTemplate {
            name: name.into(),
            body: body.into(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Single-pass substitution: known placeholders must all be bound;
    /// unknown brace text passes through untouched. Substituted values are
    /// never rescanned.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find(['{', '}']) {
                Some(close) if after.as_bytes()[close] == b'}' => {
                    let name = &after[..close];
                    if KNOWN_PLACEHOLDERS.contains(&name) {
                        match bindings.iter().find(|(k, _)| *k == name) {
                            Some((_, value)) => out.push_str(value),
                            None => {
                                return Err(PromptError::UnboundPlaceholder {
                                    template: self.name.clone(),
                                    placeholder: name.to_string(),
                                })
                            }
                        }
                    } else {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out.trim_end().to_string())
    }
}

/// Immutable catalog of every template, exemplar set, and hint. Rendering is
/// pure; the per-structure render counters exist so tests can assert which
/// handler shapes a run actually used.
pub struct PromptCatalog {
    templates: BTreeMap<String, PromptTemplate>,
    recognizer_exemplars: Vec<String>,
    decomposer_exemplars: Vec<String>,
    hints: BTreeMap<(DatasetClass, HintFlavor), Hint>,
    checksum: String,
    direct_renders: AtomicU64,
    parallel_renders: AtomicU64,
    serial_renders: AtomicU64,
}

impl PromptCatalog {
    /// Load every `*.txt` under `root`. Validation requires the recognizer
    /// and decomposer templates with non-empty exemplars, a direct handler
    /// template for each of the 13 tools, a standard hint for every dataset
    /// class, and preference hints for the four tabular classes.
    pub fn load(root: &Path) -> Result<PromptCatalog, PromptError> {
        let mut files: Vec<(String, String)> = Vec::new();
        collect_txt_files(root, root, &mut files)?;
        files.sort_by(|a, b| a.0.cmp(&b.0));

        let mut hasher = Sha256::new();
        for (rel, text) in &files {
            hasher.update(rel.as_bytes());
            hasher.update([0u8]);
            hasher.update(text.as_bytes());
            hasher.update([0u8]);
        }
        let checksum = hex_digest(hasher);

        let mut catalog = PromptCatalog {
            templates: BTreeMap::new(),
            recognizer_exemplars: Vec::new(),
            decomposer_exemplars: Vec::new(),
            hints: BTreeMap::new(),
            checksum,
            direct_renders: AtomicU64::new(0),
            parallel_renders: AtomicU64::new(0),
            serial_renders: AtomicU64::new(0),
        };
        for (rel, text) in files {
            let key = rel.trim_end_matches(".txt").to_string();
            if key == "recognizer/examples" {
                catalog.recognizer_exemplars = split_exemplars(&text);
            } else if key == "decomposer/examples" {
                catalog.decomposer_exemplars = split_exemplars(&text);
            } else if let Some(stem) = key.strip_prefix("hints/") {
                let (dataset, flavor) = parse_hint_stem(stem).ok_or_else(|| PromptError::BadHint {
                    path: rel.clone(),
                    detail: "expected hints/<dataset>.<standard|preference>.txt".into(),
                })?;
                let hint = Hint::new(dataset, flavor, text.trim().to_string()).map_err(|e| {
                    PromptError::BadHint {
                        path: rel.clone(),
                        detail: e.to_string(),
                    }
                })?;
                catalog.hints.insert((dataset, flavor), hint);
            } else if key == "results" {
                // checksummed documentation, not a template
            } else {
                catalog.templates.insert(key.clone(), PromptTemplate::new(key, text));
            }
        }
        catalog.validate()?;
        Ok(catalog)
    }

    fn validate(&self) -> Result<(), PromptError> {
        for required in ["recognizer/classify", "decomposer/decompose"] {
            if !self.templates.contains_key(required) {
                return Err(PromptError::MissingTemplate {
                    name: required.to_string(),
                });
            }
        }
        if self.recognizer_exemplars.is_empty() {
            return Err(PromptError::NoExemplars {
                name: "recognizer/examples".to_string(),
            });
        }
        if self.decomposer_exemplars.is_empty() {
            return Err(PromptError::NoExemplars {
                name: "decomposer/examples".to_string(),
            });
        }
        for tool in ToolName::ALL {
            let key = format!("handlers/direct/{}", tool.file_stem());
            if !self.templates.contains_key(&key) {
                return Err(PromptError::MissingTemplate { name: key });
            }
        }
        for dataset in DatasetClass::ALL {
            if !self.hints.contains_key(&(dataset, HintFlavor::Standard)) {
                return Err(PromptError::MissingHint { dataset });
            }
        }
        for dataset in [
            DatasetClass::Flight,
            DatasetClass::Coffee,
            DatasetClass::Yelp,
            DatasetClass::Airbnb,
        ] {
            if !self.hints.contains_key(&(dataset, HintFlavor::Preference)) {
                return Err(PromptError::MissingPreferenceHint { dataset });
            }
        }
        Ok(())
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn template(&self, key: &str) -> Option<&PromptTemplate> {
        self.templates.get(key)
    }

    pub fn template_count(&self) -> usize {
        self.templates.len()
    }

    pub fn hint_count(&self) -> usize {
        self.hints.len()
    }

    pub fn recognizer_exemplars(&self) -> &[String] {
        &self.recognizer_exemplars
    }

    pub fn decomposer_exemplars(&self) -> &[String] {
        &self.decomposer_exemplars
    }

    /// The hint of the requested flavor, falling back to Standard when the
    /// class has no Preference hint.
    pub fn hint(&self, dataset: DatasetClass, flavor: HintFlavor) -> Option<&Hint> {
        self.hints
            .get(&(dataset, flavor))
            .or_else(|| self.hints.get(&(dataset, HintFlavor::Standard)))
    }

    /// Number of handler prompts rendered so far, per structure.
    pub fn handler_render_counts(&self) -> BTreeMap<&'static str, u64> {
        let mut counts = BTreeMap::new();
        counts.insert("direct", self.direct_renders.load(Ordering::Relaxed));
        counts.insert("parallel", self.parallel_renders.load(Ordering::Relaxed));
        counts.insert("serial", self.serial_renders.load(Ordering::Relaxed));
        counts
    }

    /// Assemble the classification prompt for one question.
    pub fn recognizer_prompt(
        &self,
        question: &Question,
        exemplars: &[String],
    ) -> Result<String, PromptError> {
        if exemplars.is_empty() {
            return Err(PromptError::NoExemplars {
                name: "recognizer/examples".to_string(),
            });
        }
        let template = self
            .templates
            .get("recognizer/classify")
            .expect("validated at load");
        template.render(&[
            ("examples", &exemplars.join("\n\n")),
            ("question", question.text()),
        ])
    }

    /// Assemble the decomposition prompt: question, optional hint line,
    /// alternating Subtask/Result history, ending in `Subtask {next}:`.
    /// Results longer than [`RESULT_TRUNCATION_LIMIT`] characters are cut
    /// with a trailing `…(truncated)` marker.
    pub fn decomposer_prompt(
        &self,
        question: &Question,
        hint: Option<&Hint>,
        history: &[Step],
        next_index: usize,
        exemplars: &[String],
    ) -> Result<String, PromptError> {
        debug_assert_eq!(next_index, history.len() + 1);
        if exemplars.is_empty() {
            return Err(PromptError::NoExemplars {
                name: "decomposer/examples".to_string(),
            });
        }
        let template = self
            .templates
            .get("decomposer/decompose")
            .expect("validated at load");
        let hint_line = match hint {
            Some(hint) => format!("Hint: {}\n", hint.text()),
            None => String::new(),
        };
        let mut history_block = format_history_truncated(history, RESULT_TRUNCATION_LIMIT);
        if !history_block.is_empty() {
            history_block.push('\n');
        }
        template.render(&[
            ("examples", &exemplars.join("\n\n")),
            ("question", question.text()),
            ("hint", &hint_line),
            ("history", &history_block),
            ("next_index", &next_index.to_string()),
        ])
    }

    /// Assemble one handler-stage prompt; every variant ends with
    /// `Question: {subtask}` and a trailing `Answer:` cue.
    pub fn handler_prompt(
        &self,
        structure: StructureKind,
        tool: ToolName,
        subtask: &str,
        stage: HandlerStage<'_>,
    ) -> Result<String, PromptError> {
        if stage.structure() != structure {
            return Err(PromptError::InvalidStage {
                structure: structure.as_str(),
                stage: format!("{stage:?}"),
            });
        }
        let file = stage.file(tool);
        let template = self
            .templates
            .get(&file)
            .ok_or_else(|| PromptError::UnregisteredPair { tool, file: file.clone() })?;
        let rendered = match stage {
            HandlerStage::Direct => template.render(&[("subtask", subtask)]),
            HandlerStage::Categorize { categories } => template.render(&[
                ("subtask", subtask),
                ("categories", &join_with_and(categories)),
            ]),
            HandlerStage::Fragment {
                category,
                categorization,
            } => template.render(&[
                ("subtask", subtask),
                ("category", category),
                ("categorization", categorization),
            ]),
            HandlerStage::Repair { candidate } => {
                template.render(&[("subtask", subtask), ("candidate", candidate)])
            }
            HandlerStage::Serial { context, schema, .. } => template.render(&[
                ("subtask", subtask),
                ("context", context),
                ("schema", schema),
            ]),
        }?;
        let counter = match structure {
            StructureKind::Direct => &self.direct_renders,
            StructureKind::Parallel => &self.parallel_renders,
            StructureKind::Serial => &self.serial_renders,
        };
        counter.fetch_add(1, Ordering::Relaxed);
        Ok(rendered)
    }
}

/// `["time","space","object"]` -> `"time, space and object"`.
fn join_with_and(items: &[String]) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        n => format!("{} and {}", items[..n - 1].join(", "), items[n - 1]),
    }
}

/// Cut a result to `limit` characters with a truncation marker.
pub fn truncate_result(result: &str, limit: usize) -> String {
    if result.chars().count() <= limit {
        return result.to_string();
    }
    let mut out: String = result.chars().take(limit).collect();
    out.push_str("…(truncated)");
    out
}

fn split_exemplars(text: &str) -> Vec<String> {
    text.split('\n')
        .collect::<Vec<_>>()
        .split(|line| line.trim() == "---")
        .map(|block| block.join("\n").trim().to_string())
        .filter(|block| !block.is_empty())
        .collect()
}

fn parse_hint_stem(stem: &str) -> Option<(DatasetClass, HintFlavor)> {
    let (dataset, flavor) = stem.rsplit_once('.')?;
    let flavor = match flavor {
        "standard" => HintFlavor::Standard,
        "preference" => HintFlavor::Preference,
        _ => return None,
    };
    Some((DatasetClass::parse(dataset).ok()?, flavor))
}

fn collect_txt_files(
    root: &Path,
    dir: &Path,
    out: &mut Vec<(String, String)>,
) -> Result<(), PromptError> {
    let read_dir = std::fs::read_dir(dir).map_err(|source| PromptError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    for entry in read_dir {
        let entry = entry.map_err(|source| PromptError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = entry.path();
        if path.is_dir() {
            collect_txt_files(root, &path, out)?;
        } else if path.extension().map(|e| e == "txt").unwrap_or(false) {
            let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            out.push((rel, text));
        }
    }
    Ok(())
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
