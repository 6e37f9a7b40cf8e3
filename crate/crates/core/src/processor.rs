//! The subtask processor: given a tool and a subtask, run the handler
//! structure registered for that tool and produce an accurate invocation.
//!
//! Three structures exist. Direct asks once. Parallel categorizes the
//! filtering information, asks once per category, then merges the fragments
//! locally (one extra repair call only when the merged parameter fails the
//! tool's grammar pre-check). Serial runs ordered dependent stages, feeding
//! each stage's output into the next prompt, and parses the final stage as
//! the invocation.

use crate::gateway::{Caller, Gateway, GatewayError};
use crate::parse::{parse_invocation, ParseError};
use crate::prompting::{HandlerStage, PromptCatalog, PromptError, StructureKind};
use crate::toolkit::parameter_precheck;
use crate::types::{ToolInvocation, ToolName};
use std::collections::BTreeMap;
use thiserror::Error;

/// The handler shape bound to a tool, with its per-structure configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandlerStructure {
    Direct,
    Parallel { categories: Vec<String> },
    Serial { stages: Vec<String> },
}

impl HandlerStructure {
    pub fn kind(&self) -> StructureKind {
        match self {
            HandlerStructure::Direct => StructureKind::Direct,
            HandlerStructure::Parallel { .. } => StructureKind::Parallel,
            HandlerStructure::Serial { .. } => StructureKind::Serial,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("registry does not cover tool {tool}")]
    MissingTool { tool: ToolName },
    #[error("parallel categories for {tool} must be non-empty and distinct")]
    BadCategories { tool: ToolName },
    #[error("serial stages for {tool} must be ordered and at least two")]
    BadStages { tool: ToolName },
    #[error("unknown tool name {token} in registry override")]
    UnknownTool { token: String },
    #[error("bad registry override: {detail}")]
    BadOverride { detail: String },
}

/// Total map from every tool to exactly one handler structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandlerRegistry {
    map: BTreeMap<ToolName, HandlerStructure>,
}

impl HandlerRegistry {
    /// Build from an explicit map; the map must cover all 13 tools, parallel
    /// category lists must be non-empty and distinct, serial stage lists
    /// must hold at least two stages.
    pub fn new(map: BTreeMap<ToolName, HandlerStructure>) -> Result<HandlerRegistry, RegistryError> {
        for tool in ToolName::ALL {
            match map.get(&tool) {
                None => return Err(RegistryError::MissingTool { tool }),
                Some(HandlerStructure::Parallel { categories }) => {
                    let mut distinct = categories.clone();
                    distinct.sort();
                    distinct.dedup();
                    if categories.is_empty() || distinct.len() != categories.len() {
                        return Err(RegistryError::BadCategories { tool });
                    }
                }
                Some(HandlerStructure::Serial { stages }) => {
                    if stages.len() < 2 {
                        return Err(RegistryError::BadStages { tool });
                    }
                }
                Some(HandlerStructure::Direct) => {}
            }
        }
        Ok(HandlerRegistry { map })
    }

    /// The default assignment: SQLInterpreter runs serially over skeleton,
    /// mapping, synthesis; FilterDB runs in parallel over time, space,
    /// object; every other tool generates directly.
    pub fn standard() -> HandlerRegistry {
        let mut map = BTreeMap::new();
        for tool in ToolName::ALL {
            map.insert(tool, HandlerStructure::Direct);
        }
        map.insert(
            ToolName::FilterDB,
            HandlerStructure::Parallel {
                categories: vec!["time".into(), "space".into(), "object".into()],
            },
        );
        map.insert(
            ToolName::SQLInterpreter,
            HandlerStructure::Serial {
                stages: vec!["skeleton".into(), "mapping".into(), "synthesis".into()],
            },
        );
        HandlerRegistry::new(map).expect("the standard registry is total")
    }

    /// Every tool direct: the one-structure ablation.
    pub fn direct_only() -> HandlerRegistry {
        let mut map = BTreeMap::new();
        for tool in ToolName::ALL {
            map.insert(tool, HandlerStructure::Direct);
        }
        HandlerRegistry::new(map).expect("the direct registry is total")
    }

    /// Apply a TOML override on top of the standard registry. Each entry of
    /// the `[tools]` table maps a tool name to a structure:
    ///
    /// ```toml
    /// [tools]
    /// GetValue = { structure = "direct" }
    /// FilterDB = { structure = "parallel", categories = ["time", "space", "object"] }
    /// SQLInterpreter = { structure = "serial", stages = ["skeleton", "mapping", "synthesis"] }
    /// ```
    pub fn from_toml(text: &str) -> Result<HandlerRegistry, RegistryError> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            RegistryError::BadOverride {
                detail: e.to_string(),
            }
        })?;
        let mut map = HandlerRegistry::standard().map;
        let tools = match value.get("tools") {
            Some(toml::Value::Table(table)) => table,
            Some(_) => {
                return Err(RegistryError::BadOverride {
                    detail: "[tools] must be a table".into(),
                })
            }
            None => {
                return Err(RegistryError::BadOverride {
                    detail: "missing [tools] table".into(),
                })
            }
        };
        for (token, entry) in tools {
            let tool = ToolName::parse(token).map_err(|_| RegistryError::UnknownTool {
                token: token.clone(),
            })?;
            let structure_name = entry
                .get("structure")
                .and_then(|v| v.as_str())
                .ok_or_else(|| RegistryError::BadOverride {
                    detail: format!("tool {token} needs a string `structure` field"),
                })?;
            let structure = match structure_name {
                "direct" => HandlerStructure::Direct,
                "parallel" => HandlerStructure::Parallel {
                    categories: string_list(entry.get("categories")).ok_or_else(|| {
                        RegistryError::BadOverride {
                            detail: format!("tool {token} needs `categories`"),
                        }
                    })?,
                },
                "serial" => HandlerStructure::Serial {
                    stages: string_list(entry.get("stages")).ok_or_else(|| {
                        RegistryError::BadOverride {
                            detail: format!("tool {token} needs `stages`"),
                        }
                    })?,
                },
                other => {
                    return Err(RegistryError::BadOverride {
                        detail: format!("unknown structure {other:?} for tool {token}"),
                    })
                }
            };
            map.insert(tool, structure);
        }
        HandlerRegistry::new(map)
    }

    pub fn structure(&self, tool: ToolName) -> &HandlerStructure {
        self.map.get(&tool).expect("registries are total")
    }

    pub fn entries(&self) -> impl Iterator<Item = (ToolName, &HandlerStructure)> {
        self.map.iter().map(|(tool, structure)| (*tool, structure))
    }

    /// Check that every (tool, structure) pair has its prompt files in the
    /// catalog, so a run cannot fail later on a missing template.
    pub fn validate_prompts(&self, catalog: &PromptCatalog) -> Result<(), PromptError> {
        for (tool, structure) in &self.map {
            let stem = tool.file_stem();
            let mut needed = vec![format!("handlers/direct/{stem}")];
            match structure {
                HandlerStructure::Direct => {}
                HandlerStructure::Parallel { .. } => {
                    needed.push(format!("handlers/parallel/{stem}.categorize"));
                    needed.push(format!("handlers/parallel/{stem}.fragment"));
                    needed.push(format!("handlers/parallel/{stem}.repair"));
                }
                HandlerStructure::Serial { stages } => {
                    for stage in stages {
                        needed.push(format!("handlers/serial/{stem}.{stage}"));
                    }
                }
            }
            for file in needed {
                if catalog.template(&file).is_none() {
                    return Err(PromptError::UnregisteredPair { tool: *tool, file });
                }
            }
        }
        Ok(())
    }
}

fn string_list(value: Option<&toml::Value>) -> Option<Vec<String>> {
    let items = value?.as_array()?;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        out.push(item.as_str()?.to_string());
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

/// What went wrong inside a handler stage.
#[derive(Debug, Error)]
pub enum StageFailure {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("ToolMismatch: expected {expected}, the response invoked {got}")]
    ToolMismatch { expected: ToolName, got: ToolName },
    #[error("EmptyConditions: every category came back none")]
    EmptyConditions,
    #[error("empty stage output")]
    EmptyStageOutput,
    #[error("{0}")]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Error)]
pub enum ProcessorError {
    #[error("{0}")]
    Infrastructure(#[from] GatewayError),
    #[error("HandlerFailed: stage {stage}: {source}")]
    Handler {
        stage: String,
        #[source]
        source: StageFailure,
    },
}

impl ProcessorError {
    fn at(stage: impl Into<String>) -> impl FnOnce(StageFailure) -> ProcessorError {
        let stage = stage.into();
        move |source| ProcessorError::Handler { stage, source }
    }
}

/// Stateless dispatcher over the registry; borrows the gateway and catalog
/// for the duration of one episode.
pub struct Processor<'a> {
    pub gateway: &'a Gateway,
    pub catalog: &'a PromptCatalog,
    pub registry: &'a HandlerRegistry,
}

impl Processor<'_> {
    /// Generate the invocation for one (tool, subtask) pair. `schema` is the
    /// column listing injected into serial mapping prompts.
    pub fn generate(
        &self,
        tool: ToolName,
        subtask: &str,
        schema: &str,
    ) -> Result<ToolInvocation, ProcessorError> {
        match self.registry.structure(tool) {
            HandlerStructure::Direct => self.run_direct(tool, subtask),
            HandlerStructure::Parallel { categories } => {
                self.run_parallel(tool, subtask, categories)
            }
            HandlerStructure::Serial { stages } => self.run_serial(tool, subtask, stages, schema),
        }
    }

    pub fn run_direct(&self, tool: ToolName, subtask: &str) -> Result<ToolInvocation, ProcessorError> {
        let prompt = self
            .catalog
            .handler_prompt(StructureKind::Direct, tool, subtask, HandlerStage::Direct)
            .map_err(|e| ProcessorError::at("direct")(e.into()))?;
        let response = self.gateway.complete(&prompt, Caller::Processor)?;
        parse_checked(tool, &response).map_err(ProcessorError::at("direct"))
    }

    pub fn run_parallel(
        &self,
        tool: ToolName,
        subtask: &str,
        categories: &[String],
    ) -> Result<ToolInvocation, ProcessorError> {
        let categorize_prompt = self
            .catalog
            .handler_prompt(
                StructureKind::Parallel,
                tool,
                subtask,
                HandlerStage::Categorize { categories },
            )
            .map_err(|e| ProcessorError::at("categorize")(e.into()))?;
        let categorization = self.gateway.complete(&categorize_prompt, Caller::Processor)?;
        let categorization = clean_stage_output(&categorization);

        let mut fragments: Vec<String> = Vec::new();
        for category in categories {
            let prompt = self
                .catalog
                .handler_prompt(
                    StructureKind::Parallel,
                    tool,
                    subtask,
                    HandlerStage::Fragment {
                        category,
                        categorization: &categorization,
                    },
                )
                .map_err(|e| ProcessorError::at(format!("fragment:{category}"))(e.into()))?;
            let response = self.gateway.complete(&prompt, Caller::Processor)?;
            if let Some(fragment) = parse_fragment(&response) {
                fragments.push(fragment);
            }
        }
        if fragments.is_empty() {
            return Err(ProcessorError::at("merge")(StageFailure::EmptyConditions));
        }
        let merged = merge_fragments(&fragments);
        // locally merged parameters must also keep the rendered invocation
        // parseable, hence the bracket-balance requirement
        if crate::parse::brackets_balanced(&merged) && parameter_precheck(tool, &merged).is_ok() {
            return Ok(ToolInvocation::new(tool, merged));
        }
        // one repair call, only because the merged parameter failed the
        // grammar pre-check
        let repair_prompt = self
            .catalog
            .handler_prompt(
                StructureKind::Parallel,
                tool,
                subtask,
                HandlerStage::Repair { candidate: &merged },
            )
            .map_err(|e| ProcessorError::at("repair")(e.into()))?;
        let response = self.gateway.complete(&repair_prompt, Caller::Processor)?;
        parse_checked(tool, &response).map_err(ProcessorError::at("repair"))
    }

    pub fn run_serial(
        &self,
        tool: ToolName,
        subtask: &str,
        stages: &[String],
        schema: &str,
    ) -> Result<ToolInvocation, ProcessorError> {
        debug_assert!(stages.len() >= 2);
        let mut context = String::new();
        for (position, stage) in stages.iter().enumerate() {
            let stage_id = format!("{}:{stage}", position + 1);
            let prompt = self
                .catalog
                .handler_prompt(
                    StructureKind::Serial,
                    tool,
                    subtask,
                    HandlerStage::Serial {
                        stage,
                        context: &context,
                        schema,
                    },
                )
                .map_err(|e| ProcessorError::at(stage_id.clone())(e.into()))?;
            let response = self.gateway.complete(&prompt, Caller::Processor)?;
            if position + 1 == stages.len() {
                return parse_checked(tool, &response).map_err(ProcessorError::at(stage_id));
            }
            let output = clean_stage_output(&response);
            if output.is_empty() {
                return Err(ProcessorError::at(stage_id)(StageFailure::EmptyStageOutput));
            }
            context.push_str(&format!("{}:\n{output}\n\n", context_label(stage)));
        }
        unreachable!("the final stage returns")
    }
}

fn parse_checked(tool: ToolName, response: &str) -> Result<ToolInvocation, StageFailure> {
    let invocation = parse_invocation(response)?;
    if invocation.tool != tool {
        return Err(StageFailure::ToolMismatch {
            expected: tool,
            got: invocation.tool,
        });
    }
    Ok(invocation)
}

/// Strip a leading `Answer:` label and surrounding whitespace from a stage
/// response.
fn clean_stage_output(response: &str) -> String {
    let trimmed = response.trim();
    let trimmed = trimmed.strip_prefix("Answer:").map(str::trim).unwrap_or(trimmed);
    trimmed.to_string()
}

/// A per-category response is one condition fragment; `none` (or nothing)
/// means the category is empty. Thoughts-then-answer responses keep only
/// the last non-empty line.
fn parse_fragment(response: &str) -> Option<String> {
    let cleaned = clean_stage_output(response);
    let line = cleaned.lines().rev().find(|l| !l.trim().is_empty())?.trim();
    let line = line.strip_prefix("Answer:").map(str::trim).unwrap_or(line);
    let bare = line.trim_end_matches('.');
    if bare.eq_ignore_ascii_case("none") || bare.is_empty() {
        None
    } else {
        Some(line.to_string())
    }
}

/// Concatenate fragments in category order with `, `, splitting each
/// fragment into conditions and dropping duplicates (first occurrence kept).
fn merge_fragments(fragments: &[String]) -> String {
    let mut seen: Vec<String> = Vec::new();
    for fragment in fragments {
        for condition in fragment.split(',') {
            let condition = condition.trim();
            if condition.is_empty() {
                continue;
            }
            if !seen.iter().any(|c| c == condition) {
                seen.push(condition.to_string());
            }
        }
    }
    seen.join(", ")
}

fn context_label(stage: &str) -> String {
    match stage {
        "skeleton" => "Skeleton".to_string(),
        "mapping" => "Mappings".to_string(),
        other => {
            let mut chars = other.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
                None => String::new(),
            }
        }
    }
}
