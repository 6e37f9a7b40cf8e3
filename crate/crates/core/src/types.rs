//! Shared domain vocabulary: questions, dataset classes, hints, tool names,
//! directives, invocations, and episode trajectories.

use serde::Serialize;
use std::fmt;
use thiserror::Error;

/// Iteration budget for one episode when the caller does not override it.
pub const DEFAULT_MAX_STEPS: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("question text is empty after trimming")]
    EmptyQuestionText,
    #[error("hint text is empty")]
    EmptyHintText,
    #[error("hint text names no tool in square brackets")]
    HintNamesNoTool,
    #[error("unknown dataset label: {0}")]
    UnknownDataset(String),
    #[error("unknown tool name: {0}")]
    UnknownTool(String),
    #[error("trajectory exceeds the step budget of {max_steps}")]
    TooManySteps { max_steps: usize },
    #[error("a finished trajectory must end with a Finish step")]
    FinishedWithoutFinishStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Difficulty::Easy => write!(f, "easy"),
            Difficulty::Hard => write!(f, "hard"),
        }
    }
}

/// The eight ToolQA dataset classes a question can belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetClass {
    Flight,
    Coffee,
    Yelp,
    Airbnb,
    Dblp,
    Scirex,
    Agenda,
    Gsm8k,
}

impl DatasetClass {
    pub const ALL: [DatasetClass; 8] = [
        DatasetClass::Flight,
        DatasetClass::Coffee,
        DatasetClass::Yelp,
        DatasetClass::Airbnb,
        DatasetClass::Dblp,
        DatasetClass::Scirex,
        DatasetClass::Agenda,
        DatasetClass::Gsm8k,
    ];

    /// Canonical label as it appears in recognizer output, e.g. `[Flight]`.
    pub fn label(&self) -> &'static str {
        match self {
            DatasetClass::Flight => "Flight",
            DatasetClass::Coffee => "Coffee",
            DatasetClass::Yelp => "Yelp",
            DatasetClass::Airbnb => "Airbnb",
            DatasetClass::Dblp => "DBLP",
            DatasetClass::Scirex => "SciREX",
            DatasetClass::Agenda => "Agenda",
            DatasetClass::Gsm8k => "GSM8K",
        }
    }

    /// Lowercase form used in file names (`flight-easy.jsonl`, `flight.standard.txt`).
    pub fn file_stem(&self) -> &'static str {
        match self {
            DatasetClass::Flight => "flight",
            DatasetClass::Coffee => "coffee",
            DatasetClass::Yelp => "yelp",
            DatasetClass::Airbnb => "airbnb",
            DatasetClass::Dblp => "dblp",
            DatasetClass::Scirex => "scirex",
            DatasetClass::Agenda => "agenda",
            DatasetClass::Gsm8k => "gsm8k",
        }
    }

    /// Case-insensitive parse; exactly the eight labels are accepted.
    pub fn parse(label: &str) -> Result<DatasetClass, DomainError> {
        let lower = label.trim().to_ascii_lowercase();
        DatasetClass::ALL
            .into_iter()
            .find(|c| c.file_stem() == lower)
            .ok_or_else(|| DomainError::UnknownDataset(label.to_string()))
    }
}

impl fmt::Display for DatasetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HintFlavor {
    Standard,
    Preference,
}

/// Natural-language guidance appended to the decomposer prompt, naming the
/// dataset and its legal tools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Hint {
    dataset: DatasetClass,
    flavor: HintFlavor,
    text: String,
}

impl Hint {
    pub fn new(dataset: DatasetClass, flavor: HintFlavor, text: String) -> Result<Hint, DomainError> {
        if text.trim().is_empty() {
            return Err(DomainError::EmptyHintText);
        }
        if !names_a_tool(&text) {
            return Err(DomainError::HintNamesNoTool);
        }
        Ok(Hint { dataset, flavor, text })
    }

    pub fn dataset(&self) -> DatasetClass {
        self.dataset
    }

    pub fn flavor(&self) -> HintFlavor {
        self.flavor
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// True when the text contains at least one `[Tool]` mention.
fn names_a_tool(text: &str) -> bool {
    let mut rest = text;
    while let Some(start) = rest.find('[') {
        let after = &rest[start + 1..];
        if let Some(end) = after.find(']') {
            if ToolName::parse(&after[..end]).is_ok() {
                return true;
            }
            rest = &after[end + 1..];
        } else {
            break;
        }
    }
    false
}

/// One benchmark question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Question {
    id: String,
    text: String,
    difficulty: Difficulty,
    gold_answer: Option<String>,
    dataset: Option<DatasetClass>,
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        difficulty: Difficulty,
        gold_answer: Option<String>,
        dataset: Option<DatasetClass>,
    ) -> Result<Question, DomainError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(DomainError::EmptyQuestionText);
        }
        Ok(Question {
            id: id.into(),
            text,
            difficulty,
            gold_answer,
            dataset,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn difficulty(&self) -> Difficulty {
        self.difficulty
    }

    pub fn gold_answer(&self) -> Option<&str> {
        self.gold_answer.as_deref()
    }

    pub fn dataset(&self) -> Option<DatasetClass> {
        self.dataset
    }
}

/// The thirteen tools of the ToolQA suite, plus nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ToolName {
    LoadDB,
    FilterDB,
    GetValue,
    Calculate,
    SQLInterpreter,
    LoadGraph,
    NeighbourCheck,
    NodeCheck,
    EdgeCheck,
    RetrieveAgenda,
    RetrieveScirex,
    CodeTool,
    Finish,
}

impl ToolName {
    pub const ALL: [ToolName; 13] = [
        ToolName::LoadDB,
        ToolName::FilterDB,
        ToolName::GetValue,
        ToolName::Calculate,
        ToolName::SQLInterpreter,
        ToolName::LoadGraph,
        ToolName::NeighbourCheck,
        ToolName::NodeCheck,
        ToolName::EdgeCheck,
        ToolName::RetrieveAgenda,
        ToolName::RetrieveScirex,
        ToolName::CodeTool,
        ToolName::Finish,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ToolName::LoadDB => "LoadDB",
            ToolName::FilterDB => "FilterDB",
            ToolName::GetValue => "GetValue",
            ToolName::Calculate => "Calculate",
            ToolName::SQLInterpreter => "SQLInterpreter",
            ToolName::LoadGraph => "LoadGraph",
            ToolName::NeighbourCheck => "NeighbourCheck",
            ToolName::NodeCheck => "NodeCheck",
            ToolName::EdgeCheck => "EdgeCheck",
            ToolName::RetrieveAgenda => "RetrieveAgenda",
            ToolName::RetrieveScirex => "RetrieveScirex",
            ToolName::CodeTool => "CodeTool",
            ToolName::Finish => "Finish",
        }
    }

    /// Exact-match parse; the prompt grammar fixes the spelling.
    pub fn parse(token: &str) -> Result<ToolName, DomainError> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == token)
            .ok_or_else(|| DomainError::UnknownTool(token.to_string()))
    }

    /// Lowercase form used by handler prompt file names.
    pub fn file_stem(&self) -> String {
        self.as_str().to_ascii_lowercase()
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One decomposer output: free-form thoughts, the chosen tool, and the
/// subtask text between the angle brackets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubtaskDirective {
    pub thoughts: String,
    pub tool: ToolName,
    pub subtask: String,
}

/// A tool name plus its fully rendered parameter string; the unit of work
/// handed from the processor to the executor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolInvocation {
    pub tool: ToolName,
    pub parameter: String,
}

impl ToolInvocation {
    pub fn new(tool: ToolName, parameter: impl Into<String>) -> ToolInvocation {
        ToolInvocation {
            tool,
            parameter: parameter.into(),
        }
    }
}

/// One loop iteration of an episode. When the decomposer response could not
/// be parsed into a directive, `directive` is absent and `raw` preserves the
/// response so later prompts can still show it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step {
    index: u32,
    directive: Option<SubtaskDirective>,
    raw: Option<String>,
    invocation: Option<ToolInvocation>,
    result: String,
}

impl Step {
    pub(crate) fn parsed(
        index: u32,
        directive: SubtaskDirective,
        invocation: Option<ToolInvocation>,
        result: String,
    ) -> Step {
        Step {
            index,
            directive: Some(directive),
            raw: None,
            invocation,
            result,
        }
    }

    pub(crate) fn malformed(index: u32, raw: String, result: String) -> Step {
        Step {
            index,
            directive: None,
            raw: Some(raw),
            invocation: None,
            result,
        }
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn directive(&self) -> Option<&SubtaskDirective> {
        self.directive.as_ref()
    }

    /// The raw decomposer response, kept only for malformed steps.
    pub fn raw(&self) -> Option<&str> {
        self.raw.as_deref()
    }

    pub fn invocation(&self) -> Option<&ToolInvocation> {
        self.invocation.as_ref()
    }

    pub fn result(&self) -> &str {
        &self.result
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Finished,
    MaxStepsExceeded,
    Aborted,
}

/// Ordered record of one episode: the question, the hint it ran under (absent
/// when the recognizer is disabled or failed), every step, and how it ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    question: Question,
    hint: Option<Hint>,
    steps: Vec<Step>,
    final_answer: Option<String>,
    termination: Termination,
}

impl Trajectory {
    pub fn question(&self) -> &Question {
        &self.question
    }

    pub fn hint(&self) -> Option<&Hint> {
        self.hint.as_ref()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.final_answer.as_deref()
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }
}

/// Step-at-a-time constructor for [`Trajectory`]; the only way to build one,
/// so the invariants (consecutive indices, step budget, Finish-step terminal
/// shape) hold for every value that exists.
pub struct TrajectoryBuilder {
    question: Question,
    hint: Option<Hint>,
    max_steps: usize,
    steps: Vec<Step>,
}

impl TrajectoryBuilder {
    pub fn new(question: Question, hint: Option<Hint>, max_steps: usize) -> TrajectoryBuilder {
        TrajectoryBuilder {
            question,
            hint,
            max_steps: max_steps.max(1),
            steps: Vec::new(),
        }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn next_index(&self) -> u32 {
        self.steps.len() as u32 + 1
    }

    fn push(&mut self, step: Step) -> Result<(), DomainError> {
        if self.steps.len() >= self.max_steps {
            return Err(DomainError::TooManySteps {
                max_steps: self.max_steps,
            });
        }
        self.steps.push(step);
        Ok(())
    }

    pub fn push_parsed(
        &mut self,
        directive: SubtaskDirective,
        invocation: Option<ToolInvocation>,
        result: String,
    ) -> Result<(), DomainError> {
        let index = self.next_index();
        self.push(Step::parsed(index, directive, invocation, result))
    }

    pub fn push_malformed(&mut self, raw: String, result: String) -> Result<(), DomainError> {
        let index = self.next_index();
        self.push(Step::malformed(index, raw, result))
    }

    /// Terminate with a final answer; the last pushed step must be a Finish.
    pub fn finished(self, final_answer: String) -> Result<Trajectory, DomainError> {
        let ends_with_finish = self
            .steps
            .last()
            .and_then(|s| s.directive())
            .map(|d| d.tool == ToolName::Finish)
            .unwrap_or(false);
        if !ends_with_finish {
            return Err(DomainError::FinishedWithoutFinishStep);
        }
        Ok(Trajectory {
            question: self.question,
            hint: self.hint,
            steps: self.steps,
            final_answer: Some(final_answer),
            termination: Termination::Finished,
        })
    }

    pub fn exhausted(self) -> Trajectory {
        Trajectory {
            question: self.question,
            hint: self.hint,
            steps: self.steps,
            final_answer: None,
            termination: Termination::MaxStepsExceeded,
        }
    }

    pub fn aborted(self) -> Trajectory {
        Trajectory {
            question: self.question,
            hint: self.hint,
            steps: self.steps,
            final_answer: None,
            termination: Termination::Aborted,
        }
    }
}
