//! TUMS: a tool-use agent framework that refines tool-level parameter
//! generation into parameter-level processing.
//!
//! The pipeline has four collaborating modules: an intent [`recognizer`]
//! that classifies the question and produces a hint, a task [`decomposer`]
//! that iteratively emits tool/subtask directives, a subtask [`processor`]
//! that turns each directive into a concrete tool invocation through a
//! structure-specific handler (direct, parallel, or serial), and a
//! deterministic executor ([`toolkit`]) that runs the tool against
//! in-memory stores. The [`harness`] runs question suites through a
//! pipeline variant and reports correct rates and response-count costs.

pub mod datastore;
pub mod decomposer;
pub mod gateway;
pub mod harness;
pub mod parse;
pub mod processor;
pub mod prompting;
pub mod recognizer;
pub mod toolkit;
pub mod types;

pub use parse::{parse_directive, parse_invocation, render_invocation, ParseError};
pub use types::{
    DatasetClass, Difficulty, Hint, HintFlavor, Question, Step, SubtaskDirective, Termination,
    ToolInvocation, ToolName, Trajectory, DEFAULT_MAX_STEPS,
};
