//! The iterative decomposition loop: render the prompt with the full
//! history, obtain one directive, have the processor build the invocation,
//! execute it, fold the result back into the history, and repeat until a
//! Finish directive or the step budget.
//!
//! Tool and parse failures never abort an episode; they become `Error: ...`
//! result strings the decomposer can react to on the next iteration. Only
//! gateway failures abort.

use crate::gateway::{Caller, Gateway};
use crate::parse::parse_directive;
use crate::processor::{HandlerRegistry, Processor, ProcessorError};
use crate::prompting::{truncate_result, PromptCatalog};
use crate::toolkit::{Executor, Session};
use crate::types::{Hint, Question, Step, ToolName, Trajectory, TrajectoryBuilder};

/// Render steps as alternating `Subtask k:` / `Result k:` lines. A step
/// whose directive failed to parse shows the raw response on its Subtask
/// line. Newlines inside results are preserved.
pub fn format_history(steps: &[Step]) -> String {
    format_history_truncated(steps, usize::MAX)
}

/// Like [`format_history`], cutting each result to `limit` characters.
pub fn format_history_truncated(steps: &[Step], limit: usize) -> String {
    let mut lines = Vec::with_capacity(steps.len() * 2);
    for step in steps {
        let subtask_line = match step.directive() {
            Some(directive) => {
                let pattern = format!("[{}]<{}>", directive.tool, directive.subtask);
                if directive.thoughts.is_empty() {
                    pattern
                } else {
                    format!("{} {}", directive.thoughts, pattern)
                }
            }
            None => step.raw().unwrap_or("").trim().to_string(),
        };
        lines.push(format!("Subtask {}: {}", step.index(), subtask_line));
        lines.push(format!(
            "Result {}: {}",
            step.index(),
            truncate_result(step.result(), limit)
        ));
    }
    lines.join("\n")
}

/// Everything one episode needs, borrowed from the surrounding run.
pub struct EpisodeRunner<'a> {
    pub gateway: &'a Gateway,
    pub catalog: &'a PromptCatalog,
    pub registry: &'a HandlerRegistry,
    pub executor: &'a Executor,
    pub max_steps: usize,
}

impl EpisodeRunner<'_> {
    /// Run one full episode. The returned trajectory terminates as
    /// `Finished` (a Finish directive set the answer), `MaxStepsExceeded`
    /// (budget exhausted, no answer), or `Aborted` (gateway failure).
    pub fn run(&self, question: &Question, hint: Option<Hint>) -> Trajectory {
        let mut session = Session::new();
        let mut builder =
            TrajectoryBuilder::new(question.clone(), hint.clone(), self.max_steps);
        let processor = Processor {
            gateway: self.gateway,
            catalog: self.catalog,
            registry: self.registry,
        };
        for _ in 0..self.max_steps {
            let next_index = builder.next_index() as usize;
            let prompt = match self.catalog.decomposer_prompt(
                question,
                hint.as_ref(),
                builder.steps(),
                next_index,
                self.catalog.decomposer_exemplars(),
            ) {
                Ok(prompt) => prompt,
                Err(_) => return builder.aborted(),
            };
            let response = match self.gateway.complete(&prompt, Caller::Decomposer) {
                Ok(response) => response,
                Err(_) => return builder.aborted(),
            };
            let directive = match parse_directive(&response) {
                Ok(directive) => directive,
                Err(err) => {
                    builder
                        .push_malformed(response, format!("Error: {err}"))
                        .expect("loop stays within the step budget");
                    continue;
                }
            };
            let schema = schema_text(self.executor, &session);
            match processor.generate(directive.tool, &directive.subtask, &schema) {
                Ok(invocation) => {
                    if directive.tool == ToolName::Finish {
                        let answer = invocation.parameter.clone();
                        builder
                            .push_parsed(directive, Some(invocation), answer.clone())
                            .expect("loop stays within the step budget");
                        return builder
                            .finished(answer)
                            .expect("the step just pushed is a Finish");
                    }
                    let result = self.executor.execute(&invocation, &mut session);
                    builder
                        .push_parsed(directive, Some(invocation), result)
                        .expect("loop stays within the step budget");
                }
                Err(ProcessorError::Infrastructure(_)) => return builder.aborted(),
                Err(err) => {
                    builder
                        .push_parsed(directive, None, format!("Error: {err}"))
                        .expect("loop stays within the step budget");
                }
            }
        }
        builder.exhausted()
    }
}

/// Column listing injected into serial mapping prompts: the session's loaded
/// table when there is one, otherwise every registered table.
fn schema_text(executor: &Executor, session: &Session) -> String {
    let stores = executor.stores();
    if let Some(name) = session.loaded_table() {
        if let Some(table) = stores.table(name) {
            return format!("table {name}: {}", table.columns().join(", "));
        }
    }
    stores
        .tables()
        .iter()
        .map(|(name, table)| format!("table {name}: {}", table.columns().join(", ")))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Difficulty, SubtaskDirective, ToolInvocation};

    fn step(index: u32, tool: ToolName, thoughts: &str, subtask: &str, result: &str) -> Step {
        let mut builder = TrajectoryBuilder::new(
            Question::new("q", "text", Difficulty::Easy, None, None).unwrap(),
            None,
            index as usize,
        );
        for _ in 1..index {
            builder.push_malformed(String::new(), String::new()).unwrap();
        }
        builder
            .push_parsed(
                SubtaskDirective {
                    thoughts: thoughts.into(),
                    tool,
                    subtask: subtask.into(),
                },
                Some(ToolInvocation::new(tool, "p")),
                result.into(),
            )
            .unwrap();
        builder.exhausted().steps().last().unwrap().clone()
    }

    #[test]
    fn empty_history_is_empty_string() {
        assert_eq!(format_history(&[]), "");
    }

    #[test]
    fn one_step_renders_two_lines() {
        let s = step(1, ToolName::LoadDB, "load first", "load the flights database", "ok");
        let text = format_history(&[s]);
        assert_eq!(
            text,
            "Subtask 1: load first [LoadDB]<load the flights database>\nResult 1: ok"
        );
    }

    #[test]
    fn result_newlines_are_preserved() {
        let s = step(1, ToolName::SQLInterpreter, "", "q", "Origin, Dest\nBOS, ATL");
        let text = format_history(&[s]);
        assert!(text.contains("Result 1: Origin, Dest\nBOS, ATL"));
    }

    #[test]
    fn truncation_applies_per_result() {
        let long = "x".repeat(3000);
        let s = step(1, ToolName::GetValue, "", "q", &long);
        let text = format_history_truncated(&[s], 2000);
        assert!(text.contains("…(truncated)"));
        assert!(text.len() < 2200);
    }
}
