//! Parsers for the two response grammars: decomposer directives in the form
//! `[TOOL]<SUBTASK>` and processor answers in the form `TOOL[PARAMETER]`.
//!
//! Few-shot prompting makes models restate exemplars, so both parsers take
//! the last well-formed occurrence rather than the first.

use crate::types::{SubtaskDirective, ToolInvocation, ToolName};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("NoDirectiveFound: no [TOOL]<SUBTASK> pattern in the response")]
    NoDirectiveFound,
    #[error("NoInvocationFound: no TOOL[PARAMETER] pattern in the response")]
    NoInvocationFound,
    #[error("UnknownTool: {token} is not one of the 13 tools")]
    UnknownTool { token: String },
}

/// Extract the last `[TOOL]<SUBTASK>` directive from one decomposer response.
///
/// `thoughts` is everything before the matched `[`, trimmed. The subtask is
/// the exact text between `<` and the last `>` that follows it; trailing text
/// after that `>` is ignored. A candidate whose bracketed token is not a tool
/// name yields `UnknownTool` unless an earlier candidate parses.
pub fn parse_directive(raw: &str) -> Result<SubtaskDirective, ParseError> {
    let candidates = directive_candidates(raw);
    let mut unknown: Option<&str> = None;
    for (pos, cand) in candidates.iter().enumerate().rev() {
        // Subtask runs to the last '>' after the '<' but before the next
        // candidate; no '>' there means this candidate never closed.
        let region_end = candidates
            .get(pos + 1)
            .map(|next| next.open_bracket)
            .unwrap_or(raw.len());
        let tail = &raw[cand.subtask_start..region_end];
        let close = match tail.rfind('>') {
            Some(pos) => pos,
            None => continue,
        };
        match ToolName::parse(cand.token) {
            Ok(tool) => {
                return Ok(SubtaskDirective {
                    thoughts: raw[..cand.open_bracket].trim().to_string(),
                    tool,
                    subtask: tail[..close].to_string(),
                });
            }
            Err(_) => {
                if unknown.is_none() {
                    unknown = Some(cand.token);
                }
            }
        }
    }
    match unknown {
        Some(token) => Err(ParseError::UnknownTool {
            token: token.to_string(),
        }),
        None => Err(ParseError::NoDirectiveFound),
    }
}

struct DirectiveCandidate<'a> {
    open_bracket: usize,
    token: &'a str,
    subtask_start: usize,
}

/// All `[token]<` positions, token being a non-empty ASCII-alphanumeric run,
/// with optional spaces or tabs between `]` and `<`.
fn directive_candidates(raw: &str) -> Vec<DirectiveCandidate<'_>> {
    let mut out = Vec::new();
    let bytes = raw.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'[' {
            i += 1;
            continue;
        }
        let token_start = i + 1;
        let mut j = token_start;
        while j < bytes.len() && bytes[j].is_ascii_alphanumeric() {
            j += 1;
        }
        if j == token_start || j >= bytes.len() || bytes[j] != b']' {
            i += 1;
            continue;
        }
        let mut k = j + 1;
        while k < bytes.len() && (bytes[k] == b' ' || bytes[k] == b'\t') {
            k += 1;
        }
        if k < bytes.len() && bytes[k] == b'<' {
            out.push(DirectiveCandidate {
                open_bracket: i,
                token: &raw[token_start..j],
                subtask_start: k + 1,
            });
            i = k + 1;
        } else {
            i = j + 1;
        }
    }
    out
}

/// Extract the last `TOOL[PARAMETER]` invocation from one processor response.
///
/// The parameter is matched to the outermost closing bracket by nesting
/// count, so SQL and arithmetic parameters with inner brackets survive.
/// Unbalanced brackets disqualify a candidate instead of matching greedily.
/// Once a valid invocation matches, scanning resumes after its closing
/// bracket; bracketed text inside a parameter is never reinterpreted.
pub fn parse_invocation(raw: &str) -> Result<ToolInvocation, ParseError> {
    let bytes = raw.as_bytes();
    let mut last_valid: Option<ToolInvocation> = None;
    let mut last_unknown: Option<&str> = None;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'[' || i == 0 {
            i += 1;
            continue;
        }
        // Maximal ASCII-alphabetic run ending right before the bracket.
        let mut name_start = i;
        while name_start > 0 && bytes[name_start - 1].is_ascii_alphabetic() {
            name_start -= 1;
        }
        if name_start == i {
            i += 1;
            continue;
        }
        let name = &raw[name_start..i];
        let close = match matching_bracket(bytes, i) {
            Some(pos) => pos,
            None => {
                i += 1;
                continue;
            }
        };
        match ToolName::parse(name) {
            Ok(tool) => {
                last_valid = Some(ToolInvocation {
                    tool,
                    parameter: raw[i + 1..close].to_string(),
                });
                i = close + 1;
            }
            Err(_) => {
                last_unknown = Some(name);
                i += 1;
            }
        }
    }
    if let Some(inv) = last_valid {
        return Ok(inv);
    }
    match last_unknown {
        Some(token) => Err(ParseError::UnknownTool {
            token: token.to_string(),
        }),
        None => Err(ParseError::NoInvocationFound),
    }
}

/// Position of the `]` matching the `[` at `open`, by nesting count.
fn matching_bracket(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (offset, b) in bytes[open..].iter().enumerate() {
        match b {
            b'[' => depth += 1,
            b']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + offset);
                }
            }
            _ => {}
        }
    }
    None
}

/// Render `NAME[parameter]`; the inverse of [`parse_invocation`] for any
/// parameter with balanced square brackets.
pub fn render_invocation(inv: &ToolInvocation) -> String {
    format!("{}[{}]", inv.tool.as_str(), inv.parameter)
}

/// True when square brackets nest and close properly; parameters built
/// outside [`parse_invocation`] must pass this to round-trip.
pub fn brackets_balanced(text: &str) -> bool {
    let mut depth = 0usize;
    for b in text.bytes() {
        match b {
            b'[' => depth += 1,
            b']' => {
                if depth == 0 {
                    return false;
                }
                depth -= 1;
            }
            _ => {}
        }
    }
    depth == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directive_basic() {
        let d = parse_directive(
            "We must load the data first. [LoadDB]<load the flights database>",
        )
        .unwrap();
        assert_eq!(d.thoughts, "We must load the data first.");
        assert_eq!(d.tool, ToolName::LoadDB);
        assert_eq!(d.subtask, "load the flights database");
    }

    #[test]
    fn directive_finish() {
        let d = parse_directive("Done. [Finish]<318>").unwrap();
        assert_eq!(d.thoughts, "Done.");
        assert_eq!(d.tool, ToolName::Finish);
        assert_eq!(d.subtask, "318");
    }

    #[test]
    fn directive_unknown_tool() {
        let err = parse_directive("I will use [FooBar]<x>").unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownTool {
                token: "FooBar".into()
            }
        );
    }

    #[test]
    fn directive_last_occurrence_wins() {
        let d = parse_directive(
            "Subtask 1: [LoadDB]<load the coffee database>\nResult 1: done\n\
             Subtask 2: now filter it. [FilterDB]<Date=2022-01-01>",
        )
        .unwrap();
        assert_eq!(d.tool, ToolName::FilterDB);
        assert_eq!(d.subtask, "Date=2022-01-01");
        assert!(d.thoughts.ends_with("now filter it."));
    }

    #[test]
    fn directive_skips_trailing_unknown_candidate() {
        // An echo of the format spec after the real directive must not win.
        let d = parse_directive("[GetValue]<Price> in the form [TOOL]<SUBTASK>").unwrap();
        assert_eq!(d.tool, ToolName::GetValue);
        assert_eq!(d.subtask, "Price");
    }

    #[test]
    fn directive_subtask_keeps_inner_angle_brackets() {
        let d = parse_directive("[FilterDB]<keep rows with Price > 5>").unwrap();
        assert_eq!(d.subtask, "keep rows with Price > 5");
    }

    #[test]
    fn directive_none_found() {
        assert_eq!(
            parse_directive("no pattern here").unwrap_err(),
            ParseError::NoDirectiveFound
        );
        // an unclosed subtask is not a directive
        assert_eq!(
            parse_directive("[LoadDB]<never closed").unwrap_err(),
            ParseError::NoDirectiveFound
        );
    }

    #[test]
    fn directive_allows_space_before_angle() {
        let d = parse_directive("[Calculate] <1+2>").unwrap();
        assert_eq!(d.tool, ToolName::Calculate);
        assert_eq!(d.subtask, "1+2");
    }

    #[test]
    fn invocation_basic() {
        let inv = parse_invocation("Calculate[(446)/8]").unwrap();
        assert_eq!(inv.tool, ToolName::Calculate);
        assert_eq!(inv.parameter, "(446)/8");
    }

    #[test]
    fn invocation_filter_conditions() {
        let inv = parse_invocation("FilterDB[Origin=BOS, Dest=ATL]").unwrap();
        assert_eq!(inv.tool, ToolName::FilterDB);
        assert_eq!(inv.parameter, "Origin=BOS, Dest=ATL");
    }

    #[test]
    fn invocation_sql_with_quotes() {
        let inv = parse_invocation(
            "SQLInterpreter[SELECT AVG(Price) FROM coffee WHERE Date='2022-01-03']",
        )
        .unwrap();
        assert_eq!(inv.tool, ToolName::SQLInterpreter);
        assert_eq!(
            inv.parameter,
            "SELECT AVG(Price) FROM coffee WHERE Date='2022-01-03'"
        );
    }

    #[test]
    fn invocation_nested_brackets() {
        let inv = parse_invocation("Answer: Calculate[prices[0] + prices[1]]").unwrap();
        assert_eq!(inv.parameter, "prices[0] + prices[1]");
    }

    #[test]
    fn invocation_last_occurrence_wins() {
        let inv = parse_invocation("Answer: GetValue[Price]\nAnswer: GetValue[Stars]").unwrap();
        assert_eq!(inv.parameter, "Stars");
    }

    #[test]
    fn invocation_parameter_containing_invocation_round_trips() {
        let inv = ToolInvocation::new(ToolName::Calculate, "Finish[42]");
        let parsed = parse_invocation(&render_invocation(&inv)).unwrap();
        assert_eq!(parsed, inv);
    }

    #[test]
    fn invocation_unbalanced_is_not_greedy() {
        assert_eq!(
            parse_invocation("Calculate[1+2").unwrap_err(),
            ParseError::NoInvocationFound
        );
        // a later balanced candidate still wins
        let inv = parse_invocation("Calculate[1+2 ... GetValue[Price]").unwrap();
        assert_eq!(inv.tool, ToolName::GetValue);
    }

    #[test]
    fn invocation_unknown_tool() {
        assert_eq!(
            parse_invocation("FooBar[x]").unwrap_err(),
            ParseError::UnknownTool { token: "FooBar".into() }
        );
        assert_eq!(
            parse_invocation("free text with no brackets").unwrap_err(),
            ParseError::NoInvocationFound
        );
    }

    #[test]
    fn render_examples() {
        assert_eq!(
            render_invocation(&ToolInvocation::new(ToolName::Finish, "42")),
            "Finish[42]"
        );
        assert_eq!(
            render_invocation(&ToolInvocation::new(ToolName::GetValue, "Price")),
            "GetValue[Price]"
        );
        assert_eq!(
            render_invocation(&ToolInvocation::new(ToolName::SQLInterpreter, "SELECT a FROM t")),
            "SQLInterpreter[SELECT a FROM t]"
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Parameter text with balanced square brackets.
        fn balanced_parameter() -> impl Strategy<Value = String> {
            let leaf = "[ -~&&[^\\[\\]]]{0,12}".prop_map(|s| s);
            leaf.prop_recursive(3, 24, 4, |inner| {
                proptest::collection::vec((inner.clone(), inner), 1..3).prop_map(|parts| {
                    parts
                        .into_iter()
                        .map(|(a, b)| format!("{a}[{b}]"))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
            })
        }

        proptest! {
            #[test]
            fn round_trip_identity(tool_idx in 0usize..13, param in balanced_parameter()) {
                let inv = ToolInvocation::new(ToolName::ALL[tool_idx], param);
                let parsed = parse_invocation(&render_invocation(&inv)).unwrap();
                prop_assert_eq!(parsed, inv);
            }

            #[test]
            fn parsers_never_panic(raw in "\\PC{0,200}") {
                let _ = parse_directive(&raw);
                let _ = parse_invocation(&raw);
            }

            #[test]
            fn parsers_never_panic_bracket_heavy(raw in "[\\[\\]<>A-Za-z0-9 ]{0,80}") {
                let _ = parse_directive(&raw);
                let _ = parse_invocation(&raw);
            }
        }
    }
}
