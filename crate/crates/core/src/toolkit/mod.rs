//! The executor: deterministic, model-free implementations of the thirteen
//! tools plus the per-episode session state (the currently loaded table and
//! graph, and the working row set). Nothing in this module can reach the
//! gateway; every outcome, including errors, is rendered into a bounded
//! result string for the decomposer to read.

pub mod calc;
pub mod conditions;
pub mod sql;

use crate::datastore::DataStores;
use crate::types::{ToolInvocation, ToolName};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Result-string caps, documented in `prompts/results.txt`.
const FILTER_PREVIEW_ROWS: usize = 5;
const GET_VALUE_PREVIEW: usize = 30;
const RETRIEVE_TOP_K: usize = 3;

/// Per-episode mutable state. `working_rows` is the current filter view over
/// the loaded table; every LoadDB resets it to all rows.
#[derive(Debug, Clone, Default)]
pub struct Session {
    loaded_table: Option<String>,
    working_rows: Vec<usize>,
    loaded_graph: Option<String>,
}

impl Session {
    pub fn new() -> Session {
        Session::default()
    }

    pub fn loaded_table(&self) -> Option<&str> {
        self.loaded_table.as_deref()
    }

    pub fn loaded_graph(&self) -> Option<&str> {
        self.loaded_graph.as_deref()
    }

    pub fn working_rows(&self) -> &[usize] {
        &self.working_rows
    }
}

/// Optional plugin slot for the generic code tool. No runner ships by
/// default; executing CodeTool without one reports ToolUnavailable.
pub trait CodeRunner: Send + Sync {
    fn run(&self, language: &str, source: &str) -> String;
}

/// Stateless tool dispatcher over the shared stores. Counts executions so
/// tests can assert, e.g., that Finish never reaches the executor.
pub struct Executor {
    stores: Arc<DataStores>,
    code_runner: Option<Box<dyn CodeRunner>>,
    calls: AtomicU64,
}

struct ToolFailure {
    kind: &'static str,
    detail: String,
}

impl ToolFailure {
    fn new(kind: &'static str, detail: impl Into<String>) -> ToolFailure {
        ToolFailure {
            kind,
            detail: detail.into(),
        }
    }

    fn render(&self) -> String {
        format!("Error: {}: {}", self.kind, self.detail)
    }
}

type ToolResult = Result<String, ToolFailure>;

impl Executor {
    pub fn new(stores: Arc<DataStores>) -> Executor {
        Executor {
            stores,
            code_runner: None,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_code_runner(mut self, runner: Box<dyn CodeRunner>) -> Executor {
        self.code_runner = Some(runner);
        self
    }

    pub fn stores(&self) -> &DataStores {
        &self.stores
    }

    /// Number of tool executions so far, across all sessions.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    /// Run one invocation against the session. All outcomes are strings;
    /// failures render as `Error: <kind>: <detail>`.
    pub fn execute(&self, invocation: &ToolInvocation, session: &mut Session) -> String {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let parameter = invocation.parameter.as_str();
        let outcome = match invocation.tool {
            ToolName::LoadDB => self.load_db(parameter, session),
            ToolName::FilterDB => self.filter_db(parameter, session),
            ToolName::GetValue => self.get_value(parameter, session),
            ToolName::Calculate => calculate(parameter),
            ToolName::SQLInterpreter => self.sql(parameter),
            ToolName::LoadGraph => self.load_graph(parameter, session),
            ToolName::NeighbourCheck => self.neighbour_check(parameter, session),
            ToolName::NodeCheck => self.node_check(parameter, session),
            ToolName::EdgeCheck => self.edge_check(parameter, session),
            ToolName::RetrieveAgenda => self.retrieve("agenda", parameter),
            ToolName::RetrieveScirex => self.retrieve("scirex", parameter),
            ToolName::CodeTool => self.code_tool(parameter),
            ToolName::Finish => Err(ToolFailure::new(
                "NotExecutable",
                "Finish terminates the episode and runs no tool",
            )),
        };
        outcome.unwrap_or_else(|failure| failure.render())
    }

    fn load_db(&self, parameter: &str, session: &mut Session) -> ToolResult {
        let name = parameter.trim();
        let table = self
            .stores
            .table(name)
            .ok_or_else(|| ToolFailure::new("UnknownDataset", name))?;
        session.loaded_table = Some(name.to_string());
        session.working_rows = (0..table.row_count()).collect();
        Ok(format!(
            "We have successfully loaded the {name} database, including the following columns: {}.",
            table.columns().join(", ")
        ))
    }

    fn load_graph(&self, parameter: &str, session: &mut Session) -> ToolResult {
        let name = parameter.trim();
        let graph = self
            .stores
            .graph(name)
            .ok_or_else(|| ToolFailure::new("UnknownDataset", name))?;
        session.loaded_graph = Some(name.to_string());
        Ok(format!(
            "We have successfully loaded the {name} graph, including {} nodes and {} edges.",
            graph.node_count(),
            graph.edge_count()
        ))
    }

    fn loaded_table<'a>(&'a self, session: &Session) -> Result<&'a crate::datastore::Table, ToolFailure> {
        let name = session
            .loaded_table
            .as_deref()
            .ok_or_else(|| ToolFailure::new("NoTableLoaded", "call LoadDB first"))?;
        self.stores
            .table(name)
            .ok_or_else(|| ToolFailure::new("UnknownDataset", name))
    }

    fn filter_db(&self, parameter: &str, session: &mut Session) -> ToolResult {
        let table = self.loaded_table(session)?;
        let conditions = conditions::parse_conditions(parameter)
            .map_err(condition_failure)?;
        let bound = conditions::bind_all(table, &conditions).map_err(condition_failure)?;
        let surviving: Vec<usize> = session
            .working_rows
            .iter()
            .copied()
            .filter(|&row| conditions::row_matches_all(table, row, &bound))
            .collect();
        session.working_rows = surviving;
        let n = session.working_rows.len();
        if n == 0 {
            return Ok("0 rows satisfy all conditions.".to_string());
        }
        let preview: Vec<String> = session
            .working_rows
            .iter()
            .take(FILTER_PREVIEW_ROWS)
            .map(|&row| format!("({})", table.rows()[row].join(", ")))
            .collect();
        Ok(format!(
            "{n} rows satisfy all conditions. First rows: {}",
            preview.join("; ")
        ))
    }

    fn get_value(&self, parameter: &str, session: &mut Session) -> ToolResult {
        let table = self.loaded_table(session)?;
        let column = parameter.trim();
        let index = table
            .column_index(column)
            .ok_or_else(|| ToolFailure::new("UnknownColumn", column))?;
        if session.working_rows.is_empty() {
            return Err(ToolFailure::new(
                "EmptySelection",
                "no rows in the current selection",
            ));
        }
        let values: Vec<&str> = session
            .working_rows
            .iter()
            .map(|&row| table.rows()[row][index].as_str())
            .collect();
        if values.len() > GET_VALUE_PREVIEW {
            Ok(format!(
                "{} values: {}, …",
                values.len(),
                values[..GET_VALUE_PREVIEW].join(", ")
            ))
        } else {
            Ok(values.join(", "))
        }
    }

    fn sql(&self, parameter: &str) -> ToolResult {
        sql::execute(&self.stores, parameter).map_err(|err| match err {
            sql::SqlError::Parse { offset, detail } => {
                ToolFailure::new("SqlParseError", format!("at offset {offset}: {detail}"))
            }
            sql::SqlError::UnknownTable { table } => ToolFailure::new("UnknownTable", table),
            sql::SqlError::UnknownColumn { column } => ToolFailure::new("UnknownColumn", column),
            sql::SqlError::TypeMismatch { column, value } => ToolFailure::new(
                "TypeMismatch",
                format!("value {value:?} does not fit column {column}"),
            ),
            sql::SqlError::NonNumericAggregate { func, column, actual } => ToolFailure::new(
                "TypeMismatch",
                format!("{func} requires a numeric column, {column} is {actual}"),
            ),
        })
    }

    fn loaded_graph<'a>(&'a self, session: &Session) -> Result<&'a crate::datastore::Graph, ToolFailure> {
        let name = session
            .loaded_graph
            .as_deref()
            .ok_or_else(|| ToolFailure::new("NoGraphLoaded", "call LoadGraph first"))?;
        self.stores
            .graph(name)
            .ok_or_else(|| ToolFailure::new("UnknownDataset", name))
    }

    fn neighbour_check(&self, parameter: &str, session: &mut Session) -> ToolResult {
        let graph = self.loaded_graph(session)?;
        let node = parameter.trim();
        let neighbors = graph
            .neighbors(node)
            .ok_or_else(|| ToolFailure::new("UnknownNode", node))?;
        Ok(neighbors.join(", "))
    }

    fn node_check(&self, parameter: &str, session: &mut Session) -> ToolResult {
        let graph = self.loaded_graph(session)?;
        let node = parameter.trim();
        let attrs = graph
            .node(node)
            .ok_or_else(|| ToolFailure::new("UnknownNode", node))?;
        Ok(render_attrs(attrs))
    }

    fn edge_check(&self, parameter: &str, session: &mut Session) -> ToolResult {
        let graph = self.loaded_graph(session)?;
        let ids: Vec<&str> = parameter.split(',').map(|s| s.trim()).collect();
        if ids.len() != 2 || ids.iter().any(|s| s.is_empty()) {
            return Err(ToolFailure::new(
                "BadParameter",
                "EdgeCheck expects two node ids separated by a comma",
            ));
        }
        for id in &ids {
            if !graph.contains_node(id) {
                return Err(ToolFailure::new("UnknownNode", *id));
            }
        }
        match graph.edge(ids[0], ids[1]) {
            Some(attrs) => Ok(render_attrs(attrs)),
            None => Ok("no edge".to_string()),
        }
    }

    fn retrieve(&self, corpus_name: &str, query: &str) -> ToolResult {
        let corpus = self
            .stores
            .corpus(corpus_name)
            .ok_or_else(|| ToolFailure::new("UnknownCorpus", corpus_name))?;
        let query = query.trim();
        if query.is_empty() {
            return Err(ToolFailure::new("EmptyQuery", "the query is empty"));
        }
        let hits = corpus.top_k(query, RETRIEVE_TOP_K);
        if hits.is_empty() {
            return Ok("No relevant documents found.".to_string());
        }
        Ok(hits
            .iter()
            .map(|(_, text, _)| *text)
            .collect::<Vec<_>>()
            .join("\n---\n"))
    }

    fn code_tool(&self, parameter: &str) -> ToolResult {
        let runner = self
            .code_runner
            .as_deref()
            .ok_or_else(|| ToolFailure::new("ToolUnavailable", "no code runner registered"))?;
        let (language, source) = match parameter.split_once(':') {
            Some((language, source)) => (language.trim(), source),
            None => ("", parameter),
        };
        Ok(runner.run(language, source))
    }
}

fn calculate(parameter: &str) -> ToolResult {
    calc::calculate(parameter).map_err(|err| match err {
        calc::CalcError::Parse { offset, detail } => {
            ToolFailure::new("ParseError", format!("at offset {offset}: {detail}"))
        }
        calc::CalcError::DivisionByZero => ToolFailure::new("DivisionByZero", "division by zero"),
        calc::CalcError::Overflow => {
            ToolFailure::new("Overflow", "result is not a finite number")
        }
    })
}

fn condition_failure(err: conditions::ConditionError) -> ToolFailure {
    match err {
        conditions::ConditionError::BadCondition { fragment } => {
            ToolFailure::new("BadCondition", format!("{fragment:?}"))
        }
        conditions::ConditionError::UnknownColumn { column } => {
            ToolFailure::new("UnknownColumn", column)
        }
        conditions::ConditionError::TypeMismatch { column, value, expected } => ToolFailure::new(
            "TypeMismatch",
            format!("value {value:?} does not fit the {expected} column {column}"),
        ),
    }
}

fn render_attrs(attrs: &crate::datastore::AttrMap) -> String {
    attrs
        .iter()
        .map(|(k, v)| {
            let rendered = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            format!("{k}={rendered}")
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Syntax-only pre-check of a parameter against the tool's grammar, used by
/// the parallel handler to decide whether a repair call is needed. Tools
/// without a parameter grammar accept anything.
pub fn parameter_precheck(tool: ToolName, parameter: &str) -> Result<(), String> {
    match tool {
        ToolName::FilterDB => conditions::parse_conditions(parameter)
            .map(|_| ())
            .map_err(|e| e.to_string()),
        ToolName::Calculate => calc::check_syntax(parameter).map_err(|e| e.to_string()),
        ToolName::SQLInterpreter => sql::parse_select(parameter)
            .map(|_| ())
            .map_err(|e| e.to_string()),
        _ => Ok(()),
    }
}
