//! The filter-condition mini-language: comma-separated `column op value`
//! conjunctions, compared under each column's inferred type. Shared by
//! FilterDB and the SQL WHERE clause so the two query paths agree cell for
//! cell.

use crate::datastore::{normalize_date, ColumnType, Table};
use std::cmp::Ordering;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CompareOp {
    pub fn as_str(&self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Gt => ">",
            CompareOp::Le => "<=",
            CompareOp::Ge => ">=",
        }
    }

    fn matches(&self, ordering: Ordering) -> bool {
        match self {
            CompareOp::Eq => ordering == Ordering::Equal,
            CompareOp::Ne => ordering != Ordering::Equal,
            CompareOp::Lt => ordering == Ordering::Less,
            CompareOp::Gt => ordering == Ordering::Greater,
            CompareOp::Le => ordering != Ordering::Greater,
            CompareOp::Ge => ordering != Ordering::Less,
        }
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One `column op value` condition, not yet bound to a table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub column: String,
    pub op: CompareOp,
    pub value: String,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.column, self.op, self.value)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConditionError {
    #[error("BadCondition: {fragment:?} is not of the form `column op value`")]
    BadCondition { fragment: String },
    #[error("UnknownColumn: {column}")]
    UnknownColumn { column: String },
    #[error("TypeMismatch: value {value:?} does not fit the {expected} column {column}")]
    TypeMismatch {
        column: String,
        value: String,
        expected: ColumnType,
    },
}

/// Parse a comma-separated conjunction. Operators: `=, <, >, <=, >=, !=`.
pub fn parse_conditions(input: &str) -> Result<Vec<Condition>, ConditionError> {
    let mut conditions = Vec::new();
    for fragment in input.split(',') {
        let fragment = fragment.trim();
        if fragment.is_empty() {
            return Err(ConditionError::BadCondition {
                fragment: fragment.to_string(),
            });
        }
        conditions.push(parse_condition(fragment)?);
    }
    Ok(conditions)
}

fn parse_condition(fragment: &str) -> Result<Condition, ConditionError> {
    // two-character operators first so `<=` is not read as `<`
    let ops: [(&str, CompareOp); 6] = [
        ("<=", CompareOp::Le),
        (">=", CompareOp::Ge),
        ("!=", CompareOp::Ne),
        ("=", CompareOp::Eq),
        ("<", CompareOp::Lt),
        (">", CompareOp::Gt),
    ];
    let mut best: Option<(usize, &str, CompareOp)> = None;
    for (symbol, op) in ops {
        if let Some(pos) = fragment.find(symbol) {
            let better = match best {
                None => true,
                Some((best_pos, best_symbol, _)) => {
                    pos < best_pos || (pos == best_pos && symbol.len() > best_symbol.len())
                }
            };
            if better {
                best = Some((pos, symbol, op));
            }
        }
    }
    let (pos, symbol, op) = best.ok_or_else(|| ConditionError::BadCondition {
        fragment: fragment.to_string(),
    })?;
    let column = fragment[..pos].trim();
    let value = fragment[pos + symbol.len()..].trim();
    if column.is_empty() || value.is_empty() {
        return Err(ConditionError::BadCondition {
            fragment: fragment.to_string(),
        });
    }
    Ok(Condition {
        column: column.to_string(),
        op,
        value: value.to_string(),
    })
}

/// Typed literal a condition compares against.
#[derive(Debug, Clone, PartialEq)]
enum TypedValue {
    Int(i64),
    Real(f64),
    Date(String),
    Text(String),
}

/// A condition bound to a table column with its literal already typed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCondition {
    column_index: usize,
    op: CompareOp,
    value: TypedValue,
}

/// Resolve a condition against a table: the column must exist and the value
/// must parse under the column's type. Integer columns accept real literals
/// and compare numerically.
pub fn bind(table: &Table, condition: &Condition) -> Result<BoundCondition, ConditionError> {
    let column_index =
        table
            .column_index(&condition.column)
            .ok_or_else(|| ConditionError::UnknownColumn {
                column: condition.column.clone(),
            })?;
    let expected = table.column_type(column_index);
    let mismatch = || ConditionError::TypeMismatch {
        column: condition.column.clone(),
        value: condition.value.clone(),
        expected,
    };
    let value = match expected {
        ColumnType::Integer => {
            if let Ok(v) = condition.value.parse::<i64>() {
                TypedValue::Int(v)
            } else if let Ok(v) = condition.value.parse::<f64>() {
                TypedValue::Real(v)
            } else {
                return Err(mismatch());
            }
        }
        ColumnType::Real => TypedValue::Real(condition.value.parse::<f64>().map_err(|_| mismatch())?),
        ColumnType::Date => TypedValue::Date(normalize_date(&condition.value).ok_or_else(mismatch)?),
        ColumnType::Text => TypedValue::Text(condition.value.clone()),
    };
    Ok(BoundCondition {
        column_index,
        op: condition.op,
        value,
    })
}

pub fn bind_all(table: &Table, conditions: &[Condition]) -> Result<Vec<BoundCondition>, ConditionError> {
    conditions.iter().map(|c| bind(table, c)).collect()
}

/// Does the row at `row_index` satisfy the condition? Null (empty) cells
/// satisfy nothing.
pub fn row_matches(table: &Table, row_index: usize, condition: &BoundCondition) -> bool {
    let cell = &table.rows()[row_index][condition.column_index];
    if cell.is_empty() {
        return false;
    }
    let ordering = match &condition.value {
        TypedValue::Int(v) => match cell.parse::<i64>() {
            Ok(cell_value) => cell_value.cmp(v),
            Err(_) => return false,
        },
        TypedValue::Real(v) => match cell.parse::<f64>() {
            Ok(cell_value) => match cell_value.partial_cmp(v) {
                Some(ordering) => ordering,
                None => return false,
            },
            Err(_) => return false,
        },
        TypedValue::Date(v) => cell.as_str().cmp(v.as_str()),
        TypedValue::Text(v) => cell.cmp(v),
    };
    condition.op.matches(ordering)
}

pub fn row_matches_all(table: &Table, row_index: usize, conditions: &[BoundCondition]) -> bool {
    conditions.iter().all(|c| row_matches(table, row_index, c))
}
