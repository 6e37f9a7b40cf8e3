//! Recursive-descent parser and executor for the SQL subset:
//!
//! ```text
//! SELECT <col, ... | COUNT(*) | AVG(c) | SUM(c) | MIN(c) | MAX(c)>
//! FROM <table> [WHERE cond AND cond ...] [LIMIT n]
//! ```
//!
//! Conditions reuse the filter-condition operator set; string literals are
//! single-quoted with `''` as the escape. Queries run against registered
//! tables, independent of any session-loaded table.

use super::calc::format_number;
use super::conditions::{bind_all, row_matches_all, CompareOp, Condition, ConditionError};
use crate::datastore::{ColumnType, DataStores, Table};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SqlError {
    #[error("SqlParseError: at offset {offset}: {detail}")]
    Parse { offset: usize, detail: String },
    #[error("UnknownTable: {table}")]
    UnknownTable { table: String },
    #[error("UnknownColumn: {column}")]
    UnknownColumn { column: String },
    #[error("TypeMismatch: value {value:?} does not fit column {column}")]
    TypeMismatch { column: String, value: String },
    #[error("TypeMismatch: {func} requires a numeric column, {column} is {actual}")]
    NonNumericAggregate {
        func: &'static str,
        column: String,
        actual: ColumnType,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Avg,
    Sum,
    Min,
    Max,
}

impl AggFunc {
    fn name(&self) -> &'static str {
        match self {
            AggFunc::Avg => "AVG",
            AggFunc::Sum => "SUM",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Columns(Vec<String>),
    CountStar,
    Aggregate(AggFunc, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Select {
    pub projection: Projection,
    pub table: String,
    pub conditions: Vec<Condition>,
    pub limit: Option<usize>,
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(String),
    Str(String),
    Comma,
    LParen,
    RParen,
    Star,
    Op(CompareOp),
}

fn lex(query: &str) -> Result<Vec<(usize, Token)>, SqlError> {
    let chars: Vec<(usize, char)> = query.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (offset, ch) = chars[i];
        match ch {
            c if c.is_whitespace() => i += 1,
            ',' => {
                tokens.push((offset, Token::Comma));
                i += 1;
            }
            '(' => {
                tokens.push((offset, Token::LParen));
                i += 1;
            }
            ')' => {
                tokens.push((offset, Token::RParen));
                i += 1;
            }
            '*' => {
                tokens.push((offset, Token::Star));
                i += 1;
            }
            '=' => {
                tokens.push((offset, Token::Op(CompareOp::Eq)));
                i += 1;
            }
            '!' => {
                if chars.get(i + 1).map(|(_, c)| *c) == Some('=') {
                    tokens.push((offset, Token::Op(CompareOp::Ne)));
                    i += 2;
                } else {
                    return Err(SqlError::Parse {
                        offset,
                        detail: "expected != after !".into(),
                    });
                }
            }
            '<' => {
                if chars.get(i + 1).map(|(_, c)| *c) == Some('=') {
                    tokens.push((offset, Token::Op(CompareOp::Le)));
                    i += 2;
                } else if chars.get(i + 1).map(|(_, c)| *c) == Some('>') {
                    tokens.push((offset, Token::Op(CompareOp::Ne)));
                    i += 2;
                } else {
                    tokens.push((offset, Token::Op(CompareOp::Lt)));
                    i += 1;
                }
            }
            '>' => {
                if chars.get(i + 1).map(|(_, c)| *c) == Some('=') {
                    tokens.push((offset, Token::Op(CompareOp::Ge)));
                    i += 2;
                } else {
                    tokens.push((offset, Token::Op(CompareOp::Gt)));
                    i += 1;
                }
            }
            '\'' => {
                let mut value = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        Some((_, '\'')) => {
                            if chars.get(j + 1).map(|(_, c)| *c) == Some('\'') {
                                value.push('\'');
                                j += 2;
                            } else {
                                j += 1;
                                break;
                            }
                        }
                        Some((_, c)) => {
                            value.push(*c);
                            j += 1;
                        }
                        None => {
                            return Err(SqlError::Parse {
                                offset,
                                detail: "unterminated string literal".into(),
                            })
                        }
                    }
                }
                tokens.push((offset, Token::Str(value)));
                i = j;
            }
            c if c.is_ascii_digit()
                || (c == '-' && chars.get(i + 1).map(|(_, c)| c.is_ascii_digit()) == Some(true)) =>
            {
                let start = i;
                i += 1; // sign or first digit
                let mut seen_dot = false;
                while i < chars.len() {
                    let c = chars[i].1;
                    if c.is_ascii_digit() {
                        i += 1;
                    } else if c == '.' && !seen_dot {
                        seen_dot = true;
                        i += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[start..i].iter().map(|(_, c)| c).collect();
                tokens.push((offset, Token::Number(text)));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() {
                    let c = chars[i].1;
                    if c.is_alphanumeric() || c == '_' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let text: String = chars[start..i].iter().map(|(_, c)| c).collect();
                tokens.push((offset, Token::Ident(text)));
            }
            other => {
                return Err(SqlError::Parse {
                    offset,
                    detail: format!("unexpected character {other:?}"),
                })
            }
        }
    }
    Ok(tokens)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn error(&self, detail: impl Into<String>) -> SqlError {
        SqlError::Parse {
            offset: self.offset(),
            detail: detail.into(),
        }
    }

    fn expect_keyword(&mut self, word: &str) -> Result<(), SqlError> {
        match self.peek() {
            Some(Token::Ident(ident)) if ident.eq_ignore_ascii_case(word) => {
                self.advance();
                Ok(())
            }
            _ => Err(self.error(format!("expected {word}"))),
        }
    }

    fn keyword_is(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Token::Ident(ident)) if ident.eq_ignore_ascii_case(word))
    }

    fn ident(&mut self, what: &str) -> Result<String, SqlError> {
        match self.peek() {
            Some(Token::Ident(ident)) => {
                let ident = ident.clone();
                self.advance();
                Ok(ident)
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn projection(&mut self) -> Result<Projection, SqlError> {
        if self.keyword_is("COUNT") {
            self.advance();
            self.expect_token(&Token::LParen, "(")?;
            self.expect_token(&Token::Star, "*")?;
            self.expect_token(&Token::RParen, ")")?;
            return Ok(Projection::CountStar);
        }
        for (word, func) in [
            ("AVG", AggFunc::Avg),
            ("SUM", AggFunc::Sum),
            ("MIN", AggFunc::Min),
            ("MAX", AggFunc::Max),
        ] {
            if self.keyword_is(word) && self.tokens.get(self.pos + 1).map(|(_, t)| t) == Some(&Token::LParen)
            {
                self.advance();
                self.advance();
                let column = self.ident("column name")?;
                self.expect_token(&Token::RParen, ")")?;
                return Ok(Projection::Aggregate(func, column));
            }
        }
        let mut columns = vec![self.ident("column name")?];
        while self.peek() == Some(&Token::Comma) {
            self.advance();
            columns.push(self.ident("column name")?);
        }
        Ok(Projection::Columns(columns))
    }

    fn expect_token(&mut self, token: &Token, shown: &str) -> Result<(), SqlError> {
        if self.peek() == Some(token) {
            self.advance();
            Ok(())
        } else {
            Err(self.error(format!("expected {shown}")))
        }
    }

    fn condition(&mut self) -> Result<Condition, SqlError> {
        let column = self.ident("column name")?;
        let op = match self.advance() {
            Some(Token::Op(op)) => op,
            _ => {
                self.pos -= 1;
                return Err(self.error("expected comparison operator"));
            }
        };
        let value = match self.advance() {
            Some(Token::Number(text)) => text,
            Some(Token::Str(text)) => text,
            _ => {
                self.pos -= 1;
                return Err(self.error("expected a number or quoted string"));
            }
        };
        Ok(Condition { column, op, value })
    }
}

/// Parse one SELECT statement.
pub fn parse_select(query: &str) -> Result<Select, SqlError> {
    let tokens = lex(query)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: query.len(),
    };
    parser.expect_keyword("SELECT")?;
    let projection = parser.projection()?;
    parser.expect_keyword("FROM")?;
    let table = parser.ident("table name")?;
    let mut conditions = Vec::new();
    if parser.keyword_is("WHERE") {
        parser.advance();
        conditions.push(parser.condition()?);
        while parser.keyword_is("AND") {
            parser.advance();
            conditions.push(parser.condition()?);
        }
    }
    let mut limit = None;
    if parser.keyword_is("LIMIT") {
        parser.advance();
        let offset = parser.offset();
        match parser.advance() {
            Some(Token::Number(text)) => {
                limit = Some(text.parse::<usize>().map_err(|_| SqlError::Parse {
                    offset,
                    detail: format!("bad LIMIT value {text:?}"),
                })?);
            }
            _ => {
                return Err(SqlError::Parse {
                    offset,
                    detail: "expected a row count after LIMIT".into(),
                })
            }
        }
    }
    if parser.pos != parser.tokens.len() {
        return Err(parser.error("trailing input after statement"));
    }
    Ok(Select {
        projection,
        table,
        conditions,
        limit,
    })
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Row display cap for projection results.
const MAX_RENDERED_ROWS: usize = 30;

fn condition_error(err: ConditionError) -> SqlError {
    match err {
        ConditionError::UnknownColumn { column } => SqlError::UnknownColumn { column },
        ConditionError::TypeMismatch { column, value, .. } => {
            SqlError::TypeMismatch { column, value }
        }
        ConditionError::BadCondition { fragment } => SqlError::Parse {
            offset: 0,
            detail: format!("bad condition {fragment:?}"),
        },
    }
}

/// Execute against the registered tables and render the result.
pub fn execute(stores: &DataStores, query: &str) -> Result<String, SqlError> {
    let select = parse_select(query)?;
    let table = stores
        .table(&select.table)
        .ok_or_else(|| SqlError::UnknownTable {
            table: select.table.clone(),
        })?;
    let bound = bind_all(table, &select.conditions).map_err(condition_error)?;
    let matching: Vec<usize> = (0..table.row_count())
        .filter(|&r| row_matches_all(table, r, &bound))
        .collect();
    match &select.projection {
        Projection::CountStar => Ok(format!("{}", matching.len())),
        Projection::Aggregate(func, column) => aggregate(table, &matching, *func, column),
        Projection::Columns(columns) => {
            let indices: Vec<usize> = columns
                .iter()
                .map(|c| {
                    table.column_index(c).ok_or_else(|| SqlError::UnknownColumn {
                        column: c.clone(),
                    })
                })
                .collect::<Result<_, _>>()?;
            let limited: Vec<usize> = match select.limit {
                Some(limit) => matching.iter().copied().take(limit).collect(),
                None => matching,
            };
            let mut lines = vec![columns.join(", ")];
            for &row in limited.iter().take(MAX_RENDERED_ROWS) {
                let cells: Vec<&str> = indices
                    .iter()
                    .map(|&i| table.rows()[row][i].as_str())
                    .collect();
                lines.push(cells.join(", "));
            }
            if limited.len() > MAX_RENDERED_ROWS {
                lines.push(format!("… ({} rows total)", limited.len()));
            }
            if limited.is_empty() {
                lines.push("(no rows)".to_string());
            }
            Ok(lines.join("\n"))
        }
    }
}

fn aggregate(
    table: &Table,
    rows: &[usize],
    func: AggFunc,
    column: &str,
) -> Result<String, SqlError> {
    let index = table
        .column_index(column)
        .ok_or_else(|| SqlError::UnknownColumn {
            column: column.to_string(),
        })?;
    let column_type = table.column_type(index);
    let non_null = || {
        rows.iter()
            .map(|&r| table.rows()[r][index].as_str())
            .filter(|c| !c.is_empty())
    };
    match func {
        AggFunc::Avg | AggFunc::Sum => {
            if !matches!(column_type, ColumnType::Integer | ColumnType::Real) {
                return Err(SqlError::NonNumericAggregate {
                    func: func.name(),
                    column: column.to_string(),
                    actual: column_type,
                });
            }
            let values: Vec<f64> = non_null().filter_map(|c| c.parse::<f64>().ok()).collect();
            if values.is_empty() {
                return Ok("null".to_string());
            }
            let sum: f64 = values.iter().sum();
            let value = match func {
                AggFunc::Avg => sum / values.len() as f64,
                _ => sum,
            };
            Ok(format_number(value))
        }
        AggFunc::Min | AggFunc::Max => {
            if matches!(column_type, ColumnType::Integer | ColumnType::Real) {
                let values: Vec<f64> = non_null().filter_map(|c| c.parse::<f64>().ok()).collect();
                if values.is_empty() {
                    return Ok("null".to_string());
                }
                let value = values
                    .into_iter()
                    .reduce(|a, b| match func {
                        AggFunc::Min => a.min(b),
                        _ => a.max(b),
                    })
                    .unwrap();
                Ok(format_number(value))
            } else {
                let value = match func {
                    AggFunc::Min => non_null().min(),
                    _ => non_null().max(),
                };
                Ok(value.map(String::from).unwrap_or_else(|| "null".to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::parse_table;

    fn stores() -> DataStores {
        let mut stores = DataStores::new();
        stores.insert_table(
            parse_table(
                "flights",
                "FlightDate,Origin,Dest,FlightNumber,Price\n\
                 2022-01-01,BOS,ATL,101,211.50\n\
                 2022-01-01,BOS,ATL,205,101.25\n\
                 2022-01-01,BOS,LAX,309,404.00\n\
                 2022-01-02,BOS,ATL,101,218.00\n\
                 2022-01-02,JFK,ATL,77,98.75\n\
                 2022-01-03,SEA,BOS,12,330.10\n",
                "flights.csv",
            )
            .unwrap(),
        );
        stores.insert_table(
            parse_table("coffee", "Date,Price\n2022-01-01,4\n2022-01-02,6\n", "coffee.csv")
                .unwrap(),
        );
        stores
    }

    #[test]
    fn count_star_matches_filter_semantics() {
        let stores = stores();
        let result = execute(
            &stores,
            "SELECT COUNT(*) FROM flights WHERE Origin='BOS' AND Dest='ATL'",
        )
        .unwrap();
        assert_eq!(result, "3");
    }

    #[test]
    fn avg_formats_like_the_calculator() {
        let stores = stores();
        assert_eq!(execute(&stores, "SELECT AVG(Price) FROM coffee").unwrap(), "5");
        assert_eq!(
            execute(&stores, "SELECT SUM(Price) FROM coffee").unwrap(),
            "10"
        );
        assert_eq!(
            execute(&stores, "SELECT MIN(Price) FROM flights").unwrap(),
            "98.75"
        );
    }

    #[test]
    fn projection_renders_header_and_rows() {
        let stores = stores();
        let result = execute(
            &stores,
            "SELECT Origin, Dest FROM flights WHERE FlightDate='2022-01-02' LIMIT 1",
        )
        .unwrap();
        assert_eq!(result, "Origin, Dest\nBOS, ATL");
        let empty = execute(&stores, "SELECT Origin FROM flights WHERE Price>10000").unwrap();
        assert_eq!(empty, "Origin\n(no rows)");
    }

    #[test]
    fn parse_error_offset_zero_for_bad_verb() {
        match execute(&stores(), "SELEKT x").unwrap_err() {
            SqlError::Parse { offset, .. } => assert_eq!(offset, 0),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn unknown_table_and_column() {
        let stores = stores();
        assert!(matches!(
            execute(&stores, "SELECT a FROM nema").unwrap_err(),
            SqlError::UnknownTable { .. }
        ));
        assert!(matches!(
            execute(&stores, "SELECT Nope FROM coffee").unwrap_err(),
            SqlError::UnknownColumn { .. }
        ));
        assert!(matches!(
            execute(&stores, "SELECT AVG(Origin) FROM flights").unwrap_err(),
            SqlError::NonNumericAggregate { .. }
        ));
    }

    #[test]
    fn string_escapes_and_date_comparison() {
        let mut stores = DataStores::new();
        stores.insert_table(
            parse_table("names", "Name,Day\nO'Brien,2022-01-05\nSmith,2022-02-01\n", "n.csv")
                .unwrap(),
        );
        assert_eq!(
            execute(&stores, "SELECT COUNT(*) FROM names WHERE Name='O''Brien'").unwrap(),
            "1"
        );
        assert_eq!(
            execute(
                &stores,
                "SELECT COUNT(*) FROM names WHERE Day >= '2022-01-10'"
            )
            .unwrap(),
            "1"
        );
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let stores = stores();
        assert_eq!(
            execute(&stores, "select count(*) from coffee where Price > 5").unwrap(),
            "1"
        );
    }

    #[test]
    fn alternative_not_equal_spelling() {
        let stores = stores();
        assert_eq!(
            execute(&stores, "SELECT COUNT(*) FROM coffee WHERE Price <> 4").unwrap(),
            "1"
        );
    }
}
