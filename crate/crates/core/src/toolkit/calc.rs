//! Arithmetic expression evaluator: decimals, `+ - * /`, parentheses, and
//! unary minus, with standard precedence.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CalcError {
    #[error("ParseError: at offset {offset}: {detail}")]
    Parse { offset: usize, detail: String },
    #[error("DivisionByZero: division by zero")]
    DivisionByZero,
    #[error("Overflow: result is not a finite number")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

fn lex(expr: &str) -> Result<Vec<(usize, Token)>, CalcError> {
    let mut tokens = Vec::new();
    let chars: Vec<(usize, char)> = expr.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (offset, ch) = chars[i];
        match ch {
            c if c.is_whitespace() => i += 1,
            '+' => {
                tokens.push((offset, Token::Plus));
                i += 1;
            }
            '-' | '−' => {
                tokens.push((offset, Token::Minus));
                i += 1;
            }
            '*' | '×' => {
                tokens.push((offset, Token::Star));
                i += 1;
            }
            '/' | '÷' => {
                tokens.push((offset, Token::Slash));
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
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
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
                let value = text.parse::<f64>().map_err(|_| CalcError::Parse {
                    offset,
                    detail: format!("bad number {text:?}"),
                })?;
                tokens.push((offset, Token::Number(value)));
            }
            other => {
                return Err(CalcError::Parse {
                    offset,
                    detail: format!("unexpected character {other:?}"),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

const MAX_DEPTH: usize = 200;

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or(self.end)
    }

    fn advance(&mut self) -> Option<Token> {
        let token = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        token
    }

    fn expr(&mut self, depth: usize) -> Result<f64, CalcError> {
        let mut value = self.term(depth)?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.advance();
                    value += self.term(depth)?;
                }
                Some(Token::Minus) => {
                    self.advance();
                    value -= self.term(depth)?;
                }
                _ => return Ok(value),
            }
        }
    }

    fn term(&mut self, depth: usize) -> Result<f64, CalcError> {
        let mut value = self.factor(depth)?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.advance();
                    value *= self.factor(depth)?;
                }
                Some(Token::Slash) => {
                    self.advance();
                    let divisor = self.factor(depth)?;
                    if divisor == 0.0 {
                        return Err(CalcError::DivisionByZero);
                    }
                    value /= divisor;
                }
                _ => return Ok(value),
            }
        }
    }

    fn factor(&mut self, depth: usize) -> Result<f64, CalcError> {
        if depth > MAX_DEPTH {
            return Err(CalcError::Parse {
                offset: self.offset(),
                detail: "expression is nested too deeply".into(),
            });
        }
        let offset = self.offset();
        match self.advance() {
            Some(Token::Minus) => Ok(-self.factor(depth + 1)?),
            Some(Token::Number(v)) => Ok(v),
            Some(Token::LParen) => {
                let value = self.expr(depth + 1)?;
                match self.advance() {
                    Some(Token::RParen) => Ok(value),
                    _ => Err(CalcError::Parse {
                        offset: self.offset(),
                        detail: "expected closing parenthesis".into(),
                    }),
                }
            }
            Some(other) => Err(CalcError::Parse {
                offset,
                detail: format!("unexpected token {other:?}"),
            }),
            None => Err(CalcError::Parse {
                offset,
                detail: "unexpected end of expression".into(),
            }),
        }
    }
}

/// Evaluate to a raw number.
pub fn evaluate(expr: &str) -> Result<f64, CalcError> {
    let tokens = lex(expr)?;
    if tokens.is_empty() {
        return Err(CalcError::Parse {
            offset: 0,
            detail: "empty expression".into(),
        });
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: expr.len(),
    };
    let value = parser.expr(0)?;
    if parser.pos != parser.tokens.len() {
        return Err(CalcError::Parse {
            offset: parser.offset(),
            detail: "trailing input after expression".into(),
        });
    }
    if !value.is_finite() {
        return Err(CalcError::Overflow);
    }
    Ok(value)
}

/// Grammar check without evaluation; division by zero passes here.
pub fn check_syntax(expr: &str) -> Result<(), CalcError> {
    match evaluate(expr) {
        Ok(_) | Err(CalcError::DivisionByZero) | Err(CalcError::Overflow) => Ok(()),
        Err(parse) => Err(parse),
    }
}

/// Evaluate and format: integers print without a decimal point, reals with
/// up to six fractional digits and trailing zeros trimmed.
pub fn calculate(expr: &str) -> Result<String, CalcError> {
    Ok(format_number(evaluate(expr)?))
}

pub fn format_number(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if value.fract() == 0.0 && value.abs() < 1e15 {
        return format!("{}", value as i64);
    }
    let mut text = format!("{value:.6}");
    while text.ends_with('0') {
        text.pop();
    }
    if text.ends_with('.') {
        text.pop();
    }
    if text == "-0" {
        return "0".to_string();
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_of_eight() {
        assert_eq!(calculate("(58+88+76+83+28+3+60+50)/8").unwrap(), "55.75");
    }

    #[test]
    fn precedence() {
        assert_eq!(calculate("2+3*4").unwrap(), "14");
        assert_eq!(calculate("(2+3)*4").unwrap(), "20");
        assert_eq!(calculate("2-3-4").unwrap(), "-5");
        assert_eq!(calculate("24/4/2").unwrap(), "3");
    }

    #[test]
    fn division_by_zero() {
        assert_eq!(calculate("1/0").unwrap_err(), CalcError::DivisionByZero);
        assert_eq!(calculate("1/(2-2)").unwrap_err(), CalcError::DivisionByZero);
    }

    #[test]
    fn unary_minus() {
        assert_eq!(calculate("-3").unwrap(), "-3");
        assert_eq!(calculate("--3").unwrap(), "3");
        assert_eq!(calculate("2*-3").unwrap(), "-6");
    }

    #[test]
    fn real_formatting() {
        assert_eq!(calculate("1/3").unwrap(), "0.333333");
        assert_eq!(calculate("1/2").unwrap(), "0.5");
        assert_eq!(calculate("5.0").unwrap(), "5");
        assert_eq!(calculate("0.0-0.0").unwrap(), "0");
    }

    #[test]
    fn unicode_operators() {
        assert_eq!(calculate("6×7").unwrap(), "42");
        assert_eq!(calculate("6÷2").unwrap(), "3");
        assert_eq!(calculate("7−5").unwrap(), "2");
    }

    #[test]
    fn parse_errors_carry_offsets() {
        match calculate("1+x").unwrap_err() {
            CalcError::Parse { offset, .. } => assert_eq!(offset, 2),
            other => panic!("unexpected: {other:?}"),
        }
        assert!(calculate("").is_err());
        assert!(calculate("(1").is_err());
        assert!(calculate("1 2").is_err());
    }

    #[test]
    fn syntax_check_tolerates_runtime_failures() {
        assert!(check_syntax("1/0").is_ok());
        assert!(check_syntax("1+").is_err());
    }
}
