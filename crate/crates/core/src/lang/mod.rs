//! The SLASH program dialect: lexer, parser, AST, canonical printer and
//! validation.
//!
//! ```text
//! img(i1). img(i2).
//! npp(digit(X),[0..9]) :- img(X).
//! sum2(A,B,S) :- digit(+A,-N1), digit(+B,-N2), A < B, S = N1 + N2.
//! ```

mod ast;
mod lexer;
mod parser;
mod print;
mod validate;

pub use ast::*;
pub use validate::{validate, validate_query, NppSignature, NppSignatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lexical,
    Syntax,
    ArityClash,
    IllegalAnnotation,
    InconsistentAnnotation,
    DuplicateOutcome,
    NppInHead,
    NotAConstraint,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    pub span: Span,
    pub expected: Vec<String>,
    pub message: String,
}

impl ParseError {
    pub(crate) fn at(src: &str, span: Span, message: String) -> Self {
        let start = span.start.min(src.len());
        let before = &src[..start];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        let column = src[line_start..start].chars().count() + 1;
        ParseError {
            kind: ParseErrorKind::Lexical,
            line,
            column,
            span,
            expected: Vec::new(),
            message,
        }
    }

    pub(crate) fn without_source(span: Span, message: String) -> Self {
        ParseError {
            kind: ParseErrorKind::Syntax,
            line: 0,
            column: 0,
            span,
            expected: Vec::new(),
            message,
        }
    }
}

/// Parses and validates a program.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let program = parser::parse_syntax(text)?;
    validate(&program, Some(text))?;
    Ok(program)
}

/// Parses a query, which must be a single constraint `:- body.`
pub fn parse_query(text: &str) -> Result<Constraint, ParseError> {
    parser::parse_constraint(text)
}

pub fn print_program(program: &Program) -> String {
    program.to_string()
}
