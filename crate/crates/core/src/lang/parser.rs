//! Recursive-descent parser over the token stream produced by [`super::lexer`].

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{ParseError, ParseErrorKind};

struct Parser<'s> {
    src: &'s str,
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl<'s> Parser<'s> {
    fn new(src: &'s str) -> PResult<Self> {
        Ok(Parser {
            src,
            toks: tokenize(src)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.toks.len() - 1);
        &self.toks[idx].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let found = self.peek().describe();
        let expected: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
        let message = format!("expected {}, found {}", expected.join(" or "), found);
        let mut err = ParseError::at(self.src, self.span(), message);
        err.kind = ParseErrorKind::Syntax;
        err.expected = expected;
        err
    }

    fn expect(&mut self, tok: Tok) -> PResult<Token> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            Err(self.unexpected(&[&format!("`{}`", tok.text())]))
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut program = Program::default();
        while *self.peek() != Tok::Eof {
            let start = self.span().start;
            let rule = self.statement()?;
            let end = self.toks[self.pos.saturating_sub(1)].span.end;
            program.rules.push(rule);
            program.spans.push(Span::new(start, end));
        }
        Ok(program)
    }

    fn statement(&mut self) -> PResult<Rule> {
        match self.peek().clone() {
            Tok::If => {
                self.bump();
                let body = self.body()?;
                self.expect(Tok::Dot)?;
                Ok(Rule::Constraint(Constraint { body }))
            }
            Tok::Ident(name) if name == "npp" && *self.peek_at(1) == Tok::LParen => {
                self.npp_decl().map(Rule::Npp)
            }
            Tok::Ident(_) => {
                let head = self.atom()?;
                match self.peek() {
                    Tok::Dot => {
                        self.bump();
                        Ok(Rule::Fact(head))
                    }
                    Tok::If => {
                        self.bump();
                        let body = self.body()?;
                        self.expect(Tok::Dot)?;
                        Ok(Rule::Normal { head, body })
                    }
                    _ => Err(self.unexpected(&["`.`", "`:-`"])),
                }
            }
            _ => Err(self.unexpected(&["identifier", "`:-`"])),
        }
    }

    fn npp_decl(&mut self) -> PResult<NppDecl> {
        self.bump(); // npp
        self.expect(Tok::LParen)?;
        let name = match self.peek().clone() {
            Tok::Ident(n) => {
                self.bump();
                n
            }
            _ => return Err(self.unexpected(&["NPP name"])),
        };
        self.expect(Tok::LParen)?;
        let mut terms = vec![self.term()?];
        while self.eat(&Tok::Comma) {
            terms.push(self.term()?);
        }
        self.expect(Tok::RParen)?;
        self.expect(Tok::Comma)?;
        self.expect(Tok::LBracket)?;
        let outcomes = self.outcomes()?;
        self.expect(Tok::RBracket)?;
        self.expect(Tok::RParen)?;
        let body = if self.eat(&Tok::If) {
            self.body()?
        } else {
            Vec::new()
        };
        self.expect(Tok::Dot)?;
        Ok(NppDecl {
            name,
            terms,
            outcomes,
            body,
        })
    }

    fn outcomes(&mut self) -> PResult<Vec<Term>> {
        let mut out = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::Ident(c) => {
                    self.bump();
                    out.push(Term::Const(c));
                }
                Tok::Int(_) | Tok::Minus => {
                    let lo_span = self.span();
                    let lo = self.signed_int()?;
                    if self.eat(&Tok::DotDot) {
                        let hi = self.signed_int()?;
                        if hi < lo {
                            let mut err = ParseError::at(
                                self.src,
                                Span::new(lo_span.start, self.toks[self.pos - 1].span.end),
                                format!("empty outcome range {lo}..{hi}"),
                            );
                            err.kind = ParseErrorKind::Syntax;
                            return Err(err);
                        }
                        out.extend((lo..=hi).map(Term::Int));
                    } else {
                        out.push(Term::Int(lo));
                    }
                }
                _ => return Err(self.unexpected(&["outcome constant", "integer"])),
            }
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        Ok(out)
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let neg = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.unexpected(&["integer"])),
        }
    }

    fn body(&mut self) -> PResult<Vec<Literal>> {
        let mut body = vec![self.literal()?];
        while self.eat(&Tok::Comma) {
            body.push(self.literal()?);
        }
        Ok(body)
    }

    fn literal(&mut self) -> PResult<Literal> {
        match self.peek().clone() {
            Tok::Ident(name) if name == "not" && matches!(self.peek_at(1), Tok::Ident(_)) => {
                self.bump();
                Ok(Literal::Neg(self.atom()?))
            }
            Tok::Ident(_) => {
                let is_cmp = matches!(
                    self.peek_at(1),
                    Tok::Eq
                        | Tok::Ne
                        | Tok::Lt
                        | Tok::Le
                        | Tok::Gt
                        | Tok::Ge
                        | Tok::Plus
                        | Tok::Minus
                        | Tok::Star
                        | Tok::Slash
                );
                if is_cmp {
                    self.comparison()
                } else {
                    Ok(Literal::Pos(self.atom()?))
                }
            }
            Tok::Var(_) | Tok::Int(_) | Tok::LParen | Tok::Minus => self.comparison(),
            _ => Err(self.unexpected(&["literal"])),
        }
    }

    fn comparison(&mut self) -> PResult<Literal> {
        let lhs = self.term()?;
        let op = match self.peek() {
            Tok::Eq => RelOp::Eq,
            Tok::Ne => RelOp::Ne,
            Tok::Lt => RelOp::Lt,
            Tok::Le => RelOp::Le,
            Tok::Gt => RelOp::Gt,
            Tok::Ge => RelOp::Ge,
            _ => return Err(self.unexpected(&["comparison operator"])),
        };
        self.bump();
        let rhs = self.term()?;
        Ok(Literal::Cmp(lhs, op, rhs))
    }

    fn atom(&mut self) -> PResult<Atom> {
        let predicate = match self.peek().clone() {
            Tok::Ident(n) => {
                self.bump();
                n
            }
            _ => return Err(self.unexpected(&["predicate name"])),
        };
        let mut args = Vec::new();
        if self.eat(&Tok::LParen) {
            loop {
                let mark = match self.peek() {
                    Tok::Plus => {
                        self.bump();
                        Some(Mark::Plus)
                    }
                    Tok::Minus => {
                        self.bump();
                        Some(Mark::Minus)
                    }
                    _ => None,
                };
                args.push(Arg {
                    mark,
                    term: self.term()?,
                });
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(Tok::RParen)?;
        }
        Ok(Atom { predicate, args })
    }

    fn term(&mut self) -> PResult<Term> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Term::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> PResult<Term> {
        let mut lhs = self.primary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.primary()?;
            lhs = Term::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn primary(&mut self) -> PResult<Term> {
        match self.peek().clone() {
            Tok::Ident(c) => {
                self.bump();
                Ok(Term::Const(c))
            }
            Tok::Var(v) => {
                self.bump();
                Ok(Term::Var(v))
            }
            Tok::Int(i) => {
                self.bump();
                Ok(Term::Int(i))
            }
            Tok::Minus if matches!(self.peek_at(1), Tok::Int(_)) => {
                Ok(Term::Int(self.signed_int()?))
            }
            Tok::LParen => {
                self.bump();
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            _ => Err(self.unexpected(&["term"])),
        }
    }
}

/// Syntax-only parse; no validation.
pub(crate) fn parse_syntax(src: &str) -> PResult<Program> {
    Parser::new(src)?.program()
}

pub(crate) fn parse_constraint(src: &str) -> PResult<Constraint> {
    let mut p = Parser::new(src)?;
    if *p.peek() != Tok::If {
        let mut err = p.unexpected(&["`:-`"]);
        err.kind = ParseErrorKind::NotAConstraint;
        err.message = format!("a query must be a constraint `:- body.`; {}", err.message);
        return Err(err);
    }
    p.bump();
    let body = p.body()?;
    p.expect(Tok::Dot)?;
    if *p.peek() != Tok::Eof {
        return Err(p.unexpected(&["end of input"]));
    }
    Ok(Constraint { body })
}
