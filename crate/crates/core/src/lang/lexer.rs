use super::ast::Span;
use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    /// Lowercase-initial identifier.
    Ident(String),
    /// Uppercase- or underscore-initial identifier.
    Var(String),
    Int(i64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    DotDot,
    If,
    Plus,
    Minus,
    Star,
    Slash,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Var(s) => format!("variable `{s}`"),
            Tok::Int(i) => format!("integer `{i}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    pub fn text(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::DotDot => "..",
            Tok::If => ":-",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::Ident(_) => "identifier",
            Tok::Var(_) => "variable",
            Tok::Int(_) => "integer",
            Tok::Eof => "end of input",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'%' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let single = |tok: Tok, len: usize| (tok, len);
        let (tok, len) = match c {
            b'(' => single(Tok::LParen, 1),
            b')' => single(Tok::RParen, 1),
            b'[' => single(Tok::LBracket, 1),
            b']' => single(Tok::RBracket, 1),
            b',' => single(Tok::Comma, 1),
            b'+' => single(Tok::Plus, 1),
            b'-' => single(Tok::Minus, 1),
            b'*' => single(Tok::Star, 1),
            b'/' => single(Tok::Slash, 1),
            b'=' => single(Tok::Eq, 1),
            b'.' if bytes.get(i + 1) == Some(&b'.') => single(Tok::DotDot, 2),
            b'.' => single(Tok::Dot, 1),
            b':' if bytes.get(i + 1) == Some(&b'-') => single(Tok::If, 2),
            b'!' if bytes.get(i + 1) == Some(&b'=') => single(Tok::Ne, 2),
            b'<' if bytes.get(i + 1) == Some(&b'=') => single(Tok::Le, 2),
            b'<' => single(Tok::Lt, 1),
            b'>' if bytes.get(i + 1) == Some(&b'=') => single(Tok::Ge, 2),
            b'>' => single(Tok::Gt, 1),
            b'0'..=b'9' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let text = &src[i..j];
                let value = text.parse::<i64>().map_err(|_| {
                    ParseError::at(src, Span::new(i, j), format!("integer literal `{text}` out of range"))
                })?;
                (Tok::Int(value), j - i)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let text = src[i..j].to_string();
                let tok = if c.is_ascii_lowercase() {
                    Tok::Ident(text)
                } else {
                    Tok::Var(text)
                };
                (tok, j - i)
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ParseError::at(
                    src,
                    Span::new(i, i + ch.len_utf8()),
                    format!("unexpected character `{ch}`"),
                ));
            }
        };
        i += len;
        out.push(Token {
            tok,
            span: Span::new(start, i),
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(src.len(), src.len()),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        tokenize(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn range_and_dot() {
        assert_eq!(
            kinds("[0..9]."),
            vec![
                Tok::LBracket,
                Tok::Int(0),
                Tok::DotDot,
                Tok::Int(9),
                Tok::RBracket,
                Tok::Dot,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(
            kinds("a. % trailing\n% whole line\nb."),
            vec![
                Tok::Ident("a".into()),
                Tok::Dot,
                Tok::Ident("b".into()),
                Tok::Dot,
                Tok::Eof
            ]
        );
    }

    #[test]
    fn bad_character_reports_position() {
        let err = tokenize("a.\n  b & c.").unwrap_err();
        assert_eq!((err.line, err.column), (2, 5));
    }
}
